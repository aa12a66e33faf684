// Copyright 2026 The gridcast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// gridcast command line: generate | train | eval | ablate | warp | report.
//
// Every command prints one JSON line on stdout: a result record on success,
// {"error": {"type", "message", "command"}} on failure. Progress goes to
// stderr. Exit codes: 0 ok, 1 internal, 2 usage/config, 3 I/O, 4 training.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "gridcast/nn/harness.hpp"

namespace nn = gridcast::nn;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (defaults to the desk preset)");
  cmd->add_option("--seed", c.seed, "Override the config seed");
}

nn::RunConfig resolve(const Common& c) {
  nn::RunConfig r = c.config.empty() ? nn::RunConfig::desk() : nn::load_config(c.config);
  if (c.seed) r.seed = *c.seed;
  return r;
}

std::pair<std::uint64_t, std::uint64_t> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  if (dots == std::string::npos) throw nn::ConfigError("--seeds expects a..b, got " + s);
  try {
    std::size_t used = 0;
    const std::string a = s.substr(0, dots), b = s.substr(dots + 2);
    const auto lo = std::stoull(a, &used);
    if (used != a.size()) throw std::invalid_argument(a);
    const auto hi = std::stoull(b, &used);
    if (used != b.size()) throw std::invalid_argument(b);
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw nn::ConfigError("--seeds expects a..b with non-negative integers, got " + s);
  }
}

std::vector<int> parse_rows(const std::string& s) {
  std::vector<int> rows;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      rows.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw nn::ConfigError("--rows expects a comma separated list of row numbers, got " + s);
    }
  }
  return rows;
}

int emit_error(const std::string& type, const std::string& message, const std::string& command, int code) {
  const nlohmann::json j = {{"error", {{"type", type}, {"message", message}, {"command", command}}}};
  std::cout << j.dump() << std::endl;
  return code;
}

nlohmann::json summary(const gridcast::MetricReport& r) {
  nlohmann::json j = {{"samples", r.samples}, {"horizon", r.horizon}};
  for (const auto& col : nn::ablation_columns()) j["metrics"][col.metric] = gridcast::optional_json(r.average(col.metric));
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridcast: multi-head occupancy, flow and vehicle grid forecasting"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, abl_c, warp_c, rep_c;
  std::string gen_seeds, gen_out;
  auto* gen = app.add_subcommand("generate", "Generate the synthetic dataset");
  add_common(gen, gen_c);
  gen->add_option("--seeds", gen_seeds, "Scene seed range a..b (inclusive); split in the config's train:val ratio");
  gen->add_option("--out", gen_out, "Dataset directory (overrides data_dir)");

  std::string train_data, train_out;
  bool no_resume = false;
  auto* train = app.add_subcommand("train", "Train a predictor");
  add_common(train, train_c);
  train->add_option("--data", train_data, "Dataset directory (overrides data_dir)");
  train->add_option("--out", train_out, "Run directory (overrides output_dir)");
  train->add_flag("--no-resume", no_resume, "Start from scratch even if checkpoints/last exists");

  std::string eval_data, eval_ckpt, eval_split = "val", eval_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval, eval_c);
  eval->add_option("--data", eval_data, "Dataset directory (overrides data_dir)");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory (default <output_dir>/checkpoints/best)");
  eval->add_option("--split", eval_split, "train or val")->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--out", eval_out, "Report directory (default <output_dir>/eval_<split>)");

  std::string abl_data, abl_out, abl_rows;
  auto* abl = app.add_subcommand("ablate", "Train and evaluate the decoder configurations");
  add_common(abl, abl_c);
  abl->add_option("--data", abl_data, "Dataset directory (overrides data_dir)");
  abl->add_option("--out", abl_out, "Run directory (overrides output_dir)");
  abl->add_option("--rows", abl_rows, "Comma separated rows 1..6 (default all)");

  std::string warp_seed, warp_flows, warp_mode = "bilinear", warp_out;
  auto* warp = app.add_subcommand("warp", "Recursively warp a grid with a flow sequence");
  add_common(warp, warp_c);
  warp->add_option("--seed-grid", warp_seed, "Container holding the seed grid")->required();
  warp->add_option("--flows", warp_flows, "Container with channels fx, fy (one frame per step)")->required();
  warp->add_option("--mode", warp_mode, "nearest or bilinear")->check(CLI::IsMember({"nearest", "bilinear"}));
  warp->add_option("--out", warp_out, "Output container directory")->required();

  std::string rep_eval, rep_out;
  auto* rep = app.add_subcommand("report", "Write curves and plots from an evaluation report");
  add_common(rep, rep_c);
  rep->add_option("--eval-dir", rep_eval, "Evaluation directory (default <output_dir>/eval_val)");
  rep->add_option("--out", rep_out, "Figure directory (default <eval-dir>/figures)");

  std::string command = argc > 1 ? argv[1] : "";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error("usage_error", e.what(), command, 2);
  }

  try {
    nlohmann::json out = {{"ok", true}};
    if (gen->parsed()) {
      command = "generate";
      nn::RunConfig c = resolve(gen_c);
      if (!gen_out.empty()) c.data_dir = gen_out;
      nn::SceneSplit split = nn::default_split(c);
      if (!gen_seeds.empty()) {
        const auto [lo, hi] = parse_range(gen_seeds);
        split = nn::range_split(c, lo, hi);
      }
      const nn::DatasetIndex idx = nn::generate_dataset(c, split);
      out.update({{"command", command}, {"data_dir", c.data_dir}, {"scenes", split.seeds.size()},
                  {"train_scenes", split.train}, {"train_samples", idx.train.size()},
                  {"val_samples", idx.val.size()}});
    } else if (train->parsed()) {
      command = "train";
      nn::RunConfig c = resolve(train_c);
      if (!train_data.empty()) c.data_dir = train_data;
      if (!train_out.empty()) c.output_dir = train_out;
      nn::TrainOptions opts;
      opts.resume = !no_resume;
      if (no_resume) fs::remove_all(fs::path(c.output_dir) / "checkpoints");
      const nn::TrainResult r = nn::run_training(c, opts);
      out.update({{"command", command}, {"output_dir", c.output_dir}, {"epochs", r.epochs}, {"steps", r.steps},
                  {"final_train_loss", r.final_train_loss}, {"final_val_loss", gridcast::optional_json(r.final_val_loss)},
                  {"best_val_loss", gridcast::optional_json(r.best_val_loss)}, {"best_epoch", r.best_epoch},
                  {"checkpoints", r.checkpoints.string()}});
    } else if (eval->parsed()) {
      command = "eval";
      nn::RunConfig c = resolve(eval_c);
      if (!eval_data.empty()) c.data_dir = eval_data;
      const fs::path ckpt = eval_ckpt.empty() ? fs::path(c.output_dir) / "checkpoints" / "best" : fs::path(eval_ckpt);
      const fs::path dir = eval_out.empty() ? fs::path(c.output_dir) / ("eval_" + eval_split) : fs::path(eval_out);
      const auto r = nn::run_eval(c, ckpt, eval_split, dir);
      out.update({{"command", command}, {"report_dir", dir.string()}, {"summary", summary(r)}});
    } else if (abl->parsed()) {
      command = "ablate";
      nn::RunConfig c = resolve(abl_c);
      if (!abl_data.empty()) c.data_dir = abl_data;
      if (!abl_out.empty()) c.output_dir = abl_out;
      const auto t = nn::run_ablation(c, abl_rows.empty() ? std::vector<int>{} : parse_rows(abl_rows));
      std::cerr << t.markdown;
      out.update({{"command", command}, {"table", (fs::path(c.output_dir) / "ablation" / "ablation.md").string()},
                  {"rows", t.json["rows"]}});
    } else if (warp->parsed()) {
      command = "warp";
      const auto mode = warp_mode == "nearest" ? gridcast::Interp::kNearest : gridcast::Interp::kBilinear;
      const auto w = nn::run_warp(warp_seed, warp_flows, mode, warp_out);
      out.update({{"command", command}, {"out", warp_out}, {"steps", w.grids.size()}, {"mode", warp_mode}});
    } else if (rep->parsed()) {
      command = "report";
      const nn::RunConfig c = resolve(rep_c);
      const fs::path dir = rep_eval.empty() ? fs::path(c.output_dir) / "eval_val" : fs::path(rep_eval);
      std::ifstream in(dir / "report.json");
      if (!in) throw gridcast::IoError("no report.json in " + dir.string() + " (run `gridcast eval` first)");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw gridcast::IoError("report.json in " + dir.string() + " is not valid JSON: " + e.what());
      }
      const auto files = nn::write_figures(gridcast::metric_report_from_json(j),
                                           rep_out.empty() ? dir / "figures" : fs::path(rep_out));
      std::vector<std::string> names;
      for (const auto& f : files) names.push_back(f.string());
      out.update({{"command", command}, {"files", names}});
    }
    std::cout << out.dump() << std::endl;
    return 0;
  } catch (const nn::ConfigError& e) {
    return emit_error("config_error", e.what(), command, 2);
  } catch (const gridcast::IoError& e) {
    return emit_error("io_error", e.what(), command, 3);
  } catch (const nn::TrainingError& e) {
    return emit_error("training_error", e.what(), command, 4);
  } catch (const gridcast::GridError& e) {
    return emit_error("invalid_input", e.what(), command, 2);
  } catch (const std::filesystem::filesystem_error& e) {
    return emit_error("io_error", e.what(), command, 3);
  } catch (const std::exception& e) {
    return emit_error("internal_error", e.what(), command, 1);
  }
}
