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

#ifndef GRIDCAST_NN_HARNESS_HPP
#define GRIDCAST_NN_HARNESS_HPP

/// Training, evaluation, ablation and reporting on top of the dataset,
/// predictor and objective.

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gridcast/metrics.hpp"
#include "gridcast/nn/config.hpp"
#include "gridcast/nn/dataset.hpp"
#include "gridcast/nn/objective.hpp"
#include "gridcast/nn/predictor.hpp"

namespace gridcast::nn {

inline constexpr const char* kCheckpointFormat = "gridcast-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Training aborted (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Standard normal noise of shape [rows, cols] from a dedicated stream.
inline torch::Tensor seeded_normal(std::uint64_t seed, int64_t rows, int64_t cols) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randn({rows, cols}, gen, torch::TensorOptions().dtype(torch::kFloat));
}

/// Sample order of one epoch.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  // Fisher-Yates with an explicit draw so the order is library-independent.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

/// Fresh model for a config; initialization depends only on the seed.
inline Predictor make_model(const RunConfig& c) {
  torch::manual_seed(mix_seed(c.seed, 0x1417ULL));
  return Predictor(c.backbone);
}

// Checkpoints -------------------------------------------------------------------------

struct CheckpointMeta {
  int epoch = 0;  // completed epochs
  std::int64_t global_step = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> best_val_loss;
  int best_epoch = 0;
  std::vector<double> val_history;
  nlohmann::json config;
  std::string tag;
};

inline nlohmann::json meta_json(const CheckpointMeta& m) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"tag", m.tag},
          {"epoch", m.epoch},
          {"global_step", m.global_step},
          {"train_loss", m.train_loss},
          {"val_loss", optional_json(m.val_loss)},
          {"best_val_loss", optional_json(m.best_val_loss)},
          {"best_epoch", m.best_epoch},
          {"val_history", m.val_history},
          {"config", m.config}};
}

inline CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw IoError("no checkpoint at " + dir.string());
  CheckpointMeta m;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != kCheckpointFormat) throw IoError("not a gridcast checkpoint: " + dir.string());
    if (j.at("version").get<int>() != kCheckpointVersion) throw IoError("unsupported checkpoint version");
    m.tag = j.at("tag").get<std::string>();
    m.epoch = j.at("epoch").get<int>();
    m.global_step = j.at("global_step").get<std::int64_t>();
    m.train_loss = j.at("train_loss").get<double>();
    if (!j.at("val_loss").is_null()) m.val_loss = j.at("val_loss").get<double>();
    if (!j.at("best_val_loss").is_null()) m.best_val_loss = j.at("best_val_loss").get<double>();
    m.best_epoch = j.at("best_epoch").get<int>();
    m.val_history = j.at("val_history").get<std::vector<double>>();
    m.config = j.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint meta in " + dir.string() + ": " + e.what());
  }
  return m;
}

/// Writes model, optimizer and meta into `dir`, replacing it atomically.
inline void write_checkpoint(const std::filesystem::path& dir, Predictor& model, torch::optim::AdamW* optim,
                             const CheckpointMeta& meta) {
  namespace fs = std::filesystem;
  const fs::path tmp = dir.string() + ".tmp";
  const fs::path old = dir.string() + ".old";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + tmp.string() + ": " + ec.message());
  torch::save(model, (tmp / "model.pt").string());
  if (optim) torch::save(*optim, (tmp / "optim.pt").string());
  gridcast::detail::write_text_atomic(tmp / "meta.json", meta_json(meta).dump(2) + "\n");
  fs::remove_all(old, ec);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(tmp, dir);
  fs::remove_all(old, ec);
}

/// The parts of a config that fix the model architecture and its inputs.
inline nlohmann::json model_signature(const nlohmann::json& config) {
  return {{"backbone", config.at("backbone")},
          {"grid", config.at("grid")},
          {"history", config.at("history")},
          {"horizon", config.at("horizon")},
          {"step", config.at("step")},
          {"tasks", config.at("tasks")}};
}

/// Loads a checkpoint's model, rejecting configs whose architecture,
/// grid, window or task switches differ.
inline Predictor load_model(const std::filesystem::path& dir, const RunConfig& c) {
  const CheckpointMeta meta = read_checkpoint_meta(dir);
  const auto want = model_signature(nlohmann::json(c));
  const auto have = model_signature(meta.config);
  if (want != have) {
    throw ConfigError("checkpoint " + dir.string() + " does not match the config: checkpoint " + have.dump() +
                      " vs config " + want.dump());
  }
  Predictor model(c.backbone);
  torch::load(model, (dir / "model.pt").string());
  return model;
}

// Training ----------------------------------------------------------------------------

struct TrainOptions {
  bool resume = true;       // continue from checkpoints/last when present
  int stop_after_epochs = -1;  // stop once this many epochs are complete (-1: run all)
  std::ostream* progress = &std::cerr;
};

struct TrainResult {
  int epochs = 0;
  std::int64_t steps = 0;
  double final_train_loss = 0.0;
  std::optional<double> final_val_loss;
  std::optional<double> best_val_loss;
  int best_epoch = 0;
  LossReport last_report;
  std::filesystem::path checkpoints;
};

/// Mean weighted loss over `items` with the posterior mean latent.
inline double validation_loss(Predictor& model, const std::vector<Batch>& items, const RunConfig& c) {
  torch::NoGradGuard guard;
  if (items.empty()) return 0.0;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < items.size(); i += static_cast<std::size_t>(c.optimizer.batch_size)) {
    const std::size_t end = std::min(items.size(), i + static_cast<std::size_t>(c.optimizer.batch_size));
    const Batch b = collate({items.begin() + static_cast<std::ptrdiff_t>(i), items.begin() + static_cast<std::ptrdiff_t>(end)});
    auto opt = forward_options(c.tasks, LatentMode::kPosterior);
    opt.eps = torch::zeros({b.size(), c.backbone.latent_dim});
    const auto out = model->forward(b, opt);
    sum += objective(out, b, c.tasks, c.loss).report.total * static_cast<double>(end - i);
    n += end - i;
  }
  return sum / static_cast<double>(n);
}

inline std::string report_line(const LossReport& r) {
  std::ostringstream os;
  for (std::size_t i = 0; i < r.terms.size(); ++i) {
    if (r.enabled[i]) os << kLossTermNames[i] << "=" << format_metric(r.terms[i], 5) << " ";
  }
  os << "total=" << format_metric(r.total, 5);
  return os.str();
}

/// Trains on in-memory batches. Checkpoints go to <output_dir>/checkpoints
/// (last after every epoch, best by validation loss, final at the end);
/// per-step records are appended to <output_dir>/train_log.jsonl.
inline TrainResult train_on(const RunConfig& c, const std::vector<Batch>& train, const std::vector<Batch>& val,
                            const TrainOptions& opts = {}) {
  namespace fs = std::filesystem;
  validate(c);
  if (train.empty()) throw ConfigError("training split is empty");
  torch::set_num_threads(1);
  const fs::path out = c.output_dir;
  const fs::path ckpt = out / "checkpoints";
  std::error_code ec;
  fs::create_directories(ckpt, ec);
  if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
  const nlohmann::json cfg_json = c;
  gridcast::detail::write_text_atomic(out / "config.json", cfg_json.dump(2) + "\n");

  Predictor model = make_model(c);
  torch::optim::AdamW optim(model->parameters(), torch::optim::AdamWOptions(c.optimizer.learning_rate)
                                                     .weight_decay(c.optimizer.weight_decay));
  CheckpointMeta meta;
  meta.config = cfg_json;
  if (opts.resume && fs::exists(ckpt / "last" / "meta.json")) {
    meta = read_checkpoint_meta(ckpt / "last");
    nlohmann::json saved = meta.config, now = cfg_json;
    saved.erase("output_dir");
    now.erase("output_dir");
    saved.erase("log_every");
    now.erase("log_every");
    if (saved != now) throw ConfigError("cannot resume: " + (ckpt / "last").string() + " was trained with another config");
    torch::load(model, (ckpt / "last" / "model.pt").string());
    torch::load(optim, (ckpt / "last" / "optim.pt").string());
    if (opts.progress) *opts.progress << "resume epoch=" << meta.epoch << " step=" << meta.global_step << "\n";
  }

  std::ofstream log(out / "train_log.jsonl", std::ios::app);
  if (!log) throw IoError("cannot append to " + (out / "train_log.jsonl").string());
  const auto B = static_cast<std::size_t>(c.optimizer.batch_size);
  LossReport last;
  for (int epoch = meta.epoch; epoch < c.optimizer.epochs; ++epoch) {
    if (opts.stop_after_epochs >= 0 && epoch >= opts.stop_after_epochs) break;
    model->train();
    const auto order = epoch_order(c.seed, epoch, train.size());
    double epoch_sum = 0.0;
    std::size_t epoch_n = 0;
    for (std::size_t i = 0; i < order.size(); i += B) {
      std::vector<Batch> items;
      for (std::size_t k = i; k < std::min(order.size(), i + B); ++k) items.push_back(train[order[k]]);
      const Batch b = collate(items);
      auto fo = forward_options(c.tasks, LatentMode::kPosterior);
      fo.eps = seeded_normal(mix_seed(c.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(meta.global_step)),
                             b.size(), c.backbone.latent_dim);
      const auto fwd = model->forward(b, fo);
      Objective obj = objective(fwd, b, c.tasks, c.loss);
      if (!std::isfinite(obj.report.total)) {
        nlohmann::json diag = {{"error", "non-finite loss"},
                               {"epoch", epoch},
                               {"step", meta.global_step},
                               {"terms", report_line(obj.report)},
                               {"last_good_checkpoint", (ckpt / "last").string()}};
        gridcast::detail::write_text_atomic(out / "failure.json", diag.dump(2) + "\n");
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(meta.global_step) + " (" + report_line(obj.report) +
                            "); last good checkpoint: " + (ckpt / "last").string());
      }
      optim.zero_grad();
      obj.total.backward();
      optim.step();
      ++meta.global_step;
      last = obj.report;
      epoch_sum += obj.report.total * static_cast<double>(b.size());
      epoch_n += static_cast<std::size_t>(b.size());
      nlohmann::json rec = {{"epoch", epoch}, {"step", meta.global_step}, {"total", obj.report.total}};
      for (std::size_t t = 0; t < obj.report.terms.size(); ++t) {
        if (obj.report.enabled[t]) rec[kLossTermNames[t]] = obj.report.terms[t];
      }
      log << rec.dump() << "\n";
      if (opts.progress && meta.global_step % c.log_every == 0) {
        *opts.progress << "train epoch=" << epoch << " step=" << meta.global_step << " " << report_line(obj.report)
                       << "\n";
      }
    }
    log.flush();
    meta.epoch = epoch + 1;
    meta.train_loss = epoch_sum / static_cast<double>(epoch_n);
    model->eval();
    if (!val.empty()) {
      meta.val_loss = validation_loss(model, val, c);
      meta.val_history.push_back(*meta.val_loss);
    }
    const bool improved = meta.val_loss ? (!meta.best_val_loss || *meta.val_loss < *meta.best_val_loss) : true;
    if (improved) {
      meta.best_val_loss = meta.val_loss;
      meta.best_epoch = meta.epoch;
    }
    if (opts.progress) {
      *opts.progress << "epoch " << meta.epoch << "/" << c.optimizer.epochs
                     << " train_loss=" << format_metric(meta.train_loss, 5)
                     << " val_loss=" << format_metric(meta.val_loss, 5) << (improved ? " best" : "") << "\n";
    }
    meta.tag = "best";
    if (improved) write_checkpoint(ckpt / "best", model, &optim, meta);
    meta.tag = "last";
    write_checkpoint(ckpt / "last", model, &optim, meta);
  }
  if (meta.epoch >= c.optimizer.epochs) {
    meta.tag = "final";
    write_checkpoint(ckpt / "final", model, &optim, meta);
  }
  TrainResult r;
  r.epochs = meta.epoch;
  r.steps = meta.global_step;
  r.final_train_loss = meta.train_loss;
  r.final_val_loss = meta.val_loss;
  r.best_val_loss = meta.best_val_loss;
  r.best_epoch = meta.best_epoch;
  r.last_report = last;
  r.checkpoints = ckpt;
  return r;
}

/// Trains from the dataset in c.data_dir.
inline TrainResult run_training(const RunConfig& c, const TrainOptions& opts = {}) {
  const DatasetIndex idx = open_dataset(c.data_dir);
  require_compatible(idx, c);
  return train_on(c, load_batches(idx, "train", c), load_batches(idx, "val", c), opts);
}

// Evaluation --------------------------------------------------------------------------

/// Deterministic evaluation with the mean of the present distribution.
inline MetricReport evaluate_model(Predictor& model, const RunConfig& c, const DatasetIndex& idx,
                                   const std::string& split) {
  torch::NoGradGuard guard;
  torch::set_num_threads(1);
  model->eval();
  MetricAccumulator acc;
  for (const SampleRef& r : idx.split(split)) {
    const SequenceSample s = load_sample(idx, r, c);
    const auto out = model->forward(to_batch(s), forward_options(c.tasks, LatentMode::kPriorMean));
    const PredictionBundle bundle = to_bundle(out, 0, s.geometry());
    std::optional<WarpedSequence> wv, wd;
    if (out.w_veh.defined()) wv = to_warped(out.w_veh, 0, WarpedSequence::Source::kVehicle);
    if (out.w_dyn.defined()) wd = to_warped(out.w_dyn, 0, WarpedSequence::Source::kDynamic);
    acc.add(evaluate_bundle(bundle, wv ? &*wv : nullptr, wd ? &*wd : nullptr, s));
  }
  if (idx.split(split).empty()) throw ConfigError("split " + split + " is empty");
  return acc.report();
}

/// Names of the per-step curves written next to every report.
inline std::vector<std::string> curve_names() {
  return {"pveh.recall_dynamic",         "wveh.recall_dynamic",         "wpveh.recall_dynamic",
          "odyn.recall_dynamic_veh",     "odyn.recall_dynamic_ped",     "odyn.recall_dynamic_cyc",
          "wdyn.recall_dynamic_veh",     "wdyn.recall_dynamic_ped",     "wdyn.recall_dynamic_cyc",
          "flow.epe"};
}

inline void write_report(const std::filesystem::path& dir, const MetricReport& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  gridcast::detail::write_text_atomic(dir / "report.json", to_json(r).dump(2) + "\n");
  gridcast::detail::write_text_atomic(dir / "table.txt", render_table(r));
  gridcast::detail::write_text_atomic(dir / "curves.csv", curves_csv(r, curve_names()));
}

/// Evaluates checkpoint `ckpt` (a checkpoint directory) on `split` and
/// writes report.json, table.txt and curves.csv into `out_dir`.
inline MetricReport run_eval(const RunConfig& c, const std::filesystem::path& ckpt, const std::string& split,
                             const std::filesystem::path& out_dir) {
  const DatasetIndex idx = open_dataset(c.data_dir);
  require_compatible(idx, c);
  Predictor model = load_model(ckpt, c);
  const MetricReport r = evaluate_model(model, c, idx, split);
  write_report(out_dir, r);
  return r;
}

// Ablation ----------------------------------------------------------------------------

struct AblationRow {
  std::string name;
  TaskSwitches tasks;
};

/// The six decoder configurations, from prediction-only to the full model.
inline std::vector<AblationRow> ablation_rows() {
  //      det_veh det_dyn flow   ogm    w_veh  w_dyn
  return {{"pred_flow", {false, false, true, false, false, false}},
          {"pred_ogm", {false, false, false, true, false, false}},
          {"pred_flow_ogm", {false, false, true, true, false, false}},
          {"det_veh_pred_flow_wveh", {true, false, true, false, true, false}},
          {"det_pred_flow_ogm", {true, true, true, true, false, false}},
          {"full", {true, true, true, true, true, true}}};
}

struct AblationColumn {
  std::string metric;
  std::string header;
  bool lower_is_better;
};

inline std::vector<AblationColumn> ablation_columns() {
  return {{"flow.epe", "EPE", true},
          {"ogm.mse_unk", "MSE unk", true},
          {"ogm.mse_dyn", "MSE dyn", true},
          {"ogm.mse_stat", "MSE stat", true},
          {"pveh.soft_iou", "Veh IoU", false},
          {"pveh.soft_recall", "Veh Recall", false},
          {"pveh.soft_recall_dynamic", "Veh R-dyn", false},
          {"wveh.recall_dynamic", "W Veh", false},
          {"wdyn.recall_dynamic_ped", "W Ped", false},
          {"wdyn.recall_dynamic_cyc", "W Cyc", false}};
}

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<MetricReport> reports;
  nlohmann::json json;
  std::string markdown;
};

/// Builds the comparison; per column the best value is marked **bold** and
/// the second best _underlined_ (as flags "best" and "second" in JSON).
inline AblationTable compare_rows(const std::vector<AblationRow>& rows, const std::vector<MetricReport>& reports) {
  if (rows.size() != reports.size()) throw GridError("compare_rows: size mismatch");
  AblationTable t{rows, reports, nlohmann::json::object(), ""};
  const auto cols = ablation_columns();
  std::vector<std::vector<std::string>> flags(rows.size(), std::vector<std::string>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    std::vector<std::pair<double, std::size_t>> vals;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (auto v = reports[r].average(cols[c].metric)) vals.emplace_back(*v, r);
    }
    std::stable_sort(vals.begin(), vals.end(), [&](const auto& a, const auto& b) {
      return cols[c].lower_is_better ? a.first < b.first : a.first > b.first;
    });
    if (!vals.empty()) flags[vals[0].second][c] = "best";
    if (vals.size() > 1) flags[vals[1].second][c] = "second";
  }
  std::ostringstream md;
  md << "| D^veh | D^dyn | P^flow | Z^ogm | W^veh | W^dyn |";
  for (const auto& col : cols) md << " " << col.header << " |";
  md << "\n|";
  for (std::size_t i = 0; i < 6 + cols.size(); ++i) md << "---|";
  md << "\n";
  t.json["rows"] = nlohmann::json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const TaskSwitches& s = rows[r].tasks;
    auto mark = [](bool b) { return b ? "x" : " "; };
    md << "| " << mark(s.det_veh) << " | " << mark(s.det_dyn) << " | " << mark(s.flow) << " | " << mark(s.ogm)
       << " | " << mark(s.warped_veh) << " | " << mark(s.warped_dyn) << " |";
    nlohmann::json row = {{"name", rows[r].name}, {"tasks", s}, {"metrics", nlohmann::json::object()}};
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto v = reports[r].average(cols[c].metric);
      std::string cell = format_metric(v);
      if (flags[r][c] == "best") cell = "**" + cell + "**";
      if (flags[r][c] == "second") cell = "_" + cell + "_";
      md << " " << cell << " |";
      row["metrics"][cols[c].metric] = {{"value", optional_json(v)},
                                        {"flag", flags[r][c].empty() ? nlohmann::json(nullptr) : nlohmann::json(flags[r][c])}};
    }
    md << "\n";
    t.json["rows"].push_back(row);
  }
  md << "\n**bold** = best, _underline_ = second best; '-' = output not produced by that configuration.\n";
  t.markdown = md.str();
  return t;
}

/// Trains and evaluates every row (or the `only` subset, by index) under
/// <output_dir>/ablation/<row>, then writes ablation.md and ablation.json.
inline AblationTable run_ablation(const RunConfig& base, const std::vector<int>& only = {},
                                  const TrainOptions& opts = {}) {
  const auto all = ablation_rows();
  std::vector<AblationRow> rows;
  if (only.empty()) {
    rows = all;
  } else {
    for (int i : only) {
      if (i < 1 || i > static_cast<int>(all.size()))
        throw ConfigError("ablation row " + std::to_string(i) + " out of range 1.." + std::to_string(all.size()));
      rows.push_back(all[static_cast<std::size_t>(i - 1)]);
    }
  }
  const DatasetIndex idx = open_dataset(base.data_dir);
  require_compatible(idx, base);
  const auto train = load_batches(idx, "train", base);
  const auto val = load_batches(idx, "val", base);
  const std::string split = idx.val.empty() ? "train" : "val";
  std::vector<MetricReport> reports;
  for (const AblationRow& row : rows) {
    RunConfig c = base;
    c.tasks = row.tasks;
    c.output_dir = (std::filesystem::path(base.output_dir) / "ablation" / row.name).string();
    if (opts.progress) *opts.progress << "ablation row=" << row.name << "\n";
    train_on(c, train, val, opts);
    Predictor model = load_model(std::filesystem::path(c.output_dir) / "checkpoints" / "best", c);
    reports.push_back(evaluate_model(model, c, idx, split));
    write_report(std::filesystem::path(c.output_dir) / ("eval_" + split), reports.back());
  }
  AblationTable t = compare_rows(rows, reports);
  const std::filesystem::path out = std::filesystem::path(base.output_dir) / "ablation";
  gridcast::detail::write_text_atomic(out / "ablation.md", t.markdown);
  gridcast::detail::write_text_atomic(out / "ablation.json", t.json.dump(2) + "\n");
  return t;
}

// Report ------------------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::optional<double>> values;  // index = step (0..T)
};

/// Minimal SVG line chart over steps 0..T with a [0, y_max] axis.
inline std::string svg_line_chart(const std::string& title, const std::vector<Series>& series, double y_max = 1.0) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double W = 480, H = 320, L = 50, R = 150, Tm = 30, Bm = 40;
  std::size_t steps = 0;
  for (const auto& s : series) steps = std::max(steps, s.values.size());
  const double xs = steps > 1 ? (W - L - R) / static_cast<double>(steps - 1) : 0.0;
  auto X = [&](std::size_t k) { return L + xs * static_cast<double>(k); };
  auto Y = [&](double v) { return H - Bm - (H - Tm - Bm) * std::clamp(v / y_max, 0.0, 1.0); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << L << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - Bm << "\" x2=\"" << W - R << "\" y2=\"" << H - Bm << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - Bm << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y_max * i / 4.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << format_metric(v, 2) << "</text>\n";
  }
  for (std::size_t k = 0; k < steps; ++k) {
    os << "<text x=\"" << X(k) << "\" y=\"" << H - Bm + 16 << "\" text-anchor=\"middle\">" << k << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 6 << "\" text-anchor=\"middle\">prediction step</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 6];
    std::string pts;
    for (std::size_t k = 0; k < series[s].values.size(); ++k) {
      if (!series[s].values[k]) continue;
      pts += format_metric(X(k), 1) + "," + format_metric(Y(*series[s].values[k]), 1) + " ";
    }
    if (!pts.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    }
    const double ly = Tm + 16.0 * static_cast<double>(s);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 34 << "\" y=\"" << ly + 4 << "\">" << series[s].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Per-step values of a report entry with step 0 taken from `step0`.
inline std::vector<std::optional<double>> curve(const MetricReport& r, const std::string& name,
                                                const std::string& step0 = "") {
  std::vector<std::optional<double>> v;
  v.push_back(step0.empty() ? std::nullopt : r.average(step0));
  const auto it = r.series.find(name);
  if (it == r.series.end()) throw GridError("unknown metric: " + name);
  v.insert(v.end(), it->second.per_step.begin(), it->second.per_step.end());
  return v;
}

/// Writes curves.csv and the recall plots for an evaluation report.
inline std::vector<std::filesystem::path> write_figures(const MetricReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> files;
  auto put = [&](const std::string& name, const std::string& text) {
    gridcast::detail::write_text_atomic(dir / name, text);
    files.push_back(dir / name);
  };
  put("curves.csv", curves_csv(r, curve_names()));
  for (const char* cls : {"veh", "ped", "cyc"}) {
    const std::string c = cls;
    put("recall_dynamic_" + c + ".svg",
        svg_line_chart("dynamic recall (" + c + ")",
                       {{"W^dyn", curve(r, "wdyn.recall_dynamic_" + c, "det.dyn_recall_dynamic_" + c)},
                        {"O^dyn", curve(r, "odyn.recall_dynamic_" + c)}}));
  }
  put("vehicle_recall_dynamic.svg",
      svg_line_chart("vehicle recall-dynamic", {{"W^veh", curve(r, "wveh.recall_dynamic")},
                                                {"W^veh*P^veh", curve(r, "wpveh.recall_dynamic")},
                                                {"P^veh", curve(r, "pveh.recall_dynamic")}}));
  return files;
}

// Warp tool ---------------------------------------------------------------------------

/// Warps the single-channel seed grid (frame 0 of a container) through the
/// flows container (channels fx, fy; one frame per step) and writes the
/// warped sequence as a container with channel "occupancy".
inline WarpedSequence run_warp(const std::filesystem::path& seed_dir, const std::filesystem::path& flows_dir,
                               Interp mode, const std::filesystem::path& out_dir) {
  const ContainerManifest sm = read_manifest(seed_dir);
  if (sm.channels.size() != 1 || sm.frames.empty())
    throw IoError("seed grid container must hold one channel and at least one frame");
  const ContainerFrame seed = read_frame(seed_dir, sm, 0);
  const ContainerManifest fm = read_manifest(flows_dir);
  if (fm.channels != std::vector<std::string>{"fx", "fy"})
    throw IoError("flow container must hold channels [fx, fy]");
  std::vector<SceneFlowGrid> flows;
  for (std::size_t k = 0; k < fm.frames.size(); ++k) {
    ContainerFrame f = read_frame(flows_dir, fm, k);
    SceneFlowGrid g(fm.geometry);
    g.fx = std::move(f.channels[0]);
    g.fy = std::move(f.channels[1]);
    flows.push_back(std::move(g));
  }
  if (!(sm.geometry.height == fm.geometry.height && sm.geometry.width == fm.geometry.width))
    throw GridError("seed grid and flows have different shapes");
  WarpedSequence w = warp_sequence(seed.channels[0], flows, mode);
  std::vector<ContainerFrame> frames;
  for (std::size_t k = 0; k < w.grids.size(); ++k) {
    frames.push_back({fm.frames[k].time, fm.frames[k].pose, {w.grids[k]}});
  }
  write_container(out_dir, fm.geometry, {"occupancy"}, fm.timestep, frames);
  return w;
}

}  // namespace gridcast::nn

#endif  // GRIDCAST_NN_HARNESS_HPP
