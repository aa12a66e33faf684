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

#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "gridcast/nn/harness.hpp"

namespace gc = gridcast;
namespace nn = gridcast::nn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gridcast_harness_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 32x32 cells of 1 m, a 1-frame history, 3 future steps, a tiny backbone.
nn::RunConfig tiny(const fs::path& root) {
  nn::RunConfig c;
  c.grid = {32, 32, 1.0};
  c.history = 1;
  c.horizon = 3;
  c.world.duration = 3.0;
  c.world.vehicles = 3;
  c.world.pedestrians = 1;
  c.world.cyclists = 1;
  c.world.static_shapes = 3;
  c.backbone.enc1 = 4;
  c.backbone.enc2 = 8;
  c.backbone.hidden = 8;
  c.backbone.depth = 1;
  c.backbone.latent_dim = 4;
  c.backbone.rollout_grus = 1;
  c.backbone.history = 1;
  c.backbone.horizon = 3;
  c.dataset = {3, 1, 0.5};
  c.optimizer = {1e-3, 3e-7, 2, 2};
  c.seed = 11;
  c.data_dir = (root / "data").string();
  c.output_dir = (root / "run").string();
  c.log_every = 1000;
  return c;
}

class HarnessTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(scratch("shared"));
    const nn::RunConfig c = tiny(*root_);
    nn::generate_dataset(c);
  }
  static void TearDownTestSuite() {
    fs::remove_all(root_->parent_path());
    delete root_;
  }
  static nn::RunConfig config(const std::string& run) {
    nn::RunConfig c = tiny(*root_);
    c.output_dir = (*root_ / run).string();
    return c;
  }
  static nn::TrainOptions quiet() {
    nn::TrainOptions o;
    o.progress = nullptr;
    return o;
  }
  static fs::path* root_;
};

fs::path* HarnessTest::root_ = nullptr;

}  // namespace

// Dataset ------------------------------------------------------------------------------

TEST(Dataset, DeskPresetYieldsAtLeast500TrainingWindows) {
  const nn::RunConfig c = nn::RunConfig::desk();
  const std::size_t per_scene = nn::window_times(c, c.world.duration).size();
  EXPECT_EQ(per_scene, 7u);  // t = 1.0, 2.0, ..., 7.0
  EXPECT_GE(per_scene * static_cast<std::size_t>(c.dataset.train_scenes), 500u);
}

TEST(Dataset, WindowTimesKeepTheFutureInsideTheScene) {
  nn::RunConfig c = nn::RunConfig::desk();
  c.dataset.window_stride = 0.5;
  const auto t = nn::window_times(c, 10.0);
  ASSERT_FALSE(t.empty());
  EXPECT_DOUBLE_EQ(t.front(), c.history * c.step);
  EXPECT_LE(t.back() + c.horizon * c.step, 10.0 + 1e-9);
  EXPECT_GT(t.back() + 0.5 + c.horizon * c.step, 10.0);
}

TEST(Dataset, SeedRangeKeepsTheTrainValRatio) {
  const nn::RunConfig c = nn::RunConfig::desk();
  const nn::SceneSplit s = nn::range_split(c, 0, 99);
  ASSERT_EQ(s.seeds.size(), 100u);
  EXPECT_EQ(s.seeds.front(), 0u);
  EXPECT_EQ(s.seeds.back(), 99u);
  EXPECT_EQ(s.train, 80u);
  EXPECT_EQ(nn::range_split(c, 7, 7).train, 1u);
  EXPECT_THROW(nn::range_split(c, 5, 4), nn::ConfigError);
  EXPECT_THROW(nn::range_split(c, 0, 1000000), nn::ConfigError);
}

TEST_F(HarnessTest, SplitCountsAndDisjointScenes) {
  const nn::DatasetIndex idx = nn::open_dataset(*root_ / "data");
  const nn::RunConfig c = config("x");
  const std::size_t per_scene = nn::window_times(c, c.world.duration).size();
  EXPECT_EQ(idx.train.size(), 3 * per_scene);
  EXPECT_EQ(idx.val.size(), 1 * per_scene);
  std::set<std::uint64_t> train, val;
  for (const auto& r : idx.train) train.insert(r.scene_seed);
  for (const auto& r : idx.val) val.insert(r.scene_seed);
  EXPECT_EQ(train.size(), 3u);
  EXPECT_EQ(val.size(), 1u);
  for (auto s : val) EXPECT_EQ(train.count(s), 0u);
}

TEST_F(HarnessTest, RegenerationIsByteIdentical) {
  nn::RunConfig c = config("x");
  c.data_dir = scratch("regen").string();
  nn::generate_dataset(c);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(*root_ / "data")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), *root_ / "data");
    ASSERT_TRUE(fs::exists(fs::path(c.data_dir) / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(c.data_dir) / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 10u);
}

TEST_F(HarnessTest, DifferentSeedsGiveDifferentScenes) {
  nn::RunConfig a = config("x");
  nn::RunConfig b = a;
  b.seed = a.seed + 1;
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 4; ++k) EXPECT_NE(nn::scene_seed(a, i), nn::scene_seed(b, k));
  }
}

TEST_F(HarnessTest, SamplesRoundTripThroughDisk) {
  const nn::RunConfig c = config("x");
  const nn::DatasetIndex idx = nn::open_dataset(c.data_dir);
  const nn::SampleRef& r = idx.train.front();
  const gc::SceneScript script = gc::generate_scene(r.scene_seed, c.world);
  const gc::SequenceSample fresh =
      gc::build_sample(script, r.time, c.history, c.horizon, c.step, c.sensor, c.grid.geometry());
  const gc::SequenceSample disk = nn::load_sample(idx, r, c);
  ASSERT_EQ(disk.history.size(), fresh.history.size());
  for (std::size_t k = 0; k < fresh.history.size(); ++k) {
    for (std::size_t ch = 0; ch < fresh.history[k].channels.size(); ++ch)
      EXPECT_EQ(disk.history[k].channels[ch], fresh.history[k].channels[ch]);
  }
  EXPECT_EQ(disk.det_veh.prob, fresh.det_veh.prob);
  EXPECT_EQ(disk.det_dyn, fresh.det_dyn);
  ASSERT_EQ(disk.future.size(), fresh.future.size());
  for (std::size_t k = 0; k < fresh.future.size(); ++k) {
    EXPECT_EQ(disk.future[k].veh.prob, fresh.future[k].veh.prob);
    EXPECT_EQ(disk.future[k].flow.fx, fresh.future[k].flow.fx);
    EXPECT_EQ(disk.future[k].flow.fy, fresh.future[k].flow.fy);
    EXPECT_EQ(disk.future[k].ogm.dyn, fresh.future[k].ogm.dyn);
    EXPECT_EQ(disk.future[k].dynamic_by_class, fresh.future[k].dynamic_by_class);
  }
}

TEST_F(HarnessTest, IncompatibleDatasetIsRejected) {
  nn::RunConfig c = config("x");
  const nn::DatasetIndex idx = nn::open_dataset(c.data_dir);
  c.grid = {36, 36, 1.0};
  EXPECT_THROW(nn::require_compatible(idx, c), nn::ConfigError);
  c = config("x");
  c.horizon = 4;
  c.backbone.horizon = 4;
  EXPECT_THROW(nn::require_compatible(idx, c), nn::ConfigError);
  EXPECT_THROW(nn::open_dataset(*root_ / "missing"), gc::IoError);
}

// Config -------------------------------------------------------------------------------

TEST(Config, RoundTripsThroughJson) {
  nn::RunConfig c = nn::RunConfig::desk();
  c.seed = 99;
  c.tasks.warped_dyn = false;
  c.loss = gc::LossWeights::occlusion_heavy();
  const nlohmann::json j = c;
  const nn::RunConfig back = nn::config_from_json(j);
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Config, PresetsAndOverrides) {
  const nn::RunConfig p = nn::config_from_json({{"preset", "full"}});
  EXPECT_EQ(p.grid.height, 240);
  EXPECT_DOUBLE_EQ(p.grid.resolution, 0.25);
  EXPECT_EQ(p.backbone.hidden, 128);
  EXPECT_EQ(p.optimizer.batch_size, 18);
  const nn::RunConfig o = nn::config_from_json({{"loss_preset", "occlusion_heavy"}, {"horizon", 4}});
  EXPECT_DOUBLE_EQ(o.loss.flow, 50.0);
  EXPECT_EQ(o.backbone.horizon, 4);  // follows the run window
}

TEST(Config, ErrorsAreSpecific) {
  auto message = [](const nlohmann::json& j) {
    try {
      nn::config_from_json(j);
    } catch (const nn::ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message({{"epochs", 3}}).find("unknown config key: epochs"), std::string::npos);
  EXPECT_NE(message({{"preset", "huge"}}).find("unknown preset"), std::string::npos);
  EXPECT_NE(message({{"grid", {{"height", 30}}}}).find("divisible by 4"), std::string::npos);
  EXPECT_NE(message({{"tasks", {{"flow", false}}}}).find("warped_veh needs"), std::string::npos);
  EXPECT_NE(message({{"optimizer", {{"learning_rate", -1.0}}}}).find("optimizer"), std::string::npos);
  EXPECT_NE(message({{"history", "two"}}).find("config:"), std::string::npos);
  EXPECT_NE(message(nlohmann::json::array()).find("JSON object"), std::string::npos);
  EXPECT_THROW(nn::load_config("/nonexistent/config.json"), nn::ConfigError);
}

// Training -----------------------------------------------------------------------------

TEST_F(HarnessTest, TrainingIsDeterministic) {
  const auto a = nn::run_training(config("det_a"), quiet());
  const auto b = nn::run_training(config("det_b"), quiet());
  EXPECT_EQ(a.epochs, 2);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_NEAR(a.final_train_loss, b.final_train_loss, 1e-5 * std::abs(a.final_train_loss));
  ASSERT_TRUE(a.final_val_loss && b.final_val_loss);
  EXPECT_NEAR(*a.final_val_loss, *b.final_val_loss, 1e-5 * std::abs(*a.final_val_loss));
  EXPECT_EQ(slurp(*root_ / "det_a" / "train_log.jsonl"), slurp(*root_ / "det_b" / "train_log.jsonl"));
  for (const char* tag : {"last", "best", "final"}) {
    EXPECT_TRUE(fs::exists(*root_ / "det_a" / "checkpoints" / tag / "model.pt")) << tag;
    EXPECT_TRUE(fs::exists(*root_ / "det_a" / "checkpoints" / tag / "meta.json")) << tag;
  }
}

TEST_F(HarnessTest, ResumeMatchesUninterruptedRun) {
  const auto full = nn::run_training(config("res_full"), quiet());
  auto opts = quiet();
  opts.stop_after_epochs = 1;
  const auto half = nn::run_training(config("res_split"), opts);
  EXPECT_EQ(half.epochs, 1);
  EXPECT_FALSE(fs::exists(*root_ / "res_split" / "checkpoints" / "final"));
  const auto rest = nn::run_training(config("res_split"), quiet());
  EXPECT_EQ(rest.epochs, 2);
  EXPECT_EQ(rest.steps, full.steps);
  EXPECT_NEAR(rest.final_train_loss, full.final_train_loss, 1e-5 * std::abs(full.final_train_loss));
  EXPECT_EQ(slurp(*root_ / "res_split" / "train_log.jsonl"), slurp(*root_ / "res_full" / "train_log.jsonl"));
}

TEST_F(HarnessTest, ResumeWithAnotherConfigIsRejected) {
  auto opts = quiet();
  opts.stop_after_epochs = 1;
  nn::run_training(config("res_other"), opts);
  nn::RunConfig c = config("res_other");
  c.optimizer.learning_rate = 5e-3;
  EXPECT_THROW(nn::run_training(c, quiet()), nn::ConfigError);
}

TEST_F(HarnessTest, LogRecordsEveryStepWithEnabledTerms) {
  nn::RunConfig c = config("log");
  c.optimizer.epochs = 1;
  c.tasks = nn::ablation_rows()[0].tasks;
  const auto r = nn::run_training(c, quiet());
  std::ifstream in(fs::path(c.output_dir) / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("veh") && j.contains("flow") && j.contains("kl") && j.contains("total"));
    EXPECT_FALSE(j.contains("det") || j.contains("unk") || j.contains("w_veh"));
    ++lines;
  }
  EXPECT_EQ(lines, r.steps);
}

TEST_F(HarnessTest, NonFiniteLossAbortsWithDiagnostic) {
  nn::RunConfig c = config("nan");
  auto train = nn::load_batches(nn::open_dataset(c.data_dir), "train", c);
  train[0].history[0][0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
  c.optimizer.batch_size = static_cast<int>(train.size());
  try {
    nn::train_on(c, train, {}, quiet());
    FAIL() << "expected TrainingError";
  } catch (const nn::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("last good checkpoint"), std::string::npos);
  }
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "failure.json"));
}

// Evaluation ---------------------------------------------------------------------------

TEST_F(HarnessTest, EvaluationIsDeterministicAndWritesArtifacts) {
  nn::RunConfig c = config("eval");
  c.optimizer.epochs = 1;
  nn::run_training(c, quiet());
  const fs::path ckpt = fs::path(c.output_dir) / "checkpoints" / "best";
  const auto a = nn::run_eval(c, ckpt, "val", *root_ / "eval_a");
  const auto b = nn::run_eval(c, ckpt, "val", *root_ / "eval_b");
  EXPECT_EQ(gc::to_json(a), gc::to_json(b));
  for (const char* f : {"report.json", "table.txt", "curves.csv"}) {
    EXPECT_TRUE(fs::exists(*root_ / "eval_a" / f)) << f;
  }
  EXPECT_EQ(slurp(*root_ / "eval_a" / "report.json"), slurp(*root_ / "eval_b" / "report.json"));
  EXPECT_EQ(a.horizon, c.horizon);
  EXPECT_EQ(a.samples, static_cast<int>(nn::open_dataset(c.data_dir).val.size()));
  const auto back = gc::metric_report_from_json(nlohmann::json::parse(slurp(*root_ / "eval_a" / "report.json")));
  EXPECT_EQ(gc::to_json(back), gc::to_json(a));
}

TEST_F(HarnessTest, CheckpointConfigMismatchIsRejected) {
  nn::RunConfig c = config("mismatch");
  c.optimizer.epochs = 1;
  nn::run_training(c, quiet());
  nn::RunConfig other = c;
  other.backbone.hidden = 16;
  EXPECT_THROW(nn::load_model(fs::path(c.output_dir) / "checkpoints" / "last", other), nn::ConfigError);
  other = c;
  other.tasks.warped_dyn = false;
  EXPECT_THROW(nn::load_model(fs::path(c.output_dir) / "checkpoints" / "last", other), nn::ConfigError);
  EXPECT_THROW(nn::load_model(*root_ / "nowhere", c), gc::IoError);
}

TEST_F(HarnessTest, UntrainedModelScoresNearChance) {
  const nn::RunConfig c = config("x");
  nn::Predictor model = nn::make_model(c);
  const auto r = nn::evaluate_model(model, c, nn::open_dataset(c.data_dir), "train");
  ASSERT_TRUE(r.average("pveh.soft_iou"));
  EXPECT_LT(*r.average("pveh.soft_iou"), 0.1);
}

// Ablation -----------------------------------------------------------------------------

TEST(Ablation, RowsAreValidAndOrdered) {
  const auto rows = nn::ablation_rows();
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) EXPECT_NO_THROW(nn::validate(r.tasks)) << r.name;
  EXPECT_FALSE(rows[0].tasks.det_veh || rows[0].tasks.ogm);
  EXPECT_TRUE(rows[0].tasks.flow);
  EXPECT_TRUE(rows[1].tasks.ogm && !rows[1].tasks.flow);
  EXPECT_TRUE(rows[3].tasks.warped_veh && !rows[3].tasks.det_dyn);
  EXPECT_TRUE(rows[4].tasks.det_dyn && !rows[4].tasks.warped_veh && !rows[4].tasks.warped_dyn);
  EXPECT_EQ(rows[5].tasks, nn::TaskSwitches{});
}

TEST(Ablation, BestAndSecondBestFlags) {
  auto report = [](double epe, double iou) {
    gc::MetricReport r;
    r.horizon = 1;
    r.series["flow.epe"].horizon_average = epe;
    r.series["pveh.soft_iou"].horizon_average = iou;
    for (const auto& col : nn::ablation_columns()) r.series[col.metric];  // undefined by default
    r.series["flow.epe"].horizon_average = epe;
    r.series["pveh.soft_iou"].horizon_average = iou;
    return r;
  };
  const auto rows = nn::ablation_rows();
  std::vector<gc::MetricReport> reports = {report(0.9, 0.2), report(0.5, 0.4), report(0.7, 0.3),
                                           report(1.2, 0.1), report(0.6, 0.5), report(0.8, 0.6)};
  reports[1].series["flow.epe"].horizon_average.reset();  // that row has no flow head
  const auto t = nn::compare_rows(rows, reports);
  auto flag = [&](std::size_t row, const char* metric) { return t.json["rows"][row]["metrics"][metric]["flag"]; };
  EXPECT_EQ(flag(4, "flow.epe"), "best");    // 0.6
  EXPECT_EQ(flag(2, "flow.epe"), "second");  // 0.7
  EXPECT_TRUE(flag(1, "flow.epe").is_null());
  EXPECT_EQ(flag(5, "pveh.soft_iou"), "best");
  EXPECT_EQ(flag(4, "pveh.soft_iou"), "second");
  EXPECT_NE(t.markdown.find("**0.6000**"), std::string::npos);
  EXPECT_NE(t.markdown.find("_0.7000_"), std::string::npos);
  EXPECT_NE(t.markdown.find(" - |"), std::string::npos);
}

TEST_F(HarnessTest, AblationRunsSelectedRows) {
  nn::RunConfig c = config("ablation");
  c.optimizer.epochs = 1;
  const auto t = nn::run_ablation(c, {1, 6}, quiet());
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].name, "pred_flow");
  EXPECT_FALSE(t.reports[0].average("ogm.mse_dyn").has_value());
  EXPECT_TRUE(t.reports[1].average("ogm.mse_dyn").has_value());
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "ablation" / "ablation.md"));
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "ablation" / "pred_flow" / "eval_val" / "report.json"));
  EXPECT_THROW(nn::run_ablation(c, {7}, quiet()), nn::ConfigError);
}

// Report and warp tool -----------------------------------------------------------------

TEST(Report, FiguresAreWritten) {
  gc::MetricReport r;
  r.horizon = 2;
  for (const auto& n : gc::metric_series_names()) r.series[n].per_step = {0.5, std::nullopt};
  for (const auto& n : gc::metric_present_names()) r.present[n].horizon_average = 0.9;
  const fs::path dir = scratch("figures");
  const auto files = nn::write_figures(r, dir);
  EXPECT_EQ(files.size(), 5u);
  const std::string svg = slurp(dir / "recall_dynamic_ped.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_NE(svg.find("W^dyn"), std::string::npos);
  EXPECT_NE(slurp(dir / "curves.csv").find("wdyn.recall_dynamic_ped"), std::string::npos);
  fs::remove_all(dir);
}

TEST(WarpTool, MatchesTheLibraryWarp) {
  const fs::path dir = scratch("warp");
  const gc::GridGeometry g{8, 8, 1.0, {}};
  gc::Plane seed(8, 8, 0.0f);
  seed(3, 3) = 1.0f;
  seed(3, 4) = 0.5f;
  gc::write_container(dir / "seed", g, {"occupancy"}, 0.5, {{0.0, {}, {seed}}});
  std::vector<gc::ContainerFrame> flow_frames;
  std::vector<gc::SceneFlowGrid> flows;
  for (int k = 0; k < 3; ++k) {
    gc::SceneFlowGrid f(g);
    f.fx.fill(0.7f);
    f.fy.fill(-0.4f * static_cast<float>(k));
    flow_frames.push_back({0.5 * (k + 1), {}, {f.fx, f.fy}});
    flows.push_back(f);
  }
  gc::write_container(dir / "flows", g, {"fx", "fy"}, 0.5, flow_frames);
  const auto w = nn::run_warp(dir / "seed", dir / "flows", gc::Interp::kBilinear, dir / "out");
  const auto want = gc::warp_sequence(seed, flows, gc::Interp::kBilinear);
  ASSERT_EQ(w.grids.size(), 3u);
  const gc::ContainerManifest m = gc::read_manifest(dir / "out");
  ASSERT_EQ(m.frames.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(w.grids[k], want.grids[k]);
    EXPECT_EQ(gc::read_frame(dir / "out", m, k).channels[0], want.grids[k]);
  }
  EXPECT_THROW(nn::run_warp(dir / "flows", dir / "flows", gc::Interp::kBilinear, dir / "bad"), gc::IoError);
  fs::remove_all(dir);
}
