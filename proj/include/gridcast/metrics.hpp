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

#ifndef GRIDCAST_METRICS_HPP
#define GRIDCAST_METRICS_HPP

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcast/grid.hpp"
#include "gridcast/warp.hpp"

/// \file
/// Grid evaluation metrics. Every metric with an empty denominator returns
/// nullopt ("undefined") and is excluded from averages.

namespace gridcast {

inline constexpr double kBinaryThreshold = 0.5;

struct Overlap {
  std::optional<double> iou;
  std::optional<double> recall;
};

namespace detail {

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw GridError(std::string(what) + ": size mismatch");
}

inline void require_binary(std::span<const float> gt, const char* what) {
  for (float v : gt) {
    if (v != 0.0f && v != 1.0f) throw GridError(std::string(what) + ": ground truth must be binary");
  }
}

inline void require_probability(std::span<const float> p, const char* what) {
  for (float v : p) {
    if (!(v >= 0.0f && v <= 1.0f)) throw GridError(std::string(what) + ": prediction outside [0,1]");
  }
}

inline void require_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) throw GridError("threshold must lie in (0,1)");
}

inline Overlap overlap_from_sums(double inter, double sum_pred, double sum_gt) {
  Overlap o;
  if (sum_gt > 0.0) {
    o.recall = inter / sum_gt;
    o.iou = inter / (sum_pred + sum_gt - inter);
  }
  return o;
}

}  // namespace detail

/// Soft IoU and recall of probabilities `pred` against binary `gt`.
inline Overlap soft_overlap(std::span<const float> pred, std::span<const float> gt) {
  detail::require_same_size(pred.size(), gt.size(), "soft_overlap");
  detail::require_binary(gt, "soft_overlap");
  detail::require_probability(pred, "soft_overlap");
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += static_cast<double>(pred[i]) * gt[i];
    sp += pred[i];
    sg += gt[i];
  }
  return detail::overlap_from_sums(inter, sp, sg);
}

/// IoU and recall of `pred >= threshold` against binary `gt`.
inline Overlap binary_overlap(std::span<const float> pred, std::span<const float> gt,
                              double threshold = kBinaryThreshold) {
  detail::require_same_size(pred.size(), gt.size(), "binary_overlap");
  detail::require_binary(gt, "binary_overlap");
  detail::require_threshold(threshold);
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i] >= threshold ? 1.0 : 0.0;
    inter += p * gt[i];
    sp += p;
    sg += gt[i];
  }
  return detail::overlap_from_sums(inter, sp, sg);
}

/// Recall restricted to the cells of `gt_dynamic_mask`. Soft when
/// `threshold` is nullopt, binary otherwise.
inline std::optional<double> recall_dynamic(std::span<const float> pred, std::span<const float> gt_dynamic_mask,
                                            std::optional<double> threshold = kBinaryThreshold) {
  return threshold ? binary_overlap(pred, gt_dynamic_mask, *threshold).recall
                   : soft_overlap(pred, gt_dynamic_mask).recall;
}

/// Mean end-point error over masked cells.
inline std::optional<double> flow_epe(const SceneFlowGrid& pred, const SceneFlowGrid& gt,
                                      std::span<const float> gt_dynamic_mask) {
  require_same_geometry(pred.geometry, gt.geometry, "flow_epe");
  detail::require_same_size(pred.fx.size(), gt.fx.size(), "flow_epe");
  detail::require_same_size(gt.fx.size(), gt_dynamic_mask.size(), "flow_epe");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt_dynamic_mask.size(); ++i) {
    if (gt_dynamic_mask[i] <= 0.5f) continue;
    sum += std::hypot(static_cast<double>(pred.fx[i]) - gt.fx[i], static_cast<double>(pred.fy[i]) - gt.fy[i]);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline double mse(std::span<const float> pred, std::span<const float> gt) {
  detail::require_same_size(pred.size(), gt.size(), "mse");
  if (pred.empty()) throw GridError("mse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - gt[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

/// Names of the per-step series, in report order. Prefixes: pveh = P^veh,
/// wpveh = W^veh * P^veh, wveh = W^veh, odyn = O^dyn, wdyn = W^dyn.
inline const std::vector<std::string>& metric_series_names() {
  static const std::vector<std::string> names = {
      "pveh.soft_iou",          "pveh.soft_recall",       "pveh.soft_recall_dynamic",
      "pveh.iou",               "pveh.recall",            "pveh.recall_dynamic",
      "wpveh.iou",              "wpveh.recall",           "wpveh.recall_dynamic",
      "wveh.iou",               "wveh.recall",            "wveh.recall_dynamic",
      "flow.epe",               "ogm.mse_unk",            "ogm.mse_stat",
      "ogm.mse_dyn",            "odyn.recall_dynamic_veh", "odyn.recall_dynamic_ped",
      "odyn.recall_dynamic_cyc", "wdyn.recall_dynamic_veh", "wdyn.recall_dynamic_ped",
      "wdyn.recall_dynamic_cyc",
  };
  return names;
}

/// Metrics at the present time t (detection heads), the step-0 point of
/// the per-class recall curves.
inline const std::vector<std::string>& metric_present_names() {
  static const std::vector<std::string> names = {
      "det.veh_soft_iou", "det.veh_iou", "det.dyn_recall_dynamic_veh", "det.dyn_recall_dynamic_ped",
      "det.dyn_recall_dynamic_cyc",
  };
  return names;
}

/// Metrics of one sample; nullopt marks undefined values.
struct SampleMetrics {
  int horizon = 0;
  std::map<std::string, std::vector<std::optional<double>>> series;
  std::map<std::string, std::optional<double>> present;
};

/// Metrics of one prediction. `w_veh` and `w_dyn` may be null when the
/// corresponding warped grids are not produced; missing heads (empty
/// planes in the bundle) leave their metrics undefined.
inline SampleMetrics evaluate_bundle(const PredictionBundle& bundle, const WarpedSequence* w_veh,
                                     const WarpedSequence* w_dyn, const SequenceSample& sample) {
  const int T = static_cast<int>(sample.future.size());
  if (bundle.horizon() != T) throw GridError("evaluate_bundle: horizon mismatch");
  if (!bundle.ogm.empty() && static_cast<int>(bundle.ogm.size()) != T)
    throw GridError("evaluate_bundle: ogm horizon mismatch");
  if (w_veh && static_cast<int>(w_veh->grids.size()) != T) throw GridError("evaluate_bundle: W^veh horizon mismatch");
  if (w_dyn && static_cast<int>(w_dyn->grids.size()) != T) throw GridError("evaluate_bundle: W^dyn horizon mismatch");

  SampleMetrics m;
  m.horizon = T;
  for (const std::string& n : metric_series_names()) m.series[n].assign(T, std::nullopt);
  for (const std::string& n : metric_present_names()) m.present[n] = std::nullopt;

  static constexpr std::array<const char*, kAgentClasses> kClassSuffix = {"veh", "ped", "cyc"};
  const auto veh_idx = static_cast<std::size_t>(AgentClass::kVehicle);

  for (int k = 0; k < T; ++k) {
    const FutureTarget& gt = sample.future[k];
    const auto gt_veh = gt.veh.prob.values();
    const auto dyn_veh = gt.dynamic_by_class[veh_idx].values();
    auto set = [&](const std::string& n, std::optional<double> v) { m.series[n][k] = v; };

    const Plane& p = bundle.pred[k].veh;
    const Overlap ps = soft_overlap(p.values(), gt_veh);
    set("pveh.soft_iou", ps.iou);
    set("pveh.soft_recall", ps.recall);
    set("pveh.soft_recall_dynamic", recall_dynamic(p.values(), dyn_veh, std::nullopt));
    const Overlap pb = binary_overlap(p.values(), gt_veh);
    set("pveh.iou", pb.iou);
    set("pveh.recall", pb.recall);
    set("pveh.recall_dynamic", recall_dynamic(p.values(), dyn_veh));

    if (w_veh) {
      const Plane& w = w_veh->grids[k];
      Plane wp(w.height(), w.width());
      for (std::size_t i = 0; i < wp.size(); ++i) wp[i] = w[i] * p[i];
      const Overlap a = binary_overlap(wp.values(), gt_veh);
      set("wpveh.iou", a.iou);
      set("wpveh.recall", a.recall);
      set("wpveh.recall_dynamic", recall_dynamic(wp.values(), dyn_veh));
      const Overlap b = binary_overlap(w.values(), gt_veh);
      set("wveh.iou", b.iou);
      set("wveh.recall", b.recall);
      set("wveh.recall_dynamic", recall_dynamic(w.values(), dyn_veh));
    }

    if (bundle.pred[k].flow.fx.size() != 0) {
      Plane any_dyn(gt.veh.prob.height(), gt.veh.prob.width());
      for (const Plane& c : gt.dynamic_by_class) {
        for (std::size_t i = 0; i < any_dyn.size(); ++i) any_dyn[i] = std::max(any_dyn[i], c[i]);
      }
      set("flow.epe", flow_epe(bundle.pred[k].flow, gt.flow, any_dyn.values()));
    }

    if (!bundle.ogm.empty()) {
      const OccupancyStateGrid& o = bundle.ogm[k];
      set("ogm.mse_unk", mse(o.unk.values(), gt.ogm.unk.values()));
      set("ogm.mse_stat", mse(o.stat.values(), gt.ogm.stat.values()));
      set("ogm.mse_dyn", mse(o.dyn.values(), gt.ogm.dyn.values()));
      for (std::size_t c = 0; c < kAgentClasses; ++c) {
        set(std::string("odyn.recall_dynamic_") + kClassSuffix[c],
            recall_dynamic(o.dyn.values(), gt.dynamic_by_class[c].values()));
      }
    }
    if (w_dyn) {
      for (std::size_t c = 0; c < kAgentClasses; ++c) {
        set(std::string("wdyn.recall_dynamic_") + kClassSuffix[c],
            recall_dynamic(w_dyn->grids[k].values(), gt.dynamic_by_class[c].values()));
      }
    }
  }

  if (bundle.det_veh.size() != 0) {
    const auto gt = sample.det_veh.prob.values();
    m.present["det.veh_soft_iou"] = soft_overlap(bundle.det_veh.values(), gt).iou;
    m.present["det.veh_iou"] = binary_overlap(bundle.det_veh.values(), gt).iou;
  }
  if (bundle.det_dyn.size() != 0) {
    for (std::size_t c = 0; c < kAgentClasses; ++c) {
      m.present[std::string("det.dyn_recall_dynamic_") + kClassSuffix[c]] =
          recall_dynamic(bundle.det_dyn.values(), sample.det_dynamic_by_class[c].values());
    }
  }
  return m;
}

/// Mean of the defined values at each step and over the horizon.
struct MetricEntry {
  std::vector<std::optional<double>> per_step;
  std::vector<int> defined;  // samples contributing per step
  std::optional<double> horizon_average;
};

struct MetricReport {
  int horizon = 0;
  int samples = 0;
  std::map<std::string, MetricEntry> series;
  std::map<std::string, MetricEntry> present;  // single-step entries

  [[nodiscard]] std::optional<double> average(const std::string& name) const {
    auto it = series.find(name);
    if (it != series.end()) return it->second.horizon_average;
    auto jt = present.find(name);
    if (jt != present.end()) return jt->second.horizon_average;
    throw GridError("unknown metric: " + name);
  }
  [[nodiscard]] std::optional<double> at_step(const std::string& name, int step) const {
    const MetricEntry& e = series.at(name);
    if (step < 1 || step > static_cast<int>(e.per_step.size())) throw GridError("metric step out of range");
    return e.per_step[static_cast<std::size_t>(step - 1)];
  }
};

/// Averages SampleMetrics over samples. Undefined values are skipped, the
/// number of contributing samples is kept per step.
class MetricAccumulator {
 public:
  void add(const SampleMetrics& m) {
    if (samples_ == 0) horizon_ = m.horizon;
    if (m.horizon != horizon_) throw GridError("MetricAccumulator: horizon mismatch");
    ++samples_;
    for (const auto& [name, steps] : m.series) {
      Sum& s = series_[name];
      s.resize(steps.size());
      for (std::size_t k = 0; k < steps.size(); ++k) s.add(k, steps[k]);
    }
    for (const auto& [name, v] : m.present) {
      Sum& s = present_[name];
      s.resize(1);
      s.add(0, v);
    }
  }

  [[nodiscard]] MetricReport report() const {
    MetricReport r;
    r.horizon = horizon_;
    r.samples = samples_;
    for (const auto& [name, s] : series_) r.series[name] = s.entry();
    for (const auto& [name, s] : present_) r.present[name] = s.entry();
    return r;
  }

 private:
  struct Sum {
    std::vector<double> total;
    std::vector<int> count;
    void resize(std::size_t n) {
      if (total.size() < n) {
        total.resize(n, 0.0);
        count.resize(n, 0);
      }
    }
    void add(std::size_t k, std::optional<double> v) {
      if (!v) return;
      total[k] += *v;
      ++count[k];
    }
    [[nodiscard]] MetricEntry entry() const {
      MetricEntry e;
      e.defined = count;
      double avg = 0.0;
      int steps = 0;
      for (std::size_t k = 0; k < total.size(); ++k) {
        if (count[k] == 0) {
          e.per_step.push_back(std::nullopt);
          continue;
        }
        const double v = total[k] / count[k];
        e.per_step.push_back(v);
        avg += v;
        ++steps;
      }
      if (steps > 0) e.horizon_average = avg / steps;
      return e;
    }
  };

  int horizon_ = 0;
  int samples_ = 0;
  std::map<std::string, Sum> series_;
  std::map<std::string, Sum> present_;
};

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const MetricReport& r) {
  auto entry = [](const MetricEntry& e) {
    nlohmann::json j;
    j["average"] = optional_json(e.horizon_average);
    j["per_step"] = nlohmann::json::array();
    for (const auto& v : e.per_step) j["per_step"].push_back(optional_json(v));
    j["defined_samples"] = e.defined;
    return j;
  };
  nlohmann::json j;
  j["horizon"] = r.horizon;
  j["samples"] = r.samples;
  j["binary_threshold"] = kBinaryThreshold;
  j["undefined_policy"] = "metrics with an empty ground-truth denominator are excluded from averages";
  for (const auto& [n, e] : r.series) j["series"][n] = entry(e);
  for (const auto& [n, e] : r.present) j["present"][n] = entry(e);
  return j;
}

/// Inverse of to_json(MetricReport).
inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  auto entry = [&](const nlohmann::json& e) {
    MetricEntry m;
    m.horizon_average = opt(e.at("average"));
    for (const auto& v : e.at("per_step")) m.per_step.push_back(opt(v));
    m.defined = e.at("defined_samples").get<std::vector<int>>();
    return m;
  };
  MetricReport r;
  try {
    r.horizon = j.at("horizon").get<int>();
    r.samples = j.at("samples").get<int>();
    if (j.contains("series")) {
      for (const auto& [n, e] : j.at("series").items()) r.series[n] = entry(e);
    }
    if (j.contains("present")) {
      for (const auto& [n, e] : j.at("present").items()) r.present[n] = entry(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw GridError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

inline std::string format_metric(const std::optional<double>& v, int precision = 4) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
  return buf;
}

/// Fixed-width table: one row per metric, horizon average then per step.
inline std::string render_table(const MetricReport& r) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-28s %9s", "metric", "avg");
  os << buf;
  for (int k = 1; k <= r.horizon; ++k) {
    std::snprintf(buf, sizeof buf, " %8s", ("t+" + std::to_string(k)).c_str());
    os << buf;
  }
  os << "\n";
  auto row = [&](const std::string& name, const MetricEntry& e) {
    std::snprintf(buf, sizeof buf, "%-28s %9s", name.c_str(), format_metric(e.horizon_average).c_str());
    os << buf;
    for (const auto& v : e.per_step) {
      std::snprintf(buf, sizeof buf, " %8s", format_metric(v).c_str());
      os << buf;
    }
    os << "\n";
  };
  for (const std::string& n : metric_present_names()) {
    if (auto it = r.present.find(n); it != r.present.end()) row(n, it->second);
  }
  for (const std::string& n : metric_series_names()) {
    if (auto it = r.series.find(n); it != r.series.end()) row(n, it->second);
  }
  os << "samples: " << r.samples << ", binary threshold " << kBinaryThreshold
     << ", undefined values excluded from averages\n";
  return os.str();
}

/// CSV of per-step curves; step 0 carries the matching detection value
/// when one exists (W^dyn curves start from D^dyn).
inline std::string curves_csv(const MetricReport& r, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "step";
  for (const std::string& n : names) os << "," << n;
  os << "\n";
  auto step0 = [&](const std::string& n) -> std::optional<double> {
    static const std::string prefix = "wdyn.recall_dynamic_";
    if (n.rfind(prefix, 0) == 0) {
      auto it = r.present.find("det.dyn_recall_dynamic_" + n.substr(prefix.size()));
      if (it != r.present.end()) return it->second.horizon_average;
    }
    return std::nullopt;
  };
  for (int k = 0; k <= r.horizon; ++k) {
    os << k;
    for (const std::string& n : names) {
      std::optional<double> v;
      if (k == 0) {
        v = step0(n);
      } else if (auto it = r.series.find(n); it != r.series.end()) {
        v = it->second.per_step[static_cast<std::size_t>(k - 1)];
      }
      os << "," << (v ? format_metric(v, 6) : std::string());
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace gridcast

#endif  // GRIDCAST_METRICS_HPP
