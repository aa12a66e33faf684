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

#ifndef GRIDCAST_LOSSES_HPP
#define GRIDCAST_LOSSES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcast/grid.hpp"
#include "gridcast/json_util.hpp"
#include "gridcast/warp.hpp"

/// \file
/// Composite multi-head loss. The span kernels compute a scalar loss and,
/// when a gradient span is non-empty, write d(loss)/d(input) into it
/// (overwriting). They are templated on the scalar type so the same code is
/// used for float training and double-precision gradient checks.

namespace gridcast {

/// Probabilities are clipped to [eps, 1 - eps] before any logarithm.
inline constexpr double kProbabilityEps = 1e-6;

namespace loss_kernel {

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw GridError(std::string(what) + ": shape mismatch");
}

/// Binary cross-entropy of an (already computed) probability q against y;
/// also returns dH/dq, which is zero where q was clipped.
template <typename S>
inline S bce_term(S q, S y, S eps, S* dq) {
  const S lo = static_cast<S>(eps);
  const S hi = S(1) - static_cast<S>(eps);
  const bool clipped = q < lo || q > hi;
  const S p = std::clamp(q, lo, hi);
  if (dq) *dq = clipped ? S(0) : (-y / p + (S(1) - y) / (S(1) - p));
  return -(y * std::log(p) + (S(1) - y) * std::log(S(1) - p));
}

/// Mean binary cross-entropy over all cells.
template <typename S>
S bce(std::span<const S> pred, std::span<const S> target, std::span<S> grad, double eps = kProbabilityEps) {
  require_same_size(pred.size(), target.size(), "classification_loss");
  if (pred.empty()) return S(0);
  const S inv_n = S(1) / static_cast<S>(pred.size());
  S sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    S d = 0;
    sum += bce_term<S>(pred[i], target[i], static_cast<S>(eps), grad.empty() ? nullptr : &d);
    if (!grad.empty()) grad[i] = d * inv_n;
  }
  return sum * inv_n;
}

/// Masked L1 flow loss. The mask keeps cells where the target flow is
/// non-zero or the target static probability exceeds 0.5. The sum is
/// divided by the total cell count (h*w*T), or by the mask size when
/// `normalize_by_mask` is set.
template <typename S>
S flow_l1(std::span<const S> pred_fx, std::span<const S> pred_fy, std::span<const S> gt_fx,
          std::span<const S> gt_fy, std::span<const S> gt_static, std::span<S> grad_fx, std::span<S> grad_fy,
          bool normalize_by_mask = false) {
  const std::size_t n = pred_fx.size();
  require_same_size(n, pred_fy.size(), "flow_loss");
  require_same_size(n, gt_fx.size(), "flow_loss");
  require_same_size(n, gt_fy.size(), "flow_loss");
  require_same_size(n, gt_static.size(), "flow_loss");
  std::size_t masked = 0;
  S sum = 0;
  auto sgn = [](S v) { return v > 0 ? S(1) : (v < 0 ? S(-1) : S(0)); };
  for (std::size_t i = 0; i < n; ++i) {
    const bool keep = gt_fx[i] != S(0) || gt_fy[i] != S(0) || gt_static[i] > S(0.5);
    if (!grad_fx.empty()) grad_fx[i] = 0;
    if (!grad_fy.empty()) grad_fy[i] = 0;
    if (!keep) continue;
    ++masked;
    const S dx = pred_fx[i] - gt_fx[i];
    const S dy = pred_fy[i] - gt_fy[i];
    sum += std::abs(dx) + std::abs(dy);
    if (!grad_fx.empty()) grad_fx[i] = sgn(dx);
    if (!grad_fy.empty()) grad_fy[i] = sgn(dy);
  }
  const std::size_t denom = normalize_by_mask ? masked : n;
  if (denom == 0) return S(0);
  const S inv = S(1) / static_cast<S>(denom);
  for (S& g : grad_fx) g *= inv;
  for (S& g : grad_fy) g *= inv;
  return sum * inv;
}

/// Mean squared error.
template <typename S>
S mse(std::span<const S> pred, std::span<const S> target, std::span<S> grad) {
  require_same_size(pred.size(), target.size(), "ogm_loss");
  if (pred.empty()) return S(0);
  const S inv_n = S(1) / static_cast<S>(pred.size());
  S sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const S d = pred[i] - target[i];
    sum += d * d;
    if (!grad.empty()) grad[i] = S(2) * d * inv_n;
  }
  return sum * inv_n;
}

/// Flow-traced loss: mean BCE of (warped * weighting) against target.
template <typename S>
S warped_bce(std::span<const S> warped, std::span<const S> weighting, std::span<const S> target,
             std::span<S> grad_warped, std::span<S> grad_weighting, double eps = kProbabilityEps) {
  require_same_size(warped.size(), weighting.size(), "warped_loss");
  require_same_size(warped.size(), target.size(), "warped_loss");
  if (warped.empty()) return S(0);
  const S inv_n = S(1) / static_cast<S>(warped.size());
  S sum = 0;
  for (std::size_t i = 0; i < warped.size(); ++i) {
    S dq = 0;
    sum += bce_term<S>(warped[i] * weighting[i], target[i], static_cast<S>(eps), &dq);
    if (!grad_warped.empty()) grad_warped[i] = dq * weighting[i] * inv_n;
    if (!grad_weighting.empty()) grad_weighting[i] = dq * warped[i] * inv_n;
  }
  return sum * inv_n;
}

/// KL(q || p) of diagonal Gaussians given as (mean, log-variance), summed
/// over `dim` and averaged over the batch (size / dim rows).
template <typename S>
S kl_diag(std::span<const S> mu_q, std::span<const S> logvar_q, std::span<const S> mu_p,
          std::span<const S> logvar_p, std::size_t dim, std::span<S> g_mu_q, std::span<S> g_logvar_q,
          std::span<S> g_mu_p, std::span<S> g_logvar_p) {
  const std::size_t n = mu_q.size();
  require_same_size(n, logvar_q.size(), "kl_loss");
  require_same_size(n, mu_p.size(), "kl_loss");
  require_same_size(n, logvar_p.size(), "kl_loss");
  if (dim == 0 || n % dim != 0) throw GridError("kl_loss: dimension mismatch");
  if (n == 0) return S(0);
  const S inv_b = S(1) / static_cast<S>(n / dim);
  S sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const S var_ratio = std::exp(logvar_q[i] - logvar_p[i]);
    const S d = mu_q[i] - mu_p[i];
    const S inv_var_p = std::exp(-logvar_p[i]);
    sum += S(0.5) * (var_ratio + d * d * inv_var_p - S(1) + logvar_p[i] - logvar_q[i]);
    if (!g_mu_q.empty()) g_mu_q[i] = d * inv_var_p * inv_b;
    if (!g_mu_p.empty()) g_mu_p[i] = -d * inv_var_p * inv_b;
    if (!g_logvar_q.empty()) g_logvar_q[i] = S(0.5) * (var_ratio - S(1)) * inv_b;
    if (!g_logvar_p.empty()) g_logvar_p[i] = S(0.5) * (-var_ratio - d * d * inv_var_p + S(1)) * inv_b;
  }
  return sum * inv_b;
}

}  // namespace loss_kernel

// Grid-level API ---------------------------------------------------------------

namespace detail {

inline std::vector<float> concat_planes(const std::vector<const Plane*>& planes) {
  std::vector<float> out;
  for (const Plane* p : planes) out.insert(out.end(), p->values().begin(), p->values().end());
  return out;
}

template <typename T, typename F>
std::vector<const Plane*> planes_of(const std::vector<T>& items, F&& member) {
  std::vector<const Plane*> out;
  for (const T& it : items) out.push_back(&member(it));
  return out;
}

inline void require_matching(const std::vector<const Plane*>& a, const std::vector<const Plane*>& b,
                             const char* what) {
  if (a.size() != b.size()) throw GridError(std::string(what) + ": sequence length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i]->same_shape(*b[i])) throw GridError(std::string(what) + ": shape mismatch");
  }
}

}  // namespace detail

/// Mean BCE over all cells and steps (detection and vehicle prediction).
inline double classification_loss(const std::vector<Plane>& pred, const std::vector<Plane>& target) {
  auto pp = detail::planes_of(pred, [](const Plane& p) -> const Plane& { return p; });
  auto tp = detail::planes_of(target, [](const Plane& p) -> const Plane& { return p; });
  detail::require_matching(pp, tp, "classification_loss");
  const auto a = detail::concat_planes(pp);
  const auto b = detail::concat_planes(tp);
  std::vector<double> ad(a.begin(), a.end()), bd(b.begin(), b.end());
  return loss_kernel::bce<double>(ad, bd, {});
}

inline double classification_loss(const Plane& pred, const Plane& target) {
  return classification_loss(std::vector<Plane>{pred}, std::vector<Plane>{target});
}

inline double flow_loss(const std::vector<SceneFlowGrid>& pred, const std::vector<SceneFlowGrid>& gt,
                        const std::vector<Plane>& gt_static, bool normalize_by_mask = false) {
  auto px = detail::planes_of(pred, [](const SceneFlowGrid& f) -> const Plane& { return f.fx; });
  auto py = detail::planes_of(pred, [](const SceneFlowGrid& f) -> const Plane& { return f.fy; });
  auto gx = detail::planes_of(gt, [](const SceneFlowGrid& f) -> const Plane& { return f.fx; });
  auto gy = detail::planes_of(gt, [](const SceneFlowGrid& f) -> const Plane& { return f.fy; });
  auto gs = detail::planes_of(gt_static, [](const Plane& p) -> const Plane& { return p; });
  detail::require_matching(px, gx, "flow_loss");
  detail::require_matching(px, gs, "flow_loss");
  auto to_d = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
  const auto a = to_d(detail::concat_planes(px)), b = to_d(detail::concat_planes(py));
  const auto c = to_d(detail::concat_planes(gx)), d = to_d(detail::concat_planes(gy));
  const auto e = to_d(detail::concat_planes(gs));
  return loss_kernel::flow_l1<double>(a, b, c, d, e, {}, {}, normalize_by_mask);
}

/// Per-channel occupancy-state MSE.
struct OgmLoss {
  double unk = 0.0;
  double stat = 0.0;
  double dyn = 0.0;
};

inline OgmLoss ogm_loss(const std::vector<OccupancyStateGrid>& pred, const std::vector<OccupancyStateGrid>& target) {
  auto channel = [&](Plane OccupancyStateGrid::*m) {
    auto pp = detail::planes_of(pred, [m](const OccupancyStateGrid& o) -> const Plane& { return o.*m; });
    auto tp = detail::planes_of(target, [m](const OccupancyStateGrid& o) -> const Plane& { return o.*m; });
    detail::require_matching(pp, tp, "ogm_loss");
    const auto a = detail::concat_planes(pp), b = detail::concat_planes(tp);
    std::vector<double> ad(a.begin(), a.end()), bd(b.begin(), b.end());
    return loss_kernel::mse<double>(ad, bd, {});
  };
  return {channel(&OccupancyStateGrid::unk), channel(&OccupancyStateGrid::stat), channel(&OccupancyStateGrid::dyn)};
}

inline double warped_loss(const WarpedSequence& warped, const std::vector<Plane>& weighting,
                          const std::vector<Plane>& target) {
  auto wp = detail::planes_of(warped.grids, [](const Plane& p) -> const Plane& { return p; });
  auto gp = detail::planes_of(weighting, [](const Plane& p) -> const Plane& { return p; });
  auto tp = detail::planes_of(target, [](const Plane& p) -> const Plane& { return p; });
  detail::require_matching(wp, gp, "warped_loss");
  detail::require_matching(wp, tp, "warped_loss");
  auto to_d = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
  const auto a = to_d(detail::concat_planes(wp)), b = to_d(detail::concat_planes(gp));
  const auto c = to_d(detail::concat_planes(tp));
  return loss_kernel::warped_bce<double>(a, b, c, {}, {});
}

inline constexpr int kLatentDim = 32;
inline constexpr double kLogVarianceLimit = 10.0;

/// Diagonal Gaussian over the latent space.
struct LatentDistribution {
  std::vector<double> mean;
  std::vector<double> log_variance;

  [[nodiscard]] std::size_t dim() const { return mean.size(); }
};

inline double kl_loss(const LatentDistribution& q, const LatentDistribution& p) {
  if (q.mean.size() != p.mean.size() || q.log_variance.size() != q.mean.size() ||
      p.log_variance.size() != p.mean.size()) {
    throw GridError("kl_loss: dimension mismatch");
  }
  if (q.mean.empty()) throw GridError("kl_loss: empty distribution");
  return loss_kernel::kl_diag<double>(q.mean, q.log_variance, p.mean, p.log_variance, q.mean.size(), {}, {}, {},
                                      {});
}

// Weighted total ---------------------------------------------------------------

struct LossWeights {
  double det = 0.25;
  double veh = 1.0;
  double flow = 10.0;
  double unk = 1.0;
  double stat = 1.0;
  double dyn = 6.0;
  double w_veh = 0.1;
  double w_dyn = 0.01;
  double kl = 0.005;

  /// Coefficients for sparse, lightly occluded scenes (flow weight 10).
  static LossWeights standard() { return {}; }
  /// Coefficients for occlusion-heavy data (flow weight 50).
  static LossWeights occlusion_heavy() {
    LossWeights w;
    w.flow = 50.0;
    return w;
  }

  [[nodiscard]] std::array<double, 9> as_array() const { return {det, veh, flow, unk, stat, dyn, w_veh, w_dyn, kl}; }
};

inline void to_json(nlohmann::json& j, const LossWeights& v) {
  GRIDCAST_JSON_PUT(det);
  GRIDCAST_JSON_PUT(veh);
  GRIDCAST_JSON_PUT(flow);
  GRIDCAST_JSON_PUT(unk);
  GRIDCAST_JSON_PUT(stat);
  GRIDCAST_JSON_PUT(dyn);
  GRIDCAST_JSON_PUT(w_veh);
  GRIDCAST_JSON_PUT(w_dyn);
  GRIDCAST_JSON_PUT(kl);
}
inline void from_json(const nlohmann::json& j, LossWeights& v) {
  GRIDCAST_JSON_FIELD(det);
  GRIDCAST_JSON_FIELD(veh);
  GRIDCAST_JSON_FIELD(flow);
  GRIDCAST_JSON_FIELD(unk);
  GRIDCAST_JSON_FIELD(stat);
  GRIDCAST_JSON_FIELD(dyn);
  GRIDCAST_JSON_FIELD(w_veh);
  GRIDCAST_JSON_FIELD(w_dyn);
  GRIDCAST_JSON_FIELD(kl);
}

inline void validate(const LossWeights& w) {
  for (double v : w.as_array()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw GridError("loss weights must be finite and non-negative");
  }
}

/// Raw (unweighted) term values; disabled terms are empty.
struct LossTerms {
  std::optional<double> det_veh;
  std::optional<double> det_dyn;
  std::optional<double> veh;
  std::optional<double> flow;
  std::optional<double> unk;
  std::optional<double> stat;
  std::optional<double> dyn;
  std::optional<double> w_veh;
  std::optional<double> w_dyn;
  std::optional<double> kl;
};

inline constexpr std::array<const char*, 9> kLossTermNames = {"det", "veh",   "flow",  "unk", "stat",
                                                               "dyn", "w_veh", "w_dyn", "kl"};

/// Per-term values (det is the sum of both detection BCEs) and the weighted
/// total.
struct LossReport {
  std::array<double, 9> terms{};
  std::array<bool, 9> enabled{};
  double total = 0.0;

  [[nodiscard]] double term(const std::string& name) const {
    for (std::size_t i = 0; i < kLossTermNames.size(); ++i) {
      if (name == kLossTermNames[i]) return terms[i];
    }
    throw GridError("unknown loss term: " + name);
  }
  [[nodiscard]] std::vector<std::string> enabled_terms() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < kLossTermNames.size(); ++i) {
      if (enabled[i]) out.emplace_back(kLossTermNames[i]);
    }
    return out;
  }
  /// One key=value record, e.g. "det=1.2 veh=0.3 ... total=4.5".
  [[nodiscard]] std::string to_text() const {
    std::ostringstream os;
    os.precision(9);
    for (std::size_t i = 0; i < kLossTermNames.size(); ++i) {
      if (enabled[i]) os << kLossTermNames[i] << '=' << terms[i] << ' ';
    }
    os << "total=" << total;
    return os.str();
  }
};

inline LossReport total_loss(const LossTerms& t, const LossWeights& w) {
  validate(w);
  LossReport r;
  const std::array<std::optional<double>, 9> values = {
      (t.det_veh || t.det_dyn) ? std::optional<double>(t.det_veh.value_or(0.0) + t.det_dyn.value_or(0.0))
                               : std::nullopt,
      t.veh, t.flow, t.unk, t.stat, t.dyn, t.w_veh, t.w_dyn, t.kl};
  const auto weights = w.as_array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i]) continue;
    r.enabled[i] = true;
    r.terms[i] = *values[i];
    r.total += weights[i] * *values[i];
  }
  return r;
}

}  // namespace gridcast

#endif  // GRIDCAST_LOSSES_HPP
