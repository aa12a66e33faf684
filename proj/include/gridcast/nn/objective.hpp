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

#ifndef GRIDCAST_NN_OBJECTIVE_HPP
#define GRIDCAST_NN_OBJECTIVE_HPP

/// Task switches and the composite training objective on a forward pass.

#include <string>

#include "gridcast/losses.hpp"
#include "gridcast/nn/predictor.hpp"

namespace gridcast::nn {

/// Decoder outputs and warped-grid losses. The vehicle prediction head
/// P^veh is always trained.
struct TaskSwitches {
  bool det_veh = true;
  bool det_dyn = true;
  bool flow = true;
  bool ogm = true;
  bool warped_veh = true;
  bool warped_dyn = true;

  [[nodiscard]] HeadSwitches heads() const { return {det_veh || det_dyn, flow, ogm}; }
  friend bool operator==(const TaskSwitches&, const TaskSwitches&) = default;
};

inline void validate(const TaskSwitches& s) {
  if (s.warped_veh && !(s.det_veh && s.flow))
    throw GridError("task switches: warped_veh needs det_veh (the warp seed) and flow (the warp motion)");
  if (s.warped_dyn && !(s.det_dyn && s.flow && s.ogm))
    throw GridError(
        "task switches: warped_dyn needs det_dyn (the warp seed), flow (the warp motion) and ogm (the O^dyn "
        "weighting)");
}

inline void to_json(nlohmann::json& j, const TaskSwitches& v) {
  GRIDCAST_JSON_PUT(det_veh);
  GRIDCAST_JSON_PUT(det_dyn);
  GRIDCAST_JSON_PUT(flow);
  GRIDCAST_JSON_PUT(ogm);
  GRIDCAST_JSON_PUT(warped_veh);
  GRIDCAST_JSON_PUT(warped_dyn);
}
inline void from_json(const nlohmann::json& j, TaskSwitches& v) {
  GRIDCAST_JSON_FIELD(det_veh);
  GRIDCAST_JSON_FIELD(det_dyn);
  GRIDCAST_JSON_FIELD(flow);
  GRIDCAST_JSON_FIELD(ogm);
  GRIDCAST_JSON_FIELD(warped_veh);
  GRIDCAST_JSON_FIELD(warped_dyn);
}

/// Forward options implied by the switches. Warps run whenever their seed
/// and flow exist so they can be evaluated, even without their loss.
inline ForwardOptions forward_options(const TaskSwitches& s, LatentMode mode) {
  ForwardOptions o;
  o.mode = mode;
  o.heads = s.heads();
  o.warp_veh = s.det_veh && s.flow;
  o.warp_dyn = s.det_dyn && s.flow;
  return o;
}

struct Objective {
  torch::Tensor total;  // differentiable scalar
  LossReport report;
};

/// Builds every enabled loss term of `out` against `batch` and the weighted
/// total. The KL term is present whenever the future distribution was
/// computed.
inline Objective objective(const ForwardOutput& out, const Batch& batch, const TaskSwitches& s,
                           const LossWeights& w) {
  validate(s);
  validate(w);
  LossTerms terms;
  std::vector<std::pair<double, torch::Tensor>> parts;
  auto add = [&](std::optional<double>& slot, double weight, const torch::Tensor& v) {
    slot = v.item<double>();
    parts.emplace_back(weight, v);
  };
  if (s.det_veh) add(terms.det_veh, w.det, nn::bce_loss(out.det.select(1, 0), batch.det_veh));
  if (s.det_dyn) add(terms.det_dyn, w.det, nn::bce_loss(out.det.select(1, 1), batch.det_dyn));
  add(terms.veh, w.veh, nn::bce_loss(out.pred_veh, batch.fut_veh));
  if (s.flow) {
    add(terms.flow, w.flow,
        nn::flow_loss(out.pred_fx, out.pred_fy, batch.fut_fx, batch.fut_fy, batch.fut_ogm.select(2, 1)));
  }
  if (s.ogm) {
    add(terms.unk, w.unk, nn::mse_loss(out.ogm.select(2, 0), batch.fut_ogm.select(2, 0)));
    add(terms.stat, w.stat, nn::mse_loss(out.ogm.select(2, 1), batch.fut_ogm.select(2, 1)));
    add(terms.dyn, w.dyn, nn::mse_loss(out.ogm.select(2, 2), batch.fut_ogm.select(2, 2)));
  }
  if (s.warped_veh) add(terms.w_veh, w.w_veh, nn::warped_loss(out.w_veh, out.pred_veh, batch.fut_veh));
  if (s.warped_dyn) {
    add(terms.w_dyn, w.w_dyn, nn::warped_loss(out.w_dyn, out.ogm.select(2, 2), batch.fut_ogm.select(2, 2)));
  }
  if (out.future) {
    add(terms.kl, w.kl, nn::kl_loss(out.future->mean, out.future->logvar, out.present.mean, out.present.logvar));
  }
  Objective o;
  o.report = total_loss(terms, w);
  o.total = torch::zeros({}, out.pred_veh.options());
  for (const auto& [weight, v] : parts) o.total = o.total + weight * v;
  return o;
}

}  // namespace gridcast::nn

#endif  // GRIDCAST_NN_OBJECTIVE_HPP
