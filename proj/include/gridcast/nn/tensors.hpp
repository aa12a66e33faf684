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

#ifndef GRIDCAST_NN_TENSORS_HPP
#define GRIDCAST_NN_TENSORS_HPP

/// Conversion between grid samples and batched float tensors.

#include <torch/torch.h>

#include <vector>

#include "gridcast/grid.hpp"

namespace gridcast::nn {

/// Velocity input channels are divided by this (m/s) before entering the
/// network so every input channel is of order one.
inline constexpr float kVelocityInputScale = 5.0f;

/// One batch. Shapes use B samples, N+1 history frames, T future steps.
struct Batch {
  torch::Tensor history;     // [B, N+1, 6, H, W]
  torch::Tensor det_veh;     // [B, H, W]
  torch::Tensor det_dyn;     // [B, H, W]
  torch::Tensor fut_veh;     // [B, T, H, W]
  torch::Tensor fut_fx;      // [B, T, H, W]
  torch::Tensor fut_fy;      // [B, T, H, W]
  torch::Tensor fut_ogm;     // [B, T, 3, H, W] (unk, stat, dyn)

  [[nodiscard]] int64_t size() const { return history.size(0); }
  [[nodiscard]] int64_t horizon() const { return fut_veh.size(1); }
};

namespace detail {

inline torch::Tensor plane_tensor(const Plane& p) {
  return torch::from_blob(const_cast<float*>(p.data()), {p.height(), p.width()}, torch::kFloat).clone();
}

inline Plane tensor_plane(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat).contiguous();
  if (c.dim() != 2) throw GridError("tensor_plane: expected a 2-D tensor");
  Plane p(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
  std::copy_n(c.data_ptr<float>(), p.size(), p.data());
  return p;
}

}  // namespace detail

/// Tensors of a single sample (leading batch dimension 1).
inline Batch to_batch(const SequenceSample& s) {
  if (s.history.empty() || s.future.empty()) throw GridError("to_batch: empty sample");
  std::vector<torch::Tensor> frames;
  for (const FrameTensor& f : s.history) {
    std::vector<torch::Tensor> ch;
    for (int c = 0; c < kFrameChannels; ++c) {
      auto t = detail::plane_tensor(f.channels[c]);
      if (c == static_cast<int>(FrameChannel::kVelX) || c == static_cast<int>(FrameChannel::kVelY))
        t = t / kVelocityInputScale;
      ch.push_back(t);
    }
    frames.push_back(torch::stack(ch));
  }
  std::vector<torch::Tensor> veh, fx, fy, ogm;
  for (const FutureTarget& f : s.future) {
    veh.push_back(detail::plane_tensor(f.veh.prob));
    fx.push_back(detail::plane_tensor(f.flow.fx));
    fy.push_back(detail::plane_tensor(f.flow.fy));
    ogm.push_back(torch::stack(
        {detail::plane_tensor(f.ogm.unk), detail::plane_tensor(f.ogm.stat), detail::plane_tensor(f.ogm.dyn)}));
  }
  Batch b;
  b.history = torch::stack(frames).unsqueeze(0);
  b.det_veh = detail::plane_tensor(s.det_veh.prob).unsqueeze(0);
  b.det_dyn = detail::plane_tensor(s.det_dyn).unsqueeze(0);
  b.fut_veh = torch::stack(veh).unsqueeze(0);
  b.fut_fx = torch::stack(fx).unsqueeze(0);
  b.fut_fy = torch::stack(fy).unsqueeze(0);
  b.fut_ogm = torch::stack(ogm).unsqueeze(0);
  return b;
}

/// Concatenates single-sample batches along the batch dimension.
inline Batch collate(const std::vector<Batch>& items) {
  if (items.empty()) throw GridError("collate: empty batch");
  auto cat = [&](auto member) {
    std::vector<torch::Tensor> ts;
    for (const Batch& b : items) ts.push_back(b.*member);
    return torch::cat(ts, 0);
  };
  Batch out;
  out.history = cat(&Batch::history);
  out.det_veh = cat(&Batch::det_veh);
  out.det_dyn = cat(&Batch::det_dyn);
  out.fut_veh = cat(&Batch::fut_veh);
  out.fut_fx = cat(&Batch::fut_fx);
  out.fut_fy = cat(&Batch::fut_fy);
  out.fut_ogm = cat(&Batch::fut_ogm);
  return out;
}

}  // namespace gridcast::nn

#endif  // GRIDCAST_NN_TENSORS_HPP
