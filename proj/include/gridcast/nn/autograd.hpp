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

#ifndef GRIDCAST_NN_AUTOGRAD_HPP
#define GRIDCAST_NN_AUTOGRAD_HPP

/// Torch autograd wrappers around the plain C++ warp and loss kernels, so
/// the gradient-checked kernels are the ones used in training. Every
/// wrapper accepts float32 or float64 CPU tensors.

#include <torch/torch.h>

#include <span>

#include "gridcast/losses.hpp"
#include "gridcast/warp.hpp"

namespace gridcast::nn {

namespace detail {

template <typename S>
std::span<const S> cspan(const torch::Tensor& t) {
  return {t.data_ptr<S>(), static_cast<std::size_t>(t.numel())};
}
template <typename S>
std::span<S> mspan(torch::Tensor& t) {
  return {t.data_ptr<S>(), static_cast<std::size_t>(t.numel())};
}

inline torch::Tensor prepared(const torch::Tensor& t, const char* what) {
  if (!t.device().is_cpu()) throw GridError(std::string(what) + ": CPU tensor required");
  if (t.scalar_type() != torch::kFloat && t.scalar_type() != torch::kDouble)
    throw GridError(std::string(what) + ": float or double tensor required");
  return t.contiguous();
}

inline void require_same_sizes(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw GridError(std::string(what) + ": tensor shape mismatch");
  if (a.scalar_type() != b.scalar_type()) throw GridError(std::string(what) + ": tensor dtype mismatch");
}

template <typename F>
void dispatch(torch::ScalarType t, F&& f) {
  if (t == torch::kDouble) {
    f(double{});
  } else {
    f(float{});
  }
}

}  // namespace detail

/// Backward-flow bilinear warp of a stack of planes [..., H, W].
struct WarpFunction : torch::autograd::Function<WarpFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& prev_in,
                               const torch::Tensor& fx_in, const torch::Tensor& fy_in) {
    auto prev = detail::prepared(prev_in, "warp");
    auto fx = detail::prepared(fx_in, "warp");
    auto fy = detail::prepared(fy_in, "warp");
    detail::require_same_sizes(prev, fx, "warp");
    detail::require_same_sizes(prev, fy, "warp");
    if (prev.dim() < 2) throw GridError("warp: expected [..., H, W]");
    const PlaneShape sh{static_cast<int>(prev.size(-2)), static_cast<int>(prev.size(-1))};
    const std::size_t cells = sh.cells();
    auto out = torch::empty_like(prev);
    const std::size_t planes = cells == 0 ? 0 : static_cast<std::size_t>(prev.numel()) / cells;
    detail::dispatch(prev.scalar_type(), [&](auto tag) {
      using S = decltype(tag);
      const auto p = detail::cspan<S>(prev), x = detail::cspan<S>(fx), y = detail::cspan<S>(fy);
      const auto o = detail::mspan<S>(out);
      for (std::size_t k = 0; k < planes; ++k) {
        warp_kernel::forward<S>(p.subspan(k * cells, cells), x.subspan(k * cells, cells),
                                y.subspan(k * cells, cells), o.subspan(k * cells, cells), sh, Interp::kBilinear);
      }
    });
    ctx->save_for_backward({prev, fx, fy});
    return out;
  }

  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    const auto saved = ctx->get_saved_variables();
    const auto& prev = saved[0];
    const auto& fx = saved[1];
    const auto& fy = saved[2];
    auto go = grads[0].contiguous().to(prev.scalar_type());
    const PlaneShape sh{static_cast<int>(prev.size(-2)), static_cast<int>(prev.size(-1))};
    const std::size_t cells = sh.cells();
    auto gp = torch::zeros_like(prev), gx = torch::zeros_like(fx), gy = torch::zeros_like(fy);
    const std::size_t planes = cells == 0 ? 0 : static_cast<std::size_t>(prev.numel()) / cells;
    detail::dispatch(prev.scalar_type(), [&](auto tag) {
      using S = decltype(tag);
      const auto p = detail::cspan<S>(prev), x = detail::cspan<S>(fx), y = detail::cspan<S>(fy);
      const auto g = detail::cspan<S>(go);
      const auto a = detail::mspan<S>(gp), b = detail::mspan<S>(gx), c = detail::mspan<S>(gy);
      for (std::size_t k = 0; k < planes; ++k) {
        const std::size_t o = k * cells;
        warp_kernel::backward<S>(p.subspan(o, cells), x.subspan(o, cells), y.subspan(o, cells),
                                 g.subspan(o, cells), a.subspan(o, cells), b.subspan(o, cells),
                                 c.subspan(o, cells), sh);
      }
    });
    return {gp, gx, gy};
  }
};

inline torch::Tensor warp(const torch::Tensor& prev, const torch::Tensor& fx, const torch::Tensor& fy) {
  return WarpFunction::apply(prev, fx, fy);
}

/// Recursive warp: grids[τ] = warp(grids[τ-1], flow[τ]); flows are [B, T, H, W].
inline torch::Tensor warp_sequence(const torch::Tensor& seed, const torch::Tensor& fx, const torch::Tensor& fy) {
  if (fx.dim() != 4 || fx.size(1) < 1) throw GridError("warp_sequence: flows must be [B, T, H, W] with T >= 1");
  std::vector<torch::Tensor> out;
  torch::Tensor cur = seed;
  for (int64_t k = 0; k < fx.size(1); ++k) {
    cur = warp(cur, fx.select(1, k), fy.select(1, k));
    out.push_back(cur);
  }
  return torch::stack(out, 1);
}

/// Mean binary cross-entropy with probability clipping.
struct BceFunction : torch::autograd::Function<BceFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& pred_in,
                               const torch::Tensor& target_in) {
    auto pred = detail::prepared(pred_in, "bce");
    auto target = detail::prepared(target_in, "bce").to(pred.scalar_type());
    detail::require_same_sizes(pred, target, "bce");
    auto grad = torch::empty_like(pred);
    double value = 0;
    detail::dispatch(pred.scalar_type(), [&](auto tag) {
      using S = decltype(tag);
      value = loss_kernel::bce<S>(detail::cspan<S>(pred), detail::cspan<S>(target), detail::mspan<S>(grad));
    });
    ctx->save_for_backward({grad});
    return torch::tensor(value, pred.options());
  }
  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    return {ctx->get_saved_variables()[0] * grads[0], torch::Tensor()};
  }
};

inline torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  return BceFunction::apply(pred, target);
}

/// Masked L1 flow loss; mask from target flow and target static channel.
struct FlowL1Function : torch::autograd::Function<FlowL1Function> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& px_in,
                               const torch::Tensor& py_in, const torch::Tensor& gx_in, const torch::Tensor& gy_in,
                               const torch::Tensor& stat_in) {
    auto px = detail::prepared(px_in, "flow_loss");
    auto py = detail::prepared(py_in, "flow_loss");
    const auto type = px.scalar_type();
    auto gx = detail::prepared(gx_in, "flow_loss").to(type);
    auto gy = detail::prepared(gy_in, "flow_loss").to(type);
    auto st = detail::prepared(stat_in, "flow_loss").to(type);
    for (const auto* t : {&py, &gx, &gy, &st}) detail::require_same_sizes(px, *t, "flow_loss");
    auto dx = torch::empty_like(px), dy = torch::empty_like(py);
    double value = 0;
    detail::dispatch(type, [&](auto tag) {
      using S = decltype(tag);
      value = loss_kernel::flow_l1<S>(detail::cspan<S>(px), detail::cspan<S>(py), detail::cspan<S>(gx),
                                      detail::cspan<S>(gy), detail::cspan<S>(st), detail::mspan<S>(dx),
                                      detail::mspan<S>(dy));
    });
    ctx->save_for_backward({dx, dy});
    return torch::tensor(value, px.options());
  }
  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    const auto s = ctx->get_saved_variables();
    return {s[0] * grads[0], s[1] * grads[0], torch::Tensor(), torch::Tensor(), torch::Tensor()};
  }
};

inline torch::Tensor flow_loss(const torch::Tensor& px, const torch::Tensor& py, const torch::Tensor& gx,
                               const torch::Tensor& gy, const torch::Tensor& gt_static) {
  return FlowL1Function::apply(px, py, gx, gy, gt_static);
}

/// Mean squared error.
struct MseFunction : torch::autograd::Function<MseFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& pred_in,
                               const torch::Tensor& target_in) {
    auto pred = detail::prepared(pred_in, "mse");
    auto target = detail::prepared(target_in, "mse").to(pred.scalar_type());
    detail::require_same_sizes(pred, target, "mse");
    auto grad = torch::empty_like(pred);
    double value = 0;
    detail::dispatch(pred.scalar_type(), [&](auto tag) {
      using S = decltype(tag);
      value = loss_kernel::mse<S>(detail::cspan<S>(pred), detail::cspan<S>(target), detail::mspan<S>(grad));
    });
    ctx->save_for_backward({grad});
    return torch::tensor(value, pred.options());
  }
  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    return {ctx->get_saved_variables()[0] * grads[0], torch::Tensor()};
  }
};

inline torch::Tensor mse_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  return MseFunction::apply(pred, target);
}

/// Flow-traced loss on warped * weighting.
struct WarpedBceFunction : torch::autograd::Function<WarpedBceFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& w_in,
                               const torch::Tensor& q_in, const torch::Tensor& target_in) {
    auto w = detail::prepared(w_in, "warped_loss");
    auto q = detail::prepared(q_in, "warped_loss").to(w.scalar_type());
    auto y = detail::prepared(target_in, "warped_loss").to(w.scalar_type());
    detail::require_same_sizes(w, q, "warped_loss");
    detail::require_same_sizes(w, y, "warped_loss");
    auto gw = torch::empty_like(w), gq = torch::empty_like(q);
    double value = 0;
    detail::dispatch(w.scalar_type(), [&](auto tag) {
      using S = decltype(tag);
      value = loss_kernel::warped_bce<S>(detail::cspan<S>(w), detail::cspan<S>(q), detail::cspan<S>(y),
                                         detail::mspan<S>(gw), detail::mspan<S>(gq));
    });
    ctx->save_for_backward({gw, gq});
    return torch::tensor(value, w.options());
  }
  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    const auto s = ctx->get_saved_variables();
    return {s[0] * grads[0], s[1] * grads[0], torch::Tensor()};
  }
};

inline torch::Tensor warped_loss(const torch::Tensor& warped, const torch::Tensor& weighting,
                                 const torch::Tensor& target) {
  return WarpedBceFunction::apply(warped, weighting, target);
}

/// KL(q || p) of diagonal Gaussians [B, D], summed over D, mean over B.
struct KlFunction : torch::autograd::Function<KlFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& mq_in,
                               const torch::Tensor& lq_in, const torch::Tensor& mp_in, const torch::Tensor& lp_in) {
    auto mq = detail::prepared(mq_in, "kl_loss");
    auto lq = detail::prepared(lq_in, "kl_loss");
    auto mp = detail::prepared(mp_in, "kl_loss");
    auto lp = detail::prepared(lp_in, "kl_loss");
    for (const auto* t : {&lq, &mp, &lp}) detail::require_same_sizes(mq, *t, "kl_loss");
    if (mq.dim() != 2) throw GridError("kl_loss: expected [B, D]");
    auto a = torch::empty_like(mq), b = torch::empty_like(lq), c = torch::empty_like(mp), d = torch::empty_like(lp);
    double value = 0;
    detail::dispatch(mq.scalar_type(), [&](auto tag) {
      using S = decltype(tag);
      value = loss_kernel::kl_diag<S>(detail::cspan<S>(mq), detail::cspan<S>(lq), detail::cspan<S>(mp),
                                      detail::cspan<S>(lp), static_cast<std::size_t>(mq.size(1)),
                                      detail::mspan<S>(a), detail::mspan<S>(b), detail::mspan<S>(c),
                                      detail::mspan<S>(d));
    });
    ctx->save_for_backward({a, b, c, d});
    return torch::tensor(value, mq.options());
  }
  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    const auto s = ctx->get_saved_variables();
    return {s[0] * grads[0], s[1] * grads[0], s[2] * grads[0], s[3] * grads[0]};
  }
};

inline torch::Tensor kl_loss(const torch::Tensor& mu_q, const torch::Tensor& logvar_q, const torch::Tensor& mu_p,
                             const torch::Tensor& logvar_p) {
  return KlFunction::apply(mu_q, logvar_q, mu_p, logvar_p);
}

}  // namespace gridcast::nn

#endif  // GRIDCAST_NN_AUTOGRAD_HPP
