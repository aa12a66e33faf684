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

#ifndef GRIDCAST_NN_PREDICTOR_HPP
#define GRIDCAST_NN_PREDICTOR_HPP

/// Spatiotemporal predictor: shared spatial encoder, stacked ConvLSTM
/// core, present/future Gaussian latents, ConvGRU rollout, and the
/// detection, prediction and occupancy-state heads.

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "gridcast/json_util.hpp"
#include "gridcast/nn/autograd.hpp"
#include "gridcast/nn/tensors.hpp"

namespace gridcast::nn {

inline constexpr double kLogVarianceClamp = 10.0;

struct BackboneConfig {
  int enc1 = 16;        // full-resolution encoder width (skip 1)
  int enc2 = 32;        // half-resolution encoder width (skip 2)
  int hidden = 32;      // recurrent hidden channels
  int depth = 2;        // stacked ConvLSTM layers
  int latent_dim = 32;
  int history = 2;      // N; the network sees N+1 frames
  int horizon = 5;      // T
  int rollout_grus = 3;

  static BackboneConfig desk() { return {}; }
  static BackboneConfig full() {
    BackboneConfig c;
    c.enc1 = 32;
    c.enc2 = 64;
    c.hidden = 128;
    c.depth = 4;
    return c;
  }
};

inline void validate(const BackboneConfig& c) {
  for (int v : {c.enc1, c.enc2, c.hidden, c.depth, c.latent_dim, c.horizon, c.rollout_grus}) {
    if (v < 1) throw GridError("backbone config: widths, depth, latent_dim, horizon must be positive");
  }
  if (c.history < 0) throw GridError("backbone config: history must be >= 0");
}

inline void to_json(nlohmann::json& j, const BackboneConfig& v) {
  GRIDCAST_JSON_PUT(enc1);
  GRIDCAST_JSON_PUT(enc2);
  GRIDCAST_JSON_PUT(hidden);
  GRIDCAST_JSON_PUT(depth);
  GRIDCAST_JSON_PUT(latent_dim);
  GRIDCAST_JSON_PUT(history);
  GRIDCAST_JSON_PUT(horizon);
  GRIDCAST_JSON_PUT(rollout_grus);
}
inline void from_json(const nlohmann::json& j, BackboneConfig& v) {
  GRIDCAST_JSON_FIELD(enc1);
  GRIDCAST_JSON_FIELD(enc2);
  GRIDCAST_JSON_FIELD(hidden);
  GRIDCAST_JSON_FIELD(depth);
  GRIDCAST_JSON_FIELD(latent_dim);
  GRIDCAST_JSON_FIELD(history);
  GRIDCAST_JSON_FIELD(horizon);
  GRIDCAST_JSON_FIELD(rollout_grus);
}

/// Which heads run. The vehicle prediction head is always on.
struct HeadSwitches {
  bool det = true;
  bool flow = true;
  bool ogm = true;
};

// Building blocks ---------------------------------------------------------------

inline torch::nn::Conv2dOptions conv_opts(int in, int out, int k, int stride = 1) {
  return torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2);
}

struct ConvLSTMCellImpl : torch::nn::Module {
  ConvLSTMCellImpl(int in, int hidden) : hidden_(hidden) {
    gates = register_module("gates", torch::nn::Conv2d(conv_opts(in + hidden, 4 * hidden, 3)));
  }
  /// Returns (h, c).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x, const torch::Tensor& h,
                                                  const torch::Tensor& c) {
    auto g = gates->forward(torch::cat({x, h}, 1)).chunk(4, 1);
    auto i = torch::sigmoid(g[0]), f = torch::sigmoid(g[1]), o = torch::sigmoid(g[2]), u = torch::tanh(g[3]);
    auto c2 = f * c + i * u;
    return {o * torch::tanh(c2), c2};
  }
  int hidden_;
  torch::nn::Conv2d gates{nullptr};
};
TORCH_MODULE(ConvLSTMCell);

struct ConvGRUCellImpl : torch::nn::Module {
  ConvGRUCellImpl(int in, int hidden) {
    gates = register_module("gates", torch::nn::Conv2d(conv_opts(in + hidden, 2 * hidden, 3)));
    cand = register_module("cand", torch::nn::Conv2d(conv_opts(in + hidden, hidden, 3)));
  }
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& h) {
    auto g = torch::sigmoid(gates->forward(torch::cat({x, h}, 1))).chunk(2, 1);
    auto n = torch::tanh(cand->forward(torch::cat({x, g[1] * h}, 1)));
    return (1 - g[0]) * h + g[0] * n;
  }
  torch::nn::Conv2d gates{nullptr}, cand{nullptr};
};
TORCH_MODULE(ConvGRUCell);

struct ResidualUnitImpl : torch::nn::Module {
  explicit ResidualUnitImpl(int ch) {
    a = register_module("a", torch::nn::Conv2d(conv_opts(ch, ch, 3)));
    b = register_module("b", torch::nn::Conv2d(conv_opts(ch, ch, 3)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return torch::relu(x + b->forward(torch::relu(a->forward(x)))); }
  torch::nn::Conv2d a{nullptr}, b{nullptr};
};
TORCH_MODULE(ResidualUnit);

inline torch::nn::ConvTranspose2d up_conv(int in, int out) {
  return torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

// Model -------------------------------------------------------------------------------

struct Latent {
  torch::Tensor mean;     // [B, D]
  torch::Tensor logvar;   // [B, D], clamped
};

enum class LatentMode {
  kPosterior,   // z = mean_q + sigma_q * eps (training)
  kPriorMean,   // z = mean_p (evaluation)
  kPriorSample, // z = mean_p + sigma_p * eps
  kGiven,       // z supplied by the caller
};

struct ForwardOptions {
  LatentMode mode = LatentMode::kPriorMean;
  torch::Tensor eps;  // [B, D] standard normal noise for the sampling modes
  torch::Tensor z;    // [B, D] for kGiven
  HeadSwitches heads;
  bool warp_veh = true;
  bool warp_dyn = true;
};

struct ForwardOutput {
  torch::Tensor det;       // [B, 2, H, W] (veh, dyn), undefined when the head is off
  torch::Tensor pred_veh;  // [B, T, H, W]
  torch::Tensor pred_fx;   // [B, T, H, W], undefined when flow is off
  torch::Tensor pred_fy;
  torch::Tensor ogm;       // [B, T, 3, H, W]
  Latent present;
  std::optional<Latent> future;
  torch::Tensor z;
  torch::Tensor w_veh;  // [B, T, H, W]
  torch::Tensor w_dyn;
  torch::Tensor h_t;    // [B, C, h', w']
};

struct EncodedHistory {
  torch::Tensor h;   // top-layer hidden state at t
  torch::Tensor c;   // top-layer cell memory at t
  torch::Tensor s1;  // [B, enc1, H, W]
  torch::Tensor s2;  // [B, enc2, H/2, W/2]
};

class PredictorImpl : public torch::nn::Module {
 public:
  explicit PredictorImpl(const BackboneConfig& cfg) : cfg_(cfg) {
    validate(cfg);
    const int e1 = cfg.enc1, e2 = cfg.enc2, C = cfg.hidden, L = cfg.latent_dim;
    stem1 = register_module("stem1", torch::nn::Conv2d(conv_opts(kFrameChannels, e1, 3)));
    stem2 = register_module("stem2", torch::nn::Conv2d(conv_opts(e1, e1, 3)));
    down1 = register_module("down1", torch::nn::Conv2d(conv_opts(e1, e2, 3, 2)));
    down2 = register_module("down2", torch::nn::Conv2d(conv_opts(e2, C, 3, 2)));
    for (int i = 0; i < cfg.depth; ++i) {
      lstm.push_back(register_module("lstm" + std::to_string(i), ConvLSTMCell(C, C)));
    }
    present_conv = register_module("present_conv", torch::nn::Conv2d(conv_opts(C, C, 3)));
    present_fc = register_module("present_fc", torch::nn::Linear(C, 2 * L));
    future_down1 = register_module("future_down1", torch::nn::Conv2d(conv_opts(3 * cfg.horizon, e1, 3, 2)));
    future_down2 = register_module("future_down2", torch::nn::Conv2d(conv_opts(e1, C, 3, 2)));
    future_conv = register_module("future_conv", torch::nn::Conv2d(conv_opts(2 * C, C, 3)));
    future_fc = register_module("future_fc", torch::nn::Linear(C, 2 * L));
    proj = register_module("proj", torch::nn::Conv2d(conv_opts(C + L, C, 1)));
    for (int i = 0; i < cfg.rollout_grus; ++i) {
      grus.push_back(register_module("gru" + std::to_string(i), ConvGRUCell(C, C)));
      res.push_back(register_module("res" + std::to_string(i), ResidualUnit(C)));
    }
    det_up1 = register_module("det_up1", up_conv(C, e2));
    det_up2 = register_module("det_up2", up_conv(e2, e1));
    det_out = register_module("det_out", torch::nn::Conv2d(conv_opts(e1, 2, 1)));
    pred_up1 = register_module("pred_up1", up_conv(C, e2));
    pred_up2 = register_module("pred_up2", up_conv(e2, e1));
    pred_out = register_module("pred_out", torch::nn::Conv2d(conv_opts(e1, 3, 1)));
    ogm_up1 = register_module("ogm_up1", up_conv(C, e2));
    ogm_fuse1 = register_module("ogm_fuse1", torch::nn::Conv2d(conv_opts(2 * e2, e2, 3)));
    ogm_up2 = register_module("ogm_up2", up_conv(e2, e1));
    ogm_fuse2 = register_module("ogm_fuse2", torch::nn::Conv2d(conv_opts(2 * e1, e1, 3)));
    ogm_out = register_module("ogm_out", torch::nn::Conv2d(conv_opts(e1, 3, 1)));
  }

  [[nodiscard]] const BackboneConfig& config() const { return cfg_; }

  /// Shared spatial encoder over every frame, then the recurrent core.
  EncodedHistory encode(const torch::Tensor& history) {
    if (history.dim() != 5 || history.size(1) != cfg_.history + 1 || history.size(2) != kFrameChannels)
      throw GridError("encode: history must be [B, N+1, 6, H, W] with N = " + std::to_string(cfg_.history));
    if (history.size(3) % 4 != 0 || history.size(4) % 4 != 0)
      throw GridError("encode: grid size must be divisible by 4");
    const auto B = history.size(0), F = history.size(1), H = history.size(3), W = history.size(4);
    auto x = history.reshape({B * F, kFrameChannels, H, W});
    auto s1 = torch::relu(stem2->forward(torch::relu(stem1->forward(x))));
    auto s2 = torch::relu(down1->forward(s1));
    auto feat = torch::relu(down2->forward(s2));
    feat = feat.reshape({B, F, cfg_.hidden, H / 4, W / 4});
    std::vector<torch::Tensor> h(cfg_.depth), c(cfg_.depth);
    for (auto& v : h) v = torch::zeros({B, cfg_.hidden, H / 4, W / 4}, history.options());
    for (auto& v : c) v = torch::zeros_like(h[0]);
    for (int64_t k = 0; k < F; ++k) {
      torch::Tensor in = feat.select(1, k);
      for (int l = 0; l < cfg_.depth; ++l) {
        std::tie(h[l], c[l]) = lstm[l]->forward(in, h[l], c[l]);
        in = h[l];
      }
    }
    EncodedHistory e;
    e.h = h.back();
    e.c = c.back();
    e.s1 = s1.reshape({B, F, cfg_.enc1, H, W}).select(1, F - 1);
    e.s2 = s2.reshape({B, F, cfg_.enc2, H / 2, W / 2}).select(1, F - 1);
    return e;
  }

  Latent present_distribution(const torch::Tensor& h_t) {
    auto v = torch::relu(present_conv->forward(h_t)).mean({2, 3});
    return split(present_fc->forward(v));
  }

  /// Future distribution from h_t and ground-truth future vehicle and flow
  /// grids, each [B, T, H, W].
  Latent future_distribution(const torch::Tensor& h_t, const torch::Tensor& veh, const torch::Tensor& fx,
                             const torch::Tensor& fy) {
    if (!veh.defined() || !fx.defined() || !fy.defined())
      throw GridError("future_distribution: ground-truth future grids required");
    if (veh.size(1) != cfg_.horizon) throw GridError("future_distribution: horizon mismatch");
    auto y = torch::cat({veh, fx, fy}, 1);
    auto f = torch::relu(future_down2->forward(torch::relu(future_down1->forward(y))));
    auto v = torch::relu(future_conv->forward(torch::cat({h_t, f}, 1))).mean({2, 3});
    return split(future_fc->forward(v));
  }

  /// Autoregressive rollout; returns [B, T, C, h', w'].
  torch::Tensor rollout(const torch::Tensor& h_t, const torch::Tensor& z, int T) {
    if (T < 1) throw GridError("rollout: T must be >= 1");
    if (z.dim() != 2 || z.size(1) != cfg_.latent_dim) throw GridError("rollout: z must be [B, latent_dim]");
    auto zb = z.unsqueeze(-1).unsqueeze(-1).expand({z.size(0), z.size(1), h_t.size(2), h_t.size(3)});
    std::vector<torch::Tensor> state(grus.size(), h_t);
    torch::Tensor prev = h_t;
    std::vector<torch::Tensor> out;
    for (int k = 0; k < T; ++k) {
      auto x = proj->forward(torch::cat({prev, zb}, 1));
      for (std::size_t g = 0; g < grus.size(); ++g) {
        state[g] = grus[g]->forward(x, state[g]);
        x = res[g]->forward(state[g]);
      }
      prev = x;
      out.push_back(x);
    }
    return torch::stack(out, 1);
  }

  /// Detection logits-free head on ĥ_1: [B, 2, H, W] probabilities.
  torch::Tensor detect(const torch::Tensor& h1) {
    auto x = torch::relu(det_up2->forward(torch::relu(det_up1->forward(h1))));
    return torch::sigmoid(det_out->forward(x));
  }

  /// Prediction head on [B*T, C, h', w'] -> [B*T, 3, H, W] (veh prob, fx, fy).
  torch::Tensor predict(const torch::Tensor& hs) {
    auto x = torch::relu(pred_up2->forward(torch::relu(pred_up1->forward(hs))));
    auto o = pred_out->forward(x);
    return torch::cat({torch::sigmoid(o.narrow(1, 0, 1)), o.narrow(1, 1, 2)}, 1);
  }

  /// Occupancy-state head with encoder skips -> [B*T, 3, H, W].
  torch::Tensor occupancy(const torch::Tensor& hs, const torch::Tensor& s1, const torch::Tensor& s2) {
    if (!s1.defined() || !s2.defined()) throw GridError("occupancy head: missing skips");
    auto x = torch::relu(ogm_up1->forward(hs));
    x = torch::relu(ogm_fuse1->forward(torch::cat({x, s2}, 1)));
    x = torch::relu(ogm_up2->forward(x));
    x = torch::relu(ogm_fuse2->forward(torch::cat({x, s1}, 1)));
    return torch::sigmoid(ogm_out->forward(x));
  }

  ForwardOutput forward(const Batch& batch, const ForwardOptions& opt) {
    const int T = cfg_.horizon;
    const auto B = batch.history.size(0), H = batch.history.size(3), W = batch.history.size(4);
    ForwardOutput out;
    const EncodedHistory enc = encode(batch.history);
    out.h_t = enc.h;
    out.present = present_distribution(enc.h);
    if (opt.mode == LatentMode::kPosterior) {
      out.future = future_distribution(enc.h, batch.fut_veh, batch.fut_fx, batch.fut_fy);
    }
    switch (opt.mode) {
      case LatentMode::kPosterior:
        out.z = sample(*out.future, opt.eps);
        break;
      case LatentMode::kPriorMean:
        out.z = out.present.mean;
        break;
      case LatentMode::kPriorSample:
        out.z = sample(out.present, opt.eps);
        break;
      case LatentMode::kGiven:
        if (!opt.z.defined()) throw GridError("forward: latent z required");
        out.z = opt.z;
        break;
    }
    const auto hs = rollout(enc.h, out.z, T);
    const auto flat = hs.reshape({B * T, cfg_.hidden, hs.size(3), hs.size(4)});
    if (opt.heads.det) out.det = detect(hs.select(1, 0));
    const auto p = predict(flat).reshape({B, T, 3, H, W});
    out.pred_veh = p.select(2, 0);
    if (opt.heads.flow) {
      out.pred_fx = p.select(2, 1);
      out.pred_fy = p.select(2, 2);
    }
    if (opt.heads.ogm) {
      auto rep = [&](const torch::Tensor& s) {
        return s.unsqueeze(1).expand({B, T, s.size(1), s.size(2), s.size(3)}).reshape(
            {B * T, s.size(1), s.size(2), s.size(3)});
      };
      out.ogm = occupancy(flat, rep(enc.s1), rep(enc.s2)).reshape({B, T, 3, H, W});
    }
    if (opt.heads.det && opt.heads.flow) {
      if (opt.warp_veh) out.w_veh = warp_sequence(out.det.select(1, 0), out.pred_fx, out.pred_fy);
      if (opt.warp_dyn) out.w_dyn = warp_sequence(out.det.select(1, 1), out.pred_fx, out.pred_fy);
    }
    return out;
  }

 private:
  Latent split(const torch::Tensor& v) {
    const int L = cfg_.latent_dim;
    return {v.narrow(1, 0, L), torch::clamp(v.narrow(1, L, L), -kLogVarianceClamp, kLogVarianceClamp)};
  }
  static torch::Tensor sample(const Latent& d, const torch::Tensor& eps) {
    if (!eps.defined() || eps.sizes() != d.mean.sizes()) throw GridError("latent sampling: eps must be [B, D]");
    return d.mean + torch::exp(0.5 * d.logvar) * eps;
  }

  BackboneConfig cfg_;
  torch::nn::Conv2d stem1{nullptr}, stem2{nullptr}, down1{nullptr}, down2{nullptr};
  std::vector<ConvLSTMCell> lstm;
  torch::nn::Conv2d present_conv{nullptr};
  torch::nn::Linear present_fc{nullptr};
  torch::nn::Conv2d future_down1{nullptr}, future_down2{nullptr}, future_conv{nullptr};
  torch::nn::Linear future_fc{nullptr};
  torch::nn::Conv2d proj{nullptr};
  std::vector<ConvGRUCell> grus;
  std::vector<ResidualUnit> res;
  torch::nn::ConvTranspose2d det_up1{nullptr}, det_up2{nullptr};
  torch::nn::Conv2d det_out{nullptr};
  torch::nn::ConvTranspose2d pred_up1{nullptr}, pred_up2{nullptr};
  torch::nn::Conv2d pred_out{nullptr};
  torch::nn::ConvTranspose2d ogm_up1{nullptr}, ogm_up2{nullptr};
  torch::nn::Conv2d ogm_fuse1{nullptr}, ogm_fuse2{nullptr}, ogm_out{nullptr};
};
TORCH_MODULE(Predictor);

inline int64_t parameter_count(torch::nn::Module& m) {
  int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

/// Converts sample `b` of a forward output to a PredictionBundle.
inline PredictionBundle to_bundle(const ForwardOutput& out, int64_t b, const GridGeometry& geometry) {
  torch::NoGradGuard guard;
  PredictionBundle r;
  if (out.det.defined()) {
    r.det_veh = detail::tensor_plane(out.det[b][0]);
    r.det_dyn = detail::tensor_plane(out.det[b][1]);
  }
  const int64_t T = out.pred_veh.size(1);
  for (int64_t k = 0; k < T; ++k) {
    PredictionBundle::Step s;
    s.veh = detail::tensor_plane(out.pred_veh[b][k]);
    if (out.pred_fx.defined()) {
      s.flow = SceneFlowGrid(geometry);
      s.flow.fx = detail::tensor_plane(out.pred_fx[b][k]);
      s.flow.fy = detail::tensor_plane(out.pred_fy[b][k]);
    }
    r.pred.push_back(std::move(s));
    if (out.ogm.defined()) {
      OccupancyStateGrid o(geometry);
      o.unk = detail::tensor_plane(out.ogm[b][k][0]);
      o.stat = detail::tensor_plane(out.ogm[b][k][1]);
      o.dyn = detail::tensor_plane(out.ogm[b][k][2]);
      r.ogm.push_back(std::move(o));
    }
  }
  return r;
}

/// Converts a [B, T, H, W] warped tensor to a WarpedSequence for sample b.
inline WarpedSequence to_warped(const torch::Tensor& w, int64_t b, WarpedSequence::Source source) {
  WarpedSequence s;
  s.source = source;
  for (int64_t k = 0; k < w.size(1); ++k) s.grids.push_back(detail::tensor_plane(w[b][k]));
  return s;
}

}  // namespace gridcast::nn

#endif  // GRIDCAST_NN_PREDICTOR_HPP
