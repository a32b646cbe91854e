#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtla/common.hpp"
#include "gtla/data.hpp"

namespace gtla {

/// Single-stage dilated temporal convolution backbone with one linear head
/// per group. Layer l uses dilation 2^l, kernel width 3 and same padding.
struct BackboneConfig {
  std::size_t input_dim = 0;
  std::size_t hidden = 32;
  std::size_t layers = 6;
  double dropout = 0.25;
  std::vector<std::size_t> head_classes;  // per group, including `others`
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim == 0) throw Error(Error::Kind::Config, "backbone: input_dim must be >= 1");
    if (hidden == 0) throw Error(Error::Kind::Config, "backbone: hidden must be >= 1");
    if (layers == 0) throw Error(Error::Kind::Config, "backbone: layers must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw Error(Error::Kind::Config, "backbone: dropout must be in [0,1)");
    if (head_classes.empty()) throw Error(Error::Kind::Config, "backbone: at least one head");
    for (auto c : head_classes)
      if (c < 2) throw Error(Error::Kind::Config, "backbone: every head needs >= 2 classes");
  }
};

inline nlohmann::json to_json(const BackboneConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden},       {"layers", c.layers},
          {"dropout", c.dropout},     {"head_classes", c.head_classes}, {"seed", c.seed}};
}

inline BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.head_classes = j.at("head_classes").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t total = 1;
    for (auto d : shape) total *= d;
    value.assign(total, 0.0);
    grad.assign(total, 0.0);
  }
  std::size_t size() const noexcept { return value.size(); }
};

/// Flat list of parameter tensors, in a fixed order:
/// input 1x1 conv (w, b); per layer dilated conv (w, b) and 1x1 projection
/// (w, b); per head W (H x L_i) and b (L_i).
struct ModelParams {
  std::vector<Tensor> tensors;

  void zero_grad() {
    for (auto& t : tensors) std::fill(t.grad.begin(), t.grad.end(), 0.0);
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
};

enum class Mode { Train, Eval };

/// Intermediates recorded by forward() for backward().
struct Tape {
  FeatureMatrix input;
  std::vector<Matrix> block_in;  // residual stream entering layer l
  std::vector<Matrix> pre_relu;  // dilated conv output of layer l
  std::vector<Matrix> post_relu;
  std::vector<Matrix> mask;      // empty when dropout is off
  Matrix z;
  std::size_t param_count = 0;
};

struct ForwardResult {
  Matrix z;                    // H x T
  std::vector<Matrix> logits;  // per head, L_i x T
  Tape tape;
};

class Model {
 public:
  Model() = default;

  explicit Model(BackboneConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t H = cfg_.hidden;
    auto& ts = params_.tensors;
    ts.emplace_back("input.w", std::vector<std::size_t>{H, cfg_.input_dim});
    ts.emplace_back("input.b", std::vector<std::size_t>{H});
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "layer" + std::to_string(l);
      ts.emplace_back(p + ".dilated.w", std::vector<std::size_t>{H, H, 3});
      ts.emplace_back(p + ".dilated.b", std::vector<std::size_t>{H});
      ts.emplace_back(p + ".proj.w", std::vector<std::size_t>{H, H});
      ts.emplace_back(p + ".proj.b", std::vector<std::size_t>{H});
    }
    for (std::size_t i = 0; i < cfg_.head_classes.size(); ++i) {
      const std::string p = "head" + std::to_string(i);
      ts.emplace_back(p + ".W", std::vector<std::size_t>{H, cfg_.head_classes[i]});
      ts.emplace_back(p + ".b", std::vector<std::size_t>{cfg_.head_classes[i]});
    }
    initialize();
  }

  const BackboneConfig& config() const noexcept { return cfg_; }
  ModelParams& params() noexcept { return params_; }
  const ModelParams& params() const noexcept { return params_; }
  std::size_t num_heads() const noexcept { return cfg_.head_classes.size(); }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases,
  /// drawn from the "init" stream of the config seed.
  void initialize() {
    Rng rng = Rng::substream(cfg_.seed, "init");
    const double H = static_cast<double>(cfg_.hidden);
    auto fill = [&](Tensor& t, double fan_in) {
      const double bound = 1.0 / std::sqrt(fan_in);
      for (auto& v : t.value) v = rng.uniform(-bound, bound);
    };
    std::size_t i = 0;
    auto& ts = params_.tensors;
    fill(ts[i++], static_cast<double>(cfg_.input_dim));
    fill(ts[i++], static_cast<double>(cfg_.input_dim));
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      fill(ts[i++], 3.0 * H);
      fill(ts[i++], 3.0 * H);
      fill(ts[i++], H);
      fill(ts[i++], H);
    }
    for (std::size_t h = 0; h < cfg_.head_classes.size(); ++h) {
      fill(ts[i++], H);
      fill(ts[i++], H);
    }
  }

  /// `dropout_rng` is required in Train mode when dropout > 0.
  ForwardResult forward(const FeatureMatrix& x, Mode mode, Rng* dropout_rng = nullptr) const {
    if (x.dim != cfg_.input_dim)
      throw Error(Error::Kind::Dimension, "forward: feature dim " + std::to_string(x.dim) + " != model input dim " +
                                              std::to_string(cfg_.input_dim));
    if (x.length == 0) throw Error(Error::Kind::Dimension, "forward: empty sequence");
    const bool drop = mode == Mode::Train && cfg_.dropout > 0.0;
    if (drop && dropout_rng == nullptr) throw Error(Error::Kind::Config, "forward: Train mode needs a dropout rng");

    const std::size_t H = cfg_.hidden, T = x.length, D = x.dim;
    const auto& ts = params_.tensors;
    ForwardResult out;
    Tape& tape = out.tape;
    tape.input = x;
    tape.param_count = params_.count();

    Matrix a(H, T);
    {
      const auto& w = ts[0].value;
      const auto& b = ts[1].value;
      for (std::size_t h = 0; h < H; ++h) {
        double* ar = a.row(h);
        for (std::size_t t = 0; t < T; ++t) {
          double s = b[h];
          const double* xt = x.values.data() + t * D;
          for (std::size_t d = 0; d < D; ++d) s += w[h * D + d] * xt[d];
          ar[t] = s;
        }
      }
    }

    const double keep_scale = drop ? 1.0 / (1.0 - cfg_.dropout) : 1.0;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto& dw = ts[2 + 4 * l].value;
      const auto& db = ts[3 + 4 * l].value;
      const auto& pw = ts[4 + 4 * l].value;
      const auto& pb = ts[5 + 4 * l].value;
      const std::size_t dil = std::size_t{1} << l;

      Matrix u(H, T);
      for (std::size_t h = 0; h < H; ++h) {
        double* ur = u.row(h);
        std::fill(ur, ur + T, db[h]);
        for (std::size_t hi = 0; hi < H; ++hi) {
          const double* ar = a.row(hi);
          const double* wk = &dw[(h * H + hi) * 3];
          // tap 0 reads t - dil, tap 1 reads t, tap 2 reads t + dil
          for (std::size_t t = dil; t < T; ++t) ur[t] += wk[0] * ar[t - dil];
          for (std::size_t t = 0; t < T; ++t) ur[t] += wk[1] * ar[t];
          for (std::size_t t = 0; t + dil < T; ++t) ur[t] += wk[2] * ar[t + dil];
        }
      }
      Matrix r(H, T);
      for (std::size_t i = 0; i < u.data().size(); ++i) r.data()[i] = u.data()[i] > 0.0 ? u.data()[i] : 0.0;

      Matrix v(H, T);
      for (std::size_t h = 0; h < H; ++h) {
        double* vr = v.row(h);
        std::fill(vr, vr + T, pb[h]);
        for (std::size_t hi = 0; hi < H; ++hi) {
          const double w = pw[h * H + hi];
          const double* rr = r.row(hi);
          for (std::size_t t = 0; t < T; ++t) vr[t] += w * rr[t];
        }
      }
      Matrix mask;
      if (drop) {
        mask = Matrix(H, T);
        for (auto& m : mask.data()) m = dropout_rng->bernoulli(cfg_.dropout) ? 0.0 : keep_scale;
        for (std::size_t i = 0; i < v.data().size(); ++i) v.data()[i] *= mask.data()[i];
      }
      tape.block_in.push_back(a);
      for (std::size_t i = 0; i < a.data().size(); ++i) a.data()[i] += v.data()[i];
      tape.pre_relu.push_back(std::move(u));
      tape.post_relu.push_back(std::move(r));
      tape.mask.push_back(std::move(mask));
    }

    const std::size_t base = 2 + 4 * cfg_.layers;
    for (std::size_t i = 0; i < cfg_.head_classes.size(); ++i) {
      const std::size_t L = cfg_.head_classes[i];
      const auto& W = ts[base + 2 * i].value;
      const auto& b = ts[base + 2 * i + 1].value;
      Matrix s(L, T);
      for (std::size_t c = 0; c < L; ++c) {
        double* sr = s.row(c);
        std::fill(sr, sr + T, b[c]);
        for (std::size_t j = 0; j < H; ++j) {
          const double w = W[j * L + c];
          const double* zr = a.row(j);
          for (std::size_t t = 0; t < T; ++t) sr[t] += w * zr[t];
        }
      }
      out.logits.push_back(std::move(s));
    }
    tape.z = a;
    out.z = std::move(a);
    return out;
  }

  /// Writes d(loss)/d(params) into the gradient buffers (overwriting them).
  void backward(const Tape& tape, std::span<const Matrix> dlogits) {
    if (tape.param_count != params_.count() || tape.block_in.size() != cfg_.layers)
      throw Error(Error::Kind::Dimension, "backward: tape does not match model parameters");
    if (dlogits.size() != cfg_.head_classes.size())
      throw Error(Error::Kind::Dimension, "backward: expected one gradient per head");
    const std::size_t H = cfg_.hidden, T = tape.z.cols(), D = cfg_.input_dim;
    auto& ts = params_.tensors;
    params_.zero_grad();

    Matrix dz(H, T);
    const std::size_t base = 2 + 4 * cfg_.layers;
    for (std::size_t i = 0; i < cfg_.head_classes.size(); ++i) {
      const std::size_t L = cfg_.head_classes[i];
      const Matrix& g = dlogits[i];
      if (g.rows() != L || g.cols() != T) throw Error(Error::Kind::Dimension, "backward: logit gradient shape mismatch");
      const auto& W = ts[base + 2 * i].value;
      auto& dW = ts[base + 2 * i].grad;
      auto& db = ts[base + 2 * i + 1].grad;
      for (std::size_t c = 0; c < L; ++c) {
        const double* gr = g.row(c);
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t) s += gr[t];
        db[c] = s;
        for (std::size_t j = 0; j < H; ++j) {
          const double* zr = tape.z.row(j);
          double acc = 0.0;
          for (std::size_t t = 0; t < T; ++t) acc += zr[t] * gr[t];
          dW[j * L + c] = acc;
          const double w = W[j * L + c];
          double* dzr = dz.row(j);
          for (std::size_t t = 0; t < T; ++t) dzr[t] += w * gr[t];
        }
      }
    }

    Matrix da = std::move(dz);
    for (std::size_t l = cfg_.layers; l-- > 0;) {
      const auto& dw = ts[2 + 4 * l].value;
      const auto& pw = ts[4 + 4 * l].value;
      auto& g_dw = ts[2 + 4 * l].grad;
      auto& g_db = ts[3 + 4 * l].grad;
      auto& g_pw = ts[4 + 4 * l].grad;
      auto& g_pb = ts[5 + 4 * l].grad;
      const std::size_t dil = std::size_t{1} << l;
      const Matrix& a = tape.block_in[l];
      const Matrix& u = tape.pre_relu[l];
      const Matrix& r = tape.post_relu[l];
      const Matrix& mask = tape.mask[l];

      Matrix dv = da;
      if (!mask.empty())
        for (std::size_t i = 0; i < dv.data().size(); ++i) dv.data()[i] *= mask.data()[i];

      Matrix dr(H, T);
      for (std::size_t h = 0; h < H; ++h) {
        const double* dvr = dv.row(h);
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t) s += dvr[t];
        g_pb[h] = s;
        for (std::size_t hi = 0; hi < H; ++hi) {
          const double* rr = r.row(hi);
          double acc = 0.0;
          for (std::size_t t = 0; t < T; ++t) acc += dvr[t] * rr[t];
          g_pw[h * H + hi] = acc;
          const double w = pw[h * H + hi];
          double* drr = dr.row(hi);
          for (std::size_t t = 0; t < T; ++t) drr[t] += w * dvr[t];
        }
      }
      for (std::size_t i = 0; i < dr.data().size(); ++i)
        if (u.data()[i] <= 0.0) dr.data()[i] = 0.0;
      const Matrix& du = dr;

      // residual path already in da; add the dilated-conv input gradient
      for (std::size_t h = 0; h < H; ++h) {
        const double* dur = du.row(h);
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t) s += dur[t];
        g_db[h] = s;
        for (std::size_t hi = 0; hi < H; ++hi) {
          const double* ar = a.row(hi);
          double* dar = da.row(hi);
          const std::size_t k0 = (h * H + hi) * 3;
          double a0 = 0.0, a1 = 0.0, a2 = 0.0;
          for (std::size_t t = dil; t < T; ++t) a0 += dur[t] * ar[t - dil];
          for (std::size_t t = 0; t < T; ++t) a1 += dur[t] * ar[t];
          for (std::size_t t = 0; t + dil < T; ++t) a2 += dur[t] * ar[t + dil];
          g_dw[k0] = a0;
          g_dw[k0 + 1] = a1;
          g_dw[k0 + 2] = a2;
          const double w0 = dw[k0], w1 = dw[k0 + 1], w2 = dw[k0 + 2];
          for (std::size_t t = dil; t < T; ++t) dar[t - dil] += w0 * dur[t];
          for (std::size_t t = 0; t < T; ++t) dar[t] += w1 * dur[t];
          for (std::size_t t = 0; t + dil < T; ++t) dar[t + dil] += w2 * dur[t];
        }
      }
    }

    auto& g_iw = ts[0].grad;
    auto& g_ib = ts[1].grad;
    const auto& x = tape.input.values;
    for (std::size_t h = 0; h < H; ++h) {
      const double* dar = da.row(h);
      double s = 0.0;
      for (std::size_t t = 0; t < T; ++t) s += dar[t];
      g_ib[h] = s;
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) acc += dar[t] * x[t * D + d];
        g_iw[h * D + d] = acc;
      }
    }
  }

 private:
  BackboneConfig cfg_;
  ModelParams params_;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  static AdamState zeros(const ModelParams& p) {
    AdamState s;
    for (const auto& t : p.tensors) {
      s.m.emplace_back(t.size(), 0.0);
      s.v.emplace_back(t.size(), 0.0);
    }
    return s;
  }
};

/// Bias-corrected Adam update from the gradient buffers. A non-finite
/// gradient aborts before any parameter is touched.
inline void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.tensors.size()) throw Error(Error::Kind::Dimension, "adam_step: state/param mismatch");
  for (const auto& t : params.tensors)
    for (std::size_t i = 0; i < t.size(); ++i)
      if (!std::isfinite(t.grad[i]))
        throw Error(Error::Kind::Numeric, "adam_step: non-finite gradient in " + t.name + "[" + std::to_string(i) +
                                              "] at step " + std::to_string(state.step + 1));
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& t = params.tensors[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      t.value[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: "GTLACKPT", u32 header length, JSON header, f64 LE blob of
// parameter values followed by Adam first and second moments.
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 8> kCheckpointMagic = {'G', 'T', 'L', 'A', 'C', 'K', 'P', 'T'};

struct Checkpoint {
  Model model;
  AdamState adam;
  std::size_t epoch = 0;
  nlohmann::json extra;  // training config and anything else the caller wants kept
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto& params = ck.model.params();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : params.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  const nlohmann::json header = {{"version", 1},          {"encoding", "f64le"},     {"config", to_json(ck.model.config())},
                                 {"step", ck.adam.step},  {"epoch", ck.epoch},       {"tensors", tensors},
                                 {"extra", ck.extra}};
  const std::string h = header.dump();
  auto out = detail::open_out(path, true);
  out.write(kCheckpointMagic.data(), 8);
  detail::put_u32(out, static_cast<std::uint32_t>(h.size()));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& t : params.tensors)
    for (double v : t.value) detail::put_f64(out, v);
  for (const auto& m : ck.adam.m)
    for (double v : m) detail::put_f64(out, v);
  for (const auto& m : ck.adam.v)
    for (double v : m) detail::put_f64(out, v);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::open_in(path, true);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), 8) || magic != kCheckpointMagic) throw Error(Error::Kind::Format, "checkpoint: bad magic");
  std::uint32_t len = 0;
  if (!detail::get_u32(in, len)) throw Error(Error::Kind::Truncated, "checkpoint: truncated header");
  std::string h(len, '\0');
  if (!in.read(h.data(), len)) throw Error(Error::Kind::Truncated, "checkpoint: truncated header");
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(h);
    ck.model = Model(backbone_config_from_json(header.at("config")));
    ck.adam = AdamState::zeros(ck.model.params());
    ck.adam.step = header.at("step").get<std::size_t>();
    ck.epoch = header.at("epoch").get<std::size_t>();
    ck.extra = header.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Format, std::string("checkpoint header: ") + e.what());
  }
  auto read_all = [&](std::vector<double>& dst) {
    for (auto& v : dst)
      if (!detail::get_f64(in, v)) throw Error(Error::Kind::Truncated, "checkpoint: truncated parameter blob");
  };
  for (auto& t : ck.model.params().tensors) read_all(t.value);
  for (auto& m : ck.adam.m) read_all(m);
  for (auto& m : ck.adam.v) read_all(m);
  return ck;
}

}  // namespace gtla
