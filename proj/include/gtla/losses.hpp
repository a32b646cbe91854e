#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtla/common.hpp"
#include "gtla/grouping.hpp"
#include "gtla/priors.hpp"

namespace gtla {

enum class Method { CE, LA, GTLA };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::CE: return "ce";
    case Method::LA: return "la";
    case Method::GTLA: return "gtla";
  }
  return "ce";
}

inline Method method_from_string(const std::string& s) {
  if (s == "ce") return Method::CE;
  if (s == "la") return Method::LA;
  if (s == "gtla") return Method::GTLA;
  throw Error(Error::Kind::Config, "unknown method '" + s + "' (expected ce, la or gtla)");
}

struct TrainConfig {
  Method method = Method::GTLA;
  double tau = 0.5;
  double eta = 0.5;
  double lambda = 0.15;
  double delta = 4.0;
  bool temporal_factor = true;
  std::size_t epochs = 50;
  double lr = 5e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (tau < 0.0) throw Error(Error::Kind::Config, "train: tau must be >= 0");
    if (eta < 0.0) throw Error(Error::Kind::Config, "train: eta must be >= 0");
    if (lambda < 0.0) throw Error(Error::Kind::Config, "train: lambda must be >= 0");
    if (!(delta > 0.0)) throw Error(Error::Kind::Config, "train: delta must be > 0");
    if (!(lr > 0.0)) throw Error(Error::Kind::Config, "train: lr must be > 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"method", to_string(c.method)},
          {"tau", c.tau},
          {"eta", c.eta},
          {"lambda", c.lambda},
          {"delta", c.delta},
          {"temporal_factor", c.temporal_factor},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"method", "tau", "eta", "lambda", "delta", "temporal_factor", "epochs", "lr", "seed"},
                         "train");
  TrainConfig c;
  try {
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    c.tau = j.value("tau", c.tau);
    c.eta = j.value("eta", c.eta);
    c.lambda = j.value("lambda", c.lambda);
    c.delta = j.value("delta", c.delta);
    c.temporal_factor = j.value("temporal_factor", c.temporal_factor);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Config, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

struct HeadLoss {
  double value = 0.0;
  Matrix grad;  // d value / d input, same shape as the input
};

struct LossResult {
  double value = 0.0;
  double classification = 0.0;
  double smoothing = 0.0;
  std::vector<Matrix> grads;  // per head, d value / d logits
};

/// Column-wise log-softmax of an L x T logit matrix.
inline Matrix log_softmax(const Matrix& s) {
  const std::size_t L = s.rows(), T = s.cols();
  Matrix out(L, T);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = s(0, t);
    for (std::size_t c = 1; c < L; ++c) mx = std::max(mx, s(c, t));
    double z = 0.0;
    for (std::size_t c = 0; c < L; ++c) z += std::exp(s(c, t) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < L; ++c) out(c, t) = s(c, t) - lse;
  }
  return out;
}

inline Matrix softmax(const Matrix& s) {
  Matrix p = log_softmax(s);
  for (auto& v : p.data()) v = std::exp(v);
  return p;
}

/// Mean frame-wise cross-entropy.
inline HeadLoss ce_loss(const Matrix& logits, std::span<const int> labels) {
  const std::size_t L = logits.rows(), T = logits.cols();
  if (labels.size() != T) throw Error(Error::Kind::Dimension, "ce_loss: label length mismatch");
  const Matrix lp = log_softmax(logits);
  HeadLoss out{0.0, Matrix(L, T)};
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto y = static_cast<std::size_t>(labels[t]);
    if (y >= L) throw Error(Error::Kind::Value, "ce_loss: label out of range");
    out.value -= lp(y, t);
    for (std::size_t c = 0; c < L; ++c) out.grad(c, t) = std::exp(lp(c, t)) * inv_t;
    out.grad(y, t) -= inv_t;
  }
  out.value *= inv_t;
  return out;
}

/// Truncated MSE between consecutive log-probabilities, averaged over the
/// (T-1) x L differences. Differences with |d| > delta contribute delta^2
/// and no gradient. Both frames of each pair receive gradient.
inline HeadLoss smoothing_loss(const Matrix& logprobs, double delta = 4.0) {
  const std::size_t L = logprobs.rows(), T = logprobs.cols();
  HeadLoss out{0.0, Matrix(L, T)};
  if (T < 2) return out;
  const double n = static_cast<double>((T - 1) * L);
  for (std::size_t c = 0; c < L; ++c) {
    for (std::size_t t = 1; t < T; ++t) {
      const double d = logprobs(c, t) - logprobs(c, t - 1);
      if (std::abs(d) > delta) {
        out.value += delta * delta;
        continue;
      }
      out.value += d * d;
      out.grad(c, t) += 2.0 * d / n;
      out.grad(c, t - 1) -= 2.0 * d / n;
    }
  }
  out.value /= n;
  return out;
}

/// Cross-entropy on s + tau * log p(c). Rows beyond prior.size() (the
/// `others` class) are not adjusted.
inline HeadLoss la_loss(const Matrix& logits, std::span<const int> labels, std::span<const double> prior, double tau) {
  Matrix adj = logits;
  for (std::size_t c = 0; c < std::min(prior.size(), adj.rows()); ++c) {
    const double off = tau * std::log(clamp_prior(prior[c]));
    double* r = adj.row(c);
    for (std::size_t t = 0; t < adj.cols(); ++t) r[t] += off;
  }
  return ce_loss(adj, labels);
}

/// Target-group logits with the temporally gated prior offset applied to
/// every real class; `others` is left untouched.
inline Matrix gtla_adjust(const Matrix& logits, std::span<const int> labels, const GroupPrior& g, double tau,
                          bool use_temporal_factor = true) {
  const std::size_t T = logits.cols();
  if (labels.size() != T) throw Error(Error::Kind::Dimension, "gtla_adjust: label length mismatch");
  Matrix adj = logits;
  if (tau == 0.0) return adj;
  for (std::size_t c = 0; c < g.num_real(); ++c) {
    const double log_pc = std::log(clamp_prior(g.prior[c]));
    const Bounds b = use_temporal_factor ? temporal_bounds(static_cast<int>(c), labels, g) : Bounds{0, T};
    double* r = adj.row(c);
    for (std::size_t t = 0; t < T; ++t) {
      const double f = temporal_factor(static_cast<int>(c), t, b, labels[t], g);
      r[t] += tau * f * log_pc;
    }
  }
  return adj;
}

/// Group-wise loss: alpha_k-weighted adjusted cross-entropy on the
/// sequence's own group plus eta-weighted `others` cross-entropy on every
/// other group's unadjusted logits.
inline LossResult gtla_loss(std::span<const Matrix> logits, const FrameSeq& seq, const GroupSpec& spec,
                            const TemporalPrior& prior, const TrainConfig& cfg) {
  if (logits.size() != spec.n()) throw Error(Error::Kind::Dimension, "gtla_loss: one logit matrix per group expected");
  const auto k = static_cast<std::size_t>(spec.require_group(seq));
  const auto target = relabel_for_group(seq, spec, k);
  const Matrix adj = gtla_adjust(logits[k], target, prior.groups.at(k), cfg.tau, cfg.temporal_factor);
  LossResult out;
  out.grads.resize(spec.n());
  HeadLoss tl = ce_loss(adj, target);
  const double alpha = spec.alpha.at(k);
  out.classification = alpha * tl.value;
  for (auto& v : tl.grad.data()) v *= alpha;
  out.grads[k] = std::move(tl.grad);
  for (std::size_t i = 0; i < spec.n(); ++i) {
    if (i == k) continue;
    if (!spec.has_others) throw Error(Error::Kind::Config, "gtla_loss: multiple groups need an others class");
    const std::vector<int> others(seq.length(), spec.others_id(i));
    HeadLoss nl = ce_loss(logits[i], others);
    out.classification += cfg.eta * nl.value;
    for (auto& v : nl.grad.data()) v *= cfg.eta;
    out.grads[i] = std::move(nl.grad);
  }
  out.value = out.classification;
  return out;
}

/// Method-selected classification loss plus lambda times the smoothing loss
/// of every head's log-softmax, averaged over heads.
inline LossResult total_loss(std::span<const Matrix> logits, const FrameSeq& seq, const GroupSpec& spec,
                             const TemporalPrior& prior, const TrainConfig& cfg) {
  LossResult out;
  if (cfg.method == Method::GTLA) {
    out = gtla_loss(logits, seq, spec, prior, cfg);
  } else {
    if (spec.n() != 1 || logits.size() != 1)
      throw Error(Error::Kind::Config, "total_loss: ce/la expect a single head");
    const auto labels = relabel_for_group(seq, spec, 0);
    HeadLoss h = cfg.method == Method::CE ? ce_loss(logits[0], labels)
                                          : la_loss(logits[0], labels, prior.groups.at(0).prior, cfg.tau);
    out.classification = h.value;
    out.grads.push_back(std::move(h.grad));
  }
  if (cfg.lambda > 0.0) {
    const double w = cfg.lambda / static_cast<double>(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const Matrix lp = log_softmax(logits[i]);
      const HeadLoss sm = smoothing_loss(lp, cfg.delta);
      out.smoothing += sm.value / static_cast<double>(logits.size());
      // chain through log-softmax: ds = g - softmax * sum_c g
      Matrix& g = out.grads[i];
      for (std::size_t t = 0; t < lp.cols(); ++t) {
        double colsum = 0.0;
        for (std::size_t c = 0; c < lp.rows(); ++c) colsum += sm.grad(c, t);
        for (std::size_t c = 0; c < lp.rows(); ++c)
          g(c, t) += w * (sm.grad(c, t) - std::exp(lp(c, t)) * colsum);
      }
    }
  }
  out.value = out.classification + cfg.lambda * out.smoothing;
  return out;
}

}  // namespace gtla
