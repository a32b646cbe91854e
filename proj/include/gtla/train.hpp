#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gtla/data.hpp"
#include "gtla/grouping.hpp"
#include "gtla/losses.hpp"
#include "gtla/model.hpp"
#include "gtla/priors.hpp"

namespace gtla {

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double classification = 0.0;
  double smoothing = 0.0;
};

struct TrainState {
  Model model;
  AdamState adam;
  std::size_t epochs_done = 0;
  std::vector<EpochStats> log;

  static TrainState fresh(const BackboneConfig& cfg) {
    TrainState s;
    s.model = Model(cfg);
    s.adam = AdamState::zeros(s.model.params());
    return s;
  }
};

/// Backbone config whose heads match `spec` (one head per group).
inline BackboneConfig backbone_for(const GroupSpec& spec, std::size_t input_dim, std::size_t hidden, std::size_t layers,
                                   double dropout, std::uint64_t seed) {
  BackboneConfig c;
  c.input_dim = input_dim;
  c.hidden = hidden;
  c.layers = layers;
  c.dropout = dropout;
  c.head_classes = spec.head_sizes();
  c.seed = seed;
  return c;
}

/// Runs epochs [state.epochs_done, until_epoch) with batch size 1. Each
/// epoch draws its visiting order and dropout masks from streams keyed by
/// the epoch index, so resuming at an epoch boundary is exact.
inline void train_epochs(TrainState& state, const Corpus& train, const GroupSpec& spec, const TemporalPrior& prior,
                         const TrainConfig& cfg, std::size_t until_epoch,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (state.model.num_heads() != spec.n()) throw Error(Error::Kind::Config, "train: model heads do not match groups");
  if (train.samples.empty()) throw Error(Error::Kind::Config, "train: empty corpus");
  const AdamConfig adam{cfg.lr};
  for (std::size_t e = state.epochs_done; e < until_epoch; ++e) {
    std::vector<std::size_t> order(train.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng = Rng::substream(cfg.seed, "order/" + std::to_string(e));
    order_rng.shuffle(order);
    Rng dropout_rng = Rng::substream(cfg.seed, "dropout/" + std::to_string(e));

    EpochStats st{e + 1};
    for (std::size_t i : order) {
      const auto& s = train.samples[i];
      auto fr = state.model.forward(s.features, Mode::Train, &dropout_rng);
      const auto loss = total_loss(fr.logits, s.seq, spec, prior, cfg);
      state.model.backward(fr.tape, loss.grads);
      adam_step(state.model.params(), state.adam, adam);
      st.loss += loss.value;
      st.classification += loss.classification;
      st.smoothing += loss.smoothing;
    }
    const double n = static_cast<double>(order.size());
    st.loss /= n;
    st.classification /= n;
    st.smoothing /= n;
    state.log.push_back(st);
    state.epochs_done = e + 1;
    if (on_epoch) on_epoch(st);
  }
}

}  // namespace gtla
