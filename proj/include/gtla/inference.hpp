#pragma once

#include <filesystem>
#include <span>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gtla/data.hpp"
#include "gtla/grouping.hpp"
#include "gtla/losses.hpp"
#include "gtla/model.hpp"

namespace gtla {

struct Prediction {
  int group = 0;
  std::vector<int> labels;         // global class ids
  std::vector<double> confidence;  // winning probability per frame
  std::vector<double> others_mean; // per group mean `others` probability (empty without others)
};

/// Group whose `others` class has the lowest mean probability over frames;
/// ties go to the lowest index. Specs without `others` always return 0.
inline int identify_group(std::span<const Matrix> logits, const GroupSpec& spec,
                          std::vector<double>* others_mean = nullptr) {
  if (logits.size() != spec.n()) throw Error(Error::Kind::Dimension, "identify_group: one logit matrix per group expected");
  if (!spec.has_others) return 0;
  int best = 0;
  double best_v = 0.0;
  std::vector<double> means;
  for (std::size_t i = 0; i < spec.n(); ++i) {
    const Matrix lp = log_softmax(logits[i]);
    const auto o = static_cast<std::size_t>(spec.others_id(i));
    double s = 0.0;
    for (std::size_t t = 0; t < lp.cols(); ++t) s += std::exp(lp(o, t));
    const double m = s / static_cast<double>(lp.cols());
    means.push_back(m);
    if (i == 0 || m < best_v) {
      best_v = m;
      best = static_cast<int>(i);
    }
  }
  if (others_mean) *others_mean = std::move(means);
  return best;
}

struct Decoded {
  std::vector<int> labels;
  std::vector<double> confidence;
};

/// Per-frame argmax over the real classes of group k (never `others`),
/// mapped to global ids. Ties go to the lowest local index.
inline Decoded decode_labels(const Matrix& logits, const GroupSpec& spec, std::size_t k) {
  const std::size_t real = spec.classes_of_group.at(k).size();
  if (logits.rows() != spec.num_local(k)) throw Error(Error::Kind::Dimension, "decode_labels: head size mismatch");
  const Matrix p = softmax(logits);
  Decoded out;
  for (std::size_t t = 0; t < p.cols(); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < real; ++c)
      if (p(c, t) > p(best, t)) best = c;
    out.labels.push_back(spec.global_of(k, static_cast<int>(best)));
    out.confidence.push_back(p(best, t));
  }
  return out;
}

inline Prediction predict(const Model& model, const FeatureMatrix& x, const GroupSpec& spec) {
  const auto fr = model.forward(x, Mode::Eval);
  Prediction pred;
  pred.group = identify_group(fr.logits, spec, &pred.others_mean);
  auto d = decode_labels(fr.logits[static_cast<std::size_t>(pred.group)], spec, static_cast<std::size_t>(pred.group));
  pred.labels = std::move(d.labels);
  pred.confidence = std::move(d.confidence);
  return pred;
}

/// Ground-truth group of an evaluation sequence: the group spec's own assignment
/// when known, otherwise the nearest clustering centroid.
inline int reference_group(const FrameSeq& seq, const GroupSpec& spec) {
  if (auto g = spec.group_of(seq)) return *g;
  if (!spec.centroids.empty()) return spec.nearest_centroid(action_frequency(seq, spec.num_classes));
  throw Error(Error::Kind::Value, "sequence '" + seq.id + "' has no reference group");
}

struct CorpusPrediction {
  std::vector<Prediction> predictions;
  std::vector<bool> group_correct;
};

/// Eval-mode predictions for every sample, in input order. Work is split
/// across `threads`; the result does not depend on the thread count.
inline CorpusPrediction predict_corpus(const Model& model, const Corpus& corpus, const GroupSpec& spec,
                                       std::size_t threads = 1) {
  if (corpus.vocab.size() != spec.num_classes)
    throw Error(Error::Kind::Dimension, "predict_corpus: vocabulary size does not match the group spec");
  for (const auto& s : corpus.samples)
    if (s.features.dim != model.config().input_dim)
      throw Error(Error::Kind::Dimension, "predict_corpus: sequence '" + s.seq.id + "' has feature dim " +
                                              std::to_string(s.features.dim));
  CorpusPrediction out;
  out.predictions.resize(corpus.samples.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < corpus.samples.size(); i += stride)
      out.predictions[i] = predict(model, corpus.samples[i].features, spec);
  };
  threads = std::max<std::size_t>(1, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < corpus.samples.size(); ++i)
    out.group_correct.push_back(out.predictions[i].group == reference_group(corpus.samples[i].seq, spec));
  return out;
}

/// Label files in groundTruth format plus a JSON sidecar per sequence.
inline void write_predictions(const std::filesystem::path& dir, const Corpus& corpus, const CorpusPrediction& cp) {
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& id = corpus.samples[i].seq.id;
    const auto& p = cp.predictions[i];
    write_label_file(dir / (id + ".txt"), p.labels, corpus.vocab);
    nlohmann::json side = {{"id", id}, {"group", p.group}, {"group_others_prob", p.others_mean},
                           {"group_correct", static_cast<bool>(cp.group_correct[i])}};
    auto out = detail::open_out(dir / (id + ".json"));
    out << side.dump(2) << '\n';
  }
}

}  // namespace gtla
