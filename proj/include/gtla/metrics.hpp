#pragma once

#include <iostream>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include <json.hpp>

#include "gtla/data.hpp"
#include "gtla/grouping.hpp"
#include "gtla/priors.hpp"

namespace gtla {

// ---------------------------------------------------------------------------
// Frame metrics
// ---------------------------------------------------------------------------

inline double mof_accuracy(std::span<const std::vector<int>> preds, std::span<const std::vector<int>> gts) {
  if (preds.size() != gts.size()) throw Error(Error::Kind::Dimension, "mof_accuracy: sequence count mismatch");
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != gts[i].size()) throw Error(Error::Kind::Dimension, "mof_accuracy: length mismatch");
    for (std::size_t t = 0; t < gts[i].size(); ++t) correct += preds[i][t] == gts[i][t];
    total += gts[i].size();
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

/// Per-class frame recall in percent; nullopt for classes without GT frames.
inline std::vector<std::optional<double>> per_class_recall(std::span<const std::vector<int>> preds,
                                                           std::span<const std::vector<int>> gts,
                                                           std::size_t num_classes) {
  std::vector<double> hit(num_classes, 0.0), total(num_classes, 0.0);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (std::size_t t = 0; t < gts[i].size(); ++t) {
      const auto g = static_cast<std::size_t>(gts[i][t]);
      total[g] += 1.0;
      hit[g] += preds[i][t] == gts[i][t];
    }
  }
  std::vector<std::optional<double>> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c)
    if (total[c] > 0.0) out[c] = 100.0 * hit[c] / total[c];
  return out;
}

/// 2ht/(h+t); 0 when both are 0.
inline double harmonic_mean(double h, double t) { return h + t == 0.0 ? 0.0 : 2.0 * h * t / (h + t); }

// ---------------------------------------------------------------------------
// Segment metrics
// ---------------------------------------------------------------------------

inline std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double edit_score(const SegmentSeq& pred, const SegmentSeq& gt) {
  std::vector<int> p, g;
  for (const auto& s : pred) p.push_back(s.label);
  for (const auto& s : gt) g.push_back(s.label);
  const std::size_t m = std::max(p.size(), g.size());
  if (m == 0) return 100.0;
  return 100.0 * (1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(m));
}

struct F1Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  F1Counts& operator+=(const F1Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct SegmentMatch {
  F1Counts counts;
  std::vector<bool> pred_matched;
};

inline double segment_iou(const Segment& a, const Segment& b) {
  const std::size_t lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
  const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
  const double uni = static_cast<double>(std::max(a.end, b.end) - std::min(a.start, b.start));
  return uni == 0.0 ? 0.0 : inter / uni;
}

/// Greedy matching in prediction order: each predicted segment takes the
/// still-unmatched same-class GT segment with the highest IoU if that IoU
/// reaches the threshold.
inline SegmentMatch match_segments(const SegmentSeq& pred, const SegmentSeq& gt, double threshold) {
  SegmentMatch m;
  m.pred_matched.assign(pred.size(), false);
  std::vector<bool> used(gt.size(), false);
  for (std::size_t j = 0; j < pred.size(); ++j) {
    double best = -1.0;
    std::size_t bi = gt.size();
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (used[i] || gt[i].label != pred[j].label) continue;
      const double iou = segment_iou(pred[j], gt[i]);
      if (iou > best) {
        best = iou;
        bi = i;
      }
    }
    if (bi < gt.size() && best >= threshold) {
      used[bi] = true;
      m.pred_matched[j] = true;
      ++m.counts.tp;
    } else {
      ++m.counts.fp;
    }
  }
  m.counts.fn = gt.size() - m.counts.tp;
  return m;
}

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline F1Result f1_at_iou(const SegmentSeq& pred, const SegmentSeq& gt, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(Error::Kind::Value, "f1_at_iou: threshold must be in (0,1)");
  const auto c = match_segments(pred, gt, threshold).counts;
  return {c.precision(), c.recall(), c.f1()};
}

// ---------------------------------------------------------------------------
// Head / tail
// ---------------------------------------------------------------------------

struct HeadTailSplit {
  std::set<int> head;
  std::set<int> tail;
  double threshold = 0.0;
  double imbalance_ratio = 0.0;
  std::vector<std::size_t> train_frames;
};

inline HeadTailSplit head_tail_split(const std::vector<FrameSeq>& train, std::size_t num_classes, double threshold) {
  if (!(threshold > 0.0)) throw Error(Error::Kind::Value, "head_tail_split: threshold must be > 0");
  HeadTailSplit s;
  s.threshold = threshold;
  s.train_frames.assign(num_classes, 0);
  for (const auto& seq : train)
    for (int l : seq.labels) ++s.train_frames[static_cast<std::size_t>(l)];
  std::size_t mx = 0, mn = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto n = s.train_frames[c];
    (static_cast<double>(n) >= threshold ? s.head : s.tail).insert(static_cast<int>(c));
    if (n == 0) continue;
    mx = std::max(mx, n);
    mn = mn == 0 ? n : std::min(mn, n);
  }
  s.imbalance_ratio = mn == 0 ? 0.0 : static_cast<double>(mx) / static_cast<double>(mn);
  if (s.tail.empty()) std::clog << "warning: head/tail split has an empty tail; harmonic means report the head value\n";
  return s;
}

struct HeadTail {
  double head = 0.0;
  double tail = 0.0;
  double hmean = 0.0;
};

/// Averages a per-class metric over the head and tail classes that have a
/// value. An empty tail reports the head value as the harmonic mean.
inline HeadTail summarize_head_tail(const std::vector<std::optional<double>>& per_class, const HeadTailSplit& split,
                                    const std::set<int>& excluded = {}) {
  auto mean_over = [&](const std::set<int>& classes) {
    double s = 0.0;
    std::size_t n = 0;
    for (int c : classes) {
      if (excluded.count(c) || !per_class.at(static_cast<std::size_t>(c))) continue;
      s += *per_class[static_cast<std::size_t>(c)];
      ++n;
    }
    return std::pair{n == 0 ? 0.0 : s / static_cast<double>(n), n};
  };
  const auto [h, nh] = mean_over(split.head);
  const auto [t, nt] = mean_over(split.tail);
  HeadTail out{h, t, harmonic_mean(h, t)};
  if (nt == 0) out.hmean = h;
  return out;
}

/// Per-class segment F1 (percent) with TP/FP/FN pooled over the corpus;
/// nullopt for classes without GT segments.
inline std::vector<std::optional<double>> per_class_f1(std::span<const SegmentSeq> preds, std::span<const SegmentSeq> gts,
                                                       std::size_t num_classes, double threshold) {
  std::vector<F1Counts> counts(num_classes);
  std::vector<bool> has_gt(num_classes, false);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      SegmentSeq p, g;
      for (const auto& s : preds[i])
        if (s.label == static_cast<int>(c)) p.push_back(s);
      for (const auto& s : gts[i])
        if (s.label == static_cast<int>(c)) g.push_back(s);
      if (p.empty() && g.empty()) continue;
      if (!g.empty()) has_gt[c] = true;
      counts[c] += match_segments(p, g, threshold).counts;
    }
  }
  std::vector<std::optional<double>> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c)
    if (has_gt[c]) out[c] = 100.0 * counts[c].f1();
  return out;
}

inline HeadTail balanced_f1(std::span<const SegmentSeq> preds, std::span<const SegmentSeq> gts, double threshold,
                            const HeadTailSplit& split, std::size_t num_classes, const std::set<int>& excluded = {}) {
  return summarize_head_tail(per_class_f1(preds, gts, num_classes, threshold), split, excluded);
}

// ---------------------------------------------------------------------------
// False-positive taxonomy
// ---------------------------------------------------------------------------

struct FpCounts {
  std::size_t tp = 0;
  std::size_t fp1 = 0;  // class outside the sequence's group
  std::size_t fp2 = 0;  // in-group class, midpoint outside its temporal bounds
  std::size_t fp3 = 0;  // in-group, within bounds

  std::size_t total() const noexcept { return tp + fp1 + fp2 + fp3; }
  FpCounts& operator+=(const FpCounts& o) {
    tp += o.tp;
    fp1 += o.fp1;
    fp2 += o.fp2;
    fp3 += o.fp3;
    return *this;
  }
};

/// Classifies every predicted segment of one sequence. Matches use F1@0.25;
/// bounds come from the ground-truth labels of the sequence's own group.
inline FpCounts fp_taxonomy(const SegmentSeq& pred, const FrameSeq& gt, const GroupSpec& spec,
                            const TemporalPrior& prior, int gt_group, double threshold = 0.25) {
  const auto m = match_segments(pred, segments_from_frames(gt.labels), threshold);
  const auto k = static_cast<std::size_t>(gt_group);
  const auto local = relabel_for_group(gt, spec, k);
  const auto& g = prior.groups.at(k);
  FpCounts out;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (m.pred_matched[j]) {
      ++out.tp;
      continue;
    }
    const int c = spec.local_of(k, pred[j].label);
    if (c < 0) {
      ++out.fp1;
      continue;
    }
    const Bounds b = temporal_bounds(c, local, g);
    const double mid = 0.5 * static_cast<double>(pred[j].start + pred[j].end - 1);
    if (mid < static_cast<double>(b.t1) || mid > static_cast<double>(b.t2))
      ++out.fp2;
    else
      ++out.fp3;
  }
  return out;
}

inline double group_id_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw Error(Error::Kind::Dimension, "group_id_accuracy: length mismatch");
  if (predicted.empty()) return 100.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) ok += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(ok) / static_cast<double>(predicted.size());
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr double kF1Thresholds[3] = {0.10, 0.25, 0.50};

struct MetricsReport {
  std::size_t sequences = 0;
  double mof = 0.0;
  double edit = 0.0;
  double f1[3] = {0.0, 0.0, 0.0};  // global F1 at 0.10 / 0.25 / 0.50, percent
  HeadTail recall;
  HeadTail balanced_f1[3];
  FpCounts fp;
  double group_id_accuracy = 100.0;
  bool tail_empty = false;
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> class_recall;
  std::vector<std::optional<double>> class_f1_25;
  std::vector<bool> class_is_head;
};

struct EvalOptions {
  std::set<int> excluded;  // classes dropped from every metric (e.g. background)
};

struct EvalInput {
  const std::vector<FrameSeq>* gts = nullptr;
  const std::vector<std::vector<int>>* preds = nullptr;
  const std::vector<int>* predicted_groups = nullptr;  // optional
  const std::vector<int>* true_groups = nullptr;       // optional
};

/// Full global + balanced evaluation. `ref_spec` and `ref_prior` define the
/// activity groups and ordering used by the FP taxonomy; they are
/// independent of how the evaluated model grouped its heads.
inline MetricsReport evaluate(const EvalInput& in, const ClassVocab& vocab, const HeadTailSplit& split,
                              const GroupSpec& ref_spec, const TemporalPrior& ref_prior, const EvalOptions& opt = {}) {
  const auto& gts = *in.gts;
  const auto& preds = *in.preds;
  if (gts.size() != preds.size()) throw Error(Error::Kind::Dimension, "evaluate: sequence count mismatch");
  const std::size_t L = vocab.size();
  MetricsReport r;
  r.sequences = gts.size();
  r.tail_empty = split.tail.empty();

  std::vector<std::vector<int>> gt_frames, pred_frames;
  std::vector<SegmentSeq> gt_segs, pred_segs;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (preds[i].size() != gts[i].length())
      throw Error(Error::Kind::Dimension, "evaluate: prediction length mismatch for '" + gts[i].id + "'");
    std::vector<int> g, p;
    for (std::size_t t = 0; t < gts[i].length(); ++t) {
      if (opt.excluded.count(gts[i].labels[t])) continue;
      g.push_back(gts[i].labels[t]);
      p.push_back(preds[i][t]);
    }
    gt_frames.push_back(std::move(g));
    pred_frames.push_back(std::move(p));
    auto drop = [&](SegmentSeq s) {
      std::erase_if(s, [&](const Segment& x) { return opt.excluded.count(x.label) > 0; });
      return s;
    };
    gt_segs.push_back(drop(segments_from_frames(gts[i].labels)));
    pred_segs.push_back(drop(segments_from_frames(preds[i])));
  }

  r.mof = mof_accuracy(pred_frames, gt_frames);
  double edit = 0.0;
  for (std::size_t i = 0; i < gt_segs.size(); ++i) edit += edit_score(pred_segs[i], gt_segs[i]);
  r.edit = gt_segs.empty() ? 0.0 : edit / static_cast<double>(gt_segs.size());
  for (int k = 0; k < 3; ++k) {
    F1Counts c;
    for (std::size_t i = 0; i < gt_segs.size(); ++i) c += match_segments(pred_segs[i], gt_segs[i], kF1Thresholds[k]).counts;
    r.f1[k] = 100.0 * c.f1();
  }

  r.class_recall = per_class_recall(pred_frames, gt_frames, L);
  r.recall = summarize_head_tail(r.class_recall, split, opt.excluded);
  for (int k = 0; k < 3; ++k) {
    auto pc = per_class_f1(pred_segs, gt_segs, L, kF1Thresholds[k]);
    r.balanced_f1[k] = summarize_head_tail(pc, split, opt.excluded);
    if (k == 1) r.class_f1_25 = std::move(pc);
  }
  r.class_names = vocab.names();
  for (std::size_t c = 0; c < L; ++c) r.class_is_head.push_back(split.head.count(static_cast<int>(c)) > 0);

  for (std::size_t i = 0; i < gts.size(); ++i) {
    const int g = in.true_groups ? (*in.true_groups)[i] : ref_spec.require_group(gts[i]);
    r.fp += fp_taxonomy(segments_from_frames(preds[i]), gts[i], ref_spec, ref_prior, g);
  }
  if (in.predicted_groups && in.true_groups) r.group_id_accuracy = group_id_accuracy(*in.predicted_groups, *in.true_groups);
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  auto ht = [](const HeadTail& h) { return nlohmann::json{{"head", h.head}, {"tail", h.tail}, {"hmean", h.hmean}}; };
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    classes[r.class_names[c]] = {{"recall", opt(r.class_recall[c])},
                                 {"f1_25", opt(r.class_f1_25[c])},
                                 {"split", r.class_is_head[c] ? "head" : "tail"}};
  }
  return {{"schema_version", kMetricsSchemaVersion},
          {"sequences", r.sequences},
          {"global",
           {{"mof", r.mof}, {"edit", r.edit}, {"f1_10", r.f1[0]}, {"f1_25", r.f1[1]}, {"f1_50", r.f1[2]}}},
          {"balanced",
           {{"recall", ht(r.recall)},
            {"f1_10", ht(r.balanced_f1[0])},
            {"f1_25", ht(r.balanced_f1[1])},
            {"f1_50", ht(r.balanced_f1[2])},
            {"tail_empty", r.tail_empty}}},
          {"fp_taxonomy", {{"tp", r.fp.tp}, {"fp1", r.fp.fp1}, {"fp2", r.fp.fp2}, {"fp3", r.fp.fp3}}},
          {"group_id_accuracy", r.group_id_accuracy},
          {"classes", classes}};
}

/// Structural check of a metrics JSON document; returns an empty string
/// when valid, otherwise the first problem found.
inline std::string validate_metrics_json(const nlohmann::json& j) {
  auto rate = [](const nlohmann::json& v) { return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 100.0; };
  if (!j.is_object()) return "not an object";
  if (j.value("schema_version", -1) != kMetricsSchemaVersion) return "schema_version";
  for (const char* k : {"global", "balanced", "fp_taxonomy", "classes", "group_id_accuracy", "sequences"})
    if (!j.contains(k)) return std::string("missing ") + k;
  for (const char* k : {"mof", "edit", "f1_10", "f1_25", "f1_50"})
    if (!j["global"].contains(k) || !rate(j["global"][k])) return std::string("global.") + k;
  for (const char* k : {"recall", "f1_10", "f1_25", "f1_50"})
    for (const char* s : {"head", "tail", "hmean"})
      if (!j["balanced"].contains(k) || !rate(j["balanced"][k][s])) return std::string("balanced.") + k + "." + s;
  for (const char* k : {"tp", "fp1", "fp2", "fp3"})
    if (!j["fp_taxonomy"].contains(k) || !j["fp_taxonomy"][k].is_number_unsigned()) return std::string("fp_taxonomy.") + k;
  if (!rate(j["group_id_accuracy"])) return "group_id_accuracy";
  return {};
}

}  // namespace gtla
