#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "gtla/data.hpp"
#include "gtla/losses.hpp"
#include "gtla/metrics.hpp"
#include "gtla/model.hpp"

namespace gtla::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gtla_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline FrameSeq seq(std::vector<int> labels, std::string activity = "act", std::string id = "s") {
  return {std::move(labels), std::move(activity), std::move(id)};
}

// --- oracles ---------------------------------------------------------------

/// Literal reading of the before/after set mining: for every sequence and
/// every segment equal to c, every other segment position is visited and
/// its label filed as "before" or "after".
inline std::pair<std::set<int>, std::set<int>> temporal_sets_oracle(const std::vector<std::vector<int>>& corpus, int c) {
  std::set<int> A, B;
  for (const auto& frames : corpus) {
    std::vector<int> segs;
    for (std::size_t t = 0; t < frames.size(); ++t)
      if (t == 0 || frames[t] != frames[t - 1]) segs.push_back(frames[t]);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i] != c) continue;
      for (std::size_t j = 0; j < segs.size(); ++j) {
        if (j > i) A.insert(segs[j]);
        if (j < i) B.insert(segs[j]);
      }
    }
  }
  std::set<int> bf, af;
  for (int x : B)
    if (!A.count(x)) bf.insert(x);
  for (int x : A)
    if (!B.count(x)) af.insert(x);
  return {bf, af};
}

/// Full-table Wagner-Fischer.
inline std::size_t levenshtein_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] != b[j - 1]);
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
    }
  return d[a.size()][b.size()];
}

/// Maximum number of one-to-one same-class pairs with IoU >= threshold,
/// found by exhaustive search over assignments.
inline std::size_t optimal_tp_oracle(const SegmentSeq& pred, const SegmentSeq& gt, double threshold) {
  std::function<std::size_t(std::size_t, unsigned)> best = [&](std::size_t j, unsigned used) -> std::size_t {
    if (j == pred.size()) return 0;
    std::size_t r = best(j + 1, used);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (used & (1u << i) || gt[i].label != pred[j].label) continue;
      const double lo = static_cast<double>(std::max(pred[j].start, gt[i].start));
      const double hi = static_cast<double>(std::min(pred[j].end, gt[i].end));
      const double uni = static_cast<double>(std::max(pred[j].end, gt[i].end) - std::min(pred[j].start, gt[i].start));
      if (std::max(0.0, hi - lo) / uni >= threshold) r = std::max(r, 1 + best(j + 1, used | (1u << i)));
    }
    return r;
  };
  return best(0, 0);
}

/// Random segment list with at most `max_segs` segments over `labels` classes.
inline SegmentSeq random_segments(std::mt19937_64& rng, std::size_t max_segs, int labels, std::size_t T) {
  std::uniform_int_distribution<std::size_t> ns(1, std::min(max_segs, T));
  const std::size_t n = ns(rng);
  std::vector<std::size_t> cuts;
  std::vector<std::size_t> pool(T - 1);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;
  std::shuffle(pool.begin(), pool.end(), rng);
  cuts.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n - 1));
  cuts.push_back(0);
  cuts.push_back(T);
  std::sort(cuts.begin(), cuts.end());
  std::uniform_int_distribution<int> lab(0, labels - 1);
  SegmentSeq out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    int l = lab(rng);
    if (!out.empty() && labels > 1)
      while (l == out.back().label) l = lab(rng);
    out.push_back({l, cuts[i], cuts[i + 1]});
  }
  return out;
}

// --- finite differences ----------------------------------------------------

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +/- eps probes cross a ReLU kink
};

/// Central differences of total_loss with respect to every model parameter,
/// in Eval mode. Coordinates where the two probes see different ReLU sign
/// patterns are skipped: the loss is not differentiable across the kink.
inline GradCheck finite_difference_check(Model& model, const FeatureMatrix& x, const FrameSeq& y, const GroupSpec& spec,
                                         const TemporalPrior& prior, const TrainConfig& cfg, double eps = 1e-5) {
  auto eval = [&](std::vector<bool>* pattern) {
    const auto fr = model.forward(x, Mode::Eval);
    if (pattern) {
      pattern->clear();
      for (const auto& m : fr.tape.pre_relu)
        for (double v : m.data()) pattern->push_back(v > 0.0);
    }
    return total_loss(fr.logits, y, spec, prior, cfg).value;
  };
  {
    const auto fr = model.forward(x, Mode::Eval);
    const auto loss = total_loss(fr.logits, y, spec, prior, cfg);
    model.backward(fr.tape, loss.grads);
  }
  GradCheck out;
  std::vector<bool> plus_pattern, minus_pattern;
  for (auto& t : model.params().tensors) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double keep = t.value[i];
      t.value[i] = keep + eps;
      const double lp = eval(&plus_pattern);
      t.value[i] = keep - eps;
      const double lm = eval(&minus_pattern);
      t.value[i] = keep;
      if (plus_pattern != minus_pattern) {
        ++out.skipped;
        continue;
      }
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = t.grad[i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      ++out.checked;
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = t.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace gtla::testing
