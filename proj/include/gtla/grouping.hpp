#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gtla/common.hpp"
#include "gtla/data.hpp"

namespace gtla {

/// Normalized per-class frame occurrence of one sequence.
struct Distribution {
  std::vector<double> probs;
};

inline Distribution action_frequency(const FrameSeq& seq, std::size_t num_classes) {
  Distribution q{std::vector<double>(num_classes, 0.0)};
  for (int l : seq.labels) q.probs.at(static_cast<std::size_t>(l)) += 1.0;
  const double T = static_cast<double>(seq.length());
  for (auto& p : q.probs) p /= T;
  return q;
}

inline constexpr double kKlFloor = 1e-8;

/// Mean of forward and backward KL divergence. 0·log(0/x) terms vanish and
/// zero denominators are floored at 1e-8.
inline double symmetric_kl(const Distribution& a, const Distribution& b) {
  if (a.probs.size() != b.probs.size()) throw Error(Error::Kind::Dimension, "symmetric_kl: length mismatch");
  auto kl = [](const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      if (p[c] <= 0.0) continue;
      s += p[c] * std::log(p[c] / std::max(q[c], kKlFloor));
    }
    return s;
  };
  return 0.5 * (kl(a.probs, b.probs) + kl(b.probs, a.probs));
}

enum class Linkage { Average, Complete, Single };

inline std::string to_string(Linkage l) {
  switch (l) {
    case Linkage::Average: return "average";
    case Linkage::Complete: return "complete";
    case Linkage::Single: return "single";
  }
  return "average";
}

inline Linkage linkage_from_string(const std::string& s) {
  if (s == "average") return Linkage::Average;
  if (s == "complete") return Linkage::Complete;
  if (s == "single") return Linkage::Single;
  throw Error(Error::Kind::Config, "unknown linkage '" + s + "'");
}

/// Agglomerative clustering on a precomputed distance matrix.
///
/// Clusters are merged pairwise (closest pair first, ties to the
/// lexicographically smallest index pair) until `n` remain. Returned ids are
/// numbered in order of each cluster's first member.
inline std::vector<int> hierarchical_cluster(const Matrix& dist, std::size_t n, Linkage linkage = Linkage::Average) {
  const std::size_t N = dist.rows();
  if (dist.cols() != N) throw Error(Error::Kind::Dimension, "hierarchical_cluster: distance matrix not square");
  if (n == 0) throw Error(Error::Kind::Config, "hierarchical_cluster: n must be >= 1");
  if (n > N) throw Error(Error::Kind::Config, "hierarchical_cluster: n exceeds number of sequences");

  Matrix d = dist;
  std::vector<std::size_t> size(N, 1);
  std::vector<bool> alive(N, true);
  std::vector<std::size_t> root(N);
  for (std::size_t i = 0; i < N; ++i) root[i] = i;

  for (std::size_t remaining = N; remaining > n; --remaining) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < N; ++j) {
        if (alive[j] && d(i, j) < best) {
          best = d(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    // Lance-Williams update, cluster bj folded into bi
    for (std::size_t k = 0; k < N; ++k) {
      if (!alive[k] || k == bi || k == bj) continue;
      double v = 0.0;
      switch (linkage) {
        case Linkage::Average:
          v = (static_cast<double>(size[bi]) * d(bi, k) + static_cast<double>(size[bj]) * d(bj, k)) /
              static_cast<double>(size[bi] + size[bj]);
          break;
        case Linkage::Complete: v = std::max(d(bi, k), d(bj, k)); break;
        case Linkage::Single: v = std::min(d(bi, k), d(bj, k)); break;
      }
      d(bi, k) = d(k, bi) = v;
    }
    size[bi] += size[bj];
    alive[bj] = false;
    for (auto& r : root)
      if (r == bj) r = bi;
  }

  std::map<std::size_t, int> relabel;
  std::vector<int> out(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto [it, inserted] = relabel.emplace(root[i], static_cast<int>(relabel.size()));
    out[i] = it->second;
  }
  return out;
}

inline Matrix distance_matrix(const std::vector<Distribution>& qs) {
  Matrix d(qs.size(), qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i)
    for (std::size_t j = i + 1; j < qs.size(); ++j) d(i, j) = d(j, i) = symmetric_kl(qs[i], qs[j]);
  return d;
}

// ---------------------------------------------------------------------------
// Group structure
// ---------------------------------------------------------------------------

struct ByActivity {};
struct ByClustering {
  std::size_t n = 1;
  Linkage linkage = Linkage::Average;
};
using GroupingMode = std::variant<ByActivity, ByClustering>;

/// Partition of the training corpus into groups, each with its own local
/// class vocabulary. Local ids follow ascending global id; when present the
/// auxiliary `others` class takes the last local id.
struct GroupSpec {
  std::size_t num_classes = 0;  // global vocabulary size
  bool has_others = true;
  bool by_clustering = false;
  std::map<std::string, int> group_of_activity;
  std::map<std::string, int> group_of_sequence;
  std::vector<std::vector<int>> classes_of_group;
  std::vector<double> alpha;
  std::vector<std::vector<int>> global_to_local;  // -1 where absent
  std::vector<Distribution> centroids;            // clustering diagnostics only

  std::size_t n() const noexcept { return classes_of_group.size(); }

  std::size_t num_local(std::size_t k) const { return classes_of_group.at(k).size() + (has_others ? 1 : 0); }

  /// Local id of `others`, or -1 when the group spec has no auxiliary class.
  int others_id(std::size_t k) const { return has_others ? static_cast<int>(classes_of_group.at(k).size()) : -1; }

  int local_of(std::size_t k, int global) const { return global_to_local.at(k).at(static_cast<std::size_t>(global)); }

  int global_of(std::size_t k, int local) const { return classes_of_group.at(k).at(static_cast<std::size_t>(local)); }

  std::vector<std::size_t> head_sizes() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < n(); ++k) out.push_back(num_local(k));
    return out;
  }

  /// Group of a training sequence (by sequence id first, then activity).
  std::optional<int> group_of(const FrameSeq& seq) const {
    if (auto it = group_of_sequence.find(seq.id); it != group_of_sequence.end()) return it->second;
    if (auto it = group_of_activity.find(seq.activity); it != group_of_activity.end()) return it->second;
    if (n() == 1 && !by_clustering) return 0;
    return std::nullopt;
  }

  int require_group(const FrameSeq& seq) const {
    auto g = group_of(seq);
    if (!g) throw Error(Error::Kind::Value, "sequence '" + seq.id + "' (activity '" + seq.activity + "') has no group");
    return *g;
  }

  /// Nearest-centroid assignment; recorded for diagnostics, never used by inference.
  int nearest_centroid(const Distribution& q) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      const double d = symmetric_kl(q, centroids[k]);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(k);
      }
    }
    return best;
  }
};

namespace detail {

inline void finish_group_spec(GroupSpec& spec, const std::vector<FrameSeq>& train, const std::vector<int>& group_of_seq) {
  const std::size_t n = spec.classes_of_group.size();
  std::vector<std::set<int>> present(n);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto k = static_cast<std::size_t>(group_of_seq[i]);
    ++count[k];
    for (int l : train[i].labels) present[k].insert(l);
  }
  spec.alpha.assign(n, 0.0);
  spec.global_to_local.assign(n, std::vector<int>(spec.num_classes, -1));
  for (std::size_t k = 0; k < n; ++k) {
    if (count[k] == 0) throw Error(Error::Kind::Config, "group " + std::to_string(k) + " is empty");
    spec.classes_of_group[k].assign(present[k].begin(), present[k].end());
    for (std::size_t li = 0; li < spec.classes_of_group[k].size(); ++li)
      spec.global_to_local[k][static_cast<std::size_t>(spec.classes_of_group[k][li])] = static_cast<int>(li);
    spec.alpha[k] = static_cast<double>(train.size()) / (static_cast<double>(n) * static_cast<double>(count[k]));
  }
}

}  // namespace detail

inline GroupSpec build_group_spec(const std::vector<FrameSeq>& train, const GroupingMode& mode, std::size_t num_classes) {
  if (train.empty()) throw Error(Error::Kind::Config, "build_group_spec: empty training corpus");
  GroupSpec spec;
  spec.num_classes = num_classes;
  std::vector<int> group_of_seq(train.size());

  if (std::holds_alternative<ByActivity>(mode)) {
    // groups numbered by first appearance of their activity in the corpus
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto& a = train[i].activity;
      if (a.empty()) throw Error(Error::Kind::Config, "sequence '" + train[i].id + "' has no activity tag");
      auto [it, inserted] = spec.group_of_activity.emplace(a, static_cast<int>(spec.group_of_activity.size()));
      group_of_seq[i] = it->second;
    }
    spec.classes_of_group.resize(spec.group_of_activity.size());
  } else {
    const auto& c = std::get<ByClustering>(mode);
    spec.by_clustering = true;
    std::vector<Distribution> qs;
    for (const auto& s : train) qs.push_back(action_frequency(s, num_classes));
    group_of_seq = hierarchical_cluster(distance_matrix(qs), c.n, c.linkage);
    spec.classes_of_group.resize(c.n);
    for (std::size_t i = 0; i < train.size(); ++i) spec.group_of_sequence[train[i].id] = group_of_seq[i];
    spec.centroids.assign(c.n, Distribution{std::vector<double>(num_classes, 0.0)});
    std::vector<double> cnt(c.n, 0.0);
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto k = static_cast<std::size_t>(group_of_seq[i]);
      for (std::size_t l = 0; l < num_classes; ++l) spec.centroids[k].probs[l] += qs[i].probs[l];
      cnt[k] += 1.0;
    }
    for (std::size_t k = 0; k < c.n; ++k)
      for (auto& p : spec.centroids[k].probs) p /= cnt[k];
  }
  detail::finish_group_spec(spec, train, group_of_seq);
  return spec;
}

/// Single group over the whole vocabulary without an `others` class; the
/// layout used by the flat CE and LA baselines.
inline GroupSpec flat_group_spec(std::size_t num_classes) {
  GroupSpec spec;
  spec.num_classes = num_classes;
  spec.has_others = false;
  spec.classes_of_group.resize(1);
  spec.global_to_local.assign(1, std::vector<int>(num_classes));
  for (std::size_t c = 0; c < num_classes; ++c) {
    spec.classes_of_group[0].push_back(static_cast<int>(c));
    spec.global_to_local[0][c] = static_cast<int>(c);
  }
  spec.alpha = {1.0};
  return spec;
}

/// Local labels of `seq` in group `k`; classes outside the group map to `others`.
inline std::vector<int> relabel_for_group(std::span<const int> labels, const GroupSpec& spec, std::size_t k) {
  if (k >= spec.n()) throw Error(Error::Kind::Value, "relabel_for_group: invalid group index");
  std::vector<int> out(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const int local = spec.local_of(k, labels[t]);
    if (local < 0 && !spec.has_others)
      throw Error(Error::Kind::Value, "relabel_for_group: class outside the group and no others class");
    out[t] = local < 0 ? spec.others_id(k) : local;
  }
  return out;
}

inline std::vector<int> relabel_for_group(const FrameSeq& seq, const GroupSpec& spec, std::size_t k) {
  return relabel_for_group(std::span<const int>(seq.labels), spec, k);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const GroupSpec& spec, const ClassVocab& vocab) {
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t k = 0; k < spec.n(); ++k) {
    nlohmann::json names = nlohmann::json::array();
    for (int c : spec.classes_of_group[k]) names.push_back(vocab.name(c));
    groups.push_back({{"index", k}, {"classes", names}, {"alpha", spec.alpha[k]}});
  }
  nlohmann::json j = {{"version", 1},
                      {"num_classes", spec.num_classes},
                      {"has_others", spec.has_others},
                      {"mode", spec.by_clustering ? "cluster" : "activity"},
                      {"groups", groups},
                      {"group_of_activity", spec.group_of_activity},
                      {"group_of_sequence", spec.group_of_sequence}};
  if (!spec.centroids.empty()) {
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : spec.centroids) cs.push_back(c.probs);
    j["centroids"] = cs;
  }
  return j;
}

inline GroupSpec group_spec_from_json(const nlohmann::json& j, const ClassVocab& vocab) {
  GroupSpec spec;
  try {
    if (j.at("version").get<int>() != 1) throw Error(Error::Kind::Format, "group spec: unsupported version");
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    if (spec.num_classes != vocab.size()) throw Error(Error::Kind::Dimension, "group spec: vocabulary size mismatch");
    spec.has_others = j.at("has_others").get<bool>();
    spec.by_clustering = j.at("mode").get<std::string>() == "cluster";
    spec.group_of_activity = j.at("group_of_activity").get<std::map<std::string, int>>();
    spec.group_of_sequence = j.at("group_of_sequence").get<std::map<std::string, int>>();
    for (const auto& g : j.at("groups")) {
      std::vector<int> cls;
      for (const auto& name : g.at("classes")) cls.push_back(vocab.id(name.get<std::string>()));
      spec.classes_of_group.push_back(cls);
      spec.alpha.push_back(g.at("alpha").get<double>());
    }
    if (j.contains("centroids"))
      for (const auto& c : j.at("centroids")) spec.centroids.push_back({c.get<std::vector<double>>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Format, std::string("group spec: ") + e.what());
  }
  spec.global_to_local.assign(spec.n(), std::vector<int>(spec.num_classes, -1));
  for (std::size_t k = 0; k < spec.n(); ++k)
    for (std::size_t li = 0; li < spec.classes_of_group[k].size(); ++li)
      spec.global_to_local[k][static_cast<std::size_t>(spec.classes_of_group[k][li])] = static_cast<int>(li);
  return spec;
}

}  // namespace gtla
