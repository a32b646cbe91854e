#pragma once

#include <iostream>
#include <set>
#include <span>
#include <vector>

#include <json.hpp>

#include "gtla/common.hpp"
#include "gtla/data.hpp"
#include "gtla/grouping.hpp"

namespace gtla {

/// Class prior and ordering constraints of one group, indexed by local class.
/// The `others` class (if any) has no entry.
struct GroupPrior {
  std::vector<double> prior;
  std::vector<std::vector<int>> s_bf;  // classes that must precede c (sorted)
  std::vector<std::vector<int>> s_af;  // classes that must follow c (sorted)

  std::size_t num_real() const noexcept { return prior.size(); }
};

struct TemporalPrior {
  std::vector<GroupPrior> groups;
};

struct Bounds {
  std::size_t t1 = 0;
  std::size_t t2 = 0;

  bool contains(std::size_t t) const noexcept { return t1 <= t && t <= t2; }
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

/// Frame-frequency prior over the real local classes of group k.
inline std::vector<double> class_prior(const std::vector<FrameSeq>& group_train, const GroupSpec& spec, std::size_t k) {
  if (group_train.empty()) throw Error(Error::Kind::Config, "class_prior: group " + std::to_string(k) + " is empty");
  const std::size_t real = spec.classes_of_group.at(k).size();
  std::vector<double> counts(real, 0.0);
  double total = 0.0;
  for (const auto& s : group_train) {
    for (int l : s.labels) {
      const int local = spec.local_of(k, l);
      if (local < 0) continue;
      counts[static_cast<std::size_t>(local)] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw Error(Error::Kind::Config, "class_prior: group " + std::to_string(k) + " has no frames");
  for (auto& c : counts) c /= total;
  return counts;
}

struct TemporalSets {
  std::set<int> s_bf;
  std::set<int> s_af;
};

/// Must-precede / must-follow sets of class `c` mined from segment-level
/// label lists: A collects every label after any occurrence of c, B every
/// label before one; s_bf = B - A and s_af = A - B.
inline TemporalSets extract_temporal_sets(std::span<const std::vector<int>> label_seqs, int c) {
  std::set<int> after, before;
  bool seen = false;
  for (const auto& labels : label_seqs) {
    const auto ls = segment_labels(labels);
    for (std::size_t i = 0; i < ls.size(); ++i) {
      if (ls[i] != c) continue;
      seen = true;
      after.insert(ls.begin() + static_cast<std::ptrdiff_t>(i) + 1, ls.end());
      before.insert(ls.begin(), ls.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
  TemporalSets out;
  if (!seen) {
    std::clog << "warning: class " << c << " never occurs; temporal sets left empty\n";
    return out;
  }
  std::set_difference(before.begin(), before.end(), after.begin(), after.end(),
                      std::inserter(out.s_bf, out.s_bf.end()));
  std::set_difference(after.begin(), after.end(), before.begin(), before.end(),
                      std::inserter(out.s_af, out.s_af.end()));
  return out;
}

/// Priors and ordering sets for every group, mined on group-local labels.
inline TemporalPrior build_temporal_prior(const std::vector<FrameSeq>& train, const GroupSpec& spec) {
  TemporalPrior tp;
  for (std::size_t k = 0; k < spec.n(); ++k) {
    std::vector<FrameSeq> members;
    std::vector<std::vector<int>> local;
    for (const auto& s : train) {
      if (static_cast<std::size_t>(spec.require_group(s)) != k) continue;
      members.push_back(s);
      local.push_back(relabel_for_group(s, spec, k));
    }
    GroupPrior g;
    g.prior = class_prior(members, spec, k);
    const std::size_t real = g.prior.size();
    g.s_bf.resize(real);
    g.s_af.resize(real);
    for (std::size_t c = 0; c < real; ++c) {
      auto sets = extract_temporal_sets(local, static_cast<int>(c));
      g.s_bf[c].assign(sets.s_bf.begin(), sets.s_bf.end());
      g.s_af[c].assign(sets.s_af.begin(), sets.s_af.end());
    }
    tp.groups.push_back(std::move(g));
  }
  return tp;
}

/// Frame bounds [t1, t2] of class c given ground-truth local labels: t1 is
/// the last frame of any must-precede class, t2 the first frame of any
/// must-follow class. Missing classes fall back to 0 and T.
inline Bounds temporal_bounds(int c, std::span<const int> labels, const GroupPrior& g) {
  Bounds b{0, labels.size()};
  const auto& bf = g.s_bf.at(static_cast<std::size_t>(c));
  const auto& af = g.s_af.at(static_cast<std::size_t>(c));
  auto in = [](const std::vector<int>& set, int v) { return std::binary_search(set.begin(), set.end(), v); };
  if (!bf.empty()) {
    for (std::size_t t = labels.size(); t-- > 0;) {
      if (in(bf, labels[t])) {
        b.t1 = t;
        break;
      }
    }
  }
  if (!af.empty()) {
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (in(af, labels[t])) {
        b.t2 = t;
        break;
      }
    }
  }
  return b;
}

/// Multiplier on the prior offset of class c at frame t: 1 inside the
/// bounds, log p(y_t) / log p(c) outside (priors clamped).
inline double temporal_factor(int c, std::size_t t, const Bounds& bounds, int y_t, const GroupPrior& g) {
  if (bounds.contains(t)) return 1.0;
  const double pc = clamp_prior(g.prior.at(static_cast<std::size_t>(c)));
  const double py = clamp_prior(g.prior.at(static_cast<std::size_t>(y_t)));
  return std::log(py) / std::log(pc);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const TemporalPrior& tp, const GroupSpec& spec, const ClassVocab& vocab) {
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t k = 0; k < tp.groups.size(); ++k) {
    const auto& g = tp.groups[k];
    auto names = [&](const std::vector<int>& locals) {
      nlohmann::json a = nlohmann::json::array();
      for (int l : locals) a.push_back(vocab.name(spec.global_of(k, l)));
      return a;
    };
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < g.num_real(); ++c) {
      classes.push_back({{"name", vocab.name(spec.global_of(k, static_cast<int>(c)))},
                         {"prior", g.prior[c]},
                         {"before", names(g.s_bf[c])},
                         {"after", names(g.s_af[c])}});
    }
    groups.push_back({{"group", k}, {"classes", classes}});
  }
  return {{"version", 1}, {"groups", groups}};
}

inline TemporalPrior temporal_prior_from_json(const nlohmann::json& j, const GroupSpec& spec, const ClassVocab& vocab) {
  TemporalPrior tp;
  try {
    if (j.at("version").get<int>() != 1) throw Error(Error::Kind::Format, "temporal prior: unsupported version");
    const auto& groups = j.at("groups");
    if (groups.size() != spec.n()) throw Error(Error::Kind::Dimension, "temporal prior: group count mismatch");
    for (std::size_t k = 0; k < spec.n(); ++k) {
      const auto& classes = groups[k].at("classes");
      const std::size_t real = spec.classes_of_group[k].size();
      if (classes.size() != real) throw Error(Error::Kind::Dimension, "temporal prior: class count mismatch");
      GroupPrior g;
      g.prior.resize(real);
      g.s_bf.resize(real);
      g.s_af.resize(real);
      auto local = [&](const nlohmann::json& name) {
        const int l = spec.local_of(k, vocab.id(name.get<std::string>()));
        if (l < 0) throw Error(Error::Kind::Format, "temporal prior: class outside group");
        return l;
      };
      for (const auto& e : classes) {
        const auto c = static_cast<std::size_t>(local(e.at("name")));
        g.prior[c] = e.at("prior").get<double>();
        for (const auto& n : e.at("before")) g.s_bf[c].push_back(local(n));
        for (const auto& n : e.at("after")) g.s_af[c].push_back(local(n));
        std::sort(g.s_bf[c].begin(), g.s_bf[c].end());
        std::sort(g.s_af[c].begin(), g.s_af[c].end());
      }
      tp.groups.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Format, std::string("temporal prior: ") + e.what());
  }
  return tp;
}

}  // namespace gtla
