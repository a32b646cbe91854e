#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gtla/common.hpp"

namespace gtla {

// ---------------------------------------------------------------------------
// Vocabulary, sequences, features
// ---------------------------------------------------------------------------

/// Dense 0-based mapping between action-class names and ids.
class ClassVocab {
 public:
  ClassVocab() = default;

  static ClassVocab from_names(std::vector<std::string> names) {
    ClassVocab v;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!v.index_.emplace(names[i], static_cast<int>(i)).second)
        throw Error(Error::Kind::Format, "duplicate class name '" + names[i] + "'");
    }
    v.names_ = std::move(names);
    return v;
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::optional<int> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int id(const std::string& name) const {
    auto found = find(name);
    if (!found) throw Error(Error::Kind::Value, "unknown class '" + name + "'");
    return *found;
  }

  friend bool operator==(const ClassVocab& a, const ClassVocab& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

/// Per-frame ground-truth labels of one video.
struct FrameSeq {
  std::vector<int> labels;
  std::string activity;
  std::string id;

  std::size_t length() const noexcept { return labels.size(); }
};

/// D x T features, frame-major: all D values of frame 0, then frame 1, ...
struct FeatureMatrix {
  std::size_t dim = 0;
  std::size_t length = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t d, std::size_t t) : dim(d), length(t), values(d * t, 0.0) {}

  double& at(std::size_t t, std::size_t d) { return values[t * dim + d]; }
  double at(std::size_t t, std::size_t d) const { return values[t * dim + d]; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct Segment {
  int label = 0;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive

  std::size_t length() const noexcept { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

using SegmentSeq = std::vector<Segment>;

/// Maximal runs of equal labels, in temporal order.
inline SegmentSeq segments_from_frames(std::span<const int> labels) {
  SegmentSeq out;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= labels.size(); ++t) {
    if (t == labels.size() || labels[t] != labels[start]) {
      out.push_back({labels[start], start, t});
      start = t;
    }
  }
  return out;
}

inline std::vector<int> frames_from_segments(const SegmentSeq& segs) {
  std::vector<int> out;
  for (const auto& s : segs) out.insert(out.end(), s.length(), s.label);
  return out;
}

/// Segment-level label list ("get_seg_label").
inline std::vector<int> segment_labels(std::span<const int> labels) {
  std::vector<int> out;
  for (const auto& s : segments_from_frames(labels)) out.push_back(s.label);
  return out;
}

// ---------------------------------------------------------------------------
// Text formats
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(Error::Kind::Io, "cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw Error(Error::Kind::Io, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace detail

/// Parses "<id> <name>" lines. Ids must be unique and dense from 0.
inline ClassVocab parse_mapping(std::istream& in) {
  std::map<int, std::string> by_id;
  std::set<std::string> seen_names;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long id = -1;
    std::string name;
    if (!(ls >> id >> name) || id < 0) {
      throw Error(Error::Kind::Format, "mapping line " + std::to_string(lineno) + ": expected '<id> <name>'");
    }
    if (by_id.count(static_cast<int>(id)))
      throw Error(Error::Kind::Format, "mapping line " + std::to_string(lineno) + ": duplicate id " + std::to_string(id));
    if (!seen_names.insert(name).second)
      throw Error(Error::Kind::Format, "mapping line " + std::to_string(lineno) + ": duplicate name '" + name + "'");
    by_id.emplace(static_cast<int>(id), name);
  }
  if (by_id.empty()) throw Error(Error::Kind::Format, "empty mapping");
  std::vector<std::string> names;
  int expected = 0;
  for (auto& [id, name] : by_id) {
    if (id != expected) throw Error(Error::Kind::Format, "mapping ids not dense: missing id " + std::to_string(expected));
    names.push_back(name);
    ++expected;
  }
  return ClassVocab::from_names(std::move(names));
}

inline ClassVocab load_mapping(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return parse_mapping(in);
}

inline void write_mapping(const std::filesystem::path& path, const ClassVocab& vocab) {
  auto out = detail::open_out(path);
  for (std::size_t i = 0; i < vocab.size(); ++i) out << i << ' ' << vocab.names()[i] << '\n';
}

/// One class name per line (groundTruth convention).
inline FrameSeq parse_labels(std::istream& in, const ClassVocab& vocab) {
  FrameSeq seq;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    auto id = vocab.find(line);
    if (!id) throw Error(Error::Kind::Value, "label line " + std::to_string(lineno) + ": unknown class '" + line + "'");
    seq.labels.push_back(*id);
  }
  if (seq.labels.empty()) throw Error(Error::Kind::Format, "label file has no frames");
  return seq;
}

inline FrameSeq load_label_file(const std::filesystem::path& path, const ClassVocab& vocab) {
  auto in = detail::open_in(path);
  FrameSeq seq = parse_labels(in, vocab);
  seq.id = path.stem().string();
  return seq;
}

inline void write_label_file(const std::filesystem::path& path, std::span<const int> labels, const ClassVocab& vocab) {
  auto out = detail::open_out(path);
  for (int l : labels) out << vocab.name(l) << '\n';
}

// ---------------------------------------------------------------------------
// Binary feature format
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 8> kFeatureMagic = {'G', 'T', 'L', 'A', 'F', 'E', 'A', 'T'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline bool get_f32(std::istream& in, float& f) {
  std::uint32_t bits;
  if (!get_u32(in, bits)) return false;
  std::memcpy(&f, &bits, 4);
  return true;
}

inline void put_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u32(out, static_cast<std::uint32_t>(bits));
  put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

inline bool get_f64(std::istream& in, double& d) {
  std::uint32_t lo, hi;
  if (!get_u32(in, lo) || !get_u32(in, hi)) return false;
  const std::uint64_t bits = static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
  std::memcpy(&d, &bits, 8);
  return true;
}

}  // namespace detail

/// Reads a feature stream. `expected_dim` of 0 accepts any dimension.
inline FeatureMatrix read_features(std::istream& in, std::size_t expected_dim = 0) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), 8) || magic != kFeatureMagic)
    throw Error(Error::Kind::Format, "feature file: bad magic");
  std::uint32_t d = 0, t = 0;
  if (!detail::get_u32(in, d) || !detail::get_u32(in, t))
    throw Error(Error::Kind::Truncated, "feature file: truncated header");
  if (expected_dim != 0 && d != expected_dim)
    throw Error(Error::Kind::Dimension,
                "feature file: dimension " + std::to_string(d) + " != expected " + std::to_string(expected_dim));
  FeatureMatrix fm(d, t);
  for (std::size_t i = 0; i < fm.values.size(); ++i) {
    float f;
    if (!detail::get_f32(in, f))
      throw Error(Error::Kind::Truncated, "feature file: truncated payload after " + std::to_string(i) + " of " +
                                              std::to_string(fm.values.size()) + " values");
    fm.values[i] = f;
  }
  return fm;
}

inline FeatureMatrix load_features(const std::filesystem::path& path, std::size_t expected_dim = 0) {
  auto in = detail::open_in(path, true);
  return read_features(in, expected_dim);
}

inline void write_features(std::ostream& out, const FeatureMatrix& fm) {
  out.write(kFeatureMagic.data(), 8);
  detail::put_u32(out, static_cast<std::uint32_t>(fm.dim));
  detail::put_u32(out, static_cast<std::uint32_t>(fm.length));
  for (double v : fm.values) detail::put_f32(out, static_cast<float>(v));
}

inline void save_features(const std::filesystem::path& path, const FeatureMatrix& fm) {
  auto out = detail::open_out(path, true);
  write_features(out, fm);
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

struct Sample {
  FrameSeq seq;
  FeatureMatrix features;
};

struct Corpus {
  ClassVocab vocab;
  std::vector<Sample> samples;

  std::size_t feature_dim() const { return samples.empty() ? 0 : samples.front().features.dim; }

  std::vector<FrameSeq> sequences() const {
    std::vector<FrameSeq> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.seq);
    return out;
  }
};

/// Writes mapping, label files, feature files and a JSON manifest under
/// `dir`. Returns the manifest path (`dir/<split>.json`).
inline std::filesystem::path write_corpus(const std::filesystem::path& dir, const Corpus& corpus,
                                          const std::string& split) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_mapping(dir / "mapping.txt", corpus.vocab);
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : corpus.samples) {
    const std::string labels_rel = "groundTruth/" + s.seq.id + ".txt";
    const std::string feats_rel = "features/" + s.seq.id + ".bin";
    write_label_file(dir / labels_rel, s.seq.labels, corpus.vocab);
    save_features(dir / feats_rel, s.features);
    seqs.push_back({{"id", s.seq.id}, {"activity", s.seq.activity}, {"labels", labels_rel}, {"features", feats_rel}});
  }
  nlohmann::json manifest = {{"version", 1},
                             {"mapping", "mapping.txt"},
                             {"feature_dim", corpus.feature_dim()},
                             {"sequences", seqs}};
  const fs::path path = dir / (split + ".json");
  auto out = detail::open_out(path);
  out << manifest.dump(2) << '\n';
  return path;
}

inline Corpus read_corpus(const std::filesystem::path& manifest_path) {
  auto in = detail::open_in(manifest_path);
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Format, "manifest '" + manifest_path.string() + "': " + e.what());
  }
  const auto base = manifest_path.parent_path();
  Corpus corpus;
  try {
    corpus.vocab = load_mapping(base / m.at("mapping").get<std::string>());
    const std::size_t dim = m.at("feature_dim").get<std::size_t>();
    for (const auto& e : m.at("sequences")) {
      Sample s;
      s.seq = load_label_file(base / e.at("labels").get<std::string>(), corpus.vocab);
      s.seq.id = e.at("id").get<std::string>();
      s.seq.activity = e.at("activity").get<std::string>();
      s.features = load_features(base / e.at("features").get<std::string>(), dim);
      if (s.features.length != s.seq.length())
        throw Error(Error::Kind::Dimension, "sequence '" + s.seq.id + "': " + std::to_string(s.features.length) +
                                                " feature frames vs " + std::to_string(s.seq.length()) + " labels");
      corpus.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Format, "manifest '" + manifest_path.string() + "': " + e.what());
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Synthetic long-tailed procedural corpora
// ---------------------------------------------------------------------------

struct SynthClass {
  std::string name;
  double duration_median = 10.0;  // frames
  double duration_sigma = 0.0;    // log-space sigma; 0 gives a fixed duration
  int similar_to = -1;            // class whose mean this class is pulled towards
  double similarity = 0.0;        // blend weight in [0, 1)
};

/// An optional action is inserted into one of the gaps strictly after the
/// mandatory action `after` and at or before the mandatory action `before`
/// (-1 leaves that side open).
struct OptionalAction {
  int cls = 0;
  double prob = 0.5;
  int after = -1;
  int before = -1;
};

struct ActivityGrammar {
  std::string name;
  std::vector<int> mandatory;
  std::vector<OptionalAction> optionals;
};

struct SynthConfig {
  std::vector<SynthClass> classes;
  std::vector<ActivityGrammar> activities;
  std::size_t feature_dim = 8;
  double mean_scale = 1.0;
  double noise_sigma = 1.0;
  std::size_t train_per_activity = 20;
  std::size_t test_per_activity = 10;
  std::uint64_t seed = 0;
};

/// Sampled action order and durations of one synthetic sequence.
struct SynthPlan {
  std::vector<int> actions;
  std::vector<std::size_t> durations;

  std::vector<int> frames() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < actions.size(); ++i) out.insert(out.end(), durations[i], actions[i]);
    return out;
  }
};

namespace detail {

struct GapRange {
  std::size_t lo;
  std::size_t hi;
};

inline GapRange optional_gaps(const ActivityGrammar& g, const OptionalAction& o) {
  auto pos = [&](int cls) -> std::size_t {
    for (std::size_t i = 0; i < g.mandatory.size(); ++i)
      if (g.mandatory[i] == cls) return i;
    throw Error(Error::Kind::Config, "activity '" + g.name + "': optional action " + std::to_string(o.cls) +
                                         " anchored to class " + std::to_string(cls) + " which is not mandatory");
  };
  const std::size_t lo = o.after < 0 ? 0 : pos(o.after) + 1;
  const std::size_t hi = o.before < 0 ? g.mandatory.size() : pos(o.before);
  return {lo, hi};
}

}  // namespace detail

inline void validate(const SynthConfig& cfg) {
  const int L = static_cast<int>(cfg.classes.size());
  if (L == 0) throw Error(Error::Kind::Config, "synth: no classes");
  if (cfg.activities.empty()) throw Error(Error::Kind::Config, "synth: no activities");
  if (cfg.feature_dim == 0) throw Error(Error::Kind::Config, "synth: feature_dim must be positive");
  std::set<std::string> names;
  for (int c = 0; c < L; ++c) {
    const auto& k = cfg.classes[static_cast<std::size_t>(c)];
    if (!names.insert(k.name).second) throw Error(Error::Kind::Config, "synth: duplicate class '" + k.name + "'");
    if (!(k.duration_median >= 1.0) || k.duration_sigma < 0.0)
      throw Error(Error::Kind::Config, "synth: class '" + k.name + "' has an invalid duration");
    if (k.similar_to >= L || k.similar_to == c || k.similarity < 0.0 || k.similarity >= 1.0)
      throw Error(Error::Kind::Config, "synth: class '" + k.name + "' has an invalid similarity");
  }
  std::set<std::string> acts;
  for (const auto& g : cfg.activities) {
    if (!acts.insert(g.name).second) throw Error(Error::Kind::Config, "synth: duplicate activity '" + g.name + "'");
    if (g.mandatory.empty()) throw Error(Error::Kind::Config, "activity '" + g.name + "': no mandatory actions");
    std::set<int> used;
    auto check = [&](int c) {
      if (c < 0 || c >= L) throw Error(Error::Kind::Config, "activity '" + g.name + "': class id out of range");
      if (!used.insert(c).second)
        throw Error(Error::Kind::Config,
                    "activity '" + g.name + "': class " + cfg.classes[static_cast<std::size_t>(c)].name + " listed twice");
    };
    for (int c : g.mandatory) check(c);
    for (const auto& o : g.optionals) {
      check(o.cls);
      if (!(o.prob > 0.0 && o.prob < 1.0))
        throw Error(Error::Kind::Config, "activity '" + g.name + "': inclusion probability must be in (0,1)");
      const auto gaps = detail::optional_gaps(g, o);
      if (gaps.lo > gaps.hi)
        throw Error(Error::Kind::Config, "activity '" + g.name + "': optional action " +
                                             cfg.classes[static_cast<std::size_t>(o.cls)].name +
                                             " has contradictory order constraints");
    }
  }
}

inline std::size_t sample_duration(const SynthClass& k, Rng& rng) {
  if (k.duration_sigma == 0.0) return static_cast<std::size_t>(std::llround(k.duration_median));
  const double d = std::exp(std::log(k.duration_median) + k.duration_sigma * rng.normal());
  return static_cast<std::size_t>(std::max<long long>(1, std::llround(d)));
}

inline SynthPlan synth_plan(const SynthConfig& cfg, const ActivityGrammar& g, Rng& rng) {
  // gap i sits before mandatory[i]; gap m is after the last mandatory action
  std::vector<std::vector<int>> gaps(g.mandatory.size() + 1);
  for (const auto& o : g.optionals) {
    if (!rng.bernoulli(o.prob)) continue;
    const auto r = detail::optional_gaps(g, o);
    gaps[r.lo + rng.index(r.hi - r.lo + 1)].push_back(o.cls);
  }
  SynthPlan plan;
  for (std::size_t i = 0; i <= g.mandatory.size(); ++i) {
    for (int c : gaps[i]) plan.actions.push_back(c);
    if (i < g.mandatory.size()) plan.actions.push_back(g.mandatory[i]);
  }
  for (int c : plan.actions) plan.durations.push_back(sample_duration(cfg.classes[static_cast<std::size_t>(c)], rng));
  return plan;
}

/// Class means used for feature synthesis; shared by train and test.
inline std::vector<std::vector<double>> synth_class_means(const SynthConfig& cfg) {
  Rng rng = Rng::substream(cfg.seed, "means");
  const std::size_t D = cfg.feature_dim;
  std::vector<std::vector<double>> means(cfg.classes.size(), std::vector<double>(D));
  for (auto& m : means)
    for (auto& v : m) v = cfg.mean_scale * rng.normal();
  std::vector<std::vector<double>> blended = means;
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    const auto& k = cfg.classes[c];
    if (k.similar_to < 0) continue;
    for (std::size_t d = 0; d < D; ++d)
      blended[c][d] = (1.0 - k.similarity) * means[c][d] + k.similarity * means[static_cast<std::size_t>(k.similar_to)][d];
  }
  return blended;
}

inline FeatureMatrix synth_features(std::span<const int> labels, const std::vector<std::vector<double>>& means,
                                    double noise_sigma, Rng& rng) {
  const std::size_t D = means.front().size();
  const std::size_t T = labels.size();
  FeatureMatrix raw(D, T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d)
      raw.at(t, d) = means[static_cast<std::size_t>(labels[t])][d] + noise_sigma * rng.normal();
  FeatureMatrix out(D, T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t lo = t == 0 ? 0 : t - 1;
    const std::size_t hi = std::min(T - 1, t + 1);
    for (std::size_t d = 0; d < D; ++d) {
      double s = 0.0;
      for (std::size_t u = lo; u <= hi; ++u) s += raw.at(u, d);
      out.at(t, d) = s / static_cast<double>(hi - lo + 1);
    }
  }
  return out;
}

struct SynthCorpus {
  Corpus train;
  Corpus test;
};

inline SynthCorpus synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  std::vector<std::string> names;
  for (const auto& k : cfg.classes) names.push_back(k.name);
  const auto vocab = ClassVocab::from_names(names);
  const auto means = synth_class_means(cfg);

  auto make_split = [&](const std::string& split, std::size_t per_activity) {
    Corpus corpus;
    corpus.vocab = vocab;
    Rng rng = Rng::substream(cfg.seed, split);
    for (const auto& g : cfg.activities) {
      for (std::size_t j = 0; j < per_activity; ++j) {
        Sample s;
        s.seq.labels = synth_plan(cfg, g, rng).frames();
        s.seq.activity = g.name;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%03zu", j);
        s.seq.id = g.name + "_" + split + "_" + buf;
        s.features = synth_features(s.seq.labels, means, cfg.noise_sigma, rng);
        corpus.samples.push_back(std::move(s));
      }
    }
    return corpus;
  };
  return {make_split("train", cfg.train_per_activity), make_split("test", cfg.test_per_activity)};
}

// JSON form of SynthConfig. Unknown keys are rejected.
namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Error::Kind::Config, where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw Error(Error::Kind::Config, where + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace detail

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"classes", "activities", "feature_dim", "mean_scale", "noise_sigma", "train_per_activity",
                             "test_per_activity", "seed"},
                         "synth");
  SynthConfig cfg;
  try {
    std::map<std::string, int> ids;
    for (const auto& c : j.at("classes")) {
      detail::reject_unknown(c, {"name", "duration", "sigma", "similar_to", "similarity"}, "synth.classes");
      SynthClass k;
      k.name = c.at("name").get<std::string>();
      k.duration_median = c.value("duration", 10.0);
      k.duration_sigma = c.value("sigma", 0.0);
      k.similarity = c.value("similarity", 0.0);
      ids[k.name] = static_cast<int>(cfg.classes.size());
      cfg.classes.push_back(k);
    }
    auto lookup = [&](const nlohmann::json& name) {
      auto it = ids.find(name.get<std::string>());
      if (it == ids.end()) throw Error(Error::Kind::Config, "synth: unknown class '" + name.get<std::string>() + "'");
      return it->second;
    };
    std::size_t ci = 0;
    for (const auto& c : j.at("classes")) {
      if (c.contains("similar_to")) cfg.classes[ci].similar_to = lookup(c.at("similar_to"));
      ++ci;
    }
    for (const auto& a : j.at("activities")) {
      detail::reject_unknown(a, {"name", "mandatory", "optional"}, "synth.activities");
      ActivityGrammar g;
      g.name = a.at("name").get<std::string>();
      for (const auto& m : a.at("mandatory")) g.mandatory.push_back(lookup(m));
      if (a.contains("optional")) {
        for (const auto& o : a.at("optional")) {
          detail::reject_unknown(o, {"name", "prob", "after", "before"}, "synth.activities.optional");
          OptionalAction oa;
          oa.cls = lookup(o.at("name"));
          oa.prob = o.at("prob").get<double>();
          if (o.contains("after")) oa.after = lookup(o.at("after"));
          if (o.contains("before")) oa.before = lookup(o.at("before"));
          g.optionals.push_back(oa);
        }
      }
      cfg.activities.push_back(std::move(g));
    }
    cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
    cfg.mean_scale = j.value("mean_scale", cfg.mean_scale);
    cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
    cfg.train_per_activity = j.value("train_per_activity", cfg.train_per_activity);
    cfg.test_per_activity = j.value("test_per_activity", cfg.test_per_activity);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Config, std::string("synth config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

}  // namespace gtla
