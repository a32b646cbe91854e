#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtla/data.hpp"
#include "gtla/grouping.hpp"
#include "gtla/inference.hpp"
#include "gtla/losses.hpp"
#include "gtla/metrics.hpp"
#include "gtla/model.hpp"
#include "gtla/priors.hpp"
#include "gtla/train.hpp"

namespace gtla {

/// Everything one end-to-end run needs. A single seed feeds every random
/// stream (synthetic data, initialization, visiting order, dropout) through
/// named substreams.
struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<SynthConfig> synth;
  std::filesystem::path train_manifest;  // used when synth is absent
  std::filesystem::path test_manifest;
  std::string groups = "activity";       // "activity" or "cluster:N"
  Linkage linkage = Linkage::Average;
  std::size_t hidden = 32;
  std::size_t layers = 6;
  double dropout = 0.25;
  TrainConfig train;
  double head_threshold = 0.0;           // 0 = mean training frames per class
  std::vector<std::string> exclude;      // class names dropped from metrics
  std::filesystem::path out = "run";
  std::size_t threads = 1;

  GroupingMode grouping_mode() const {
    if (groups == "activity") return ByActivity{};
    if (groups.rfind("cluster:", 0) == 0) {
      const std::string n = groups.substr(8);
      std::size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(n, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != n.size() || v == 0) throw Error(Error::Kind::Config, "groups: bad cluster count in '" + groups + "'");
      return ByClustering{v, linkage};
    }
    throw Error(Error::Kind::Config, "groups must be 'activity' or 'cluster:N', got '" + groups + "'");
  }

  std::filesystem::path train_path() const { return synth ? out / "data" / "train.json" : train_manifest; }
  std::filesystem::path test_path() const { return synth ? out / "data" / "test.json" : test_manifest; }
};

inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  detail::reject_unknown(j, {"version", "seed", "synth", "data", "groups", "linkage", "backbone", "train", "eval", "out",
                             "threads"},
                         "config");
  RunConfig c;
  try {
    if (!j.contains("version") || j.at("version").get<int>() != 1)
      throw Error(Error::Kind::Config, "config: 'version' must be 1");
    if (!j.contains("seed")) throw Error(Error::Kind::Config, "config: 'seed' is mandatory");
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("synth") == j.contains("data"))
      throw Error(Error::Kind::Config, "config: exactly one of 'synth' or 'data' is required");
    if (j.contains("synth")) {
      nlohmann::json s = j.at("synth");
      if (s.contains("seed")) throw Error(Error::Kind::Config, "config: synth takes its seed from the run seed");
      c.synth = synth_config_from_json(s);
    } else {
      const auto& d = j.at("data");
      detail::reject_unknown(d, {"train", "test"}, "data");
      c.train_manifest = base / d.at("train").get<std::string>();
      c.test_manifest = base / d.at("test").get<std::string>();
      for (const auto& m : {c.train_manifest, c.test_manifest})
        if (!std::filesystem::exists(m)) throw Error(Error::Kind::Io, "config: data manifest '" + m.string() + "' not found");
    }
    c.groups = j.value("groups", c.groups);
    if (j.contains("linkage")) c.linkage = linkage_from_string(j.at("linkage").get<std::string>());
    if (j.contains("backbone")) {
      const auto& b = j.at("backbone");
      detail::reject_unknown(b, {"hidden", "layers", "dropout"}, "backbone");
      c.hidden = b.value("hidden", c.hidden);
      c.layers = b.value("layers", c.layers);
      c.dropout = b.value("dropout", c.dropout);
    }
    if (j.contains("train")) {
      if (j.at("train").contains("seed")) throw Error(Error::Kind::Config, "config: train takes its seed from the run seed");
      c.train = train_config_from_json(j.at("train"));
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      detail::reject_unknown(e, {"head_threshold", "exclude"}, "eval");
      c.head_threshold = e.value("head_threshold", c.head_threshold);
      c.exclude = e.value("exclude", c.exclude);
    }
    if (j.contains("out")) c.out = base / j.at("out").get<std::string>();
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Config, std::string("config: ") + e.what());
  }
  c.grouping_mode();  // validates the groups string
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Config, "config '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

/// Seeds are applied after CLI overrides so that --seed reaches every stream.
inline void apply_seed(RunConfig& c) {
  if (c.synth) c.synth->seed = c.seed;
  c.train.seed = c.seed;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::Format, "'" + path.string() + "': " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Writes the synthetic train/test corpora under <out>/data.
inline std::pair<std::filesystem::path, std::filesystem::path> cmd_synth(const RunConfig& c) {
  if (!c.synth) throw Error(Error::Kind::Config, "synth: config has no 'synth' section");
  const auto sc = synth_generate(*c.synth);
  return {write_corpus(c.out / "data", sc.train, "train"), write_corpus(c.out / "data", sc.test, "test")};
}

inline std::filesystem::path group_spec_path(const RunConfig& c) { return c.out / "group_spec.json"; }
inline std::filesystem::path prior_path(const RunConfig& c) { return c.out / "temporal_prior.json"; }
inline std::filesystem::path checkpoint_path(const RunConfig& c) { return c.out / "model.ckpt"; }
inline std::filesystem::path metrics_path(const RunConfig& c) { return c.out / "metrics.json"; }

inline GroupSpec cmd_cluster(const RunConfig& c) {
  const auto train = read_corpus(c.train_path());
  auto spec = build_group_spec(train.sequences(), c.grouping_mode(), train.vocab.size());
  write_json(group_spec_path(c), to_json(spec, train.vocab));
  return spec;
}

inline TemporalPrior cmd_priors(const RunConfig& c) {
  const auto train = read_corpus(c.train_path());
  const auto spec = group_spec_from_json(read_json(group_spec_path(c)), train.vocab);
  auto prior = build_temporal_prior(train.sequences(), spec);
  write_json(prior_path(c), to_json(prior, spec, train.vocab));
  return prior;
}

/// Trains (or resumes) the model described by `c` and writes the checkpoint
/// and a per-epoch log. CE and LA use a single flat head; G-TLA uses the
/// group spec and priors written by cmd_cluster / cmd_priors.
inline TrainState cmd_train(const RunConfig& c, bool resume = false, std::ostream* progress = nullptr) {
  const auto train = read_corpus(c.train_path());
  GroupSpec spec;
  TemporalPrior prior;
  if (c.train.method == Method::GTLA) {
    spec = group_spec_from_json(read_json(group_spec_path(c)), train.vocab);
    prior = temporal_prior_from_json(read_json(prior_path(c)), spec, train.vocab);
  } else {
    spec = flat_group_spec(train.vocab.size());
    prior = build_temporal_prior(train.sequences(), spec);
  }

  TrainState state;
  const auto ckpt = checkpoint_path(c);
  if (resume && std::filesystem::exists(ckpt)) {
    auto ck = load_checkpoint(ckpt);
    state.model = std::move(ck.model);
    state.adam = std::move(ck.adam);
    state.epochs_done = ck.epoch;
    if (ck.extra.contains("log"))
      for (const auto& e : ck.extra["log"])
        state.log.push_back({e.at("epoch").get<std::size_t>(), e.at("loss").get<double>(),
                             e.at("classification").get<double>(), e.at("smoothing").get<double>()});
  } else {
    state = TrainState::fresh(backbone_for(spec, train.feature_dim(), c.hidden, c.layers, c.dropout, c.seed));
  }

  train_epochs(state, train, spec, prior, c.train, c.train.epochs, [&](const EpochStats& s) {
    if (progress)
      *progress << "epoch " << s.epoch << "/" << c.train.epochs << " loss " << s.loss << " (cls " << s.classification
                << ", smooth " << s.smoothing << ")\n";
  });

  nlohmann::json log = nlohmann::json::array();
  for (const auto& s : state.log)
    log.push_back({{"epoch", s.epoch}, {"loss", s.loss}, {"classification", s.classification}, {"smoothing", s.smoothing}});
  Checkpoint ck{state.model, state.adam, state.epochs_done,
                {{"train", to_json(c.train)}, {"model_spec", to_json(spec, train.vocab)}, {"log", log}}};
  save_checkpoint(ckpt, ck);
  write_json(c.out / "train_log.json", log);
  return state;
}

inline HeadTailSplit split_for(const RunConfig& c, const Corpus& train) {
  double thr = c.head_threshold;
  if (thr <= 0.0) {
    std::size_t frames = 0;
    for (const auto& s : train.samples) frames += s.seq.length();
    thr = static_cast<double>(frames) / static_cast<double>(train.vocab.size());
  }
  return head_tail_split(train.sequences(), train.vocab.size(), thr);
}

/// Evaluates the checkpoint on the test corpus, writes predictions and
/// <out>/metrics.json, and returns the report.
inline MetricsReport cmd_eval(const RunConfig& c) {
  const auto train = read_corpus(c.train_path());
  const auto test = read_corpus(c.test_path());
  if (!(test.vocab == train.vocab)) throw Error(Error::Kind::Format, "eval: train and test vocabularies differ");
  const auto ck = load_checkpoint(checkpoint_path(c));
  const auto model_spec = group_spec_from_json(ck.extra.at("model_spec"), train.vocab);
  // FP taxonomy always refers to activity groups, whatever grouping the model used.
  const auto ref_spec = build_group_spec(train.sequences(), ByActivity{}, train.vocab.size());
  const auto ref_prior = build_temporal_prior(train.sequences(), ref_spec);

  const auto cp = predict_corpus(ck.model, test, model_spec, c.threads);
  write_predictions(c.out / "predictions", test, cp);

  const auto gts = test.sequences();
  std::vector<std::vector<int>> preds;
  std::vector<int> pg, tg;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    preds.push_back(cp.predictions[i].labels);
    pg.push_back(cp.predictions[i].group);
    tg.push_back(reference_group(gts[i], model_spec));
  }
  std::vector<int> ref_groups;
  for (const auto& g : gts) ref_groups.push_back(reference_group(g, ref_spec));
  EvalOptions opt;
  for (const auto& name : c.exclude) opt.excluded.insert(train.vocab.id(name));

  EvalInput in{&gts, &preds, nullptr, &ref_groups};
  auto report = evaluate(in, test.vocab, split_for(c, train), ref_spec, ref_prior, opt);
  report.group_id_accuracy = group_id_accuracy(pg, tg);
  write_json(metrics_path(c), to_json(report));
  return report;
}

/// synth (if configured) -> cluster -> priors -> train -> eval.
inline MetricsReport cmd_run(const RunConfig& c, std::ostream* progress = nullptr) {
  if (c.synth) cmd_synth(c);
  cmd_cluster(c);
  cmd_priors(c);
  cmd_train(c, false, progress);
  return cmd_eval(c);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string key;
  std::string label;
};

inline const std::vector<ReportRow>& report_rows() {
  static const std::vector<ReportRow> rows = {
      {"/balanced/recall/head", "Frame acc Head"}, {"/balanced/recall/tail", "Frame acc Tail"},
      {"/balanced/recall/hmean", "Frame acc Hmean"}, {"/balanced/f1_25/head", "Seg F1@25 Head"},
      {"/balanced/f1_25/tail", "Seg F1@25 Tail"},  {"/balanced/f1_25/hmean", "Seg F1@25 Hmean"},
      {"/global/mof", "Global Acc"},               {"/global/edit", "Global Edit"},
      {"/global/f1_10", "Global F1@10"},           {"/global/f1_25", "Global F1@25"},
      {"/global/f1_50", "Global F1@50"},           {"/group_id_accuracy", "Group ID acc"},
      {"/fp_taxonomy/fp1", "FP1"},                 {"/fp_taxonomy/fp2", "FP2"},
      {"/fp_taxonomy/fp3", "FP3"}};
  return rows;
}

struct ComparisonTable {
  std::string text;
  nlohmann::json json;
};

/// First report is the baseline; every other column shows its signed delta.
inline ComparisonTable cmd_report(const std::vector<std::pair<std::string, nlohmann::json>>& reports) {
  if (reports.empty()) throw Error(Error::Kind::Value, "report: no metrics files given");
  for (const auto& [name, j] : reports) {
    const auto problem = validate_metrics_json(j);
    if (!problem.empty()) throw Error(Error::Kind::Format, "report: '" + name + "' is not a metrics report (" + problem + ")");
  }
  ComparisonTable t;
  std::ostringstream os;
  os << std::left << std::setw(18) << "metric";
  for (const auto& [name, j] : reports) os << std::right << std::setw(14) << name;
  os << '\n';
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report_rows()) {
    const nlohmann::json::json_pointer ptr(row.key);
    const double base = reports.front().second.at(ptr).get<double>();
    os << std::left << std::setw(18) << row.label;
    nlohmann::json r = {{"metric", row.label}, {"baseline", base}};
    nlohmann::json deltas = nlohmann::json::object();
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const double v = reports[i].second.at(ptr).get<double>();
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1);
      if (i == 0) {
        cell << v;
      } else {
        const double d = v - base;
        cell << (d >= 0 ? "+" : "-") << std::abs(d);
        deltas[reports[i].first] = d;
      }
      os << std::right << std::setw(14) << cell.str();
    }
    os << '\n';
    r["delta"] = deltas;
    rows.push_back(r);
  }
  t.text = os.str();
  t.json = {{"schema_version", 1}, {"baseline", reports.front().first}, {"rows", rows}};
  return t;
}

}  // namespace gtla
