#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gtla/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::string> method;
  std::optional<double> tau, eta, lambda;
  std::optional<std::size_t> epochs;
  bool no_tf = false;
  std::optional<std::string> groups;
};

gtla::RunConfig resolve(const Overrides& o) {
  auto c = gtla::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.threads) c.threads = *o.threads;
  if (o.method) c.train.method = gtla::method_from_string(*o.method);
  if (o.tau) c.train.tau = *o.tau;
  if (o.eta) c.train.eta = *o.eta;
  if (o.lambda) c.train.lambda = *o.lambda;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.no_tf) c.train.temporal_factor = false;
  if (o.groups) c.groups = *o.groups;
  c.train.validate();
  c.grouping_mode();
  gtla::apply_seed(c);
  std::filesystem::create_directories(c.out);
  return c;
}

void add_run_options(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "seed for every random stream");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--threads", o.threads, "evaluation threads")->check(CLI::PositiveNumber);
  sub->add_option("--method", o.method, "ce, la or gtla")->check(CLI::IsMember({"ce", "la", "gtla"}));
  sub->add_option("--tau", o.tau, "logit adjustment strength");
  sub->add_option("--eta", o.eta, "weight of the others term");
  sub->add_option("--lambda", o.lambda, "smoothing loss weight");
  sub->add_option("--epochs", o.epochs, "training epochs");
  sub->add_flag("--no-temporal-factor", o.no_tf, "disable the temporal factor");
  sub->add_option("--groups", o.groups, "activity or cluster:N");
}

void print_summary(const gtla::MetricsReport& r) {
  std::cout << std::fixed << std::setprecision(1) << "MoF " << r.mof << "  Edit " << r.edit << "  F1@{10,25,50} "
            << r.f1[0] << " " << r.f1[1] << " " << r.f1[2] << "\n"
            << "recall head " << r.recall.head << " tail " << r.recall.tail << " hmean " << r.recall.hmean << "\n"
            << "FP1 " << r.fp.fp1 << " FP2 " << r.fp.fp2 << " FP3 " << r.fp.fp3 << "  group-ID " << r.group_id_accuracy
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-wise temporal logit adjustment for action segmentation"};
  app.require_subcommand(1);
  Overrides o;
  bool resume = false, quiet = false;
  std::vector<std::string> report_inputs;
  std::string report_json;

  auto* synth = app.add_subcommand("synth", "generate the synthetic train/test corpora");
  auto* cluster = app.add_subcommand("cluster", "build the group spec");
  auto* priors = app.add_subcommand("priors", "compute class priors and temporal sets");
  auto* train = app.add_subcommand("train", "train a model");
  auto* eval = app.add_subcommand("eval", "evaluate a trained model");
  auto* run = app.add_subcommand("run", "synth, cluster, priors, train and eval");
  for (auto* sub : {synth, cluster, priors, train, eval, run}) add_run_options(sub, o);
  train->add_flag("--resume", resume, "continue from the checkpoint in the output directory");
  for (auto* sub : {train, run}) sub->add_flag("-q,--quiet", quiet, "no per-epoch progress");

  auto* report = app.add_subcommand("report", "compare metrics files; the first is the baseline");
  report->add_option("metrics", report_inputs, "name=path/metrics.json or path")->required();
  report->add_option("--json", report_json, "also write the table as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (report->parsed()) {
      std::vector<std::pair<std::string, nlohmann::json>> reports;
      for (const auto& arg : report_inputs) {
        const auto eq = arg.find('=');
        const std::string name = eq == std::string::npos ? std::filesystem::path(arg).parent_path().filename().string()
                                                         : arg.substr(0, eq);
        const std::string path = eq == std::string::npos ? arg : arg.substr(eq + 1);
        reports.emplace_back(name.empty() ? path : name, gtla::read_json(path));
      }
      const auto t = gtla::cmd_report(reports);
      std::cout << t.text;
      if (!report_json.empty()) gtla::write_json(report_json, t.json);
      return 0;
    }
    const auto c = resolve(o);
    std::ostream* progress = quiet ? nullptr : &std::cerr;
    if (synth->parsed()) {
      const auto [tr, te] = gtla::cmd_synth(c);
      std::cout << tr.string() << "\n" << te.string() << "\n";
    } else if (cluster->parsed()) {
      const auto spec = gtla::cmd_cluster(c);
      std::cout << spec.n() << " groups -> " << gtla::group_spec_path(c).string() << "\n";
    } else if (priors->parsed()) {
      gtla::cmd_priors(c);
      std::cout << gtla::prior_path(c).string() << "\n";
    } else if (train->parsed()) {
      const auto st = gtla::cmd_train(c, resume, progress);
      std::cout << st.epochs_done << " epochs -> " << gtla::checkpoint_path(c).string() << "\n";
    } else if (eval->parsed()) {
      print_summary(gtla::cmd_eval(c));
    } else if (run->parsed()) {
      print_summary(gtla::cmd_run(c, progress));
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
