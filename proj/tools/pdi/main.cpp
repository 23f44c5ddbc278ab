// pdi: command-line front end for group-level estimation experiments.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdi/errors.hpp"
#include "pdi/estimators.hpp"
#include "pdi/evaluation.hpp"
#include "pdi/io.hpp"
#include "pdi/synthetic.hpp"

namespace {

using nlohmann::json;

// Flags shared by the run subcommand; unset options leave the config alone.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<double> budget;
  std::optional<double> burnin;
  std::optional<int> batches;
  std::optional<double> gamma;
  std::optional<double> alpha;
  std::optional<int> bootstrap;
  std::vector<std::string> methods;
  std::optional<std::string> variant;
  std::optional<std::string> axis;
  std::optional<std::string> output;
  std::optional<int> threads;

  void apply(json& j) const {
    if (seed) j["seed"] = *seed;
    if (trials) j["trials"] = *trials;
    if (budget) j["sampling"]["budget"] = *budget;
    if (burnin) j["sampling"]["burnin"] = *burnin;
    if (batches) j["sampling"]["batches"] = *batches;
    if (gamma) j["sampling"]["gamma"] = *gamma;
    if (alpha) j["alpha"] = *alpha;
    if (bootstrap) j["bootstrap"] = *bootstrap;
    if (!methods.empty()) j["methods"] = methods;
    if (variant) j["variant"] = *variant;
    if (axis) j["axis"] = *axis;
    if (output) j["output"] = *output;
    if (threads) j["threads"] = *threads;
  }
};

// Dataset options for subcommands that read an annotation table.
struct TableOptions {
  std::string path;
  std::string scale = "1-5";
  std::vector<std::string> demographics;

  pdi::CsvSchema schema() const {
    json j = {{"dataset", {{"csv", path}, {"scale", scale}, {"demographics", demographics}}}};
    return pdi::parse_experiment_config(j).csv;
  }
};

void add_table_options(CLI::App* cmd, TableOptions& t) {
  cmd->add_option("--csv", t.path, "Annotation table")->required()->check(CLI::ExistingFile);
  cmd->add_option("--scale", t.scale, "Rating scale: binary or min-max")->capture_default_str();
  cmd->add_option("--demographics", t.demographics, "Demographic columns")->delimiter(',')->required();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void print_metrics(const pdi::RunArtifacts& a, std::ostream& os) {
  os << "method     group            coverage   delta_pp   mean_count\n";
  for (const auto& m : a.metrics)
    for (const auto& g : m.groups) {
      char line[160];
      std::snprintf(line, sizeof line, "%-10s %-16s %-10s %-10s %s\n", pdi::to_string(m.method).c_str(),
                    g.group.c_str(), g.coverage ? fmt(*g.coverage).c_str() : "-",
                    g.delta_pp ? fmt(*g.delta_pp).c_str() : "-", g.mean_count ? fmt(*g.mean_count).c_str() : "-");
      os << line;
    }
}

int cmd_run(const std::string& config_path, bool synthetic, const Overrides& o, bool quiet) {
  json j;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw pdi::ConfigError("cannot open config '" + config_path + "'");
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw pdi::ConfigError("config '" + config_path + "' is not valid JSON: " + e.what());
    }
  } else if (synthetic) {
    j = {{"dataset", {{"synthetic", json::object()}}}};
  } else {
    throw pdi::ConfigError("run needs --config or --synthetic");
  }
  o.apply(j);
  const auto config = pdi::parse_experiment_config(j);
  const auto summary = pdi::run_experiment(config);
  if (!quiet) {
    print_metrics(summary.artifacts, std::cout);
    for (const auto& w : summary.artifacts.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "artifacts written to " << summary.directory.string() << '\n';
  }
  return summary.exit_code;
}

int cmd_generate(const pdi::SynthConfig& c, const std::string& out) {
  const auto d = pdi::generate_synthetic(c);
  if (out.empty() || out == "-")
    std::cout << pdi::dataset_to_csv(d);
  else
    pdi::write_dataset_csv(d, out);
  return pdi::kExitOk;
}

int cmd_estimate(const TableOptions& t, const std::string& axis, const std::string& method, const std::string& variant,
                 double alpha, int bootstrap, std::uint64_t seed) {
  const auto ingest = pdi::ingest_csv(t.path, t.schema());
  for (const auto& r : ingest.rejects) std::cerr << "rejected line " << r.row << ": " << r.reason << '\n';
  const auto partition = pdi::partition_groups(ingest.dataset, axis);
  pdi::EstimatorConfig cfg{variant, alpha, bootstrap};
  const auto est = pdi::estimate_groups(ingest.dataset, partition, pdi::parse_method(method), cfg, seed);
  json out = {{"schema_version", pdi::kReportSchemaVersion}, {"method", method}, {"seed", seed}, {"alpha", alpha}};
  bool any_ok = false;
  for (const auto& g : est.groups) {
    json e = {{"n_labeled", g.n_labeled}, {"n_total", g.n_total}};
    if (g.ok()) {
      any_ok = true;
      e["theta_hat"] = g.theta_hat;
      e["ci"] = {g.ci.lower, g.ci.upper};
      e["lambda"] = g.lambda;
    } else {
      e["theta_hat"] = nullptr;
      e["error"] = *g.error;
    }
    out["groups"][g.group] = e;
  }
  std::cout << out.dump(2) << '\n';
  return any_ok ? pdi::kExitOk : pdi::kExitRuntime;
}

int cmd_chi2(const TableOptions& t, const std::string& axis) {
  const auto ingest = pdi::ingest_csv(t.path, t.schema());
  const auto table = pdi::contingency_table(ingest.dataset, axis);
  const auto r = pdi::chi_squared_test(table.counts);
  json out = {{"axis", axis},       {"rows", table.rows}, {"columns", table.columns}, {"counts", table.counts},
              {"statistic", r.statistic}, {"df", r.df}, {"p_value", r.p_value}};
  std::cout << out.dump(2) << '\n';
  return pdi::kExitOk;
}

int cmd_report(const std::string& metrics_path, const std::string& format, const std::string& out_dir) {
  std::ifstream in(metrics_path, std::ios::binary);
  if (!in) throw pdi::DataError("cannot open '" + metrics_path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  const auto artifacts = pdi::metrics_from_csv(text.str());
  const std::filesystem::path dir =
      out_dir.empty() ? std::filesystem::path(metrics_path).parent_path() : std::filesystem::path(out_dir);
  std::cout << pdi::emit_report(artifacts, format, dir.empty() ? "." : dir).string() << '\n';
  return pdi::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-level estimation with LLM proxy labels and adaptive human annotation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pdi 0.1.0");

  std::string config_path;
  bool synthetic = false, quiet = false;
  Overrides o;
  auto* run = app.add_subcommand("run", "Run a multi-trial experiment and write its artifacts");
  run->add_option("--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  run->add_flag("--synthetic", synthetic, "Use the default synthetic dataset when no config is given");
  run->add_option("--seed", o.seed, "Master seed");
  run->add_option("--trials", o.trials, "Trials per method");
  run->add_option("--budget", o.budget, "Expected number of human labels");
  run->add_option("--burnin", o.burnin, "Expected labels from the uniform burn-in");
  run->add_option("--batches", o.batches, "Adaptive batches");
  run->add_option("--gamma", o.gamma, "Uniform smoothing weight");
  run->add_option("--alpha", o.alpha, "Miscoverage level");
  run->add_option("--bootstrap", o.bootstrap, "Bootstrap replicates");
  run->add_option("--method", o.methods, "classical, llm_only, ppi or pdi (repeatable)")->delimiter(',');
  run->add_option("--variant", o.variant, "LLM label variant");
  run->add_option("--axis", o.axis, "Demographic axis to partition on");
  run->add_option("--output", o.output, "Output directory");
  run->add_option("--threads", o.threads, "Worker threads for trials");
  run->add_flag("--quiet", quiet, "Do not print the metrics table");

  pdi::SynthConfig synth;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic two-group dataset as CSV");
  gen->add_option("--n", synth.N, "Number of records")->capture_default_str();
  gen->add_option("--share", synth.small_group_share, "Share of the small group")->capture_default_str();
  gen->add_option("--base-g1", synth.base_rate_g1, "P(Y=1) in g1")->capture_default_str();
  gen->add_option("--base-g2", synth.base_rate_g2, "P(Y=1) in g2")->capture_default_str();
  gen->add_option("--err-g1", synth.err_g1, "LLM flip rate in g1")->capture_default_str();
  gen->add_option("--err-g2", synth.err_g2, "LLM flip rate in g2")->capture_default_str();
  gen->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "Output file (stdout when omitted)");

  TableOptions est_table;
  std::string est_axis, est_method = "pdi", est_variant = "zero_shot";
  double est_alpha = 0.1;
  int est_bootstrap = 1000;
  std::uint64_t est_seed = 0;
  auto* est = app.add_subcommand("estimate", "Estimate group means from a table carrying pi and xi columns");
  add_table_options(est, est_table);
  est->add_option("--axis", est_axis, "Demographic axis")->required();
  est->add_option("--method", est_method, "classical, llm_only, ppi or pdi")->capture_default_str();
  est->add_option("--variant", est_variant, "LLM label variant")->capture_default_str();
  est->add_option("--alpha", est_alpha, "Miscoverage level")->capture_default_str();
  est->add_option("--bootstrap", est_bootstrap, "Bootstrap replicates")->capture_default_str();
  est->add_option("--seed", est_seed, "Bootstrap seed")->capture_default_str();

  TableOptions chi_table;
  std::string chi_axis;
  auto* chi = app.add_subcommand("chi2", "Pearson chi-squared test of rating against a demographic axis");
  add_table_options(chi, chi_table);
  chi->add_option("--axis", chi_axis, "Demographic axis")->required();

  std::string metrics_path, format = "json", report_dir;
  auto* rep = app.add_subcommand("report", "Emit a report from a metrics table");
  rep->add_option("--metrics", metrics_path, "metrics.csv written by run")->required();
  rep->add_option("--format", format, "json or csv")->capture_default_str();
  rep->add_option("--out", report_dir, "Directory for the report (defaults to the metrics directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? pdi::kExitOk : pdi::kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, synthetic, o, quiet);
    if (*gen) return cmd_generate(synth, gen_out);
    if (*est) return cmd_estimate(est_table, est_axis, est_method, est_variant, est_alpha, est_bootstrap, est_seed);
    if (*chi) return cmd_chi2(chi_table, chi_axis);
    if (*rep) return cmd_report(metrics_path, format, report_dir);
  } catch (const pdi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return pdi::kExitConfig;
  } catch (const pdi::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return pdi::kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pdi::kExitRuntime;
  }
  return pdi::kExitRuntime;
}
