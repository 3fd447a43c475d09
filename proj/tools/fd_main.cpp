// Command-line surface: estimate on user data, run simulation studies, and
// render study reports.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fd/config.hpp"
#include "fd/dataset.hpp"
#include "fd/density.hpp"
#include "fd/eif.hpp"
#include "fd/errors.hpp"
#include "fd/estimators.hpp"
#include "fd/sim.hpp"

using nlohmann::ordered_json;

namespace {

constexpr fd::EstimatorKind kAllEstimators[] = {
    fd::EstimatorKind::Plugin1,   fd::EstimatorKind::Plugin2,
    fd::EstimatorKind::OneStep1,  fd::EstimatorKind::OneStep2a,
    fd::EstimatorKind::OneStep2b, fd::EstimatorKind::Tmle1,
    fd::EstimatorKind::Tmle1Mod,  fd::EstimatorKind::Tmle2a,
    fd::EstimatorKind::Tmle2b,
};

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ", ";
    out += parts[i];
  }
  return out;
}

std::string estimator_list() {
  std::vector<std::string> names;
  for (fd::EstimatorKind k : kAllEstimators) names.push_back(fd::estimator_name(k));
  return join(names);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

fd::EstimatorKind parse_estimator(const std::string& s) {
  try {
    return fd::estimator_from_name(s);
  } catch (const fd::Error&) {
    throw fd::Error(fd::ErrorCode::UnknownName,
                    "unknown estimator '" + s + "' (valid: " + estimator_list() + ")");
  }
}

fd::sim::DgpName parse_dgp(const std::string& s) {
  try {
    return fd::sim::dgp_from_name(s);
  } catch (const fd::Error&) {
    throw fd::Error(fd::ErrorCode::UnknownName,
                    "unknown DGP '" + s + "' (valid: " + join(fd::sim::dgp_names()) + ")");
  }
}

fd::LearnerSpec parse_learner(const std::string& s) {
  if (s == "main-terms") return fd::LearnerSpec::MainTerms;
  if (s == "interactions") return fd::LearnerSpec::WithPairwiseInteractions;
  throw fd::Error(fd::ErrorCode::UnknownName,
                  "unknown learner '" + s + "' (valid: main-terms, interactions)");
}

std::optional<fd::PropensityForm> parse_propensity(const std::string& s) {
  if (s == "auto") return std::nullopt;  // simulate only: per-DGP default
  if (s == "logistic") return fd::PropensityForm::Logistic;
  if (s == "linear") return fd::PropensityForm::LinearProbability;
  throw fd::Error(fd::ErrorCode::UnknownName,
                  "unknown propensity form '" + s +
                      "' (valid: logistic, linear)");
}

fd::DensityKind parse_density(const std::string& s) {
  if (s == "auto") return fd::DensityKind::Auto;
  if (s == "kernel") return fd::DensityKind::KernelGaussian;
  if (s == "normal") return fd::DensityKind::ParametricNormal;
  if (s == "bernoulli") return fd::DensityKind::BernoulliLogistic;
  throw fd::Error(fd::ErrorCode::UnknownName,
                  "unknown density kind '" + s +
                      "' (valid: auto, kernel, normal, bernoulli)");
}

fd::OutcomeKind parse_outcome(const std::string& s) {
  if (s == "continuous") return fd::OutcomeKind::Continuous;
  if (s == "binary") return fd::OutcomeKind::Binary;
  throw fd::Error(fd::ErrorCode::UnknownName,
                  "unknown outcome kind '" + s + "' (valid: continuous, binary)");
}

std::optional<fd::MediatorKind> parse_mediator_kind(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "binary") return fd::MediatorKind::Binary;
  if (s == "continuous") return fd::MediatorKind::Continuous;
  if (s == "multivariate") return fd::MediatorKind::Multivariate;
  throw fd::Error(fd::ErrorCode::UnknownName,
                  "unknown mediator kind '" + s +
                      "' (valid: binary, continuous, multivariate)");
}

const char* mediator_kind_name(fd::MediatorKind k) {
  switch (k) {
    case fd::MediatorKind::Binary: return "binary";
    case fd::MediatorKind::Continuous: return "continuous";
    case fd::MediatorKind::Multivariate: return "multivariate";
  }
  return "?";
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw fd::Error(fd::ErrorCode::BadArgument, "cannot open output file " + path);
  out << content;
}

ordered_json diagnostics_json(const fd::EstimateResult& r) {
  ordered_json d;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  ordered_json hist = ordered_json::array();
  for (const auto& [step, eps] : r.epsilon_history)
    hist.push_back(ordered_json::array({step, eps}));
  d["epsilon_history"] = hist;
  d["score_residuals"] = r.score_residuals;  // alphabetical, deterministic
  d["warnings"] = r.warnings;
  return d;
}

struct EstimateArgs {
  std::string data, y, a = "a", m = "m", x = "x";
  std::string mediator_kind;
  std::string estimator = "tmle-1";
  int a0 = 1;
  bool use_ace = false;
  std::string outcome = "continuous", learner = "main-terms", density = "auto";
  std::string propensity = "logistic";
  int folds = 1, grid = 200, max_iter = 500;
  std::uint64_t seed = 0;
  double clip = 1e-3, tol_scale = 1.0;
  std::string ratio_file, out;
};

int cmd_estimate(const EstimateArgs& args) {
  if (args.y.empty()) {
    std::cerr << "outcome column required\n";
    return 2;
  }
  const fd::EstimatorKind kind = parse_estimator(args.estimator);

  fd::CsvSchema schema;
  schema.y = args.y;
  schema.a = args.a;
  schema.m = split_commas(args.m);
  schema.x = split_commas(args.x);
  if (schema.m.empty() || schema.x.empty())
    throw fd::Error(fd::ErrorCode::BadArgument,
                    "mediator and covariate column lists cannot be empty");
  schema.forced_kind = parse_mediator_kind(args.mediator_kind);
  const fd::Dataset data = fd::load_csv(args.data, schema);

  fd::EstimatorConfig cfg;
  cfg.a0 = args.a0;
  cfg.estimator = kind;
  cfg.outcome_kind = parse_outcome(args.outcome);
  cfg.learner = parse_learner(args.learner);
  if (args.propensity == "auto")
    throw fd::Error(fd::ErrorCode::UnknownName,
                    "unknown propensity form 'auto' (valid: logistic, linear)");
  cfg.propensity = parse_propensity(args.propensity)
                       .value_or(fd::PropensityForm::Logistic);
  cfg.density = parse_density(args.density);
  cfg.crossfit_folds = args.folds;
  cfg.seed = args.seed;
  cfg.max_tmle_iter = args.max_iter;
  cfg.score_tolerance_scale = args.tol_scale;
  cfg.prob_clip = args.clip;
  cfg.integration_grid_size = args.grid;

  std::optional<fd::DensityRatioModel> plugged;
  if (!args.ratio_file.empty()) {
    if (args.use_ace)
      throw fd::Error(fd::ErrorCode::BadArgument,
                      "--ratio-file cannot be combined with --ace: per-row "
                      "ratios are specific to one a0 (run each arm with its "
                      "own file, or use a -2b estimator)");
    const std::vector<double> col = fd::load_csv_column(args.ratio_file, "fm_ratio");
    if (static_cast<int>(col.size()) != data.n())
      throw fd::Error(fd::ErrorCode::RowMismatch,
                      "ratio file rows do not match the dataset");
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(
        col.data(), static_cast<Eigen::Index>(col.size()));
    plugged = fd::DensityRatioModel::plugged(std::move(r), cfg.a0);
  }

  ordered_json out;
  out["schema"] = 1;
  out["estimator"] = fd::estimator_name(kind);
  fd::EstimateResult res;
  ordered_json diag;
  if (args.use_ace) {
    cfg.a0 = 1;
    const fd::EstimateResult r1 = fd::estimate(data, cfg, plugged);
    cfg.a0 = 0;
    const fd::EstimateResult r0 = fd::estimate(data, cfg, plugged);
    res = fd::ace(r1, r0);
    out["ace"] = true;
    diag["iterations"] = res.iterations;
    diag["converged"] = res.converged;
    ordered_json hist = ordered_json::array();
    for (const auto& [step, eps] : r1.epsilon_history)
      hist.push_back(ordered_json::array({"a0=1:" + step, eps}));
    for (const auto& [step, eps] : r0.epsilon_history)
      hist.push_back(ordered_json::array({"a0=0:" + step, eps}));
    diag["epsilon_history"] = hist;
    ordered_json scores;
    for (const auto& [name, v] : r1.score_residuals) scores["a0=1:" + name] = v;
    for (const auto& [name, v] : r0.score_residuals) scores["a0=0:" + name] = v;
    diag["score_residuals"] = scores;
    diag["warnings"] = res.warnings;
  } else {
    out["a0"] = cfg.a0;
    res = fd::estimate(data, cfg, plugged);
    diag = diagnostics_json(res);
  }
  out["psi"] = res.psi;
  out["se"] = res.se;
  out["ci"] = ordered_json::array({res.ci_lo, res.ci_hi});
  out["n"] = data.n();
  out["diagnostics"] = diag;

  ordered_json echo;
  echo["data"] = args.data;
  echo["columns"] =
      ordered_json{{"y", schema.y}, {"a", schema.a}, {"m", schema.m}, {"x", schema.x}};
  echo["mediator_kind"] = mediator_kind_name(data.mediator_kind);
  echo["outcome"] = args.outcome;
  echo["learner"] = args.learner;
  echo["propensity"] = args.propensity;
  echo["density"] = args.density;
  echo["folds"] = args.folds;
  echo["seed"] = args.seed;
  echo["integration_grid_size"] = args.grid;
  echo["max_tmle_iter"] = args.max_iter;
  echo["prob_clip"] = args.clip;
  echo["score_tolerance_scale"] = args.tol_scale;
  if (!args.ratio_file.empty()) echo["ratio_file"] = args.ratio_file;
  out["config"] = echo;

  write_output(args.out, out.dump(2) + "\n");
  return 0;
}

struct SimulateArgs {
  std::string dgp;
  int n = 1000, reps = 200, folds = 1;
  std::string estimators = "tmle-1";
  std::string learner = "main-terms", propensity = "auto", density = "auto";
  std::uint64_t seed = 0;
  std::int64_t truth_draws = 1000000;
  bool oracle = false;
  std::string out, report;
};

int cmd_simulate(const SimulateArgs& args) {
  const fd::sim::DgpName dgp = parse_dgp(args.dgp);
  std::vector<fd::EstimatorKind> kinds;
  for (const std::string& name : split_commas(args.estimators))
    kinds.push_back(parse_estimator(name));
  if (kinds.empty())
    throw fd::Error(fd::ErrorCode::BadArgument, "no estimators requested");

  fd::sim::DgpSpec base;
  base.name = dgp;
  base.n = args.n;
  base.seed = args.seed;

  fd::sim::StudyConfig sc;
  sc.replicates = args.reps;
  sc.learner = parse_learner(args.learner);
  sc.propensity = parse_propensity(args.propensity);
  sc.density = parse_density(args.density);
  sc.crossfit_folds = args.folds;
  sc.oracle_nuisances = args.oracle;
  sc.truth_draws = args.truth_draws;

  const fd::sim::SimReport rep = fd::sim::run_study(base, kinds, sc);
  write_output(args.out, rep.to_csv());

  if (!args.report.empty()) {
    ordered_json j;
    j["schema"] = 1;
    j["dgp"] = rep.dgp;
    j["truth"] = rep.truth;
    j["replicates"] = rep.replicates;
    j["n"] = args.n;
    j["seed"] = args.seed;
    ordered_json rows = ordered_json::array();
    for (const fd::sim::SimRow& r : rep.rows) {
      ordered_json row;
      row["estimator"] = r.estimator;
      row["n"] = r.n;
      row["bias"] = r.bias;
      row["sd"] = r.sd;
      row["mse"] = r.mse;
      row["coverage"] = r.coverage;
      row["width"] = r.width;
      row["failed"] = r.failed;
      rows.push_back(row);
    }
    j["rows"] = rows;
    write_output(args.report, j.dump(2) + "\n");
  }
  return 0;
}

struct ReportArgs {
  std::string in;
  std::string format = "text";
};

double stat_field(const ordered_json& row, const char* key) {
  const auto& v = row.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number())
    throw fd::Error(fd::ErrorCode::BadArgument,
                    std::string("report field '") + key + "' is not a number");
  return v.get<double>();
}

int cmd_report(const ReportArgs& args) {
  std::ifstream in(args.in, std::ios::binary);
  if (!in)
    throw fd::Error(fd::ErrorCode::BadArgument, "cannot open report file " + args.in);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw fd::Error(fd::ErrorCode::BadArgument,
                    std::string("malformed report JSON: ") + e.what());
  }

  std::string dgp;
  double truth = 0;
  int replicates = 0;
  std::vector<fd::sim::SimRow> rows;
  try {
    dgp = j.at("dgp").get<std::string>();
    truth = j.at("truth").get<double>();
    replicates = j.at("replicates").get<int>();
    for (const auto& rj : j.at("rows")) {
      fd::sim::SimRow r;
      r.estimator = rj.at("estimator").get<std::string>();
      r.n = rj.at("n").get<int>();
      r.bias = stat_field(rj, "bias");
      r.sd = stat_field(rj, "sd");
      r.mse = stat_field(rj, "mse");
      r.coverage = stat_field(rj, "coverage");
      r.width = stat_field(rj, "width");
      r.failed = rj.at("failed").get<int>();
      rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw fd::Error(fd::ErrorCode::BadArgument,
                    std::string("malformed report JSON: ") + e.what());
  }

  char buf[512];
  std::string out;
  if (args.format == "markdown") {
    std::snprintf(buf, sizeof(buf),
                  "**dgp** %s &nbsp; **truth** %.6g &nbsp; **replicates** %d\n\n",
                  dgp.c_str(), truth, replicates);
    out += buf;
    out += "| estimator | n | bias | sd | mse | coverage | width | failed |\n";
    out += "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf),
                    "| %s | %d | %.4g | %.4g | %.4g | %.4g | %.4g | %d |\n",
                    r.estimator.c_str(), r.n, r.bias, r.sd, r.mse, r.coverage,
                    r.width, r.failed);
      out += buf;
    }
  } else if (args.format == "text") {
    std::snprintf(buf, sizeof(buf), "dgp: %s  truth: %.6g  replicates: %d\n\n",
                  dgp.c_str(), truth, replicates);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-12s %7s %10s %10s %10s %9s %10s %7s\n",
                  "estimator", "n", "bias", "sd", "mse", "coverage", "width",
                  "failed");
    out += buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf),
                    "%-12s %7d %10.4g %10.4g %10.4g %9.4g %10.4g %7d\n",
                    r.estimator.c_str(), r.n, r.bias, r.sd, r.mse, r.coverage,
                    r.width, r.failed);
      out += buf;
    }
  } else {
    throw fd::Error(fd::ErrorCode::UnknownName,
                    "unknown format '" + args.format + "' (valid: text, markdown)");
  }
  std::cout << out;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Average causal effect via the front-door functional"};
  app.require_subcommand(1);
  app.footer("estimators: " + estimator_list() + "\nDGPs: " +
             join(fd::sim::dgp_names()));

  EstimateArgs ea;
  CLI::App* est = app.add_subcommand("estimate", "Estimate on a CSV dataset");
  est->add_option("--data", ea.data, "input CSV path")->required();
  est->add_option("--y", ea.y, "outcome column");
  est->add_option("--a", ea.a, "treatment column (default a)");
  est->add_option("--m", ea.m, "mediator column(s), comma separated (default m)");
  est->add_option("--x", ea.x, "covariate column(s), comma separated (default x)");
  est->add_option("--mediator-kind", ea.mediator_kind,
                  "force binary|continuous|multivariate (default: inferred)");
  est->add_option("--estimator", ea.estimator,
                  "one of: " + estimator_list() + " (default tmle-1)");
  CLI::Option* a0_opt = est->add_option("--a0", ea.a0, "counterfactual arm, 0 or 1 (default 1)");
  est->add_flag("--ace", ea.use_ace, "difference the a0=1 and a0=0 estimates")
      ->excludes(a0_opt);
  est->add_option("--outcome", ea.outcome, "continuous|binary (default continuous)");
  est->add_option("--learner", ea.learner, "main-terms|interactions (default main-terms)");
  est->add_option("--propensity", ea.propensity,
                  "propensity fit: logistic|linear (default logistic)");
  est->add_option("--density", ea.density,
                  "mediator density: auto|kernel|normal|bernoulli (default auto)");
  est->add_option("--folds", ea.folds, "cross-fitting folds, 1 disables (default 1)");
  est->add_option("--seed", ea.seed, "fold-split seed (default 0)");
  est->add_option("--grid", ea.grid, "mediator integration grid size (default 200)");
  est->add_option("--max-iter", ea.max_iter, "targeting iteration cap (default 500)");
  est->add_option("--clip", ea.clip, "probability clip (default 1e-3)");
  est->add_option("--tolerance-scale", ea.tol_scale,
                  "scales the score tolerance 1/(sqrt(n) ln n) (default 1)");
  est->add_option("--ratio-file", ea.ratio_file,
                  "CSV with column fm_ratio of per-row density ratios (for -2a)");
  est->add_option("--out", ea.out, "write JSON here instead of stdout");

  SimulateArgs sa;
  CLI::App* sim = app.add_subcommand("simulate", "Run a Monte Carlo study");
  sim->add_option("--dgp", sa.dgp, "one of: " + join(fd::sim::dgp_names()))->required();
  sim->add_option("--n", sa.n, "sample size per replicate (default 1000)");
  sim->add_option("--reps", sa.reps, "replicates (default 200)");
  sim->add_option("--estimators", sa.estimators,
                  "comma separated estimator names (default tmle-1)");
  sim->add_option("--learner", sa.learner, "main-terms|interactions (default main-terms)");
  sim->add_option("--propensity", sa.propensity,
                  "propensity fit: auto|logistic|linear (default auto: "
                  "weak-overlap DGPs use linear, others logistic)");
  sim->add_option("--density", sa.density,
                  "mediator density: auto|kernel|normal|bernoulli (default auto)");
  sim->add_option("--folds", sa.folds, "cross-fitting folds (default 1)");
  sim->add_option("--seed", sa.seed, "base seed; replicate r uses seed + r (default 0)");
  sim->add_option("--truth-draws", sa.truth_draws,
                  "Monte Carlo draws for the target value (default 1000000)");
  sim->add_flag("--oracle-nuisances", sa.oracle,
                "inject known-truth nuisances instead of fitting");
  sim->add_option("--out", sa.out, "write the CSV here instead of stdout");
  sim->add_option("--report", sa.report, "also write a JSON report here");

  ReportArgs ra;
  CLI::App* rep = app.add_subcommand("report", "Render a simulation report");
  rep->add_option("--in", ra.in, "SimReport JSON path")->required();
  rep->add_option("--format", ra.format, "text|markdown (default text)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (est->parsed()) return cmd_estimate(ea);
    if (sim->parsed()) return cmd_simulate(sa);
    if (rep->parsed()) return cmd_report(ra);
  } catch (const fd::Error& e) {
    std::cerr << e.what() << "\n";
    return e.category() == fd::ErrorCategory::Validation ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
