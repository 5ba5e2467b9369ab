#include "transmod/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "transmod/errors.hpp"
#include "transmod/mestimate.hpp"
#include "transmod/simulate.hpp"
#include "transmod/survdata.hpp"

namespace transmod {

namespace {

constexpr const char* kOutputDirEnv = "TRANSMOD_OUTPUT_DIR";

// Relative output paths land in $TRANSMOD_OUTPUT_DIR when it is set.
std::filesystem::path resolve_output(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) p = std::filesystem::path(dir) / p;
  }
  return p;
}

class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path.empty() || path == "-") return;
    const auto p = resolve_output(path);
    if (p.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(p.parent_path(), ec);
    }
    file_ = std::make_unique<std::ofstream>(p);
    if (!*file_) throw InputError("cannot open output file '" + p.string() + "'");
    stream_ = file_.get();
  }
  std::ostream& os() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

void write_json(const nlohmann::json& j, const std::string& path, std::ostream& out) {
  Sink sink(path, out);
  sink.os() << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<PhiStrategy> parse_variants(const std::vector<std::string>& names) {
  std::vector<PhiStrategy> out;
  for (const auto& s : names) out.push_back(parse_phi(s));
  return out;
}

struct TauFlags {
  double quantile = -1.0;
  double fixed = -1.0;
  bool last = false;

  void add(CLI::App* cmd) {
    auto* q = cmd->add_option("--tau-quantile", quantile, "horizon at the last event with at least (1-Q)n subjects at risk (default Q=0.9)");
    auto* t = cmd->add_option("--tau", fixed, "fixed horizon time");
    auto* l = cmd->add_flag("--tau-last", last, "horizon at the last event time");
    q->excludes(t)->excludes(l);
    t->excludes(l);
  }
  TauRule rule() const {
    if (fixed >= 0.0) return TauRule::fixed(fixed);
    if (last) return TauRule::last_event();
    return TauRule::quantile(quantile >= 0.0 ? quantile : 0.9);
  }
};

struct SolverFlags {
  std::string phi = "efficient";
  double tol = 1e-10;
  double tol_step = 1e-12;
  int max_iter = 50;
  std::string center = "auto";

  void add(CLI::App* cmd, bool with_phi) {
    if (with_phi) cmd->add_option("--phi", phi, "weight strategy: zero, gammadot, efficient");
    cmd->add_option("--tol", tol, "score-norm tolerance");
    cmd->add_option("--tol-step", tol_step, "step-norm tolerance");
    cmd->add_option("--max-iter", max_iter, "iteration cap");
    cmd->add_option("--center", center, "covariate centering: auto, on, off");
  }
  FitConfig config(const TauFlags& tau) const {
    FitConfig fc;
    fc.phi = parse_phi(phi);
    fc.tau = tau.rule();
    fc.tol = tol;
    fc.tol_step = tol_step;
    fc.max_iter = max_iter;
    if (center == "auto")
      fc.center = Centering::automatic;
    else if (center == "on")
      fc.center = Centering::on;
    else if (center == "off")
      fc.center = Centering::off;
    else
      throw InputError("--center must be auto, on or off");
    fc.validate();
    return fc;
  }
};

CoreModel model_from_flags(const std::string& name, const std::optional<double>& eta, bool covariate_frailty,
                           std::size_t d) {
  const Family f = parse_family(name);
  if (f == Family::gamma_frailty) {
    if (covariate_frailty) {
      if (eta) throw InputError("--eta and --covariate-frailty are mutually exclusive");
      return CoreModel::gamma_frailty_covariate(d);
    }
    if (!eta) throw InputError("model gamma_frailty requires the hyperparameter --eta (or --covariate-frailty)");
    return CoreModel::gamma_frailty(d, *eta);
  }
  if (eta || covariate_frailty) throw InputError("--eta / --covariate-frailty only apply to gamma_frailty");
  nlohmann::json desc{{"family", name}};
  return CoreModel::from_json(desc, d);
}

// (t, Gamma, dGamma/dtheta, parametric variance, C measure, product integral)
void write_plot_csv(const FitResult& fit, const std::string& path, std::ostream& fallback) {
  if (!fit.gamma_path) throw NumericalError("no transformation path available for --plot-csv");
  const TransformPath& g = *fit.gamma_path;
  Sink sink(path, fallback);
  std::ostream& os = sink.os();
  os << std::setprecision(17);
  os << "t,gamma";
  for (std::size_t k = 0; k < g.p(); ++k) os << ",gamma_dot_" << k;
  os << ",param_var,c_cum,prod0\n";
  double c = 0.0;
  for (std::size_t j = 0; j < g.atoms(); ++j) {
    const Eigen::VectorXd gd = g.gamma_dot.row(static_cast<Eigen::Index>(j)).transpose();
    c += g.dC[j];
    os << g.times[j] << ',' << g.gamma[j];
    for (Eigen::Index k = 0; k < gd.size(); ++k) os << ',' << gd[k];
    const double pv = fit.cov_theta.size() == gd.size() * gd.size() ? gd.dot(fit.cov_theta * gd) : 0.0;
    os << ',' << pv << ',' << c << ',' << g.prod0[j] << '\n';
  }
}

int cmd_fit(const std::string& data_path, const std::string& model_name, const std::optional<double>& eta,
            bool covariate_frailty, const std::vector<double>& theta0, const SolverFlags& solver,
            const TauFlags& tau, const std::string& out_path, const std::string& plot_path, std::ostream& out,
            std::ostream& err) {
  const Dataset data = ingest_csv_file(data_path);
  const CoreModel model = model_from_flags(model_name, eta, covariate_frailty, data.d());
  FitConfig fc = solver.config(tau);
  if (!theta0.empty()) {
    if (theta0.size() != model.theta_dim())
      throw InputError("--theta0 has " + std::to_string(theta0.size()) + " entries, model expects " +
                       std::to_string(model.theta_dim()));
    fc.theta_init = Eigen::Map<const Eigen::VectorXd>(theta0.data(), static_cast<Eigen::Index>(theta0.size()));
  }
  try {
    const FitResult fit = solve(data, model, fc);
    write_json(fit_to_json(fit), out_path, out);
    if (!plot_path.empty()) write_plot_csv(fit, plot_path, out);
    for (const auto& w : fit.warnings) err << "warning: " << w << '\n';
    return 0;
  } catch (const FitError& e) {
    nlohmann::json j = fit_to_json(e.partial());
    j["error"] = e.what();
    write_json(j, out_path, out);
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

int cmd_simulate(const std::string& scenario_path, const std::optional<std::uint64_t>& seed,
                 const std::optional<std::size_t>& n, const std::string& out_path, std::ostream& out,
                 std::ostream& err) {
  Scenario sc = Scenario::from_json(read_json_file(scenario_path));
  if (seed) sc.seed = *seed;
  if (n) sc.n = *n;
  const Simulated sim = gen_dataset(sc);
  Sink sink(out_path, out);
  write_csv(sink.os(), sim.data);
  err << "censored fraction: " << sim.censored_fraction << '\n';
  return 0;
}

int cmd_mc(const std::string& scenario_path, std::size_t reps, const std::optional<std::uint64_t>& seed,
           const std::optional<std::size_t>& n, const std::vector<std::string>& variants, unsigned jobs,
           const SolverFlags& solver, const TauFlags& tau, bool gamma_error, bool runtime, bool replicates,
           const std::string& out_path, const std::string& rep_csv, std::ostream& out, std::ostream& err) {
  if (reps == 0) throw InputError("--reps must be >= 1");
  Scenario sc = Scenario::from_json(read_json_file(scenario_path));
  if (seed) sc.seed = *seed;
  if (n) sc.n = *n;
  sc.validate();
  McConfig mc;
  mc.reps = reps;
  mc.variants = parse_variants(variants);
  mc.fit = solver.config(tau);
  mc.jobs = jobs;
  mc.gamma_error = gamma_error;
  mc.keep_replicates = replicates || !rep_csv.empty();
  mc.record_runtime = runtime;
  const MCReport report = mc_study(sc, mc);
  err << report.summary_table();
  write_json(report.to_json(replicates), out_path, out);
  if (!rep_csv.empty()) {
    Sink sink(rep_csv, out);
    std::ostream& os = sink.os();
    os << std::setprecision(17) << "rep,phi";
    const auto p = static_cast<Eigen::Index>(sc.model.theta_dim());
    for (Eigen::Index k = 0; k < p; ++k) os << ",theta_" << k;
    for (Eigen::Index k = 0; k < p; ++k) os << ",se_" << k;
    os << '\n';
    for (const auto& v : report.variants)
      for (Eigen::Index r = 0; r < v.theta_hat.rows(); ++r) {
        os << r << ',' << phi_name(v.phi);
        for (Eigen::Index k = 0; k < p; ++k) os << ',' << v.theta_hat(r, k);
        for (Eigen::Index k = 0; k < p; ++k) os << ',' << v.se(r, k);
        os << '\n';
      }
  }
  return 0;
}

int cmd_describe(const std::string& data_path, const TauFlags& tau, const std::string& out_path,
                 std::ostream& out) {
  const Dataset data = ingest_csv_file(data_path);
  nlohmann::json j = dataset_summary(data);
  j["schema_version"] = kSchemaVersion;
  const Horizon h = choose_tau(data, tau.rule());
  j["tau"] = {{"value", h.tau}, {"grid_index", h.grid_index}, {"rule", h.rule.describe()}};
  write_json(j, out_path, out);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semiparametric transformation models for right-censored survival data"};
  app.name("transmod");
  app.require_subcommand(1);

  std::string data_path, model_name, out_path, plot_path, scenario_path, rep_csv;
  std::optional<double> eta;
  bool covariate_frailty = false;
  std::vector<double> theta0;
  SolverFlags solver;
  TauFlags tau;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_override;
  std::size_t reps = 100;
  std::vector<std::string> variants{"efficient"};
  unsigned jobs = 1;
  bool gamma_error = false, runtime = false, replicates = false;

  auto* fit = app.add_subcommand("fit", "fit a transformation model to a CSV dataset");
  fit->add_option("--data", data_path, "CSV with columns time,status,z1..zd")->required();
  fit->add_option("--model", model_name, "ph, half_logistic, gamma_frailty, linear_hazard")->required();
  fit->add_option("--eta", eta, "gamma-frailty variance hyperparameter");
  fit->add_flag("--covariate-frailty", covariate_frailty, "gamma frailty with covariate-dependent variance");
  fit->add_option("--theta0", theta0, "starting value, comma separated")->delimiter(',');
  fit->add_option("--out", out_path, "output JSON (default stdout)");
  fit->add_option("--plot-csv", plot_path, "write the estimated transformation as CSV");
  solver.add(fit, true);
  tau.add(fit);

  auto* sim = app.add_subcommand("simulate", "draw a dataset from a scenario");
  sim->add_option("--scenario", scenario_path, "scenario JSON")->required();
  sim->add_option("--seed", seed, "override the scenario seed");
  sim->add_option("--n", n_override, "override the sample size");
  sim->add_option("--out", out_path, "output CSV (default stdout)");

  auto* mc = app.add_subcommand("mc", "Monte Carlo study over a scenario");
  mc->add_option("--scenario", scenario_path, "scenario JSON")->required();
  mc->add_option("--reps", reps, "number of replications");
  mc->add_option("--seed", seed, "override the scenario seed");
  mc->add_option("--n", n_override, "override the sample size");
  mc->add_option("--variants", variants, "weight strategies, comma separated")->delimiter(',');
  mc->add_option("--jobs", jobs, "worker threads (results do not depend on this)");
  mc->add_flag("--gamma-error", gamma_error, "record sup |Gamma_n - Gamma0| at the true theta");
  mc->add_flag("--runtime", runtime, "include wall-clock runtime_seconds in the report");
  mc->add_flag("--replicates", replicates, "include per-replication estimates in the JSON");
  mc->add_option("--replicates-csv", rep_csv, "per-replication (theta, se) CSV");
  mc->add_option("--out", out_path, "output JSON (default stdout)");
  solver.add(mc, false);
  tau.add(mc);

  auto* describe = app.add_subcommand("describe", "summarize a CSV dataset");
  describe->add_option("--data", data_path, "CSV with columns time,status,z1..zd")->required();
  describe->add_option("--out", out_path, "output JSON (default stdout)");
  tau.add(describe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (fit->parsed())
      return cmd_fit(data_path, model_name, eta, covariate_frailty, theta0, solver, tau, out_path, plot_path, out,
                     err);
    if (sim->parsed()) return cmd_simulate(scenario_path, seed, n_override, out_path, out, err);
    if (mc->parsed())
      return cmd_mc(scenario_path, reps, seed, n_override, variants, jobs, solver, tau, gamma_error, runtime,
                    replicates, out_path, rep_csv, out, err);
    if (describe->parsed()) return cmd_describe(data_path, tau, out_path, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace transmod
