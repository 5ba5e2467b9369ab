#include "transmod/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "transmod/errors.hpp"

namespace transmod {

namespace {

std::string gamma0_name(Gamma0 g) {
  switch (g) {
    case Gamma0::identity: return "identity";
    case Gamma0::square: return "square";
    case Gamma0::log1p: return "log1p";
  }
  return "identity";
}

Gamma0 parse_gamma0(const std::string& s) {
  if (s == "identity") return Gamma0::identity;
  if (s == "square") return Gamma0::square;
  if (s == "log1p") return Gamma0::log1p;
  throw InputError("scenario: unknown gamma0 '" + s + "' (expected identity, square, log1p)");
}

struct RepOutcome {
  std::vector<Eigen::VectorXd> theta, se;
  std::vector<bool> ok;
  double censored = 0.0;
  double gamma_error = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

double gamma0_eval(Gamma0 g, double t) {
  switch (g) {
    case Gamma0::identity: return t;
    case Gamma0::square: return t * t;
    case Gamma0::log1p: return std::log1p(t);
  }
  return t;
}

double gamma0_inverse(Gamma0 g, double x) {
  switch (g) {
    case Gamma0::identity: return x;
    case Gamma0::square: return std::sqrt(x);
    case Gamma0::log1p: return std::expm1(x);
  }
  return x;
}

void Scenario::validate() const {
  if (static_cast<std::size_t>(theta0.size()) != model.theta_dim())
    throw InputError("scenario: theta0 has dimension " + std::to_string(theta0.size()) + ", model expects " +
                     std::to_string(model.theta_dim()));
  if (!theta0.allFinite()) throw InputError("scenario: theta0 must be finite");
  if (n < 2) throw InputError("scenario: n must be >= 2");
  if (censoring.kind != CensorLaw::Kind::none && !(censoring.value > 0.0 && std::isfinite(censoring.value)))
    throw InputError("scenario: censoring rate / upper end must be finite and > 0");
  if (!(covariates.p > 0.0 && covariates.p < 1.0)) throw InputError("scenario: Bernoulli p must lie in (0, 1)");
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw InputError("scenario must be a JSON object");
    Scenario sc;
    const auto theta = j.at("theta0").get<std::vector<double>>();
    sc.theta0 = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    const auto& mj = j.at("model");
    const std::string fam = mj.at("family").get<std::string>();
    const bool two_blocks = parse_family(fam) == Family::linear_hazard || mj.value("covariate_frailty", false);
    std::size_t d = two_blocks ? theta.size() / 2 : theta.size();
    if (j.contains("d")) d = j["d"].get<std::size_t>();
    sc.model = CoreModel::from_json(mj, d);
    sc.gamma0 = parse_gamma0(j.value("gamma0", std::string("identity")));
    if (j.contains("covariates")) {
      const auto& c = j["covariates"];
      const std::string law = c.value("law", std::string("uniform"));
      if (law == "bernoulli")
        sc.covariates.kind = CovariateLaw::Kind::bernoulli;
      else if (law == "uniform")
        sc.covariates.kind = CovariateLaw::Kind::uniform;
      else if (law == "mixed")
        sc.covariates.kind = CovariateLaw::Kind::mixed;
      else
        throw InputError("scenario: unknown covariate law '" + law + "'");
      sc.covariates.p = c.value("p", 0.5);
    }
    if (j.contains("censoring")) {
      const auto& c = j["censoring"];
      const std::string law = c.value("law", std::string("exponential"));
      if (law == "exponential") {
        sc.censoring.kind = CensorLaw::Kind::exponential;
        sc.censoring.value = c.at("rate").get<double>();
      } else if (law == "uniform") {
        sc.censoring.kind = CensorLaw::Kind::uniform;
        sc.censoring.value = c.at("upper").get<double>();
      } else if (law == "none") {
        sc.censoring.kind = CensorLaw::Kind::none;
      } else {
        throw InputError("scenario: unknown censoring law '" + law + "'");
      }
    }
    sc.n = j.value("n", std::size_t{100});
    sc.seed = j.value("seed", std::uint64_t{1});
    sc.validate();
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed scenario: ") + e.what());
  }
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json j;
  nlohmann::json mj = model.to_json();
  mj.erase("theta_dim");
  j["model"] = mj;
  j["d"] = model.d();
  j["theta0"] = std::vector<double>(theta0.data(), theta0.data() + theta0.size());
  j["gamma0"] = gamma0_name(gamma0);
  switch (covariates.kind) {
    case CovariateLaw::Kind::bernoulli: j["covariates"] = {{"law", "bernoulli"}, {"p", covariates.p}}; break;
    case CovariateLaw::Kind::uniform: j["covariates"] = {{"law", "uniform"}}; break;
    case CovariateLaw::Kind::mixed: j["covariates"] = {{"law", "mixed"}, {"p", covariates.p}}; break;
  }
  switch (censoring.kind) {
    case CensorLaw::Kind::exponential: j["censoring"] = {{"law", "exponential"}, {"rate", censoring.value}}; break;
    case CensorLaw::Kind::uniform: j["censoring"] = {{"law", "uniform"}, {"upper", censoring.value}}; break;
    case CensorLaw::Kind::none: j["censoring"] = {{"law", "none"}}; break;
  }
  j["n"] = n;
  j["seed"] = seed;
  return j;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Simulated gen_dataset(const Scenario& sc, std::uint64_t seed) {
  sc.validate();
  Rng rng(seed);
  const std::size_t d = sc.model.d();
  std::vector<Subject> subjects(sc.n);
  std::size_t censored = 0;
  for (auto& s : subjects) {
    s.z.resize(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
      const bool bern = sc.covariates.kind == CovariateLaw::Kind::bernoulli ||
                        (sc.covariates.kind == CovariateLaw::Kind::mixed && k % 2 == 0);
      const double u = rng.uniform();
      s.z[static_cast<Eigen::Index>(k)] = bern ? (u < sc.covariates.p ? 1.0 : 0.0) : 2.0 * u - 1.0;
    }
    const auto [l1, l2] = sc.model.linear_predictors(sc.theta0, s.z.data());
    const double t = gamma0_inverse(sc.gamma0, sc.model.cumhaz_inverse_lp(rng.exponential(), l1, l2));
    double c = std::numeric_limits<double>::infinity();
    switch (sc.censoring.kind) {
      case CensorLaw::Kind::exponential: c = rng.exponential() / sc.censoring.value; break;
      case CensorLaw::Kind::uniform: c = sc.censoring.value * rng.uniform(); break;
      case CensorLaw::Kind::none: break;
    }
    s.time = std::min(t, c);
    s.status = t <= c ? 1 : 0;
    censored += static_cast<std::size_t>(1 - s.status);
  }
  Simulated out{Dataset::from_subjects(std::move(subjects)), 0.0};
  out.censored_fraction = static_cast<double>(censored) / static_cast<double>(sc.n);
  return out;
}

double sup_gamma_error(const TransformPath& path, double tau, Gamma0 g) {
  const std::size_t m = path.atoms();
  if (m == 0) return gamma0_eval(g, tau);
  double worst = gamma0_eval(g, path.times[0]);  // left limit at the first atom
  for (std::size_t j = 0; j < m; ++j) {
    const double right_end = j + 1 < m ? path.times[j + 1] : tau;
    worst = std::max(worst, std::abs(path.gamma[j] - gamma0_eval(g, path.times[j])));
    worst = std::max(worst, std::abs(path.gamma[j] - gamma0_eval(g, right_end)));
  }
  return worst;
}

MCReport mc_study(const Scenario& sc, const McConfig& config) {
  sc.validate();
  config.fit.validate();
  if (config.reps < 1) throw InputError("mc: reps must be >= 1");
  if (config.variants.empty()) throw InputError("mc: at least one variant is required");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t nv = config.variants.size();
  std::vector<RepOutcome> out(config.reps);

  auto run_one = [&](std::size_t r) {
    RepOutcome& o = out[r];
    o.theta.resize(nv);
    o.se.resize(nv);
    o.ok.assign(nv, false);
    const Simulated sim = gen_dataset(sc, derive_seed(sc.seed, r));
    o.censored = sim.censored_fraction;
    for (std::size_t v = 0; v < nv; ++v) {
      FitConfig fc = config.fit;
      fc.phi = config.variants[v];
      try {
        const FitResult fit = solve(sim.data, sc.model, fc);
        o.theta[v] = fit.theta_hat;
        o.se[v] = fit.se;
        o.ok[v] = fit.se.allFinite();
      } catch (const std::runtime_error&) {
        o.ok[v] = false;
      }
    }
    if (config.gamma_error) {
      try {
        const Horizon h = choose_tau(sim.data, config.fit.tau);
        const TransformPath path = fit_transform(sim.data, sc.model, sc.theta0, h, TransformOptions{false});
        o.gamma_error = sup_gamma_error(path, h.tau, sc.gamma0);
      } catch (const std::runtime_error&) {
      }
    }
  };

  const unsigned jobs = std::max(1u, config.jobs);
  if (jobs == 1) {
    for (std::size_t r = 0; r < config.reps; ++r) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < config.reps; r = next++) run_one(r);
      });
    for (auto& th : pool) th.join();
  }

  MCReport rep;
  rep.reps = config.reps;
  rep.scenario = sc;
  const auto p = static_cast<Eigen::Index>(sc.model.theta_dim());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double cens = 0.0;
  for (const auto& o : out) cens += o.censored;
  rep.mean_censored_fraction = cens / static_cast<double>(config.reps);
  if (config.gamma_error)
    for (const auto& o : out) rep.gamma_error.push_back(o.gamma_error);

  std::size_t total_ok = 0;
  for (std::size_t v = 0; v < nv; ++v) {
    VariantStats st;
    st.phi = config.variants[v];
    st.theta_hat = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(config.reps), p, nan);
    st.se = st.theta_hat;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(p), sum_se = Eigen::VectorXd::Zero(p), cover = Eigen::VectorXd::Zero(p);
    for (std::size_t r = 0; r < config.reps; ++r) {
      const auto rr = static_cast<Eigen::Index>(r);
      if (!out[r].ok[v]) {
        ++st.failures;
        continue;
      }
      ++st.ok;
      st.theta_hat.row(rr) = out[r].theta[v].transpose();
      st.se.row(rr) = out[r].se[v].transpose();
      sum += out[r].theta[v];
      sum_se += out[r].se[v];
      for (Eigen::Index k = 0; k < p; ++k)
        if (std::abs(out[r].theta[v][k] - sc.theta0[k]) <= 1.96 * out[r].se[v][k]) cover[k] += 1.0;
    }
    total_ok += st.ok;
    const double k = static_cast<double>(st.ok);
    st.mean = st.ok ? Eigen::VectorXd(sum / k) : Eigen::VectorXd::Constant(p, nan);
    st.bias = st.mean - sc.theta0;
    st.mean_se = st.ok ? Eigen::VectorXd(sum_se / k) : Eigen::VectorXd::Constant(p, nan);
    st.coverage = st.ok ? Eigen::VectorXd(cover / k) : Eigen::VectorXd::Constant(p, nan);
    st.sd = Eigen::VectorXd::Constant(p, nan);
    if (st.ok > 1) {
      Eigen::VectorXd ss = Eigen::VectorXd::Zero(p);
      for (std::size_t r = 0; r < config.reps; ++r)
        if (out[r].ok[v]) ss += (out[r].theta[v] - st.mean).cwiseAbs2();
      st.sd = (ss / (k - 1.0)).cwiseSqrt();
    } else if (st.ok == 1) {
      st.sd.setZero();
    }
    rep.variants.push_back(std::move(st));
  }
  if (total_ok == 0) throw NumericalError("mc: every replication failed");
  if (config.record_runtime)
    rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

nlohmann::json MCReport::to_json(bool include_replicates) const {
  auto vec = [](const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (std::isfinite(v[k]))
        a.push_back(v[k]);
      else
        a.push_back(nullptr);
    }
    return a;
  };
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["scenario"] = scenario.to_json();
  j["reps"] = reps;
  j["mean_censored_fraction"] = mean_censored_fraction;
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : variants) {
    nlohmann::json o;
    o["phi"] = phi_name(v.phi);
    o["ok"] = v.ok;
    o["failures"] = v.failures;
    o["mean"] = vec(v.mean);
    o["bias"] = vec(v.bias);
    o["sd"] = vec(v.sd);
    o["mean_se"] = vec(v.mean_se);
    o["coverage"] = vec(v.coverage);
    if (include_replicates) {
      nlohmann::json reps_j = nlohmann::json::array();
      for (Eigen::Index r = 0; r < v.theta_hat.rows(); ++r)
        reps_j.push_back({{"theta_hat", vec(v.theta_hat.row(r).transpose())}, {"se", vec(v.se.row(r).transpose())}});
      o["replicates"] = reps_j;
    }
    vs.push_back(o);
  }
  j["variants"] = vs;
  if (!gamma_error.empty()) {
    nlohmann::json g = nlohmann::json::array();
    for (double x : gamma_error) g.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
    j["gamma_sup_error"] = g;
  }
  if (runtime_seconds) j["runtime_seconds"] = *runtime_seconds;
  return j;
}

std::string MCReport::summary_table() const {
  std::ostringstream os;
  os << "reps=" << reps << "  n=" << scenario.n << "  censored=" << std::fixed << std::setprecision(3)
     << mean_censored_fraction << '\n';
  os << std::left << std::setw(10) << "phi" << std::setw(4) << "k" << std::right << std::setw(10) << "theta0"
     << std::setw(10) << "mean" << std::setw(10) << "bias" << std::setw(10) << "sd" << std::setw(10) << "mean_se"
     << std::setw(10) << "cover" << std::setw(8) << "fail" << '\n';
  for (const auto& v : variants)
    for (Eigen::Index k = 0; k < v.mean.size(); ++k)
      os << std::left << std::setw(10) << phi_name(v.phi) << std::setw(4) << k << std::right << std::setw(10)
         << scenario.theta0[k] << std::setw(10) << v.mean[k] << std::setw(10) << v.bias[k] << std::setw(10)
         << v.sd[k] << std::setw(10) << v.mean_se[k] << std::setw(10) << v.coverage[k] << std::setw(8)
         << v.failures << '\n';
  return os.str();
}

}  // namespace transmod
