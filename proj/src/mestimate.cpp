#include "transmod/mestimate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace transmod {

namespace {

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double rcond(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || !(s(0) > 0.0) || !std::isfinite(s(0))) return 0.0;
  return s(s.size() - 1) / s(0);
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Diagnostics at the current iterate, kept on failure as well.
void record(FitResult& fit, const Evaluation& ev) {
  fit.score_norm = max_abs(ev.score);
  fit.sigma0 = ev.sigma.sigma0;
  fit.sigma1 = ev.sigma.sigma1;
  fit.sigma2 = ev.sigma.sigma2;
  fit.phi = ev.phi;
  fit.gamma_path = ev.path;
}

void finalize(FitResult& fit, const Evaluation& ev, double rcond_min) {
  record(fit, ev);
  if (rcond(ev.sigma.sigma1) < rcond_min) {
    fit.converged = false;
    throw FitError("Sigma_1 is numerically singular at the estimate (no usable covariate variation?)", fit);
  }
  const Eigen::MatrixXd inv = ev.sigma.sigma1.inverse();
  Eigen::MatrixXd cov = inv * ev.sigma.sigma2 * inv.transpose() / static_cast<double>(fit.n);
  cov = 0.5 * (cov + cov.transpose());
  fit.cov_theta = cov;
  fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

FitResult start_result(const Dataset& data, const CoreModel& model, const Horizon& horizon,
                       const Eigen::VectorXd& offset, const FitConfig& config) {
  FitResult fit;
  fit.model = model;
  fit.tau = horizon;
  fit.covariate_offset = offset;
  fit.n = data.n();
  fit.n_events = data.n_events();
  if (config.tau.kind == TauRuleKind::quantile)
    fit.warnings.push_back("tau chosen by the data-driven quantile rule " + config.tau.describe());
  if (offset.size() > 0 && offset.cwiseAbs().maxCoeff() > 0.0)
    fit.warnings.push_back("covariates centered before fitting; see covariate_offset");
  return fit;
}

// Central differences of the score; used when the Sigma_1 iteration stalls.
Eigen::MatrixXd score_jacobian(const Dataset& data, const CoreModel& model, const Eigen::VectorXd& theta,
                               const Horizon& horizon, const FitConfig& config) {
  const Eigen::Index p = theta.size();
  Eigen::MatrixXd jac(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[k]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    jac.col(k) = (evaluate(data, model, tp, horizon, config).score - evaluate(data, model, tm, horizon, config).score) /
                 (tp[k] - tm[k]);
  }
  return jac;
}

}  // namespace

std::string phi_name(PhiStrategy s) {
  switch (s) {
    case PhiStrategy::zero: return "zero";
    case PhiStrategy::minus_gamma_dot: return "gammadot";
    case PhiStrategy::efficient: return "efficient";
  }
  return "unknown";
}

PhiStrategy parse_phi(const std::string& name) {
  if (name == "zero") return PhiStrategy::zero;
  if (name == "gammadot" || name == "minus_gamma_dot") return PhiStrategy::minus_gamma_dot;
  if (name == "efficient") return PhiStrategy::efficient;
  throw InputError("unknown phi strategy '" + name + "' (expected zero, gammadot, efficient)");
}

void FitConfig::validate() const {
  if (!(tol > 0.0) || !(tol_step > 0.0)) throw InputError("tolerances must be > 0");
  if (max_iter < 1) throw InputError("max_iter must be >= 1");
  if (!(box > 0.0) || !std::isfinite(box)) throw InputError("parameter box radius must be finite and > 0");
  if (theta_init && !theta_init->allFinite()) throw InputError("theta_init must be finite");
}

const MomentPath& moments(const TransformPath& path) {
  if (!path.has_moments) throw InputError("moments: path was built without moments");
  return path.moments;
}

WeightPath make_phi(PhiStrategy strategy, const TransformPath& path, ProductForm form, FredholmMethod method) {
  WeightPath w;
  w.strategy = strategy;
  switch (strategy) {
    case PhiStrategy::zero: w.values.setZero(path.gamma_dot.rows(), path.gamma_dot.cols()); break;
    case PhiStrategy::minus_gamma_dot: w.values = -path.gamma_dot; break;
    case PhiStrategy::efficient: w.values = efficient_phi(path, cb_measures(path, form), method); break;
  }
  return w;
}

Eigen::VectorXd score(const TransformPath& path, const WeightPath& phi) {
  const auto& mo = moments(path);
  const double inv_n = 1.0 / static_cast<double>(path.n);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(path.p()));
  for (std::size_t j = 0; j < path.atoms(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double dn = path.dN[j];
    const double b2 = mo.event_ldx[j] * inv_n - dn * mo.e[j];
    u += (mo.event_ldot.row(jj) * inv_n - dn * mo.ebar.row(jj) - b2 * phi.values.row(jj)).transpose();
  }
  return u;
}

SigmaMatrices sigma_matrices(const TransformPath& path, const WeightPath& phi) {
  const auto& mo = moments(path);
  const auto p = static_cast<Eigen::Index>(path.p());
  const std::size_t m = path.atoms();
  SigmaMatrices s;
  s.sigma0.setZero(p, p);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(p, p);
  std::vector<Eigen::VectorXd> h(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd f = phi.values.row(jj).transpose();
    const Eigen::VectorXd r = mo.rho.row(jj).transpose();
    const double v = mo.v[j];
    const double dn = path.dN[j];
    const Eigen::MatrixXd vphi = mo.vbar[j] + v * f * f.transpose() - r * f.transpose() - f * r.transpose();
    s.sigma0 += vphi * dn;
    const Eigen::VectorXd rphi = r - v * f;
    cross += rphi * (path.gamma_dot.row(jj).transpose() + f).transpose() * dn;
    h[j] = path.prod0[j] * rphi * dn;
  }
  s.sigma1 = s.sigma0 + cross;
  // Double sum over K(t,u) = P(t)P(u) c(t ^ u) via suffix sums of h.
  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd suffix = Eigen::VectorXd::Zero(p);
  for (std::size_t k = m; k-- > 0;) {
    suffix += h[k];
    const double dc = path.dC[k] / (path.prod0[k] * path.prod0[k]);
    quad += dc * suffix * suffix.transpose();
  }
  s.sigma2 = s.sigma0 + quad;
  return s;
}

Evaluation evaluate(const Dataset& data, const CoreModel& model, const Eigen::VectorXd& theta,
                    const Horizon& horizon, const FitConfig& config) {
  Evaluation ev{fit_transform(data, model, theta, horizon), {}, {}, {}};
  ev.phi = make_phi(config.phi, ev.path, config.product_form, config.fredholm_method);
  ev.score = score(ev.path, ev.phi);
  ev.sigma = sigma_matrices(ev.path, ev.phi);
  return ev;
}

Dataset center_covariates(const Dataset& data, const CoreModel& model, Centering policy, Eigen::VectorXd& offset) {
  const auto d = static_cast<Eigen::Index>(data.d());
  offset = Eigen::VectorXd::Zero(d);
  if (policy == Centering::off || data.n() == 0) return data;
  const RowMatrix& z = data.covariates();
  bool any = false;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lo = z.col(k).minCoeff(), hi = z.col(k).maxCoeff();
    const bool shift = policy == Centering::on || (model.needs_reference_point() && (lo > 0.0 || hi < 0.0));
    if (shift) {
      offset[k] = z.col(k).mean();
      any = true;
    }
  }
  if (!any) return data;
  std::vector<Subject> subjects;
  subjects.reserve(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    Subject s = data.subject(i);
    s.z -= offset;
    subjects.push_back(std::move(s));
  }
  return Dataset::from_subjects(std::move(subjects));
}

FitResult solve(const Dataset& raw, const CoreModel& model, const FitConfig& config) {
  config.validate();
  Eigen::VectorXd offset;
  const Dataset data = center_covariates(raw, model, config.center, offset);
  const Horizon horizon = choose_tau(data, config.tau);
  const auto p = static_cast<Eigen::Index>(model.theta_dim());
  Eigen::VectorXd theta = config.theta_init.value_or(Eigen::VectorXd::Zero(p));
  if (theta.size() != p) throw InputError("theta_init has dimension " + std::to_string(theta.size()) +
                                          ", model expects " + std::to_string(p));

  FitResult fit = start_result(data, model, horizon, offset, config);
  fit.theta_hat = theta;
  Evaluation ev = evaluate(data, model, theta, horizon, config);
  auto fail = [&](const std::string& what) {
    record(fit, ev);
    fit.converged = false;
    return FitError(what, fit);
  };

  bool jacobian_steps = false;
  for (int iter = 0;; ++iter) {
    fit.theta_hat = theta;
    fit.iterations = iter;
    const double norm = max_abs(ev.score);
    if (!std::isfinite(norm)) throw fail("score is not finite");
    if (norm <= config.tol) {
      fit.converged = true;
      break;
    }
    if (iter == config.max_iter) {
      std::ostringstream os;
      os << "no convergence after " << config.max_iter << " iterations (score norm " << norm << ")";
      throw fail(os.str());
    }
    Eigen::VectorXd step;
    if (!jacobian_steps) {
      if (rcond(ev.sigma.sigma1) < config.rcond_min)
        throw fail("Sigma_1 is numerically singular (no usable covariate variation?)");
      step = ev.sigma.sigma1.partialPivLu().solve(ev.score);
    } else {
      const Eigen::MatrixXd jac = score_jacobian(data, model, theta, horizon, config);
      if (rcond(jac) < config.rcond_min) throw fail("score Jacobian is numerically singular");
      step = -jac.partialPivLu().solve(ev.score);
    }

    // Halve the step when the trial point leaves the box or the domain where
    // the transformation recursion is defined or, on Jacobian steps, when the
    // score norm does not drop.
    double lambda = 1.0;
    Eigen::VectorXd trial;
    std::optional<Evaluation> next;
    for (int halving = 0; !next; ++halving) {
      trial = theta + lambda * step;
      if (max_abs(trial) > config.box) {
        if (halving == 7) {
          std::ostringstream os;
          os << "iterates diverged: |theta| exceeds the parameter box radius " << config.box;
          throw fail(os.str());
        }
        lambda *= 0.5;
        continue;
      }
      try {
        next = evaluate(data, model, trial, horizon, config);
      } catch (const NumericalError&) {
        if (halving == 7) throw;
        lambda *= 0.5;
        continue;
      }
      if (jacobian_steps && halving < 7 && !(max_abs(next->score) < norm)) {
        next.reset();
        lambda *= 0.5;
      }
    }
    if (lambda < 1.0) fit.warnings.push_back("step halved at iteration " + std::to_string(iter + 1));
    const double step_norm = max_abs(trial - theta);
    if (!jacobian_steps && !(max_abs(next->score) <= 0.5 * norm)) {
      jacobian_steps = true;
      fit.warnings.push_back("Sigma_1 iteration stalled; finite-difference Newton steps from iteration " +
                             std::to_string(iter + 2));
    }
    theta = trial;
    ev = std::move(*next);
    if (step_norm <= config.tol_step) {
      fit.theta_hat = theta;
      fit.iterations = iter + 1;
      fit.converged = true;
      fit.warnings.push_back("stopped on the step-size criterion");
      break;
    }
  }
  if (config.phi == PhiStrategy::efficient && ev.path.has_moments &&
      std::all_of(ev.path.moments.v.begin(), ev.path.moments.v.end(), [](double v) { return v == 0.0; }))
    fit.warnings.push_back("efficient weight degenerates to -Gamma_dot (v vanishes)");
  finalize(fit, ev, config.rcond_min);
  return fit;
}

FitResult one_step(const Dataset& raw, const CoreModel& model, const Eigen::VectorXd& theta_tilde,
                   const FitConfig& config) {
  config.validate();
  Eigen::VectorXd offset;
  const Dataset data = center_covariates(raw, model, config.center, offset);
  const Horizon horizon = choose_tau(data, config.tau);
  if (static_cast<std::size_t>(theta_tilde.size()) != model.theta_dim())
    throw InputError("preliminary estimate has the wrong dimension");
  if (!theta_tilde.allFinite()) throw InputError("preliminary estimate must be finite");

  FitResult fit = start_result(data, model, horizon, offset, config);
  fit.theta_hat = theta_tilde;
  const Evaluation ev0 = evaluate(data, model, theta_tilde, horizon, config);
  fit.score_norm = max_abs(ev0.score);
  if (rcond(ev0.sigma.sigma1) < config.rcond_min)
    throw FitError("Sigma_1 is numerically singular at the preliminary estimate", fit);
  fit.theta_hat = theta_tilde + ev0.sigma.sigma1.partialPivLu().solve(ev0.score);
  fit.iterations = 1;
  const Evaluation ev = evaluate(data, model, fit.theta_hat, horizon, config);
  fit.converged = true;
  finalize(fit, ev, config.rcond_min);
  return fit;
}

nlohmann::json fit_to_json(const FitResult& fit) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["model"] = fit.model.to_json();
  j["theta_hat"] = vec(fit.theta_hat);
  j["se"] = vec(fit.se);
  j["cov"] = matrix_json(fit.cov_theta);
  j["sigma0"] = matrix_json(fit.sigma0);
  j["sigma1"] = matrix_json(fit.sigma1);
  j["sigma2"] = matrix_json(fit.sigma2);
  j["score_norm"] = fit.score_norm;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["n"] = fit.n;
  j["n_events"] = fit.n_events;
  j["tau"] = {{"value", fit.tau.tau}, {"grid_index", fit.tau.grid_index}, {"rule", fit.tau.rule.describe()}};
  j["phi_strategy"] = phi_name(fit.phi.strategy);
  j["covariate_offset"] = vec(fit.covariate_offset);
  nlohmann::json gamma = nlohmann::json::array();
  if (fit.gamma_path)
    for (std::size_t k = 0; k < fit.gamma_path->atoms(); ++k)
      gamma.push_back({{"t", fit.gamma_path->times[k]}, {"value", fit.gamma_path->gamma[k]}});
  j["gamma"] = gamma;
  j["warnings"] = fit.warnings;
  return j;
}

}  // namespace transmod
