#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"
#include "transmod/core_models.hpp"
#include "transmod/survdata.hpp"

namespace transmod {

/// Alpha-weighted conditional moments over the risk set at each atom,
/// evaluated at the right value x = Gamma(t_j):
///   e = E[l'], ebar = E[l_theta], v = Var[l'], vbar = Var[l_theta],
///   rho = Cov[l_theta, l'].
/// event_ldot / event_ldx are the sums of l_theta and l' over the subjects
/// failing at t_j, at the same x.
struct MomentPath {
  std::vector<double> e;
  std::vector<double> v;
  Eigen::MatrixXd ebar;  // m x p
  Eigen::MatrixXd rho;   // m x p
  std::vector<Eigen::MatrixXd> vbar;
  Eigen::MatrixXd event_ldot;  // m x p
  std::vector<double> event_ldx;
};

/// Gamma_{n,theta} and friends on the atoms t_1 < ... < t_m <= tau.
///
/// Index j runs over atoms. S, S_dx, S_dtheta are n^{-1} sum_{at risk}
/// (alpha, alpha l', alpha l_theta) at the left value Gamma(t_{j-1}).
/// factor[j] = 1 - S_dx[j] dC[j] and prod0[j] = prod_{i <= j} factor[i].
struct TransformPath {
  Eigen::VectorXd theta;
  std::size_t n = 0;
  std::vector<double> times;
  std::vector<double> dN;
  std::vector<std::size_t> events;
  std::vector<double> gamma;
  std::vector<double> S;
  std::vector<double> S_dx;
  Eigen::MatrixXd S_dtheta;   // m x p
  Eigen::MatrixXd gamma_dot;  // m x p
  std::vector<double> dC;
  std::vector<double> factor;
  std::vector<double> prod0;
  bool has_moments = false;
  MomentPath moments;

  std::size_t atoms() const { return times.size(); }
  std::size_t p() const { return static_cast<std::size_t>(theta.size()); }
  double gamma_left(std::size_t j) const { return j == 0 ? 0.0 : gamma[j - 1]; }
  /// Right-continuous evaluation of Gamma at time t (0 before the first atom).
  double gamma_at(double t) const;
};

struct TransformOptions {
  bool moments = true;
};

/// Runs the jump recursion Gamma(t_j) = Gamma(t_j-) + dN(t_j)/S(Gamma(t_j-), t_j)
/// over the atoms up to tau, together with the theta-gradient, the C measure,
/// the product-integral factors and (optionally) the conditional moments.
/// Throws NumericalError on a vanishing or non-finite S, or a nonpositive
/// product-integral factor.
TransformPath fit_transform(const Dataset& data, const CoreModel& model, const Eigen::VectorXd& theta,
                            const Horizon& horizon, const TransformOptions& options = {});

/// Recomputes gamma_dot from the stored S, S_dx, S_dtheta.
void transform_gradient(TransformPath& path);

/// prod_{u < j <= t} factor[j] for atom indices u <= t.
double prod_integral(const TransformPath& path, std::size_t u, std::size_t t);

/// K(t, t') = sum_{j <= t ^ t'} dC[j] P(j, t) P(j, t').
double kernel_K(const TransformPath& path, std::size_t t, std::size_t t2);

/// kappa = sum_{u <= t} dC[u] P(u, t)^2 dB[t] with dB = v dN. Needs moments.
double kappa(const TransformPath& path);

/// Product form P(0, t_j] (default) or the exponential form exp(-sum S' dC).
enum class ProductForm { product, exponential };
std::vector<double> prod_from_zero(const TransformPath& path, ProductForm form);

/// Number of atoms where A_n/m2 <= Gamma <= A_n/m1 fails (relative slack 1e-12).
std::size_t sandwich_violations(const TransformPath& path, const StepFunction& an, double m1, double m2);

/// [{t, gamma, gamma_dot, P0}]
nlohmann::json path_to_json(const TransformPath& path);

}  // namespace transmod
