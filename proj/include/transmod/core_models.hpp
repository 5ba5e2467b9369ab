#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace transmod {

enum class Family { proportional_hazards, half_logistic_scale, gamma_frailty, linear_hazard };

std::string family_name(Family f);
Family parse_family(const std::string& name);

/// Full derivative set of l = log alpha at one (x, theta, z).
struct HazardEval {
  double alpha = 0.0;
  double dlog_x = 0.0;
  double d2log_xx = 0.0;
  Eigen::VectorXd dlog_theta;
  Eigen::VectorXd d2log_xtheta;
  Eigen::MatrixXd d2log_thetatheta;
};

/// Scalar kernel of one hazard evaluation. Every family depends on z only
/// through one or two linear predictors lp_b = theta_b' z, so the theta
/// derivatives are scalar multiples of z per block:
///   dlog_theta = (g[0] z ; g[1] z),  d2log_xtheta = (gx[0] z ; gx[1] z),
///   d2log_thetatheta blocks = h[0] zz', h[1] zz' (off-diagonal), h[2] zz'.
struct HazardKernel {
  double alpha = 0.0;
  double dx = 0.0;
  double dxx = 0.0;
  double g[2] = {0.0, 0.0};
  double gx[2] = {0.0, 0.0};
  double h[3] = {0.0, 0.0, 0.0};
};

/// x-dependent quantities shared by every subject at one evaluation point.
struct XCache {
  double x = 0.0;
  double q = 1.0;    // exp(-eta x) (gamma frailty)
  double y = 0.0;    // A0^{-1}(x) (half-logistic)
  double sy = 0.5, sny = 0.5, yp = 1.0, ypp = 0.0;
  double r = 1.0;    // (1 + 2x)^{-1/2} (linear hazard)
};

/// Subject-dependent quantities for one theta.
struct ZCache {
  double lp1 = 0.0, lp2 = 0.0;
  double c1 = 1.0, c2 = 1.0;
};

using ThetaBox = std::vector<std::pair<double, double>>;

class CoreModel {
 public:
  CoreModel() = default;

  static CoreModel proportional_hazards(std::size_t d);
  static CoreModel half_logistic(std::size_t d);
  /// Gamma frailty with fixed shape eta >= 0.
  static CoreModel gamma_frailty(std::size_t d, double eta);
  /// Gamma frailty with eta(z) = exp(xi' z); theta = (beta, xi).
  static CoreModel gamma_frailty_covariate(std::size_t d);
  static CoreModel linear_hazard(std::size_t d);

  /// {"family": "...", "eta": ..., "covariate_frailty": bool}
  static CoreModel from_json(const nlohmann::json& desc, std::size_t d);
  nlohmann::json to_json() const;

  Family family() const { return family_; }
  std::string name() const { return family_name(family_); }
  double eta() const { return eta_; }
  bool covariate_frailty() const { return covariate_frailty_; }
  std::size_t d() const { return d_; }
  std::size_t blocks() const { return blocks_; }
  std::size_t theta_dim() const { return blocks_ * d_; }

  /// Linear predictors (theta_1'z, theta_2'z); the second is 0 for one-block families.
  std::pair<double, double> linear_predictors(const Eigen::VectorXd& theta, const double* z) const;

  HazardKernel kernel(double x, double lp1, double lp2) const;
  XCache prepare_x(double x) const;
  ZCache prepare_z(double lp1, double lp2) const;
  HazardKernel kernel(const XCache& xc, const ZCache& zc) const;
  /// The hazard does not depend on x (PH, or gamma frailty with eta = 0).
  bool x_free() const;
  double cumhaz_lp(double x, double lp1, double lp2) const;
  double cumhaz_inverse_lp(double a, double lp1, double lp2) const;

  HazardEval hazard_eval(double x, const Eigen::VectorXd& theta, const Eigen::VectorXd& z) const;
  double cumhaz(double x, const Eigen::VectorXd& theta, const Eigen::VectorXd& z) const;
  double cumhaz_inverse(double a, const Eigen::VectorXd& theta, const Eigen::VectorXd& z) const;

  /// (m1, m2) with m1 <= alpha <= m2 for every x >= 0, theta in the box and
  /// |z|_inf <= c_bound.
  std::pair<double, double> bounds(const ThetaBox& box, double c_bound) const;

  /// True when the model is fitted on centered covariates (z0 = 0 normalization).
  bool needs_reference_point() const { return family_ == Family::linear_hazard; }

 private:
  void check_args(double x, const Eigen::VectorXd& theta, const Eigen::VectorXd& z) const;

  Family family_ = Family::proportional_hazards;
  std::size_t d_ = 0;
  std::size_t blocks_ = 1;
  double eta_ = 0.0;
  bool covariate_frailty_ = false;
};

/// Symmetric box [-r, r] in every coordinate.
ThetaBox symmetric_box(std::size_t dim, double r);

}  // namespace transmod
