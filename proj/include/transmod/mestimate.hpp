#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"
#include "transmod/core_models.hpp"
#include "transmod/errors.hpp"
#include "transmod/fredholm.hpp"
#include "transmod/survdata.hpp"
#include "transmod/transform.hpp"

namespace transmod {

inline constexpr int kSchemaVersion = 1;

enum class PhiStrategy { zero, minus_gamma_dot, efficient };
std::string phi_name(PhiStrategy s);
PhiStrategy parse_phi(const std::string& name);

/// phi on the atoms (m x p).
struct WeightPath {
  PhiStrategy strategy = PhiStrategy::zero;
  Eigen::MatrixXd values;
};

struct SigmaMatrices {
  Eigen::MatrixXd sigma0;
  Eigen::MatrixXd sigma1;
  Eigen::MatrixXd sigma2;
};

/// How covariates are shifted before fitting. `automatic` centers a
/// coordinate only for models normalized at z = 0 (linear hazard) and only
/// when 0 lies outside that coordinate's observed range.
enum class Centering { automatic, off, on };

struct FitConfig {
  PhiStrategy phi = PhiStrategy::efficient;
  TauRule tau = TauRule::quantile();
  std::optional<Eigen::VectorXd> theta_init;
  double tol = 1e-10;
  double tol_step = 1e-12;
  int max_iter = 50;
  double box = 10.0;  // divergence guard: |theta_k| <= box
  double rcond_min = 1e-12;
  Centering center = Centering::automatic;
  ProductForm product_form = ProductForm::product;
  FredholmMethod fredholm_method = FredholmMethod::tridiagonal;

  void validate() const;
};

struct FitResult {
  CoreModel model;
  Eigen::VectorXd theta_hat;
  double score_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd sigma0, sigma1, sigma2;
  Eigen::MatrixXd cov_theta;
  Eigen::VectorXd se;
  std::optional<TransformPath> gamma_path;
  WeightPath phi;
  Horizon tau;
  Eigen::VectorXd covariate_offset;
  std::size_t n = 0;
  std::size_t n_events = 0;
  std::vector<std::string> warnings;
};

/// Non-convergence, singular Sigma_1 or divergence. Carries whatever the
/// solver had computed so far.
class FitError : public NumericalError {
 public:
  FitError(const std::string& what, FitResult partial)
      : NumericalError(what), partial_(std::make_shared<FitResult>(std::move(partial))) {}
  const FitResult& partial() const { return *partial_; }

 private:
  std::shared_ptr<FitResult> partial_;
};

/// Conditional moments stored on the path (right values).
const MomentPath& moments(const TransformPath& path);

WeightPath make_phi(PhiStrategy strategy, const TransformPath& path,
                    ProductForm form = ProductForm::product,
                    FredholmMethod method = FredholmMethod::tridiagonal);

/// U_n(theta) = n^{-1} sum_i int [b1_i - b2_i phi] dN_i on the path's atoms.
Eigen::VectorXd score(const TransformPath& path, const WeightPath& phi);

SigmaMatrices sigma_matrices(const TransformPath& path, const WeightPath& phi);

/// Everything the solver needs at one theta.
struct Evaluation {
  TransformPath path;
  WeightPath phi;
  Eigen::VectorXd score;
  SigmaMatrices sigma;
};
Evaluation evaluate(const Dataset& data, const CoreModel& model, const Eigen::VectorXd& theta,
                    const Horizon& horizon, const FitConfig& config);

/// Shifts covariates per the centering policy; returns the offsets used.
Dataset center_covariates(const Dataset& data, const CoreModel& model, Centering policy, Eigen::VectorXd& offset);

/// Iterates theta <- theta + Sigma_1(theta)^{-1} U_n(theta) until the score or
/// the step is below tolerance. Throws FitError on failure.
FitResult solve(const Dataset& data, const CoreModel& model, const FitConfig& config = {});

/// Single correction from a preliminary estimate; reports at the corrected value.
FitResult one_step(const Dataset& data, const CoreModel& model, const Eigen::VectorXd& theta_tilde,
                   const FitConfig& config = {});

nlohmann::json fit_to_json(const FitResult& fit);

}  // namespace transmod
