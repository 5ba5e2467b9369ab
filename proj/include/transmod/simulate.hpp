#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"
#include "transmod/core_models.hpp"
#include "transmod/mestimate.hpp"
#include "transmod/survdata.hpp"

namespace transmod {

enum class Gamma0 { identity, square, log1p };

double gamma0_eval(Gamma0 g, double t);
double gamma0_inverse(Gamma0 g, double x);

struct CovariateLaw {
  enum class Kind { bernoulli, uniform, mixed } kind = Kind::uniform;
  double p = 0.5;  // success probability for Bernoulli coordinates
};

struct CensorLaw {
  enum class Kind { exponential, uniform, none } kind = Kind::exponential;
  double value = 1.0;  // rate for exponential, upper end for uniform
};

struct Scenario {
  CoreModel model;
  Eigen::VectorXd theta0;
  Gamma0 gamma0 = Gamma0::identity;
  CovariateLaw covariates;
  CensorLaw censoring;
  std::size_t n = 100;
  std::uint64_t seed = 1;

  void validate() const;
  static Scenario from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// mt19937_64 with a fixed bit-to-double mapping, so draws do not depend on
/// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }
  double exponential() { return -std::log(uniform_pos()); }

 private:
  std::mt19937_64 eng_;
};

/// SplitMix64 mix of (master, index): independent stream seeds per replication.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct Simulated {
  Dataset data;
  double censored_fraction = 0.0;
};

Simulated gen_dataset(const Scenario& sc, std::uint64_t seed);
inline Simulated gen_dataset(const Scenario& sc) { return gen_dataset(sc, sc.seed); }

/// sup over [0, tau] of |Gamma_n - Gamma0|, checking both one-sided limits at
/// every jump of the step function.
double sup_gamma_error(const TransformPath& path, double tau, Gamma0 g);

struct McConfig {
  std::size_t reps = 100;
  std::vector<PhiStrategy> variants{PhiStrategy::efficient};
  FitConfig fit;
  unsigned jobs = 1;
  bool gamma_error = false;       // also record sup|Gamma_{n,theta0} - Gamma0|
  bool keep_replicates = false;   // keep per-replication (theta, se)
  bool record_runtime = false;
};

struct VariantStats {
  PhiStrategy phi = PhiStrategy::efficient;
  std::size_t ok = 0;
  std::size_t failures = 0;
  Eigen::VectorXd mean, bias, sd, mean_se, coverage;
  // per replication; NaN rows for failures
  Eigen::MatrixXd theta_hat;
  Eigen::MatrixXd se;
};

struct MCReport {
  std::size_t reps = 0;
  Scenario scenario;
  std::vector<VariantStats> variants;
  double mean_censored_fraction = 0.0;
  std::vector<double> gamma_error;  // per replication, when requested
  std::optional<double> runtime_seconds;

  nlohmann::json to_json(bool include_replicates = false) const;
  std::string summary_table() const;
};

/// Runs `reps` independent replications. Results depend only on the scenario
/// seed and the replication index, never on `jobs`. Throws NumericalError
/// when every replication fails for every variant.
MCReport mc_study(const Scenario& sc, const McConfig& config);

}  // namespace transmod
