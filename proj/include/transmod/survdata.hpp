#pragma once

#include <cstddef>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace transmod {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One observation: withdrawal time X, event indicator delta, covariates Z.
struct Subject {
  double time = 0.0;
  int status = 0;
  Eigen::VectorXd z;
};

/// A right-censored sample sorted by time, with the event grid and the
/// normalized counting and at-risk processes evaluated on it.
///
/// All empirical processes carry the 1/n factor: event_mass[j] is the jump
/// of N(t)/n at grid point j and at_risk[j] is #{i : X_i >= t_j} / n.
class Dataset {
 public:
  Dataset() = default;

  /// Sorts the subjects and builds the event grid. Throws InputError on
  /// invalid subjects (negative or non-finite time, non-binary status,
  /// non-finite covariates, inconsistent dimension) or an empty sample.
  static Dataset from_subjects(std::vector<Subject> subjects);

  std::size_t n() const { return times_.size(); }
  std::size_t d() const { return static_cast<std::size_t>(covariates_.cols()); }
  std::size_t n_events() const { return n_events_; }
  double c_bound() const { return c_bound_; }

  // Sorted subject arrays.
  std::span<const double> times() const { return times_; }
  std::span<const int> status() const { return status_; }
  const RowMatrix& covariates() const { return covariates_; }
  const double* z(std::size_t i) const { return covariates_.data() + i * d(); }
  Subject subject(std::size_t i) const;

  // Event grid.
  std::size_t grid_size() const { return grid_.size(); }
  std::span<const double> grid() const { return grid_; }
  std::span<const double> event_mass() const { return event_mass_; }
  std::span<const double> at_risk() const { return at_risk_; }
  std::span<const std::size_t> event_count() const { return event_count_; }
  /// Index of the first sorted subject with time >= grid[j]; the risk set at
  /// grid[j] is the suffix starting there.
  std::span<const std::size_t> first_at_risk() const { return first_at_risk_; }
  /// Largest observed time.
  double max_time() const { return times_.empty() ? 0.0 : times_.back(); }

  /// Number of subjects with time >= t.
  std::size_t count_at_risk(double t) const;

 private:
  std::vector<double> times_;
  std::vector<int> status_;
  RowMatrix covariates_;
  std::vector<double> grid_;
  std::vector<double> event_mass_;
  std::vector<double> at_risk_;
  std::vector<std::size_t> event_count_;
  std::vector<std::size_t> first_at_risk_;
  std::size_t n_events_ = 0;
  double c_bound_ = 0.0;
};

/// Reads `time,status,z1,...,zd` CSV with a header row.
Dataset ingest_csv(std::istream& in);
Dataset ingest_csv_file(const std::string& path);

/// Writes the dataset in the same CSV layout, round-trip exact.
void write_csv(std::ostream& out, const Dataset& data);

enum class TauRuleKind { quantile, fixed, last_event };

struct TauRule {
  TauRuleKind kind = TauRuleKind::quantile;
  double value = 0.9;  // q for quantile, t for fixed

  static TauRule quantile(double q = 0.9) { return {TauRuleKind::quantile, q}; }
  static TauRule fixed(double t) { return {TauRuleKind::fixed, t}; }
  static TauRule last_event() { return {TauRuleKind::last_event, 0.0}; }
  std::string describe() const;
};

struct Horizon {
  double tau = 0.0;
  std::size_t grid_index = 0;  // last event-grid index with grid[j] <= tau
  TauRule rule;

  std::size_t atoms() const { return grid_index + 1; }
};

/// Picks the right end of the estimation window. Throws InputError when the
/// rule cannot be satisfied.
Horizon choose_tau(const Dataset& data, const TauRule& rule = TauRule::quantile());

/// Right-continuous step function with jumps at `times`.
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;

  double operator()(double t) const;
};

/// Aalen-Nelson estimator sum_{t_j <= t} dN(t_j)/Y(t_j) on the grid up to tau.
StepFunction aalen_nelson(const Dataset& data, const Horizon& horizon);

/// {n, d, n_events, grid, at_risk}
nlohmann::json dataset_summary(const Dataset& data);

}  // namespace transmod
