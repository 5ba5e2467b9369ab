#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"
#include "transmod/transform.hpp"

namespace transmod {

/// Masses of the measures c and b on the atoms t_1 < ... < t_m, and the
/// product integral P(0, t_j] used to build them:
///   dc_j = dC_j / P_j^2,  db_j = P_j^2 v_j dN_j.
/// The kernel is k(t, u) = c(t ^ u) with c(t) the cumulative sum of dc.
struct CBMeasures {
  std::vector<double> times;
  std::vector<double> dc;
  std::vector<double> db;
  std::vector<double> P;
  ProductForm form = ProductForm::product;

  std::size_t atoms() const { return dc.size(); }
  std::vector<double> cumulative_c() const;
  /// sum_j c(t_j) db_j
  double kappa() const;
};

CBMeasures cb_measures(const TransformPath& path, ProductForm form = ProductForm::product);
/// Measures given directly (P = 1); used for synthetic instances.
CBMeasures cb_from_masses(std::vector<double> dc, std::vector<double> db);

/// Psi_0..Psi_3 interval functions on an atomic pair (c, b).
///
/// Endpoints are positions: Psi0(s, t) and Psi1(s, t) cover the atoms in
/// (s, t], i.e. s+1..t for 0 <= s <= t <= m; Psi2(s, t) and Psi3(s, t) cover
/// [s, t), i.e. s..t-1 for 1 <= s <= t <= m+1. Outside those ranges (s > t)
/// every function is 0.
class PsiTable {
 public:
  explicit PsiTable(const CBMeasures& cb);

  std::size_t atoms() const { return m_; }
  double psi0(std::size_t s, std::size_t t) const { return s > t ? 0.0 : p0_[idx(s, t)]; }
  double psi1(std::size_t s, std::size_t t) const { return s > t ? 0.0 : p1_[idx(s, t)]; }
  double psi2(std::size_t s, std::size_t t) const { return s > t ? 0.0 : p2_[idx(s, t)]; }
  double psi3(std::size_t s, std::size_t t) const { return s > t ? 0.0 : p3_[idx(s, t)]; }
  /// Psi0(0, tau).
  double W() const { return psi0(0, m_); }

  /// Largest relative gap between the two integral representations of each
  /// Psi_j, over all position pairs.
  double identity_deviation() const;

  double c(std::size_t atom) const { return dc_[atom]; }  // atom in 1..m
  double b(std::size_t atom) const { return db_[atom]; }

 private:
  std::size_t idx(std::size_t s, std::size_t t) const { return s * (m_ + 2) + t; }
  std::size_t m_;
  std::vector<double> dc_, db_;  // 1-based
  std::vector<double> p0_, p1_, p2_, p3_;
};

/// Resolvent Delta(t, u) = Psi1(0, t ^ u) Psi0(t v u, tau) / Psi0(0, tau) for
/// 0-based atom indices t, u.
double resolvent(const PsiTable& table, std::size_t t, std::size_t u);

/// Psi1(0, t_j] and Psi0(t_j, tau] for every atom j (0-based), in O(m).
struct PsiEdges {
  std::vector<double> psi1_from0;
  std::vector<double> psi0_to_tau;
  double W = 1.0;
};
PsiEdges psi_edges(const CBMeasures& cb);

enum class FredholmMethod { dense, tridiagonal, resolvent };

/// Solves psi_j + sum_i c(t_i ^ t_j) db_i psi_i = eta_j column by column.
Eigen::MatrixXd solve_fredholm(const CBMeasures& cb, const Eigen::MatrixXd& eta, FredholmMethod method);
Eigen::VectorXd solve_fredholm(const CBMeasures& cb, const Eigen::VectorXd& eta, FredholmMethod method);

/// The efficient weight
///   phi(t) = -Gamma_dot(t) + P(0,t) sum_u Delta(t,u) [v Gamma_dot + rho](u) P(0,u) dN(u).
/// Falls back to -Gamma_dot when v vanishes on every atom. Result is m x p.
Eigen::MatrixXd efficient_phi(const TransformPath& path, const CBMeasures& cb,
                              FredholmMethod method = FredholmMethod::tridiagonal);

/// Order-by-order comparison of the Fredholm determinant series:
/// brute[k] = (1/k!) sum over ordered k-tuples of atoms of det[c(s_i ^ s_j)] prod b(s_i),
/// series[k] = Psi_{0k}(0, tau) from the order-tracking recursion.
struct DeterminantCheck {
  std::vector<double> brute;
  std::vector<double> series;
  double determinant = 0.0;  // sum of brute terms up to m_max
};
DeterminantCheck determinant_oracle(const CBMeasures& cb, std::size_t m_max);

/// max_t |Psi1(0,t) Psi3((t, tau]) + Psi0(0,t) Psi0(t,tau) - W| / W over atoms.
double wronskian_check(const PsiTable& table);

/// ||f||_b = (sum_j f_j^2 db_j)^{1/2}
double norm_b(const CBMeasures& cb, const Eigen::VectorXd& f);

/// {atoms, dc, db, Psi0_0_tau, kappa, wronskian_dev}
nlohmann::json fredholm_diagnostics(const CBMeasures& cb);

}  // namespace transmod
