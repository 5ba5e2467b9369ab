#include "transmod/fredholm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "transmod/errors.hpp"

namespace transmod {

namespace {

double rel_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// (K g)_t = sum_u c(t ^ u) g_u in O(m).
Eigen::MatrixXd apply_kernel(const std::vector<double>& c, const Eigen::MatrixXd& g) {
  const auto m = g.rows();
  Eigen::MatrixXd out(m, g.cols());
  Eigen::RowVectorXd tail = g.colwise().sum();
  Eigen::RowVectorXd head = Eigen::RowVectorXd::Zero(g.cols());
  for (Eigen::Index t = 0; t < m; ++t) {
    const double ct = c[static_cast<std::size_t>(t)];
    head += ct * g.row(t);
    tail -= g.row(t);
    out.row(t) = head + ct * tail;
  }
  return out;
}

Eigen::MatrixXd solve_dense(const CBMeasures& cb, const Eigen::MatrixXd& eta) {
  const auto m = static_cast<Eigen::Index>(cb.atoms());
  const auto c = cb.cumulative_c();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      A(i, j) += c[static_cast<std::size_t>(std::min(i, j))] * cb.db[static_cast<std::size_t>(j)];
  return A.partialPivLu().solve(eta);
}

// Differencing consecutive rows twice leaves a symmetric tridiagonal system:
//   -psi_{j-1}/dc_j + (1/dc_j + 1/dc_{j+1} + db_j) psi_j - psi_{j+1}/dc_{j+1}
//       = (eta_j - eta_{j-1})/dc_j - (eta_{j+1} - eta_j)/dc_{j+1},
// with the last row (1/dc_m + db_m) psi_m - psi_{m-1}/dc_m = (eta_m - eta_{m-1})/dc_m.
Eigen::MatrixXd solve_tridiagonal(const CBMeasures& cb, const Eigen::MatrixXd& eta) {
  const std::size_t m = cb.atoms();
  for (double x : cb.dc)
    if (!(x > 0.0)) return solve_dense(cb, eta);
  std::vector<double> diag(m), off(m);  // off[j] couples j and j+1
  for (std::size_t j = 0; j < m; ++j) {
    const double inv = 1.0 / cb.dc[j];
    const double inv_next = j + 1 < m ? 1.0 / cb.dc[j + 1] : 0.0;
    diag[j] = inv + inv_next + cb.db[j];
    off[j] = -inv_next;
  }
  // Thomas elimination; the matrix is symmetric and diagonally dominant.
  std::vector<double> cprime(m), denom(m);
  denom[0] = diag[0];
  for (std::size_t j = 1; j < m; ++j) {
    cprime[j - 1] = off[j - 1] / denom[j - 1];
    denom[j] = diag[j] - off[j - 1] * cprime[j - 1];
  }
  Eigen::MatrixXd out(eta.rows(), eta.cols());
  std::vector<double> rhs(m);
  for (Eigen::Index col = 0; col < eta.cols(); ++col) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double prev = j == 0 ? 0.0 : eta(jj - 1, col);
      double r = (eta(jj, col) - prev) / cb.dc[j];
      if (j + 1 < m) r -= (eta(jj + 1, col) - eta(jj, col)) / cb.dc[j + 1];
      rhs[j] = r;
    }
    rhs[0] /= denom[0];
    for (std::size_t j = 1; j < m; ++j) rhs[j] = (rhs[j] - off[j - 1] * rhs[j - 1]) / denom[j];
    for (std::size_t j = m - 1; j-- > 0;) rhs[j] -= cprime[j] * rhs[j + 1];
    for (std::size_t j = 0; j < m; ++j) out(static_cast<Eigen::Index>(j), col) = rhs[j];
  }
  return out;
}

// sum_u Delta(t, u) w_u for every t, in O(m).
Eigen::MatrixXd apply_resolvent(const PsiEdges& e, const Eigen::MatrixXd& w) {
  const auto m = w.rows();
  Eigen::MatrixXd out(m, w.cols());
  Eigen::RowVectorXd head = Eigen::RowVectorXd::Zero(w.cols());
  Eigen::RowVectorXd tail = Eigen::RowVectorXd::Zero(w.cols());
  for (Eigen::Index u = 0; u < m; ++u) tail += e.psi0_to_tau[static_cast<std::size_t>(u)] * w.row(u);
  for (Eigen::Index t = 0; t < m; ++t) {
    const auto tt = static_cast<std::size_t>(t);
    head += e.psi1_from0[tt] * w.row(t);
    tail -= e.psi0_to_tau[tt] * w.row(t);
    out.row(t) = (e.psi0_to_tau[tt] * head + e.psi1_from0[tt] * tail) / e.W;
  }
  return out;
}

Eigen::MatrixXd solve_resolvent(const CBMeasures& cb, const Eigen::MatrixXd& eta) {
  const PsiEdges e = psi_edges(cb);
  Eigen::MatrixXd w = eta;
  for (Eigen::Index j = 0; j < w.rows(); ++j) w.row(j) *= cb.db[static_cast<std::size_t>(j)];
  return eta - apply_resolvent(e, w);
}

}  // namespace

std::vector<double> CBMeasures::cumulative_c() const {
  std::vector<double> c(dc.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < dc.size(); ++j) c[j] = acc += dc[j];
  return c;
}

double CBMeasures::kappa() const {
  const auto c = cumulative_c();
  double k = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) k += c[j] * db[j];
  return k;
}

CBMeasures cb_measures(const TransformPath& path, ProductForm form) {
  if (!path.has_moments) throw InputError("cb_measures: path was built without moments");
  CBMeasures cb;
  cb.form = form;
  cb.times = path.times;
  cb.P = prod_from_zero(path, form);
  const std::size_t m = path.atoms();
  cb.dc.resize(m);
  cb.db.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double p2 = cb.P[j] * cb.P[j];
    cb.dc[j] = path.dC[j] / p2;
    cb.db[j] = p2 * path.moments.v[j] * path.dN[j];
  }
  return cb;
}

CBMeasures cb_from_masses(std::vector<double> dc, std::vector<double> db) {
  if (dc.size() != db.size() || dc.empty()) throw InputError("cb_from_masses: need equal, nonempty mass vectors");
  for (std::size_t j = 0; j < dc.size(); ++j)
    if (!(dc[j] >= 0.0) || !(db[j] >= 0.0)) throw InputError("cb_from_masses: masses must be >= 0");
  CBMeasures cb;
  cb.times.resize(dc.size());
  for (std::size_t j = 0; j < dc.size(); ++j) cb.times[j] = static_cast<double>(j + 1);
  cb.P.assign(dc.size(), 1.0);
  cb.dc = std::move(dc);
  cb.db = std::move(db);
  return cb;
}

PsiTable::PsiTable(const CBMeasures& cb) : m_(cb.atoms()) {
  dc_.assign(m_ + 2, 0.0);
  db_.assign(m_ + 2, 0.0);
  for (std::size_t j = 0; j < m_; ++j) {
    dc_[j + 1] = cb.dc[j];
    db_[j + 1] = cb.db[j];
  }
  const std::size_t w = m_ + 2;
  p0_.assign(w * w, 0.0);
  p1_.assign(w * w, 0.0);
  p2_.assign(w * w, 0.0);
  p3_.assign(w * w, 0.0);
  for (std::size_t s = 0; s <= m_; ++s) {
    p0_[idx(s, s)] = 1.0;
    for (std::size_t t = s + 1; t <= m_; ++t) {
      p1_[idx(s, t)] = p1_[idx(s, t - 1)] + p0_[idx(s, t - 1)] * dc_[t];
      p0_[idx(s, t)] = p0_[idx(s, t - 1)] + p1_[idx(s, t)] * db_[t];
    }
  }
  for (std::size_t s = 1; s <= m_ + 1; ++s) {
    p2_[idx(s, s)] = 1.0;
    for (std::size_t t = s; t <= m_; ++t) {
      // a c mass may share an atom with the b mass after it, never with the one before
      p2_[idx(s, t + 1)] = p2_[idx(s, t)] + p3_[idx(s, t)] * dc_[t];
      p3_[idx(s, t + 1)] = p3_[idx(s, t)] + p2_[idx(s, t + 1)] * db_[t];
    }
  }
}

double PsiTable::identity_deviation() const {
  double worst = 0.0;
  for (std::size_t s = 0; s <= m_; ++s)
    for (std::size_t t = s; t <= m_; ++t) {
      double a0 = 1.0, a1 = 0.0;
      for (std::size_t u = s + 1; u <= t; ++u) {
        a0 += dc_[u] * psi3(u, t + 1);
        a1 += dc_[u] * psi2(u, t + 1);
      }
      worst = std::max({worst, rel_gap(a0, psi0(s, t)), rel_gap(a1, psi1(s, t))});
    }
  for (std::size_t s = 1; s <= m_ + 1; ++s)
    for (std::size_t t = s; t <= m_ + 1; ++t) {
      double a2 = 1.0, a3 = 0.0;
      for (std::size_t u = s; u < t; ++u) {
        a2 += db_[u] * psi1(u, t - 1);
        a3 += db_[u] * psi0(u, t - 1);
      }
      worst = std::max({worst, rel_gap(a2, psi2(s, t)), rel_gap(a3, psi3(s, t))});
    }
  return worst;
}

double resolvent(const PsiTable& table, std::size_t t, std::size_t u) {
  const std::size_t m = table.atoms();
  if (t >= m || u >= m) throw InputError("resolvent: atom index beyond tau");
  const double w = table.W();
  if (!(w > 0.0)) throw NumericalError("resolvent: Psi0(0, tau) is not positive");
  return table.psi1(0, std::min(t, u) + 1) * table.psi0(std::max(t, u) + 1, m) / w;
}

PsiEdges psi_edges(const CBMeasures& cb) {
  const std::size_t m = cb.atoms();
  PsiEdges e;
  e.psi1_from0.resize(m);
  e.psi0_to_tau.resize(m);
  double p0 = 1.0, p1 = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    p1 += p0 * cb.dc[j];
    p0 += p1 * cb.db[j];
    e.psi1_from0[j] = p1;
  }
  e.W = p0;
  // Backward in the left endpoint: Psi0(s, tau) = Psi0(s+1, tau) + c_{s+1} Psi3([s+1, tau]),
  // Psi3([s, tau]) = Psi3([s+1, tau]) + b_s Psi0(s, tau).
  double q0 = 1.0, q3 = 0.0;
  for (std::size_t j = m; j-- > 0;) {
    e.psi0_to_tau[j] = q0;
    q3 += cb.db[j] * q0;
    q0 += cb.dc[j] * q3;
  }
  return e;
}

Eigen::MatrixXd solve_fredholm(const CBMeasures& cb, const Eigen::MatrixXd& eta, FredholmMethod method) {
  if (cb.atoms() == 0) throw InputError("solve_fredholm: no atoms");
  if (static_cast<std::size_t>(eta.rows()) != cb.atoms()) throw InputError("solve_fredholm: eta has wrong length");
  if (!eta.allFinite()) throw InputError("solve_fredholm: eta must be finite");
  switch (method) {
    case FredholmMethod::dense: return solve_dense(cb, eta);
    case FredholmMethod::tridiagonal: return solve_tridiagonal(cb, eta);
    case FredholmMethod::resolvent: return solve_resolvent(cb, eta);
  }
  return eta;
}

Eigen::VectorXd solve_fredholm(const CBMeasures& cb, const Eigen::VectorXd& eta, FredholmMethod method) {
  const Eigen::MatrixXd r = solve_fredholm(cb, Eigen::MatrixXd(eta), method);
  return r.col(0);
}

Eigen::MatrixXd efficient_phi(const TransformPath& path, const CBMeasures& cb, FredholmMethod method) {
  if (!path.has_moments) throw InputError("efficient_phi: path was built without moments");
  if (cb.atoms() != path.atoms()) throw InputError("efficient_phi: measures do not match the path");
  const std::size_t m = path.atoms();
  const auto& mo = path.moments;
  const bool degenerate = std::all_of(cb.db.begin(), cb.db.end(), [](double x) { return x == 0.0; });
  if (degenerate) return -path.gamma_dot;

  Eigen::MatrixXd g(static_cast<Eigen::Index>(m), path.gamma_dot.cols());
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    g.row(jj) = (mo.v[j] * path.gamma_dot.row(jj) + mo.rho.row(jj)) * (cb.P[j] * path.dN[j]);
  }
  Eigen::MatrixXd psi;
  if (method == FredholmMethod::resolvent) {
    psi = apply_resolvent(psi_edges(cb), g);
  } else {
    psi = solve_fredholm(cb, apply_kernel(cb.cumulative_c(), g), method);
  }
  Eigen::MatrixXd phi = -path.gamma_dot;
  for (std::size_t j = 0; j < m; ++j) phi.row(static_cast<Eigen::Index>(j)) += cb.P[j] * psi.row(static_cast<Eigen::Index>(j));
  return phi;
}

DeterminantCheck determinant_oracle(const CBMeasures& cb, std::size_t m_max) {
  const std::size_t m = cb.atoms();
  if (m > 8) throw InputError("determinant_oracle: at most 8 atoms");
  if (m_max > 4) throw InputError("determinant_oracle: order at most 4");
  const auto c = cb.cumulative_c();
  DeterminantCheck out;
  out.brute.assign(m_max + 1, 0.0);
  out.series.assign(m_max + 1, 0.0);
  out.brute[0] = 1.0;

  std::vector<std::size_t> tuple;
  double factorial = 1.0;
  for (std::size_t k = 1; k <= m_max; ++k) {
    factorial *= static_cast<double>(k);
    tuple.assign(k, 0);
    double total = 0.0;
    std::function<void(std::size_t)> rec = [&](std::size_t pos) {
      if (pos == k) {
        Eigen::MatrixXd K(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        double prod_b = 1.0;
        for (std::size_t a = 0; a < k; ++a) {
          prod_b *= cb.db[tuple[a]];
          for (std::size_t b = 0; b < k; ++b)
            K(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c[std::min(tuple[a], tuple[b])];
        }
        total += K.determinant() * prod_b;
        return;
      }
      for (std::size_t s = 0; s < m; ++s) {
        tuple[pos] = s;
        rec(pos + 1);
      }
    };
    rec(0);
    out.brute[k] = total / factorial;
  }
  for (double x : out.brute) out.determinant += x;

  // Order-tracking forward recursion from the left end.
  std::vector<double> p0(m_max + 1, 0.0), p1(m_max + 1, 0.0);
  p0[0] = 1.0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k <= m_max; ++k) p1[k] += p0[k] * cb.dc[j];
    for (std::size_t k = m_max; k >= 1; --k) p0[k] += p1[k - 1] * cb.db[j];
  }
  out.series = p0;
  return out;
}

double wronskian_check(const PsiTable& table) {
  const std::size_t m = table.atoms();
  const double w = table.W();
  double worst = 0.0;
  for (std::size_t t = 1; t <= m; ++t) {
    const double val = table.psi1(0, t) * table.psi3(t + 1, m + 1) + table.psi0(0, t) * table.psi0(t, m);
    worst = std::max(worst, std::abs(val - w) / w);
  }
  return worst;
}

double norm_b(const CBMeasures& cb, const Eigen::VectorXd& f) {
  double s = 0.0;
  for (std::size_t j = 0; j < cb.atoms(); ++j) s += f[static_cast<Eigen::Index>(j)] * f[static_cast<Eigen::Index>(j)] * cb.db[j];
  return std::sqrt(s);
}

nlohmann::json fredholm_diagnostics(const CBMeasures& cb) {
  const PsiEdges e = psi_edges(cb);
  nlohmann::json j;
  j["atoms"] = cb.times;
  j["dc"] = cb.dc;
  j["db"] = cb.db;
  j["Psi0_0_tau"] = e.W;
  j["kappa"] = cb.kappa();
  if (cb.atoms() <= 400) j["wronskian_dev"] = wronskian_check(PsiTable(cb));
  return j;
}

}  // namespace transmod
