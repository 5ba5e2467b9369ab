#include "transmod/transform.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "transmod/errors.hpp"

namespace transmod {

namespace {

// Running alpha-weighted sums over part of a risk set.
struct RiskSums {
  std::size_t p = 0;
  bool second = false;
  double w = 0.0, wd = 0.0, wdd = 0.0;
  std::vector<double> wg, wgd, wgg;

  RiskSums(std::size_t p_, bool second_) : p(p_), second(second_), wg(p_), wgd(p_), wgg(p_ * p_) {}

  void reset() {
    w = wd = wdd = 0.0;
    std::fill(wg.begin(), wg.end(), 0.0);
    std::fill(wgd.begin(), wgd.end(), 0.0);
    std::fill(wgg.begin(), wgg.end(), 0.0);
  }

  void add(double alpha, double dx, const double* lt) {
    const double ad = alpha * dx;
    w += alpha;
    wd += ad;
    for (std::size_t a = 0; a < p; ++a) wg[a] += alpha * lt[a];
    if (!second) return;
    wdd += ad * dx;
    for (std::size_t a = 0; a < p; ++a) {
      wgd[a] += ad * lt[a];
      const double al = alpha * lt[a];
      for (std::size_t b = a; b < p; ++b) wgg[a * p + b] += al * lt[b];
    }
  }
};

void fill_ldot(const HazardKernel& k, const double* z, std::size_t d, std::size_t blocks, double* out) {
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t r = 0; r < d; ++r) out[b * d + r] = k.g[b] * z[r];
}

void store_moments(MomentPath& mp, std::size_t j, const RiskSums& s) {
  const auto p = static_cast<Eigen::Index>(s.p);
  const auto jj = static_cast<Eigen::Index>(j);
  const double e = s.wd / s.w;
  mp.e[j] = e;
  mp.v[j] = std::max(0.0, s.wdd / s.w - e * e);
  Eigen::MatrixXd vb(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    const double ea = s.wg[static_cast<std::size_t>(a)] / s.w;
    mp.ebar(jj, a) = ea;
    mp.rho(jj, a) = s.wgd[static_cast<std::size_t>(a)] / s.w - ea * e;
  }
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = a; b < p; ++b) {
      const double c = s.wgg[static_cast<std::size_t>(a * p + b)] / s.w - mp.ebar(jj, a) * mp.ebar(jj, b);
      vb(a, b) = c;
      vb(b, a) = c;
    }
  for (Eigen::Index a = 0; a < p; ++a) vb(a, a) = std::max(0.0, vb(a, a));
  mp.vbar[j] = std::move(vb);
}

void check_S(double S, std::size_t j, double t) {
  if (!(S > 0.0) || !std::isfinite(S)) {
    std::ostringstream os;
    os << "risk-set intensity S vanished or is not finite at atom " << j << " (t = " << t
       << "); choose a smaller tau";
    throw NumericalError(os.str());
  }
}

}  // namespace

double TransformPath::gamma_at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return gamma[static_cast<std::size_t>(it - times.begin()) - 1];
}

TransformPath fit_transform(const Dataset& data, const CoreModel& model, const Eigen::VectorXd& theta,
                            const Horizon& horizon, const TransformOptions& options) {
  if (static_cast<std::size_t>(theta.size()) != model.theta_dim())
    throw InputError("theta has dimension " + std::to_string(theta.size()) + ", model expects " +
                     std::to_string(model.theta_dim()));
  if (model.d() != data.d()) throw InputError("model covariate dimension does not match the data");
  if (!theta.allFinite()) throw InputError("theta must be finite");
  if (horizon.grid_index >= data.grid_size()) throw InputError("horizon does not match the data");

  const std::size_t n = data.n();
  const std::size_t d = data.d();
  const std::size_t p = model.theta_dim();
  const std::size_t blocks = model.blocks();
  const std::size_t m = horizon.atoms();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto first = data.first_at_risk();
  const auto times = data.times();
  const auto status = data.status();
  const bool want_moments = options.moments;

  TransformPath path;
  path.theta = theta;
  path.n = n;
  path.times.assign(data.grid().begin(), data.grid().begin() + static_cast<std::ptrdiff_t>(m));
  path.dN.assign(data.event_mass().begin(), data.event_mass().begin() + static_cast<std::ptrdiff_t>(m));
  path.events.assign(data.event_count().begin(), data.event_count().begin() + static_cast<std::ptrdiff_t>(m));
  path.gamma.resize(m);
  path.S.resize(m);
  path.S_dx.resize(m);
  path.S_dtheta.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  path.gamma_dot.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  path.dC.resize(m);
  path.factor.resize(m);
  path.prod0.resize(m);
  path.has_moments = want_moments;
  MomentPath& mp = path.moments;
  if (want_moments) {
    mp.e.assign(m, 0.0);
    mp.v.assign(m, 0.0);
    mp.ebar.setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
    mp.rho.setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
    mp.vbar.assign(m, Eigen::MatrixXd());
    mp.event_ldot.setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
    mp.event_ldx.assign(m, 0.0);
  }

  std::vector<ZCache> zc(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [l1, l2] = model.linear_predictors(theta, data.z(i));
    zc[i] = model.prepare_z(l1, l2);
  }

  std::vector<double> lt(p);
  auto record_left = [&](std::size_t j, const RiskSums& s) {
    path.S[j] = s.w * inv_n;
    path.S_dx[j] = s.wd * inv_n;
    for (std::size_t a = 0; a < p; ++a)
      path.S_dtheta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a)) = s.wg[a] * inv_n;
  };
  auto add_event = [&](std::size_t j, const HazardKernel& k) {
    mp.event_ldx[j] += k.dx;
    for (std::size_t a = 0; a < p; ++a)
      mp.event_ldot(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a)) += lt[a];
  };

  if (model.x_free()) {
    // Kernel values do not depend on x: risk-set sums are suffix sums.
    const XCache xc = model.prepare_x(0.0);
    RiskSums acc(p, want_moments);
    std::size_t i = n;
    for (std::size_t jj = m; jj-- > 0;) {
      while (i > first[jj]) {
        --i;
        const HazardKernel k = model.kernel(xc, zc[i]);
        fill_ldot(k, data.z(i), d, blocks, lt.data());
        acc.add(k.alpha, k.dx, lt.data());
        if (want_moments && status[i] == 1 && times[i] == path.times[jj]) add_event(jj, k);
      }
      record_left(jj, acc);
      if (want_moments) store_moments(mp, jj, acc);
    }
    for (std::size_t j = 0; j < m; ++j) {
      check_S(path.S[j], j, path.times[j]);
      path.gamma[j] = path.gamma_left(j) + path.dN[j] / path.S[j];
    }
  } else {
    RiskSums left(p, false);
    {
      const XCache xc0 = model.prepare_x(0.0);
      for (std::size_t i = first[0]; i < n; ++i) {
        const HazardKernel k = model.kernel(xc0, zc[i]);
        fill_ldot(k, data.z(i), d, blocks, lt.data());
        left.add(k.alpha, k.dx, lt.data());
      }
    }
    RiskSums acc(p, want_moments);
    for (std::size_t j = 0; j < m; ++j) {
      record_left(j, left);
      check_S(path.S[j], j, path.times[j]);
      const double x = path.gamma_left(j) + path.dN[j] / path.S[j];
      path.gamma[j] = x;
      const bool last = j + 1 == m;
      if (last && !want_moments) break;

      const XCache xc = model.prepare_x(x);
      const std::size_t split = last ? n : first[j + 1];
      acc.reset();
      for (std::size_t i = n; i-- > split;) {
        const HazardKernel k = model.kernel(xc, zc[i]);
        fill_ldot(k, data.z(i), d, blocks, lt.data());
        acc.add(k.alpha, k.dx, lt.data());
      }
      left.w = acc.w;
      left.wd = acc.wd;
      left.wg = acc.wg;
      if (!want_moments) continue;
      for (std::size_t i = split; i-- > first[j];) {
        const HazardKernel k = model.kernel(xc, zc[i]);
        fill_ldot(k, data.z(i), d, blocks, lt.data());
        acc.add(k.alpha, k.dx, lt.data());
        if (status[i] == 1 && times[i] == path.times[j]) add_event(j, k);
      }
      store_moments(mp, j, acc);
    }
  }

  double prod = 1.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double S = path.S[j];
    path.dC[j] = path.dN[j] / (S * S);
    const double f = 1.0 - path.S_dx[j] * path.dC[j];
    if (!(f > 0.0)) {
      std::ostringstream os;
      os << "product-integral factor 1 - S' dC = " << f << " is not positive at atom " << j
         << " (t = " << path.times[j] << "); choose a smaller tau";
      throw NumericalError(os.str());
    }
    path.factor[j] = f;
    prod *= f;
    path.prod0[j] = prod;
  }
  transform_gradient(path);
  return path;
}

void transform_gradient(TransformPath& path) {
  const std::size_t m = path.atoms();
  const auto p = static_cast<Eigen::Index>(path.p());
  path.gamma_dot.resize(static_cast<Eigen::Index>(m), p);
  Eigen::RowVectorXd prev = Eigen::RowVectorXd::Zero(p);
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double S = path.S[j];
    const double w = path.dN[j] / (S * S);
    prev = prev - w * (path.S_dtheta.row(jj) + path.S_dx[j] * prev);
    path.gamma_dot.row(jj) = prev;
  }
}

double prod_integral(const TransformPath& path, std::size_t u, std::size_t t) {
  if (u > t || t >= path.atoms()) throw InputError("prod_integral: need u <= t < atoms");
  double r = 1.0;
  for (std::size_t j = u + 1; j <= t; ++j) r *= path.factor[j];
  return r;
}

double kernel_K(const TransformPath& path, std::size_t t, std::size_t t2) {
  if (t >= path.atoms() || t2 >= path.atoms()) throw InputError("kernel_K: index beyond tau");
  const std::size_t lo = std::min(t, t2);
  double s = 0.0;
  for (std::size_t j = 0; j <= lo; ++j) s += path.dC[j] * prod_integral(path, j, t) * prod_integral(path, j, t2);
  return s;
}

double kappa(const TransformPath& path) {
  if (!path.has_moments) throw InputError("kappa: path was built without moments");
  const std::size_t m = path.atoms();
  double g = 0.0, total = 0.0;
  for (std::size_t u = m; u-- > 0;) {
    const double f_next = u + 1 < m ? path.factor[u + 1] : 1.0;
    g = path.moments.v[u] * path.dN[u] + f_next * f_next * g;
    total += path.dC[u] * g;
  }
  return total;
}

std::vector<double> prod_from_zero(const TransformPath& path, ProductForm form) {
  if (form == ProductForm::product) return path.prod0;
  std::vector<double> out(path.atoms());
  double acc = 0.0;
  for (std::size_t j = 0; j < path.atoms(); ++j) {
    acc += path.S_dx[j] * path.dC[j];
    out[j] = std::exp(-acc);
  }
  return out;
}

std::size_t sandwich_violations(const TransformPath& path, const StepFunction& an, double m1, double m2) {
  std::size_t bad = 0;
  for (std::size_t j = 0; j < path.atoms(); ++j) {
    const double a = an(path.times[j]);
    const double g = path.gamma[j];
    const double slack = 1e-12 * std::max(1.0, std::abs(g));
    if (g < a / m2 - slack || g > a / m1 + slack) ++bad;
  }
  return bad;
}

nlohmann::json path_to_json(const TransformPath& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t j = 0; j < path.atoms(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    std::vector<double> gd(path.p());
    for (std::size_t a = 0; a < path.p(); ++a) gd[a] = path.gamma_dot(jj, static_cast<Eigen::Index>(a));
    rows.push_back({{"t", path.times[j]}, {"gamma", path.gamma[j]}, {"gamma_dot", gd}, {"P0", path.prod0[j]}});
  }
  return rows;
}

}  // namespace transmod
