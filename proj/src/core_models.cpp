#include "transmod/core_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "transmod/errors.hpp"

namespace transmod {

namespace {

constexpr double kLog2 = 0.69314718055994530942;

// sigma(t) and sigma(-t) from a single exponential.
void sigmoid_pair(double t, double& s, double& sn) {
  const double e = std::exp(-std::abs(t));
  const double inv = 1.0 / (1.0 + e);
  if (t >= 0.0) {
    s = inv;
    sn = e * inv;
  } else {
    s = e * inv;
    sn = inv;
  }
}

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

// Half-logistic baseline: A0(y) = log((1 + e^y)/2), A0^{-1}(a) = log(2e^a - 1).
double a0(double y) { return y < 1.0 ? std::log1p(std::expm1(y) / 2.0) : softplus(y) - kLog2; }
double a0_inv(double a) { return a < 1.0 ? std::log1p(2.0 * std::expm1(a)) : a + std::log(2.0 - std::exp(-a)); }

// log(1 + k (e^s - 1)) for s >= 0, k > 0, safe for large s.
double log_mix(double s, double k) {
  if (s < 30.0) return std::log1p(k * std::expm1(s));
  const double q = std::exp(-s);
  return s + std::log(q + k * (1.0 - q));
}

// Inverse in s of log_mix: solves log(1 + k (e^s - 1)) = t.
double log_mix_inv(double t, double k) {
  if (t < 30.0) return std::log1p(std::expm1(t) / k);
  return t - std::log(k) + std::log1p((k - 1.0) * std::exp(-t));
}

double box_radius(const ThetaBox& box, std::size_t from, std::size_t to) {
  double r = 0.0;
  for (std::size_t k = from; k < to; ++k) {
    if (!std::isfinite(box[k].first) || !std::isfinite(box[k].second) || box[k].first > box[k].second)
      throw InputError("parameter box must be bounded with lo <= hi");
    r += std::max(std::abs(box[k].first), std::abs(box[k].second));
  }
  return r;
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::proportional_hazards: return "ph";
    case Family::half_logistic_scale: return "half_logistic";
    case Family::gamma_frailty: return "gamma_frailty";
    case Family::linear_hazard: return "linear_hazard";
  }
  return "unknown";
}

Family parse_family(const std::string& name) {
  if (name == "ph" || name == "proportional_hazards") return Family::proportional_hazards;
  if (name == "half_logistic" || name == "half_logistic_scale") return Family::half_logistic_scale;
  if (name == "gamma_frailty") return Family::gamma_frailty;
  if (name == "linear_hazard") return Family::linear_hazard;
  throw InputError("unknown model '" + name + "' (expected ph, half_logistic, gamma_frailty, linear_hazard)");
}

CoreModel CoreModel::proportional_hazards(std::size_t d) {
  CoreModel m;
  m.family_ = Family::proportional_hazards;
  m.d_ = d;
  return m;
}

CoreModel CoreModel::half_logistic(std::size_t d) {
  CoreModel m;
  m.family_ = Family::half_logistic_scale;
  m.d_ = d;
  return m;
}

CoreModel CoreModel::gamma_frailty(std::size_t d, double eta) {
  if (!std::isfinite(eta) || eta < 0.0)
    throw InputError("gamma_frailty: eta must be finite and >= 0 (negative eta is not supported)");
  CoreModel m;
  m.family_ = Family::gamma_frailty;
  m.d_ = d;
  m.eta_ = eta;
  return m;
}

CoreModel CoreModel::gamma_frailty_covariate(std::size_t d) {
  CoreModel m;
  m.family_ = Family::gamma_frailty;
  m.d_ = d;
  m.blocks_ = 2;
  m.eta_ = 1.0;
  m.covariate_frailty_ = true;
  return m;
}

CoreModel CoreModel::linear_hazard(std::size_t d) {
  CoreModel m;
  m.family_ = Family::linear_hazard;
  m.d_ = d;
  m.blocks_ = 2;
  return m;
}

CoreModel CoreModel::from_json(const nlohmann::json& desc, std::size_t d) {
  if (!desc.is_object() || !desc.contains("family") || !desc["family"].is_string())
    throw InputError("model description must be an object with a string 'family'");
  const Family f = parse_family(desc["family"].get<std::string>());
  switch (f) {
    case Family::proportional_hazards: return proportional_hazards(d);
    case Family::half_logistic_scale: return half_logistic(d);
    case Family::linear_hazard: return linear_hazard(d);
    case Family::gamma_frailty: {
      if (desc.value("covariate_frailty", false)) return gamma_frailty_covariate(d);
      if (!desc.contains("eta") || !desc["eta"].is_number())
        throw InputError("gamma_frailty requires hyperparameter 'eta' (or covariate_frailty)");
      return gamma_frailty(d, desc["eta"].get<double>());
    }
  }
  throw InputError("unknown model family");
}

nlohmann::json CoreModel::to_json() const {
  nlohmann::json j;
  j["family"] = name();
  if (family_ == Family::gamma_frailty) {
    if (covariate_frailty_)
      j["covariate_frailty"] = true;
    else
      j["eta"] = eta_;
  }
  j["theta_dim"] = theta_dim();
  return j;
}

std::pair<double, double> CoreModel::linear_predictors(const Eigen::VectorXd& theta, const double* z) const {
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t k = 0; k < d_; ++k) l1 += theta[static_cast<Eigen::Index>(k)] * z[k];
  if (blocks_ == 2)
    for (std::size_t k = 0; k < d_; ++k) l2 += theta[static_cast<Eigen::Index>(d_ + k)] * z[k];
  return {l1, l2};
}

bool CoreModel::x_free() const {
  return family_ == Family::proportional_hazards ||
         (family_ == Family::gamma_frailty && !covariate_frailty_ && eta_ == 0.0);
}

XCache CoreModel::prepare_x(double x) const {
  XCache xc;
  xc.x = x;
  switch (family_) {
    case Family::proportional_hazards: break;
    case Family::half_logistic_scale: {
      xc.y = x < 1.0 ? std::log1p(2.0 * std::expm1(x)) : x + std::log(2.0 - std::exp(-x));
      sigmoid_pair(xc.y, xc.sy, xc.sny);
      xc.yp = 1.0 / xc.sy;
      xc.ypp = -xc.sny / (xc.sy * xc.sy);
      break;
    }
    case Family::gamma_frailty: xc.q = std::exp(-(covariate_frailty_ ? 1.0 : eta_) * x); break;
    case Family::linear_hazard: xc.r = 1.0 / std::sqrt(1.0 + 2.0 * x); break;
  }
  return xc;
}

ZCache CoreModel::prepare_z(double lp1, double lp2) const {
  ZCache zc;
  zc.lp1 = lp1;
  zc.lp2 = lp2;
  zc.c1 = std::exp(lp1);
  if (blocks_ == 2) zc.c2 = std::exp(lp2);
  return zc;
}

HazardKernel CoreModel::kernel(double x, double lp1, double lp2) const {
  return kernel(prepare_x(x), prepare_z(lp1, lp2));
}

HazardKernel CoreModel::kernel(const XCache& xc, const ZCache& zc) const {
  HazardKernel k;
  switch (family_) {
    case Family::proportional_hazards: {
      k.alpha = zc.c1;
      k.g[0] = 1.0;
      break;
    }
    case Family::half_logistic_scale: {
      const double c = zc.c1;
      const double y = xc.y;
      double scy, sncy;
      sigmoid_pair(c * y, scy, sncy);
      const double w = c * sncy - xc.sny;
      k.alpha = c * scy / xc.sy;
      k.dx = w * xc.yp;
      k.dxx = (-c * c * scy * sncy + xc.sy * xc.sny) * xc.yp * xc.yp + w * xc.ypp;
      const double cys = c * y * sncy;
      const double tail = 1.0 - c * y * scy;
      k.g[0] = 1.0 + cys;
      k.gx[0] = xc.yp * c * sncy * tail;
      k.h[0] = cys * tail;
      break;
    }
    case Family::gamma_frailty: {
      const double q = xc.q;
      if (!covariate_frailty_) {
        const double eta = eta_;
        const double c = zc.c1;
        const double dn = q * (1.0 - c) + c;
        const double dn2 = dn * dn;
        k.alpha = c / dn;
        k.dx = eta * (1.0 - c) * q / dn;
        k.dxx = -eta * eta * (1.0 - c) * c * q / dn2;
        k.g[0] = q / dn;
        k.gx[0] = -eta * c * q / dn2;
        k.h[0] = -c * (1.0 - q) * q / dn2;
      } else {
        const double c = zc.c1;
        const double ec = zc.c1 * zc.c2;
        const double dn = q + ec * (1.0 - q);
        const double dn2 = dn * dn;
        const double s = ec * (1.0 - q) * q / dn2;
        const double gx = -ec * q / dn2;
        k.alpha = c / dn;
        k.dx = q * (1.0 - ec) / dn;
        k.dxx = -(1.0 - ec) * q * ec / dn2;
        k.g[0] = q / dn;
        k.g[1] = -ec * (1.0 - q) / dn;
        k.gx[0] = gx;
        k.gx[1] = gx;
        k.h[0] = k.h[1] = k.h[2] = -s;
      }
      break;
    }
    case Family::linear_hazard: {
      const double a = zc.c1;
      const double b = zc.c2;
      const double r = xc.r;
      const double r3 = r * r * r;
      const double alpha = b + (a - b) * r;
      const double ap = -(a - b) * r3;
      const double app = 3.0 * (a - b) * r3 * r * r;
      k.alpha = alpha;
      k.dx = ap / alpha;
      k.dxx = app / alpha - k.dx * k.dx;
      const double w1 = a * r / alpha;
      const double w2 = b * (1.0 - r) / alpha;
      k.g[0] = w1;
      k.g[1] = w2;
      k.gx[0] = -a * r3 / alpha - w1 * k.dx;
      k.gx[1] = b * r3 / alpha - w2 * k.dx;
      k.h[0] = w1 - w1 * w1;
      k.h[1] = -w1 * w2;
      k.h[2] = w2 - w2 * w2;
      break;
    }
  }
  return k;
}

double CoreModel::cumhaz_lp(double x, double lp1, double lp2) const {
  if (x <= 0.0) return 0.0;
  switch (family_) {
    case Family::proportional_hazards: return x * std::exp(lp1);
    case Family::half_logistic_scale: return a0(a0_inv(x) * std::exp(lp1));
    case Family::gamma_frailty: {
      if (!covariate_frailty_) {
        if (eta_ == 0.0) return std::exp(lp1) * x;
        return log_mix(eta_ * x, std::exp(lp1)) / eta_;
      }
      return log_mix(x, std::exp(lp1 + lp2)) * std::exp(-lp2);
    }
    case Family::linear_hazard: {
      const double u = 2.0 * x / (std::sqrt(1.0 + 2.0 * x) + 1.0);
      return std::exp(lp1) * u + std::exp(lp2) * u * u / 2.0;
    }
  }
  return 0.0;
}

double CoreModel::cumhaz_inverse_lp(double a, double lp1, double lp2) const {
  if (!std::isfinite(a)) throw InputError("cumhaz_inverse: argument must be finite");
  if (a < 0.0) throw InputError("cumhaz_inverse: argument must be >= 0");
  if (a == 0.0) return 0.0;
  switch (family_) {
    case Family::proportional_hazards: return a * std::exp(-lp1);
    case Family::half_logistic_scale: return a0(a0_inv(a) * std::exp(-lp1));
    case Family::gamma_frailty: {
      if (!covariate_frailty_) {
        if (eta_ == 0.0) return a * std::exp(-lp1);
        return log_mix_inv(eta_ * a, std::exp(lp1)) / eta_;
      }
      return log_mix_inv(std::exp(lp2) * a, std::exp(lp1 + lp2));
    }
    case Family::linear_hazard: {
      const double ca = std::exp(lp1);
      const double cb = std::exp(lp2);
      const double u = 2.0 * a / (ca + std::sqrt(ca * ca + 2.0 * cb * a));
      return u + u * u / 2.0;
    }
  }
  return 0.0;
}

void CoreModel::check_args(double x, const Eigen::VectorXd& theta, const Eigen::VectorXd& z) const {
  if (!std::isfinite(x)) throw InputError("hazard: x must be finite");
  if (x < 0.0) throw InputError("hazard: x must be >= 0");
  if (static_cast<std::size_t>(theta.size()) != theta_dim())
    throw InputError("hazard: theta has dimension " + std::to_string(theta.size()) + ", model expects " +
                     std::to_string(theta_dim()));
  if (static_cast<std::size_t>(z.size()) != d_)
    throw InputError("hazard: covariate vector has wrong dimension");
  if (!theta.allFinite() || !z.allFinite()) throw InputError("hazard: theta and z must be finite");
}

HazardEval CoreModel::hazard_eval(double x, const Eigen::VectorXd& theta, const Eigen::VectorXd& z) const {
  check_args(x, theta, z);
  const auto [l1, l2] = linear_predictors(theta, z.data());
  const HazardKernel k = kernel(x, l1, l2);
  const auto d = static_cast<Eigen::Index>(d_);
  const auto p = static_cast<Eigen::Index>(theta_dim());
  HazardEval e;
  e.alpha = k.alpha;
  e.dlog_x = k.dx;
  e.d2log_xx = k.dxx;
  e.dlog_theta.resize(p);
  e.d2log_xtheta.resize(p);
  e.d2log_thetatheta.resize(p, p);
  const Eigen::MatrixXd zz = z * z.transpose();
  e.dlog_theta.head(d) = k.g[0] * z;
  e.d2log_xtheta.head(d) = k.gx[0] * z;
  e.d2log_thetatheta.topLeftCorner(d, d) = k.h[0] * zz;
  if (blocks_ == 2) {
    e.dlog_theta.tail(d) = k.g[1] * z;
    e.d2log_xtheta.tail(d) = k.gx[1] * z;
    e.d2log_thetatheta.topRightCorner(d, d) = k.h[1] * zz;
    e.d2log_thetatheta.bottomLeftCorner(d, d) = k.h[1] * zz;
    e.d2log_thetatheta.bottomRightCorner(d, d) = k.h[2] * zz;
  }
  return e;
}

double CoreModel::cumhaz(double x, const Eigen::VectorXd& theta, const Eigen::VectorXd& z) const {
  check_args(x, theta, z);
  const auto [l1, l2] = linear_predictors(theta, z.data());
  return cumhaz_lp(x, l1, l2);
}

double CoreModel::cumhaz_inverse(double a, const Eigen::VectorXd& theta, const Eigen::VectorXd& z) const {
  check_args(0.0, theta, z);
  const auto [l1, l2] = linear_predictors(theta, z.data());
  return cumhaz_inverse_lp(a, l1, l2);
}

std::pair<double, double> CoreModel::bounds(const ThetaBox& box, double c_bound) const {
  if (box.size() != theta_dim()) throw InputError("bounds: box dimension does not match theta");
  if (!std::isfinite(c_bound) || c_bound < 0.0) throw InputError("bounds: covariate bound must be finite");
  const double m1 = c_bound * box_radius(box, 0, d_);
  const double m2 = blocks_ == 2 ? c_bound * box_radius(box, d_, 2 * d_) : 0.0;
  switch (family_) {
    case Family::proportional_hazards: return {std::exp(-m1), std::exp(m1)};
    case Family::half_logistic_scale: {
      // alpha lies in [c, 2c] for c >= 1 and in [c/2, c] for c <= 1.
      const double lo = std::exp(-m1), hi = std::exp(m1);
      return {lo < 1.0 ? lo / 2.0 : lo, hi > 1.0 ? 2.0 * hi : hi};
    }
    case Family::gamma_frailty: {
      if (!covariate_frailty_) return {std::exp(-m1), std::exp(m1)};
      // alpha lies between exp(beta'z) and exp(-xi'z).
      return {std::min(std::exp(-m1), std::exp(-m2)), std::max(std::exp(m1), std::exp(m2))};
    }
    case Family::linear_hazard: {
      const double m = std::max(m1, m2);
      return {std::exp(-m), std::exp(m)};
    }
  }
  return {0.0, std::numeric_limits<double>::infinity()};
}

ThetaBox symmetric_box(std::size_t dim, double r) { return ThetaBox(dim, {-r, r}); }

}  // namespace transmod
