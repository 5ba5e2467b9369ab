#include <cmath>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "transmod/errors.hpp"

using namespace transmod;
using testutil::vec;

namespace {

std::vector<CoreModel> all_models(std::size_t d) {
  return {CoreModel::proportional_hazards(d), CoreModel::half_logistic(d), CoreModel::gamma_frailty(d, 1.0),
          CoreModel::gamma_frailty(d, 0.3), CoreModel::gamma_frailty_covariate(d), CoreModel::linear_hazard(d)};
}

double log_alpha(const CoreModel& m, double x, const Eigen::VectorXd& th, const Eigen::VectorXd& z) {
  return std::log(m.hazard_eval(x, th, z).alpha);
}

// Simpson rule for the integral of alpha over [0, x].
double integrate_alpha(const CoreModel& m, double x, const Eigen::VectorXd& th, const Eigen::VectorXd& z) {
  const int k = 2000;
  const double h = x / k;
  double s = 0.0;
  for (int i = 0; i <= k; ++i) {
    const double w = (i == 0 || i == k) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * m.hazard_eval(i * h, th, z).alpha;
  }
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("family names round trip") {
  for (auto f : {Family::proportional_hazards, Family::half_logistic_scale, Family::gamma_frailty,
                 Family::linear_hazard})
    CHECK(parse_family(family_name(f)) == f);
  CHECK_THROWS_AS(parse_family("weibull"), InputError);
  CHECK_THROWS_AS(CoreModel::gamma_frailty(1, -0.5), InputError);
}

TEST_CASE("every family is the identity transformation at theta = 0") {
  for (const auto& m : all_models(2)) {
    const Eigen::VectorXd th = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.theta_dim()));
    const Eigen::VectorXd z = vec({0.7, -0.4});
    for (double x : {0.0, 0.3, 2.0, 10.0}) {
      CHECK(m.hazard_eval(x, th, z).alpha == doctest::Approx(1.0).epsilon(1e-13));
      CHECK(m.cumhaz(x, th, z) == doctest::Approx(x).epsilon(1e-13));
    }
  }
}

TEST_CASE("closed-form values") {
  const Eigen::VectorXd z = vec({1.0});
  CHECK(CoreModel::proportional_hazards(1).cumhaz(3.0, vec({std::log(2.0)}), z) == doctest::Approx(6.0));
  const CoreModel g = CoreModel::gamma_frailty(1, 1.0);
  CHECK(g.cumhaz(std::log(2.0), vec({std::log(2.0)}), z) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(g.cumhaz_inverse(std::log(3.0), vec({std::log(2.0)}), z) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // half-logistic and linear hazard start at alpha(0) = exp(theta_1' z)
  const CoreModel hl = CoreModel::half_logistic(1);
  CHECK(hl.hazard_eval(0.0, vec({std::log(2.0)}), z).alpha == doctest::Approx(2.0));
  const CoreModel lh = CoreModel::linear_hazard(1);
  CHECK(lh.hazard_eval(0.0, vec({std::log(3.0), std::log(0.5)}), z).alpha == doctest::Approx(3.0));
  CHECK(lh.hazard_eval(1e12, vec({std::log(3.0), std::log(0.5)}), z).alpha == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("log-hazard derivatives match finite differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ux(0.0, 4.0);
  for (const auto& m : all_models(2)) {
    CAPTURE(m.name());
    for (int rep = 0; rep < 20; ++rep) {
      const auto p = static_cast<Eigen::Index>(m.theta_dim());
      Eigen::VectorXd th(p), z(2);
      for (Eigen::Index k = 0; k < p; ++k) th[k] = u(rng);
      z << u(rng), u(rng);
      const double x = ux(rng) + 0.05;
      const HazardEval ev = m.hazard_eval(x, th, z);
      const double h = 1e-5;

      const double dx = (log_alpha(m, x + h, th, z) - log_alpha(m, x - h, th, z)) / (2 * h);
      CHECK(ev.dlog_x == doctest::Approx(dx).epsilon(1e-6).scale(1.0));
      const double dxx = (m.hazard_eval(x + h, th, z).dlog_x - m.hazard_eval(x - h, th, z).dlog_x) / (2 * h);
      CHECK(ev.d2log_xx == doctest::Approx(dxx).epsilon(1e-6).scale(1.0));
      for (Eigen::Index k = 0; k < p; ++k) {
        Eigen::VectorXd tp = th, tm = th;
        tp[k] += h;
        tm[k] -= h;
        const double dth = (log_alpha(m, x, tp, z) - log_alpha(m, x, tm, z)) / (2 * h);
        CHECK(ev.dlog_theta[k] == doctest::Approx(dth).epsilon(1e-6).scale(1.0));
        const double dxth = (m.hazard_eval(x, tp, z).dlog_x - m.hazard_eval(x, tm, z).dlog_x) / (2 * h);
        CHECK(ev.d2log_xtheta[k] == doctest::Approx(dxth).epsilon(1e-6).scale(1.0));
        const Eigen::VectorXd dgrad = (m.hazard_eval(x, tp, z).dlog_theta - m.hazard_eval(x, tm, z).dlog_theta) / (2 * h);
        for (Eigen::Index l = 0; l < p; ++l)
          CHECK(ev.d2log_thetatheta(l, k) == doctest::Approx(dgrad[l]).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("cumulative hazard integrates the hazard and inverts exactly") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& m : all_models(1)) {
    CAPTURE(m.name());
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd th(static_cast<Eigen::Index>(m.theta_dim()));
      for (Eigen::Index k = 0; k < th.size(); ++k) th[k] = u(rng);
      const Eigen::VectorXd z = vec({u(rng)});
      for (double x : {0.1, 1.0, 3.5}) {
        const double a = m.cumhaz(x, th, z);
        CHECK(a == doctest::Approx(integrate_alpha(m, x, th, z)).epsilon(1e-9));
        CHECK(m.cumhaz_inverse(a, th, z) == doctest::Approx(x).epsilon(1e-12));
      }
      // far tail
      const double big = m.cumhaz(60.0, th, z);
      CHECK(m.cumhaz_inverse(big, th, z) == doctest::Approx(60.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("hazard bounds contain every hazard value in the box") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ux(0.0, 50.0);
  const double r = 0.8, cb = 1.5;
  for (const auto& m : all_models(2)) {
    CAPTURE(m.name());
    const auto [m1, m2] = m.bounds(symmetric_box(m.theta_dim(), r), cb);
    REQUIRE(m1 > 0.0);
    REQUIRE(m1 <= m2);
    for (int rep = 0; rep < 500; ++rep) {
      Eigen::VectorXd th(static_cast<Eigen::Index>(m.theta_dim()));
      for (Eigen::Index k = 0; k < th.size(); ++k) th[k] = r * u(rng);
      const Eigen::VectorXd z = vec({cb * u(rng), cb * u(rng)});
      const double x = rep % 10 == 0 ? 0.0 : ux(rng);
      const double a = m.hazard_eval(x, th, z).alpha;
      CHECK(a >= m1 * (1 - 1e-12));
      CHECK(a <= m2 * (1 + 1e-12));
    }
  }
}

TEST_CASE("model JSON round trip") {
  for (const auto& m : all_models(3)) {
    const CoreModel back = CoreModel::from_json(m.to_json(), 3);
    CHECK(back.family() == m.family());
    CHECK(back.theta_dim() == m.theta_dim());
    CHECK(back.eta() == m.eta());
    CHECK(back.covariate_frailty() == m.covariate_frailty());
  }
  CHECK_THROWS_AS(CoreModel::from_json({{"family", "gamma_frailty"}}, 1), InputError);
  CHECK_THROWS_AS(CoreModel::from_json({{"model", "ph"}}, 1), InputError);
}
