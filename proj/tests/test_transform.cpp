#include <cmath>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "transmod/fredholm.hpp"

using namespace transmod;
using testutil::vec;

namespace {

Scenario family_scenario(int which, std::uint64_t seed) {
  switch (which) {
    case 0: return testutil::scenario(CoreModel::proportional_hazards(2), vec({0.5, -0.3}), 200, 0.3, seed);
    case 1: return testutil::scenario(CoreModel::half_logistic(2), vec({0.4, 0.2}), 200, 0.3, seed);
    case 2: return testutil::scenario(CoreModel::gamma_frailty(2, 1.0), vec({0.5, -0.5}), 200, 0.3, seed);
    case 3: return testutil::scenario(CoreModel::gamma_frailty_covariate(2), vec({0.5, 0.1, 0.2, -0.3}), 200, 0.3, seed);
    default: return testutil::scenario(CoreModel::linear_hazard(2), vec({0.5, -0.2, 0.1, 0.3}), 200, 0.3, seed);
  }
}

}  // namespace

TEST_CASE("toy sample under proportional hazards") {
  const Dataset d = testutil::toy();
  const CoreModel ph = CoreModel::proportional_hazards(1);
  const Horizon h = choose_tau(d, TauRule::last_event());
  for (double th : {0.0, 0.7, -1.3}) {
    CAPTURE(th);
    const TransformPath p = fit_transform(d, ph, vec({th}), h);
    REQUIRE(p.atoms() == 2);
    const double e = std::exp(th);
    CHECK(p.gamma[0] == doctest::Approx(1.0 / (2.0 + e)).epsilon(1e-15));
    CHECK(p.gamma[1] == doctest::Approx(1.0 / (2.0 + e) + 1.0 / (1.0 + e)).epsilon(1e-15));
    CHECK(p.gamma_dot(0, 0) == doctest::Approx(-e / ((2.0 + e) * (2.0 + e))).epsilon(1e-14));
    CHECK(p.gamma_dot(1, 0) ==
          doctest::Approx(-e / ((2.0 + e) * (2.0 + e)) - e / ((1.0 + e) * (1.0 + e))).epsilon(1e-14));
  }
  const TransformPath p0 = fit_transform(d, ph, vec({0.0}), h);
  CHECK(p0.gamma_dot(0, 0) == doctest::Approx(-1.0 / 9.0).epsilon(1e-15));
  CHECK(p0.moments.vbar[0](0, 0) == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
  CHECK(p0.moments.vbar[1](0, 0) == doctest::Approx(1.0 / 4.0).epsilon(1e-14));
  CHECK(p0.moments.ebar(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(p0.moments.v[0] == 0.0);
  CHECK(p0.factor[0] == 1.0);
  CHECK(p0.gamma_at(0.5) == 0.0);
  CHECK(p0.gamma_at(1.5) == p0.gamma[0]);
  CHECK(p0.gamma_at(2.5) == p0.gamma[1]);
}

TEST_CASE("PH at theta = 0 reproduces Aalen-Nelson") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset d = testutil::random_dataset(rng, 300, 2, rep % 2 == 0);
    const Horizon h = choose_tau(d);
    const TransformPath p = fit_transform(d, CoreModel::proportional_hazards(2), vec({0.0, 0.0}), h);
    const StepFunction an = aalen_nelson(d, h);
    for (std::size_t j = 0; j < p.atoms(); ++j) CHECK(p.gamma[j] == doctest::Approx(an.values[j]).epsilon(1e-14));
  }
}

TEST_CASE("gradient of the transformation matches finite differences in every family") {
  for (int fam = 0; fam < 5; ++fam) {
    const Scenario sc = family_scenario(fam, 100 + static_cast<std::uint64_t>(fam));
    CAPTURE(sc.model.name());
    const Dataset d = gen_dataset(sc).data;
    const Horizon h = choose_tau(d);
    const TransformPath p = fit_transform(d, sc.model, sc.theta0, h);
    const double eps = 1e-5;
    for (Eigen::Index k = 0; k < sc.theta0.size(); ++k) {
      Eigen::VectorXd tp = sc.theta0, tm = sc.theta0;
      tp[k] += eps;
      tm[k] -= eps;
      const TransformPath pp = fit_transform(d, sc.model, tp, h, TransformOptions{false});
      const TransformPath pm = fit_transform(d, sc.model, tm, h, TransformOptions{false});
      double err = 0.0;
      for (std::size_t j = 0; j < p.atoms(); ++j)
        err = std::max(err, std::abs((pp.gamma[j] - pm.gamma[j]) / (2 * eps) - p.gamma_dot(static_cast<Eigen::Index>(j), k)));
      CHECK(err < 1e-7);
    }
    TransformPath q = p;
    q.gamma_dot.setZero();
    transform_gradient(q);
    CHECK(testutil::max_abs(q.gamma_dot - p.gamma_dot) < 1e-14);
  }
}

TEST_CASE("sandwich bounds and the product-integral factorization") {
  for (int fam = 0; fam < 5; ++fam) {
    const Scenario sc = family_scenario(fam, 200 + static_cast<std::uint64_t>(fam));
    CAPTURE(sc.model.name());
    const Dataset d = gen_dataset(sc).data;
    const Horizon h = choose_tau(d);
    const TransformPath p = fit_transform(d, sc.model, sc.theta0, h);
    const auto [m1, m2] = sc.model.bounds(symmetric_box(sc.model.theta_dim(), sc.theta0.cwiseAbs().maxCoeff()),
                                          d.c_bound());
    CHECK(sandwich_violations(p, aalen_nelson(d, h), m1, m2) == 0);

    // K(t,u) = P(0,t) P(0,u) c(t ^ u)
    const CBMeasures cb = cb_measures(p);
    const auto c = cb.cumulative_c();
    const std::size_t m = p.atoms();
    for (std::size_t t : {std::size_t{0}, m / 3, m / 2, m - 1})
      for (std::size_t u : {std::size_t{0}, m / 4, m - 1}) {
        const double k = kernel_K(p, t, u);
        CHECK(k == doctest::Approx(cb.P[t] * cb.P[u] * c[std::min(t, u)]).epsilon(1e-10));
      }
    CHECK(prod_integral(p, 0, m - 1) * p.factor[0] == doctest::Approx(p.prod0[m - 1]).epsilon(1e-12));
    CHECK(kappa(p) == doctest::Approx(cb.kappa()).epsilon(1e-10));

    const auto pe = prod_from_zero(p, ProductForm::exponential);
    for (std::size_t j = 0; j < m; ++j) CHECK(pe[j] > 0.0);
  }
}

TEST_CASE("path JSON lists every atom") {
  const TransformPath p = fit_transform(testutil::toy(), CoreModel::proportional_hazards(1), vec({0.0}),
                                        choose_tau(testutil::toy(), TauRule::last_event()));
  const auto j = path_to_json(p);
  REQUIRE(j.size() == 2);
  CHECK(j[1]["t"] == 2.0);
}
