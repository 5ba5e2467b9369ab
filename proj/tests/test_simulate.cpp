#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "test_support.hpp"

using namespace transmod;
using testutil::vec;

namespace {

// Kolmogorov-Smirnov statistic of the observed times against Exp(1).
double ks_unit_exponential(const Dataset& d) {
  const auto t = d.times();
  const double n = static_cast<double>(t.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double f = 1.0 - std::exp(-t[i]);
    dmax = std::max({dmax, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return dmax;
}

}  // namespace

TEST_CASE("transformation functions invert") {
  for (auto g : {Gamma0::identity, Gamma0::square, Gamma0::log1p})
    for (double t : {0.0, 0.3, 2.0, 17.0}) CHECK(gamma0_inverse(g, gamma0_eval(g, t)) == doctest::Approx(t));
}

TEST_CASE("uncensored draws have every status equal to one") {
  Scenario sc = testutil::scenario(CoreModel::half_logistic(2), vec({0.3, -0.3}), 300, 1.0, 4);
  sc.censoring.kind = CensorLaw::Kind::none;
  const Simulated s = gen_dataset(sc);
  CHECK(s.censored_fraction == 0.0);
  for (int st : s.data.status()) CHECK(st == 1);
}

TEST_CASE("null models generate unit exponential times") {
  // KS critical value at p = 0.01 is 1.628 / sqrt(n)
  const double crit = 1.628 / std::sqrt(10000.0);
  for (const auto& m : {CoreModel::proportional_hazards(1), CoreModel::gamma_frailty(1, 1.0)}) {
    Scenario sc = testutil::scenario(m, vec({0.0}), 10000, 1.0, 12);
    sc.censoring.kind = CensorLaw::Kind::none;
    const Dataset d = gen_dataset(sc).data;
    double mean = 0.0;
    for (double t : d.times()) mean += t;
    mean /= 10000.0;
    CHECK(mean == doctest::Approx(1.0).epsilon(0.04));
    CHECK(ks_unit_exponential(d) < crit);
  }
}

TEST_CASE("scenario JSON") {
  const auto j = nlohmann::json::parse(R"({"model":{"family":"linear_hazard"},"theta0":[0.5,0.2],
    "gamma0":"square","covariates":{"law":"mixed","p":0.3},"censoring":{"law":"uniform","upper":4},"n":50,"seed":9})");
  const Scenario sc = Scenario::from_json(j);
  CHECK(sc.model.d() == 1);
  CHECK(sc.gamma0 == Gamma0::square);
  CHECK(sc.covariates.kind == CovariateLaw::Kind::mixed);
  CHECK(sc.censoring.value == 4.0);
  const Scenario back = Scenario::from_json(sc.to_json());
  CHECK(back.to_json() == sc.to_json());

  CHECK_THROWS_AS(Scenario::from_json(nlohmann::json::parse(R"({"model":{"family":"ph"}})")), InputError);
  CHECK_THROWS_AS(Scenario::from_json(nlohmann::json::parse(R"({"model":{"family":"ph"},"theta0":[1],"n":1})")),
                  InputError);
  CHECK_THROWS_AS(Scenario::from_json(nlohmann::json::parse(
                      R"({"model":{"family":"ph"},"theta0":[1],"censoring":{"law":"exponential","rate":-1}})")),
                  InputError);
}

TEST_CASE("Monte Carlo determinism and bookkeeping") {
  const Scenario sc = testutil::scenario(CoreModel::gamma_frailty(1, 1.0), vec({0.5}), 150, 0.3, 77);
  McConfig mc;
  mc.reps = 12;
  mc.variants = {PhiStrategy::efficient, PhiStrategy::zero};
  mc.gamma_error = true;
  const MCReport a = mc_study(sc, mc);
  mc.jobs = 3;
  const MCReport b = mc_study(sc, mc);
  CHECK(a.to_json(true).dump() == b.to_json(true).dump());
  for (const auto& v : a.variants) {
    CHECK(v.ok + v.failures == 12);
    CHECK(v.coverage[0] >= 0.0);
    CHECK(v.coverage[0] <= 1.0);
  }
  CHECK(a.gamma_error.size() == 12);
  CHECK(!a.summary_table().empty());

  mc.reps = 1;
  mc.variants = {PhiStrategy::efficient};
  const MCReport one = mc_study(sc, mc);
  const FitResult fit = solve(gen_dataset(sc, derive_seed(sc.seed, 0)).data, sc.model);
  CHECK(one.variants[0].mean[0] == fit.theta_hat[0]);
  CHECK(one.variants[0].mean_se[0] == fit.se[0]);

  mc.reps = 0;
  CHECK_THROWS_AS(mc_study(sc, mc), InputError);
}
