#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "transmod/fredholm.hpp"

using namespace transmod;

namespace {

CBMeasures random_cb(std::mt19937_64& rng, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> dc(m), db(m);
  for (std::size_t j = 0; j < m; ++j) {
    dc[j] = u(rng) / static_cast<double>(m);
    db[j] = u(rng) / static_cast<double>(m) * (j % 7 == 3 ? 0.0 : 1.0);
  }
  return cb_from_masses(dc, db);
}

// I + K diag(b) with K_ij = c(t_i ^ t_j), assembled directly.
Eigen::MatrixXd operator_matrix(const CBMeasures& cb) {
  const auto m = static_cast<Eigen::Index>(cb.atoms());
  const auto c = cb.cumulative_c();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) += c[static_cast<std::size_t>(std::min(i, j))] * cb.db[static_cast<std::size_t>(j)];
  return a;
}

}  // namespace

TEST_CASE("single atom") {
  const CBMeasures cb = cb_from_masses({0.5}, {2.0});
  const PsiTable t(cb);
  CHECK(t.psi1(0, 1) == doctest::Approx(0.5));
  CHECK(t.W() == doctest::Approx(2.0));
  CHECK(t.psi3(1, 2) == doctest::Approx(2.0));
  CHECK(t.psi2(1, 2) == doctest::Approx(1.0));
  Eigen::VectorXd eta(1);
  eta << 3.0;
  for (auto m : {FredholmMethod::dense, FredholmMethod::tridiagonal, FredholmMethod::resolvent})
    CHECK(solve_fredholm(cb, eta, m)[0] == doctest::Approx(1.5));
  CHECK(resolvent(t, 0, 0) == doctest::Approx(0.25));
}

TEST_CASE("the three solvers agree with a direct dense oracle") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (std::size_t m : {2u, 5u, 17u, 60u, 150u}) {
    const CBMeasures cb = random_cb(rng, m);
    Eigen::MatrixXd eta(static_cast<Eigen::Index>(m), 2);
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta.data()[i] = g(rng);
    const Eigen::MatrixXd oracle = operator_matrix(cb).fullPivLu().solve(eta);
    const double scale = testutil::max_abs(oracle);
    for (auto meth : {FredholmMethod::dense, FredholmMethod::tridiagonal, FredholmMethod::resolvent})
      CHECK(testutil::max_abs(solve_fredholm(cb, eta, meth) - oracle) <= 1e-11 * scale);
  }
}

TEST_CASE("tridiagonal path falls back when some c mass vanishes") {
  CBMeasures cb = cb_from_masses({0.3, 0.0, 0.2, 0.1}, {0.5, 0.4, 0.0, 1.0});
  Eigen::VectorXd eta(4);
  eta << 1, -2, 0.5, 3;
  const Eigen::VectorXd oracle = operator_matrix(cb).fullPivLu().solve(eta);
  CHECK((solve_fredholm(cb, eta, FredholmMethod::tridiagonal) - oracle).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((solve_fredholm(cb, eta, FredholmMethod::resolvent) - oracle).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("Psi identities, Wronskian and the Fredholm determinant") {
  std::mt19937_64 rng(22);
  for (std::size_t m : {1u, 3u, 6u, 40u}) {
    const CBMeasures cb = random_cb(rng, m);
    const PsiTable t(cb);
    CHECK(t.identity_deviation() < 1e-12);
    CHECK(wronskian_check(t) < 1e-12);
    CHECK(t.W() == doctest::Approx(operator_matrix(cb).determinant()).epsilon(1e-11));
    const PsiEdges e = psi_edges(cb);
    CHECK(e.W == doctest::Approx(t.W()).epsilon(1e-13));
    for (std::size_t j = 0; j < m; ++j) {
      CHECK(e.psi1_from0[j] == doctest::Approx(t.psi1(0, j + 1)).epsilon(1e-13));
      CHECK(e.psi0_to_tau[j] == doctest::Approx(t.psi0(j + 1, m)).epsilon(1e-13));
    }
  }
}

TEST_CASE("determinant series order by order") {
  std::mt19937_64 rng(23);
  for (std::size_t m : {1u, 2u, 4u, 6u}) {
    const CBMeasures cb = random_cb(rng, m);
    const DeterminantCheck dc = determinant_oracle(cb, 3);
    REQUIRE(dc.brute.size() == 4);
    CHECK(dc.brute[0] == 1.0);
    for (std::size_t k = 0; k < 4; ++k) CHECK(dc.brute[k] == doctest::Approx(dc.series[k]).epsilon(1e-12));
    if (m <= 3) CHECK(dc.determinant == doctest::Approx(PsiTable(cb).W()).epsilon(1e-12));
  }
  CHECK_THROWS(determinant_oracle(random_cb(rng, 9), 2));
}

TEST_CASE("L2 bound on the solution") {
  std::mt19937_64 rng(24);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 20; ++rep) {
    const CBMeasures cb = random_cb(rng, 30);
    Eigen::VectorXd eta(30);
    for (Eigen::Index i = 0; i < 30; ++i) eta[i] = g(rng);
    const Eigen::VectorXd psi = solve_fredholm(cb, eta, FredholmMethod::tridiagonal);
    CHECK(norm_b(cb, psi) <= norm_b(cb, eta) * (1.0 + PsiTable(cb).W() * cb.kappa()) * (1 + 1e-12));
  }
}

TEST_CASE("efficient weight on fitted paths") {
  SUBCASE("proportional hazards has no x dependence, so the weight is -Gamma_dot") {
    std::mt19937_64 rng(25);
    const Dataset d = testutil::random_dataset(rng, 100, 2);
    const TransformPath p = fit_transform(d, CoreModel::proportional_hazards(2), testutil::vec({0.3, -0.2}), choose_tau(d));
    CHECK(testutil::max_abs(efficient_phi(p, cb_measures(p)) + p.gamma_dot) == 0.0);
  }
  SUBCASE("gamma frailty: methods agree and the equation is satisfied") {
    const Scenario sc = testutil::scenario(CoreModel::gamma_frailty(1, 1.0), testutil::vec({0.5}), 150, 0.3, 3);
    const Dataset d = gen_dataset(sc).data;
    const TransformPath p = fit_transform(d, sc.model, sc.theta0, choose_tau(d));
    const CBMeasures cb = cb_measures(p);
    const Eigen::MatrixXd a = efficient_phi(p, cb, FredholmMethod::tridiagonal);
    const Eigen::MatrixXd b = efficient_phi(p, cb, FredholmMethod::dense);
    const Eigen::MatrixXd c = efficient_phi(p, cb, FredholmMethod::resolvent);
    CHECK(testutil::max_abs(a - b) <= 1e-10 * testutil::max_abs(a));
    CHECK(testutil::max_abs(a - c) <= 1e-10 * testutil::max_abs(a));
    CHECK(testutil::max_abs(a + p.gamma_dot) > 1e-6);
    const auto diag = fredholm_diagnostics(cb);
    CHECK(diag["wronskian_dev"].get<double>() < 1e-10);
  }
}
