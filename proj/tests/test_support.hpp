#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include "transmod/core_models.hpp"
#include "transmod/mestimate.hpp"
#include "transmod/simulate.hpp"
#include "transmod/survdata.hpp"
#include "transmod/transform.hpp"

namespace testutil {

using namespace transmod;

inline Subject subj(double t, int s, std::initializer_list<double> z) {
  Subject out;
  out.time = t;
  out.status = s;
  out.z = Eigen::VectorXd(static_cast<Eigen::Index>(z.size()));
  Eigen::Index k = 0;
  for (double v : z) out.z[k++] = v;
  return out;
}

// {(1,1,0), (2,1,1), (3,0,0)}
inline Dataset toy() { return Dataset::from_subjects({subj(1, 1, {0}), subj(2, 1, {1}), subj(3, 0, {0})}); }

// Exponential times, 75% events, uniform(-1,1) covariates. With `ties`,
// times are rounded to one decimal so several subjects share grid points.
inline Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t d, bool ties = false) {
  std::exponential_distribution<double> ex(1.0);
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  std::bernoulli_distribution ev(0.75);
  std::vector<Subject> s(n);
  for (auto& x : s) {
    x.time = ex(rng) + 1e-3;
    if (ties) x.time = std::round(x.time * 10.0) / 10.0 + 0.1;
    x.status = ev(rng) ? 1 : 0;
    x.z.resize(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) x.z[static_cast<Eigen::Index>(k)] = un(rng);
  }
  s[0].status = 1;
  return Dataset::from_subjects(std::move(s));
}

inline Scenario scenario(const CoreModel& model, Eigen::VectorXd theta0, std::size_t n, double censor_rate,
                         std::uint64_t seed) {
  Scenario sc;
  sc.model = model;
  sc.theta0 = std::move(theta0);
  sc.n = n;
  sc.seed = seed;
  sc.censoring.kind = CensorLaw::Kind::exponential;
  sc.censoring.value = censor_rate;
  return sc;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

// Brute-force Cox partial-likelihood quantities with Breslow ties, built
// directly from the subject list (O(n^2)), events restricted to time <= tau.
struct CoxOracle {
  std::vector<Subject> subjects;
  double tau;

  CoxOracle(const Dataset& data, double tau_) : tau(tau_) {
    for (std::size_t i = 0; i < data.n(); ++i) subjects.push_back(data.subject(i));
  }

  std::vector<double> weights(const Eigen::VectorXd& theta) const {
    std::vector<double> w;
    for (const auto& r : subjects) w.push_back(std::exp(theta.dot(r.z)));
    return w;
  }

  void moments(const std::vector<double>& w, double t, double& s0, Eigen::VectorXd& s1, Eigen::MatrixXd& s2) const {
    const Eigen::Index p = subjects.front().z.size();
    s0 = 0.0;
    s1 = Eigen::VectorXd::Zero(p);
    s2 = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t i = 0; i < subjects.size(); ++i)
      if (subjects[i].time >= t) {
        const auto& z = subjects[i].z;
        s0 += w[i];
        s1 += w[i] * z;
        s2 += w[i] * z * z.transpose();
      }
  }

  Eigen::VectorXd score(const Eigen::VectorXd& theta) const {
    const auto w = weights(theta);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(theta.size());
    for (const auto& e : subjects) {
      if (e.status != 1 || e.time > tau) continue;
      double s0;
      Eigen::VectorXd s1;
      Eigen::MatrixXd s2;
      moments(w, e.time, s0, s1, s2);
      u += e.z - s1 / s0;
    }
    return u / static_cast<double>(subjects.size());
  }

  Eigen::MatrixXd information(const Eigen::VectorXd& theta) const {
    const auto w = weights(theta);
    const Eigen::Index p = theta.size();
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    for (const auto& e : subjects) {
      if (e.status != 1 || e.time > tau) continue;
      double s0;
      Eigen::VectorXd s1;
      Eigen::MatrixXd s2;
      moments(w, e.time, s0, s1, s2);
      const Eigen::VectorXd m = s1 / s0;
      info += s2 / s0 - m * m.transpose();
    }
    return info / static_cast<double>(subjects.size());
  }

  Eigen::VectorXd newton(Eigen::VectorXd theta) const {
    for (int it = 0; it < 100; ++it) {
      const Eigen::VectorXd step = information(theta).ldlt().solve(score(theta));
      theta += step;
      if (step.cwiseAbs().maxCoeff() < 1e-14) break;
    }
    return theta;
  }
};

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline double inf_norm(const Eigen::MatrixXd& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace testutil
