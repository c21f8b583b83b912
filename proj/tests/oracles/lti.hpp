#pragma once

// Ground-truth linear systems z' = A z + B u driven by random one-hot inputs.

#include <algorithm>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "koopctl/embed.hpp"
#include "koopctl/trajmodel.hpp"

namespace oracle {

struct LtiPair {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

inline double spectral_radius(const Eigen::MatrixXd& A) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().cwiseAbs().maxCoeff();
}

/// Random A (n x n) rescaled to the given spectral radius, random B (n x q).
inline LtiPair random_stable_pair(std::mt19937_64& rng, int n, int q, double radius) {
  std::normal_distribution<double> g(0.0, 1.0);
  LtiPair p{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, q)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) p.A(i, j) = g(rng);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < q; ++j) p.B(i, j) = g(rng);
  p.A *= radius / spectral_radius(p.A);
  return p;
}

/// Snapshots of one long run with i.i.d. uniformly random one-hot inputs.
inline koopctl::SnapshotMatrices simulate(const LtiPair& sys, std::mt19937_64& rng, int m) {
  const auto n = sys.A.rows(), q = sys.B.cols();
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(q) - 1);
  koopctl::SnapshotMatrices s;
  s.Z.resize(n, m);
  s.Zprime.resize(n, m);
  s.U = Eigen::MatrixXd::Zero(q, m);
  s.state_dim = static_cast<std::size_t>(n);
  s.n_delay = 1;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = g(rng);
  for (int j = 0; j < m; ++j) {
    const int a = pick(rng);
    s.Z.col(j) = z;
    s.U(a, j) = 1.0;
    z = sys.A * z + sys.B.col(a);
    s.Zprime.col(j) = z;
    s.source.push_back(0);
  }
  return s;
}

/// The same dynamics written as a TrajectorySet so that embedding is exercised.
inline koopctl::TrajectorySet simulate_set(const LtiPair& sys, std::mt19937_64& rng, int trajectories,
                                           int length) {
  const auto n = sys.A.rows(), q = sys.B.cols();
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(q) - 1);
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < n; ++i) labels.push_back("z" + std::to_string(i));
  std::vector<koopctl::Trajectory> out;
  for (int k = 0; k < trajectories; ++k) {
    Eigen::MatrixXd states(length, n);
    std::vector<int> actions;
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = g(rng);
    for (int t = 0; t < length; ++t) {
      states.row(t) = z.transpose();
      if (t + 1 < length) {
        const int a = pick(rng);
        actions.push_back(a);
        z = sys.A * z + sys.B.col(a);
      }
    }
    out.emplace_back(states, actions, 0.0, 0, 0);
  }
  return {koopctl::EnvSpec("lti", static_cast<std::size_t>(n), static_cast<std::size_t>(q), labels),
          std::move(out)};
}

/// Largest distance in a greedy nearest-neighbour matching of two eigenvalue
/// multisets of equal size (infinite if the sizes differ).
inline double multiset_distance(std::vector<std::complex<double>> a, std::vector<std::complex<double>> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0;
  for (const auto& x : a) {
    auto it = std::min_element(b.begin(), b.end(), [&](auto l, auto r) { return std::abs(l - x) < std::abs(r - x); });
    worst = std::max(worst, std::abs(*it - x));
    b.erase(it);
  }
  return worst;
}

inline std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& A) {
  const Eigen::VectorXcd v = Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues();
  return {v.data(), v.data() + v.size()};
}

} // namespace oracle
