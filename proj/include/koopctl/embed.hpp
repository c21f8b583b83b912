#pragma once

// Time-delay (Hankel) embedding and snapshot assembly for DMDc.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopctl/error.hpp"
#include "koopctl/trajmodel.hpp"

namespace koopctl {

struct EmbedConfig {
  std::size_t n_delay = 1;
  bool standardize = false;

  void validate() const {
    if (n_delay < 1) {
      throw validation_error("n_delay must be >= 1");
    }
  }
};

/// Column-aligned snapshots: Zprime.col(j) follows Z.col(j) under input U.col(j).
struct SnapshotMatrices {
  Eigen::MatrixXd Z;      ///< n x m lifted states z_t
  Eigen::MatrixXd Zprime; ///< n x m successors z_{t+1}
  Eigen::MatrixXd U;      ///< q x m one-hot inputs u_t
  std::size_t state_dim = 0;
  std::size_t n_delay = 1;
  /// Index (into the source set) of the trajectory each column came from.
  std::vector<std::size_t> source;
  std::size_t skipped_trajectories = 0;
  /// Scaling applied before embedding, when standardization was on.
  std::optional<ScalingParams> scaling;

  [[nodiscard]] std::size_t n() const noexcept { return static_cast<std::size_t>(Z.rows()); }
  [[nodiscard]] std::size_t q() const noexcept { return static_cast<std::size_t>(U.rows()); }
  [[nodiscard]] std::size_t m() const noexcept { return static_cast<std::size_t>(Z.cols()); }
};

/// Row k is [x_{k+n_delay-1}, ..., x_{k+1}, x_k]: newest state block first.
inline Eigen::MatrixXd delay_embed(const Trajectory& trajectory, std::size_t n_delay) {
  if (n_delay < 1) {
    throw validation_error("n_delay must be >= 1");
  }
  const auto T = trajectory.length();
  if (T < n_delay + 1) {
    throw validation_error("trajectory of length " + std::to_string(T) +
                           " too short for n_delay = " + std::to_string(n_delay) +
                           " (need at least " + std::to_string(n_delay + 1) + " states)");
  }
  const auto d = static_cast<Eigen::Index>(trajectory.state_dim());
  const auto nd = static_cast<Eigen::Index>(n_delay);
  const auto rows = static_cast<Eigen::Index>(T - n_delay + 1);
  const auto& x = trajectory.states();
  Eigen::MatrixXd out(rows, nd * d);
  for (Eigen::Index k = 0; k < rows; ++k) {
    for (Eigen::Index lag = 0; lag < nd; ++lag) {
      out.block(k, lag * d, 1, d) = x.row(k + nd - 1 - lag);
    }
  }
  return out;
}

/// Snapshot count the set contributes: sum over trials of max(0, T - n_delay).
inline std::size_t snapshot_count(const TrajectorySet& set, std::size_t n_delay) {
  std::size_t m = 0;
  for (const auto& tr : set.trajectories()) {
    if (tr.length() > n_delay) m += tr.length() - n_delay;
  }
  return m;
}

/// Assembles (Z, Zprime, U). Columns keep trajectory order, then time order;
/// no column pair straddles two trajectories. Trajectories too short to embed
/// are skipped and counted.
inline SnapshotMatrices build_snapshots(const TrajectorySet& set, const EmbedConfig& config) {
  config.validate();
  std::optional<ScalingParams> scaling;
  std::optional<TrajectorySet> scaled;
  if (config.standardize) {
    scaling = fit_scaling(set);
    scaled.emplace(apply_scaling(set, *scaling));
  }
  const TrajectorySet& src = scaled ? *scaled : set;

  const std::size_t m = snapshot_count(src, config.n_delay);
  if (m == 0) {
    throw validation_error("all " + std::to_string(set.size()) +
                           " trajectories are too short for n_delay = " +
                           std::to_string(config.n_delay) + " (need at least " +
                           std::to_string(config.n_delay + 1) + " states)");
  }
  const auto d = static_cast<Eigen::Index>(set.env().state_dim());
  const auto n = static_cast<Eigen::Index>(config.n_delay) * d;
  const auto q = static_cast<Eigen::Index>(set.env().action_count());

  SnapshotMatrices snap;
  snap.Z.resize(n, static_cast<Eigen::Index>(m));
  snap.Zprime.resize(n, static_cast<Eigen::Index>(m));
  snap.U = Eigen::MatrixXd::Zero(q, static_cast<Eigen::Index>(m));
  snap.state_dim = set.env().state_dim();
  snap.n_delay = config.n_delay;
  snap.source.reserve(m);
  snap.scaling = std::move(scaling);

  Eigen::Index col = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto& tr = src.trajectories()[i];
    if (tr.length() < config.n_delay + 1) {
      ++snap.skipped_trajectories;
      continue;
    }
    const Eigen::MatrixXd H = delay_embed(tr, config.n_delay);
    const Eigen::Index steps = H.rows() - 1;
    snap.Z.middleCols(col, steps) = H.topRows(steps).transpose();
    snap.Zprime.middleCols(col, steps) = H.bottomRows(steps).transpose();
    for (Eigen::Index k = 0; k < steps; ++k) {
      // z_k's newest block is x_{k+n_delay-1}; the action taken there yields z_{k+1}.
      const int a = tr.actions()[static_cast<std::size_t>(k) + config.n_delay - 1];
      snap.U(a, col + k) = 1.0;
      snap.source.push_back(i);
    }
    col += steps;
  }
  return snap;
}

} // namespace koopctl
