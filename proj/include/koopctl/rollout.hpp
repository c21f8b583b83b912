#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "koopctl/envsim.hpp"
#include "koopctl/policy.hpp"
#include "koopctl/trajmodel.hpp"

namespace koopctl::envsim {

/// Runs `policy` from an initial state drawn with `initial_state_seed` until
/// termination or `max_steps` transitions. The policy's own random stream is
/// derived from the same seed.
inline Trajectory rollout(EnvKind env, const Policy& policy, std::uint64_t initial_state_seed,
                          std::size_t max_steps, std::int64_t checkpoint = 0,
                          std::int64_t seed_tag = 0) {
  if (max_steps < 1) {
    throw validation_error("rollout: max_steps must be >= 1");
  }
  const auto dim = static_cast<Eigen::Index>(env_spec(env).state_dim());
  Rng init_rng(derive_seed(initial_state_seed, 0));
  Rng policy_rng(derive_seed(initial_state_seed, 1));

  std::vector<State> states{initial_state(env, init_rng)};
  std::vector<int> actions;
  double total = 0;
  for (std::size_t t = 0; t < max_steps; ++t) {
    const int a = policy.act(env, states.back(), policy_rng);
    StepOutcome out = step(env, states.back(), a);
    actions.push_back(a);
    total += out.reward;
    states.push_back(std::move(out.next_state));
    if (out.terminated) break;
  }
  Eigen::MatrixXd mat(static_cast<Eigen::Index>(states.size()), dim);
  for (std::size_t t = 0; t < states.size(); ++t) {
    mat.row(static_cast<Eigen::Index>(t)) = states[t].transpose();
  }
  return Trajectory(std::move(mat), std::move(actions), total, checkpoint, seed_tag);
}

/// Per-trial initial-state seed. Depends on (run seed, trial) only, so a
/// checkpoint series with an unchanged policy reproduces identical data.
inline std::uint64_t trial_seed(std::uint64_t run_seed, std::size_t trial) {
  return derive_seed(run_seed, 0x100000000ULL + trial);
}

/// `trials` rollouts tagged (checkpoint, seed).
inline TrajectorySet sample_checkpoint(EnvKind env, const Policy& policy, std::int64_t checkpoint,
                                       std::int64_t seed, std::size_t trials, std::size_t max_steps) {
  if (trials < 1) {
    throw validation_error("sample_checkpoint: trials must be >= 1");
  }
  std::vector<Trajectory> out;
  out.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    out.push_back(rollout(env, policy, trial_seed(static_cast<std::uint64_t>(seed), i), max_steps,
                          checkpoint, seed));
  }
  return TrajectorySet(env_spec(env), std::move(out));
}

struct ScheduleEntry {
  std::int64_t checkpoint;
  Policy policy;
};

/// One TrajectorySet per (checkpoint, seed), checkpoint-major.
inline std::vector<TrajectorySet> generate_skill_series(EnvKind env,
                                                        const std::vector<ScheduleEntry>& schedule,
                                                        std::size_t trials_per_checkpoint,
                                                        const std::vector<std::int64_t>& seeds,
                                                        std::size_t max_steps) {
  if (schedule.empty()) {
    throw validation_error("generate_skill_series: empty schedule");
  }
  if (seeds.empty()) {
    throw validation_error("generate_skill_series: no seeds");
  }
  std::vector<TrajectorySet> out;
  out.reserve(schedule.size() * seeds.size());
  for (const auto& entry : schedule) {
    for (auto seed : seeds) {
      out.push_back(sample_checkpoint(env, entry.policy, entry.checkpoint, seed,
                                      trials_per_checkpoint, max_steps));
    }
  }
  return out;
}

} // namespace koopctl::envsim
