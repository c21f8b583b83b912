#pragma once

// Deterministic simulators (CartPole, Acrobot, a simplified planar lander),
// scripted policies of graded skill, and rollout/series generation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "koopctl/error.hpp"
#include "koopctl/trajmodel.hpp"

namespace koopctl::envsim {

enum class EnvKind { cartpole, acrobot, lander };

inline std::string to_string(EnvKind kind) {
  switch (kind) {
  case EnvKind::cartpole: return "cartpole";
  case EnvKind::acrobot: return "acrobot";
  case EnvKind::lander: return "lander";
  }
  return "unknown";
}

inline EnvKind parse_env(const std::string& name) {
  if (name == "cartpole") return EnvKind::cartpole;
  if (name == "acrobot") return EnvKind::acrobot;
  if (name == "lander") return EnvKind::lander;
  throw validation_error("unknown env '" + name + "' (expected cartpole, acrobot or lander)");
}

inline EnvSpec env_spec(EnvKind kind) {
  switch (kind) {
  case EnvKind::cartpole:
    return {"cartpole", 4, 2, {"cart_position", "cart_velocity", "pole_angle", "pole_angular_velocity"}};
  case EnvKind::acrobot:
    return {"acrobot", 6, 3, {"cos_theta1", "sin_theta1", "cos_theta2", "sin_theta2", "theta1_dot", "theta2_dot"}};
  case EnvKind::lander:
    return {"lander", 8, 4, {"x", "y", "x_dot", "y_dot", "angle", "angular_velocity", "left_contact", "right_contact"}};
  }
  throw validation_error("unknown env kind");
}

using State = Eigen::VectorXd;

struct StepOutcome {
  State next_state;
  double reward = 0;
  bool terminated = false;
  bool truncated = false;
};

// ---------------------------------------------------------------------------
// Random numbers. Uniforms are built from raw mt19937_64 output so that
// rollouts are reproducible across standard library implementations.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for (seed, stream) pairs.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL));
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  int index(int count) {
    return static_cast<int>(uniform01() * static_cast<double>(count)) % count;
  }

private:
  std::mt19937_64 engine_;
};

namespace detail {
inline void require_state(const State& s, Eigen::Index dim, const char* env) {
  if (s.size() != dim) {
    throw validation_error(std::string(env) + ": state must have " + std::to_string(dim) +
                           " entries, got " + std::to_string(s.size()));
  }
  if (!s.allFinite()) {
    throw validation_error(std::string(env) + ": non-finite state");
  }
}
inline void require_action(int action, int count, const char* env) {
  if (action < 0 || action >= count) {
    throw validation_error(std::string(env) + ": action " + std::to_string(action) +
                           " out of range [0, " + std::to_string(count) + ")");
  }
}
} // namespace detail

// ---------------------------------------------------------------------------
// CartPole (classic Barto-Sutton-Anderson cart-pole constants)

namespace cartpole {
inline constexpr double gravity = 9.8;
inline constexpr double mass_cart = 1.0;
inline constexpr double mass_pole = 0.1;
inline constexpr double total_mass = mass_cart + mass_pole;
inline constexpr double half_length = 0.5;
inline constexpr double pole_mass_length = mass_pole * half_length;
inline constexpr double force_mag = 10.0;
inline constexpr double dt = 0.02;
inline constexpr double angle_limit = 12.0 * 2.0 * std::numbers::pi / 360.0;
inline constexpr double position_limit = 2.4;
} // namespace cartpole

/// Semi-implicit Euler step. Action 1 pushes toward +x, action 0 toward -x.
inline StepOutcome step_cartpole(const State& state, int action) {
  using namespace cartpole;
  detail::require_state(state, 4, "cartpole");
  detail::require_action(action, 2, "cartpole");
  double x = state(0), x_dot = state(1), theta = state(2), theta_dot = state(3);
  const double force = action == 1 ? force_mag : -force_mag;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc = (gravity * sin_t - cos_t * temp) /
                           (half_length * (4.0 / 3.0 - mass_pole * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

  x_dot += dt * x_acc;
  x += dt * x_dot;
  theta_dot += dt * theta_acc;
  theta += dt * theta_dot;

  StepOutcome out;
  out.next_state = State(4);
  out.next_state << x, x_dot, theta, theta_dot;
  out.terminated = std::abs(x) > position_limit || std::abs(theta) > angle_limit;
  out.reward = 1.0;
  return out;
}

inline State cartpole_initial_state(Rng& rng) {
  State s(4);
  for (Eigen::Index i = 0; i < 4; ++i) s(i) = rng.uniform(-0.05, 0.05);
  return s;
}

// ---------------------------------------------------------------------------
// Acrobot (two-link, actuated at the elbow; Sutton 1996 "book" dynamics)

namespace acrobot {
inline constexpr double dt = 0.2;
inline constexpr double link_length_1 = 1.0;
inline constexpr double link_mass_1 = 1.0;
inline constexpr double link_mass_2 = 1.0;
inline constexpr double link_com_1 = 0.5;
inline constexpr double link_com_2 = 0.5;
inline constexpr double link_moi = 1.0;
inline constexpr double gravity = 9.8;
inline constexpr double max_vel_1 = 4.0 * std::numbers::pi;
inline constexpr double max_vel_2 = 9.0 * std::numbers::pi;
// A single RK4 stage over 0.2 s lets the unforced energy drift by ~1e-2 per
// step; twenty substeps keep it below 1e-8.
inline constexpr int rk4_substeps = 20;
} // namespace acrobot

namespace detail {

using Vec4 = std::array<double, 4>;

/// Time derivative of (theta1, theta2, dtheta1, dtheta2) under elbow torque.
inline Vec4 acrobot_derivative(const Vec4& s, double torque) {
  using namespace acrobot;
  const double m1 = link_mass_1, m2 = link_mass_2, l1 = link_length_1;
  const double lc1 = link_com_1, lc2 = link_com_2, I1 = link_moi, I2 = link_moi, g = gravity;
  const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];
  const double cos2 = std::cos(theta2), sin2 = std::sin(theta2);
  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2 * l1 * lc2 * cos2) + I1 + I2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + I2;
  // cos(a - pi/2) written as sin(a) so the hanging rest state is an exact equilibrium.
  const double phi2 = m2 * lc2 * g * std::sin(theta1 + theta2);
  const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * sin2 -
                      2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2 +
                      (m1 * lc1 + m2 * l1) * g * std::sin(theta1) + phi2;
  const double ddtheta2 =
      (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * sin2 - phi2) /
      (m2 * lc2 * lc2 + I2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2};
}

inline Vec4 axpy(const Vec4& x, double a, const Vec4& k) {
  return {x[0] + a * k[0], x[1] + a * k[1], x[2] + a * k[2], x[3] + a * k[3]};
}

} // namespace detail

/// Total mechanical energy (kinetic + potential, zero at the hanging rest state
/// up to a constant) for angles and angular velocities.
inline double acrobot_energy(double theta1, double theta2, double dtheta1, double dtheta2) {
  using namespace acrobot;
  const double m1 = link_mass_1, m2 = link_mass_2, l1 = link_length_1;
  const double lc1 = link_com_1, lc2 = link_com_2, I1 = link_moi, I2 = link_moi, g = gravity;
  const double cos2 = std::cos(theta2);
  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2 * l1 * lc2 * cos2) + I1 + I2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + I2;
  const double d3 = m2 * lc2 * lc2 + I2;
  const double kinetic = 0.5 * (d1 * dtheta1 * dtheta1 + 2 * d2 * dtheta1 * dtheta2 + d3 * dtheta2 * dtheta2);
  const double potential =
      -(m1 * lc1 + m2 * l1) * g * std::cos(theta1) - m2 * lc2 * g * std::cos(theta1 + theta2);
  return kinetic + potential;
}

inline State acrobot_state_from_angles(double theta1, double theta2, double dtheta1, double dtheta2) {
  State s(6);
  s << std::cos(theta1), std::sin(theta1), std::cos(theta2), std::sin(theta2), dtheta1, dtheta2;
  return s;
}

/// Height of the free end above the pivot, in link lengths: -cos(t1) - cos(t1 + t2).
inline double acrobot_tip_height(const State& s) {
  const double cos12 = s(0) * s(2) - s(1) * s(3);
  return -s(0) - cos12;
}

/// Advances dt with torque (action - 1) by fixed-step RK4 substeps.
inline StepOutcome step_acrobot(const State& state, int action) {
  using namespace acrobot;
  detail::require_state(state, 6, "acrobot");
  detail::require_action(action, 3, "acrobot");
  for (Eigen::Index k = 0; k < 4; k += 2) {
    const double radius_sq = state(k) * state(k) + state(k + 1) * state(k + 1);
    if (std::abs(radius_sq - 1.0) > 1e-6) {
      throw validation_error("acrobot: cos/sin pair " + std::to_string(k / 2 + 1) +
                             " is off the unit circle");
    }
  }
  const double torque = static_cast<double>(action - 1);
  const detail::Vec4 s0{std::atan2(state(1), state(0)), std::atan2(state(3), state(2)), state(4),
                        state(5)};
  const double h = dt / rk4_substeps;
  detail::Vec4 s1 = s0;
  for (int sub = 0; sub < rk4_substeps; ++sub) {
    const auto k1 = detail::acrobot_derivative(s1, torque);
    const auto k2 = detail::acrobot_derivative(detail::axpy(s1, h / 2, k1), torque);
    const auto k3 = detail::acrobot_derivative(detail::axpy(s1, h / 2, k2), torque);
    const auto k4 = detail::acrobot_derivative(detail::axpy(s1, h, k3), torque);
    for (std::size_t i = 0; i < 4; ++i) {
      s1[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
  }
  s1[2] = std::clamp(s1[2], -max_vel_1, max_vel_1);
  s1[3] = std::clamp(s1[3], -max_vel_2, max_vel_2);

  StepOutcome out;
  out.next_state = acrobot_state_from_angles(s1[0], s1[1], s1[2], s1[3]);
  out.terminated = acrobot_tip_height(out.next_state) > 1.0;
  out.reward = out.terminated ? 0.0 : -1.0;
  return out;
}

inline State acrobot_initial_state(Rng& rng) {
  double v[4];
  for (double& x : v) x = rng.uniform(-0.1, 0.1);
  return acrobot_state_from_angles(v[0], v[1], v[2], v[3]);
}

// ---------------------------------------------------------------------------
// Simplified planar lander. Not a physics-engine port: a rigid body under
// lunar gravity with a body-axis main engine and two orientation thrusters.
// y is the height of the leg baseline center; legs sit at +-leg_half_span
// along the body x axis.

namespace lander {
inline constexpr double dt = 0.02;
inline constexpr double gravity = 1.6;
inline constexpr double main_accel = 3.2;
inline constexpr double side_angular_accel = 2.0;
inline constexpr double side_lateral_accel = 0.3;
inline constexpr double leg_half_span = 0.2;
inline constexpr double crash_speed = 1.0;
inline constexpr double upright_limit = 0.3;
inline constexpr double pad_half_width = 0.4;
inline constexpr double x_limit = 2.0;
inline constexpr double landing_bonus = 100.0;
inline constexpr double crash_penalty = -100.0;
inline constexpr double main_fuel_cost = 0.03;
inline constexpr double side_fuel_cost = 0.003;
inline constexpr double shaping_weight = 10.0;

enum Action : int { noop = 0, left_engine = 1, main_engine = 2, right_engine = 3 };
} // namespace lander

/// Potential rewarding proximity to the pad center and low speed.
inline double lander_potential(const State& s) {
  return -lander::shaping_weight * std::hypot(s(0), s(1)) -
         lander::shaping_weight * std::hypot(s(2), s(3));
}

/// Semi-implicit Euler step. The left engine pushes the body toward +x and
/// rotates it clockwise; the right engine mirrors it.
inline StepOutcome step_lander(const State& state, int action) {
  using namespace lander;
  detail::require_state(state, 8, "lander");
  detail::require_action(action, 4, "lander");
  double x = state(0), y = state(1), vx = state(2), vy = state(3);
  double angle = state(4), omega = state(5);

  double ax = 0, ay = -gravity, alpha = 0, fuel = 0;
  if (action == main_engine) {
    ax += -std::sin(angle) * main_accel;
    ay += std::cos(angle) * main_accel;
    fuel = main_fuel_cost;
  } else if (action == left_engine || action == right_engine) {
    const double dir = action == left_engine ? 1.0 : -1.0;
    ax += dir * std::cos(angle) * side_lateral_accel;
    ay += dir * std::sin(angle) * side_lateral_accel;
    alpha = -dir * side_angular_accel;
    fuel = side_fuel_cost;
  }
  if (action != noop) {
    vx += dt * ax;
  }
  vy += dt * ay;
  omega += dt * alpha;
  x += dt * vx;
  y += dt * vy;
  angle += dt * omega;

  StepOutcome out;
  out.next_state = State(8);
  out.next_state << x, y, vx, vy, angle, omega, state(6), state(7);
  out.reward = lander_potential(out.next_state) - lander_potential(state) - fuel;

  const double left_y = y - leg_half_span * std::sin(angle);
  const double right_y = y + leg_half_span * std::sin(angle);
  if (left_y <= 0.0 || right_y <= 0.0) {
    out.terminated = true;
    if (std::abs(vy) >= crash_speed || std::abs(angle) > upright_limit) {
      out.next_state(6) = left_y <= 0.0 ? 1.0 : 0.0;
      out.next_state(7) = right_y <= 0.0 ? 1.0 : 0.0;
      out.reward += crash_penalty;
    } else {
      // A slow, upright touchdown settles onto both legs.
      out.next_state(6) = 1.0;
      out.next_state(7) = 1.0;
      if (std::abs(x) <= pad_half_width) out.reward += landing_bonus;
    }
  } else if (std::abs(x) > x_limit) {
    out.terminated = true;
    out.reward += crash_penalty;
  }
  return out;
}

inline State lander_initial_state(Rng& rng) {
  State s(8);
  s << rng.uniform(-0.15, 0.15), 1.4 + rng.uniform(-0.1, 0.1), rng.uniform(-0.05, 0.05),
      rng.uniform(-0.2, 0.0), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.0, 0.0;
  return s;
}

inline StepOutcome step(EnvKind kind, const State& state, int action) {
  switch (kind) {
  case EnvKind::cartpole: return step_cartpole(state, action);
  case EnvKind::acrobot: return step_acrobot(state, action);
  case EnvKind::lander: return step_lander(state, action);
  }
  throw validation_error("unknown env kind");
}

inline State initial_state(EnvKind kind, Rng& rng) {
  switch (kind) {
  case EnvKind::cartpole: return cartpole_initial_state(rng);
  case EnvKind::acrobot: return acrobot_initial_state(rng);
  case EnvKind::lander: return lander_initial_state(rng);
  }
  throw validation_error("unknown env kind");
}

} // namespace koopctl::envsim
