#pragma once

// Scripted stand-ins for trained agents. Each policy can be degraded by an
// epsilon-random action rate, which gives a one-parameter skill knob.

#include <cmath>
#include <string>
#include <variant>

#include "koopctl/envsim.hpp"
#include "koopctl/error.hpp"

namespace koopctl::envsim {

struct RandomPolicy {};

/// Bang-bang on a linear state feedback: push right when the score is positive.
struct CartPolePD {
  double k_position = 0.5;
  double k_velocity = 1.0;
  double k_angle = 12.0;
  double k_angular_velocity = 2.5;
};

/// Elbow torque opposes the first link's angular velocity when its magnitude
/// exceeds `threshold`; otherwise no torque. The reaction pumps energy into the
/// swing.
struct AcrobotEnergyPump {
  double threshold = 0.0;
};

struct LanderNoop {};

/// Holds altitude: main engine whenever descending faster than `max_sink`,
/// orientation thrusters keep the body upright.
struct LanderHover {
  double max_sink = 0.0;
  double k_angle = 1.0;
  double k_angular_velocity = 0.5;
  double deadband = 0.05;
};

/// Descends toward the pad along a sink-rate profile proportional to altitude,
/// steering horizontally by tilting the main thrust.
struct LanderDescentPD {
  double k_height = 0.5;      ///< target sink rate per metre of altitude
  double min_sink = 0.02;     ///< sink rate floor near the ground
  double k_position = 0.4;    ///< desired tilt per metre of horizontal offset
  double k_velocity = 0.8;    ///< desired tilt per m/s of horizontal velocity
  double max_tilt = 0.2;
  double k_angular_velocity = 0.6;
  double deadband = 0.02;
};

class Policy {
public:
  using Kind = std::variant<RandomPolicy, CartPolePD, AcrobotEnergyPump, LanderNoop, LanderHover,
                            LanderDescentPD>;

  explicit Policy(Kind kind, double epsilon = 0.0) : kind_(kind), epsilon_(epsilon) {
    if (!(epsilon_ >= 0.0 && epsilon_ <= 1.0)) {
      throw validation_error("policy epsilon must lie in [0, 1]");
    }
  }

  [[nodiscard]] const Kind& kind() const noexcept { return kind_; }
  [[nodiscard]] double epsilon() const noexcept { return epsilon_; }

  [[nodiscard]] std::string name() const {
    return std::visit(
        [](const auto& p) -> std::string {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, RandomPolicy>) return "random";
          else if constexpr (std::is_same_v<P, CartPolePD>) return "pd";
          else if constexpr (std::is_same_v<P, AcrobotEnergyPump>) return "pump";
          else if constexpr (std::is_same_v<P, LanderNoop>) return "noop";
          else if constexpr (std::is_same_v<P, LanderHover>) return "hover";
          else return "descent";
        },
        kind_);
  }

  /// Whether this policy's controller is meaningful for `env`. Random works anywhere.
  [[nodiscard]] bool supports(EnvKind env) const {
    return std::visit(
        [env](const auto& p) {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, RandomPolicy>) return true;
          else if constexpr (std::is_same_v<P, CartPolePD>) return env == EnvKind::cartpole;
          else if constexpr (std::is_same_v<P, AcrobotEnergyPump>) return env == EnvKind::acrobot;
          else return env == EnvKind::lander;
        },
        kind_);
  }

  /// Action for `state`. Consumes exactly one uniform draw from `rng` per call
  /// when epsilon > 0 (plus one more when the random branch fires).
  int act(EnvKind env, const State& state, Rng& rng) const {
    const int count = static_cast<int>(env_spec(env).action_count());
    if (std::holds_alternative<RandomPolicy>(kind_)) {
      return rng.index(count);
    }
    if (epsilon_ > 0.0 && rng.uniform01() < epsilon_) {
      return rng.index(count);
    }
    return std::visit([&](const auto& p) { return control(p, state); }, kind_);
  }

private:
  static int control(const RandomPolicy&, const State&) { return 0; }

  static int control(const CartPolePD& g, const State& s) {
    const double score = g.k_position * s(0) + g.k_velocity * s(1) + g.k_angle * s(2) +
                         g.k_angular_velocity * s(3);
    return score > 0.0 ? 1 : 0;
  }

  static int control(const AcrobotEnergyPump& g, const State& s) {
    const double dtheta1 = s(4);
    if (std::abs(dtheta1) <= g.threshold) return 1;
    return dtheta1 > 0.0 ? 0 : 2;
  }

  static int control(const LanderNoop&, const State&) { return lander::noop; }

  static int attitude(double angle_error, double omega, double k_angle, double k_omega,
                      double deadband) {
    const double e = k_angle * angle_error + k_omega * omega;
    if (e > deadband) return lander::left_engine;   // rotate clockwise
    if (e < -deadband) return lander::right_engine; // rotate counter-clockwise
    return -1;
  }

  static int control(const LanderHover& g, const State& s) {
    if (s(3) < -g.max_sink) return lander::main_engine;
    const int a = attitude(s(4), s(5), g.k_angle, g.k_angular_velocity, g.deadband);
    return a >= 0 ? a : lander::noop;
  }

  static int control(const LanderDescentPD& g, const State& s) {
    const double target_sink = g.min_sink + g.k_height * std::max(s(1), 0.0);
    if (s(3) < -target_sink) return lander::main_engine;
    const double tilt = std::clamp(g.k_position * s(0) + g.k_velocity * s(2), -g.max_tilt, g.max_tilt);
    const int a = attitude(s(4) - tilt, s(5), 1.0, g.k_angular_velocity, g.deadband);
    return a >= 0 ? a : lander::noop;
  }

  Kind kind_;
  double epsilon_;
};

} // namespace koopctl::envsim
