#pragma once

// Trajectory data model, the koopctl-traj-v1 interchange format, one-hot
// action encoding, and per-coordinate state standardization.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "koopctl/error.hpp"
#include "koopctl/numfmt.hpp"

namespace koopctl {

inline constexpr std::string_view traj_format_tag = "koopctl-traj-v1";

/// Environment description carried in every trajectory file header.
class EnvSpec {
public:
  EnvSpec(std::string name, std::size_t state_dim, std::size_t action_count,
          std::vector<std::string> state_labels)
      : name_(std::move(name)), state_dim_(state_dim), action_count_(action_count),
        state_labels_(std::move(state_labels)) {
    if (state_dim_ < 1) {
      throw validation_error("env '" + name_ + "': state_dim must be >= 1");
    }
    if (action_count_ < 2) {
      throw validation_error("env '" + name_ + "': action_count must be >= 2");
    }
    if (state_labels_.size() != state_dim_) {
      throw validation_error("env '" + name_ + "': expected " + std::to_string(state_dim_) +
                             " state labels, got " + std::to_string(state_labels_.size()));
    }
  }

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] std::size_t state_dim() const noexcept { return state_dim_; }
  [[nodiscard]] std::size_t action_count() const noexcept { return action_count_; }
  [[nodiscard]] const std::vector<std::string>& state_labels() const noexcept {
    return state_labels_;
  }

  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;

private:
  std::string name_;
  std::size_t state_dim_;
  std::size_t action_count_;
  std::vector<std::string> state_labels_;
};

/// One rollout. Row t of `states` is s_t; action t moves s_t to s_{t+1}.
class Trajectory {
public:
  Trajectory(Eigen::MatrixXd states, std::vector<int> actions, double total_reward,
             std::int64_t checkpoint, std::int64_t seed)
      : states_(std::move(states)), actions_(std::move(actions)), total_reward_(total_reward),
        checkpoint_(checkpoint), seed_(seed) {
    if (states_.rows() < 2) {
      throw validation_error("trajectory needs at least 2 states, got " +
                             std::to_string(states_.rows()));
    }
    if (states_.cols() < 1) {
      throw validation_error("trajectory states have zero columns");
    }
    if (actions_.size() != static_cast<std::size_t>(states_.rows() - 1)) {
      throw validation_error("trajectory with " + std::to_string(states_.rows()) +
                             " states needs " + std::to_string(states_.rows() - 1) +
                             " actions, got " + std::to_string(actions_.size()));
    }
    if (!states_.allFinite()) {
      throw validation_error("trajectory contains a non-finite state value");
    }
    if (!std::isfinite(total_reward_)) {
      throw validation_error("trajectory reward is not finite");
    }
    if (checkpoint_ < 0 || seed_ < 0) {
      throw validation_error("checkpoint and seed must be non-negative");
    }
    for (int a : actions_) {
      if (a < 0) {
        throw validation_error("negative action index " + std::to_string(a));
      }
    }
  }

  [[nodiscard]] const Eigen::MatrixXd& states() const noexcept { return states_; }
  [[nodiscard]] const std::vector<int>& actions() const noexcept { return actions_; }
  [[nodiscard]] double total_reward() const noexcept { return total_reward_; }
  [[nodiscard]] std::int64_t checkpoint() const noexcept { return checkpoint_; }
  [[nodiscard]] std::int64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::size_t length() const noexcept { return static_cast<std::size_t>(states_.rows()); }
  [[nodiscard]] std::size_t state_dim() const noexcept { return static_cast<std::size_t>(states_.cols()); }
  /// Number of (state, action, next-state) transitions, always length() - 1.
  [[nodiscard]] std::size_t transitions() const noexcept { return actions_.size(); }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.states_.rows() == b.states_.rows() && a.states_.cols() == b.states_.cols() &&
           a.states_ == b.states_ && a.actions_ == b.actions_ &&
           a.total_reward_ == b.total_reward_ && a.checkpoint_ == b.checkpoint_ &&
           a.seed_ == b.seed_;
  }

private:
  Eigen::MatrixXd states_;
  std::vector<int> actions_;
  double total_reward_;
  std::int64_t checkpoint_;
  std::int64_t seed_;
};

class TrajectorySet {
public:
  TrajectorySet(EnvSpec env, std::vector<Trajectory> trajectories, std::string comment = {})
      : env_(std::move(env)), trajectories_(std::move(trajectories)), comment_(std::move(comment)) {
    if (trajectories_.empty()) {
      throw validation_error("trajectory set is empty");
    }
    for (std::size_t i = 0; i < trajectories_.size(); ++i) {
      const auto& tr = trajectories_[i];
      if (tr.state_dim() != env_.state_dim()) {
        throw validation_error("trajectory " + std::to_string(i) + " has state_dim " +
                               std::to_string(tr.state_dim()) + ", env declares " +
                               std::to_string(env_.state_dim()));
      }
      for (std::size_t t = 0; t < tr.actions().size(); ++t) {
        if (static_cast<std::size_t>(tr.actions()[t]) >= env_.action_count()) {
          throw validation_error("trajectory " + std::to_string(i) + " step " + std::to_string(t) +
                                 ": action " + std::to_string(tr.actions()[t]) +
                                 " out of range [0, " + std::to_string(env_.action_count()) + ")");
        }
      }
    }
  }

  [[nodiscard]] const EnvSpec& env() const noexcept { return env_; }
  [[nodiscard]] const std::vector<Trajectory>& trajectories() const noexcept { return trajectories_; }
  [[nodiscard]] std::size_t size() const noexcept { return trajectories_.size(); }
  /// Free-form provenance text stored in the file header; not part of the data.
  [[nodiscard]] const std::string& comment() const noexcept { return comment_; }

  friend bool operator==(const TrajectorySet& a, const TrajectorySet& b) {
    return a.env_ == b.env_ && a.trajectories_ == b.trajectories_ && a.comment_ == b.comment_;
  }

private:
  EnvSpec env_;
  std::vector<Trajectory> trajectories_;
  std::string comment_;
};

// ---------------------------------------------------------------------------
// Interchange format

namespace detail {

inline void append_json_string(std::string& out, const std::string& s) {
  out += nlohmann::json(s).dump();
}

inline void append_header(std::string& out, const EnvSpec& env, const std::string& comment) {
  out += R"({"format":")";
  out += traj_format_tag;
  out += R"(","env":{"name":)";
  append_json_string(out, env.name());
  out += R"(,"state_dim":)" + std::to_string(env.state_dim());
  out += R"(,"action_count":)" + std::to_string(env.action_count());
  out += R"(,"state_labels":[)";
  for (std::size_t i = 0; i < env.state_labels().size(); ++i) {
    if (i) out += ',';
    append_json_string(out, env.state_labels()[i]);
  }
  out += "]}";
  if (!comment.empty()) {
    out += R"(,"comment":)";
    append_json_string(out, comment);
  }
  out += "}\n";
}

inline void append_trial(std::string& out, const Trajectory& tr) {
  out += R"({"checkpoint":)" + std::to_string(tr.checkpoint());
  out += R"(,"seed":)" + std::to_string(tr.seed());
  out += R"(,"reward":)";
  append_double(out, tr.total_reward());
  out += R"(,"states":[)";
  const auto& s = tr.states();
  for (Eigen::Index t = 0; t < s.rows(); ++t) {
    if (t) out += ',';
    out += '[';
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (j) out += ',';
      append_double(out, s(t, j));
    }
    out += ']';
  }
  out += R"(],"actions":[)";
  for (std::size_t t = 0; t < tr.actions().size(); ++t) {
    if (t) out += ',';
    out += std::to_string(tr.actions()[t]);
  }
  out += "]}\n";
}

[[noreturn]] inline void fail_at(std::size_t line, const std::string& what) {
  throw validation_error("line " + std::to_string(line) + ": " + what);
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    fail_at(line, std::string("missing field '") + key + "'");
  }
  return *it;
}

inline std::int64_t require_nonneg_int(const nlohmann::json& obj, const char* key,
                                       std::size_t line) {
  const auto& v = require(obj, key, line);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    fail_at(line, std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::int64_t>();
}

inline EnvSpec parse_header(const nlohmann::json& h, std::string& comment) {
  if (!h.is_object()) {
    fail_at(1, "header record is not an object");
  }
  const auto& fmt = require(h, "format", 1);
  if (!fmt.is_string() || fmt.get<std::string>() != traj_format_tag) {
    fail_at(1, "unsupported format tag, expected " + std::string(traj_format_tag));
  }
  const auto& env = require(h, "env", 1);
  if (!env.is_object()) {
    fail_at(1, "'env' is not an object");
  }
  const auto& name = require(env, "name", 1);
  if (!name.is_string()) {
    fail_at(1, "env name must be a string");
  }
  auto state_dim = require_nonneg_int(env, "state_dim", 1);
  auto action_count = require_nonneg_int(env, "action_count", 1);
  const auto& labels = require(env, "state_labels", 1);
  if (!labels.is_array()) {
    fail_at(1, "state_labels must be an array");
  }
  std::vector<std::string> label_vec;
  for (const auto& l : labels) {
    if (!l.is_string()) {
      fail_at(1, "state_labels entries must be strings");
    }
    label_vec.push_back(l.get<std::string>());
  }
  if (auto it = h.find("comment"); it != h.end()) {
    if (!it->is_string()) {
      fail_at(1, "comment must be a string");
    }
    comment = it->get<std::string>();
  }
  try {
    return EnvSpec(name.get<std::string>(), static_cast<std::size_t>(state_dim),
                   static_cast<std::size_t>(action_count), std::move(label_vec));
  } catch (const validation_error& e) {
    fail_at(1, e.what());
  }
}

inline Trajectory parse_trial(const nlohmann::json& rec, const EnvSpec& env, std::size_t line) {
  if (!rec.is_object()) {
    fail_at(line, "trial record is not an object");
  }
  auto checkpoint = require_nonneg_int(rec, "checkpoint", line);
  auto seed = require_nonneg_int(rec, "seed", line);
  const auto& reward = require(rec, "reward", line);
  if (!reward.is_number()) {
    fail_at(line, "reward must be a number");
  }
  const auto& states = require(rec, "states", line);
  if (!states.is_array()) {
    fail_at(line, "states must be an array of rows");
  }
  const auto rows = static_cast<Eigen::Index>(states.size());
  const auto dim = static_cast<Eigen::Index>(env.state_dim());
  Eigen::MatrixXd mat(rows, dim);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const auto& row = states[static_cast<std::size_t>(t)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != dim) {
      fail_at(line, "state row " + std::to_string(t) + " does not have state_dim = " +
                        std::to_string(dim) + " entries");
    }
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto& v = row[static_cast<std::size_t>(j)];
      if (!v.is_number()) {
        fail_at(line, "state row " + std::to_string(t) + " has a non-numeric entry");
      }
      double x = v.get<double>();
      if (!std::isfinite(x)) {
        fail_at(line, "state row " + std::to_string(t) + " has a non-finite entry");
      }
      mat(t, j) = x;
    }
  }
  const auto& actions = require(rec, "actions", line);
  if (!actions.is_array()) {
    fail_at(line, "actions must be an array");
  }
  std::vector<int> acts;
  acts.reserve(actions.size());
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const auto& a = actions[t];
    if (!a.is_number_integer()) {
      fail_at(line, "action " + std::to_string(t) + " is not an integer");
    }
    auto v = a.get<std::int64_t>();
    if (v < 0 || static_cast<std::uint64_t>(v) >= env.action_count()) {
      fail_at(line, "action " + std::to_string(t) + " = " + std::to_string(v) +
                        " out of range [0, " + std::to_string(env.action_count()) + ")");
    }
    acts.push_back(static_cast<int>(v));
  }
  try {
    return Trajectory(std::move(mat), std::move(acts), reward.get<double>(), checkpoint, seed);
  } catch (const validation_error& e) {
    fail_at(line, e.what());
  }
}

} // namespace detail

/// Writes the canonical interchange text: one header record, then one record per trial.
inline std::string serialize_trajectory_file(const TrajectorySet& set) {
  std::string out;
  detail::append_header(out, set.env(), set.comment());
  for (const auto& tr : set.trajectories()) {
    detail::append_trial(out, tr);
  }
  return out;
}

/// Parses and validates an interchange file. Errors name the offending line (1-based).
inline TrajectorySet parse_trajectory_file(std::string_view text) {
  std::optional<EnvSpec> env;
  std::string comment;
  std::vector<Trajectory> trials;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      detail::fail_at(line_no, "empty record");
    }
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      detail::fail_at(line_no, std::string("malformed record: ") + e.what());
    }
    if (!env) {
      env = detail::parse_header(rec, comment);
    } else {
      trials.push_back(detail::parse_trial(rec, *env, line_no));
    }
  }
  if (!env) {
    throw validation_error("empty trajectory file (no header record)");
  }
  if (trials.empty()) {
    throw validation_error("trajectory file contains a header but no trials");
  }
  return TrajectorySet(std::move(*env), std::move(trials), std::move(comment));
}

// ---------------------------------------------------------------------------
// Encoding and scaling

/// The control input u_t for a discrete action.
inline Eigen::VectorXd one_hot_encode(int action, std::size_t action_count) {
  if (action < 0 || static_cast<std::size_t>(action) >= action_count) {
    throw validation_error("action " + std::to_string(action) + " out of range [0, " +
                           std::to_string(action_count) + ")");
  }
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(action_count));
  u(action) = 1.0;
  return u;
}

struct ScalingParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale; ///< strictly positive

  [[nodiscard]] static ScalingParams identity(std::size_t dim) {
    const auto n = static_cast<Eigen::Index>(dim);
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
  }
};

/// Pooled per-coordinate mean and population standard deviation over every
/// state of every trajectory. Coordinates whose spread is negligible relative
/// to their magnitude get scale 1.
inline ScalingParams fit_scaling(const TrajectorySet& set) {
  const auto dim = static_cast<Eigen::Index>(set.env().state_dim());
  // Shifted accumulation: mean = ref + E[x - ref] is exact for constant data.
  const Eigen::RowVectorXd ref = set.trajectories().front().states().row(0);
  Eigen::RowVectorXd shift_sum = Eigen::RowVectorXd::Zero(dim);
  double count = 0;
  for (const auto& tr : set.trajectories()) {
    shift_sum += (tr.states().rowwise() - ref).colwise().sum();
    count += static_cast<double>(tr.length());
  }
  const Eigen::RowVectorXd mean = ref + shift_sum / count;
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(dim);
  for (const auto& tr : set.trajectories()) {
    sq += (tr.states().rowwise() - mean).array().square().matrix().colwise().sum();
  }
  ScalingParams p{mean.transpose(), Eigen::VectorXd(dim)};
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double sd = std::sqrt(sq(j) / count);
    const double floor = 1e-12 * std::max(1.0, std::abs(mean(j)));
    p.scale(j) = sd > floor ? sd : 1.0;
  }
  return p;
}

namespace detail {
inline void check_scaling_dims(const TrajectorySet& set, const ScalingParams& params) {
  const auto dim = static_cast<Eigen::Index>(set.env().state_dim());
  if (params.mean.size() != dim || params.scale.size() != dim) {
    throw validation_error("scaling params have dimension " + std::to_string(params.mean.size()) +
                           ", trajectory set has state_dim " + std::to_string(dim));
  }
  if ((params.scale.array() <= 0.0).any()) {
    throw validation_error("scaling params must have strictly positive scale");
  }
}

template <class RowOp>
TrajectorySet map_states(const TrajectorySet& set, RowOp op) {
  std::vector<Trajectory> out;
  out.reserve(set.size());
  for (const auto& tr : set.trajectories()) {
    out.emplace_back(op(tr.states()), tr.actions(), tr.total_reward(), tr.checkpoint(), tr.seed());
  }
  return TrajectorySet(set.env(), std::move(out), set.comment());
}
} // namespace detail

/// Replaces every state x by (x - mean) / scale.
inline TrajectorySet apply_scaling(const TrajectorySet& set, const ScalingParams& params) {
  detail::check_scaling_dims(set, params);
  const Eigen::RowVectorXd mean = params.mean.transpose();
  const Eigen::RowVectorXd scale = params.scale.transpose();
  return detail::map_states(set, [&](const Eigen::MatrixXd& s) -> Eigen::MatrixXd {
    return ((s.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  });
}

/// Inverse of apply_scaling: x * scale + mean.
inline TrajectorySet unapply_scaling(const TrajectorySet& set, const ScalingParams& params) {
  detail::check_scaling_dims(set, params);
  const Eigen::RowVectorXd mean = params.mean.transpose();
  const Eigen::RowVectorXd scale = params.scale.transpose();
  return detail::map_states(set, [&](const Eigen::MatrixXd& s) -> Eigen::MatrixXd {
    return (s.array().rowwise() * scale.array()).matrix().rowwise() + mean;
  });
}

} // namespace koopctl
