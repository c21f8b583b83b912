#pragma once

// Dynamic mode decomposition with control (unknown-B variant) on delay-embedded
// snapshots, plus prediction and reconstruction diagnostics.
//
// Given snapshots z_{t+1} = A z_t + B u_t, the fit stacks Omega = [Z; U] and
// solves the least-squares problem through two truncated SVDs:
//
//   Omega   ~ Uh Sh Vh^T   (rank p, Uh split into Uh1: n rows, Uh2: q rows)
//   Zprime  ~ Ut St Wt^T   (rank r, output basis Ut)
//
//   A_reduced = Ut^T Zprime Vh Sh^-1 Uh1^T Ut          (r x r)
//   B_reduced = Ut^T Zprime Vh Sh^-1 Uh2^T             (r x q)

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "koopctl/embed.hpp"
#include "koopctl/error.hpp"

namespace koopctl {

/// How many singular values a truncated SVD keeps.
class RankRule {
public:
  struct Energy {
    double fraction;
  };
  struct Fixed {
    std::size_t rank;
  };
  struct Full {};

  static RankRule energy(double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
      throw validation_error("energy fraction must lie in (0, 1), got " + std::to_string(fraction));
    }
    return RankRule(Energy{fraction});
  }
  static RankRule fixed(std::size_t rank) {
    if (rank < 1) {
      throw validation_error("fixed rank must be >= 1");
    }
    return RankRule(Fixed{rank});
  }
  static RankRule full() { return RankRule(Full{}); }

  [[nodiscard]] const std::variant<Energy, Fixed, Full>& value() const noexcept { return rule_; }

  /// "0.95", "12" or "full"; the inverse of parse().
  [[nodiscard]] std::string to_string() const {
    if (auto* e = std::get_if<Energy>(&rule_)) return format_double(e->fraction);
    if (auto* f = std::get_if<Fixed>(&rule_)) return std::to_string(f->rank);
    return "full";
  }

  /// Fractions in (0,1) are energy thresholds, positive integers fixed ranks.
  static RankRule parse(const std::string& text) {
    if (text == "full") return full();
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
      throw validation_error("svd rank '" + text + "' is not a number or 'full'");
    }
    if (v > 0.0 && v < 1.0) return energy(v);
    if (v >= 1.0 && v == std::floor(v) && v < 1e9) return fixed(static_cast<std::size_t>(v));
    throw validation_error("svd rank '" + text +
                           "': fractional rank must be in (0,1); integers >= 1 and 'full' allowed");
  }

private:
  explicit RankRule(std::variant<Energy, Fixed, Full> r) : rule_(r) {}
  std::variant<Energy, Fixed, Full> rule_;
};

/// Rank selected by `rule` for a non-increasing singular value sequence.
/// Energy(f) counts squared singular values: the smallest r whose leading
/// share of sum(sigma^2) reaches f.
inline std::size_t truncation_rank(std::span<const double> singular_values, const RankRule& rule) {
  if (singular_values.empty()) {
    throw validation_error("truncation_rank: empty singular value sequence");
  }
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    const double s = singular_values[i];
    if (!std::isfinite(s) || s < 0.0) {
      throw validation_error("truncation_rank: singular values must be finite and non-negative");
    }
    if (i > 0 && s > singular_values[i - 1]) {
      throw validation_error("truncation_rank: singular values must be non-increasing");
    }
  }
  const std::size_t len = singular_values.size();
  return std::visit(
      [&](const auto& r) -> std::size_t {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, RankRule::Full>) {
          return len;
        } else if constexpr (std::is_same_v<R, RankRule::Fixed>) {
          return std::min(r.rank, len);
        } else {
          double total = 0;
          for (double s : singular_values) total += s * s;
          if (total == 0.0) return 1;
          double acc = 0;
          for (std::size_t k = 0; k < len; ++k) {
            acc += singular_values[k] * singular_values[k];
            if (acc / total >= r.fraction) return k + 1;
          }
          return len;
        }
      },
      rule.value());
}

struct DmdcOptions {
  RankRule input_rule = RankRule::full();  ///< truncation of Omega = [Z; U]
  RankRule output_rule = RankRule::full(); ///< truncation of Zprime (output basis)

  static DmdcOptions uniform(const RankRule& rule) { return {rule, rule}; }
};

/// Reduced LTI surrogate z_{t+1} ~ basis (A_reduced basis^T z_t + B_reduced u_t).
struct KoopmanControlModel {
  Eigen::MatrixXd A_reduced; ///< r x r
  Eigen::MatrixXd B_reduced; ///< r x q
  Eigen::MatrixXd basis;     ///< n x r, orthonormal columns
  std::size_t r = 0;         ///< output truncation rank
  std::size_t p = 0;         ///< input truncation rank
  std::size_t n = 0;         ///< lifted dimension
  std::size_t q = 0;         ///< input dimension
  std::size_t state_dim = 0; ///< leading block width read out as the current state
  std::vector<double> singular_values_omega;
  std::vector<double> singular_values_output;
};

struct FitDiagnostics {
  double mse_one_step = 0;
  std::size_t m = 0;
  double gate = 0.01;
  bool passed_gate = false;
};

inline constexpr double default_mse_gate = 0.01;

namespace detail {

inline std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

/// Singular values at or below max(rows, cols) * eps * sigma_1 are treated as zero.
inline std::size_t numerical_rank(const Eigen::VectorXd& sv, Eigen::Index rows, Eigen::Index cols) {
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double tol = static_cast<double>(std::max(rows, cols)) *
                     std::numeric_limits<double>::epsilon() * sv(0);
  std::size_t k = 0;
  while (k < static_cast<std::size_t>(sv.size()) && sv(static_cast<Eigen::Index>(k)) > tol) ++k;
  return k;
}

} // namespace detail

inline KoopmanControlModel fit_dmdc(const SnapshotMatrices& snapshots, const DmdcOptions& options) {
  const auto& Z = snapshots.Z;
  const auto& Zp = snapshots.Zprime;
  const auto& U = snapshots.U;
  const Eigen::Index n = Z.rows();
  const Eigen::Index q = U.rows();
  const Eigen::Index m = Z.cols();
  if (m < 2) {
    throw validation_error("fit_dmdc needs at least 2 snapshots, got " + std::to_string(m));
  }
  if (Zp.rows() != n || Zp.cols() != m || U.cols() != m || n == 0 || q == 0) {
    throw validation_error("fit_dmdc: inconsistent snapshot shapes");
  }
  if (!Z.allFinite() || !Zp.allFinite() || !U.allFinite()) {
    throw validation_error("fit_dmdc: snapshots contain non-finite values");
  }

  Eigen::MatrixXd omega(n + q, m);
  omega.topRows(n) = Z;
  omega.bottomRows(q) = U;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd_in(omega, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sig_in = svd_in.singularValues();
  const std::size_t keep_in = detail::numerical_rank(sig_in, n + q, m);
  if (keep_in == 0) {
    throw numerical_error("fit_dmdc: input snapshot matrix [Z; U] is numerically zero");
  }
  const std::vector<double> omega_sv = detail::to_vector(sig_in.head(static_cast<Eigen::Index>(keep_in)));
  const auto p = static_cast<Eigen::Index>(std::min(truncation_rank(omega_sv, options.input_rule), keep_in));

  Eigen::JacobiSVD<Eigen::MatrixXd> svd_out(Zp, Eigen::ComputeThinU);
  const Eigen::VectorXd& sig_out = svd_out.singularValues();
  const std::size_t keep_out = detail::numerical_rank(sig_out, n, m);
  if (keep_out == 0) {
    throw numerical_error("fit_dmdc: output snapshots are numerically zero");
  }
  const std::vector<double> out_sv = detail::to_vector(sig_out.head(static_cast<Eigen::Index>(keep_out)));
  const auto r = static_cast<Eigen::Index>(std::min(truncation_rank(out_sv, options.output_rule), keep_out));

  const Eigen::MatrixXd Uh = svd_in.matrixU().leftCols(p);
  const Eigen::MatrixXd G =
      (Zp * svd_in.matrixV().leftCols(p)) * sig_in.head(p).cwiseInverse().asDiagonal();
  const Eigen::MatrixXd basis = svd_out.matrixU().leftCols(r);
  const Eigen::MatrixXd UtG = basis.transpose() * G;

  KoopmanControlModel model;
  model.A_reduced = UtG * (Uh.topRows(n).transpose() * basis);
  model.B_reduced = UtG * Uh.bottomRows(q).transpose();
  model.basis = basis;
  model.r = static_cast<std::size_t>(r);
  model.p = static_cast<std::size_t>(p);
  model.n = static_cast<std::size_t>(n);
  model.q = static_cast<std::size_t>(q);
  model.state_dim = snapshots.state_dim == 0 ? static_cast<std::size_t>(n) : snapshots.state_dim;
  model.singular_values_omega = omega_sv;
  model.singular_values_output = out_sv;
  if (!model.A_reduced.allFinite() || !model.B_reduced.allFinite()) {
    throw numerical_error("fit_dmdc: fitted operators are not finite");
  }
  return model;
}

inline KoopmanControlModel fit_dmdc(const SnapshotMatrices& snapshots, const RankRule& rule) {
  return fit_dmdc(snapshots, DmdcOptions::uniform(rule));
}

namespace detail {
inline void check_step_dims(const KoopmanControlModel& model, Eigen::Index zdim, Eigen::Index udim) {
  if (zdim != static_cast<Eigen::Index>(model.n) || udim != static_cast<Eigen::Index>(model.q)) {
    throw validation_error("dimension mismatch: model expects z of length " +
                           std::to_string(model.n) + " and u of length " + std::to_string(model.q) +
                           ", got " + std::to_string(zdim) + " and " + std::to_string(udim));
  }
}
} // namespace detail

/// basis (A_reduced basis^T z + B_reduced u)
inline Eigen::VectorXd predict_one_step(const KoopmanControlModel& model, const Eigen::VectorXd& z,
                                        const Eigen::VectorXd& u) {
  detail::check_step_dims(model, z.size(), u.size());
  return model.basis * (model.A_reduced * (model.basis.transpose() * z) + model.B_reduced * u);
}

/// Projects z0 once, iterates the reduced dynamics, and lifts each step.
inline std::vector<Eigen::VectorXd> rollout_model(const KoopmanControlModel& model,
                                                  const Eigen::VectorXd& z0,
                                                  std::span<const Eigen::VectorXd> inputs) {
  std::vector<Eigen::VectorXd> out;
  if (inputs.empty()) {
    detail::check_step_dims(model, z0.size(), static_cast<Eigen::Index>(model.q));
    return out;
  }
  detail::check_step_dims(model, z0.size(), inputs.front().size());
  out.reserve(inputs.size());
  Eigen::VectorXd x = model.basis.transpose() * z0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    detail::check_step_dims(model, z0.size(), inputs[k].size());
    x = model.A_reduced * x + model.B_reduced * inputs[k];
    if (!x.allFinite()) {
      throw numerical_error("rollout_model: non-finite state at step " + std::to_string(k));
    }
    out.push_back(model.basis * x);
  }
  return out;
}

/// One-step prediction error on the leading (current-state) block, averaged over
/// m snapshots and state_dim coordinates.
inline FitDiagnostics reconstruction_mse(const KoopmanControlModel& model,
                                         const SnapshotMatrices& snapshots,
                                         double gate = default_mse_gate) {
  if (snapshots.n() != model.n || snapshots.q() != model.q || snapshots.Zprime.cols() != snapshots.Z.cols() ||
      snapshots.U.cols() != snapshots.Z.cols()) {
    throw validation_error("reconstruction_mse: snapshots do not match model dimensions");
  }
  const auto d = static_cast<Eigen::Index>(model.state_dim);
  const Eigen::MatrixXd reduced =
      model.A_reduced * (model.basis.transpose() * snapshots.Z) + model.B_reduced * snapshots.U;
  const Eigen::MatrixXd lead = model.basis.topRows(d) * reduced;
  FitDiagnostics diag;
  diag.m = snapshots.m();
  diag.gate = gate;
  const double denom = static_cast<double>(diag.m) * static_cast<double>(d);
  diag.mse_one_step = diag.m == 0 ? 0.0 : (lead - snapshots.Zprime.topRows(d)).squaredNorm() / denom;
  diag.passed_gate = diag.mse_one_step < gate;
  return diag;
}

} // namespace koopctl
