#pragma once

// Checkpoint analysis, aggregation across seeds and the hidden-progress
// detector. Everything here is deterministic; summarize_run sorts its input
// before reducing so record order never changes a single bit of output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "koopctl/dmdc.hpp"
#include "koopctl/embed.hpp"
#include "koopctl/error.hpp"
#include "koopctl/specmetrics.hpp"
#include "koopctl/trajmodel.hpp"

namespace koopctl {

struct HPConfig {
  std::size_t window = 3;
  double reward_flat_frac = 0.05;
  double trend_t_threshold = 2.0;

  void validate() const {
    if (window < 3) throw validation_error("hidden-progress window must be >= 3");
    if (!(reward_flat_frac > 0.0)) throw validation_error("reward_flat_frac must be > 0");
    if (!(trend_t_threshold > 0.0)) throw validation_error("trend_t_threshold must be > 0");
  }
};

struct AnalysisConfig {
  EmbedConfig embed{4, false};
  RankRule rank_rule = RankRule::energy(0.95);
  double ctrb_rel_tol = default_ctrb_rel_tol;
  double mse_gate = default_mse_gate;
  HPConfig hidden_progress{};

  void validate() const {
    embed.validate();
    if (!(mse_gate > 0.0)) throw validation_error("mse_gate must be > 0");
    if (!(ctrb_rel_tol > 0.0)) throw validation_error("ctrb_rel_tol must be > 0");
    hidden_progress.validate();
  }
};

struct MetricRecord {
  std::int64_t checkpoint = 0;
  std::int64_t seed = 0;
  double max_eig_norm = 0;
  double normalized_ctrb_rank = 0;
  std::size_t reduced_rank_r = 0;
  double mse_one_step = 0;
  bool passed_gate = false;
  double median_reward = 0;
  std::size_t trial_count = 0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

/// Lower median, so even counts never interpolate between two rewards.
inline double lower_median(std::vector<double> values) {
  if (values.empty()) throw validation_error("median of an empty sequence");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

struct CheckpointAnalysis {
  MetricRecord record;
  KoopmanControlModel model;
  FitDiagnostics diagnostics;
  SpectrumReport spectrum;
  ControllabilityReport controllability;
  SnapshotMatrices snapshots;
};

inline CheckpointAnalysis analyze_checkpoint_detailed(const TrajectorySet& set,
                                                      const AnalysisConfig& config) {
  config.validate();
  const auto& trajs = set.trajectories();
  if (trajs.empty()) throw validation_error("analyze_checkpoint: empty trajectory set");
  const auto checkpoint = trajs.front().checkpoint();
  const auto seed = trajs.front().seed();
  for (const auto& t : trajs) {
    if (t.checkpoint() != checkpoint || t.seed() != seed) {
      throw validation_error("analyze_checkpoint: trajectories carry mixed (checkpoint, seed) tags");
    }
  }
  CheckpointAnalysis out{.record = {},
                         .model = {},
                         .diagnostics = {},
                         .spectrum = {},
                         .controllability = {},
                         .snapshots = build_snapshots(set, config.embed)};
  out.model = fit_dmdc(out.snapshots, config.rank_rule);
  out.diagnostics = reconstruction_mse(out.model, out.snapshots, config.mse_gate);
  out.spectrum = spectrum(out.model);
  out.controllability = normalized_ctrb_rank(out.model, config.ctrb_rel_tol);

  std::vector<double> rewards;
  rewards.reserve(trajs.size());
  for (const auto& t : trajs) rewards.push_back(t.total_reward());

  MetricRecord& rec = out.record;
  rec.checkpoint = checkpoint;
  rec.seed = seed;
  rec.max_eig_norm = out.spectrum.max_eig_norm;
  rec.normalized_ctrb_rank = out.controllability.normalized_rank;
  rec.reduced_rank_r = out.model.r;
  rec.mse_one_step = out.diagnostics.mse_one_step;
  rec.passed_gate = out.diagnostics.passed_gate;
  rec.median_reward = lower_median(std::move(rewards));
  rec.trial_count = trajs.size();
  return out;
}

inline MetricRecord analyze_checkpoint(const TrajectorySet& set, const AnalysisConfig& config) {
  return analyze_checkpoint_detailed(set, config).record;
}

/// Splits a set holding several (checkpoint, seed) pairs into one set per pair,
/// ordered by checkpoint then seed. Trajectory order inside a pair is kept.
inline std::vector<TrajectorySet> split_by_tag(const TrajectorySet& set) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<Trajectory>> groups;
  for (const auto& t : set.trajectories()) {
    groups[{t.checkpoint(), t.seed()}].push_back(t);
  }
  std::vector<TrajectorySet> out;
  out.reserve(groups.size());
  for (auto& [key, trajs] : groups) {
    out.emplace_back(set.env(), std::move(trajs), set.comment());
  }
  return out;
}

struct Aggregate {
  double mean = 0;
  double se = 0;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct CheckpointSummary {
  std::int64_t checkpoint = 0;
  std::size_t seed_count = 0;    ///< gate-passing seeds, the k in sample std / sqrt(k)
  std::size_t gate_failures = 0;
  std::optional<Aggregate> median_reward;
  std::optional<Aggregate> max_eig_norm;
  std::optional<Aggregate> normalized_ctrb_rank;
  /// The passing fits disagree on r, so their metrics live in spaces of different size.
  bool reduced_rank_varies = false;

  friend bool operator==(const CheckpointSummary&, const CheckpointSummary&) = default;
};

struct RunSummary {
  std::vector<CheckpointSummary> checkpoints; ///< ascending checkpoint
  std::vector<MetricRecord> records;          ///< sorted by (checkpoint, seed)
};

inline Aggregate aggregate(const std::vector<double>& v) {
  const double k = static_cast<double>(v.size());
  double sum = 0;
  for (double x : v) sum += x;
  const double mean = sum / k;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (k - 1.0)) / std::sqrt(k)};
}

inline RunSummary summarize_run(std::vector<MetricRecord> records) {
  if (records.empty()) throw validation_error("summarize_run: no records");
  std::sort(records.begin(), records.end(), [](const MetricRecord& a, const MetricRecord& b) {
    return std::pair(a.checkpoint, a.seed) < std::pair(b.checkpoint, b.seed);
  });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].checkpoint == records[i - 1].checkpoint && records[i].seed == records[i - 1].seed) {
      throw validation_error("summarize_run: duplicate record for checkpoint " +
                             std::to_string(records[i].checkpoint) + ", seed " +
                             std::to_string(records[i].seed));
    }
  }
  RunSummary out;
  std::size_t i = 0;
  while (i < records.size()) {
    CheckpointSummary cs;
    cs.checkpoint = records[i].checkpoint;
    std::vector<double> reward, eig, ctrb;
    std::optional<std::size_t> first_r;
    for (; i < records.size() && records[i].checkpoint == cs.checkpoint; ++i) {
      const auto& r = records[i];
      if (!r.passed_gate) {
        ++cs.gate_failures;
        continue;
      }
      reward.push_back(r.median_reward);
      eig.push_back(r.max_eig_norm);
      ctrb.push_back(r.normalized_ctrb_rank);
      if (!first_r) first_r = r.reduced_rank_r;
      else if (*first_r != r.reduced_rank_r) cs.reduced_rank_varies = true;
    }
    cs.seed_count = reward.size();
    if (!reward.empty()) {
      cs.median_reward = aggregate(reward);
      cs.max_eig_norm = aggregate(eig);
      cs.normalized_ctrb_rank = aggregate(ctrb);
    }
    out.checkpoints.push_back(cs);
  }
  out.records = std::move(records);
  return out;
}

struct TrendStat {
  double slope = 0;
  double t = 0;
};

/// Least-squares slope of y on x and its t-statistic. A perfectly fitting
/// non-flat line has infinite t; data without spread has t = 0. Needs at least
/// three points over two distinct x values.
inline std::optional<TrendStat> slope_t_statistic(const std::vector<double>& x,
                                                  const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n != y.size()) throw validation_error("slope_t_statistic: length mismatch");
  if (n < 3) return std::nullopt;
  double xm = 0, ym = 0;
  for (std::size_t i = 0; i < n; ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= static_cast<double>(n);
  ym /= static_cast<double>(n);
  double sxx = 0, sxy = 0, sst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (y[i] - ym);
    sst += (y[i] - ym) * (y[i] - ym);
  }
  if (sxx == 0.0) return std::nullopt;
  const double slope = sxy / sxx;
  const double level = std::max(1.0, std::abs(ym));
  if (sst <= static_cast<double>(n) * (1e-12 * level) * (1e-12 * level)) {
    return TrendStat{slope, 0.0};
  }
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - ym - slope * (x[i] - xm);
    sse += e * e;
  }
  if (sse <= 1e-28 * sst) {
    return TrendStat{slope, slope > 0 ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity()};
  }
  const double se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  return TrendStat{slope, slope / se};
}

struct ProgressTrigger {
  std::string metric; ///< "max_eig_norm" or "normalized_ctrb_rank"
  std::string reading; ///< "stability" or "controllability"
  int sign = 0;        ///< direction of the trend, -1 or +1
  double t_statistic = 0;

  friend bool operator==(const ProgressTrigger&, const ProgressTrigger&) = default;
};

struct HiddenProgressFlag {
  std::size_t first_index = 0; ///< position in RunSummary::checkpoints
  std::size_t last_index = 0;
  std::int64_t first_checkpoint = 0;
  std::int64_t last_checkpoint = 0;
  double reward_change = 0; ///< fitted reward slope times the window span
  std::vector<ProgressTrigger> triggers;

  friend bool operator==(const HiddenProgressFlag&, const HiddenProgressFlag&) = default;
};

inline std::vector<HiddenProgressFlag> detect_hidden_progress(const RunSummary& summary,
                                                              const HPConfig& hp) {
  hp.validate();
  const auto& cps = summary.checkpoints;
  if (cps.size() < hp.window) {
    throw validation_error("detect_hidden_progress: " + std::to_string(cps.size()) +
                           " checkpoints, window needs " + std::to_string(hp.window));
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& c : cps) {
    if (!c.median_reward) continue;
    lo = std::min(lo, c.median_reward->mean);
    hi = std::max(hi, c.median_reward->mean);
  }
  const double reward_scale = std::isfinite(lo) ? std::max(hi - lo, 1.0) : 1.0;

  std::vector<HiddenProgressFlag> flags;
  for (std::size_t s = 0; s + hp.window <= cps.size(); ++s) {
    const std::size_t e = s + hp.window - 1;
    std::vector<double> cx, cy;
    bool complete = true;
    for (std::size_t i = s; i <= e; ++i) {
      if (!cps[i].median_reward) {
        complete = false;
        break;
      }
      cx.push_back(static_cast<double>(cps[i].checkpoint));
      cy.push_back(cps[i].median_reward->mean);
    }
    if (!complete) continue;
    // Reward flatness only needs the slope, which two points already define.
    double xm = 0, ym = 0;
    for (std::size_t i = 0; i < cx.size(); ++i) {
      xm += cx[i];
      ym += cy[i];
    }
    xm /= static_cast<double>(cx.size());
    ym /= static_cast<double>(cy.size());
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < cx.size(); ++i) {
      sxx += (cx[i] - xm) * (cx[i] - xm);
      sxy += (cx[i] - xm) * (cy[i] - ym);
    }
    const double span = cx.back() - cx.front();
    const double change = sxx > 0 ? sxy / sxx * span : 0.0;
    if (!(std::abs(change) < hp.reward_flat_frac * reward_scale)) continue;

    std::vector<double> x, eig, ctrb;
    for (const auto& r : summary.records) {
      if (!r.passed_gate || r.checkpoint < cps[s].checkpoint || r.checkpoint > cps[e].checkpoint) continue;
      x.push_back(static_cast<double>(r.checkpoint));
      eig.push_back(r.max_eig_norm);
      ctrb.push_back(r.normalized_ctrb_rank);
    }
    HiddenProgressFlag flag{s, e, cps[s].checkpoint, cps[e].checkpoint, change, {}};
    if (auto t = slope_t_statistic(x, eig); t && t->t < -hp.trend_t_threshold) {
      flag.triggers.push_back({"max_eig_norm", "stability", -1, t->t});
    }
    if (auto t = slope_t_statistic(x, ctrb); t && t->t > hp.trend_t_threshold) {
      flag.triggers.push_back({"normalized_ctrb_rank", "controllability", +1, t->t});
    }
    if (!flag.triggers.empty()) flags.push_back(std::move(flag));
  }
  return flags;
}

} // namespace koopctl
