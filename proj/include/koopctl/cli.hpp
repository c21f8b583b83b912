#pragma once

// The koopctl command line: rollout, fit and analyze. run_cli returns the
// process exit code (0 ok, 2 usage or validation, 3 I/O, 4 numerical).

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <istream>
#include <iterator>
#include <map>
#include <memory>
#include <sstream>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "koopctl/dmdc.hpp"
#include "koopctl/embed.hpp"
#include "koopctl/envsim.hpp"
#include "koopctl/error.hpp"
#include "koopctl/model_io.hpp"
#include "koopctl/numfmt.hpp"
#include "koopctl/pipeline.hpp"
#include "koopctl/plot.hpp"
#include "koopctl/policy.hpp"
#include "koopctl/report.hpp"
#include "koopctl/rollout.hpp"
#include "koopctl/specmetrics.hpp"
#include "koopctl/trajmodel.hpp"

namespace koopctl::cli {

/// Parses option values for --config: a bare JSON object keyed by long option
/// names, any object carrying such a map under "config" (the header line of a
/// jsonl report, a model file), or the "# config:" line of a csv report.
class JsonConfig : public CLI::Config {
public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    const std::string text((std::istreambuf_iterator<char>(input)), std::istreambuf_iterator<char>());
    nlohmann::json j;
    try {
      // Only the first line matters for jsonl reports; csv reports keep the
      // object on a "# config:" comment line.
      std::string body = text.substr(0, text.find('\n'));
      if (nlohmann::json::accept(text)) {
        body = text;
      } else if (const auto at = ("\n" + text).find("\n# config: "); at != std::string::npos) {
        const auto start = at + std::string_view("# config: ").size();
        body = "{\"config\":" + text.substr(start, text.find('\n', start) - start) + "}";
      }
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw validation_error(std::string("--config: not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw validation_error("--config: expected a JSON object");
    const nlohmann::json& obj = j.contains("config") && j["config"].is_object() ? j["config"] : j;
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : obj.items()) {
      if (key == "command" || value.is_null()) continue;
      CLI::ConfigItem item;
      item.name = key;
      auto text_of = [](const nlohmann::json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw validation_error("--config: unsupported value " + v.dump());
      };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(text_of(v));
      } else {
        item.inputs.push_back(text_of(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }
};

namespace detail {

// CLI11 only reads config files attached to the top-level app, so each
// subcommand takes --config as a plain option and the values are merged here
// after parsing. Options given on the command line win; unknown keys are
// skipped so that a fit can replay an analyze header.
inline void apply_config(CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  std::istringstream in(read_file(path));
  for (const auto& item : JsonConfig{}.from_config(in)) {
    CLI::Option* opt = sub.get_option_no_throw("--" + item.name);
    if (opt == nullptr || opt->count() > 0 || item.name == "config") continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

inline void require_options(const CLI::App& sub, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    if (sub.get_option(name)->count() == 0) {
      throw validation_error(std::string(name) + " is required (on the command line or via --config)");
    }
  }
}

inline int exit_code(const error& e) {
  switch (e.kind()) {
    case error_kind::validation: return 2;
    case error_kind::io: return 3;
    case error_kind::numerical: return 4;
  }
  return 2;
}

inline double lower_median_reward(const TrajectorySet& set) {
  std::vector<double> r;
  for (const auto& t : set.trajectories()) r.push_back(t.total_reward());
  return lower_median(std::move(r));
}

inline envsim::Policy make_policy(const std::string& name, envsim::EnvKind env, double epsilon) {
  using namespace envsim;
  auto kind = [&]() -> Policy::Kind {
    if (name == "random") return RandomPolicy{};
    if (name == "pd") return CartPolePD{};
    if (name == "pump") return AcrobotEnergyPump{};
    if (name == "noop") return LanderNoop{};
    if (name == "hover") return LanderHover{};
    if (name == "descent") return LanderDescentPD{};
    throw validation_error("unknown policy '" + name + "' (random, pd, pump, noop, hover, descent)");
  }();
  Policy p(kind, epsilon);
  if (!p.supports(env)) {
    throw validation_error("policy '" + name + "' does not apply to env '" + to_string(env) + "'");
  }
  return p;
}

inline std::size_t default_max_steps(envsim::EnvKind env) {
  switch (env) {
    case envsim::EnvKind::cartpole: return 200;
    case envsim::EnvKind::acrobot: return 500;
    default: return 1000;
  }
}

struct FitOptions {
  std::size_t n_delay = 1;
  std::string svd_rank = "0.99";
  bool standardize = false;
  double ctrb_rel_tol = default_ctrb_rel_tol;
  double mse_gate = default_mse_gate;

  void add_to(CLI::App& app) {
    app.add_option("--n-delay", n_delay, "number of stacked states per lifted vector")
        ->capture_default_str();
    app.add_option("--svd-rank", svd_rank, "energy fraction in (0,1), integer rank, or 'full'")
        ->capture_default_str();
    app.add_flag("--standardize", standardize, "z-score each state coordinate before embedding");
    app.add_option("--ctrb-rel-tol", ctrb_rel_tol, "relative singular-value cutoff for the Kalman rank")
        ->capture_default_str();
    app.add_option("--mse-gate", mse_gate, "reconstruction error gate")->capture_default_str();
  }

  [[nodiscard]] AnalysisConfig analysis() const {
    AnalysisConfig c;
    c.embed = {n_delay, standardize};
    c.rank_rule = RankRule::parse(svd_rank);
    c.ctrb_rel_tol = ctrb_rel_tol;
    c.mse_gate = mse_gate;
    return c;
  }
};

inline void print_metric(std::ostream& out, const char* key, double v) {
  out << key << ": " << format_double(v) << '\n';
}

// ---------------------------------------------------------------------------

struct RolloutArgs {
  std::string env, policy, out;
  std::size_t trials = 100;
  std::size_t max_steps = 0;
  std::vector<std::int64_t> seeds{0};
  std::int64_t checkpoint = 0;
  double epsilon = 0;
};

inline int cmd_rollout(const RolloutArgs& a, std::ostream& out) {
  if (a.trials < 1) throw validation_error("--trials must be >= 1");
  const auto env = envsim::parse_env(a.env);
  const auto policy = make_policy(a.policy, env, a.epsilon);
  const std::size_t max_steps = a.max_steps ? a.max_steps : default_max_steps(env);
  for (auto s : a.seeds) {
    if (s < 0) throw validation_error("--seed values must be non-negative");
  }

  nlohmann::ordered_json cfg;
  cfg["command"] = "rollout";
  cfg["env"] = a.env;
  cfg["policy"] = a.policy;
  cfg["epsilon"] = a.epsilon;
  cfg["trials"] = a.trials;
  cfg["max-steps"] = max_steps;
  cfg["seed"] = a.seeds;
  cfg["checkpoint"] = a.checkpoint;
  Provenance prov;
  prov.config = cfg;

  std::vector<Trajectory> all;
  for (auto s : a.seeds) {
    auto set = envsim::sample_checkpoint(env, policy, a.checkpoint, s, a.trials, max_steps);
    all.insert(all.end(), set.trajectories().begin(), set.trajectories().end());
  }
  TrajectorySet set(envsim::env_spec(env), std::move(all), prov.to_json().dump());
  write_file(a.out, serialize_trajectory_file(set));
  out << "trials: " << set.size() << '\n';
  print_metric(out, "median_reward", lower_median_reward(set));
  return 0;
}

struct FitArgs {
  std::string in, model_out;
  FitOptions fit;
};

inline int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const AnalysisConfig cfg = a.fit.analysis();
  cfg.validate();
  const std::string text = read_file(a.in);
  TrajectorySet set = [&] {
    try {
      return parse_trajectory_file(text);
    } catch (const validation_error& e) {
      throw validation_error(a.in + ": " + e.what());
    }
  }();
  const SnapshotMatrices snap = build_snapshots(set, cfg.embed);
  const KoopmanControlModel model = fit_dmdc(snap, cfg.rank_rule);
  const FitDiagnostics diag = reconstruction_mse(model, snap, cfg.mse_gate);
  const SpectrumReport spec = spectrum(model);
  const ControllabilityReport ctrb = normalized_ctrb_rank(model, cfg.ctrb_rel_tol);

  out << "env: " << set.env().name() << '\n';
  out << "trials: " << set.size() << '\n';
  out << "snapshots: " << snap.m() << '\n';
  out << "r: " << model.r << '\n';
  out << "p: " << model.p << '\n';
  print_metric(out, "max_eig_norm", spec.max_eig_norm);
  print_metric(out, "normalized_ctrb_rank", ctrb.normalized_rank);
  print_metric(out, "mse_one_step", diag.mse_one_step);
  out << "gate: " << (diag.passed_gate ? "passed" : "failed") << '\n';
  if (!diag.passed_gate) {
    err << "warning: mse_one_step " << format_double(diag.mse_one_step) << " is not below the gate "
        << format_double(cfg.mse_gate) << "; metrics may not describe the data\n";
  }
  if (!a.model_out.empty()) {
    Provenance prov;
    prov.config = analysis_config_json(cfg);
    prov.config.erase("hp-window");
    prov.config.erase("hp-reward-flat-frac");
    prov.config.erase("hp-trend-t");
    prov.inputs.push_back({a.in, sha256_hex(text)});
    ModelFile mf{model, set.env().name(), cfg.embed.n_delay, snap.scaling};
    write_file(a.model_out, serialize_model(mf, prov));
  }
  return 0;
}

struct AnalyzeArgs {
  std::vector<std::string> inputs;
  std::string report, format, plots_prefix;
  bool no_plots = false;
  std::size_t jobs = 1;
  FitOptions fit;
  HPConfig hp;
};

/// Runs `work(i)` for i in [0, n) on up to `jobs` threads. The exception from
/// the lowest failing index is rethrown, so errors do not depend on timing.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F work) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        work(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::string strip_extension(const std::string& path) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path;
  return path.substr(0, dot);
}

inline int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  AnalysisConfig cfg = a.fit.analysis();
  cfg.hidden_progress = a.hp;
  cfg.validate();
  if (a.jobs < 1) throw validation_error("--jobs must be >= 1");
  const ReportFormat format = a.format.empty()
                                  ? (a.report.ends_with(".jsonl") ? ReportFormat::jsonl : ReportFormat::csv)
                                  : parse_report_format(a.format);

  Provenance prov;
  prov.config = analysis_config_json(cfg);
  prov.config["format"] = format == ReportFormat::jsonl ? "jsonl" : "csv";

  std::optional<EnvSpec> env;
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<Trajectory>> groups;
  for (const auto& path : a.inputs) {
    const std::string text = read_file(path);
    prov.inputs.push_back({path, sha256_hex(text)});
    TrajectorySet set = [&] {
      try {
        return parse_trajectory_file(text);
      } catch (const validation_error& e) {
        throw validation_error(path + ": " + e.what());
      }
    }();
    if (!env) {
      env = set.env();
    } else if (!(set.env() == *env)) {
      throw validation_error(path + ": env header '" + set.env().name() + "' differs from '" + env->name() +
                             "' in earlier inputs");
    }
    for (const auto& t : set.trajectories()) groups[{t.checkpoint(), t.seed()}].push_back(t);
  }

  std::vector<TrajectorySet> sets;
  for (auto& [key, trajs] : groups) sets.emplace_back(*env, std::move(trajs));
  std::vector<MetricRecord> records(sets.size());
  parallel_for(sets.size(), a.jobs, [&](std::size_t i) { records[i] = analyze_checkpoint(sets[i], cfg); });

  const RunSummary summary = summarize_run(records);
  std::vector<HiddenProgressFlag> flags;
  const bool detect = summary.checkpoints.size() >= cfg.hidden_progress.window;
  if (detect) flags = detect_hidden_progress(summary, cfg.hidden_progress);

  std::vector<std::string> rendered;
  const bool plots = !a.no_plots && summary.checkpoints.size() >= 2;
  if (plots) {
    for (const auto& spec : plot_specs) rendered.push_back(render_plot_svg(summary, flags, spec, prov));
  }
  write_file(a.report, emit_report(summary, flags, prov, format));
  if (plots) {
    const std::string prefix = a.plots_prefix.empty() ? strip_extension(a.report) : a.plots_prefix;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
      write_file(prefix + plot_specs[i].file_suffix, rendered[i]);
    }
  } else if (!a.no_plots) {
    err << "warning: plots need at least 2 checkpoints; none written\n";
  }

  out << "records: " << summary.records.size() << '\n';
  for (const auto& c : summary.checkpoints) {
    out << "checkpoint " << c.checkpoint << ": seeds " << c.seed_count << ", gate failures "
        << c.gate_failures;
    if (c.median_reward) {
      out << ", reward " << format_double(c.median_reward->mean) << ", max_eig_norm "
          << format_double(c.max_eig_norm->mean) << ", ctrb " << format_double(c.normalized_ctrb_rank->mean);
    }
    out << '\n';
  }
  if (!detect) {
    out << "hidden progress: not evaluated (" << summary.checkpoints.size() << " checkpoints, window "
        << cfg.hidden_progress.window << ")\n";
  } else if (flags.empty()) {
    out << "hidden progress: none\n";
  }
  for (const auto& f : flags) {
    out << "hidden progress: checkpoints " << f.first_checkpoint << ".." << f.last_checkpoint << " via";
    for (const auto& t : f.triggers) {
      out << ' ' << t.metric << (t.sign < 0 ? " decreasing" : " increasing");
    }
    out << '\n';
  }
  return 0;
}

} // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Koopman/DMDc analysis of reinforcement-learning behaviour", "koopctl"};
  app.set_version_flag("--version", std::string(tool_version));
  app.require_subcommand(1);

  detail::RolloutArgs ra;
  auto* rollout = app.add_subcommand("rollout", "simulate a scripted policy and write trajectories");
  std::string rollout_config;
  rollout->add_option("--config", rollout_config, "JSON file with option values");
  rollout->add_option("--env", ra.env, "cartpole, acrobot or lander");
  rollout->add_option("--policy", ra.policy, "random, pd, pump, noop, hover or descent");
  rollout->add_option("--trials", ra.trials, "rollouts per seed")->capture_default_str();
  rollout->add_option("--max-steps", ra.max_steps, "step cap (0: 200/500/1000 by env)")->capture_default_str();
  rollout->add_option("--seed", ra.seeds, "run seed(s); repeat or comma-separate")->delimiter(',');
  rollout->add_option("--checkpoint", ra.checkpoint, "checkpoint tag")->capture_default_str();
  rollout->add_option("--epsilon", ra.epsilon, "probability of a uniformly random action")
      ->capture_default_str();
  rollout->add_option("--out", ra.out, "output trajectory file");

  detail::FitArgs fa;
  auto* fit = app.add_subcommand("fit", "fit one DMDc model to every trajectory in a file");
  std::string fit_config;
  fit->add_option("--config", fit_config, "JSON file with option values");
  fit->add_option("--in", fa.in, "trajectory file");
  fa.fit.add_to(*fit);
  fit->add_option("--model-out", fa.model_out, "write the fitted model as JSON");

  detail::AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "fit every (checkpoint, seed) pair and summarize the run");
  std::string analyze_config;
  analyze->add_option("--config", analyze_config, "JSON file with option values");
  analyze->add_option("--in", aa.inputs, "trajectory file(s)");
  aa.fit.add_to(*analyze);
  analyze->add_option("--hp-window", aa.hp.window, "checkpoints per hidden-progress window")
      ->capture_default_str();
  analyze->add_option("--hp-reward-flat-frac", aa.hp.reward_flat_frac,
                      "reward change below this fraction of the reward range counts as flat")
      ->capture_default_str();
  analyze->add_option("--hp-trend-t", aa.hp.trend_t_threshold, "slope t-statistic threshold")
      ->capture_default_str();
  analyze->add_option("--report", aa.report, "report path");
  analyze->add_option("--format", aa.format, "csv or jsonl (default: from the report extension)");
  analyze->add_option("--plots-prefix", aa.plots_prefix, "SVG path prefix (default: report path stem)");
  analyze->add_flag("--no-plots", aa.no_plots, "skip SVG output");
  analyze->add_option("--jobs", aa.jobs, "worker threads for checkpoint fits")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (rollout->parsed()) {
      detail::apply_config(*rollout, rollout_config);
      detail::require_options(*rollout, {"--env", "--policy", "--out"});
      return detail::cmd_rollout(ra, out);
    }
    if (fit->parsed()) {
      detail::apply_config(*fit, fit_config);
      detail::require_options(*fit, {"--in"});
      return detail::cmd_fit(fa, out, err);
    }
    detail::apply_config(*analyze, analyze_config);
    detail::require_options(*analyze, {"--in", "--report"});
    return detail::cmd_analyze(aa, out, err);
  } catch (const CLI::FileError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const error& e) {
    err << "error: " << e.what() << '\n';
    return detail::exit_code(e);
  }
}

} // namespace koopctl::cli
