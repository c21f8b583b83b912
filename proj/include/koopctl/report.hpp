#pragma once

// Report emission (csv and jsonl) with a reproducibility header: tool version,
// resolved configuration and SHA-256 digests of every input file.

#include <array>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "koopctl/error.hpp"
#include "koopctl/numfmt.hpp"
#include "koopctl/pipeline.hpp"

namespace koopctl {

inline constexpr std::string_view tool_version = "koopctl 1.0.0";
inline constexpr std::string_view report_format_tag = "koopctl-report-v1";

enum class ReportFormat { csv, jsonl };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "jsonl") return ReportFormat::jsonl;
  throw validation_error("unknown report format '" + std::string(s) + "' (expected csv or jsonl)");
}

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw io_error("SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error("read error on '" + path + "'");
  return data;
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.close();
  if (!out) throw io_error("write error on '" + path + "'");
}

struct InputDigest {
  std::string path;
  std::string sha256;
};

struct Provenance {
  std::string version{tool_version};
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<InputDigest> inputs;

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool_version"] = version;
    j["config"] = config;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& in : inputs) {
      arr.push_back({{"path", in.path}, {"sha256", in.sha256}});
    }
    j["inputs"] = arr;
    return j;
  }
};

/// Configuration keys match the long option names of the command line, so a
/// report's config object can be fed back through --config.
inline nlohmann::ordered_json analysis_config_json(const AnalysisConfig& c) {
  nlohmann::ordered_json j;
  j["n-delay"] = c.embed.n_delay;
  j["standardize"] = c.embed.standardize;
  j["svd-rank"] = c.rank_rule.to_string();
  j["ctrb-rel-tol"] = c.ctrb_rel_tol;
  j["mse-gate"] = c.mse_gate;
  j["hp-window"] = c.hidden_progress.window;
  j["hp-reward-flat-frac"] = c.hidden_progress.reward_flat_frac;
  j["hp-trend-t"] = c.hidden_progress.trend_t_threshold;
  return j;
}

namespace detail {

inline nlohmann::ordered_json optional_number(const std::optional<Aggregate>& a, bool se) {
  if (!a) return nullptr;
  return se ? a->se : a->mean;
}

inline void csv_optional(std::string& out, const std::optional<Aggregate>& a) {
  if (a) {
    append_double(out, a->mean);
    out += ',';
    append_double(out, a->se);
  } else {
    out += ',';
  }
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  q += '"';
  return q;
}

inline std::string triggers_text(const HiddenProgressFlag& f) {
  std::string s;
  for (std::size_t i = 0; i < f.triggers.size(); ++i) {
    if (i) s += ';';
    s += f.triggers[i].metric;
    s += f.triggers[i].sign < 0 ? "(-)" : "(+)";
  }
  return s;
}

inline nlohmann::ordered_json t_json(double t) {
  if (std::isfinite(t)) return t;
  return t > 0 ? "inf" : "-inf";
}

} // namespace detail

inline constexpr std::string_view csv_record_columns =
    "checkpoint,seed,median_reward,max_eig_norm,normalized_ctrb_rank,reduced_rank_r,"
    "mse_one_step,passed_gate,trial_count";
inline constexpr std::string_view csv_summary_columns =
    "checkpoint,seed_count,gate_failures,median_reward_mean,median_reward_se,max_eig_norm_mean,"
    "max_eig_norm_se,normalized_ctrb_rank_mean,normalized_ctrb_rank_se,reduced_rank_varies";
inline constexpr std::string_view csv_flag_columns =
    "first_checkpoint,last_checkpoint,reward_change,triggers";

/// csv layout: '#' comment lines with the provenance, the record table, then a
/// "# summary" table and, when flags exist, a "# hidden_progress" table.
/// Sections are separated by blank lines.
/// jsonl layout: a header object, then one object per record, checkpoint
/// summary and flag, each tagged by "type".
inline std::string emit_report(const RunSummary& summary, const std::vector<HiddenProgressFlag>& flags,
                               const Provenance& prov, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::jsonl) {
    nlohmann::ordered_json head;
    head["format"] = report_format_tag;
    const auto prov_json = prov.to_json();
    for (auto& [k, v] : prov_json.items()) head[k] = v;
    out += head.dump() + '\n';
    for (const auto& r : summary.records) {
      nlohmann::ordered_json j;
      j["type"] = "record";
      j["checkpoint"] = r.checkpoint;
      j["seed"] = r.seed;
      j["median_reward"] = r.median_reward;
      j["max_eig_norm"] = r.max_eig_norm;
      j["normalized_ctrb_rank"] = r.normalized_ctrb_rank;
      j["reduced_rank_r"] = r.reduced_rank_r;
      j["mse_one_step"] = r.mse_one_step;
      j["passed_gate"] = r.passed_gate;
      j["trial_count"] = r.trial_count;
      out += j.dump() + '\n';
    }
    for (const auto& c : summary.checkpoints) {
      nlohmann::ordered_json j;
      j["type"] = "summary";
      j["checkpoint"] = c.checkpoint;
      j["seed_count"] = c.seed_count;
      j["gate_failures"] = c.gate_failures;
      j["median_reward_mean"] = detail::optional_number(c.median_reward, false);
      j["median_reward_se"] = detail::optional_number(c.median_reward, true);
      j["max_eig_norm_mean"] = detail::optional_number(c.max_eig_norm, false);
      j["max_eig_norm_se"] = detail::optional_number(c.max_eig_norm, true);
      j["normalized_ctrb_rank_mean"] = detail::optional_number(c.normalized_ctrb_rank, false);
      j["normalized_ctrb_rank_se"] = detail::optional_number(c.normalized_ctrb_rank, true);
      j["reduced_rank_varies"] = c.reduced_rank_varies;
      out += j.dump() + '\n';
    }
    for (const auto& f : flags) {
      nlohmann::ordered_json j;
      j["type"] = "hidden_progress";
      j["first_checkpoint"] = f.first_checkpoint;
      j["last_checkpoint"] = f.last_checkpoint;
      j["reward_change"] = f.reward_change;
      auto trig = nlohmann::ordered_json::array();
      for (const auto& t : f.triggers) {
        trig.push_back({{"metric", t.metric},
                        {"reading", t.reading},
                        {"sign", t.sign},
                        {"t_statistic", detail::t_json(t.t_statistic)}});
      }
      j["triggers"] = trig;
      out += j.dump() + '\n';
    }
    return out;
  }

  out += "# format: ";
  out += report_format_tag;
  out += "\n# tool_version: " + prov.version;
  out += "\n# config: " + prov.config.dump();
  for (const auto& in : prov.inputs) {
    out += "\n# input: " + in.sha256 + "  " + in.path;
  }
  out += '\n';
  out += csv_record_columns;
  out += '\n';
  for (const auto& r : summary.records) {
    out += std::to_string(r.checkpoint) + ',' + std::to_string(r.seed) + ',';
    append_double(out, r.median_reward);
    out += ',';
    append_double(out, r.max_eig_norm);
    out += ',';
    append_double(out, r.normalized_ctrb_rank);
    out += ',' + std::to_string(r.reduced_rank_r) + ',';
    append_double(out, r.mse_one_step);
    out += r.passed_gate ? ",true," : ",false,";
    out += std::to_string(r.trial_count) + '\n';
  }
  out += "\n# summary\n";
  out += csv_summary_columns;
  out += '\n';
  for (const auto& c : summary.checkpoints) {
    out += std::to_string(c.checkpoint) + ',' + std::to_string(c.seed_count) + ',' +
           std::to_string(c.gate_failures) + ',';
    detail::csv_optional(out, c.median_reward);
    out += ',';
    detail::csv_optional(out, c.max_eig_norm);
    out += ',';
    detail::csv_optional(out, c.normalized_ctrb_rank);
    out += c.reduced_rank_varies ? ",true\n" : ",false\n";
  }
  if (flags.empty()) return out;
  out += "\n# hidden_progress\n";
  out += csv_flag_columns;
  out += '\n';
  for (const auto& f : flags) {
    out += std::to_string(f.first_checkpoint) + ',' + std::to_string(f.last_checkpoint) + ',';
    append_double(out, f.reward_change);
    out += ',' + detail::csv_field(detail::triggers_text(f)) + '\n';
  }
  return out;
}

} // namespace koopctl
