#pragma once

// Training-curve charts as standalone SVG: mean line, shaded +/- SE band,
// checkpoint ticks and orange shading over hidden-progress windows.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "koopctl/error.hpp"
#include "koopctl/pipeline.hpp"
#include "koopctl/report.hpp"

namespace koopctl {

enum class PlotMetric { median_reward, max_eig_norm, normalized_ctrb_rank };

struct PlotSpec {
  PlotMetric metric;
  const char* file_suffix;
  const char* title;
  const char* y_label;
};

inline constexpr PlotSpec plot_specs[] = {
    {PlotMetric::median_reward, "_reward.svg", "Median reward", "median reward"},
    {PlotMetric::max_eig_norm, "_max_eig_norm.svg", "Maximum eigenvalue norm", "max |eigenvalue|"},
    {PlotMetric::normalized_ctrb_rank, "_ctrb_rank.svg", "Normalized controllability rank",
     "rank / r"},
};

namespace detail {

inline std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Comment bodies may not contain "--" nor end in '-'.
inline std::string comment_safe(std::string s) {
  for (std::size_t i = 0; (i = s.find("--", i)) != std::string::npos;) s.replace(i, 2, "- -");
  if (!s.empty() && s.back() == '-') s += ' ';
  return s;
}

inline const std::optional<Aggregate>& pick(const CheckpointSummary& c, PlotMetric m) {
  switch (m) {
    case PlotMetric::median_reward: return c.median_reward;
    case PlotMetric::max_eig_norm: return c.max_eig_norm;
    default: return c.normalized_ctrb_rank;
  }
}

inline double nice_step(double range, int target) {
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  const double nice = f <= 1 ? 1 : f <= 2 ? 2 : f <= 5 ? 5 : 10;
  return nice * mag;
}

inline std::string tick_label(double v, double step) {
  // Enough decimals to separate ticks, never more than the step needs.
  const int dec = std::clamp(static_cast<int>(-std::floor(std::log10(step))), 0, 8);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", dec, v);
  std::string s = buf;
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) s = "0";
  return s;
}

} // namespace detail

inline std::string render_plot_svg(const RunSummary& summary, const std::vector<HiddenProgressFlag>& flags,
                                   const PlotSpec& spec, const Provenance& prov) {
  const auto& cps = summary.checkpoints;
  if (cps.size() < 2) {
    throw validation_error("plots need at least 2 checkpoints, got " + std::to_string(cps.size()));
  }
  constexpr double W = 640, H = 400, L = 80, R = 20, T = 40, B = 60;
  const double x0 = static_cast<double>(cps.front().checkpoint);
  const double x1 = static_cast<double>(cps.back().checkpoint);
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };

  double lo = INFINITY, hi = -INFINITY;
  for (const auto& c : cps) {
    if (const auto& a = detail::pick(c, spec.metric)) {
      lo = std::min(lo, a->mean - a->se);
      hi = std::max(hi, a->mean + a->se);
    }
  }
  const bool has_data = std::isfinite(lo);
  if (!has_data) {
    lo = 0;
    hi = 1;
  }
  if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
    const double pad = std::max(0.5, 0.05 * std::abs(hi));
    lo -= pad;
    hi += pad;
  }
  const double ystep = detail::nice_step(hi - lo, 5);
  const double ylo = std::floor(lo / ystep) * ystep;
  const double yhi = std::ceil(hi / ystep) * ystep;
  auto py = [&](double y) { return H - B - (y - ylo) / (yhi - ylo) * (H - T - B); };
  using detail::fixed2;

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<!-- " + detail::comment_safe(prov.to_json().dump()) + " -->\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  s += "<title>" + detail::xml_escape(spec.title) + "</title>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";

  for (const auto& f : flags) {
    const double a = px(static_cast<double>(f.first_checkpoint));
    const double b = px(static_cast<double>(f.last_checkpoint));
    s += "<rect class=\"hidden-progress\" x=\"" + fixed2(a) + "\" y=\"" + fixed2(T) + "\" width=\"" +
         fixed2(b - a) + "\" height=\"" + fixed2(H - T - B) +
         "\" fill=\"orange\" fill-opacity=\"0.25\"/>\n";
  }

  // Axes and ticks.
  s += "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  s += "<line x1=\"" + fixed2(L) + "\" y1=\"" + fixed2(H - B) + "\" x2=\"" + fixed2(W - R) + "\" y2=\"" +
       fixed2(H - B) + "\"/>\n";
  s += "<line x1=\"" + fixed2(L) + "\" y1=\"" + fixed2(T) + "\" x2=\"" + fixed2(L) + "\" y2=\"" +
       fixed2(H - B) + "\"/>\n";
  s += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  const std::size_t every = (cps.size() + 11) / 12;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (i % every != 0 && i + 1 != cps.size()) continue;
    const double x = px(static_cast<double>(cps[i].checkpoint));
    s += "<line x1=\"" + fixed2(x) + "\" y1=\"" + fixed2(H - B) + "\" x2=\"" + fixed2(x) + "\" y2=\"" +
         fixed2(H - B + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fixed2(x) + "\" y=\"" + fixed2(H - B + 18) + "\" text-anchor=\"middle\">" +
         std::to_string(cps[i].checkpoint) + "</text>\n";
  }
  const long nticks = std::lround((yhi - ylo) / ystep);
  for (long k = 0; k <= nticks; ++k) {
    const double y = ylo + static_cast<double>(k) * ystep;
    s += "<line x1=\"" + fixed2(L - 5) + "\" y1=\"" + fixed2(py(y)) + "\" x2=\"" + fixed2(L) + "\" y2=\"" +
         fixed2(py(y)) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fixed2(L - 8) + "\" y=\"" + fixed2(py(y) + 4) + "\" text-anchor=\"end\">" +
         detail::tick_label(y, ystep) + "</text>\n";
  }
  s += "<text x=\"" + fixed2((L + W - R) / 2) + "\" y=\"" + fixed2(H - 15) +
       "\" text-anchor=\"middle\">checkpoint</text>\n";
  s += "<text x=\"20\" y=\"" + fixed2((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
       fixed2((T + H - B) / 2) + ")\">" + detail::xml_escape(spec.y_label) + "</text>\n";
  s += "<text x=\"" + fixed2((L + W - R) / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::xml_escape(spec.title) + "</text>\n";
  if (!has_data) {
    s += "<text x=\"" + fixed2((L + W - R) / 2) + "\" y=\"" + fixed2((T + H - B) / 2) +
         "\" text-anchor=\"middle\">no gate-passing fits</text>\n";
  }
  s += "</g>\n";

  // Band and line, split wherever a checkpoint has no passing fit.
  std::vector<std::vector<std::size_t>> runs(1);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (detail::pick(cps[i], spec.metric)) runs.back().push_back(i);
    else if (!runs.back().empty()) runs.emplace_back();
  }
  for (const auto& run : runs) {
    if (run.empty()) continue;
    std::string band, line;
    for (auto i : run) {
      const auto& a = *detail::pick(cps[i], spec.metric);
      const double x = px(static_cast<double>(cps[i].checkpoint));
      band += fixed2(x) + ',' + fixed2(py(a.mean + a.se)) + ' ';
      line += fixed2(x) + ',' + fixed2(py(a.mean)) + ' ';
    }
    for (auto it = run.rbegin(); it != run.rend(); ++it) {
      const auto& a = *detail::pick(cps[*it], spec.metric);
      band += fixed2(px(static_cast<double>(cps[*it].checkpoint))) + ',' + fixed2(py(a.mean - a.se)) + ' ';
    }
    band.pop_back();
    line.pop_back();
    s += "<polygon class=\"se-band\" points=\"" + band + "\" fill=\"steelblue\" fill-opacity=\"0.3\" stroke=\"none\"/>\n";
    s += "<polyline class=\"mean\" points=\"" + line + "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
    for (auto i : run) {
      const auto& a = *detail::pick(cps[i], spec.metric);
      s += "<circle cx=\"" + fixed2(px(static_cast<double>(cps[i].checkpoint))) + "\" cy=\"" +
           fixed2(py(a.mean)) + "\" r=\"3\" fill=\"steelblue\"/>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

/// Writes <prefix>_reward.svg, <prefix>_max_eig_norm.svg and <prefix>_ctrb_rank.svg.
inline std::vector<std::string> emit_plots(const RunSummary& summary,
                                           const std::vector<HiddenProgressFlag>& flags,
                                           const std::string& prefix, const Provenance& prov) {
  std::vector<std::string> rendered, paths;
  for (const auto& spec : plot_specs) {
    rendered.push_back(render_plot_svg(summary, flags, spec, prov));
    paths.push_back(prefix + spec.file_suffix);
  }
  for (std::size_t i = 0; i < paths.size(); ++i) write_file(paths[i], rendered[i]);
  return paths;
}

} // namespace koopctl
