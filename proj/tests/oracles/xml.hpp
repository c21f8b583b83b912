#pragma once

// Validation of generated SVG. Parsing uses Boost.PropertyTree's XML reader,
// which rejects mismatched tags, bad attributes and stray markup. On top of
// that, a structural check against the subset of the SVG 1.1 content model
// the plots use: known element names, numeric geometry attributes,
// non-negative sizes, point lists made of whole coordinate pairs, and text
// elements holding character data only.

#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

namespace oracle {

inline boost::property_tree::ptree parse_xml(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  boost::property_tree::read_xml(in, tree, boost::property_tree::xml_parser::no_comments);
  return tree;
}

namespace svg_detail {

using boost::property_tree::ptree;

inline bool is_number(const std::string& s, double* out = nullptr) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return false;
  if (out) *out = v;
  return true;
}

inline bool points_ok(const std::string& s) {
  std::string norm = s;
  for (char& c : norm)
    if (c == ',') c = ' ';
  std::istringstream in(norm);
  std::string tok;
  std::size_t count = 0;
  while (in >> tok) {
    if (!is_number(tok)) return false;
    ++count;
  }
  return count >= 2 && count % 2 == 0;
}

struct Rule {
  std::vector<std::string> numeric;      // must be finite numbers when present
  std::vector<std::string> non_negative; // subset of numeric that may not be negative
  std::vector<std::string> required;
  bool text_only = false;
};

inline const std::map<std::string, Rule>& rules() {
  static const std::map<std::string, Rule> r{
      {"svg", {{"width", "height"}, {"width", "height"}, {"xmlns"}, false}},
      {"g", {{}, {}, {}, false}},
      {"title", {{}, {}, {}, true}},
      {"desc", {{}, {}, {}, true}},
      {"rect", {{"x", "y", "width", "height"}, {"width", "height"}, {"width", "height"}, false}},
      {"circle", {{"cx", "cy", "r"}, {"r"}, {"cx", "cy", "r"}, false}},
      {"line", {{"x1", "y1", "x2", "y2"}, {}, {"x1", "y1", "x2", "y2"}, false}},
      {"polyline", {{}, {}, {"points"}, false}},
      {"polygon", {{}, {}, {"points"}, false}},
      {"text", {{"x", "y", "font-size"}, {"font-size"}, {}, true}},
  };
  return r;
}

inline bool check(const std::string& name, const ptree& node, std::string* why) {
  const auto& table = rules();
  const auto it = table.find(name);
  if (it == table.end()) {
    if (why) *why = "element <" + name + "> is not part of the accepted SVG subset";
    return false;
  }
  const Rule& rule = it->second;
  std::map<std::string, std::string> attrs;
  if (const auto a = node.get_child_optional("<xmlattr>")) {
    for (const auto& [k, v] : *a) attrs[k] = v.data();
  }
  for (const auto& req : rule.required) {
    if (!attrs.count(req)) {
      if (why) *why = "<" + name + "> lacks required attribute " + req;
      return false;
    }
  }
  for (const auto& key : rule.numeric) {
    const auto a = attrs.find(key);
    if (a == attrs.end()) continue;
    double v = 0;
    if (!is_number(a->second, &v)) {
      if (why) *why = "<" + name + "> attribute " + key + "='" + a->second + "' is not a number";
      return false;
    }
    for (const auto& nn : rule.non_negative) {
      if (nn == key && v < 0) {
        if (why) *why = "<" + name + "> attribute " + key + " is negative";
        return false;
      }
    }
  }
  if (attrs.count("points") && !points_ok(attrs["points"])) {
    if (why) *why = "<" + name + "> has a malformed point list";
    return false;
  }
  for (const auto& [child, sub] : node) {
    if (child == "<xmlattr>") continue;
    if (rule.text_only) {
      if (why) *why = "<" + name + "> may only hold character data";
      return false;
    }
    if (!check(child, sub, why)) return false;
  }
  return true;
}

} // namespace svg_detail

/// True when `text` is well-formed XML whose single root element is <svg> in
/// the SVG namespace and whose content satisfies the structural rules above.
inline bool is_well_formed_svg(const std::string& text, std::string* why = nullptr) {
  try {
    const auto tree = parse_xml(text);
    if (tree.size() != 1 || tree.begin()->first != "svg") {
      if (why) *why = "root element is not <svg>";
      return false;
    }
    if (tree.get<std::string>("svg.<xmlattr>.xmlns", "") != "http://www.w3.org/2000/svg") {
      if (why) *why = "missing SVG namespace";
      return false;
    }
    return svg_detail::check("svg", tree.begin()->second, why);
  } catch (const boost::property_tree::xml_parser_error& e) {
    if (why) *why = e.what();
    return false;
  }
}

} // namespace oracle
