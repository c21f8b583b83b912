#pragma once

// Fitted-model files ("koopctl-model-v1"): one JSON document holding the
// reduced operators, the basis and whatever is needed to lift new data the
// same way (delay count and scaling).

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "koopctl/dmdc.hpp"
#include "koopctl/error.hpp"
#include "koopctl/report.hpp"
#include "koopctl/trajmodel.hpp"

namespace koopctl {

inline constexpr std::string_view model_format_tag = "koopctl-model-v1";

struct ModelFile {
  KoopmanControlModel model;
  std::string env_name;
  std::size_t n_delay = 1;
  std::optional<ScalingParams> scaling;
};

namespace detail {

inline nlohmann::ordered_json matrix_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::ordered_json vector_json(const Eigen::VectorXd& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Eigen::MatrixXd matrix_from(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                                   const char* what) {
  if (!j.is_array() || j.size() != rows) {
    throw validation_error(std::string("model file: ") + what + " must have " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& row = j[i];
    if (!row.is_array() || row.size() != cols) {
      throw validation_error(std::string("model file: ") + what + " row " + std::to_string(i) +
                             " must have " + std::to_string(cols) + " entries");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!row[k].is_number()) throw validation_error(std::string("model file: non-numeric entry in ") + what);
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k].get<double>();
    }
  }
  return m;
}

inline Eigen::VectorXd vector_from(const nlohmann::json& j, std::size_t n, const char* what) {
  return matrix_from(nlohmann::json::array({j}), 1, n, what).row(0).transpose();
}

} // namespace detail

inline std::string serialize_model(const ModelFile& mf, const Provenance& prov) {
  const auto& m = mf.model;
  nlohmann::ordered_json j;
  j["format"] = model_format_tag;
  const auto prov_json = prov.to_json();
  for (auto& [k, v] : prov_json.items()) j[k] = v;
  j["env"] = mf.env_name;
  j["state_dim"] = m.state_dim;
  j["n_delay"] = mf.n_delay;
  j["n"] = m.n;
  j["q"] = m.q;
  j["r"] = m.r;
  j["p"] = m.p;
  if (mf.scaling) {
    j["scaling"] = {{"mean", detail::vector_json(mf.scaling->mean)},
                    {"scale", detail::vector_json(mf.scaling->scale)}};
  } else {
    j["scaling"] = nullptr;
  }
  j["singular_values_omega"] = m.singular_values_omega;
  j["singular_values_output"] = m.singular_values_output;
  j["A_reduced"] = detail::matrix_json(m.A_reduced);
  j["B_reduced"] = detail::matrix_json(m.B_reduced);
  j["basis"] = detail::matrix_json(m.basis);
  return j.dump() + '\n';
}

inline ModelFile parse_model(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string{}) != model_format_tag) {
      throw validation_error("model file: format tag is not koopctl-model-v1");
    }
    ModelFile mf;
    auto& m = mf.model;
    mf.env_name = j.at("env").get<std::string>();
    m.state_dim = j.at("state_dim").get<std::size_t>();
    mf.n_delay = j.at("n_delay").get<std::size_t>();
    m.n = j.at("n").get<std::size_t>();
    m.q = j.at("q").get<std::size_t>();
    m.r = j.at("r").get<std::size_t>();
    m.p = j.at("p").get<std::size_t>();
    if (m.n != m.state_dim * mf.n_delay || m.r < 1 || m.r > m.n || m.q < 1) {
      throw validation_error("model file: inconsistent dimensions");
    }
    if (!j.at("scaling").is_null()) {
      mf.scaling = ScalingParams{detail::vector_from(j["scaling"].at("mean"), m.state_dim, "scaling mean"),
                                 detail::vector_from(j["scaling"].at("scale"), m.state_dim, "scaling scale")};
    }
    m.singular_values_omega = j.at("singular_values_omega").get<std::vector<double>>();
    m.singular_values_output = j.at("singular_values_output").get<std::vector<double>>();
    m.A_reduced = detail::matrix_from(j.at("A_reduced"), m.r, m.r, "A_reduced");
    m.B_reduced = detail::matrix_from(j.at("B_reduced"), m.r, m.q, "B_reduced");
    m.basis = detail::matrix_from(j.at("basis"), m.n, m.r, "basis");
    return mf;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("model file: ") + e.what());
  }
}

} // namespace koopctl
