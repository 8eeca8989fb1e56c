#pragma once

#include "pwass/common.hpp"
#include "pwass/model.hpp"
#include "pwass/pwa.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace pwass {

using Json = nlohmann::json;

/// A reported quantity that is an affine function of one flat parameter,
/// e.g. a continuous-time coefficient recovered from a discrete-time entry.
struct ReportTerm {
  std::string name;
  std::string param;
  double offset = 0.0;
};

struct LoadedModel {
  PwassModel model;
  std::vector<ReportTerm> report_terms;
};

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open " + path);
  try {
    Json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    throw StructuralError(path + ": " + e.what());
  }
}

inline Vec json_vec(const Json& j, const std::string& name) {
  if (!j.is_array())
    throw StructuralError(name + " must be an array of numbers");
  Vec v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) {
    if (!j[i].is_number())
      throw StructuralError(name + " must be an array of numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

/// Row-major nested arrays. cols_if_empty sizes a zero-row matrix, whose
/// column count cannot be inferred from the data.
inline Mat json_mat(const Json& j, const std::string& name,
                    int cols_if_empty = 0) {
  if (!j.is_array())
    throw StructuralError(name + " must be an array of row arrays");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Mat(0, cols_if_empty);
  const Vec first = json_vec(j[0], name);
  Mat m(rows, first.size());
  m.row(0) = first;
  for (int r = 1; r < rows; ++r) {
    const Vec row = json_vec(j[r], name);
    if (row.size() != m.cols())
      throw StructuralError(name + " rows have inconsistent lengths");
    m.row(r) = row;
  }
  return m;
}

/// Covariance entry: either an explicit matrix of row arrays or the
/// shorthand {"diag": [...], "values_are": "stddev"|"variance"} (stddev is
/// the default reading).
inline Mat json_cov(const Json& j, const std::string& name) {
  if (j.is_array()) return json_mat(j, name);
  if (j.is_object() && j.contains("diag")) {
    Vec d = json_vec(j.at("diag"), name + ".diag");
    const std::string reading = j.value("values_are", "stddev");
    if (reading == "stddev")
      d = d.cwiseProduct(d);
    else if (reading != "variance")
      throw StructuralError(name +
                            ".values_are must be 'stddev' or 'variance'");
    return Mat(d.asDiagonal());
  }
  throw StructuralError(name + " must be a matrix or a {diag, values_are} "
                        "object");
}

inline LoadedModel parse_model(const Json& j) {
  LoadedModel out;
  PwassModel& m = out.model;
  m.phi_row = json_vec(j.at("phi_row"), "phi_row");
  const int nx = static_cast<int>(m.phi_row.size());
  m.phi_sub = json_vec(j.at("phi_sub"), "phi_sub");
  m.f_block = j.contains("f_block")
                  ? json_mat(j.at("f_block"), "f_block", nx)
                  : Mat(std::max(nx - 2, 0), nx).setZero();
  m.input_matrix = json_mat(j.at("input_matrix"), "input_matrix");
  m.meas_matrix = json_mat(j.at("meas_matrix"), "meas_matrix");
  m.process_cov = json_cov(j.at("process_noise"), "process_noise");
  m.meas_cov = json_cov(j.at("meas_noise"), "meas_noise");
  const Json& prior = j.at("prior");
  m.prior_mean = json_vec(prior.at("mean"), "prior.mean");
  m.prior_cov = json_cov(prior.at("cov"), "prior.cov");
  const Vec boundaries = json_vec(j.at("boundaries"), "boundaries");
  const Json& pwa = j.at("pwa");
  if (pwa.contains("knots")) {
    m.pwa = make_pwa_from_knots(boundaries,
                                json_vec(pwa.at("knots"), "pwa.knots"));
  } else if (pwa.contains("slopes") && pwa.contains("b1")) {
    m.pwa = make_continuous_pwa(boundaries,
                                json_vec(pwa.at("slopes"), "pwa.slopes"),
                                pwa.at("b1").get<double>());
  } else if (pwa.contains("slopes") && pwa.contains("intercepts")) {
    m.pwa.boundaries = boundaries;
    m.pwa.slopes = json_vec(pwa.at("slopes"), "pwa.slopes");
    m.pwa.intercepts = json_vec(pwa.at("intercepts"), "pwa.intercepts");
    m.pwa.validate();
  } else {
    throw StructuralError(
        "pwa must provide knots, or slopes with b1 or intercepts");
  }
  m.eta_meas_index = j.value("eta_meas_index", 0);
  m.eta_meas_scale = j.value("eta_meas_scale", 1.0);
  m.validate();

  for (const Json& t : j.value("report_terms", Json::array())) {
    ReportTerm term;
    term.name = t.at("name").get<std::string>();
    term.param = t.at("param").get<std::string>();
    term.offset = t.value("offset", 0.0);
    out.report_terms.push_back(std::move(term));
  }
  return out;
}

inline LoadedModel load_model(const std::string& path) {
  const Json j = load_json_file(path);
  try {
    return parse_model(j);
  } catch (const std::exception& e) {
    throw StructuralError(path + ": " + e.what());
  }
}

}  // namespace pwass
