#pragma once

#include "pwass/model_io.hpp"

#include <filesystem>
#include <fstream>
#include <string>

/// Scratch directories and small config fixtures shared by the
/// filesystem-facing tests.
namespace fixtures {

namespace fs = std::filesystem;

inline fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pwass_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

/// Stable two-region system, the JSON twin of the one the simulator tests
/// build in code.
inline pwass::Json base_model_json() {
  pwass::Json j;
  j["phi_row"] = {0.4, 0.5};
  j["phi_sub"] = {-0.3};
  j["input_matrix"] = {{1.0, 0.0}, {0.5, 1.0}};
  j["meas_matrix"] = {{1.0, 0.0}, {0.0, 1.0}};
  j["process_noise"] = {{"diag", {0.1, 0.1}}, {"values_are", "variance"}};
  j["meas_noise"] = {{"diag", {0.2, 0.2}}, {"values_are", "variance"}};
  j["prior"] = {
      {"mean", {0.2, -0.1}},
      {"cov", {{"diag", {0.1, 0.1}}, {"values_are", "variance"}}}};
  j["boundaries"] = {-10.0, 0.5, 10.0};
  j["pwa"] = {{"slopes", {0.2, -0.1}}, {"b1", 0.3}};
  return j;
}

/// A quick excitation experiment on that system: two realizations, two EM
/// iterations, reference switching across the region boundary.
inline pwass::Json base_experiment_json() {
  pwass::Json sim;
  sim["horizon"] = 120;
  sim["input"] = "excitation";
  sim["reference_injection"] = {1.0, 0.5};
  sim["targets"] = {-1.0, 1.5};
  sim["dwell_steps"] = 20;
  sim["dither"] = 0.3;
  pwass::Json j;
  j["model"] = "model.json";
  j["data"] = {{"source", "simulate"}, {"sim", sim}};
  j["em"] = {{"trajectories", 10},
             {"iterations", 2},
             {"mstep", "closed_form"},
             {"variant", "continuous"}};
  j["realizations"] = 2;
  j["perturbation"] = 0.2;
  j["seed"] = 321;
  return j;
}

}  // namespace fixtures
