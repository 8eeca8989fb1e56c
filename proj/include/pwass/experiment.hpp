#pragma once

#include "pwass/csv.hpp"
#include "pwass/em.hpp"
#include "pwass/model_io.hpp"
#include "pwass/parallel.hpp"
#include "pwass/rng.hpp"
#include "pwass/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pwass {

namespace fs = std::filesystem;

struct ExperimentConfig {
  std::string model_path;
  LoadedModel loaded;
  bool simulate_data = true;
  SimConfig sim;
  std::string trajectory_path;  // data source when not simulating
  EmConfig em;
  int num_realizations = 1;
  double perturbation = 0.4;
  std::uint64_t master_seed = 0;
  int workers = 1;
  std::string out_dir;
  Json resolved;  // fully materialized config, for manifests and hashing
};

/// Command-line values that take precedence over the config file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> realizations;
  std::optional<int> iterations;
  std::optional<int> trajectories;
  std::optional<int> workers;
  std::optional<std::string> out;
};

namespace detail {

inline Json json_from_vec(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json json_from_mat(const Mat& m) {
  Json a = Json::array();
  for (int r = 0; r < m.rows(); ++r) a.push_back(json_from_vec(m.row(r)));
  return a;
}

inline std::string resolve_path(const std::string& base_dir,
                                const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return p;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace detail

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

inline MStepMode parse_mstep_mode(const std::string& s) {
  if (s == "closed_form") return MStepMode::ClosedForm;
  if (s == "quasi_newton") return MStepMode::QuasiNewton;
  if (s == "both_crosscheck") return MStepMode::BothCrosscheck;
  throw StructuralError("unknown mstep mode '" + s + "'");
}

inline ThetaVariant parse_variant(const std::string& s) {
  if (s == "continuous") return ThetaVariant::Continuous;
  if (s == "unconstrained") return ThetaVariant::Unconstrained;
  throw StructuralError("unknown theta variant '" + s + "'");
}

inline InputSource parse_input_source(const std::string& s) {
  if (s == "file") return InputSource::File;
  if (s == "excitation") return InputSource::Excitation;
  if (s == "feedback") return InputSource::Feedback;
  throw StructuralError("unknown input source '" + s + "'");
}

/// Loads and materializes an experiment config. Relative paths inside the
/// file resolve against the file's directory; the output directory comes
/// from (in order) the --out override, the config's "out", default_out.
inline ExperimentConfig load_experiment(const std::string& config_path,
                                        const ConfigOverrides& ov,
                                        const std::string& default_out) {
  const Json j = load_json_file(config_path);
  const std::string dir = fs::path(config_path).parent_path().string();
  ExperimentConfig cfg;
  try {
    cfg.model_path =
        detail::resolve_path(dir, j.at("model").get<std::string>());
    cfg.loaded = load_model(cfg.model_path);
    const int nx = cfg.loaded.model.state_dim();
    const int nu = cfg.loaded.model.input_dim();

    const Json data = j.value("data", Json{{"source", "simulate"}});
    const std::string source = data.value("source", "simulate");
    if (source == "simulate") {
      cfg.simulate_data = true;
      const Json sim = data.value("sim", Json::object());
      cfg.sim.horizon = sim.value("horizon", 1800);
      cfg.sim.sample_time = sim.value("sample_time", 1.0 / 60.0);
      cfg.sim.input_source =
          parse_input_source(sim.value("input", "feedback"));
      if (sim.contains("feedback_gain"))
        cfg.sim.feedback_gain =
            json_mat(sim.at("feedback_gain"), "sim.feedback_gain");
      if (sim.contains("reference_injection"))
        cfg.sim.reference_injection =
            json_vec(sim.at("reference_injection"), "sim.reference_injection");
      if (sim.contains("targets"))
        cfg.sim.schedule_targets = json_vec(sim.at("targets"), "sim.targets");
      cfg.sim.dwell_steps = sim.value("dwell_steps", 100);
      cfg.sim.amplitude = sim.value("amplitude", 1.0);
      cfg.sim.dither = sim.value("dither", 0.0);
      if (sim.contains("inputs_file")) {
        const std::string p = detail::resolve_path(
            dir, sim.at("inputs_file").get<std::string>());
        const CsvTable t = read_csv(p);
        Mat u(nu, static_cast<int>(t.rows.size()));
        for (int c = 0; c < nu; ++c) {
          const int col = column_index(t, "u" + std::to_string(c + 1), p);
          for (std::size_t r = 0; r < t.rows.size(); ++r)
            u(c, static_cast<int>(r)) =
                parse_double(t.rows[r][col], p, static_cast<int>(r) + 2);
        }
        cfg.sim.inputs = std::move(u);
      }
      cfg.sim.validate(nx, nu);
    } else if (source == "load") {
      cfg.simulate_data = false;
      cfg.trajectory_path = detail::resolve_path(
          dir, data.at("trajectory").get<std::string>());
    } else {
      throw StructuralError("data.source must be 'simulate' or 'load'");
    }

    const Json em = j.value("em", Json::object());
    cfg.em.num_trajectories = em.value("trajectories", 300);
    cfg.em.num_iterations = em.value("iterations", 100);
    cfg.em.mstep_mode = parse_mstep_mode(em.value("mstep", "closed_form"));
    cfg.em.gradient_tol = em.value("gradient_tol", 1e-8);
    cfg.em.max_inner_iterations = em.value("max_inner_iterations", 200);
    cfg.em.variant = parse_variant(em.value("variant", "continuous"));
    cfg.em.freeze_samples = em.value("freeze_samples", false);
    cfg.em.record_timing = em.value("timing", false);
    cfg.em.validate();

    cfg.num_realizations = j.value("realizations", 1);
    cfg.perturbation = j.value("perturbation", 0.4);
    cfg.master_seed = j.value("seed", std::uint64_t{0});
    cfg.workers = j.value("workers", 1);
    std::string out = j.value("out", default_out);

    if (ov.seed) cfg.master_seed = *ov.seed;
    if (ov.realizations) cfg.num_realizations = *ov.realizations;
    if (ov.iterations) cfg.em.num_iterations = *ov.iterations;
    if (ov.trajectories) cfg.em.num_trajectories = *ov.trajectories;
    if (ov.workers) cfg.workers = *ov.workers;
    if (ov.out) out = *ov.out;
    cfg.out_dir = out;

    if (cfg.num_realizations < 1)
      throw StructuralError("realizations must be >= 1");
    if (cfg.perturbation < 0.0)
      throw StructuralError("perturbation must be >= 0");
    if (cfg.workers < 1) throw StructuralError("workers must be >= 1");
    cfg.em.seed = cfg.master_seed;
  } catch (const StructuralError&) {
    throw;
  } catch (const std::exception& e) {
    throw StructuralError(config_path + ": " + e.what());
  }

  Json r;
  r["model"] = cfg.model_path;
  if (cfg.simulate_data) {
    Json sim;
    sim["horizon"] = cfg.sim.horizon;
    sim["sample_time"] = cfg.sim.sample_time;
    sim["input"] = cfg.sim.input_source == InputSource::File ? "file"
                   : cfg.sim.input_source == InputSource::Excitation
                       ? "excitation"
                       : "feedback";
    sim["feedback_gain"] = detail::json_from_mat(cfg.sim.feedback_gain);
    sim["reference_injection"] =
        detail::json_from_vec(cfg.sim.reference_injection);
    sim["targets"] = detail::json_from_vec(cfg.sim.schedule_targets);
    sim["dwell_steps"] = cfg.sim.dwell_steps;
    sim["amplitude"] = cfg.sim.amplitude;
    sim["dither"] = cfg.sim.dither;
    r["data"] = Json{{"source", "simulate"}, {"sim", sim}};
  } else {
    r["data"] = Json{{"source", "load"}, {"trajectory", cfg.trajectory_path}};
  }
  Json em;
  em["trajectories"] = cfg.em.num_trajectories;
  em["iterations"] = cfg.em.num_iterations;
  em["mstep"] = cfg.em.mstep_mode == MStepMode::ClosedForm ? "closed_form"
                : cfg.em.mstep_mode == MStepMode::QuasiNewton
                    ? "quasi_newton"
                    : "both_crosscheck";
  em["gradient_tol"] = cfg.em.gradient_tol;
  em["max_inner_iterations"] = cfg.em.max_inner_iterations;
  em["variant"] = cfg.em.variant == ThetaVariant::Continuous
                      ? "continuous"
                      : "unconstrained";
  em["freeze_samples"] = cfg.em.freeze_samples;
  em["timing"] = cfg.em.record_timing;
  r["em"] = em;
  r["realizations"] = cfg.num_realizations;
  r["perturbation"] = cfg.perturbation;
  r["seed"] = cfg.master_seed;
  r["workers"] = cfg.workers;
  r["out"] = cfg.out_dir;
  cfg.resolved = std::move(r);
  return cfg;
}

namespace detail {

inline void write_manifest(const ExperimentConfig& cfg,
                           const std::string& command,
                           const std::vector<std::string>& outputs,
                           const Json& extra = Json::object()) {
  Json m;
  m["command"] = command;
  m["config"] = cfg.resolved;
  m["config_hash"] = fnv1a_hex(cfg.resolved.dump());
  m["master_seed"] = cfg.master_seed;
  m["outputs"] = outputs;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = *it;
  const std::string path =
      (fs::path(cfg.out_dir) / ("manifest_" + command + ".json")).string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericError("cannot open " + path + " for writing");
  out << m.dump(2) << '\n';
}

inline void write_trajectory_csv(const std::string& path,
                                 const Trajectory& traj) {
  const int T = static_cast<int>(traj.states.cols());
  CsvTable t;
  t.header.push_back("t");
  for (int i = 0; i < traj.states.rows(); ++i)
    t.header.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < traj.measurements.rows(); ++i)
    t.header.push_back("y" + std::to_string(i + 1));
  for (int i = 0; i < traj.inputs.rows(); ++i)
    t.header.push_back("u" + std::to_string(i + 1));
  t.header.push_back("regime");
  for (int k = 0; k < T; ++k) {
    std::vector<std::string> row;
    row.push_back(std::to_string(k + 1));
    for (int i = 0; i < traj.states.rows(); ++i)
      row.push_back(format_double(traj.states(i, k)));
    for (int i = 0; i < traj.measurements.rows(); ++i)
      row.push_back(format_double(traj.measurements(i, k)));
    for (int i = 0; i < traj.inputs.rows(); ++i)
      row.push_back(format_double(traj.inputs(i, k)));
    row.push_back(std::to_string(traj.true_regimes[k] + 1));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

/// Reads y*/u* columns of a trajectory CSV back into measurement and input
/// series.
inline std::pair<Mat, Mat> read_trajectory_csv(const std::string& path,
                                               int ny, int nu) {
  const CsvTable t = read_csv(path);
  const int T = static_cast<int>(t.rows.size());
  if (T < 2) throw StructuralError(path + ": need at least 2 data rows");
  Mat Y(ny, T), U(nu, T);
  for (int i = 0; i < ny; ++i) {
    const int col = column_index(t, "y" + std::to_string(i + 1), path);
    for (int k = 0; k < T; ++k)
      Y(i, k) = parse_double(t.rows[k][col], path, k + 2);
  }
  for (int i = 0; i < nu; ++i) {
    const int col = column_index(t, "u" + std::to_string(i + 1), path);
    for (int k = 0; k < T; ++k)
      U(i, k) = parse_double(t.rows[k][col], path, k + 2);
  }
  return {std::move(Y), std::move(U)};
}

inline void write_trace_csv(const std::string& path, const EmTrace& trace) {
  CsvTable t;
  t.header.push_back("iteration");
  for (const auto& n : trace.param_names) t.header.push_back(n);
  t.header.push_back("q");
  t.header.push_back("elapsed_seconds");
  for (std::size_t k = 0; k < trace.iterates.size(); ++k) {
    const EmIterate& it = trace.iterates[k];
    std::vector<std::string> row;
    row.push_back(std::to_string(k));
    for (int c = 0; c < it.theta_flat.size(); ++c)
      row.push_back(format_double(it.theta_flat[c]));
    row.push_back(format_double(it.q));
    row.push_back(format_double(it.elapsed_seconds));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

}  // namespace detail

/// Simulates one trajectory with the seed derived as child 0 of the master
/// seed and writes trajectory.csv plus a manifest. Returns the process
/// exit code.
inline int run_simulate(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  Rng rng(derive_seed(cfg.master_seed, 0));
  const Theta truth =
      Theta::from_model(cfg.loaded.model, ThetaVariant::Unconstrained);
  const Trajectory traj = simulate(cfg.loaded.model, truth, cfg.sim, rng);
  const std::string path =
      (fs::path(cfg.out_dir) / "trajectory.csv").string();
  detail::write_trajectory_csv(path, traj);
  detail::write_manifest(cfg, "simulate", {path});
  return 0;
}

/// Runs num_realizations independent identification runs. Realization k
/// derives its seed as child k+1 of the master seed and splits it into
/// simulation, initialization and EM streams, so every realization is
/// reproducible in isolation. Traces are written by the worker that owns
/// the realization; the summary is reduced in realization order afterward.
/// Returns 0, or 1 if any realization failed.
inline int run_identify(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const PwassModel& model = cfg.loaded.model;
  const Theta truth = Theta::from_model(model, cfg.em.variant);
  if (cfg.em.variant == ThetaVariant::Continuous) {
    const Vec derived = truth.intercepts_full(model.pwa.boundaries);
    if ((derived - model.pwa.intercepts).cwiseAbs().maxCoeff() > 1e-9)
      throw StructuralError(
          "model intercepts are not continuous; use the unconstrained "
          "variant");
  }

  Mat Y_shared, U_shared;
  if (!cfg.simulate_data) {
    auto yu = detail::read_trajectory_csv(cfg.trajectory_path,
                                          model.meas_dim(), model.input_dim());
    Y_shared = std::move(yu.first);
    U_shared = std::move(yu.second);
  }

  const int R = cfg.num_realizations;
  std::vector<EmTrace> traces(R);
  std::vector<std::string> errors(R);
  std::vector<std::string> outputs;

  EmConfig em = cfg.em;
  em.workers = R == 1 ? cfg.workers : 1;

  parallel_for(R, cfg.workers, [&](int k) {
    try {
      const std::uint64_t base = derive_seed(cfg.master_seed, k + 1);
      Mat Y, U;
      if (cfg.simulate_data) {
        Rng sim_rng(derive_seed(base, 0));
        const Trajectory traj =
            simulate(model,
                     Theta::from_model(model, ThetaVariant::Unconstrained),
                     cfg.sim, sim_rng);
        Y = traj.measurements;
        U = traj.inputs;
      } else {
        Y = Y_shared;
        U = U_shared;
      }
      Rng init_rng(derive_seed(base, 1));
      const Theta init = perturb_theta(truth, cfg.perturbation, init_rng);
      Rng em_rng(derive_seed(base, 2));
      EmResult res = run_em(model, init, Y, U, em, em_rng);
      const std::string path =
          (fs::path(cfg.out_dir) / ("trace_" + std::to_string(k + 1) + ".csv"))
              .string();
      detail::write_trace_csv(path, res.trace);
      traces[k] = std::move(res.trace);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });

  std::vector<int> ok;
  Json failures = Json::array();
  Json warnings = Json::array();
  for (int k = 0; k < R; ++k) {
    if (errors[k].empty()) {
      ok.push_back(k);
      outputs.push_back(
          (fs::path(cfg.out_dir) / ("trace_" + std::to_string(k + 1) + ".csv"))
              .string());
      for (std::size_t it = 0; it < traces[k].iterates.size(); ++it)
        for (const auto& w : traces[k].iterates[it].warnings)
          warnings.push_back("realization " + std::to_string(k + 1) +
                             " iteration " + std::to_string(it) + ": " + w);
    } else {
      failures.push_back(Json{{"realization", k + 1}, {"error", errors[k]}});
    }
  }
  if (ok.empty())
    throw NumericError("all realizations failed; first error: " + errors[0]);

  const auto& names = traces[ok[0]].param_names;
  const std::size_t K = traces[ok[0]].iterates.size();
  CsvTable summary;
  summary.header.push_back("iteration");
  for (const auto& n : names) {
    summary.header.push_back(n + "_mean");
    summary.header.push_back(n + "_min");
    summary.header.push_back(n + "_max");
  }
  for (std::size_t it = 0; it < K; ++it) {
    std::vector<std::string> row;
    row.push_back(std::to_string(it));
    for (std::size_t p = 0; p < names.size(); ++p) {
      double sum = 0.0;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (int k : ok) {
        const double v = traces[k].iterates[it].theta_flat[static_cast<int>(p)];
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      row.push_back(format_double(sum / static_cast<double>(ok.size())));
      row.push_back(format_double(lo));
      row.push_back(format_double(hi));
    }
    summary.rows.push_back(std::move(row));
  }
  const std::string summary_path =
      (fs::path(cfg.out_dir) / "summary.csv").string();
  write_csv(summary_path, summary);
  outputs.push_back(summary_path);

  Json extra;
  extra["failures"] = failures;
  extra["warnings"] = warnings;
  extra["succeeded"] = static_cast<int>(ok.size());
  detail::write_manifest(cfg, "identify", outputs, extra);
  return failures.empty() ? 0 : 1;
}

/// Builds metrics.csv from the final summary row: truth, estimate, absolute
/// and relative error for every flat parameter, every configured report
/// term, and the piecewise function values at the boundaries.
inline int run_report(const ExperimentConfig& cfg) {
  const PwassModel& model = cfg.loaded.model;
  const std::string summary_path =
      (fs::path(cfg.out_dir) / "summary.csv").string();
  const CsvTable summary = read_csv(summary_path);
  if (summary.rows.empty())
    throw StructuralError(summary_path + ": no data rows");
  const auto& final_row = summary.rows.back();
  const int final_line = static_cast<int>(summary.rows.size()) + 1;

  const int nx = model.state_dim();
  const int nr = model.num_regimes();
  const ThetaVariant variant = cfg.em.variant;
  const auto names = Theta::flat_names(nx, nr, variant);
  Vec estimate(static_cast<int>(names.size()));
  for (std::size_t p = 0; p < names.size(); ++p) {
    const int col = column_index(summary, names[p] + "_mean", summary_path);
    estimate[static_cast<int>(p)] =
        parse_double(final_row[col], summary_path, final_line);
  }
  const Theta truth = Theta::from_model(model, variant);
  const Vec truth_flat = truth.pack();
  const Theta est = Theta::unpack(estimate, nx, nr, variant);

  CsvTable metrics;
  metrics.header = {"parameter", "truth", "estimate", "abs_error",
                    "rel_error"};
  auto add = [&](const std::string& name, double tv, double ev) {
    const double abs_err = std::abs(ev - tv);
    const double rel_err =
        tv != 0.0 ? abs_err / std::abs(tv)
                  : std::numeric_limits<double>::quiet_NaN();
    metrics.rows.push_back({name, format_double(tv), format_double(ev),
                            format_double(abs_err), format_double(rel_err)});
  };
  for (std::size_t p = 0; p < names.size(); ++p)
    add(names[p], truth_flat[static_cast<int>(p)],
        estimate[static_cast<int>(p)]);
  for (const ReportTerm& term : cfg.loaded.report_terms) {
    int idx = -1;
    for (std::size_t p = 0; p < names.size(); ++p)
      if (names[p] == term.param) idx = static_cast<int>(p);
    if (idx < 0)
      throw StructuralError("report term '" + term.name +
                            "' references unknown parameter '" + term.param +
                            "'");
    add(term.name, truth_flat[idx] + term.offset, estimate[idx] + term.offset);
  }
  PwaFunction est_pwa;
  est_pwa.boundaries = model.pwa.boundaries;
  est_pwa.slopes = est.slopes;
  est_pwa.intercepts = est.intercepts_full(model.pwa.boundaries);
  const Vec true_knots = pwa_knot_values(model.pwa);
  const Vec est_knots = pwa_knot_values(est_pwa);
  for (int i = 0; i < true_knots.size(); ++i)
    add("f(l" + std::to_string(i + 1) + ")", true_knots[i], est_knots[i]);

  const std::string metrics_path =
      (fs::path(cfg.out_dir) / "metrics.csv").string();
  write_csv(metrics_path, metrics);
  detail::write_manifest(cfg, "report", {metrics_path});
  return 0;
}

}  // namespace pwass
