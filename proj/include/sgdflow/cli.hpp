#pragma once

// Batch driver behind the `sgdflow` executable. run_cli returns the process
// exit code: 0 success, 1 unexpected failure, 2 invalid configuration or
// usage, 3 diverged run (outputs written so far are kept).

#include <Eigen/Core>
#include <boost/version.hpp>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sgdflow/config.hpp"
#include "sgdflow/continuous.hpp"
#include "sgdflow/discrete.hpp"
#include "sgdflow/moments.hpp"
#include "sgdflow/weakerror.hpp"

#ifndef SGDFLOW_VERSION
#define SGDFLOW_VERSION "0.0.0"
#endif

namespace sgdflow::cli {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitDiverged = 3;

/// SGDFLOW_THREADS, when set to a positive integer, wins over --threads.
inline unsigned effective_threads(unsigned requested) {
  if (const char* env = std::getenv("SGDFLOW_THREADS")) {
    try {
      const long value = std::stol(env);
      if (value > 0) return static_cast<unsigned>(value);
    } catch (const std::exception&) {
    }
  }
  return requested == 0 ? 1u : requested;
}

namespace detail {

namespace fs = std::filesystem;

inline void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string number(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

inline nlohmann::json manifest(const std::string& command, const ExperimentConfig& cfg) {
  nlohmann::json m;
  m["tool"] = "sgdflow";
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config"] = cfg.raw;
  m["versions"] = {{"sgdflow", SGDFLOW_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"boost", BOOST_LIB_VERSION},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  return m;
}

inline std::string grid_label(std::size_t k) { return "h" + std::to_string(k); }

// Writes the first `count` discrete paths for every grid point. These use the
// same streams as the Monte Carlo estimate, so they are members of the sample.
inline void export_trajectories(const ExperimentConfig& cfg, const fs::path& dir) {
  for (std::size_t k = 0; k < cfg.h_grid.size(); ++k) {
    const DiscreteConfig dc = cfg.discrete(cfg.h_grid[k]);
    for (std::size_t i = 0; i < cfg.export_trajectories; ++i) {
      const fs::path path = dir / "trajectories" / (grid_label(k) + "_path" + std::to_string(i) + ".csv");
      std::ostringstream csv;
      try {
        write_trajectory_csv(csv, run_trajectory(dc, cfg.mode, i), dc.h);
      } catch (const TrajectoryDivergence& e) {
        write_trajectory_csv(csv, e.partial(), dc.h);
        write_file(path, csv.str());
        throw;
      }
      write_file(path, csv.str());
    }
  }
}

inline void write_report(const fs::path& dir, const WeakErrorReport& report) {
  write_file(dir / "report.json", to_json(report).dump(2) + "\n");
  std::ostringstream csv, loglog;
  write_report_csv(csv, report);
  write_loglog_csv(loglog, report);
  write_file(dir / "report.csv", csv.str());
  write_file(dir / "loglog.csv", loglog.str());
}

inline void print_fit(std::ostream& out, const char* label, const std::optional<ConvergenceFit>& fit,
                      const std::string& note) {
  out << label << ": ";
  if (fit)
    out << "slope " << fit->slope << " (95% CI " << fit->ci_low << " .. " << fit->ci_high << ")\n";
  else
    out << "no fit (" << note << ")\n";
}

inline int weak_error_command(const ExperimentConfig& cfg, const fs::path& dir, unsigned threads, std::ostream& out) {
  export_trajectories(cfg, dir);
  const auto report = weak_error_report(cfg.discrete(cfg.h_grid.front()), cfg.mode, cfg.surrogate_spec(),
                                        cfg.observable, cfg.h_grid, cfg.options(threads), cfg.fit_options());
  write_report(dir, report);
  for (const auto& p : report.points)
    out << "h = " << p.h << "  error = " << p.error << "  se = " << p.standard_error << (p.excluded ? "  (excluded)" : "")
        << '\n';
  print_fit(out, "weak-error order", report.fit, report.fit_note);
  return kExitOk;
}

inline int expansion_command(const ExperimentConfig& cfg, const fs::path& dir, unsigned threads, std::ostream& out) {
  export_trajectories(cfg, dir);
  const auto report = expansion_residual(cfg.discrete(cfg.h_grid.front()), cfg.mode, cfg.surrogate_spec(),
                                         cfg.observable, cfg.h_grid, cfg.options(threads), cfg.fit_options());
  write_report(dir, report);
  out << "leading integral = " << *report.leading_integral << '\n';
  for (std::size_t k = 0; k < report.points.size(); ++k)
    out << "h = " << report.points[k].h << "  error = " << report.points[k].error
        << "  residual = " << report.residuals[k] << '\n';
  print_fit(out, "residual order", report.residual_fit, report.residual_fit_note);
  return kExitOk;
}

inline int discrete_command(const ExperimentConfig& cfg, const fs::path& dir, unsigned threads, std::ostream& out) {
  export_trajectories(cfg, dir);
  nlohmann::json report{{"command", "run-discrete"}, {"mode", to_string(cfg.mode)}, {"seed", cfg.seed},
                        {"samples", cfg.samples},    {"grid", cfg.h_grid}};
  std::ostringstream csv;
  csv << "h,steps,mean,se\n";
  auto& means = report["mean"] = nlohmann::json::array();
  auto& ses = report["se"] = nlohmann::json::array();
  for (double h : cfg.h_grid) {
    const DiscreteConfig dc = cfg.discrete(h);
    const Estimate e = cfg.discrete_method == DiscreteMethod::exact_moments
                           ? exact_discrete_expectation(dc, cfg.mode, cfg.observable)
                           : estimate_discrete_expectation(dc, cfg.mode, cfg.observable, cfg.samples, threads);
    means.push_back(e.value);
    ses.push_back(e.standard_error);
    csv << number(h) << ',' << dc.steps() << ',' << number(e.value) << ',' << number(e.standard_error) << '\n';
    out << "h = " << h << "  E g = " << e.value << "  se = " << e.standard_error << '\n';
  }
  write_file(dir / "report.json", report.dump(2) + "\n");
  write_file(dir / "report.csv", csv.str());
  return kExitOk;
}

inline int ode_command(const ExperimentConfig& cfg, const fs::path& dir, std::ostream& out) {
  nlohmann::json report{{"command", "run-ode"}, {"mode", to_string(cfg.mode)}, {"grid", cfg.h_grid}};
  auto& values = report["values"] = nlohmann::json::array();
  auto& endpoints = report["endpoints"] = nlohmann::json::array();
  for (std::size_t k = 0; k < cfg.h_grid.size(); ++k) {
    const DiscreteConfig dc = cfg.discrete(cfg.h_grid[k]);
    const SurrogateSpec spec = matched_surrogate(cfg.surrogate_spec(SurrogateKind::ode), dc, cfg.mode);
    auto [state, t] = surrogate_start(dc, cfg.mode);
    // Sample the flow on the discrete time grid for plotting.
    std::ostringstream csv;
    csv << "t";
    for (Eigen::Index i = 0; i < state.size(); ++i) csv << ",x_" << (i + 1);
    csv << '\n';
    const std::int64_t total = dc.steps();
    for (std::int64_t n = static_cast<std::int64_t>(std::llround(t / dc.h));; ++n) {
      csv << number(t);
      for (Eigen::Index i = 0; i < state.size(); ++i) csv << ',' << number(state[i]);
      csv << '\n';
      if (n >= total) break;
      const double next = n + 1 == total ? dc.horizon : static_cast<double>(n + 1) * dc.h;
      state = ode_flow(spec, state, t, next);
      t = next;
    }
    write_file(dir / "trajectories" / ("ode_" + grid_label(k) + ".csv"), csv.str());
    values.push_back(cfg.observable(state));
    endpoints.push_back(std::vector<double>(state.data(), state.data() + state.size()));
    out << "h = " << dc.h << "  g(X_T) = " << cfg.observable(state) << '\n';
  }
  write_file(dir / "report.json", report.dump(2) + "\n");
  return kExitOk;
}

inline int sde_command(const ExperimentConfig& cfg, const fs::path& dir, unsigned threads, std::ostream& out) {
  nlohmann::json report{{"command", "run-sde"},   {"surrogate", to_string(cfg.surrogate)}, {"mode", to_string(cfg.mode)},
                        {"seed", cfg.seed},       {"samples", cfg.samples},                {"grid", cfg.h_grid}};
  auto& means = report["mean"] = nlohmann::json::array();
  auto& ses = report["se"] = nlohmann::json::array();
  auto& closed = report["closed_form"] = nlohmann::json::array();
  for (std::size_t k = 0; k < cfg.h_grid.size(); ++k) {
    const DiscreteConfig dc = cfg.discrete(cfg.h_grid[k]);
    const SurrogateSpec spec = matched_surrogate(cfg.surrogate_spec(), dc, cfg.mode);
    spec.validate();
    const auto [start, t0] = surrogate_start(dc, cfg.mode);
    std::vector<Vector> endpoints(cfg.samples);
    parallel_for(cfg.samples, threads, [&](std::size_t i) {
      RandomStream rng(cfg.seed, kSurrogateStreamBase + i);
      endpoints[i] = sde_sample(spec, start, t0, dc.horizon, rng);
    });
    std::vector<double> values(cfg.samples);
    std::ostringstream csv;
    csv << "sample";
    for (Eigen::Index i = 0; i < start.size(); ++i) csv << ",x_" << (i + 1);
    csv << '\n';
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      values[i] = cfg.observable(endpoints[i]);
      csv << i;
      for (Eigen::Index c = 0; c < endpoints[i].size(); ++c) csv << ',' << number(endpoints[i][c]);
      csv << '\n';
    }
    write_file(dir / "trajectories" / ("sde_endpoints_" + grid_label(k) + ".csv"), csv.str());
    const Estimate e = summarize(values);
    means.push_back(e.value);
    ses.push_back(e.standard_error);
    if (moments_available(spec.family, cfg.observable))
      closed.push_back(*expectation(cfg.observable, surrogate_affine_moments(spec, start, t0, dc.horizon)));
    else
      closed.push_back(nullptr);
    out << "h = " << dc.h << "  E g(X_T) = " << e.value << "  se = " << e.standard_error << '\n';
  }
  write_file(dir / "report.json", report.dump(2) + "\n");
  return kExitOk;
}

inline int convergence_command(const std::string& path, std::size_t min_points, const std::string& out_dir,
                               std::ostream& out, std::ostream& err) {
  std::ifstream in(path);
  if (!in) {
    err << path << ": cannot open report\n";
    return kExitInvalid;
  }
  nlohmann::json report;
  std::vector<double> grid, errors, se;
  try {
    report = nlohmann::json::parse(in);
    grid = report.at("grid").get<std::vector<double>>();
    errors = report.at("errors").get<std::vector<double>>();
    if (report.contains("se")) se = report.at("se").get<std::vector<double>>();
  } catch (const std::exception& e) {
    err << path << ": not a weak-error report: " << e.what() << '\n';
    return kExitInvalid;
  }
  FitOptions opt;
  opt.min_points = min_points;
  nlohmann::json result{{"source", path}};
  try {
    const auto fit = fit_power_law(grid, errors, se, opt);
    result["slope"] = fit.slope;
    result["intercept"] = fit.intercept;
    result["ci"] = {std::isfinite(fit.ci_low) ? nlohmann::json(fit.ci_low) : nlohmann::json(nullptr),
                    std::isfinite(fit.ci_high) ? nlohmann::json(fit.ci_high) : nlohmann::json(nullptr)};
    std::vector<double> excluded;
    for (auto k : fit.excluded) excluded.push_back(grid[k]);
    result["excluded"] = excluded;
  } catch (const InsufficientPointsError& e) {
    err << path << ": " << e.what() << '\n';
    return kExitInvalid;
  }
  const std::string text = result.dump(2) + "\n";
  out << text;
  if (!out_dir.empty()) write_file(fs::path(out_dir) / "convergence.json", text);
  return kExitOk;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"sgdflow: SGD and momentum SGD against their ODE/SDE surrogates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(SGDFLOW_VERSION));

  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out_dir;
  std::string config_path;
  std::size_t min_points = 4;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", threads, "worker threads (SGDFLOW_THREADS overrides)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
  };
  struct Command {
    const char* name;
    const char* help;
  };
  const std::vector<Command> config_commands{
      {"run", "weak-error run with trajectory export (same as weak-error)"},
      {"run-discrete", "simulate the discrete recursion over the h-grid"},
      {"run-ode", "integrate the ode surrogate"},
      {"run-sde", "sample the sde surrogate"},
      {"weak-error", "weak errors over the h-grid and their fitted order"},
      {"expansion-check", "residual after subtracting the leading h-term"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : config_commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("config", config_path, "experiment config (JSON)")->required();
    add_common(sub);
    subs.push_back(sub);
  }
  auto* convergence = app.add_subcommand("convergence", "fit the order of an existing report.json");
  std::string report_path;
  convergence->add_option("report", report_path, "report.json from weak-error or run")->required();
  convergence->add_option("--min-points", min_points, "minimum number of fitted points")->check(CLI::Range(2, 1000));
  convergence->add_option("--out", out_dir, "directory for convergence.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInvalid;
  }

  if (convergence->parsed()) return detail::convergence_command(report_path, min_points, out_dir, out, err);

  std::string command;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) command = config_commands[i].name;

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
    std::vector<std::string> problems;
    if (command == "expansion-check") {
      if (cfg.surrogate != SurrogateKind::ode)
        problems.push_back(anchored(cfg, "surrogate", "expansion-check needs surrogate ode"));
      if (cfg.mode != Mode::sgd) problems.push_back(anchored(cfg, "mode", "expansion-check needs mode sgd"));
    }
    if (command == "run-sde" && !is_stochastic(cfg.surrogate))
      problems.push_back(anchored(cfg, "surrogate", "run-sde needs surrogate sde1 or sde2"));
    if (!problems.empty()) throw ConfigError(problems);
  } catch (const ConfigError& e) {
    for (const auto& m : e.messages()) err << m << '\n';
    return kExitInvalid;
  }
  if (seed) cfg.seed = *seed;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  cfg.raw["seed"] = cfg.seed;
  cfg.raw["output_dir"] = cfg.output_dir;
  const unsigned workers = effective_threads(threads);
  const std::filesystem::path dir(cfg.output_dir);

  try {
    detail::write_file(dir / "manifest.json", detail::manifest(command, cfg).dump(2) + "\n");
    if (command == "run" || command == "weak-error") return detail::weak_error_command(cfg, dir, workers, out);
    if (command == "expansion-check") return detail::expansion_command(cfg, dir, workers, out);
    if (command == "run-discrete") return detail::discrete_command(cfg, dir, workers, out);
    if (command == "run-ode") return detail::ode_command(cfg, dir, out);
    if (command == "run-sde") return detail::sde_command(cfg, dir, workers, out);
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const ConfigError& e) {
    for (const auto& m : e.messages()) err << m << '\n';
    return kExitInvalid;
  } catch (const InvalidStepError& e) {
    err << config_path << ": " << e.what() << '\n';
    return kExitInvalid;
  } catch (const UnsupportedError& e) {
    err << config_path << ": " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace sgdflow::cli
