#pragma once

// Experiment configuration: a JSON document describing the problem, the
// schedules, the surrogate and the h-grid. Parsing collects every problem it
// finds and reports them together, each anchored to a line of the source.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgdflow/continuous.hpp"
#include "sgdflow/discrete.hpp"
#include "sgdflow/observables.hpp"
#include "sgdflow/problems.hpp"
#include "sgdflow/schedules.hpp"
#include "sgdflow/weakerror.hpp"

namespace sgdflow {

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> messages)
      : Error(join(messages)), messages_(std::move(messages)) {}
  const std::vector<std::string>& messages() const { return messages_; }

 private:
  static std::string join(const std::vector<std::string>& m) {
    std::string out;
    for (const auto& line : m) out += (out.empty() ? "" : "\n") + line;
    return out;
  }
  std::vector<std::string> messages_;
};

struct ExperimentConfig {
  nlohmann::json raw;  // the document as given, used for the manifest echo
  std::string source;
  std::string text;  // source text, for line anchors

  FamilyPtr family;
  std::vector<Schedule> rates;
  std::vector<Schedule> momenta;
  Mode mode = Mode::sgd;
  SurrogateKind surrogate = SurrogateKind::ode;
  double horizon = 1.0;
  std::vector<double> h_grid;
  Vector x0;
  std::optional<Vector> x1;
  Observable observable = coordinate_observable(0);
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  double substep = 1e-3;
  double eps_x = 1e-4;
  double eps_t = 1e-4;
  int quadrature_nodes = 101;
  bool fd_fallback = false;
  bool common_random_numbers = true;
  DiscreteMethod discrete_method = DiscreteMethod::monte_carlo;
  std::size_t export_trajectories = 1;
  std::size_t min_points = 4;
  std::string output_dir = "sgdflow-out";

  DiscreteConfig discrete(double h) const {
    DiscreteConfig cfg;
    cfg.h = h;
    cfg.horizon = horizon;
    cfg.x0 = x0;
    cfg.x1 = x1;
    cfg.family = family;
    cfg.rates = rates;
    cfg.momenta = momenta;
    cfg.seed = seed;
    return cfg;
  }

  SurrogateSpec surrogate_spec(SurrogateKind kind) const {
    SurrogateSpec spec;
    spec.kind = kind;
    spec.family = family;
    spec.rates = rates;
    spec.momenta = mode == Mode::sgd ? std::vector<Schedule>{} : momenta;
    spec.h = h_grid.empty() ? 0.0 : h_grid.front();
    spec.substep = substep;
    spec.fd_jacobian_fallback = fd_fallback;
    return spec;
  }
  SurrogateSpec surrogate_spec() const { return surrogate_spec(surrogate); }

  WeakErrorOptions options(unsigned threads) const {
    WeakErrorOptions opt;
    opt.samples = samples;
    opt.threads = threads;
    opt.common_random_numbers = common_random_numbers;
    opt.discrete_method = discrete_method;
    opt.quadrature.nodes = quadrature_nodes;
    opt.quadrature.eps_x = eps_x;
    opt.quadrature.eps_t = eps_t;
    return opt;
  }

  FitOptions fit_options() const {
    FitOptions opt;
    opt.min_points = min_points;
    return opt;
  }
};

namespace detail {

// Line of the first `"key":` occurrence along a key path, searching each
// component after the previous one. Falls back to the deepest match found.
inline int line_of(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  std::size_t found = std::string::npos;
  for (const auto& key : path) {
    const std::size_t at = text.find("\"" + key + "\"", pos);
    if (at == std::string::npos) break;
    found = pos = at;
  }
  if (found == std::string::npos) return 1;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(found), '\n'));
}

class Collector {
 public:
  Collector(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  void add(const std::vector<std::string>& path, const std::string& message) {
    std::ostringstream out;
    out << source_ << ':' << line_of(text_, path) << ": ";
    for (std::size_t i = 0; i < path.size(); ++i) out << (i ? "." : "") << path[i];
    out << ": " << message;
    messages_.push_back(out.str());
  }

  // Runs fn, turning any exception into a message for `path`.
  template <class Fn>
  bool guard(const std::vector<std::string>& path, Fn&& fn) {
    try {
      fn();
      return true;
    } catch (const std::exception& e) {
      add(path, e.what());
      return false;
    }
  }

  bool empty() const { return messages_.empty(); }
  std::vector<std::string> take() { return std::move(messages_); }

 private:
  const std::string& text_;
  std::string source_;
  std::vector<std::string> messages_;
};

inline std::vector<double> number_list(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument("expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline Vector vector_of(const nlohmann::json& j) {
  const auto values = number_list(j);
  if (values.empty()) throw std::invalid_argument("expected a nonempty array of numbers");
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline Matrix matrix_of(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("expected a nonempty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Matrix out;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector row = vector_of(j[static_cast<std::size_t>(r)]);
    if (r == 0) out.resize(rows, row.size());
    if (row.size() != out.cols()) throw std::invalid_argument("matrix rows have different lengths");
    out.row(r) = row.transpose();
  }
  return out;
}

inline double number(const nlohmann::json& obj, const char* key) {
  if (!obj.contains(key) || !obj.at(key).is_number()) throw std::invalid_argument(std::string("missing number '") + key + "'");
  return obj.at(key).get<double>();
}

inline std::vector<double> probabilities_or_uniform(const nlohmann::json& obj, std::size_t m) {
  if (obj.contains("probabilities")) return number_list(obj.at("probabilities"));
  return std::vector<double>(m, 1.0 / static_cast<double>(m));
}

inline GradientFamily parse_family(const nlohmann::json& p) {
  if (!p.is_object() || !p.contains("kind") || !p.at("kind").is_string())
    throw std::invalid_argument("problem needs a string 'kind'");
  const std::string kind = p.at("kind");
  auto family = [&]() -> GradientFamily {
    if (kind == "two_member") return make_two_member_benchmark();
    if (kind == "ou") return make_ou_benchmark(p.contains("sigma") ? number(p, "sigma") : 1.0);
    if (kind == "linear") {
      const auto slopes = number_list(p.at("slopes"));
      const auto centers = p.contains("centers") ? number_list(p.at("centers")) : std::vector<double>{};
      if (!centers.empty() && centers.size() != slopes.size())
        throw std::invalid_argument("linear problem: one center per slope");
      return make_scalar_linear_family(slopes, centers, probabilities_or_uniform(p, slopes.size()));
    }
    if (kind == "quadratic") {
      QuadraticFamilySpec spec;
      if (p.contains("csv")) {
        std::ifstream in(p.at("csv").get<std::string>());
        if (!in) throw std::invalid_argument("cannot open quadratic problem file " + p.at("csv").get<std::string>());
        spec = read_quadratic_spec_csv(in);
      } else {
        for (const auto& m : p.at("matrices")) spec.matrices.push_back(matrix_of(m));
        for (const auto& c : p.at("centers")) spec.centers.push_back(vector_of(c));
        spec.probabilities = probabilities_or_uniform(p, spec.matrices.size());
      }
      return make_quadratic_family(spec);
    }
    if (kind == "random_quadratic") {
      return make_random_quadratic_family(static_cast<int>(number(p, "d")), static_cast<int>(number(p, "m")),
                                          number(p, "eig_min"), number(p, "eig_max"),
                                          static_cast<std::uint64_t>(number(p, "seed")));
    }
    if (kind == "tanh") {
      TanhFamilySpec spec;
      spec.confinement = p.contains("confinement") ? number(p, "confinement") : 1.0;
      spec.sharpness = p.contains("sharpness") ? number(p, "sharpness") : 1.0;
      spec.amplitudes = number_list(p.at("amplitudes"));
      for (const auto& c : p.at("centers")) spec.centers.push_back(vector_of(c));
      spec.probabilities = probabilities_or_uniform(p, spec.amplitudes.size());
      return make_tanh_family(spec);
    }
    throw std::invalid_argument("unknown problem kind '" + kind + "'");
  }();
  if (p.contains("jacobian") && p.at("jacobian").is_boolean() && !p.at("jacobian").get<bool>())
    return family.without_jacobians();
  return family;
}

inline Schedule parse_schedule(const nlohmann::json& s) {
  if (s.is_number()) return Schedule::constant(s.get<double>());
  if (!s.is_object() || !s.contains("kind")) throw std::invalid_argument("schedule needs a 'kind'");
  const std::string kind = s.at("kind");
  if (kind == "constant") return Schedule::constant(number(s, "a"));
  if (kind == "exponential") return Schedule::exponential(number(s, "a"), number(s, "rate"));
  if (kind == "polynomial") return Schedule::polynomial(number(s, "a"), number(s, "exponent"));
  if (kind == "tabulated") return Schedule::tabulated(number_list(s.at("times")), number_list(s.at("values")));
  throw std::invalid_argument("unknown schedule kind '" + kind + "'");
}

// One schedule, or one per coordinate; a single entry is broadcast.
inline std::vector<Schedule> parse_schedules(const nlohmann::json& j, int d) {
  std::vector<Schedule> out;
  if (j.is_array()) {
    for (const auto& s : j) out.push_back(parse_schedule(s));
  } else {
    out.push_back(parse_schedule(j));
  }
  if (out.size() == 1 && d > 1) out.assign(static_cast<std::size_t>(d), out.front());
  if (static_cast<int>(out.size()) != d)
    throw std::invalid_argument("expected 1 or " + std::to_string(d) + " schedules, got " + std::to_string(out.size()));
  return out;
}

inline Observable parse_observable(const nlohmann::json& j, int d) {
  if (j.is_string()) {
    const std::string name = j;
    if (name == "identity" || name == "coordinate") return coordinate_observable(0);
    if (name == "squared_norm") return squared_norm_observable(d);
    throw std::invalid_argument("unknown observable '" + name + "'");
  }
  if (!j.is_object() || !j.contains("kind")) throw std::invalid_argument("observable needs a 'kind'");
  const std::string kind = j.at("kind");
  Observable g;
  if (kind == "coordinate") {
    g = coordinate_observable(j.contains("index") ? j.at("index").get<int>() : 0);
  } else if (kind == "squared_norm") {
    g = squared_norm_observable(d);
  } else if (kind == "quadratic") {
    g = quadratic_observable(matrix_of(j.at("weights")));
  } else if (kind == "bump") {
    g = bump_observable(vector_of(j.at("center")), j.contains("width") ? number(j, "width") : 1.0);
  } else if (kind == "constant") {
    g = constant_observable(j.contains("value") ? number(j, "value") : 1.0);
  } else {
    throw std::invalid_argument("unknown observable kind '" + kind + "'");
  }
  if (g.arity() > d) throw std::invalid_argument("observable reads more coordinates than the problem has");
  return g;
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{"problem",
                                          "schedules",
                                          "momentum",
                                          "mode",
                                          "surrogate",
                                          "T",
                                          "h_grid",
                                          "x0",
                                          "x1",
                                          "observable",
                                          "samples",
                                          "seed",
                                          "substep",
                                          "fd",
                                          "fd_fallback",
                                          "common_random_numbers",
                                          "discrete_method",
                                          "export_trajectories",
                                          "min_points",
                                          "output_dir"};
  return keys;
}

}  // namespace detail

/// Parses and validates a config document; throws ConfigError listing every problem.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "config") {
  detail::Collector errors(text, source);
  ExperimentConfig cfg;
  cfg.source = source;
  cfg.text = text;
  try {
    cfg.raw = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto byte = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
    throw ConfigError({source + ":" + std::to_string(line) + ": invalid JSON: " + e.what()});
  }
  const auto& j = cfg.raw;
  if (!j.is_object()) throw ConfigError({source + ":1: config must be a JSON object"});
  for (const auto& item : j.items())
    if (!detail::known_keys().count(item.key())) errors.add({item.key()}, "unknown key");

  auto require = [&](const char* key) {
    if (!j.contains(key)) {
      errors.add({key}, "missing required key");
      return false;
    }
    return true;
  };

  int d = 0;
  if (require("problem")) {
    errors.guard({"problem"}, [&] {
      cfg.family = std::make_shared<const GradientFamily>(detail::parse_family(j.at("problem")));
      d = cfg.family->dimension();
    });
  }
  if (require("T")) {
    errors.guard({"T"}, [&] {
      cfg.horizon = j.at("T").get<double>();
      if (!(cfg.horizon > 0.0)) throw std::invalid_argument("T must be positive");
    });
  }
  const bool horizon_ok = j.contains("T") && cfg.horizon > 0.0;

  if (j.contains("mode")) {
    errors.guard({"mode"}, [&] {
      const std::string m = j.at("mode");
      if (m == "sgd") cfg.mode = Mode::sgd;
      else if (m == "momentum") cfg.mode = Mode::momentum;
      else if (m == "augmented") cfg.mode = Mode::augmented;
      else throw std::invalid_argument("mode must be sgd, momentum or augmented");
    });
  }
  if (j.contains("surrogate")) {
    errors.guard({"surrogate"}, [&] {
      const std::string s = j.at("surrogate");
      if (s == "ode") cfg.surrogate = SurrogateKind::ode;
      else if (s == "sde1") cfg.surrogate = SurrogateKind::sde1;
      else if (s == "sde2") cfg.surrogate = SurrogateKind::sde2;
      else throw std::invalid_argument("surrogate must be ode, sde1 or sde2");
    });
  }

  if (d > 0 && require("schedules")) {
    errors.guard({"schedules"}, [&] {
      cfg.rates = detail::parse_schedules(j.at("schedules"), d);
      for (std::size_t i = 0; i < cfg.rates.size(); ++i)
        for (const auto& problem : validate(cfg.rates[i], horizon_ok ? cfg.horizon : 100.0))
          errors.add({"schedules"}, "coordinate " + std::to_string(i) + ": " + problem);
    });
  }
  if (d > 0 && j.contains("momentum")) {
    errors.guard({"momentum"}, [&] {
      cfg.momenta = detail::parse_schedules(j.at("momentum"), d);
      for (std::size_t i = 0; i < cfg.momenta.size(); ++i) {
        // momentum values may be 0; only range [0, 1) and finiteness are checked
        const double tmax = horizon_ok ? cfg.horizon : 100.0;
        for (int k = 0; k <= 100; ++k) {
          const double v = cfg.momenta[i].eval(tmax * k / 100.0);
          if (!(v >= 0.0 && v < 1.0)) {
            errors.add({"momentum"}, "coordinate " + std::to_string(i) + ": momentum value outside [0, 1)");
            break;
          }
        }
      }
    });
  }
  if (cfg.mode != Mode::sgd && !j.contains("momentum")) errors.add({"mode"}, "momentum modes need a 'momentum' entry");

  if (require("h_grid")) {
    errors.guard({"h_grid"}, [&] {
      cfg.h_grid = detail::number_list(j.at("h_grid"));
      if (cfg.h_grid.empty()) throw std::invalid_argument("h_grid is empty");
    });
    for (std::size_t k = 0; k < cfg.h_grid.size(); ++k) {
      const std::string label = "h_grid[" + std::to_string(k) + "]";
      if (k > 0 && !(cfg.h_grid[k] < cfg.h_grid[k - 1]))
        errors.add({"h_grid"}, label + ": grid must be sorted strictly descending");
      if (horizon_ok) {
        try {
          horizon_steps(cfg.horizon, cfg.h_grid[k]);
        } catch (const std::exception& e) {
          errors.add({"h_grid"}, label + ": " + e.what());
        }
      }
    }
  }

  if (require("x0")) {
    errors.guard({"x0"}, [&] {
      cfg.x0 = detail::vector_of(j.at("x0"));
      if (d > 0 && cfg.x0.size() != d) throw std::invalid_argument("x0 must have " + std::to_string(d) + " entries");
    });
  }
  if (j.contains("x1")) {
    errors.guard({"x1"}, [&] {
      cfg.x1 = detail::vector_of(j.at("x1"));
      if (d > 0 && cfg.x1->size() != d) throw std::invalid_argument("x1 must have " + std::to_string(d) + " entries");
    });
  }

  if (d > 0) {
    if (j.contains("observable")) {
      errors.guard({"observable"}, [&] { cfg.observable = detail::parse_observable(j.at("observable"), d); });
    }
  }

  auto count = [&](const char* key, auto& field, std::size_t lo) {
    if (!j.contains(key)) return;
    errors.guard({key}, [&] {
      if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < static_cast<long long>(lo))
        throw std::invalid_argument("must be an integer >= " + std::to_string(lo));
      field = j.at(key).template get<std::remove_reference_t<decltype(field)>>();
    });
  };
  count("samples", cfg.samples, 100);
  count("export_trajectories", cfg.export_trajectories, 0);
  count("min_points", cfg.min_points, 2);
  if (j.contains("seed")) {
    errors.guard({"seed"}, [&] {
      if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0))
        throw std::invalid_argument("seed must be a nonnegative integer");
      cfg.seed = j.at("seed").get<std::uint64_t>();
    });
  }

  if (j.contains("substep")) {
    errors.guard({"substep"}, [&] {
      cfg.substep = j.at("substep").get<double>();
      if (!(cfg.substep > 0.0)) throw std::invalid_argument("substep must be positive");
    });
  } else if (!cfg.h_grid.empty()) {
    const double h_min = *std::min_element(cfg.h_grid.begin(), cfg.h_grid.end());
    cfg.substep = std::min(1e-3, h_min / 4.0);
  }
  if (j.contains("fd")) {
    errors.guard({"fd"}, [&] {
      const auto& fd = j.at("fd");
      if (fd.contains("eps_x")) cfg.eps_x = detail::number(fd, "eps_x");
      if (fd.contains("eps_t")) cfg.eps_t = detail::number(fd, "eps_t");
      if (fd.contains("quadrature_nodes")) cfg.quadrature_nodes = fd.at("quadrature_nodes").get<int>();
      if (!(cfg.eps_x > 0.0) || !(cfg.eps_t > 0.0)) throw std::invalid_argument("finite-difference steps must be positive");
      if (cfg.quadrature_nodes < 101 || cfg.quadrature_nodes % 2 == 0)
        throw std::invalid_argument("quadrature_nodes must be odd and >= 101");
    });
  }
  auto flag = [&](const char* key, bool& field) {
    if (!j.contains(key)) return;
    errors.guard({key}, [&] {
      if (!j.at(key).is_boolean()) throw std::invalid_argument("must be true or false");
      field = j.at(key).get<bool>();
    });
  };
  flag("fd_fallback", cfg.fd_fallback);
  flag("common_random_numbers", cfg.common_random_numbers);
  if (j.contains("discrete_method")) {
    errors.guard({"discrete_method"}, [&] {
      const std::string m = j.at("discrete_method");
      if (m == "monte_carlo") cfg.discrete_method = DiscreteMethod::monte_carlo;
      else if (m == "exact") cfg.discrete_method = DiscreteMethod::exact_moments;
      else throw std::invalid_argument("discrete_method must be monte_carlo or exact");
    });
  }
  if (j.contains("output_dir")) errors.guard({"output_dir"}, [&] { cfg.output_dir = j.at("output_dir").get<std::string>(); });

  // Cross-field checks once the pieces parsed.
  if (cfg.family) {
    if (cfg.surrogate == SurrogateKind::sde2 && !cfg.family->has_jacobians() && !cfg.fd_fallback)
      errors.add({"surrogate"}, "second-order drift requires Jacobian or FD fallback enabled");
    if (cfg.discrete_method == DiscreteMethod::exact_moments &&
        (!cfg.family->is_affine() || cfg.observable.form == ObservableForm::bump))
      errors.add({"discrete_method"}, "exact discrete moments need an affine problem and a polynomial observable");
    if (is_stochastic(cfg.surrogate)) {
      for (double h : cfg.h_grid) {
        if (cfg.substep > h / 4.0 * (1.0 + 1e-12)) {
          std::ostringstream msg;
          msg << "substep " << cfg.substep << " exceeds h/4 for h = " << h;
          errors.add({"substep"}, msg.str());
          break;
        }
      }
    }
  }

  if (!errors.empty()) throw ConfigError(errors.take());
  return cfg;
}

/// "file:line: key: message" anchored at the first occurrence of `key`.
inline std::string anchored(const ExperimentConfig& cfg, const std::string& key, const std::string& message) {
  return cfg.source + ":" + std::to_string(detail::line_of(cfg.text, {key})) + ": " + key + ": " + message;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ":0: cannot open config file"});
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path);
}

}  // namespace sgdflow
