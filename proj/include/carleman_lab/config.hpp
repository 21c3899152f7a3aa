#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "carleman_lab/errors.hpp"

namespace carleman_lab {

/// Every problem found while reading a config, each prefixed by its key path.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid config:";
    for (const auto& p : v) s += "\n  " + p;
    return s;
  }
  std::vector<std::string> problems_;
};

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> c{"verify-identities", "simulate", "verify-carleman", "inverse-source",
                                          "cauchy"};
  return c;
}

struct GridConfig {
  double length = 1.0;
  std::vector<int> interior{31};
  bool operator==(const GridConfig&) const = default;
};

struct TimeConfig {
  double horizon = 1.0;
  /// Resolved at parse time: K, or ceil(T/dt), or ceil(T/(h_min²/4)).
  int steps = 0;
  double dt() const { return horizon / steps; }
  bool operator==(const TimeConfig&) const = default;
};

struct WeightConfig {
  double x_star = -0.05;
  double t0 = 0.5;
  double beta = 1.0;
  std::vector<double> lambda{1.0};
  std::vector<double> s{2.0};
  double eps_cfg = 12.5;
  bool suppress_terminal = true;
  double suppression_ratio = 1e-8;
  std::vector<double> c_lambda{1.0};
  bool operator==(const WeightConfig&) const = default;
};

struct EnsembleConfig {
  std::uint64_t paths = 1;
  std::uint64_t seed = 0;
  bool operator==(const EnsembleConfig&) const = default;
};

struct CoefficientConfig {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  /// Additive noise amplitude; simulate only.
  double g = 0.0;
  bool operator==(const CoefficientConfig&) const = default;
};

struct FamilyConfig {
  /// simulate: sine | zero; verify-carleman: driven-noise | zero;
  /// inverse-source: separable; cauchy: sideways | zero
  std::string name;
  double amplitude = 1.0;
  int modes = 4;
  std::uint64_t family_seed = 0;
  std::uint64_t pairs = 20;
  double band = 2.0;
  std::vector<double> omegas{10, 20, 40, 80, 160, 320};
  double x_left = 0.5;
  double epsilon = 0.1;
  double delta_fraction = 0.1;
  bool operator==(const FamilyConfig&) const = default;
};

struct IdentityConfig {
  std::uint64_t trials = 100;
  bool operator==(const IdentityConfig&) const = default;
};

/// Noiseless continuation study on a synthetic instance (cauchy only).
struct ContinuationConfig {
  bool enabled = false;
  int interior = 16;
  int steps = 64;
  double horizon = 0.5;
  std::vector<double> alpha{1e-2, 1e-4, 1e-6};
  bool operator==(const ContinuationConfig&) const = default;
};

struct OutputConfig {
  std::string file;
  /// simulate: write every k-th time level
  int every = 1;
  bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
  std::string command;
  GridConfig grid;
  TimeConfig time;
  WeightConfig weights;
  EnsembleConfig ensemble;
  CoefficientConfig coefficients;
  FamilyConfig family;
  IdentityConfig identities;
  ContinuationConfig continuation;
  OutputConfig output;

  double h_min() const {
    int n = 0;
    for (int v : grid.interior) n = std::max(n, v);
    return grid.length / (n + 1);
  }
  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

using nlohmann::json;

class Reader {
 public:
  explicit Reader(std::vector<std::string>& problems) : problems_(problems) {}

  void fail(const std::string& path, const std::string& msg) { problems_.push_back(path + ": " + msg); }

  /// Calls fn(obj, path) if key exists and is an object; flags unknown members.
  template <class Fn>
  void section(const json& root, const std::string& key, const std::set<std::string>& allowed, Fn&& fn) {
    if (!root.contains(key)) return;
    const json& obj = root.at(key);
    if (!obj.is_object()) {
      fail(key, "expected an object");
      return;
    }
    for (const auto& [k, _] : obj.items()) {
      if (!allowed.count(k)) fail(key + "." + k, "unknown key");
    }
    fn(obj, key);
  }

  void number(const json& obj, const std::string& path, const char* key, double& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) return fail(path + "." + key, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(path + "." + key, "must be finite");
  }

  void integer(const json& obj, const std::string& path, const char* key, int& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) return fail(path + "." + key, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      return fail(path + "." + key, "integer out of range");
    }
    out = static_cast<int>(x);
  }

  void unsigned64(const json& obj, const std::string& path, const char* key, std::uint64_t& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
    } else if (v.is_number_integer()) {
      fail(path + "." + key, "must be non-negative");
    } else {
      fail(path + "." + key, "expected a non-negative integer");
    }
  }

  void boolean(const json& obj, const std::string& path, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) return fail(path + "." + key, "expected true or false");
    out = v.get<bool>();
  }

  void string(const json& obj, const std::string& path, const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) return fail(path + "." + key, "expected a string");
    out = v.get<std::string>();
  }

  void numbers(const json& obj, const std::string& path, const char* key, std::vector<double>& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array() || v.empty()) return fail(path + "." + key, "expected a non-empty array of numbers");
    std::vector<double> tmp;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        return fail(path + "." + key + "[" + std::to_string(i) + "]", "expected a finite number");
      }
      tmp.push_back(v[i].get<double>());
    }
    out = std::move(tmp);
  }

  void integers(const json& obj, const std::string& path, const char* key, std::vector<int>& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array() || v.empty()) return fail(path + "." + key, "expected a non-empty array of integers");
    std::vector<int> tmp;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer()) {
        return fail(path + "." + key + "[" + std::to_string(i) + "]", "expected an integer");
      }
      tmp.push_back(v[i].get<int>());
    }
    out = std::move(tmp);
  }

 private:
  std::vector<std::string>& problems_;
};

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

/// Parses and validates; throws ConfigError listing every problem. `command`,
/// when given, fills a missing "command" key and must match a present one.
inline ExperimentConfig parse_config(const std::string& text, const std::string& command = {}) {
  using nlohmann::json;
  std::vector<std::string> problems;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("(document): malformed JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"(document): expected a JSON object"});

  detail::Reader rd(problems);
  ExperimentConfig c;
  static const std::set<std::string> top{"command",      "grid",     "time",       "weights",      "ensemble",
                                         "coefficients", "family",   "identities", "continuation", "output"};
  for (const auto& [k, _] : root.items()) {
    if (!top.count(k)) rd.fail(k, "unknown key");
  }
  if (root.contains("command")) {
    if (!root.at("command").is_string()) rd.fail("command", "expected a string");
    else c.command = root.at("command").get<std::string>();
    if (!command.empty() && !c.command.empty() && c.command != command) {
      rd.fail("command", "config says '" + c.command + "' but '" + command + "' was requested");
    }
  } else if (command.empty()) {
    rd.fail("command", "missing");
  } else {
    c.command = command;
  }
  {
    if (!c.command.empty() &&
        std::find(known_commands().begin(), known_commands().end(), c.command) == known_commands().end()) {
      rd.fail("command", "unknown command '" + c.command + "'");
    }
  }

  std::optional<int> steps;
  std::optional<double> dt;
  rd.section(root, "grid", {"L", "N", "N_list"}, [&](const json& o, const std::string& p) {
    rd.number(o, p, "L", c.grid.length);
    if (o.contains("N") && o.contains("N_list")) rd.fail(p, "give N or N_list, not both");
    if (o.contains("N")) {
      int n = 0;
      rd.integer(o, p, "N", n);
      c.grid.interior = {n};
    }
    rd.integers(o, p, "N_list", c.grid.interior);
  });
  rd.section(root, "time", {"T", "K", "dt"}, [&](const json& o, const std::string& p) {
    rd.number(o, p, "T", c.time.horizon);
    if (o.contains("K") && o.contains("dt")) rd.fail(p, "give K or dt, not both");
    if (o.contains("K")) {
      int k = 0;
      rd.integer(o, p, "K", k);
      steps = k;
    }
    if (o.contains("dt")) {
      double d = 0.0;
      rd.number(o, p, "dt", d);
      dt = d;
    }
  });
  rd.section(root, "weights",
             {"x_star", "t0", "beta", "lambda", "s", "eps_cfg", "suppress_terminal", "suppression_ratio", "c_lambda"},
             [&](const json& o, const std::string& p) {
               rd.number(o, p, "x_star", c.weights.x_star);
               rd.number(o, p, "t0", c.weights.t0);
               rd.number(o, p, "beta", c.weights.beta);
               rd.numbers(o, p, "lambda", c.weights.lambda);
               rd.numbers(o, p, "s", c.weights.s);
               rd.number(o, p, "eps_cfg", c.weights.eps_cfg);
               rd.boolean(o, p, "suppress_terminal", c.weights.suppress_terminal);
               rd.number(o, p, "suppression_ratio", c.weights.suppression_ratio);
               rd.numbers(o, p, "c_lambda", c.weights.c_lambda);
             });
  rd.section(root, "ensemble", {"M", "seed"}, [&](const json& o, const std::string& p) {
    rd.unsigned64(o, p, "M", c.ensemble.paths);
    rd.unsigned64(o, p, "seed", c.ensemble.seed);
  });
  rd.section(root, "coefficients", {"a", "b", "c", "g"}, [&](const json& o, const std::string& p) {
    rd.number(o, p, "a", c.coefficients.a);
    rd.number(o, p, "b", c.coefficients.b);
    rd.number(o, p, "c", c.coefficients.c);
    rd.number(o, p, "g", c.coefficients.g);
  });
  rd.section(root, "family",
             {"name", "amplitude", "modes", "family_seed", "pairs", "band", "omegas", "x_left", "epsilon",
              "delta_fraction"},
             [&](const json& o, const std::string& p) {
               rd.string(o, p, "name", c.family.name);
               rd.number(o, p, "amplitude", c.family.amplitude);
               rd.integer(o, p, "modes", c.family.modes);
               rd.unsigned64(o, p, "family_seed", c.family.family_seed);
               rd.unsigned64(o, p, "pairs", c.family.pairs);
               rd.number(o, p, "band", c.family.band);
               rd.numbers(o, p, "omegas", c.family.omegas);
               rd.number(o, p, "x_left", c.family.x_left);
               rd.number(o, p, "epsilon", c.family.epsilon);
               rd.number(o, p, "delta_fraction", c.family.delta_fraction);
             });
  rd.section(root, "identities", {"trials"},
             [&](const json& o, const std::string& p) { rd.unsigned64(o, p, "trials", c.identities.trials); });
  rd.section(root, "continuation", {"enabled", "N", "K", "T", "alpha"}, [&](const json& o, const std::string& p) {
    rd.boolean(o, p, "enabled", c.continuation.enabled);
    rd.integer(o, p, "N", c.continuation.interior);
    rd.integer(o, p, "K", c.continuation.steps);
    rd.number(o, p, "T", c.continuation.horizon);
    rd.numbers(o, p, "alpha", c.continuation.alpha);
  });
  rd.section(root, "output", {"file", "every"}, [&](const json& o, const std::string& p) {
    rd.string(o, p, "file", c.output.file);
    rd.integer(o, p, "every", c.output.every);
  });

  // Defaults that depend on the command.
  if (c.family.name.empty()) {
    if (c.command == "simulate") c.family.name = "sine";
    if (c.command == "verify-carleman") c.family.name = "driven-noise";
    if (c.command == "inverse-source") c.family.name = "separable";
    if (c.command == "cauchy") c.family.name = "sideways";
  }
  if (c.output.file.empty() && !c.command.empty()) c.output.file = c.command + ".csv";

  // Value checks.
  auto& fail = problems;
  auto bad = [&](const std::string& path, const std::string& msg) { fail.push_back(path + ": " + msg); };
  if (!(c.grid.length > 0.0)) bad("grid.L", "must be positive");
  for (std::size_t i = 0; i < c.grid.interior.size(); ++i) {
    if (c.grid.interior[i] < 2) bad("grid.N_list[" + std::to_string(i) + "]", "N must be >= 2");
  }
  if (!(c.time.horizon > 0.0)) bad("time.T", "must be positive");
  const bool grid_ok = c.grid.length > 0.0 && !c.grid.interior.empty() &&
                       std::all_of(c.grid.interior.begin(), c.grid.interior.end(), [](int n) { return n >= 2; });
  if (steps) {
    if (*steps < 1) bad("time.K", "must be >= 1");
    else c.time.steps = *steps;
  } else if (dt) {
    if (!(*dt > 0.0)) bad("time.dt", "must be positive");
    else if (c.time.horizon > 0.0) c.time.steps = std::max(1, static_cast<int>(std::ceil(c.time.horizon / *dt - 1e-9)));
  } else if (grid_ok && c.time.horizon > 0.0) {
    const double h = c.h_min();
    c.time.steps = std::max(1, static_cast<int>(std::ceil(c.time.horizon / (0.25 * h * h) - 1e-9)));
  }
  if (c.ensemble.paths < 1) bad("ensemble.M", "must be >= 1");
  if (c.output.every < 1) bad("output.every", "must be >= 1");
  if (c.output.file.find('/') != std::string::npos) bad("output.file", "must be a plain file name");

  const std::string& cmd = c.command;
  if (cmd != "simulate" && c.coefficients.g != 0.0) bad("coefficients.g", "only simulate takes an additive noise amplitude");
  if (cmd == "inverse-source" && c.coefficients.c != 0.0) bad("coefficients.c", "inverse-source uses c = 0");
  if (cmd == "verify-carleman" && (c.coefficients.a != 0.0 || c.coefficients.b != 0.0 || c.coefficients.c != 0.0)) {
    bad("coefficients", "verify-carleman families fix their own coefficients");
  }
  if (cmd == "simulate" && c.family.name != "sine" && c.family.name != "zero") {
    bad("family.name", "simulate supports 'sine' or 'zero'");
  }
  if (cmd == "verify-carleman") {
    if (c.family.name != "driven-noise" && c.family.name != "zero") {
      bad("family.name", "verify-carleman supports 'driven-noise' or 'zero'");
    }
    if (c.family.modes < 1) bad("family.modes", "must be >= 1");
    const auto& w = c.weights;
    if (w.x_star >= 0.0 && w.x_star <= c.grid.length) bad("weights.x_star", "must lie outside [0, L]");
    if (!(w.t0 > 0.0 && w.t0 < c.time.horizon)) bad("weights.t0", "must lie in (0, T)");
    if (!(w.beta >= 0.0)) bad("weights.beta", "must be >= 0");
    if (!(w.eps_cfg > 0.0)) bad("weights.eps_cfg", "must be positive");
    if (!(w.suppression_ratio > 0.0 && w.suppression_ratio < 1.0)) {
      bad("weights.suppression_ratio", "must lie in (0, 1)");
    }
    for (std::size_t i = 0; i < w.lambda.size(); ++i) {
      if (!(w.lambda[i] >= 1.0)) bad("weights.lambda[" + std::to_string(i) + "]", "must be >= 1");
    }
    for (std::size_t i = 0; i < w.c_lambda.size(); ++i) {
      if (!(w.c_lambda[i] >= 0.0)) bad("weights.c_lambda[" + std::to_string(i) + "]", "must be >= 0");
    }
    if (grid_ok && w.eps_cfg > 0.0) {
      const double bound = std::sqrt(w.eps_cfg / c.h_min());
      for (std::size_t i = 0; i < w.s.size(); ++i) {
        if (!(w.s[i] > 0.0)) {
          bad("weights.s[" + std::to_string(i) + "]", "must be positive");
        } else if (w.s[i] > bound) {
          bad("weights.s[" + std::to_string(i) + "]",
              "s = " + detail::fmt(w.s[i]) + " exceeds the window bound sqrt(eps_cfg/h_min) = " + detail::fmt(bound));
        }
      }
    }
  }
  if (cmd == "inverse-source") {
    if (c.family.name != "separable") bad("family.name", "inverse-source supports 'separable'");
    if (c.family.pairs < 1) bad("family.pairs", "must be >= 1");
    if (!(c.family.band > 1.0)) bad("family.band", "must exceed 1");
  }
  if (cmd == "cauchy") {
    if (c.family.name != "sideways" && c.family.name != "zero") bad("family.name", "cauchy supports 'sideways' or 'zero'");
    const auto& f = c.family;
    for (std::size_t i = 0; i < f.omegas.size(); ++i) {
      if (!(f.omegas[i] > 0.0)) bad("family.omegas[" + std::to_string(i) + "]", "must be positive");
    }
    if (!(f.x_left > 0.0 && f.x_left < c.grid.length)) bad("family.x_left", "must lie in (0, L)");
    if (!(f.epsilon > 0.0 && f.epsilon < 0.5 * c.time.horizon)) bad("family.epsilon", "must lie in (0, T/2)");
    if (!(f.delta_fraction > 0.0)) bad("family.delta_fraction", "must be positive");
    if (f.x_left > 0.0 && f.x_left < c.grid.length) {
      const double q = f.x_left / c.grid.length;
      const int nmin = static_cast<int>(std::floor(q / (1.0 - q))) + 1;
      for (std::size_t i = 0; i < c.grid.interior.size(); ++i) {
        if (c.grid.interior[i] < nmin) {
          bad("grid.N_list[" + std::to_string(i) + "]",
              "G0 has no interior node; need N >= " + std::to_string(nmin));
        }
      }
    }
    const auto& k = c.continuation;
    if (k.enabled) {
      if (k.interior < 2) bad("continuation.N", "must be >= 2");
      if (k.steps < 1) bad("continuation.K", "must be >= 1");
      if (!(k.horizon > 2.0 * f.epsilon)) bad("continuation.T", "must exceed 2 * family.epsilon");
      for (std::size_t i = 0; i < k.alpha.size(); ++i) {
        if (!(k.alpha[i] > 0.0)) bad("continuation.alpha[" + std::to_string(i) + "]", "must be positive");
      }
    }
  }
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

/// Canonical JSON with every default and the resolved K filled in.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["command"] = c.command;
  j["grid"] = {{"L", c.grid.length}, {"N_list", c.grid.interior}};
  j["time"] = {{"T", c.time.horizon}, {"K", c.time.steps}};
  const auto& w = c.weights;
  j["weights"] = {{"x_star", w.x_star},
                  {"t0", w.t0},
                  {"beta", w.beta},
                  {"lambda", w.lambda},
                  {"s", w.s},
                  {"eps_cfg", w.eps_cfg},
                  {"suppress_terminal", w.suppress_terminal},
                  {"suppression_ratio", w.suppression_ratio},
                  {"c_lambda", w.c_lambda}};
  j["ensemble"] = {{"M", c.ensemble.paths}, {"seed", c.ensemble.seed}};
  j["coefficients"] = {{"a", c.coefficients.a}, {"b", c.coefficients.b}, {"c", c.coefficients.c}, {"g", c.coefficients.g}};
  const auto& f = c.family;
  j["family"] = {{"name", f.name},         {"amplitude", f.amplitude}, {"modes", f.modes},
                 {"family_seed", f.family_seed}, {"pairs", f.pairs}, {"band", f.band},
                 {"omegas", f.omegas},     {"x_left", f.x_left},       {"epsilon", f.epsilon},
                 {"delta_fraction", f.delta_fraction}};
  j["identities"] = {{"trials", c.identities.trials}};
  const auto& k = c.continuation;
  j["continuation"] = {{"enabled", k.enabled}, {"N", k.interior}, {"K", k.steps}, {"T", k.horizon}, {"alpha", k.alpha}};
  j["output"] = {{"file", c.output.file}, {"every", c.output.every}};
  return j;
}

inline std::string serialize_config(const ExperimentConfig& c) { return to_json(c).dump(2); }

/// FNV-1a of the canonical one-line JSON.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t hsh = 1469598103934665603ull;
  for (unsigned char ch : to_json(c).dump()) {
    hsh ^= ch;
    hsh *= 1099511628211ull;
  }
  return hsh;
}

}  // namespace carleman_lab
