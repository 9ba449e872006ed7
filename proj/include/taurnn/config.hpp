#pragma once

// Flat `key = value` run configuration.
//
//   # comment            blank lines and text after '#' are ignored
//   task = mackey_glass  adding | mackey_glass | enso
//   cell = tau_gru       tau_gru | simple_delay_gru
//   d = 16
//   grid.alpha = 0, 1    lists are comma separated
//
// Required: task, cell, d, lr, epochs, seed, tau (and N for the adding task).
// Optional: alpha, beta, weighting (on|off), batch_size, n_train, n_test,
// data_seed, grad_clip, N, n_seeds, grid.alpha, grid.beta, grid.tau,
// grid.weighting, grid.extra (simple_delay_gru).

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taurnn/training.hpp"

namespace taurnn {

/// Carries every problem found in a config, one per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& ps) {
    std::string s = "invalid config:";
    for (const auto& p : ps) s += "\n  " + p;
    return s;
  }
  std::vector<std::string> problems_;
};

struct RunConfig {
  TrainConfig train;
  AblationGrid grid;
  std::size_t n_seeds = 8;
  std::map<std::string, std::string> raw;  // normalized key -> value text
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline const std::set<std::string>& required_keys() {
  static const std::set<std::string> k{"task", "cell", "d", "lr", "epochs", "seed", "tau"};
  return k;
}

inline const std::set<std::string>& optional_keys() {
  static const std::set<std::string> k{
      "alpha",      "beta",       "weighting",  "batch_size",     "n_train",
      "n_test",     "data_seed",  "grad_clip",  "N",              "n_seeds",
      "grid.alpha", "grid.beta",  "grid.tau",   "grid.weighting", "grid.extra"};
  return k;
}

class ValueParser {
 public:
  explicit ValueParser(std::vector<std::string>& problems) : problems_(problems) {}

  template <class T>
  bool integer(const std::string& key, const std::string& text, T& out) {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      problems_.push_back("key '" + key + "': expected a non-negative integer, got '" +
                          text + "'");
      return false;
    }
    out = v;
    return true;
  }

  bool real(const std::string& key, const std::string& text, double& out) {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used == text.size()) {
        out = v;
        return true;
      }
    } catch (const std::exception&) {
    }
    problems_.push_back("key '" + key + "': expected a number, got '" + text + "'");
    return false;
  }

  bool flag(const std::string& key, const std::string& text, bool& out) {
    if (text == "on" || text == "true" || text == "1") return out = true, true;
    if (text == "off" || text == "false" || text == "0") return out = false, true;
    problems_.push_back("key '" + key + "': expected on or off, got '" + text + "'");
    return false;
  }

  static std::vector<std::string> list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) items.push_back(trim(item));
    return items;
  }

 private:
  std::vector<std::string>& problems_;
};

}  // namespace detail

/// Parses and validates a config. All problems (syntax, unknown keys,
/// missing keys, bad values) are collected before throwing ConfigError.
inline RunConfig parse_config(std::istream& is) {
  std::vector<std::string> problems;
  RunConfig rc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (!detail::required_keys().count(key) && !detail::optional_keys().count(key)) {
      problems.push_back("unknown key '" + key + "' (line " + std::to_string(lineno) + ")");
      continue;
    }
    if (rc.raw.count(key)) {
      problems.push_back("duplicate key '" + key + "' (line " + std::to_string(lineno) + ")");
      continue;
    }
    if (value.empty()) {
      problems.push_back("key '" + key + "' has no value (line " + std::to_string(lineno) + ")");
      continue;
    }
    rc.raw[key] = value;
  }
  for (const auto& k : detail::required_keys()) {
    if (!rc.raw.count(k)) problems.push_back("missing required key '" + k + "'");
  }
  if (rc.raw.count("task") && rc.raw["task"] == "adding" && !rc.raw.count("N")) {
    problems.push_back("missing required key 'N' (required for task = adding)");
  }

  detail::ValueParser vp(problems);
  TrainConfig& tc = rc.train;
  auto has = [&](const char* k) { return rc.raw.count(k) > 0; };
  if (has("task")) {
    try {
      tc.task = task_kind_from_string(rc.raw["task"]);
    } catch (const std::invalid_argument&) {
      problems.push_back("key 'task': expected adding, mackey_glass or enso, got '" +
                         rc.raw["task"] + "'");
    }
  }
  if (has("cell")) {
    const std::string& c = rc.raw["cell"];
    if (c == "tau_gru") tc.variant.kind = CellKind::TauGru;
    else if (c == "simple_delay_gru") tc.variant.kind = CellKind::SimpleDelayGru;
    else problems.push_back("key 'cell': expected tau_gru or simple_delay_gru, got '" + c + "'");
  }
  if (has("d")) vp.integer("d", rc.raw["d"], tc.d);
  if (has("lr")) vp.real("lr", rc.raw["lr"], tc.lr);
  if (has("epochs")) vp.integer("epochs", rc.raw["epochs"], tc.epochs);
  if (has("seed")) vp.integer("seed", rc.raw["seed"], tc.seed);
  if (has("tau")) vp.integer("tau", rc.raw["tau"], tc.variant.delay_m);
  if (has("alpha")) vp.real("alpha", rc.raw["alpha"], tc.variant.alpha);
  if (has("beta")) vp.real("beta", rc.raw["beta"], tc.variant.beta);
  if (has("weighting")) vp.flag("weighting", rc.raw["weighting"], tc.variant.use_weighting_a);
  if (has("batch_size")) vp.integer("batch_size", rc.raw["batch_size"], tc.batch_size);
  if (has("n_train")) vp.integer("n_train", rc.raw["n_train"], tc.n_train);
  if (has("n_test")) vp.integer("n_test", rc.raw["n_test"], tc.n_test);
  tc.data_seed = tc.seed;
  if (has("data_seed")) vp.integer("data_seed", rc.raw["data_seed"], tc.data_seed);
  if (has("grad_clip")) {
    double g = 0.0;
    if (vp.real("grad_clip", rc.raw["grad_clip"], g)) tc.grad_clip = g;
  }
  if (has("N")) vp.integer("N", rc.raw["N"], tc.N);
  if (has("n_seeds")) vp.integer("n_seeds", rc.raw["n_seeds"], rc.n_seeds);

  AblationGrid& g = rc.grid;
  if (has("grid.alpha")) {
    g.alphas.clear();
    for (const auto& s : detail::ValueParser::list(rc.raw["grid.alpha"])) {
      double v = 0.0;
      if (vp.real("grid.alpha", s, v)) g.alphas.push_back(v);
    }
  } else {
    g.alphas = {tc.variant.alpha};
  }
  if (has("grid.beta")) {
    g.betas.clear();
    for (const auto& s : detail::ValueParser::list(rc.raw["grid.beta"])) {
      double v = 0.0;
      if (vp.real("grid.beta", s, v)) g.betas.push_back(v);
    }
  } else {
    g.betas = {tc.variant.beta};
  }
  if (has("grid.tau")) {
    for (const auto& s : detail::ValueParser::list(rc.raw["grid.tau"])) {
      std::size_t v = 0;
      if (vp.integer("grid.tau", s, v)) g.taus.push_back(v);
    }
  }
  if (has("grid.weighting")) {
    g.weightings.clear();
    for (const auto& s : detail::ValueParser::list(rc.raw["grid.weighting"])) {
      bool v = true;
      if (vp.flag("grid.weighting", s, v)) g.weightings.push_back(v);
    }
  } else {
    g.weightings = {tc.variant.use_weighting_a};
  }
  if (has("grid.extra")) {
    for (const auto& s : detail::ValueParser::list(rc.raw["grid.extra"])) {
      if (s == "simple_delay_gru") g.include_simple_delay_gru = true;
      else problems.push_back("key 'grid.extra': unknown entry '" + s + "'");
    }
  }

  if (problems.empty()) {
    try {
      tc.validate();
    } catch (const std::invalid_argument& e) {
      problems.push_back(e.what());
    }
    if (rc.n_seeds < 2) problems.push_back("key 'n_seeds': must be >= 2");
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return rc;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
  return parse_config(in);
}

/// Canonical text (sorted keys), the input of the manifest config hash.
inline std::string canonical_config(const RunConfig& rc) {
  std::string s;
  for (const auto& [k, v] : rc.raw) s += k + " = " + v + "\n";
  return s;
}

}  // namespace taurnn
