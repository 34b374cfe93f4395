#pragma once

// Strict JSON run configuration. Every object rejects keys it does not know.
//
// {
//   "model":      {"name": "saturating_exponential", "options": {}},
//   "methods":    ["ml", "ql", "wls", "dwls"],
//   "fit":        {"tol_rel": 1e-8, "tol_abs": 1e-10, "max_iter": 100,
//                  "damping": 1e-3, "start": "auto" | [numbers]},
//   "fit_mode":   "common-sigma" | "separate",
//   "gamma_bracket": [lo, hi],
//   "simulation": {"design": "partial_bleach" | "single_curve",
//                  "theta0": [...], "reference": {...}, "grid1": [...],
//                  "grid2": [...], "sigmas": [...], "replicates": 1000,
//                  "seed": 1, "antithetic": bool, "reject_nonpositive": true,
//                  "start": "truth" | "auto"},
//   "output":     {"format": "text" | "json" | "both", "path": "..."}
// }

#include <nlohmann/json.hpp>

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "propfit/equivalent_dose.hpp"
#include "propfit/errors.hpp"
#include "propfit/estimators.hpp"
#include "propfit/io/csv.hpp"
#include "propfit/model.hpp"
#include "propfit/simulation.hpp"

namespace propfit::io {

using json = nlohmann::json;

enum class OutputFormat { text, json, both };

[[nodiscard]] inline OutputFormat parse_format(const std::string& s) {
  if (s == "text") return OutputFormat::text;
  if (s == "json") return OutputFormat::json;
  if (s == "both") return OutputFormat::both;
  throw InputError("unknown output format '" + s + "' (expected text, json or both)");
}

// Two-curve sigma handling requested by the user. common-sigma fits ML
// simultaneously with one sigma; the other methods do not depend on it.
enum class SigmaMode { common_sigma, separate };

[[nodiscard]] inline SigmaMode parse_sigma_mode(const std::string& s) {
  if (s == "common-sigma") return SigmaMode::common_sigma;
  if (s == "separate") return SigmaMode::separate;
  throw InputError("unknown fit mode '" + s + "' (expected separate or common-sigma)");
}

[[nodiscard]] inline const char* sigma_mode_name(SigmaMode m) {
  return m == SigmaMode::common_sigma ? "common-sigma" : "separate";
}

[[nodiscard]] inline FitMode fit_mode_for(Method m, SigmaMode s) {
  return (m == Method::ml && s == SigmaMode::common_sigma) ? FitMode::common_sigma : FitMode::separate;
}

struct SimulationConfig {
  std::string design = "partial_bleach";
  std::optional<std::vector<double>> theta0;
  PartialBleachReference reference;
  std::optional<std::vector<double>> grid1;
  std::optional<std::vector<double>> grid2;
  std::vector<double> sigmas{0.01, 0.02, 0.03, 0.04, 0.05, 0.06};
  int replicates = 1000;
  std::uint64_t seed = 1;
  std::optional<bool> antithetic;  // default: on for partial_bleach
  bool reject_nonpositive = true;
  StartMode start = StartMode::truth;
};

struct RunConfig {
  std::string model = "saturating_exponential";
  ModelOptions model_options;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  FitOptions fit;
  SigmaMode fit_mode = SigmaMode::common_sigma;
  std::optional<std::pair<double, double>> gamma_bracket;
  std::optional<SimulationConfig> simulation;
  OutputFormat format = OutputFormat::text;
  std::string output_path;
};

namespace detail {

inline void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw InputError("config: '" + where + "' must be an object");
}

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require_object(j, where);
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw InputError("config: unknown key '" + key + "' in " + where);
  }
}

inline double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw InputError("config: '" + where + "' must be a number");
  return j.get<double>();
}

inline std::int64_t get_integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw InputError("config: '" + where + "' must be an integer");
  return j.get<std::int64_t>();
}

inline bool get_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) throw InputError("config: '" + where + "' must be true or false");
  return j.get<bool>();
}

inline std::string get_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw InputError("config: '" + where + "' must be a string");
  return j.get<std::string>();
}

inline std::vector<double> get_numbers(const json& j, const std::string& where) {
  if (!j.is_array()) throw InputError("config: '" + where + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(get_number(v, where));
  return out;
}

inline Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }

}  // namespace detail

[[nodiscard]] inline RunConfig parse_config(const json& j) {
  using namespace detail;
  check_keys(j, "config", {"model", "methods", "fit", "fit_mode", "gamma_bracket", "simulation", "output"});
  RunConfig c;
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model", {"name", "options"});
    if (m.contains("name")) c.model = get_string(m["name"], "model.name");
    if (m.contains("options")) {
      require_object(m["options"], "model.options");
      for (const auto& [k, v] : m["options"].items()) c.model_options[k] = get_number(v, "model.options." + k);
    }
  }
  if (j.contains("methods")) {
    if (!j["methods"].is_array() || j["methods"].empty()) throw InputError("config: 'methods' must be a non-empty array");
    c.methods.clear();
    for (const auto& v : j["methods"]) {
      const std::string s = get_string(v, "methods");
      if (s == "all") {
        c.methods.assign(kAllMethods.begin(), kAllMethods.end());
      } else {
        c.methods.push_back(parse_method(s));
      }
    }
  }
  if (j.contains("fit")) {
    const json& f = j["fit"];
    check_keys(f, "fit", {"tol_rel", "tol_abs", "max_iter", "damping", "start"});
    if (f.contains("tol_rel")) c.fit.tol_rel = get_number(f["tol_rel"], "fit.tol_rel");
    if (f.contains("tol_abs")) c.fit.tol_abs = get_number(f["tol_abs"], "fit.tol_abs");
    if (f.contains("max_iter")) c.fit.max_iter = static_cast<int>(get_integer(f["max_iter"], "fit.max_iter"));
    if (f.contains("damping")) c.fit.damping = get_number(f["damping"], "fit.damping");
    if (f.contains("start")) {
      if (f["start"].is_string()) {
        if (f["start"].get<std::string>() != "auto") throw InputError("config: 'fit.start' must be \"auto\" or an array");
      } else {
        c.fit.start = to_vector(get_numbers(f["start"], "fit.start"));
      }
    }
    c.fit.validate();
  }
  if (j.contains("fit_mode")) c.fit_mode = parse_sigma_mode(get_string(j["fit_mode"], "fit_mode"));
  if (j.contains("gamma_bracket")) {
    const auto b = get_numbers(j["gamma_bracket"], "gamma_bracket");
    if (b.size() != 2 || !(b[0] < b[1])) throw InputError("config: 'gamma_bracket' must be [lo, hi] with lo < hi");
    c.gamma_bracket = std::make_pair(b[0], b[1]);
  }
  if (j.contains("simulation")) {
    const json& s = j["simulation"];
    check_keys(s, "simulation", {"design", "theta0", "reference", "grid1", "grid2", "sigmas", "replicates", "seed",
                                 "antithetic", "reject_nonpositive", "start"});
    SimulationConfig sc;
    if (s.contains("design")) {
      sc.design = get_string(s["design"], "simulation.design");
      if (sc.design != "partial_bleach" && sc.design != "single_curve") {
        throw InputError("config: 'simulation.design' must be partial_bleach or single_curve");
      }
    }
    if (s.contains("theta0")) sc.theta0 = get_numbers(s["theta0"], "simulation.theta0");
    if (s.contains("reference")) {
      const json& r = s["reference"];
      check_keys(r, "simulation.reference", {"alpha1", "alpha2", "alpha3", "beta2", "beta3", "gamma"});
      auto set = [&](const char* k, double& dst) {
        if (r.contains(k)) dst = get_number(r[k], std::string("simulation.reference.") + k);
      };
      set("alpha1", sc.reference.alpha1);
      set("alpha2", sc.reference.alpha2);
      set("alpha3", sc.reference.alpha3);
      set("beta2", sc.reference.beta2);
      set("beta3", sc.reference.beta3);
      set("gamma", sc.reference.gamma);
    }
    if (s.contains("grid1")) sc.grid1 = get_numbers(s["grid1"], "simulation.grid1");
    if (s.contains("grid2")) sc.grid2 = get_numbers(s["grid2"], "simulation.grid2");
    if (s.contains("sigmas")) sc.sigmas = get_numbers(s["sigmas"], "simulation.sigmas");
    if (s.contains("replicates")) {
      const auto r = get_integer(s["replicates"], "simulation.replicates");
      if (r < 1 || r > 100000000) throw InputError("config: 'simulation.replicates' must be in [1, 1e8]");
      sc.replicates = static_cast<int>(r);
    }
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned()) throw InputError("config: 'simulation.seed' must be a non-negative integer");
      sc.seed = s["seed"].get<std::uint64_t>();
    }
    if (s.contains("antithetic")) sc.antithetic = get_bool(s["antithetic"], "simulation.antithetic");
    if (s.contains("reject_nonpositive")) sc.reject_nonpositive = get_bool(s["reject_nonpositive"], "simulation.reject_nonpositive");
    if (s.contains("start")) {
      const std::string st = get_string(s["start"], "simulation.start");
      if (st == "truth") {
        sc.start = StartMode::truth;
      } else if (st == "auto") {
        sc.start = StartMode::automatic;
      } else {
        throw InputError("config: 'simulation.start' must be truth or auto");
      }
    }
    c.simulation = sc;
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, "output", {"format", "path"});
    if (o.contains("format")) c.format = parse_format(get_string(o["format"], "output.format"));
    if (o.contains("path")) c.output_path = get_string(o["path"], "output.path");
  }
  return c;
}

[[nodiscard]] inline RunConfig parse_config_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

[[nodiscard]] inline RunConfig load_config(const std::string& path) { return parse_config_text(read_text_file(path)); }

// Simulation design described by a config. Two-curve designs use the
// saturating exponential for both curves.
[[nodiscard]] inline SimDesign design_from_config(const RunConfig& c, const ModelRegistry& registry = ModelRegistry::builtin()) {
  const SimulationConfig sc = c.simulation.value_or(SimulationConfig{});
  SimDesign d;
  if (sc.design == "partial_bleach") {
    if (c.model != "saturating_exponential") {
      throw InputError("the partial_bleach design uses model saturating_exponential, not '" + c.model + "'");
    }
    d = partial_bleach_design(sc.reference);
    if (sc.theta0) d.theta0 = detail::to_vector(*sc.theta0);
    if (sc.grid1) d.grids[0] = *sc.grid1;
    if (sc.grid2) d.grids[1] = *sc.grid2;
    d.antithetic = sc.antithetic.value_or(true);
    d.ml_common_sigma = c.fit_mode == SigmaMode::common_sigma;
    d.gamma_bracket = c.gamma_bracket;
  } else {
    if (!sc.theta0) throw InputError("config: single_curve simulations need 'simulation.theta0'");
    if (!sc.grid1) throw InputError("config: single_curve simulations need 'simulation.grid1'");
    if (sc.grid2) throw InputError("config: 'simulation.grid2' applies to the partial_bleach design only");
    d = single_curve_design(registry.make(c.model, -1, c.model_options), *sc.grid1, detail::to_vector(*sc.theta0));
    d.antithetic = sc.antithetic.value_or(false);
  }
  d.sigmas = sc.sigmas;
  d.replicates = sc.replicates;
  d.seed = sc.seed;
  d.methods = c.methods;
  d.reject_nonpositive = sc.reject_nonpositive;
  d.start = sc.start;
  d.fit = c.fit;
  d.fit.start.reset();
  d.validate();
  return d;
}

}  // namespace propfit::io
