#pragma once

#include "latent_imh/imh.hpp"
#include "latent_imh/metrics.hpp"
#include "latent_imh/nuts.hpp"
#include "latent_imh/problems/diagonal.hpp"
#include "latent_imh/problems/graph_laplacian.hpp"
#include "latent_imh/problems/helmholtz.hpp"
#include "latent_imh/two_stage.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <variant>

namespace latent_imh {

using Json = nlohmann::ordered_json;

/// Config schema violation, naming the offending field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& reason)
      : std::invalid_argument("config field '" + field + "': " + reason), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

inline constexpr int kSchemaVersion = 1;

struct NoiseConfig {
  std::string kind = "relative";  // sigma | log10-snr | relative
  double value = 0.1;
  bool operator==(const NoiseConfig&) const = default;
};

struct PriorConfig {
  std::string kind = "standard-normal";  // standard-normal | ill-conditioned-gaussian | mixture | laplace
  double condition = 100.0;
  Index components = 3;
  double spread = 3.0;
  bool operator==(const PriorConfig&) const = default;
};

struct DiagonalProblemConfig {
  Index d = 500;
  Index d_y = 100;
  double spectral_error = 0.06;
  std::string observation = "rotated";
  NoiseConfig noise{"log10-snr", 2.5};
  PriorConfig prior;
  bool operator==(const DiagonalProblemConfig&) const = default;
};

struct GraphProblemConfig {
  Index lattice_side = 10;
  Index k_neighbors = 6;
  Index d_x = 100;
  Index d_y = 20;
  double pcg_tolerance = 1e-2;
  double exact_tol = 1e-12;
  double regularization = 1e-6;
  NoiseConfig noise{"relative", 0.1};
  bool operator==(const GraphProblemConfig&) const = default;
};

struct HelmholtzProblemConfig {
  Index n_u = 32;
  Index n_u_coarse = 16;
  Index n_x = 8;
  double wavenumber = 3.0;
  Index events = 2;
  double tv_lambda = 1.0;
  double tv_eps = 1e-2;
  double observation_ratio = 0.2;
  NoiseConfig noise{"relative", 0.1};
  bool operator==(const HelmholtzProblemConfig&) const = default;
};

using ProblemConfig = std::variant<DiagonalProblemConfig, GraphProblemConfig, HelmholtzProblemConfig>;

struct ImhSamplerConfig {
  std::string kind = "latent";        // approx | latent
  std::string inner = "automatic";    // automatic | exact-gaussian | exact-mixture | nuts
  std::string ratio_mode = "linear";  // linear | black-box
  Index inner_steps = 16;
  Index inner_warmup = 200;
  double inner_target_accept = 0.8;
  bool operator==(const ImhSamplerConfig&) const = default;
};

struct MalaSamplerConfig {
  double step = 0.1;
  bool adapt = true;
  Index n_warmup = 1000;
  double target_accept = 0.5;
  bool operator==(const MalaSamplerConfig&) const = default;
};

struct NutsSamplerConfig {
  Index n_warmup = 500;
  double target_accept = 0.45;
  int max_depth = 10;
  double initial_step = 0.0;
  bool operator==(const NutsSamplerConfig&) const = default;
};

struct TwoStageSamplerConfig {
  std::string first_stage = "approx-posterior";  // approx-posterior | latent-posterior
  MalaSamplerConfig mala;
  bool operator==(const TwoStageSamplerConfig&) const = default;
};

using SamplerSettings = std::variant<ImhSamplerConfig, MalaSamplerConfig, NutsSamplerConfig, TwoStageSamplerConfig>;

struct SamplerConfig {
  std::string name;
  SamplerSettings settings;
  bool operator==(const SamplerConfig&) const = default;
};

struct GroundTruthConfig {
  Index samples = 1000;     // reference draws used for MMD
  Index runs = 4;           // independent reference NUTS runs (non-Gaussian priors)
  Index warmup = 500;
  Index mmd_points = 200;   // chain points compared per checkpoint
  bool operator==(const GroundTruthConfig&) const = default;
};

struct SweepConfig {
  std::string parameter;  // log10_snr | relative_noise | noise_sigma | spectral_error | pcg_tolerance
  std::vector<double> values;
  bool operator==(const SweepConfig&) const = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ProblemConfig problem = DiagonalProblemConfig{};
  std::vector<SamplerConfig> samplers;
  std::optional<Index> n_steps;
  std::optional<std::uint64_t> solve_budget;
  std::vector<Index> checkpoints;
  Index n_chains = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  GroundTruthConfig ground_truth;
  std::optional<SweepConfig> sweep;
  bool operator==(const ExperimentConfig&) const = default;
};

inline const char* sampler_type(const SamplerSettings& s) {
  switch (s.index()) {
    case 0: return std::get<ImhSamplerConfig>(s).kind == "approx" ? "approx-imh" : "latent-imh";
    case 1: return "mala";
    case 2: return "nuts";
    default: return "two-stage";
  }
}

inline const char* problem_family(const ProblemConfig& p) {
  switch (p.index()) {
    case 0: return "diagonal";
    case 1: return "graph-laplacian";
    default: return "helmholtz";
  }
}

namespace detail {

// Reads fields from a JSON object, rejecting unknown keys.
class FieldReader {
 public:
  FieldReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& raw(const std::string& key) const {
    seen_.push_back(key);
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& out) const {
    if (!j_.contains(key)) return;
    seen_.push_back(key);
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(field(key), "must be a boolean");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(field(key), "must be an integer");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw ConfigError(field(key), "must be non-negative");
        }
        out = v.get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(field(key), "must be a number");
        out = v.get<T>();
      } else {
        if (!v.is_string()) throw ConfigError(field(key), "must be a string");
        out = v.get<T>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  template <class T>
  void require(const std::string& key, T& out) const {
    if (!j_.contains(key)) throw ConfigError(field(key), "is required");
    get(key, out);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
        throw ConfigError(field(it.key()), "unknown field");
      }
    }
  }

 private:
  const Json& j_;
  std::string path_;
  mutable std::vector<std::string> seen_;
};

inline void check_choice(const std::string& field, const std::string& value,
                         std::initializer_list<const char*> allowed) {
  std::string list;
  for (const char* a : allowed) {
    if (value == a) return;
    list += list.empty() ? a : std::string(", ") + a;
  }
  throw ConfigError(field, "must be one of {" + list + "}, got '" + value + "'");
}

inline NoiseConfig parse_noise(const Json& j, const std::string& path) {
  FieldReader r(j, path);
  NoiseConfig n;
  r.require("kind", n.kind);
  r.require("value", n.value);
  r.finish();
  check_choice(r.field("kind"), n.kind, {"sigma", "log10-snr", "relative"});
  if (!(n.value > 0.0)) throw ConfigError(r.field("value"), "must be positive");
  return n;
}

inline Json noise_json(const NoiseConfig& n) { return Json{{"kind", n.kind}, {"value", n.value}}; }

inline PriorConfig parse_prior(const Json& j, const std::string& path) {
  FieldReader r(j, path);
  PriorConfig p;
  r.require("kind", p.kind);
  check_choice(r.field("kind"), p.kind, {"standard-normal", "ill-conditioned-gaussian", "mixture", "laplace"});
  r.get("condition", p.condition);
  r.get("components", p.components);
  r.get("spread", p.spread);
  r.finish();
  if (!(p.condition >= 1.0)) throw ConfigError(r.field("condition"), "must be >= 1");
  if (p.components < 1) throw ConfigError(r.field("components"), "must be >= 1");
  return p;
}

inline Json prior_json(const PriorConfig& p) {
  Json j{{"kind", p.kind}};
  if (p.kind == "ill-conditioned-gaussian") j["condition"] = p.condition;
  if (p.kind == "mixture") {
    j["components"] = p.components;
    j["spread"] = p.spread;
  }
  return j;
}

inline ProblemConfig parse_problem(const Json& j) {
  FieldReader r(j, "problem");
  std::string family;
  r.require("family", family);
  check_choice("problem.family", family, {"diagonal", "graph-laplacian", "helmholtz"});
  if (family == "diagonal") {
    DiagonalProblemConfig c;
    r.get("d", c.d);
    r.get("d_y", c.d_y);
    r.get("spectral_error", c.spectral_error);
    r.get("observation", c.observation);
    if (r.has("noise")) c.noise = parse_noise(r.raw("noise"), "problem.noise");
    if (r.has("prior")) c.prior = parse_prior(r.raw("prior"), "problem.prior");
    r.finish();
    if (c.d < 1) throw ConfigError("problem.d", "must be >= 1");
    if (c.d_y < 1 || c.d_y > c.d) throw ConfigError("problem.d_y", "must satisfy 1 <= d_y <= d");
    if (c.spectral_error < 0.0) throw ConfigError("problem.spectral_error", "must be >= 0");
    check_choice("problem.observation", c.observation, {"rotated", "canonical"});
    return c;
  }
  if (family == "graph-laplacian") {
    GraphProblemConfig c;
    r.get("lattice_side", c.lattice_side);
    r.get("k_neighbors", c.k_neighbors);
    r.get("d_x", c.d_x);
    r.get("d_y", c.d_y);
    r.get("pcg_tolerance", c.pcg_tolerance);
    r.get("exact_tol", c.exact_tol);
    r.get("regularization", c.regularization);
    if (r.has("noise")) c.noise = parse_noise(r.raw("noise"), "problem.noise");
    r.finish();
    if (c.lattice_side < 2) throw ConfigError("problem.lattice_side", "must be >= 2");
    if (c.d_x < 1 || c.d_x > c.lattice_side * c.lattice_side * c.lattice_side) {
      throw ConfigError("problem.d_x", "must satisfy 1 <= d_x <= lattice_side^3");
    }
    if (c.d_y < 1 || c.d_y > c.d_x) throw ConfigError("problem.d_y", "must satisfy 1 <= d_y <= d_x");
    if (!(c.pcg_tolerance > 0.0 && c.pcg_tolerance < 1.0)) throw ConfigError("problem.pcg_tolerance", "must lie in (0, 1)");
    if (!(c.exact_tol > 0.0 && c.exact_tol < 1.0)) throw ConfigError("problem.exact_tol", "must lie in (0, 1)");
    if (!(c.regularization > 0.0)) throw ConfigError("problem.regularization", "must be positive");
    return c;
  }
  HelmholtzProblemConfig c;
  r.get("n_u", c.n_u);
  r.get("n_u_coarse", c.n_u_coarse);
  r.get("n_x", c.n_x);
  r.get("wavenumber", c.wavenumber);
  r.get("events", c.events);
  r.get("tv_lambda", c.tv_lambda);
  r.get("tv_eps", c.tv_eps);
  r.get("observation_ratio", c.observation_ratio);
  if (r.has("noise")) c.noise = parse_noise(r.raw("noise"), "problem.noise");
  r.finish();
  try {
    HelmholtzGrid{c.n_u, c.n_u_coarse, c.n_x, c.wavenumber, c.events}.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("problem", e.what());
  }
  if (!(c.tv_lambda > 0.0)) throw ConfigError("problem.tv_lambda", "must be positive");
  if (!(c.tv_eps > 0.0)) throw ConfigError("problem.tv_eps", "must be positive");
  if (!(c.observation_ratio > 0.0 && c.observation_ratio <= 1.0)) {
    throw ConfigError("problem.observation_ratio", "must lie in (0, 1]");
  }
  return c;
}

inline Json problem_json(const ProblemConfig& p) {
  Json j{{"family", problem_family(p)}};
  if (const auto* c = std::get_if<DiagonalProblemConfig>(&p)) {
    j["d"] = c->d;
    j["d_y"] = c->d_y;
    j["spectral_error"] = c->spectral_error;
    j["observation"] = c->observation;
    j["noise"] = noise_json(c->noise);
    j["prior"] = prior_json(c->prior);
  } else if (const auto* c = std::get_if<GraphProblemConfig>(&p)) {
    j["lattice_side"] = c->lattice_side;
    j["k_neighbors"] = c->k_neighbors;
    j["d_x"] = c->d_x;
    j["d_y"] = c->d_y;
    j["pcg_tolerance"] = c->pcg_tolerance;
    j["exact_tol"] = c->exact_tol;
    j["regularization"] = c->regularization;
    j["noise"] = noise_json(c->noise);
  } else {
    const auto& h = std::get<HelmholtzProblemConfig>(p);
    j["n_u"] = h.n_u;
    j["n_u_coarse"] = h.n_u_coarse;
    j["n_x"] = h.n_x;
    j["wavenumber"] = h.wavenumber;
    j["events"] = h.events;
    j["tv_lambda"] = h.tv_lambda;
    j["tv_eps"] = h.tv_eps;
    j["observation_ratio"] = h.observation_ratio;
    j["noise"] = noise_json(h.noise);
  }
  return j;
}

inline void read_mala(const FieldReader& r, MalaSamplerConfig& m, const std::string& path) {
  r.get("step", m.step);
  r.get("adapt", m.adapt);
  r.get("n_warmup", m.n_warmup);
  r.get("target_accept", m.target_accept);
  if (!(m.step > 0.0)) throw ConfigError(path + ".step", "must be positive");
  if (m.n_warmup < 0) throw ConfigError(path + ".n_warmup", "must be >= 0");
  if (!(m.target_accept > 0.0 && m.target_accept < 1.0)) throw ConfigError(path + ".target_accept", "must lie in (0, 1)");
}

inline Json mala_json(const MalaSamplerConfig& m) {
  return Json{{"step", m.step}, {"adapt", m.adapt}, {"n_warmup", m.n_warmup}, {"target_accept", m.target_accept}};
}

inline SamplerConfig parse_sampler(const Json& j, const std::string& path) {
  FieldReader r(j, path);
  std::string type;
  r.require("type", type);
  check_choice(r.field("type"), type, {"approx-imh", "latent-imh", "mala", "nuts", "two-stage"});
  SamplerConfig s;
  s.name = type;
  r.get("name", s.name);
  if (s.name.empty()) throw ConfigError(r.field("name"), "must be non-empty");
  static const Json empty = Json::object();
  const std::string spath = r.field("settings");
  const FieldReader st(r.has("settings") ? r.raw("settings") : empty, spath);
  if (type == "approx-imh" || type == "latent-imh") {
    ImhSamplerConfig c;
    c.kind = type == "approx-imh" ? "approx" : "latent";
    st.get("inner", c.inner);
    st.get("ratio_mode", c.ratio_mode);
    st.get("inner_steps", c.inner_steps);
    st.get("inner_warmup", c.inner_warmup);
    st.get("inner_target_accept", c.inner_target_accept);
    check_choice(spath + ".inner", c.inner, {"automatic", "exact-gaussian", "exact-mixture", "nuts"});
    check_choice(spath + ".ratio_mode", c.ratio_mode, {"linear", "black-box"});
    if (c.inner_steps < 1) throw ConfigError(spath + ".inner_steps", "must be >= 1");
    if (c.inner_warmup < 0) throw ConfigError(spath + ".inner_warmup", "must be >= 0");
    s.settings = c;
  } else if (type == "mala") {
    MalaSamplerConfig c;
    read_mala(st, c, spath);
    s.settings = c;
  } else if (type == "nuts") {
    NutsSamplerConfig c;
    st.get("n_warmup", c.n_warmup);
    st.get("target_accept", c.target_accept);
    st.get("max_depth", c.max_depth);
    st.get("initial_step", c.initial_step);
    if (c.n_warmup < 0) throw ConfigError(spath + ".n_warmup", "must be >= 0");
    if (!(c.target_accept > 0.0 && c.target_accept < 1.0)) throw ConfigError(spath + ".target_accept", "must lie in (0, 1)");
    if (c.max_depth < 1) throw ConfigError(spath + ".max_depth", "must be >= 1");
    s.settings = c;
  } else {
    TwoStageSamplerConfig c;
    st.get("first_stage", c.first_stage);
    check_choice(spath + ".first_stage", c.first_stage, {"approx-posterior", "latent-posterior"});
    read_mala(st, c.mala, spath);
    s.settings = c;
  }
  st.finish();
  r.finish();
  return s;
}

inline Json sampler_json(const SamplerConfig& s) {
  Json j{{"type", sampler_type(s.settings)}, {"name", s.name}};
  Json st;
  if (const auto* c = std::get_if<ImhSamplerConfig>(&s.settings)) {
    st = Json{{"inner", c->inner},
              {"ratio_mode", c->ratio_mode},
              {"inner_steps", c->inner_steps},
              {"inner_warmup", c->inner_warmup},
              {"inner_target_accept", c->inner_target_accept}};
  } else if (const auto* c = std::get_if<MalaSamplerConfig>(&s.settings)) {
    st = mala_json(*c);
  } else if (const auto* c = std::get_if<NutsSamplerConfig>(&s.settings)) {
    st = Json{{"n_warmup", c->n_warmup},
              {"target_accept", c->target_accept},
              {"max_depth", c->max_depth},
              {"initial_step", c->initial_step}};
  } else {
    const auto& t = std::get<TwoStageSamplerConfig>(s.settings);
    st = mala_json(t.mala);
    st["first_stage"] = t.first_stage;
  }
  j["settings"] = st;
  return j;
}

}  // namespace detail

/// Checks the cross-field invariants of a config.
inline void validate(const ExperimentConfig& c) {
  if (c.schema_version != kSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version " + std::to_string(c.schema_version));
  }
  if (c.samplers.empty()) throw ConfigError("samplers", "must list at least one sampler");
  for (std::size_t i = 0; i < c.samplers.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (c.samplers[i].name == c.samplers[k].name) {
        throw ConfigError("samplers[" + std::to_string(i) + "].name", "duplicate name '" + c.samplers[i].name + "'");
      }
    }
    const std::string& n = c.samplers[i].name;
    if (n.find_first_of("/\\ ") != std::string::npos) {
      throw ConfigError("samplers[" + std::to_string(i) + "].name", "must not contain '/', '\\' or spaces");
    }
  }
  if (c.n_steps.has_value() == c.solve_budget.has_value()) {
    throw ConfigError("n_steps", "exactly one of n_steps and solve_budget must be given");
  }
  if (c.n_steps && *c.n_steps < 1) throw ConfigError("n_steps", "must be >= 1");
  if (c.solve_budget && *c.solve_budget < 1) throw ConfigError("solve_budget", "must be >= 1");
  if (c.checkpoints.empty()) throw ConfigError("checkpoints", "must be non-empty");
  for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
    if (c.checkpoints[i] < 1) throw ConfigError("checkpoints", "entries must be >= 1");
    if (i > 0 && c.checkpoints[i] <= c.checkpoints[i - 1]) {
      throw ConfigError("checkpoints", "must be sorted strictly increasing");
    }
  }
  if (c.n_steps && c.checkpoints.back() > *c.n_steps) throw ConfigError("checkpoints", "last checkpoint exceeds n_steps");
  if (c.n_chains < 1) throw ConfigError("n_chains", "must be >= 1");
  if (c.ground_truth.samples < 2) throw ConfigError("ground_truth.samples", "must be >= 2");
  if (c.ground_truth.runs < 1) throw ConfigError("ground_truth.runs", "must be >= 1");
  if (c.ground_truth.mmd_points < 2) throw ConfigError("ground_truth.mmd_points", "must be >= 2");
  if (c.ground_truth.warmup < 0) throw ConfigError("ground_truth.warmup", "must be >= 0");
  if (c.sweep) {
    if (c.sweep->values.empty()) throw ConfigError("sweep.values", "must be non-empty");
    const std::string& p = c.sweep->parameter;
    detail::check_choice("sweep.parameter", p,
                         {"log10_snr", "relative_noise", "noise_sigma", "spectral_error", "pcg_tolerance"});
    if (p == "spectral_error" && !std::holds_alternative<DiagonalProblemConfig>(c.problem)) {
      throw ConfigError("sweep.parameter", "spectral_error sweeps need the diagonal family");
    }
    if (p == "pcg_tolerance" && !std::holds_alternative<GraphProblemConfig>(c.problem)) {
      throw ConfigError("sweep.parameter", "pcg_tolerance sweeps need the graph-laplacian family");
    }
  }
}

inline ExperimentConfig parse_config(const Json& j) {
  detail::FieldReader r(j, "");
  ExperimentConfig c;
  r.require("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version " + std::to_string(c.schema_version));
  }
  if (!r.has("problem")) throw ConfigError("problem", "is required");
  c.problem = detail::parse_problem(r.raw("problem"));
  if (!r.has("samplers")) throw ConfigError("samplers", "is required");
  const Json& samplers = r.raw("samplers");
  if (!samplers.is_array()) throw ConfigError("samplers", "must be an array");
  for (std::size_t i = 0; i < samplers.size(); ++i) {
    c.samplers.push_back(detail::parse_sampler(samplers[i], "samplers[" + std::to_string(i) + "]"));
  }
  if (r.has("n_steps")) {
    Index n = 0;
    r.get("n_steps", n);
    c.n_steps = n;
  }
  if (r.has("solve_budget")) {
    std::uint64_t b = 0;
    r.get("solve_budget", b);
    c.solve_budget = b;
  }
  if (!r.has("checkpoints")) throw ConfigError("checkpoints", "is required");
  const Json& cps = r.raw("checkpoints");
  if (!cps.is_array()) throw ConfigError("checkpoints", "must be an array");
  for (const auto& v : cps) {
    if (!v.is_number_integer()) throw ConfigError("checkpoints", "entries must be integers");
    c.checkpoints.push_back(v.get<Index>());
  }
  r.get("n_chains", c.n_chains);
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  if (r.has("ground_truth")) {
    detail::FieldReader g(r.raw("ground_truth"), "ground_truth");
    g.get("samples", c.ground_truth.samples);
    g.get("runs", c.ground_truth.runs);
    g.get("warmup", c.ground_truth.warmup);
    g.get("mmd_points", c.ground_truth.mmd_points);
    g.finish();
  }
  if (r.has("sweep")) {
    detail::FieldReader s(r.raw("sweep"), "sweep");
    SweepConfig sw;
    s.require("parameter", sw.parameter);
    if (!s.has("values") || !s.raw("values").is_array()) throw ConfigError("sweep.values", "must be an array");
    for (const auto& v : s.raw("values")) {
      if (!v.is_number()) throw ConfigError("sweep.values", "entries must be numbers");
      sw.values.push_back(v.get<double>());
    }
    s.finish();
    c.sweep = sw;
  }
  r.finish();
  validate(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// JSON form of a config; `include_output_dir = false` gives the hashed form.
inline Json to_json(const ExperimentConfig& c, bool include_output_dir = true) {
  Json j;
  j["schema_version"] = c.schema_version;
  j["problem"] = detail::problem_json(c.problem);
  j["samplers"] = Json::array();
  for (const auto& s : c.samplers) j["samplers"].push_back(detail::sampler_json(s));
  if (c.n_steps) j["n_steps"] = *c.n_steps;
  if (c.solve_budget) j["solve_budget"] = *c.solve_budget;
  j["checkpoints"] = c.checkpoints;
  j["n_chains"] = c.n_chains;
  j["seed"] = c.seed;
  if (include_output_dir) j["output_dir"] = c.output_dir;
  j["ground_truth"] = Json{{"samples", c.ground_truth.samples},
                           {"runs", c.ground_truth.runs},
                           {"warmup", c.ground_truth.warmup},
                           {"mmd_points", c.ground_truth.mmd_points}};
  if (c.sweep) j["sweep"] = Json{{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
  return j;
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2); }

/// FNV-1a of the canonical config JSON (output directory excluded), as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c, false).dump())));
  return buf;
}

/// Problem config with one sweep parameter replaced.
inline ProblemConfig apply_sweep(ProblemConfig p, const std::string& parameter, double value) {
  std::visit(
      [&](auto& c) {
        using T = std::decay_t<decltype(c)>;
        if (parameter == "log10_snr") c.noise = {"log10-snr", value};
        else if (parameter == "relative_noise") c.noise = {"relative", value};
        else if (parameter == "noise_sigma") c.noise = {"sigma", value};
        else if (parameter == "spectral_error") {
          if constexpr (std::is_same_v<T, DiagonalProblemConfig>) c.spectral_error = value;
          else throw ConfigError("sweep.parameter", "spectral_error sweeps need the diagonal family");
        } else if (parameter == "pcg_tolerance") {
          if constexpr (std::is_same_v<T, GraphProblemConfig>) c.pcg_tolerance = value;
          else throw ConfigError("sweep.parameter", "pcg_tolerance sweeps need the graph-laplacian family");
        } else {
          throw ConfigError("sweep.parameter", "unknown parameter '" + parameter + "'");
        }
      },
      p);
  return p;
}

inline NoiseSpec to_noise_spec(const NoiseConfig& n) {
  if (n.kind == "sigma") return NoiseSpec::fixed(n.value);
  if (n.kind == "log10-snr") return NoiseSpec::snr(n.value);
  return NoiseSpec::relative_level(n.value);
}

inline Prior make_prior(const PriorConfig& p, Index d, std::uint64_t seed) {
  if (p.kind == "ill-conditioned-gaussian") return ill_conditioned_gaussian_prior(d, p.condition, seed);
  if (p.kind == "mixture") return spread_mixture_prior(d, p.components, p.spread);
  if (p.kind == "laplace") return Prior::laplace(d);
  return Prior::standard_normal(d);
}

/// Builds the problem and its synthetic data from (config, seed).
inline ProblemInstance build_problem(const ProblemConfig& p, std::uint64_t seed) {
  if (const auto* c = std::get_if<DiagonalProblemConfig>(&p)) {
    DiagonalSyntheticConfig dc;
    dc.d = c->d;
    dc.d_y = c->d_y;
    dc.spectral_error = c->spectral_error;
    dc.seed = seed;
    dc.observation = c->observation == "canonical" ? ObservationLayout::canonical : ObservationLayout::rotated;
    dc.noise = to_noise_spec(c->noise);
    return make_diagonal_synthetic(dc, make_prior(c->prior, c->d, seed));
  }
  if (const auto* c = std::get_if<GraphProblemConfig>(&p)) {
    GraphLaplacianConfig gc;
    gc.lattice_side = c->lattice_side;
    gc.k_neighbors = c->k_neighbors;
    gc.d_x = c->d_x;
    gc.d_y = c->d_y;
    gc.pcg.tolerance = c->pcg_tolerance;
    gc.exact_tol = c->exact_tol;
    gc.regularization = c->regularization;
    gc.seed = seed;
    gc.noise = to_noise_spec(c->noise);
    return make_graph_laplacian_problem(gc);
  }
  const auto& h = std::get<HelmholtzProblemConfig>(p);
  HelmholtzConfig hc;
  hc.grid = {h.n_u, h.n_u_coarse, h.n_x, h.wavenumber, h.events};
  hc.tv_lambda = h.tv_lambda;
  hc.tv_eps = h.tv_eps;
  hc.observation_ratio = h.observation_ratio;
  hc.seed = seed;
  hc.noise = to_noise_spec(h.noise);
  return make_helmholtz_problem(hc);
}

/// Exact posterior of a Gaussian-mixture prior: a mixture with shared
/// covariance, component means m_i + A^+ (y - A m_i) and weights proportional
/// to w_i N(y; A m_i, A A^T + sigma^2 I).
struct MixturePosterior {
  Vector log_weights;
  std::vector<Vector> means;
  Matrix covariance;
};

inline MixturePosterior mixture_posterior(const InverseProblem& problem, const Vector& y) {
  const auto& mix = std::get<GaussianMixturePrior>(problem.prior().spec());
  const Index d = problem.dim();
  const Matrix a = problem.a_exact_dense();
  const auto parts = detail::gaussian_parts(a, problem.sigma(), Prior::standard_normal(d));
  Matrix evid = a * a.transpose();
  evid.diagonal().array() += problem.sigma() * problem.sigma();
  const Eigen::LLT<Matrix> llt(evid);
  const Index k = mix.weights.size();
  MixturePosterior out;
  out.covariance = parts.cov;
  Vector logits(k);
  for (Index i = 0; i < k; ++i) {
    const Vector& m = mix.means[static_cast<std::size_t>(i)];
    const Vector r = y - a * m;
    logits[i] = std::log(mix.weights[i]) - 0.5 * r.dot(llt.solve(r));
    out.means.push_back(m + parts.pinv * r);
  }
  out.log_weights = logits.array() - Prior::log_sum_exp(logits);
  return out;
}

namespace detail {

inline void write_f64(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  for (Index i = 0; i < rm.size(); ++i) {
    const double v = rm.data()[i];
    unsigned char bytes[8];
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, 8);
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::optional<Matrix> read_f64(const std::filesystem::path& path, Index rows, Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  for (Index i = 0; i < rm.size(); ++i) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) return std::nullopt;
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    std::memcpy(rm.data() + i, &bits, 8);
  }
  return Matrix(rm);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/**
 * Reference quantities for scoring chains: closed forms for Gaussian and
 * Gaussian-mixture priors, otherwise pooled NUTS runs on the exact posterior
 * (uncounted). NUTS references are cached under `cache_dir` when given.
 */
inline GroundTruth compute_ground_truth(const ProblemInstance& inst, const GroundTruthConfig& cfg,
                                        std::uint64_t seed, const std::filesystem::path& cache_dir = {},
                                        const std::string& cache_key = {}) {
  const InverseProblem& problem = *inst.problem;
  const Index d = problem.dim();
  const Prior& prior = problem.prior();
  GroundTruth gt;
  Rng rng(stream_seed(seed, 0, "ground-truth"));
  if (prior.is_gaussian()) {
    const auto post = gaussian_posterior(problem, inst.y, PosteriorVariant::exact);
    gt.mean = post.mean;
    gt.second_moment = post.covariance.diagonal() + post.mean.cwiseAbs2();
    const GaussianSampler sampler(post.mean, post.covariance);
    gt.samples.resize(cfg.samples, d);
    for (Index i = 0; i < cfg.samples; ++i) gt.samples.row(i) = sampler.draw(rng).transpose();
  } else if (prior.kind() == PriorKind::gaussian_mixture) {
    const auto mp = mixture_posterior(problem, inst.y);
    const Vector w = mp.log_weights.array().exp();
    gt.mean = Vector::Zero(d);
    gt.second_moment = Vector::Zero(d);
    for (std::size_t i = 0; i < mp.means.size(); ++i) {
      const double wi = w[static_cast<Index>(i)];
      gt.mean += wi * mp.means[i];
      gt.second_moment += wi * (mp.covariance.diagonal() + mp.means[i].cwiseAbs2());
    }
    const Matrix factor = covariance_factor(mp.covariance);
    gt.samples.resize(cfg.samples, d);
    for (Index s = 0; s < cfg.samples; ++s) {
      const double u = uniform01(rng);
      double acc = 0.0;
      std::size_t k = mp.means.size() - 1;
      for (std::size_t i = 0; i < mp.means.size(); ++i) {
        acc += w[static_cast<Index>(i)];
        if (u < acc) {
          k = i;
          break;
        }
      }
      gt.samples.row(s) = (mp.means[k] + factor * standard_normal_vector(rng, d)).transpose();
    }
  } else {
    const Index per_run = (cfg.samples + cfg.runs - 1) / cfg.runs;
    const Index total = per_run * cfg.runs;
    const std::filesystem::path cache =
        cache_dir.empty() ? std::filesystem::path{} : cache_dir / ("ground_truth_" + cache_key + ".f64");
    std::optional<Matrix> pooled;
    if (!cache.empty()) pooled = detail::read_f64(cache, total, d);
    if (!pooled) {
      Matrix all(total, d);
      for (Index r = 0; r < cfg.runs; ++r) {
        Rng run_rng(stream_seed(seed, static_cast<std::uint64_t>(r), "ground-truth-nuts"));
        SolveCounters scratch;
        const LogDensity target = posterior_target(problem, inst.y, OperatorChoice::exact, scratch);
        NutsSettings ns;
        ns.n_warmup = cfg.warmup;
        ns.target_accept = 0.8;
        RunLimits lim;
        lim.n_steps = per_run;
        const auto b = run_nuts(target, Vector::Zero(d), ns, lim, run_rng, scratch);
        all.middleRows(r * per_run, per_run) = b.samples;
      }
      pooled = all;
      if (!cache.empty()) {
        std::filesystem::create_directories(cache_dir);
        detail::write_f64(cache, all);
      }
    }
    gt.mean = pooled->colwise().mean().transpose();
    gt.second_moment = pooled->array().square().colwise().mean().transpose();
    gt.samples = subsample_rows(*pooled, cfg.samples, stream_seed(seed, 0, "ground-truth-subsample"));
  }
  gt.gamma = median_heuristic(gt.samples, 10000, stream_seed(seed, 0, "median-heuristic"));
  return gt;
}

/// Runs one sampler chain on a problem. MALA and NUTS start at x = 0; the
/// two-stage sampler starts at first_stage_start.
inline SampleBatch run_sampler(const ProblemInstance& inst, const SamplerConfig& sampler,
                               const RunLimits& limits, Rng& rng, SolveCounters& counters) {
  const InverseProblem& problem = *inst.problem;
  const Vector x0 = Vector::Zero(problem.dim());
  if (const auto* c = std::get_if<ImhSamplerConfig>(&sampler.settings)) {
    ImhSettings s;
    s.kind = c->kind == "approx" ? ImhKind::approx : ImhKind::latent;
    s.inner = c->inner == "exact-gaussian"  ? InnerKind::exact_gaussian
              : c->inner == "exact-mixture" ? InnerKind::exact_mixture
              : c->inner == "nuts"          ? InnerKind::inner_nuts
                                            : InnerKind::automatic;
    s.ratio_mode = c->ratio_mode == "black-box" ? LatentRatioMode::black_box : LatentRatioMode::linear;
    s.inner_steps = c->inner_steps;
    s.inner_nuts.n_warmup = c->inner_warmup;
    s.inner_nuts.target_accept = c->inner_target_accept;
    ProposalEngine engine(problem, inst.y, s, rng);
    return run_imh(problem, inst.y, engine, limits, rng, counters);
  }
  auto to_mala = [](const MalaSamplerConfig& m) {
    MalaSettings s;
    s.step = m.step;
    s.adapt = m.adapt;
    s.n_warmup = m.n_warmup;
    s.target_accept = m.target_accept;
    return s;
  };
  if (const auto* c = std::get_if<MalaSamplerConfig>(&sampler.settings)) {
    const LogDensity target = posterior_target(problem, inst.y, OperatorChoice::exact, counters);
    return run_mala(target, x0, to_mala(*c), limits, rng, counters);
  }
  if (const auto* c = std::get_if<NutsSamplerConfig>(&sampler.settings)) {
    const LogDensity target = posterior_target(problem, inst.y, OperatorChoice::exact, counters);
    NutsSettings s;
    s.n_warmup = c->n_warmup;
    s.target_accept = c->target_accept;
    s.max_depth = c->max_depth;
    s.initial_step = c->initial_step;
    return run_nuts(target, x0, s, limits, rng, counters);
  }
  const auto& t = std::get<TwoStageSamplerConfig>(sampler.settings);
  const FirstStage stage =
      t.first_stage == "latent-posterior" ? FirstStage::latent_posterior : FirstStage::approx_posterior;
  const MalaSettings ms = to_mala(t.mala);
  const Vector start = first_stage_start(problem, inst.y, stage, x0, ms, rng);
  return run_two_stage(problem, inst.y, stage, start, ms, limits, rng, counters);
}

struct SamplerResult {
  std::string name;
  std::vector<MetricSeries> chains;
  std::vector<double> acceptance;
  std::vector<std::uint64_t> seeds;
  std::vector<bool> truncated;
  std::vector<SampleBatch> batches;  // kept only when requested

  double mean_acceptance() const {
    double s = 0.0;
    for (double a : acceptance) s += a;
    return acceptance.empty() ? 0.0 : s / static_cast<double>(acceptance.size());
  }
};

/// One problem instance (a sweep point or the single run) and its results.
struct PointResult {
  std::optional<double> sweep_value;
  double spectral_error = 0.0;
  std::map<std::string, double> info;
  std::optional<KlReport> kl;
  std::optional<double> kl_prior;
  std::vector<SamplerResult> samplers;
  Json manifest;
};

struct ExperimentResult {
  std::string config_hash;
  std::vector<PointResult> points;
};

struct RunOptions {
  bool dump_samples = false;
  bool keep_batches = false;
  bool write_files = true;
  bool timestamp = true;
  unsigned threads = 1;  // chains run concurrently; outputs do not depend on this
};

/// Thread count from LATENT_IMH_THREADS (default 1).
inline unsigned threads_from_env() {
  const char* v = std::getenv("LATENT_IMH_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw std::invalid_argument("LATENT_IMH_THREADS must be a positive integer");
  return static_cast<unsigned>(n);
}

namespace detail {

/// Calls fn(i) for i in [0, n) on up to `threads` workers; rethrows the first error.
template <class Fn>
void parallel_for(Index n, unsigned threads, Fn fn) {
  const unsigned workers = static_cast<unsigned>(std::min<Index>(std::max(1u, threads), n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Index i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// Per-checkpoint averages over chains, on the checkpoints every chain reached.
struct AveragedRow {
  Index step = 0;
  double forward = 0.0;
  double inverse = 0.0;
  double acceptance = 0.0;
  double rel_mean_err = 0.0;
  double sq_bias_2nd = 0.0;
  double mmd = 0.0;
};

inline std::vector<AveragedRow> average_series(const std::vector<MetricSeries>& chains) {
  std::vector<AveragedRow> rows;
  if (chains.empty()) return rows;
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  const double k = static_cast<double>(chains.size());
  for (std::size_t i = 0; i < n; ++i) {
    AveragedRow r;
    r.step = chains.front().checkpoints[i];
    for (const auto& c : chains) {
      r.forward += static_cast<double>(c.cost_forward[i]);
      r.inverse += static_cast<double>(c.cost_inverse[i]);
      r.acceptance += c.acceptance_rate[i];
      r.rel_mean_err += c.rel_mean_err[i];
      r.sq_bias_2nd += c.sq_bias_2nd[i];
      r.mmd += c.mmd[i];
    }
    r.forward /= k;
    r.inverse /= k;
    r.acceptance /= k;
    r.rel_mean_err /= k;
    r.sq_bias_2nd /= k;
    r.mmd /= k;
    rows.push_back(r);
  }
  return rows;
}

inline constexpr const char* kCsvHeader = "step,forward_solves,inverse_solves,acceptance_rate,rel_mean_err,sq_bias_2nd,mmd\n";

inline std::string series_csv(const MetricSeries& s) {
  std::string out = kCsvHeader;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s.checkpoints[i]) + "," + std::to_string(s.cost_forward[i]) + "," +
           std::to_string(s.cost_inverse[i]) + "," + detail::fmt17(s.acceptance_rate[i]) + "," +
           detail::fmt17(s.rel_mean_err[i]) + "," + detail::fmt17(s.sq_bias_2nd[i]) + "," +
           detail::fmt17(s.mmd[i]) + "\n";
  }
  return out;
}

inline std::string averaged_csv(const std::vector<AveragedRow>& rows) {
  std::string out = kCsvHeader;
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + detail::fmt17(r.forward) + "," + detail::fmt17(r.inverse) + "," +
           detail::fmt17(r.acceptance) + "," + detail::fmt17(r.rel_mean_err) + "," +
           detail::fmt17(r.sq_bias_2nd) + "," + detail::fmt17(r.mmd) + "\n";
  }
  return out;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline Json kl_json(const InverseProblem& problem, const ProblemInstance& inst) {
  Json j;
  const KlReport kl = expected_kl_closed_form(problem);
  const double kp = expected_kl_prior(problem);
  j["d_a"] = kl.d_a;
  j["d_l"] = kl.d_l;
  j["d_prior"] = kp;
  j["ratio_a"] = kp > 0.0 ? kl.d_a / kp : 0.0;
  j["ratio_l"] = kp > 0.0 ? kl.d_l / kp : 0.0;
  if (inst.diagonal) {
    const KlReport dk = expected_kl_diagonal(*inst.diagonal);
    j["diagonal"] = Json{{"d_a", dk.d_a}, {"d_l", dk.d_l}};
  }
  try {
    const BoundReport b = kl_general_bounds(problem);
    j["bounds"] = Json{{"bound_d_a", b.bound_d_a}, {"bound_d_l", b.bound_d_l}, {"eps", b.eps},
                       {"eps_l", b.eps_l},         {"tau", b.tau},             {"kappa_plus", b.kappa_plus},
                       {"kappa_minus", b.kappa_minus}, {"matching_valid", b.matching_valid}};
  } catch (const std::exception& e) {
    j["bounds"] = Json{{"unavailable", e.what()}};
  }
  return j;
}

}  // namespace detail

/**
 * Runs every sampler for every chain (and sweep point), scores the chains
 * and, unless disabled, writes per-run and averaged CSVs, a manifest and an
 * optional sweep table under config.output_dir.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& opts = {}) {
  validate(config);
  namespace fs = std::filesystem;
  ExperimentResult result;
  result.config_hash = config_hash(config);
  const fs::path root = config.output_dir;
  if (opts.write_files) fs::create_directories(root);

  std::vector<std::optional<double>> points;
  if (config.sweep) {
    for (double v : config.sweep->values) points.emplace_back(v);
  } else {
    points.emplace_back(std::nullopt);
  }

  RunLimits limits;
  if (config.n_steps) {
    limits.n_steps = *config.n_steps;
  } else {
    limits.n_steps = config.checkpoints.back();
    limits.solve_budget = *config.solve_budget;
  }

  for (std::size_t p = 0; p < points.size(); ++p) {
    PointResult pr;
    pr.sweep_value = points[p];
    const ProblemConfig pc =
        points[p] ? apply_sweep(config.problem, config.sweep->parameter, *points[p]) : config.problem;
    const ProblemInstance inst = build_problem(pc, config.seed);
    pr.spectral_error = inst.spectral_error;
    pr.info = inst.info;
    const fs::path dir = points[p] ? root / ("point_" + std::to_string(p)) : root;
    if (opts.write_files) fs::create_directories(dir);

    char key[17];
    std::snprintf(key, sizeof(key), "%016llx",
                  static_cast<unsigned long long>(fnv1a(detail::problem_json(pc).dump() + "|" +
                                                        std::to_string(config.seed) + "|" +
                                                        std::to_string(config.ground_truth.samples) + "|" +
                                                        std::to_string(config.ground_truth.runs) + "|" +
                                                        std::to_string(config.ground_truth.warmup))));
    const GroundTruth truth = compute_ground_truth(inst, config.ground_truth, config.seed,
                                                   opts.write_files ? root : fs::path{}, key);

    Json manifest;
    manifest["config_hash"] = result.config_hash;
    manifest["config"] = to_json(config, false);
    if (points[p]) {
      manifest["sweep_parameter"] = config.sweep->parameter;
      manifest["sweep_value"] = *points[p];
    }
    manifest["problem"] = Json{{"family", problem_family(pc)},
                               {"dim", inst.problem->dim()},
                               {"obs_dim", inst.problem->obs_dim()},
                               {"sigma", inst.problem->sigma()},
                               {"spectral_error", inst.spectral_error},
                               {"info", inst.info}};
    if (inst.problem->prior().is_gaussian()) {
      const Json kl = detail::kl_json(*inst.problem, inst);
      pr.kl = KlReport{kl["d_a"].get<double>(), kl["d_l"].get<double>()};
      pr.kl_prior = kl["d_prior"].get<double>();
      manifest["kl"] = kl;
    }
    manifest["ground_truth"] = Json{{"gamma", truth.gamma}, {"samples", truth.samples.rows()}};

    Json samplers = Json::array();
    for (const auto& sc : config.samplers) {
      SamplerResult sr;
      sr.name = sc.name;
      std::vector<SampleBatch> batches(static_cast<std::size_t>(config.n_chains));
      std::vector<MetricSeries> all_series(static_cast<std::size_t>(config.n_chains));
      detail::parallel_for(config.n_chains, opts.threads, [&](Index chain) {
        Rng rng(stream_seed(config.seed, static_cast<std::uint64_t>(chain), sc.name));
        SolveCounters counters;
        const auto k = static_cast<std::size_t>(chain);
        batches[k] = run_sampler(inst, sc, limits, rng, counters);
        all_series[k] = compute_series(batches[k], config.checkpoints, truth, config.ground_truth.mmd_points);
      });
      for (Index chain = 0; chain < config.n_chains; ++chain) {
        const std::uint64_t s = stream_seed(config.seed, static_cast<std::uint64_t>(chain), sc.name);
        SampleBatch& batch = batches[static_cast<std::size_t>(chain)];
        MetricSeries& series = all_series[static_cast<std::size_t>(chain)];
        sr.seeds.push_back(s);
        sr.acceptance.push_back(batch.acceptance_rate);
        sr.truncated.push_back(batch.truncated);
        if (opts.write_files) {
          const std::string stem = sc.name + "_chain" + std::to_string(chain);
          detail::write_text(dir / (stem + ".csv"), series_csv(series));
          if (opts.dump_samples) {
            detail::write_f64(dir / (stem + ".f64"), batch.samples);
            Json side{{"shape", {batch.samples.rows(), batch.samples.cols()}},
                      {"dtype", "float64-le"},
                      {"order", "row-major"},
                      {"seed", s},
                      {"config_hash", result.config_hash}};
            detail::write_text(dir / (stem + ".json"), side.dump(2) + "\n");
          }
        }
        sr.chains.push_back(std::move(series));
        if (opts.keep_batches) sr.batches.push_back(std::move(batch));
      }
      const auto avg = average_series(sr.chains);
      if (opts.write_files) detail::write_text(dir / (sc.name + "_mean.csv"), averaged_csv(avg));
      Json sj{{"name", sc.name},
              {"type", sampler_type(sc.settings)},
              {"seeds", sr.seeds},
              {"acceptance_rate", sr.acceptance},
              {"mean_acceptance_rate", sr.mean_acceptance()}};
      std::vector<bool> tr = sr.truncated;
      sj["truncated"] = tr;
      Json finals = Json::array();
      for (const auto& s : sr.chains) {
        finals.push_back(Json{{"steps", s.checkpoints.empty() ? 0 : s.checkpoints.back()},
                              {"forward_solves", s.cost_forward.empty() ? 0 : s.cost_forward.back()},
                              {"inverse_solves", s.cost_inverse.empty() ? 0 : s.cost_inverse.back()}});
      }
      sj["final"] = finals;
      samplers.push_back(sj);
      pr.samplers.push_back(std::move(sr));
    }
    manifest["samplers"] = samplers;
    pr.manifest = manifest;
    if (opts.write_files) {
      Json out = manifest;
      if (opts.timestamp) out["timestamp"] = utc_timestamp();
      detail::write_text(dir / "manifest.json", out.dump(2) + "\n");
    }
    result.points.push_back(std::move(pr));
  }

  if (config.sweep && opts.write_files) {
    std::string csv = config.sweep->parameter + ",spectral_error";
    for (const auto& s : config.samplers) csv += "," + s.name + "_acceptance_rate";
    const bool gaussian = result.points.front().kl.has_value();
    if (gaussian) csv += ",d_a,d_l";
    csv += "\n";
    for (const auto& pr : result.points) {
      csv += detail::fmt17(*pr.sweep_value) + "," + detail::fmt17(pr.spectral_error);
      for (const auto& s : pr.samplers) csv += "," + detail::fmt17(s.mean_acceptance());
      if (gaussian) csv += "," + detail::fmt17(pr.kl->d_a) + "," + detail::fmt17(pr.kl->d_l);
      csv += "\n";
    }
    detail::write_text(root / "sweep.csv", csv);
  }
  return result;
}

/// Expected-KL report for a Gaussian-prior config; one entry per sweep point.
inline Json report_kl(const ExperimentConfig& config) {
  validate(config);
  std::vector<std::optional<double>> points;
  if (config.sweep) {
    for (double v : config.sweep->values) points.emplace_back(v);
  } else {
    points.emplace_back(std::nullopt);
  }
  Json entries = Json::array();
  for (const auto& v : points) {
    const ProblemConfig pc = v ? apply_sweep(config.problem, config.sweep->parameter, *v) : config.problem;
    const ProblemInstance inst = build_problem(pc, config.seed);
    if (!inst.problem->prior().is_gaussian()) {
      throw UnsupportedError("report-kl needs a Gaussian prior, got " +
                             std::string(to_string(inst.problem->prior().kind())));
    }
    Json e = detail::kl_json(*inst.problem, inst);
    e["spectral_error"] = inst.spectral_error;
    if (v) e["sweep_value"] = *v;
    entries.push_back(e);
  }
  Json out{{"config_hash", config_hash(config)}};
  if (config.sweep) out["sweep_parameter"] = config.sweep->parameter;
  out["entries"] = entries;
  return out;
}

}  // namespace latent_imh
