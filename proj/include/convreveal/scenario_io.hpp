#pragma once

// Scenario documents are JSON. Field reference (lengths in workspace units,
// velocities in units per second, magnitudes and bands as fractions of a_max):
//
//   bounds            {"min": [x, y], "max": [x, y]}                     required
//   tasks             [{"goal": [x, y], "radius"?: r, "name"?: s}, ...]   required, >= 2
//   dt, a_max         > 0                                                required
//   blend_beta        [0, 1]                                             required
//   blend_mode        "fixed" | "confidence"                             default "fixed"
//   gamma             [0, 1)                                             default 0.95
//   grid_resolution   nodes per axis, >= 2                               default 41
//   action_set        [[vx, vy], ...]  or  n_headings + magnitudes[]     required
//   convention_spec   {"type": "boltzmann", "lambda"}
//                     {"type": "cosine", "kappa"}
//                     {"type": "magnitude_coded", "small_band": [lo, hi],
//                      "large_band": [lo, hi], "axis": [x, y], "sharpness",
//                      "small_task", "large_task"}
//                     each with optional "floor" (default 1e-3)           required
//   epsilon0          >= 0                                               required
//   epsilon_schedule  {"mode": "constant" | "distance_decay" | "performance_adaptive",
//                      "window"?, "min_fraction"?}                       default distance_decay
//   human_model_spec  {"type": "direct" | "adaptive_mimic" | "explorer",
//                      "learn_rate"?, "noise"?, "aim_sd"?, "strategy"?: "uniform" | "epsilon_greedy",
//                      "explore"?, "memory_frame"?: "goal" | "world"}
//                                                                     default adaptive_mimic
//   rng_seed          integer                                            required
//   start             [x, y]                                             default bottom centre
//   max_ticks, human_stop_confidence, prior_weighted_reveal,
//   update_before_decode, max_iters                                      optional
//
// Omitted task radii default to 0.05 * min(bounds extent).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "convreveal/world.hpp"

namespace convreveal {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using json = nlohmann::json;

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline const json& need(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing required field '") + key + "'");
  return j.at(key);
}

inline double num(const json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError("field '" + field + "' must be a number");
  return j.get<double>();
}

inline double num_or(const json& j, const char* key, double dflt, const std::string& prefix = "") {
  return j.contains(key) ? num(j.at(key), prefix + key) : dflt;
}

inline Vec2 vec2(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError("field '" + field + "' must be a two-element numeric array");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::pair<double, double> range(const json& j, const std::string& field) {
  const Vec2 v = vec2(j, field);
  if (!(v.x < v.y)) throw ConfigError("field '" + field + "' must be an increasing pair");
  return {v.x, v.y};
}

inline json vec2_json(Vec2 v) { return json::array({v.x, v.y}); }

}  // namespace detail

/// Checks every Scenario invariant; throws ConfigError naming the first violation.
inline void validate(const Scenario& sc) {
  const Bounds& b = sc.bounds;
  if (!(b.max.x > b.min.x && b.max.y > b.min.y)) throw ConfigError("bounds must have positive extent");
  if (sc.tasks.size() < 2) throw ConfigError("tasks must contain at least 2 entries");
  for (std::size_t i = 0; i < sc.tasks.size(); ++i) {
    const Task& t = sc.tasks[i];
    if (t.id != static_cast<int>(i)) throw ConfigError("task ids must be contiguous from 0");
    if (!b.contains(t.goal)) throw ConfigError("task " + std::to_string(i) + " goal outside bounds");
    if (!(t.radius > 0.0)) throw ConfigError("task " + std::to_string(i) + " radius must be positive");
  }
  if (!b.contains(sc.start)) throw ConfigError("start outside bounds");
  if (!(sc.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(sc.a_max > 0.0)) throw ConfigError("a_max must be positive");
  if (!(sc.blend_beta >= 0.0 && sc.blend_beta <= 1.0)) throw ConfigError("blend_beta out of range");
  if (!(sc.gamma >= 0.0 && sc.gamma < 1.0)) throw ConfigError("gamma out of range");
  if (sc.grid_resolution < 2) throw ConfigError("grid_resolution must be at least 2");
  if (!(sc.epsilon0 >= 0.0)) throw ConfigError("epsilon0 must be non-negative");
  if (sc.max_ticks < 1) throw ConfigError("max_ticks must be positive");
  if (!(sc.human_stop_confidence > 0.0 && sc.human_stop_confidence <= 1.0))
    throw ConfigError("human_stop_confidence out of range");

  if (sc.action_set.empty() || !sc.action_set[0].is_zero())
    throw ConfigError("action_set must start with the zero action");
  std::vector<double> headings;
  for (std::size_t i = 1; i < sc.action_set.size(); ++i) {
    const Vec2 v = sc.action_set[i].velocity;
    if (v.x == 0.0 && v.y == 0.0) throw ConfigError("action_set contains the zero action twice");
    if (norm(v) > sc.a_max * (1.0 + 1e-9)) throw ConfigError("action_set entry exceeds a_max");
    headings.push_back(std::atan2(v.y, v.x));
  }
  std::sort(headings.begin(), headings.end());
  std::vector<double> distinct;
  for (double h : headings)
    if (distinct.empty() || h - distinct.back() > 1e-9) distinct.push_back(h);
  if (distinct.size() < 8) throw ConfigError("action_set must cover at least 8 headings");
  const double pi = std::acos(-1.0);
  double gap = distinct.front() + 2.0 * pi - distinct.back();
  for (std::size_t i = 1; i < distinct.size(); ++i) gap = std::max(gap, distinct[i] - distinct[i - 1]);
  if (gap > pi / 2.0 + 1e-9) throw ConfigError("action_set headings leave a gap wider than 90 degrees");

  const ConventionSpec& c = sc.convention_spec;
  if (!(c.floor > 0.0 && c.floor < 1.0)) throw ConfigError("convention floor must lie in (0, 1)");
  if (const auto* bz = std::get_if<BoltzmannSpec>(&c.model)) {
    if (!(bz->lambda > 0.0)) throw ConfigError("boltzmann lambda must be positive");
  } else if (const auto* cs = std::get_if<CosineSpec>(&c.model)) {
    if (!(cs->kappa > 0.0)) throw ConfigError("cosine kappa must be positive");
  } else {
    const auto& m = std::get<MagnitudeCodedSpec>(c.model);
    if (!(m.sharpness > 0.0)) throw ConfigError("magnitude_coded sharpness must be positive");
    if (norm(m.axis) == 0.0) throw ConfigError("magnitude_coded axis must be nonzero");
    const int n = static_cast<int>(sc.tasks.size());
    if (m.small_task < 0 || m.small_task >= n || m.large_task < 0 || m.large_task >= n ||
        m.small_task == m.large_task)
      throw ConfigError("magnitude_coded task ids invalid");
  }
  const HumanModelSpec& h = sc.human_model_spec;
  if (!(h.learn_rate > 0.0 && h.learn_rate <= 1.0)) throw ConfigError("learn_rate must lie in (0, 1]");
  if (!(h.noise >= 0.0 && h.noise <= 1.0)) throw ConfigError("noise must lie in [0, 1]");
  if (!(h.aim_sd >= 0.0)) throw ConfigError("aim_sd must be non-negative");
  if (!(h.explore >= 0.0)) throw ConfigError("explore must be non-negative");
}

inline Scenario scenario_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("scenario document must be an object");
  Scenario sc;

  const json& jb = need(j, "bounds");
  sc.bounds.min = vec2(need(jb, "min"), "bounds.min");
  sc.bounds.max = vec2(need(jb, "max"), "bounds.max");
  sc.start = j.contains("start") ? vec2(j.at("start"), "start")
                                 : Vec2{0.5 * (sc.bounds.min.x + sc.bounds.max.x),
                                        sc.bounds.min.y + 0.1 * sc.bounds.height()};

  const json& jt = need(j, "tasks");
  if (!jt.is_array()) throw ConfigError("field 'tasks' must be an array");
  const double default_radius = 0.05 * std::min(sc.bounds.width(), sc.bounds.height());
  for (std::size_t i = 0; i < jt.size(); ++i) {
    const std::string p = "tasks[" + std::to_string(i) + "].";
    Task t;
    t.id = jt[i].contains("id") ? static_cast<int>(num(jt[i].at("id"), p + "id")) : static_cast<int>(i);
    t.goal = vec2(need(jt[i], "goal"), p + "goal");
    t.radius = num_or(jt[i], "radius", default_radius, p);
    t.name = jt[i].value("name", "task" + std::to_string(i));
    sc.tasks.push_back(t);
  }

  sc.dt = num(need(j, "dt"), "dt");
  sc.a_max = num(need(j, "a_max"), "a_max");
  sc.blend_beta = num(need(j, "blend_beta"), "blend_beta");
  const std::string blend_mode = j.value("blend_mode", "fixed");
  if (blend_mode == "fixed") sc.blend_mode = BlendMode::Fixed;
  else if (blend_mode == "confidence") sc.blend_mode = BlendMode::Confidence;
  else throw ConfigError("blend_mode must be 'fixed' or 'confidence'");
  sc.gamma = num_or(j, "gamma", 0.95);
  if (j.contains("grid_resolution")) sc.grid_resolution = static_cast<int>(num(j.at("grid_resolution"), "grid_resolution"));

  if (j.contains("action_set")) {
    const json& ja = j.at("action_set");
    if (!ja.is_array()) throw ConfigError("field 'action_set' must be an array");
    for (std::size_t i = 0; i < ja.size(); ++i)
      sc.action_set.push_back(Action{vec2(ja[i], "action_set[" + std::to_string(i) + "]")});
    // zero action is always index 0
    auto zero = std::find_if(sc.action_set.begin(), sc.action_set.end(),
                             [](const Action& a) { return a.is_zero(); });
    if (zero == sc.action_set.end()) sc.action_set.insert(sc.action_set.begin(), Action{});
    else std::rotate(sc.action_set.begin(), zero, zero + 1);
  } else if (j.contains("n_headings")) {
    const int n = static_cast<int>(num(j.at("n_headings"), "n_headings"));
    std::vector<double> mags;
    const json& jm = need(j, "magnitudes");
    if (!jm.is_array() || jm.empty()) throw ConfigError("field 'magnitudes' must be a nonempty array");
    for (std::size_t i = 0; i < jm.size(); ++i) {
      const double m = num(jm[i], "magnitudes[" + std::to_string(i) + "]");
      if (!(m > 0.0 && m <= 1.0)) throw ConfigError("magnitudes must lie in (0, 1]");
      mags.push_back(m);
    }
    if (n < 1) throw ConfigError("n_headings must be positive");
    sc.action_set = make_action_set(n, mags, sc.a_max);
  } else {
    throw ConfigError("missing required field 'action_set' (or 'n_headings' + 'magnitudes')");
  }

  const json& jc = need(j, "convention_spec");
  if (!jc.is_object()) throw ConfigError("field 'convention_spec' must be an object");
  const std::string type = jc.value("type", "");
  sc.convention_spec.floor = num_or(jc, "floor", 1e-3, "convention_spec.");
  if (type == "boltzmann") {
    sc.convention_spec.model = BoltzmannSpec{num_or(jc, "lambda", 5.0, "convention_spec.")};
  } else if (type == "cosine") {
    sc.convention_spec.model = CosineSpec{num_or(jc, "kappa", 5.0, "convention_spec.")};
  } else if (type == "magnitude_coded") {
    MagnitudeCodedSpec m;
    if (jc.contains("small_band")) std::tie(m.small_lo, m.small_hi) = range(jc.at("small_band"), "convention_spec.small_band");
    if (jc.contains("large_band")) std::tie(m.large_lo, m.large_hi) = range(jc.at("large_band"), "convention_spec.large_band");
    if (jc.contains("axis")) m.axis = vec2(jc.at("axis"), "convention_spec.axis");
    m.sharpness = num_or(jc, "sharpness", m.sharpness, "convention_spec.");
    m.small_task = static_cast<int>(num_or(jc, "small_task", 0, "convention_spec."));
    m.large_task = static_cast<int>(num_or(jc, "large_task", 1, "convention_spec."));
    sc.convention_spec.model = m;
  } else {
    throw ConfigError("convention_spec.type must be boltzmann, cosine or magnitude_coded");
  }

  sc.epsilon0 = num(need(j, "epsilon0"), "epsilon0");
  if (j.contains("epsilon_schedule")) {
    const json& je = j.at("epsilon_schedule");
    const std::string mode = je.value("mode", "distance_decay");
    if (mode == "constant") sc.epsilon_spec.mode = EpsilonMode::Constant;
    else if (mode == "distance_decay") sc.epsilon_spec.mode = EpsilonMode::DistanceDecay;
    else if (mode == "performance_adaptive") sc.epsilon_spec.mode = EpsilonMode::PerformanceAdaptive;
    else throw ConfigError("epsilon_schedule.mode unknown: " + mode);
    sc.epsilon_spec.window = static_cast<int>(num_or(je, "window", 10, "epsilon_schedule."));
    sc.epsilon_spec.min_fraction = num_or(je, "min_fraction", 0.25, "epsilon_schedule.");
  }

  if (j.contains("human_model_spec")) {
    const json& jh = j.at("human_model_spec");
    const std::string ht = jh.value("type", "adaptive_mimic");
    if (ht == "direct") sc.human_model_spec.kind = HumanKind::Direct;
    else if (ht == "adaptive_mimic") sc.human_model_spec.kind = HumanKind::AdaptiveMimic;
    else if (ht == "explorer") sc.human_model_spec.kind = HumanKind::Explorer;
    else throw ConfigError("human_model_spec.type unknown: " + ht);
    sc.human_model_spec.learn_rate = num_or(jh, "learn_rate", 0.5, "human_model_spec.");
    sc.human_model_spec.noise = num_or(jh, "noise", 0.05, "human_model_spec.");
    sc.human_model_spec.aim_sd = num_or(jh, "aim_sd", 0.0, "human_model_spec.");
    sc.human_model_spec.explore = num_or(jh, "explore", 1.0, "human_model_spec.");
    const std::string st = jh.value("strategy", "epsilon_greedy");
    if (st == "uniform") sc.human_model_spec.strategy = ExploreStrategy::Uniform;
    else if (st == "epsilon_greedy") sc.human_model_spec.strategy = ExploreStrategy::EpsilonGreedy;
    else throw ConfigError("human_model_spec.strategy unknown: " + st);
    const std::string fr = jh.value("memory_frame", "goal");
    if (fr == "goal") sc.human_model_spec.frame = MemoryFrame::Goal;
    else if (fr == "world") sc.human_model_spec.frame = MemoryFrame::World;
    else throw ConfigError("human_model_spec.memory_frame must be 'goal' or 'world'");
  }

  const json& js = need(j, "rng_seed");
  if (!js.is_number_integer()) throw ConfigError("field 'rng_seed' must be an integer");
  sc.rng_seed = js.get<std::uint64_t>();

  if (j.contains("max_ticks")) sc.max_ticks = static_cast<int>(num(j.at("max_ticks"), "max_ticks"));
  sc.human_stop_confidence = num_or(j, "human_stop_confidence", sc.human_stop_confidence);
  sc.prior_weighted_reveal = j.value("prior_weighted_reveal", false);
  sc.update_before_decode = j.value("update_before_decode", true);
  if (j.contains("max_iters")) sc.max_iters = static_cast<int>(num(j.at("max_iters"), "max_iters"));

  validate(sc);
  return sc;
}

/// Parse and validate. Parse errors report line and column.
inline Scenario load_scenario(const std::string& document) {
  json j;
  try {
    j = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error at " + detail::line_col(document, e.byte ? e.byte - 1 : 0) + ": " +
                      e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid scenario: ") + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Scenario load_scenario_file(const std::string& path) { return load_scenario(read_text_file(path)); }

/// Canonical document; always writes an explicit action_set.
inline json to_json(const Scenario& sc) {
  using detail::vec2_json;
  json j;
  j["bounds"] = {{"min", vec2_json(sc.bounds.min)}, {"max", vec2_json(sc.bounds.max)}};
  j["start"] = vec2_json(sc.start);
  j["tasks"] = json::array();
  for (const auto& t : sc.tasks)
    j["tasks"].push_back({{"id", t.id}, {"goal", vec2_json(t.goal)}, {"radius", t.radius}, {"name", t.name}});
  j["dt"] = sc.dt;
  j["a_max"] = sc.a_max;
  j["blend_beta"] = sc.blend_beta;
  j["blend_mode"] = sc.blend_mode == BlendMode::Fixed ? "fixed" : "confidence";
  j["gamma"] = sc.gamma;
  j["grid_resolution"] = sc.grid_resolution;
  j["action_set"] = json::array();
  for (const auto& a : sc.action_set) j["action_set"].push_back(vec2_json(a.velocity));

  json c;
  c["floor"] = sc.convention_spec.floor;
  if (const auto* b = std::get_if<BoltzmannSpec>(&sc.convention_spec.model)) {
    c["type"] = "boltzmann";
    c["lambda"] = b->lambda;
  } else if (const auto* cs = std::get_if<CosineSpec>(&sc.convention_spec.model)) {
    c["type"] = "cosine";
    c["kappa"] = cs->kappa;
  } else {
    const auto& m = std::get<MagnitudeCodedSpec>(sc.convention_spec.model);
    c["type"] = "magnitude_coded";
    c["small_band"] = {m.small_lo, m.small_hi};
    c["large_band"] = {m.large_lo, m.large_hi};
    c["axis"] = vec2_json(m.axis);
    c["sharpness"] = m.sharpness;
    c["small_task"] = m.small_task;
    c["large_task"] = m.large_task;
  }
  j["convention_spec"] = c;

  j["epsilon0"] = sc.epsilon0;
  const char* emode = sc.epsilon_spec.mode == EpsilonMode::Constant        ? "constant"
                      : sc.epsilon_spec.mode == EpsilonMode::DistanceDecay ? "distance_decay"
                                                                           : "performance_adaptive";
  j["epsilon_schedule"] = {{"mode", emode},
                           {"window", sc.epsilon_spec.window},
                           {"min_fraction", sc.epsilon_spec.min_fraction}};
  const auto& h = sc.human_model_spec;
  j["human_model_spec"] = {
      {"type", h.kind == HumanKind::Direct          ? "direct"
               : h.kind == HumanKind::AdaptiveMimic ? "adaptive_mimic"
                                                    : "explorer"},
      {"learn_rate", h.learn_rate},
      {"noise", h.noise},
      {"aim_sd", h.aim_sd},
      {"strategy", h.strategy == ExploreStrategy::Uniform ? "uniform" : "epsilon_greedy"},
      {"explore", h.explore},
      {"memory_frame", h.frame == MemoryFrame::World ? "world" : "goal"}};
  j["rng_seed"] = sc.rng_seed;
  j["max_ticks"] = sc.max_ticks;
  j["human_stop_confidence"] = sc.human_stop_confidence;
  j["prior_weighted_reveal"] = sc.prior_weighted_reveal;
  j["update_before_decode"] = sc.update_before_decode;
  j["max_iters"] = sc.max_iters;
  return j;
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Stable identity of a scenario: FNV-1a over the canonical document.
inline std::string scenario_hash(const Scenario& sc) { return hex64(fnv1a64(to_json(sc).dump())); }

}  // namespace convreveal
