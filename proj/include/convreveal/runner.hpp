#pragma once

// Episode driver, study-style metrics, and deterministic experiment sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "convreveal/belief.hpp"
#include "convreveal/convention.hpp"
#include "convreveal/episode.hpp"
#include "convreveal/qtable_cache.hpp"
#include "convreveal/reveal.hpp"
#include "convreveal/rng.hpp"
#include "convreveal/scenario_io.hpp"
#include "convreveal/simhuman.hpp"
#include "convreveal/value.hpp"

namespace convreveal {

/// A scenario together with everything precomputed from it.
struct World {
  Scenario scenario;
  QTables qtables;
  Convention convention;
  std::string hash;

  explicit World(Scenario sc, std::optional<std::filesystem::path> cache_dir = cache_dir_from_env())
      : scenario(std::move(sc)),
        qtables(compute_qtables(scenario, cache_dir)),
        convention(scenario),
        hash(scenario_hash(scenario)) {}

  TickContext context(AssistMode mode) const { return TickContext{scenario, convention, qtables, mode}; }
};

inline EpisodeOutcome summarize(const std::vector<EpisodeRow>& rows, std::optional<int> reached_task) {
  EpisodeOutcome o;
  o.reached_task = reached_task.value_or(-1);
  o.ticks = static_cast<int>(rows.size());
  for (const auto& r : rows) {
    if (norm(r.a_h.velocity) >= kZeroInputNorm) ++o.inputs;
    if (r.incorrect) ++o.incorrect_inputs;
  }
  return o;
}

/// Algorithm loop with a simulated operator. The operator presses (and watches
/// the robot's responses) until the robot's belief in their task reaches
/// human_stop_confidence; `human` persists across calls so repeated
/// interactions can build on earlier ones.
inline EpisodeLog run_episode(const World& w, AssistMode mode, HumanModel& human, int theta_true,
                              std::uint64_t seed) {
  const Scenario& sc = w.scenario;
  if (theta_true < 0 || static_cast<std::size_t>(theta_true) >= sc.tasks.size())
    throw std::out_of_range("run_episode: unknown task id");
  const TickContext ctx = w.context(mode);
  Session session = make_session(sc, theta_true);
  Rng rng(seed);
  std::optional<Action> last_a_r;
  std::optional<int> reached_task;
  bool pressed = false;

  for (;;) {
    if ((reached_task = reached_any(session.s, sc.tasks))) break;
    if (session.t >= sc.max_ticks) break;
    // nobody to hand over to when the robot never moves
    const bool satisfied = mode != AssistMode::Unassisted &&
                           session.belief.probability(theta_true) >= sc.human_stop_confidence;
    // the operator watches the response to each press, not the motion while idle
    Action a_h{};
    if (!satisfied) a_h = human_act(human, session.s, theta_true, pressed ? last_a_r : std::nullopt, sc, rng);
    else if (pressed && last_a_r) human_observe(human, session.s, theta_true, *last_a_r, sc);
    pressed = !satisfied;
    last_a_r = tick(session, a_h, ctx).result.a_r;
  }

  EpisodeLog log;
  log.scenario_hash = w.hash;
  log.mode = mode;
  log.seed = seed;
  log.theta_true = theta_true;
  log.outcome = summarize(session.rows, reached_task);
  log.rows = std::move(session.rows);
  return log;
}

/// Drive the loop from a recorded input sequence (stops early if a goal is reached).
inline EpisodeLog run_scripted(const World& w, AssistMode mode, const std::vector<Action>& inputs,
                               int theta_true) {
  const Scenario& sc = w.scenario;
  const TickContext ctx = w.context(mode);
  Session session = make_session(sc, theta_true);
  std::optional<int> reached_task;
  for (const Action& a : inputs) {
    if ((reached_task = reached_any(session.s, sc.tasks))) break;
    if (session.t >= sc.max_ticks) break;
    tick(session, a, ctx);
  }
  if (!reached_task) reached_task = reached_any(session.s, sc.tasks);
  EpisodeLog log;
  log.scenario_hash = w.hash;
  log.mode = mode;
  log.theta_true = theta_true;
  log.outcome = summarize(session.rows, reached_task);
  log.rows = std::move(session.rows);
  return log;
}

/// Largest state or belief deviation between a log and its re-simulation.
inline double replay_deviation(const World& w, const EpisodeLog& log) {
  std::vector<Action> inputs;
  for (const auto& r : log.rows) inputs.push_back(r.a_h);
  const EpisodeLog again = run_scripted(w, log.mode, inputs, log.theta_true);
  if (again.rows.size() != log.rows.size()) return std::numeric_limits<double>::infinity();
  double dev = 0.0;
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    const auto& a = log.rows[i];
    const auto& b = again.rows[i];
    dev = std::max({dev, distance(a.s.position, b.s.position), distance(a.s_next.position, b.s_next.position)});
    for (std::size_t j = 0; j < a.belief.size(); ++j) dev = std::max(dev, std::abs(a.belief[j] - b.belief[j]));
  }
  return dev;
}

// ---------------------------------------------------------------------------
// Metrics

/// Reached the true goal with no more presses than the budget (inclusive).
inline bool success(const EpisodeLog& log, double input_budget) {
  return log.outcome.reached_task == log.theta_true && log.outcome.inputs <= input_budget;
}

inline double mean_inputs(const std::vector<const EpisodeLog*>& logs) {
  if (logs.empty()) return 0.0;
  double s = 0.0;
  for (const auto* l : logs) s += l->outcome.inputs;
  return s / static_cast<double>(logs.size());
}

inline double mean_true_belief(const std::vector<const EpisodeLog*>& logs) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto* l : logs)
    for (const auto& r : l->rows) {
      s += r.belief.at(l->theta_true);
      ++n;
    }
  if (n == 0) throw std::invalid_argument("belief_change: no rows");
  return s / static_cast<double>(n);
}

/// Mean b(theta_true) over the after rows minus the mean over the before rows.
inline double belief_change(const std::vector<const EpisodeLog*>& before,
                            const std::vector<const EpisodeLog*>& after) {
  if (before.empty() || after.empty()) throw std::invalid_argument("belief_change: empty log set");
  return mean_true_belief(after) - mean_true_belief(before);
}

inline double belief_change(const std::vector<EpisodeLog>& before, const std::vector<EpisodeLog>& after) {
  std::vector<const EpisodeLog*> b, a;
  for (const auto& l : before) b.push_back(&l);
  for (const auto& l : after) a.push_back(&l);
  return belief_change(b, a);
}

/// Initial vs most recent window of an ordered log sequence: first and last 25% of rows.
inline double belief_change_windowed(const std::vector<const EpisodeLog*>& sequence) {
  std::vector<double> series;
  for (const auto* l : sequence)
    for (const auto& r : l->rows) series.push_back(r.belief.at(l->theta_true));
  if (series.empty()) throw std::invalid_argument("belief_change: empty log set");
  const std::size_t win = std::max<std::size_t>(1, series.size() / 4);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < win; ++i) {
    head += series[i];
    tail += series[series.size() - win + i];
  }
  return (tail - head) / static_cast<double>(win);
}

struct Metrics {
  double success_rate = 0.0;
  double belief_change = 0.0;
  double mean_inputs = 0.0;
  double input_budget = 0.0;
  int episodes = 0;
};

// ---------------------------------------------------------------------------
// Sweeps

struct SweepConfig {
  std::vector<Scenario> locations;
  std::vector<std::string> location_names;
  std::vector<AssistMode> modes{AssistMode::Ours, AssistMode::NoAssist};
  int seeds = 50;
  std::uint64_t master_seed = 0;
  std::optional<HumanModelSpec> human;  // overrides each scenario's human_model_spec
  int interactions_per_location = 1;
  /// Optional unassisted layout visited before and after the locations.
  std::optional<Scenario> generalization;
  int generalization_interactions = 1;
  int jobs = 1;
};

inline SweepConfig sweep_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  SweepConfig cfg;
  auto load_loc = [&](const json& entry) -> Scenario {
    if (entry.is_string()) {
      std::filesystem::path p = entry.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      return load_scenario_file(p.string());
    }
    return scenario_from_json(entry);
  };
  if (!j.is_object()) throw ConfigError("sweep document must be an object");
  const json& locs = detail::need(j, "locations");
  if (!locs.is_array() || locs.empty()) throw ConfigError("field 'locations' must be a nonempty array");
  for (std::size_t i = 0; i < locs.size(); ++i) {
    cfg.locations.push_back(load_loc(locs[i]));
    cfg.location_names.push_back(locs[i].is_string() ? std::filesystem::path(locs[i].get<std::string>()).stem().string()
                                                     : "location" + std::to_string(i));
  }
  if (j.contains("names")) {
    const auto names = j.at("names").get<std::vector<std::string>>();
    if (names.size() != cfg.locations.size()) throw ConfigError("field 'names' must match 'locations'");
    cfg.location_names = names;
  }
  if (j.contains("modes")) {
    cfg.modes.clear();
    for (const auto& m : j.at("modes")) {
      const auto mode = parse_mode(m.get<std::string>());
      if (!mode) throw ConfigError("unknown mode '" + m.get<std::string>() + "'");
      cfg.modes.push_back(*mode);
    }
    if (cfg.modes.empty()) throw ConfigError("field 'modes' must be nonempty");
  }
  cfg.seeds = j.value("seeds", 50);
  if (cfg.seeds < 1) throw ConfigError("seeds must be positive");
  cfg.master_seed = j.value("master_seed", std::uint64_t{0});
  if (j.contains("human")) {
    const std::string h = j.at("human").is_string() ? j.at("human").get<std::string>()
                                                    : j.at("human").value("type", "");
    const auto kind = parse_human_kind(h);
    if (!kind) throw ConfigError("unknown human model '" + h + "'");
    HumanModelSpec spec = cfg.locations.front().human_model_spec;
    spec.kind = *kind;
    if (j.at("human").is_object()) {
      const json& jh = j.at("human");
      spec.learn_rate = jh.value("learn_rate", spec.learn_rate);
      spec.noise = jh.value("noise", spec.noise);
      spec.aim_sd = jh.value("aim_sd", spec.aim_sd);
      if (jh.contains("memory_frame"))
        spec.frame = jh.at("memory_frame") == "world" ? MemoryFrame::World : MemoryFrame::Goal;
      spec.explore = jh.value("explore", spec.explore);
    }
    cfg.human = spec;
  }
  cfg.interactions_per_location = j.value("interactions_per_location", 1);
  if (cfg.interactions_per_location < 1) throw ConfigError("interactions_per_location must be positive");
  if (j.contains("generalization")) cfg.generalization = load_loc(j.at("generalization"));
  cfg.generalization_interactions = j.value("generalization_interactions", 1);
  cfg.jobs = j.value("jobs", 1);
  return cfg;
}

inline SweepConfig load_sweep_file(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error at " + detail::line_col(text, e.byte ? e.byte - 1 : 0) + ": " + e.what());
  }
  try {
    return sweep_from_json(j, std::filesystem::path(path).parent_path());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid sweep: ") + e.what());
  }
}

struct MetricCell {
  std::string location;  // location name, or "generalization"
  AssistMode mode = AssistMode::Ours;
  Metrics metrics;
};

struct ExperimentResult {
  std::vector<MetricCell> cells;
  /// Ordered by (mode, seed, phase, location, interaction).
  std::vector<EpisodeLog> logs;

  const MetricCell* find(const std::string& location, AssistMode mode) const {
    for (const auto& c : cells)
      if (c.location == location && c.mode == mode) return &c;
    return nullptr;
  }
};

/// Episode stream seed: independent of the mode so conditions are paired.
inline std::uint64_t episode_seed(std::uint64_t master, int seed_index, int phase, int location,
                                  int interaction) {
  return derive_seed(master, {static_cast<std::uint64_t>(seed_index), static_cast<std::uint64_t>(phase),
                              static_cast<std::uint64_t>(location), static_cast<std::uint64_t>(interaction)});
}

inline int draw_task(std::uint64_t ep_seed, std::size_t num_tasks) {
  Rng r(derive_seed(ep_seed, {0xA5A5u}));
  return static_cast<int>(r.index(num_tasks));
}

namespace detail {

// phase 0: generalization before, 1: locations, 2: generalization after
inline std::vector<EpisodeLog> run_participant(const std::vector<World>& worlds,
                                               const World* general, const SweepConfig& cfg,
                                               AssistMode mode, int seed_index) {
  std::vector<EpisodeLog> out;
  HumanModel human = make_human(cfg.human.value_or(worlds.front().scenario.human_model_spec));
  auto run = [&](const World& w, AssistMode m, int phase, int loc, int inter) {
    const std::uint64_t es = episode_seed(cfg.master_seed, seed_index, phase, loc, inter);
    EpisodeLog log = run_episode(w, m, human, draw_task(es, w.scenario.tasks.size()), es);
    log.location = phase == 1 ? loc : -1;
    log.interaction = inter;
    out.push_back(std::move(log));
  };
  if (general)
    for (int i = 0; i < cfg.generalization_interactions; ++i) run(*general, AssistMode::Unassisted, 0, 0, i);
  for (std::size_t l = 0; l < worlds.size(); ++l)
    for (int i = 0; i < cfg.interactions_per_location; ++i) run(worlds[l], mode, 1, static_cast<int>(l), i);
  if (general)
    for (int i = 0; i < cfg.generalization_interactions; ++i) run(*general, AssistMode::Unassisted, 2, 0, i);
  return out;
}

}  // namespace detail

/// Every (mode, seed) participant visits each location in order; metric cells
/// are per (location, mode). The success budget of a location is the mean input
/// count over all of its episodes, pooled across modes.
inline ExperimentResult run_experiment(const SweepConfig& cfg) {
  if (cfg.locations.empty()) throw ConfigError("sweep has no locations");
  std::vector<World> worlds;
  for (const auto& sc : cfg.locations) worlds.emplace_back(sc);
  std::optional<World> general;
  if (cfg.generalization) general.emplace(*cfg.generalization);

  const int n_modes = static_cast<int>(cfg.modes.size());
  const int n_chains = n_modes * cfg.seeds;
  std::vector<std::vector<EpisodeLog>> chains(static_cast<std::size_t>(n_chains));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c; (c = next++) < n_chains;)
      chains[c] = detail::run_participant(worlds, general ? &*general : nullptr, cfg,
                                          cfg.modes[c / cfg.seeds], c % cfg.seeds);
  };
  const int jobs = std::clamp(cfg.jobs, 1, std::max(1, n_chains));
  std::vector<std::thread> pool;
  for (int i = 1; i < jobs; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentResult res;
  for (auto& ch : chains)
    for (auto& l : ch) res.logs.push_back(std::move(l));

  for (std::size_t l = 0; l < worlds.size(); ++l) {
    std::vector<const EpisodeLog*> pooled;
    for (const auto& lg : res.logs)
      if (lg.location == static_cast<int>(l)) pooled.push_back(&lg);
    const double budget = mean_inputs(pooled);
    for (int mi = 0; mi < n_modes; ++mi) {
      const AssistMode mode = cfg.modes[mi];
      MetricCell cell{cfg.location_names[l], mode, {}};
      std::vector<const EpisodeLog*> in_cell;
      for (const auto* lg : pooled)
        if (lg->mode == mode) in_cell.push_back(lg);
      int wins = 0;
      for (const auto* lg : in_cell) wins += success(*lg, budget) ? 1 : 0;
      // belief change per participant across this cell's interactions, averaged
      double bc = 0.0;
      int participants = 0;
      for (std::size_t i = 0; i < in_cell.size(); i += cfg.interactions_per_location) {
        std::vector<const EpisodeLog*> seq(in_cell.begin() + i,
                                           in_cell.begin() + std::min(in_cell.size(), i + cfg.interactions_per_location));
        bc += belief_change_windowed(seq);
        ++participants;
      }
      cell.metrics.episodes = static_cast<int>(in_cell.size());
      cell.metrics.success_rate = in_cell.empty() ? 0.0 : static_cast<double>(wins) / in_cell.size();
      cell.metrics.belief_change = participants ? bc / participants : 0.0;
      cell.metrics.mean_inputs = mean_inputs(in_cell);
      cell.metrics.input_budget = budget;
      res.cells.push_back(cell);
    }
  }

  if (general) {
    for (int mi = 0; mi < n_modes; ++mi) {
      const AssistMode mode = cfg.modes[mi];
      std::vector<const EpisodeLog*> before, after, all;
      for (const auto& lg : res.logs) {
        if (lg.location != -1 || lg.mode != AssistMode::Unassisted) continue;
        all.push_back(&lg);
      }
      // generalization logs appear as [before..., locations..., after...] per participant
      const int g = cfg.generalization_interactions;
      const std::size_t per_participant = static_cast<std::size_t>(2 * g);
      const std::size_t first = static_cast<std::size_t>(mi) * cfg.seeds * per_participant;
      for (int s = 0; s < cfg.seeds; ++s) {
        const std::size_t base = first + static_cast<std::size_t>(s) * per_participant;
        for (int i = 0; i < g; ++i) {
          before.push_back(all.at(base + i));
          after.push_back(all.at(base + g + i));
        }
      }
      std::vector<const EpisodeLog*> both = before;
      both.insert(both.end(), after.begin(), after.end());
      const double budget = mean_inputs(both);
      MetricCell cell{"generalization", mode, {}};
      int wins = 0;
      for (const auto* lg : after) wins += success(*lg, budget) ? 1 : 0;
      cell.metrics.episodes = static_cast<int>(after.size());
      cell.metrics.success_rate = after.empty() ? 0.0 : static_cast<double>(wins) / after.size();
      cell.metrics.belief_change = belief_change(before, after);
      cell.metrics.mean_inputs = mean_inputs(after);
      cell.metrics.input_budget = budget;
      res.cells.push_back(cell);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string format_number(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

/// location,mode,metric,value
inline std::string metrics_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << "location,mode,metric,value\n";
  for (const auto& c : r.cells) {
    const char* m = to_string(c.mode);
    o << c.location << ',' << m << ",success_rate," << format_number(c.metrics.success_rate) << '\n';
    o << c.location << ',' << m << ",belief_change," << format_number(c.metrics.belief_change) << '\n';
    o << c.location << ',' << m << ",mean_inputs," << format_number(c.metrics.mean_inputs) << '\n';
    o << c.location << ',' << m << ",input_budget," << format_number(c.metrics.input_budget) << '\n';
    o << c.location << ',' << m << ",episodes," << c.metrics.episodes << '\n';
  }
  return o.str();
}

inline json to_json(const EpisodeLog& log) {
  json j;
  j["scenario_hash"] = log.scenario_hash;
  j["mode"] = to_string(log.mode);
  j["seed"] = log.seed;
  j["theta_true"] = log.theta_true;
  j["location"] = log.location;
  j["interaction"] = log.interaction;
  j["outcome"] = {{"reached_task", log.outcome.reached_task},
                  {"ticks", log.outcome.ticks},
                  {"incorrect_inputs", log.outcome.incorrect_inputs},
                  {"inputs", log.outcome.inputs}};
  json rows = json::array();
  for (const auto& r : log.rows) {
    rows.push_back({{"t", r.t},
                    {"s", {r.s.position.x, r.s.position.y}},
                    {"a_h", {r.a_h.velocity.x, r.a_h.velocity.y}},
                    {"a_h_index", r.a_h_index},
                    {"a_r", {r.a_r.velocity.x, r.a_r.velocity.y}},
                    {"belief", r.belief},
                    {"epsilon", r.epsilon},
                    {"theta_star", r.theta_star},
                    {"objective", r.objective},
                    {"slack", r.slack},
                    {"s_next", {r.s_next.position.x, r.s_next.position.y}},
                    {"incorrect", r.incorrect}});
  }
  j["rows"] = std::move(rows);
  return j;
}

inline EpisodeLog episode_from_json(const json& j) {
  EpisodeLog log;
  log.scenario_hash = j.at("scenario_hash").get<std::string>();
  const auto mode = parse_mode(j.at("mode").get<std::string>());
  if (!mode) throw std::invalid_argument("episode log: unknown mode");
  log.mode = *mode;
  log.seed = j.at("seed").get<std::uint64_t>();
  log.theta_true = j.at("theta_true").get<int>();
  log.location = j.value("location", 0);
  log.interaction = j.value("interaction", 0);
  const json& o = j.at("outcome");
  log.outcome = {o.at("reached_task").get<int>(), o.at("ticks").get<int>(),
                 o.at("incorrect_inputs").get<int>(), o.at("inputs").get<int>()};
  auto v2 = [](const json& a) { return Vec2{a.at(0).get<double>(), a.at(1).get<double>()}; };
  for (const auto& r : j.at("rows")) {
    EpisodeRow row;
    row.t = r.at("t").get<int>();
    row.s = State{v2(r.at("s"))};
    row.a_h = Action{v2(r.at("a_h"))};
    row.a_h_index = r.at("a_h_index").get<int>();
    row.a_r = Action{v2(r.at("a_r"))};
    row.belief = r.at("belief").get<std::vector<double>>();
    row.epsilon = r.at("epsilon").get<double>();
    row.theta_star = r.at("theta_star").get<int>();
    row.objective = r.at("objective").get<double>();
    row.slack = r.at("slack").get<double>();
    row.s_next = State{v2(r.at("s_next"))};
    row.incorrect = r.at("incorrect").get<bool>();
    log.rows.push_back(std::move(row));
  }
  return log;
}

/// seed,k,reg with one row per interaction count k (including k = 0).
inline std::string regret_csv(const std::vector<RegretTrace>& traces) {
  std::ostringstream o;
  o << "seed,k,reg\n";
  for (const auto& t : traces)
    for (std::size_t k = 0; k < t.reg.size(); ++k) o << t.seed << ',' << k << ',' << t.reg[k] << '\n';
  return o.str();
}

inline std::vector<RegretTrace> parse_regret_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("seed,k,reg", 0) != 0)
    throw ConfigError("regret csv: missing 'seed,k,reg' header");
  std::vector<RegretTrace> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::uint64_t seed = 0;
    std::size_t k = 0;
    int reg = 0;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> seed >> c1 >> k >> c2 >> reg) || c1 != ',' || c2 != ',')
      throw ConfigError("regret csv: bad row at line " + std::to_string(lineno));
    if (out.empty() || out.back().seed != seed) out.push_back(RegretTrace{seed, {}});
    if (out.back().reg.size() != k) throw ConfigError("regret csv: k out of order at line " + std::to_string(lineno));
    out.back().reg.push_back(reg);
  }
  return out;
}

/// metrics.csv and logs.jsonl under dir.
inline void write_experiment(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream o(dir / "metrics.csv", std::ios::binary);
    o << metrics_csv(r);
  }
  std::ofstream o(dir / "logs.jsonl", std::ios::binary);
  for (const auto& l : r.logs) o << to_json(l).dump() << '\n';
}

}  // namespace convreveal
