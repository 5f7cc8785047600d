#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "convreveal/runner.hpp"

using namespace convreveal;
using Catch::Matchers::WithinAbs;

namespace {

const World& minimal_world() {
  static const World w(load_scenario_file(CONVREVEAL_CONFIG_DIR "/minimal.json"), std::nullopt);
  return w;
}

EpisodeLog synthetic(int theta_true, int reached, int inputs, std::vector<double> true_belief = {}) {
  EpisodeLog log;
  log.theta_true = theta_true;
  log.outcome.reached_task = reached;
  log.outcome.inputs = inputs;
  for (double b : true_belief) {
    EpisodeRow r;
    r.belief = theta_true == 0 ? std::vector<double>{b, 1 - b} : std::vector<double>{1 - b, b};
    log.rows.push_back(r);
  }
  return log;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("success needs the right goal within the budget, inclusive") {
  CHECK_FALSE(success(synthetic(0, -1, 2), 5));
  CHECK_FALSE(success(synthetic(0, 1, 2), 5));
  CHECK(success(synthetic(0, 0, 5), 5));
  CHECK_FALSE(success(synthetic(0, 0, 6), 5));
}

TEST_CASE("success over a cohort of ten") {
  // (theta, reached, inputs); budget = mean inputs = 48 / 10 = 4.8
  const int cohort[10][3] = {{0, 0, 2}, {0, 0, 5}, {1, 1, 4}, {1, 0, 3}, {0, -1, 9},
                             {1, 1, 8}, {0, 0, 4}, {1, 1, 1}, {0, 0, 7}, {1, 1, 5}};
  const bool expect[10] = {true, false, true, false, false, false, true, true, false, false};
  std::vector<EpisodeLog> logs;
  for (const auto& c : cohort) logs.push_back(synthetic(c[0], c[1], c[2]));
  std::vector<const EpisodeLog*> ptrs;
  for (const auto& l : logs) ptrs.push_back(&l);
  const double budget = mean_inputs(ptrs);
  CHECK_THAT(budget, WithinAbs(4.8, 1e-12));
  for (int i = 0; i < 10; ++i) CHECK(success(logs[i], budget) == expect[i]);
}

TEST_CASE("belief change arithmetic") {
  const std::vector<EpisodeLog> before{synthetic(0, 0, 1, {0.5, 0.5}), synthetic(1, 1, 1, {0.5})};
  const std::vector<EpisodeLog> after{synthetic(1, 1, 1, {0.9, 0.9, 0.9})};
  CHECK_THAT(belief_change(before, before), WithinAbs(0.0, 1e-15));
  CHECK_THAT(belief_change(before, after), WithinAbs(0.4, 1e-12));
  CHECK_THROWS_AS(belief_change(before, std::vector<EpisodeLog>{}), std::invalid_argument);

  // eight rows: first two average 0.5, last two average 0.8
  const EpisodeLog seq = synthetic(0, 0, 1, {0.4, 0.6, 0.5, 0.5, 0.6, 0.7, 0.7, 0.9});
  CHECK_THAT(belief_change_windowed({&seq}), WithinAbs(0.3, 1e-12));
}

TEST_CASE("episode smoke: mimic with assistance reaches a far goal") {
  const World& w = minimal_world();
  HumanModel h = make_human(w.scenario.human_model_spec);
  const auto log = run_episode(w, AssistMode::Ours, h, 1, 123);
  CHECK(log.outcome.reached_task == 1);
  CHECK(log.outcome.inputs > 0);
  CHECK(log.outcome.ticks == static_cast<int>(log.rows.size()));
}

TEST_CASE("unassisted rows carry the zero action and the operator drives home") {
  const World& w = minimal_world();
  HumanModel h = DirectHuman{};
  const auto log = run_episode(w, AssistMode::Unassisted, h, 0, 5);
  for (const auto& r : log.rows) CHECK(r.a_r.is_zero());
  CHECK(log.outcome.reached_task == 0);
}

TEST_CASE("assistance shortens the time spent unsure of the true task") {
  const World w(load_scenario_file(CONVREVEAL_CONFIG_DIR "/study1/close.json"), std::nullopt);
  int tied_or_better = 0, strictly = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int task = static_cast<int>(seed % 2);
    HumanModel direct = DirectHuman{};
    HumanModel mimic = make_human(w.scenario.human_model_spec);
    const auto base = run_episode(w, AssistMode::NoAssist, direct, task, seed);
    for (int i = 0; i < 3; ++i) run_episode(w, AssistMode::Ours, mimic, task, 1000 + seed * 10 + i);
    const auto ours = run_episode(w, AssistMode::Ours, mimic, task, seed);
    auto unsure = [&](const EpisodeLog& l) {
      int n = 0;
      for (const auto& r : l.rows) n += r.belief[task] < w.scenario.human_stop_confidence;
      return n;
    };
    tied_or_better += unsure(ours) <= unsure(base);
    strictly += unsure(ours) < unsure(base);
  }
  CHECK(tied_or_better >= 8);
  CHECK(strictly >= 5);
}

TEST_CASE("scripted runs replay exactly") {
  const World& w = minimal_world();
  HumanModel h = make_human(w.scenario.human_model_spec);
  const auto log = run_episode(w, AssistMode::Ours, h, 0, 77);
  CHECK(replay_deviation(w, log) <= 1e-9);
  const auto round = episode_from_json(to_json(log));
  CHECK(round.rows.size() == log.rows.size());
  CHECK(replay_deviation(w, round) <= 1e-9);
  CHECK(to_json(round).dump() == to_json(log).dump());
}

namespace {

SweepConfig small_sweep(int interactions) {
  json j = {{"locations", json::array({"minimal.json", "minimal.json", "minimal.json"})},
            {"names", {"a", "b", "c"}},
            {"modes", json::array({"ours", "no_assist"})},
            {"seeds", 50},
            {"master_seed", 9},
            {"interactions_per_location", interactions}};
  return sweep_from_json(j, CONVREVEAL_CONFIG_DIR);
}

}  // namespace

TEST_CASE("sweep cardinality") {
  const auto res = run_experiment(small_sweep(1));
  CHECK(res.cells.size() == 6);
  CHECK(res.logs.size() == 300);
  for (const auto& c : res.cells) CHECK(c.metrics.episodes == 50);
}

TEST_CASE("sweep output is independent of worker count") {
  SweepConfig a = small_sweep(2), b = small_sweep(2);
  a.jobs = 1;
  b.jobs = 3;
  const auto ra = run_experiment(a), rb = run_experiment(b);
  CHECK(metrics_csv(ra) == metrics_csv(rb));
  const auto da = std::filesystem::temp_directory_path() / "convreveal_test_sweep_a";
  const auto db = std::filesystem::temp_directory_path() / "convreveal_test_sweep_b";
  write_experiment(ra, da);
  write_experiment(rb, db);
  CHECK(slurp(da / "metrics.csv") == slurp(db / "metrics.csv"));
  CHECK(slurp(da / "logs.jsonl") == slurp(db / "logs.jsonl"));
  std::filesystem::remove_all(da);
  std::filesystem::remove_all(db);
}

TEST_CASE("paired conditions share episode seeds") {
  const auto res = run_experiment(small_sweep(1));
  std::map<std::tuple<std::uint64_t, int>, int> seen;
  for (const auto& l : res.logs) ++seen[{l.seed, l.theta_true}];
  for (const auto& [k, n] : seen) CHECK(n % 2 == 0);
}

TEST_CASE("generalization phase is unassisted before and after") {
  json j = {{"locations", {"minimal.json"}},
            {"seeds", 10},
            {"generalization", "three_task_cosine.json"},
            {"human", "adaptive_mimic"}};
  const auto res = run_experiment(sweep_from_json(j, CONVREVEAL_CONFIG_DIR));
  CHECK(res.cells.size() == 4);
  CHECK(res.logs.size() == 60);
  const auto* cell = res.find("generalization", AssistMode::Ours);
  REQUIRE(cell != nullptr);
  CHECK(cell->metrics.episodes == 10);
  int general = 0;
  for (const auto& l : res.logs) {
    if (l.location != -1) continue;
    ++general;
    CHECK(l.mode == AssistMode::Unassisted);
    for (const auto& r : l.rows) CHECK(r.a_r.is_zero());
  }
  CHECK(general == 40);
}

TEST_CASE("sweep config errors") {
  CHECK_THROWS_AS(sweep_from_json(json::array()), ConfigError);
  CHECK_THROWS_AS(sweep_from_json(json{{"locations", json::array()}}), ConfigError);
  CHECK_THROWS_AS(sweep_from_json(json{{"locations", {"minimal.json"}}, {"modes", {"written"}}}, CONVREVEAL_CONFIG_DIR),
                  ConfigError);
  CHECK_THROWS_AS(sweep_from_json(json{{"locations", {"minimal.json"}}, {"seeds", 0}}, CONVREVEAL_CONFIG_DIR),
                  ConfigError);
  CHECK_THROWS_AS(load_sweep_file(CONVREVEAL_CONFIG_DIR "/missing.json"), ConfigError);
}

TEST_CASE("regret csv round trip") {
  const auto traces = run_bandit_seeds(4, 30, HumanModelSpec{}, true, 3, 2);
  const auto back = parse_regret_csv(regret_csv(traces));
  REQUIRE(back.size() == traces.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i].reg == traces[i].reg);
  CHECK_THROWS_AS(parse_regret_csv("seed,k,reg\n0,0,abc\n"), ConfigError);
}
