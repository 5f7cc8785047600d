#include "catch_amalgamated.hpp"

#include <filesystem>

#include "convreveal/qtable_cache.hpp"
#include "convreveal/scenario_io.hpp"

using namespace convreveal;
using Catch::Matchers::ContainsSubstring;

namespace {

json minimal_doc() {
  return json::parse(read_text_file(CONVREVEAL_CONFIG_DIR "/minimal.json"));
}

std::string error_of(const json& doc) {
  try {
    scenario_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal two-task scenario") {
  const Scenario sc = load_scenario_file(CONVREVEAL_CONFIG_DIR "/minimal.json");
  CHECK(sc.tasks.size() == 2);
  CHECK(sc.action_set.size() == 9);
  CHECK(sc.action_set[0].is_zero());
  CHECK(sc.gamma == 0.95);
  CHECK(sc.tasks[1].name == "right");
}

TEST_CASE("validation names the violated invariant") {
  json doc = minimal_doc();
  doc["blend_beta"] = 1.5;
  CHECK_THAT(error_of(doc), ContainsSubstring("blend_beta out of range"));

  doc = minimal_doc();
  doc["tasks"] = json::array({doc["tasks"][0]});
  CHECK_THAT(error_of(doc), ContainsSubstring("task"));

  doc = minimal_doc();
  doc.erase("rng_seed");
  CHECK_THAT(error_of(doc), ContainsSubstring("rng_seed"));

  doc = minimal_doc();
  doc["convention_spec"]["type"] = "written";
  CHECK_THAT(error_of(doc), ContainsSubstring("convention_spec"));

  doc = minimal_doc();
  doc["tasks"][0]["goal"] = json::array({5.0, 0.5});
  CHECK_FALSE(error_of(doc).empty());

  doc = minimal_doc();
  doc["gamma"] = 1.0;
  CHECK_THAT(error_of(doc), ContainsSubstring("gamma"));

  doc = minimal_doc();
  doc["human_model_spec"]["aim_sd"] = -1;
  CHECK_THAT(error_of(doc), ContainsSubstring("aim_sd"));
}

TEST_CASE("parse errors report line and column") {
  try {
    load_scenario("{\n  \"bounds\": {\n    \"min\": [0, 0],,\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK_THAT(std::string(e.what()), ContainsSubstring("line 3"));
  }
}

TEST_CASE("study layouts survive a serialization round trip") {
  for (const char* f : {"/study1/far.json", "/study1/mid.json", "/study1/close.json", "/study3/scenario.json",
                        "/three_task_cosine.json"}) {
    const Scenario sc = load_scenario_file(std::string(CONVREVEAL_CONFIG_DIR) + f);
    const Scenario back = scenario_from_json(to_json(sc));
    CHECK(to_json(back).dump() == to_json(sc).dump());
    CHECK(scenario_hash(back) == scenario_hash(sc));
  }
  const Scenario mid = load_scenario_file(CONVREVEAL_CONFIG_DIR "/study1/mid.json");
  CHECK(distance(mid.tasks[0].goal, mid.tasks[1].goal) == Catch::Approx(0.3));
}

TEST_CASE("explicit action lists put the zero action first") {
  json doc = minimal_doc();
  doc.erase("n_headings");
  doc.erase("magnitudes");
  json ring = json::array();
  for (int h = 0; h < 8; ++h) {
    const double a = h * std::acos(-1.0) / 4;
    ring.push_back(json::array({0.25 * std::cos(a), 0.25 * std::sin(a)}));
    if (h == 3) ring.push_back(json::array({0.0, 0.0}));
  }
  doc["action_set"] = ring;
  const Scenario sc = scenario_from_json(doc);
  REQUIRE(sc.action_set.size() == 9);
  CHECK(sc.action_set[0].is_zero());
  CHECK(sc.action_set[1].velocity.x == 0.25);
  ring.erase(4);
  doc["action_set"] = ring;
  CHECK(scenario_from_json(doc).action_set.size() == 9);
  // a half ring leaves the robot unable to move backwards
  doc["action_set"] = json::array({ring[0], ring[1], ring[2], ring[3]});
  CHECK_THAT(error_of(doc), ContainsSubstring("headings"));
}

TEST_CASE("Q tables round trip through the cache") {
  const auto dir = std::filesystem::temp_directory_path() / "convreveal_cache_test";
  std::filesystem::remove_all(dir);
  const Scenario sc = load_scenario_file(CONVREVEAL_CONFIG_DIR "/minimal.json");
  const QTables fresh = compute_qtables(sc, dir);
  CHECK(std::distance(std::filesystem::directory_iterator(dir), std::filesystem::directory_iterator{}) == 2);
  const QTables cached = compute_qtables(sc, dir);
  REQUIRE(cached.size() == fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    CHECK(cached[i].q == fresh[i].q);
    CHECK(cached[i].v == fresh[i].v);
  }
  // a different scenario never reads another's tables
  Scenario other = sc;
  other.gamma = 0.9;
  CHECK(qtable_cache_key(other, 0) != qtable_cache_key(sc, 0));
  std::filesystem::remove_all(dir);
}
