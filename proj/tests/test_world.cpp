#include "catch_amalgamated.hpp"

#include <random>

#include "convreveal/world.hpp"

using namespace convreveal;
using Catch::Matchers::WithinAbs;

namespace {
const Bounds kWide{{-10, -10}, {10, 10}};
}

TEST_CASE("step blends human and robot velocity") {
  SECTION("identical actions") {
    const auto r = step(State{{0, 0}}, Action{{1, 0}}, Action{{1, 0}}, 0.5, 0.1, kWide);
    CHECK(r.state.position == Vec2{0.1, 0.0});
    CHECK_FALSE(r.clamped);
  }
  SECTION("opposing actions cancel") {
    const auto r = step(State{{0, 0}}, Action{{1, 0}}, Action{{-1, 0}}, 0.5, 0.1, kWide);
    CHECK(r.state.position == Vec2{0.0, 0.0});
  }
  SECTION("hand-evaluated arithmetic") {
    // 0.2 * (0.25 * (1, 0) + 0.75 * (0, 1)) = (0.05, 0.15)
    const auto r = step(State{{0, 0}}, Action{{1, 0}}, Action{{0, 1}}, 0.25, 0.2, kWide);
    CHECK_THAT(r.state.position.x, WithinAbs(0.05, 1e-15));
    CHECK_THAT(r.state.position.y, WithinAbs(0.15, 1e-15));
  }
}

TEST_CASE("blending limits ignore one side exactly") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const State s{{u(gen), u(gen)}};
    const Action h{{u(gen), u(gen)}}, r{{u(gen), u(gen)}}, other{{u(gen), u(gen)}};
    CHECK(step(s, h, r, 1.0, 0.1, kWide).state == step(s, h, other, 1.0, 0.1, kWide).state);
    CHECK(step(s, h, r, 0.0, 0.1, kWide).state == step(s, other, r, 0.0, 0.1, kWide).state);
  }
}

TEST_CASE("states stay inside the bounds") {
  const Bounds b{{0, 0}, {1, 1}};
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-3, 3);
  State s{{0.5, 0.5}};
  bool saw_clamp = false;
  for (int i = 0; i < 2000; ++i) {
    const auto r = step(s, Action{{u(gen), u(gen)}}, Action{{u(gen), u(gen)}}, 0.5, 0.5, b);
    REQUIRE(b.contains(r.state.position));
    saw_clamp |= r.clamped;
    s = r.state;
  }
  CHECK(saw_clamp);
}

TEST_CASE("step is deterministic") {
  const State s{{0.123456789, 0.987654321}};
  const Action h{{0.3, -0.7}}, r{{-0.11, 0.42}};
  const auto a = step(s, h, r, 0.37, 0.13, kWide);
  const auto b = step(s, h, r, 0.37, 0.13, kWide);
  CHECK(a.state == b.state);
}

TEST_CASE("reached is boundary inclusive") {
  CHECK(reached(State{{1, 1}}, Task{0, {1, 1}, 0.1, ""}));
  CHECK_FALSE(reached(State{{1, 1}}, Task{0, {1, 1.2}, 0.1, ""}));
  // 3-4-5 triangle: distance exactly 0.1 in floating point
  CHECK(reached(State{{0, 0}}, Task{0, {0.06, 0.08}, 0.1, ""}));
}

TEST_CASE("action set layout") {
  const auto a = make_action_set(4, {0.5, 1.0}, 2.0);
  REQUIRE(a.size() == 9);
  CHECK(a[0].is_zero());
  CHECK(a[1].velocity == Vec2{1.0, 0.0});
  CHECK(a[2].velocity == Vec2{0.0, 1.0});
  CHECK(a[5].velocity == Vec2{2.0, 0.0});
  CHECK(a[8].velocity == Vec2{0.0, -2.0});
}

TEST_CASE("snapping picks the nearest member, lowest index on ties") {
  const auto a = make_action_set(4, {1.0}, 1.0);
  CHECK(snap_index(Action{{0.9, 0.2}}, a) == 1);
  CHECK(snap_index(Action{{0.05, 0.0}}, a) == 0);
  // equidistant from +x and +y
  CHECK(snap_index(Action{{0.7, 0.7}}, a) == 1);
  CHECK(find_action(Action{{0.0, -1.0}}, a) == std::optional<std::size_t>{4});
  CHECK_FALSE(find_action(Action{{0.5, 0.5}}, a).has_value());
}

TEST_CASE("reached_any reports the first capturing task") {
  const std::vector<Task> tasks{{0, {0, 0}, 0.5, "a"}, {1, {0.4, 0}, 0.5, "b"}};
  CHECK(reached_any(State{{0.2, 0}}, tasks) == std::optional<int>{0});
  CHECK(reached_any(State{{0.8, 0}}, tasks) == std::optional<int>{1});
  CHECK_FALSE(reached_any(State{{3, 3}}, tasks).has_value());
}
