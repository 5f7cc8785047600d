#pragma once

// Planar shared-control workspace: states, actions, tasks, and the blended
// single-step dynamics s' = s + dt * (beta * a_H + (1 - beta) * a_R).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace convreveal {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double k) { return {k * a.x, k * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Cosine of the angle between a and b; 0 when either is the zero vector.
inline double cosine(Vec2 a, Vec2 b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

struct State {
  Vec2 position;
  friend constexpr bool operator==(const State&, const State&) = default;
};

/// Commanded velocity in workspace units per second.
struct Action {
  Vec2 velocity;
  bool is_zero() const { return velocity.x == 0.0 && velocity.y == 0.0; }
  friend constexpr bool operator==(const Action&, const Action&) = default;
};

struct Bounds {
  Vec2 min{0.0, 0.0};
  Vec2 max{1.0, 1.0};

  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  bool contains(Vec2 p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
  }
  Vec2 clamp(Vec2 p) const {
    return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y)};
  }
};

struct Task {
  int id = 0;
  Vec2 goal;
  double radius = 0.05;
  std::string name;
};

// ---------------------------------------------------------------------------
// Scenario-level configuration for the other modules. These are plain
// parameter records; behaviour lives in convention.hpp, reveal.hpp and
// simhuman.hpp.

struct BoltzmannSpec {
  double lambda = 5.0;
};
struct CosineSpec {
  double kappa = 5.0;
};
/// Likelihood keyed on the magnitude of the input projected on `axis`.
/// Bands are expressed as fractions of a_max.
struct MagnitudeCodedSpec {
  double small_lo = 0.2;
  double small_hi = 0.55;
  double large_lo = 0.65;
  double large_hi = 1.05;
  Vec2 axis{1.0, 0.0};
  double sharpness = 8.0;
  int small_task = 0;
  int large_task = 1;
};

struct ConventionSpec {
  std::variant<BoltzmannSpec, CosineSpec, MagnitudeCodedSpec> model = BoltzmannSpec{};
  double floor = 1e-3;
};

enum class EpsilonMode { Constant, DistanceDecay, PerformanceAdaptive };

struct EpsilonSpec {
  EpsilonMode mode = EpsilonMode::DistanceDecay;
  /// PerformanceAdaptive: number of recent inputs the miss rate is taken over.
  int window = 10;
  /// PerformanceAdaptive: fraction of epsilon0 kept when the human makes no mistakes.
  double min_fraction = 0.25;
};

enum class HumanKind { Direct, AdaptiveMimic, Explorer };
enum class ExploreStrategy { Uniform, EpsilonGreedy };
/// Frame a simulated human remembers inputs in.
enum class MemoryFrame { Goal, World };

struct HumanModelSpec {
  HumanKind kind = HumanKind::AdaptiveMimic;
  double learn_rate = 0.5;
  double noise = 0.05;
  double aim_sd = 0.0;  // radians of Gaussian jitter on a mimic's own aim
  ExploreStrategy strategy = ExploreStrategy::EpsilonGreedy;
  double explore = 1.0;
  MemoryFrame frame = MemoryFrame::Goal;
};

enum class BlendMode { Fixed, Confidence };

struct Scenario {
  Bounds bounds;
  Vec2 start{0.5, 0.1};
  std::vector<Task> tasks;
  double dt = 0.1;
  double a_max = 0.25;
  double blend_beta = 0.5;
  BlendMode blend_mode = BlendMode::Fixed;
  double gamma = 0.95;
  int grid_resolution = 41;
  /// Index 0 is always the zero action.
  std::vector<Action> action_set;
  ConventionSpec convention_spec;
  double epsilon0 = 0.04;
  EpsilonSpec epsilon_spec;
  HumanModelSpec human_model_spec;
  std::uint64_t rng_seed = 0;
  int max_ticks = 400;
  /// Simulated humans stop pressing once the robot's belief in their task reaches this.
  double human_stop_confidence = 0.9;
  /// Weight the reveal objective by the current belief (off: objective exactly as printed).
  bool prior_weighted_reveal = false;
  /// Decode the MAP task after folding in the current input (true) or before.
  bool update_before_decode = true;
  /// Value-iteration iteration cap; 0 selects 10 * grid diameter.
  int max_iters = 0;
};

/// n_headings evenly spaced directions starting at +x, one ring per magnitude
/// (fraction of a_max), preceded by the zero action.
inline std::vector<Action> make_action_set(int n_headings, const std::vector<double>& magnitudes,
                                           double a_max) {
  std::vector<Action> out;
  out.push_back(Action{});
  const double two_pi = 2.0 * std::acos(-1.0);
  for (double m : magnitudes) {
    for (int h = 0; h < n_headings; ++h) {
      const double ang = two_pi * h / n_headings;
      double vx = m * a_max * std::cos(ang);
      double vy = m * a_max * std::sin(ang);
      // exact zeros on the axes keep symmetric scenarios symmetric
      if (std::abs(vx) < 1e-15 * a_max) vx = 0.0;
      if (std::abs(vy) < 1e-15 * a_max) vy = 0.0;
      out.push_back(Action{{vx, vy}});
    }
  }
  return out;
}

struct StepResult {
  State state;
  bool clamped = false;
};

inline Vec2 blend(Action a_h, Action a_r, double beta) {
  return beta * a_h.velocity + (1.0 - beta) * a_r.velocity;
}

inline StepResult step(const State& s, Action a_h, Action a_r, double beta, double dt,
                       const Bounds& bounds) {
  const Vec2 raw = s.position + dt * blend(a_h, a_r, beta);
  const Vec2 clamped = bounds.clamp(raw);
  return {State{clamped}, !(clamped == raw)};
}

inline StepResult step(const State& s, Action a_h, Action a_r, const Scenario& sc) {
  return step(s, a_h, a_r, sc.blend_beta, sc.dt, sc.bounds);
}

/// Capture test, boundary inclusive.
inline bool reached(const State& s, const Task& task) {
  return distance(s.position, task.goal) <= task.radius;
}

/// First task whose capture region contains s.
inline std::optional<int> reached_any(const State& s, const std::vector<Task>& tasks) {
  for (const auto& t : tasks)
    if (reached(s, t)) return t.id;
  return std::nullopt;
}

/// Index of the action-set member nearest to `a` (lowest index on ties).
inline std::size_t snap_index(Action a, const std::vector<Action>& action_set) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < action_set.size(); ++i) {
    const double d = distance(a.velocity, action_set[i].velocity);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// Index of an exact member of the action set, if any.
inline std::optional<std::size_t> find_action(Action a, const std::vector<Action>& action_set) {
  for (std::size_t i = 0; i < action_set.size(); ++i)
    if (action_set[i] == a) return i;
  return std::nullopt;
}

}  // namespace convreveal
