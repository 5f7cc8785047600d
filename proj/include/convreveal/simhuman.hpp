#pragma once

// Simulated operators and the bandit view of convention learning.
//
// Inputs are remembered in a goal-relative frame: +x points at the human's
// goal, +y points away from the nearest other goal. A remembered "exaggerate
// to the side" therefore transfers to new states and object layouts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "convreveal/rng.hpp"
#include "convreveal/world.hpp"

namespace convreveal {

// ---------------------------------------------------------------------------
// Models

struct DirectHuman {};

/// Preference over discrete inputs plus the strength of the habit to replay it.
struct MimicMemory {
  std::vector<double> pref;
  double mimicry = 0.0;

  void ensure(std::size_t n) {
    if (pref.size() != n) pref.assign(n, 1.0 / static_cast<double>(n));
  }
  void reinforce(std::size_t arm, double learn_rate) {
    for (double& p : pref) p *= (1.0 - learn_rate);
    pref[arm] += learn_rate;
    mimicry += learn_rate * (1.0 - mimicry);
  }
  std::size_t preferred() const {
    return static_cast<std::size_t>(std::max_element(pref.begin(), pref.end()) - pref.begin());
  }
};

struct AdaptiveMimic {
  double learn_rate = 0.5;
  double noise = 0.05;
  double aim_sd = 0.0;
  MemoryFrame frame = MemoryFrame::Goal;
  /// Keyed by context; in episodes the context is the human's task id.
  std::map<int, MimicMemory> memory;
};

struct ExplorerStats {
  std::vector<double> reward_sum;
  std::vector<double> pulls;
  int t = 0;
  std::optional<std::size_t> last_arm;

  void ensure(std::size_t n) {
    if (reward_sum.size() != n) {
      reward_sum.assign(n, 0.0);
      pulls.assign(n, 0.0);
    }
  }
};

struct Explorer {
  ExploreStrategy strategy = ExploreStrategy::EpsilonGreedy;
  /// epsilon-greedy explores with probability min(1, explore * N / (t + 1)).
  double explore = 1.0;
  MemoryFrame frame = MemoryFrame::Goal;
  std::map<int, ExplorerStats> stats;
};

using HumanModel = std::variant<DirectHuman, AdaptiveMimic, Explorer>;

inline HumanModel make_human(const HumanModelSpec& spec) {
  switch (spec.kind) {
    case HumanKind::Direct: return DirectHuman{};
    case HumanKind::AdaptiveMimic: return AdaptiveMimic{spec.learn_rate, spec.noise, spec.aim_sd, spec.frame, {}};
    case HumanKind::Explorer: return Explorer{spec.strategy, spec.explore, spec.frame, {}};
  }
  return DirectHuman{};
}

inline std::optional<HumanKind> parse_human_kind(const std::string& s) {
  if (s == "direct") return HumanKind::Direct;
  if (s == "adaptive_mimic") return HumanKind::AdaptiveMimic;
  if (s == "explorer") return HumanKind::Explorer;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Goal-relative frame

struct GoalFrame {
  Vec2 ahead;  // unit vector toward the goal
  Vec2 aside;  // unit vector away from the nearest other goal

  Vec2 to_local(Vec2 v) const { return {dot(v, ahead), dot(v, aside)}; }
  Vec2 to_world(Vec2 v) const { return v.x * ahead + v.y * aside; }
};

inline GoalFrame goal_frame(const State& s, int theta, const std::vector<Task>& tasks) {
  const Vec2 to_goal = tasks.at(theta).goal - s.position;
  const double n = norm(to_goal);
  GoalFrame f;
  f.ahead = n > 0.0 ? (1.0 / n) * to_goal : Vec2{1.0, 0.0};
  f.aside = {-f.ahead.y, f.ahead.x};
  const Task* nearest = nullptr;
  for (const auto& t : tasks) {
    if (t.id == theta) continue;
    if (!nearest || distance(t.goal, s.position) < distance(nearest->goal, s.position)) nearest = &t;
  }
  if (nearest && dot(nearest->goal - s.position, f.aside) > 0.0) f.aside = -1.0 * f.aside;
  return f;
}

inline GoalFrame memory_frame(MemoryFrame kind, const State& s, int theta, const std::vector<Task>& tasks) {
  if (kind == MemoryFrame::World) return GoalFrame{{1.0, 0.0}, {0.0, 1.0}};
  return goal_frame(s, theta, tasks);
}

inline MemoryFrame frame_of(const HumanModel& m) {
  if (const auto* a = std::get_if<AdaptiveMimic>(&m)) return a->frame;
  if (const auto* e = std::get_if<Explorer>(&m)) return e->frame;
  return MemoryFrame::Goal;
}

/// True when a_R visibly heads for the human's goal more than for any other.
inline bool heads_toward(Action a_r, const State& s, int theta, const std::vector<Task>& tasks) {
  if (a_r.is_zero()) return false;
  const double own = cosine(a_r.velocity, tasks.at(theta).goal - s.position);
  for (const auto& t : tasks)
    if (t.id != theta && !(own > cosine(a_r.velocity, t.goal - s.position))) return false;
  return true;
}

inline Action direct_action(const State& s, const Task& goal, double a_max) {
  const Vec2 d = goal.goal - s.position;
  const double n = norm(d);
  if (n == 0.0) return Action{};
  return Action{(a_max / n) * d};
}

// ---------------------------------------------------------------------------
// Episode behaviour

/// Let the human watch one robot action. Mimics adopt motions that head for their goal.
inline void human_observe(HumanModel& m, const State& s, int theta_true, Action a_r,
                          const Scenario& sc) {
  const std::size_t k = sc.action_set.size();
  const bool helpful = heads_toward(a_r, s, theta_true, sc.tasks);
  if (auto* mimic = std::get_if<AdaptiveMimic>(&m)) {
    if (!helpful) return;
    const GoalFrame f = memory_frame(mimic->frame, s, theta_true, sc.tasks);
    auto& mem = mimic->memory[theta_true];
    mem.ensure(k);
    mem.reinforce(snap_index(Action{f.to_local(a_r.velocity)}, sc.action_set), mimic->learn_rate);
  } else if (auto* ex = std::get_if<Explorer>(&m)) {
    auto& st = ex->stats[theta_true];
    st.ensure(k);
    if (st.last_arm) {
      st.reward_sum[*st.last_arm] += helpful ? 1.0 : 0.0;
      st.pulls[*st.last_arm] += 1.0;
      st.last_arm.reset();
    }
  }
}

inline std::size_t random_nonzero_action(std::size_t k, Rng& rng) { return 1 + rng.index(k - 1); }

/// One input from the simulated operator; observes last_a_r first when given.
inline Action human_act(HumanModel& m, const State& s, int theta_true,
                        std::optional<Action> last_a_r, const Scenario& sc, Rng& rng) {
  if (last_a_r) human_observe(m, s, theta_true, *last_a_r, sc);
  const Task& goal = sc.tasks.at(theta_true);
  const std::size_t k = sc.action_set.size();
  const GoalFrame f = memory_frame(frame_of(m), s, theta_true, sc.tasks);

  if (std::holds_alternative<DirectHuman>(m)) return direct_action(s, goal, sc.a_max);

  if (auto* mimic = std::get_if<AdaptiveMimic>(&m)) {
    auto& mem = mimic->memory[theta_true];
    mem.ensure(k);
    if (rng.bernoulli(mimic->noise * (1.0 - mem.mimicry)))
      return sc.action_set[random_nonzero_action(k, rng)];
    if (rng.bernoulli(mem.mimicry)) {
      const Action local = sc.action_set[mem.preferred()];
      return Action{f.to_world(local.velocity)};
    }
    const Action aim = direct_action(s, goal, sc.a_max);
    if (mimic->aim_sd <= 0.0) return aim;
    const double th = mimic->aim_sd * rng.normal();
    const double c = std::cos(th), sn = std::sin(th);
    return Action{{c * aim.velocity.x - sn * aim.velocity.y, sn * aim.velocity.x + c * aim.velocity.y}};
  }

  auto& ex = std::get<Explorer>(m);
  auto& st = ex.stats[theta_true];
  st.ensure(k);
  std::size_t arm = 0;
  const double eps = std::min(1.0, ex.explore * static_cast<double>(k - 1) / (st.t + 1));
  if (ex.strategy == ExploreStrategy::Uniform || rng.bernoulli(eps)) {
    arm = random_nonzero_action(k, rng);
  } else {
    arm = 1;
    for (std::size_t a = 2; a < k; ++a) {
      const double ma = st.pulls[a] > 0 ? st.reward_sum[a] / st.pulls[a] : 0.0;
      const double mb = st.pulls[arm] > 0 ? st.reward_sum[arm] / st.pulls[arm] : 0.0;
      if (ma > mb) arm = a;
    }
  }
  ++st.t;
  st.last_arm = arm;
  return Action{f.to_world(sc.action_set[arm].velocity)};
}

// ---------------------------------------------------------------------------
// Bandit abstraction: N joystick directions, one of which is the convention's.

struct BanditInstance {
  int n_arms = 8;
  int correct_arm = 0;
  int horizon = 500;
};

/// reg[k] = incorrect pulls among interactions 1..k; reg[0] = 0.
struct RegretTrace {
  std::uint64_t seed = 0;
  std::vector<int> reg;
};

inline std::size_t bandit_pull(HumanModel& m, int n, Rng& rng) {
  const auto un = static_cast<std::size_t>(n);
  if (std::holds_alternative<DirectHuman>(m)) return 0;  // the operator's own habitual input
  if (auto* mimic = std::get_if<AdaptiveMimic>(&m)) {
    auto& mem = mimic->memory[0];
    mem.ensure(un);
    if (rng.bernoulli(mimic->noise * (1.0 - mem.mimicry))) return rng.index(un);
    if (rng.bernoulli(mem.mimicry)) return mem.preferred();
    // sample the current preference
    double u = rng.uniform();
    for (std::size_t a = 0; a < un; ++a) {
      u -= mem.pref[a];
      if (u < 0.0) return a;
    }
    return un - 1;
  }
  auto& ex = std::get<Explorer>(m);
  auto& st = ex.stats[0];
  st.ensure(un);
  std::size_t arm = 0;
  const double eps = std::min(1.0, ex.explore * n / (st.t + 1.0));
  if (ex.strategy == ExploreStrategy::Uniform || rng.bernoulli(eps)) {
    arm = rng.index(un);
  } else {
    for (std::size_t a = 1; a < un; ++a) {
      const double ma = st.pulls[a] > 0 ? st.reward_sum[a] / st.pulls[a] : 0.0;
      const double mb = st.pulls[arm] > 0 ? st.reward_sum[arm] / st.pulls[arm] : 0.0;
      if (ma > mb) arm = a;
    }
  }
  ++st.t;
  return arm;
}

/// K interactions. Reward = robot completes the task (correct arm). With
/// revealing, every incorrect pull is followed by the robot demonstrating the
/// correct arm, which a mimic adopts.
inline RegretTrace run_bandit(const BanditInstance& inst, HumanModel m, bool revealing, Rng& rng) {
  if (inst.n_arms < 1 || inst.correct_arm < 0 || inst.correct_arm >= inst.n_arms || inst.horizon < 0)
    throw std::invalid_argument("run_bandit: invalid instance");
  RegretTrace trace;
  trace.reg.assign(static_cast<std::size_t>(inst.horizon) + 1, 0);
  const auto correct = static_cast<std::size_t>(inst.correct_arm);
  for (int k = 1; k <= inst.horizon; ++k) {
    const std::size_t arm = bandit_pull(m, inst.n_arms, rng);
    const bool ok = arm == correct;
    trace.reg[k] = trace.reg[k - 1] + (ok ? 0 : 1);
    if (auto* mimic = std::get_if<AdaptiveMimic>(&m)) {
      auto& mem = mimic->memory[0];
      if (ok) mem.reinforce(arm, mimic->learn_rate);
      else if (revealing) mem.reinforce(correct, mimic->learn_rate);
    } else if (auto* ex = std::get_if<Explorer>(&m)) {
      auto& st = ex->stats[0];
      st.reward_sum[arm] += ok ? 1.0 : 0.0;
      st.pulls[arm] += 1.0;
    }
  }
  return trace;
}

/// One trace per seed; the correct arm is drawn per seed, uniformly.
inline std::vector<RegretTrace> run_bandit_seeds(int n_arms, int horizon, const HumanModelSpec& human,
                                                 bool revealing, int seeds, std::uint64_t master = 0) {
  if (n_arms < 2) throw std::invalid_argument("bandit: need at least 2 arms");
  std::vector<RegretTrace> out;
  for (int i = 0; i < seeds; ++i) {
    const std::uint64_t seed = derive_seed(master, {static_cast<std::uint64_t>(i)});
    Rng rng(seed);
    BanditInstance inst{n_arms, static_cast<int>(rng.index(static_cast<std::size_t>(n_arms))), horizon};
    RegretTrace t = run_bandit(inst, make_human(human), revealing, rng);
    t.seed = static_cast<std::uint64_t>(i);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Functional-form fit of the mean regret trace

enum class RegretModel { Constant, Logarithmic };

inline const char* to_string(RegretModel m) {
  return m == RegretModel::Constant ? "constant" : "logarithmic";
}

struct RegretFit {
  RegretModel model = RegretModel::Constant;
  double constant = 0.0;   // best constant
  double intercept = 0.0;  // a in a + c log k
  double slope = 0.0;      // c
  double r2_constant = 0.0;
  double r2_log = 0.0;
  int k_min = 1;
  int k_max = 0;
  std::vector<double> mean_trace;
};

inline constexpr std::size_t kMinRegretTraces = 30;
/// Log wins only with R^2 >= this and predicted growth over the window >= kMinLogGrowth.
inline constexpr double kMinLogR2 = 0.5;
inline constexpr double kMinLogGrowth = 0.5;

/// Least-squares constant vs a + c ln k on the mean trace over k in [ceil(K/10), K].
inline RegretFit regret_fit(const std::vector<RegretTrace>& traces) {
  if (traces.size() < kMinRegretTraces)
    throw std::invalid_argument("regret_fit: need at least " + std::to_string(kMinRegretTraces) +
                                " traces, got " + std::to_string(traces.size()));
  const std::size_t len = traces.front().reg.size();
  for (const auto& t : traces)
    if (t.reg.size() != len) throw std::invalid_argument("regret_fit: traces differ in length");
  if (len < 3) throw std::invalid_argument("regret_fit: traces too short");

  RegretFit fit;
  fit.mean_trace.assign(len, 0.0);
  for (const auto& t : traces)
    for (std::size_t k = 0; k < len; ++k) fit.mean_trace[k] += t.reg[k];
  for (double& v : fit.mean_trace) v /= static_cast<double>(traces.size());

  const int K = static_cast<int>(len) - 1;
  fit.k_max = K;
  fit.k_min = std::max(1, (K + 9) / 10);
  const int n = fit.k_max - fit.k_min + 1;

  double sy = 0, sx = 0, sxx = 0, sxy = 0;
  for (int k = fit.k_min; k <= fit.k_max; ++k) {
    const double x = std::log(static_cast<double>(k));
    const double y = fit.mean_trace[k];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.constant = sy / n;
  const double cov = sxy - sx * sy / n;
  const double var = sxx - sx * sx / n;
  fit.slope = var > 0 ? cov / var : 0.0;
  fit.intercept = (sy - fit.slope * sx) / n;

  double sse_c = 0, sse_l = 0;
  for (int k = fit.k_min; k <= fit.k_max; ++k) {
    const double y = fit.mean_trace[k];
    const double yl = fit.intercept + fit.slope * std::log(static_cast<double>(k));
    sse_c += (y - fit.constant) * (y - fit.constant);
    sse_l += (y - yl) * (y - yl);
  }
  // intercept-only model explains no variance by construction
  fit.r2_constant = 0.0;
  // a trace flat to rounding has nothing to explain
  const double scale = std::max(1.0, fit.constant * fit.constant) * n;
  fit.r2_log = sse_c > 1e-18 * scale ? 1.0 - sse_l / sse_c : 0.0;

  const double growth = fit.slope * std::log(static_cast<double>(fit.k_max) / fit.k_min);
  fit.model = (fit.r2_log >= kMinLogR2 && growth >= kMinLogGrowth) ? RegretModel::Logarithmic
                                                                   : RegretModel::Constant;
  return fit;
}

}  // namespace convreveal
