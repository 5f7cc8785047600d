#pragma once

// Revealing-and-assistive action selection and the per-tick loop.
//
// For the MAP task theta* the robot picks, among actions that keep it within
// epsilon of optimal progress on theta*,
//     V(s) - Q(s, a) <= epsilon,
// the one a human would most unambiguously use to signal theta*:
//     pi_H(a | s, theta*) / sum_theta pi_H(a | s, theta).
// The action set is small, so the argmax is an exhaustive scan.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <stdexcept>
#include <vector>

#include "convreveal/belief.hpp"
#include "convreveal/convention.hpp"
#include "convreveal/episode.hpp"
#include "convreveal/value.hpp"
#include "convreveal/world.hpp"

namespace convreveal {

inline constexpr double kConstraintTol = 1e-9;

struct EpsilonSchedule {
  double epsilon0 = 0.04;
  EpsilonSpec spec;
};

/// Robot-observable record of how well recent inputs matched the convention.
struct PerformanceWindow {
  std::deque<bool> misses;
  int window = 10;

  void push(bool miss) {
    misses.push_back(miss);
    while (static_cast<int>(misses.size()) > window) misses.pop_front();
  }
  double miss_rate() const {
    if (misses.empty()) return 1.0;
    return static_cast<double>(std::count(misses.begin(), misses.end(), true)) / misses.size();
  }
};

/// Distance decay scales epsilon0 by V(s) / V(start): full at the start, 0 at the goal.
inline double epsilon_at(const EpsilonSchedule& sched, const State& s, const Task& theta_star,
                         const QTable& q, const State& start,
                         const PerformanceWindow* perf = nullptr) {
  switch (sched.spec.mode) {
    case EpsilonMode::Constant:
      return sched.epsilon0;
    case EpsilonMode::DistanceDecay: {
      if (reached(s, theta_star)) return 0.0;
      const double v0 = v_lookup(q, start);
      if (v0 >= 0.0) return 0.0;
      const double frac = std::clamp(v_lookup(q, s) / v0, 0.0, 1.0);
      return sched.epsilon0 * frac;
    }
    case EpsilonMode::PerformanceAdaptive: {
      const double miss = perf ? perf->miss_rate() : 1.0;
      const double lo = std::clamp(sched.spec.min_fraction, 0.0, 1.0);
      return sched.epsilon0 * (lo + (1.0 - lo) * miss);
    }
  }
  return sched.epsilon0;
}

struct TickResult {
  std::size_t a_r_index = 0;
  Action a_r;
  int theta_star = 0;
  double epsilon_used = 0.0;
  double constraint_slack = 0.0;  // V - Q at the chosen action
  double objective = 0.0;
};

struct RevealOptions {
  /// Multiply each pi_H(a | s, theta) by b(theta) in the objective.
  const Belief* prior = nullptr;
};

/// Ratio objective for every action, given precomputed per-task distributions.
inline std::vector<double> reveal_objectives(const std::vector<std::vector<double>>& dists,
                                             int theta_star, const Belief* prior = nullptr) {
  const std::size_t k = dists.at(theta_star).size();
  std::vector<double> obj(k, 0.0);
  std::vector<double> w(dists.size(), 1.0);
  if (prior) w = prior->probabilities();
  for (std::size_t a = 0; a < k; ++a) {
    double denom = 0.0;
    for (std::size_t th = 0; th < dists.size(); ++th) denom += w[th] * dists[th][a];
    obj[a] = w[theta_star] * dists[theta_star][a] / denom;
  }
  return obj;
}

/// Exhaustive constrained argmax. Ties: larger objective, then larger Q, then lower index.
inline TickResult reveal_action(const State& s, int theta_star, const Convention& c,
                                const std::vector<Task>& tasks, const QTables& qtables,
                                double epsilon, RevealOptions opt = {}) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("reveal_action: epsilon must be >= 0");
  if (theta_star < 0 || static_cast<std::size_t>(theta_star) >= tasks.size() ||
      qtables.size() != tasks.size())
    throw std::out_of_range("reveal_action: theta* or Q tables inconsistent with task list");

  const auto q = q_row(qtables[theta_star], s);
  const double v = *std::max_element(q.begin(), q.end());
  const auto obj = reveal_objectives(distributions(c, s, tasks, &qtables), theta_star, opt.prior);

  std::optional<std::size_t> best;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (v - q[a] > epsilon) continue;
    if (!best || obj[a] > obj[*best] || (obj[a] == obj[*best] && q[a] > q[*best])) best = a;
  }
  // The Q-optimal action has zero slack, so the feasible set is never empty.
  const std::size_t a = *best;
  return TickResult{a, c.actions()[a], theta_star, epsilon, v - q[a], obj[a]};
}

// ---------------------------------------------------------------------------
// Per-tick loop

struct TickContext {
  const Scenario& scenario;
  const Convention& convention;
  const QTables& qtables;
  AssistMode mode = AssistMode::Ours;
};

struct Session {
  Belief belief;
  State s;
  State start;
  int t = 0;
  PerformanceWindow perf;
  /// Known only for logging "incorrect input"; never read by inference or action selection.
  std::optional<int> theta_true;
  std::vector<EpisodeRow> rows;
};

inline Session make_session(const Scenario& sc, std::optional<int> theta_true = std::nullopt) {
  Session out;
  out.belief = init_belief(sc.tasks);
  out.s = State{sc.start};
  out.start = out.s;
  out.perf.window = std::max(1, sc.epsilon_spec.window);
  out.theta_true = theta_true;
  return out;
}

struct TickOutput {
  TickResult result;
  State s_next;
  bool clamped = false;
  bool belief_updated = false;
  double beta = 0.0;
};

/// Index of the convention's most likely input for theta at s (lowest index on ties).
inline std::size_t top_likelihood_action(const Convention& c, const State& s, const Task& theta,
                                         const QTables& qtables) {
  const auto p = c.distribution(s, theta, &qtables);
  std::size_t best = 0;
  for (std::size_t a = 1; a < p.size(); ++a)
    if (p[a] > p[best]) best = a;
  return best;
}

/// Observe a_H, update belief, decode theta*, choose a_R, blend and step; appends one row.
inline TickOutput tick(Session& session, Action a_h, const TickContext& ctx) {
  const Scenario& sc = ctx.scenario;
  const State s = session.s;

  BeliefUpdate upd{session.belief, false, 0};
  auto apply_update = [&] {
    upd = update(session.belief, s, a_h, ctx.convention, sc.tasks, &ctx.qtables);
    // a miss is an input that did not raise the belief in the task it now favours
    if (upd.applied) {
      const int th = map_task(upd.belief);
      session.perf.push(!(upd.belief.log_weights()[th] > session.belief.log_weights()[th]));
    }
    session.belief = upd.belief;
  };

  if (sc.update_before_decode) apply_update();
  const int theta_star = map_task(session.belief);
  const Task& target = sc.tasks[theta_star];
  const EpsilonSchedule sched{sc.epsilon0, sc.epsilon_spec};
  const double eps = epsilon_at(sched, s, target, ctx.qtables[theta_star], session.start, &session.perf);

  TickResult res;
  double beta = sc.blend_beta;
  switch (ctx.mode) {
    case AssistMode::Ours: {
      RevealOptions opt;
      if (sc.prior_weighted_reveal) opt.prior = &session.belief;
      res = reveal_action(s, theta_star, ctx.convention, sc.tasks, ctx.qtables, eps, opt);
      break;
    }
    case AssistMode::NoAssist: {
      const std::size_t a = optimal_action_index(ctx.qtables[theta_star], s);
      const auto obj = reveal_objectives(distributions(ctx.convention, s, sc.tasks, &ctx.qtables),
                                         theta_star);
      res = TickResult{a, sc.action_set[a], theta_star, 0.0, 0.0, obj[a]};
      break;
    }
    case AssistMode::Unassisted: {
      const auto obj = reveal_objectives(distributions(ctx.convention, s, sc.tasks, &ctx.qtables),
                                         theta_star);
      const auto q = q_row(ctx.qtables[theta_star], s);
      const double v = *std::max_element(q.begin(), q.end());
      res = TickResult{0, sc.action_set[0], theta_star, 0.0, v - q[0], obj[0]};
      beta = 1.0;
      break;
    }
  }
  if (ctx.mode != AssistMode::Unassisted && sc.blend_mode == BlendMode::Confidence) {
    const auto p = session.belief.probabilities();
    beta = 1.0 - *std::max_element(p.begin(), p.end());
  }
  if (!sc.update_before_decode) apply_update();

  const StepResult next = step(s, a_h, res.a_r, beta, sc.dt, sc.bounds);

  EpisodeRow row;
  row.t = session.t;
  row.s = s;
  row.a_h = a_h;
  row.a_h_index = upd.applied ? static_cast<int>(upd.snapped) : -1;
  row.a_r = res.a_r;
  row.belief = session.belief.probabilities();
  row.epsilon = res.epsilon_used;
  row.theta_star = theta_star;
  row.objective = res.objective;
  row.slack = res.constraint_slack;
  row.s_next = next.state;
  if (upd.applied && session.theta_true) {
    row.incorrect = upd.snapped != top_likelihood_action(ctx.convention, s,
                                                         sc.tasks[*session.theta_true], ctx.qtables);
  }
  session.rows.push_back(std::move(row));

  session.s = next.state;
  ++session.t;
  return TickOutput{res, next.state, next.clamped, upd.applied, beta};
}

}  // namespace convreveal
