#pragma once

// The robot's model of the human, pi_H(a | s, theta), as a distribution over
// the scenario's discrete action set. Three variants:
//   Boltzmann       p(a) ~ exp(lambda * Q_theta(s, a))
//   Cosine          p(a) ~ exp(kappa * cos(a, goal_theta - s)), zero action gets 1/K
//   MagnitudeCoded  p(a) ~ exp(sharpness * band_theta(|a . axis| / a_max))
// Every variant is mixed with a uniform floor: p <- (1 - floor) p + floor / K.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "convreveal/value.hpp"
#include "convreveal/world.hpp"

namespace convreveal {

class Convention {
 public:
  Convention(ConventionSpec spec, std::vector<Action> actions, double a_max)
      : spec_(std::move(spec)), actions_(std::move(actions)), a_max_(a_max) {
    if (actions_.empty()) throw std::invalid_argument("convention: empty action set");
    if (!(spec_.floor > 0.0 && spec_.floor < 1.0))
      throw std::invalid_argument("convention: floor must lie in (0, 1)");
  }

  explicit Convention(const Scenario& sc) : Convention(sc.convention_spec, sc.action_set, sc.a_max) {}

  const ConventionSpec& spec() const { return spec_; }
  const std::vector<Action>& actions() const { return actions_; }
  std::size_t size() const { return actions_.size(); }
  double floor() const { return spec_.floor; }
  bool needs_qtables() const { return std::holds_alternative<BoltzmannSpec>(spec_.model); }

  /// pi_H(. | s, theta) over the whole action set.
  std::vector<double> distribution(const State& s, const Task& theta, const QTables* qtables) const {
    const std::size_t k = actions_.size();
    std::vector<double> p(k, 0.0);

    if (const auto* b = std::get_if<BoltzmannSpec>(&spec_.model)) {
      if (qtables == nullptr) throw std::invalid_argument("convention: Boltzmann model needs Q tables");
      if (theta.id < 0 || static_cast<std::size_t>(theta.id) >= qtables->size())
        throw std::out_of_range("convention: no Q table for task " + std::to_string(theta.id));
      const auto row = q_row((*qtables)[theta.id], s);
      std::vector<double> logits(k);
      for (std::size_t a = 0; a < k; ++a) logits[a] = b->lambda * row[a];
      softmax_into(logits, p);
    } else if (const auto* c = std::get_if<CosineSpec>(&spec_.model)) {
      const Vec2 to_goal = theta.goal - s.position;
      std::vector<double> logits(k, 0.0);
      double zeros = 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        if (actions_[a].is_zero()) {
          zeros += 1.0;
          continue;
        }
        logits[a] = c->kappa * cosine(actions_[a].velocity, to_goal);
      }
      // The zero action has no heading; it keeps the uniform share.
      const double zero_mass = zeros / k;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < k; ++a)
        if (!actions_[a].is_zero()) mx = std::max(mx, logits[a]);
      double z = 0.0;
      for (std::size_t a = 0; a < k; ++a)
        if (!actions_[a].is_zero()) z += std::exp(logits[a] - mx);
      for (std::size_t a = 0; a < k; ++a)
        p[a] = actions_[a].is_zero() ? 1.0 / k : (1.0 - zero_mass) * std::exp(logits[a] - mx) / z;
    } else {
      const auto& m = std::get<MagnitudeCodedSpec>(spec_.model);
      std::vector<double> logits(k, 0.0);
      if (theta.id == m.small_task || theta.id == m.large_task) {
        const bool small = theta.id == m.small_task;
        const double lo = small ? m.small_lo : m.large_lo;
        const double hi = small ? m.small_hi : m.large_hi;
        const double axis_n = norm(m.axis);
        for (std::size_t a = 0; a < k; ++a) {
          const double along = std::abs(dot(actions_[a].velocity, m.axis)) / (axis_n * a_max_);
          logits[a] = m.sharpness * band(along, lo, hi);
        }
      }
      softmax_into(logits, p);
    }

    for (auto& x : p) x = (1.0 - spec_.floor) * x + spec_.floor / k;
    return p;
  }

  /// Soft membership of x in [lo, hi]; edges have width kBandEdge.
  static double band(double x, double lo, double hi) {
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    return sig((x - lo) / kBandEdge) * sig((hi - x) / kBandEdge);
  }

  static constexpr double kBandEdge = 0.025;

 private:
  static void softmax_into(const std::vector<double>& logits, std::vector<double>& out) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t a = 0; a < logits.size(); ++a) {
      out[a] = std::exp(logits[a] - mx);
      z += out[a];
    }
    for (auto& x : out) x /= z;
  }

  ConventionSpec spec_;
  std::vector<Action> actions_;
  double a_max_;
};

inline std::size_t require_action(const Convention& c, Action a) {
  const auto idx = find_action(a, c.actions());
  if (!idx) throw std::invalid_argument("convention: action is not a member of the action set");
  return *idx;
}

inline double likelihood(const Convention& c, const State& s, std::size_t action_index,
                         const Task& theta, const QTables* qtables) {
  if (action_index >= c.size()) throw std::out_of_range("likelihood: action index out of range");
  return c.distribution(s, theta, qtables)[action_index];
}

inline double likelihood(const Convention& c, const State& s, Action a, const Task& theta,
                         const QTables* qtables) {
  return likelihood(c, s, require_action(c, a), theta, qtables);
}

/// Per-task likelihood of one action: the terms of the reveal objective's denominator.
inline std::vector<double> likelihood_vector(const Convention& c, const State& s,
                                             std::size_t action_index,
                                             const std::vector<Task>& tasks,
                                             const QTables* qtables) {
  std::vector<double> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(likelihood(c, s, action_index, t, qtables));
  return out;
}

inline std::vector<double> likelihood_vector(const Convention& c, const State& s, Action a,
                                             const std::vector<Task>& tasks,
                                             const QTables* qtables) {
  return likelihood_vector(c, s, require_action(c, a), tasks, qtables);
}

/// distributions[theta][a] for every task at s.
inline std::vector<std::vector<double>> distributions(const Convention& c, const State& s,
                                                      const std::vector<Task>& tasks,
                                                      const QTables* qtables) {
  std::vector<std::vector<double>> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(c.distribution(s, t, qtables));
  return out;
}

}  // namespace convreveal
