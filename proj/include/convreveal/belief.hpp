#pragma once

// Recursive Bayes filter over the discrete task set, kept in log space:
//   log b'(theta) = log b(theta) + log pi_H(a_H | s, theta) - log Z
// Inputs are conditionally independent given (s, theta), so no history is
// stored. A convention that depends on input sequences would need one.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "convreveal/convention.hpp"
#include "convreveal/world.hpp"

namespace convreveal {

class Belief {
 public:
  Belief() = default;
  explicit Belief(std::vector<double> log_weights) : log_w_(std::move(log_weights)) { normalize(); }

  std::size_t size() const { return log_w_.size(); }
  const std::vector<double>& log_weights() const { return log_w_; }

  std::vector<double> probabilities() const {
    std::vector<double> p(log_w_.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_w_[i]);
    return p;
  }
  double probability(std::size_t task) const { return std::exp(log_w_.at(task)); }

  /// Multiply in a likelihood vector (one entry per task) and renormalize.
  void observe(const std::vector<double>& likelihoods) {
    if (likelihoods.size() != log_w_.size())
      throw std::invalid_argument("belief: likelihood vector has wrong size");
    for (std::size_t i = 0; i < log_w_.size(); ++i) log_w_[i] += std::log(likelihoods[i]);
    normalize();
  }

  void observe_log(const std::vector<double>& log_likelihoods) {
    if (log_likelihoods.size() != log_w_.size())
      throw std::invalid_argument("belief: likelihood vector has wrong size");
    for (std::size_t i = 0; i < log_w_.size(); ++i) log_w_[i] += log_likelihoods[i];
    normalize();
  }

 private:
  void normalize() {
    if (log_w_.empty()) return;
    const double mx = *std::max_element(log_w_.begin(), log_w_.end());
    double z = 0.0;
    for (double w : log_w_) z += std::exp(w - mx);
    const double lse = mx + std::log(z);
    for (double& w : log_w_) w -= lse;
  }

  std::vector<double> log_w_;
};

inline Belief init_belief(std::size_t num_tasks) {
  if (num_tasks == 0) throw std::invalid_argument("init_belief: empty task list");
  return Belief(std::vector<double>(num_tasks, 0.0));
}

inline Belief init_belief(const std::vector<Task>& tasks) { return init_belief(tasks.size()); }

/// Inputs below this norm count as "no joystick press".
inline constexpr double kZeroInputNorm = 1e-12;

struct BeliefUpdate {
  Belief belief;
  /// False when the input carried no intent (zero, or snapped to the zero action).
  bool applied = false;
  std::size_t snapped = 0;
};

/// Snap a_H to the action set and fold it in. Zero presses leave the belief untouched.
inline BeliefUpdate update(const Belief& b, const State& s, Action a_h, const Convention& c,
                           const std::vector<Task>& tasks, const QTables* qtables) {
  BeliefUpdate out{b, false, 0};
  if (norm(a_h.velocity) < kZeroInputNorm) return out;
  out.snapped = snap_index(a_h, c.actions());
  if (c.actions()[out.snapped].is_zero()) return out;
  out.belief.observe(likelihood_vector(c, s, out.snapped, tasks, qtables));
  out.applied = true;
  return out;
}

/// MAP task id; lowest id wins ties.
inline int map_task(const Belief& b) {
  const auto& w = b.log_weights();
  if (w.empty()) throw std::invalid_argument("map_task: empty belief");
  std::size_t best = 0;
  for (std::size_t i = 1; i < w.size(); ++i)
    if (w[i] > w[best]) best = i;
  return static_cast<int>(best);
}

}  // namespace convreveal
