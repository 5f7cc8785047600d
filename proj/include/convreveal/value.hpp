#pragma once

// Tabular action values for "robot completes task theta alone": reward -1 per
// step, 0 (absorbing) inside the capture region. States live on a regular
// lattice over the workspace; off-lattice successors and queries are read by
// bilinear interpolation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "convreveal/world.hpp"

namespace convreveal {

class ValueIterationError : public std::runtime_error {
 public:
  ValueIterationError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct Grid {
  Bounds bounds;
  int resolution = 41;  // nodes per axis

  double hx() const { return bounds.width() / (resolution - 1); }
  double hy() const { return bounds.height() / (resolution - 1); }
  std::size_t size() const { return static_cast<std::size_t>(resolution) * resolution; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * resolution + i; }
  Vec2 node(int i, int j) const { return {bounds.min.x + i * hx(), bounds.min.y + j * hy()}; }
  Vec2 node(std::size_t idx) const {
    return node(static_cast<int>(idx % resolution), static_cast<int>(idx / resolution));
  }
  /// Manhattan extent of the lattice in cells.
  int diameter() const { return 2 * (resolution - 1); }
};

/// Four lattice nodes and weights whose combination interpolates a point.
struct Stencil {
  std::array<std::size_t, 4> idx{};
  std::array<double, 4> w{};
};

inline Stencil stencil(const Grid& g, Vec2 p) {
  p = g.bounds.clamp(p);
  const int last = g.resolution - 1;
  const double fx = (p.x - g.bounds.min.x) / g.hx();
  const double fy = (p.y - g.bounds.min.y) / g.hy();
  const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, last - 1);
  const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, last - 1);
  const double tx = std::clamp(fx - i, 0.0, 1.0);
  const double ty = std::clamp(fy - j, 0.0, 1.0);
  Stencil s;
  s.idx = {g.index(i, j), g.index(i + 1, j), g.index(i, j + 1), g.index(i + 1, j + 1)};
  s.w = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  return s;
}

struct QTable {
  int task_id = 0;
  Task task;
  Grid grid;
  double gamma = 0.95;
  std::vector<Action> actions;
  /// values[node * K + a]
  std::vector<double> q;
  /// v[node] == max_a q[node * K + a]
  std::vector<double> v;
  int iterations = 0;
  double residual = 0.0;

  std::size_t num_actions() const { return actions.size(); }
  double q_node(std::size_t node, std::size_t a) const { return q[node * actions.size() + a]; }
};

struct ValueIterationOptions {
  double tol = 1e-8;
  int max_iters = 0;  // 0 -> 10 * grid diameter
};

/// Jacobi value iteration under deterministic robot-only dynamics s' = s + dt * a.
inline QTable value_iteration(const Scenario& sc, const Task& task, ValueIterationOptions opt = {}) {
  if (!(opt.tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
  QTable out;
  out.task_id = task.id;
  out.task = task;
  out.grid = Grid{sc.bounds, sc.grid_resolution};
  out.gamma = sc.gamma;
  out.actions = sc.action_set;

  const Grid& g = out.grid;
  const std::size_t n = g.size();
  const std::size_t k = sc.action_set.size();
  const int max_iters = opt.max_iters > 0 ? opt.max_iters
                        : sc.max_iters > 0 ? sc.max_iters
                                           : 10 * g.diameter();

  // Successor stencils; a terminal successor contributes value 0.
  std::vector<char> goal(n, 0);
  std::vector<Stencil> next(n * k);
  std::vector<char> terminal(n * k, 0);
  for (std::size_t c = 0; c < n; ++c) {
    const Vec2 p = g.node(c);
    goal[c] = reached(State{p}, task) ? 1 : 0;
    for (std::size_t a = 0; a < k; ++a) {
      const Vec2 pn = sc.bounds.clamp(p + sc.dt * sc.action_set[a].velocity);
      if (reached(State{pn}, task)) {
        terminal[c * k + a] = 1;
      } else {
        next[c * k + a] = stencil(g, pn);
      }
    }
  }

  auto backup = [&](const std::vector<double>& v, std::size_t c, std::size_t a) {
    if (terminal[c * k + a]) return -1.0;
    const Stencil& st = next[c * k + a];
    double acc = 0.0;
    for (int m = 0; m < 4; ++m) acc += st.w[m] * v[st.idx[m]];
    return -1.0 + sc.gamma * acc;
  };

  std::vector<double> v(n, 0.0);
  std::vector<double> v_new(n, 0.0);
  double residual = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < max_iters) {
    residual = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (goal[c]) {
        v_new[c] = 0.0;
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < k; ++a) best = std::max(best, backup(v, c, a));
      v_new[c] = best;
      residual = std::max(residual, std::abs(best - v[c]));
    }
    v.swap(v_new);
    ++it;
    if (residual < opt.tol) break;
  }
  if (!(residual < opt.tol)) {
    std::ostringstream msg;
    msg << "value_iteration did not converge for task " << task.id << " after " << it
        << " iterations (residual " << residual << ", tol " << opt.tol << ")";
    throw ValueIterationError(msg.str(), residual);
  }

  out.q.assign(n * k, 0.0);
  out.v.assign(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    if (goal[c]) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < k; ++a) {
      const double qa = backup(v, c, a);
      out.q[c * k + a] = qa;
      best = std::max(best, qa);
    }
    out.v[c] = best;
  }
  out.iterations = it;
  out.residual = residual;
  return out;
}

/// Interpolated Q for every action at s (all zero inside the capture region).
inline std::vector<double> q_row(const QTable& q, const State& s) {
  const std::size_t k = q.num_actions();
  std::vector<double> row(k, 0.0);
  if (reached(s, q.task)) return row;
  const Stencil st = stencil(q.grid, s.position);
  for (int m = 0; m < 4; ++m) {
    if (st.w[m] == 0.0) continue;
    const double* base = &q.q[st.idx[m] * k];
    for (std::size_t a = 0; a < k; ++a) row[a] += st.w[m] * base[a];
  }
  return row;
}

inline double q_lookup(const QTable& q, const State& s, std::size_t action_index) {
  if (action_index >= q.num_actions()) throw std::out_of_range("q_lookup: action index out of range");
  if (reached(s, q.task)) return 0.0;
  const Stencil st = stencil(q.grid, s.position);
  double acc = 0.0;
  for (int m = 0; m < 4; ++m)
    if (st.w[m] != 0.0) acc += st.w[m] * q.q_node(st.idx[m], action_index);
  return acc;
}

inline double q_lookup(const QTable& q, const State& s, Action a) {
  const auto idx = find_action(a, q.actions);
  if (!idx) throw std::invalid_argument("q_lookup: action is not a member of the action set");
  return q_lookup(q, s, *idx);
}

inline double v_lookup(const QTable& q, const State& s) {
  const auto row = q_row(q, s);
  return *std::max_element(row.begin(), row.end());
}

/// Greedy action index; lowest index wins ties.
inline std::size_t optimal_action_index(const QTable& q, const State& s) {
  const auto row = q_row(q, s);
  std::size_t best = 0;
  for (std::size_t a = 1; a < row.size(); ++a)
    if (row[a] > row[best]) best = a;
  return best;
}

inline Action optimal_action(const QTable& q, const State& s) {
  return q.actions[optimal_action_index(q, s)];
}

/// One table per task, indexed by task id.
using QTables = std::vector<QTable>;

inline QTables value_iteration_all(const Scenario& sc, ValueIterationOptions opt = {}) {
  QTables out;
  out.reserve(sc.tasks.size());
  for (const auto& t : sc.tasks) out.push_back(value_iteration(sc, t, opt));
  return out;
}

}  // namespace convreveal
