#pragma once

// On-disk cache of QTables. Keyed by (scenario hash, task id, gamma,
// resolution); file layout is a fixed header followed by the row-major Q
// array and the V array, all little-endian host doubles:
//
//   char[4] "CRQT" | u32 version | i32 task_id | i32 resolution | u64 K
//   f64 gamma | i32 iterations | f64 residual | f64 q[n*K] | f64 v[n]
//
// A missing, truncated or mismatching file is ignored and recomputed.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "convreveal/scenario_io.hpp"
#include "convreveal/value.hpp"

namespace convreveal {

inline constexpr std::uint32_t kQTableCacheVersion = 1;

inline std::string qtable_cache_key(const Scenario& sc, int task_id) {
  std::ostringstream k;
  k.precision(17);
  k << scenario_hash(sc) << '|' << task_id << '|' << sc.gamma << '|' << sc.grid_resolution;
  return hex64(fnv1a64(k.str()));
}

namespace detail {
template <class T>
void put(std::ostream& o, const T& v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}
}  // namespace detail

inline void save_qtable(const QTable& q, const std::filesystem::path& path) {
  std::ofstream o(path, std::ios::binary);
  o.write("CRQT", 4);
  detail::put(o, kQTableCacheVersion);
  detail::put(o, static_cast<std::int32_t>(q.task_id));
  detail::put(o, static_cast<std::int32_t>(q.grid.resolution));
  detail::put(o, static_cast<std::uint64_t>(q.num_actions()));
  detail::put(o, q.gamma);
  detail::put(o, static_cast<std::int32_t>(q.iterations));
  detail::put(o, q.residual);
  o.write(reinterpret_cast<const char*>(q.q.data()), static_cast<std::streamsize>(q.q.size() * sizeof(double)));
  o.write(reinterpret_cast<const char*>(q.v.data()), static_cast<std::streamsize>(q.v.size() * sizeof(double)));
}

/// Reads a cached table for (sc, task); nullopt if absent or inconsistent.
inline std::optional<QTable> load_qtable(const Scenario& sc, const Task& task,
                                         const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "CRQT") return std::nullopt;
  std::uint32_t version = 0;
  std::int32_t task_id = 0, res = 0, iters = 0;
  std::uint64_t k = 0;
  double gamma = 0, residual = 0;
  if (!detail::get(in, version) || version != kQTableCacheVersion) return std::nullopt;
  if (!detail::get(in, task_id) || !detail::get(in, res) || !detail::get(in, k) ||
      !detail::get(in, gamma) || !detail::get(in, iters) || !detail::get(in, residual))
    return std::nullopt;
  if (task_id != task.id || res != sc.grid_resolution || k != sc.action_set.size() || gamma != sc.gamma)
    return std::nullopt;

  QTable q;
  q.task_id = task.id;
  q.task = task;
  q.grid = Grid{sc.bounds, sc.grid_resolution};
  q.gamma = gamma;
  q.actions = sc.action_set;
  q.iterations = iters;
  q.residual = residual;
  q.q.resize(q.grid.size() * k);
  q.v.resize(q.grid.size());
  if (!in.read(reinterpret_cast<char*>(q.q.data()), static_cast<std::streamsize>(q.q.size() * sizeof(double))))
    return std::nullopt;
  if (!in.read(reinterpret_cast<char*>(q.v.data()), static_cast<std::streamsize>(q.v.size() * sizeof(double))))
    return std::nullopt;
  return q;
}

/// Cache directory from CONVREVEAL_CACHE_DIR, if set and nonempty.
inline std::optional<std::filesystem::path> cache_dir_from_env() {
  const char* d = std::getenv("CONVREVEAL_CACHE_DIR");
  if (d == nullptr || *d == '\0') return std::nullopt;
  return std::filesystem::path(d);
}

/// Q tables for every task, read through the cache when one is configured.
inline QTables compute_qtables(const Scenario& sc, std::optional<std::filesystem::path> cache_dir,
                               ValueIterationOptions opt = {}) {
  QTables out;
  for (const auto& t : sc.tasks) {
    if (cache_dir) {
      const auto path = *cache_dir / ("q_" + qtable_cache_key(sc, t.id) + ".bin");
      if (auto hit = load_qtable(sc, t, path)) {
        out.push_back(std::move(*hit));
        continue;
      }
      auto q = value_iteration(sc, t, opt);
      std::error_code ec;
      std::filesystem::create_directories(*cache_dir, ec);
      // write to a temporary then rename so concurrent readers never see a partial file
      const auto tmp = path.string() + ".tmp" + std::to_string(reinterpret_cast<std::uintptr_t>(&q));
      save_qtable(q, tmp);
      std::filesystem::rename(tmp, path, ec);
      out.push_back(std::move(q));
    } else {
      out.push_back(value_iteration(sc, t, opt));
    }
  }
  return out;
}

inline QTables compute_qtables(const Scenario& sc) { return compute_qtables(sc, cache_dir_from_env()); }

}  // namespace convreveal
