#pragma once

// Per-tick episode record shared by the batch runner and the session server.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "convreveal/world.hpp"

namespace convreveal {

enum class AssistMode { Ours, NoAssist, Unassisted };

inline const char* to_string(AssistMode m) {
  switch (m) {
    case AssistMode::Ours: return "ours";
    case AssistMode::NoAssist: return "no_assist";
    case AssistMode::Unassisted: return "unassisted";
  }
  return "?";
}

inline std::optional<AssistMode> parse_mode(const std::string& s) {
  if (s == "ours") return AssistMode::Ours;
  if (s == "no_assist") return AssistMode::NoAssist;
  if (s == "unassisted") return AssistMode::Unassisted;
  return std::nullopt;
}

struct EpisodeRow {
  int t = 0;
  State s;        // state the input was observed in
  Action a_h;     // raw human input
  int a_h_index = -1;  // snapped action index, -1 for no press
  Action a_r;
  std::vector<double> belief;  // after this tick's update
  double epsilon = 0.0;
  int theta_star = 0;
  double objective = 0.0;
  double slack = 0.0;
  State s_next;
  bool incorrect = false;
};

struct EpisodeOutcome {
  int reached_task = -1;  // -1: timed out
  int ticks = 0;
  int incorrect_inputs = 0;
  int inputs = 0;  // ticks with a nonzero press
};

struct EpisodeLog {
  std::string scenario_hash;
  AssistMode mode = AssistMode::Ours;
  std::uint64_t seed = 0;
  int theta_true = 0;
  int location = 0;
  int interaction = 0;
  std::vector<EpisodeRow> rows;
  EpisodeOutcome outcome;
};

}  // namespace convreveal
