// convreveal command-line driver.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "convreveal/gateway.hpp"
#include "convreveal/runner.hpp"
#include "convreveal/simhuman.hpp"

namespace fs = std::filesystem;
using namespace convreveal;

namespace {

constexpr int kConfigError = 2;

HumanKind human_or_throw(const std::string& name) {
  const auto k = parse_human_kind(name);
  if (!k) throw ConfigError("unknown human model '" + name + "' (direct, adaptive_mimic, explorer)");
  return *k;
}

AssistMode mode_or_throw(const std::string& name) {
  const auto m = parse_mode(name);
  if (!m) throw ConfigError("unknown mode '" + name + "' (ours, no_assist, unassisted)");
  return *m;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream o(path, std::ios::binary);
  if (!o) throw std::runtime_error("cannot write " + path.string());
  o << text;
}

LineServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->interrupt();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared-autonomy convention revealing: simulation, sweeps, bandit regret, session server"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Run one episode with a simulated human");
  std::string sim_scenario, sim_mode = "ours", sim_human, sim_out;
  int sim_task = 0;
  std::uint64_t sim_seed = 0;
  sim->add_option("--scenario", sim_scenario, "Scenario JSON")->required();
  sim->add_option("--mode", sim_mode, "ours | no_assist | unassisted");
  sim->add_option("--human", sim_human, "direct | adaptive_mimic | explorer (default: scenario's)");
  sim->add_option("--task", sim_task, "True task id");
  sim->add_option("--seed", sim_seed, "Episode seed");
  sim->add_option("--out", sim_out, "Write the episode log here (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "Run a location x mode x seed sweep");
  std::string sweep_config, sweep_out = "out";
  int sweep_jobs = 0;
  sweep->add_option("--config", sweep_config, "Sweep JSON")->required();
  sweep->add_option("--out", sweep_out, "Output directory");
  sweep->add_option("--jobs", sweep_jobs, "Worker threads (default: from config)");

  auto* bandit = app.add_subcommand("bandit", "Regret traces of the bandit abstraction");
  int b_arms = 8, b_horizon = 500, b_seeds = 200;
  std::string b_human = "adaptive_mimic", b_out;
  bool b_revealing = false;
  std::uint64_t b_master = 0;
  bandit->add_option("--n-arms", b_arms, "Number of joystick inputs");
  bandit->add_option("--horizon", b_horizon, "Interactions per trace");
  bandit->add_option("--human", b_human, "adaptive_mimic | explorer | direct");
  bandit->add_option("--revealing", b_revealing, "Robot demonstrates the correct arm (true/false)");
  bandit->add_option("--seeds", b_seeds, "Number of traces");
  bandit->add_option("--master-seed", b_master, "Master seed");
  bandit->add_option("--out", b_out, "Directory for regret.csv (default: CSV on stdout)");

  auto* fit = app.add_subcommand("fit-regret", "Fit constant vs logarithmic regret");
  std::string fit_in;
  fit->add_option("--in", fit_in, "Directory holding regret.csv (or the file itself)")->required();

  auto* serve = app.add_subcommand("serve", "Serve the session protocol over TCP");
  std::string srv_addr = "127.0.0.1:7878", srv_scenario, srv_log;
  serve->add_option("--addr", srv_addr, "host:port");
  serve->add_option("--scenario", srv_scenario, "Scenario JSON")->required();
  serve->add_option("--log", srv_log, "Append finished episode logs to this JSONL file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*sim) {
      Scenario sc = load_scenario_file(sim_scenario);
      if (!sim_human.empty()) sc.human_model_spec.kind = human_or_throw(sim_human);
      const AssistMode mode = mode_or_throw(sim_mode);
      if (sim_task < 0 || static_cast<std::size_t>(sim_task) >= sc.tasks.size())
        throw ConfigError("--task must name one of the scenario's " + std::to_string(sc.tasks.size()) + " tasks");
      const World world(sc);
      HumanModel human = make_human(sc.human_model_spec);
      const EpisodeLog log = run_episode(world, mode, human, sim_task, sim_seed);
      const std::string text = to_json(log).dump() + "\n";
      if (sim_out.empty()) std::cout << text;
      else write_file(sim_out, text);
      std::cerr << "reached_task=" << log.outcome.reached_task << " ticks=" << log.outcome.ticks
                << " inputs=" << log.outcome.inputs << " incorrect=" << log.outcome.incorrect_inputs << "\n";
    } else if (*sweep) {
      SweepConfig cfg = load_sweep_file(sweep_config);
      if (sweep_jobs > 0) cfg.jobs = sweep_jobs;
      const ExperimentResult res = run_experiment(cfg);
      write_experiment(res, sweep_out);
      std::cout << metrics_csv(res);
    } else if (*bandit) {
      if (b_arms < 2) throw ConfigError("--n-arms must be at least 2");
      if (b_horizon < 1) throw ConfigError("--horizon must be positive");
      if (b_seeds < 1) throw ConfigError("--seeds must be positive");
      HumanModelSpec spec;
      spec.kind = human_or_throw(b_human);
      const auto traces = run_bandit_seeds(b_arms, b_horizon, spec, b_revealing, b_seeds, b_master);
      const std::string csv = regret_csv(traces);
      if (b_out.empty()) std::cout << csv;
      else write_file(fs::path(b_out) / "regret.csv", csv);
    } else if (*fit) {
      fs::path p = fit_in;
      if (fs::is_directory(p)) p /= "regret.csv";
      if (!fs::exists(p)) throw ConfigError("no regret trace file at " + p.string());
      const auto traces = parse_regret_csv(read_text_file(p.string()));
      if (traces.size() < kMinRegretTraces)
        throw ConfigError("need at least " + std::to_string(kMinRegretTraces) + " traces, found " +
                          std::to_string(traces.size()));
      const RegretFit f = regret_fit(traces);
      json out = {{"model", to_string(f.model)},
                  {"constant", f.constant},
                  {"intercept", f.intercept},
                  {"slope", f.slope},
                  {"r2_constant", f.r2_constant},
                  {"r2_log", f.r2_log},
                  {"k_min", f.k_min},
                  {"k_max", f.k_max},
                  {"traces", traces.size()}};
      std::cout << out.dump(2) << "\n";
    } else if (*serve) {
      auto world = std::make_shared<const World>(load_scenario_file(srv_scenario));
      std::optional<fs::path> log;
      if (!srv_log.empty()) log = srv_log;
      Gateway gw(world, log);
      LineServer server(gw);
      const int port = server.listen(srv_addr);
      std::cerr << "listening on port " << port << "\n";
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.serve();
      g_server = nullptr;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
