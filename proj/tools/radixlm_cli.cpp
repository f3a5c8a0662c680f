// radixlm: command-line front end for the simulator.
//
//   radixlm simulate --workload w.json --config engine.json --out dir
//   radixlm fsm compile --regex PATTERN [--dot out.dot]
//   radixlm verify theorem1 --seeds 0..99
//   radixlm replay --golden data/fig3.json
//
// RADIXLM_LOG_LEVEL selects the spdlog level (trace .. off, default info).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "radixlm/experiment.hpp"
#include "radixlm/fsm.hpp"
#include "radixlm/oracles.hpp"
#include "radixlm/regex.hpp"
#include "radixlm/replay.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("radixlm");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("RADIXLM_LOG_LEVEL");
  if (level != nullptr && *level != '\0') {
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && std::string(level) != "off") {
      spdlog::warn("unknown RADIXLM_LOG_LEVEL '{}', using info", level);
      spdlog::set_level(spdlog::level::info);
    } else {
      spdlog::set_level(parsed);
    }
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw radixlm::ValidationError("cannot open '" + path + "'");
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw radixlm::ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    throw radixlm::ValidationError("cannot write '" + path.string() + "'");
  }
  out << content;
}

// "a..b" (inclusive) or a single number.
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto v = std::stoull(text);
      return {v, v};
    }
    const auto lo = std::stoull(text.substr(0, dots));
    const auto hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) {
      throw radixlm::ValidationError("empty seed range '" + text + "'");
    }
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw radixlm::ValidationError("bad seed range '" + text + "', expected a..b");
  }
}

int cmd_simulate(const std::string& workload_path, const std::string& config_path, const std::string& out_dir,
                 const std::string& ablation) {
  const auto spec = radixlm::WorkloadSpec::from_json(read_json(workload_path));
  auto config = config_path.empty() ? radixlm::EngineConfig{} : radixlm::EngineConfig::from_json(read_json(config_path));
  if (!ablation.empty()) {
    config.ablation = ablation;
    config = radixlm::EngineConfig::from_json(config.to_json());  // validates the name
  }
  spdlog::info("simulating {} (seed {}, scale {}) with ablation {}", spec.kind, spec.seed, spec.scale,
               config.ablation);
  const auto report = radixlm::run_experiment(spec, config);

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "metrics.json", report.metrics.dump(2) + "\n");
  write_file(fs::path(out_dir) / "batch.csv", report.batch_csv);
  spdlog::debug("wall {:.3f}s, tree ops {:.3f}s", report.wall_seconds, report.tree_op_seconds);
  const auto& m = report.metrics;
  spdlog::info("programs {} (failed {}), hit rate {:.4f} (optimal {:.4f}), makespan {}, throughput {:.3f}/kstep",
               m.at("programs").get<std::int64_t>(), m.at("failed_programs").get<std::int64_t>(),
               m.at("hit_rate").get<double>(), m.at("optimal_hit_rate").get<double>(),
               m.at("makespan").get<std::int64_t>(), m.at("throughput_programs_per_kilostep").get<double>());
  spdlog::info("wrote {}/metrics.json and {}/batch.csv", out_dir, out_dir);
  return m.at("failed_programs").get<std::int64_t>() == 0 ? 0 : 1;
}

int cmd_fsm_compile(const std::string& pattern, const std::string& dot_path, bool print_json) {
  const radixlm::Dfa dfa = radixlm::compile_regex(pattern);
  const radixlm::CompressedFsm fsm(dfa);
  spdlog::info("dfa: {} states, {} transitions; compressed: {} junctions, {} edges", dfa.size(),
               dfa.transition_count(), fsm.junctions().size(), fsm.edge_count());
  const auto [forced, state] = fsm.jump_forward(fsm.start());
  if (!forced.empty()) {
    spdlog::info("forced prefix from start: \"{}\"", forced);
  }
  if (!dot_path.empty()) {
    write_file(dot_path, fsm.to_dot());
    spdlog::info("wrote {}", dot_path);
  }
  if (print_json) {
    std::cout << fsm.to_json().dump(2) << "\n";
  }
  return 0;
}

int cmd_verify_theorem1(const std::string& seeds, std::size_t max_requests, std::size_t max_len,
                        const std::string& out_path) {
  const auto [lo, hi] = parse_seed_range(seeds);
  json reports = json::array();
  std::size_t failed = 0;
  std::size_t skipped = 0;
  for (std::uint64_t seed = lo; seed <= hi; ++seed) {
    const auto requests = radixlm::random_prefix_workload(seed, max_requests, max_len);
    const auto r = radixlm::verify_theorem_1(requests, 0, seed);
    if (!r.precondition_met) {
      ++skipped;
    } else if (!r.holds) {
      ++failed;
      spdlog::error("seed {}: {}", seed, r.detail);
    } else {
      spdlog::debug("seed {}: hit rate {:.4f}", seed, r.brute_force);
    }
    reports.push_back(r.to_json());
  }
  const std::size_t total = hi - lo + 1;
  std::cout << "theorem1: " << (total - failed - skipped) << "/" << total << " seeds hold";
  if (skipped > 0) {
    std::cout << ", " << skipped << " skipped (precondition)";
  }
  std::cout << "\n";
  if (!out_path.empty()) {
    write_file(out_path, reports.dump(2) + "\n");
  }
  return failed == 0 ? 0 : 1;
}

int cmd_replay(const std::string& golden, const std::string& out_path) {
  const auto report = radixlm::replay_tree_trace_file(golden);
  for (const auto& s : report.steps) {
    std::cout << "step " << s.step << ": " << (s.diff.empty() ? "ok" : "MISMATCH") << "\n";
    for (const auto& d : s.diff) {
      std::cout << "  " << d << "\n";
    }
  }
  if (!out_path.empty()) {
    write_file(out_path, report.to_json().dump(2) + "\n");
  }
  std::cout << (report.ok ? "replay matches" : "replay differs") << "\n";
  return report.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"radixlm: LM-program serving simulator"};
  app.require_subcommand(1);

  std::string workload;
  std::string config;
  std::string out_dir;
  std::string ablation;
  auto* simulate = app.add_subcommand("simulate", "Run a workload and write metrics.json and batch.csv");
  simulate->add_option("--workload", workload, "Workload spec JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--config", config, "Engine config JSON")->check(CLI::ExistingFile);
  simulate->add_option("--out", out_dir, "Output directory")->required();
  simulate->add_option("--ablation", ablation, "Override the config's ablation");

  auto* fsm = app.add_subcommand("fsm", "Constraint automaton tools");
  fsm->require_subcommand(1);
  std::string regex;
  std::string dot;
  bool fsm_json = false;
  auto* compile = fsm->add_subcommand("compile", "Compile a regex into a compressed FSM");
  compile->add_option("--regex", regex, "Pattern")->required();
  compile->add_option("--dot", dot, "Write the compressed FSM as Graphviz");
  compile->add_flag("--json", fsm_json, "Print the compressed FSM as JSON");

  auto* verify = app.add_subcommand("verify", "Check results against oracles");
  verify->require_subcommand(1);
  std::string seeds = "0..99";
  std::size_t max_requests = 6;
  std::size_t max_len = 64;
  std::string verify_out;
  auto* theorem1 = verify->add_subcommand("theorem1", "Longest-shared-prefix-first order is optimal");
  theorem1->add_option("--seeds", seeds, "Seed range a..b (inclusive)")->capture_default_str();
  theorem1->add_option("--max-requests", max_requests, "Requests per workload (brute force is factorial)")->capture_default_str()
      ->check(CLI::Range(1, 8));
  theorem1->add_option("--max-len", max_len, "Longest request")->capture_default_str()->check(CLI::PositiveNumber);
  theorem1->add_option("--out", verify_out, "Write per-seed reports as JSON");

  std::string golden;
  std::string replay_out;
  auto* replay = app.add_subcommand("replay", "Replay a golden radix-tree trace");
  replay->add_option("--golden", golden, "Golden trace JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "Write the replay report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      return cmd_simulate(workload, config, out_dir, ablation);
    }
    if (*compile) {
      return cmd_fsm_compile(regex, dot, fsm_json);
    }
    if (*theorem1) {
      return cmd_verify_theorem1(seeds, max_requests, max_len, verify_out);
    }
    if (*replay) {
      return cmd_replay(golden, replay_out);
    }
  } catch (const radixlm::Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 3;
  }
  return 0;
}
