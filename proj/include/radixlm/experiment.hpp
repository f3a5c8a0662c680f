#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radixlm/program.hpp"
#include "radixlm/router.hpp"
#include "radixlm/scheduler.hpp"
#include "radixlm/workloads.hpp"

namespace radixlm {

/// Everything needed to build a runtime. JSON form (all keys optional):
///   {"vocab": {"seed": 0, "merges": 128},
///    "scheduler": {"pool_capacity": ..., "policy": "cache_aware", ...},
///    "interpreter": {"fork_hints": true, "parallel": true},
///    "router": {"workers": 4, "policy": "blend", ...},
///    "ablation": "full"}
/// The ablation is applied on top of the explicit settings.
struct EngineConfig {
  std::uint64_t vocab_seed = 0;
  std::int64_t vocab_merges = 128;
  SchedulerConfig scheduler;
  InterpreterOptions interpreter;
  std::optional<RouterConfig> router;
  std::string ablation = "full";

  static EngineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Copy with the named ablation's settings applied.
  EngineConfig effective() const;
};

/// full, no_tree, fcfs, random, no_parallelism, no_hint, no_cache.
std::vector<std::string> ablation_names();

/// Runtime decorator that remembers every request's prompt and output.
class RecordingRuntime : public Runtime {
 public:
  explicit RecordingRuntime(Runtime& inner) : inner_(&inner) {}

  RequestId submit(RequestSpec spec) override;
  std::vector<Completion> step() override;
  bool idle() const override { return inner_->idle(); }
  std::int64_t now() const override { return inner_->now(); }
  void advance_to(std::int64_t time) override { inner_->advance_to(time); }
  const Vocabulary& vocab() const override { return inner_->vocab(); }
  const MockModel& model() const override { return inner_->model(); }

  /// Prompts and outputs in submission order.
  const std::vector<TokenSequence>& prompts() const { return prompts_; }
  const std::vector<TokenSequence>& outputs() const { return outputs_; }

 private:
  Runtime* inner_;
  std::map<RequestId, std::size_t> index_;
  std::vector<TokenSequence> prompts_;
  std::vector<TokenSequence> outputs_;
};

struct ExperimentReport {
  nlohmann::json metrics;  // deterministic for a given spec and config
  std::string batch_csv;   // worker,step,batch_size
  double wall_seconds = 0.0;
  double tree_op_seconds = 0.0;
  std::vector<ProgramResult> results;
};

/// Generates the workload, runs it on a scheduler (or a router when the
/// config has one) and reports achieved and optimal hit rates, compute,
/// throughput in programs per 1000 simulated steps and program latencies.
ExperimentReport run_experiment(const WorkloadSpec& spec, const EngineConfig& config);
ExperimentReport run_programs_experiment(const std::vector<Program>& programs, const EngineConfig& config,
                                         std::shared_ptr<const Vocabulary> vocab);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace radixlm
