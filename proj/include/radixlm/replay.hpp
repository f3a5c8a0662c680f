#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace radixlm {

/// Outcome of replaying one step of a golden tree trace.
struct ReplayStep {
  int step = 0;
  nlohmann::json expected_tree;
  nlohmann::json actual_tree;
  std::vector<std::string> expected_evicted;
  std::vector<std::string> actual_evicted;
  std::vector<std::string> diff;  // empty when the step matches
};

struct ReplayReport {
  bool ok = true;
  std::vector<ReplayStep> steps;

  nlohmann::json to_json() const;
};

/// Replays a golden trace of named token segments through one scheduler and
/// compares the radix tree after every step with the expected shape.
///
/// Golden format:
///   {"capacity": 58, "model_seed": 7, "vocab": {"seed": 0, "merges": 128},
///    "text_seed": 3,
///    "segments": {"sys": 8, ...},            input segments and token lengths
///    "steps": [{"step": 2,
///               "requests": [{"prompt": ["sys", "u1"], "output": "a1",
///                             "max_new_tokens": 2, "salt": 0}],
///               "tree": {"sys u1 a1": {}},    edge label -> subtree
///               "evicted": []}, ...]}
/// Output segments are bound to whatever the model generates. An edge label
/// lists the segments it spans; a partial segment shows as name[from:to].
ReplayReport replay_tree_trace(const nlohmann::json& golden);
ReplayReport replay_tree_trace_file(const std::string& path);

}  // namespace radixlm
