#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "radixlm/experiment.hpp"
#include "radixlm/fsm.hpp"
#include "radixlm/oracles.hpp"
#include "radixlm/radix_tree.hpp"
#include "radixlm/regex.hpp"
#include "radixlm/replay.hpp"
#include "radixlm/tokenizer.hpp"

namespace py = pybind11;
using nlohmann::json;

// JSON crosses the boundary as text; the Python package wraps it in dicts.
PYBIND11_MODULE(_core, m) {
  m.doc() = "radixlm simulator core";

  // Translators run newest first, so the base class is registered first.
  py::register_exception<radixlm::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<radixlm::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<radixlm::PreconditionError>(m, "PreconditionError", PyExc_ValueError);

  py::class_<radixlm::Vocabulary, std::shared_ptr<radixlm::Vocabulary>>(m, "Vocabulary")
      .def(py::init([](std::uint64_t seed, std::int64_t merges) {
             return std::make_shared<radixlm::Vocabulary>(radixlm::Vocabulary::build(seed, merges));
           }),
           py::arg("seed") = 0, py::arg("merges") = 128)
      .def("encode", [](const radixlm::Vocabulary& v, const std::string& text) { return v.encode(text); })
      .def("decode", [](const radixlm::Vocabulary& v, const radixlm::TokenSequence& t) { return v.decode(t); })
      .def("piece", &radixlm::Vocabulary::piece)
      .def_property_readonly("eos_id", &radixlm::Vocabulary::eos_id)
      .def("__len__", &radixlm::Vocabulary::size);

  py::class_<radixlm::RadixTree>(m, "RadixTree")
      .def(py::init<>())
      .def("insert", [](radixlm::RadixTree& t, const radixlm::TokenSequence& s) { return t.insert(s); })
      .def("match_prefix",
           [](radixlm::RadixTree& t, const radixlm::TokenSequence& s) { return t.match_prefix(s).matched_len; })
      .def("evict", [](radixlm::RadixTree& t, std::int64_t needed) { return t.evict(needed); })
      .def_property_readonly("total_cached_tokens", &radixlm::RadixTree::total_cached_tokens)
      .def_property_readonly("evictable_size", &radixlm::RadixTree::evictable_size)
      .def("check_invariants", &radixlm::RadixTree::check_invariants)
      .def("dump_json", [](const radixlm::RadixTree& t) { return t.dump().dump(); });

  m.def(
      "compile_fsm",
      [](const std::string& pattern) {
        const radixlm::CompressedFsm fsm(radixlm::compile_regex(pattern));
        return py::make_tuple(fsm.to_json().dump(), fsm.to_dot());
      },
      py::arg("pattern"), "Returns (json text, dot text) of the compressed FSM.");

  m.def(
      "constrained_decode",
      [](const std::string& pattern, std::int64_t max_tokens, bool compressed, std::uint64_t salt,
         std::uint64_t model_seed, const radixlm::Vocabulary& vocab) {
        const radixlm::MockModel model(model_seed, vocab.size());
        const auto r = radixlm::constrained_decode(model, pattern, vocab, max_tokens, compressed, salt);
        return py::make_tuple(r.text, r.forward_passes);
      },
      py::arg("pattern"), py::arg("max_tokens"), py::arg("compressed") = true, py::arg("salt") = 0,
      py::arg("model_seed") = 0, py::arg("vocab"));

  m.def("prefix_sharing_bound", &radixlm::prefix_sharing_bound, py::arg("requests"));
  m.def("optimal_hit_rate", &radixlm::optimal_hit_rate, py::arg("prompts"), py::arg("outputs"));
  m.def("random_prefix_workload", &radixlm::random_prefix_workload, py::arg("seed"), py::arg("max_requests") = 6,
        py::arg("max_len") = 64);
  m.def(
      "verify_theorem_1",
      [](const std::vector<radixlm::TokenSequence>& requests, std::int64_t capacity, std::uint64_t seed) {
        return radixlm::verify_theorem_1(requests, capacity, seed).to_json().dump();
      },
      py::arg("requests"), py::arg("capacity") = 0, py::arg("workload_seed") = 0);

  m.def(
      "run_experiment",
      [](const std::string& spec, const std::string& config) {
        radixlm::ExperimentReport r;
        {
          py::gil_scoped_release release;
          r = radixlm::run_experiment(radixlm::WorkloadSpec::from_json(json::parse(spec)),
                                      radixlm::EngineConfig::from_json(json::parse(config)));
        }
        return py::make_tuple(r.metrics.dump(), r.batch_csv);
      },
      py::arg("spec"), py::arg("config"));
  m.def("workload_kinds", &radixlm::workload_kinds);
  m.def("ablation_names", &radixlm::ablation_names);
  m.def(
      "replay_tree_trace", [](const std::string& golden) {
        return radixlm::replay_tree_trace(json::parse(golden)).to_json().dump();
      },
      py::arg("golden"));
}
