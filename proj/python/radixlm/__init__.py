"""Python bindings for the radixlm serving simulator."""

import json as _json

from . import _core
from ._core import (
    Error,
    PreconditionError,
    RadixTree,
    ValidationError,
    Vocabulary,
    ablation_names,
    constrained_decode,
    optimal_hit_rate,
    prefix_sharing_bound,
    random_prefix_workload,
    workload_kinds,
)

__all__ = [
    "Error",
    "PreconditionError",
    "RadixTree",
    "ValidationError",
    "Vocabulary",
    "ablation_names",
    "compile_fsm",
    "constrained_decode",
    "optimal_hit_rate",
    "prefix_sharing_bound",
    "random_prefix_workload",
    "replay_tree_trace",
    "run_experiment",
    "verify_theorem_1",
    "workload_kinds",
]


def run_experiment(spec, config=None):
    """Runs a workload spec under an engine config. Returns (metrics, batch_csv)."""
    metrics, batch_csv = _core.run_experiment(_json.dumps(spec), _json.dumps(config or {}))
    return _json.loads(metrics), batch_csv


def compile_fsm(pattern):
    """Returns (fsm dict, graphviz text) for a regex."""
    text, dot = _core.compile_fsm(pattern)
    return _json.loads(text), dot


def verify_theorem_1(requests, capacity=0, workload_seed=0):
    return _json.loads(_core.verify_theorem_1(requests, capacity, workload_seed))


def replay_tree_trace(golden):
    """Replays a golden trace given as a dict or a path."""
    if isinstance(golden, (str, bytes)) or hasattr(golden, "__fspath__"):
        with open(golden) as f:
            golden = _json.load(f)
    return _json.loads(_core.replay_tree_trace(_json.dumps(golden)))
