import os
import pathlib

import pytest

import radixlm

DATA = pathlib.Path(__file__).resolve().parents[2] / "data"


def test_tokenizer_round_trip():
    vocab = radixlm.Vocabulary(0, 128)
    text = 'The answer is {"grade": "A+"}.'
    tokens = vocab.encode(text)
    assert vocab.decode(tokens) == text
    assert len(tokens) < len(text)
    assert vocab.eos_id == len(vocab)


def test_radix_tree_shares_prefixes():
    tree = radixlm.RadixTree()
    assert tree.insert([1, 2, 3]) == 3
    assert tree.insert([1, 2, 4, 5]) == 2
    assert tree.match_prefix([1, 2, 4, 9]) == 3
    assert tree.total_cached_tokens == 5
    assert tree.evict(2) >= 2
    tree.check_invariants()


def test_fsm_compile_and_decode():
    pattern = r'\{"grade": "[ABCD][+-]?"\}'
    fsm, dot = radixlm.compile_fsm(pattern)
    assert dot.startswith("digraph")
    assert fsm
    vocab = radixlm.Vocabulary(0, 128)
    fast_text, fast_passes = radixlm.constrained_decode(pattern, 64, vocab=vocab)
    slow_text, slow_passes = radixlm.constrained_decode(pattern, 64, compressed=False, vocab=vocab)
    assert fast_text == slow_text
    assert fast_text.startswith('{"grade": "')
    assert fast_passes < slow_passes


def test_bad_regex_raises_value_error():
    with pytest.raises(ValueError):
        radixlm.compile_fsm("(ab")


def test_theorem_on_a_random_workload():
    reqs = radixlm.random_prefix_workload(3, 5, 32)
    report = radixlm.verify_theorem_1(reqs, 0, 3)
    assert report["holds"]
    assert report["closed_form"] == pytest.approx(radixlm.prefix_sharing_bound(reqs))


def test_few_shot_experiment():
    spec = {"kind": "few_shot", "seed": 1, "params": {"n": 8, "k": 64, "q": 8}}
    metrics, csv = radixlm.run_experiment(spec, {"scheduler": {"pool_capacity": 65536}})
    assert metrics["hit_rate"] == pytest.approx(7 * 64 / (8 * 72), rel=0.05)
    assert metrics["failed_programs"] == 0
    assert csv.startswith("worker,step,batch_size")
    again, _ = radixlm.run_experiment(spec, {"scheduler": {"pool_capacity": 65536}})
    assert again == metrics


def test_invalid_config_is_rejected():
    with pytest.raises(ValueError):
        radixlm.run_experiment({"kind": "few_shot"}, {"ablation": "nope"})
    assert "no_cache" in radixlm.ablation_names()
    assert "few_shot" in radixlm.workload_kinds()


def test_golden_tree_trace():
    report = radixlm.replay_tree_trace(os.fspath(DATA / "fig3.json"))
    assert report["ok"], [s["diff"] for s in report["steps"] if s["diff"]]
