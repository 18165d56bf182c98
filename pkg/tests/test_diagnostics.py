import json
import math
import random

import pytest

from kpset.diagnostics import (
    AssignmentTrace,
    TraceRecord,
    assignment_entropy,
    bin_confidences,
    compare_entropy,
    read_trace,
    signal_proportions,
    slot_type_proportions,
)


def _trace(step_labels):
    """step_labels: list of dicts inst -> (present list, absent list)."""
    records = []
    for step, insts in enumerate(step_labels, start=1):
        assignments = {
            inst: {"present": pres, "absent": abst} for inst, (pres, abst) in insts.items()
        }
        records.append(TraceRecord(step=step, assignments=assignments))
    return AssignmentTrace(records=records)


def test_trace_requires_increasing_steps():
    rec = TraceRecord(step=1, assignments={})
    with pytest.raises(ValueError):
        AssignmentTrace(records=[rec, TraceRecord(step=1, assignments={})])


def test_read_trace_skips_other_record_types(tmp_path):
    path = tmp_path / "log.jsonl"
    lines = [
        json.dumps({"type": "step", "step": 1, "loss": 1.0}),
        json.dumps({"type": "trace", "step": 2, "instances": [
            {"id": "a", "present": [0, "null"], "absent": ["masked", "null"]},
        ]}),
        "",
    ]
    path.write_text("\n".join(lines) + "\n")
    trace = read_trace(path)
    assert len(trace) == 1
    assert trace.records[0].assignments["a"]["present"] == [0, "null"]


def test_signal_proportions_excludes_masked():
    trace = _trace([
        {"a": ([0, "null"], ["masked", "null"])},
        {"a": ([0, 1], ["masked", 0])},
    ])
    props = signal_proportions(trace)
    assert props["present"]["kp"] == pytest.approx(3 / 4)
    assert props["present"]["null"] == pytest.approx(1 / 4)
    # absent side: masked steps drop out of the denominator
    assert props["absent"]["kp"] == pytest.approx(1 / 2)
    assert props["absent"]["null"] == pytest.approx(1 / 2)
    for side in props.values():
        assert side["null"] + side["kp"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        signal_proportions(AssignmentTrace(records=[]))


def test_slot_type_proportions():
    trace = _trace([
        {"a": ([0, "null", "null"], ["null"] * 3)},
        {"a": ([0, "null", 1], ["null"] * 3)},
    ])
    props = slot_type_proportions(trace)
    assert props["present"]["kp"] == pytest.approx(1 / 3)
    assert props["present"]["null"] == pytest.approx(1 / 3)
    assert props["present"]["mixed"] == pytest.approx(1 / 3)
    assert sum(props["present"].values()) == pytest.approx(1.0)
    assert props["absent"]["null"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        slot_type_proportions(_trace([{"a": ([0], [0])}]))


def test_slot_type_masked_steps_carry_no_signal():
    trace = _trace([
        {"a": (["masked", "masked", 0], ["null"] * 3)},
        {"a": (["null", 0, "masked"], ["null"] * 3)},
    ])
    props = slot_type_proportions(trace)
    # slot 0: masked then null -> null; slot 1: masked then kp -> kp;
    # slot 2: kp then masked -> kp
    assert props["present"]["null"] == pytest.approx(1 / 3)
    assert props["present"]["kp"] == pytest.approx(2 / 3)
    assert props["present"]["mixed"] == 0.0


def test_slot_type_all_masked_counts_as_null():
    trace = _trace([
        {"a": (["masked"], ["null"])},
        {"a": (["masked"], ["null"])},
    ])
    props = slot_type_proportions(trace)
    assert props["present"]["null"] == pytest.approx(1.0)


def test_assignment_entropy_values():
    # slot flips between target 0 and null across two steps: 1 bit;
    # a constant slot has 0 bits -> instance mean 0.5
    trace = _trace([
        {"a": ([0, 1], ["null", "null"])},
        {"a": (["null", 1], ["null", "null"])},
    ])
    ent = assignment_entropy(trace)
    assert ent["a"] == pytest.approx(1.0 / 4)
    with pytest.raises(ValueError):
        assignment_entropy(_trace([{"a": ([0], [0])}]))


def test_entropy_three_way_split():
    trace = _trace([
        {"a": ([0], [0])},
        {"a": ([1], [0])},
        {"a": (["null"], [0])},
    ])
    ent = assignment_entropy(trace)
    assert ent["a"] == pytest.approx(math.log2(3) / 2)


def test_compare_entropy():
    base = {"a": 1.0, "b": 0.5, "c": 0.2}
    other = {"a": 0.5, "b": 0.5, "c": 0.4, "d": 9.0}
    cmp = compare_entropy(base, other)
    assert cmp["decreased"] == pytest.approx(1 / 3)
    assert cmp["unchanged"] == pytest.approx(1 / 3)
    assert cmp["increased"] == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        compare_entropy({"a": 1.0}, {"b": 1.0})


def test_bin_confidences_structure():
    bins = bin_confidences([0.01, 0.03, 0.5], [True, False, True])
    assert len(bins.counts) == 10
    assert bins.total_predictions == 3
    assert bins.fraction_in_range == pytest.approx(2 / 3)
    assert bins.counts[0] == 1 and bins.counts[1] == 1
    assert bins.accuracy[0] == 1.0 and bins.accuracy[1] == 0.0
    assert bins.gap[1] == pytest.approx(0.03)
    assert bins.mean_conf[2] is None
    with pytest.raises(ValueError):
        bin_confidences([], [], interval=(0.0, 0.2), bin_width=0.03)


def test_bin_confidences_calibrated_simulator():
    # simulated predictor whose accuracy equals its stated confidence: every
    # bin's |confidence - accuracy| gap should be small
    rng = random.Random(0)
    confs, correct = [], []
    for _ in range(200_000):
        c = rng.uniform(0.0, 0.2)
        confs.append(c)
        correct.append(rng.random() < c)
    bins = bin_confidences(confs, correct)
    assert bins.fraction_in_range == pytest.approx(1.0)
    for gap, count in zip(bins.gap, bins.counts):
        assert count > 0
        assert gap < 0.01


def test_model_based_diagnostics_structure(tiny_model, tiny_vocab, tiny_cfg):
    from kpset.corpus import Document, KeyphraseSet
    from kpset.diagnostics import overestimation_ratio, reliability

    corpus = [
        (
            Document(id=f"d{i}", source_tokens=(6, 7, 8 + i), raw_text="w1 w2 w3"),
            KeyphraseSet(
                present=((6, 7),), absent=((9,),),
                present_text=("w1 w2",), absent_text=("w4",),
            ),
        )
        for i in range(3)
    ]
    report = overestimation_ratio(tiny_model, tiny_vocab, corpus)
    assert report.ratio is None or 0.0 <= report.ratio <= 1.0
    assert report.overestimating_slots <= report.correct_nonnull_slots
    assert sum(report.instance_histogram.values()) == pytest.approx(1.0)
    assert set(report.instance_histogram) == {"0", "1", "2", ">=3"}

    bins = reliability(tiny_model, tiny_vocab, corpus)
    # every slot contributes at least its first target token
    assert bins.total_predictions >= len(corpus) * tiny_cfg.num_slots
    assert 0.0 <= bins.fraction_in_range <= 1.0
