"""Executable analyses of null-token over-estimation and assignment stability:
supervisory-signal proportions, slot-type classification, over-estimation
ratio, reliability bins, and assignment entropy."""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import torch

from .metrics import _stems
from .model import SetKeyphraseModel
from .vocab import Vocabulary

NULL_LABEL = "null"
MASK_LABEL = "masked"


@dataclass
class TraceRecord:
    step: int
    # instance id -> {"present": [labels], "absent": [labels],
    #                 "signal_present": [labels], "signal_absent": [labels]};
    # a label is a side-local target index (int), "null", or "masked".
    # present/absent hold the optimal assignment (stability analyses);
    # signal_* hold the final supervisory signals after re-assignment and
    # default to the assignment labels when absent.
    assignments: dict[str, dict[str, list]]

    def signals(self, inst: str, side: str) -> list:
        labels = self.assignments[inst]
        return labels.get(f"signal_{side}", labels[side])


@dataclass
class AssignmentTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __post_init__(self):
        steps = [r.step for r in self.records]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("trace steps must be strictly increasing")

    def __len__(self):
        return len(self.records)


def read_trace(log_path: str | Path) -> AssignmentTrace:
    records = []
    with open(log_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("type") != "trace":
                continue
            assignments = {
                inst["id"]: {k: v for k, v in inst.items() if k != "id"}
                for inst in obj["instances"]
            }
            records.append(TraceRecord(step=obj["step"], assignments=assignments))
    return AssignmentTrace(records=records)


def trace_tail(trace: AssignmentTrace, fraction: float = 0.5) -> AssignmentTrace:
    """The last `fraction` of recorded steps; stability analyses focus on the
    late-training assignments, after the initial assignment churn."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    keep = max(2, math.ceil(len(trace.records) * fraction))
    return AssignmentTrace(records=trace.records[-keep:])


def signal_proportions(trace: AssignmentTrace) -> dict[str, dict[str, float]]:
    """Fraction of slot-step supervisory signals that are null vs keyphrase,
    per side. Masked slot-steps carry no signal and are excluded."""
    if not trace.records:
        raise ValueError("empty trace")
    out = {}
    for side in ("present", "absent"):
        null = kp = 0
        for rec in trace.records:
            for inst in rec.assignments:
                for lab in rec.signals(inst, side):
                    if lab == NULL_LABEL:
                        null += 1
                    elif lab != MASK_LABEL:
                        kp += 1
        total = null + kp
        out[side] = {
            "null": null / total if total else 0.0,
            "kp": kp / total if total else 0.0,
        }
    return out


def slot_type_proportions(trace: AssignmentTrace) -> dict[str, dict[str, float]]:
    """Classify each (instance, slot) pair by the supervisory signals it
    received across steps: always null, always keyphrase, or mixed. Masked
    slot-steps carry no signal and are skipped; a slot that was masked at
    every step counts as null (masking only ever applies to null-assigned
    slots)."""
    if len(trace.records) < 2:
        raise ValueError("slot-type classification needs at least 2 recorded steps")
    out = {}
    for side in ("present", "absent"):
        history: dict[tuple[str, int], set[str]] = defaultdict(set)
        for rec in trace.records:
            for inst in rec.assignments:
                for slot, lab in enumerate(rec.signals(inst, side)):
                    if lab == MASK_LABEL:
                        history.setdefault((inst, slot), set())
                        continue
                    history[(inst, slot)].add("null" if lab == NULL_LABEL else "kp")
        counts = Counter()
        for kinds in history.values():
            if kinds == {"kp"}:
                counts["kp"] += 1
            elif kinds in ({"null"}, set()):
                counts["null"] += 1
            else:
                counts["mixed"] += 1
        total = sum(counts.values())
        out[side] = {k: counts[k] / total if total else 0.0 for k in ("null", "kp", "mixed")}
    return out


def _slot_entropy(labels: list) -> float:
    norm = [NULL_LABEL if lab == MASK_LABEL else lab for lab in labels]
    counts = Counter(norm)
    n = sum(counts.values())
    return -sum((c / n) * math.log2(c / n) for c in counts.values())


def assignment_entropy(trace: AssignmentTrace) -> dict[str, float]:
    """Per-instance mean (over slots) entropy of the assignment distribution
    across recorded steps, in bits."""
    if len(trace.records) < 2:
        raise ValueError("entropy needs at least 2 recorded steps")
    per_slot: dict[str, dict[tuple[str, int], list]] = defaultdict(lambda: defaultdict(list))
    for rec in trace.records:
        for inst, labels in rec.assignments.items():
            for side in ("present", "absent"):
                for slot, lab in enumerate(labels[side]):
                    per_slot[inst][(side, slot)].append(lab)
    out = {}
    for inst, slots in per_slot.items():
        entropies = [_slot_entropy(labels) for labels in slots.values()]
        out[inst] = sum(entropies) / len(entropies)
    return out


def compare_entropy(base: dict[str, float], other: dict[str, float], tol: float = 1e-12):
    """Fractions of common instances whose entropy decreased / increased /
    stayed unchanged going from base to other."""
    common = sorted(set(base) & set(other))
    if not common:
        raise ValueError("no common instances between traces")
    dec = inc = same = 0
    for inst in common:
        delta = other[inst] - base[inst]
        if delta < -tol:
            dec += 1
        elif delta > tol:
            inc += 1
        else:
            same += 1
    n = len(common)
    return {"decreased": dec / n, "increased": inc / n, "unchanged": same / n}


# ------------------------------------------------------- model-based analyses


@dataclass
class OverestimationReport:
    ratio: Optional[float]          # None when no slot is correct via non-null
    correct_nonnull_slots: int
    overestimating_slots: int
    instance_histogram: dict[str, float]  # share of instances by #over-estimating slots

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "correct_nonnull_slots": self.correct_nonnull_slots,
            "overestimating_slots": self.overestimating_slots,
            "instance_histogram": self.instance_histogram,
        }


def overestimation_ratio(
    model: SetKeyphraseModel,
    vocab: Vocabulary,
    corpus,
    batch_size: int = 16,
) -> OverestimationReport:
    """Share of correct non-null slots that emit null under vanilla prediction.

    A slot counts as correct when its forced non-null phrase stem-matches any
    target keyphrase of the document.
    """
    from .trainloop import collate  # local import to avoid a cycle

    correct = over = 0
    hist = Counter()
    n_instances = 0
    for start in range(0, len(corpus), batch_size):
        batch = corpus[start : start + batch_size]
        src, pad_mask = collate([doc for doc, _ in batch], vocab.pad_id)
        memory = model.encode(src, pad_mask)
        nonnull_phrases = model.generate_slot_phrases(memory, src_pad_mask=pad_mask, mask_null=True)
        preds = model.predict_k_tokens(memory, 1, pad_mask)
        for b, (_, kps) in enumerate(batch):
            target_stems = {
                _stems(t) for t in list(kps.present_text) + list(kps.absent_text)
            }
            n_over_here = 0
            for slot in range(model.cfg.num_slots):
                phrase = nonnull_phrases[b][slot]
                if not phrase:
                    continue
                stems = _stems(" ".join(vocab.decode(phrase)))
                if stems not in target_stems:
                    continue
                correct += 1
                if preds.vanilla[b][slot][0] == model.null_id:
                    over += 1
                    n_over_here += 1
            hist[min(n_over_here, 3)] += 1
            n_instances += 1
    histogram = {
        label: hist[key] / n_instances if n_instances else 0.0
        for key, label in ((0, "0"), (1, "1"), (2, "2"), (3, ">=3"))
    }
    return OverestimationReport(
        ratio=over / correct if correct else None,
        correct_nonnull_slots=correct,
        overestimating_slots=over,
        instance_histogram=histogram,
    )


@dataclass
class ReliabilityBins:
    edges: list[float]
    counts: list[int]
    mean_conf: list[Optional[float]]
    accuracy: list[Optional[float]]
    gap: list[Optional[float]]
    total_predictions: int
    fraction_in_range: float

    def to_dict(self) -> dict:
        return {
            "edges": self.edges,
            "counts": self.counts,
            "mean_conf": self.mean_conf,
            "accuracy": self.accuracy,
            "gap": self.gap,
            "total_predictions": self.total_predictions,
            "fraction_in_range": self.fraction_in_range,
        }


def bin_confidences(
    confidences, correctness, interval=(0.0, 0.2), bin_width: float = 0.02
) -> ReliabilityBins:
    """Bucket (confidence, correct) pairs into equal-width bins over interval."""
    lo, hi = interval
    n_bins = round((hi - lo) / bin_width)
    if abs(lo + n_bins * bin_width - hi) > 1e-9 or n_bins < 1:
        raise ValueError("bin_width must divide the interval evenly")
    edges = [lo + i * bin_width for i in range(n_bins + 1)]
    sums = [0.0] * n_bins
    hits = [0] * n_bins
    counts = [0] * n_bins
    in_range = 0
    total = 0
    for conf, ok in zip(confidences, correctness):
        total += 1
        if not (lo <= conf < hi) and conf != hi:
            continue
        in_range += 1
        idx = min(int((conf - lo) / bin_width), n_bins - 1)
        counts[idx] += 1
        sums[idx] += conf
        hits[idx] += int(ok)
    mean_conf = [sums[i] / counts[i] if counts[i] else None for i in range(n_bins)]
    accuracy = [hits[i] / counts[i] if counts[i] else None for i in range(n_bins)]
    gap = [
        abs(mean_conf[i] - accuracy[i]) if counts[i] else None for i in range(n_bins)
    ]
    return ReliabilityBins(
        edges=edges,
        counts=counts,
        mean_conf=mean_conf,
        accuracy=accuracy,
        gap=gap,
        total_predictions=total,
        fraction_in_range=in_range / total if total else 0.0,
    )


def reliability(
    model: SetKeyphraseModel,
    vocab: Vocabulary,
    corpus,
    interval=(0.0, 0.2),
    bin_width: float = 0.02,
    batch_size: int = 16,
) -> ReliabilityBins:
    """Token-level calibration of teacher-forced next-token predictions along
    each slot's optimally assigned target."""
    from .assignment import assign_targets
    from .corpus import pad_targets
    from .reassign import identity_plan, plan_target_sequences
    from .trainloop import collate

    confidences: list[float] = []
    correctness: list[bool] = []
    with torch.no_grad():
        for start in range(0, len(corpus), batch_size):
            batch = corpus[start : start + batch_size]
            src, pad_mask = collate([doc for doc, _ in batch], vocab.pad_id)
            memory = model.encode(src, pad_mask)
            preds = model.predict_k_tokens(memory, model.cfg.assign_steps, pad_mask)
            targets = []
            for b, (_, kps) in enumerate(batch):
                padded = pad_targets(kps, model.cfg.num_slots)
                assign = assign_targets(
                    preds.dists[b].numpy(), padded, model.cfg.assign_steps,
                    vocab.null_id, model.cfg.cost_variant,
                )
                plan = identity_plan(assign, padded)
                targets.append(plan_target_sequences(plan, padded, vocab.eos_id))
            forced = model.teacher_forced_probs(memory, targets, pad_mask)
            for b in range(len(batch)):
                for i in range(model.cfg.num_slots):
                    seq = targets[b][i] or (vocab.null_id,)
                    for t in range(len(seq)):
                        confidences.append(float(forced.step_conf[b, i, t]))
                        correctness.append(int(forced.step_argmax[b, i, t]) == seq[t])
    return bin_confidences(confidences, correctness, interval, bin_width)
