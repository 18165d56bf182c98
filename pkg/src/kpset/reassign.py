"""The two calibration strategies: adaptive instance-level cost weighting and
target re-assignment of null-assigned slots.

Slots are indexed globally 0..N-1; the first half handles present targets,
the second half absent targets. Target references are side-local indices into
the padded target lists.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .assignment import SlotAssignment
from .corpus import PaddedTargets


@dataclass
class WeightingResult:
    """Instance-level null over-estimation degree (Eq. of the weighting strategy)."""

    lambda_adp: float
    ratios: dict[int, float] = field(default_factory=dict)  # slot -> clamped ratio
    kp_slots: tuple[int, ...] = ()


@dataclass
class ReassignmentPlan:
    """Final supervision per slot after re-assignment.

    assigned[i] is a side-local target index, or None for the null target.
    masked[i] slots contribute no loss. potential/unimportant record the two
    slot sets the mechanism identified.
    """

    assigned: list[Optional[int]]
    masked: list[bool]
    potential: dict[int, int] = field(default_factory=dict)
    unimportant: frozenset[int] = frozenset()

    def __post_init__(self):
        overlap = set(self.potential) & set(self.unimportant)
        if overlap:
            raise ValueError(f"slots in both potential and unimportant sets: {sorted(overlap)}")


def lambda_adp_from_probs(p_first: Sequence[float], p_null: Sequence[float]) -> float:
    """Mean clamped ratio p(target first token) / p(null) over keyphrase slots."""
    if len(p_first) != len(p_null):
        raise ValueError("probability lists must have equal length")
    if not p_first:
        return 1.0
    ratios = []
    for pf, pn in zip(p_first, p_null):
        ratios.append(1.0 if pn <= 0 else min(pf / pn, 1.0))
    return float(sum(ratios) / len(ratios))


def compute_lambda_adp(
    step0_dist: np.ndarray,
    assign: SlotAssignment,
    padded: PaddedTargets,
    null_id: int,
) -> WeightingResult:
    """Eq.-level weighting from the step-0 teacher-forced distributions (N, V)."""
    half = len(padded.present)
    ratios: dict[int, float] = {}
    for side, offset, targets in (("present", 0, padded.present), ("absent", half, padded.absent)):
        for local, j in enumerate(assign.side(side)):
            target = targets[j]
            if target is None:
                continue
            slot = offset + local
            pf = float(step0_dist[slot, target[0]])
            pn = float(step0_dist[slot, null_id])
            ratios[slot] = 1.0 if pn <= 0 else min(pf / pn, 1.0)
    kp_slots = tuple(sorted(ratios))
    lam = sum(ratios.values()) / len(ratios) if ratios else 1.0
    return WeightingResult(lambda_adp=float(lam), ratios=ratios, kp_slots=kp_slots)


def target_with_eos(target: tuple[int, ...], eos_id: int) -> tuple[int, ...]:
    return tuple(target) + (eos_id,)


def prefix_consistent(prediction: Sequence[int], target_seq: Sequence[int], k: int) -> bool:
    """Does the non-null K-token prediction agree with the target's K-prefix?"""
    length = min(k, len(target_seq))
    return tuple(prediction[:length]) == tuple(target_seq[:length])


def identity_plan(assign: SlotAssignment, padded: PaddedTargets) -> ReassignmentPlan:
    half = len(padded.present)
    assigned: list[Optional[int]] = []
    for side, targets in (("present", padded.present), ("absent", padded.absent)):
        for j in assign.side(side):
            assigned.append(j if targets[j] is not None else None)
    return ReassignmentPlan(assigned=assigned, masked=[False] * (2 * half))


def classify_slots(
    vanilla: Sequence[tuple[int, ...]],
    nonnull: Sequence[tuple[int, ...]],
    padded: PaddedTargets,
    assign: SlotAssignment,
    k: int,
    eos_id: int,
) -> tuple[set[int], set[int]]:
    """Split null-assigned slots into potential and unimportant sets.

    A null-assigned slot whose non-null K-token prediction matches the
    K-prefix of some same-side target is potential when that prediction
    differs from every slot's vanilla K-token prediction, and unimportant
    otherwise. Keyphrase-assigned slots are never classified.
    """
    half = len(padded.present)
    vanilla_set = {tuple(v) for v in vanilla}
    c_p: set[int] = set()
    c_u: set[int] = set()
    for side, offset, targets in (("present", 0, padded.present), ("absent", half, padded.absent)):
        side_seqs = [target_with_eos(t, eos_id) for t in targets if t is not None]
        for local, j in enumerate(assign.side(side)):
            if targets[j] is not None:
                continue
            slot = offset + local
            pred = tuple(nonnull[slot])
            if not any(prefix_consistent(pred, seq, k) for seq in side_seqs):
                continue
            if pred in vanilla_set:
                c_u.add(slot)
            else:
                c_p.add(slot)
    return c_p, c_u


def _matching_targets(pred, targets, k, eos_id):
    return [
        j
        for j, t in enumerate(targets)
        if t is not None and prefix_consistent(pred, target_with_eos(t, eos_id), k)
    ]


def reassign(
    assign: SlotAssignment,
    padded: PaddedTargets,
    c_p: set[int],
    c_u: set[int],
    nonnull: Sequence[tuple[int, ...]],
    k: int,
    eos_id: int,
) -> ReassignmentPlan:
    """Give each potential slot its best-matched target; mask unimportant slots.

    Best-matched: among same-side targets whose K-prefix equals the slot's
    non-null prediction, prefer the one currently supervising the fewest
    unmasked slots, then the lowest target index.
    """
    half = len(padded.present)
    plan = identity_plan(assign, padded)
    for slot in sorted(c_u):
        plan.masked[slot] = True
        plan.assigned[slot] = None
    for slot in sorted(c_p):
        side_targets = padded.present if slot < half else padded.absent
        offset = 0 if slot < half else half
        candidates = _matching_targets(nonnull[slot], side_targets, k, eos_id)
        assert candidates, f"potential slot {slot} has no matching target"
        usage = {j: 0 for j in candidates}
        for other in range(offset, offset + half):
            j = plan.assigned[other]
            if j is not None and not plan.masked[other] and j in usage:
                usage[j] += 1
        best = min(candidates, key=lambda j: (usage[j], j))
        plan.assigned[slot] = best
    plan.potential = {slot: plan.assigned[slot] for slot in sorted(c_p)}
    plan.unimportant = frozenset(c_u)
    return ReassignmentPlan(
        assigned=plan.assigned,
        masked=plan.masked,
        potential=plan.potential,
        unimportant=plan.unimportant,
    )


def rand_reassign(
    assign: SlotAssignment,
    padded: PaddedTargets,
    c_p: set[int],
    c_u: set[int],
    rng: random.Random,
) -> ReassignmentPlan:
    """Ablation variant: potential slots draw a uniformly random same-side target."""
    half = len(padded.present)
    plan = identity_plan(assign, padded)
    for slot in sorted(c_u):
        plan.masked[slot] = True
        plan.assigned[slot] = None
    potential: dict[int, int] = {}
    for slot in sorted(c_p):
        side_targets = padded.present if slot < half else padded.absent
        eligible = [j for j, t in enumerate(side_targets) if t is not None]
        if not eligible:
            plan.masked[slot] = True
            plan.assigned[slot] = None
            continue
        choice = rng.choice(eligible)
        plan.assigned[slot] = choice
        potential[slot] = choice
    return ReassignmentPlan(
        assigned=plan.assigned,
        masked=plan.masked,
        potential=potential,
        unimportant=frozenset(c_u),
    )


def plan_target_sequences(
    plan: ReassignmentPlan, padded: PaddedTargets, eos_id: int
) -> list[Optional[tuple[int, ...]]]:
    """Per-slot teacher-forcing targets (terminator appended); None means null."""
    half = len(padded.present)
    seqs: list[Optional[tuple[int, ...]]] = []
    for slot, j in enumerate(plan.assigned):
        if j is None:
            seqs.append(None)
        else:
            targets = padded.present if slot < half else padded.absent
            seqs.append(target_with_eos(targets[j], eos_id))
    return seqs
