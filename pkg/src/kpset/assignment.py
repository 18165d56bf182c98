"""K-step target assignment: matching cost, optimal and brute-force solvers.

The cost between a slot and a candidate target follows the set-prediction
convention: negative sum of the slot's step distributions evaluated at the
target's first min(K, |target|) tokens, and -P_0(null) for the null target.
A log-probability variant is available behind ``cost_variant``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import PaddedTargets

_EPS = 1e-12


@dataclass(frozen=True)
class SlotAssignment:
    """Side-local permutations: slot i on each side gets padded-target index."""

    present: tuple[int, ...]
    absent: tuple[int, ...]

    def side(self, name: str) -> tuple[int, ...]:
        return self.present if name == "present" else self.absent


def match_cost(
    target: Optional[Sequence[int]],
    dists: np.ndarray,
    k: int,
    null_id: int,
    variant: str = "sum_prob",
) -> float:
    """Cost of pairing one slot (dists: (steps, V)) with one target.

    target is a token sequence (terminator included) or None for null.
    """
    if k < 1 or dists.shape[0] < k:
        raise ValueError("need at least k step distributions")
    if variant not in ("sum_prob", "sum_logprob"):
        raise ValueError(f"unknown cost variant {variant!r}")
    if target is None:
        p = [float(dists[0, null_id])]
    else:
        steps = min(k, len(target))
        p = [float(dists[t, target[t]]) for t in range(steps)]
    if variant == "sum_prob":
        return -sum(p)
    return -sum(np.log(max(v, _EPS)) for v in p)


def build_cost_matrix(
    targets: Sequence[Optional[Sequence[int]]],
    dists: np.ndarray,
    k: int,
    null_id: int,
    variant: str = "sum_prob",
) -> np.ndarray:
    """Rows: slots of one side; columns: that side's padded targets."""
    n = len(targets)
    if dists.shape[0] != n:
        raise ValueError("slot count and target count must match per side")
    cost = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j, tgt in enumerate(targets):
            cost[i, j] = match_cost(tgt, dists[i], k, null_id, variant)
    return cost


def _check_square_finite(cost: np.ndarray) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    return cost


def hungarian(cost: np.ndarray) -> tuple[int, ...]:
    """Minimum-cost permutation; returns target index per slot (row)."""
    cost = _check_square_finite(cost)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return tuple(int(c) for c in perm)


_PERM_CACHE: dict[int, np.ndarray] = {}


def _all_permutations(n: int) -> np.ndarray:
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    return _PERM_CACHE[n]


def brute_force_assign(cost: np.ndarray, max_n: int = 8) -> tuple[int, ...]:
    """Exhaustive minimum over all permutations; oracle for hungarian()."""
    cost = _check_square_finite(cost)
    n = cost.shape[0]
    if n > max_n:
        raise ValueError(f"brute force limited to n <= {max_n}, got {n}")
    perms = _all_permutations(n)
    totals = cost[np.arange(n), perms].sum(axis=1)
    return tuple(int(j) for j in perms[int(np.argmin(totals))])


def assignment_total(cost: np.ndarray, perm: Sequence[int]) -> float:
    return float(sum(cost[i, j] for i, j in enumerate(perm)))


def assign_targets(
    dists: np.ndarray,
    padded: PaddedTargets,
    k: int,
    null_id: int,
    variant: str = "sum_prob",
) -> SlotAssignment:
    """Optimal per-side assignment for one instance.

    dists: (N, steps, V) with the first N/2 slots handling present targets
    and the last N/2 handling absent targets.
    """
    half = len(padded.present)
    if dists.shape[0] != 2 * half:
        raise ValueError("slot count does not match padded target count")
    pres = hungarian(build_cost_matrix(padded.present, dists[:half], k, null_id, variant))
    abst = hungarian(build_cost_matrix(padded.absent, dists[half:], k, null_id, variant))
    return SlotAssignment(present=pres, absent=abst)
