"""Set losses: per-slot negative log-likelihood with null-discount weights,
adaptive instance weighting, and re-assignment masks."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .reassign import ReassignmentPlan

PROB_FLOOR = 1e-12


@dataclass
class LossBreakdown:
    total: float
    per_slot: list[float]
    null_terms: int
    kp_terms: int
    masked_slots: int
    clamped: int

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "null_terms": self.null_terms,
            "kp_terms": self.kp_terms,
            "masked_slots": self.masked_slots,
            "clamped": self.clamped,
        }


def slot_nll(probs: torch.Tensor, weight: float) -> torch.Tensor:
    """-weight * sum_t log p_t, with probabilities floored for safety."""
    return -weight * torch.log(probs.clamp_min(PROB_FLOOR)).sum()


def set_loss(
    slot_probs: list[torch.Tensor],
    plan: ReassignmentPlan,
    lambda_pre: float,
    lambda_abs: float,
    lambda_adp: float,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Sum of slot NLLs for one instance.

    slot_probs[i] holds teacher-forced probabilities along slot i's final
    target (a single null probability for null-assigned slots). Null targets
    on the present side are weighted lambda_adp * lambda_pre, on the absent
    side lambda_adp * lambda_abs; keyphrase targets weigh 1. Masked slots
    contribute exactly zero.
    """
    n = len(slot_probs)
    if len(plan.assigned) != n or len(plan.masked) != n:
        raise ValueError("plan does not cover all slots")
    half = n // 2
    total = None
    per_slot = []
    null_terms = kp_terms = masked = clamped = 0
    for i, probs in enumerate(slot_probs):
        if plan.masked[i]:
            masked += 1
            per_slot.append(0.0)
            continue
        if plan.assigned[i] is None:
            weight = lambda_adp * (lambda_pre if i < half else lambda_abs)
            null_terms += 1
        else:
            weight = 1.0
            kp_terms += 1
        clamped += int((probs < PROB_FLOOR).sum())
        term = slot_nll(probs, weight)
        per_slot.append(float(term.detach()))
        total = term if total is None else total + term
    if total is None:
        total = torch.zeros((), dtype=slot_probs[0].dtype if slot_probs else torch.float64)
    return total, LossBreakdown(
        total=float(total.detach()),
        per_slot=per_slot,
        null_terms=null_terms,
        kp_terms=kp_terms,
        masked_slots=masked,
        clamped=clamped,
    )
