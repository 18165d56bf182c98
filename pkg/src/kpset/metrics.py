"""Stem-level evaluation: F1@5, F1@M, and prediction diversity statistics."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import is_contiguous_subsequence
from .stemming import normalize_phrase


def _stems(phrase: str) -> tuple[str, ...]:
    return normalize_phrase(phrase.split())


def dedup_stemmed(preds: list[str]) -> list[str]:
    """Keep the first occurrence of each stemmed form, preserving order."""
    seen = set()
    out = []
    for p in preds:
        key = _stems(p)
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def _match_count(preds: list[str], targets: list[str]) -> int:
    return len({_stems(p) for p in preds} & {_stems(t) for t in targets})


def f1_at_m(preds: list[str], targets: list[str]) -> float:
    """F1 over all predictions; 0 when either side is empty."""
    if not preds or not targets:
        return 0.0
    match = _match_count(preds, targets)
    precision = match / len(preds)
    recall = match / len(targets)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1_at_5(preds: list[str], targets: list[str]) -> float:
    """F1 over the top five predictions, blank-padding short lists to five."""
    if not preds or not targets:
        return 0.0
    top = preds[:5]
    match = _match_count(top, targets)
    precision = match / 5
    recall = match / len(targets)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class ScoreReport:
    present_f1_5: float
    present_f1_m: float
    absent_f1_5: float
    absent_f1_m: float
    avg_present: float
    avg_absent: float
    dup_ratio: float
    num_docs: int

    def to_dict(self) -> dict:
        return {
            "present_f1@5": self.present_f1_5,
            "present_f1@M": self.present_f1_m,
            "absent_f1@5": self.absent_f1_5,
            "absent_f1@M": self.absent_f1_m,
            "avg_present": self.avg_present,
            "avg_absent": self.avg_absent,
            "dup_ratio": self.dup_ratio,
            "num_docs": self.num_docs,
        }

    def table(self) -> str:
        lines = [
            f"{'metric':<14}{'present':>10}{'absent':>10}",
            f"{'F1@5':<14}{self.present_f1_5:>10.4f}{self.absent_f1_5:>10.4f}",
            f"{'F1@M':<14}{self.present_f1_m:>10.4f}{self.absent_f1_m:>10.4f}",
            f"diversity     #Pre / #Abs / Dup = "
            f"{self.avg_present:.2f} / {self.avg_absent:.2f} / {self.dup_ratio:.2f}",
        ]
        return "\n".join(lines)


@dataclass
class DocPredictions:
    """One document's raw predictions and its gold targets (strings)."""

    raw_preds: list[str]
    doc_tokens: list[str]
    present_targets: list[str]
    absent_targets: list[str]


def split_pred_present_absent(preds: list[str], doc_tokens: list[str]):
    doc_stems = list(normalize_phrase(doc_tokens))
    present, absent = [], []
    for p in preds:
        (present if is_contiguous_subsequence(_stems(p), doc_stems) else absent).append(p)
    return present, absent


def diversity_stats(per_doc_raw_preds: list[list[str]], per_doc_tokens: list[list[str]]):
    """Mean unique present/absent counts and mean duplication ratio."""
    n = len(per_doc_raw_preds)
    if n == 0:
        return 0.0, 0.0, 0.0
    pre = abs_ = dup = 0.0
    for raw, toks in zip(per_doc_raw_preds, per_doc_tokens):
        unique = dedup_stemmed(raw)
        p, a = split_pred_present_absent(unique, toks)
        pre += len(p)
        abs_ += len(a)
        if raw:
            dup += 1 - len(unique) / len(raw)
    return pre / n, abs_ / n, dup / n


def score_corpus(docs: list[DocPredictions]) -> ScoreReport:
    """Macro-averaged F1s plus corpus diversity statistics."""
    n = len(docs)
    if n == 0:
        raise ValueError("empty corpus")
    sums = {"p5": 0.0, "pm": 0.0, "a5": 0.0, "am": 0.0}
    for doc in docs:
        unique = dedup_stemmed(doc.raw_preds)
        pres, abst = split_pred_present_absent(unique, doc.doc_tokens)
        sums["p5"] += f1_at_5(pres, doc.present_targets)
        sums["pm"] += f1_at_m(pres, doc.present_targets)
        sums["a5"] += f1_at_5(abst, doc.absent_targets)
        sums["am"] += f1_at_m(abst, doc.absent_targets)
    avg_pre, avg_abs, dup = diversity_stats(
        [d.raw_preds for d in docs], [d.doc_tokens for d in docs]
    )
    return ScoreReport(
        present_f1_5=sums["p5"] / n,
        present_f1_m=sums["pm"] / n,
        absent_f1_5=sums["a5"] / n,
        absent_f1_m=sums["am"] / n,
        avg_present=avg_pre,
        avg_absent=avg_abs,
        dup_ratio=dup,
        num_docs=n,
    )
