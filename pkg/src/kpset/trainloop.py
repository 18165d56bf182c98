"""Training, evaluation, and diagnostics orchestration.

Each training step follows the two-stage recipe: greedy K-token prediction
per slot, optimal per-side target assignment, optional target re-assignment
and adaptive cost weighting, then teacher-forced set-loss optimization.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import diagnostics
from .assignment import SlotAssignment, assign_targets
from .config import TrainConfig, save_config
from .corpus import Document, KeyphraseSet, PaddedTargets, load_corpus, pad_targets
from .losses import set_loss
from .metrics import DocPredictions, ScoreReport, score_corpus
from .model import SetKeyphraseModel, backward, load_checkpoint, save_checkpoint
from .reassign import (
    ReassignmentPlan,
    classify_slots,
    compute_lambda_adp,
    identity_plan,
    plan_target_sequences,
    rand_reassign,
    reassign,
)
from .vocab import Vocabulary, tokenize

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.kpc"
LOG_NAME = "train_log.jsonl"


def set_global_seed(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.set_num_threads(1)  # keeps runs bit-reproducible


def collate(docs: list[Document], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    max_len = max(len(d.source_tokens) for d in docs)
    src = torch.full((len(docs), max_len), pad_id, dtype=torch.long)
    mask = torch.ones(len(docs), max_len, dtype=torch.bool)
    for i, d in enumerate(docs):
        n = len(d.source_tokens)
        src[i, :n] = torch.tensor(d.source_tokens, dtype=torch.long)
        mask[i, :n] = False
    return src, mask


@dataclass
class Instance:
    doc: Document
    kps: KeyphraseSet
    padded: PaddedTargets


def build_plan(
    cfg: TrainConfig,
    assign: SlotAssignment,
    padded: PaddedTargets,
    vanilla,
    nonnull,
    eos_id: int,
    rng: Optional[random.Random],
) -> ReassignmentPlan:
    """Apply the re-assignment mechanism subject to the ablation switches."""
    if cfg.no_reassign:
        return identity_plan(assign, padded)
    c_p, c_u = classify_slots(vanilla, nonnull, padded, assign, cfg.assign_steps, eos_id)
    if cfg.rand_assign:
        return rand_reassign(assign, padded, c_p, c_u, rng)
    return reassign(assign, padded, c_p, c_u, nonnull, cfg.assign_steps, eos_id)


def train_step(
    model: SetKeyphraseModel,
    cfg: TrainConfig,
    instances: list[Instance],
    vocab: Vocabulary,
    rng_reassign: random.Random,
):
    """One forward/assignment/loss pass over a batch. Returns (loss, stats)."""
    src, pad_mask = collate([inst.doc for inst in instances], vocab.pad_id)
    memory = model.encode(src, pad_mask)
    preds = model.predict_k_tokens(memory, cfg.assign_steps, pad_mask)

    assigns, plans, targets = [], [], []
    for b, inst in enumerate(instances):
        assign = assign_targets(
            preds.dists[b].numpy(), inst.padded, cfg.assign_steps,
            vocab.null_id, cfg.cost_variant,
        )
        plan = build_plan(
            cfg, assign, inst.padded, preds.vanilla[b], preds.nonnull[b],
            vocab.eos_id, rng_reassign,
        )
        assigns.append(assign)
        plans.append(plan)
        targets.append(plan_target_sequences(plan, inst.padded, vocab.eos_id))

    forced = model.teacher_forced_probs(memory, targets, pad_mask)
    total = None
    lambdas, breakdowns = [], []
    for b, inst in enumerate(instances):
        if cfg.no_weighting:
            lam = 1.0
        else:
            step0 = forced.step0_dist[b].detach().numpy()
            lam = compute_lambda_adp(step0, assigns[b], inst.padded, vocab.null_id).lambda_adp
        inst_loss, breakdown = set_loss(
            forced.target_probs[b], plans[b], cfg.lambda_pre, cfg.lambda_abs, lam
        )
        total = inst_loss if total is None else total + inst_loss
        lambdas.append(lam)
        breakdowns.append(breakdown)
    loss = total / len(instances)
    stats = {
        "loss": float(loss.detach()),
        "lambda_adp_mean": sum(lambdas) / len(lambdas),
        "null_terms": sum(b.null_terms for b in breakdowns),
        "kp_terms": sum(b.kp_terms for b in breakdowns),
        "masked_slots": sum(b.masked_slots for b in breakdowns),
        "clamped": sum(b.clamped for b in breakdowns),
    }
    return loss, stats, assigns, plans


@torch.no_grad()
def trace_assignments(
    model: SetKeyphraseModel,
    cfg: TrainConfig,
    instances: list[Instance],
    vocab: Vocabulary,
    batch_size: int = 16,
) -> list[dict]:
    """Assignment labels for a fixed instance subset (no parameter updates)."""
    out = []
    rng = random.Random(0)  # rand-assign traces stay deterministic
    for start in range(0, len(instances), batch_size):
        chunk = instances[start : start + batch_size]
        src, pad_mask = collate([inst.doc for inst in chunk], vocab.pad_id)
        memory = model.encode(src, pad_mask)
        preds = model.predict_k_tokens(memory, cfg.assign_steps, pad_mask)
        for b, inst in enumerate(chunk):
            assign = assign_targets(
                preds.dists[b].numpy(), inst.padded, cfg.assign_steps,
                vocab.null_id, cfg.cost_variant,
            )
            plan = build_plan(
                cfg, assign, inst.padded, preds.vanilla[b], preds.nonnull[b],
                vocab.eos_id, rng,
            )
            half = cfg.slots_per_side
            # two label sets per slot: the optimal assignment (stability
            # analyses) and the final supervisory signal after re-assignment
            assigned = {"present": [], "absent": []}
            for side in ("present", "absent"):
                targets = inst.padded.present if side == "present" else inst.padded.absent
                for j in assign.side(side):
                    assigned[side].append(
                        diagnostics.NULL_LABEL if targets[j] is None else j
                    )
            signals = {"present": [], "absent": []}
            for slot in range(cfg.num_slots):
                side = "present" if slot < half else "absent"
                if plan.masked[slot]:
                    signals[side].append(diagnostics.MASK_LABEL)
                elif plan.assigned[slot] is None:
                    signals[side].append(diagnostics.NULL_LABEL)
                else:
                    signals[side].append(plan.assigned[slot])
            out.append(
                {
                    "id": inst.doc.id,
                    "present": assigned["present"],
                    "absent": assigned["absent"],
                    "signal_present": signals["present"],
                    "signal_absent": signals["absent"],
                }
            )
    return out


def train(cfg: TrainConfig, corpus_path: str | Path, out_dir: str | Path) -> Path:
    """Full training run; writes checkpoint, config, and a JSONL training log."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    set_global_seed(cfg.seed)

    corpus, vocab = load_corpus(corpus_path, max_vocab=cfg.vocab_size)
    if not corpus:
        raise ValueError(f"empty corpus: {corpus_path}")
    instances = [
        Instance(doc=doc, kps=kps, padded=pad_targets(kps, cfg.num_slots))
        for doc, kps in corpus
    ]
    model = SetKeyphraseModel(vocab, cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng_batches = random.Random(cfg.seed)
    rng_reassign = random.Random(cfg.seed + 7919)
    trace_pool = instances[: cfg.trace_sample]

    save_config(cfg, out_dir / "config.cfg")
    ckpt_path = out_dir / CHECKPOINT_NAME
    step = 0
    with open(out_dir / LOG_NAME, "w", encoding="utf-8") as logfh:
        for epoch in range(cfg.epochs):
            order = list(range(len(instances)))
            rng_batches.shuffle(order)
            for start in range(0, len(order), cfg.batch_size):
                batch = [instances[i] for i in order[start : start + cfg.batch_size]]
                step += 1
                loss, stats, _, _ = train_step(model, cfg, batch, vocab, rng_reassign)
                if not torch.isfinite(loss):
                    logfh.write(json.dumps({"type": "abort", "step": step}) + "\n")
                    raise FloatingPointError(
                        f"non-finite loss at step {step}; last checkpoint kept at {ckpt_path}"
                    )
                optimizer.zero_grad()
                backward(loss, model)
                optimizer.step()
                logfh.write(json.dumps({"type": "step", "step": step, "epoch": epoch, **stats}) + "\n")
                if cfg.trace_interval and step % cfg.trace_interval == 0:
                    recs = trace_assignments(model, cfg, trace_pool, vocab)
                    logfh.write(
                        json.dumps({"type": "trace", "step": step, "instances": recs}) + "\n"
                    )
            save_checkpoint(ckpt_path, model, vocab)
            log.info("epoch %d done (step %d)", epoch, step)
    return ckpt_path


def predict_corpus(
    model: SetKeyphraseModel, vocab: Vocabulary, corpus, batch_size: int = 16
) -> list[list[str]]:
    """Greedy keyphrase strings per document, in slot order."""
    out = []
    for start in range(0, len(corpus), batch_size):
        batch = corpus[start : start + batch_size]
        src, pad_mask = collate([doc for doc, _ in batch], vocab.pad_id)
        memory = model.encode(src, pad_mask)
        phrases = model.greedy_generate(memory, src_pad_mask=pad_mask)
        for row in phrases:
            out.append([" ".join(vocab.decode(p)) for p in row])
    return out


def evaluate(checkpoint_path: str | Path, corpus_path: str | Path) -> ScoreReport:
    model, vocab, cfg = load_checkpoint(checkpoint_path)
    model.eval()
    corpus, _ = load_corpus(corpus_path, vocab=vocab)
    preds = predict_corpus(model, vocab, corpus)
    docs = [
        DocPredictions(
            raw_preds=preds[i],
            doc_tokens=tokenize(doc.raw_text),
            present_targets=list(kps.present_text),
            absent_targets=list(kps.absent_text),
        )
        for i, (doc, kps) in enumerate(corpus)
    ]
    return score_corpus(docs)


def diagnose(
    checkpoint_path: str | Path,
    log_path: Optional[str | Path],
    corpus_path: str | Path,
    compare_log: Optional[str | Path] = None,
    interval: tuple[float, float] = (0.0, 0.2),
    bin_width: float = 0.02,
) -> dict:
    """All diagnostics in one machine-readable report."""
    model, vocab, cfg = load_checkpoint(checkpoint_path)
    model.eval()
    corpus, _ = load_corpus(corpus_path, vocab=vocab)

    report: dict = {"schema": "kpset-diagnostics-v1", "omitted": []}
    trace = None
    if log_path is not None and Path(log_path).exists():
        trace = diagnostics.read_trace(log_path)
    if trace and len(trace) >= 1:
        report["signal_proportions"] = diagnostics.signal_proportions(trace)
    else:
        report["omitted"].append("signal_proportions: no trace records")
    if trace and len(trace) >= 2:
        report["slot_type_proportions"] = diagnostics.slot_type_proportions(trace)
        entropy = diagnostics.assignment_entropy(trace)
        report["assignment_entropy_mean"] = sum(entropy.values()) / len(entropy)
        if compare_log is not None:
            other = diagnostics.read_trace(compare_log)
            if len(other) >= 2:
                report["entropy_comparison"] = diagnostics.compare_entropy(
                    diagnostics.assignment_entropy(other), entropy
                )
    else:
        report["omitted"].append("slot_type_proportions/entropy: need >= 2 trace records")
    report["overestimation"] = diagnostics.overestimation_ratio(model, vocab, corpus).to_dict()
    report["reliability"] = diagnostics.reliability(
        model, vocab, corpus, interval=interval, bin_width=bin_width
    ).to_dict()
    return report


def format_diagnostics(report: dict) -> str:
    """Aligned human-readable rendering of a diagnostics report."""
    lines = []
    if "signal_proportions" in report:
        lines.append("supervisory signals (null% / kp%):")
        for side in ("present", "absent"):
            p = report["signal_proportions"][side]
            lines.append(f"  {side:<8} {100 * p['null']:6.1f}% / {100 * p['kp']:6.1f}%")
    if "slot_type_proportions" in report:
        lines.append("slot types (null / kp / mixed):")
        for side in ("present", "absent"):
            p = report["slot_type_proportions"][side]
            lines.append(
                f"  {side:<8} {100 * p['null']:6.1f}% / {100 * p['kp']:6.1f}% / {100 * p['mixed']:6.1f}%"
            )
    if "assignment_entropy_mean" in report:
        lines.append(f"mean assignment entropy: {report['assignment_entropy_mean']:.4f} bits")
    if "entropy_comparison" in report:
        c = report["entropy_comparison"]
        lines.append(
            "entropy vs compare run: "
            f"decreased {100 * c['decreased']:.1f}%, increased {100 * c['increased']:.1f}%, "
            f"unchanged {100 * c['unchanged']:.1f}%"
        )
    ov = report["overestimation"]
    ratio = "n/a" if ov["ratio"] is None else f"{ov['ratio']:.4f}"
    lines.append(
        f"null over-estimation ratio: {ratio} "
        f"({ov['overestimating_slots']}/{ov['correct_nonnull_slots']} slots)"
    )
    lines.append("instances by #over-estimating slots: " + ", ".join(
        f"{k}: {100 * v:.1f}%" for k, v in ov["instance_histogram"].items()
    ))
    rel = report["reliability"]
    lines.append(
        f"reliability ({rel['total_predictions']} predictions, "
        f"{100 * rel['fraction_in_range']:.1f}% in range):"
    )
    lines.append(f"  {'bin':<16}{'count':>8}{'conf':>8}{'acc':>8}{'gap':>8}")
    for i in range(len(rel["counts"])):
        lo, hi = rel["edges"][i], rel["edges"][i + 1]
        if rel["counts"][i]:
            lines.append(
                f"  [{lo:.2f}, {hi:.2f}){rel['counts'][i]:>9}"
                f"{rel['mean_conf'][i]:>8.3f}{rel['accuracy'][i]:>8.3f}{rel['gap'][i]:>8.3f}"
            )
        else:
            lines.append(f"  [{lo:.2f}, {hi:.2f}){0:>9}{'-':>8}{'-':>8}{'-':>8}")
    for note in report.get("omitted", []):
        lines.append(f"omitted: {note}")
    return "\n".join(lines)
