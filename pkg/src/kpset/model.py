"""Slot-parallel encoder-decoder for set keyphrase generation.

A small Transformer encoder reads the document; a Transformer decoder runs N
independent slots in parallel, each seeded by its own learnable control code
at step 0. Slots never attend to each other (they are separate rows of the
decoder batch), so each slot's distribution depends only on the document and
its own prefix. Greedy decoding comes in two flavors: vanilla (full
vocabulary, the null token is a legal output) and non-null (null masked out
and the distribution renormalized).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .config import TrainConfig
from .vocab import Vocabulary

CHECKPOINT_MAGIC = "kpset-checkpoint"
CHECKPOINT_VERSION = 1


def _dtype(cfg: TrainConfig) -> torch.dtype:
    return {"float64": torch.float64, "float32": torch.float32}[cfg.dtype]


class _PositionalEncoding(nn.Module):
    def __init__(self, d_model: int, max_len: int = 512):
        super().__init__()
        pos = torch.arange(max_len, dtype=torch.float64).unsqueeze(1)
        div = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model))
        pe = torch.zeros(max_len, d_model, dtype=torch.float64)
        pe[:, 0::2] = torch.sin(pos * div)
        pe[:, 1::2] = torch.cos(pos * div)
        self.register_buffer("pe", pe, persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.pe[: x.shape[-2]].to(x.dtype)


@dataclass
class SlotPredictions:
    """K-step greedy predictions plus the distributions used for matching.

    vanilla[b][i] is the slot's full-vocabulary prediction, truncated to the
    single null token when null is emitted at step 0. nonnull[b][i] always
    holds K non-null tokens. dists has shape (B, N, K, V) and follows the
    vanilla greedy path.
    """

    vanilla: list[list[tuple[int, ...]]]
    nonnull: list[list[tuple[int, ...]]]
    dists: torch.Tensor
    nonnull_dists: torch.Tensor


@dataclass
class TeacherForcedProbs:
    """Teacher-forced probabilities along one target per slot.

    target_probs[b][i] is a 1-D tensor of p_t(z_t) over the target tokens
    (a single entry when the target is null). step0_dist (B, N, V) is the
    first-step distribution, used for the null probability and the
    over-estimation ratio in the weighting strategy.
    """

    target_probs: list[list[torch.Tensor]]
    step0_dist: torch.Tensor
    # per-step max-probability confidence and argmax token along the forced
    # prefix, shape (B, N, T); used by the reliability diagnostics
    step_conf: torch.Tensor = None
    step_argmax: torch.Tensor = None
    lengths: list[list[int]] = None


class SetKeyphraseModel(nn.Module):
    def __init__(self, vocab: Vocabulary, cfg: TrainConfig):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = len(vocab)
        self.null_id = vocab.null_id
        self.eos_id = vocab.eos_id
        self.pad_id = vocab.pad_id
        d = cfg.d_model
        self.embed = nn.Embedding(self.vocab_size, d, padding_idx=vocab.pad_id)
        self.pos = _PositionalEncoding(d)
        self.control_codes = nn.Parameter(torch.empty(cfg.num_slots, d))
        nn.init.normal_(self.control_codes, std=0.02)
        enc_layer = nn.TransformerEncoderLayer(
            d, cfg.num_heads, cfg.ffn_dim, dropout=cfg.dropout, batch_first=True
        )
        dec_layer = nn.TransformerDecoderLayer(
            d, cfg.num_heads, cfg.ffn_dim, dropout=cfg.dropout, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(enc_layer, cfg.enc_layers, enable_nested_tensor=False)
        self.decoder = nn.TransformerDecoder(dec_layer, cfg.dec_layers)
        self.out_proj = nn.Linear(d, self.vocab_size)
        self.to(_dtype(cfg))

    # ---------------------------------------------------------------- encode

    def encode(self, src: torch.Tensor, src_pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """src (B, S) token ids -> memory (B, S, d_model)."""
        if src.dim() != 2:
            raise ValueError(f"expected (batch, src_len), got shape {tuple(src.shape)}")
        x = self.embed(src) * math.sqrt(self.cfg.d_model)
        x = self.pos(x)
        return self.encoder(x, src_key_padding_mask=src_pad_mask)

    # ------------------------------------------------------------- decoding

    def slot_logits(
        self,
        memory: torch.Tensor,
        prev_tokens: Optional[torch.Tensor],
        src_pad_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        """Run all slots one causal decoder pass.

        prev_tokens (B, N, P) are the tokens already emitted (or teacher
        inputs); step 0 input is the slot's control code alone. Returns
        logits (B, N, P+1, V) where position t predicts token t.
        """
        B, S, d = memory.shape
        N = self.cfg.num_slots
        ctrl = self.control_codes.unsqueeze(0).expand(B, N, d).reshape(B * N, 1, d)
        if prev_tokens is not None and prev_tokens.shape[-1] > 0:
            emb = self.embed(prev_tokens.reshape(B * N, -1)) * math.sqrt(d)
            tgt = torch.cat([ctrl, emb], dim=1)
        else:
            tgt = ctrl
        tgt = self.pos(tgt)
        T = tgt.shape[1]
        causal = torch.triu(torch.ones(T, T, dtype=torch.bool, device=tgt.device), diagonal=1)
        mem = memory.repeat_interleave(N, dim=0)
        mem_mask = src_pad_mask.repeat_interleave(N, dim=0) if src_pad_mask is not None else None
        h = self.decoder(tgt, mem, tgt_mask=causal, memory_key_padding_mask=mem_mask)
        return self.out_proj(h).reshape(B, N, T, self.vocab_size)

    @torch.no_grad()
    def predict_k_tokens(
        self,
        memory: torch.Tensor,
        k: int,
        src_pad_mask: Optional[torch.Tensor] = None,
    ) -> SlotPredictions:
        """Greedy K-step decoding per slot, in both vanilla and non-null modes."""
        if k < 1:
            raise ValueError("k must be >= 1")
        B = memory.shape[0]
        N = self.cfg.num_slots
        van_tokens = torch.empty(B, N, 0, dtype=torch.long, device=memory.device)
        non_tokens = torch.empty_like(van_tokens)
        van_dists, non_dists = [], []
        for _ in range(k):
            logits = self.slot_logits(memory, van_tokens, src_pad_mask)[:, :, -1, :]
            dist = torch.softmax(logits, dim=-1)
            van_dists.append(dist)
            van_tokens = torch.cat([van_tokens, dist.argmax(dim=-1, keepdim=True)], dim=-1)

            n_logits = self.slot_logits(memory, non_tokens, src_pad_mask)[:, :, -1, :]
            n_logits = n_logits.clone()
            n_logits[..., self.null_id] = float("-inf")
            n_dist = torch.softmax(n_logits, dim=-1)
            non_dists.append(n_dist)
            non_tokens = torch.cat([non_tokens, n_dist.argmax(dim=-1, keepdim=True)], dim=-1)

        vanilla, nonnull = [], []
        for b in range(B):
            vrow, nrow = [], []
            for i in range(N):
                toks = tuple(van_tokens[b, i].tolist())
                vrow.append((self.null_id,) if toks[0] == self.null_id else toks)
                nrow.append(tuple(non_tokens[b, i].tolist()))
            vanilla.append(vrow)
            nonnull.append(nrow)
        return SlotPredictions(
            vanilla=vanilla,
            nonnull=nonnull,
            dists=torch.stack(van_dists, dim=2),
            nonnull_dists=torch.stack(non_dists, dim=2),
        )

    def teacher_forced_probs(
        self,
        memory: torch.Tensor,
        targets: Sequence[Sequence[Optional[tuple[int, ...]]]],
        src_pad_mask: Optional[torch.Tensor] = None,
    ) -> TeacherForcedProbs:
        """Teacher-forced token probabilities along one target per slot.

        targets[b][i] is the assigned target token sequence (terminator
        included) or None for the null target. Differentiable.
        """
        B = memory.shape[0]
        N = self.cfg.num_slots
        seqs = [
            [(self.null_id,) if t is None else tuple(t) for t in targets[b]] for b in range(B)
        ]
        max_len = max(len(s) for row in seqs for s in row)
        if max_len > self.cfg.max_phrase_len:
            raise ValueError(
                f"target length {max_len} exceeds decoder budget {self.cfg.max_phrase_len}"
            )
        tgt = torch.full((B, N, max_len), self.pad_id, dtype=torch.long, device=memory.device)
        for b in range(B):
            for i, s in enumerate(seqs[b]):
                tgt[b, i, : len(s)] = torch.tensor(s, dtype=torch.long, device=memory.device)
        logits = self.slot_logits(memory, tgt[:, :, :-1] if max_len > 1 else None, src_pad_mask)
        dist = torch.softmax(logits, dim=-1)
        gathered = dist.gather(-1, tgt.unsqueeze(-1)).squeeze(-1)  # (B, N, max_len)
        probs = [
            [gathered[b, i, : len(seqs[b][i])] for i in range(N)] for b in range(B)
        ]
        conf, argmax = dist.max(dim=-1)
        return TeacherForcedProbs(
            target_probs=probs,
            step0_dist=dist[:, :, 0, :],
            step_conf=conf,
            step_argmax=argmax,
            lengths=[[len(s) for s in row] for row in seqs],
        )

    @torch.no_grad()
    def greedy_generate(
        self,
        memory: torch.Tensor,
        max_len: Optional[int] = None,
        src_pad_mask: Optional[torch.Tensor] = None,
        mask_null: bool = False,
    ) -> list[list[tuple[int, ...]]]:
        """Per-document keyphrases in slot order; null-first slots emit nothing.

        With mask_null=True the null token is removed from every step's
        vocabulary (forced non-null generation, used by diagnostics).
        """
        slots = self.generate_slot_phrases(memory, max_len, src_pad_mask, mask_null)
        return [[p for p in row if p] for row in slots]

    @torch.no_grad()
    def generate_slot_phrases(
        self,
        memory: torch.Tensor,
        max_len: Optional[int] = None,
        src_pad_mask: Optional[torch.Tensor] = None,
        mask_null: bool = False,
    ) -> list[list[tuple[int, ...]]]:
        """Greedy phrase per slot, keeping slot alignment (empty tuple = no phrase)."""
        if max_len is None:
            max_len = self.cfg.max_phrase_len
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        B = memory.shape[0]
        N = self.cfg.num_slots
        tokens = torch.empty(B, N, 0, dtype=torch.long, device=memory.device)
        for _ in range(max_len):
            logits = self.slot_logits(memory, tokens, src_pad_mask)[:, :, -1, :]
            if mask_null:
                logits = logits.clone()
                logits[..., self.null_id] = float("-inf")
            tokens = torch.cat([tokens, logits.argmax(dim=-1, keepdim=True)], dim=-1)
        out = []
        for b in range(B):
            row = []
            for i in range(N):
                phrase = []
                for t in tokens[b, i].tolist():
                    if t == self.null_id or t == self.eos_id:
                        break
                    phrase.append(t)
                row.append(tuple(phrase))
            out.append(row)
        return out


def backward(loss: torch.Tensor, model: nn.Module) -> None:
    """Backprop the scalar loss; reject non-finite gradients by name."""
    loss.backward()
    for name, param in model.named_parameters():
        if param.grad is not None and not torch.isfinite(param.grad).all():
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")


# ------------------------------------------------------------- checkpointing
#
# Format: one JSON header line (version, config, vocabulary, parameter names
# with shapes), then the raw little-endian float64 bytes of each parameter in
# header order.


def save_checkpoint(path: str | Path, model: SetKeyphraseModel, vocab: Vocabulary) -> None:
    params = [(name, p.detach().cpu().numpy().astype("<f8")) for name, p in model.named_parameters()]
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "vocab": vocab.tokens,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in params],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in params:
            fh.write(a.tobytes())


def load_checkpoint(path: str | Path) -> tuple[SetKeyphraseModel, Vocabulary, TrainConfig]:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a kpset checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        cfg = TrainConfig(**header["config"])
        vocab = Vocabulary(header["vocab"])
        model = SetKeyphraseModel(vocab, cfg)
        state = {}
        for meta in header["params"]:
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            state[meta["name"]] = torch.tensor(arr, dtype=_dtype(cfg))
        model.load_state_dict(state)
    return model, vocab, cfg
