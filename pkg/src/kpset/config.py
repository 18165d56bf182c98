"""Training configuration: dataclass defaults plus flat key=value config files."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class TrainConfig:
    # slots / assignment
    num_slots: int = 20          # total; split evenly between present and absent
    assign_steps: int = 2        # K-step assignment
    lambda_pre: float = 0.2
    lambda_abs: float = 0.1
    cost_variant: str = "sum_prob"   # or "sum_logprob"
    # model dimensions
    d_model: int = 64
    num_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    ffn_dim: int = 128
    dropout: float = 0.0
    max_phrase_len: int = 8      # decoded tokens per slot, incl. terminator
    vocab_size: int = 5000
    dtype: str = "float64"
    # optimization
    lr: float = 1e-4
    batch_size: int = 12
    epochs: int = 20
    seed: int = 1
    # ablation switches
    no_reassign: bool = False
    no_weighting: bool = False
    rand_assign: bool = False
    # diagnostics
    trace_interval: int = 50     # optimizer steps between assignment traces
    trace_sample: int = 100      # instances recorded per trace sweep

    def __post_init__(self):
        if self.num_slots % 2:
            raise ValueError("num_slots must be even")
        if self.assign_steps < 1:
            raise ValueError("assign_steps must be >= 1")
        if self.lambda_pre < 0 or self.lambda_abs < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.cost_variant not in ("sum_prob", "sum_logprob"):
            raise ValueError(f"unknown cost_variant {self.cost_variant!r}")
        if self.rand_assign and self.no_reassign:
            raise ValueError("rand_assign and no_reassign are mutually exclusive")

    @property
    def slots_per_side(self) -> int:
        return self.num_slots // 2

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(raw: str, typ):
    if typ is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return typ(raw)


def load_config(path: str | Path, overrides: dict | None = None) -> TrainConfig:
    """Read a flat KEY=VALUE file ('#' comments allowed); overrides win."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    # dataclass field types are strings under `from __future__ import annotations`
    real = {f.name: type(getattr(TrainConfig(), f.name)) for f in fields(TrainConfig)}
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected KEY=VALUE, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(raw, real[key])
    if overrides:
        values.update(overrides)
    return TrainConfig(**values)


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in cfg.to_dict().items():
            fh.write(f"{key} = {value}\n")
