"""Closed vocabulary with reserved control tokens, plus the shared tokenizer."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

PAD = "<pad>"
UNK = "<unk>"
NULL = "<null>"  # the "no keyphrase for this slot" token
EOS_KP = "<eos_kp>"  # terminates a generated keyphrase
DIGIT = "<digit>"

RESERVED = (PAD, UNK, NULL, EOS_KP, DIGIT)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_NUMBER_RE = re.compile(r"\d+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split into word/punctuation tokens, map digit runs to <digit>."""
    toks = _TOKEN_RE.findall(text.lower())
    return [DIGIT if _NUMBER_RE.fullmatch(t) else t for t in toks]


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        for t in RESERVED:
            if t not in self.index:
                raise ValueError(f"missing reserved token {t!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def null_id(self) -> int:
        return self.index[NULL]

    @property
    def eos_id(self) -> int:
        return self.index[EOS_KP]

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        unk = self.unk_id
        return tuple(self.index.get(t, unk) for t in tokens)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def build(cls, token_streams: Iterable[Iterable[str]], max_size: int = 5000) -> "Vocabulary":
        """Keep the most frequent tokens up to max_size (reserved tokens included)."""
        counts = Counter()
        for stream in token_streams:
            counts.update(stream)
        for t in RESERVED:
            counts.pop(t, None)
        budget = max(max_size - len(RESERVED), 0)
        # sort by (-count, token) for a deterministic vocabulary
        kept = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:budget]
        return cls(list(RESERVED) + [t for t, _ in kept])
