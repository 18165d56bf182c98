"""Corpus ingestion: tokenization, present/absent splitting, slot padding.

Records are line-delimited JSON with fields ``document`` (string) and
``keyphrases`` (list of strings). Serialization adds ``present``/``absent``
fields with the computed split.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .stemming import normalize_phrase
from .vocab import Vocabulary, tokenize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Document:
    id: str
    source_tokens: tuple[int, ...]
    raw_text: str

    def __post_init__(self):
        if not self.source_tokens:
            raise ValueError(f"document {self.id}: empty token sequence")


@dataclass(frozen=True)
class KeyphraseSet:
    present: tuple[tuple[int, ...], ...]
    absent: tuple[tuple[int, ...], ...]
    present_text: tuple[str, ...] = ()
    absent_text: tuple[str, ...] = ()


@dataclass
class PaddedTargets:
    """Per-side target lists padded with None (the null slot target) to n/2."""

    present: list[Optional[tuple[int, ...]]]
    absent: list[Optional[tuple[int, ...]]]
    truncated_present: int = 0
    truncated_absent: int = 0


@dataclass
class CorpusRecord:
    """Tokenized record before id-encoding; phrases kept as token lists."""

    document_tokens: list[str]
    raw_text: str
    keyphrases: list[list[str]]
    present: list[list[str]] = field(default_factory=list)
    absent: list[list[str]] = field(default_factory=list)


def is_contiguous_subsequence(needle: tuple[str, ...], haystack: list[str]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    return any(tuple(haystack[i : i + n]) == needle for i in range(len(haystack) - n + 1))


def split_present_absent(doc_tokens: list[str], keyphrases: list[list[str]]):
    """Partition keyphrases by stemmed contiguous occurrence in the document."""
    doc_stems = [s for s in normalize_phrase(doc_tokens)]
    present, absent = [], []
    for kp in keyphrases:
        if is_contiguous_subsequence(normalize_phrase(kp), doc_stems):
            present.append(kp)
        else:
            absent.append(kp)
    return present, absent


def _parse_record(line: str, lineno: int) -> CorpusRecord:
    try:
        obj = json.loads(line)
        document = obj["document"]
        keyphrases = obj["keyphrases"]
        if not isinstance(document, str) or not isinstance(keyphrases, list):
            raise TypeError("wrong field types")
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"malformed corpus record at line {lineno}: {exc}") from exc
    doc_tokens = tokenize(document)
    kp_tokens = [tokenize(kp) for kp in keyphrases if tokenize(kp)]
    return CorpusRecord(document_tokens=doc_tokens, raw_text=document, keyphrases=kp_tokens)


def read_records(path: str | Path) -> list[CorpusRecord]:
    """Parse, split and de-duplicate a corpus file (duplicates keep first occurrence)."""
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = _parse_record(line, lineno)
            rec.present, rec.absent = split_present_absent(rec.document_tokens, rec.keyphrases)
            key = (
                " ".join(rec.document_tokens),
                tuple(sorted(" ".join(normalize_phrase(kp)) for kp in rec.keyphrases)),
            )
            if key in seen:
                continue
            seen.add(key)
            records.append(rec)
    return records


def build_vocab(records: list[CorpusRecord], max_size: int = 5000) -> Vocabulary:
    streams = [r.document_tokens for r in records]
    streams += [kp for r in records for kp in r.keyphrases]
    return Vocabulary.build(streams, max_size=max_size)


def load_corpus(
    path: str | Path, vocab: Optional[Vocabulary] = None, max_vocab: int = 5000
) -> tuple[list[tuple[Document, KeyphraseSet]], Vocabulary]:
    """Load a corpus file; builds a vocabulary from it unless one is given."""
    records = read_records(path)
    if vocab is None:
        vocab = build_vocab(records, max_size=max_vocab)
    out = []
    for i, rec in enumerate(records):
        doc = Document(
            id=f"doc{i:05d}",
            source_tokens=vocab.encode(rec.document_tokens),
            raw_text=rec.raw_text,
        )
        kps = KeyphraseSet(
            present=tuple(vocab.encode(kp) for kp in rec.present),
            absent=tuple(vocab.encode(kp) for kp in rec.absent),
            present_text=tuple(" ".join(kp) for kp in rec.present),
            absent_text=tuple(" ".join(kp) for kp in rec.absent),
        )
        out.append((doc, kps))
    return out, vocab


def serialize_records(records: list[CorpusRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "document": rec.raw_text,
                "keyphrases": [" ".join(kp) for kp in rec.keyphrases],
                "present": [" ".join(kp) for kp in rec.present],
                "absent": [" ".join(kp) for kp in rec.absent],
            }
            fh.write(json.dumps(obj, sort_keys=False) + "\n")


def pad_targets(kps: KeyphraseSet, n: int) -> PaddedTargets:
    """Pad (or truncate) each side's target list to exactly n/2 entries."""
    if n % 2:
        raise ValueError("slot count must be even")
    half = n // 2

    def _side(targets, name):
        kept = list(targets[:half])
        truncated = len(targets) - len(kept)
        if truncated:
            log.warning("truncated %d %s targets beyond %d slots", truncated, name, half)
        return kept + [None] * (half - len(kept)), truncated

    present, tp = _side(kps.present, "present")
    absent, ta = _side(kps.absent, "absent")
    return PaddedTargets(present=present, absent=absent, truncated_present=tp, truncated_absent=ta)
