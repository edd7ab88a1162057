"""Phoneme-recognizer comparison path.

Hypothesis phones (from text or greedy CTC decoding of posteriors) are
aligned to the reference phone sequence by unit-cost edit distance.  Each
reference segment then takes the features of the hypothesis phone aligned
to it; deleted reference phones get the silence vector, inserted
hypothesis phones are dropped for feature scoring but still count in PER.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .alignment import DEFAULT_FPS
from .decode import MAGIC, SegmentPrediction, pack_matrix, unpack_header, unpack_values
from .errors import EmptyReference, FormatError
from .featuremap import SILENCE_VECTOR, FeatureTable, default_table, map_phone
from .phoneset import DEFAULT_RULESET, RuleSet, canonicalize_label

BLANK = "<blank>"

MATCH, SUB, DEL, INS = "match", "substitute", "delete", "insert"


@dataclass(frozen=True)
class PhonePosteriors:
    values: np.ndarray  # (T, V)
    vocab: tuple        # index 0 is the blank
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.vocab):
            raise FormatError(0, f"posteriors shape {v.shape} does not match vocab of {len(self.vocab)}")
        if len(self.vocab) < 2:
            raise FormatError(0, "vocabulary needs a blank and at least one phone")
        if len(set(self.vocab)) != len(self.vocab):
            raise FormatError(0, "vocabulary symbols must be unique")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "vocab", tuple(self.vocab))


@dataclass(frozen=True)
class EditOp:
    op: str
    ref: int | None
    hyp: int | None


@dataclass(frozen=True)
class EditScript:
    ops: tuple

    @property
    def cost(self) -> int:
        return sum(op.op != MATCH for op in self.ops)

    def counts(self) -> dict:
        out = {SUB: 0, DEL: 0, INS: 0, MATCH: 0}
        for op in self.ops:
            out[op.op] += 1
        return out

    def apply(self, ref: Sequence, hyp: Sequence) -> list:
        """Rebuild the hypothesis from the reference by replaying the script."""
        out = []
        for op in self.ops:
            if op.op == MATCH:
                out.append(ref[op.ref])
            elif op.op in (SUB, INS):
                out.append(hyp[op.hyp])
        return out


def ctc_greedy(post: PhonePosteriors) -> list[str]:
    """Frame argmax, merge repeats, drop blanks."""
    if post.values.shape[0] == 0:
        return []
    best = np.argmax(post.values, axis=1)
    out = []
    prev = -1
    for k in best.tolist():
        if k != prev and k != 0:
            out.append(post.vocab[k])
        prev = k
    return out


def align(ref: Sequence, hyp: Sequence) -> EditScript:
    n, m = len(ref), len(hyp)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            d[i, j] = min(diag, d[i - 1, j] + 1, d[i, j - 1] + 1)

    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        here = d[i, j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == d[i - 1, j - 1]:
            ops.append(EditOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and ref[i - 1] != hyp[j - 1] and here == d[i - 1, j - 1] + 1:
            ops.append(EditOp(SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and here == d[i - 1, j] + 1:
            ops.append(EditOp(DEL, i - 1, None))
            i -= 1
        else:
            ops.append(EditOp(INS, None, j - 1))
            j -= 1
    return EditScript(tuple(reversed(ops)))


def per(ref: Sequence, hyp: Sequence) -> float:
    if len(ref) == 0:
        raise EmptyReference("phone error rate needs a non-empty reference")
    return align(ref, hyp).cost / len(ref)


def project_to_segments(ref_segments, hyp: Sequence[str],
                        table: FeatureTable | None = None) -> list[SegmentPrediction]:
    if table is None:
        table = default_table()
    segs = [s for s in ref_segments if not s.is_silence]
    ref = [s.phone.symbol for s in segs]
    hyp = [getattr(h, "symbol", h) for h in hyp]
    assigned = [SILENCE_VECTOR] * len(segs)
    for op in align(ref, hyp).ops:
        if op.op in (MATCH, SUB):
            assigned[op.ref] = map_phone(table, hyp[op.hyp])
    return [SegmentPrediction(s.start, s.end, v, phone=s.phone.symbol)
            for s, v in zip(segs, assigned)]


# -- hypothesis / posteriors files ------------------------------------------

def canonical_phones(labels: Sequence[str], lang: str, table: FeatureTable | None = None,
                     rules: RuleSet = DEFAULT_RULESET, unknown_as_silence: bool = False
                     ) -> list[str]:
    """Canonicalize raw hypothesis labels, dropping silences."""
    phones = [canonicalize_label(tok, lang, table, rules, unknown_as_silence) for tok in labels]
    return [p.symbol for p in phones if not p.is_silence]


def parse_hypothesis(text: str, lang: str, table: FeatureTable | None = None,
                     rules: RuleSet = DEFAULT_RULESET, unknown_as_silence: bool = False
                     ) -> list[list[str]]:
    """One utterance per non-empty line of whitespace-separated phones."""
    return [canonical_phones(line.split(), lang, table, rules, unknown_as_silence)
            for line in text.splitlines() if line.strip()]


def format_posteriors_binary(post: PhonePosteriors) -> bytes:
    vocab = struct.pack("<I", len(post.vocab))
    for sym in post.vocab:
        b = sym.encode("utf-8")
        vocab += struct.pack("<I", len(b)) + b
    return pack_matrix(post.values, extra=vocab)


def parse_posteriors_binary(data: bytes, fps: float = DEFAULT_FPS, source: str = "<posteriors>"
                            ) -> PhonePosteriors:
    T, V, off = unpack_header(data, source)
    try:
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        vocab = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            if off + n > len(data):
                raise FormatError(1, f"{source}: truncated vocabulary")
            vocab.append(data[off:off + n].decode("utf-8"))
            off += n
    except struct.error:
        raise FormatError(1, f"{source}: truncated vocabulary") from None
    if count != V:
        raise FormatError(1, f"{source}: vocabulary has {count} symbols, matrix has {V} columns")
    return PhonePosteriors(unpack_values(data, off, T, V, source), tuple(vocab), fps)


def load_posteriors(path, fps: float = DEFAULT_FPS) -> PhonePosteriors:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(1, f"{path}: posteriors must be PHQ2 binary")
    return parse_posteriors_binary(data, fps, str(path))
