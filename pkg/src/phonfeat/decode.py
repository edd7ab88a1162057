"""Manner-gated decoding of frame logits and segment-level aggregation.

Segment predictions sum raw logits over the frames whose centers fall in
the segment, then decode the summed row with the same gated argmax used for
single frames.  Argmax ties go to the lowest index.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .alignment import DEFAULT_FPS, frame_span
from .errors import EmptyLogits, FormatError, ShapeMismatch
from .featuremap import (
    BACKNESS, DIM_NAMES, GROUP_SLICES, HEIGHTS, MANNERS, NUM_DIMS, PLACES,
    SILENCE_VECTOR, VOICING, FeatureVector,
)

MAGIC = b"PHQ2"
FORMAT_VERSION = 1

_VOWEL = MANNERS.index("vowel")
_SIL = MANNERS.index("silence")


@dataclass(frozen=True)
class LogitMatrix:
    values: np.ndarray  # (T, 22) float64
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != NUM_DIMS:
            raise ShapeMismatch(f"logits must be T x {NUM_DIMS}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise FormatError(0, "logits contain non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class SegmentPrediction:
    start: float
    end: float
    vector: FeatureVector
    n_frames: int = 0
    phone: str = ""

    @property
    def zero_frames(self) -> bool:
        return self.n_frames == 0


def decode_rows(rows: np.ndarray, force_vowel_voiced: bool = False) -> list[FeatureVector]:
    rows = np.atleast_2d(rows)
    manner = np.argmax(rows[:, GROUP_SLICES["manner"]], axis=1)
    height = np.argmax(rows[:, GROUP_SLICES["height"]], axis=1)
    back = np.argmax(rows[:, GROUP_SLICES["backness"]], axis=1)
    place = np.argmax(rows[:, GROUP_SLICES["place"]], axis=1)
    voice = np.argmax(rows[:, GROUP_SLICES["voicing"]], axis=1)
    out = []
    for m, h, b, p, v in zip(manner.tolist(), height.tolist(), back.tolist(),
                             place.tolist(), voice.tolist()):
        if m == _SIL:
            out.append(SILENCE_VECTOR)
        elif m == _VOWEL:
            voicing = "voiced" if force_vowel_voiced else VOICING[v]
            out.append(FeatureVector("vowel", height=HEIGHTS[h], backness=BACKNESS[b],
                                     voicing=voicing))
        else:
            out.append(FeatureVector(MANNERS[m], place=PLACES[p], voicing=VOICING[v]))
    return out


def decode_frame(row, force_vowel_voiced: bool = False) -> FeatureVector:
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (NUM_DIMS,):
        raise ShapeMismatch(f"expected {NUM_DIMS} logits, got {row.shape}")
    return decode_rows(row[None, :], force_vowel_voiced)[0]


def decode_frames(logits: LogitMatrix, force_vowel_voiced: bool = False) -> list[FeatureVector]:
    return decode_rows(logits.values, force_vowel_voiced) if len(logits) else []


def segment_sums(values: np.ndarray, spans: Sequence[tuple[float, float]], fps: float):
    """Summed logit rows and member-frame counts for each (start, end) span."""
    T = values.shape[0]
    sums = np.zeros((len(spans), NUM_DIMS), dtype=np.float64)
    counts = np.zeros(len(spans), dtype=np.int64)
    for i, (start, end) in enumerate(spans):
        a, b = frame_span(start, end, fps, T)
        if b > a:
            # axis-0 reduction accumulates rows in index order
            sums[i] = values[a:b].sum(axis=0)
            counts[i] = b - a
    return sums, counts


def aggregate_and_decode(logits: LogitMatrix, segments, force_vowel_voiced: bool = False
                         ) -> list[SegmentPrediction]:
    """One gated prediction per non-silence reference segment.

    Segments with no member frame decode to silence; check ``zero_frames``.
    """
    segs = [s for s in segments if not s.is_silence]
    if segs and len(logits) == 0:
        raise EmptyLogits("no logit frames but reference segments are present")
    sums, counts = segment_sums(logits.values, [(s.start, s.end) for s in segs], logits.fps)
    vectors = decode_rows(sums, force_vowel_voiced) if segs else []
    out = []
    for seg, vec, n in zip(segs, vectors, counts.tolist()):
        if n == 0:
            vec = SILENCE_VECTOR
        out.append(SegmentPrediction(seg.start, seg.end, vec, n, seg.phone.symbol))
    return out


# -- file formats -----------------------------------------------------------

def to_float32_grid(values) -> np.ndarray:
    """Round to float32 precision, held as float64; both file formats store this."""
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def format_logits_csv(logits: LogitMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIM_NAMES)
    for row in np.asarray(logits.values, dtype=np.float32):
        # repr of the float32 value round-trips exactly
        w.writerow(repr(float(x)) for x in row)
    return buf.getvalue()


def parse_logits_csv(text: str, fps: float = DEFAULT_FPS, source: str = "<logits>") -> LogitMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != DIM_NAMES:
        raise FormatError(1, f"{source}: header must list the {NUM_DIMS} feature dimensions")
    data = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != NUM_DIMS:
            raise FormatError(lineno, f"{source}: expected {NUM_DIMS} values, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise FormatError(lineno, f"{source}: non-numeric value") from None
    arr = np.array(data, dtype=np.float64).reshape(-1, NUM_DIMS)
    if not np.all(np.isfinite(arr)):
        raise FormatError(0, f"{source}: non-finite logit")
    return LogitMatrix(to_float32_grid(arr), fps)


def pack_matrix(values: np.ndarray, extra: bytes = b"") -> bytes:
    values = np.ascontiguousarray(values, dtype="<f4")
    T, D = values.shape
    return MAGIC + struct.pack("<III", FORMAT_VERSION, T, D) + extra + values.tobytes()


def unpack_header(data: bytes, source: str = "<binary>") -> tuple[int, int, int]:
    """Return (T, D, offset of the byte after the fixed header)."""
    if len(data) < 16 or data[:4] != MAGIC:
        raise FormatError(1, f"{source}: missing PHQ2 magic")
    version, T, D = struct.unpack_from("<III", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(1, f"{source}: unsupported version {version}")
    return T, D, 16


def unpack_values(data: bytes, offset: int, T: int, D: int, source: str) -> np.ndarray:
    need = offset + 4 * T * D
    if len(data) != need:
        raise FormatError(1, f"{source}: expected {need} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", count=T * D, offset=offset).reshape(T, D)
    if not np.all(np.isfinite(arr)):
        raise FormatError(1, f"{source}: non-finite value")
    return arr.astype(np.float64)


def format_logits_binary(logits: LogitMatrix) -> bytes:
    return pack_matrix(logits.values)


def parse_logits_binary(data: bytes, fps: float = DEFAULT_FPS, source: str = "<logits>") -> LogitMatrix:
    T, D, off = unpack_header(data, source)
    if D != NUM_DIMS:
        raise FormatError(1, f"{source}: dimension count {D}, expected {NUM_DIMS}")
    return LogitMatrix(unpack_values(data, off, T, D, source), fps)


def load_logits(path, fps: float = DEFAULT_FPS) -> LogitMatrix:
    """Read either logit format; binary is recognised by its magic bytes."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == MAGIC:
        return parse_logits_binary(data, fps, str(path))
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError(1, f"{path}: neither PHQ2 binary nor UTF-8 CSV") from None
    return parse_logits_csv(text, fps, str(path))
