"""Segment-level binary scoring over the 21 non-silence feature dimensions.

Counts are corpus-level: per-utterance :class:`BinaryCounts` add exactly,
and rates are computed once from the totals.  A 0/0 precision, recall or
F1 is reported as 0 and the dimension is flagged as degenerate.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySubset, FormatError, LengthMismatch
from .featuremap import (
    DIM_GROUP, DIM_INDEX, DIM_NAMES, GROUP_SLICES, NONSILENCE_DIMS, NUM_DIMS, FeatureVector, to_dense,
)

PRESETS = {
    "all21": tuple(DIM_NAMES[i] for i in NONSILENCE_DIMS),
    "shared12": ("stop", "nasal", "rhotic", "fricative", "lateral", "vowel",
                 "labial", "alveolar", "velar", "postalveolar", "voiceless", "voiced"),
}

REPORT_GROUPS = ("manner", "height", "backness", "place", "voicing")
_PLACE = GROUP_SLICES["place"]


@dataclass
class BinaryCounts:
    tp: np.ndarray = field(default_factory=lambda: np.zeros(NUM_DIMS, dtype=np.int64))
    fp: np.ndarray = field(default_factory=lambda: np.zeros(NUM_DIMS, dtype=np.int64))
    fn: np.ndarray = field(default_factory=lambda: np.zeros(NUM_DIMS, dtype=np.int64))
    tn: np.ndarray = field(default_factory=lambda: np.zeros(NUM_DIMS, dtype=np.int64))
    n_segments: int = 0

    def __add__(self, other: "BinaryCounts") -> "BinaryCounts":
        return BinaryCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                            self.tn + other.tn, self.n_segments + other.n_segments)

    def counted(self) -> np.ndarray:
        return self.tp + self.fp + self.fn + self.tn


def count(refs: Sequence[FeatureVector], preds: Sequence[FeatureVector]) -> BinaryCounts:
    if len(refs) != len(preds):
        raise LengthMismatch(f"{len(refs)} references vs {len(preds)} predictions")
    c = BinaryCounts(n_segments=len(refs))
    if not refs:
        return c
    r = np.stack([to_dense(v) for v in refs]).astype(bool)
    p = np.stack([to_dense(v) for v in preds]).astype(bool)
    keep = np.ones_like(r)
    keep[:, 0] = False
    unspecified = np.array([v.place_unspecified for v in refs])
    keep[unspecified, _PLACE] = False
    c.tp = (r & p & keep).sum(axis=0).astype(np.int64)
    c.fp = (~r & p & keep).sum(axis=0).astype(np.int64)
    c.fn = (r & ~p & keep).sum(axis=0).astype(np.int64)
    c.tn = (~r & ~p & keep).sum(axis=0).astype(np.int64)
    return c


@dataclass(frozen=True)
class DimRates:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    degenerate: tuple  # names of dims with a 0/0 somewhere


def _safe_div(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    zero = den == 0
    out = np.divide(num, np.where(zero, 1, den), dtype=np.float64)
    return np.where(zero, 0.0, out), zero


def f1_per_dim(c: BinaryCounts) -> DimRates:
    precision, p0 = _safe_div(c.tp, c.tp + c.fp)
    recall, r0 = _safe_div(c.tp, c.tp + c.fn)
    f1, f0 = _safe_div(2 * precision * recall, precision + recall)
    bad = p0 | r0 | f0
    bad[0] = False
    return DimRates(precision, recall, f1, tuple(DIM_NAMES[i] for i in np.flatnonzero(bad)))


def resolve_dims(dims) -> tuple[str, ...]:
    """Preset name, comma-separated string, or iterable of names/indices."""
    if dims is None:
        dims = "all21"
    if isinstance(dims, str):
        dims = PRESETS[dims] if dims in PRESETS else [d.strip() for d in dims.split(",") if d.strip()]
    names = []
    for d in dims:
        name = DIM_NAMES[d] if isinstance(d, (int, np.integer)) else d
        if name not in DIM_INDEX:
            raise EmptySubset(f"unknown dimension {name!r}")
        if name == "silence":
            raise EmptySubset("silence is not a scored dimension")
        if name not in names:
            names.append(name)
    if not names:
        raise EmptySubset("dimension subset is empty")
    return tuple(names)


def macro_f1(c: BinaryCounts, dims=None) -> float:
    names = resolve_dims(dims)
    f1 = f1_per_dim(c).f1
    return float(np.mean([f1[DIM_INDEX[n]] for n in names]))


def group_f1(rates: DimRates) -> dict[str, float]:
    out = {}
    for g in REPORT_GROUPS:
        idx = [i for i in range(NUM_DIMS)[GROUP_SLICES[g]] if i != 0]  # silence is never scored
        out[g] = float(np.mean(rates.f1[idx]))
    out["vowel"] = (out["height"] + out["backness"]) / 2
    return out


@dataclass
class EvalReport:
    counts: BinaryCounts
    dims: tuple
    dims_label: str
    rates: DimRates | None
    groups: dict | None
    macro: float | None
    per: float | None = None
    flags: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.counts.n_segments == 0


def report(c: BinaryCounts, per: float | None = None, dims=None, zero_frame_segments: int = 0,
           flags: Iterable[str] = ()) -> EvalReport:
    names = resolve_dims(dims)
    label = next((k for k, v in PRESETS.items() if v == names), "custom")
    flags = list(flags)
    if zero_frame_segments:
        flags.append(f"zero_frame_segments:{zero_frame_segments}")
    if c.n_segments == 0:
        flags.append("empty_evaluation")
        return EvalReport(c, names, label, None, None, None, per, flags)
    rates = f1_per_dim(c)
    if rates.degenerate:
        flags.append("degenerate:" + "|".join(rates.degenerate))
    skipped = [DIM_NAMES[i] for i in NONSILENCE_DIMS if c.counted()[i] < c.n_segments]
    if skipped:
        flags.append("partially_counted:" + "|".join(skipped))
    macro = float(np.mean([rates.f1[DIM_INDEX[n]] for n in names]))
    return EvalReport(c, names, label, rates, group_f1(rates), macro, per, flags)


def _r(x) -> str:
    return "null" if x is None else f"{x:.4f}"


REPORT_HEADER = "# phonological feature evaluation report v1"


def format_report(rep: EvalReport) -> str:
    """key=value text; see README for the field list."""
    lines = [REPORT_HEADER, f"segments={rep.counts.n_segments}", f"dims={rep.dims_label}"]
    if rep.dims_label == "custom":
        lines.append("dim_list=" + ",".join(rep.dims))
    lines.append(f"per={_r(rep.per)}")
    lines.append(f"avg={_r(rep.macro)}")
    for g in ("manner", "vowel", "height", "backness", "place", "voicing"):
        lines.append(f"group.{g}={_r(rep.groups[g] if rep.groups else None)}")
    lines.append("# dim.<name>=tp fp fn tn precision recall f1")
    c = rep.counts
    for i in NONSILENCE_DIMS:
        if rep.rates is None:
            p = r = f = None
        else:
            p, r, f = rep.rates.precision[i], rep.rates.recall[i], rep.rates.f1[i]
        lines.append(f"dim.{DIM_NAMES[i]}={c.tp[i]} {c.fp[i]} {c.fn[i]} {c.tn[i]} "
                     f"{_r(p)} {_r(r)} {_r(f)}")
    lines.append("flags=" + ",".join(rep.flags))
    return "\n".join(lines) + "\n"


CSV_COLUMNS = (("name", "segments", "per", "manner", "vowel", "place", "voicing", "avg")
               + tuple(f"f1_{DIM_NAMES[i]}" for i in NONSILENCE_DIMS))


def report_csv_row(rep: EvalReport, name: str) -> list[str]:
    g = rep.groups or {}
    row = [name, str(rep.counts.n_segments), _r(rep.per)]
    row += [_r(g.get(k)) for k in ("manner", "vowel", "place", "voicing")]
    row.append(_r(rep.macro))
    row += [_r(None if rep.rates is None else rep.rates.f1[i]) for i in NONSILENCE_DIMS]
    return row


def format_report_csv(reports: Sequence[tuple[str, EvalReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for name, rep in reports:
        w.writerow(report_csv_row(rep, name))
    return buf.getvalue()


def parse_report(text: str) -> dict:
    """Read a report back into plain values (rates as floats or None)."""
    out: dict = {"dims": {}}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(lineno, f"expected key=value, got {line!r}")
        if key.startswith("dim."):
            fields = value.split()
            if len(fields) != 7:
                raise FormatError(lineno, "dim line needs 7 fields")
            tp, fp, fn, tn = (int(x) for x in fields[:4])
            p, r, f = (None if x == "null" else float(x) for x in fields[4:])
            out["dims"][key[4:]] = {"tp": tp, "fp": fp, "fn": fn, "tn": tn,
                                    "precision": p, "recall": r, "f1": f}
        elif key in ("segments",):
            out[key] = int(value)
        elif key == "flags":
            out[key] = [f for f in value.split(",") if f]
        elif key in ("dims", "dim_list"):
            out[key if key == "dim_list" else "dims_label"] = value
        else:
            out[key] = None if value == "null" else float(value)
    return out
