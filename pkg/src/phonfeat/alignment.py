"""Praat TextGrid reading/writing and frame-level label generation.

Only the long ("ooTextFile" with ``key = value`` lines) TextGrid format is
read.  Frame ``t`` at rate ``fps`` is labeled by the segment containing its
center ``(t + 0.5) / fps``; a center exactly on a boundary belongs to the
later segment.
"""

from __future__ import annotations

import codecs
import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, InputError, MissingTier
from .featuremap import (
    DIM_NAMES, NUM_DIMS, SILENCE, SILENCE_VECTOR, FeatureTable, FeatureVector,
    default_table, from_dense, map_phone, to_dense,
)
from .phoneset import DEFAULT_RULESET, CanonicalPhone, RuleSet, canonicalize_label

DEFAULT_FPS = 50.0

# tolerance, in frame units, for float noise in boundary/center comparisons
_FRAME_EPS = 1e-9


@dataclass(frozen=True)
class PhoneSegment:
    start: float
    end: float
    phone: CanonicalPhone

    @property
    def is_silence(self) -> bool:
        return self.phone.is_silence


@dataclass(frozen=True)
class Utterance:
    segments: list
    duration: float
    xmin: float = 0.0


@dataclass(frozen=True)
class FrameLabelSeq:
    fps: float
    labels: tuple

    def __len__(self):
        return len(self.labels)

    def dense(self) -> np.ndarray:
        if not self.labels:
            return np.zeros((0, NUM_DIMS), dtype=np.int8)
        return np.stack([to_dense(v) for v in self.labels])


def num_frames(duration: float, fps: float = DEFAULT_FPS) -> int:
    return max(0, math.floor(duration * fps + _FRAME_EPS))


def frame_span(start: float, end: float, fps: float, n_frames: int | None = None) -> tuple[int, int]:
    """Half-open range of frames whose centers fall in ``[start, end)``."""
    a = math.ceil(start * fps - 0.5 - _FRAME_EPS)
    b = math.ceil(end * fps - 0.5 - _FRAME_EPS)
    a = max(a, 0)
    if n_frames is not None:
        b = min(b, n_frames)
    return a, max(a, b)


def segments_to_frames(segments: Sequence[PhoneSegment], table: FeatureTable | None = None,
                       fps: float = DEFAULT_FPS, duration: float | None = None) -> FrameLabelSeq:
    if fps <= 0:
        raise ValueError("fps must be positive")
    if table is None:
        table = default_table()
    if duration is None:
        duration = segments[-1].end if segments else 0.0
    n = num_frames(duration, fps)
    labels = [SILENCE_VECTOR] * n
    for seg in segments:
        if seg.is_silence:
            continue
        a, b = frame_span(seg.start, seg.end, fps, n)
        vec = map_phone(table, seg.phone)
        labels[a:b] = [vec] * (b - a)
    return FrameLabelSeq(fps, tuple(labels))


def frames_to_segments(frames: FrameLabelSeq) -> list[tuple[float, float, FeatureVector]]:
    out = []
    labels = frames.labels
    t = 0
    while t < len(labels):
        u = t + 1
        while u < len(labels) and labels[u] == labels[t]:
            u += 1
        out.append((t / frames.fps, u / frames.fps, labels[t]))
        t = u
    return out


# -- frame label CSV --------------------------------------------------------

def format_frame_csv(frames: FrameLabelSeq) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIM_NAMES)
    for row in frames.dense():
        w.writerow(int(x) for x in row)
    return buf.getvalue()


def parse_frame_csv(text: str, fps: float = DEFAULT_FPS, source: str = "<labels>") -> FrameLabelSeq:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != DIM_NAMES:
        raise FormatError(1, f"{source}: header must list the {NUM_DIMS} feature dimensions")
    labels = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        try:
            dense = np.array([int(c) for c in row])
        except ValueError:
            raise FormatError(lineno, f"{source}: non-integer label") from None
        try:
            labels.append(from_dense(dense))
        except InputError as exc:
            raise FormatError(lineno, f"{source}: {exc}") from None
    return FrameLabelSeq(fps, tuple(labels))


# -- TextGrid ---------------------------------------------------------------

@dataclass
class Interval:
    xmin: float
    xmax: float
    text: str
    line: int = 0


@dataclass
class IntervalTier:
    name: str
    xmin: float
    xmax: float
    intervals: list = field(default_factory=list)


@dataclass
class TextGrid:
    xmin: float
    xmax: float
    tiers: list = field(default_factory=list)

    def interval_tier(self, name: str) -> IntervalTier:
        for tier in self.tiers:
            if isinstance(tier, IntervalTier) and tier.name == name:
                return tier
        raise MissingTier(name)


def decode_bytes(data: bytes) -> str:
    if data.startswith(codecs.BOM_UTF16_BE) or data.startswith(codecs.BOM_UTF16_LE):
        return data.decode("utf-16")
    if data.startswith(codecs.BOM_UTF8):
        data = data[len(codecs.BOM_UTF8):]
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(1, f"not UTF-8 or BOM-marked UTF-16: {exc}") from None


_KV = re.compile(r'^([A-Za-z]+)\s*=\s*(.*?)\s*$')
_HEADER_KV = re.compile(r'^(File|Object) (?:type|class)\s*=\s*(.*?)\s*$')
_TIERS = re.compile(r'^(tiers\?)\s*(.*?)\s*$')
_ITEM = re.compile(r'^(item|intervals|points)\s*\[\s*(\d*)\s*\]\s*:?\s*$')
_SIZE = re.compile(r'^(intervals|points)\s*:\s*size\s*=\s*(\d+)\s*$')


class _Tokens:
    """Line tokens of a long-format TextGrid: (lineno, kind, key, value)."""

    def __init__(self, text: str):
        self.items = []
        lines = text.splitlines()
        i = 0
        while i < len(lines):
            lineno = i + 1
            line = lines[i].strip()
            i += 1
            if not line:
                continue
            m = _SIZE.match(line)
            if m:
                self.items.append((lineno, "size", m.group(1), m.group(2)))
                continue
            m = _ITEM.match(line)
            if m:
                self.items.append((lineno, "item", m.group(1), m.group(2)))
                continue
            m = _KV.match(line) or _HEADER_KV.match(line) or _TIERS.match(line)
            if not m:
                raise FormatError(lineno, f"cannot parse {line!r}")
            key, value = m.group(1), m.group(2)
            if value.startswith('"'):
                # strings may span lines; "" is an escaped quote
                while not _closed_string(value):
                    if i >= len(lines):
                        raise FormatError(lineno, "unterminated string")
                    value += "\n" + lines[i]
                    i += 1
                value = value.rstrip()
            self.items.append((lineno, "kv", key, value))
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else None

    def next(self, kind, key=None):
        tok = self.peek()
        if tok is None:
            last = self.items[-1][0] if self.items else 1
            raise FormatError(last, f"unexpected end of file, expected {key or kind}")
        lineno, k, name, _ = tok
        if k != kind or (key is not None and name != key):
            raise FormatError(lineno, f"expected {key or kind}, found {name!r}")
        self.pos += 1
        return tok

    def number(self, key):
        lineno, _, _, value = self.next("kv", key)
        try:
            return float(value)
        except ValueError:
            raise FormatError(lineno, f"{key}: not a number: {value!r}") from None

    def string(self, key):
        lineno, _, _, value = self.next("kv", key)
        if not (value.startswith('"') and value.endswith('"') and len(value) >= 2):
            raise FormatError(lineno, f"{key}: expected a quoted string")
        return value[1:-1].replace('""', '"')

    def count(self, kind):
        lineno, _, _, value = self.next("size", kind)
        return int(value)


def _closed_string(value: str) -> bool:
    body = value[1:].replace('""', "")
    return '"' in body


def read_textgrid(data) -> TextGrid:
    """Parse a long-format TextGrid from ``str`` or raw ``bytes``."""
    text = decode_bytes(data) if isinstance(data, (bytes, bytearray)) else data
    text = text.lstrip("\ufeff")
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2 or not lines[0].startswith("File type") or "ooTextFile" not in lines[0]:
        raise FormatError(1, "not a Praat text file (missing 'File type = \"ooTextFile\"')")
    if "TextGrid" not in lines[1]:
        raise FormatError(2, "object class is not TextGrid")
    if not any(re.match(r"^xmin\s*=", ln) for ln in lines):
        raise FormatError(3, "short TextGrid format is not supported; save as long text")

    toks = _Tokens(text)
    toks.next("kv", "File")
    toks.next("kv", "Object")
    xmin = toks.number("xmin")
    xmax = toks.number("xmax")
    lineno, _, _, exists = toks.next("kv", "tiers?")
    tg = TextGrid(xmin, xmax)
    if exists != "<exists>":
        return tg
    size = int(toks.number("size"))
    toks.next("item", "item")
    for _ in range(size):
        toks.next("item", "item")
        cls = toks.string("class")
        name = toks.string("name")
        txmin = toks.number("xmin")
        txmax = toks.number("xmax")
        if cls == "IntervalTier":
            tier = IntervalTier(name, txmin, txmax)
            for _ in range(toks.count("intervals")):
                ln, *_ = toks.next("item", "intervals")
                a = toks.number("xmin")
                b = toks.number("xmax")
                label = toks.string("text")
                if b < a:
                    raise FormatError(ln, f"interval ends before it starts ({a} > {b})")
                tier.intervals.append(Interval(a, b, label, ln))
            tg.tiers.append(tier)
        elif cls == "TextTier":
            for _ in range(toks.count("points")):
                toks.next("item", "points")
                toks.number("number")
                toks.string("mark")
        else:
            ln = toks.items[toks.pos - 1][0]
            raise FormatError(ln, f"unknown tier class {cls!r}")
    return tg


def read_alignment(data, tier_name: str = "phones", lang: str = "generic",
                   table: FeatureTable | None = None, rules: RuleSet = DEFAULT_RULESET,
                   unknown_as_silence: bool = False) -> Utterance:
    """TextGrid to canonicalized segments plus the utterance duration."""
    tg = read_textgrid(data)
    tier = tg.interval_tier(tier_name)
    segments = []
    prev_end = tier.xmin
    for iv in tier.intervals:
        if iv.xmax <= iv.xmin:
            continue  # zero-length intervals carry no frames
        if iv.xmin < prev_end - 1e-9:
            raise FormatError(iv.line, f"tier {tier_name!r}: overlapping or unsorted intervals at {iv.xmin}")
        phone = canonicalize_label(iv.text, lang, table, rules, unknown_as_silence)
        segments.append(PhoneSegment(iv.xmin, iv.xmax, phone))
        prev_end = iv.xmax
    return Utterance(segments, duration=max(tg.xmax, tier.xmax), xmin=tg.xmin)


def parse_textgrid(data, tier_name: str = "phones", lang: str = "generic",
                   table: FeatureTable | None = None, rules: RuleSet = DEFAULT_RULESET,
                   unknown_as_silence: bool = False) -> list[PhoneSegment]:
    return read_alignment(data, tier_name, lang, table, rules, unknown_as_silence).segments


def _fmt_time(x: float) -> str:
    return repr(float(x))


def _quote(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def write_textgrid(segments: Iterable[PhoneSegment], duration: float | None = None,
                   tier_name: str = "phones") -> str:
    """Long-format TextGrid with one interval tier; gaps become empty intervals."""
    segments = list(segments)
    if duration is None:
        duration = segments[-1].end if segments else 0.0
    intervals = []
    t = 0.0
    for seg in segments:
        if seg.start > t:
            intervals.append((t, seg.start, ""))
        label = "" if seg.is_silence else seg.phone.symbol
        intervals.append((seg.start, seg.end, label))
        t = seg.end
    if duration > t or not intervals:
        intervals.append((t, duration, ""))

    out = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        f"xmin = {_fmt_time(0.0)} ",
        f"xmax = {_fmt_time(duration)} ",
        "tiers? <exists> ",
        "size = 1 ",
        "item []: ",
        "    item [1]:",
        '        class = "IntervalTier" ',
        f"        name = {_quote(tier_name)} ",
        f"        xmin = {_fmt_time(0.0)} ",
        f"        xmax = {_fmt_time(duration)} ",
        f"        intervals: size = {len(intervals)} ",
    ]
    for k, (a, b, label) in enumerate(intervals, 1):
        out += [
            f"        intervals [{k}]:",
            f"            xmin = {_fmt_time(a)} ",
            f"            xmax = {_fmt_time(b)} ",
            f"            text = {_quote(label)} ",
        ]
    return "\n".join(out) + "\n"
