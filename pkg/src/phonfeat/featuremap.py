"""The 22-dimensional structured phonological feature space.

Dimension order is fixed::

    0-8    manner    silence stop nasal rhotic fricative affricate
                     approximant lateral vowel
    9-11   height    high mid low
    12-14  backness  front central back
    15-19  place     labial alveolar velar palatal postalveolar
    20-21  voicing   voiceless voiced

A :class:`FeatureVector` holds one class name per group, or ``None`` where
the group is gated off.  For consonants a ``None`` place means *unspecified*
(glottals), which encodes to an all-zero place block.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import InvariantViolation, ParseError, UnknownSymbol

MANNERS = ("silence", "stop", "nasal", "rhotic", "fricative", "affricate",
           "approximant", "lateral", "vowel")
HEIGHTS = ("high", "mid", "low")
BACKNESS = ("front", "central", "back")
PLACES = ("labial", "alveolar", "velar", "palatal", "postalveolar")
VOICING = ("voiceless", "voiced")

GROUPS = {
    "manner": MANNERS,
    "height": HEIGHTS,
    "backness": BACKNESS,
    "place": PLACES,
    "voicing": VOICING,
}
GROUP_NAMES = tuple(GROUPS)

GROUP_SLICES = {}
_offset = 0
for _g, _classes in GROUPS.items():
    GROUP_SLICES[_g] = slice(_offset, _offset + len(_classes))
    _offset += len(_classes)
NUM_DIMS = _offset  # 22

DIM_NAMES = tuple(c for classes in GROUPS.values() for c in classes)
DIM_INDEX = {name: i for i, name in enumerate(DIM_NAMES)}
DIM_GROUP = tuple(g for g, classes in GROUPS.items() for _ in classes)
NONSILENCE_DIMS = tuple(range(1, NUM_DIMS))

CONSONANT_MANNERS = frozenset(MANNERS[1:8])
SILENCE = "sil"

DEFAULT_TABLE_ENV = "PHQ2_TABLE"


@dataclass(frozen=True)
class FeatureDim:
    index: int
    group: str
    name: str


FEATURE_DIMS = tuple(FeatureDim(i, DIM_GROUP[i], DIM_NAMES[i]) for i in range(NUM_DIMS))


@dataclass(frozen=True)
class GatingMask:
    height: bool
    backness: bool
    place: bool
    voicing: bool

    @property
    def active_groups(self) -> frozenset:
        return frozenset(g for g in ("height", "backness", "place", "voicing")
                         if getattr(self, g))


def gating_mask(manner: str) -> GatingMask:
    """Which non-manner groups a manner class activates."""
    if manner == "vowel":
        return GatingMask(height=True, backness=True, place=False, voicing=True)
    if manner in CONSONANT_MANNERS:
        return GatingMask(height=False, backness=False, place=True, voicing=True)
    if manner == "silence":
        return GatingMask(False, False, False, False)
    raise ValueError(f"not a manner class: {manner!r}")


@dataclass(frozen=True)
class FeatureVector:
    manner: str
    height: str | None = None
    backness: str | None = None
    place: str | None = None
    voicing: str | None = None

    @property
    def is_silence(self) -> bool:
        return self.manner == "silence"

    @property
    def place_unspecified(self) -> bool:
        return self.manner in CONSONANT_MANNERS and self.place is None

    def validate(self, phone: str = "<vector>") -> "FeatureVector":
        """Raise InvariantViolation unless the gating invariants hold."""
        if self.manner not in MANNERS:
            raise InvariantViolation(phone, f"unknown manner {self.manner!r}")
        for group in ("height", "backness", "place", "voicing"):
            value = getattr(self, group)
            if value is not None and value not in GROUPS[group]:
                raise InvariantViolation(phone, f"unknown {group} {value!r}")
        mask = gating_mask(self.manner)
        for group in ("height", "backness", "voicing"):
            active = getattr(self, group) is not None
            if active != getattr(mask, group):
                state = "missing" if getattr(mask, group) else "set"
                raise InvariantViolation(
                    phone, f"{group} {state} for manner {self.manner}")
        if self.place is not None and not mask.place:
            raise InvariantViolation(phone, f"place set for manner {self.manner}")
        return self


SILENCE_VECTOR = FeatureVector("silence")


def to_dense(v: FeatureVector) -> np.ndarray:
    out = np.zeros(NUM_DIMS, dtype=np.int8)
    out[DIM_INDEX[v.manner]] = 1
    for group in ("height", "backness", "place", "voicing"):
        value = getattr(v, group)
        if value is not None:
            out[GROUP_SLICES[group].start + GROUPS[group].index(value)] = 1
    return out


def from_dense(dense) -> FeatureVector:
    """Inverse of :func:`to_dense`; raises InvariantViolation on illegal input."""
    dense = np.asarray(dense)
    if dense.shape != (NUM_DIMS,):
        raise InvariantViolation("<dense>", f"expected {NUM_DIMS} values, got {dense.shape}")
    if not np.all((dense == 0) | (dense == 1)):
        raise InvariantViolation("<dense>", "values must be 0 or 1")
    picked = {}
    for group, sl in GROUP_SLICES.items():
        hot = np.flatnonzero(dense[sl])
        if len(hot) > 1:
            raise InvariantViolation("<dense>", f"several {group} classes active")
        picked[group] = GROUPS[group][hot[0]] if len(hot) else None
    if picked["manner"] is None:
        raise InvariantViolation("<dense>", "no manner class active")
    return FeatureVector(**picked).validate("<dense>")


def all_valid_vectors() -> Iterator[FeatureVector]:
    """Enumerate every legal FeatureVector (103 of them)."""
    yield SILENCE_VECTOR
    for h in HEIGHTS:
        for b in BACKNESS:
            for v in VOICING:
                yield FeatureVector("vowel", height=h, backness=b, voicing=v)
    for m in MANNERS[1:8]:
        for p in (None,) + PLACES:
            for v in VOICING:
                yield FeatureVector(m, place=p, voicing=v)


@dataclass(frozen=True)
class FeatureTable:
    entries: Mapping[str, FeatureVector]
    version: str

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def symbols(self) -> list[str]:
        return list(self.entries)


def map_phone(table: FeatureTable, phone) -> FeatureVector:
    """Exact lookup of a canonical phone (CanonicalPhone or plain symbol)."""
    symbol = getattr(phone, "symbol", phone)
    try:
        return table.entries[symbol]
    except KeyError:
        raise UnknownSymbol(symbol, "not in feature table") from None


_HEADER = ("phone", "manner", "height", "backness", "place", "voicing")


def parse_table(text: str, source: str = "<table>") -> FeatureTable:
    entries: dict[str, FeatureVector] = {}
    version = None
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            if key.strip() == "version":
                version = value.strip()
            continue
        cells = line.rstrip("\r").split("\t")
        if not header_seen:
            if tuple(c.strip() for c in cells) != _HEADER:
                raise ParseError(lineno, f"{source}: expected header {' '.join(_HEADER)}")
            header_seen = True
            continue
        if len(cells) != len(_HEADER):
            raise ParseError(lineno, f"{source}: expected {len(_HEADER)} columns, got {len(cells)}")
        phone, manner, *rest = (c.strip() for c in cells)
        if not phone:
            raise ParseError(lineno, f"{source}: empty phone")
        if phone in entries:
            raise ParseError(lineno, f"{source}: duplicate phone {phone!r}")
        values = [None if c in ("-", "unspecified") else c for c in rest]
        if rest[2] == "unspecified" and manner not in CONSONANT_MANNERS:
            raise InvariantViolation(phone, "only consonants may have unspecified place")
        vec = FeatureVector(manner, *values).validate(phone)
        if manner == "vowel" and vec.voicing != "voiced":
            raise InvariantViolation(phone, "vowels must be voiced")
        entries[phone] = vec
    if not header_seen:
        raise ParseError(1, f"{source}: missing header")
    if SILENCE not in entries:
        raise InvariantViolation(SILENCE, "table lacks the silence symbol")
    if entries[SILENCE] != SILENCE_VECTOR:
        raise InvariantViolation(SILENCE, "silence must map to the silence vector")
    if version is None:
        version = "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return FeatureTable(entries=dict(entries), version=version)


def load_table(path) -> FeatureTable:
    path = Path(path)
    return parse_table(path.read_text(encoding="utf-8"), source=str(path))


@lru_cache(maxsize=None)
def _bundled_table() -> FeatureTable:
    text = resources.files("phonfeat").joinpath("data/features.tsv").read_text(encoding="utf-8")
    return parse_table(text, source="features.tsv")


def default_table() -> FeatureTable:
    """The bundled table, or the file named by $PHQ2_TABLE when set."""
    override = os.environ.get(DEFAULT_TABLE_ENV)
    if override:
        return load_table(override)
    return _bundled_table()
