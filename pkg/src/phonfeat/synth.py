"""Seeded synthetic corpora with exact ground truth.

Randomness comes from xoshiro256** seeded through splitmix64, with uniform
doubles taken from the top 53 bits and normals from Box-Muller, so every
draw is reproducible from the seed alone.  Each generator draws from its
own stream (seed mixed with a fixed stream tag) so adding draws to one
never shifts another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alignment import DEFAULT_FPS, PhoneSegment, frame_span, num_frames, segments_to_frames
from .decode import LogitMatrix, to_float32_grid
from .featuremap import SILENCE, FeatureTable, default_table, map_phone
from .phoneset import CanonicalPhone

_MASK = (1 << 64) - 1

STREAM_SEGMENTS = 1
STREAM_LOGITS = 2
STREAM_FEATURES = 3


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** 1.0."""

    def __init__(self, seed: int, stream: int = 0):
        sm = (seed ^ (stream * 0xD1B54A32D192ED03)) & _MASK
        s = []
        for _ in range(4):
            sm, z = splitmix64(sm)
            s.append(z)
        self.s = s
        self._spare = None

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, n: int) -> int:
        """Integer in [0, n) by multiply-shift on the top 53 bits."""
        return int(self.uniform() * n)

    def normal(self) -> float:
        # Box-Muller; the sine half is cached for the next call
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1
    inventory: tuple = ()           # empty means every non-silence table phone
    n_utts: int = 10
    phones_per_utt: tuple = (5, 15)
    dur_range: tuple = (0.04, 0.20)
    gap_prob: float = 0.1
    gap_range: tuple = (0.02, 0.10)
    fps: float = DEFAULT_FPS
    logit_scale: float = 10.0
    logit_noise: float = 0.0
    feat_dim: int = 0                # 0 means one dimension per cluster
    separation: float = 10.0
    feat_noise: float = 0.1

    def validate(self) -> "SynthConfig":
        if self.n_utts < 1 or self.fps <= 0:
            raise ValueError("n_utts and fps must be positive")
        lo, hi = self.phones_per_utt
        if not 1 <= lo <= hi:
            raise ValueError("phones_per_utt must satisfy 1 <= min <= max")
        for name in ("dur_range", "gap_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < min <= max")
        if not 0 <= self.gap_prob <= 1:
            raise ValueError("gap_prob must lie in [0, 1]")
        if self.logit_noise < 0 or self.feat_noise < 0 or self.logit_scale <= 0:
            raise ValueError("noise levels must be >= 0 and logit_scale > 0")
        return self


def resolve_inventory(cfg: SynthConfig, table: FeatureTable) -> tuple:
    inv = cfg.inventory or tuple(s for s in table.symbols() if s != SILENCE)
    if not inv:
        raise ValueError("phone inventory is empty")
    for sym in inv:
        map_phone(table, sym)
    return tuple(inv)


def _frames(rng: Xoshiro256, lo: float, hi: float, fps: float) -> int:
    d = lo + (hi - lo) * rng.uniform()
    return max(1, round(d * fps))


def gen_segments(cfg: SynthConfig, table: FeatureTable | None = None) -> list[list[PhoneSegment]]:
    """Contiguous segment lists; gaps appear as explicit silence segments."""
    cfg.validate()
    table = table or default_table()
    inv = resolve_inventory(cfg, table)
    rng = Xoshiro256(cfg.seed, STREAM_SEGMENTS)
    utts = []
    for _ in range(cfg.n_utts):
        lo, hi = cfg.phones_per_utt
        n_phones = lo + rng.randint(hi - lo + 1)
        frame = 0
        segs = []
        for _ in range(n_phones):
            if cfg.gap_prob > 0 and rng.uniform() < cfg.gap_prob:
                g = _frames(rng, *cfg.gap_range, cfg.fps)
                segs.append(PhoneSegment(frame / cfg.fps, (frame + g) / cfg.fps,
                                         CanonicalPhone(SILENCE)))
                frame += g
            sym = inv[rng.randint(len(inv))]
            k = _frames(rng, *cfg.dur_range, cfg.fps)
            segs.append(PhoneSegment(frame / cfg.fps, (frame + k) / cfg.fps, CanonicalPhone(sym)))
            frame += k
        utts.append(segs)
    return utts


def gen_logits(segments, cfg: SynthConfig, table: FeatureTable | None = None,
               utt_index: int = 0) -> LogitMatrix:
    """scale * dense(features of the frame's phone) + N(0, noise^2) per cell."""
    table = table or default_table()
    frames = segments_to_frames(segments, table, cfg.fps)
    clean = cfg.logit_scale * frames.dense().astype(np.float64)
    if cfg.logit_noise > 0:
        rng = Xoshiro256(cfg.seed + utt_index * 0x10001, STREAM_LOGITS)
        clean = clean + cfg.logit_noise * rng.normals(clean.size).reshape(clean.shape)
    return LogitMatrix(to_float32_grid(clean), cfg.fps)


def cluster_index(cfg: SynthConfig, table: FeatureTable | None = None) -> dict[str, int]:
    """Silence is cluster 0, inventory phones follow in inventory order."""
    table = table or default_table()
    inv = resolve_inventory(cfg, table)
    return {sym: i for i, sym in enumerate((SILENCE,) + tuple(s for s in inv if s != SILENCE))}


def feature_dim(cfg: SynthConfig, table: FeatureTable | None = None) -> int:
    n = len(cluster_index(cfg, table))
    if cfg.feat_dim and cfg.feat_dim < n:
        raise ValueError(f"feat_dim {cfg.feat_dim} < number of clusters {n}")
    return cfg.feat_dim or n


def gen_training_features(segments, cfg: SynthConfig, table: FeatureTable | None = None,
                          utt_index: int = 0) -> np.ndarray:
    """Cluster center (separation * unit vector) plus isotropic noise per frame."""
    table = table or default_table()
    index = cluster_index(cfg, table)
    D = feature_dim(cfg, table)
    T = num_frames(segments[-1].end if segments else 0.0, cfg.fps)
    ids = np.zeros(T, dtype=np.int64)
    for seg in segments:
        if seg.is_silence:
            continue
        a, b = frame_span(seg.start, seg.end, cfg.fps, T)
        ids[a:b] = index[seg.phone.symbol]
    x = np.zeros((T, D), dtype=np.float64)
    x[np.arange(T), ids] = cfg.separation
    if cfg.feat_noise > 0:
        rng = Xoshiro256(cfg.seed + utt_index * 0x10001, STREAM_FEATURES)
        x = x + cfg.feat_noise * rng.normals(x.size).reshape(x.shape)
    return x


@dataclass
class SynthUtterance:
    uid: str
    segments: list
    duration: float
    logits: LogitMatrix
    features: np.ndarray | None = None


def gen_corpus(cfg: SynthConfig, table: FeatureTable | None = None,
               with_features: bool = True) -> list[SynthUtterance]:
    table = table or default_table()
    out = []
    for i, segs in enumerate(gen_segments(cfg, table)):
        feats = gen_training_features(segs, cfg, table, i) if with_features else None
        out.append(SynthUtterance(f"utt{i:04d}", segs, segs[-1].end,
                                  gen_logits(segs, cfg, table, i), feats))
    return out
