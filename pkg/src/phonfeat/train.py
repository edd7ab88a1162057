"""Small multi-head frame classifier trained with manner-masked losses.

A single tanh hidden layer stands in for the acoustic encoder.  Five linear
heads (manner 9, height 3, backness 3, place 5, voicing 2) write into the
22 logit columns in canonical order.  Each head's loss is a class-weighted,
label-smoothed cross-entropy averaged over the frames where that head is
active for the reference label; head losses are summed.  Everything runs
in float64.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .alignment import FrameLabelSeq, frames_to_segments
from .decode import LogitMatrix, decode_rows, segment_sums
from .errors import EmptyCorpus, FormatError, NonFiniteGradient, ShapeMismatch
from .featuremap import GROUP_SLICES, GROUPS, NUM_DIMS, FeatureVector, all_valid_vectors
from .kvconfig import build, format_config, parse_config
from .metrics import count, macro_f1

HEADS = tuple((g, len(c)) for g, c in GROUPS.items())
MODEL_MAGIC = b"PHQ2M"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.01
    clip_norm: float = 0.5
    label_smoothing: float = 0.05
    batch_size: int = 16
    max_epochs: int = 40
    patience: int = 5
    seed: int = 0
    hidden: int = 64
    class_weighting: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> "TrainConfig":
        for name in ("lr", "clip_norm", "batch_size", "max_epochs", "hidden", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0 or self.patience < 0:
            raise ValueError("weight_decay and patience must be non-negative")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        return self


@dataclass
class ModelParams:
    arrays: dict
    input_dim: int
    hidden: int

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()}, self.input_dim, self.hidden)

    def names(self) -> list[str]:
        return list(self.arrays)


def param_shapes(input_dim: int, hidden: int) -> dict[str, tuple]:
    shapes = {"trunk.weight": (input_dim, hidden), "trunk.bias": (hidden,)}
    for g, k in HEADS:
        shapes[f"head.{g}.weight"] = (hidden, k)
        shapes[f"head.{g}.bias"] = (k,)
    return shapes


def init_params(input_dim: int, hidden: int = 64, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(input_dim, hidden).items():
        if name.endswith(".bias"):
            arrays[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(arrays, input_dim, hidden)


def _forward(params: ModelParams, x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeMismatch(f"expected T x {params.input_dim} features, got {x.shape}")
    a = params.arrays
    h = np.tanh(x @ a["trunk.weight"] + a["trunk.bias"])
    logits = np.concatenate([h @ a[f"head.{g}.weight"] + a[f"head.{g}.bias"] for g, _ in HEADS],
                            axis=1)
    return logits, h


def forward(params: ModelParams, x: np.ndarray, fps: float = 50.0) -> LogitMatrix:
    return LogitMatrix(_forward(params, x)[0], fps)


def _backward(params: ModelParams, x: np.ndarray, h: np.ndarray, dlogits: np.ndarray) -> dict:
    a = params.arrays
    grads = {}
    dh = np.zeros_like(h)
    for g, _ in HEADS:
        dz = dlogits[:, GROUP_SLICES[g]]
        grads[f"head.{g}.weight"] = h.T @ dz
        grads[f"head.{g}.bias"] = dz.sum(axis=0)
        dh += dz @ a[f"head.{g}.weight"].T
    da = dh * (1.0 - h * h)
    grads["trunk.weight"] = np.asarray(x, dtype=np.float64).T @ da
    grads["trunk.bias"] = da.sum(axis=0)
    return {name: grads[name] for name in a}


# -- targets and loss -------------------------------------------------------

def label_targets(labels) -> dict[str, np.ndarray]:
    """Class index per frame and head, -1 where the head is masked.

    A group that is inactive (or, for place, unspecified) in the reference
    vector is exactly a masked head, so the mask falls out of the labels.
    """
    if isinstance(labels, FrameLabelSeq):
        labels = labels.labels
    out = {}
    for g, classes in GROUPS.items():
        idx = [classes.index(getattr(v, g)) if getattr(v, g) is not None else -1 for v in labels]
        out[g] = np.array(idx, dtype=np.int64)
    return out


@dataclass(frozen=True)
class ClassWeights:
    weights: dict
    flags: tuple = ()

    @classmethod
    def uniform(cls) -> "ClassWeights":
        return cls({g: np.ones(k) for g, k in HEADS})


def class_weights(corpus) -> ClassWeights:
    """Inverse-frequency weights over unmasked frames, mean 1 per head."""
    counts = {g: np.zeros(k, dtype=np.int64) for g, k in HEADS}
    n_frames = 0
    for labels in corpus:
        t = label_targets(labels)
        n_frames += len(t["manner"])
        for g, k in HEADS:
            idx = t[g][t[g] >= 0]
            counts[g] += np.bincount(idx, minlength=k)
    if n_frames == 0:
        raise EmptyCorpus("cannot compute class weights from an empty corpus")
    weights, flags = {}, []
    for g, k in HEADS:
        c = counts[g]
        if c.sum() == 0:
            weights[g] = np.ones(k)
            flags.append(f"{g}:never_active")
            continue
        freq = c / c.sum()
        w = np.zeros(k)
        seen = c > 0
        w[seen] = 1.0 / freq[seen]
        if not seen.all():
            w[~seen] = w[seen].max()
            flags.append(f"{g}:unseen:" + "|".join(GROUPS[g][i] for i in np.flatnonzero(~seen)))
        weights[g] = w / w.mean()
    return ClassWeights(weights, tuple(flags))


def masked_loss(logits, labels, weights: ClassWeights | None = None, smoothing: float = 0.0):
    """Return (loss, d loss / d logits) for a T x 22 logit matrix."""
    z_all = logits.values if isinstance(logits, LogitMatrix) else np.asarray(logits, dtype=np.float64)
    targets = labels if isinstance(labels, dict) else label_targets(labels)
    if z_all.shape != (len(targets["manner"]), NUM_DIMS):
        raise ShapeMismatch(f"logits {z_all.shape} vs {len(targets['manner'])} labels")
    weights = weights or ClassWeights.uniform()
    total = 0.0
    grad = np.zeros_like(z_all)
    for g, k in HEADS:
        y = targets[g]
        rows = np.flatnonzero(y >= 0)
        n = len(rows)
        if n == 0:
            continue
        z = z_all[rows, GROUP_SLICES[g]]
        zmax = z.max(axis=1, keepdims=True)
        shifted = z - zmax
        logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logsum
        q = np.full((n, k), smoothing / k)
        q[np.arange(n), y[rows]] += 1.0 - smoothing
        wq = weights.weights[g][None, :] * q
        total += float(-(wq * logp).sum() / n)
        p = np.exp(logp)
        grad[rows, GROUP_SLICES[g]] = (wq.sum(axis=1, keepdims=True) * p - wq) / n
    return total, grad


def loss_and_grads(params: ModelParams, x, targets, weights=None, smoothing=0.0):
    logits, h = _forward(params, x)
    loss, dlogits = masked_loss(logits, targets, weights, smoothing)
    return loss, _backward(params, x, h, dlogits)


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    last_grad_norm: float = 0.0


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def step(params: ModelParams, grads: dict, config: TrainConfig, state: AdamState) -> ModelParams:
    """One AdamW update after global-norm clipping; ``state`` is updated in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name}")
    grads, state.last_grad_norm = clip_gradients(grads, config.clip_norm)
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = {}
    for name, p in params.arrays.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p)) * b1 + (1.0 - b1) * g
        v = state.v.get(name, np.zeros_like(p)) * b2 + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        # decoupled decay acts on the pre-update weights
        p = p * (1.0 - config.lr * config.weight_decay)
        out[name] = p - config.lr * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
    return ModelParams(out, params.input_dim, params.hidden)


# -- training loop ----------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    dev_macro_f1: float


@dataclass
class TrainResult:
    params: ModelParams
    log: list
    best_epoch: int
    weights: ClassWeights


def reference_runs(labels: FrameLabelSeq):
    """Non-silence label runs as ((start, end), vector) pairs."""
    return [((a, b), v) for a, b, v in frames_to_segments(labels) if not v.is_silence]


def dev_macro_f1(params: ModelParams, corpus: Sequence[tuple[np.ndarray, FrameLabelSeq]],
                 dims="all21") -> float:
    refs, preds = [], []
    for x, labels in corpus:
        runs = reference_runs(labels)
        if not runs:
            continue
        logits, _ = _forward(params, x)
        sums, _ = segment_sums(logits, [span for span, _ in runs], labels.fps)
        preds.extend(decode_rows(sums))
        refs.extend(v for _, v in runs)
    return macro_f1(count(refs, preds), dims)


def fit(config: TrainConfig, train: Sequence[tuple[np.ndarray, FrameLabelSeq]],
        dev: Sequence[tuple[np.ndarray, FrameLabelSeq]]) -> TrainResult:
    config.validate()
    if not train:
        raise EmptyCorpus("training corpus is empty")
    input_dim = train[0][0].shape[1]
    params = init_params(input_dim, config.hidden, config.seed)
    weights = (class_weights([lab for _, lab in train]) if config.class_weighting
               else ClassWeights.uniform())
    targets = [label_targets(lab) for _, lab in train]
    feats = [np.asarray(x, dtype=np.float64) for x, _ in train]
    rng = np.random.default_rng(config.seed + 1)
    state = AdamState()

    best_f1, best_params, best_epoch = -1.0, params.copy(), 0
    bad_epochs = 0
    log = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            x = np.concatenate([feats[i] for i in batch])
            t = {g: np.concatenate([targets[i][g] for i in batch]) for g, _ in HEADS}
            loss, grads = loss_and_grads(params, x, t, weights, config.label_smoothing)
            params = step(params, grads, config, state)
            losses.append(loss)
        f1 = dev_macro_f1(params, dev)
        log.append(EpochRecord(epoch, float(np.mean(losses)), f1))
        if f1 > best_f1:
            best_f1, best_params, best_epoch = f1, params.copy(), epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.patience:
                break
    return TrainResult(best_params, log, best_epoch, weights)


def format_log(log: Sequence[EpochRecord]) -> str:
    lines = ["epoch,loss,dev_macro_f1"]
    lines += [f"{r.epoch},{r.loss!r},{r.dev_macro_f1!r}" for r in log]
    return "\n".join(lines) + "\n"


# -- gradient checking ------------------------------------------------------

@dataclass(frozen=True)
class GradCheckResult:
    trial: int
    max_abs_err: float
    max_rel_err: float
    n_params: int
    ok: bool


_ALL_VECTORS = tuple(all_valid_vectors())


def _random_vector(rng: np.random.Generator) -> FeatureVector:
    return _ALL_VECTORS[int(rng.integers(len(_ALL_VECTORS)))]


def gradient_check(trials: int = 100, seed: int = 5, h: float = 1e-5,
                   rtol: float = 1e-6, atol: float = 1e-9) -> list[GradCheckResult]:
    """Analytic vs central-difference gradients on random small problems.

    An entry passes when ``|a - n| <= atol`` or ``|a - n| <= rtol * max(|a|, |n|)``.
    """
    rng = np.random.default_rng(seed)
    results = []
    for trial in range(trials):
        D = int(rng.integers(2, 6))
        H = int(rng.integers(2, 6))
        T = int(rng.integers(3, 10))
        params = init_params(D, H, int(rng.integers(1 << 31)))
        for k in params.arrays:
            params.arrays[k] = rng.normal(scale=0.7, size=params.arrays[k].shape)
        x = rng.normal(size=(T, D))
        labels = [_random_vector(rng) for _ in range(T)]
        targets = label_targets(labels)
        eps = float(rng.uniform(0.0, 0.3))
        weights = ClassWeights({g: (lambda w: w / w.mean())(rng.uniform(0.3, 3.0, size=k))
                                for g, k in HEADS})
        _, analytic = loss_and_grads(params, x, targets, weights, eps)
        max_abs = max_rel = 0.0
        ok = True
        n_params = 0
        for name, arr in params.arrays.items():
            flat = arr.reshape(-1)
            ga = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp = masked_loss(_forward(params, x)[0], targets, weights, eps)[0]
                flat[i] = orig - h
                lm = masked_loss(_forward(params, x)[0], targets, weights, eps)[0]
                flat[i] = orig
                num = (lp - lm) / (2 * h)
                err = abs(ga[i] - num)
                scale = max(abs(ga[i]), abs(num))
                rel = err / scale if scale > 0 else 0.0
                max_abs = max(max_abs, err)
                if err > atol:
                    max_rel = max(max_rel, rel)
                    if err > rtol * scale:
                        ok = False
                n_params += 1
        results.append(GradCheckResult(trial, max_abs, max_rel, n_params, ok))
    return results


def mask_invariance_check(trials: int = 100, seed: int = 5) -> int:
    """Count cases where perturbing a masked head's logits changes the loss."""
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(trials):
        T = int(rng.integers(2, 12))
        logits = rng.normal(size=(T, NUM_DIMS))
        labels = [_random_vector(rng) for _ in range(T)]
        targets = label_targets(labels)
        weights = ClassWeights({g: rng.uniform(0.5, 2.0, size=k) for g, k in HEADS})
        eps = float(rng.uniform(0.0, 0.3))
        base, _ = masked_loss(logits, targets, weights, eps)
        bumped = logits.copy()
        for g, _k in HEADS:
            masked = targets[g] < 0
            bumped[np.ix_(masked, np.arange(NUM_DIMS)[GROUP_SLICES[g]])] += rng.normal(
                scale=10.0, size=(int(masked.sum()), _k))
        if masked_loss(bumped, targets, weights, eps)[0] != base:
            violations += 1
    return violations


# -- serialization ----------------------------------------------------------

def save_model(params: ModelParams, config: TrainConfig) -> bytes:
    cfg = format_config(config).encode("utf-8")
    out = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION),
           struct.pack("<III", params.input_dim, params.hidden, len(cfg)), cfg,
           struct.pack("<I", len(params.arrays))]
    for name, arr in params.arrays.items():
        nb = name.encode("utf-8")
        out.append(struct.pack("<I", len(nb)) + nb)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def load_model(data: bytes) -> tuple[ModelParams, TrainConfig]:
    if data[:5] != MODEL_MAGIC:
        raise FormatError(1, "missing PHQ2M magic")
    try:
        off = 5
        (version,) = struct.unpack_from("<I", data, off)
        if version != MODEL_VERSION:
            raise FormatError(1, f"unsupported model version {version}")
        input_dim, hidden, cfg_len = struct.unpack_from("<III", data, off + 4)
        off += 16
        config = build(TrainConfig, parse_config(data[off:off + cfg_len].decode("utf-8")))
        off += cfg_len
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        arrays = {}
        for _ in range(n):
            (ln,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off:off + ln].decode("utf-8")
            off += ln
            (ndim,) = struct.unpack_from("<I", data, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
            off += 8 * size
    except (struct.error, ValueError) as exc:
        raise FormatError(1, f"truncated or corrupt model file: {exc}") from None
    if off != len(data):
        raise FormatError(1, "trailing bytes after model parameters")
    expected = param_shapes(input_dim, hidden)
    if {k: v.shape for k, v in arrays.items()} != expected:
        raise FormatError(1, "parameter shapes do not match the declared dimensions")
    return ModelParams(arrays, input_dim, hidden), config
