"""Directory-level corpus files and atomic output writing."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .alignment import DEFAULT_FPS, FrameLabelSeq, format_frame_csv, parse_frame_csv, write_textgrid
from .decode import format_logits_binary, format_logits_csv
from .errors import FormatError, InputError


def atomic_write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_features_csv(x: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(f"f{i}" for i in range(x.shape[1]))
    for row in x:
        w.writerow(repr(float(v)) for v in row)
    return buf.getvalue()


def parse_features_csv(text: str, source: str = "<features>") -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError(1, f"{source}: empty feature file")
    D = len(rows[0])
    data = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != D:
            raise FormatError(lineno, f"{source}: expected {D} values, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError:
            raise FormatError(lineno, f"{source}: non-numeric value") from None
    return np.array(data, dtype=np.float64).reshape(-1, D)


def load_training_corpus(directory, fps: float = DEFAULT_FPS) -> list[tuple[str, np.ndarray, FrameLabelSeq]]:
    """Pairs ``<id>.feats.csv`` with ``<id>.labels.csv``, sorted by id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    out = []
    for feats in sorted(directory.glob("*.feats.csv")):
        uid = feats.name[: -len(".feats.csv")]
        labels_path = directory / f"{uid}.labels.csv"
        if not labels_path.exists():
            raise InputError(f"{feats}: no matching {labels_path.name}")
        x = parse_features_csv(feats.read_text(encoding="utf-8"), str(feats))
        labels = parse_frame_csv(labels_path.read_text(encoding="utf-8"), fps, str(labels_path))
        if len(x) != len(labels):
            raise InputError(f"{uid}: {len(x)} feature frames vs {len(labels)} label frames")
        out.append((uid, x, labels))
    if not out:
        raise InputError(f"{directory}: no *.feats.csv files")
    return out


def eval_pairs(directory) -> list[tuple[str, Path, Path]]:
    """(id, TextGrid, logits) triples; binary logits win over CSV when both exist."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    out = []
    for tg in sorted(directory.glob("*.TextGrid")):
        uid = tg.name[: -len(".TextGrid")]
        for ext in (".logits.bin", ".logits.csv"):
            cand = directory / f"{uid}{ext}"
            if cand.exists():
                out.append((uid, tg, cand))
                break
        else:
            raise InputError(f"{tg}: no matching logits file")
    if not out:
        raise InputError(f"{directory}: no *.TextGrid files")
    return out


def write_synth_corpus(directory, utterances, table, logit_format: str = "csv") -> list[Path]:
    from .alignment import segments_to_frames

    directory = Path(directory)
    written = []
    for utt in utterances:
        files = {f"{utt.uid}.TextGrid": write_textgrid(utt.segments, utt.duration)}
        if logit_format in ("csv", "both"):
            files[f"{utt.uid}.logits.csv"] = format_logits_csv(utt.logits)
        if logit_format in ("bin", "both"):
            files[f"{utt.uid}.logits.bin"] = format_logits_binary(utt.logits)
        frames = segments_to_frames(utt.segments, table, utt.logits.fps, utt.duration)
        files[f"{utt.uid}.labels.csv"] = format_frame_csv(frames)
        if utt.features is not None:
            files[f"{utt.uid}.feats.csv"] = format_features_csv(utt.features)
        for name, data in files.items():
            atomic_write(directory / name, data)
            written.append(directory / name)
    return written
