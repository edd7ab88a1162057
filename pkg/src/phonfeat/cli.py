"""Command-line entry point.

Exit codes: 0 success, 1 internal error (or a failed self-check), 2 bad
input or usage.  Every command that writes files also writes a run manifest
next to its main output; ``phonfeat rerun MANIFEST`` replays it.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

from . import __version__
from .alignment import (
    DEFAULT_FPS, FrameLabelSeq, format_frame_csv, frame_span, read_alignment, segments_to_frames,
)
from .baseline import align, canonical_phones, ctc_greedy, load_posteriors, project_to_segments
from .corpus import atomic_write, eval_pairs, load_training_corpus, parse_features_csv, write_synth_corpus
from .decode import aggregate_and_decode, decode_frames, load_logits
from .errors import EmptyReference, InputError, LengthMismatch
from .featuremap import DIM_NAMES, default_table, load_table, map_phone, to_dense
from .kvconfig import build, digest, format_config, parse_config
from .metrics import PRESETS, count, format_report, format_report_csv, parse_report, report
from .phoneset import DEFAULT_RULESET, LANGUAGES, canonicalize_label, load_rule_overrides
from .synth import SynthConfig, gen_corpus
from .train import (
    TrainConfig, fit, format_log, forward, gradient_check, load_model, mask_invariance_check,
    save_model,
)

log = logging.getLogger("phonfeat")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2
MANIFEST_HEADER = "# phonfeat run manifest v1"
MANIFEST_NAME = "run.manifest"


# -- run manifests ----------------------------------------------------------

def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    config_digest: str
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    seed: int | None = None
    cwd: str = ""
    version: str = __version__

    def format(self) -> str:
        lines = [MANIFEST_HEADER,
                 f"tool_version={self.version}",
                 f"command={self.command}",
                 "argv=" + json.dumps(self.argv, ensure_ascii=False),
                 f"cwd={self.cwd}",
                 f"config_digest={self.config_digest}",
                 f"seed={'none' if self.seed is None else self.seed}"]
        for path in self.inputs:
            lines.append(f"input={path} {_sha256_file(path)}")
        for path in self.outputs:
            lines.append(f"output={path}")
        return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> RunManifest:
    fields_: dict = {"inputs": [], "outputs": []}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"manifest line {lineno}: expected key=value")
        if key == "input":
            fields_["inputs"].append(value.rsplit(" ", 1)[0])
        elif key == "output":
            fields_["outputs"].append(value)
        elif key == "argv":
            fields_["argv"] = json.loads(value)
        elif key == "seed":
            fields_["seed"] = None if value == "none" else int(value)
        elif key == "tool_version":
            fields_["version"] = value
        else:
            fields_[key] = value
    if "argv" not in fields_ or "command" not in fields_:
        raise InputError("manifest lacks argv/command")
    fields_.setdefault("config_digest", "")
    return RunManifest(**fields_)


class Run:
    """Per-invocation state: resolved table and rules, inputs read, outputs written."""

    def __init__(self, args):
        self.args = args
        self.inputs: list = []
        self.outputs: list = []
        table_path = getattr(args, "table", None)
        if table_path:
            self.inputs.append(table_path)
            self.table = load_table(table_path)
        else:
            env = os.environ.get("PHQ2_TABLE")
            if env:
                self.inputs.append(env)
            self.table = default_table()
        rules_path = getattr(args, "rules", None)
        if rules_path:
            self.inputs.append(rules_path)
            self.rules = load_rule_overrides(rules_path)
        else:
            self.rules = DEFAULT_RULESET

    def read_bytes(self, path) -> bytes:
        self.inputs.append(str(path))
        return Path(path).read_bytes()

    def read_text(self, path) -> str:
        if path == "-":
            return sys.stdin.read()
        return self.read_bytes(path).decode("utf-8-sig")

    def alignment(self, path):
        a = self.args
        return read_alignment(self.read_bytes(path), a.tier, a.lang, self.table, self.rules,
                              a.unknown_as_silence)

    def write(self, path, data) -> None:
        atomic_write(path, data)
        self.outputs.append(str(path))

    def emit(self, path, data) -> None:
        """Write to ``path``, or stdout when no path was given."""
        if path is None:
            sys.stdout.write(data if isinstance(data, str) else data.decode("utf-8"))
        else:
            self.write(path, data)

    def finish(self, manifest_path, config_digest: str | None = None, seed=None) -> None:
        if manifest_path is None:
            return
        if config_digest is None:
            opts = {k: v for k, v in sorted(vars(self.args).items()) if k != "func"}
            opts["table_version"] = self.table.version
            config_digest = digest(json.dumps(opts, sort_keys=True, default=str))
        m = RunManifest(self.args.command, list(self.args.argv), config_digest,
                        list(dict.fromkeys(self.inputs)), self.outputs, seed, os.getcwd())
        atomic_write(manifest_path, m.format())


def _manifest_beside(path):
    return None if path is None else f"{path}.manifest"


# -- commands ---------------------------------------------------------------

def cmd_map(args) -> int:
    run = Run(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("input", "phone") + DIM_NAMES)
    for line in run.read_text(args.phones).splitlines():
        label = line.strip()
        if not label:
            continue
        phone = canonicalize_label(label, args.lang, run.table, run.rules, args.unknown_as_silence)
        vec = map_phone(run.table, phone)
        w.writerow([label, phone.symbol] + [str(int(x)) for x in to_dense(vec)])
    run.emit(args.out, buf.getvalue())
    run.finish(_manifest_beside(args.out))
    return EXIT_OK


def cmd_labels(args) -> int:
    run = Run(args)
    utt = run.alignment(args.textgrid)
    frames = segments_to_frames(utt.segments, run.table, args.fps, utt.duration)
    run.emit(args.out, format_frame_csv(frames))
    run.finish(_manifest_beside(args.out))
    return EXIT_OK


def _model_logits(run: Run, args):
    params, _ = load_model(run.read_bytes(args.model))
    x = parse_features_csv(run.read_text(args.features), args.features)
    return forward(params, x, args.fps)


def cmd_decode(args) -> int:
    run = Run(args)
    if args.logits:
        lm = load_logits(args.logits, args.fps)
        run.inputs.append(args.logits)
    elif args.model and args.features:
        lm = _model_logits(run, args)
    else:
        raise InputError("decode needs --logits or both --model and --features")
    if args.textgrid is None:
        frames = FrameLabelSeq(args.fps, tuple(decode_frames(lm, args.force_vowel_voiced)))
        run.emit(args.out, format_frame_csv(frames))
    else:
        utt = run.alignment(args.textgrid)
        preds = aggregate_and_decode(lm, utt.segments, args.force_vowel_voiced)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("start", "end", "phone", "n_frames") + DIM_NAMES)
        for p in preds:
            w.writerow([repr(p.start), repr(p.end), p.phone, p.n_frames]
                       + [str(int(x)) for x in to_dense(p.vector)])
        run.emit(args.out, buf.getvalue())
    run.finish(_manifest_beside(args.out))
    return EXIT_OK


def _check_coverage(lm, segments, source) -> None:
    speech = [s for s in segments if not s.is_silence]
    if not speech:
        return
    _, b = frame_span(speech[-1].start, speech[-1].end, lm.fps)
    if len(lm) < b:
        raise LengthMismatch(f"{source}: {len(lm)} logit frames do not cover the alignment ({b} needed)")


def _pairs(args, first: str, second: str):
    a, b = getattr(args, first), getattr(args, second)
    if len(a) != len(b):
        raise InputError(f"--{first} and --{second} need the same number of files "
                         f"({len(a)} vs {len(b)})")
    return list(zip(a, b))


def _map_utts(fn, items, workers: int):
    # results come back in input order, so merges do not depend on scheduling
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _write_report(run: Run, args, rep) -> None:
    run.emit(args.report_out, format_report(rep))
    if args.csv_out:
        run.write(args.csv_out, format_report_csv([(args.name, rep)]))
    if args.fig_dir:
        from .plots import plot_per_feature_f1

        path = Path(args.fig_dir) / "f1_per_feature.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        plot_per_feature_f1({args.name: rep}, path)
        run.outputs.append(str(path))


def cmd_eval(args) -> int:
    run = Run(args)
    if args.corpus:
        if args.logits or args.textgrid:
            raise InputError("--corpus cannot be combined with --logits/--textgrid")
        items = [(str(lg), str(tg)) for _, tg, lg in eval_pairs(args.corpus)]
    else:
        if not args.logits or not args.textgrid:
            raise InputError("eval needs --corpus or --logits with --textgrid")
        items = _pairs(args, "logits", "textgrid")

    def one(item):
        logits_path, tg_path = item
        utt = run.alignment(tg_path)
        lm = load_logits(logits_path, args.fps)
        _check_coverage(lm, utt.segments, logits_path)
        preds = aggregate_and_decode(lm, utt.segments, args.force_vowel_voiced)
        refs = [map_phone(run.table, s.phone) for s in utt.segments if not s.is_silence]
        return count(refs, [p.vector for p in preds]), sum(p.zero_frames for p in preds)

    results = _map_utts(one, items, args.workers)
    run.inputs.extend(lg for lg, _ in items)
    counts = reduce(lambda x, y: x + y, (c for c, _ in results))
    rep = report(counts, dims=args.dims, zero_frame_segments=sum(z for _, z in results))
    _write_report(run, args, rep)
    run.finish(_manifest_beside(args.report_out))
    return EXIT_OK


def cmd_baseline_eval(args) -> int:
    run = Run(args)
    if args.hyp:
        lines = [ln for ln in run.read_text(args.hyp).splitlines() if ln.strip()]
        if len(lines) != len(args.textgrid):
            raise InputError(f"{args.hyp}: {len(lines)} hypothesis lines for "
                             f"{len(args.textgrid)} TextGrids")
        items = [(tg, ln.split()) for tg, ln in zip(args.textgrid, lines)]
    else:
        items = [(tg, post) for post, tg in _pairs(args, "posteriors", "textgrid")]

    def one(item):
        tg_path, hyp_src = item
        utt = run.alignment(tg_path)
        if isinstance(hyp_src, str):
            raw = ctc_greedy(load_posteriors(hyp_src, args.fps))
        else:
            raw = hyp_src
        hyp = canonical_phones(raw, args.lang, run.table, run.rules, args.unknown_as_silence)
        segs = [s for s in utt.segments if not s.is_silence]
        ref = [s.phone.symbol for s in segs]
        cost = align(ref, hyp).cost
        preds = project_to_segments(segs, hyp, run.table)
        refs = [map_phone(run.table, s.phone) for s in segs]
        return count(refs, [p.vector for p in preds]), cost, len(ref)

    results = _map_utts(one, items, args.workers)
    if args.posteriors:
        run.inputs.extend(args.posteriors)
    n_ref = sum(r[2] for r in results)
    if n_ref == 0:
        raise EmptyReference("no reference phones in the TextGrids")
    counts = reduce(lambda x, y: x + y, (r[0] for r in results))
    rep = report(counts, per=sum(r[1] for r in results) / n_ref, dims=args.dims)
    _write_report(run, args, rep)
    run.finish(_manifest_beside(args.report_out))
    return EXIT_OK


def cmd_compare(args) -> int:
    from .plots import plot_per_feature_f1, plot_precision_recall

    run = Run(args)
    base = parse_report(run.read_text(args.baseline))
    model = parse_report(run.read_text(args.model))
    labels = tuple(args.labels.split(","))
    if len(labels) != 2:
        raise InputError("--labels needs two comma-separated names")
    out = Path(args.fig_dir)
    out.mkdir(parents=True, exist_ok=True)
    plot_per_feature_f1({labels[0]: base, labels[1]: model}, out / "f1_per_feature.png")
    plot_precision_recall(base, model, out / "precision_recall.png", labels)
    run.outputs += [str(out / "f1_per_feature.png"), str(out / "precision_recall.png")]

    def fmt(x):
        return "null" if x is None else f"{x:.4f}"
    print(f"{labels[0]}\tavg={fmt(base.get('avg'))}\tper={fmt(base.get('per'))}")
    print(f"{labels[1]}\tavg={fmt(model.get('avg'))}\tper={fmt(model.get('per'))}")
    run.finish(out / MANIFEST_NAME)
    return EXIT_OK


def _load_config(run: Run, cls, args):
    values = {}
    if args.config:
        values = parse_config(run.read_text(args.config), args.config)
    overrides = {f.name: getattr(args, "cfg_" + f.name) for f in dataclasses.fields(cls)}
    cfg = build(cls, values, overrides, args.config or "<flags>")
    try:
        return cfg.validate()
    except ValueError as e:
        raise InputError(f"invalid configuration: {e}") from None


def cmd_train(args) -> int:
    run = Run(args)
    cfg = _load_config(run, TrainConfig, args)
    train = load_training_corpus(args.train, args.fps)
    dev = load_training_corpus(args.dev, args.fps)
    for d in (args.train, args.dev):
        run.inputs.extend(str(p) for p in sorted(Path(d).glob("*.csv")))
    result = fit(cfg, [(x, y) for _, x, y in train], [(x, y) for _, x, y in dev])
    out = Path(args.out)
    run.write(out / "model.bin", save_model(result.params, cfg))
    run.write(out / "train_log.csv", format_log(result.log))
    best = result.log[result.best_epoch - 1]
    print(f"best_epoch={result.best_epoch} dev_macro_f1={best.dev_macro_f1:.4f} "
          f"epochs_run={len(result.log)}")
    for flag in result.weights.flags:
        log.warning("class weights: %s", flag)
    run.finish(out / MANIFEST_NAME, digest(format_config(cfg)), cfg.seed)
    return EXIT_OK


def cmd_synth(args) -> int:
    run = Run(args)
    cfg = _load_config(run, SynthConfig, args)
    corpus = gen_corpus(cfg, run.table, with_features=not args.no_features)
    out = Path(args.out)
    for p in write_synth_corpus(out, corpus, run.table, args.format):
        run.outputs.append(str(p))
    run.write(out / "synth.cfg", format_config(cfg))
    print(f"wrote {len(corpus)} utterances to {out}")
    run.finish(out / MANIFEST_NAME, digest(format_config(cfg)), cfg.seed)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradient_check(args.trials, args.seed, rtol=args.rtol, atol=args.atol)
    failed = [r for r in results if not r.ok]
    worst_rel = max((r.max_rel_err for r in results), default=0.0)
    worst_abs = max((r.max_abs_err for r in results), default=0.0)
    print(f"gradient trials={len(results)} failed={len(failed)} "
          f"max_rel_err={worst_rel:.3e} max_abs_err={worst_abs:.3e}")
    violations = mask_invariance_check(args.mask_trials, args.seed)
    print(f"mask trials={args.mask_trials} violations={violations}")
    for r in failed:
        print(f"  trial {r.trial}: rel={r.max_rel_err:.3e} abs={r.max_abs_err:.3e}", file=sys.stderr)
    return EXIT_INTERNAL if failed or violations else EXIT_OK


def cmd_rerun(args) -> int:
    m = parse_manifest(Path(args.manifest).read_text(encoding="utf-8"))
    if m.version != __version__:
        log.warning("manifest written by version %s, running %s", m.version, __version__)
    prev = os.getcwd()
    if m.cwd:
        os.chdir(m.cwd)
    try:
        return main(m.argv)
    finally:
        os.chdir(prev)


# -- parser -----------------------------------------------------------------

def _common(p, alignment: bool = True) -> None:
    p.add_argument("--table", help="feature table TSV (default: $PHQ2_TABLE or the bundled table)")
    p.add_argument("--rules", help="canonicalization override TSV: lang<TAB>from<TAB>to")
    p.add_argument("--lang", default="generic", choices=LANGUAGES)
    p.add_argument("--unknown-as-silence", action="store_true",
                   help="map unknown phones to silence with a warning instead of failing")
    if alignment:
        p.add_argument("--fps", type=float, default=DEFAULT_FPS)
        p.add_argument("--tier", default="phones", help="TextGrid tier holding phones")


def _report_opts(p) -> None:
    p.add_argument("--dims", default="all21",
                   help=f"preset ({' | '.join(PRESETS)}) or comma list of dimension names")
    p.add_argument("--report-out", help="report path (default: stdout)")
    p.add_argument("--csv-out", help="also write a one-row summary CSV")
    p.add_argument("--fig-dir", help="write a per-feature F1 figure here")
    p.add_argument("--name", default="model", help="system name in CSV and figures")
    p.add_argument("--workers", type=int, default=1, help="utterances processed concurrently")


def _config_flags(p, cls) -> None:
    g = p.add_argument_group("configuration keys (override --config)")
    for f in dataclasses.fields(cls):
        g.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="V")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phonfeat", description="Phonological feature labelling, decoding and evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="phones to canonical form and feature vectors")
    p.add_argument("phones", help="one phone label per line ('-' for stdin)")
    p.add_argument("--out")
    _common(p, alignment=False)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("labels", help="TextGrid to frame-level feature CSV")
    p.add_argument("--textgrid", required=True)
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("decode", help="gated decoding of logits, per frame or per segment")
    p.add_argument("--logits", help="logit CSV or PHQ2 binary")
    p.add_argument("--model", help="trained model (with --features, instead of --logits)")
    p.add_argument("--features", help="per-frame feature CSV for --model")
    p.add_argument("--textgrid", help="aggregate over these segments")
    p.add_argument("--force-vowel-voiced", action="store_true")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="segment-level evaluation of logits")
    p.add_argument("--logits", nargs="+", default=[])
    p.add_argument("--textgrid", nargs="+", default=[])
    p.add_argument("--corpus", help="directory of <id>.TextGrid + <id>.logits.{bin,csv}")
    p.add_argument("--force-vowel-voiced", action="store_true")
    _report_opts(p)
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline-eval", help="phone-recognizer baseline through the feature table")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--hyp", help="one line of phones per TextGrid")
    src.add_argument("--posteriors", nargs="+", help="PHQ2 posterior files, greedy CTC decoded")
    p.add_argument("--textgrid", nargs="+", required=True)
    _report_opts(p)
    _common(p)
    p.set_defaults(func=cmd_baseline_eval)

    p = sub.add_parser("compare", help="figures comparing a baseline report with a model report")
    p.add_argument("--baseline", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--labels", default="baseline,model")
    p.add_argument("--fig-dir", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", help="fit the multi-head classifier")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--train", required=True, help="directory of <id>.feats.csv + <id>.labels.csv")
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fps", type=float, default=DEFAULT_FPS)
    _config_flags(p, TrainConfig)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "bin", "both"), default="csv",
                   help="logit file format")
    p.add_argument("--no-features", action="store_true", help="skip training features")
    p.add_argument("--table")
    _config_flags(p, SynthConfig)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference and mask checks of the loss")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--mask-trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=5)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--atol", type=float, default=1e-9)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("rerun", help="replay a run manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse: 0 for --help, 2 for usage errors
        return int(e.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="phonfeat: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as e:
        print(f"phonfeat: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError,
            UnicodeDecodeError) as e:
        print(f"phonfeat: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


def run() -> None:
    sys.exit(main())
