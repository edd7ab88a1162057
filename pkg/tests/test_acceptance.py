"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed together in the
terminal summary.
"""

import time
from fractions import Fraction

import numpy as np

from phonfeat.alignment import frames_to_segments, read_alignment, segments_to_frames
from phonfeat.baseline import align
from phonfeat.cli import main
from phonfeat.decode import aggregate_and_decode, decode_rows
from phonfeat.featuremap import (
    DIM_NAMES, SILENCE_VECTOR, all_valid_vectors, default_table, map_phone,
)
from phonfeat.metrics import count, f1_per_dim, macro_f1
from phonfeat.phoneset import LANGUAGES, canonicalize, parse_phone
from phonfeat.synth import SynthConfig, gen_corpus
from phonfeat.train import TrainConfig, fit, gradient_check, mask_invariance_check

from conftest import ACCEPTANCE_RESULTS, FIXTURE_LANGS, FIXTURES, GOLDEN, TEXTGRIDS
from oracles import brute_counts, brute_rates, brute_distance

TABLE = default_table()


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}"
    ACCEPTANCE_RESULTS[n] = line
    print(line)
    assert ok, line


# -- 1. feature table examples -------------------------------------------

# row -> (attribute, value, example phones)
TABLE_ROWS = [
    ("manner", "stop", "p t k b d g"),
    ("manner", "nasal", "m n ŋ"),
    ("manner", "rhotic", "r ʀ"),
    ("manner", "fricative", "f v s z ʃ x"),
    ("manner", "affricate", "ts tʃ pf"),
    ("manner", "approximant", "j w"),
    ("manner", "lateral", "l ʟ"),
    ("manner", "vowel", "a e i o u"),
    ("height", "high", "i u ɪ ʊ"),
    ("height", "mid", "e o ə ɛ"),
    ("height", "low", "a æ"),
    ("backness", "front", "i e ɛ y ø"),
    ("backness", "central", "ə a"),
    ("backness", "back", "u o ʊ"),
    ("place", "labial", "p b m f v"),
    ("place", "alveolar", "t d n s z l"),
    ("place", "velar", "k g ŋ x"),
    ("place", "palatal", "j c ʝ ɲ"),
    ("place", "postalveolar", "ʃ ʒ tʃ dʒ"),
    ("voicing", "voiceless", "p t k f s ʃ"),
    ("voicing", "voiced", "b d g v z m"),
]


def test_01_table_examples():
    t0 = time.perf_counter()
    checked, wrong = 0, []
    for attr, value, phones in TABLE_ROWS:
        for sym in phones.split():
            v = map_phone(TABLE, canonicalize(parse_phone(sym), "generic"))
            checked += 1
            if getattr(v, attr) != value:
                wrong.append(f"{sym}:{attr}={getattr(v, attr)}")
            # vowels carry quality and no place; consonants the reverse
            if (v.manner == "vowel") != (v.height is not None and v.backness is not None
                                         and v.place is None):
                wrong.append(f"{sym}:gating")
    elapsed = time.perf_counter() - t0
    ok = not wrong and elapsed < 1.0
    record(1, "table examples", ok,
           f"{checked - len(wrong)}/{checked} exact, {elapsed:.3f}s" + (f" wrong={wrong}" if wrong else ""))


# -- 2. canonicalization ---------------------------------------------------

CANON_CASES = [
    ("pʰ", "de", "p"), ("tʰ", "de", "t"), ("kʰ", "de", "k"),      # aspirated stops
    ("l̩", "de", "l"), ("n̩", "de", "n"),                           # syllabic consonants
    ("ɾ", "en", "ɹ"),                                             # tap
    ("ɚ", "en", "ə"), ("ɝ", "en", "ə"),                           # rhotic vowels
    ("t͡ʃ", "generic", "tʃ"), ("ʧ", "en", "tʃ"), ("ʤ", "en", "dʒ"),  # ligatures
    ("ˈa", "generic", "a"), ("aː", "de", "a"), ("ɛ̃", "fr", "ɛ"),   # suprasegmentals
    ("β̞", "es", "β"), ("ð̞", "es", "ð"), ("ɣ̞", "es", "ɣ"),         # approximant allophones
    ("k", "es", "k"),
]


def test_02_canonicalization():
    failures = []
    for label, lang, want in CANON_CASES:
        got = canonicalize(parse_phone(label), lang).symbol
        if got != want:
            failures.append(f"{label}/{lang}->{got}")
    # diphthongs take their nucleus: low central
    for d in ("aɪ", "aʊ"):
        v = map_phone(TABLE, canonicalize(parse_phone(d), "de"))
        if (v.manner, v.height, v.backness) != ("vowel", "low", "central"):
            failures.append(f"{d}:{v}")
    violations = 0
    for lang in LANGUAGES:
        for sym in TABLE.entries:
            once = canonicalize(parse_phone(sym), lang)
            if canonicalize(parse_phone(once.symbol), lang) != once:
                violations += 1
    n = len(TABLE.entries) * len(LANGUAGES)
    record(2, "canonicalization", not failures and violations == 0,
           f"{len(CANON_CASES) + 2 - len(failures)}/{len(CANON_CASES) + 2} examples, "
           f"idempotence {violations} violations over {n}")


# -- 3. gating coherence -----------------------------------------------------

def test_03_gating_fuzz():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    violations = 0
    for _ in range(10_000):
        T = int(rng.integers(1, 9))
        values = rng.normal(scale=float(rng.choice([0.1, 1.0, 10.0])), size=(T, len(DIM_NAMES)))
        if rng.random() < 0.2:
            values = np.round(values)  # plenty of ties
        for v in decode_rows(values):
            try:
                v.validate()
            except Exception:
                violations += 1
    elapsed = time.perf_counter() - t0
    record(3, "gating coherence", violations == 0 and elapsed < 10.0,
           f"10000 matrices, {violations} violations, {elapsed:.2f}s")


# -- 4. noiseless round trip -------------------------------------------------

def test_04_noiseless_round_trip():
    cfg = SynthConfig(seed=4, n_utts=120, phones_per_utt=(240, 260), logit_noise=0.0)
    t0 = time.perf_counter()
    corpus = gen_corpus(cfg, with_features=False)
    refs, preds = [], []
    for u in corpus:
        preds += [p.vector for p in aggregate_and_decode(u.logits, u.segments)]
        refs += [map_phone(TABLE, s.phone) for s in u.segments if not s.is_silence]
    f1 = macro_f1(count(refs, preds))
    elapsed = time.perf_counter() - t0
    frames = sum(len(u.logits) for u in corpus)
    ok = len(refs) >= 1000 and f1 == 1.0 and elapsed < 5.0
    record(4, "noiseless round trip", ok,
           f"{len(refs)} segments, {frames} frames, macro-F1={f1:.4f}, {elapsed:.2f}s")


# -- 5. metric oracle ---------------------------------------------------------

def test_05_metric_oracle():
    rng = np.random.default_rng(5)
    vecs = list(all_valid_vectors())
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(1, 25))
        refs = [vecs[i] for i in rng.integers(len(vecs), size=n)]
        preds = [vecs[i] for i in rng.integers(len(vecs), size=n)]
        c = count(refs, preds)
        rates = f1_per_dim(c)
        for name, cnt in brute_counts(refs, preds).items():
            i = DIM_NAMES.index(name)
            if [int(c.tp[i]), int(c.fp[i]), int(c.fn[i]), int(c.tn[i])] != cnt:
                bad += 1
                continue
            p, r, f = brute_rates(cnt)
            got = (rates.precision[i], rates.recall[i], rates.f1[i])
            if any(abs(Fraction(float(g)) - e) > 1e-9 for g, e in zip(got, (p, r, f))):
                bad += 1
    record(5, "metric oracle", bad == 0, f"1000 instances, {bad} mismatches")


# -- 6. PER oracle -------------------------------------------------------------

def test_06_per_oracle():
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(1000):
        ref = list(rng.choice(list("abcd"), size=int(rng.integers(0, 9))))
        hyp = list(rng.choice(list("abcd"), size=int(rng.integers(0, 9))))
        script = align(ref, hyp)
        if script.cost != brute_distance(ref, hyp) or script.apply(ref, hyp) != hyp:
            bad += 1
    record(6, "PER oracle", bad == 0, f"1000 cases, {bad} mismatches")


# -- 7. gradient checks --------------------------------------------------------

def test_07_gradients():
    results = gradient_check(trials=100, seed=5, rtol=1e-6, atol=1e-9)
    failed = sum(not r.ok for r in results)
    violations = mask_invariance_check(trials=100, seed=5)
    worst = max(r.max_rel_err for r in results)
    record(7, "gradient checks", failed == 0 and violations == 0,
           f"{len(results)} trials, {failed} failed (max rel err {worst:.2e}), "
           f"mask {violations} violations")


# -- 8. training sanity --------------------------------------------------------

def _training_split(seed: int, n: int):
    cfg = SynthConfig(seed=seed, n_utts=n, phones_per_utt=(8, 16), feat_noise=0.5)
    return [(u.features, segments_to_frames(u.segments, TABLE, cfg.fps, u.duration))
            for u in gen_corpus(cfg)]


def test_08_training_sanity():
    t0 = time.perf_counter()
    train, dev = _training_split(7, 64), _training_split(1007, 16)
    cfg = TrainConfig(max_epochs=200, patience=10, seed=7)
    a = fit(cfg, train, dev)
    elapsed = time.perf_counter() - t0
    b = fit(cfg, train, dev)
    same = a.log == b.log and all(
        np.array_equal(a.params.arrays[k], b.params.arrays[k]) for k in a.params.arrays)
    best = a.log[a.best_epoch - 1].dev_macro_f1
    ok = best >= 0.99 and a.best_epoch <= 200 and same and elapsed < 60.0
    record(8, "training sanity", ok,
           f"dev macro-F1={best:.4f} at epoch {a.best_epoch}, "
           f"{'bit-identical' if same else 'NOT identical'} reruns, {elapsed:.1f}s per run")


# -- 9. alignment round trip and logit formats ----------------------------------

def _boundaries(segments):
    out = []
    for a, b in zip(segments, segments[1:]):
        va = SILENCE_VECTOR if a.is_silence else map_phone(TABLE, a.phone)
        vb = SILENCE_VECTOR if b.is_silence else map_phone(TABLE, b.phone)
        if va != vb:
            out.append(a.end)
    return out


def _noisy_report(pattern, capsys):
    noisy = FIXTURES / "noisy"
    argv = (["eval", "--logits"] + [str(p) for p in sorted(noisy.glob(pattern))]
            + ["--textgrid"] + [str(p) for p in sorted(noisy.glob("*.TextGrid"))])
    assert main(argv) == 0
    return capsys.readouterr().out


def test_09_alignment_round_trip(capsys):
    worst, problems = 0.0, []
    for lang in FIXTURE_LANGS:
        utt = read_alignment((TEXTGRIDS / f"{lang}.TextGrid").read_bytes(), lang=lang)
        frames = segments_to_frames(utt.segments, TABLE, 50.0, utt.duration)
        got = [end for _, end, _ in frames_to_segments(frames)[:-1]]
        ref = _boundaries(utt.segments)
        if len(got) != len(ref):
            problems.append(f"{lang}: {len(got)} vs {len(ref)} boundaries")
            continue
        worst = max([worst] + [abs(a - b) for a, b in zip(ref, got)])
    same = _noisy_report("*.logits.csv", capsys) == _noisy_report("*.logits.bin", capsys)
    ok = not problems and worst <= 0.02 + 1e-9 and same
    record(9, "alignment round trip", ok,
           f"max boundary error {1000 * worst:.1f} ms over {len(FIXTURE_LANGS)} fixtures, "
           f"CSV/binary reports {'identical' if same else 'DIFFER'}"
           + (f" {problems}" if problems else ""))


# -- 10. golden reports -------------------------------------------------------

def test_10_golden_reports(capsys):
    noisy = _noisy_report("*.logits.csv", capsys)
    base = FIXTURES / "baseline"
    assert main(["baseline-eval", "--hyp", str(base / "hyp.txt"),
                 "--textgrid", str(TEXTGRIDS / "de.TextGrid"), "--lang", "de"]) == 0
    subst = capsys.readouterr().out
    checks = {
        "noisy": noisy == (GOLDEN / "noisy_report.txt").read_text(encoding="utf-8"),
        "baseline": subst == (GOLDEN / "baseline_subst_report.txt").read_text(encoding="utf-8"),
    }
    record(10, "golden reports", all(checks.values()),
           ", ".join(f"{k} {'byte-identical' if v else 'DIFFERS'}" for k, v in checks.items()))

