"""Independent reference scorers used by the tests."""

import itertools
from fractions import Fraction

from phonfeat.featuremap import DIM_NAMES, PLACES

CONSONANTS = {"stop", "nasal", "rhotic", "fricative", "affricate", "approximant", "lateral"}


def has(v, name):
    return name in (v.manner, v.height, v.backness, v.place, v.voicing)


def brute_counts(refs, preds):
    """{dim name: [tp, fp, fn, tn]} by direct attribute comparison, segment by segment."""
    out = {name: [0, 0, 0, 0] for name in DIM_NAMES[1:]}
    for r, p in zip(refs, preds):
        for name in DIM_NAMES[1:]:
            if name in PLACES and r.manner in CONSONANTS and r.place is None:
                continue
            a, b = has(r, name), has(p, name)
            out[name][(0 if a and b else 1 if b else 2 if a else 3)] += 1
    return out


def brute_rates(cnt):
    tp, fp, fn, _ = cnt
    p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f = 2 * p * r / (p + r) if p + r else Fraction(0)
    return p, r, f


def brute_distance(ref, hyp):
    """Fewest edits, by trying every way to delete from ref then substitute and insert."""
    best = len(ref) + len(hyp)
    n = len(ref)
    for keep in range(n + 1):
        for kept in itertools.combinations(range(n), keep):
            r = [ref[i] for i in kept]
            # kept reference symbols map in order onto a subsequence of hyp
            for pos in itertools.combinations(range(len(hyp)), keep):
                subs = sum(r[i] != hyp[p] for i, p in enumerate(pos))
                cost = (n - keep) + subs + (len(hyp) - keep)
                best = min(best, cost)
    return best
