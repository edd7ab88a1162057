import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from phonfeat.alignment import PhoneSegment
from phonfeat.decode import (
    LogitMatrix, aggregate_and_decode, decode_frame, decode_frames, decode_rows,
    format_logits_binary, format_logits_csv, load_logits, parse_logits_binary, parse_logits_csv,
)
from phonfeat.errors import EmptyLogits, FormatError, ShapeMismatch
from phonfeat.featuremap import DIM_INDEX, SILENCE_VECTOR, FeatureVector, to_dense
from phonfeat.phoneset import CanonicalPhone


def row(**hot):
    r = np.zeros(22)
    for name, value in hot.items():
        r[DIM_INDEX[name]] = value
    return r


def seg(a, b, sym):
    return PhoneSegment(a, b, CanonicalPhone(sym))


def test_decode_consonant_ignores_vowel_heads():
    r = row(stop=3, high=9, front=9, velar=2, labial=1, voiced=1)
    assert decode_frame(r) == FeatureVector("stop", place="velar", voicing="voiced")


def test_decode_vowel_ignores_place():
    r = row(vowel=5, low=1, back=2, labial=50, voiceless=1)
    v = decode_frame(r)
    assert v == FeatureVector("vowel", height="low", backness="back", voicing="voiceless")
    assert decode_frame(r, force_vowel_voiced=True).voicing == "voiced"


def test_decode_silence_drops_everything():
    assert decode_frame(row(silence=1, stop=0.5, voiced=9)) == SILENCE_VECTOR


def test_ties_go_to_lowest_index():
    assert decode_frame(np.zeros(22)) == SILENCE_VECTOR
    r = row(stop=1, nasal=1, labial=2, alveolar=2, voiceless=0, voiced=0)
    assert decode_frame(r) == FeatureVector("stop", place="labial", voicing="voiceless")


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        decode_frame(np.zeros(21))
    with pytest.raises(ShapeMismatch):
        LogitMatrix(np.zeros((3, 21)))
    with pytest.raises(FormatError):
        LogitMatrix(np.full((1, 22), np.nan))


@settings(max_examples=300)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.just(22)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_gated_outputs_are_coherent(values):
    for v in decode_rows(values):
        v.validate()
        d = to_dense(v)
        assert d[:9].sum() == 1


def test_segment_sums_raw_logits_not_votes():
    # two frames lean weakly to stop, one frame strongly to nasal
    frames = np.stack([row(stop=1, labial=1, voiceless=1), row(stop=1, labial=1, voiceless=1),
                       row(nasal=10, alveolar=5, voiced=5)])
    lm = LogitMatrix(frames)
    frame_votes = decode_frames(lm)
    assert [v.manner for v in frame_votes] == ["stop", "stop", "nasal"]
    (pred,) = aggregate_and_decode(lm, [seg(0.0, 0.06, "p")])
    assert pred.vector == FeatureVector("nasal", place="alveolar", voicing="voiced")
    assert pred.n_frames == 3


def test_aggregate_skips_silence_and_flags_empty_segments():
    lm = LogitMatrix(np.stack([row(stop=1, labial=1, voiced=1)] * 10))
    segs = [seg(0.0, 0.04, "sil"), seg(0.04, 0.1, "b"), seg(0.111, 0.119, "b"), seg(0.12, 0.2, "b")]
    preds = aggregate_and_decode(lm, segs)
    assert [p.n_frames for p in preds] == [3, 0, 4]
    assert preds[1].zero_frames and preds[1].vector == SILENCE_VECTOR
    assert preds[0].phone == "b"


def test_empty_logits():
    with pytest.raises(EmptyLogits):
        aggregate_and_decode(LogitMatrix(np.zeros((0, 22))), [seg(0, 0.1, "a")])
    assert aggregate_and_decode(LogitMatrix(np.zeros((0, 22))), [seg(0, 0.1, "sil")]) == []


def test_csv_and_binary_agree(tmp_path):
    rng = np.random.default_rng(0)
    lm = LogitMatrix(rng.normal(scale=3.0, size=(7, 22)))
    a = parse_logits_csv(format_logits_csv(lm))
    b = parse_logits_binary(format_logits_binary(lm))
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values, lm.values.astype(np.float32).astype(np.float64))
    (tmp_path / "x.csv").write_text(format_logits_csv(lm), encoding="utf-8")
    (tmp_path / "x.bin").write_bytes(format_logits_binary(lm))
    assert np.array_equal(load_logits(tmp_path / "x.csv").values, load_logits(tmp_path / "x.bin").values)


def test_binary_layout():
    data = format_logits_binary(LogitMatrix(np.ones((2, 22))))
    assert data[:4] == b"PHQ2"
    assert struct.unpack_from("<III", data, 4) == (1, 2, 22)
    assert len(data) == 16 + 2 * 22 * 4


@pytest.mark.parametrize("mutate", [
    lambda d: b"XXXX" + d[4:],
    lambda d: d[:4] + struct.pack("<I", 2) + d[8:],
    lambda d: d[:-1],
    lambda d: d[:12] + struct.pack("<I", 21) + d[16:],
    lambda d: d[:16] + struct.pack("<f", float("inf")) + d[20:],
])
def test_binary_errors(mutate):
    data = format_logits_binary(LogitMatrix(np.ones((2, 22))))
    with pytest.raises(FormatError):
        parse_logits_binary(mutate(data))


def test_csv_errors():
    good = format_logits_csv(LogitMatrix(np.ones((2, 22))))
    with pytest.raises(FormatError):
        parse_logits_csv("a,b\n1,2\n")
    with pytest.raises(FormatError):
        parse_logits_csv(good + "1,2\n")
    with pytest.raises(FormatError):
        parse_logits_csv(good + ",".join(["x"] * 22) + "\n")
    with pytest.raises(FormatError):
        parse_logits_csv(good + ",".join(["nan"] * 22) + "\n")
