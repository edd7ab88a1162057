import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phonfeat.alignment import (
    FrameLabelSeq, PhoneSegment, format_frame_csv, frame_span, frames_to_segments, num_frames,
    parse_frame_csv, read_alignment, read_textgrid, segments_to_frames, write_textgrid,
)
from phonfeat.errors import FormatError, MissingTier
from phonfeat.featuremap import SILENCE_VECTOR, default_table, map_phone
from phonfeat.phoneset import CanonicalPhone

from conftest import FIXTURE_LANGS, TEXTGRIDS

TABLE = default_table()
PHONES = sorted(s for s in TABLE.symbols() if s != "sil")


def seg(a, b, sym):
    return PhoneSegment(a, b, CanonicalPhone(sym))


def grid(intervals, xmax=None, tier="phones"):
    xmax = intervals[-1][1] if xmax is None else xmax
    lines = ['File type = "ooTextFile"', 'Object class = "TextGrid"', "", "xmin = 0",
             f"xmax = {xmax}", "tiers? <exists>", "size = 1", "item []:", "    item [1]:",
             '        class = "IntervalTier"', f'        name = "{tier}"', "        xmin = 0",
             f"        xmax = {xmax}", f"        intervals: size = {len(intervals)}"]
    for k, (a, b, text) in enumerate(intervals, 1):
        lines += [f"        intervals [{k}]:", f"            xmin = {a}", f"            xmax = {b}",
                  f'            text = "{text}"']
    return "\n".join(lines) + "\n"


@pytest.mark.parametrize("dur, n", [(0.0, 0), (0.019, 0), (0.02, 1), (1.0, 50), (2.9, 145), (0.3, 15)])
def test_num_frames(dur, n):
    assert num_frames(dur) == n


@pytest.mark.parametrize("start, end, span", [
    (0.0, 0.02, (0, 1)),
    (0.01, 0.03, (0, 1)),     # center 0.01 sits on the start boundary: belongs here
    (0.0, 0.01, (0, 0)),      # center 0.01 sits on the end boundary: belongs to the next
    (0.011, 0.019, (1, 1)),   # no center inside
    (0.1, 0.3, (5, 15)),
    (0.3, 0.5, (15, 25)),
])
def test_frame_span_center_rule(start, end, span):
    assert frame_span(start, end, 50.0) == span


def test_frame_span_clips_to_matrix():
    assert frame_span(0.9, 1.5, 50.0, n_frames=50) == (45, 50)


@settings(max_examples=200)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=12))
def test_adjacent_segments_partition_frames(widths):
    # every frame center lands in exactly one of a contiguous run of segments
    bounds = np.cumsum([0] + widths) * 0.013
    spans = [frame_span(a, b, 50.0) for a, b in zip(bounds[:-1], bounds[1:])]
    covered = [i for a, b in spans for i in range(a, b)]
    assert covered == list(range(spans[0][0], spans[-1][1]))


def test_segments_to_frames_labels():
    segs = [seg(0.0, 0.1, "sil"), seg(0.1, 0.2, "p"), seg(0.2, 0.3, "a")]
    frames = segments_to_frames(segs, TABLE, 50.0, 0.34)
    assert len(frames) == 17
    assert frames.labels[:5] == (SILENCE_VECTOR,) * 5
    assert frames.labels[5:10] == (map_phone(TABLE, "p"),) * 5
    assert frames.labels[10:15] == (map_phone(TABLE, "a"),) * 5
    assert frames.labels[15:] == (SILENCE_VECTOR,) * 2


def test_frame_csv_round_trip():
    segs = [seg(0.0, 0.1, "ʃ"), seg(0.1, 0.2, "ɔʏ"), seg(0.22, 0.3, "h")]
    frames = segments_to_frames(segs, TABLE)
    back = parse_frame_csv(format_frame_csv(frames))
    assert back == frames


@pytest.mark.parametrize("text", [
    "", "a,b\n",
    ",".join(["silence"] * 22) + "\n",
])
def test_frame_csv_bad_header(text):
    with pytest.raises(FormatError):
        parse_frame_csv(text)


def test_frame_csv_bad_row():
    frames = segments_to_frames([seg(0.0, 0.04, "p")], TABLE)
    text = format_frame_csv(frames)
    bad = text.replace("0,1,0,0", "1,1,0,0", 1)
    with pytest.raises(FormatError) as info:
        parse_frame_csv(bad)
    assert info.value.line == 2


@pytest.mark.parametrize("lang", FIXTURE_LANGS)
def test_fixture_textgrids_have_both_tiers(lang):
    tg = read_textgrid((TEXTGRIDS / f"{lang}.TextGrid").read_bytes())
    assert [t.name for t in tg.tiers] == ["words", "phones"]
    utt = read_alignment((TEXTGRIDS / f"{lang}.TextGrid").read_bytes(), tier_name="phones", lang=lang)
    assert utt.duration == tg.xmax


def test_utf16_matches_utf8():
    a = read_alignment((TEXTGRIDS / "en.TextGrid").read_bytes(), lang="en")
    b = read_alignment((TEXTGRIDS / "en_utf16.TextGrid").read_bytes(), lang="en")
    assert a == b


def test_utf8_bom():
    data = (TEXTGRIDS / "de.TextGrid").read_bytes()
    assert read_alignment(b"\xef\xbb\xbf" + data, lang="de") == read_alignment(data, lang="de")


def test_missing_tier():
    with pytest.raises(MissingTier):
        read_alignment(grid([(0, 0.1, "a")], tier="segments"))


def test_short_format_rejected():
    short = 'File type = "ooTextFile"\nObject class = "TextGrid"\n\n0\n1\n<exists>\n1\n"IntervalTier"\n"phones"\n0\n1\n1\n0\n1\n"a"\n'
    with pytest.raises(FormatError, match="short"):
        read_textgrid(short)


def test_overlap_reports_line():
    text = grid([(0, 0.2, "a"), (0.1, 0.3, "p")])
    with pytest.raises(FormatError) as info:
        read_alignment(text)
    assert text.splitlines()[info.value.line - 1].strip() == "intervals [2]:"


def test_escaped_quotes_and_multiline_text():
    text = grid([(0, 0.1, 'say ""hi""'), (0.1, 0.2, "two\nlines")])
    tg = read_textgrid(text)
    labels = [iv.text for iv in tg.interval_tier("phones").intervals]
    assert labels == ['say "hi"', "two\nlines"]


def test_text_tiers_are_skipped():
    text = grid([(0, 0.1, "a")]).replace("size = 1", "size = 2", 1)
    text += ('    item [2]:\n        class = "TextTier"\n        name = "events"\n'
             '        xmin = 0\n        xmax = 0.1\n        points: size = 1\n'
             '        points [1]:\n            number = 0.05\n            mark = "x"\n')
    tg = read_textgrid(text)
    assert [t.name for t in tg.tiers] == ["phones"]


def test_zero_length_and_empty_intervals():
    utt = read_alignment(grid([(0, 0.1, ""), (0.1, 0.1, "p"), (0.1, 0.2, "a")]))
    assert [s.phone.symbol for s in utt.segments] == ["sil", "a"]


def test_unknown_phone_in_textgrid():
    text = grid([(0, 0.1, "ʘ")])
    with pytest.raises(Exception):
        read_alignment(text)
    utt = read_alignment(text, unknown_as_silence=True)
    assert utt.segments[0].is_silence


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 15), st.integers(0, 4), st.sampled_from(PHONES)),
                min_size=1, max_size=10))
def test_write_read_round_trip(items):
    t, segs = 0.0, []
    for width, gap, sym in items:
        t += gap * 0.01
        segs.append(seg(t, t + width * 0.01, sym))
        t += width * 0.01
    text = write_textgrid(segs, duration=t + 0.05)
    back = [s for s in read_alignment(text).segments if not s.is_silence]
    assert back == segs


def _boundaries(segments):
    out = []
    for a, b in zip(segments, segments[1:]):
        va = SILENCE_VECTOR if a.is_silence else map_phone(TABLE, a.phone)
        vb = SILENCE_VECTOR if b.is_silence else map_phone(TABLE, b.phone)
        if va != vb:
            out.append(a.end)
    return out


@pytest.mark.parametrize("lang", FIXTURE_LANGS)
def test_frames_recover_boundaries(lang):
    utt = read_alignment((TEXTGRIDS / f"{lang}.TextGrid").read_bytes(), lang=lang)
    segs = utt.segments
    if segs[0].start > 0:
        segs = [seg(0.0, segs[0].start, "sil")] + segs
    frames = segments_to_frames(utt.segments, TABLE, 50.0, utt.duration)
    runs = frames_to_segments(frames)
    ref = _boundaries(segs)
    got = [r[1] for r in runs[:-1]]
    assert len(ref) == len(got)
    assert max(abs(a - b) for a, b in zip(ref, got)) <= 0.02 + 1e-9


def test_frames_to_segments_runs():
    p, a = map_phone(TABLE, "p"), map_phone(TABLE, "a")
    frames = FrameLabelSeq(50.0, (p, p, a, a, a, SILENCE_VECTOR))
    assert frames_to_segments(frames) == [(0.0, 0.04, p), (0.04, 0.1, a), (0.1, 0.12, SILENCE_VECTOR)]
    assert math.isclose(frames_to_segments(frames)[-1][1], len(frames) / 50)
