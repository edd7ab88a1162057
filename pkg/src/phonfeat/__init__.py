"""Phonological feature labelling, gated decoding and segment-level evaluation."""

__version__ = "0.1.0"

from .errors import InputError, PhonfeatError, UnknownSymbol  # noqa: E402
from .featuremap import (  # noqa: E402
    DIM_NAMES, NUM_DIMS, SILENCE_VECTOR, FeatureTable, FeatureVector, default_table,
    from_dense, load_table, map_phone, to_dense,
)
from .phoneset import CanonicalPhone, ParsedPhone, canonicalize, canonicalize_label, parse_phone  # noqa: E402
from .alignment import (  # noqa: E402
    FrameLabelSeq, PhoneSegment, read_alignment, segments_to_frames, write_textgrid,
)
from .decode import LogitMatrix, aggregate_and_decode, decode_frames, load_logits  # noqa: E402
from .baseline import align, ctc_greedy, per, project_to_segments  # noqa: E402
from .metrics import count, format_report, macro_f1, report  # noqa: E402

__all__ = [
    "__version__", "InputError", "PhonfeatError", "UnknownSymbol",
    "DIM_NAMES", "NUM_DIMS", "SILENCE_VECTOR", "FeatureTable", "FeatureVector",
    "default_table", "from_dense", "load_table", "map_phone", "to_dense",
    "CanonicalPhone", "ParsedPhone", "canonicalize", "canonicalize_label", "parse_phone",
    "FrameLabelSeq", "PhoneSegment", "read_alignment", "segments_to_frames", "write_textgrid",
    "LogitMatrix", "aggregate_and_decode", "decode_frames", "load_logits",
    "align", "ctc_greedy", "per", "project_to_segments",
    "count", "format_report", "macro_f1", "report",
]
