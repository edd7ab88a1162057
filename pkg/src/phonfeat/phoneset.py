"""Parse forced-alignment phone labels and canonicalize them per language.

Canonicalization runs in a fixed order: universal normalization (stress,
length and nasalization marks are dropped, tie-barred affricates are fused)
followed by a per-language rewrite table keyed on the residual form.
Anything that still carries a diacritic afterwards, or is missing from the
feature table, is rejected.
"""

from __future__ import annotations

import enum
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ParseError, UnknownLanguage, UnknownSymbol
from .featuremap import SILENCE, FeatureTable, default_table

log = logging.getLogger(__name__)

LANGUAGES = ("de", "en", "es", "cs", "fr", "it", "ru", "generic")

SILENCE_LABELS = frozenset({"", "sil", "sp", "spn", "<sil>"})


class Modifier(enum.Enum):
    # definition order is the canonical rendering order
    STRESS = "stress"
    TIE = "tie-bar"
    SYLLABIC = "syllabicity"
    NASAL = "nasalization"
    RHOTIC = "rhoticity"
    ASPIRATION = "aspiration"
    LENGTH = "length"
    # beyond the core set; all but LOWERED are stripped universally
    DENTAL = "dental"
    NONSYLLABIC = "non-syllabic"
    PALATALIZED = "palatalization"
    LOWERED = "lowered"


_MODIFIER_CHARS = {
    "\u02c8": Modifier.STRESS,       # primary stress
    "\u02cc": Modifier.STRESS,       # secondary stress
    "\u0361": Modifier.TIE,          # tie above
    "\u035c": Modifier.TIE,          # tie below
    "\u0329": Modifier.SYLLABIC,     # vertical line below
    "\u030d": Modifier.SYLLABIC,     # vertical line above
    "\u0303": Modifier.NASAL,        # tilde
    "\u02de": Modifier.RHOTIC,       # rhotic hook
    "\u02b0": Modifier.ASPIRATION,   # superscript h
    "\u02d0": Modifier.LENGTH,       # long
    "\u02d1": Modifier.LENGTH,       # half-long
    "\u032a": Modifier.DENTAL,       # bridge below
    "\u032f": Modifier.NONSYLLABIC,  # inverted breve below
    "\u02b2": Modifier.PALATALIZED,  # superscript j
    "\u031e": Modifier.LOWERED,      # down tack below
}

# one representative mark per modifier for rendering
_RENDER = {
    Modifier.STRESS: "\u02c8",
    Modifier.TIE: "\u0361",
    Modifier.SYLLABIC: "\u0329",
    Modifier.NASAL: "\u0303",
    Modifier.RHOTIC: "\u02de",
    Modifier.ASPIRATION: "\u02b0",
    Modifier.LENGTH: "\u02d0",
    Modifier.DENTAL: "\u032a",
    Modifier.NONSYLLABIC: "\u032f",
    Modifier.PALATALIZED: "\u02b2",
    Modifier.LOWERED: "\u031e",
}

UNIVERSAL_STRIP = frozenset({
    Modifier.STRESS, Modifier.LENGTH, Modifier.NASAL, Modifier.TIE,
    Modifier.DENTAL, Modifier.NONSYLLABIC, Modifier.PALATALIZED,
})

# single code point affricate ligatures expand to a tie-barred pair
_LIGATURES = {
    "\u02a7": "t\u0283",   # tesh
    "\u02a4": "d\u0292",   # dezh
    "\u02a6": "ts",
    "\u02a3": "dz",
    "\u02a8": "t\u0255",
    "\u02a5": "d\u0291",
}

_ALIASES = {
    "\u0261": "g",        # script g
    ":": "\u02d0",        # ASCII colon used as length mark
}

_IPA_LETTERS = frozenset(
    "abcdefghijklmnopqrstuvwxyz"
    "æɐɑɒɓɔɕçɗɖðəɘɚɛɜɝɞɟʄɠɢʛɦɧħɥʜɨɪʝɭɬɫɮʟɱɯɰŋɳɲɴøɵɸθœɶɹɺɾɻʀʁɽʂʃʈʉʊʋⱱʌɣɤʍχʎʏʑʐʒʔʡʕʢβ"
)


@dataclass(frozen=True)
class ParsedPhone:
    base: str
    modifiers: frozenset = field(default_factory=frozenset)

    @property
    def is_silence(self) -> bool:
        return self.base == SILENCE

    def render(self, drop=frozenset()) -> str:
        """Normalized string: stress, base (tie-bar after its first letter), marks."""
        mods = [m for m in Modifier if m in self.modifiers and m not in drop]
        out = []
        if Modifier.STRESS in mods:
            out.append(_RENDER[Modifier.STRESS])
        base = self.base
        if Modifier.TIE in mods and len(base) >= 2:
            base = base[0] + _RENDER[Modifier.TIE] + base[1:]
        out.append(base)
        out.extend(_RENDER[m] for m in mods if m not in (Modifier.STRESS, Modifier.TIE))
        return "".join(out)


@dataclass(frozen=True)
class CanonicalPhone:
    symbol: str
    source_lang: str = "generic"

    @property
    def is_silence(self) -> bool:
        return self.symbol == SILENCE

    def __str__(self):
        return self.symbol


def check_language(lang: str) -> str:
    if lang not in LANGUAGES:
        raise UnknownLanguage(f"unknown language {lang!r}; expected one of {', '.join(LANGUAGES)}")
    return lang


def parse_phone(label: str) -> ParsedPhone:
    """Split a raw label into IPA base letters and a set of modifier codes."""
    text = label.strip()
    if text in SILENCE_LABELS:
        return ParsedPhone(SILENCE)
    text = unicodedata.normalize("NFD", text)
    # ç is the one IPA letter NFD splits apart
    text = text.replace("c\u0327", "\u00e7")
    base = []
    mods = set()
    for ch in text:
        ch = _ALIASES.get(ch, ch)
        if ch in _LIGATURES:
            base.append(_LIGATURES[ch])
            mods.add(Modifier.TIE)
        elif ch in _IPA_LETTERS:
            base.append(ch)
        elif ch in _MODIFIER_CHARS:
            mods.add(_MODIFIER_CHARS[ch])
        else:
            raise UnknownSymbol(ch, f"in label {label!r}")
    if not base:
        raise UnknownSymbol(label, "label has no base letter")
    return ParsedPhone("".join(base), frozenset(mods))


# residual form (after universal stripping) -> table symbol
DEFAULT_RULES: dict[str, dict[str, str]] = {
    "de": {
        "pʰ": "p", "tʰ": "t", "kʰ": "k",
        "l̩": "l", "n̩": "n", "m̩": "m",
    },
    "en": {
        "ɾ": "ɹ",
        "ɚ": "ə", "ɝ": "ə", "ə˞": "ə", "ɜ˞": "ə",
    },
    "es": {
        # approximant allophones surface as the fricative symbols
        "β̞": "β", "ð̞": "ð", "ɣ̞": "ɣ",
    },
    "cs": {},
    "fr": {},
    "it": {},
    "ru": {},
    "generic": {},
}


def _residual(phone: ParsedPhone) -> str:
    return phone.render(drop=UNIVERSAL_STRIP)


def _normalize_key(text: str) -> str:
    return _residual(parse_phone(text))


@dataclass(frozen=True)
class RuleSet:
    rules: Mapping[str, Mapping[str, str]]

    def lookup(self, lang: str, residual: str) -> str:
        return self.rules.get(lang, {}).get(residual, residual)


def _build_rules(raw: Mapping[str, Mapping[str, str]]) -> RuleSet:
    return RuleSet({lang: {_normalize_key(k): v for k, v in table.items()}
                    for lang, table in raw.items()})


DEFAULT_RULESET = _build_rules(DEFAULT_RULES)


def load_rule_overrides(path, base: RuleSet = DEFAULT_RULESET) -> RuleSet:
    """Read ``lang<TAB>from<TAB>to`` lines; each replaces or adds one rule."""
    merged = {lang: dict(table) for lang, table in base.rules.items()}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split("\t")
        if len(cells) != 3:
            raise ParseError(lineno, f"{path}: expected lang<TAB>from<TAB>to")
        lang, src, dst = (c.strip() for c in cells)
        check_language(lang)
        merged.setdefault(lang, {})[_normalize_key(src)] = unicodedata.normalize("NFC", dst)
    return RuleSet(merged)


def canonicalize(phone: ParsedPhone, lang: str, table: FeatureTable | None = None,
                 rules: RuleSet = DEFAULT_RULESET) -> CanonicalPhone:
    check_language(lang)
    if table is None:
        table = default_table()
    if phone.is_silence:
        return CanonicalPhone(SILENCE, lang)
    residual = _residual(phone)
    symbol = rules.lookup(lang, residual)
    symbol = unicodedata.normalize("NFC", symbol)
    if symbol not in table:
        raise UnknownSymbol(symbol, f"no {lang} rule maps it into the feature table")
    return CanonicalPhone(symbol, lang)


def canonicalize_label(label: str, lang: str, table: FeatureTable | None = None,
                       rules: RuleSet = DEFAULT_RULESET,
                       unknown_as_silence: bool = False) -> CanonicalPhone:
    """parse_phone + canonicalize, optionally coercing unknown phones to silence."""
    try:
        return canonicalize(parse_phone(label), lang, table, rules)
    except UnknownSymbol as exc:
        if not unknown_as_silence:
            raise
        log.warning("mapping %r to silence: %s", label, exc)
        return CanonicalPhone(SILENCE, lang)
