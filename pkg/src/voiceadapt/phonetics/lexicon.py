"""Pronouncing dictionary lookup with a letter-to-sound fallback."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from ..errors import IngestError, ValidationError
from .features import INVENTORY

_WORD_RE = re.compile(r"^[A-Za-z']*[A-Za-z][A-Za-z']*$")
_VARIANT_RE = re.compile(r"\(\d+\)$")
_INVENTORY = frozenset(INVENTORY)


@dataclass(frozen=True)
class PhonemeSequence:
    phonemes: tuple
    source: str = "lexicon"  # "lexicon" or "rules" (out-of-vocabulary fallback)

    def __post_init__(self):
        bad = [p for p in self.phonemes if p not in _INVENTORY]
        if bad:
            raise ValidationError(f"phonemes not in inventory: {bad}")

    def __len__(self):
        return len(self.phonemes)

    @property
    def flagged(self) -> bool:
        return self.source != "lexicon"


def strip_stress(ph: str) -> str:
    return ph.rstrip("012")


class Lexicon:
    """Word -> list of pronunciations (tuples of stress-free ARPAbet symbols)."""

    def __init__(self, entries: dict | None = None):
        self.entries = entries or {}

    def __contains__(self, word):
        return word.lower() in self.entries

    def __len__(self):
        return len(self.entries)

    def lookup(self, word: str):
        return self.entries.get(word.lower(), [])

    def pronunciations(self):
        """Every (word, pronunciation) pair."""
        for w, prons in self.entries.items():
            for p in prons:
                yield w, p

    @classmethod
    def parse(cls, lines, source="<lexicon>") -> "Lexicon":
        entries, errors = {}, []
        for n, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith(";;;") or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                errors.append((n, "expected WORD followed by phonemes"))
                continue
            word = _VARIANT_RE.sub("", parts[0]).lower()
            phones = tuple(strip_stress(p) for p in parts[1:])
            bad = [p for p in phones if p not in _INVENTORY]
            if bad:
                errors.append((n, f"unknown phonemes {bad}"))
                continue
            prons = entries.setdefault(word, [])
            if phones in prons:
                errors.append((n, f"duplicate pronunciation for {word}"))
                continue
            prons.append(phones)
        if errors:
            raise IngestError(source, errors)
        return cls(entries)

    @classmethod
    def load(cls, path) -> "Lexicon":
        path = Path(path)
        with open(path, encoding="latin-1") as fh:
            return cls.parse(fh, str(path))

    def to_lines(self):
        out = []
        for w in sorted(self.entries):
            for i, p in enumerate(self.entries[w]):
                key = w.upper() if i == 0 else f"{w.upper()}({i + 1})"
                out.append(f"{key}  {' '.join(p)}")
        return out


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    text = resources.files("voiceadapt").joinpath("data/lexicon.txt").read_text()
    return Lexicon.parse(text.splitlines(), "data/lexicon.txt")


# greedy letter-to-sound rules: longest spelling first
_DIGRAPHS = {
    "sh": ("SH",), "ch": ("CH",), "th": ("TH",), "ph": ("F",), "ck": ("K",), "ng": ("NG",),
    "qu": ("K", "W"), "wh": ("W",), "ee": ("IY",), "ea": ("IY",), "oo": ("UW",), "ou": ("AW",),
    "ow": ("OW",), "ai": ("EY",), "ay": ("EY",), "oi": ("OY",), "oy": ("OY",), "au": ("AO",),
    "aw": ("AO",), "er": ("ER",), "ir": ("ER",), "ur": ("ER",),
}
_LETTERS = {
    "a": ("AE",), "b": ("B",), "c": ("K",), "d": ("D",), "e": ("EH",), "f": ("F",), "g": ("G",),
    "h": ("HH",), "i": ("IH",), "j": ("JH",), "k": ("K",), "l": ("L",), "m": ("M",), "n": ("N",),
    "o": ("AA",), "p": ("P",), "q": ("K",), "r": ("R",), "s": ("S",), "t": ("T",), "u": ("AH",),
    "v": ("V",), "w": ("W",), "x": ("K", "S"), "y": ("Y",), "z": ("Z",),
}
_VOWEL_LETTERS = set("aeiouy")


def letter_to_sound(word: str) -> tuple:
    """Deterministic spelling-based guess for out-of-vocabulary words."""
    w = word.lower().replace("'", "")
    # silent final e after a consonant
    if len(w) > 2 and w.endswith("e") and w[-2] not in _VOWEL_LETTERS:
        w = w[:-1]
    out, i = [], 0
    while i < len(w):
        pair = w[i:i + 2]
        if pair in _DIGRAPHS:
            out.extend(_DIGRAPHS[pair])
            i += 2
            continue
        ch = w[i]
        if i > 0 and ch == w[i - 1] and ch not in _VOWEL_LETTERS:
            i += 1  # doubled consonant
            continue
        if ch == "y":
            out.extend(("IY",) if i == len(w) - 1 and i > 0 else ("Y",))
        else:
            out.extend(_LETTERS[ch])
        i += 1
    return tuple(out)


def to_phonemes(word: str, lexicon: Lexicon | None = None):
    """All pronunciations of ``word``; falls back to spelling rules (flagged)."""
    if not isinstance(word, str) or not _WORD_RE.match(word.strip()):
        raise ValidationError(f"word must be ASCII letters (apostrophes allowed), got {word!r}")
    word = word.strip()
    lex = lexicon if lexicon is not None else default_lexicon()
    prons = lex.lookup(word)
    if prons:
        return [PhonemeSequence(p, "lexicon") for p in prons]
    return [PhonemeSequence(letter_to_sound(word), "rules")]
