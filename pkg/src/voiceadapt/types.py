"""Domain records shared by the models, the statistics and the pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# closed ranges of the robot voice engine
VOICE_RANGES = {
    "volume": (0.0, 2.0),
    "pitch": (0.5, 2.0),
    "speed": (0.4, 4.0),
    "double_voice_level": (0.0, 4.0),
}
VOICE_ORDER = ("volume", "pitch", "speed", "double_voice_level")

AR_RANGE = (1.0, 10.0)
UX_RANGE = (1.0, 10.0)
DISTANCE_RANGE_CM = (60.0, 500.0)
HEARING_RANGE = (1, 5)
CEFR_RANGE = (1, 6)

STUDY_CORPUS_SIZE = 5442


def _check_range(name, value, lo, hi):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value)):
        raise ValidationError(f"{name} must be a finite number, got {value!r}")
    if not lo <= value <= hi:
        raise ValidationError(f"{name}={value} outside [{lo}, {hi}]")


def clamp_ar(raw: float) -> float:
    return min(AR_RANGE[1], max(AR_RANGE[0], float(raw)))


@dataclass(frozen=True)
class AnnoyanceRating:
    """Predicted annoyance: ``value`` is clamped to [1, 10], ``raw`` is not."""

    value: float
    raw: float

    @classmethod
    def from_raw(cls, raw: float) -> "AnnoyanceRating":
        return cls(clamp_ar(raw), float(raw))


@dataclass(frozen=True)
class VoiceParameters:
    volume: float = 1.0
    pitch: float = 1.0
    speed: float = 1.0
    double_voice_level: float = 0.0

    def __post_init__(self):
        for name in VOICE_ORDER:
            _check_range(name, getattr(self, name), *VOICE_RANGES[name])

    @classmethod
    def clamped(cls, volume, pitch, speed, double_voice_level) -> "VoiceParameters":
        vals = dict(volume=volume, pitch=pitch, speed=speed, double_voice_level=double_voice_level)
        out = {}
        for k, v in vals.items():
            lo, hi = VOICE_RANGES[k]
            v = float(v)
            if not math.isfinite(v):
                v = (lo + hi) / 2
            out[k] = min(hi, max(lo, v))
        return cls(**out)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in VOICE_ORDER])

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in VOICE_ORDER}


DEFAULT_VOICE = VoiceParameters()


@dataclass(frozen=True)
class UserProfile:
    hearing_difficulty: int = 2
    english_cefr: int = 5

    def __post_init__(self):
        _check_range("hearing_difficulty", self.hearing_difficulty, *HEARING_RANGE)
        _check_range("english_cefr", self.english_cefr, *CEFR_RANGE)


@dataclass(frozen=True)
class EnvironmentContext:
    """Annoyance rating, user distance and room T30.

    Distances outside the studied 60-500 cm are accepted but flagged through
    :attr:`extrapolated`.
    """

    annoyance: float
    distance_cm: float
    t30_s: float

    def __post_init__(self):
        _check_range("annoyance", self.annoyance, *AR_RANGE)
        if not (math.isfinite(self.distance_cm) and self.distance_cm > 0):
            raise ValidationError(f"distance_cm must be positive, got {self.distance_cm}")
        if not (math.isfinite(self.t30_s) and self.t30_s > 0):
            raise ValidationError(f"t30_s must be positive, got {self.t30_s}")

    @property
    def extrapolated(self) -> bool:
        lo, hi = DISTANCE_RANGE_CM
        return not lo <= self.distance_cm <= hi


@dataclass(frozen=True)
class InteractionTuple:
    """One study observation: a word spoken under given conditions."""

    subject_id: str
    word_id: str
    voice: VoiceParameters
    context: EnvironmentContext
    user: UserProfile
    phonetic_similarity: float
    ux: float

    def __post_init__(self):
        if not str(self.subject_id) or not str(self.word_id):
            raise ValidationError("subject_id and word_id must be non-empty")
        _check_range("distance_cm", self.context.distance_cm, *DISTANCE_RANGE_CM)
        _check_range("phonetic_similarity", self.phonetic_similarity, 0.0, 1.0)
        _check_range("ux", self.ux, *UX_RANGE)

    # flat column view used by CSV I/O and the design matrix
    def row(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "word_id": self.word_id,
            "volume": self.voice.volume,
            "pitch": self.voice.pitch,
            "emphasis": self.voice.double_voice_level,
            "speed": self.voice.speed,
            "ar": self.context.annoyance,
            "t30_s": self.context.t30_s,
            "distance_cm": self.context.distance_cm,
            "english_cefr": self.user.english_cefr,
            "hearing_difficulty": self.user.hearing_difficulty,
            "phonetic_similarity": self.phonetic_similarity,
            "ux": self.ux,
        }

    @classmethod
    def from_row(cls, r: dict) -> "InteractionTuple":
        return cls(
            subject_id=str(r["subject_id"]),
            word_id=str(r["word_id"]),
            voice=VoiceParameters(volume=float(r["volume"]), pitch=float(r["pitch"]),
                                  speed=float(r["speed"]), double_voice_level=float(r["emphasis"])),
            context=EnvironmentContext(annoyance=float(r["ar"]), distance_cm=float(r["distance_cm"]),
                                       t30_s=float(r["t30_s"])),
            user=UserProfile(hearing_difficulty=_as_int(r["hearing_difficulty"], "hearing_difficulty"),
                             english_cefr=_as_int(r["english_cefr"], "english_cefr")),
            phonetic_similarity=float(r["phonetic_similarity"]),
            ux=float(r["ux"]),
        )


def _as_int(v, name):
    f = float(v)
    if f != int(f):
        raise ValidationError(f"{name} must be an integer, got {v!r}")
    return int(f)


STUDY_COLUMNS = (
    "subject_id", "word_id", "volume", "pitch", "emphasis", "speed", "ar", "t30_s",
    "distance_cm", "english_cefr", "hearing_difficulty", "phonetic_similarity", "ux",
)


def tuples_to_columns(tuples) -> dict:
    """Column-wise numpy arrays (ids as object arrays) for a list of tuples."""
    rows = [t.row() for t in tuples]
    cols = {}
    for name in STUDY_COLUMNS:
        vals = [r[name] for r in rows]
        cols[name] = np.array(vals, dtype=object if name in ("subject_id", "word_id") else np.float64)
    return cols
