"""Synthetic data generators: study tuples, evaluation fixtures, ambient clips.

No real interaction data ship with the package.  ``generate_study_corpus``
draws tuples whose expected similarity and UX follow log-linear models with
fixed effect directions, so the analysis code has something realistic to run
on.  Only the signs of the effects are meaningful.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import AudioClip, FeatureConfig
from .errors import IngestError, ValidationError
from .types import (
    STUDY_COLUMNS,
    STUDY_CORPUS_SIZE,
    VOICE_ORDER,
    VOICE_RANGES,
    EnvironmentContext,
    InteractionTuple,
    UserProfile,
    VoiceParameters,
)

ROOM_T30_S = {
    "open_plan": 0.78,
    "meeting_room": 0.56,
    "classroom": 0.43,
    "office": 0.19,
    "lab": 0.32,
    "anechoic": 0.04,
}


def cnc_words() -> list:
    text = resources.files("voiceadapt").joinpath("data/cnc_words.txt").read_text()
    return [line.split()[1] for line in text.splitlines() if line.strip()]


# --------------------------------------------------------------------------
# study corpus
# --------------------------------------------------------------------------

# raw-scale log-mean effects; only the signs matter
SP_EFFECTS = {
    "(intercept)": -0.05, "volume": -0.03, "pitch": -0.15, "emphasis": -0.02, "speed": -0.06,
    "ar": -0.04, "t30_s": -0.6, "distance_cm": -0.0003, "english_cefr": 0.02,
    "hearing_difficulty": -0.02, "volume:t30_s": 0.5,
}
UX_EFFECTS = {
    "(intercept)": 2.35, "volume": -0.06, "pitch": -0.1, "emphasis": -0.01, "speed": 0.0,
    "ar": -0.03, "t30_s": -0.4, "distance_cm": -0.0005, "english_cefr": -0.04,
    "hearing_difficulty": 0.0, "volume:t30_s": 0.25,
}


@dataclass(frozen=True)
class CorpusSpec:
    n_tuples: int = STUDY_CORPUS_SIZE
    n_subjects: int = 39
    rounds: int = 4  # silence plus three ambient sounds
    n_sounds: int = 11
    subject_sd_sp: float = 0.05
    word_sd_sp: float = 0.08
    subject_sd_ux: float = 0.08
    word_sd_ux: float = 0.04
    sp_miss_mean: float = 0.35  # mean similarity of imperfect responses
    sp_miss_concentration: float = 4.0
    ux_shape: float = 10.0
    seed: int = 0


def _linear(effects, row):
    return effects["(intercept)"] + sum(
        effects[k] * (row["volume"] * row["t30_s"] if k == "volume:t30_s" else row[k])
        for k in effects if k != "(intercept)"
    )


def generate_study_corpus(spec: CorpusSpec | None = None) -> list:
    """Study-style tuples: subjects in rooms, rounds of words, random voices."""
    spec = spec or CorpusSpec()
    rng = np.random.default_rng(spec.seed)
    words = cnc_words()
    n_rounds = spec.n_subjects * spec.rounds
    per_round = np.full(n_rounds, spec.n_tuples // n_rounds)
    per_round[: spec.n_tuples - per_round.sum()] += 1

    sound_ar = np.round(rng.uniform(2.0, 9.5, spec.n_sounds), 1)
    rooms = list(ROOM_T30_S.values())
    word_sp = dict(zip(words, rng.normal(0, spec.word_sd_sp, len(words))))
    word_ux = dict(zip(words, rng.normal(0, spec.word_sd_ux, len(words))))

    out = []
    r = 0
    for s in range(spec.n_subjects):
        sid = f"P{s + 1:02d}"
        hearing = int(np.clip(np.round(rng.normal(2.2, 1.0)), 1, 5))
        cefr = int(np.clip(np.round(rng.normal(4.8, 0.8)), 1, 6))
        t30 = float(rooms[s % len(rooms)])
        distance = float(np.round(rng.uniform(60, 500), 1))
        u_sp, u_ux = rng.normal(0, spec.subject_sd_sp), rng.normal(0, spec.subject_sd_ux)
        ars = [1.0] + list(rng.choice(sound_ar, spec.rounds - 1, replace=False))
        for ar in ars:
            for _ in range(per_round[r]):
                w = str(rng.choice(words))
                voice = {k: float(np.round(rng.uniform(*VOICE_RANGES[k]), 2)) for k in VOICE_ORDER}
                row = {"volume": voice["volume"], "pitch": voice["pitch"],
                       "emphasis": voice["double_voice_level"], "speed": voice["speed"], "ar": float(ar),
                       "t30_s": t30, "distance_cm": distance, "english_cefr": cefr,
                       "hearing_difficulty": hearing}
                m = math.exp(min(_linear(SP_EFFECTS, row) + u_sp + word_sp[w], 0.0))
                sp = _draw_similarity(rng, m, spec)
                mu_ux = math.exp(_linear(UX_EFFECTS, row) + u_ux + word_ux[w])
                ux = float(np.clip(np.round(rng.gamma(spec.ux_shape, mu_ux / spec.ux_shape)), 1, 10))
                out.append(InteractionTuple(
                    sid, w, VoiceParameters(**voice),
                    EnvironmentContext(float(ar), distance, t30),
                    UserProfile(hearing, cefr), sp, ux))
            r += 1
    return out


def _draw_similarity(rng, m, spec):
    """Exactly 1 with probability pi, else Beta; the overall mean is m."""
    m0 = spec.sp_miss_mean
    k = spec.sp_miss_concentration
    if m <= m0:
        return float(np.round(rng.beta(m * k, (1 - m) * k), 4))
    pi = (m - m0) / (1 - m0)
    if rng.random() < pi:
        return 1.0
    return float(np.round(min(rng.beta(m0 * k, (1 - m0) * k), 0.9999), 4))


# --------------------------------------------------------------------------
# CSV I/O
# --------------------------------------------------------------------------


def write_tuples_csv(path, tuples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(STUDY_COLUMNS))
        w.writeheader()
        for t in tuples:
            w.writerow({k: _fmt(v) for k, v in t.row().items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_tuples_csv(path) -> list:
    """Parse and validate a study-tuple CSV; row errors carry line numbers."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: file not found")
    out, errors = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise IngestError(path, [(1, "missing header")])
        unknown = [c for c in header if c not in STUDY_COLUMNS]
        missing = [c for c in STUDY_COLUMNS if c not in header]
        if unknown or missing:
            raise IngestError(path, [(1, f"unknown columns {unknown}, missing columns {missing}")])
        for line, row in enumerate(reader, start=2):
            try:
                t = InteractionTuple.from_row(row)
            except (ValueError, TypeError, KeyError) as exc:
                errors.append((line, str(exc)))
                continue
            out.append(t)
    if errors:
        raise IngestError(path, errors)
    return out


def shipped_corpus_path(name="study_corpus.csv"):
    return resources.files("voiceadapt").joinpath(f"data/{name}")


def load_shipped_corpus(name="study_corpus.csv") -> list:
    with resources.as_file(shipped_corpus_path(name)) as p:
        return read_tuples_csv(p)


# --------------------------------------------------------------------------
# evaluation fixture
# --------------------------------------------------------------------------

# per-condition, per-stratum (mean, sd) used to build the fixture; the
# stratum targets are chosen so that the pooled rows round as well
EVAL_TARGETS = {
    ("fixed", "low"): {"sp": (0.781, 0.28), "ux": (6.602, 2.36)},
    ("fixed", "high"): {"sp": (0.671, 0.33), "ux": (5.932, 2.43)},
    ("adaptive", "low"): {"sp": (0.812, 0.28), "ux": (6.858, 2.316)},
    ("adaptive", "high"): {"sp": (0.762, 0.30), "ux": (6.338, 2.516)},
}
EVAL_ROOMS = (0.04, 0.56)


def exact_moment_sample(rng, n, mean, sd, lo, hi, ones_allowed=False, max_tries=2000):
    """n values in [lo, hi] whose sample mean and sd (ddof=1) equal the targets.

    A skewed base sample is shifted and scaled to the exact moments; with
    ``ones_allowed`` a block of values pinned at ``hi`` is used for very
    skewed targets (the perfect-score mass of similarity data).
    """
    total = n * mean
    sumsq = (n - 1) * sd * sd + n * mean * mean
    ks = range(0, n) if ones_allowed else [0]
    for _ in range(max_tries):
        for k in ks:
            r = n - k
            if r < 2:
                break
            s1 = total - k * hi
            s2 = sumsq - k * hi * hi
            m = s1 / r
            var = (s2 - r * m * m) / (r - 1)
            if var <= 0:
                continue
            base = rng.beta(2.0, 2.0, r)
            z = (base - base.mean()) / base.std(ddof=1)
            v = m + math.sqrt(var) * z
            if v.min() >= lo and v.max() < hi:
                vals = np.concatenate([np.full(k, hi), v])
                return vals[rng.permutation(n)]
    raise ValidationError(f"cannot reach mean {mean}, sd {sd} in [{lo}, {hi}]")


def generate_evaluation_fixture(n_participants=27, words_per_session=15, seed=0):
    """(fixed_tuples, adaptive_tuples) for the two-condition evaluation.

    Each participant has a low-annoyance and a high-annoyance session per
    condition.  Word-level similarity and UX are drawn with exact cell means
    and standard deviations.
    """
    rng = np.random.default_rng(seed)
    words = cnc_words()
    n = n_participants * words_per_session
    subjects = []
    for p in range(n_participants):
        subjects.append({
            "id": f"E{p + 1:02d}",
            "t30": EVAL_ROOMS[p % 2],
            "distance": float(np.round(rng.uniform(100, 400), 1)),
            "hearing": int(np.clip(np.round(rng.normal(2.4, 0.6)), 1, 5)),
            "cefr": int(np.clip(np.round(rng.normal(4.8, 0.92)), 1, 6)),
            "ar": {"low": float(np.round(rng.uniform(1.5, 4.5), 1)),
                   "high": float(np.round(rng.uniform(5.5, 9.0), 1))},
        })
    out = {"fixed": [], "adaptive": []}
    for cond in ("fixed", "adaptive"):
        for stratum in ("low", "high"):
            tgt = EVAL_TARGETS[(cond, stratum)]
            sp = exact_moment_sample(rng, n, *tgt["sp"], 0.0, 1.0, ones_allowed=True)
            ux = exact_moment_sample(rng, n, *tgt["ux"], 1.0, 10.0, ones_allowed=True)
            k = 0
            for s in subjects:
                ar = s["ar"][stratum]
                for _ in range(words_per_session):
                    if cond == "fixed":
                        voice = VoiceParameters()
                    else:
                        voice = VoiceParameters.clamped(1.0 + 0.08 * ar, 1.0 - 0.02 * ar,
                                                        1.0 - 0.03 * ar, 0.1 * ar)
                    out[cond].append(InteractionTuple(
                        s["id"], str(rng.choice(words)), voice,
                        EnvironmentContext(ar, s["distance"], s["t30"]),
                        UserProfile(s["hearing"], s["cefr"]), float(sp[k]), float(ux[k])))
                    k += 1
    return out["fixed"], out["adaptive"]


# --------------------------------------------------------------------------
# ambient clips
# --------------------------------------------------------------------------


def synthetic_ambient_clips(labels, n_frames=64, features: FeatureConfig | None = None, seed=0):
    """Coloured-noise clips whose level and brightness grow with the label."""
    features = features or FeatureConfig()
    rng = np.random.default_rng(seed)
    n = features.min_samples_for_frames(n_frames)
    clips = []
    for lab in labels:
        pole = 0.9 - 0.08 * float(lab)
        x = lfilter([1.0], [1.0, -pole], rng.standard_normal(n))
        x *= 0.02 * float(lab) / np.std(x)
        clips.append(AudioClip(np.clip(x, -1, 1), features.sample_rate_hz))
    return clips
