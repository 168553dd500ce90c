"""End-to-end adaptation, configuration, the two-condition evaluation and ingestion."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import arp, etv
from .audio import AudioClip, FeatureConfig
from .corpus import ROOM_T30_S, read_tuples_csv, write_tuples_csv
from .errors import StageError, ValidationError, VoiceAdaptError
from .phonetics import Lexicon
from .stats import wilcoxon_signed_rank
from .types import AnnoyanceRating, EnvironmentContext, UserProfile, VoiceParameters

AR_SPLIT_THRESHOLD = 5.0


@dataclass
class PipelineConfig:
    arp_weights: Path
    etv_weights: Path
    features: FeatureConfig = field(default_factory=FeatureConfig)
    default_user: UserProfile = field(default_factory=UserProfile)
    rooms: dict = field(default_factory=lambda: dict(ROOM_T30_S))
    ar_threshold: float = AR_SPLIT_THRESHOLD

    def validate(self):
        for name in ("arp_weights", "etv_weights"):
            p = Path(getattr(self, name))
            if not p.is_file():
                raise ValidationError(
                    f"{name} file not found: {p} (train one with `voiceadapt "
                    f"{name.split('_')[0]} train ... --out {p}`)"
                )
        for room, t30 in self.rooms.items():
            if not (isinstance(t30, (int, float)) and t30 > 0):
                raise ValidationError(f"room {room!r}: T30 must be a positive number")
        if not 1.0 < self.ar_threshold <= 10.0:
            raise ValidationError("ar_threshold must be in (1, 10]")
        return self


def load_config(path) -> PipelineConfig:
    """Read a YAML pipeline config; relative paths resolve against its folder."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML ({exc})") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    known = {"arp_weights", "etv_weights", "features", "default_user", "rooms", "ar_threshold"}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")
    for key in ("arp_weights", "etv_weights"):
        if key not in raw:
            raise ValidationError(f"{path}: missing {key}")
    base = path.resolve().parent
    cfg = PipelineConfig(
        arp_weights=base / raw["arp_weights"],
        etv_weights=base / raw["etv_weights"],
        features=FeatureConfig.from_dict(raw.get("features") or {}),
        default_user=UserProfile(**(raw.get("default_user") or {})),
        rooms={str(k): float(v) for k, v in (raw.get("rooms") or ROOM_T30_S).items()},
        ar_threshold=float(raw.get("ar_threshold", AR_SPLIT_THRESHOLD)),
    )
    return cfg.validate()


@dataclass
class AdaptationReport:
    clip: str
    annoyance: AnnoyanceRating
    context: EnvironmentContext
    user: UserProfile
    voice: VoiceParameters
    timings_s: dict

    def to_dict(self, timings=True) -> dict:
        d = {
            "clip": self.clip,
            "ar_raw": self.annoyance.raw,
            "ar": self.annoyance.value,
            "context": {"ar": self.context.annoyance, "distance_cm": self.context.distance_cm,
                        "t30_s": self.context.t30_s, "extrapolated": self.context.extrapolated},
            "user": {"hearing_difficulty": self.user.hearing_difficulty,
                     "english_cefr": self.user.english_cefr},
            "voice": self.voice.to_dict(),
        }
        if timings:
            d["timings_s"] = dict(self.timings_s)
        return d


class Pipeline:
    """Loaded models plus config; ``adapt`` is read-only and thread-safe."""

    def __init__(self, config: PipelineConfig, arp_weights=None, etv_weights=None):
        self.config = config
        try:
            self.arp = arp_weights if arp_weights is not None else arp.load_arp(config.arp_weights)
            self.etv = etv_weights if etv_weights is not None else etv.load_etv(config.etv_weights)
        except VoiceAdaptError as exc:
            raise StageError("load", exc) from exc
        self.features = arp.weights_features(self.arp)

    @classmethod
    def from_config_file(cls, path) -> "Pipeline":
        return cls(load_config(path))

    def room_t30(self, room: str) -> float:
        if room not in self.config.rooms:
            raise ValidationError(f"unknown room {room!r}; known: {sorted(self.config.rooms)}")
        return self.config.rooms[room]

    def adapt(self, clip: AudioClip, user: UserProfile | None = None, distance_cm: float = 200.0,
              t30_s: float | None = None, room: str | None = None, name: str = "<clip>") -> AdaptationReport:
        user = user or self.config.default_user
        if t30_s is None:
            if room is None:
                raise ValidationError("give t30_s or a room name")
            t30_s = self.room_t30(room)
        timings = {}

        def stage(label, fn):
            t0 = time.perf_counter()
            try:
                out = fn()
            except VoiceAdaptError as exc:
                raise StageError(label, exc) from exc
            timings[label] = max(time.perf_counter() - t0, 1e-9)
            return out

        mat = stage("features", lambda: arp.clip_features(clip, self.features))
        rating = stage("arp", lambda: arp.predict_from_features(self.arp, mat))
        context = stage("context", lambda: EnvironmentContext(rating.value, float(distance_cm), float(t30_s)))
        voice = stage("etv", lambda: etv.adapt_voice(self.etv, context, user))
        timings["total"] = sum(timings.values())
        return AdaptationReport(name, rating, context, user, voice, timings)


def adapt(clip, user, distance_cm, t30_s, config: PipelineConfig) -> AdaptationReport:
    return Pipeline(config).adapt(clip, user, distance_cm, t30_s)


# --------------------------------------------------------------------------
# two-condition evaluation
# --------------------------------------------------------------------------


def session_of(t, threshold=AR_SPLIT_THRESHOLD) -> str:
    return "high" if t.context.annoyance >= threshold else "low"


def _participant_means(tuples, threshold, stratum, attr):
    groups = {}
    for t in tuples:
        s = session_of(t, threshold)
        if stratum != "all" and s != stratum:
            continue
        groups.setdefault(t.subject_id, []).append(getattr(t, attr))
    return {k: float(np.mean(v)) for k, v in groups.items()}


def _cell(tuples, attr):
    v = np.array([getattr(t, attr) for t in tuples], dtype=np.float64)
    if v.size == 0:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0, "n": int(v.size)}


def check_pairing(fixed, adaptive, threshold=AR_SPLIT_THRESHOLD):
    keys_f = {(t.subject_id, session_of(t, threshold)) for t in fixed}
    keys_a = {(t.subject_id, session_of(t, threshold)) for t in adaptive}
    offenders = sorted(keys_f ^ keys_a)
    if offenders:
        listed = ", ".join(f"{s}/{sess} ({'fixed' if (s, sess) in keys_f else 'adaptive'} only)"
                           for s, sess in offenders)
        raise ValidationError(f"unpaired participant sessions: {listed}")


def run_evaluation(tuples_fixed, tuples_adaptive, threshold: float = AR_SPLIT_THRESHOLD) -> dict:
    """Table of word-level mean and std per condition and AR stratum, plus
    Wilcoxon tests (fixed minus adaptive) on per-participant means."""
    check_pairing(tuples_fixed, tuples_adaptive, threshold)
    measures = {"similarity": "phonetic_similarity", "ux": "ux"}
    table, tests = [], {}
    for stratum in ("all", "low", "high"):
        for cond, rows in (("fixed", tuples_fixed), ("adaptive", tuples_adaptive)):
            sel = [t for t in rows if stratum == "all" or session_of(t, threshold) == stratum]
            table.append({"stratum": stratum, "condition": cond,
                          **{m: _cell(sel, attr) for m, attr in measures.items()}})
        for m, attr in measures.items():
            fm = _participant_means(tuples_fixed, threshold, stratum, attr)
            am = _participant_means(tuples_adaptive, threshold, stratum, attr)
            subjects = sorted(fm)
            if not subjects:
                continue
            res = wilcoxon_signed_rank([fm[s] for s in subjects], [am[s] for s in subjects])
            tests[f"{m}/{stratum}"] = res.to_dict()
    return {"threshold": threshold, "table": table, "wilcoxon": tests}


def format_table(report) -> list:
    """Rows like ``all fixed 0.73 ± 0.31 6.27 ± 2.42``."""
    lines = []
    for row in report["table"]:
        s, u = row["similarity"], row["ux"]
        lines.append(f"{row['stratum']:<5} {row['condition']:<9} "
                     f"{s['mean']:.2f} ± {s['std']:.2f}  {u['mean']:.2f} ± {u['std']:.2f}")
    return lines


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------

INGEST_KINDS = ("delta-manifest", "study-tuples", "lexicon")


def ingest(kind: str, path, audio_dir=None):
    """Validate and load one of the supported dataset kinds."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: file not found")
    if kind == "delta-manifest":
        return arp.load_delta_manifest(path, audio_dir if audio_dir is not None else path.parent)
    if kind == "study-tuples":
        return read_tuples_csv(path)
    if kind == "lexicon":
        return Lexicon.load(path)
    raise ValidationError(f"unknown ingest kind {kind!r}; expected one of {INGEST_KINDS}")


def export_tuples(path, tuples) -> None:
    write_tuples_csv(path, tuples)
