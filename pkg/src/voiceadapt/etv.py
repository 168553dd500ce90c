"""Environment-to-voice MLP: context and user profile -> voice parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import TrainingDiverged, ValidationError
from .nn import layers as L
from .types import (
    AR_RANGE,
    CEFR_RANGE,
    DISTANCE_RANGE_CM,
    HEARING_RANGE,
    VOICE_ORDER,
    VOICE_RANGES,
    EnvironmentContext,
    UserProfile,
    VoiceParameters,
)

# fixed input order; stored in the weight file and checked on load
INPUT_FEATURES = ("ar", "distance_cm", "english_cefr", "hearing_difficulty", "t30_s")
OUTPUT_FEATURES = VOICE_ORDER
T30_RANGE = (0.01, 10.0)
INPUT_RANGES = {
    "ar": AR_RANGE,
    "distance_cm": DISTANCE_RANGE_CM,
    "english_cefr": CEFR_RANGE,
    "hearing_difficulty": HEARING_RANGE,
    "t30_s": T30_RANGE,
}
SIMILARITY_EXACT_TOL = 1e-9


@dataclass(frozen=True)
class EtvConfig:
    hidden: tuple = (16, 32)
    learning_rate: float = 1e-4
    epochs: int = 200
    batch_size: int = 32
    holdout_fraction: float = 0.1
    augment_copies: int = 4
    noise_scale: float = 0.05
    filter_tuples: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.holdout_fraction < 1:
            raise ValidationError("holdout_fraction must be in [0, 1)")
        if self.augment_copies < 0 or self.noise_scale < 0:
            raise ValidationError("augment_copies and noise_scale must be >= 0")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValidationError("need epochs >= 0, batch_size >= 1, learning_rate > 0")


@dataclass(frozen=True)
class EtvExample:
    """One training row: the 5 inputs and the 4 target voice parameters."""

    inputs: tuple
    targets: tuple


@dataclass
class EtvMetrics:
    history: list
    train_mse: float
    holdout_mse: float | None
    n_train: int
    n_holdout: int


def filter_training_set(tuples):
    """Tuples that were recognised perfectly and rated above 5."""
    kept = [t for t in tuples
            if abs(t.phonetic_similarity - 1.0) <= SIMILARITY_EXACT_TOL and t.ux > 5]
    if not kept:
        raise ValidationError("no admissible tuples")
    return kept


def to_example(t) -> EtvExample:
    c, u, v = t.context, t.user, t.voice
    inputs = (c.annoyance, c.distance_cm, float(u.english_cefr), float(u.hearing_difficulty), c.t30_s)
    return EtvExample(tuple(float(x) for x in inputs), tuple(float(x) for x in v.as_array()))


def context_inputs(context: EnvironmentContext, user: UserProfile) -> np.ndarray:
    return np.array([context.annoyance, context.distance_cm, user.english_cefr,
                     user.hearing_difficulty, context.t30_s], dtype=np.float64)


def _as_examples(items):
    return [it if isinstance(it, EtvExample) else to_example(it) for it in items]


def _arrays(examples):
    x = np.array([e.inputs for e in examples], dtype=np.float64).reshape(-1, len(INPUT_FEATURES))
    y = np.array([e.targets for e in examples], dtype=np.float64).reshape(-1, len(OUTPUT_FEATURES))
    return x, y


def clamp_inputs(x: np.ndarray) -> np.ndarray:
    lo = np.array([INPUT_RANGES[k][0] for k in INPUT_FEATURES])
    hi = np.array([INPUT_RANGES[k][1] for k in INPUT_FEATURES])
    return np.clip(x, lo, hi)


def augment(tuples, noise_scale: float = 0.05, copies: int = 4, seed: int = 0):
    """``copies`` jittered variants of every tuple, inputs only.

    The noise on each input feature has standard deviation
    ``noise_scale`` times that feature's spread over ``tuples``; jittered
    inputs are clamped back into their valid ranges.  Returns EtvExamples
    (jittered Likert and CEFR levels are no longer integers).
    """
    if noise_scale < 0:
        raise ValidationError("noise_scale must be >= 0")
    examples = _as_examples(tuples)
    if not examples or copies == 0:
        return []
    x, y = _arrays(examples)
    sd = x.std(axis=0)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(len(examples)):
        noise = rng.standard_normal((copies, x.shape[1])) * (noise_scale * sd)
        jittered = clamp_inputs(x[i] + noise)
        out += [EtvExample(tuple(row.tolist()), examples[i].targets) for row in jittered]
    return out


# --------------------------------------------------------------------------
# normalisation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    """z-score on inputs, min-max onto [0, 1] over the parameter ranges on outputs."""

    input_mean: tuple
    input_std: tuple

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        sd = x.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return cls(tuple(x.mean(axis=0).tolist()), tuple(sd.tolist()))

    def norm_inputs(self, x):
        return (np.asarray(x) - np.array(self.input_mean)) / np.array(self.input_std)

    def denorm_inputs(self, z):
        return np.asarray(z) * np.array(self.input_std) + np.array(self.input_mean)

    @staticmethod
    def _out_bounds():
        lo = np.array([VOICE_RANGES[k][0] for k in OUTPUT_FEATURES])
        hi = np.array([VOICE_RANGES[k][1] for k in OUTPUT_FEATURES])
        return lo, hi

    def norm_outputs(self, y):
        lo, hi = self._out_bounds()
        return (np.asarray(y) - lo) / (hi - lo)

    def denorm_outputs(self, z):
        lo, hi = self._out_bounds()
        return np.asarray(z) * (hi - lo) + lo

    def to_dict(self):
        return {"input_features": list(INPUT_FEATURES), "output_features": list(OUTPUT_FEATURES),
                "input_mean": list(self.input_mean), "input_std": list(self.input_std),
                "output_min": [VOICE_RANGES[k][0] for k in OUTPUT_FEATURES],
                "output_max": [VOICE_RANGES[k][1] for k in OUTPUT_FEATURES]}

    @classmethod
    def from_dict(cls, d):
        if tuple(d.get("input_features", ())) != INPUT_FEATURES:
            raise ValidationError(f"weight file input order {d.get('input_features')} != {list(INPUT_FEATURES)}")
        if tuple(d.get("output_features", ())) != OUTPUT_FEATURES:
            raise ValidationError(f"weight file output order {d.get('output_features')} != {list(OUTPUT_FEATURES)}")
        return cls(tuple(d["input_mean"]), tuple(d["input_std"]))


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------


def etv_layer_specs(hidden=(16, 32)):
    specs, width = [], len(INPUT_FEATURES)
    for h in hidden:
        specs += [L.fully_connected(width, h), L.relu()]
        width = h
    specs.append(L.fully_connected(width, len(OUTPUT_FEATURES)))
    return specs


def build_etv(config: EtvConfig | None = None, normalizer: Normalizer | None = None) -> nn.ModelWeights:
    config = config or EtvConfig()
    meta = {"model": "etv"}
    if normalizer is not None:
        meta["normalization"] = normalizer.to_dict()
    return nn.build_model(etv_layer_specs(config.hidden), (len(INPUT_FEATURES),),
                          np.random.default_rng(config.seed), meta)


def holdout_split(n: int, fraction: float, seed: int):
    n_hold = int(round(n * fraction))
    order = np.random.default_rng(seed).permutation(n)
    return order[n_hold:], order[:n_hold]


def train_etv(tuples, config: EtvConfig | None = None, log=None):
    """Filter, hold out, augment, normalise and fit.

    The held-out fraction is taken before augmentation so no jittered copy
    of a held-out tuple is trained on.  MSE values are in normalised output
    units (each parameter range mapped onto [0, 1]).
    Returns ``(weights, EtvMetrics)``.
    """
    config = config or EtvConfig()
    rows = filter_training_set(tuples) if config.filter_tuples else list(tuples)
    if not rows:
        raise ValidationError("no admissible tuples")
    examples = _as_examples(rows)
    tr_idx, ho_idx = holdout_split(len(examples), config.holdout_fraction, config.seed)
    train = [examples[i] for i in tr_idx]
    hold = [examples[i] for i in ho_idx]
    train = train + augment(train, config.noise_scale, config.augment_copies, config.seed)

    x_tr, y_tr = _arrays(train)
    norm = Normalizer.fit(x_tr)
    weights = build_etv(config, norm)
    xz, yz = norm.norm_inputs(x_tr), norm.norm_outputs(y_tr)
    if hold:
        x_ho, y_ho = _arrays(hold)
        x_hz, y_hz = norm.norm_inputs(x_ho), norm.norm_outputs(y_ho)
    else:
        x_hz = y_hz = None
    # the final epoch is kept: the held-out split is a report, not a selector
    weights, history = nn.fit(weights, xz, yz, epochs=config.epochs, batch_size=config.batch_size,
                              learning_rate=config.learning_rate, seed=config.seed,
                              x_val=x_hz, y_val=y_hz, select_best=False, log=log)
    train_mse = nn.evaluate_mse(weights, xz, yz)
    hold_mse = nn.evaluate_mse(weights, x_hz, y_hz) if hold else None
    if not math.isfinite(train_mse):
        raise TrainingDiverged("diverged: non-finite training loss", weights, history)
    return weights, EtvMetrics(history, train_mse, hold_mse, len(train), len(hold))


def weights_normalizer(weights) -> Normalizer:
    if weights.metadata.get("model") != "etv" or "normalization" not in weights.metadata:
        raise ValidationError("weights carry no ETV normalisation constants")
    return Normalizer.from_dict(weights.metadata["normalization"])


def predict_raw(weights, x: np.ndarray, normalizer: Normalizer | None = None) -> np.ndarray:
    """Denormalised, unclamped outputs for an (n, 5) input array."""
    norm = normalizer or weights_normalizer(weights)
    z = nn.forward(weights, norm.norm_inputs(np.atleast_2d(x)))
    return norm.denorm_outputs(np.asarray(z, dtype=np.float64))


def adapt_voice(weights, context: EnvironmentContext, user: UserProfile) -> VoiceParameters:
    """Voice parameters for a context, clamped to the engine ranges."""
    raw = predict_raw(weights, context_inputs(context, user)[None])[0]
    return VoiceParameters.clamped(*raw)


def load_etv(path) -> nn.ModelWeights:
    w = nn.load_weights(path)
    weights_normalizer(w)
    return w
