"""Annoyance-rating CNN over log-mel spectrograms.

Input tensors are laid out (batch, 1, frames, mels).  Each block is
conv3x3 -> BN -> ReLU -> conv3x3 -> BN -> ReLU -> 2x2 average pool (the
convolutions carry no bias; batch norm's shift plays that role); a single
global average pool follows the last block, then a 2048-wide ReLU embedding,
dropout and a linear scalar head.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .audio import AudioClip, FeatureConfig, extract_log_mel, read_wav, resample
from .errors import ClipTooShortError, IngestError, ShapeError, ValidationError
from .nn import layers as L
from .types import AR_RANGE, AnnoyanceRating

N_BLOCKS = 6
# reference split sizes (train/val/test) used when no split file is given
REFERENCE_SPLIT = (2200, 245, 445)


@dataclass(frozen=True)
class ArpConfig:
    block_filter_counts: tuple = (16, 32, 64, 128, 256, 512)
    kernel: int = 3
    pool: int = 2
    embedding_dim: int = 2048
    dropout_p: float = 0.2
    learning_rate: float = 0.005
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.block_filter_counts)
        object.__setattr__(self, "block_filter_counts", counts)
        if len(counts) != N_BLOCKS:
            raise ValidationError(f"ARP needs exactly {N_BLOCKS} blocks, got {len(counts)}")
        if counts[0] < 1 or any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValidationError(f"block filter counts must be positive and strictly increasing: {counts}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValidationError("kernel must be a positive odd integer")
        if self.pool < 1 or self.embedding_dim < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("pool, embedding_dim and batch_size must be positive, epochs >= 0")
        if not 0 <= self.dropout_p < 1:
            raise ValidationError("dropout_p must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")

    @property
    def min_input_size(self) -> int:
        return self.pool ** N_BLOCKS

    def to_dict(self) -> dict:
        d = asdict(self)
        d["block_filter_counts"] = list(self.block_filter_counts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArpConfig":
        d = dict(d)
        if "features" in d and isinstance(d["features"], dict):
            d["features"] = FeatureConfig.from_dict(d["features"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown ARP config keys: {sorted(unknown)}")
        return cls(**d)


def arp_layer_specs(filters, kernel=3, pool=2, embedding_dim=2048, dropout_p=0.2):
    """Layer list for any number of blocks (the model itself always uses six)."""
    specs = []
    cin = 1
    for c in filters:
        specs += [L.conv2d(cin, c, kernel, bias=False), L.batch_norm(c), L.relu(),
                  L.conv2d(c, c, kernel, bias=False), L.batch_norm(c), L.relu(),
                  L.avg_pool2d(pool)]
        cin = c
    specs += [L.global_avg_pool(), L.fully_connected(cin, embedding_dim), L.relu()]
    if dropout_p > 0:
        specs.append(L.dropout(dropout_p))
    specs.append(L.fully_connected(embedding_dim, 1))
    return specs


def build_stack(filters, n_frames, n_mels, kernel=3, pool=2, embedding_dim=2048, dropout_p=0.2,
                seed=0, metadata=None) -> nn.ModelWeights:
    """Build a block stack of arbitrary depth; used directly for reduced test models."""
    need = pool ** len(filters)
    if n_frames < need or n_mels < need:
        raise ShapeError(
            f"input spectrogram {n_frames}x{n_mels} too small for {len(filters)} pooling stages; "
            f"need at least {need} frames and {need} mel bands"
        )
    specs = arp_layer_specs(filters, kernel, pool, embedding_dim, dropout_p)
    w = nn.build_model(specs, (1, n_frames, n_mels), np.random.default_rng(seed), metadata)
    # any frame count >= the minimum is accepted at run time
    w.input_shape = (1, None, n_mels)
    w.metadata.setdefault("min_frames", need)
    return w


def build_arp(config: ArpConfig | None = None, n_frames: int | None = None) -> nn.ModelWeights:
    """Initialise the ARP network.

    ``n_frames`` is the spectrogram length used for the shape check; it
    defaults to a 15 s clip under the feature config.
    """
    config = config or ArpConfig()
    fc = config.features
    if n_frames is None:
        n_frames = fc.n_frames(15 * fc.sample_rate_hz)
    meta = {"model": "arp", "features": fc.to_dict(), "config": config.to_dict()}
    return build_stack(config.block_filter_counts, n_frames, fc.n_mels, config.kernel, config.pool,
                       config.embedding_dim, config.dropout_p, config.seed, meta)


# --------------------------------------------------------------------------
# features
# --------------------------------------------------------------------------


def clip_features(clip: AudioClip, features: FeatureConfig) -> np.ndarray:
    """Mono, resampled log-mel matrix (frames, mels) for one clip."""
    clip = clip.mono()
    if clip.sample_rate_hz != features.sample_rate_hz:
        clip = resample(clip, features.sample_rate_hz)
    return extract_log_mel(clip, features).values


def stack_features(mats, min_frames: int) -> np.ndarray:
    """Crop spectrograms to a common length and stack to (n, 1, frames, mels).

    Clips of unequal duration are cropped to the shortest one.
    """
    n_frames = min(m.shape[0] for m in mats)
    if n_frames < min_frames:
        raise ClipTooShortError(f"clip too short: {n_frames} frames, the model needs at least {min_frames}")
    return np.stack([m[:n_frames] for m in mats])[:, None].astype(np.float32)


# --------------------------------------------------------------------------
# DeLTA-style data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaRecord:
    path: Path
    label: float


@dataclass
class DeltaDataset:
    records: list
    splits: dict  # split name -> list of indices into records

    def __post_init__(self):
        seen = {}
        for name, idx in self.splits.items():
            for i in idx:
                p = self.records[i].path
                if p in seen and seen[p] != name:
                    raise ValidationError(f"{p} appears in both {seen[p]} and {name} splits")
                seen[p] = name
        for r in self.records:
            if not AR_RANGE[0] <= r.label <= AR_RANGE[1]:
                raise ValidationError(f"{r.path}: label {r.label} outside [1, 10]")

    def subset(self, split: str) -> list:
        return [self.records[i] for i in self.splits.get(split, [])]


def seeded_split(n: int, seed: int = 0) -> dict:
    """Shuffle indices and cut train/val/test in the reference proportions."""
    total = sum(REFERENCE_SPLIT)
    n_val = int(round(n * REFERENCE_SPLIT[1] / total))
    n_test = int(round(n * REFERENCE_SPLIT[2] / total))
    order = np.random.default_rng(seed).permutation(n).tolist()
    return {"val": order[:n_val], "test": order[n_val:n_val + n_test], "train": order[n_val + n_test:]}


def load_delta_manifest(manifest, audio_dir, split_file=None, seed: int = 0) -> DeltaDataset:
    """Read a ``filename,annoyance`` manifest.

    An optional split file (``filename,split`` with split in train/val/test)
    fixes the partition; otherwise a seeded shuffle is used.
    """
    manifest, audio_dir = Path(manifest), Path(audio_dir)
    records, errors, index = [], [], {}
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"filename", "annoyance"} <= set(reader.fieldnames):
            raise IngestError(manifest, [(1, "header must contain filename,annoyance")])
        for line, row in enumerate(reader, start=2):
            name = (row.get("filename") or "").strip()
            try:
                label = float(row["annoyance"])
            except (TypeError, ValueError):
                errors.append((line, f"annoyance {row.get('annoyance')!r} is not a number"))
                continue
            if not name:
                errors.append((line, "empty filename"))
            elif name in index:
                errors.append((line, f"duplicate filename {name}"))
            elif not AR_RANGE[0] <= label <= AR_RANGE[1]:
                errors.append((line, f"annoyance {label} outside [1, 10]"))
            else:
                index[name] = len(records)
                records.append(DeltaRecord(audio_dir / name, label))
    if errors:
        raise IngestError(manifest, errors)
    if not records:
        raise IngestError(manifest, [(1, "manifest has no rows")])
    if split_file is None:
        splits = seeded_split(len(records), seed)
    else:
        splits = {"train": [], "val": [], "test": []}
        with open(split_file, newline="") as fh:
            for line, row in enumerate(csv.DictReader(fh), start=2):
                name, split = row.get("filename", "").strip(), row.get("split", "").strip()
                if name not in index or split not in splits:
                    errors.append((line, f"unknown filename or split: {name!r}, {split!r}"))
                    continue
                splits[split].append(index[name])
        if errors:
            raise IngestError(split_file, errors)
    return DeltaDataset(records, splits)


def load_split_features(records, features: FeatureConfig, min_frames: int):
    mats = [clip_features(read_wav(r.path), features) for r in records]
    y = np.array([[r.label] for r in records])
    return stack_features(mats, min_frames), y


# --------------------------------------------------------------------------
# training and inference
# --------------------------------------------------------------------------


@dataclass
class ArpMetrics:
    history: list
    test_mse: float | None = None
    test_mae: float | None = None
    seconds: float = 0.0


def regression_metrics(weights, x, y) -> tuple:
    """(MSE, MAE) of the clamped predictions, i.e. what inference reports."""
    pred = np.clip(nn.model.predict_batched(weights, x).reshape(-1), *AR_RANGE)
    err = pred - np.asarray(y, dtype=np.float64).reshape(-1)
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def train_arp_arrays(x_train, y_train, config: ArpConfig, x_val=None, y_val=None, weights=None,
                     log=None, shuffle_labels=False, select_best=True):
    """Train on precomputed (n, 1, frames, mels) features; labels stay unclamped."""
    if len(x_train) == 0:
        raise ValidationError("training split is empty")
    if weights is None:
        weights = build_arp(config, n_frames=x_train.shape[2])
    return nn.fit(weights, x_train, np.asarray(y_train, dtype=np.float64).reshape(-1, 1),
                  epochs=config.epochs, batch_size=config.batch_size,
                  learning_rate=config.learning_rate, seed=config.seed, x_val=x_val,
                  y_val=None if y_val is None else np.asarray(y_val, dtype=np.float64).reshape(-1, 1),
                  shuffle_labels=shuffle_labels, select_best=select_best, log=log, eval_train=False)


def train_arp(dataset: DeltaDataset, config: ArpConfig | None = None, log=None):
    """Train on a DeltaDataset; returns ``(weights, ArpMetrics)`` with test MSE/MAE."""
    config = config or ArpConfig()
    t0 = time.perf_counter()
    need = config.min_input_size
    x_tr, y_tr = load_split_features(dataset.subset("train"), config.features, need)
    val = dataset.subset("val")
    x_va, y_va = load_split_features(val, config.features, need) if val else (None, None)
    weights, history = train_arp_arrays(x_tr, y_tr, config, x_va, y_va, log=log)
    metrics = ArpMetrics(history)
    test = dataset.subset("test")
    if test:
        x_te, y_te = load_split_features(test, config.features, need)
        metrics.test_mse, metrics.test_mae = regression_metrics(weights, x_te, y_te)
    metrics.seconds = time.perf_counter() - t0
    return weights, metrics


def weights_features(weights) -> FeatureConfig:
    d = weights.metadata.get("features")
    return FeatureConfig.from_dict(d) if d else FeatureConfig()


def predict_from_features(weights, mat: np.ndarray) -> AnnoyanceRating:
    x = stack_features([mat], int(weights.metadata.get("min_frames", 1)))
    raw = float(nn.forward(weights, x).reshape(-1)[0])
    return AnnoyanceRating.from_raw(raw)


def predict_ar(weights, clip: AudioClip) -> AnnoyanceRating:
    """Deterministic rating for one clip; ``value`` is clamped, ``raw`` is not."""
    return predict_from_features(weights, clip_features(clip, weights_features(weights)))


def load_arp(path, dtype=np.float32) -> nn.ModelWeights:
    """Load ARP weights for inference (single precision by default)."""
    w = nn.load_weights(path, dtype=dtype)
    if w.metadata.get("model") != "arp":
        raise ValidationError(f"{path} does not hold ARP weights")
    return w
