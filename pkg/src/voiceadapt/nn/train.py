"""Mini-batch Adam training loop shared by the ARP and ETV models."""

from __future__ import annotations

import json
import math

import numpy as np

from ..errors import TrainingDiverged
from .model import backward, forward
from .optim import AdamState, adam_step


def evaluate_mse(weights, x, y, batch_size=256):
    if len(x) == 0:
        return float("nan")
    total = 0.0
    for i in range(0, len(x), batch_size):
        pred = forward(weights, x[i:i + batch_size])
        d = pred.reshape(len(pred), -1) - np.asarray(y[i:i + batch_size]).reshape(len(pred), -1)
        total += float(np.sum(d * d))
    return total / (len(x) * (np.asarray(y).size // len(y)))


class JsonlLog:
    """Callable sink writing one JSON object per line to a text stream."""

    def __init__(self, stream):
        self.stream = stream

    def __call__(self, record):
        self.stream.write(json.dumps(record) + "\n")
        self.stream.flush()


def fit(weights, x_train, y_train, *, epochs, batch_size, learning_rate, seed=0,
        x_val=None, y_val=None, shuffle_labels=False, select_best=True, log=None,
        eval_train=True):
    """Train ``weights`` in place and return ``(best_weights, history)``.

    Each epoch visits the training set in a seeded random order.  Batches
    are processed whole (no gradient accumulation across batches), so the
    result is deterministic given the seed.  ``history`` is a list of
    ``{"epoch", "split", "loss"}`` records; the same records go to ``log``.
    When a validation set is given and ``select_best`` is set, the
    checkpoint with the lowest validation MSE is returned, otherwise the
    final weights.  ``shuffle_labels`` permutes the training targets every
    epoch (a no-signal control).

    Raises
    ------
    TrainingDiverged
        On a non-finite loss or gradient, carrying the last good checkpoint.
    """
    rng = np.random.default_rng(seed)
    x_train = np.asarray(x_train)
    y_train = np.asarray(y_train)
    state = AdamState(learning_rate=learning_rate)
    params = [p for _, _, p in weights.parameters()]
    history = []
    best, best_val = None, math.inf
    have_val = x_val is not None and len(x_val) > 0
    start_epoch = int(weights.training_meta.get("epochs", 0))

    def emit(rec):
        history.append(rec)
        if log is not None:
            log(rec)

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(x_train))
        targets = y_train[rng.permutation(len(y_train))] if shuffle_labels else y_train
        running, seen = 0.0, 0
        for i in range(0, len(order), batch_size):
            idx = order[i:i + batch_size]
            loss, grads = backward(weights, x_train[idx], targets[idx], training=True, rng=rng,
                                   update_stats=True)
            if not math.isfinite(loss):
                raise TrainingDiverged("diverged: non-finite loss", best, history)
            flat = [g[name] for g, layer in zip(grads, weights.layers) for name in layer.params]
            try:
                adam_step(state, params, flat)
            except TrainingDiverged as exc:
                raise TrainingDiverged(str(exc), best, history) from None
            running += loss * len(idx)
            seen += len(idx)
        weights.training_meta = {"optimizer_state": False, "epochs": start_epoch + epoch}
        if eval_train:
            train_mse = evaluate_mse(weights, x_train, targets)
        else:
            train_mse = running / max(seen, 1)
        if not math.isfinite(train_mse):
            raise TrainingDiverged("diverged: non-finite training loss", best, history)
        emit({"epoch": epoch, "split": "train", "loss": train_mse})
        if have_val and select_best:
            val_mse = evaluate_mse(weights, x_val, y_val)
            emit({"epoch": epoch, "split": "val", "loss": val_mse})
            if val_mse < best_val:
                best_val, best = val_mse, weights.copy()
        else:
            if have_val:
                emit({"epoch": epoch, "split": "val", "loss": evaluate_mse(weights, x_val, y_val)})
            best = weights.copy()
    return best, history
