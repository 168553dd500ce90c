"""Feed-forward models over a static layer list, with reverse-mode gradients."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from . import layers as L

WEIGHTS_VERSION = 1


@dataclass
class Layer:
    spec: L.LayerSpec
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)


@dataclass
class ModelWeights:
    """An ordered stack of layers plus free-form metadata.

    ``input_shape`` is the per-sample input shape the stack was built for;
    spatial dimensions may be ``None`` when any size is accepted.
    ``metadata`` must stay JSON-serialisable (it goes into the file header).
    """

    layers: list
    input_shape: tuple
    version: int = WEIGHTS_VERSION
    training_meta: dict = field(default_factory=lambda: {"optimizer_state": False, "epochs": 0})
    metadata: dict = field(default_factory=dict)

    def copy(self) -> "ModelWeights":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "ModelWeights":
        out = self.copy()
        for layer in out.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.buffers = {k: v.astype(dtype) for k, v in layer.buffers.items()}
        return out

    @property
    def dtype(self):
        for layer in self.layers:
            for v in layer.params.values():
                return v.dtype
        return np.dtype(np.float64)

    def parameters(self):
        """Yield (layer_index, name, array) for every trainable parameter."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield i, name, arr

    def n_parameters(self) -> int:
        return int(sum(a.size for _, _, a in self.parameters()))

    def specs(self):
        return [layer.spec for layer in self.layers]


def build_model(specs, input_shape, rng=None, metadata=None) -> ModelWeights:
    """Initialise a model; checks the specs chain for the given input shape."""
    rng = rng if rng is not None else np.random.default_rng(0)
    check_shapes(specs, input_shape)
    layers = []
    for spec in specs:
        params, buffers = L.init_params(spec, rng)
        layers.append(Layer(spec, params, buffers))
    return ModelWeights(layers, tuple(input_shape), metadata=dict(metadata or {}))


def check_shapes(specs, input_shape):
    shape = tuple(input_shape)
    for i, spec in enumerate(specs):
        try:
            shape = L.output_shape(spec, shape)
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({spec.kind}): {exc}") from None
    return shape


def _run(weights, x, training, rng, update_stats):
    x = np.asarray(x)
    dtype = weights.dtype
    if x.dtype != dtype:
        x = x.astype(dtype)
    expected = weights.input_shape
    if x.ndim != len(expected) + 1 or any(e is not None and e != s for e, s in zip(expected, x.shape[1:])):
        raise ShapeError(f"layer 0 ({weights.layers[0].spec.kind}): input shape {x.shape[1:]} "
                         f"does not match expected {expected}")
    ctxs = []
    for i, layer in enumerate(weights.layers):
        try:
            L.output_shape(layer.spec, x.shape[1:])
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({layer.spec.kind}): {exc}") from None
        x, ctx = L.forward_layer(layer.spec, layer.params, layer.buffers, x, training, rng, update_stats)
        ctxs.append(ctx)
    return x, ctxs


def forward(weights: ModelWeights, x, training: bool = False, rng=None) -> np.ndarray:
    """Batched forward pass.  Eval mode (the default) is deterministic."""
    out, _ = _run(weights, x, training, rng, update_stats=False)
    return out


def mse_loss(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def backward(weights: ModelWeights, x, target, training: bool = False, rng=None,
             update_stats: bool = False):
    """MSE loss and its gradient with respect to every parameter.

    Returns ``(loss, grads)`` where ``grads[i]`` is a dict matching
    ``weights.layers[i].params``.  With ``update_stats`` the batch-norm running
    statistics are updated as a side effect (training loops only).
    """
    out, ctxs = _run(weights, x, training, rng, update_stats)
    loss, dy = mse_loss(out, target)
    grads = [None] * len(weights.layers)
    for i in range(len(weights.layers) - 1, -1, -1):
        layer = weights.layers[i]
        dy, g = L.backward_layer(layer.spec, layer.params, ctxs[i], dy)
        grads[i] = g
    return loss, grads


def predict_batched(weights: ModelWeights, x, batch_size: int = 64) -> np.ndarray:
    outs = [forward(weights, x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(outs, axis=0)
