"""Layer kinds: parameter shapes, initialisation, forward and backward passes.

Every kind is a pair of functions.  ``forward`` returns the output and a
context tuple; ``backward`` consumes that context and the upstream gradient
and returns the input gradient plus a dict of parameter gradients.  Images
use NCHW layout; dense activations are (N, features).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, ValidationError

KINDS = ("conv2d", "fully_connected", "batch_norm", "relu", "avg_pool2d", "global_avg_pool", "dropout")

# bound on the im2col buffer per chunk, in elements
_COLS_BUDGET = 8_000_000


@dataclass
class LayerSpec:
    kind: str
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown layer kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, **self.hyper}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("kind"), d)

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.hyper.items())
        return f"{self.kind}({args})"


def conv2d(in_channels, out_channels, kernel=3, stride=1, padding="same", bias=True):
    """``bias=False`` drops the additive term (redundant in front of batch norm)."""
    hyper = dict(in_channels=in_channels, out_channels=out_channels, kernel=kernel, stride=stride,
                 padding=padding)
    if not bias:
        hyper["bias"] = False
    return LayerSpec("conv2d", hyper)


def fully_connected(in_features, out_features):
    return LayerSpec("fully_connected", dict(in_features=in_features, out_features=out_features))


def batch_norm(features, momentum=0.1, eps=1e-5):
    return LayerSpec("batch_norm", dict(features=features, momentum=momentum, eps=eps))


def relu():
    return LayerSpec("relu")


def avg_pool2d(pool=2):
    return LayerSpec("avg_pool2d", dict(pool=pool))


def global_avg_pool():
    return LayerSpec("global_avg_pool")


def dropout(p):
    if not 0.0 <= p < 1.0:
        raise ValidationError(f"dropout probability must be in [0, 1), got {p}")
    return LayerSpec("dropout", dict(p=p))


# --------------------------------------------------------------------------
# parameter shapes and init
# --------------------------------------------------------------------------


def param_shapes(spec: LayerSpec) -> dict:
    h = spec.hyper
    if spec.kind == "conv2d":
        k = h["kernel"]
        shapes = {"weight": (h["out_channels"], h["in_channels"], k, k)}
        if h.get("bias", True):
            shapes["bias"] = (h["out_channels"],)
        return shapes
    if spec.kind == "fully_connected":
        return {"weight": (h["in_features"], h["out_features"]), "bias": (h["out_features"],)}
    if spec.kind == "batch_norm":
        return {"gamma": (h["features"],), "beta": (h["features"],)}
    return {}


def buffer_shapes(spec: LayerSpec) -> dict:
    if spec.kind == "batch_norm":
        n = spec.hyper["features"]
        return {"running_mean": (n,), "running_var": (n,)}
    return {}


def init_params(spec: LayerSpec, rng: np.random.Generator):
    """Kaiming-uniform weights, zero biases, unit batch-norm scale."""
    shapes = param_shapes(spec)
    params, buffers = {}, {}
    if spec.kind in ("conv2d", "fully_connected"):
        w_shape = shapes["weight"]
        fan_in = int(np.prod(w_shape[1:])) if spec.kind == "conv2d" else w_shape[0]
        bound = np.sqrt(6.0 / fan_in)
        params["weight"] = rng.uniform(-bound, bound, size=w_shape)
        if "bias" in shapes:
            params["bias"] = np.zeros(shapes["bias"])
    elif spec.kind == "batch_norm":
        params["gamma"] = np.ones(shapes["gamma"])
        params["beta"] = np.zeros(shapes["beta"])
        buffers["running_mean"] = np.zeros(shapes["gamma"])
        buffers["running_var"] = np.ones(shapes["gamma"])
    return params, buffers


def output_shape(spec: LayerSpec, in_shape: tuple) -> tuple:
    """Per-sample output shape (no batch axis); raises ShapeError on mismatch."""
    h = spec.hyper
    if spec.kind == "conv2d":
        if len(in_shape) != 3 or in_shape[0] != h["in_channels"]:
            raise ShapeError(f"expects (C={h['in_channels']}, H, W), got {in_shape}")
        pad = _padding(spec)
        ho = (in_shape[1] + 2 * pad - h["kernel"]) // h["stride"] + 1
        wo = (in_shape[2] + 2 * pad - h["kernel"]) // h["stride"] + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {in_shape} too small for kernel {h['kernel']}")
        return (h["out_channels"], ho, wo)
    if spec.kind == "fully_connected":
        if len(in_shape) != 1 or in_shape[0] != h["in_features"]:
            raise ShapeError(f"expects ({h['in_features']},), got {in_shape}")
        return (h["out_features"],)
    if spec.kind == "batch_norm":
        if in_shape[0] != h["features"]:
            raise ShapeError(f"expects {h['features']} channels/features, got {in_shape}")
        return in_shape
    if spec.kind == "avg_pool2d":
        p = h["pool"]
        if len(in_shape) != 3 or in_shape[1] < p or in_shape[2] < p:
            raise ShapeError(f"input {in_shape} too small for {p}x{p} pooling")
        return (in_shape[0], in_shape[1] // p, in_shape[2] // p)
    if spec.kind == "global_avg_pool":
        if len(in_shape) != 3:
            raise ShapeError(f"expects (C, H, W), got {in_shape}")
        return (in_shape[0],)
    return in_shape


def _padding(spec):
    pad = spec.hyper.get("padding", "same")
    if pad == "same":
        if spec.hyper["stride"] != 1 or spec.hyper["kernel"] % 2 == 0:
            raise ValidationError("'same' padding needs stride 1 and an odd kernel")
        return spec.hyper["kernel"] // 2
    return int(pad)


# --------------------------------------------------------------------------
# forward / backward per kind
# --------------------------------------------------------------------------


def _im2col(xp, k, stride, ho, wo):
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    n, c = xp.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)


def _conv_chunks(n, ho, wo, ck):
    per_sample = max(1, ho * wo * ck)
    step = max(1, _COLS_BUDGET // per_sample)
    return range(0, n, step), step


def conv_forward(spec, params, x):
    h = spec.hyper
    k, s, pad = h["kernel"], h["stride"], _padding(spec)
    w, b = params["weight"], params.get("bias", 0.0)
    n, c, hi, wi = x.shape
    ho = (hi + 2 * pad - k) // s + 1
    wo = (wi + 2 * pad - k) // s + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    f = w.shape[0]
    wmat = w.reshape(f, -1)
    bias = np.reshape(b, (-1, 1)) if np.ndim(b) else b
    out = np.empty((n, f, ho, wo), dtype=np.result_type(x, w))
    starts, step = _conv_chunks(n, ho, wo, c * k * k)
    for i in starts:
        chunk = xp[i:i + step]
        m = len(chunk)
        # channel-major columns keep the spatial axes contiguous in the copy
        win = sliding_window_view(chunk, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, m * ho * wo)
        y = wmat @ cols + bias
        out[i:i + step] = y.reshape(f, m, ho, wo).transpose(1, 0, 2, 3)
    return out, (x,)


def conv_backward(spec, params, ctx, dy):
    (x,) = ctx
    h = spec.hyper
    k, s, pad = h["kernel"], h["stride"], _padding(spec)
    w = params["weight"]
    n, c, hi, wi = x.shape
    f, ho, wo = dy.shape[1:]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    wmat = w.reshape(f, -1)
    dw = np.zeros_like(wmat)
    db = dy.sum(axis=(0, 2, 3))
    dxp = np.zeros_like(xp)
    starts, step = _conv_chunks(n, ho, wo, c * k * k)
    for i in starts:
        chunk = xp[i:i + step]
        m = len(chunk)
        dy2 = dy[i:i + step].transpose(0, 2, 3, 1).reshape(-1, f)
        dw += dy2.T @ _im2col(chunk, k, s, ho, wo)
        dcols = (dy2 @ wmat).reshape(m, ho, wo, c, k, k)
        for a in range(k):
            for bb in range(k):
                dxp[i:i + m, :, a:a + s * ho:s, bb:bb + s * wo:s] += dcols[..., a, bb].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + hi, pad:pad + wi] if pad else dxp
    grads = {"weight": dw.reshape(w.shape)}
    if "bias" in params:
        grads["bias"] = db
    return dx, grads


def fc_forward(spec, params, x):
    return x @ params["weight"] + params["bias"], (x,)


def fc_backward(spec, params, ctx, dy):
    (x,) = ctx
    return dy @ params["weight"].T, {"weight": x.T @ dy, "bias": dy.sum(axis=0)}


def _bn_axes(x):
    return (0,) if x.ndim == 2 else (0, 2, 3)


def _bn_view(v, x):
    return v if x.ndim == 2 else v[None, :, None, None]


def bn_forward(spec, params, buffers, x, training, update_stats):
    eps = spec.hyper.get("eps", 1e-5)
    axes = _bn_axes(x)
    if training:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if update_stats:
            mom = spec.hyper.get("momentum", 0.1)
            m = x.size // x.shape[1]
            unbiased = var * m / max(m - 1, 1)
            buffers["running_mean"] *= 1 - mom
            buffers["running_mean"] += mom * mean
            buffers["running_var"] *= 1 - mom
            buffers["running_var"] += mom * unbiased
    else:
        mean, var = buffers["running_mean"], buffers["running_var"]
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - _bn_view(mean, x)) * _bn_view(inv_std, x)
    y = xhat * _bn_view(params["gamma"], x) + _bn_view(params["beta"], x)
    return y, (xhat, inv_std, training)


def bn_backward(spec, params, ctx, dy):
    xhat, inv_std, training = ctx
    axes = _bn_axes(dy)
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * _bn_view(params["gamma"], dy)
    if training:
        m = dy.size // dy.shape[1]
        dx = (_bn_view(inv_std, dy) / m) * (
            m * dxhat
            - _bn_view(dxhat.sum(axis=axes), dy)
            - xhat * _bn_view((dxhat * xhat).sum(axis=axes), dy)
        )
    else:
        dx = dxhat * _bn_view(inv_std, dy)
    return dx, {"gamma": dgamma, "beta": dbeta}


def pool_forward(spec, x):
    p = spec.hyper["pool"]
    n, c, h, w = x.shape
    ho, wo = h // p, w // p
    y = sum(x[:, :, a:ho * p:p, b:wo * p:p] for a in range(p) for b in range(p)) * (1.0 / (p * p))
    return y, (x.shape,)


def pool_backward(spec, ctx, dy):
    (shape,) = ctx
    p = spec.hyper["pool"]
    n, c, ho, wo = dy.shape
    dx = np.zeros(shape, dtype=dy.dtype)
    g = np.repeat(np.repeat(dy, p, axis=2), p, axis=3) / (p * p)
    dx[:, :, :ho * p, :wo * p] = g
    return dx


def forward_layer(spec, params, buffers, x, training, rng, update_stats):
    kind = spec.kind
    if kind == "conv2d":
        return conv_forward(spec, params, x)
    if kind == "fully_connected":
        return fc_forward(spec, params, x)
    if kind == "batch_norm":
        return bn_forward(spec, params, buffers, x, training, update_stats)
    if kind == "relu":
        mask = x > 0
        return x * mask, (mask,)
    if kind == "avg_pool2d":
        return pool_forward(spec, x)
    if kind == "global_avg_pool":
        return x.mean(axis=(2, 3)), (x.shape,)
    if kind == "dropout":
        p = spec.hyper["p"]
        if not training or p == 0.0:
            return x, (None,)
        if rng is None:
            raise ValidationError("dropout in training mode needs an rng")
        mask = (rng.random(x.shape) >= p) / (1.0 - p)
        return x * mask, (mask,)
    raise ValidationError(f"unknown layer kind {kind!r}")


def backward_layer(spec, params, ctx, dy):
    kind = spec.kind
    if kind == "conv2d":
        return conv_backward(spec, params, ctx, dy)
    if kind == "fully_connected":
        return fc_backward(spec, params, ctx, dy)
    if kind == "batch_norm":
        return bn_backward(spec, params, ctx, dy)
    if kind == "relu":
        return dy * ctx[0], {}
    if kind == "avg_pool2d":
        return pool_backward(spec, ctx, dy), {}
    if kind == "global_avg_pool":
        (shape,) = ctx
        return np.broadcast_to(dy[:, :, None, None] / (shape[2] * shape[3]), shape).copy(), {}
    if kind == "dropout":
        mask = ctx[0]
        return (dy if mask is None else dy * mask), {}
    raise ValidationError(f"unknown layer kind {kind!r}")
