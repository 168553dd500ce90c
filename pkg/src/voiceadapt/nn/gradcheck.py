from __future__ import annotations

import numpy as np

from .model import _run, backward, mse_loss


def _loss_and_pattern(weights, x, target, training):
    out, ctxs = _run(weights, x, training, None, update_stats=False)
    loss, _ = mse_loss(out, target)
    masks = [ctx[0] for layer, ctx in zip(weights.layers, ctxs) if layer.spec.kind == "relu"]
    return loss, masks


def _crosses_kink(base, *patterns):
    return any(not np.array_equal(a, b) for pat in patterns for a, b in zip(base, pat))


def _central_difference(weights, x, target, training, flat, j, h, base):
    old = flat[j]
    flat[j] = old + h
    lp, mp = _loss_and_pattern(weights, x, target, training)
    flat[j] = old - h
    lm, mm = _loss_and_pattern(weights, x, target, training)
    flat[j] = old
    return (lp - lm) / (2 * h), _crosses_kink(base, mp, mm)


def numerical_gradients(weights, x, target, h=1e-4, training=False, return_kinks=False,
                        sample=None, rng=None, skip_kinks=False):
    """Central finite differences of the MSE loss for every parameter entry.

    With ``return_kinks`` also returns how many entries changed some ReLU's
    on/off pattern when perturbed.  Those entries straddle a kink, where a
    finite difference does not estimate the derivative; ``skip_kinks`` first
    retries them at h/10 and h/100 and leaves them as NaN if that fails.  ``sample`` limits each tensor to that many random entries
    (from ``rng``), drawing replacements for skipped ones; unvisited entries
    are NaN.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    _, base = _loss_and_pattern(weights, x, target, training)
    numeric, kinks = [], 0
    for layer in weights.layers:
        g = {}
        for name, p in layer.params.items():
            out = np.full(p.shape, np.nan) if sample is not None or skip_kinks else np.zeros_like(p)
            flat, gflat = p.reshape(-1), out.reshape(-1)
            order = range(flat.size) if sample is None else rng.permutation(flat.size)
            done = 0
            for j in order:
                if sample is not None and done >= sample:
                    break
                # a kink hit at step h may clear at a smaller step; channel-wide
                # parameters (batch-norm shift/scale) touch thousands of units
                steps = (h, h / 10, h / 100) if skip_kinks else (h,)
                for step in steps:
                    d, crossed = _central_difference(weights, x, target, training, flat, j, step, base)
                    if not crossed:
                        break
                if (return_kinks or skip_kinks) and crossed:
                    kinks += 1
                    if skip_kinks:
                        continue
                gflat[j] = d
                done += 1
            g[name] = out
        numeric.append(g)
    return (numeric, kinks) if return_kinks else numeric


def relative_error(a, b, floor=1e-7):
    """|a - b| / max(|a|, |b|, floor).

    The floor keeps exact zeros from dividing finite-difference round-off,
    ~1e-12, by zero.
    """
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_gradients(weights, x, target, h=1e-4, training=False, return_kinks=False,
                    sample=None, rng=None, skip_kinks=False):
    """Compare reverse-mode and finite-difference gradients.

    Returns ``{(layer_index, name): max_relative_error}``, plus the number of
    kink-straddling entries when ``return_kinks`` is set.  With ``sample``
    only that many random entries per tensor are checked; with
    ``skip_kinks`` kink-straddling entries are excluded (a tensor with none
    left reports NaN).  Dropout should be
    disabled (``training=False`` or p = 0) since it makes the loss random.
    """
    _, analytic = backward(weights, x, target, training=training)
    numeric, kinks = numerical_gradients(weights, x, target, h=h, training=training,
                                         return_kinks=True, sample=sample, rng=rng,
                                         skip_kinks=skip_kinks)
    report = {}
    for i, (ga, gn) in enumerate(zip(analytic, numeric)):
        for name in ga:
            checked = ~np.isnan(gn[name])
            errs = relative_error(ga[name][checked], gn[name][checked])
            report[(i, name)] = float(errs.max()) if errs.size else float("nan")
    return (report, kinks) if return_kinks else report


def kink_free_inputs(weights, draw, h=1e-4, training=False, attempts=20):
    """First ``draw(seed)`` input whose finite differences cross no ReLU kink.

    ``draw`` maps a seed to ``(x, target)``.  Returns ``(x, target, report)``
    for the first seed in ``range(attempts)`` with zero kink crossings, or
    raises RuntimeError.
    """
    for seed in range(attempts):
        x, y = draw(seed)
        report, kinks = check_gradients(weights, x, y, h=h, training=training, return_kinks=True)
        if kinks == 0:
            return x, y, report
    raise RuntimeError(f"every one of {attempts} inputs straddles a ReLU kink")
