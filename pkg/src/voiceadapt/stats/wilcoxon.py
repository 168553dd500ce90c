"""Wilcoxon signed-rank test (normal approximation)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import DegeneratePairingError, ValidationError

MIN_PAIRS = 5


@dataclass(frozen=True)
class WilcoxonResult:
    z_statistic: float
    p_value: float
    effect_size_r: float
    n_effective: int
    w_plus: float

    def to_dict(self):
        return {"z": self.z_statistic, "p": self.p_value, "r": self.effect_size_r,
                "n": self.n_effective, "w_plus": self.w_plus}


def wilcoxon_signed_rank(paired_a, paired_b) -> WilcoxonResult:
    """Two-sided test on d = a - b.

    Zero differences are dropped, tied |d| get midranks.  The statistic is
    the positive-rank sum W+, standardised with the tie-corrected variance
    and a 0.5 continuity correction toward zero.  Z is negative when b tends
    to exceed a.  Effect size r = |Z| / sqrt(n) over the non-zero pairs.
    """
    a = np.asarray(paired_a, dtype=np.float64).reshape(-1)
    b = np.asarray(paired_b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError(f"paired samples differ in length: {a.size} vs {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("paired samples must be finite")
    d = a - b
    d = d[d != 0]
    if d.size == 0:
        raise DegeneratePairingError("degenerate pairing: all differences are zero")
    n = d.size
    if n < MIN_PAIRS:
        raise ValidationError(f"need at least {MIN_PAIRS} non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(counts**3 - counts)) / 48.0
    diff = w_plus - mean
    diff = math.copysign(max(abs(diff) - 0.5, 0.0), diff)
    z = diff / math.sqrt(var) if var > 0 else 0.0
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    r = min(1.0, abs(z) / math.sqrt(n))
    return WilcoxonResult(float(z), float(p), float(r), int(n), w_plus)
