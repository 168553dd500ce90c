"""Gamma GLM with random intercepts, fitted by penalised IRLS.

Random intercepts are ridge-penalised coefficients.  With working weights
W and penalty matrix Lambda = diag(0 for fixed effects, phi / sigma2_g for
the levels of grouping g), each iteration solves

    (X' W X + Lambda) b = X' W z

followed by a Pearson update of the dispersion phi (residual degrees of
freedom use the effective number of parameters) and a fixed-point update
of each variance component:

    sigma2_g <- |u_g|^2 / (q_g - tr(T_gg) / sigma2_g),   T = phi (X' W X + Lambda)^-1

A component whose effective degrees of freedom (the denominator) fall below
1% of its level count is set to the floor, since the update approaches zero
only sublinearly.  Linearly slow sequences get Aitken extrapolation.  This is the simplified penalised quasi-likelihood scheme, not a full
marginal-likelihood GLMM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from ..errors import ConvergenceError, ValidationError
from .design import DesignMatrix, ModelFormula, build_design_matrix, response_vector

MAX_ITER = 200
TOL = 1e-6
_SIGMA2_FLOOR = 1e-10
_BOUNDARY_EDF = 0.01  # fraction of a grouping's levels left unshrunk


# link functions: eta = g(mu); we need mu(eta) and d mu / d eta
def _inv_link(link, eta):
    return np.exp(eta) if link == "log" else 1.0 / eta


def _dmu_deta(link, mu):
    return mu if link == "log" else -mu * mu


def _link(link, mu):
    return np.log(mu) if link == "log" else 1.0 / mu


@dataclass
class Coefficient:
    name: str
    estimate: float
    std_error: float
    z: float
    p_value: float

    @property
    def exp_estimate(self) -> float:
        return math.exp(self.estimate) if self.estimate < 700 else math.inf

    def to_dict(self):
        return {"name": self.name, "estimate": self.estimate, "exp_estimate": self.exp_estimate,
                "std_error": self.std_error, "z": self.z, "p_value": self.p_value}


@dataclass
class GlmFit:
    link: str
    coefficients: list
    dispersion: float
    variance_components: dict
    aic: float
    log_likelihood: float
    edf: float
    n_obs: int
    iterations: int
    converged: bool
    trace: list
    fitted: np.ndarray = field(repr=False)
    random_effects: dict = field(default_factory=dict, repr=False)
    residual_summary: dict = field(default_factory=dict)
    beta: np.ndarray = field(default=None, repr=False)
    design: DesignMatrix = field(default=None, repr=False)

    def coef(self, name) -> Coefficient:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "link": self.link,
            "coefficients": [c.to_dict() for c in self.coefficients],
            "dispersion": self.dispersion,
            "variance_components": self.variance_components,
            "aic": self.aic,
            "log_likelihood": self.log_likelihood,
            "edf": self.edf,
            "n_obs": self.n_obs,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_summary": self.residual_summary,
        }


def gamma_log_likelihood(y, mu, dispersion) -> float:
    k = 1.0 / dispersion
    return float(np.sum(k * np.log(k * y / mu) - k * y / mu - np.log(y) - gammaln(k)))


def _wald_p(z):
    return math.erfc(abs(z) / math.sqrt(2.0))


def _aitken(logs, current):
    """Extrapolate a slowly converging variance sequence (log scale).

    When the last three steps shrink by a steady ratio rho in (0.5, 1), the
    fixed point lies about step * rho / (1 - rho) further on.  The history
    is reset after a jump so that the next one needs three fresh steps.
    """
    if len(logs) < 4:
        return current
    d0, d1, d2 = logs[-3] - logs[-4], logs[-2] - logs[-3], logs[-1] - logs[-2]
    if d0 == 0 or d1 == 0:
        return current
    r1, r2 = d1 / d0, d2 / d1
    if not (0.5 < r2 < 1.0 and abs(r2 - r1) < 0.02):
        return current
    jump = float(np.clip(d2 * r2 / (1.0 - r2), -5.0, 5.0))
    target = logs[-1] + jump
    del logs[:]
    return max(math.exp(target), _SIGMA2_FLOOR)


def fit_arrays(X, y, n_fixed, groups=(), link="log", names=None, max_iter=MAX_ITER, tol=TOL) -> GlmFit:
    """Penalised IRLS on a ready design matrix.

    ``groups`` lists ``(name, column_slice, levels)`` for the random-intercept
    blocks, which must come after the ``n_fixed`` fixed-effect columns.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    names = names or [f"x{i}" for i in range(p)]
    if link not in ("log", "inverse"):
        raise ValidationError("link must be 'log' or 'inverse'")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValidationError("gamma response must be strictly positive after the offset")
    if n <= n_fixed:
        raise ValidationError(f"need more observations ({n}) than fixed-effect columns ({n_fixed})")
    if np.linalg.matrix_rank(X[:, :n_fixed]) < n_fixed:
        raise ValidationError("singular design: fixed-effect columns are linearly dependent")

    sigma2 = {g: 0.1 for g, _, _ in groups}
    phi = 1.0
    eta = _link(link, y)
    mu = y.copy()
    b = None
    trace = []

    def penalty(phi, sigma2):
        lam = np.zeros(p)
        for g, sl, _ in groups:
            lam[sl] = phi / sigma2[g]
        return lam

    def irls_solve(eta, mu, lam):
        dmu = _dmu_deta(link, mu)
        w = dmu * dmu / (mu * mu)  # gamma variance function V(mu) = mu^2
        z = eta + (y - mu) / dmu
        XtW = X.T * w
        A = XtW @ X
        H = A + np.diag(lam)
        try:
            b_new = np.linalg.solve(H, XtW @ z)
        except np.linalg.LinAlgError:
            raise ValidationError("singular design: penalised normal equations cannot be solved") from None
        return b_new, A, H

    def take_step(b_old, b_new):
        # step-halve if the inverse link leaves the positive half-line
        step = 1.0
        for _ in range(40):
            cand = b_new if b_old is None else b_old + step * (b_new - b_old)
            eta_c = X @ cand
            if link == "log" or np.all(eta_c > 0):
                return cand, eta_c
            step *= 0.5
        raise ConvergenceError("inverse link produced non-positive means", trace)

    converged = False
    it = 0
    history = {g: [] for g in sigma2}
    for it in range(1, max_iter + 1):
        lam = penalty(phi, sigma2)
        b_new, A, H = irls_solve(eta, mu, lam)
        b_new, eta = take_step(b, b_new)
        mu = _inv_link(link, eta)
        Hinv = np.linalg.inv(H)
        edf = float(np.sum(Hinv * A.T))  # trace(H^-1 A)
        if n - edf <= 0:
            raise ValidationError("no residual degrees of freedom left")
        phi_new = float(np.sum(((y - mu) / mu) ** 2) / (n - edf))
        sig_new = {}
        for g, sl, levels in groups:
            u = b_new[sl]
            T = phi_new * Hinv[sl, sl]
            denom = len(levels) - np.trace(T) / sigma2[g]
            s = float(u @ u / denom) if denom > 0 else sigma2[g]
            if denom < _BOUNDARY_EDF * len(levels):
                # every level shrunk almost to zero: the fixed point creeps
                # towards the boundary sublinearly, so jump there
                s = 0.0
            sig_new[g] = max(s, _SIGMA2_FLOOR)

        def rel(new, old):
            return float(np.linalg.norm(np.subtract(new, old)) / max(np.linalg.norm(old), 1e-8))

        change = rel(b_new, b) if b is not None else math.inf
        change = max(change, rel([phi_new], [phi]))
        for g in sig_new:
            # a component pinned at the floor counts as converged
            if sig_new[g] > 1e3 * _SIGMA2_FLOOR or sigma2[g] > 1e3 * _SIGMA2_FLOOR:
                change = max(change, rel([sig_new[g]], [sigma2[g]]))
        trace.append({"iteration": it, "relative_change": change, "dispersion": phi_new,
                      **{f"sigma2[{g}]": s for g, s in sig_new.items()}})
        if not np.all(np.isfinite(b_new)) or not math.isfinite(phi_new):
            raise ConvergenceError("IRLS produced non-finite values", trace)
        if change >= tol:
            for g in sig_new:
                history[g].append(math.log(sig_new[g]))
                sig_new[g] = _aitken(history[g], sig_new[g])
        b, phi, sigma2 = b_new, phi_new, sig_new
        if change < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations", trace)

    # polish the coefficients for the final (phi, sigma2)
    lam = penalty(phi, sigma2)
    for _ in range(50):
        b_new, A, H = irls_solve(eta, mu, lam)
        b_new, eta = take_step(b, b_new)
        mu = _inv_link(link, eta)
        done = np.linalg.norm(b_new - b) <= 1e-12 * max(np.linalg.norm(b), 1.0)
        b = b_new
        if done:
            break
    _, A, H = irls_solve(eta, mu, lam)
    Hinv = np.linalg.inv(H)
    edf = float(np.sum(Hinv * A.T))

    cov = phi * Hinv
    coefs = []
    for i in range(n_fixed):
        se = math.sqrt(max(cov[i, i], 0.0))
        z = b[i] / se if se > 0 else math.inf
        coefs.append(Coefficient(names[i], float(b[i]), se, float(z), _wald_p(z)))
    loglik = gamma_log_likelihood(y, mu, phi)
    aic = -2.0 * loglik + 2.0 * (edf + 1.0)
    pearson = (y - mu) / (mu * math.sqrt(phi))
    resid = {"pearson_mean": float(pearson.mean()), "pearson_sd": float(pearson.std()),
             "q05": float(np.quantile(pearson, 0.05)), "q50": float(np.quantile(pearson, 0.5)),
             "q95": float(np.quantile(pearson, 0.95))}
    ranef = {g: dict(zip(levels, b[sl].tolist())) for g, sl, levels in groups}
    return GlmFit(link, coefs, phi, dict(sigma2), float(aic), loglik, edf, n, it, converged, trace,
                  mu, ranef, resid, b, None)


def score_residual(fit: GlmFit, y) -> np.ndarray:
    """Penalised score X' W (z - eta) - Lambda b at the fitted values."""
    X = fit.design.X
    mu = fit.fitted
    dmu = _dmu_deta(fit.link, mu)
    w = dmu * dmu / (mu * mu)
    lam = np.zeros(X.shape[1])
    for g, sl, _ in fit.design.groups:
        lam[sl] = fit.dispersion / fit.variance_components[g]
    return X.T @ (w * (np.asarray(y) - mu) / dmu) - lam * fit.beta


def fit_gamma_glm(data, formula: ModelFormula | None = None) -> GlmFit:
    """Fit the gamma model described by ``formula`` to tuples or column arrays."""
    formula = formula or ModelFormula()
    dm = build_design_matrix(data, formula)
    y = response_vector(data, formula)
    fit = fit_arrays(dm.X, y, dm.n_fixed, dm.groups, formula.link, dm.names)
    fit.design = dm
    return fit


def compare_links(data, formula: ModelFormula | None = None) -> dict:
    """Fit log and inverse links; report each AIC and the lower one."""
    formula = formula or ModelFormula()
    out = {}
    for link in ("log", "inverse"):
        f = ModelFormula(formula.response, formula.fixed_terms, formula.interactions,
                         formula.random_intercepts, link, formula.response_offset, formula.intercept)
        try:
            out[link] = fit_gamma_glm(data, f)
        except ConvergenceError as exc:
            out[link] = exc
    aics = {k: v.aic for k, v in out.items() if isinstance(v, GlmFit)}
    best = min(aics, key=aics.get) if aics else None
    return {"fits": out, "aic": aics, "best": best}
