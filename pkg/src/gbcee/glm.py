"""Gaussian-identity and Bernoulli-logit GLMs fitted by IRLS.

Every regression in the package goes through :func:`fit_glm`: outcome and
exposure models, TMLE fluctuation steps (offset + row weights) and the
bootstrap refits.  The marginal likelihood of a model is approximated by
:func:`log_marginal_bic`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg
from scipy.special import expit

from .exceptions import RankDeficientError

PROB_CLIP = 1e-10
MAX_ABS_COEF = 30.0
# sine of the angle between a column and the span of the preceding ones
_COLLINEAR_TOL = 1e-7


class Family(str, Enum):
    GAUSSIAN = "gaussian_identity"
    BERNOULLI = "bernoulli_logit"

    def inverse_link(self, eta):
        if self is Family.GAUSSIAN:
            return eta
        return np.clip(expit(eta), PROB_CLIP, 1.0 - PROB_CLIP)


@dataclass(frozen=True, eq=False)
class GlmFit:
    """Result of :func:`fit_glm`.

    ``cov_unscaled`` is ``(D' W D)^{-1}`` at the final IRLS weights;
    ``standard_errors`` are ``sqrt(dispersion * diag(cov_unscaled))``.
    """

    family: Family
    coefficients: np.ndarray
    standard_errors: np.ndarray
    fitted_values: np.ndarray
    log_likelihood: float
    dispersion: float
    n_params: int
    converged: bool
    n_iter: int = 0
    cov_unscaled: np.ndarray | None = None

    def __post_init__(self):
        for name in ("coefficients", "standard_errors", "fitted_values", "cov_unscaled"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)

    @property
    def n_obs(self) -> int:
        return self.fitted_values.shape[0]


def _offending_column(design):
    """Index of the first column lying (numerically) in the span of the earlier ones."""
    r = np.linalg.qr(design, mode="r")
    diag = np.abs(np.diag(r))
    norms = np.linalg.norm(design, axis=0)
    ratio = np.divide(diag, norms, out=np.zeros_like(diag), where=norms > 0)
    bad = np.flatnonzero(ratio < _COLLINEAR_TOL)
    return int(bad[0]) if bad.size else int(np.argmin(ratio))


def _cholesky(a, design_for_error):
    """Upper Cholesky factor of ``a``; ``design_for_error`` (array or callable) names the culprit column."""
    try:
        c = linalg.cholesky(a, lower=False, check_finite=False)
    except linalg.LinAlgError:
        design = design_for_error() if callable(design_for_error) else design_for_error
        raise RankDeficientError(_offending_column(design)) from None
    scale = np.sqrt(np.diag(a))
    ratio = np.divide(np.diag(c), scale, out=np.zeros_like(scale), where=scale > 0)
    if ratio.size and ratio.min() < _COLLINEAR_TOL:
        raise RankDeficientError(int(np.argmin(ratio)))
    return c


def _inverse_from_cholesky(c):
    c_inv = linalg.solve_triangular(c, np.eye(c.shape[0]), lower=False, check_finite=False)
    return c_inv @ c_inv.T


def _bernoulli_loglik(y, eta, w):
    return float(np.dot(w, y * eta - np.logaddexp(0.0, eta)))


def fit_glm(
    design,
    response,
    family=Family.GAUSSIAN,
    *,
    offset=None,
    weights=None,
    start=None,
    tol=1e-8,
    max_iter=100,
) -> GlmFit:
    """Fit a GLM with design matrix ``design`` (intercept column supplied by the caller).

    Gaussian fits are solved in closed form (weighted normal equations through
    a Cholesky factorisation).  Logistic fits use IRLS with step halving, stopping when
    half the Newton decrement (the predicted remaining log-likelihood gain)
    drops below ``tol`` relative to the log-likelihood.  Fitted
    probabilities are clamped to ``[1e-10, 1 - 1e-10]``; fits that do not
    converge, whose largest absolute coefficient exceeds 30, or that predict
    every observation perfectly (separation) are returned with ``converged=False``.

    Raises :class:`RankDeficientError` if the weighted cross-product is singular.
    """
    family = Family(family)
    D = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if D.ndim != 2 or D.shape[0] != y.shape[0]:
        raise ValueError(f"design shape {D.shape} does not match response length {y.shape[0]}")
    n, p = D.shape
    if n < p:
        raise ValueError(f"need at least as many rows ({n}) as design columns ({p})")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if family is Family.GAUSSIAN:
        return _fit_gaussian(D, y, off, w)
    return _fit_logistic(D, y, off, w, start, tol, max_iter)


def _fit_gaussian(D, y, off, w):
    n, p = D.shape
    sw = np.sqrt(w)
    z = y - off
    if p:
        Dt_w = D.T * w
        chol = _cholesky(Dt_w @ D, D * sw[:, None])
        beta = linalg.cho_solve((chol, False), Dt_w @ z, check_finite=False)
        cov_unscaled = _inverse_from_cholesky(chol)
        eta = D @ beta + off
    else:
        beta = np.zeros(0)
        cov_unscaled = np.zeros((0, 0))
        eta = off.copy()
    resid = y - eta
    sw_total = w.sum()
    sigma2 = max(float(np.sum(w * resid**2) / sw_total), np.finfo(float).tiny)
    loglik = -0.5 * sw_total * (math.log(2.0 * math.pi * sigma2) + 1.0)
    se = np.sqrt(sigma2 * np.diag(cov_unscaled))
    return GlmFit(
        Family.GAUSSIAN, beta, se, eta, loglik, sigma2, p + 1, True, 1, cov_unscaled
    )


def _fit_logistic(D, y, off, w, start, tol, max_iter):
    n, p = D.shape
    DT = np.ascontiguousarray(D.T)
    if start is not None:
        beta = np.asarray(start, dtype=float).copy()
        eta = D @ beta + off
        mu = np.clip(expit(eta), PROB_CLIP, 1.0 - PROB_CLIP)
    else:
        beta = None
        mu = (w * y + 0.5) / (w + 1.0)
        eta = np.log(mu / (1.0 - mu))
    loglik = _bernoulli_loglik(y, eta, w)
    converged = False
    chol = None
    it = 0
    for it in range(1, max_iter + 1):
        var = mu * (1.0 - mu)
        wt = w * var
        z = (eta - off) + (y - mu) / var
        try:
            chol = _cholesky((DT * wt) @ D, lambda: D * np.sqrt(wt)[:, None])
        except RankDeficientError:
            _cholesky(DT @ D, D)  # re-raises for a genuinely singular design
            chol = None
            break
        beta_new = linalg.cho_solve((chol, False), DT @ (wt * z), check_finite=False)
        if beta is not None:
            # half the Newton decrement bounds the remaining log-likelihood gain
            r = chol @ (beta_new - beta)
            if 0.5 * float(r @ r) < tol * (abs(loglik) + 0.1):
                # take the final (tiny) step; the factorisation is kept for the covariance
                beta, eta = beta_new, D @ beta_new + off
                loglik = _bernoulli_loglik(y, eta, w)
                mu = np.clip(expit(eta), PROB_CLIP, 1.0 - PROB_CLIP)
                converged = True
                break
        eta_new = D @ beta_new + off
        loglik_new = _bernoulli_loglik(y, eta_new, w)
        halvings = 0
        while beta is not None and loglik_new < loglik - 1e-12 * (abs(loglik) + 1.0) and halvings < 30:
            beta_new = 0.5 * (beta_new + beta)
            eta_new = D @ beta_new + off
            loglik_new = _bernoulli_loglik(y, eta_new, w)
            halvings += 1
        beta, eta, loglik = beta_new, eta_new, loglik_new
        mu = np.clip(expit(eta), PROB_CLIP, 1.0 - PROB_CLIP)
        chol = None
    if beta is None:
        beta = np.zeros(p)
    if chol is None:
        wt = w * mu * (1.0 - mu)
        try:
            chol = _cholesky((DT * wt) @ D, lambda: D * np.sqrt(wt)[:, None])
        except RankDeficientError:
            converged = False
    if chol is None:
        # weights collapsed under separation; keep the fit but flag it
        cov_unscaled = np.full((p, p), np.inf)
    else:
        cov_unscaled = _inverse_from_cholesky(chol)
    if p and np.max(np.abs(beta)) > MAX_ABS_COEF:
        converged = False
    if n and np.all(np.abs(y - mu) < 1e-8):
        # every observation predicted perfectly: complete separation
        converged = False
    se = np.sqrt(np.diag(cov_unscaled))
    return GlmFit(Family.BERNOULLI, beta, se, mu, loglik, 1.0, p, converged, it, cov_unscaled)


def log_marginal_bic(fit: GlmFit, n: int) -> float:
    """Schwarz approximation of log P(data | model): ``loglik - n_params/2 * ln(n)``."""
    if not fit.converged:
        raise ValueError("log marginal likelihood requested for a non-converged fit")
    return float(fit.log_likelihood - 0.5 * fit.n_params * math.log(n))


def predict(fit: GlmFit, design, offset=None) -> np.ndarray:
    """Mean response ``g^{-1}(design @ coefficients + offset)``."""
    D = np.asarray(design, dtype=float)
    if D.ndim != 2 or D.shape[1] != fit.coefficients.shape[0]:
        raise ValueError(
            f"design has {D.shape[-1] if D.ndim else 0} columns, fit has {fit.coefficients.shape[0]} coefficients"
        )
    eta = D @ fit.coefficients
    if offset is not None:
        eta = eta + offset
    return fit.family.inverse_link(eta)


def linear_predictor(fit: GlmFit, design, offset=None) -> np.ndarray:
    eta = np.asarray(design, dtype=float) @ fit.coefficients
    return eta if offset is None else eta + offset


def add_intercept(columns) -> np.ndarray:
    columns = np.asarray(columns, dtype=float)
    if columns.ndim == 1:
        columns = columns[:, None]
    return np.column_stack([np.ones(columns.shape[0]), columns])
