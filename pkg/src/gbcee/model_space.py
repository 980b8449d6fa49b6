"""Adjustment sets and the confounder-targeting prior over outcome models.

An outcome model is identified by an :class:`AdjustmentSet`, a length-M bit
vector saying which covariates enter it.  The prior probability that the
outcome model includes covariate ``m`` depends on whether ``m`` predicts the
exposure and on the strength of its (standardised) outcome coefficient::

    omega_m = omega * (delta_m * sigma_u[m] / sigma_y) ** 2
    P(in  | exposure predictor) = omega_m / (omega_m + 1)
    P(out | exposure predictor) = 1 / (omega_m + 1)
    P(in  | not a predictor)    = P(out | not a predictor) = 1/2

The unknown coefficient ``delta_m`` is integrated against the normal sampling
distribution of its estimate.  The default integration is exact: writing
``a = omega * (sigma_u / sigma_y)**2`` and ``gamma = a ** -0.5``,
``1 / (1 + a d**2)`` is a Cauchy kernel of half-width ``gamma`` and its
Gaussian average is ``pi * gamma * voigt_profile(mean, se, gamma)``.
Gauss-Hermite quadrature is available as well; it is accurate for smooth
integrands but underresolves the narrow dip at ``d = 0`` when ``a * se**2``
is large, which is the regime of ``omega = 500 * sqrt(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import voigt_profile

INTEGRATION_METHODS = ("exact", "quadrature")


@dataclass(frozen=True)
class AdjustmentSet:
    """Inclusion bit vector over the M candidate covariates."""

    bits: tuple

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @classmethod
    def empty(cls, M):
        return cls((False,) * M)

    @classmethod
    def full(cls, M):
        return cls((True,) * M)

    @classmethod
    def from_indices(cls, M, indices):
        chosen = set(int(i) for i in indices)
        return cls(tuple(j in chosen for j in range(M)))

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_string(cls, text):
        if any(c not in "01" for c in text):
            raise ValueError(f"adjustment set string must be 0/1 characters, got {text!r}")
        return cls(tuple(c == "1" for c in text))

    @cached_property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    @cached_property
    def mask(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool)

    @property
    def size(self) -> int:
        return int(sum(self.bits))

    def flip(self, m) -> "AdjustmentSet":
        bits = list(self.bits)
        bits[m] = not bits[m]
        return AdjustmentSet(tuple(bits))

    def neighbors(self) -> list:
        return [self.flip(m) for m in range(len(self.bits))]


def neighbors(subset: AdjustmentSet) -> list:
    """All M sets at Hamming distance one from ``subset``."""
    return subset.neighbors()


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the outcome-model prior.

    ``sigma_u`` and ``sigma_y`` are the (MLE) standard deviations of the
    covariates and of the outcome; use ``sigma_y = 1`` for a binary outcome.
    """

    omega: float
    sigma_u: np.ndarray
    sigma_y: float = 1.0
    quadrature_nodes: int = 20
    integration: str = "exact"

    def __post_init__(self):
        sigma_u = np.asarray(self.sigma_u, dtype=float).ravel()
        sigma_u.flags.writeable = False
        object.__setattr__(self, "sigma_u", sigma_u)
        if not self.omega >= 0 or np.isnan(self.omega):
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if np.any(sigma_u <= 0) or not self.sigma_y > 0:
            raise ValueError("standard deviations must be positive")
        if self.quadrature_nodes < 1:
            raise ValueError("quadrature_nodes must be >= 1")
        if self.integration not in INTEGRATION_METHODS:
            raise ValueError(f"integration must be one of {INTEGRATION_METHODS}")

    @property
    def scale(self) -> np.ndarray:
        """Per-covariate factor ``a_m`` with ``omega_m = a_m * delta**2``."""
        return self.omega * (self.sigma_u / self.sigma_y) ** 2


def omega_term(delta_tilde, m, cfg: PriorConfig):
    """``omega * (delta_tilde * sigma_u[m] / sigma_y) ** 2``."""
    if cfg.omega == 0:
        return np.zeros_like(np.asarray(delta_tilde, dtype=float))[()]
    return cfg.omega * (np.asarray(delta_tilde, dtype=float) * cfg.sigma_u[m] / cfg.sigma_y) ** 2


def _p_in_given_predictor(omega_m):
    omega_m = np.asarray(omega_m, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.where(np.isinf(omega_m), 1.0, omega_m / (omega_m + 1.0))


def prior_inclusion_odds(alpha_y_m, alpha_x_m, omega_m):
    """Conditional prior probability ``P(alpha_y_m | alpha_x_m)`` for one covariate."""
    if not alpha_x_m:
        return 0.5
    p_in = float(_p_in_given_predictor(omega_m))
    return p_in if alpha_y_m else 1.0 - p_in


def marginal_prior_component(alpha_y_m, pi_m, omega_m):
    """Average of ``P(alpha_y_m | alpha_x_m)`` over the exposure-model inclusion of ``m``.

    ``pi_m`` is the posterior probability that ``m`` is in the exposure model.
    """
    p_in = _p_in_given_predictor(omega_m)
    given_predictor = np.where(np.asarray(alpha_y_m, dtype=bool), p_in, 1.0 - p_in)
    return (pi_m * given_predictor + (1.0 - pi_m) * 0.5)[()]


@lru_cache(maxsize=None)
def _hermite_rule(nodes):
    z, w = hermegauss(nodes)
    return z, w / np.sqrt(2.0 * np.pi)


def expected_exclusion(delta_hat, delta_se, scale, method="exact", nodes=20):
    """``E[1 / (1 + scale * D**2)]`` for ``D ~ N(delta_hat, delta_se**2)``, vectorised."""
    delta_hat, delta_se, scale = np.broadcast_arrays(
        np.asarray(delta_hat, dtype=float),
        np.asarray(delta_se, dtype=float),
        np.asarray(scale, dtype=float),
    )
    out = np.empty(delta_hat.shape)
    zero = scale == 0
    inf = np.isinf(scale)
    out[zero] = 1.0
    out[inf] = 0.0
    rest = ~(zero | inf)
    if not rest.any():
        return out[()]
    mu, se, a = delta_hat[rest], delta_se[rest], scale[rest]
    if method == "exact":
        gamma = 1.0 / np.sqrt(a)
        out[rest] = np.pi * gamma * voigt_profile(mu, se, gamma)
    else:
        z, w = _hermite_rule(int(nodes))
        d = mu[:, None] + se[:, None] * z[None, :]
        out[rest] = (w[None, :] / (1.0 + a[:, None] * d * d)).sum(axis=1)
    return np.clip(out, 0.0, 1.0)[()]


def integrated_prior_components(delta_hat, delta_se, pi, bits, scale, method="exact", nodes=20):
    """Vectorised form of :func:`integrated_prior_component` over covariates."""
    p_out = expected_exclusion(delta_hat, delta_se, scale, method, nodes)
    given_predictor = np.where(np.asarray(bits, dtype=bool), 1.0 - p_out, p_out)
    return pi * given_predictor + (1.0 - np.asarray(pi, dtype=float)) * 0.5


def integrated_prior_component(delta_hat, delta_se, pi_m, m, bit, cfg: PriorConfig):
    """Marginal prior component for covariate ``m`` with ``delta`` integrated out.

    The coefficient is averaged over ``N(delta_hat, delta_se**2)``, using the
    closed form or ``cfg.quadrature_nodes``-point Gauss-Hermite quadrature
    depending on ``cfg.integration``.
    """
    if not delta_se >= 0:
        raise ValueError("delta_se must be non-negative")
    value = integrated_prior_components(
        delta_hat, delta_se, pi_m, bit, cfg.scale[m], cfg.integration, cfg.quadrature_nodes
    )
    return float(value)
