"""Memoised GLM fits over covariate subsets."""

from __future__ import annotations

import numpy as np

from .exceptions import RankDeficientError
from .glm import Family, GlmFit, fit_glm


class SubsetRegression:
    """Regress ``response`` on ``[1, fixed, U[:, subset]]`` for many subsets.

    Fits are cached by subset.  A failed fit (rank deficiency or non-convergence)
    is cached as ``None`` and counted in ``n_failed``.  Logistic fits are warm
    started from a neighbouring model's coefficients when one is supplied.
    """

    def __init__(self, response, U, family, fixed=None):
        self.response = np.asarray(response, dtype=float)
        self.U = np.asarray(U, dtype=float)
        self.family = Family(family)
        n = self.response.shape[0]
        base = [np.ones((n, 1))]
        if fixed is not None:
            fixed = np.asarray(fixed, dtype=float)
            base.append(fixed.reshape(n, -1))
        self.base = np.hstack(base)
        self.n_fixed = self.base.shape[1]
        self.cache: dict = {}
        self.n_failed = 0
        self.n_fits = 0

    @property
    def n(self):
        return self.response.shape[0]

    def design(self, subset) -> np.ndarray:
        if subset.size == 0:
            return self.base
        return np.hstack([self.base, self.U[:, subset.indices]])

    def coefficient_of(self, fit, subset, m):
        """Position of covariate ``m``'s coefficient inside ``fit`` for ``subset``."""
        pos = np.searchsorted(subset.indices, m)
        return self.n_fixed + int(pos)

    def _start(self, subset, near):
        if near is None or self.family is Family.GAUSSIAN:
            return None
        near_subset, near_fit = near
        if near_fit is None:
            return None
        start = np.zeros(self.n_fixed + subset.size)
        start[: self.n_fixed] = near_fit.coefficients[: self.n_fixed]
        lookup = {int(j): k for k, j in enumerate(near_subset.indices)}
        for k, j in enumerate(subset.indices):
            if int(j) in lookup:
                start[self.n_fixed + k] = near_fit.coefficients[self.n_fixed + lookup[int(j)]]
        return start

    def fit(self, subset, near=None) -> GlmFit | None:
        try:
            return self.cache[subset]
        except KeyError:
            pass
        self.n_fits += 1
        try:
            result = fit_glm(self.design(subset), self.response, self.family, start=self._start(subset, near))
            if not result.converged and near is not None and self.family is Family.BERNOULLI:
                result = fit_glm(self.design(subset), self.response, self.family)
        except (RankDeficientError, ValueError):
            result = None
        if result is not None and not result.converged:
            result = None
        if result is None:
            self.n_failed += 1
        self.cache[subset] = result
        return result
