"""Input checks shared by the estimator classes."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .data import Dataset, VariableType
from .exceptions import DataError


def column_names(X):
    """Column names of a DataFrame-like ``X``, or ``None``."""
    cols = getattr(X, "columns", None)
    if cols is None:
        return None
    return tuple(str(c) for c in cols)


def check_variable_type(value, name) -> VariableType:
    try:
        return VariableType(value)
    except ValueError:
        valid = ", ".join(v.value for v in VariableType)
        raise ValueError(f"{name} must be one of {valid}, got {value!r}") from None


def check_covariates(X, n_expected=None):
    """Covariate matrix as a finite float array of shape (n, M); M may be 0."""
    if X is None:
        if n_expected is None:
            raise DataError("covariates are required when the number of rows is unknown")
        return np.empty((n_expected, 0))
    arr = np.asarray(X)
    if arr.ndim == 2 and arr.shape[1] == 0:
        return arr.astype(float)
    try:
        return check_array(X, dtype=float, ensure_all_finite=True, ensure_min_samples=2)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def check_vector(v, name):
    try:
        arr = check_array(v, dtype=float, ensure_2d=False, ensure_all_finite=True, ensure_min_samples=2)
    except ValueError as exc:
        raise DataError(f"{name}: {exc}") from None
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    return arr


def check_inputs(X, y, exposure, outcome_type, exposure_type) -> Dataset:
    """Validate ``(X, y, exposure)`` and pack them into a :class:`Dataset`."""
    y = check_vector(y, "outcome")
    exposure = check_vector(exposure, "exposure")
    U = check_covariates(X, y.shape[0])
    check_consistent_length(U, y, exposure)
    names = column_names(X) or ()
    return Dataset(
        y, exposure, U,
        check_variable_type(outcome_type, "outcome_type"),
        check_variable_type(exposure_type, "exposure_type"),
        names,
    )


def resolve_adjustment(adjustment, M, names=()):
    """Turn ``"full"``, ``"none"``, indices or covariate names into a boolean mask of length M."""
    if isinstance(adjustment, str):
        if adjustment == "full":
            return np.ones(M, dtype=bool)
        if adjustment == "none":
            return np.zeros(M, dtype=bool)
        raise ValueError(f"adjustment must be 'full', 'none' or a list of covariates, got {adjustment!r}")
    mask = np.zeros(M, dtype=bool)
    lookup = {name: j for j, name in enumerate(names)}
    for item in adjustment:
        if isinstance(item, str):
            if item not in lookup:
                raise ValueError(f"unknown covariate {item!r} in adjustment set")
            mask[lookup[item]] = True
        else:
            j = int(item)
            if not 0 <= j < M:
                raise ValueError(f"covariate index {j} out of range for {M} covariates")
            mask[j] = True
    return mask
