"""Observed-data container: outcome, exposure, covariates and their types."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .exceptions import DataError


class VariableType(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


def check_binary(values, name):
    """Raise :class:`DataError` naming the first row that is not literally 0 or 1."""
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero((values != 0.0) & (values != 1.0))
    if bad.size:
        row = int(bad[0])
        raise DataError(
            f"binary column {name!r} contains value {values[row]:g} at row {row}; "
            "binary variables must be coded 0/1"
        )
    return values


def check_finite(values, name):
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1))
    if bad.size:
        raise DataError(f"column {name!r} has a missing or non-finite value at row {int(bad[0])}")
    return values


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``y``, exposure ``x`` and covariate matrix ``U`` (n x M).

    Arrays are copied and made read-only, so a dataset can be shared across
    estimators without defensive copies.
    """

    y: np.ndarray
    x: np.ndarray
    U: np.ndarray
    outcome_type: VariableType = VariableType.CONTINUOUS
    exposure_type: VariableType = VariableType.BINARY
    covariate_names: tuple = field(default=())

    def __post_init__(self):
        y = check_finite(np.array(self.y, dtype=float).ravel(), "outcome")
        x = check_finite(np.array(self.x, dtype=float).ravel(), "exposure")
        U = np.array(self.U, dtype=float)
        if U.ndim == 1 and U.size == 0:
            U = U.reshape(len(y), 0)
        if U.ndim == 1:
            U = U.reshape(-1, 1)
        if U.ndim != 2:
            raise DataError("covariates must be a 2-d array")
        if not (len(y) == len(x) == U.shape[0]):
            raise DataError(
                f"inconsistent lengths: outcome {len(y)}, exposure {len(x)}, covariates {U.shape[0]}"
            )
        names = tuple(self.covariate_names) or tuple(f"U{j + 1}" for j in range(U.shape[1]))
        if len(names) != U.shape[1]:
            raise DataError(f"{len(names)} covariate names for {U.shape[1]} columns")
        for j, name in enumerate(names):
            check_finite(U[:, j], name)
        outcome_type = VariableType(self.outcome_type)
        exposure_type = VariableType(self.exposure_type)
        if outcome_type is VariableType.BINARY:
            check_binary(y, "outcome")
        if exposure_type is VariableType.BINARY:
            check_binary(x, "exposure")
        for arr in (y, x, U):
            arr.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "outcome_type", outcome_type)
        object.__setattr__(self, "exposure_type", exposure_type)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def M(self) -> int:
        return self.U.shape[1]

    def take(self, rows) -> "Dataset":
        """Row subset (or bootstrap resample) with the same variable types."""
        rows = np.asarray(rows)
        return Dataset(
            self.y[rows], self.x[rows], self.U[rows],
            self.outcome_type, self.exposure_type, self.covariate_names,
        )

    @classmethod
    def from_frame(
        cls,
        frame,
        outcome: str,
        exposure: str,
        covariates: Sequence[str],
        outcome_type="continuous",
        exposure_type="binary",
    ) -> "Dataset":
        """Build a dataset from a pandas DataFrame, rejecting missing values with row indices."""
        covariates = list(covariates)
        missing = [c for c in [outcome, exposure, *covariates] if c not in frame.columns]
        if missing:
            raise DataError(f"missing column(s): {', '.join(missing)}")
        for col in [outcome, exposure, *covariates]:
            values = frame[col]
            na = np.flatnonzero(values.isna().to_numpy())
            if na.size:
                raise DataError(
                    f"column {col!r} has a missing value at row {int(na[0])}; imputation is not supported"
                )
            try:
                values.to_numpy(dtype=float)
            except (TypeError, ValueError):
                numeric = np.array([_is_number(v) for v in values])
                row = int(np.flatnonzero(~numeric)[0])
                raise DataError(f"column {col!r} has a non-numeric value {values.iloc[row]!r} at row {row}") from None
        if VariableType(outcome_type) is VariableType.BINARY:
            check_binary(frame[outcome].to_numpy(dtype=float), outcome)
        if VariableType(exposure_type) is VariableType.BINARY:
            check_binary(frame[exposure].to_numpy(dtype=float), exposure)
        U = frame[covariates].to_numpy(dtype=float) if covariates else np.empty((len(frame), 0))
        return cls(
            frame[outcome].to_numpy(dtype=float),
            frame[exposure].to_numpy(dtype=float),
            U,
            outcome_type,
            exposure_type,
            tuple(covariates),
        )


def _is_number(value):
    try:
        float(value)
    except (TypeError, ValueError):
        return False
    return True
