"""Domain types for panels and spatial weights, plus dense matrix utilities.

Everything here is a pure function of its inputs; all matrices are dense
numpy arrays (estimated weights are dense by construction, so sparse
storage would buy nothing).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import NumericalError, ValidationError

ROW_SUM_EPS = 1e-12


def _check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel: N units observed over T periods with k exogenous regressors.

    ``y`` is N x T (unit-major); ``x`` is N x T x k. Row i of every array
    refers to ``unit_ids[i]``.
    """

    y: np.ndarray
    x: np.ndarray
    unit_ids: list[str]

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "unit_ids", list(self.unit_ids))
        if y.ndim != 2:
            raise ValidationError("y must be an N x T matrix")
        if x.ndim != 3:
            raise ValidationError("x must be an N x T x k array")
        n, t = y.shape
        if n < 1 or t < 1:
            raise ValidationError("panel dimensions must be strictly positive")
        if x.shape[0] != n or x.shape[1] != t:
            raise ValidationError(
                f"y has shape {y.shape} but x has shape {x.shape[:2]} in (N, T)"
            )
        if x.shape[2] < 1:
            raise ValidationError("panel needs at least one exogenous regressor")
        if len(self.unit_ids) != n:
            raise ValidationError("unit_ids length must equal N")
        if len(set(self.unit_ids)) != n:
            raise ValidationError("unit_ids must be unique")
        _check_finite(y, "y")
        _check_finite(x, "x")

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def n_exog(self) -> int:
        return self.x.shape[2]


@dataclass(frozen=True)
class WeightsMatrix:
    """N x N spatial weights matrix with an exactly-zero diagonal."""

    w: np.ndarray
    unit_ids: list[str]

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "unit_ids", list(self.unit_ids))
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError("weights matrix must be square")
        if len(self.unit_ids) != w.shape[0]:
            raise ValidationError("unit_ids length must match matrix order")
        _check_finite(w, "weights matrix")
        if np.any(np.diag(w) != 0.0):
            raise ValidationError("weights matrix diagonal must be exactly zero")

    @property
    def n_units(self) -> int:
        return self.w.shape[0]

    def row_sums(self) -> np.ndarray:
        """Signed row sums; the per-unit spatial-parameter analogue."""
        return self.w.sum(axis=1)


@dataclass(frozen=True)
class CoefficientSet:
    """Per-unit exogenous coefficients (N x k) and noise variances (N,)."""

    theta: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        sigma2 = np.asarray(self.sigma2, dtype=float).ravel()
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma2", sigma2)
        if theta.shape[0] != sigma2.shape[0]:
            raise ValidationError("theta and sigma2 must agree on N")
        _check_finite(theta, "theta")
        _check_finite(sigma2, "sigma2")
        if np.any(sigma2 <= 0):
            raise ValidationError("sigma2 entries must be strictly positive")


def row_standardize(w: WeightsMatrix) -> WeightsMatrix:
    """Divide each row by its signed row sum; all-zero rows pass through.

    Intended for 0/1 contiguity matrices, where every nonzero row sums to
    exactly 1 afterwards. Rows whose entries do not cancel below
    ``ROW_SUM_EPS`` in absolute sum are required.
    """
    mat = w.w.copy()
    sums = mat.sum(axis=1)
    nonzero_rows = np.any(mat != 0.0, axis=1)
    degenerate = nonzero_rows & (np.abs(sums) < ROW_SUM_EPS)
    if np.any(degenerate):
        bad = [w.unit_ids[i] for i in np.nonzero(degenerate)[0]]
        raise ValidationError(
            f"row standardization degenerate: rows {bad} have nonzero entries "
            f"but near-zero row sums"
        )
    mat[nonzero_rows] /= sums[nonzero_rows, None]
    return WeightsMatrix(mat, w.unit_ids)


def infinity_norm(w: WeightsMatrix | np.ndarray) -> float:
    """Maximum over rows of the sum of absolute entries."""
    mat = w.w if isinstance(w, WeightsMatrix) else np.asarray(w, dtype=float)
    if mat.size == 0:
        return 0.0
    return float(np.abs(mat).sum(axis=1).max())


def solve_reduced_form(w: WeightsMatrix, shock: np.ndarray) -> np.ndarray:
    """Solve (I - W) v = shock by pivoted LU, requiring the stationarity bound.

    ``shock`` may be a length-N vector or an N x m block of right-hand
    sides (one solve factorization shared across columns).
    """
    norm = infinity_norm(w)
    if norm >= 1.0:
        raise NumericalError(
            f"infinity norm of weights is {norm:.6g} >= 1; system is not stationary"
        )
    shock_arr = np.asarray(shock, dtype=float)
    if shock_arr.shape[0] != w.n_units:
        raise ValidationError(
            f"shock has leading dimension {shock_arr.shape[0]}, expected {w.n_units}"
        )
    a = np.eye(w.n_units) - w.w
    try:
        v = scipy.linalg.solve(a, shock_arr)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise NumericalError(f"reduced-form solve failed: {exc}") from exc
    residual = float(np.abs(a @ v - shock_arr).max())
    scale = float(np.abs(shock_arr).max())
    if not np.all(np.isfinite(v)) or residual > 1e-10 * max(scale, 1e-300):
        raise NumericalError("reduced-form solve is ill-conditioned")
    return v
