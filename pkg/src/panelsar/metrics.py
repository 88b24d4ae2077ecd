"""Scoring machinery: matrix correlation, SSIM, effects matrices, bias stats."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import WeightsMatrix, infinity_norm
from .exceptions import NumericalError, ValidationError


@dataclass(frozen=True)
class SsimParams:
    """SSIM configuration: uniform window, stride 1, data-driven dynamic range.

    ``dynamic_range`` of None means L = (max - min) over the union of both
    matrices; these matrices are not 8-bit images, so a fixed L would be
    arbitrary.
    """

    window: int = 8
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float | None = None

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "k1": self.k1,
            "k2": self.k2,
            "dynamic_range": self.dynamic_range,
        }


@dataclass(frozen=True)
class CategoryStats:
    """Mean bias and RMSE of (estimate - truth) within one sign category."""

    n_elements: int
    mean_true: float
    mean_bias: float
    rmse: float


@dataclass(frozen=True)
class SimilarityReport:
    """Similarity of an estimated matrix to its truth."""

    corr2: float
    ssim: float
    element_stats: dict[str, CategoryStats] = field(default_factory=dict)
    ssim_params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EffectsMatrix:
    """Partial-derivative matrix dy/dX_r for one regressor.

    The diagonal holds own-unit (direct) effects, off-diagonal entries the
    cross-unit (indirect/spillover) effects.
    """

    e: np.ndarray
    regressor_index: int

    def direct(self) -> np.ndarray:
        return np.diag(self.e).copy()

    def indirect(self) -> np.ndarray:
        out = self.e.copy()
        np.fill_diagonal(out, 0.0)
        return out


@dataclass(frozen=True)
class EffectsSimilarityReport:
    """Similarity of estimated direct/indirect effects to the truth.

    Direct effects are compared both as length-N vectors
    (``direct_corr2``) and as diagonal-masked N x N matrices
    (``direct_corr2_masked``, where the shared off-diagonal zeros count as
    agreement); SSIM likewise comes in masked and full-matrix variants.
    Indirect comparisons mask the diagonal explicitly.
    """

    direct_corr2: float
    direct_corr2_masked: float
    direct_ssim_masked: float
    direct_ssim_full: float
    indirect_corr2: float
    indirect_ssim: float


def corr2(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation over all entries of two equal-shaped matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    denom2 = float((da * da).sum()) * float((db * db).sum())
    if denom2 <= 0.0:
        raise ValidationError("corr2 undefined: at least one matrix is constant")
    return float((da * db).sum() / np.sqrt(denom2))


def _window_view(a: np.ndarray, window: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(a, (window, window))


def ssim(a: np.ndarray, b: np.ndarray, params: SsimParams = SsimParams()) -> float:
    """Mean structural similarity over sliding windows.

    Window statistics are population moments over a uniform window; the
    stabilizing constants are C1 = (k1*L)^2, C2 = (k2*L)^2 with L the
    dynamic range. Two identical constant matrices compare as 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValidationError("ssim expects two-dimensional matrices")
    win = params.window
    if min(a.shape) < win:
        raise ValidationError(
            f"matrix of shape {a.shape} smaller than the {win}x{win} window"
        )
    if params.dynamic_range is not None:
        drange = float(params.dynamic_range)
    else:
        drange = float(max(a.max(), b.max()) - min(a.min(), b.min()))
    if drange == 0.0:
        # both matrices constant and equal
        return 1.0
    c1 = (params.k1 * drange) ** 2
    c2 = (params.k2 * drange) ** 2

    wa = _window_view(a, win)
    wb = _window_view(b, win)
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    var_a = (wa * wa).mean(axis=(-1, -2)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(-1, -2)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def effects_matrix(w: WeightsMatrix, theta_r: np.ndarray, regressor_index: int = 0) -> EffectsMatrix:
    """(I - W)^-1 diag(theta_r) through one factorized solve over N columns."""
    theta_r = np.asarray(theta_r, dtype=float).ravel()
    if theta_r.shape[0] != w.n_units:
        raise ValidationError("theta_r length must equal the matrix order")
    norm = infinity_norm(w)
    if norm >= 1.0:
        raise NumericalError(
            f"infinity norm {norm:.6g} >= 1; effects matrix undefined"
        )
    a = np.eye(w.n_units) - w.w
    try:
        e = scipy.linalg.solve(a, np.diag(theta_r))
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise NumericalError(f"effects solve failed: {exc}") from exc
    if not np.all(np.isfinite(e)):
        raise NumericalError("effects solve produced non-finite values")
    return EffectsMatrix(e=e, regressor_index=regressor_index)


def element_category_stats(
    w_true: np.ndarray | WeightsMatrix, w_hat: np.ndarray | WeightsMatrix
) -> dict[str, CategoryStats]:
    """Off-diagonal bias/RMSE split by the sign of the true entry.

    Bias is the signed mean of (estimate - truth) within each category;
    empty categories are omitted rather than reported as zero.
    """
    wt = w_true.w if isinstance(w_true, WeightsMatrix) else np.asarray(w_true, dtype=float)
    wh = w_hat.w if isinstance(w_hat, WeightsMatrix) else np.asarray(w_hat, dtype=float)
    if wt.shape != wh.shape:
        raise ValidationError(f"shape mismatch: {wt.shape} vs {wh.shape}")
    n = wt.shape[0]
    off = ~np.eye(n, dtype=bool)
    stats: dict[str, CategoryStats] = {}
    for label, sel in (
        ("positive", off & (wt > 0)),
        ("negative", off & (wt < 0)),
        ("zero", off & (wt == 0)),
    ):
        count = int(sel.sum())
        if count == 0:
            continue
        diff = wh[sel] - wt[sel]
        stats[label] = CategoryStats(
            n_elements=count,
            mean_true=float(wt[sel].mean()),
            mean_bias=float(diff.mean()),
            rmse=float(np.sqrt((diff * diff).mean())),
        )
    return stats


def weights_similarity(
    w_true: WeightsMatrix | np.ndarray,
    w_hat: WeightsMatrix | np.ndarray,
    ssim_params: SsimParams = SsimParams(),
) -> SimilarityReport:
    """Full-matrix corr2 and SSIM plus per-category off-diagonal stats."""
    wt = w_true.w if isinstance(w_true, WeightsMatrix) else np.asarray(w_true, dtype=float)
    wh = w_hat.w if isinstance(w_hat, WeightsMatrix) else np.asarray(w_hat, dtype=float)
    return SimilarityReport(
        corr2=corr2(wt, wh),
        ssim=ssim(wt, wh, ssim_params),
        element_stats=element_category_stats(wt, wh),
        ssim_params=ssim_params.as_dict(),
    )


def effects_similarity(
    true_w: WeightsMatrix,
    true_theta: np.ndarray,
    est_w: WeightsMatrix,
    est_theta: np.ndarray,
    r: int = 0,
    ssim_params: SsimParams = SsimParams(),
) -> EffectsSimilarityReport:
    """Compare the direct and indirect effects implied by two weight matrices."""
    true_theta = np.atleast_2d(np.asarray(true_theta, dtype=float))
    est_theta = np.atleast_2d(np.asarray(est_theta, dtype=float))
    e_true = effects_matrix(true_w, true_theta[:, r], r)
    e_est = effects_matrix(est_w, est_theta[:, r], r)

    d_true, d_est = e_true.direct(), e_est.direct()
    masked_true = np.diag(d_true)
    masked_est = np.diag(d_est)
    i_true, i_est = e_true.indirect(), e_est.indirect()
    return EffectsSimilarityReport(
        direct_corr2=corr2(d_true[:, None], d_est[:, None]),
        direct_corr2_masked=corr2(masked_true, masked_est),
        direct_ssim_masked=ssim(masked_true, masked_est, ssim_params),
        direct_ssim_full=ssim(e_true.e, e_est.e, ssim_params),
        indirect_corr2=corr2(i_true, i_est),
        indirect_ssim=ssim(i_true, i_est, ssim_params),
    )
