"""Two-stage per-equation estimator of the unrestricted weights matrix.

Stage 1 predicts each unit's outcome from the pooled exogenous regressors
of every unit (the instrument set); stage 2 regresses each unit's outcome
on the other units' stage-1 predictions plus its own regressors, reading
one row of the weights matrix and the unit's coefficient vector off the
posterior means. Both stages are embarrassingly parallel across units and
fully deterministic: no randomness enters the fits.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import CoefficientSet, PanelDataset, WeightsMatrix, infinity_norm
from .dlreg import DLPrior, VariationalState, default_prior, vb_fit_batch
from .exceptions import EquationFitError, PanelSarError, ValidationError


@dataclass(frozen=True)
class EstimateOptions:
    """Pipeline knobs; estimation itself never consumes randomness."""

    tol: float = 1e-5
    max_iter: int = 1000
    n_workers: int = 1
    intercept: bool = True
    standardize: bool = False

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or self.n_workers < 1:
            raise ValidationError("tol, max_iter and n_workers must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EquationDiagnostics:
    unit_id: str
    n_iters: int
    converged: bool
    r2: float
    sigma2: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Stage1Output:
    """In-sample fitted values (N x T) plus per-equation diagnostics."""

    y_hat: np.ndarray
    per_unit_diagnostics: list[EquationDiagnostics]


@dataclass(frozen=True)
class EstimationDiagnostics:
    stage1: list[EquationDiagnostics]
    stage2: list[EquationDiagnostics]
    stage1_seconds: float
    stage2_seconds: float
    w_infinity_norm: float
    stationarity_warning: bool

    def as_dict(self) -> dict:
        return {
            "stage1": [d.as_dict() for d in self.stage1],
            "stage2": [d.as_dict() for d in self.stage2],
            "stage1_seconds": self.stage1_seconds,
            "stage2_seconds": self.stage2_seconds,
            "w_infinity_norm": self.w_infinity_norm,
            "stationarity_warning": self.stationarity_warning,
        }


@dataclass(frozen=True)
class EstimationResult:
    w_hat: WeightsMatrix
    coefficients: CoefficientSet
    row_spatial_sums: np.ndarray
    diagnostics: EstimationDiagnostics
    config_echo: dict


def _r2(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return float("nan")
    ss_res = float(((y - fitted) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def _standardize_panel(panel: PanelDataset) -> tuple[PanelDataset, dict]:
    """Per-unit z-scoring of y and every regressor column over time.

    Columns that are constant within a unit keep scale 1 (centering only);
    the factors are echoed so estimates can be mapped back by the caller.
    """
    y_center = panel.y.mean(axis=1)
    y_scale = panel.y.std(axis=1)
    y_scale = np.where(y_scale > 0, y_scale, 1.0)
    x_center = panel.x.mean(axis=1)
    x_scale = panel.x.std(axis=1)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    y = (panel.y - y_center[:, None]) / y_scale[:, None]
    x = (panel.x - x_center[:, None, :]) / x_scale[:, None, :]
    factors = {
        "y_center": y_center.tolist(),
        "y_scale": y_scale.tolist(),
        "x_center": x_center.tolist(),
        "x_scale": x_scale.tolist(),
    }
    return PanelDataset(y=y, x=x, unit_ids=list(panel.unit_ids)), factors


def _fit_equations(
    y_batch: np.ndarray,
    x_batch: np.ndarray,
    unit_ids: list[str],
    stage: int,
    prior: DLPrior | None,
    tol: float,
    max_iter: int,
    n_workers: int,
) -> list[VariationalState]:
    """Run all per-unit equations of one stage through the batched engine.

    Units are split into contiguous chunks handled by a bounded thread
    pool; chunking never changes any equation's arithmetic, so results are
    identical for every worker count.
    """
    n_eq = y_batch.shape[0]
    if prior is None:
        prior = default_prior(x_batch.shape[2])
    results: list[VariationalState | None] = [None] * n_eq

    def run_chunk(start: int, stop: int) -> None:
        try:
            states = vb_fit_batch(
                y_batch[start:stop], x_batch[start:stop], prior, tol, max_iter
            )
        except PanelSarError as exc:
            # attribute to the first unit of the chunk unless it names one
            raise EquationFitError(unit_ids[start], stage, exc) from exc
        results[start:stop] = states

    n_chunks = min(max(n_workers, 1), n_eq)
    bounds = np.linspace(0, n_eq, n_chunks + 1, dtype=int)
    if n_chunks == 1:
        run_chunk(0, n_eq)
    else:
        with ThreadPoolExecutor(max_workers=n_chunks) as pool:
            futures = [
                pool.submit(run_chunk, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:])
                if b > a
            ]
            for fut in futures:
                fut.result()
    return results  # type: ignore[return-value]


def stage1_design(panel: PanelDataset, intercept: bool = True) -> np.ndarray:
    """T x (N*k [+1]) instrument design: unit-major stacked regressors."""
    t_dim = panel.n_periods
    stacked = panel.x.transpose(1, 0, 2).reshape(t_dim, panel.n_units * panel.n_exog)
    if intercept:
        return np.column_stack([stacked, np.ones(t_dim)])
    return stacked


def stage1_predict(
    panel: PanelDataset,
    prior: DLPrior | None = None,
    tol: float = 1e-5,
    max_iter: int = 1000,
    n_workers: int = 1,
    intercept: bool = True,
) -> Stage1Output:
    """Fit every unit's outcome on the pooled instrument design."""
    if panel.n_periods < 2:
        raise ValidationError("stage 1 needs at least two periods")
    design = stage1_design(panel, intercept)
    n = panel.n_units
    x_batch = np.broadcast_to(design, (n, *design.shape)).copy()
    states = _fit_equations(
        panel.y, x_batch, panel.unit_ids, 1, prior, tol, max_iter, n_workers
    )
    y_hat = np.array([design @ st.beta_mean for st in states])
    used_prior = prior if prior is not None else default_prior(design.shape[1])
    diags = [
        EquationDiagnostics(
            unit_id=unit,
            n_iters=st.n_iters,
            converged=st.converged,
            r2=_r2(panel.y[idx], y_hat[idx]),
            sigma2=_sigma2_of(st, panel.n_periods, design.shape[1], used_prior),
        )
        for idx, (unit, st) in enumerate(zip(panel.unit_ids, states))
    ]
    return Stage1Output(y_hat=y_hat, per_unit_diagnostics=diags)


def _sigma2_of(state: VariationalState, t_dim: int, m_dim: int, prior: DLPrior) -> float:
    c_h = prior.nu + 0.5 * (t_dim + m_dim)
    return c_h / ((c_h - 1.0) * state.e_inv_sigma2)


def stage2_design(
    panel: PanelDataset, y_hat: np.ndarray, unit_index: int, intercept: bool = True
) -> np.ndarray:
    """T x (N-1+k [+1]) design for one unit: others' predictions, own regressors."""
    others = [j for j in range(panel.n_units) if j != unit_index]
    cols = [y_hat[others].T, panel.x[unit_index]]
    if intercept:
        cols.append(np.ones((panel.n_periods, 1)))
    return np.column_stack(cols)


def stage2_estimate(
    panel: PanelDataset,
    stage1: Stage1Output,
    prior: DLPrior | None = None,
    tol: float = 1e-5,
    max_iter: int = 1000,
    n_workers: int = 1,
    intercept: bool = True,
    config_echo: dict | None = None,
) -> EstimationResult:
    """Recover each weights-matrix row and coefficient vector per unit."""
    n, t_dim, k = panel.n_units, panel.n_periods, panel.n_exog
    if stage1.y_hat.shape != (n, t_dim):
        raise ValidationError(
            f"stage-1 output shape {stage1.y_hat.shape} does not match panel ({n}, {t_dim})"
        )
    started = time.perf_counter()
    x_batch = np.array(
        [stage2_design(panel, stage1.y_hat, i, intercept) for i in range(n)]
    )
    states = _fit_equations(
        panel.y, x_batch, panel.unit_ids, 2, prior, tol, max_iter, n_workers
    )
    m_dim = x_batch.shape[2]
    used_prior = prior if prior is not None else default_prior(m_dim)

    w_hat = np.zeros((n, n))
    theta = np.zeros((n, k))
    sigma2 = np.zeros(n)
    diags = []
    for i, st in enumerate(states):
        others = [j for j in range(n) if j != i]
        w_hat[i, others] = st.beta_mean[: n - 1]
        theta[i] = st.beta_mean[n - 1 : n - 1 + k]
        sigma2[i] = _sigma2_of(st, t_dim, m_dim, used_prior)
        fitted = x_batch[i] @ st.beta_mean
        diags.append(
            EquationDiagnostics(
                unit_id=panel.unit_ids[i],
                n_iters=st.n_iters,
                converged=st.converged,
                r2=_r2(panel.y[i], fitted),
                sigma2=sigma2[i],
            )
        )
    elapsed = time.perf_counter() - started

    weights = WeightsMatrix(w_hat, list(panel.unit_ids))
    norm = infinity_norm(weights)
    diagnostics = EstimationDiagnostics(
        stage1=list(stage1.per_unit_diagnostics),
        stage2=diags,
        stage1_seconds=0.0,
        stage2_seconds=elapsed,
        w_infinity_norm=norm,
        stationarity_warning=norm >= 1.0,
    )
    return EstimationResult(
        w_hat=weights,
        coefficients=CoefficientSet(theta=theta, sigma2=sigma2),
        row_spatial_sums=weights.row_sums(),
        diagnostics=diagnostics,
        config_echo=config_echo or {},
    )


def estimate(
    panel: PanelDataset,
    prior: DLPrior | None = None,
    options: EstimateOptions | None = None,
) -> EstimationResult:
    """Run both stages; deterministic given (panel, prior, options)."""
    options = options or EstimateOptions()
    work_panel = panel
    config_echo: dict = {"options": options.as_dict()}
    if prior is not None:
        config_echo["prior"] = {"a": prior.a, "nu": prior.nu, "s": prior.s}
    else:
        config_echo["prior"] = {"a": "1/M", "nu": 0.01, "s": 0.01}
    if options.standardize:
        work_panel, factors = _standardize_panel(panel)
        config_echo["standardization"] = factors

    t0 = time.perf_counter()
    stage1 = stage1_predict(
        work_panel,
        prior,
        tol=options.tol,
        max_iter=options.max_iter,
        n_workers=options.n_workers,
        intercept=options.intercept,
    )
    t1 = time.perf_counter()
    result = stage2_estimate(
        work_panel,
        stage1,
        prior,
        tol=options.tol,
        max_iter=options.max_iter,
        n_workers=options.n_workers,
        intercept=options.intercept,
        config_echo=config_echo,
    )
    diagnostics = EstimationDiagnostics(
        stage1=result.diagnostics.stage1,
        stage2=result.diagnostics.stage2,
        stage1_seconds=t1 - t0,
        stage2_seconds=result.diagnostics.stage2_seconds,
        w_infinity_norm=result.diagnostics.w_infinity_norm,
        stationarity_warning=result.diagnostics.stationarity_warning,
    )
    return EstimationResult(
        w_hat=result.w_hat,
        coefficients=result.coefficients,
        row_spatial_sums=result.row_spatial_sums,
        diagnostics=diagnostics,
        config_echo=config_echo,
    )
