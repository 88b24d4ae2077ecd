"""Synthetic-panel generator: ring contiguity, signed row scales, reduced form.

The data-generating process builds a "q ahead and q behind" circular
contiguity matrix, row-standardizes it, scales each row by a signed
per-unit parameter rho_n (|rho_n| uniform on an open interval, sign from a
fair coin), then simulates y_t = (I - W)^-1 (x_t theta + eps_t) period by
period. All randomness flows through named substreams of the master seed
(contiguity is deterministic; magnitudes, signs, coefficients, regressors
and disturbances each own a stream), so enlarging N or T never reshuffles
draws made by the other streams.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import CoefficientSet, PanelDataset, WeightsMatrix, infinity_norm, row_standardize, solve_reduced_form
from .exceptions import PanelSarError, ValidationError

# substream labels: (seed, stream) or (seed, stream, replication)
_STREAM_RHO = 0
_STREAM_SIGN = 1
_STREAM_THETA = 2
_STREAM_X = 3
_STREAM_EPS = 4


@dataclass(frozen=True)
class ThetaSpec:
    """Marginal distribution of one coefficient column across units."""

    kind: str  # "uniform" or "normal"
    p1: float  # low / mean
    p2: float  # high / sd

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise ValidationError(f"unknown coefficient distribution {self.kind!r}")
        if self.kind == "uniform" and not self.p1 < self.p2:
            raise ValidationError("uniform spec needs low < high")
        if self.kind == "normal" and self.p2 <= 0:
            raise ValidationError("normal spec needs sd > 0")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.p1, self.p2, n)
        return rng.normal(self.p1, self.p2, n)

    @classmethod
    def parse(cls, text: str) -> "ThetaSpec":
        parts = text.strip().split(":")
        if len(parts) != 3:
            raise ValidationError(
                f"bad coefficient spec {text!r}; expected kind:p1:p2 like uniform:1:2"
            )
        try:
            return cls(parts[0], float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ValidationError(f"bad coefficient spec {text!r}: {exc}") from exc

    def __str__(self) -> str:
        return f"{self.kind}:{self.p1:g}:{self.p2:g}"


def default_theta_specs(k: int) -> list[ThetaSpec]:
    """First column uniform(1, 2), remaining columns normal(0, 2)."""
    specs = [ThetaSpec("uniform", 1.0, 2.0)]
    specs += [ThetaSpec("normal", 0.0, 2.0) for _ in range(k - 1)]
    return specs[:k]


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 30
    t: int = 20
    k: int = 2
    q: int = 3
    rho_low: float = 0.6
    rho_high: float = 0.99
    theta_specs: tuple[ThetaSpec, ...] = ()
    noise_sd: float = 1.0
    seed: int = 1
    n_replications: int = 1

    def __post_init__(self):
        if self.n < 1 or self.t < 1 or self.k < 1:
            raise ValidationError("n, t and k must be positive")
        if self.q < 0:
            raise ValidationError("q must be nonnegative")
        if 2 * self.q >= self.n:
            raise ValidationError(f"need 2q < N, got q={self.q}, N={self.n}")
        if not (0.0 < self.rho_low < self.rho_high < 1.0):
            raise ValidationError("need 0 < rho_low < rho_high < 1")
        if self.noise_sd <= 0:
            raise ValidationError("noise_sd must be positive")
        if self.n_replications < 1:
            raise ValidationError("n_replications must be positive")
        specs = tuple(self.theta_specs) if self.theta_specs else tuple(default_theta_specs(self.k))
        if len(specs) != self.k:
            raise ValidationError(
                f"{len(specs)} coefficient specs for k={self.k} regressors"
            )
        object.__setattr__(self, "theta_specs", specs)

    def unit_ids(self) -> list[str]:
        width = max(3, len(str(self.n - 1)))
        return [f"u{idx:0{width}d}" for idx in range(self.n)]

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "t": self.t,
            "k": self.k,
            "q": self.q,
            "rho_low": self.rho_low,
            "rho_high": self.rho_high,
            "theta_specs": [str(s) for s in self.theta_specs],
            "noise_sd": self.noise_sd,
            "seed": self.seed,
            "n_replications": self.n_replications,
        }


@dataclass(frozen=True)
class SimulatedDataset:
    panel: PanelDataset
    w_true: WeightsMatrix
    theta_true: CoefficientSet
    rho_true: np.ndarray
    replication: int = 0


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *key)))


def ring_contiguity(n: int, q: int) -> np.ndarray:
    """0/1 matrix where unit i neighbors the q units on either side (mod N)."""
    c = np.zeros((n, n))
    for step in range(1, q + 1):
        idx = np.arange(n)
        c[idx, (idx + step) % n] = 1.0
        c[idx, (idx - step) % n] = 1.0
    return c


def simulate_weights(config: SimulationConfig) -> tuple[WeightsMatrix, np.ndarray]:
    """Signed, row-scaled circular weights; infinity norm max_n |rho_n| < 1."""
    ids = config.unit_ids()
    base = row_standardize(WeightsMatrix(ring_contiguity(config.n, config.q), ids))
    magnitudes = _stream(config.seed, _STREAM_RHO).uniform(
        config.rho_low, config.rho_high, config.n
    )
    signs = np.where(
        _stream(config.seed, _STREAM_SIGN).random(config.n) < 0.5, -1.0, 1.0
    )
    rho = magnitudes * signs
    return WeightsMatrix(base.w * rho[:, None], ids), rho


def simulate_coefficients(config: SimulationConfig) -> CoefficientSet:
    rng = _stream(config.seed, _STREAM_THETA)
    theta = np.column_stack([spec.draw(config.n, rng) for spec in config.theta_specs])
    return CoefficientSet(theta=theta, sigma2=np.full(config.n, config.noise_sd**2))


def simulate_panel(
    w_true: WeightsMatrix,
    theta_true: CoefficientSet,
    config: SimulationConfig,
    replication: int = 0,
) -> PanelDataset:
    """Draw regressors and disturbances, then solve the reduced form per period."""
    if infinity_norm(w_true) >= 1.0:
        raise ValidationError("true weights violate the stationarity bound")
    n, t, k = config.n, config.t, config.k
    x = _stream(config.seed, _STREAM_X, replication).standard_normal((n, t, k))
    eps = config.noise_sd * _stream(config.seed, _STREAM_EPS, replication).standard_normal((n, t))
    shock = np.einsum("ntk,nk->nt", x, theta_true.theta) + eps
    y = solve_reduced_form(w_true, shock)
    return PanelDataset(y=y, x=x, unit_ids=list(w_true.unit_ids))


def simulate(config: SimulationConfig, replication: int = 0) -> SimulatedDataset:
    w_true, rho_true = simulate_weights(config)
    theta_true = simulate_coefficients(config)
    panel = simulate_panel(w_true, theta_true, config, replication)
    return SimulatedDataset(
        panel=panel,
        w_true=w_true,
        theta_true=theta_true,
        rho_true=rho_true,
        replication=replication,
    )


# ---------------------------------------------------------------------------
# Monte Carlo driver
# ---------------------------------------------------------------------------


def _summary(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "values": [float(v) for v in values],
    }


@dataclass
class MonteCarloReport:
    """Aggregated scores of one Monte Carlo cell.

    One (w_true, theta_true) pair is drawn per cell from the master seed;
    each replication redraws regressors and disturbances, re-estimates,
    and is scored individually. ``mean_estimate`` scores the
    replication-averaged estimates against the truth, which is the view
    in which element noise averages out and only systematic bias remains.
    """

    config: dict
    regressor_index: int
    n_replications: int
    n_failed: int
    failures: list[dict]
    true_weights_stats: dict
    true_effects_stats: dict
    per_replication: dict
    mean_estimate: dict
    elapsed_seconds: float
    # dense matrices for rendering; not part of the JSON payload
    w_true: np.ndarray | None = None
    theta_true: np.ndarray | None = None
    w_hat_mean: np.ndarray | None = None
    theta_hat_mean: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "regressor_index": self.regressor_index,
            "n_replications": self.n_replications,
            "n_failed": self.n_failed,
            "failures": self.failures,
            "true_weights_stats": self.true_weights_stats,
            "true_effects_stats": self.true_effects_stats,
            "per_replication": self.per_replication,
            "mean_estimate": self.mean_estimate,
            "elapsed_seconds": self.elapsed_seconds,
        }


def _true_weights_stats(w: np.ndarray) -> dict:
    off = ~np.eye(w.shape[0], dtype=bool)
    out = {}
    for label, sel in (("positive", off & (w > 0)), ("negative", off & (w < 0))):
        if not np.any(sel):
            continue
        vals = w[sel]
        out[label] = {
            "n": int(sel.sum()),
            "mean": float(vals.mean()),
            "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        }
    return out


def _effects_abs_stats(e: np.ndarray) -> dict:
    diag = np.abs(np.diag(e))
    off = np.abs(e[~np.eye(e.shape[0], dtype=bool)])
    return {
        "direct": {"mean_abs": float(diag.mean()), "sd_abs": float(diag.std(ddof=1))},
        "indirect": {"mean_abs": float(off.mean()), "sd_abs": float(off.std(ddof=1))},
    }


def run_monte_carlo(config: SimulationConfig, prior=None, options=None, regressor_index: int = 0) -> MonteCarloReport:
    """Simulate-estimate-score over ``config.n_replications`` replications.

    Failed replications are recorded with their index and message and
    excluded from every aggregate; the report errors only when every
    replication failed.
    """
    from .metrics import (
        SsimParams,
        corr2,
        effects_matrix,
        effects_similarity,
        element_category_stats,
        ssim,
        weights_similarity,
    )
    from .twostage import EstimateOptions, estimate

    options = options or EstimateOptions()
    unit_range = SsimParams(dynamic_range=1.0)
    started = time.time()
    w_true, rho_true = simulate_weights(config)
    theta_true = simulate_coefficients(config)
    e_true = effects_matrix(w_true, theta_true.theta[:, regressor_index], regressor_index)

    n = config.n
    off_mask = ~np.eye(n, dtype=bool)
    nonzero_mask = off_mask & (w_true.w != 0)

    per_rep: dict[str, list[float]] = {
        "weights_corr2": [],
        "weights_ssim": [],
        "weights_ssim_unit_range": [],
        "direct_corr2": [],
        "indirect_corr2": [],
        "direct_ssim_masked": [],
        "indirect_ssim": [],
        "est_nonzero_abs_mean": [],
        "w_infinity_norm": [],
    }
    bias_acc: dict[str, dict[str, list[float]]] = {}
    failures: list[dict] = []
    w_sum = np.zeros((n, n))
    theta_sum = np.zeros((n, config.k))
    n_ok = 0

    for rep in range(config.n_replications):
        try:
            panel = simulate_panel(w_true, theta_true, config, rep)
            result = estimate(panel, prior, options)
        except Exception as exc:  # noqa: BLE001 - failures are reported, not fatal
            failures.append({"replication": rep, "error": str(exc)})
            continue
        w_hat = result.w_hat.w
        theta_hat = result.coefficients.theta
        w_sum += w_hat
        theta_sum += theta_hat
        n_ok += 1

        per_rep["weights_corr2"].append(corr2(w_true.w, w_hat))
        per_rep["weights_ssim"].append(ssim(w_true.w, w_hat))
        per_rep["weights_ssim_unit_range"].append(ssim(w_true.w, w_hat, unit_range))
        per_rep["est_nonzero_abs_mean"].append(float(np.abs(w_hat[nonzero_mask]).mean()))
        per_rep["w_infinity_norm"].append(result.diagnostics.w_infinity_norm)
        for label, st in element_category_stats(w_true.w, w_hat).items():
            acc = bias_acc.setdefault(label, {"mean_bias": [], "rmse": []})
            acc["mean_bias"].append(st.mean_bias)
            acc["rmse"].append(st.rmse)
        try:
            eff = effects_similarity(
                w_true, theta_true.theta, result.w_hat, theta_hat, regressor_index
            )
            per_rep["direct_corr2"].append(eff.direct_corr2)
            per_rep["indirect_corr2"].append(eff.indirect_corr2)
            per_rep["direct_ssim_masked"].append(eff.direct_ssim_masked)
            per_rep["indirect_ssim"].append(eff.indirect_ssim)
        except PanelSarError:
            # estimated weights violate stationarity: effects not computable
            pass

    if n_ok == 0:
        raise NumericalFailureAll(failures)

    w_mean = w_sum / n_ok
    theta_mean = theta_sum / n_ok
    mean_w_report = weights_similarity(w_true.w, w_mean)
    mean_estimate = {
        "weights_corr2": mean_w_report.corr2,
        "weights_ssim": mean_w_report.ssim,
        "weights_ssim_unit_range": ssim(w_true.w, w_mean, unit_range),
        "weights_bias": {
            label: {"mean_bias": st.mean_bias, "rmse": st.rmse, "n": st.n_elements}
            for label, st in mean_w_report.element_stats.items()
        },
        "est_nonzero_abs_mean": float(np.abs(w_mean[nonzero_mask]).mean()),
        "w_infinity_norm": float(np.abs(w_mean).sum(axis=1).max()),
    }
    try:
        eff_mean = effects_similarity(
            w_true,
            theta_true.theta,
            WeightsMatrix(w_mean, list(w_true.unit_ids)),
            theta_mean,
            regressor_index,
        )
        e_hat = effects_matrix(
            WeightsMatrix(w_mean, list(w_true.unit_ids)),
            theta_mean[:, regressor_index],
            regressor_index,
        )
        mean_estimate["effects"] = {
            "direct_corr2": eff_mean.direct_corr2,
            "direct_corr2_masked": eff_mean.direct_corr2_masked,
            "direct_ssim_masked": eff_mean.direct_ssim_masked,
            "direct_ssim_full": eff_mean.direct_ssim_full,
            "indirect_corr2": eff_mean.indirect_corr2,
            "indirect_ssim": eff_mean.indirect_ssim,
            "estimated_abs": _effects_abs_stats(e_hat.e),
        }
    except PanelSarError as exc:
        mean_estimate["effects"] = {"error": str(exc)}

    report = MonteCarloReport(
        config=config.as_dict(),
        regressor_index=regressor_index,
        n_replications=n_ok,
        n_failed=len(failures),
        failures=failures,
        true_weights_stats=_true_weights_stats(w_true.w),
        true_effects_stats=_effects_abs_stats(e_true.e),
        per_replication={key: _summary(vals) for key, vals in per_rep.items() if vals}
        | {
            "weights_bias": {
                label: {k: _summary(v) for k, v in acc.items()}
                for label, acc in bias_acc.items()
            }
        },
        mean_estimate=mean_estimate,
        elapsed_seconds=time.time() - started,
        w_true=w_true.w,
        theta_true=theta_true.theta,
        w_hat_mean=w_mean,
        theta_hat_mean=theta_mean,
    )
    return report


class NumericalFailureAll(PanelSarError):
    """Every Monte Carlo replication failed."""

    def __init__(self, failures: list[dict]):
        self.failures = failures
        super().__init__(f"all {len(failures)} replications failed")
