"""Command-line interface: simulate, estimate, effects, mc-replicate.

Configuration comes from an optional flat ``key=value`` file plus
command-line flags; flags win. Exit codes: 0 success, 1 validation
problem, 2 numerical failure, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import CoefficientSet, WeightsMatrix, infinity_norm
from .dlreg import DLPrior
from .exceptions import NumericalError, PanelSarError, ValidationError
from .fileio import (
    emit_heatmap,
    read_panel_csv,
    read_theta_csv,
    read_weights_csv,
    write_json,
    write_panel_csv,
    write_sigma2_csv,
    write_theta_csv,
    write_weights_csv,
)
from .metrics import effects_matrix
from .simulator import (
    SimulationConfig,
    ThetaSpec,
    run_monte_carlo,
    simulate_coefficients,
    simulate_panel,
    simulate_weights,
)
from .twostage import EstimateOptions, estimate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage through the validation exit code."""

    def error(self, message):  # noqa: D102 - argparse hook
        self.print_usage(sys.stderr)
        raise ValidationError(message)


_SIM_KEYS = {
    "n": int,
    "t": int,
    "k": int,
    "q": int,
    "rho_min": float,
    "rho_max": float,
    "noise_sd": float,
    "theta_specs": str,
    "seed": int,
    "replications": int,
}
_FIT_KEYS = {
    "a": float,
    "nu": float,
    "s": float,
    "tol": float,
    "max_iter": int,
    "workers": int,
    "standardize": bool,
    "intercept": bool,
}
_IO_KEYS = {"output_dir": str, "panel": str, "weights": str, "theta": str, "scale": float}

_COMMAND_KEYS = {
    "simulate": {**_SIM_KEYS, "output_dir": str},
    "estimate": {**_FIT_KEYS, "seed": int, "panel": str, "output_dir": str},
    "effects": {"weights": str, "theta": str, "output_dir": str, "scale": float},
    "mc-replicate": {**_SIM_KEYS, **_FIT_KEYS, "output_dir": str},
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"not a boolean: {text!r}")


def read_config_file(path: str | Path, command: str) -> dict:
    """Flat key=value file; '#' comments; unknown keys are rejected."""
    known = _COMMAND_KEYS[command]
    values: dict = {}
    with open(path) as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}: line {line_no}: expected key=value")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key not in known:
                raise ValidationError(
                    f"{path}: line {line_no}: unknown key {key!r} for {command}"
                )
            caster = known[key]
            try:
                values[key] = _parse_bool(text) if caster is bool else caster(text)
            except ValueError:
                raise ValidationError(
                    f"{path}: line {line_no}: bad value for {key}: {text!r}"
                ) from None
    return values


def _add_sim_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, help="number of units (default 30)")
    parser.add_argument("--t", type=int, help="number of periods (default 20)")
    parser.add_argument("--k", type=int, help="exogenous regressors per unit (default 2)")
    parser.add_argument("--q", type=int, help="neighbors ahead/behind (default 3)")
    parser.add_argument("--rho-min", dest="rho_min", type=float, help="lower |rho| bound (default 0.6)")
    parser.add_argument("--rho-max", dest="rho_max", type=float, help="upper |rho| bound (default 0.99)")
    parser.add_argument("--noise-sd", dest="noise_sd", type=float, help="disturbance sd (default 1)")
    parser.add_argument(
        "--theta-specs",
        dest="theta_specs",
        help="comma-separated kind:p1:p2 specs, e.g. uniform:1:2,normal:0:2",
    )
    parser.add_argument("--replications", type=int, help="Monte Carlo replications")


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--a", type=float, help="Dirichlet concentration (default 1/M)")
    parser.add_argument("--nu", type=float, help="noise-precision prior shape (default 0.01)")
    parser.add_argument("--s", type=float, help="noise-precision prior rate (default 0.01)")
    parser.add_argument("--tol", type=float, help="convergence tolerance (default 1e-5)")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="sweep cap (default 1000)")
    parser.add_argument("--workers", type=int, help="parallel workers (default 1)")
    parser.add_argument(
        "--standardize",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="per-unit z-scoring before estimation",
    )
    parser.add_argument(
        "--intercept",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="include an intercept column in both stages (default on)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panelsar", description=__doc__)
    parser.add_argument("--version", action="version", version=f"panelsar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic panel and its truth")
    _add_sim_flags(p_sim)
    p_sim.add_argument("--seed", type=int, help="master seed (default 1)")
    p_sim.add_argument("--config", help="key=value config file")
    p_sim.add_argument("--output-dir", dest="output_dir", help="target directory (default .)")

    p_est = sub.add_parser("estimate", help="estimate weights from a panel CSV")
    _add_fit_flags(p_est)
    p_est.add_argument("--panel", help="input panel CSV")
    p_est.add_argument("--seed", type=int, help="recorded in meta.json (fits are deterministic)")
    p_est.add_argument("--config", help="key=value config file")
    p_est.add_argument("--output-dir", dest="output_dir", help="target directory (default .)")

    p_eff = sub.add_parser("effects", help="effects matrices from weights + coefficients")
    p_eff.add_argument("--weights", help="weights CSV (w_hat.csv)")
    p_eff.add_argument("--theta", help="coefficient CSV (theta_hat.csv)")
    p_eff.add_argument("--scale", type=float, help="fixed heatmap scale (default: data max)")
    p_eff.add_argument("--config", help="key=value config file")
    p_eff.add_argument("--output-dir", dest="output_dir", help="target directory (default .)")

    p_mc = sub.add_parser("mc-replicate", help="run a Monte Carlo cell and report scores")
    _add_sim_flags(p_mc)
    _add_fit_flags(p_mc)
    p_mc.add_argument("--seed", type=int, help="master seed (default 1)")
    p_mc.add_argument("--config", help="key=value config file")
    p_mc.add_argument("--output-dir", dest="output_dir", help="target directory (default .)")
    return parser


def resolve_config(args: argparse.Namespace, command: str, defaults: dict) -> dict:
    """defaults < config file < command-line flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        resolved.update(read_config_file(args.config, command))
    for key in _COMMAND_KEYS[command]:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _sim_config(conf: dict) -> SimulationConfig:
    specs: tuple = ()
    if conf.get("theta_specs"):
        specs = tuple(ThetaSpec.parse(part) for part in str(conf["theta_specs"]).split(","))
    return SimulationConfig(
        n=conf["n"],
        t=conf["t"],
        k=conf["k"],
        q=conf["q"],
        rho_low=conf["rho_min"],
        rho_high=conf["rho_max"],
        theta_specs=specs,
        noise_sd=conf["noise_sd"],
        seed=conf["seed"],
        n_replications=conf["replications"],
    )


def _prior(conf: dict) -> DLPrior | None:
    if conf.get("a") is None:
        if conf["nu"] == 0.01 and conf["s"] == 0.01:
            return None  # per-equation default a = 1/M
        raise ValidationError("custom nu/s also require an explicit --a")
    return DLPrior(a=conf["a"], nu=conf["nu"], s=conf["s"])


def _options(conf: dict, standardize_default: bool) -> EstimateOptions:
    standardize = conf.get("standardize")
    if standardize is None:
        standardize = standardize_default
    intercept = conf.get("intercept")
    if intercept is None:
        intercept = True
    return EstimateOptions(
        tol=conf["tol"],
        max_iter=conf["max_iter"],
        n_workers=conf["workers"],
        intercept=intercept,
        standardize=standardize,
    )


def _outdir(conf: dict) -> Path:
    out = Path(conf.get("output_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_meta(out: Path, command: str, conf: dict, extra: dict | None = None) -> None:
    payload = {
        "command": command,
        "config": {k: conf[k] for k in sorted(conf)},
        "package_version": __version__,
    }
    if extra:
        payload.update(extra)
    write_json(payload, out / "meta.json")


_SIM_DEFAULTS = {
    "n": 30,
    "t": 20,
    "k": 2,
    "q": 3,
    "rho_min": 0.6,
    "rho_max": 0.99,
    "noise_sd": 1.0,
    "theta_specs": "",
    "seed": 1,
    "replications": 1,
}
_FIT_DEFAULTS = {
    "a": None,
    "nu": 0.01,
    "s": 0.01,
    "tol": 1e-5,
    "max_iter": 1000,
    "workers": 1,
}


def cmd_simulate(args: argparse.Namespace) -> int:
    conf = resolve_config(args, "simulate", {**_SIM_DEFAULTS, "output_dir": "."})
    config = _sim_config(conf)
    out = _outdir(conf)
    dataset_w, rho = simulate_weights(config)
    coefficients = simulate_coefficients(config)
    panel = simulate_panel(dataset_w, coefficients, config, replication=0)
    write_panel_csv(panel, out / "panel.csv")
    write_weights_csv(dataset_w, out / "w_true.csv")
    write_theta_csv(coefficients.theta, panel.unit_ids, out / "theta_true.csv")
    _write_meta(
        out,
        "simulate",
        conf,
        {
            "rho_true": [float(v) for v in rho],
            "sigma2_true": float(config.noise_sd**2),
            "resolved": config.as_dict(),
        },
    )
    print(f"wrote panel.csv, w_true.csv, theta_true.csv, meta.json to {out}")
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    conf = resolve_config(
        args,
        "estimate",
        {**_FIT_DEFAULTS, "standardize": None, "intercept": None, "seed": 0, "panel": None, "output_dir": "."},
    )
    if not conf.get("panel"):
        raise ValidationError("estimate requires --panel (or panel= in the config file)")
    panel = read_panel_csv(conf["panel"])
    # empirical data are standardized by default; simulations usually are not
    options = _options(conf, standardize_default=True)
    conf["standardize"] = options.standardize
    conf["intercept"] = options.intercept
    result = estimate(panel, _prior(conf), options)
    out = _outdir(conf)
    write_weights_csv(result.w_hat, out / "w_hat.csv")
    write_theta_csv(result.coefficients.theta, panel.unit_ids, out / "theta_hat.csv")
    write_sigma2_csv(result.coefficients.sigma2, panel.unit_ids, out / "sigma2.csv")
    write_json(
        {
            "diagnostics": result.diagnostics.as_dict(),
            "row_spatial_sums": [float(v) for v in result.row_spatial_sums],
            "config_echo": result.config_echo,
        },
        out / "diagnostics.json",
    )
    _write_meta(out, "estimate", conf)
    if result.diagnostics.stationarity_warning:
        print(
            f"warning: estimated weights have infinity norm "
            f"{result.diagnostics.w_infinity_norm:.4f} >= 1; effects matrices "
            f"are undefined for this estimate",
            file=sys.stderr,
        )
    print(f"wrote w_hat.csv, theta_hat.csv, sigma2.csv, diagnostics.json, meta.json to {out}")
    return EXIT_OK


def cmd_effects(args: argparse.Namespace) -> int:
    conf = resolve_config(
        args, "effects", {"weights": None, "theta": None, "scale": None, "output_dir": "."}
    )
    if not conf.get("weights") or not conf.get("theta"):
        raise ValidationError("effects requires --weights and --theta")
    weights = read_weights_csv(conf["weights"])
    theta, theta_ids = read_theta_csv(conf["theta"])
    if theta_ids != weights.unit_ids:
        raise ValidationError("weights and theta files disagree on unit ids")
    norm = infinity_norm(weights)
    if norm >= 1.0:
        raise NumericalError(
            f"estimated weights have infinity norm {norm:.6g} >= 1, so (I - W) is "
            f"not invertible by a convergent expansion; effects are undefined. "
            f"Re-estimate with stronger shrinkage or inspect w_hat before use."
        )
    out = _outdir(conf)
    summary: dict = {}
    n = weights.n_units
    off_mask = ~np.eye(n, dtype=bool)
    for r in range(theta.shape[1]):
        eff = effects_matrix(weights, theta[:, r], r)
        name = f"effects_{r + 1}"
        write_weights_like_csv(eff.e, weights.unit_ids, out / f"{name}.csv")
        summary[f"x{r + 1}"] = {
            "mean_abs_direct": float(np.abs(np.diag(eff.e)).mean()),
            "mean_abs_indirect": float(np.abs(eff.e[off_mask]).mean()),
        }
    write_json(summary, out / "effects_summary.json")
    _write_meta(out, "effects", conf)
    print(f"wrote {theta.shape[1]} effects matrices and effects_summary.json to {out}")
    return EXIT_OK


def write_weights_like_csv(matrix: np.ndarray, unit_ids: list[str], path: Path) -> None:
    """Dense CSV with ids, for matrices that are not WeightsMatrix instances."""
    lines = ["unit_id," + ",".join(unit_ids)]
    for unit, row in zip(unit_ids, matrix):
        lines.append(unit + "," + ",".join(repr(float(v)) for v in row))
    from .fileio import _atomic_write

    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def cmd_mc_replicate(args: argparse.Namespace) -> int:
    conf = resolve_config(
        args,
        "mc-replicate",
        {
            **_SIM_DEFAULTS,
            **_FIT_DEFAULTS,
            "standardize": None,
            "intercept": None,
            "replications": 20,
            "output_dir": ".",
        },
    )
    config = _sim_config(conf)
    options = _options(conf, standardize_default=False)
    conf["standardize"] = options.standardize
    conf["intercept"] = options.intercept
    report = run_monte_carlo(config, _prior(conf), options)
    out = _outdir(conf)
    write_json(report.as_dict(), out / "tables.json")

    w_scale = float(max(np.abs(report.w_true).max(), np.abs(report.w_hat_mean).max()))
    emit_heatmap(report.w_true, out / "w_true.pgm", w_scale)
    emit_heatmap(report.w_hat_mean, out / "w_hat_mean.pgm", w_scale)
    try:
        e_true = effects_matrix(
            WeightsMatrix(report.w_true, config.unit_ids()), report.theta_true[:, 0]
        ).e
        e_hat = effects_matrix(
            WeightsMatrix(report.w_hat_mean, config.unit_ids()), report.theta_hat_mean[:, 0]
        ).e
        d_scale = float(max(np.abs(np.diag(e_true)).max(), np.abs(np.diag(e_hat)).max()))
        off = ~np.eye(config.n, dtype=bool)
        i_scale = float(max(np.abs(e_true[off]).max(), np.abs(e_hat[off]).max(), 1e-12))
        emit_heatmap(np.diag(np.diag(e_true)), out / "effects_direct_true.pgm", d_scale)
        emit_heatmap(np.diag(np.diag(e_hat)), out / "effects_direct_est.pgm", d_scale)
        emit_heatmap(np.where(off, e_true, 0.0), out / "effects_indirect_true.pgm", i_scale)
        emit_heatmap(np.where(off, e_hat, 0.0), out / "effects_indirect_est.pgm", i_scale)
    except PanelSarError as exc:
        print(f"warning: effects heatmaps skipped: {exc}", file=sys.stderr)

    _write_meta(out, "mc-replicate", conf)
    lines = [
        f"Monte Carlo cell: N={config.n} T={config.t} k={config.k} q={config.q} "
        f"seed={config.seed} replications={report.n_replications} (failed {report.n_failed})",
        f"replication-mean estimate: corr2={report.mean_estimate['weights_corr2']:.4f} "
        f"ssim={report.mean_estimate['weights_ssim']:.4f}",
        f"per-replication corr2: mean={report.per_replication['weights_corr2']['mean']:.4f} "
        f"sd={report.per_replication['weights_corr2']['sd']:.4f}",
    ]
    effects = report.mean_estimate.get("effects", {})
    if "direct_corr2" in effects:
        lines.append(
            f"effects (replication-mean): direct corr2={effects['direct_corr2']:.4f} "
            f"indirect corr2={effects['indirect_corr2']:.4f} "
            f"indirect ssim={effects['indirect_ssim']:.4f}"
        )
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    print(summary, end="")
    return EXIT_OK


_DISPATCH = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "effects": cmd_effects,
    "mc-replicate": cmd_mc_replicate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _DISPATCH[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
