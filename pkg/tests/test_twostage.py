import numpy as np
import pytest

from panelsar.core import PanelDataset
from panelsar.dlreg import default_prior
from panelsar.exceptions import ValidationError
from panelsar.metrics import corr2
from panelsar.simulator import SimulationConfig, simulate
from panelsar.twostage import (
    EstimateOptions,
    estimate,
    stage1_design,
    stage1_predict,
    stage2_design,
    stage2_estimate,
)

FAST = EstimateOptions(tol=1e-4, max_iter=300, n_workers=1)


@pytest.fixture(scope="module")
def desk_data():
    return simulate(SimulationConfig(n=12, t=20, q=2, seed=31))


@pytest.fixture(scope="module")
def desk_result(desk_data):
    return estimate(desk_data.panel, None, FAST)


class TestStage1:
    def test_design_shape_and_order(self, desk_data):
        panel = desk_data.panel
        design = stage1_design(panel, intercept=True)
        assert design.shape == (panel.n_periods, panel.n_units * panel.n_exog + 1)
        # unit-major stacking: columns 2i, 2i+1 are unit i's regressors
        assert np.array_equal(design[:, 4], panel.x[2, :, 0])
        assert np.all(design[:, -1] == 1.0)

    def test_single_unit_reduces_to_own_regression(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 30, 2))
        y = (x[0] @ np.array([1.5, -0.5]))[None, :] + 0.1 * rng.standard_normal((1, 30))
        panel = PanelDataset(y=y, x=x, unit_ids=["solo"])
        out = stage1_predict(panel, tol=1e-5)
        assert out.y_hat.shape == (1, 30)
        r2 = out.per_unit_diagnostics[0].r2
        assert r2 > 0.99

    def test_noiseless_zero_weights_reproduction(self):
        cfg = SimulationConfig(n=8, t=30, q=0, noise_sd=1e-8, seed=7)
        data = simulate(cfg)
        out = stage1_predict(data.panel, tol=1e-6, max_iter=2000)
        assert np.abs(out.y_hat - data.panel.y).max() < 1e-3

    def test_worker_count_invariance(self, desk_data):
        one = stage1_predict(desk_data.panel, tol=1e-4, n_workers=1)
        eight = stage1_predict(desk_data.panel, tol=1e-4, n_workers=8)
        assert np.array_equal(one.y_hat, eight.y_hat)


class TestStage2:
    def test_design_orders_other_units_then_own_x(self, desk_data):
        panel = desk_data.panel
        y_hat = np.arange(panel.n_units * panel.n_periods, dtype=float).reshape(
            panel.n_units, panel.n_periods
        )
        design = stage2_design(panel, y_hat, unit_index=3, intercept=True)
        n, k = panel.n_units, panel.n_exog
        assert design.shape == (panel.n_periods, n - 1 + k + 1)
        assert np.array_equal(design[:, 0], y_hat[0])
        assert np.array_equal(design[:, 2], y_hat[2])
        assert np.array_equal(design[:, 3], y_hat[4])  # unit 3 skipped
        assert np.array_equal(design[:, n - 1], panel.x[3, :, 0])

    def test_diagonal_exactly_zero(self, desk_result):
        assert np.all(np.diag(desk_result.w_hat.w) == 0.0)

    def test_shape_mismatch_rejected(self, desk_data):
        out = stage1_predict(desk_data.panel, tol=1e-3, max_iter=50)
        bad = out.y_hat[:, :-1]
        from panelsar.twostage import Stage1Output

        with pytest.raises(ValidationError):
            stage2_estimate(desk_data.panel, Stage1Output(bad, out.per_unit_diagnostics))

    def test_null_spatial_recovery(self):
        # no spatial dependence, strong exogenous signal
        cfg = SimulationConfig(n=10, t=40, q=0, noise_sd=0.3, seed=17)
        data = simulate(cfg)
        result = estimate(data.panel, None, FAST)
        off = ~np.eye(10, dtype=bool)
        assert np.abs(result.w_hat.w[off]).max() < 0.1
        assert corr2(result.coefficients.theta, data.theta_true.theta) > 0.95


class TestEstimate:
    def test_composition_contract(self, desk_data, desk_result):
        s1 = stage1_predict(desk_data.panel, tol=FAST.tol, max_iter=FAST.max_iter)
        s2 = stage2_estimate(desk_data.panel, s1, tol=FAST.tol, max_iter=FAST.max_iter)
        assert np.array_equal(s2.w_hat.w, desk_result.w_hat.w)
        assert np.array_equal(s2.coefficients.theta, desk_result.coefficients.theta)

    def test_row_spatial_sums_are_signed_row_sums(self, desk_result):
        assert np.allclose(
            desk_result.row_spatial_sums, desk_result.w_hat.w.sum(axis=1)
        )

    def test_sigma2_positive(self, desk_result):
        assert np.all(desk_result.coefficients.sigma2 > 0)

    def test_timings_recorded(self, desk_result):
        d = desk_result.diagnostics
        assert d.stage1_seconds > 0 and d.stage2_seconds > 0

    def test_deterministic_across_runs_and_workers(self, desk_data):
        a = estimate(desk_data.panel, None, FAST)
        b = estimate(
            desk_data.panel,
            None,
            EstimateOptions(tol=FAST.tol, max_iter=FAST.max_iter, n_workers=4),
        )
        assert np.array_equal(a.w_hat.w, b.w_hat.w)
        assert np.array_equal(a.coefficients.theta, b.coefficients.theta)

    def test_config_echo_carries_options(self, desk_result):
        echo = desk_result.config_echo
        assert echo["options"]["tol"] == FAST.tol
        assert echo["prior"] == {"a": "1/M", "nu": 0.01, "s": 0.01}

    def test_standardization_scales_recorded(self, desk_data):
        opts = EstimateOptions(tol=1e-3, max_iter=100, standardize=True)
        result = estimate(desk_data.panel, None, opts)
        factors = result.config_echo["standardization"]
        assert len(factors["y_scale"]) == desk_data.panel.n_units
        assert all(s > 0 for s in factors["y_scale"])

    def test_permutation_equivariance(self, desk_data):
        panel = desk_data.panel
        rng = np.random.default_rng(99)
        perm = rng.permutation(panel.n_units)
        shuffled = PanelDataset(
            y=panel.y[perm],
            x=panel.x[perm],
            unit_ids=[panel.unit_ids[i] for i in perm],
        )
        base = estimate(panel, None, FAST)
        other = estimate(shuffled, None, FAST)
        # map the shuffled estimate back into the original ordering
        inv = np.argsort(perm)
        w_back = other.w_hat.w[np.ix_(inv, inv)]
        theta_back = other.coefficients.theta[inv]
        assert np.allclose(w_back, base.w_hat.w, atol=1e-8)
        assert np.allclose(theta_back, base.coefficients.theta, atol=1e-8)

    def test_stage2_equation_independence(self, desk_data):
        # refitting a single unit's stage-2 equation reproduces its row
        panel = desk_data.panel
        s1 = stage1_predict(panel, tol=FAST.tol, max_iter=FAST.max_iter)
        full = stage2_estimate(panel, s1, tol=FAST.tol, max_iter=FAST.max_iter)
        from panelsar.dlreg import RegressionProblem, vb_fit

        i = 4
        design = stage2_design(panel, s1.y_hat, i)
        state = vb_fit(
            RegressionProblem(panel.y[i], design),
            default_prior(design.shape[1]),
            tol=FAST.tol,
            max_iter=FAST.max_iter,
        )
        others = [j for j in range(panel.n_units) if j != i]
        assert np.allclose(full.w_hat.w[i, others], state.beta_mean[: panel.n_units - 1], atol=1e-9)
