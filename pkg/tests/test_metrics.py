import numpy as np
import pytest

from panelsar.core import WeightsMatrix, infinity_norm
from panelsar.exceptions import NumericalError, ValidationError
from panelsar.metrics import (
    SsimParams,
    corr2,
    effects_matrix,
    effects_similarity,
    element_category_stats,
    ssim,
    weights_similarity,
)


def wm(mat):
    mat = np.asarray(mat, dtype=float)
    return WeightsMatrix(mat, [f"u{i}" for i in range(mat.shape[0])])


class TestCorr2:
    def test_identical_matrices(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert corr2(a, a) == pytest.approx(1.0)

    def test_affine_anticorrelation(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert corr2(a, -a + 7.0) == pytest.approx(-1.0)

    def test_hand_example(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[1.0, 2.0], [3.0, 5.0]])
        # brute-force value of the all-entries Pearson formula
        assert corr2(a, b) == pytest.approx(0.9827, abs=1e-4)

    def test_constant_matrix_rejected(self):
        with pytest.raises(ValidationError):
            corr2(np.ones((2, 2)), np.array([[1.0, 2.0], [3.0, 4.0]]))

    def test_symmetry_shift_scale_invariance(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
        assert corr2(a, b) == pytest.approx(corr2(b, a))
        assert corr2(a + 3.0, b) == pytest.approx(corr2(a, b))
        assert corr2(2.5 * a, b) == pytest.approx(corr2(a, b))
        assert corr2(-a, b) == pytest.approx(-corr2(a, b))


class TestSsim:
    def test_identical_is_one(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(12, 12))
        assert ssim(a, a) == pytest.approx(1.0)

    def test_identical_constant_is_one(self):
        a = np.full((9, 9), 3.7)
        assert ssim(a, a) == pytest.approx(1.0)

    def test_constant_offset_closed_form(self):
        # constant windows: variance terms vanish, luminance-only value
        c, d = 1.0, 0.5
        a = np.full((10, 10), c)
        b = np.full((10, 10), c + d)
        params = SsimParams()
        drange = d  # union range
        c1 = (params.k1 * drange) ** 2
        c2 = (params.k2 * drange) ** 2
        expect = ((2 * c * (c + d) + c1) * c2) / ((c**2 + (c + d) ** 2 + c1) * c2)
        assert ssim(a, b, params) == pytest.approx(expect, rel=1e-12)

    def test_window_larger_than_matrix_rejected(self):
        with pytest.raises(ValidationError):
            ssim(np.zeros((4, 4)), np.zeros((4, 4)))

    def test_brute_force_window_oracle(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(10, 10)), rng.normal(size=(10, 10))
        params = SsimParams(window=8)
        drange = max(a.max(), b.max()) - min(a.min(), b.min())
        c1, c2 = (0.01 * drange) ** 2, (0.03 * drange) ** 2
        vals = []
        for i in range(3):
            for j in range(3):
                wa = a[i : i + 8, j : j + 8]
                wb = b[i : i + 8, j : j + 8]
                mu_a, mu_b = wa.mean(), wb.mean()
                va, vb = wa.var(), wb.var()
                cov = ((wa - mu_a) * (wb - mu_b)).mean()
                vals.append(
                    ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                    / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
                )
        assert ssim(a, b, params) == pytest.approx(np.mean(vals), rel=1e-12)


class TestEffectsMatrix:
    def test_zero_weights_gives_diagonal(self):
        theta = np.array([1.5, -2.0, 0.5])
        eff = effects_matrix(wm(np.zeros((3, 3))), theta)
        assert np.allclose(eff.e, np.diag(theta), atol=1e-14)

    def test_two_by_two_closed_form(self):
        eff = effects_matrix(wm([[0, 0.5], [0.5, 0]]), np.array([1.0, 1.0]))
        assert np.allclose(eff.e, [[4 / 3, 2 / 3], [2 / 3, 4 / 3]], atol=1e-12)

    def test_defining_identity(self):
        rng = np.random.default_rng(3)
        n = 12
        mat = rng.normal(size=(n, n))
        np.fill_diagonal(mat, 0.0)
        mat = 0.9 * mat / np.abs(mat).sum(axis=1, keepdims=True)
        theta = rng.normal(size=n)
        w = wm(mat)
        eff = effects_matrix(w, theta)
        resid = (np.eye(n) - mat) @ eff.e - np.diag(theta)
        assert np.abs(resid).max() < 1e-10 * max(np.abs(theta).max(), 1.0)

    def test_stationarity_required(self):
        w = wm([[0, 1.1], [0.2, 0]])
        with pytest.raises(NumericalError):
            effects_matrix(w, np.ones(2))

    def test_direct_dominance(self):
        rng = np.random.default_rng(4)
        for trial in range(5):
            n = 15
            mat = rng.normal(size=(n, n))
            np.fill_diagonal(mat, 0.0)
            mat = 0.95 * mat / np.abs(mat).sum(axis=1, keepdims=True)
            theta = rng.choice([-1.0, 1.0], n)
            eff = effects_matrix(wm(mat), theta)
            off = ~np.eye(n, dtype=bool)
            assert np.abs(np.diag(eff.e)).mean() > np.abs(eff.e[off]).mean()


class TestCategoryStats:
    def test_perfect_estimate_zero_bias(self):
        mat = np.array([[0, 0.2, -0.1], [0.3, 0, 0], [0, -0.4, 0]])
        stats = element_category_stats(mat, mat.copy())
        for cat in stats.values():
            assert cat.mean_bias == 0.0 and cat.rmse == 0.0

    def test_zero_estimate_bias_is_minus_mean(self):
        mat = np.array([[0, 0.2, -0.1], [0.3, 0, 0], [0, -0.4, 0]])
        stats = element_category_stats(mat, np.zeros_like(mat))
        assert stats["positive"].mean_bias == pytest.approx(-0.25)
        assert stats["negative"].mean_bias == pytest.approx(0.25)
        assert stats["zero"].mean_bias == 0.0

    def test_empty_category_absent(self):
        mat = np.array([[0, 0.2], [0.3, 0]])
        stats = element_category_stats(mat, mat)
        assert "negative" not in stats and "positive" in stats


class TestEffectsSimilarity:
    def test_identical_inputs_all_ones(self):
        rng = np.random.default_rng(5)
        n = 10
        mat = rng.normal(size=(n, n))
        np.fill_diagonal(mat, 0.0)
        mat = 0.8 * mat / np.abs(mat).sum(axis=1, keepdims=True)
        theta = rng.uniform(1, 2, (n, 2))
        w = wm(mat)
        rep = effects_similarity(w, theta, w, theta.copy(), r=0)
        assert rep.direct_corr2 == pytest.approx(1.0)
        assert rep.indirect_corr2 == pytest.approx(1.0)
        assert rep.direct_ssim_masked == pytest.approx(1.0)
        assert rep.indirect_ssim == pytest.approx(1.0)

    def test_weights_similarity_report_schema(self):
        rng = np.random.default_rng(6)
        mat = rng.normal(size=(9, 9))
        np.fill_diagonal(mat, 0.0)
        mat = 0.8 * mat / np.abs(mat).sum(axis=1, keepdims=True)
        rep = weights_similarity(mat, 0.5 * mat)
        assert -1.0 <= rep.corr2 <= 1.0 and -1.0 <= rep.ssim <= 1.0
        assert set(rep.element_stats) <= {"positive", "negative", "zero"}
        assert rep.ssim_params["window"] == 8
