import json

import numpy as np
import pytest

from panelsar.cli import main
from panelsar.fileio import read_panel_csv, read_theta_csv, read_weights_csv


def run(*argv):
    return main(list(argv))


@pytest.fixture()
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    code = run("simulate", "--seed", "1", "--output-dir", str(out))
    assert code == 0
    return out


class TestSimulate:
    def test_writes_four_files_with_expected_rows(self, sim_dir):
        names = {p.name for p in sim_dir.iterdir()}
        assert names == {"panel.csv", "w_true.csv", "theta_true.csv", "meta.json"}
        lines = (sim_dir / "panel.csv").read_text().splitlines()
        assert len(lines) == 1 + 30 * 20  # header + N*T data rows

    def test_byte_identical_reruns(self, sim_dir):
        before = {
            name: (sim_dir / name).read_bytes()
            for name in ("panel.csv", "w_true.csv", "theta_true.csv", "meta.json")
        }
        assert run("simulate", "--seed", "1", "--output-dir", str(sim_dir)) == 0
        for name, payload in before.items():
            assert (sim_dir / name).read_bytes() == payload

    def test_q_inconsistent_with_n_rejected(self, tmp_path, capsys):
        code = run("simulate", "--n", "30", "--q", "15", "--output-dir", str(tmp_path))
        assert code == 1
        assert "2q < N" in capsys.readouterr().err

    def test_meta_records_rho_and_config(self, sim_dir):
        meta = json.loads((sim_dir / "meta.json").read_text())
        assert len(meta["rho_true"]) == 30
        assert meta["config"]["seed"] == 1
        assert meta["sigma2_true"] == 1.0


class TestEstimate:
    def test_round_trip_from_simulate(self, sim_dir, tmp_path):
        est = tmp_path / "est"
        code = run(
            "estimate",
            "--panel", str(sim_dir / "panel.csv"),
            "--output-dir", str(est),
            "--tol", "1e-2",
            "--max-iter", "100",
        )
        assert code == 0
        w = read_weights_csv(est / "w_hat.csv")
        assert w.n_units == 30
        assert np.all(np.diag(w.w) == 0.0)
        diags = json.loads((est / "diagnostics.json").read_text())
        assert len(diags["diagnostics"]["stage1"]) == 30
        assert diags["diagnostics"]["stage1_seconds"] > 0
        theta, ids = read_theta_csv(est / "theta_hat.csv")
        assert theta.shape == (30, 2) and ids == w.unit_ids

    def test_unbalanced_panel_names_unit(self, sim_dir, tmp_path, capsys):
        broken = tmp_path / "broken.csv"
        lines = (sim_dir / "panel.csv").read_text().splitlines()
        broken.write_text("\n".join(lines[:-1]) + "\n")
        code = run("estimate", "--panel", str(broken), "--output-dir", str(tmp_path / "x"))
        assert code == 1
        assert "u029" in capsys.readouterr().err

    def test_missing_panel_flag(self, capsys):
        assert run("estimate") == 1


class TestEffects:
    def test_zero_weights_equals_diag_theta(self, tmp_path):
        from panelsar.core import WeightsMatrix
        from panelsar.fileio import write_theta_csv, write_weights_csv

        ids = ["a", "b", "c"]
        write_weights_csv(WeightsMatrix(np.zeros((3, 3)), ids), tmp_path / "w.csv")
        write_theta_csv(np.array([[1.5], [-2.0], [0.5]]), ids, tmp_path / "th.csv")
        out = tmp_path / "eff"
        code = run(
            "effects", "--weights", str(tmp_path / "w.csv"),
            "--theta", str(tmp_path / "th.csv"), "--output-dir", str(out),
        )
        assert code == 0
        rows = (out / "effects_1.csv").read_text().splitlines()[1:]
        mat = np.array([[float(v) for v in r.split(",")[1:]] for r in rows])
        assert np.allclose(mat, np.diag([1.5, -2.0, 0.5]))
        summary = json.loads((out / "effects_summary.json").read_text())
        assert summary["x1"]["mean_abs_direct"] == pytest.approx(4.0 / 3.0)
        assert summary["x1"]["mean_abs_indirect"] == 0.0

    def test_two_by_two_closed_form(self, tmp_path):
        from panelsar.core import WeightsMatrix
        from panelsar.fileio import write_theta_csv, write_weights_csv

        ids = ["a", "b"]
        write_weights_csv(WeightsMatrix(np.array([[0, 0.5], [0.5, 0]]), ids), tmp_path / "w.csv")
        write_theta_csv(np.array([[1.0], [1.0]]), ids, tmp_path / "th.csv")
        out = tmp_path / "eff"
        assert run(
            "effects", "--weights", str(tmp_path / "w.csv"),
            "--theta", str(tmp_path / "th.csv"), "--output-dir", str(out),
        ) == 0
        rows = (out / "effects_1.csv").read_text().splitlines()[1:]
        mat = np.array([[float(v) for v in r.split(",")[1:]] for r in rows])
        assert np.allclose(mat, [[4 / 3, 2 / 3], [2 / 3, 4 / 3]], atol=1e-12)

    def test_nonstationary_weights_exit_2(self, tmp_path, capsys):
        from panelsar.core import WeightsMatrix
        from panelsar.fileio import write_theta_csv, write_weights_csv

        ids = ["a", "b"]
        write_weights_csv(WeightsMatrix(np.array([[0, 1.2], [0.3, 0]]), ids), tmp_path / "w.csv")
        write_theta_csv(np.ones((2, 1)), ids, tmp_path / "th.csv")
        code = run(
            "effects", "--weights", str(tmp_path / "w.csv"),
            "--theta", str(tmp_path / "th.csv"), "--output-dir", str(tmp_path / "e"),
        )
        assert code == 2
        assert "infinity norm" in capsys.readouterr().err


class TestMcReplicate:
    def test_tables_and_heatmaps(self, tmp_path):
        out = tmp_path / "mc"
        code = run(
            "mc-replicate", "--n", "12", "--t", "20", "--q", "2",
            "--seed", "3", "--replications", "4",
            "--tol", "1e-2", "--max-iter", "100",
            "--output-dir", str(out),
        )
        assert code == 0
        tables = json.loads((out / "tables.json").read_text())
        assert "weights_corr2" in tables["mean_estimate"]
        assert "weights_ssim" in tables["mean_estimate"]
        effects = tables["mean_estimate"]["effects"]
        assert "direct_corr2" in effects and "indirect_corr2" in effects
        assert "direct_ssim_masked" in effects and "indirect_ssim" in effects
        assert tables["n_replications"] == 4
        for name in (
            "w_true.pgm", "w_hat_mean.pgm",
            "effects_direct_true.pgm", "effects_direct_est.pgm",
            "effects_indirect_true.pgm", "effects_indirect_est.pgm",
        ):
            assert (out / name).exists(), name
        assert (out / "summary.txt").read_text().startswith("Monte Carlo cell")


class TestConfigFile:
    def test_file_plus_flag_override(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("n=8\nt=15\nq=2\nseed=4\n# comment\n")
        out = tmp_path / "sim"
        code = run("simulate", "--config", str(conf), "--t", "10", "--output-dir", str(out))
        assert code == 0
        panel = read_panel_csv(out / "panel.csv")
        assert panel.n_units == 8 and panel.n_periods == 10  # flag wins for t

    def test_unknown_key_rejected(self, tmp_path, capsys):
        conf = tmp_path / "run.conf"
        conf.write_text("bogus=1\n")
        code = run("simulate", "--config", str(conf), "--output-dir", str(tmp_path / "o"))
        assert code == 1
        assert "unknown key" in capsys.readouterr().err

    def test_missing_panel_file_is_io_error(self, tmp_path):
        code = run("estimate", "--panel", str(tmp_path / "nope.csv"),
                   "--output-dir", str(tmp_path / "o"))
        assert code == 3
