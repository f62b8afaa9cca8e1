import csv

import numpy as np
import pytest

from gapcs.errors import DomainError
from gapcs.harness.cli import main, parse_seeds, read_config
from gapcs.harness.experiments import (
    ExperimentSpec,
    make_instance,
    run_convergence_experiment,
    run_experiment,
    run_k_sweep,
    run_mstar_sweep,
    run_noise_estimation,
    theory_grid_rows,
)

SMALL = dict(m=40, n=96, k=4, seeds=[0, 1], max_iters=150)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSpec:
    def test_defaults(self):
        spec = ExperimentSpec()
        assert (spec.m, spec.n, spec.k, spec.m_star) == (300, 512, 20, 20)
        assert spec.alphas == [0.9, 1.0, 1.1]
        assert spec.seeds == list(range(20))
        assert spec.noise_conditions == [("noiseless", None), ("noisy", 60.0)]

    @pytest.mark.parametrize("kw", [{"experiment": "nope"}, {"m": 600}, {"k": 0}, {"seeds": []}])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            ExperimentSpec(**kw)


def test_make_instance_is_seeded():
    a = make_instance(20, 50, 3, "gaussian", 4, snr_db=30.0)
    b = make_instance(20, 50, 3, "gaussian", 4, snr_db=30.0)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.sparsity_k == 3
    assert a.noise_norm_sq == pytest.approx(1e-3 * np.sum(a.operator.forward(a.x_true) ** 2))


class TestRunners:
    def test_convergence(self, tmp_path):
        res = run_convergence_experiment(ExperimentSpec(output_dir=tmp_path, alphas=[1.0], **SMALL))
        names = {p.name for p in res.files}
        assert "convergence_noiseless_gap_alpha1.csv" in names
        assert "convergence_noisy_ait_alpha1.csv" in names
        summary = read_rows(tmp_path / "convergence_summary.csv")
        assert len(summary) == 2 * 2 * 2
        for row in summary:
            if row["algorithm"] == "gap":
                assert float(row["identity_residual"]) < 1e-9
        trace = read_rows(tmp_path / "convergence_noiseless_gap_alpha1.csv")
        assert all(int(r["support_size"]) <= 4 for r in trace)

    def test_convergence_binary(self, tmp_path):
        spec = ExperimentSpec(output_dir=tmp_path, alphas=[1.0], matrix_kind="binary", snr_db=None, **SMALL)
        res = run_convergence_experiment(spec)
        assert {r["noise"] for r in res.summary} == {"noiseless"}
        assert all(r["matrix"] == "binary" for r in res.summary)

    def test_mstar_sweep_budget_below_sparsity(self, tmp_path):
        spec = ExperimentSpec(output_dir=tmp_path, m_star_values=[2, 8], snr_db=None, **SMALL)
        res = run_mstar_sweep(spec)
        by = {(r["m_star"], r["algorithm"]): r for r in res.summary}
        assert not by[(2, "gap")]["success"] and not by[(2, "ait")]["success"]
        assert by[(2, "gap")]["budget_ok"] is False
        assert by[(8, "gap")]["success"]

    def test_k_sweep_sets_budget_to_k(self, tmp_path):
        res = run_k_sweep(ExperimentSpec(output_dir=tmp_path, k_values=[2, 3], snr_db=None, **SMALL))
        assert all(r["k"] == r["m_star"] for r in res.summary)
        assert read_rows(tmp_path / "k_sweep_summary.csv")[0]["success"] in ("true", "false")

    def test_noise_zero_std(self, tmp_path):
        spec = ExperimentSpec(output_dir=tmp_path, experiment="noise_estimation", noise_stds=[0.0],
                              **{**SMALL, "max_iters": 400})
        res = run_noise_estimation(spec)
        assert res.summary[0]["median_estimated_std"] < 1e-6
        assert res.failures == 0

    def test_theory_grid(self, tmp_path):
        spec = ExperimentSpec(output_dir=tmp_path, experiment="theory_grid", grid_points=50, **SMALL)
        res = run_experiment(spec)
        assert res.failures == 0
        assert (tmp_path / "theory_report.txt").read_text().startswith("# M=40")
        assert len(read_rows(tmp_path / "theory_grid.csv")) == 50

    def test_grid_rows_valid(self):
        for row in theory_grid_rows(200, seed=3):
            assert row["e_max"] > 1 - row["delta"]
            assert 0 < row["delta"] < 1 and row["m_star"] >= 1

    def test_parallel_matches_serial(self, tmp_path):
        base = dict(SMALL, alphas=[1.0], snr_db=None)
        run_convergence_experiment(ExperimentSpec(output_dir=tmp_path / "a", **base))
        run_convergence_experiment(ExperimentSpec(output_dir=tmp_path / "b", workers=2, **base))
        for name in ("convergence_noiseless_gap_alpha1.csv", "convergence_summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestCliParsing:
    def test_seeds(self):
        assert parse_seeds("0-3") == [0, 1, 2, 3]
        assert parse_seeds("1,5,9") == [1, 5, 9]
        assert parse_seeds("0-1,7") == [0, 1, 7]
        with pytest.raises(ValueError):
            parse_seeds("")

    def test_config(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("# comment\nm = 40\nseeds=0-2  # trailing\n\nalpha = 0.9,1.1\n")
        assert read_config(path) == {"m": "40", "seeds": "0-2", "alpha": "0.9,1.1"}


class TestCliRuns:
    def test_convergence_writes_csv_and_svg(self, tmp_path, capsys):
        code = main(["convergence", "--m", "40", "--n", "96", "--k", "4", "--seeds", "0",
                     "--alpha", "1.0", "--max-iters", "150", "--out", str(tmp_path)])
        assert code in (0, 1)
        assert (tmp_path / "convergence_summary.csv").exists()
        assert (tmp_path / "convergence.svg").exists()
        assert "convergence.svg" in capsys.readouterr().out

    def test_no_plot(self, tmp_path):
        main(["k-sweep", "--m", "40", "--n", "96", "--k", "3", "--seeds", "0", "--snr-db", "none",
              "--out", str(tmp_path), "--no-plot"])
        assert (tmp_path / "k_sweep_summary.csv").exists()
        assert not list(tmp_path.glob("*.svg"))

    def test_failures_exit_one(self, tmp_path):
        # support budget below sparsity cannot succeed
        code = main(["mstar-sweep", "--m", "40", "--n", "96", "--k", "6", "--mstar", "2", "--seeds", "0",
                     "--snr-db", "none", "--out", str(tmp_path), "--no-plot"])
        assert code == 1
        assert (tmp_path / "m_star_sweep.csv").exists()

    def test_config_with_flag_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("m = 30\nn = 64\npoints = 20\nseeds = 0\nout = %s\n" % (tmp_path / "from_cfg"))
        code = main(["theory-grid", "--config", str(cfg), "--points", "10", "--k", "3", "--no-plot"])
        assert code == 0
        rows = read_rows(tmp_path / "from_cfg" / "theory_grid.csv")
        assert len(rows) == 10
        assert "M=30 N=64 K=3" in (tmp_path / "from_cfg" / "theory_report.txt").read_text()

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("m = 30\nbogus = 1\n")
        assert main(["convergence", "--config", str(cfg)]) == 2
        assert "bogus" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["convergence", "--m", "x"],
                                      ["convergence", "--matrix", "uniform"]])
    def test_usage_errors(self, argv):
        assert main(argv) == 2

    def test_domain_error_exit_two(self, tmp_path, capsys):
        assert main(["convergence", "--m", "600", "--out", str(tmp_path)]) == 2
        assert "need 1 <= m < n" in capsys.readouterr().err

    def test_image_small(self, tmp_path):
        code = main(["image", "--seeds", "0", "--max-iters", "15", "--snr-db", "none", "--out", str(tmp_path)])
        assert code == 0
        rows = read_rows(tmp_path / "image_psnr.csv")
        assert {r["algorithm"] for r in rows} == {"gap", "ait"}
        assert max(int(r["iter"]) for r in rows) == 15
        assert (tmp_path / "image_noiseless_gap.pgm").exists()
        assert (tmp_path / "image.svg").exists()
