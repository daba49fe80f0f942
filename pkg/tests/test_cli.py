import hashlib
import json
import os

import numpy as np
import pytest

from tvfspec import cli
from tvfspec.estimator import fourier_frequencies
from tvfspec.ingest import (
    model_document,
    read_kernel_table,
    read_series,
    read_spectral_grid,
)
from tvfspec.model import InnovationSpec, OperatorCurve, TvFarmaModel
from tvfspec.spectrum import TWO_PI


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return str(path)


def unstable_document():
    curve = OperatorCurve(np.array([0.0, 1.0]), np.array([[[1.2]], [[1.2]]]))
    model = TvFarmaModel(ar=(curve,), innovations=InnovationSpec(np.array([1.0])))
    return model_document(model)


class TestSimulate:
    def test_writes_series_and_manifest(self, tmp_path):
        config = write_config(
            tmp_path, "sim.json",
            {"model": {"preset": "far1", "size": 5}, "render": 16},
        )
        out = tmp_path / "run"
        code = cli.main(["simulate", "--config", config, "--T", "512",
                         "--seed", "3", "--out", str(out)])
        assert code == 0
        raw = read_series(out / "series.csv")
        assert raw.length == 512
        assert raw.grid.size == 16
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 3
        assert manifest["T"] == 512
        assert set(manifest["outputs"]) == {
            "series.csv", "model.json", "stability.json", "config.json",
        }
        # config is copied verbatim
        assert (out / "config.json").read_bytes() == open(config, "rb").read()

    def test_rerun_is_byte_identical(self, tmp_path):
        config = write_config(
            tmp_path, "sim.json",
            {"model": {"preset": "far1", "size": 4}, "render": 8, "T": 128},
        )
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert cli.main(["simulate", "--config", config, "--out", str(out)]) == 0
            outs.append(out)
        files = sorted(os.listdir(outs[0]))
        assert files == sorted(os.listdir(outs[1]))
        for name in files:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_unstable_model_exits_3(self, tmp_path, capsys):
        config = write_config(
            tmp_path, "sim.json", {"model": unstable_document(), "T": 64},
        )
        out = tmp_path / "run"
        code = cli.main(["simulate", "--config", config, "--out", str(out)])
        assert code == 3
        assert "radius" in capsys.readouterr().err
        stability = json.loads((out / "stability.json").read_text())
        assert stability["passed"] is False
        assert stability["worst_radius"] == pytest.approx(1.2, abs=1e-9)

    def test_missing_config_exits_2(self, tmp_path):
        assert cli.main(["simulate", "--T", "64", "--out", str(tmp_path / "x")]) == 2

    def test_broken_config_exits_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{oops")
        assert cli.main(["simulate", "--config", str(path), "--T", "64"]) == 2

    def test_unknown_preset_exits_2(self, tmp_path):
        config = write_config(tmp_path, "sim.json", {"model": {"preset": "nope"}, "T": 64})
        assert cli.main(["simulate", "--config", config, "--out", str(tmp_path / "x")]) == 2


class TestTruth:
    def test_white_noise_grid_is_flat(self, tmp_path):
        sigma = [1.0, 0.5, 0.25]
        config = write_config(
            tmp_path, "truth.json",
            {"model": {"preset": "white", "size": 3, "sigma": sigma},
             "u": [0.3, 0.6], "omega": {"count": 8}, "render": 8},
        )
        out = tmp_path / "run"
        assert cli.main(["truth", "--config", config, "--out", str(out)]) == 0
        grid = read_spectral_grid(out / "truth_coeff.csv")
        assert grid.provenance == "truth"
        assert np.array_equal(grid.u, [0.3, 0.6])
        assert np.allclose(grid.omega, fourier_frequencies(8), atol=1e-15)
        expected = np.diag(np.asarray(sigma) ** 2) / TWO_PI
        assert np.abs(grid.values - expected).max() < 1e-14
        table = read_kernel_table(out / "truth_kernel.csv")
        assert table.shape == (2 * 8 * 8 * 8, 7)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["u_count"] == 2 and manifest["omega_count"] == 8


class TestEstimate:
    def simulate_white(self, tmp_path, T=1024):
        config = write_config(
            tmp_path, "sim.json",
            {"model": {"preset": "white", "size": 2}, "render": 16},
        )
        out = tmp_path / "sim"
        assert cli.main(["simulate", "--config", config, "--T", str(T),
                         "--out", str(out)]) == 0
        return out / "series.csv"

    def test_white_noise_trace_level(self, tmp_path):
        series = self.simulate_white(tmp_path)
        config = write_config(
            tmp_path, "est.json",
            {"basis_size": 2, "u": [0.5], "kernel": True, "render": 8},
        )
        out = tmp_path / "est"
        code = cli.main(["estimate", str(series), "--config", config, "--out", str(out)])
        assert code == 0
        report = json.loads((out / "estimate_report.json").read_text())
        assert report["hermitian"] is True
        assert report["psd"] is True
        assert report["projection_residual_max"] < 1e-8
        target = 2.0 / TWO_PI
        assert abs(report["trace_mean_over_omega"][0] - target) < 0.2 * target
        grid = read_spectral_grid(out / "estimate_coeff.csv")
        assert grid.provenance == "smoothed"
        assert grid.values.shape == (1, 64, 2, 2)
        assert (out / "estimate_kernel.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert str(series) in manifest["inputs"]

    def test_out_of_band_exits_4(self, tmp_path, capsys):
        series = self.simulate_white(tmp_path)
        config = write_config(tmp_path, "est.json", {"basis_size": 2, "u": [0.01]})
        code = cli.main(["estimate", str(series), "--config", config,
                         "--out", str(tmp_path / "est")])
        assert code == 4
        assert "valid band" in capsys.readouterr().err

    def test_missing_series_exits_5(self, tmp_path):
        code = cli.main(["estimate", str(tmp_path / "none.csv"),
                         "--out", str(tmp_path / "est")])
        assert code == 5


class TestEvaluate:
    def test_imse_direction(self, tmp_path):
        config = write_config(
            tmp_path, "eval.json",
            {"model": {"preset": "far1", "size": 3},
             "imse": {"T_list": [512, 4096], "replications": 12, "u": {"count": 3}},
             "omega": {"count": 32}},
        )
        out = tmp_path / "run"
        assert cli.main(["evaluate", "--config", config, "--out", str(out)]) == 0
        report = json.loads((out / "imse.json").read_text())
        assert report["passed"] is True
        assert report["quantities"]["wins"] >= report["quantities"]["wins_needed"]
        config_hash = hashlib.sha256(open(config, "rb").read()).hexdigest()
        assert f"config_sha256={config_hash}" in report["notes"]
        small = report["quantities"]["imse_mean_T512"]
        large = report["quantities"]["imse_mean_T4096"]
        assert large < small

    def test_unknown_check_exits_2(self, tmp_path):
        config = write_config(
            tmp_path, "eval.json",
            {"model": {"preset": "far1", "size": 3}, "checks": ["volume"]},
        )
        assert cli.main(["evaluate", "--config", config, "--out", str(tmp_path / "x")]) == 2


class TestReproduce:
    def test_far1_inventory(self, tmp_path):
        config = write_config(tmp_path, "rep.json", {"render": 8})
        out = tmp_path / "run"
        code = cli.main(["reproduce", "far1", "--config", config,
                         "--T", "512", "--out", str(out)])
        assert code == 0
        slices = json.loads((out / "slices.json").read_text())
        assert [(s["u"], round(s["omega"], 6)) for s in slices] == [
            (0.25, 0.0), (0.5, round(0.3 * np.pi, 6)), (0.25, round(0.9 * np.pi, 6)),
        ]
        names = set(os.listdir(out))
        for i in range(3):
            assert f"slice{i}_truth.csv" in names
            for r in range(20):
                assert f"slice{i}_rep{r}.csv" in names
        dispersion = json.loads((out / "dispersion.json").read_text())
        assert dispersion["T"] == 512 and dispersion["replications"] == 20
        iqr = dispersion["median_pointwise_iqr"]
        assert set(iqr) == {"slice0", "slice1", "slice2"}
        assert all(v > 0.0 for v in iqr.values())

    def test_far2_slices_follow_peak_curve(self, tmp_path):
        config = write_config(tmp_path, "rep.json", {"render": 8})
        out = tmp_path / "run"
        code = cli.main(["reproduce", "far2", "--config", config,
                         "--T", "512", "--out", str(out)])
        assert code == 0
        slices = json.loads((out / "slices.json").read_text())
        assert len(slices) == 7
        for entry in slices:
            assert entry["omega"] == pytest.approx(1.5 - np.cos(np.pi * entry["u"]))

    def test_unsupported_length_exits_2(self, tmp_path):
        assert cli.main(["reproduce", "far1", "--T", "100",
                         "--out", str(tmp_path / "x")]) == 2


class TestCheck:
    def test_far1_passes(self, tmp_path, capsys):
        config = write_config(
            tmp_path, "check.json",
            {"model": {"preset": "far1"},
             "stationarity": {"u": 0.25, "T_list": [256, 1024, 4096],
                              "replications": 32}},
        )
        out = tmp_path / "run"
        code = cli.main(["check", "--config", config, "--out", str(out)])
        assert code == 0
        assert "local stationarity: pass" in capsys.readouterr().out
        stationarity = json.loads((out / "stationarity.json").read_text())
        assert stationarity["passes"]["bounded_second_moment"] is True
        assert abs(stationarity["quantities"]["slope"]) <= 0.15

    def test_unstable_model_exits_3(self, tmp_path, capsys):
        config = write_config(tmp_path, "check.json", {"model": unstable_document()})
        code = cli.main(["check", "--config", config, "--out", str(tmp_path / "x")])
        assert code == 3
        assert "stability: FAIL" in capsys.readouterr().err
