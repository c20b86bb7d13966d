import json
import os

import numpy as np
import pytest

from sprintreg.cli import BenchmarkReport, main, run_benchmark

RUN_TOML = """
[simulate]
total_time = 4.0
nt = 65
nx = 128
epsilon = 0.0
noise_amplitude = 1e-7
noise_std = 0.218
noise_seed = 2
output = "traj.bin"

[library]
fields = ["u"]
derivatives = ["dx"]
max_length = 4
pin_time_derivative = true
output = "lib.json"

[featurize]
trajectory = "traj.bin"
library = "lib.json"
subdomain_count = 48
half_width_x = 2.75
half_width_t = 0.8
seed = 5
output = "features"

[regress]
features = "features.bin"
method = "sprint-"
output = "curve.json"

[select]
curve = "curve.json"
gamma = 1.25
output = "model.json"
"""


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipeline")
    (d / "run.toml").write_text(RUN_TOML)
    return d


def run(d, *argv):
    return main(["--config", str(d / "run.toml"), "--out-dir", str(d), *argv])


class TestPipeline:
    def test_full_chain(self, pipeline_dir):
        d = pipeline_dir
        assert run(d, "simulate") == 0
        assert run(d, "library") == 0
        assert run(d, "featurize") == 0
        assert run(d, "regress") == 0
        assert run(d, "select") == 0
        for name in ("traj.bin", "lib.json", "features.bin", "features.csv",
                     "curve.json", "curve.csv", "model.json"):
            assert (d / name).exists(), name
            assert (d / f"{name}.manifest.json").exists(), name

    def test_manifest_records_input_hashes(self, pipeline_dir):
        d = pipeline_dir
        doc = json.loads((d / "features.bin.manifest.json").read_text())
        assert str(d / "traj.bin") in doc["inputs"]
        assert str(d / "lib.json") in doc["inputs"]
        assert len(doc["output_sha256"]) == 64

    def test_reproducible_curve(self, pipeline_dir, tmp_path):
        d = pipeline_dir
        first = (d / "curve.json").read_bytes()
        assert run(d, "regress") == 0
        assert (d / "curve.json").read_bytes() == first

    def test_select_gamma_override(self, pipeline_dir):
        d = pipeline_dir
        assert run(d, "select", "--gamma", "2.0") == 0
        doc = json.loads((d / "model.json").read_text())
        assert doc["gamma"] == 2.0
        assert doc["terms"]  # labels resolved from the stored curve

    def test_hash_mismatch_rejected(self, pipeline_dir):
        d = pipeline_dir
        payload = (d / "traj.bin").read_bytes()
        try:
            (d / "traj.bin").write_bytes(payload[:-1] + bytes([payload[-1] ^ 1]))
            assert run(d, "featurize") == 2
        finally:
            (d / "traj.bin").write_bytes(payload)
        assert run(d, "featurize") == 0


class TestErrors:
    def test_missing_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.toml"), "simulate"]) == 2

    def test_missing_input_names_path(self, tmp_path, capsys):
        (tmp_path / "run.toml").write_text(
            '[featurize]\ntrajectory = "absent.bin"\nlibrary = "lib.json"\n'
            'output = "features"\n'
        )
        code = main(
            ["--config", str(tmp_path / "run.toml"), "--out-dir", str(tmp_path),
             "featurize"]
        )
        assert code == 2
        assert "absent.bin" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path):
        (tmp_path / "run.toml").write_text(
            '[library]\nmax_length = 3\noutput = "lib.json"\nbogus = 1\n'
        )
        assert main(["--config", str(tmp_path / "run.toml"), "library"]) == 2

    def test_bad_method_rejected(self, tmp_path):
        (tmp_path / "run.toml").write_text(
            '[regress]\nfeatures = "f.bin"\nmethod = "magic"\noutput = "c"\n'
        )
        np.save(tmp_path / "dummy.npy", np.ones(1))
        code = main(
            ["--config", str(tmp_path / "run.toml"), "--out-dir", str(tmp_path),
             "regress"]
        )
        assert code == 2

    def test_failed_command_removes_partial_outputs(self, tmp_path):
        # regress on a curve with an unknown seed term fails after reading
        (tmp_path / "run.toml").write_text(RUN_TOML)
        d = tmp_path
        assert run(d, "simulate") == 0
        assert run(d, "library") == 0
        assert run(d, "featurize") == 0
        bad = RUN_TOML.replace(
            'method = "sprint-"',
            'method = "sprint+"\nseed_terms = ["nonexistent"]',
        )
        (d / "run.toml").write_text(bad)
        assert run(d, "regress") == 2
        assert not (d / "curve.json").exists()


class TestBenchmark:
    def test_report_roundtrip_and_fits(self, tmp_path):
        report = run_benchmark((8, 12, 16), ("sprint+",), trials=2, seed=0)
        p = tmp_path / "report.json"
        report.to_json(p)
        back = BenchmarkReport.from_json(p)
        assert back.sizes == (8, 12, 16)
        assert "sprint+" in back.fits
        alpha, beta = back.fits["sprint+"]
        assert np.isfinite(alpha) and np.isfinite(beta)

    def test_predict_identity_on_fit_line(self, tmp_path):
        report = BenchmarkReport(
            (16, 32), 1, {"sprint+": [1e-3, 8e-3]}, {"sprint+": (3.0, -6.6)}
        )
        assert report.predict("sprint+", 10) == pytest.approx(
            10**-6.6 * 1000.0
        )

    def test_extrapolate_monotone(self, tmp_path, capsys):
        p = tmp_path / "report.json"
        BenchmarkReport(
            (16, 32), 1, {"sprint-": [1.0, 8.0]}, {"sprint-": (3.0, -3.0)}
        ).to_json(p)
        code = main(
            ["extrapolate", "--report", str(p), "--sizes", "64,128,256",
             "--output", str(tmp_path / "table.csv")]
        )
        assert code == 0
        rows = (tmp_path / "table.csv").read_text().strip().splitlines()[1:]
        times = [float(r.split(",")[1]) for r in rows]
        assert times == sorted(times)

    def test_sizes_floor(self):
        with pytest.raises(ValueError):
            run_benchmark((4, 8), ("sprint+",), trials=1)
