"""
Integration tests for the ifkernel command-line workflows
"""

import json
import math
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ifkernel.core.errors import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK
from ifkernel.main import main

OMEGA = 2 * math.pi * 50


@pytest.fixture
def record(tmp_path):
    """A 1024-sample noisy tone written through the generate command"""
    path = tmp_path / "tone.csv"
    code = main(["generate", "--sample-count", "1024", "--omega0", str(OMEGA), "--noise-variance", "0.001",
                 "--seed", "7", "-o", str(path)])
    assert code == EXIT_OK
    return path


@pytest.fixture
def two_tone_record(tmp_path):
    config = tmp_path / "two_tone.json"
    config.write_text(json.dumps({
        "sample_count": 2048,
        "seed": 3,
        "tones": [{"center_frequency": 2 * math.pi * 100}, {"center_frequency": 2 * math.pi * 300, "amplitude": 0.8}],
        "noise": {"kind": "white", "sigma2": 1e-4},
    }))
    path = tmp_path / "two_tone.csv"
    assert main(["generate", "--config", str(config), "-o", str(path)]) == EXIT_OK
    return path


class TestGenerate:
    def test_writes_record_and_truth(self, record):
        frame = pd.read_csv(record)
        assert list(frame.columns) == ["t", "y"]
        assert len(frame) == 1024
        truth = json.loads(record.with_suffix(".truth.json").read_text())
        assert truth["seed"] == 7
        assert np.allclose(truth["frequency"][0], OMEGA)

    def test_output_is_reproducible(self, record, tmp_path):
        again = tmp_path / "again.csv"
        main(["generate", "--sample-count", "1024", "--omega0", str(OMEGA), "--noise-variance", "0.001",
              "--seed", "7", "-o", str(again)])
        assert again.read_bytes() == record.read_bytes()

    def test_missing_seed(self, tmp_path):
        code = main(["generate", "--sample-count", "64", "--omega0", "10", "-o", str(tmp_path / "x.csv")])
        assert code == EXIT_CONFIG


class TestSmooth:
    def test_fixed_halfwidth(self, record, tmp_path):
        out = tmp_path / "smooth.csv"
        assert main(["smooth", "-i", str(record), "--halfwidth", "0.05", "-o", str(out)]) == EXIT_OK
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["t", "estimate", "predicted_bias2", "predicted_variance"]
        assert (frame["predicted_variance"] > 0).all()

    def test_boundary_rows_use_boundary_kernels(self, record, tmp_path):
        out = tmp_path / "smooth.csv"
        assert main(["smooth", "-i", str(record), "--halfwidth", "0.05", "--noise-variance", "0.001",
                     "-o", str(out)]) == EXIT_OK
        variance = pd.read_csv(out)["predicted_variance"].to_numpy()
        # floor(0.05 * 1024) = 51 samples reach; interior rows share one kernel
        interior = variance[51:-51]
        np.testing.assert_allclose(interior, interior[0], rtol=1e-9)
        assert variance[0] > 1.5 * interior[0]
        assert variance[-1] > 1.5 * interior[0]

    def test_auto_derivative_json(self, record, tmp_path):
        out = tmp_path / "smooth.json"
        code = main(["smooth", "-i", str(record), "--q", "1", "--p", "3", "--auto", "--format", "json",
                     "-o", str(out)])
        assert code == EXIT_OK
        rows = json.loads(out.read_text())["rows"]
        assert len(rows["estimate"]) == 1024

    def test_needs_halfwidth_or_auto(self, record, tmp_path):
        assert main(["smooth", "-i", str(record), "-o", str(tmp_path / "s.csv")]) == EXIT_CONFIG

    def test_missing_input(self, tmp_path):
        code = main(["smooth", "-i", str(tmp_path / "nope.csv"), "--halfwidth", "0.1", "-o", str(tmp_path / "s.csv")])
        assert code == EXIT_CONFIG


class TestEstimateIF:
    def test_fixed_halfwidth(self, record, tmp_path):
        out = tmp_path / "if.csv"
        code = main(["estimate-if", "-i", str(record), "--omega0", str(OMEGA), "--halfwidth", "0.05",
                     "-o", str(out)])
        assert code == EXIT_OK
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["t", "if_estimate", "amplitude", "halfwidth", "predicted_loss", "edge_flag",
                                       "low_coherence_flag"]
        interior = frame[frame["edge_flag"] == 0]
        assert np.abs(interior["if_estimate"] - OMEGA).max() < 5.0

    def test_frequency_in_hz(self, record, tmp_path):
        out = tmp_path / "if.csv"
        # 50 cycles over 1024 samples at 1024 Hz is 50 Hz
        code = main(["estimate-if", "-i", str(record), "--frequency-hz", "50", "--sample-rate-hz", "1024",
                     "--halfwidth", "0.05", "-o", str(out)])
        assert code == EXIT_OK

    def test_hz_without_sample_rate(self, record, tmp_path):
        code = main(["estimate-if", "-i", str(record), "--frequency-hz", "50", "--halfwidth", "0.05",
                     "-o", str(tmp_path / "if.csv")])
        assert code == EXIT_CONFIG

    def test_repeat_runs_are_identical(self, record, tmp_path):
        outputs = []
        for name in ("a.csv", "b.csv"):
            main(["estimate-if", "-i", str(record), "--omega0", str(OMEGA), "--halfwidth", "0.05",
                  "-o", str(tmp_path / name)])
            outputs.append((tmp_path / name).read_bytes())
        assert outputs[0] == outputs[1]


class TestDesignKernel:
    def test_optimal_json(self, tmp_path):
        out = tmp_path / "kernel.json"
        assert main(["design-kernel", "--method", "optimal", "--grid-count", "41", "-o", str(out)]) == EXIT_OK
        report = json.loads(out.read_text())
        assert report["q"] == 0 and report["p"] == 2
        assert report["moment_residual"] < 1e-10
        assert len(report["weights"]) == 41
        assert sum(report["weights"]) == pytest.approx(1.0)

    def test_json_carries_kernel_fields(self, tmp_path):
        out = tmp_path / "kernel.json"
        assert main(["design-kernel", "--method", "legendre", "--q", "1", "--p", "3", "--grid-count", "31",
                     "--halfwidth", "0.1", "-o", str(out)]) == EXIT_OK
        report = json.loads(out.read_text())
        assert {"q", "p", "h", "weights", "offsets", "C_qp", "m2"} <= set(report)
        assert report["h"] == pytest.approx(0.1)
        assert len(report["offsets"]) == len(report["weights"]) == 31
        assert report["m2"] > 0 and report["C_qp"] != 0

    def test_minimal_loss_shape_label(self, tmp_path):
        out = tmp_path / "kernel.json"
        code = main(["design-kernel", "--method", "minimal_loss", "--curvature", "10", "--noise-variance", "0.01",
                     "--grid-count", "41", "--halfwidth", "0.1", "-o", str(out)])
        assert code == EXIT_OK
        assert json.loads(out.read_text())["shape"] == "minimal_loss"

    def test_taper_csv(self, tmp_path):
        out = tmp_path / "kernel.csv"
        code = main(["design-kernel", "--method", "taper", "--q", "1", "--p", "3", "--grid-count", "21",
                     "--format", "csv", "-o", str(out)])
        assert code == EXIT_OK
        assert list(pd.read_csv(out).columns) == ["offset", "lag", "weight"]

    def test_infeasible_design(self, tmp_path):
        code = main(["design-kernel", "--method", "minimal_variance", "--p", "4", "--grid-count", "2",
                     "-o", str(tmp_path / "k.json")])
        assert code == EXIT_NUMERICAL

    def test_invalid_order(self, tmp_path):
        code = main(["design-kernel", "--q", "2", "--p", "2", "-o", str(tmp_path / "k.json")])
        assert code == EXIT_CONFIG


class TestMultitone:
    def test_two_lines(self, two_tone_record, tmp_path):
        out = tmp_path / "lines"
        freqs = f"{2 * math.pi * 100},{2 * math.pi * 300}"
        code = main(["multitone", "-i", str(two_tone_record), "--freqs", freqs, "--guard", str(2 * math.pi * 20),
                     "--halfwidth", "0.05", "-o", str(out)])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["iterations"] >= 1
        assert len(summary["center_frequencies"]) == 2
        for line, omega in enumerate((2 * math.pi * 100, 2 * math.pi * 300)):
            frame = pd.read_csv(out / f"line_{line}.csv")
            interior = frame[frame["edge_flag"] == 0]
            assert np.abs(interior["if_estimate"] - omega).median() < 1.0

    def test_summary_is_byte_identical_across_runs(self, two_tone_record, tmp_path):
        freqs = f"{2 * math.pi * 100},{2 * math.pi * 300}"
        summaries = []
        for name in ("first", "second"):
            out = tmp_path / name
            main(["multitone", "-i", str(two_tone_record), "--freqs", freqs, "--guard", str(2 * math.pi * 20),
                  "--halfwidth", "0.05", "-o", str(out)])
            summaries.append((out / "summary.json").read_bytes())
        assert summaries[0] == summaries[1]
        summary = json.loads(summaries[0])
        assert "processing_time_ms" not in summary
        assert len(summary["interference"]) == 2

    def test_close_lines_fail_numerically(self, two_tone_record, tmp_path):
        code = main(["multitone", "-i", str(two_tone_record), "--freqs", "600,620", "--guard", "20",
                     "--halfwidth", "0.05", "-o", str(tmp_path / "lines")])
        assert code == EXIT_NUMERICAL


class TestBenchmark:
    def test_scenario_file(self, tmp_path):
        scenario = tmp_path / "scenario.json"
        scenario.write_text(json.dumps({
            "name": "poly", "kind": "polynomial", "sample_counts": [64, 128], "snr_db": [None],
            "replications": 1, "seed": 0,
        }))
        out = tmp_path / "bench"
        assert main(["benchmark", "--scenario", str(scenario), "--jobs", "1", "-o", str(out)]) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert len(report["cells"]) == 2

    def test_invalid_scenario(self, tmp_path):
        scenario = tmp_path / "scenario.json"
        scenario.write_text(json.dumps({"name": "x", "kind": "unknown", "sample_counts": [64], "seed": 0}))
        code = main(["benchmark", "--scenario", str(scenario), "-o", str(tmp_path / "bench")])
        assert code == EXIT_CONFIG
