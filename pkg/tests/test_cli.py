"""
Tests for the command-line surface and its exit codes.
"""

import json
import logging
import math

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from src.cli import EXIT_INVALID, EXIT_NUMERICAL, app
from src.core.artifact_manager import ArtifactManager
from src.core.errors import NoConvergenceError

runner = CliRunner()


@pytest.fixture(autouse=True)
def restore_root_logger():
    """configure_logging replaces the root handlers; put them back afterwards."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def invoke(*args):
    return runner.invoke(app, ["--threads", "1", *args])


class TestClosedForms:
    """Test the closed-form commands."""

    def test_steinstein(self, tmp_path):
        out = tmp_path / "ss.json"

        result = invoke("steinstein", "-p", "sigma0=0.2", "-o", str(out))

        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["c1"] == pytest.approx(0.5 * (1.0 + math.sqrt(1.0 + math.pi**2)))
        assert payload["c2"] == pytest.approx(0.34604, abs=1e-4)
        assert payload["params"]["sigma0"] == 0.2

    def test_blackscholes(self, tmp_path):
        out = tmp_path / "bs.json"

        result = invoke("blackscholes", "-o", str(out))

        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert (payload["c1"], payload["c2"]) == (0.5, -0.5)

    def test_payload_on_stdout(self):
        result = invoke("blackscholes", "-p", "sigma=0.5")

        assert result.exit_code == 0
        assert '"c1": 2.0' in result.output


class TestExitCodes:
    """Test the mapping of failures to exit statuses."""

    def test_malformed_param(self):
        result = invoke("steinstein", "-p", "sigma0")

        assert result.exit_code == EXIT_INVALID
        assert "KEY=VALUE" in result.output

    def test_non_numeric_param(self):
        result = invoke("blackscholes", "-p", "sigma=abc")

        assert result.exit_code == EXIT_INVALID

    def test_parameter_sign_violation(self):
        result = invoke("steinstein", "-p", "c=-1")

        assert result.exit_code == EXIT_INVALID
        assert "ValidationError" in result.output

    def test_positive_correlation_unsupported(self):
        result = invoke("steinstein", "-p", "rho=0.5")

        assert result.exit_code == EXIT_INVALID
        assert "UnsupportedParameterError" in result.output

    def test_schema_violation(self):
        result = invoke("smile", "--B1", "3", "--format", "xml")

        assert result.exit_code == EXIT_INVALID
        assert "ValidationError" in result.output

    def test_moment_explosion_is_numerical(self):
        result = invoke("smile", "--B1", "1.5")

        assert result.exit_code == EXIT_NUMERICAL
        assert "MomentExplosionRegimeError" in result.output

    def test_numerical_failure(self, mocker):
        mocker.patch(
            "src.cli.run",
            side_effect=NoConvergenceError("stuck", last_residual=0.3, iterations=50),
        )

        result = invoke("blackscholes")

        assert result.exit_code == EXIT_NUMERICAL
        assert '"iterations": 50' in result.output

    def test_command_mismatch(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"command": "blackscholes"}))

        result = invoke("steinstein", str(path))

        assert result.exit_code == EXIT_INVALID
        assert "not 'steinstein'" in result.output


class TestConfigFiles:
    """Test commands driven by configuration files."""

    def test_run_dispatches(self, tmp_path):
        config = tmp_path / "run.json"
        out = tmp_path / "out.json"
        config.write_text(
            json.dumps(
                {"command": "blackscholes", "params": {"T": 2.0}, "output": {"path": str(out)}}
            )
        )

        result = invoke("run", str(config))

        assert result.exit_code == 0, result.output
        assert json.loads(out.read_text())["c1"] == 0.25

    def test_flags_override_file(self, tmp_path):
        config = tmp_path / "ss.json"
        out = tmp_path / "ss.json.out"
        config.write_text(json.dumps({"command": "steinstein", "params": {"sigma0": 0.5}}))

        result = invoke("steinstein", str(config), "-p", "sigma0=0.2", "-o", str(out))

        assert result.exit_code == 0, result.output
        assert json.loads(out.read_text())["params"]["sigma0"] == 0.2

    def test_smile_csv(self, tmp_path):
        out = tmp_path / "wing.csv"

        result = invoke("smile", "--B1", "3", "--B2", "1", "-o", str(out), "--format", "csv")

        assert result.exit_code == 0, result.output
        assert out.read_text().splitlines()[0] == "k,total_variance"

    def test_mc_samples_as_csv(self, tmp_path):
        """Test that the CSV export holds the same samples as the binary file."""
        # Arrange
        config = tmp_path / "mc.json"
        out = tmp_path / "samples.csv"
        binary = tmp_path / "samples.bin"
        config.write_text(
            json.dumps(
                {
                    "command": "mc",
                    "model": {"catalog": "black_scholes"},
                    "mc": {"n_paths": 1_000, "n_steps": 4},
                    "tail": {
                        "quantile_range": [0.9, 0.999],
                        "min_samples": 1_000,
                        "min_tail_points": 10,
                        "n_bootstrap": 5,
                    },
                }
            )
        )

        # Act
        result = invoke(
            "mc",
            str(config),
            "--seed",
            "4",
            "--samples",
            str(binary),
            "-o",
            str(out),
            "--format",
            "csv",
        )

        # Assert
        assert result.exit_code == 0, result.output
        table = pd.read_csv(out, float_precision="round_trip")
        assert table.columns.tolist() == ["y"]
        assert len(table) == 1_000
        np.testing.assert_array_equal(
            table["y"].to_numpy(), ArtifactManager().load_samples(binary)
        )
