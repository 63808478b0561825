import json

import pytest
from click.testing import CliRunner

from main import cli
from nlsq.apis import EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR, EXIT_OK
from nlsq.libs.export import read_ensemble, read_manifest


@pytest.fixture
def runner():
    return CliRunner()


def test_commands_are_discovered():
    expected = {
        "sample", "evolve", "correlate-classical", "correlate-quantum", "tau-sweep", "local-limit",
        "mollifier-sweep", "dyson-check", "partition-ratio", "tail-bound", "xsb", "invariance",
        "flow-quality", "operator-algebra", "wick-oracles", "list-presets", "run",
    }
    assert expected <= set(cli.commands)


def test_list_presets(runner):
    result = runner.invoke(cli, ["list-presets"])
    assert result.exit_code == EXIT_OK
    assert "invariance" in result.output
    assert "partition-ratio" in result.output

    result = runner.invoke(cli, ["list-presets", "--json"])
    rows = [json.loads(line) for line in result.output.splitlines()]
    assert {"name": "free-convergence", "experiment": "tau-sweep"}.items() <= rows[0].items()


def test_missing_seed_is_a_config_error(runner, tmp_path):
    result = runner.invoke(cli, ["sample", "--output-dir", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG_ERROR
    assert not (tmp_path / "manifest.json").exists()


def test_unknown_preset(runner, tmp_path):
    result = runner.invoke(cli, ["run", "--preset", "nope", "--seed", "1", "--output-dir", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_bad_override(runner, tmp_path):
    result = runner.invoke(cli, ["sample", "--seed", "1", "--set", "grid_p", "--output-dir", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_sample_writes_ensemble(runner, tmp_path):
    result = runner.invoke(cli, [
        "sample", "--seed", "3", "--grid-k", "1", "--grid-p", "8", "--kappa", "10",
        "--potential", "cosine", "--ensemble-size", "200", "--output-dir", str(tmp_path),
    ])
    assert result.exit_code == EXIT_OK, result.output
    manifest = read_manifest(tmp_path / "manifest.json")
    assert manifest.experiment == "sample"
    assert manifest.config["seed"] == 3
    assert "ensemble.npz" in manifest.artifacts
    samples, weights, meta = read_ensemble(tmp_path / "ensemble.npz")
    assert samples.shape == (200, 3)
    assert weights.shape == (200,)
    assert meta.potential == "cosine"


def test_failed_check_exit_code(runner, tmp_path):
    args = ["sample", "--seed", "4", "--grid-k", "1", "--grid-p", "8", "--ensemble-size", "100", "--set", "tolerance=1e-12"]
    result = runner.invoke(cli, args + ["--output-dir", str(tmp_path / "checked")])
    assert result.exit_code == EXIT_CHECK_FAILED
    assert "FAIL" in result.output
    result = runner.invoke(cli, args + ["--no-checks", "--output-dir", str(tmp_path / "unchecked")])
    assert result.exit_code == EXIT_OK


def test_preset_run_and_replay(runner, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    result = runner.invoke(cli, ["run", "--preset", "free-convergence", "--seed", "1", "--output-dir", str(first)])
    assert result.exit_code == EXIT_OK, result.output
    assert "PASS" in result.output

    manifest = read_manifest(first / "manifest.json")
    assert manifest.preset == "free-convergence"
    assert manifest.exit_code == 0
    assert all(check.passed for check in manifest.checks)
    assert all((first / table.file).exists() for table in manifest.tables)
    assert manifest.summary["spectral_tail"] > 0

    result = runner.invoke(cli, ["run", "--manifest", str(first / "manifest.json"), "--output-dir", str(second)])
    assert result.exit_code == EXIT_OK, result.output
    assert (second / "manifest.json").read_text() == (first / "manifest.json").read_text()


def test_config_file_run(runner, tmp_path):
    config = tmp_path / "run.env"
    config.write_text("EXPERIMENT=operator-algebra\nSEED=5\nN_MAX=3\nTAU_SCHEDULE=2\nN_RANDOM=3\n")
    result = runner.invoke(cli, ["run", "--config", str(config), "--output-dir", str(tmp_path / "out")])
    assert result.exit_code == EXIT_OK, result.output
    manifest = read_manifest(tmp_path / "out" / "manifest.json")
    assert manifest.experiment == "operator-algebra"
    assert manifest.config["n_random"] == 3
    assert manifest.checks
