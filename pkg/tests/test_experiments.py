import json

import numpy as np
import pandas as pd
import pytest

from nlsq.internal.config import load_run_config
from nlsq.internal.exceptionmodel import exception_to_model
from nlsq.libs.classical_gibbs import free_potential
from nlsq.libs.domain_model import ConfigError, GridError
from nlsq.libs.experiments import (
    PRESETS,
    RUNNERS,
    RunResult,
    build_correlation,
    build_observable,
    doubling_ratios,
    free_gap,
    list_presets,
    preset_defaults,
    run_experiment,
)
from nlsq.libs.export import read_manifest, split_complex, write_table
from nlsq.libs.fock_quantum import quantum_green_function
from nlsq.libs.spectral_core import make_grid, spectrum


@pytest.fixture
def spec():
    return spectrum(make_grid(1, 8, 1.0))


def config(**values):
    return load_run_config(overrides=values, known_experiments=RUNNERS)


def test_build_observable(spec):
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(build_observable("number", spec, rng).kernel, np.eye(3))
    projector = build_observable("projector:-1", spec, rng)
    assert projector.kernel[0, 0] == 1
    assert build_observable("identity:2", spec, rng).p == 2
    np.testing.assert_allclose(np.diag(build_observable("hamiltonian", spec, rng).kernel), spec.lambdas)
    random = build_observable("random:1", spec, rng)
    np.testing.assert_allclose(random.kernel, random.kernel.conj().T)
    with pytest.raises(ConfigError):
        build_observable("projector:2", spec, rng)
    with pytest.raises(ConfigError):
        build_observable("momentum", spec, rng)


def test_build_correlation_matches_times(spec):
    potential = free_potential(make_grid(1, 8, 1.0))
    cfg = config(experiment="tau-sweep", seed=1, tau_schedule="4", times="0,0.5", observable="number")
    corr = build_correlation(cfg, spec, potential)
    assert corr.times == [0.0, 0.5]
    cfg = config(experiment="tau-sweep", seed=1, tau_schedule="4", times="0,0.5", observable="number;number;number")
    with pytest.raises(ConfigError):
        build_correlation(cfg, spec, potential)


def test_doubling_ratios():
    ratios = doubling_ratios([4.0, 8.0, 10.0, 20.0], np.array([1.0, 0.5, 0.4, 0.2]))
    assert ratios == [(4.0, 0.5), (10.0, 0.5)]


def test_free_gap_of_number(spec):
    xi = build_observable("number", spec, np.random.default_rng(0))
    expected = abs(np.sum(1.0 / spec.lambdas) - np.sum(quantum_green_function(spec, 0.0, 8.0)))
    assert free_gap(xi, spec, 8.0) == pytest.approx(expected, rel=1e-12)


def test_run_result_check():
    result = RunResult()
    assert result.check("small", 0.5, 1.0).passed
    assert not result.check("large", 2.0, 1.0).passed
    assert not result.check("forced", 0.0, 1.0, passed=False).passed
    assert result.check("nan", np.nan, 1.0).value is None
    assert [c.name for c in result.checks] == ["small", "large", "forced", "nan"]


def test_presets_cover_the_runners():
    names = {info.name for info in list_presets()}
    assert {"free-convergence", "interacting-tau-sweep", "invariance", "dyson-order", "mollifier-rate",
            "partition-ratio", "tail-bound", "xsb-envelope"} <= names
    for name, (experiment, _, _) in PRESETS.items():
        assert experiment in RUNNERS
        defaults = preset_defaults(name)
        assert defaults["preset"] == name
        config(seed=1, **defaults)
    with pytest.raises(ConfigError):
        preset_defaults("missing")


def test_failed_check_gives_exit_one(tmp_path):
    cfg = config(experiment="sample", seed=2, grid_k=1, grid_p=8, kappa=10.0, ensemble_size=200, tolerance=1e-12)
    manifest, code = run_experiment(cfg, tmp_path)
    assert code == 1
    assert manifest.exit_code == 1
    assert [c.name for c in manifest.checks] == ["free_two_point_zscore"]
    assert not manifest.checks[0].passed

    cfg = cfg.model_copy(update={"checks": False})
    manifest, code = run_experiment(cfg, tmp_path / "unchecked")
    assert code == 0
    assert read_manifest(tmp_path / "unchecked" / "manifest.json").checks[0].passed is False


def test_dyson_preset_passes(tmp_path):
    cfg = config(seed=1, **preset_defaults("dyson-order"))
    manifest, code = run_experiment(cfg, tmp_path)
    assert code == 0, [c for c in manifest.checks if not c.passed]
    names = {c.name for c in manifest.checks}
    assert {"first_order_generator", "quantum_first_order_identity", "remainder_doubles_below_tau_8"} <= names
    assert (tmp_path / "dyson_remainder_scaling.csv").exists()


def test_domain_error_is_recorded(tmp_path):
    cfg = config(experiment="mollifier-sweep", seed=3, grid_k=1, grid_p=16, potential="local",
                 epsilon_schedule="0.01", t_final=0.01)
    manifest, code = run_experiment(cfg, tmp_path)
    assert code == 1
    assert manifest.exception["exceptionType"] == "ResolutionError"
    assert manifest.exception["domainError"] is True
    assert manifest.exception["stage"] == "mollifier-sweep"
    stored = json.loads((tmp_path / "manifest.json").read_text())
    assert stored["exception"]["message"] == manifest.exception["message"]


def test_exception_frames_are_relative():
    try:
        make_grid(-1, 8, 1.0)
    except GridError as e:
        model = exception_to_model(e, stage="grid")
    assert model.domainError
    assert model.stackTrace[0].filename.startswith("nlsq/")
    assert model.stackTrace[-1].frameName == "make_grid"


def test_tables_are_byte_stable(tmp_path):
    frame = split_complex(pd.DataFrame({"x": [0.1, 1 / 3], "z": [1 + 2j, -0.5j]}))
    assert list(frame.columns) == ["x", "z_re", "z_im"]
    first = write_table(frame, tmp_path / "a", "t")
    second = write_table(frame, tmp_path / "b", "t")
    assert first.sha256 == second.sha256
    assert first.rows == 2
    assert (tmp_path / "a" / "t.csv").read_text().splitlines()[0] == "x,z_re,z_im"
