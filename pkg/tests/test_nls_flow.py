import numpy as np
import pytest

from nlsq.libs.classical_gibbs import constant_potential, cosine_potential, free_potential, local_potential, masses
from nlsq.libs.domain_model import DimensionError, Field, GridError, ResolutionError
from nlsq.libs.nls_flow import (
    FlowParams,
    calibrate_dt,
    evolve,
    evolve_batch,
    evolve_to_times,
    flow_observable,
    hamiltonian_energy,
    mollifier_convergence,
    mollifier_kernel,
    plane_wave,
    plane_wave_solution,
    random_sobolev_field,
    trajectory,
)
from nlsq.libs.observables import identity_observable, mode_projector
from nlsq.libs.spectral_core import make_grid, spectrum


@pytest.fixture
def grid():
    return make_grid(2, 16, 1.0)


def test_flow_params_validation():
    with pytest.raises(GridError):
        FlowParams(dt=0.0)
    with pytest.raises(GridError):
        FlowParams(dt=1.0)
    with pytest.raises(GridError):
        FlowParams(record_interval=-1)


def test_free_flow_is_exact_phase_rotation(grid):
    rng = np.random.default_rng(0)
    c = rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)
    lambdas = spectrum(grid).lambdas
    out = evolve(Field(c), 0.37, free_potential(grid), FlowParams(dt=0.05))
    np.testing.assert_allclose(out.coeffs, c * np.exp(-1j * 0.37 * lambdas), atol=1e-12)


@pytest.mark.parametrize("make_potential", [local_potential, cosine_potential])
def test_plane_wave_is_reproduced(grid, make_potential):
    potential = make_potential(grid, 1.3)
    numeric = evolve(plane_wave(grid, 1, 0.8), 0.5, potential, FlowParams(dt=1e-2))
    exact = plane_wave_solution(grid, 1, 0.8, 0.5, potential)
    np.testing.assert_allclose(numeric.coeffs, exact.coeffs, atol=1e-10)


def test_plane_wave_outside_grid(grid):
    with pytest.raises(GridError):
        plane_wave(grid, 3, 1.0)


def test_mass_conserved_and_energy_second_order(grid):
    potential = local_potential(grid, 1.0)
    phi = random_sobolev_field(grid, 1.0, seed=3, mass_target=1.0)
    coarse = trajectory(phi, 1.0, potential, FlowParams(dt=0.004, record_interval=1))
    fine = trajectory(phi, 1.0, potential, FlowParams(dt=0.002, record_interval=1))
    assert coarse.mass_drift < 1e-12
    assert fine.mass_drift < 1e-12
    assert 3.0 < coarse.energy_drift / fine.energy_drift < 5.0


def test_trajectory_records_checkpoints(grid):
    report = trajectory(random_sobolev_field(grid, 0.5, seed=1), 0.1, local_potential(grid), FlowParams(dt=0.01, record_interval=2))
    np.testing.assert_allclose(report.times, [0.0, 0.02, 0.04, 0.06, 0.08, 0.1])
    frame = report.to_frame(include_coeffs=True)
    assert list(frame.columns[:3]) == ["time", "mass", "energy"]
    assert "re_-2" in frame.columns and "im_2" in frame.columns
    assert len(frame) == 6


def test_time_reversibility(grid):
    potential = cosine_potential(grid, 2.0)
    phi = random_sobolev_field(grid, 0.375, seed=2, mass_target=2.0)
    params = FlowParams(dt=1e-3)
    back = evolve(evolve(phi, 0.3, potential, params), -0.3, potential, params)
    np.testing.assert_allclose(back.coeffs, phi.coeffs, atol=1e-10)


def test_batch_rows_evolve_independently(grid):
    potential = local_potential(grid, 1.0)
    rng = np.random.default_rng(4)
    batch = rng.normal(size=(3, grid.M)) + 1j * rng.normal(size=(3, grid.M))
    params = FlowParams(dt=5e-3)
    out = evolve_batch(batch, 0.1, potential, params)
    np.testing.assert_allclose(out[1], evolve_batch(batch[1], 0.1, potential, params), atol=1e-13)
    np.testing.assert_allclose(masses(out), masses(batch), rtol=1e-12)
    with pytest.raises(DimensionError):
        evolve_batch(np.ones((2, 3)), 0.1, potential, params)


def test_evolve_to_times_matches_direct_evolution(grid):
    potential = cosine_potential(grid, 1.0)
    phi = random_sobolev_field(grid, 0.5, seed=5)
    params = FlowParams(dt=1e-3)
    states = evolve_to_times(phi.coeffs, [0.2, -0.1, 0.0, 0.2], potential, params)
    assert sorted(states) == [-0.1, 0.0, 0.2]
    np.testing.assert_allclose(states[0.0], phi.coeffs)
    np.testing.assert_allclose(states[-0.1], evolve(phi, -0.1, potential, params).coeffs, atol=1e-12)
    np.testing.assert_allclose(states[0.2], evolve(phi, 0.2, potential, params).coeffs, atol=1e-12)


def test_single_mode_flow_keeps_modulus():
    grid = make_grid(0, 2, 1.0)
    potential = constant_potential(grid, 2.0)
    c = np.array([0.6 + 0.8j])
    out = evolve(Field(c), 1.7, potential, FlowParams(dt=0.01))
    assert abs(out.coeffs[0]) == pytest.approx(1.0, abs=1e-14)
    assert flow_observable(mode_projector(0, 1), Field(c), 1.7, potential).real == pytest.approx(1.0)


def test_hamiltonian_energy_of_plane_wave(grid):
    potential = local_potential(grid, 2.0)
    wave = plane_wave(grid, 1, 0.5)
    lam = 4 * np.pi**2 + 1.0
    assert hamiltonian_energy(wave, potential) == pytest.approx(lam * 0.25 + 0.5 * 2.0 * 0.25**2)


def test_calibrate_dt_reaches_target(grid):
    potential = local_potential(grid, 1.0)
    params = calibrate_dt(potential, FlowParams(dt=0.05), t=0.2, target=1e-10)
    exact = plane_wave_solution(grid, 1, 1.0, 0.2, potential).coeffs
    numeric = evolve(plane_wave(grid, 1, 1.0), 0.2, potential, params).coeffs
    assert np.max(np.abs(numeric - exact)) < 1e-10


def test_random_sobolev_field_mass_and_seed(grid):
    a = random_sobolev_field(grid, 0.375, seed=9, mass_target=3.0)
    b = random_sobolev_field(grid, 0.375, seed=9, mass_target=3.0)
    assert np.sum(np.abs(a.coeffs) ** 2) == pytest.approx(3.0)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)


def test_mollifier_kernel_normalization():
    grid = make_grid(4, 64, 1.0)
    for base in ("triangle", "cosine"):
        potential = mollifier_kernel(0.25, base, grid, coupling=1.5)
        assert potential.variant == "mollified"
        assert potential.hat(0).real == pytest.approx(1.5)
        np.testing.assert_allclose(potential.kernel_hat.imag, 0.0, atol=1e-14)
    with pytest.raises(GridError):
        mollifier_kernel(0.0, "triangle", grid)
    with pytest.raises(ResolutionError):
        mollifier_kernel(1 / 64, "triangle", grid)


def test_mollifier_convergence_decreases():
    grid = make_grid(4, 128, 1.0)
    phi = random_sobolev_field(grid, 1.0, seed=6)
    report = mollifier_convergence(phi, [0.5, 0.25, 0.125], 0.2, FlowParams(dt=2e-3), grid, n_checkpoints=4)
    errors = report.table["sup_error"].to_numpy()
    assert np.all(np.diff(errors) < 0)
    assert report.slope > 0
    with pytest.raises(GridError):
        mollifier_convergence(phi, [0.25, 0.5], 0.2, FlowParams(dt=2e-3), grid)


def test_identity_observable_is_conserved(grid):
    phi = random_sobolev_field(grid, 0.5, seed=7)
    value = flow_observable(identity_observable(1, grid.M), phi, 0.4, local_potential(grid), FlowParams(dt=1e-3))
    assert value.real == pytest.approx(1.0, rel=1e-12)
