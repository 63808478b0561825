from math import comb

import numpy as np
import pytest

from nlsq.libs.classical_gibbs import constant_potential, cosine_potential, interaction_energies, masses
from nlsq.libs.domain_model import DimensionError, Observable
from nlsq.libs.observables import (
    identity_observable,
    mode_projector,
    one_body_hamiltonian,
    operator_norm,
    random_hermitian,
    random_kernel,
    smooth_bump,
    smooth_step,
    symmetrizer,
    tensor_power,
    theta_values,
    two_body_kernel,
    wick_trace,
)
from nlsq.libs.spectral_core import make_grid, spectrum


@pytest.mark.parametrize("M, p", [(2, 1), (2, 3), (3, 2)])
def test_symmetrizer_is_orthogonal_projection(M, p):
    P = symmetrizer(M, p)
    np.testing.assert_allclose(P @ P, P, atol=1e-14)
    np.testing.assert_allclose(P, P.T)
    assert np.trace(P) == pytest.approx(comb(M + p - 1, p))


def test_tensor_power_matches_kron():
    c = np.array([1.0, 2.0j, -1.0])
    np.testing.assert_allclose(tensor_power(c, 2), np.kron(c, c))
    assert tensor_power(np.ones((4, 3)), 3).shape == (4, 27)


def test_theta_of_identity_is_mass_power():
    rng = np.random.default_rng(0)
    c = rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3))
    np.testing.assert_allclose(theta_values(identity_observable(1, 3), c), masses(c))
    np.testing.assert_allclose(theta_values(identity_observable(2, 3), c), masses(c) ** 2)


def test_theta_checks_mode_count():
    with pytest.raises(DimensionError):
        theta_values(identity_observable(1, 3), np.ones((2, 5)))


def test_projector_and_hamiltonian():
    grid = make_grid(1, 8, 2.0)
    spec = spectrum(grid)
    c = np.array([1.0, 2.0, 3.0j])
    assert theta_values(mode_projector(2, 3), c).real == pytest.approx(9.0)
    expected = np.sum(spec.lambdas * np.abs(c) ** 2)
    assert theta_values(one_body_hamiltonian(spec), c).real == pytest.approx(expected)


def test_random_kernels_are_symmetric():
    rng = np.random.default_rng(1)
    h = random_hermitian(2, 3, rng)
    np.testing.assert_allclose(h.kernel, h.kernel.conj().T, atol=1e-14)
    P = symmetrizer(3, 2)
    k = random_kernel(2, 3, rng)
    np.testing.assert_allclose(P @ k.kernel @ P, k.kernel, atol=1e-13)
    assert not np.allclose(k.kernel, k.kernel.conj().T)


@pytest.mark.parametrize("make_potential", [constant_potential, cosine_potential])
def test_two_body_kernel_reproduces_interaction_energy(make_potential):
    grid = make_grid(2, 16, 1.0)
    potential = make_potential(grid, 0.7)
    rng = np.random.default_rng(2)
    c = rng.normal(size=(5, grid.M)) + 1j * rng.normal(size=(5, grid.M))
    theta = theta_values(two_body_kernel(potential), c)
    np.testing.assert_allclose(theta.imag, 0.0, atol=1e-12)
    np.testing.assert_allclose(0.5 * theta.real, interaction_energies(c, potential), rtol=1e-12)


def test_operator_norm_matches_svd():
    rng = np.random.default_rng(3)
    xi = random_kernel(2, 2, rng)
    assert operator_norm(xi) == pytest.approx(np.linalg.norm(xi.kernel, ord=2), rel=1e-8)
    assert operator_norm(Observable(1, 2, np.zeros((2, 2)))) == 0.0


def test_smooth_weights():
    step, bump = smooth_step(2.0), smooth_bump(2.0)
    x = np.array([0.0, 1.0, 2.0, 2.5, 3.0, 5.0])
    np.testing.assert_allclose(step(x)[[0, 1, 2]], 0.0)
    np.testing.assert_allclose(step(x)[[4, 5]], 1.0)
    assert 0.0 < step(x)[3] < 1.0
    np.testing.assert_allclose(bump(x)[[0]], 1.0)
    np.testing.assert_allclose(bump(x)[[2, 3, 4, 5]], 0.0)
    assert 0.0 < bump(np.array([1.5]))[0] < 1.0


def test_wick_trace_number_moments():
    C = np.array([0.5, 0.25, 0.125])
    assert wick_trace(identity_observable(1, 3), C) == pytest.approx(C.sum())
    # E[N^2] of independent complex Gaussians
    assert wick_trace(identity_observable(2, 3), C) == pytest.approx(C.sum() ** 2 + np.sum(C**2))
    assert wick_trace(mode_projector(1, 3), C) == pytest.approx(0.25)
    with pytest.raises(DimensionError):
        wick_trace(identity_observable(1, 3), np.ones(2))
