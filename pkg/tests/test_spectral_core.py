import numpy as np
import pytest

from nlsq.libs.domain_model import DimensionError, Field, GridError
from nlsq.libs.spectral_core import (
    coeffs_to_values,
    convolve,
    density_hat,
    kernel_from_samples,
    kernel_samples,
    make_grid,
    spectral_tail,
    spectrum,
    to_physical,
    to_spectral,
)


@pytest.mark.parametrize("K, P, kappa", [(-1, 8, 1.0), (2, 9, 1.0), (2, 8, 1.0), (1, 8, 0.0), (1, 8, -2.0)])
def test_make_grid_rejects_invalid(K, P, kappa):
    with pytest.raises(GridError):
        make_grid(K, P, kappa)


def test_make_grid_accepts_minimal_resolution():
    grid = make_grid(3, 14, 0.5)
    assert grid.M == 7
    assert list(grid.modes) == [-3, -2, -1, 0, 1, 2, 3]
    assert list(grid.density_modes) == list(range(-6, 7))


def test_spectrum_eigenvalues():
    grid = make_grid(2, 16, 3.0)
    spec = spectrum(grid)
    np.testing.assert_allclose(spec.lambdas, 4 * np.pi**2 * np.array([4, 1, 0, 1, 4]) + 3.0)
    np.testing.assert_allclose(spec.shifted(1.5), spec.lambdas + 1.5)


def test_single_mode_samples_exponential():
    grid = make_grid(2, 16, 1.0)
    coeffs = np.zeros(grid.M, dtype=complex)
    coeffs[1 + grid.K] = 1.0
    values = to_physical(Field(coeffs), grid)
    np.testing.assert_allclose(values, np.exp(2j * np.pi * grid.points), atol=1e-14)


def test_spectral_physical_inverse():
    rng = np.random.default_rng(3)
    grid = make_grid(4, 32, 1.0)
    coeffs = rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)
    back = to_spectral(to_physical(Field(coeffs), grid), grid)
    np.testing.assert_allclose(back.coeffs, coeffs, atol=1e-13)


def test_transforms_accept_batches():
    rng = np.random.default_rng(4)
    batch = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
    values = coeffs_to_values(batch, 8)
    assert values.shape == (5, 8)
    np.testing.assert_allclose(values[2], coeffs_to_values(batch[2], 8))


def test_to_physical_checks_mode_count():
    grid = make_grid(2, 16, 1.0)
    with pytest.raises(DimensionError):
        to_physical(Field(np.zeros(3, dtype=complex)), grid)


def test_density_hat_is_exact_autocorrelation():
    rng = np.random.default_rng(5)
    grid = make_grid(3, 14, 1.0)
    c = rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)
    rho = density_hat(c, grid.P)
    expected = np.zeros(4 * grid.K + 1, dtype=complex)
    for i, k in enumerate(grid.modes):
        for j, l in enumerate(grid.modes):
            # |u|^2 = sum conj(c_l) c_k e^{2 pi i (k - l) x}
            expected[k - l + 2 * grid.K] += np.conj(c[j]) * c[i]
    np.testing.assert_allclose(rho, expected, atol=1e-12)
    assert rho[2 * grid.K].real == pytest.approx(np.sum(np.abs(c) ** 2))


def test_convolve_is_pointwise_and_checks_shapes():
    np.testing.assert_allclose(convolve(np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 2.0])), [2.0, 4.0, 6.0])
    with pytest.raises(DimensionError):
        convolve(np.ones(3), np.ones(5))


def test_kernel_samples_roundtrip_band_limited():
    grid = make_grid(2, 16, 1.0)
    samples = 1.0 + 0.5 * np.cos(2 * np.pi * grid.points)
    hat = kernel_from_samples(samples, grid)
    np.testing.assert_allclose(hat[2 * grid.K], 1.0, atol=1e-14)
    np.testing.assert_allclose(hat[2 * grid.K + 1], 0.25, atol=1e-14)
    np.testing.assert_allclose(kernel_samples(hat, grid).real, samples, atol=1e-13)


def test_spectral_tail_matches_closed_form():
    # sum_{k != 0} 1 / (4 pi^2 k^2 + kappa) = (coth(sqrt(kappa)/2) sqrt(kappa)/2 - 1) / kappa
    kappa = 1.0
    grid = make_grid(0, 2, kappa)
    s = np.sqrt(kappa)
    exact = (s / 2 / np.tanh(s / 2) - 1) / kappa
    assert spectral_tail(grid) == pytest.approx(exact, rel=1e-9)
