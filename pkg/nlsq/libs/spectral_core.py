"""Torus geometry and Fourier conventions.

Modes are u_k(x) = exp(2 pi i k x) on [0, 1) with <f, g> = int conj(f) g, so
-Laplacian u_k = 4 pi^2 k^2 u_k. Physical samples sit at x_j = j / P.
Every transform here accepts a leading batch axis.
"""

import numpy as np

from nlsq.libs.domain_model import DimensionError, Field, Grid, GridError, Spectrum


def make_grid(K: int, P: int, kappa: float) -> Grid:
    """Validate and build a grid.

    Args:
        K: Largest mode index, modes run over -K..K.
        P: Number of physical samples, even and at least 4K+2.
        kappa: Chemical potential, strictly positive.

    Returns:
        Grid
    """
    if int(K) != K or K < 0:
        raise GridError(f"K must be a non-negative integer, got {K}")
    if int(P) != P or P <= 0:
        raise GridError(f"P must be a positive integer, got {P}")
    if not kappa > 0:
        raise GridError(f"kappa must be positive, got {kappa}")
    if P % 2:
        raise GridError(f"P must be even, got {P}")
    if P < 4 * K + 2:
        raise GridError(f"P={P} < 4K+2={4 * K + 2}: cubic terms would alias")
    return Grid(K=int(K), P=int(P), kappa=float(kappa))


def spectrum(grid: Grid) -> Spectrum:
    modes = grid.modes
    return Spectrum(modes=modes, lambdas=4.0 * np.pi**2 * modes.astype(float) ** 2 + grid.kappa)


def coeffs_to_values(coeffs: np.ndarray, P: int) -> np.ndarray:
    """Spectral coefficients (..., M) to physical samples (..., P)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    M = coeffs.shape[-1]
    K = (M - 1) // 2
    padded = np.zeros(coeffs.shape[:-1] + (P,), dtype=complex)
    padded[..., np.arange(-K, K + 1) % P] = coeffs
    return P * np.fft.ifft(padded, axis=-1)


def values_to_coeffs(values: np.ndarray, K: int) -> np.ndarray:
    """Physical samples (..., P) to the coefficients of modes -K..K."""
    values = np.asarray(values, dtype=complex)
    P = values.shape[-1]
    full = np.fft.fft(values, axis=-1) / P
    return full[..., np.arange(-K, K + 1) % P]


def to_physical(field: Field, grid: Grid) -> np.ndarray:
    if len(field.coeffs) != grid.M:
        raise DimensionError(f"field has {len(field.coeffs)} modes, grid expects {grid.M}")
    return coeffs_to_values(field.coeffs, grid.P)


def to_spectral(values: np.ndarray, grid: Grid) -> Field:
    values = np.asarray(values)
    if values.shape != (grid.P,):
        raise DimensionError(f"expected {grid.P} samples, got shape {values.shape}")
    return Field(values_to_coeffs(values, grid.K))


def density_hat(coeffs: np.ndarray, P: int) -> np.ndarray:
    """Fourier coefficients of |u|^2 on frequencies -2K..2K, batched."""
    K = (np.shape(coeffs)[-1] - 1) // 2
    values = coeffs_to_values(coeffs, P)
    return values_to_coeffs(np.abs(values) ** 2, 2 * K)


def convolve(kernel_hat: np.ndarray, density: np.ndarray) -> np.ndarray:
    """Spectral coefficients of w * rho: the pointwise product w^(k) rho^(k)."""
    kernel_hat = np.asarray(kernel_hat)
    density = np.asarray(density)
    if kernel_hat.shape[-1] != density.shape[-1]:
        raise DimensionError(
            f"kernel covers {kernel_hat.shape[-1]} modes, density covers {density.shape[-1]}"
        )
    return kernel_hat * density


def kernel_from_samples(samples: np.ndarray, grid: Grid) -> np.ndarray:
    """w^(q), |q| <= 2K, from physical samples w(x_j) by P-point quadrature."""
    samples = np.asarray(samples)
    if samples.shape != (grid.P,):
        raise DimensionError(f"expected {grid.P} kernel samples, got shape {samples.shape}")
    return values_to_coeffs(samples, 2 * grid.K)


def kernel_samples(kernel_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Physical samples of the band-limited kernel sum_q w^(q) exp(2 pi i q x_j)."""
    return coeffs_to_values(kernel_hat, grid.P)


def spectral_tail(grid: Grid, extra_modes: int = 100_000) -> float:
    """Sum of 1/lambda_k over the discarded modes |k| > K.

    The infinite tail is summed up to K + extra_modes and closed with the
    integral estimate of the remainder.
    """
    k = np.arange(grid.K + 1, grid.K + extra_modes + 1, dtype=float)
    partial = 2.0 * np.sum(1.0 / (4.0 * np.pi**2 * k**2 + grid.kappa))
    k_end = grid.K + extra_modes + 0.5
    return float(partial + 2.0 / (4.0 * np.pi**2 * k_end))
