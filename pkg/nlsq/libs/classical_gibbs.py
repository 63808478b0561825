"""Classical side: free Gaussian field sampling and the Gibbs state.

The Gibbs state is realized by self-normalized importance sampling from the
free field mu, reweighted by exp(-W). Samples are stored as a coefficient
matrix (S, M) so masses, interactions and Theta(xi) evaluate in one
vectorized pass.
"""
import warnings
from dataclasses import dataclass, replace
from itertools import permutations
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from nlsq.libs.domain_model import (
    DimensionError,
    EmptyEnsembleError,
    Field,
    Grid,
    GridError,
    NumericalWarning,
    Observable,
    PotentialSpec,
    Spectrum,
)
from nlsq.libs.observables import tensor_power, theta_values
from nlsq.libs.spectral_core import coeffs_to_values, convolve, density_hat, kernel_from_samples, kernel_samples


SampleFunctional = Callable[[np.ndarray], np.ndarray]  # (S, M) coefficients -> (S,) values


# ============================================================================
# POTENTIALS
# ============================================================================

def free_potential(grid: Grid) -> PotentialSpec:
    return PotentialSpec(variant="free", grid=grid, kernel_hat=np.zeros(4 * grid.K + 1, dtype=complex), coupling=0.0, w_sup=0.0)


def local_potential(grid: Grid, coupling: float = 1.0) -> PotentialSpec:
    """coupling * delta: w^ = coupling on every density frequency."""
    if coupling < 0:
        raise GridError(f"coupling must be non-negative, got {coupling}")
    kernel_hat = np.full(4 * grid.K + 1, coupling, dtype=complex)
    return PotentialSpec(variant="local", grid=grid, kernel_hat=kernel_hat, coupling=coupling)


def nonlocal_potential(grid: Grid, kernel_hat: np.ndarray, coupling: float = 1.0) -> PotentialSpec:
    """Bounded kernel given by its Fourier coefficients on -2K..2K.

    The kernel must be real in physical space. Either its grid samples are
    non-negative or its coefficients are (positive definite); both keep W >= 0.
    """
    kernel_hat = coupling * np.asarray(kernel_hat, dtype=complex)
    if kernel_hat.shape != (4 * grid.K + 1,):
        raise DimensionError(f"kernel needs {4 * grid.K + 1} coefficients, got {kernel_hat.shape}")
    if not np.allclose(kernel_hat[::-1], kernel_hat.conj(), atol=1e-12):
        raise GridError("kernel coefficients must satisfy w^(-q) = conj(w^(q)) (real kernel)")
    samples = kernel_samples(kernel_hat, grid).real
    positive_definite = np.all(kernel_hat.real >= -1e-12) and np.allclose(kernel_hat.imag, 0.0)
    if samples.min() < -1e-12 and not positive_definite:
        raise GridError("kernel is neither pointwise non-negative nor positive definite; W could be negative")
    return PotentialSpec(variant="nonlocal", grid=grid, kernel_hat=kernel_hat, coupling=coupling, w_sup=float(np.abs(samples).max()))


def constant_potential(grid: Grid, coupling: float = 1.0) -> PotentialSpec:
    """w = coupling everywhere, so w^(0) = coupling and all other coefficients vanish."""
    kernel_hat = np.zeros(4 * grid.K + 1, dtype=complex)
    kernel_hat[2 * grid.K] = 1.0
    return replace(nonlocal_potential(grid, kernel_hat, coupling), variant="constant")


def cosine_potential(grid: Grid, coupling: float = 1.0) -> PotentialSpec:
    """w(x) = coupling (1 + cos 2 pi x)."""
    kernel_hat = np.zeros(4 * grid.K + 1, dtype=complex)
    kernel_hat[2 * grid.K] = 1.0
    if grid.K > 0:
        kernel_hat[2 * grid.K - 1] = kernel_hat[2 * grid.K + 1] = 0.5
    return replace(nonlocal_potential(grid, kernel_hat, coupling), variant="cosine")


def potential_from_samples(grid: Grid, samples: np.ndarray, variant: str = "nonlocal", **meta) -> PotentialSpec:
    samples = np.asarray(samples, dtype=float)
    if samples.min() < 0:
        raise GridError("kernel samples must be non-negative")
    return PotentialSpec(variant=variant, grid=grid, kernel_hat=kernel_from_samples(samples, grid), w_sup=float(samples.max()), **meta)


# ============================================================================
# SAMPLING
# ============================================================================

@dataclass(frozen=True)
class FreeFieldSampler:
    """Draws c_k = omega_k / sqrt(lambda_k + nu), omega_k standard complex Gaussian.

    Samples are generated in chunks; chunk c uses the stream seeded by
    (seed, c), so sample i does not depend on how many were drawn before.
    """
    grid: Grid
    spectrum: Spectrum
    seed: int
    nu: float = 0.0
    chunk_size: int = 4096

    def __post_init__(self):
        if self.nu < 0:
            raise GridError(f"shift nu must be non-negative, got {self.nu}")
        if self.spectrum.M != self.grid.M:
            raise DimensionError("spectrum and grid disagree on the mode count")

    @property
    def scales(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.spectrum.lambdas + self.nu)


def _omega_chunk(seed: int, chunk: int, size: int, M: int) -> np.ndarray:
    rng = np.random.default_rng([seed, chunk])
    normals = rng.normal(scale=np.sqrt(0.5), size=(size, M, 2))
    return normals[..., 0] + 1j * normals[..., 1]


def sample_omegas(sampler: FreeFieldSampler, n: int, start: int = 0) -> np.ndarray:
    """Standard complex Gaussians for sample indices start..start+n-1."""
    if n <= 0:
        return np.zeros((0, sampler.grid.M), dtype=complex)
    size = sampler.chunk_size
    first, last = start // size, (start + n - 1) // size
    chunks = [_omega_chunk(sampler.seed, c, size, sampler.grid.M) for c in range(first, last + 1)]
    block = np.concatenate(chunks, axis=0)
    offset = start - first * size
    return block[offset:offset + n]


def sample_free_fields(sampler: FreeFieldSampler, n: int, start: int = 0, omega: Optional[np.ndarray] = None) -> np.ndarray:
    """Coefficient matrix (n, M) of free-field samples.

    Args:
        sampler: Sampler with grid, spectrum, seed and shift.
        n: Number of samples.
        start: Index of the first sample in the seeded stream.
        omega: Optional explicit Gaussian draws (n, M), used instead of the stream.

    Returns:
        Complex array of shape (n, M)
    """
    if omega is None:
        omega = sample_omegas(sampler, n, start)
    omega = np.asarray(omega, dtype=complex)
    if omega.shape[-1] != sampler.grid.M:
        raise DimensionError(f"omega has {omega.shape[-1]} modes, grid has {sampler.grid.M}")
    return omega * sampler.scales


def sample_free_field(sampler: FreeFieldSampler, index: int = 0, omega: Optional[np.ndarray] = None) -> Field:
    if omega is not None:
        return Field(sample_free_fields(sampler, 1, omega=np.atleast_2d(omega))[0])
    return Field(sample_free_fields(sampler, 1, start=index)[0])


# ============================================================================
# FIELD FUNCTIONALS
# ============================================================================

def masses(coeffs: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(coeffs) ** 2, axis=-1)


def mass(field: Field) -> float:
    return float(masses(field.coeffs))


def interaction_energies(coeffs: np.ndarray, potential: PotentialSpec) -> np.ndarray:
    """W = 1/2 int (w * |u|^2) |u|^2 by P-point quadrature, batched over rows."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-1] != potential.grid.M:
        raise DimensionError(f"field has {coeffs.shape[-1]} modes, potential grid has {potential.grid.M}")
    if potential.is_free:
        return np.zeros(coeffs.shape[:-1])
    P = potential.grid.P
    rho = np.abs(coeffs_to_values(coeffs, P)) ** 2
    v_hat = convolve(potential.kernel_hat, density_hat(coeffs, P))
    v = coeffs_to_values(v_hat, P).real
    energies = 0.5 * np.mean(rho * v, axis=-1)
    # quadrature roundoff may dip below zero; anything larger is a kernel sign problem
    floor = -1e-10 * np.maximum(1.0, np.mean(rho, axis=-1) ** 2)
    if np.any(energies < floor):
        warnings.warn(f"negative interaction energy {energies.min():.3e}; the kernel is not positive", NumericalWarning)
    return np.where((energies < 0) & (energies >= floor), 0.0, energies)


def interaction_energy(field: Field, potential: PotentialSpec) -> float:
    return float(interaction_energies(field.coeffs, potential))


def theta_observable(xi: Observable, field: Field) -> complex:
    return complex(theta_values(xi, field.coeffs))


def poisson_bracket_theta(xi: Observable, eta: Observable, field: Field) -> complex:
    """{Theta(xi), Theta(eta)} with {c_k, conj(c_l)} = i delta_kl, for symmetric kernels."""
    c = np.asarray(field.coeffs, dtype=complex)
    dxi_dc, dxi_dcbar = _theta_gradients(xi, c)
    deta_dc, deta_dcbar = _theta_gradients(eta, c)
    return complex(1j * (np.dot(dxi_dc, deta_dcbar) - np.dot(dxi_dcbar, deta_dc)))


def _theta_gradients(xi: Observable, c: np.ndarray) -> tuple:
    p, M = xi.p, xi.M
    rest = tensor_power(c, p - 1)
    v = tensor_power(c, p)
    left = (v.conj() @ xi.kernel).reshape(M, M ** (p - 1))
    right = (xi.kernel @ v).reshape(M, M ** (p - 1))
    d_dc = p * (left @ rest)
    d_dcbar = p * (right @ rest.conj())
    return d_dc, d_dcbar


# ============================================================================
# ENSEMBLES & ESTIMATORS
# ============================================================================

@dataclass(frozen=True, eq=False)
class Ensemble:
    """Free-field samples with importance weights exp(-W)."""
    samples: np.ndarray  # (S, M)
    weights: np.ndarray  # (S,)
    potential: PotentialSpec
    seed: int
    nu: float = 0.0

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def grid(self) -> Grid:
        return self.potential.grid


@dataclass(frozen=True)
class Estimate:
    value: complex
    stderr: float

    def __iter__(self):
        yield self.value
        yield self.stderr


def build_ensemble(sampler: FreeFieldSampler, n: int, potential: PotentialSpec, omega: Optional[np.ndarray] = None) -> Ensemble:
    samples = sample_free_fields(sampler, n, omega=omega)
    return Ensemble(samples=samples, weights=np.exp(-interaction_energies(samples, potential)), potential=potential, seed=sampler.seed, nu=sampler.nu)


def reweight(ensemble: Ensemble, potential: PotentialSpec) -> Ensemble:
    """Same samples, weights recomputed for another interaction on the same grid."""
    if potential.grid != ensemble.grid:
        raise DimensionError("potential and ensemble live on different grids")
    return replace(ensemble, weights=np.exp(-interaction_energies(ensemble.samples, potential)), potential=potential)


def ratio_estimate(values: np.ndarray, weights: np.ndarray) -> Estimate:
    """Self-normalized mean sum(w X) / sum(w) with delete-one jackknife error."""
    values = np.asarray(values)
    weights = np.asarray(weights, dtype=float)
    n = len(weights)
    if n == 0:
        raise EmptyEnsembleError("cannot estimate over an empty ensemble")
    weighted = weights * values
    total_w = np.sum(weights)
    total_wx = np.sum(weighted)
    value = total_wx / total_w
    if n == 1:
        return Estimate(complex(value), float("inf"))
    loo_w = total_w - weights
    with np.errstate(divide="ignore", invalid="ignore"):
        loo = (total_wx - weighted) / loo_w
    loo = loo[loo_w > 0]
    if len(loo) < 2:
        return Estimate(complex(value), float("inf"))
    spread = np.sum(np.abs(loo - loo.mean()) ** 2)
    return Estimate(complex(value), float(np.sqrt((len(loo) - 1) / len(loo) * spread)))


def gibbs_expectation(ensemble: Ensemble, X: SampleFunctional) -> Estimate:
    if ensemble.size == 0:
        raise EmptyEnsembleError("ensemble has no samples")
    return ratio_estimate(X(ensemble.samples), ensemble.weights)


def weighted_expectation(ensemble: Ensemble, X: SampleFunctional, f: Callable[[np.ndarray], np.ndarray]) -> Estimate:
    """rho(X f(N)) with N the mass of each sample."""
    if ensemble.size == 0:
        raise EmptyEnsembleError("ensemble has no samples")
    return ratio_estimate(X(ensemble.samples) * f(masses(ensemble.samples)), ensemble.weights)


def theta_functional(xi: Observable) -> SampleFunctional:
    return lambda coeffs: theta_values(xi, coeffs)


def deformed_classical_expectation(sampler: FreeFieldSampler, n: int, X: SampleFunctional, z: float, potential: PotentialSpec) -> Estimate:
    """Unnormalized deformed state int X exp(-z W) d mu^nu, for real z >= 0.

    The sampler's shift nu selects mu^nu; the result is divided by the
    mu^nu normalization only, so X = 1, z = 0 gives exactly 1.
    """
    if z < 0:
        raise GridError(f"deformation parameter must be non-negative, got {z}")
    samples = sample_free_fields(sampler, n)
    if n == 0:
        raise EmptyEnsembleError("cannot estimate over an empty ensemble")
    values = X(samples) * np.exp(-z * interaction_energies(samples, potential))
    mean = values.mean()
    stderr = np.std(values, ddof=1) / np.sqrt(n) if n > 1 else float("inf")
    return Estimate(complex(mean), float(stderr))


def single_mode_expectation(g: Callable[[np.ndarray], np.ndarray], spectrum: Spectrum, potential: PotentialSpec, nu: float = 0.0) -> complex:
    """Gibbs expectation of g(|c|^2) on a single mode by quadrature.

    With one mode |c|^2 is exponential with rate lambda + nu under the free
    field and W = w^(0) |c|^4 / 2, so
        rho(g) = int g(r) exp(-(lambda + nu) r - w^(0) r^2 / 2) dr / (same with g = 1).
    """
    if spectrum.M != 1:
        raise DimensionError(f"quadrature oracle needs a single mode, got M={spectrum.M}")
    rate = float(spectrum.lambdas[0]) + nu
    quartic = 0.5 * float(potential.hat(0).real)

    def density(r: float) -> float:
        return np.exp(-rate * r - quartic * r * r)

    options = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    real = quad(lambda r: float(np.real(g(np.asarray(r)))) * density(r), 0.0, np.inf, **options)[0]
    imag = quad(lambda r: float(np.imag(g(np.asarray(r)))) * density(r), 0.0, np.inf, **options)[0]
    denominator = quad(density, 0.0, np.inf, **options)[0]
    return complex(real, imag) / denominator


def gaussian_partition_ratio(spectrum: Spectrum, nu: float) -> float:
    """int exp(-nu N) d mu = prod lambda_k / (lambda_k + nu)."""
    if nu < 0:
        raise GridError(f"shift nu must be non-negative, got {nu}")
    return float(np.prod(spectrum.lambdas / (spectrum.lambdas + nu)))


def classical_density_matrix(ensemble: Ensemble, f: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """gamma(k, l) = rho(conj(c_l) c_k f(N)); Hermitian and positive semidefinite."""
    if ensemble.size == 0:
        raise EmptyEnsembleError("ensemble has no samples")
    c = ensemble.samples
    weights = ensemble.weights if f is None else ensemble.weights * f(masses(c))
    gamma = np.einsum("s,sk,sl->kl", weights, c, c.conj()) / np.sum(ensemble.weights)
    return 0.5 * (gamma + gamma.conj().T)


# ============================================================================
# WICK ORACLE
# ============================================================================

def wick_moment(mode_pairs: Sequence[tuple], spectrum: Spectrum, nu: float = 0.0) -> complex:
    """E_{mu^nu}[prod conj(c_{a_i}) c_{b_i}] over all pairings.

    Each pair (a, b) contributes one conjugated factor at mode a and one
    unconjugated factor at mode b (physical mode labels). The moment is the
    permanent of C[i, j] = delta(a_i, b_j) / (lambda_{a_i} + nu).
    """
    conjugated = [a for a, _ in mode_pairs]
    unconjugated = [b for _, b in mode_pairs]
    return wick_moment_general(conjugated, unconjugated, spectrum, nu)


def wick_moment_general(conjugated: Sequence[int], unconjugated: Sequence[int], spectrum: Spectrum, nu: float = 0.0) -> complex:
    """Moment with independent lists of conjugated and unconjugated mode labels.

    Unequal counts give exactly 0: mu^nu is invariant under c -> exp(i a) c,
    which multiplies the integrand by exp(i a (#unconjugated - #conjugated)).
    """
    if len(conjugated) != len(unconjugated):
        return 0.0 + 0.0j
    n = len(conjugated)
    if n == 0:
        return 1.0 + 0.0j
    lookup = {int(k): float(lam) for k, lam in zip(spectrum.modes, spectrum.lambdas)}
    for k in list(conjugated) + list(unconjugated):
        if int(k) not in lookup:
            raise DimensionError(f"mode {k} is outside the truncated mode set")
    cov = np.array([[(1.0 / (lookup[int(a)] + nu)) if a == b else 0.0 for b in unconjugated] for a in conjugated])
    total = 0.0
    for perm in permutations(range(n)):
        total += np.prod(cov[np.arange(n), list(perm)])
    return complex(total)
