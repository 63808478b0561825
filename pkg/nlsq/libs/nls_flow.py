"""Strang-split time evolution for the truncated defocusing NLS.

    i du/dt = (-Laplacian + kappa) u + (w * |u|^2) u,  u band-limited to |k| <= K.

The linear step is exact in Fourier space. The nonlinear half step is the
unitary exp(-i h P_K V P_K) with V = w * |u|^2 taken at the average of the
start and end densities (solved by fixed-point iteration), so each substep
preserves the mass exactly, is time-reversible and reproduces plane waves
exactly. All routines work on a batch of coefficient rows (S, M).
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from nlsq.libs.classical_gibbs import interaction_energies, local_potential, masses
from nlsq.libs.domain_model import (
    DEFAULT_DT,
    MAX_DT,
    MIN_MOLLIFIER_CELLS,
    BlowUpError,
    DimensionError,
    Field,
    Grid,
    GridError,
    Observable,
    PotentialSpec,
    ResolutionError,
)
from nlsq.libs.observables import theta_values
from nlsq.libs.spectral_core import convolve, density_hat, kernel_from_samples, spectrum


@dataclass(frozen=True)
class FlowParams:
    """Integrator settings; record_interval counts steps between checkpoints (0 = endpoints only)."""
    dt: float = DEFAULT_DT
    record_interval: int = 0
    fixed_point_tol: float = 1e-14
    max_fixed_point: int = 50

    def __post_init__(self):
        if not (0 < self.dt <= MAX_DT):
            raise GridError(f"dt must lie in (0, {MAX_DT}], got {self.dt}")
        if self.record_interval < 0:
            raise GridError("record_interval must be non-negative")


@dataclass
class TrajectoryReport:
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    checkpoints: List[Field] = field(default_factory=list)

    @property
    def mass_drift(self) -> float:
        """Largest relative mass deviation from the initial value."""
        ref = self.mass[0] if self.mass[0] != 0 else 1.0
        return float(np.max(np.abs(self.mass - self.mass[0])) / abs(ref))

    @property
    def energy_drift(self) -> float:
        ref = self.energy[0] if self.energy[0] != 0 else 1.0
        return float(np.max(np.abs(self.energy - self.energy[0])) / abs(ref))

    def to_frame(self, include_coeffs: bool = False) -> pd.DataFrame:
        frame = pd.DataFrame({"time": self.times, "mass": self.mass, "energy": self.energy})
        if include_coeffs and self.checkpoints:
            coeffs = np.array([c.coeffs for c in self.checkpoints])
            K = (coeffs.shape[1] - 1) // 2
            for i, k in enumerate(range(-K, K + 1)):
                frame[f"re_{k}"] = coeffs[:, i].real
                frame[f"im_{k}"] = coeffs[:, i].imag
        return frame


# ============================================================================
# SUBSTEPS
# ============================================================================

def _linear_phases(grid: Grid, h: float) -> np.ndarray:
    return np.exp(-1j * h * spectrum(grid).lambdas)


def _apply_potential(c: np.ndarray, h: float, rho_hat: np.ndarray, potential: PotentialSpec) -> np.ndarray:
    """exp(-i h P_K V P_K) c with V^ = w^ rho^, one matrix per row."""
    K = potential.grid.K
    v_hat = convolve(potential.kernel_hat, rho_hat)
    if K == 0:
        return c * np.exp(-1j * h * v_hat.real)
    modes = potential.grid.modes
    toeplitz = v_hat[..., (modes[:, None] - modes[None, :]) + 2 * K]
    toeplitz = 0.5 * (toeplitz + np.conj(np.swapaxes(toeplitz, -1, -2)))
    evals, evecs = np.linalg.eigh(toeplitz)
    rotated = np.einsum("...lk,...l->...k", evecs.conj(), c)
    return np.einsum("...kl,...l->...k", evecs, np.exp(-1j * h * evals) * rotated)


def _nonlinear_step(c0: np.ndarray, h: float, potential: PotentialSpec, params: FlowParams) -> np.ndarray:
    P = potential.grid.P
    rho0 = density_hat(c0, P)
    c1 = _apply_potential(c0, h, rho0, potential)
    if potential.grid.K == 0:
        # single mode: |c| is invariant so the start density is exact
        return c1
    scale = max(float(np.max(np.abs(c0))), 1.0)
    for _ in range(params.max_fixed_point):
        updated = _apply_potential(c0, h, 0.5 * (rho0 + density_hat(c1, P)), potential)
        change = float(np.max(np.abs(updated - c1)))
        c1 = updated
        if change <= params.fixed_point_tol * scale:
            break
    return c1


def _strang_steps(c: np.ndarray, t: float, potential: PotentialSpec, params: FlowParams, on_step: Optional[Callable[[int, float, np.ndarray], None]] = None) -> np.ndarray:
    if t == 0:
        return c
    n_steps = int(np.ceil(abs(t) / params.dt - 1e-12))
    h = t / n_steps
    phases = _linear_phases(potential.grid, h)
    free = potential.is_free
    for step in range(1, n_steps + 1):
        if not free:
            c = _nonlinear_step(c, 0.5 * h, potential, params)
        c = c * phases
        if not free:
            c = _nonlinear_step(c, 0.5 * h, potential, params)
        if on_step is not None:
            on_step(step, step * h, c)
    if not np.all(np.isfinite(c)):
        raise BlowUpError(f"non-finite coefficients after evolving to t={t}")
    return c


# ============================================================================
# FLOW
# ============================================================================

def evolve_batch(coeffs: np.ndarray, t: float, potential: PotentialSpec, params: FlowParams) -> np.ndarray:
    coeffs = np.array(coeffs, dtype=complex)
    if coeffs.shape[-1] != potential.grid.M:
        raise DimensionError(f"field has {coeffs.shape[-1]} modes, potential grid has {potential.grid.M}")
    return _strang_steps(coeffs, float(t), potential, params)


def evolve(field: Field, t: float, potential: PotentialSpec, params: FlowParams = FlowParams()) -> Field:
    return Field(evolve_batch(field.coeffs, t, potential, params))


def evolve_to_times(coeffs: np.ndarray, times: Sequence[float], potential: PotentialSpec, params: FlowParams) -> Dict[float, np.ndarray]:
    """States at every requested time, stepping through sorted checkpoints.

    Positive and negative times are reached by separate sweeps out of t=0, so
    one trajectory per sample serves every checkpoint.
    """
    coeffs = np.array(coeffs, dtype=complex)
    distinct = sorted({float(t) for t in times})
    states: Dict[float, np.ndarray] = {}
    if 0.0 in distinct:
        states[0.0] = coeffs
    for sweep in ([t for t in distinct if t > 0], sorted((t for t in distinct if t < 0), reverse=True)):
        current, clock = coeffs, 0.0
        for t in sweep:
            current = evolve_batch(current, t - clock, potential, params)
            clock = t
            states[t] = current
    return states


def hamiltonian_energies(coeffs: np.ndarray, potential: PotentialSpec) -> np.ndarray:
    lambdas = spectrum(potential.grid).lambdas
    return np.sum(lambdas * np.abs(coeffs) ** 2, axis=-1) + interaction_energies(coeffs, potential)


def hamiltonian_energy(field: Field, potential: PotentialSpec) -> float:
    return float(hamiltonian_energies(field.coeffs, potential))


def trajectory(field: Field, t: float, potential: PotentialSpec, params: FlowParams = FlowParams()) -> TrajectoryReport:
    """Evolve one field and record mass and energy at every checkpoint."""
    c0 = np.array(field.coeffs, dtype=complex)
    times, states = [0.0], [c0]

    def record(step: int, time: float, c: np.ndarray) -> None:
        if params.record_interval and step % params.record_interval == 0:
            times.append(time)
            states.append(c.copy())

    final = _strang_steps(c0, float(t), potential, params, on_step=record)
    if times[-1] != t:
        times.append(float(t))
        states.append(final)
    block = np.array(states)
    return TrajectoryReport(
        times=np.array(times),
        mass=masses(block),
        energy=hamiltonian_energies(block, potential),
        checkpoints=[Field(s) for s in block],
    )


def flow_observable(xi: Observable, field: Field, t: float, potential: PotentialSpec, params: FlowParams = FlowParams()) -> complex:
    return complex(theta_values(xi, evolve(field, t, potential, params).coeffs))


# ============================================================================
# PLANE WAVES & CALIBRATION
# ============================================================================

def plane_wave(grid: Grid, k: int, amplitude: complex) -> Field:
    if abs(k) > grid.K:
        raise GridError(f"mode {k} outside -{grid.K}..{grid.K}")
    coeffs = np.zeros(grid.M, dtype=complex)
    coeffs[k + grid.K] = amplitude
    return Field(coeffs)


def plane_wave_solution(grid: Grid, k: int, amplitude: complex, t: float, potential: PotentialSpec) -> Field:
    """Closed form c exp(-i (lambda_k + w^(0) |c|^2) t) for constant-modulus data."""
    lam = 4.0 * np.pi**2 * k**2 + grid.kappa
    phase = lam + potential.hat(0).real * abs(amplitude) ** 2
    return plane_wave(grid, k, amplitude * np.exp(-1j * phase * t))


def calibrate_dt(potential: PotentialSpec, params: FlowParams = FlowParams(), amplitude: float = 1.0, t: float = 1.0, target: float = 1e-8, min_dt: float = 1e-6) -> FlowParams:
    """Halve dt until a plane wave matches its closed form to `target` at time t."""
    grid = potential.grid
    k = min(1, grid.K)
    exact = plane_wave_solution(grid, k, amplitude, t, potential).coeffs
    current = params
    while True:
        numeric = evolve(plane_wave(grid, k, amplitude), t, potential, current).coeffs
        if np.max(np.abs(numeric - exact)) < target or current.dt / 2 < min_dt:
            return current
        current = FlowParams(dt=current.dt / 2, record_interval=current.record_interval, fixed_point_tol=current.fixed_point_tol, max_fixed_point=current.max_fixed_point)


def random_sobolev_field(grid: Grid, s: float, seed: int, mass_target: float = 1.0) -> Field:
    """Random data with |c_k| ~ (1 + 2 pi |k|)^{-(s + 1/2)}, barely in H^s, scaled to a given mass."""
    rng = np.random.default_rng(seed)
    omega = rng.normal(scale=np.sqrt(0.5), size=(grid.M, 2)) @ np.array([1.0, 1j])
    coeffs = omega * (1.0 + 2.0 * np.pi * np.abs(grid.modes)) ** (-(s + 0.5))
    norm = np.sqrt(np.sum(np.abs(coeffs) ** 2))
    return Field(coeffs * np.sqrt(mass_target) / norm)


# ============================================================================
# MOLLIFIERS
# ============================================================================

def _triangle(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 2.0 * (1.0 - 2.0 * np.abs(x)))


def _raised_cosine(x: np.ndarray) -> np.ndarray:
    return np.where(np.abs(x) <= 0.5, 2.0 * np.cos(np.pi * x) ** 2, 0.0)


BASE_KERNELS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "triangle": _triangle,
    "cosine": _raised_cosine,
}


def mollifier_kernel(epsilon: float, base: Union[str, Callable[[np.ndarray], np.ndarray]], grid: Grid, coupling: float = 1.0) -> PotentialSpec:
    """w^eps(x) = (1/eps) w([x]/eps), renormalized so its P-point mean is exactly 1.

    Args:
        epsilon: Width in (0, 1].
        base: Name in BASE_KERNELS or a callable supported in [-1/2, 1/2] with unit integral.
        grid: Physical grid the kernel is sampled on.
        coupling: Overall prefactor.

    Returns:
        PotentialSpec with variant 'mollified'
    """
    if not (0 < epsilon <= 1):
        raise GridError(f"epsilon must lie in (0, 1], got {epsilon}")
    base_fn = BASE_KERNELS[base] if isinstance(base, str) else base
    x = grid.points
    distance = (x + 0.5) % 1.0 - 0.5
    samples = np.asarray(base_fn(distance / epsilon), dtype=float) / epsilon
    if samples.min() < 0:
        raise GridError("base kernel must be non-negative")
    cells = int(np.count_nonzero(samples > 0))
    if cells < MIN_MOLLIFIER_CELLS:
        raise ResolutionError(
            f"epsilon={epsilon:g} covers {cells} of {grid.P} grid cells (need {MIN_MOLLIFIER_CELLS}); "
            f"raise P to at least {int(np.ceil(MIN_MOLLIFIER_CELLS / epsilon)) + 2}"
        )
    samples = coupling * samples / samples.mean()
    kernel_hat = kernel_from_samples(samples, grid)
    # the base kernels are even, drop round-off imaginary parts
    kernel_hat = 0.5 * (kernel_hat + kernel_hat[::-1].conj())
    return PotentialSpec(
        variant="mollified",
        grid=grid,
        kernel_hat=kernel_hat,
        coupling=coupling,
        epsilon=float(epsilon),
        base=base if isinstance(base, str) else getattr(base, "__name__", "custom"),
        w_sup=float(samples.max()),
    )


@dataclass
class MollifierReport:
    table: pd.DataFrame
    slope: float


def mollifier_convergence(
    phi0: Field,
    eps_schedule: Sequence[float],
    T: float,
    params: FlowParams,
    grid: Grid,
    base: str = "triangle",
    coupling: float = 1.0,
    reference: Optional[PotentialSpec] = None,
    n_checkpoints: int = 16,
    rate_exponent: float = 0.125,
) -> MollifierReport:
    """sup_{|t| <= T} ||u^eps(t) - u(t)||_{L^2} for each eps.

    `reference` defaults to the local flow with the same coupling. The table
    also carries err / eps^rate_exponent so the bound constant can be read off.
    """
    eps = [float(e) for e in eps_schedule]
    if not eps:
        raise GridError("epsilon schedule is empty")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise GridError("epsilon schedule must be strictly decreasing")
    reference = reference or local_potential(grid, coupling)
    times = np.linspace(-T, T, 2 * n_checkpoints + 1)
    ref_states = evolve_to_times(phi0.coeffs, times, reference, params)
    rows = []
    for e in eps:
        potential = mollifier_kernel(e, base, grid, coupling)
        states = evolve_to_times(phi0.coeffs, times, potential, params)
        sup_error = max(float(np.sqrt(np.sum(np.abs(states[t] - ref_states[t]) ** 2))) for t in ref_states)
        rows.append({"epsilon": e, "sup_error": sup_error, "rate_constant": sup_error / e**rate_exponent})
    table = pd.DataFrame(rows)
    positive = table[table["sup_error"] > 0]
    slope = float(np.polyfit(np.log(positive["epsilon"]), np.log(positive["sup_error"]), 1)[0]) if len(positive) >= 2 else float("nan")
    return MollifierReport(table=table, slope=slope)
