"""Time-dependent correlation functions on both sides and the sweeps comparing them.

    classical:  rho(Psi^{t_1} Theta(xi^1) ... Psi^{t_m} Theta(xi^m) f(N))
    quantum:    rho_tau(Psi_tau^{t_1} Theta_tau(xi^1) ... Psi_tau^{t_m} Theta_tau(xi^m) f(N_tau))
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from nlsq.libs.classical_gibbs import Ensemble, Estimate, classical_density_matrix, masses, ratio_estimate, reweight
from nlsq.libs.domain_model import DimensionError, GridError, Observable, PotentialSpec, Spectrum
from nlsq.libs.fock_quantum import (
    FockBasis,
    Hamiltonians,
    build_basis,
    build_hamiltonians,
    grand_canonical_expectation,
    heisenberg_evolve,
    lift_operator,
    number_weight,
    quantum_density_matrix,
    size_cutoff,
)
from nlsq.libs.nls_flow import FlowParams, evolve_to_times, mollifier_kernel
from nlsq.libs.observables import identity_observable, smooth_step, theta_values


NumberWeight = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CorrelationSpec:
    """Ordered factors (xi^j, t_j) with the interaction that drives both evolutions."""
    factors: Tuple[Tuple[Observable, float], ...]
    potential: PotentialSpec
    weight: Optional[NumberWeight] = None

    def __post_init__(self):
        if not self.factors:
            raise GridError("a correlation needs at least one factor")
        M = self.potential.grid.M
        for xi, _ in self.factors:
            if xi.M != M:
                raise DimensionError(f"observable on {xi.M} modes, grid has {M}")

    @property
    def m(self) -> int:
        return len(self.factors)

    @property
    def times(self) -> List[float]:
        return [t for _, t in self.factors]


def hermitian_conjugate_spec(spec: CorrelationSpec) -> CorrelationSpec:
    """Reversed order with adjoint kernels; its correlation is the complex conjugate."""
    return replace(spec, factors=tuple((xi.adjoint(), t) for xi, t in reversed(spec.factors)))


# ============================================================================
# CLASSICAL
# ============================================================================

def classical_values(spec: CorrelationSpec, samples: np.ndarray, params: FlowParams) -> np.ndarray:
    """Per-sample product prod_j Theta(xi^j)(S_{t_j} phi) times f(N)."""
    states = evolve_to_times(samples, spec.times, spec.potential, params)
    values = np.ones(len(samples), dtype=complex)
    for xi, t in spec.factors:
        values = values * theta_values(xi, states[float(t)])
    if spec.weight is not None:
        values = values * spec.weight(masses(samples))
    return values


def classical_correlation(spec: CorrelationSpec, ensemble: Ensemble, params: FlowParams) -> Estimate:
    if ensemble.grid != spec.potential.grid:
        raise DimensionError("ensemble and correlation live on different grids")
    if not np.array_equal(ensemble.potential.kernel_hat, spec.potential.kernel_hat):
        ensemble = reweight(ensemble, spec.potential)
    return ratio_estimate(classical_values(spec, ensemble.samples, params), ensemble.weights)


# ============================================================================
# QUANTUM
# ============================================================================

def quantum_correlation(spec: CorrelationSpec, basis: FockBasis, hamiltonians: Hamiltonians, tau: float) -> complex:
    """Exact trace of the ordered product of Heisenberg-evolved lifts."""
    H = hamiltonians.H_full
    product = None
    for xi, t in spec.factors:
        op = heisenberg_evolve(lift_operator(xi, tau, basis), t, tau, H)
        product = op if product is None else product @ op
    if spec.weight is not None:
        product = product @ number_weight(spec.weight, tau, basis)
    return grand_canonical_expectation(product, H, tau)


@dataclass
class QuantumSetup:
    basis: FockBasis
    hamiltonians: Hamiltonians
    N_max: int


def quantum_setup(spectrum: Spectrum, potential: PotentialSpec, tau: float, N_max: Optional[int] = None, tail_tol: float = 1e-12) -> QuantumSetup:
    """Basis and Hamiltonians with N_max from the free number tail unless given."""
    if N_max is None:
        N_max = size_cutoff(spectrum, 0.0, tau, tail_tol)
    basis = build_basis(spectrum.M, N_max)
    return QuantumSetup(basis, build_hamiltonians(spectrum, potential, tau, basis), N_max)


# ============================================================================
# SWEEPS
# ============================================================================

@dataclass
class SweepReport:
    parameter: str
    schedule: List[float]
    values: List[complex]
    stderr: List[float]
    classical_ref: List[complex]
    classical_stderr: List[float]
    extra: Dict[str, List[float]] = field(default_factory=dict)

    def __post_init__(self):
        diffs = np.diff(self.schedule)
        if len(diffs) and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise GridError(f"{self.parameter} schedule must be strictly monotone")

    @property
    def gaps(self) -> np.ndarray:
        return np.abs(np.array(self.values) - np.array(self.classical_ref))

    @property
    def non_decreasing(self) -> List[bool]:
        """Flags entries whose gap did not shrink relative to the previous one."""
        gaps = self.gaps
        return [False] + [bool(b >= a) for a, b in zip(gaps, gaps[1:])]

    def to_frame(self) -> pd.DataFrame:
        values = np.array(self.values, dtype=complex)
        refs = np.array(self.classical_ref, dtype=complex)
        frame = pd.DataFrame({
            "parameter": self.schedule,
            "value_re": values.real,
            "value_im": values.imag,
            "stderr": self.stderr,
            "classical_ref_re": refs.real,
            "classical_ref_im": refs.imag,
            "classical_stderr": self.classical_stderr,
            "gap": self.gaps,
            "gap_not_decreasing": self.non_decreasing,
        })
        for name, column in self.extra.items():
            frame[name] = column
        return frame


def tau_sweep(
    spec: CorrelationSpec,
    taus: Sequence[float],
    classical_ref: Union[Estimate, complex],
    spectrum: Spectrum,
    N_max: Optional[Union[int, Callable[[float], int]]] = None,
    tail_tol: float = 1e-12,
) -> SweepReport:
    """Quantum correlation for each tau against one classical reference value."""
    ref = classical_ref if isinstance(classical_ref, Estimate) else Estimate(complex(classical_ref), 0.0)
    values, cutoffs = [], []
    for tau in taus:
        n_max = N_max(tau) if callable(N_max) else N_max
        setup = quantum_setup(spectrum, spec.potential, tau, n_max, tail_tol)
        values.append(quantum_correlation(spec, setup.basis, setup.hamiltonians, tau))
        cutoffs.append(setup.N_max)
    return SweepReport(
        parameter="tau",
        schedule=[float(t) for t in taus],
        values=values,
        stderr=[0.0] * len(values),
        classical_ref=[ref.value] * len(values),
        classical_stderr=[ref.stderr] * len(values),
        extra={"n_max": cutoffs},
    )


def local_limit_sweep(
    spec_local: CorrelationSpec,
    taus: Sequence[float],
    ensemble: Ensemble,
    params: FlowParams,
    spectrum: Spectrum,
    base: str = "triangle",
    exponent: float = 0.25,
    N_max: Optional[Union[int, Callable[[float], int]]] = None,
    tail_tol: float = 1e-12,
) -> SweepReport:
    """Mollified quantum correlations with eps_tau = tau^-exponent against the local classical one.

    Extra columns carry the two single-parameter gaps: quantum vs mollified
    classical at fixed eps, and mollified classical vs local classical.
    """
    grid = spec_local.potential.grid
    coupling = spec_local.potential.coupling
    local_ref = classical_correlation(spec_local, ensemble, params)
    values, eps_column, mollified_vals, mollified_err, gap_q, gap_c = [], [], [], [], [], []
    for tau in taus:
        eps = float(tau) ** (-exponent)
        potential = mollifier_kernel(min(eps, 1.0), base, grid, coupling)
        spec_eps = replace(spec_local, potential=potential)
        mollified = classical_correlation(spec_eps, reweight(ensemble, potential), params)
        n_max = N_max(tau) if callable(N_max) else N_max
        setup = quantum_setup(spectrum, potential, tau, n_max, tail_tol)
        value = quantum_correlation(spec_eps, setup.basis, setup.hamiltonians, tau)
        values.append(value)
        eps_column.append(min(eps, 1.0))
        mollified_vals.append(mollified.value)
        mollified_err.append(mollified.stderr)
        gap_q.append(abs(value - mollified.value))
        gap_c.append(abs(mollified.value - local_ref.value))
    return SweepReport(
        parameter="tau",
        schedule=[float(t) for t in taus],
        values=values,
        stderr=[0.0] * len(values),
        classical_ref=[local_ref.value] * len(values),
        classical_stderr=[local_ref.stderr] * len(values),
        extra={
            "epsilon": eps_column,
            "mollified_classical_re": list(np.real(mollified_vals)),
            "mollified_classical_im": list(np.imag(mollified_vals)),
            "mollified_stderr": mollified_err,
            "gap_quantum_vs_mollified": gap_q,
            "gap_mollified_vs_local": gap_c,
        },
    )


def tail_bound_check(
    spec: CorrelationSpec,
    cutoffs: Sequence[float],
    ensemble: Ensemble,
    params: FlowParams,
    tau: float,
    spectrum: Spectrum,
    N_max: Optional[int] = None,
    p_schedule: Optional[Sequence[int]] = None,
) -> pd.DataFrame:
    """|correlation x G(N)| on both sides for a smooth step G vanishing on [0, cutoff].

    With a p schedule every factor is replaced by the p-particle identity, so
    row p measures the tail of N^(p m); otherwise the configured factors are used.
    """
    setup = quantum_setup(spectrum, spec.potential, tau, N_max)
    sample_masses = masses(ensemble.samples)
    if p_schedule is None:
        variants = [(max(xi.p for xi, _ in spec.factors), spec)]
    else:
        variants = [
            (int(p), replace(spec, factors=tuple((identity_observable(int(p), spectrum.M), t) for _, t in spec.factors)))
            for p in p_schedule
        ]
    frames = []
    for p, variant in variants:
        samples_values = classical_values(replace(variant, weight=None), ensemble.samples, params)
        rows = []
        for cutoff in cutoffs:
            G = smooth_step(cutoff)
            classical = ratio_estimate(samples_values * G(sample_masses), ensemble.weights)
            quantum = quantum_correlation(replace(variant, weight=G), setup.basis, setup.hamiltonians, tau)
            rows.append({
                "p": p,
                "cutoff": float(cutoff),
                "classical": abs(classical.value),
                "classical_stderr": classical.stderr,
                "quantum": abs(quantum),
                "max_sampled_mass": float(sample_masses.max()),
            })
        table = pd.DataFrame(rows)
        for side in ("classical", "quantum"):
            values = table[side].to_numpy()
            table[f"{side}_ratio_to_previous"] = np.concatenate([[np.nan], np.divide(values[1:], values[:-1], out=np.full(len(values) - 1, np.nan), where=values[:-1] > 0)])
        frames.append(table)
    return pd.concat(frames, ignore_index=True)


def tail_slope(cutoffs: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares exponent s of value ~ cutoff^s over the positive values; nan below two points."""
    cutoffs, values = np.asarray(cutoffs, dtype=float), np.asarray(values, dtype=float)
    keep = (values > 0) & (cutoffs > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(cutoffs[keep]), np.log(values[keep]), 1)[0])


def density_matrix_sweep(
    taus: Sequence[float],
    ensemble: Ensemble,
    spectrum: Spectrum,
    potential: PotentialSpec,
    weight: Optional[NumberWeight] = None,
    N_max: Optional[Union[int, Callable[[float], int]]] = None,
) -> pd.DataFrame:
    """Trace-norm distance between quantum and classical one-body density matrices per tau."""
    ens = ensemble if np.array_equal(ensemble.potential.kernel_hat, potential.kernel_hat) else reweight(ensemble, potential)
    gamma_c = classical_density_matrix(ens, weight)
    rows = []
    for tau in taus:
        n_max = N_max(tau) if callable(N_max) else N_max
        setup = quantum_setup(spectrum, potential, tau, n_max)
        gamma_q = quantum_density_matrix(setup.hamiltonians.H_full, tau, weight)
        rows.append({
            "tau": float(tau),
            "trace_distance": float(np.sum(np.abs(np.linalg.eigvalsh(gamma_q - gamma_c)))),
            "quantum_trace": float(np.trace(gamma_q).real),
            "classical_trace": float(np.trace(gamma_c).real),
        })
    return pd.DataFrame(rows)
