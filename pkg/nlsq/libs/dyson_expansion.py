"""Iterated-commutator expansion of time-evolved observables.

    e^(0) = xi_t
    e^(j) = i^j p (p+1) ... (p+j-1) int_{t > s_1 > ... > s_j > 0} [W_{s_j}, [ ... [W_{s_1}, xi_t]_1 ... ]_1]_1

term j acts on p + j particles. The same coefficients approximate the quantum
evolution Psi_tau^t Theta_tau(xi) (up to O(1/tau)) and the classical one
Theta(xi) o S_t on {N <= cutoff}. Simplex integrals use nested Gauss-Legendre
rules on [0, s_previous].
"""
import warnings
from dataclasses import dataclass
from math import comb
from math import e as EULER
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import roots_legendre

from nlsq.libs.classical_gibbs import masses
from nlsq.libs.domain_model import (
    DEFAULT_QUADRATURE_ORDER,
    ConvergenceRadiusError,
    DimensionError,
    GridError,
    NumericalWarning,
    Observable,
    PotentialSpec,
    Spectrum,
)
from nlsq.libs.fock_quantum import (
    FockBasis,
    FockOperator,
    Hamiltonians,
    bracket,
    free_evolve_kernel,
    heisenberg_evolve,
    lift_operator,
    restrict_norm,
)
from nlsq.libs.nls_flow import FlowParams, evolve_batch
from nlsq.libs.observables import one_body_hamiltonian, operator_norm, theta_values


@dataclass(frozen=True, eq=False)
class DysonSeries:
    xi: Observable
    t: float
    terms: Tuple[Observable, ...]
    quadrature_order: int
    cutoff: float
    w_norm: float
    radius: float

    @property
    def L(self) -> int:
        return len(self.terms) - 1

    @property
    def ratio_bound(self) -> float:
        """2 e cutoff ||W|| |t|, the geometric ratio of the term-norm estimate."""
        return 2.0 * EULER * self.cutoff * self.w_norm * abs(self.t)

    def norm_bound(self, j: int) -> float:
        p = self.xi.p
        return EULER**p * self.cutoff**p * self.ratio_bound**j * operator_norm(self.xi)

    def classical_partial_sums(self, coeffs: np.ndarray) -> np.ndarray:
        """Partial sums sum_{j <= L} Theta(e^(j))(phi), shape (L + 1, S)."""
        values = np.array([theta_values(term, coeffs) for term in self.terms])
        return np.cumsum(values, axis=0)


def convergence_radius(cutoff: float, w_norm: float, safety: float = 0.5) -> float:
    """T_0 = safety / (2 e cutoff ||W||); infinite when the interaction vanishes."""
    if cutoff <= 0:
        raise GridError(f"number cutoff must be positive, got {cutoff}")
    if w_norm == 0:
        return float("inf")
    return safety / (2.0 * EULER * cutoff * w_norm)


def dyson_step(xi: Observable, W: Observable, s: float, spectrum: Spectrum) -> Observable:
    """[W_s, xi]_1 with W_s the free-evolved interaction kernel."""
    return bracket(free_evolve_kernel(W, s, spectrum), xi, 1)


def dyson_coefficients(
    xi: Observable,
    t: float,
    L: int,
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER,
    *,
    W: Observable,
    spectrum: Spectrum,
    cutoff: float,
) -> DysonSeries:
    """Coefficients e^(0)..e^(L) for time t.

    Args:
        xi: Base observable.
        t: Time, |t| must stay below the convergence radius.
        L: Highest order.
        quadrature_order: Gauss-Legendre nodes per simplex coordinate.
        W: Two-particle interaction kernel.
        spectrum: One-body spectrum driving the free evolution.
        cutoff: Bound on the rescaled particle number the series is used on.

    Returns:
        DysonSeries
    """
    if L < 0:
        raise GridError(f"order must be non-negative, got {L}")
    if W.p != 2 or W.M != xi.M:
        raise DimensionError("interaction must be a two-particle kernel on the observable's modes")
    w_norm = operator_norm(W)
    radius = convergence_radius(cutoff, w_norm)
    if abs(t) >= radius:
        raise ConvergenceRadiusError(
            f"|t|={abs(t):g} is outside the convergence radius {radius:g}; split the time interval "
            "or evolve directly"
        )
    xi_t = free_evolve_kernel(xi, t, spectrum)
    nodes, weights = roots_legendre(quadrature_order)
    sums: List[Optional[np.ndarray]] = [None] * (L + 1)

    def integrate(op: Observable, level: int, upper: float, weight: float) -> None:
        for x, wx in zip(nodes, weights):
            s = 0.5 * upper * (x + 1.0)
            ws = weight * 0.5 * upper * wx
            nested = dyson_step(op, W, s, spectrum)
            sums[level] = ws * nested.kernel if sums[level] is None else sums[level] + ws * nested.kernel
            if level < L:
                integrate(nested, level + 1, s, ws)

    if L >= 1 and w_norm > 0:
        integrate(xi_t, 1, t, 1.0)
    terms = [xi_t]
    prefactor = 1.0 + 0.0j
    for j in range(1, L + 1):
        prefactor *= 1j * (xi.p + j - 1)
        p_j = xi.p + j
        kernel = sums[j] if sums[j] is not None else np.zeros((xi.M**p_j,) * 2, dtype=complex)
        terms.append(Observable(p_j, xi.M, prefactor * kernel, label=f"e^({j})"))
    return DysonSeries(xi=xi, t=float(t), terms=tuple(terms), quadrature_order=quadrature_order, cutoff=float(cutoff), w_norm=w_norm, radius=radius)


# ============================================================================
# QUANTUM CHECKS
# ============================================================================

def _lift_terms(series: DysonSeries, tau: float, basis: FockBasis) -> List[FockOperator]:
    return [lift_operator(term, tau, basis) for term in series.terms]


def term_norms(series: DysonSeries, tau: float, basis: FockBasis, n_restrict: Optional[int] = None) -> np.ndarray:
    """||Theta_tau(e^(j))|| on the sectors n <= n_restrict, per order."""
    return np.array([restrict_norm(op, n_restrict) for op in _lift_terms(series, tau, basis)])


def quantum_remainder(series: DysonSeries, tau: float, hamiltonians: Hamiltonians, basis: FockBasis, n_restrict: Optional[int] = None) -> pd.DataFrame:
    """Per order L: ||Psi_tau^t Theta_tau(xi) - sum_{j <= L} Theta_tau(e^(j))|| on n <= n_restrict."""
    exact = heisenberg_evolve(lift_operator(series.xi, tau, basis), series.t, tau, hamiltonians.H_full)
    lifts = _lift_terms(series, tau, basis)
    rows, partial = [], None
    for j, op in enumerate(lifts):
        partial = op if partial is None else partial + op
        rows.append({
            "order": j,
            "remainder": restrict_norm(exact - partial, n_restrict),
            "term_norm": restrict_norm(op, n_restrict),
            "term_bound": series.norm_bound(j),
        })
    return pd.DataFrame(rows)


def fitted_ratio(norms: np.ndarray) -> float:
    """Geometric-mean ratio of successive non-vanishing term norms (orders >= 1)."""
    norms = np.asarray(norms, dtype=float)
    tail = norms[1:]
    tail = tail[tail > 0]
    if len(tail) < 2:
        return 0.0
    return float(np.exp(np.mean(np.diff(np.log(tail)))))


@dataclass
class DysonQuantumReport:
    table: pd.DataFrame
    ratio: float
    ratio_bound: float


def dyson_quantum_check(series: DysonSeries, tau: float, hamiltonians: Hamiltonians, basis: FockBasis) -> DysonQuantumReport:
    n_restrict = min(int(np.floor(series.cutoff * tau)), basis.N_max)
    table = quantum_remainder(series, tau, hamiltonians, basis, n_restrict)
    return DysonQuantumReport(table=table, ratio=fitted_ratio(table["term_norm"].to_numpy()), ratio_bound=series.ratio_bound)


def first_order_operator_error(xi: Observable, W: Observable, tau: float, basis: FockBasis) -> float:
    """Entrywise gap between i tau [W_tau, Theta_tau(xi)] and its kernel form.

    With W_tau = 1/2 Theta_tau(W) the commutator equals the lift of
    i p [W, xi]_1 + (i / tau) C(p, 2) [W, xi]_2; the second bracket only exists
    for p >= 2. The gap is relative to max(1, largest entry).
    """
    if W.p != 2 or W.M != xi.M:
        raise DimensionError("interaction must be a two-particle kernel on the observable's modes")
    p = xi.p
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalWarning)
        lhs = lift_operator(W, tau, basis).commutator(lift_operator(xi, tau, basis)) * (0.5j * tau)
        rhs = lift_operator(bracket(W, xi, 1), tau, basis) * (1j * p)
        if p >= 2:
            rhs = rhs + lift_operator(bracket(W, xi, 2), tau, basis) * (1j * comb(p, 2) / tau)
    dense = lhs.to_dense()
    scale = max(1.0, float(np.max(np.abs(dense)))) if dense.size else 1.0
    return float(np.max(np.abs(dense - rhs.to_dense()), initial=0.0)) / scale


def remainder_scaling(taus: Sequence[float], remainders: Sequence[float]) -> pd.DataFrame:
    """Full-order remainders per tau and their growth each time tau halves.

    Inside the convergence radius the truncation error is negligible next to
    the 1/tau terms the classical coefficients leave out, so the remainder
    doubles when tau halves and tau * remainder levels off.
    """
    frame = pd.DataFrame({"tau": np.asarray(taus, dtype=float), "remainder": np.asarray(remainders, dtype=float)})
    frame = frame.sort_values("tau", ignore_index=True)
    frame["scaled"] = frame["tau"] * frame["remainder"]
    tau, remainder = frame["tau"].to_numpy(), frame["remainder"].to_numpy()
    growth = np.full(len(frame), np.nan)
    for i in range(1, len(frame)):
        if np.isclose(tau[i], 2.0 * tau[i - 1]) and remainder[i] > 0:
            growth[i] = remainder[i - 1] / remainder[i]
    frame["halving_growth"] = growth
    return frame


# ============================================================================
# CLASSICAL CHECKS
# ============================================================================

@dataclass
class DysonClassicalReport:
    max_error: float
    mean_error: float
    samples_used: int
    errors_by_order: np.ndarray


def dyson_classical_check(series: DysonSeries, samples: np.ndarray, potential: PotentialSpec, params: FlowParams) -> DysonClassicalReport:
    """|Theta(xi)(S_t phi) - sum_j Theta(e^(j))(phi)| over samples with mass <= cutoff."""
    samples = np.asarray(samples)
    kept = samples[masses(samples) <= series.cutoff]
    if not len(kept):
        return DysonClassicalReport(0.0, 0.0, 0, np.zeros(series.L + 1))
    exact = theta_values(series.xi, evolve_batch(kept, series.t, potential, params))
    errors = np.abs(series.classical_partial_sums(kept) - exact[None, :])
    return DysonClassicalReport(
        max_error=float(errors[-1].max()),
        mean_error=float(errors[-1].mean()),
        samples_used=len(kept),
        errors_by_order=errors.max(axis=1),
    )


class ClassicalGenerator(NamedTuple):
    """d/dt Theta(xi) o S_t at t = 0 as two kernels on different particle numbers.

    free acts on p particles, interaction on p + 1; only their Theta values add.
    """
    free: Observable
    interaction: Observable

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        return theta_values(self.free, coeffs) + theta_values(self.interaction, coeffs)


def classical_generator(xi: Observable, W: Observable, spectrum: Spectrum) -> ClassicalGenerator:
    """i p ([h, xi]_1 + [W, xi]_1), kept split by particle number."""
    h = one_body_hamiltonian(spectrum)
    scale = 1j * xi.p
    return ClassicalGenerator(free=bracket(h, xi, 1) * scale, interaction=bracket(W, xi, 1) * scale)


def first_order_check(xi: Observable, W: Observable, spectrum: Spectrum, samples: np.ndarray, potential: PotentialSpec, step: float = 1e-5) -> float:
    """Relative error of the central difference of Theta(xi) o S_t at t = 0 against the generator."""
    params = FlowParams(dt=step)
    forward = theta_values(xi, evolve_batch(samples, step, potential, params))
    backward = theta_values(xi, evolve_batch(samples, -step, potential, params))
    finite_difference = (forward - backward) / (2.0 * step)
    exact = classical_generator(xi, W, spectrum).values(samples)
    scale = float(np.max(np.abs(exact)))
    if scale == 0:
        return float(np.max(np.abs(finite_difference)))
    return float(np.max(np.abs(finite_difference - exact)) / scale)
