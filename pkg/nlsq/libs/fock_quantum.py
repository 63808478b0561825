"""Truncated bosonic Fock space over the mode basis.

States are occupation vectors (n_{-K}..n_K) grouped into sectors of fixed
total particle number n <= N_max. Every operator is stored as dense blocks
keyed by (row sector, column sector); lifts, Hamiltonians and number weights
are sector-diagonal, creation/annihilation operators shift the sector by one.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb, factorial
from typing import Callable, Dict, Iterator, List, Mapping, NamedTuple, Optional, Tuple
import warnings

import numpy as np
from scipy.linalg import expm
from scipy.signal import lfilter

from nlsq.libs.domain_model import (
    MAX_FOCK_DIMENSION,
    DimensionError,
    GridError,
    NumericalWarning,
    Observable,
    PotentialSpec,
    Spectrum,
)
from nlsq.libs.observables import symmetrizer, tensor_digits, two_body_kernel


# ============================================================================
# BASIS
# ============================================================================

def _compositions(n: int, M: int) -> Iterator[Tuple[int, ...]]:
    """Occupation vectors of total n over M modes, ascending lexicographic order."""
    if M == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, M - 1):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class FockBasis:
    M: int
    N_max: int
    sectors: Tuple[np.ndarray, ...]
    index: Tuple[Dict[Tuple[int, ...], int], ...]

    @property
    def dims(self) -> List[int]:
        return [len(s) for s in self.sectors]

    @property
    def dimension(self) -> int:
        return sum(self.dims)

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    def position(self, occupation: Tuple[int, ...]) -> Tuple[int, int]:
        n = int(sum(occupation))
        return n, self.index[n][tuple(occupation)]


def fock_dimension(M: int, N_max: int) -> int:
    return sum(comb(n + M - 1, M - 1) for n in range(N_max + 1))


def build_basis(M: int, N_max: int) -> FockBasis:
    """Occupation basis of all sectors n = 0..N_max.

    Args:
        M: Number of modes.
        N_max: Total particle cutoff.

    Returns:
        FockBasis
    """
    if M < 1:
        raise GridError(f"need at least one mode, got M={M}")
    if N_max < 0:
        raise GridError(f"particle cutoff must be non-negative, got {N_max}")
    total = fock_dimension(M, N_max)
    if total > MAX_FOCK_DIMENSION:
        raise DimensionError(
            f"Fock space with M={M}, N_max={N_max} has {total} states (limit {MAX_FOCK_DIMENSION}); "
            "lower N_max or the mode count"
        )
    sectors, index = [], []
    for n in range(N_max + 1):
        states = np.array(list(_compositions(n, M)), dtype=int).reshape(-1, M)
        sectors.append(states)
        index.append({tuple(s): i for i, s in enumerate(states)})
    return FockBasis(M=M, N_max=N_max, sectors=tuple(sectors), index=tuple(index))


# ============================================================================
# OPERATORS
# ============================================================================

@dataclass(frozen=True, eq=False)
class FockOperator:
    """Block matrix over sectors; missing blocks are zero."""
    basis: FockBasis
    blocks: Mapping[Tuple[int, int], np.ndarray]
    hermitian: bool = False

    @property
    def sector_diagonal(self) -> bool:
        return all(m == n for m, n in self.blocks)

    def block(self, m: int, n: int) -> np.ndarray:
        dims = self.basis.dims
        found = self.blocks.get((m, n))
        return found if found is not None else np.zeros((dims[m], dims[n]), dtype=complex)

    def adjoint(self) -> "FockOperator":
        return FockOperator(self.basis, {(n, m): b.conj().T for (m, n), b in self.blocks.items()}, self.hermitian)

    def _combine(self, other: "FockOperator", sign: float) -> "FockOperator":
        _check_same_basis(self, other)
        blocks = {key: b.copy() for key, b in self.blocks.items()}
        for key, b in other.blocks.items():
            blocks[key] = blocks[key] + sign * b if key in blocks else sign * b
        return FockOperator(self.basis, blocks, self.hermitian and other.hermitian)

    def __add__(self, other: "FockOperator") -> "FockOperator":
        return self._combine(other, 1.0)

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        return self._combine(other, -1.0)

    def __mul__(self, scalar: complex) -> "FockOperator":
        hermitian = self.hermitian and np.isreal(scalar)
        return FockOperator(self.basis, {k: scalar * b for k, b in self.blocks.items()}, bool(hermitian))

    __rmul__ = __mul__

    def __neg__(self) -> "FockOperator":
        return self * -1.0

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        _check_same_basis(self, other)
        right_by_row: Dict[int, List[Tuple[int, np.ndarray]]] = {}
        for (k, n), b in other.blocks.items():
            right_by_row.setdefault(k, []).append((n, b))
        blocks: Dict[Tuple[int, int], np.ndarray] = {}
        for (m, k), a in self.blocks.items():
            for n, b in right_by_row.get(k, []):
                product = a @ b
                blocks[(m, n)] = blocks[(m, n)] + product if (m, n) in blocks else product
        return FockOperator(self.basis, blocks)

    def commutator(self, other: "FockOperator") -> "FockOperator":
        return self @ other - other @ self

    def to_dense(self) -> np.ndarray:
        offsets = self.basis.offsets()
        dense = np.zeros((self.basis.dimension,) * 2, dtype=complex)
        for (m, n), b in self.blocks.items():
            dense[offsets[m]:offsets[m + 1], offsets[n]:offsets[n + 1]] = b
        return dense

    def restrict(self, n_max: int) -> "FockOperator":
        return FockOperator(self.basis, {(m, n): b for (m, n), b in self.blocks.items() if m <= n_max and n <= n_max}, self.hermitian)

    @cached_property
    def eigensystem(self) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
        """Per-sector (energies, eigenvectors) of a Hermitian sector-diagonal operator."""
        if not self.sector_diagonal:
            raise DimensionError("eigensystem needs a sector-diagonal operator")
        system = {}
        for n in range(self.basis.N_max + 1):
            b = self.block(n, n)
            system[n] = np.linalg.eigh(0.5 * (b + b.conj().T))
        return system


def _check_same_basis(a: FockOperator, b: FockOperator) -> None:
    if a.basis is not b.basis and (a.basis.M != b.basis.M or a.basis.N_max != b.basis.N_max):
        raise DimensionError("operators live on different Fock bases")


def diagonal_operator(values_by_sector: Callable[[int, np.ndarray], np.ndarray], basis: FockBasis, hermitian: bool = True) -> FockOperator:
    blocks = {n: np.diag(np.asarray(values_by_sector(n, basis.sectors[n]), dtype=complex)) for n in range(basis.N_max + 1)}
    return FockOperator(basis, {(n, n): b for n, b in blocks.items()}, hermitian)


def identity_operator(basis: FockBasis) -> FockOperator:
    return diagonal_operator(lambda n, states: np.ones(len(states)), basis)


def restrict_norm(A: FockOperator, n_max: Optional[int] = None) -> float:
    """Operator norm of A compressed to the sectors n <= n_max."""
    n_max = A.basis.N_max if n_max is None else min(n_max, A.basis.N_max)
    if A.sector_diagonal:
        norms = [np.linalg.norm(A.block(n, n), ord=2) for n in range(n_max + 1) if A.basis.dims[n] and (n, n) in A.blocks]
        return float(max(norms, default=0.0))
    dense = A.restrict(n_max).to_dense()
    return float(np.linalg.norm(dense, ord=2)) if dense.size else 0.0


def dump_operator(A: FockOperator) -> List[dict]:
    """Non-zero entries as rows (sector, row occupation, col occupation, re, im)."""
    rows = []
    for (m, n), b in sorted(A.blocks.items()):
        for i, j in zip(*np.nonzero(b)):
            rows.append({
                "row_sector": m,
                "col_sector": n,
                "row_occupation": " ".join(map(str, A.basis.sectors[m][i])),
                "col_occupation": " ".join(map(str, A.basis.sectors[n][j])),
                "re": float(b[i, j].real),
                "im": float(b[i, j].imag),
            })
    return rows


# ============================================================================
# CREATION / ANNIHILATION
# ============================================================================

def creation(f: np.ndarray, basis: FockBasis) -> FockOperator:
    """b*(f) = sum_k f_k b*_k; states leaving the cutoff are dropped."""
    f = np.asarray(f, dtype=complex)
    if f.shape != (basis.M,):
        raise DimensionError(f"one-body vector needs {basis.M} entries, got {f.shape}")
    blocks = {}
    support = np.nonzero(f)[0]
    for n in range(basis.N_max):
        block = np.zeros((basis.dims[n + 1], basis.dims[n]), dtype=complex)
        target_index = basis.index[n + 1]
        for col, state in enumerate(basis.sectors[n]):
            for k in support:
                raised = list(state)
                raised[k] += 1
                block[target_index[tuple(raised)], col] += np.sqrt(state[k] + 1) * f[k]
        blocks[(n + 1, n)] = block
    return FockOperator(basis, blocks)


def annihilation(f: np.ndarray, basis: FockBasis) -> FockOperator:
    """b(f) = sum_k conj(f_k) b_k, the adjoint of b*(f)."""
    return creation(f, basis).adjoint()


# ============================================================================
# LIFTS
# ============================================================================

@lru_cache(maxsize=None)
def _ordering_matrix(M: int, p: int) -> np.ndarray:
    """R[alpha, idx] = 1 when tensor index idx is an ordering of occupation alpha."""
    states = list(_compositions(p, M))
    lookup = {s: i for i, s in enumerate(states)}
    digits = tensor_digits(M, p)
    R = np.zeros((len(states), M**p))
    for idx, row in enumerate(digits):
        R[lookup[tuple(np.bincount(row, minlength=M))], idx] = 1.0
    R.setflags(write=False)
    return R


def _falling(n: np.ndarray, alpha: np.ndarray) -> float:
    """prod_k n_k (n_k - 1) ... (n_k - alpha_k + 1)."""
    out = 1.0
    for nk, ak in zip(n, alpha):
        for j in range(ak):
            out *= nk - j
    return out


def lift_operator(xi: Observable, tau: float, basis: FockBasis) -> FockOperator:
    """Theta_tau(xi) = sum xi_{k,l} phi*_tau(u_k1)..phi*_tau(u_kp) phi_tau(u_l1)..phi_tau(u_lp).

    In the occupation basis the normal-ordered product removes the multiset
    alpha and inserts beta:
        <n - alpha + beta| Theta |n> = tau^-p S(beta, alpha)
            sqrt(n! / (n - alpha)!) sqrt((n - alpha + beta)! / (n - alpha)!)
    with S = R xi R^T summing the kernel over orderings. On sector n this equals
    (p! / tau^p) C(n, p) P_+ (xi (x) 1) P_+.
    """
    if tau <= 0:
        raise GridError(f"tau must be positive, got {tau}")
    if xi.M != basis.M:
        raise DimensionError(f"observable has {xi.M} modes, basis has {basis.M}")
    p = xi.p
    if p > basis.N_max:
        warnings.warn(f"lift of a {p}-particle observable vanishes below N_max={basis.N_max}", NumericalWarning)
        return FockOperator(basis, {})
    R = _ordering_matrix(basis.M, p)
    S = R @ xi.kernel @ R.T
    small = list(_compositions(p, basis.M))
    small_arr = np.array(small, dtype=int).reshape(-1, basis.M)
    scale = tau ** (-p)
    blocks = {}
    for n in range(basis.N_max + 1):
        dim = basis.dims[n]
        block = np.zeros((dim, dim), dtype=complex)
        if n >= p:
            index = basis.index[n]
            for col, state in enumerate(basis.sectors[n]):
                for a, alpha in enumerate(small_arr):
                    if np.any(alpha > state) or not np.any(S[:, a]):
                        continue
                    middle = state - alpha
                    amp_in = np.sqrt(_falling(state, alpha))
                    for b, beta in enumerate(small_arr):
                        if S[b, a] == 0:
                            continue
                        target = middle + beta
                        amp_out = np.sqrt(_falling(target, beta))
                        block[index[tuple(target)], col] += scale * S[b, a] * amp_in * amp_out
        blocks[(n, n)] = block
    hermitian = bool(np.allclose(xi.kernel, xi.kernel.conj().T, atol=1e-14))
    return FockOperator(basis, blocks, hermitian)


@lru_cache(maxsize=64)
def _symmetric_embedding(M: int, n: int) -> np.ndarray:
    """Columns are the normalized symmetric tensors of the sector-n occupation states."""
    R = _ordering_matrix(M, n)
    counts = R.sum(axis=1)
    E = (R / np.sqrt(counts)[:, None]).T
    E.setflags(write=False)
    return E


def sector_block(xi: Observable, n: int, tau: float) -> np.ndarray:
    """(p! / tau^p) C(n, p) P_+ (xi (x) 1^(n-p)) P_+ written in the occupation basis of sector n."""
    p, M = xi.p, xi.M
    if n < p:
        dim = comb(n + M - 1, M - 1)
        return np.zeros((dim, dim), dtype=complex)
    E = _symmetric_embedding(M, n)
    extended = np.kron(xi.kernel, np.eye(M ** (n - p)))
    return factorial(p) * comb(n, p) * tau ** (-p) * (E.conj().T @ extended @ E)


def number_weight(f: Callable[[np.ndarray], np.ndarray], tau: float, basis: FockBasis) -> FockOperator:
    """f(N_tau): value f(n / tau) on sector n."""
    values = np.asarray(f(np.arange(basis.N_max + 1) / tau), dtype=complex) * np.ones(basis.N_max + 1)
    return diagonal_operator(lambda n, states: np.full(len(states), values[n]), basis, hermitian=bool(np.all(np.isreal(values))))


def number_operator(tau: float, basis: FockBasis) -> FockOperator:
    return number_weight(lambda x: x, tau, basis)


# ============================================================================
# HAMILTONIANS & STATES
# ============================================================================

class Hamiltonians(NamedTuple):
    H_free: FockOperator
    W_op: FockOperator
    H_full: FockOperator


def build_hamiltonians(spectrum: Spectrum, potential: PotentialSpec, tau: float, basis: FockBasis) -> Hamiltonians:
    """H_tau0 = (1/tau) dGamma(h), W_tau = 1/2 Theta_tau(W), H_tau = H_tau0 + W_tau."""
    if spectrum.M != basis.M or potential.grid.M != basis.M:
        raise DimensionError("spectrum, potential and basis must share the mode set")
    lambdas = spectrum.lambdas
    H_free = diagonal_operator(lambda n, states: states @ lambdas / tau, basis)
    w_blocks = {(n, n): np.zeros((d, d), dtype=complex) for n, d in enumerate(basis.dims)}
    if not potential.is_free:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NumericalWarning)
            lifted = lift_operator(two_body_kernel(potential), tau, basis)
        for key, b in lifted.blocks.items():
            w_blocks[key] = 0.25 * (b + b.conj().T)
    W_op = FockOperator(basis, w_blocks, hermitian=True)
    H_full = FockOperator(basis, {(n, n): H_free.block(n, n) + W_op.block(n, n) for n in range(basis.N_max + 1)}, hermitian=True)
    return Hamiltonians(H_free, W_op, H_full)


def _sector_weights(H_full: FockOperator, tau: float, nu: float) -> Tuple[Dict[int, np.ndarray], float]:
    """exp(-(E + nu n / tau) + shift) per sector, with the shift making the largest weight 1."""
    system = H_full.eigensystem
    exponents = {n: -(energies + nu * n / tau) for n, (energies, _) in system.items()}
    shift = -max(float(e.max()) for e in exponents.values() if e.size)
    return {n: np.exp(e + shift) for n, e in exponents.items()}, shift


def grand_canonical_expectation(
    A: FockOperator,
    H_full: FockOperator,
    tau: float,
    nu: float = 0.0,
    z: Optional[complex] = None,
    hamiltonians: Optional[Hamiltonians] = None,
) -> complex:
    """tr(A exp(-H - nu N_tau)) / tr(exp(-H - nu N_tau)).

    With z given, the deformed state tr(A exp(-H_free - z W - nu N_tau)) / tr(exp(-H_free - nu N_tau))
    is returned instead (hamiltonians must then be supplied); z = 0 gives the free state.
    """
    if not A.sector_diagonal and not any(m == n for m, n in A.blocks):
        return 0.0 + 0.0j
    if z is not None:
        return _deformed_expectation(A, tau, nu, complex(z), hamiltonians)
    if not H_full.hermitian:
        raise DimensionError("grand canonical state needs a Hermitian Hamiltonian")
    weights, _ = _sector_weights(H_full, tau, nu)
    numerator, denominator = 0.0 + 0.0j, 0.0
    for n, (energies, vectors) in H_full.eigensystem.items():
        if not energies.size:
            continue
        denominator += float(weights[n].sum())
        if (n, n) in A.blocks:
            rotated = vectors.conj().T @ A.blocks[(n, n)] @ vectors
            numerator += np.sum(weights[n] * np.diag(rotated))
    return complex(numerator / denominator)


def _deformed_expectation(A: FockOperator, tau: float, nu: float, z: complex, hamiltonians: Optional[Hamiltonians]) -> complex:
    if hamiltonians is None:
        raise GridError("deformed states need the free and interaction Hamiltonians")
    if z.real < 0:
        raise GridError(f"deformation needs Re z >= 0, got {z}")
    basis = A.basis
    free_diag = {n: np.real(np.diag(hamiltonians.H_free.block(n, n))) + nu * n / tau for n in range(basis.N_max + 1)}
    shift = min(float(d.min()) for d in free_diag.values() if d.size)
    numerator, denominator = 0.0 + 0.0j, 0.0
    for n in range(basis.N_max + 1):
        if not basis.dims[n]:
            continue
        denominator += float(np.sum(np.exp(-(free_diag[n] - shift))))
        if (n, n) not in A.blocks:
            continue
        generator = np.diag(free_diag[n] - shift) + z * hamiltonians.W_op.block(n, n)
        numerator += np.trace(A.blocks[(n, n)] @ expm(-generator))
    return complex(numerator / denominator)


def heisenberg_evolve(A: FockOperator, t: float, tau: float, H_full: FockOperator) -> FockOperator:
    """exp(i t tau H) A exp(-i t tau H), sector by sector."""
    if t == 0:
        return A
    system = H_full.eigensystem
    unitaries = {n: (V * np.exp(1j * t * tau * E)) @ V.conj().T for n, (E, V) in system.items()}
    blocks = {(m, n): unitaries[m] @ b @ unitaries[n].conj().T for (m, n), b in A.blocks.items()}
    return FockOperator(A.basis, blocks, A.hermitian)


def free_heisenberg_evolve(A: FockOperator, t: float, tau: float, hamiltonians: Hamiltonians) -> FockOperator:
    return heisenberg_evolve(A, t, tau, hamiltonians.H_free)


# ============================================================================
# KERNEL ALGEBRA
# ============================================================================

def _multi_energies(spectrum: Spectrum, p: int) -> np.ndarray:
    digits = tensor_digits(spectrum.M, p)
    return spectrum.lambdas[digits].sum(axis=1) if p else np.zeros(1)


def free_evolve_kernel(xi: Observable, t: float, spectrum: Spectrum) -> Observable:
    """xi_t = exp(i t sum h_j) xi exp(-i t sum h_j)."""
    if xi.M != spectrum.M:
        raise DimensionError(f"observable has {xi.M} modes, spectrum has {spectrum.M}")
    if t == 0:
        return xi
    energies = _multi_energies(spectrum, xi.p)
    phases = np.exp(1j * t * energies)
    return Observable(xi.p, xi.M, phases[:, None] * xi.kernel * phases.conj()[None, :], label=xi.label)


def star_product(xi: Observable, eta: Observable, r: int) -> Observable:
    """xi ._r eta = P_+ (xi (x) 1^(q-r)) (1^(p-r) (x) eta) P_+ on p + q - r particles."""
    p, q, M = xi.p, eta.p, xi.M
    if eta.M != M:
        raise DimensionError("star product of observables on different mode sets")
    if r < 0 or r > min(p, q):
        raise GridError(f"contraction r={r} must lie in 0..min(p, q)={min(p, q)}")
    left = np.kron(xi.kernel, np.eye(M ** (q - r)))
    right = np.kron(np.eye(M ** (p - r)), eta.kernel)
    proj = symmetrizer(M, p + q - r)
    return Observable(p + q - r, M, proj @ left @ right @ proj)


def bracket(xi: Observable, eta: Observable, r: int) -> Observable:
    """[xi, eta]_r = xi ._r eta - eta ._r xi."""
    return star_product(xi, eta, r) - star_product(eta, xi, r)


# ============================================================================
# GREEN FUNCTIONS, PARTITION RATIOS, TRUNCATION
# ============================================================================

def quantum_green_function(spectrum: Spectrum, nu: float, tau: float) -> np.ndarray:
    """G(k) = 1 / (tau (exp((lambda_k + nu) / tau) - 1))."""
    if tau <= 0 or nu < 0:
        raise GridError(f"need tau > 0 and nu >= 0, got tau={tau}, nu={nu}")
    return 1.0 / (tau * np.expm1((spectrum.lambdas + nu) / tau))


def partition_ratio(spectrum: Spectrum, nu: float, tau: float) -> float:
    """tr exp(-H_tau0 - nu N_tau) / tr exp(-H_tau0) = prod (1 - e^{-lambda/tau}) / (1 - e^{-(lambda+nu)/tau})."""
    if tau <= 0 or nu < 0:
        raise GridError(f"need tau > 0 and nu >= 0, got tau={tau}, nu={nu}")
    lam = spectrum.lambdas
    return float(np.prod(np.expm1(-lam / tau) / np.expm1(-(lam + nu) / tau)))


def partition_ratio_limit(spectrum: Spectrum, nu: float) -> float:
    return float(np.prod(spectrum.lambdas / (spectrum.lambdas + nu)))


def partition_ratio_trace(spectrum: Spectrum, nu: float, tau: float, basis: FockBasis) -> float:
    """The same ratio from traces over the truncated Fock space."""
    lam = spectrum.lambdas
    log_num, log_den = [], []
    for n, states in enumerate(basis.sectors):
        energies = states @ lam / tau
        log_den.append(-energies)
        log_num.append(-energies - nu * n / tau)
    den = np.concatenate(log_den)
    num = np.concatenate(log_num)
    shift = den.max()
    return float(np.sum(np.exp(num - shift)) / np.sum(np.exp(den - shift)))


def _number_distribution(spectrum: Spectrum, nu: float, tau: float, length: int) -> np.ndarray:
    """Coefficients of prod_k 1 / (1 - q_k x) up to x^(length-1), q_k = exp(-(lambda_k + nu) / tau)."""
    q = np.exp(-(spectrum.lambdas + nu) / tau)
    poly = np.zeros(length)
    poly[0] = 1.0
    for qk in q:
        # multiplying by a geometric series is the recursion a_n += q a_{n-1}
        poly = lfilter([1.0], [1.0, -qk], poly)
    return poly


def _tail_masses(spectrum: Spectrum, nu: float, tau: float, N_max: int) -> np.ndarray:
    """P(N > n) for n = 0..N_max under the free grand canonical state."""
    q_max = float(np.exp(-(spectrum.lambdas.min() + nu) / tau))
    log_q = -np.log(q_max)
    extra = int(np.ceil((60.0 + spectrum.M * np.log(N_max + spectrum.M + 1.0)) / log_q)) + spectrum.M
    length = N_max + 1 + extra
    poly = _number_distribution(spectrum, nu, tau, length)
    Z = float(np.prod(1.0 / -np.expm1(-(spectrum.lambdas + nu) / tau)))
    tails = np.cumsum(poly[::-1])[::-1]
    return tails[1:N_max + 2] / Z


def number_tail(spectrum: Spectrum, nu: float, tau: float, N_max: int) -> float:
    """Free-state probability of more than N_max particles, i.e. 1 - Z_trunc / Z."""
    return float(_tail_masses(spectrum, nu, tau, N_max)[N_max])


def size_cutoff(spectrum: Spectrum, nu: float, tau: float, tol: float = 1e-12, limit: int = 100_000) -> int:
    """Smallest N_max whose free truncation tail is below tol."""
    N = max(8, int(np.ceil(tau)))
    while N <= limit:
        tails = _tail_masses(spectrum, nu, tau, N)
        below = np.nonzero(tails < tol)[0]
        if below.size:
            return int(below[0])
        N *= 2
    raise DimensionError(f"no cutoff below {limit} reaches tail {tol:g}")


def quantum_density_matrix(H_full: FockOperator, tau: float, f: Optional[Callable[[np.ndarray], np.ndarray]] = None, nu: float = 0.0) -> np.ndarray:
    """gamma(k, l) = rho_tau(phi*_tau(u_l) phi_tau(u_k) f(N_tau))."""
    basis = H_full.basis
    weight = number_weight(f, tau, basis) if f is not None else None
    gamma = np.zeros((basis.M, basis.M), dtype=complex)
    for k in range(basis.M):
        for l in range(basis.M):
            e_k, e_l = np.eye(basis.M)[k], np.eye(basis.M)[l]
            kernel = np.outer(e_l, e_k).astype(complex)
            op = lift_operator(Observable(1, basis.M, kernel), tau, basis)
            if weight is not None:
                op = op @ weight
            gamma[k, l] = grand_canonical_expectation(op, H_full, tau, nu=nu)
    return 0.5 * (gamma + gamma.conj().T)
