"""Kernel algebra for p-particle observables.

Constructors for the observables used by experiments, the bosonic
symmetrizer, tensor contractions that evaluate Theta(xi) on fields, operator
norms and the number-weight functions F and G.
"""
from functools import lru_cache
from itertools import permutations
from math import factorial
from typing import Callable, Optional

import numpy as np

from nlsq.libs.domain_model import DimensionError, Observable, PotentialSpec, Spectrum


# ============================================================================
# INDEX HELPERS
# ============================================================================

@lru_cache(maxsize=None)
def tensor_digits(M: int, p: int) -> np.ndarray:
    """Mode digits (M^p, p) of each flattened multi-index, most significant first."""
    if p == 0:
        return np.zeros((1, 0), dtype=int)
    grids = np.indices((M,) * p).reshape(p, -1).T
    grids.setflags(write=False)
    return grids


@lru_cache(maxsize=None)
def symmetrizer(M: int, p: int) -> np.ndarray:
    """Orthogonal projection P_+ onto symmetric tensors of p particles."""
    digits = tensor_digits(M, p)
    weights = M ** np.arange(p - 1, -1, -1) if p else np.zeros(0, dtype=int)
    dim = M**p
    proj = np.zeros((dim, dim))
    rows = np.arange(dim)
    for perm in permutations(range(p)):
        cols = digits[:, list(perm)] @ weights if p else np.zeros(1, dtype=int)
        np.add.at(proj, (rows, cols), 1.0)
    proj /= factorial(p)
    proj.setflags(write=False)
    return proj


def symmetrize(kernel: np.ndarray, M: int, p: int) -> np.ndarray:
    proj = symmetrizer(M, p)
    return proj @ kernel @ proj


def tensor_power(coeffs: np.ndarray, p: int) -> np.ndarray:
    """phi^{(x)p} for a batch of coefficient vectors (..., M) -> (..., M^p)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    out = np.ones(coeffs.shape[:-1] + (1,), dtype=complex)
    for _ in range(p):
        out = (out[..., :, None] * coeffs[..., None, :]).reshape(coeffs.shape[:-1] + (-1,))
    return out


def theta_values(xi: Observable, coeffs: np.ndarray) -> np.ndarray:
    """Theta(xi)(phi) = <phi^{(x)p}, xi phi^{(x)p}> for every row of coeffs."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-1] != xi.M:
        raise DimensionError(f"field has {coeffs.shape[-1]} modes, observable expects {xi.M}")
    v = tensor_power(coeffs, xi.p)
    return np.einsum("...a,ab,...b->...", v.conj(), xi.kernel, v)


# ============================================================================
# CONSTRUCTORS
# ============================================================================

def identity_observable(p: int, M: int) -> Observable:
    return Observable(p, M, np.eye(M**p, dtype=complex), label=f"1^({p})")


def rank_one(f: np.ndarray, g: Optional[np.ndarray] = None) -> Observable:
    """One-particle operator |f><g| (g defaults to f)."""
    f = np.asarray(f, dtype=complex)
    g = f if g is None else np.asarray(g, dtype=complex)
    if f.shape != g.shape:
        raise DimensionError("rank-one factors must have the same length")
    return Observable(1, len(f), np.outer(f, g.conj()), label="rank-one")


def mode_projector(index: int, M: int) -> Observable:
    """|u_k><u_k| for the mode stored at position `index`."""
    e = np.zeros(M, dtype=complex)
    e[index] = 1.0
    obs = rank_one(e)
    return Observable(1, M, obs.kernel, label=f"P[{index}]")


def one_body_hamiltonian(spectrum: Spectrum) -> Observable:
    return Observable(1, spectrum.M, np.diag(spectrum.lambdas.astype(complex)), label="h")


def random_hermitian(p: int, M: int, rng: np.random.Generator, scale: float = 1.0) -> Observable:
    """Symmetrized Hermitian p-particle kernel with Gaussian entries."""
    dim = M**p
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    kernel = symmetrize(0.5 * (raw + raw.conj().T), M, p) * scale
    return Observable(p, M, kernel, label=f"random-hermitian-{p}")


def random_kernel(p: int, M: int, rng: np.random.Generator) -> Observable:
    """Symmetrized, generally non-Hermitian p-particle kernel."""
    dim = M**p
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return Observable(p, M, symmetrize(raw, M, p), label=f"random-{p}")


def two_body_kernel(potential: PotentialSpec) -> Observable:
    """W[(k1,k2),(l1,l2)] = w^(k1 - l1) delta(k1 + k2, l1 + l2) on the truncated modes.

    Returned symmetrized; Theta and the Fock lift only see the symmetric part.
    """
    modes = potential.grid.modes
    M = len(modes)
    digits = tensor_digits(M, 2)
    k1 = modes[digits[:, 0]][:, None]
    k2 = modes[digits[:, 1]][:, None]
    l1 = modes[digits[:, 0]][None, :]
    l2 = modes[digits[:, 1]][None, :]
    kernel = potential.hat(k1 - l1) * ((k1 + k2) == (l1 + l2))
    return Observable(2, M, symmetrize(kernel.astype(complex), M, 2), label="W")


# ============================================================================
# NORMS
# ============================================================================

def operator_norm(xi: Observable, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of the kernel by power iteration on xi^* xi."""
    kernel = xi.kernel
    if not np.any(kernel):
        return 0.0
    gram = kernel.conj().T @ kernel
    rng = np.random.default_rng(0)
    v = rng.normal(size=gram.shape[0]) + 1j * rng.normal(size=gram.shape[0])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = gram @ v
        updated = float(np.real(np.vdot(v, w)))
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if abs(updated - estimate) <= tol * max(updated, 1.0):
            estimate = updated
            break
        estimate = updated
    else:
        return float(np.linalg.norm(kernel, ord=2))
    return float(np.sqrt(max(estimate, 0.0)))


# ============================================================================
# NUMBER WEIGHTS
# ============================================================================

def _smooth_transition(y: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for y <= 0, 1 for y >= 1."""
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
        b = np.where(y < 1, np.exp(-1.0 / np.where(y < 1, 1.0 - y, 1.0)), 0.0)
    return a / (a + b)


def smooth_step(cutoff: float, width: Optional[float] = None) -> Callable[[np.ndarray], np.ndarray]:
    """G with G = 0 on [0, cutoff], G = 1 above cutoff + width, 0 <= G <= 1."""
    width = 0.5 * cutoff if width is None else width

    def weight(x: np.ndarray) -> np.ndarray:
        return _smooth_transition((np.asarray(x, dtype=float) - cutoff) / width)

    return weight


def smooth_bump(cutoff: float, width: Optional[float] = None) -> Callable[[np.ndarray], np.ndarray]:
    """F = 1 on [0, cutoff - width], F = 0 above cutoff, 0 <= F <= 1."""
    width = 0.5 * cutoff if width is None else width

    def weight(x: np.ndarray) -> np.ndarray:
        return 1.0 - _smooth_transition((np.asarray(x, dtype=float) - (cutoff - width)) / width)

    return weight


# ============================================================================
# FREE-STATE EXPECTATIONS
# ============================================================================

def wick_trace(xi: Observable, covariance: np.ndarray) -> complex:
    """Quasi-free expectation of the lift of xi for a diagonal covariance.

    Pairing p conjugated with p unconjugated factors gives
    p! tr(xi C^{(x)p} P_+); C = (h + nu)^-1 is the classical free field,
    C = G_tau^nu the free quantum state.
    """
    covariance = np.asarray(covariance, dtype=float)
    if covariance.shape != (xi.M,):
        raise DimensionError(f"covariance needs {xi.M} entries, got {covariance.shape}")
    diag = np.ones(1)
    for _ in range(xi.p):
        diag = np.kron(diag, covariance)
    sym = symmetrizer(xi.M, xi.p)
    return complex(factorial(xi.p) * np.trace(xi.kernel @ (diag[:, None] * sym)))
