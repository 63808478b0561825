"""Domain models for the NLS classical/quantum correspondence toolkit.

Shared types for the truncated torus problem: the mode grid, spectral
fields, the one-body spectrum, interaction potentials and p-particle
observables. Module specific containers (Fock bases, ensembles, sweep
reports) live next to the engines that build them.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


# ============================================================================
# CONSTANTS
# ============================================================================

# Largest total Fock dimension build_basis accepts.
MAX_FOCK_DIMENSION = 200_000

# A mollifier must cover at least this many grid cells.
MIN_MOLLIFIER_CELLS = 4

# Flow integrator limits.
DEFAULT_DT = 1e-3
MAX_DT = 0.1

# Default Gauss-Legendre order for time-simplex integrals.
DEFAULT_QUADRATURE_ORDER = 8

# Time exponent b used by default in X^{sigma,b} diagnostics (b = 1/2 + small).
DEFAULT_XSB_B = 0.55

# ============================================================================
# EXCEPTIONS
# ============================================================================

class NLSQError(Exception):
    """Base class for every domain error raised by the toolkit."""


class GridError(NLSQError, ValueError):
    """Invalid grid parameters or a violated operation precondition."""


class DimensionError(NLSQError, ValueError):
    """Array shapes or particle numbers that do not fit together."""


class ResolutionError(NLSQError, ValueError):
    """A mollified kernel is too narrow for the physical grid."""


class ConvergenceRadiusError(NLSQError, ValueError):
    """Dyson expansion requested outside its convergence radius."""


class BlowUpError(NLSQError, FloatingPointError):
    """Non-finite values appeared during time evolution."""


class EmptyEnsembleError(NLSQError, ValueError):
    """An estimator was asked to average over zero samples."""


class ConfigError(NLSQError, ValueError):
    """Run configuration failed validation."""


class NumericalWarning(UserWarning):
    """Degenerate but well-defined numerical situations (zero lifts, tiny tails)."""


# ============================================================================
# GRID & FIELDS
# ============================================================================

@dataclass(frozen=True)
class Grid:
    """Truncated mode set {-K..K} with P physical samples on [0, 1).

    P is even and at least 4K+2 so cubic products of band-limited fields are
    evaluated without aliasing.
    """
    K: int
    P: int
    kappa: float

    @property
    def M(self) -> int:
        return 2 * self.K + 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def density_modes(self) -> np.ndarray:
        """Frequencies carried by |u|^2 for a band-limited u."""
        return np.arange(-2 * self.K, 2 * self.K + 1)

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.P) / self.P


@dataclass(frozen=True, eq=False)
class Field:
    """Band-limited field; coeffs[i] multiplies exp(2 pi i k x) with k = i - K."""
    coeffs: np.ndarray

    @property
    def K(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def copy(self) -> "Field":
        return Field(np.array(self.coeffs, dtype=complex))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues of h = -Laplacian + kappa on the truncated modes."""
    modes: np.ndarray
    lambdas: np.ndarray

    @property
    def M(self) -> int:
        return len(self.lambdas)

    def shifted(self, nu: float) -> np.ndarray:
        return self.lambdas + nu


# ============================================================================
# INTERACTIONS
# ============================================================================

@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Two-body interaction on a grid.

    kernel_hat holds w^(q) for q in {-2K..2K}, the frequencies reached by the
    density of a band-limited field. `coupling` scales the whole kernel and is
    already folded into kernel_hat.
    """
    variant: str  # 'free', 'constant', 'cosine', 'nonlocal', 'mollified', 'local'
    grid: Grid
    kernel_hat: np.ndarray
    coupling: float = 1.0
    epsilon: Optional[float] = None
    base: Optional[str] = None
    w_sup: float = float("inf")  # sup |w| on the grid, inf for the delta kernel

    @property
    def is_free(self) -> bool:
        return not np.any(self.kernel_hat)

    def hat(self, q: np.ndarray) -> np.ndarray:
        """w^(q) for integer frequencies |q| <= 2K."""
        return self.kernel_hat[np.asarray(q) + 2 * self.grid.K]


# ============================================================================
# OBSERVABLES
# ============================================================================

@dataclass(frozen=True, eq=False)
class Observable:
    """p-particle kernel on the M^p dimensional tensor product of the modes.

    Rows and columns are flattened multi-indices (k_1..k_p) with k_1 the most
    significant digit, matching numpy.kron ordering.
    """
    p: int
    M: int
    kernel: np.ndarray
    label: str = field(default="")

    @property
    def dimension(self) -> int:
        return self.M ** self.p

    def adjoint(self) -> "Observable":
        return Observable(self.p, self.M, self.kernel.conj().T, label=f"{self.label}^*" if self.label else "")

    def __add__(self, other: "Observable") -> "Observable":
        _check_same_space(self, other)
        return Observable(self.p, self.M, self.kernel + other.kernel)

    def __sub__(self, other: "Observable") -> "Observable":
        _check_same_space(self, other)
        return Observable(self.p, self.M, self.kernel - other.kernel)

    def __mul__(self, scalar: complex) -> "Observable":
        return Observable(self.p, self.M, self.kernel * scalar, label=self.label)

    __rmul__ = __mul__


def _check_same_space(a: Observable, b: Observable) -> None:
    if a.p != b.p or a.M != b.M:
        raise DimensionError(f"observables act on different spaces: (p={a.p}, M={a.M}) vs (p={b.p}, M={b.M})")
