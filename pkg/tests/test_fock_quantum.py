from math import comb, factorial
import warnings

import numpy as np
import pytest

from nlsq.libs.classical_gibbs import constant_potential, cosine_potential, free_potential
from nlsq.libs.domain_model import DimensionError, GridError, NumericalWarning, Observable, Spectrum
from nlsq.libs.fock_quantum import (
    annihilation,
    bracket,
    build_basis,
    build_hamiltonians,
    creation,
    diagonal_operator,
    dump_operator,
    fock_dimension,
    free_evolve_kernel,
    free_heisenberg_evolve,
    grand_canonical_expectation,
    heisenberg_evolve,
    identity_operator,
    lift_operator,
    number_operator,
    number_tail,
    number_weight,
    partition_ratio,
    partition_ratio_limit,
    partition_ratio_trace,
    quantum_density_matrix,
    quantum_green_function,
    restrict_norm,
    sector_block,
    size_cutoff,
    star_product,
)
from nlsq.libs.observables import identity_observable, mode_projector, random_hermitian, random_kernel, wick_trace
from nlsq.libs.spectral_core import make_grid, spectrum


def two_mode_spectrum():
    return Spectrum(modes=np.arange(2), lambdas=np.array([1.0, 1.0 + 4 * np.pi**2]))


def test_basis_dimensions():
    basis = build_basis(3, 4)
    assert basis.dims == [comb(n + 2, 2) for n in range(5)]
    assert basis.dimension == fock_dimension(3, 4) == 35
    assert basis.position((1, 0, 2)) == (3, basis.index[3][(1, 0, 2)])
    np.testing.assert_array_equal(basis.sectors[2].sum(axis=1), 2)


def test_basis_guards():
    with pytest.raises(GridError):
        build_basis(0, 3)
    with pytest.raises(GridError):
        build_basis(2, -1)
    with pytest.raises(DimensionError):
        build_basis(33, 40)


def test_canonical_commutation_below_cutoff():
    basis = build_basis(2, 4)
    e = np.eye(2)
    for j in range(2):
        for k in range(2):
            a, b_star = annihilation(e[j], basis), creation(e[k], basis)
            commutator = (a @ b_star - b_star @ a).restrict(3)
            expected = identity_operator(basis).restrict(3) * float(j == k)
            np.testing.assert_allclose(commutator.to_dense(), expected.to_dense(), atol=1e-13)


def test_creation_checks_shape():
    with pytest.raises(DimensionError):
        creation(np.ones(3), build_basis(2, 2))


def test_operator_arithmetic():
    basis = build_basis(2, 2)
    A = number_operator(2.0, basis)
    B = identity_operator(basis)
    np.testing.assert_allclose((A + B - B).to_dense(), A.to_dense())
    np.testing.assert_allclose((A * 3.0).to_dense(), 3.0 * A.to_dense())
    np.testing.assert_allclose((A @ B).to_dense(), A.to_dense())
    np.testing.assert_allclose(A.commutator(B).to_dense(), 0.0)
    np.testing.assert_allclose((-A).to_dense(), -A.to_dense())
    assert restrict_norm(A) == pytest.approx(1.0)
    assert restrict_norm(A, 1) == pytest.approx(0.5)


def test_number_operator_is_lift_of_identity():
    basis = build_basis(3, 3)
    tau = 4.0
    lifted = lift_operator(identity_observable(1, 3), tau, basis)
    np.testing.assert_allclose(lifted.to_dense(), number_operator(tau, basis).to_dense(), atol=1e-14)
    assert lifted.hermitian


def test_lift_matches_symmetric_sector_formula():
    rng = np.random.default_rng(0)
    basis = build_basis(2, 4)
    for p in (1, 2):
        xi = random_kernel(p, 2, rng)
        lifted = lift_operator(xi, 3.0, basis)
        for n in range(5):
            np.testing.assert_allclose(lifted.block(n, n), sector_block(xi, n, 3.0), atol=1e-12)


def test_lift_above_cutoff_warns_and_vanishes():
    basis = build_basis(2, 1)
    with pytest.warns(NumericalWarning):
        lifted = lift_operator(identity_observable(2, 2), 1.0, basis)
    assert not lifted.blocks


def test_lift_argument_checks():
    basis = build_basis(2, 2)
    with pytest.raises(GridError):
        lift_operator(identity_observable(1, 2), 0.0, basis)
    with pytest.raises(DimensionError):
        lift_operator(identity_observable(1, 3), 1.0, basis)


def test_lift_product_expansion():
    rng = np.random.default_rng(1)
    basis = build_basis(2, 3)
    tau = 2.0
    xi, eta = random_kernel(1, 2, rng), random_kernel(2, 2, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalWarning)
        product = lift_operator(xi, tau, basis) @ lift_operator(eta, tau, basis)
        expansion = lift_operator(star_product(xi, eta, 0), tau, basis) + lift_operator(star_product(xi, eta, 1), tau, basis) * (2.0 / tau)
        commutator = lift_operator(xi, tau, basis).commutator(lift_operator(eta, tau, basis))
        bracket_lift = lift_operator(bracket(xi, eta, 1), tau, basis) * (2.0 / tau)
    np.testing.assert_allclose(product.to_dense(), expansion.to_dense(), atol=1e-12)
    np.testing.assert_allclose(commutator.to_dense(), bracket_lift.to_dense(), atol=1e-12)


def test_star_product_rejects_bad_contraction():
    rng = np.random.default_rng(2)
    with pytest.raises(GridError):
        star_product(random_kernel(1, 2, rng), random_kernel(1, 2, rng), 2)


def test_free_evolution_of_kernels_matches_heisenberg():
    rng = np.random.default_rng(3)
    spec = two_mode_spectrum()
    basis = build_basis(2, 3)
    tau = 2.0
    H_free = diagonal_operator(lambda n, states: states @ spec.lambdas / tau, basis)
    xi = random_hermitian(2, 2, rng)
    lifted = lift_operator(xi, tau, basis)
    evolved = heisenberg_evolve(lifted, 0.3, tau, H_free)
    expected = lift_operator(free_evolve_kernel(xi, 0.3, spec), tau, basis)
    np.testing.assert_allclose(evolved.to_dense(), expected.to_dense(), atol=1e-12)


def test_hamiltonians_single_mode_constant_interaction():
    grid = make_grid(0, 2, 1.0)
    spec = spectrum(grid)
    basis = build_basis(1, 6)
    tau = 3.0
    ham = build_hamiltonians(spec, constant_potential(grid, 2.0), tau, basis)
    n = np.arange(7)
    # W_tau = (1/2) w^(0) n (n - 1) / tau^2 on the single-mode sector n
    np.testing.assert_allclose(np.diag(ham.W_op.to_dense()).real, 0.5 * 2.0 * n * (n - 1) / tau**2, atol=1e-13)
    np.testing.assert_allclose(np.diag(ham.H_free.to_dense()).real, n / tau)
    assert ham.H_full.hermitian


def test_hamiltonians_check_modes():
    grid = make_grid(1, 8, 1.0)
    with pytest.raises(DimensionError):
        build_hamiltonians(spectrum(grid), cosine_potential(grid), 1.0, build_basis(2, 2))


def test_heisenberg_evolution_is_isometric_and_conserves_energy():
    grid = make_grid(1, 8, 1.0)
    spec = spectrum(grid)
    basis = build_basis(3, 3)
    tau = 2.0
    ham = build_hamiltonians(spec, cosine_potential(grid), tau, basis)
    rng = np.random.default_rng(4)
    A = lift_operator(random_hermitian(1, 3, rng), tau, basis)
    evolved = heisenberg_evolve(A, 0.7, tau, ham.H_full)
    assert restrict_norm(evolved) == pytest.approx(restrict_norm(A), rel=1e-12)
    np.testing.assert_allclose(heisenberg_evolve(ham.H_full, 0.7, tau, ham.H_full).to_dense(), ham.H_full.to_dense(), atol=1e-10)
    assert heisenberg_evolve(A, 0.0, tau, ham.H_full) is A
    free = free_heisenberg_evolve(A, 0.7, tau, ham)
    expected = lift_operator(free_evolve_kernel(random_hermitian(1, 3, np.random.default_rng(4)), 0.7, spec), tau, basis)
    np.testing.assert_allclose(free.to_dense(), expected.to_dense(), atol=1e-12)


def test_free_state_matches_green_function():
    grid = make_grid(1, 8, 10.0)
    spec = spectrum(grid)
    tau, nu = 4.0, 0.5
    N_max = size_cutoff(spec, nu, tau, 1e-14)
    basis = build_basis(3, N_max)
    ham = build_hamiltonians(spec, free_potential(grid), tau, basis)
    G = quantum_green_function(spec, nu, tau)
    for index in range(3):
        value = grand_canonical_expectation(lift_operator(mode_projector(index, 3), tau, basis), ham.H_full, tau, nu=nu)
        assert value == pytest.approx(G[index], rel=1e-10)
    value = grand_canonical_expectation(lift_operator(identity_observable(2, 3), tau, basis), ham.H_full, tau, nu=nu)
    assert value == pytest.approx(wick_trace(identity_observable(2, 3), G), rel=1e-10)


def test_green_function_tends_to_classical_covariance():
    spec = spectrum(make_grid(1, 8, 1.0))
    np.testing.assert_allclose(quantum_green_function(spec, 0.0, 1e6), 1.0 / spec.lambdas, rtol=1e-4)
    with pytest.raises(GridError):
        quantum_green_function(spec, -1.0, 1.0)


def test_deformed_state_limits():
    grid = make_grid(0, 2, 1.0)
    spec = spectrum(grid)
    tau = 4.0
    basis = build_basis(1, size_cutoff(spec, 0.0, tau, 1e-14))
    ham = build_hamiltonians(spec, constant_potential(grid, 1.0), tau, basis)
    N = number_operator(tau, basis)
    free_value = grand_canonical_expectation(N, ham.H_full, tau, z=0.0, hamiltonians=ham)
    assert free_value == pytest.approx(quantum_green_function(spec, 0.0, tau)[0], rel=1e-10)
    ratio = grand_canonical_expectation(identity_operator(basis), ham.H_full, tau, z=1.0, hamiltonians=ham)
    assert 0.0 < ratio.real < 1.0
    with pytest.raises(GridError):
        grand_canonical_expectation(N, ham.H_full, tau, z=-1.0, hamiltonians=ham)
    with pytest.raises(GridError):
        grand_canonical_expectation(N, ham.H_full, tau, z=1.0)


def test_off_diagonal_operators_have_zero_expectation():
    basis = build_basis(2, 3)
    H = diagonal_operator(lambda n, states: states @ np.array([1.0, 2.0]), basis)
    assert grand_canonical_expectation(creation(np.array([1.0, 0.0]), basis), H, 1.0) == 0


@pytest.mark.parametrize("nu", [0.5, 2.0])
def test_partition_ratio_forms_agree(nu):
    spec = spectrum(make_grid(1, 8, 10.0))
    tau = 8.0
    basis = build_basis(3, size_cutoff(spec, 0.0, tau, 1e-13))
    assert partition_ratio_trace(spec, nu, tau, basis) == pytest.approx(partition_ratio(spec, nu, tau), rel=1e-10)
    assert partition_ratio(spec, nu, 1e7) == pytest.approx(partition_ratio_limit(spec, nu), rel=1e-5)


def test_partition_gap_halves_with_tau():
    spec = spectrum(make_grid(1, 8, 10.0))
    limit = partition_ratio_limit(spec, 1.0)
    gaps = [abs(partition_ratio(spec, 1.0, tau) - limit) for tau in (1024.0, 2048.0)]
    assert gaps[1] / gaps[0] == pytest.approx(0.5, abs=0.01)


def test_number_tail_and_cutoff():
    grid = make_grid(0, 2, 1.0)
    spec = spectrum(grid)
    tau = 2.0
    q = np.exp(-1.0 / tau)
    # single mode: P(n > N) = q^(N + 1)
    assert number_tail(spec, 0.0, tau, 5) == pytest.approx(q**6, rel=1e-10)
    N = size_cutoff(spec, 0.0, tau, 1e-8)
    assert q ** (N + 1) < 1e-8 <= q**N
    with pytest.raises(DimensionError):
        size_cutoff(spec, 0.0, 1e6, 1e-12, limit=1000)


def test_number_weight_values():
    basis = build_basis(2, 3)
    weight = number_weight(lambda x: x**2, 2.0, basis)
    np.testing.assert_allclose(np.diag(weight.block(3, 3)).real, 2.25)
    assert weight.hermitian


def test_quantum_density_matrix_free():
    grid = make_grid(1, 8, 10.0)
    spec = spectrum(grid)
    tau = 2.0
    basis = build_basis(3, size_cutoff(spec, 0.0, tau, 1e-14))
    ham = build_hamiltonians(spec, free_potential(grid), tau, basis)
    gamma = quantum_density_matrix(ham.H_full, tau)
    np.testing.assert_allclose(gamma, np.diag(quantum_green_function(spec, 0.0, tau)), atol=1e-12)


def test_dump_operator_rows():
    basis = build_basis(2, 1)
    rows = dump_operator(creation(np.array([1.0, 0.0]), basis))
    assert rows == [{"row_sector": 1, "col_sector": 0, "row_occupation": "1 0", "col_occupation": "0 0", "re": 1.0, "im": 0.0}]


def test_sector_block_bound():
    rng = np.random.default_rng(5)
    xi = random_hermitian(2, 2, rng)
    norm = np.linalg.norm(xi.kernel, ord=2)
    for n in range(2, 6):
        block = sector_block(xi, n, 3.0)
        assert np.linalg.norm(block, ord=2) <= factorial(n) / factorial(n - 2) / 9.0 * norm + 1e-12
    assert sector_block(Observable(2, 2, xi.kernel), 1, 3.0).shape == (2, 2)
