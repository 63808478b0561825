import numpy as np
import pytest

from nlsq.libs.classical_gibbs import free_potential
from nlsq.libs.domain_model import DimensionError, Field, GridError
from nlsq.libs.nls_flow import FlowParams
from nlsq.libs.spectral_core import make_grid
from nlsq.libs.xsb_diagnostics import (
    RESONANT_WINDOW,
    SLOBODECKIJ_SPREAD_LIMIT,
    SpacetimeField,
    continuum_slobodeckij_ratio,
    embedding_ratio,
    evolved_spacetime_field,
    free_spacetime_field,
    homogeneous_sobolev_norm,
    random_band_limited,
    slobodeckij_envelope,
    slobodeckij_norm,
    sobolev_norm,
    spacetime_l2_norm,
    strichartz_envelope,
    strichartz_ratio,
    taper,
    xsb_norm,
)


@pytest.fixture
def grid():
    return make_grid(2, 16, 1.0)


@pytest.fixture
def data(grid):
    return random_band_limited(grid, np.random.default_rng(0))


def test_spacetime_field_validation():
    with pytest.raises(GridError):
        SpacetimeField(values=np.zeros((3, 4)), window=1.0)
    with pytest.raises(GridError):
        SpacetimeField(values=np.zeros((4, 4)), window=0.0)
    assert SpacetimeField(values=np.zeros((8, 4)), window=1.0).Q == 8


def test_plancherel(grid):
    rng = np.random.default_rng(1)
    field = SpacetimeField(values=rng.normal(size=(8, 16)) + 1j * rng.normal(size=(8, 16)), window=0.3)
    assert xsb_norm(field, 0.0, 0.0) == pytest.approx(spacetime_l2_norm(field), rel=1e-12)


def test_xsb_rejects_b_out_of_range(grid, data):
    field = free_spacetime_field(data, grid, 8)
    with pytest.raises(GridError):
        xsb_norm(field, 0.0, 1.5)


def test_free_waves_sit_on_the_paraboloid(grid, data):
    field = free_spacetime_field(data, grid, 16)
    l2 = float(np.linalg.norm(data.coeffs))
    assert spacetime_l2_norm(field) == pytest.approx(l2, rel=1e-12)
    for b in (0.0, 0.375, 0.55, 1.0):
        assert xsb_norm(field, 0.0, b) == pytest.approx(l2, rel=1e-10)
    assert embedding_ratio(field, 0.5) == pytest.approx(1.0, rel=1e-10)


def test_taper_shrinks_the_norm(grid, data):
    window = taper(16)
    assert window[0] == 0.0
    assert window.max() == pytest.approx(1.0)
    tapered = free_spacetime_field(data, grid, 16, tapered=True)
    assert spacetime_l2_norm(tapered) < spacetime_l2_norm(free_spacetime_field(data, grid, 16))


def test_free_trajectory_matches_free_field(grid, data):
    window = 0.05
    evolved = evolved_spacetime_field(data, free_potential(grid), FlowParams(dt=1e-3), 8, window)
    free = free_spacetime_field(data, grid, 8, window, tapered=True)
    # the flow carries the extra phase exp(-i kappa t)
    np.testing.assert_allclose(np.abs(evolved.values), np.abs(free.values), atol=1e-10)


def test_strichartz_ratio_of_zero_field():
    with pytest.raises(ZeroDivisionError):
        strichartz_ratio(SpacetimeField(values=np.zeros((4, 8)), window=1.0))


def test_sobolev_norms(grid, data):
    np.testing.assert_allclose(sobolev_norm(data.coeffs, 0.0), np.linalg.norm(data.coeffs))
    batch = np.stack([data.coeffs, 2 * data.coeffs])
    np.testing.assert_allclose(sobolev_norm(batch, 1.0), np.array([1.0, 2.0]) * sobolev_norm(data.coeffs, 1.0))
    coeffs = np.zeros(grid.M, dtype=complex)
    coeffs[grid.K] = 1.0
    assert homogeneous_sobolev_norm(Field(coeffs), 0.5) == 0.0


def test_slobodeckij_validation(grid, data):
    with pytest.raises(GridError):
        slobodeckij_norm(data, grid, 1.0)
    with pytest.raises(DimensionError):
        slobodeckij_norm(Field(np.ones(3, dtype=complex)), grid, 0.5)


def test_slobodeckij_envelope_is_flat():
    grid = make_grid(4, 64, 1.0)
    table = slobodeckij_envelope(grid, 0.5)
    assert list(table.columns) == ["k", "ratio", "continuum"]
    assert list(table["k"]) == [1, 2, 3, 4]
    ratios = table["ratio"].to_numpy()
    assert np.all(ratios > 0)
    assert ratios.max() / ratios.min() < 1.5
    continuum = table["continuum"].to_numpy()
    assert continuum.max() / continuum.min() < SLOBODECKIJ_SPREAD_LIMIT


def test_continuum_slobodeckij_ratio():
    # sigma = 1/2: the ratio tends to sqrt(2 pi) for high modes
    assert continuum_slobodeckij_ratio(50, 0.5) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-2)
    assert continuum_slobodeckij_ratio(0, 0.5) == 0.0
    with pytest.raises(GridError):
        continuum_slobodeckij_ratio(1, 1.0)


def test_strichartz_envelope(grid):
    table = strichartz_envelope(grid, 3, 8, seed=4)
    assert list(table.columns) == ["field_id", "ratio_q", "ratio_2q"]
    assert len(table) == 3
    assert np.all(np.isfinite(table[["ratio_q", "ratio_2q"]].to_numpy()))
    assert np.all(table["ratio_q"] > 0)
    again = strichartz_envelope(grid, 3, 8, seed=4, window=RESONANT_WINDOW)
    np.testing.assert_allclose(again["ratio_q"], table["ratio_q"])
