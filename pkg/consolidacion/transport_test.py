import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from constitutive import PermeabilityLaw, WettingCurve
from errors import ConfigError
from mesh import build_graded_grid, gradient_l2
from transport import (
    WEIGHT_CACHE_SIZE,
    MollifierKernel,
    _weight_matrix,
    compute_water_flux,
    mollified_velocity,
    truncate_velocity,
    velocity_bound_constant,
    velocity_field,
)

fluxes = st.lists(st.floats(min_value=-10.0, max_value=10.0, allow_nan=False), min_size=16, max_size=16)
coefficients = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


@pytest.fixture
def grid():
    return build_graded_grid(32, 1.0, 1.05)


@pytest.mark.parametrize("profile", ["triangular", "bump"])
def test_kernel_has_unit_mass(profile):
    kernel = MollifierKernel(radius=0.2, profile=profile)
    mass = quad(kernel.density, -0.2, 0.2, points=[0.0], epsabs=1e-13)[0]
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert kernel.cdf(0.0) == pytest.approx(0.5, abs=1e-12)
    assert kernel.cdf(-0.3) == 0.0 and kernel.cdf(0.3) == 1.0


@pytest.mark.parametrize("profile", ["triangular", "bump"])
def test_kernel_weights_match_quadrature(grid, profile):
    """W_ic is the kernel mass over cell c seen from node i"""
    kernel = MollifierKernel(radius=0.1, profile=profile)
    weights = kernel.weights(grid)
    for i in (0, 10, 32):
        x = grid.nodes[i]
        for c in range(grid.n_cells):
            a, b = grid.nodes[c], grid.nodes[c + 1]
            expected = quad(lambda y: kernel.density(x - y), a, b, epsabs=1e-13)[0]
            assert weights[i, c] == pytest.approx(expected, abs=1e-9)


def test_constant_flux_is_halved_at_the_boundary(grid):
    """No renormalisation: a boundary node only sees half of the kernel"""
    kernel = MollifierKernel(radius=0.05)
    q = np.full(grid.n_cells, 3.0)
    v = mollified_velocity(q, kernel, 2.0, grid)
    assert v[0] == pytest.approx(0.75, abs=1e-13)
    assert v[-1] == pytest.approx(0.75, abs=1e-13)
    assert v[16] == pytest.approx(1.5, abs=1e-13)


def test_weights_are_cached_per_grid(grid):
    kernel = MollifierKernel(radius=0.05)
    assert kernel.weights(grid) is kernel.weights(build_graded_grid(32, 1.0, 1.05))
    assert kernel == MollifierKernel(radius=0.05)


def test_weight_cache_is_bounded():
    kernel = MollifierKernel(radius=0.3)
    for cells in range(2, WEIGHT_CACHE_SIZE + 8):
        kernel.weights(build_graded_grid(cells, 1.0, 1.0))
    info = _weight_matrix.cache_info()
    assert info.maxsize == WEIGHT_CACHE_SIZE
    assert info.currsize <= WEIGHT_CACHE_SIZE


def test_default_kernel_scales_with_length():
    assert MollifierKernel.for_length(2.0) == MollifierKernel(radius=0.1, profile="triangular")
    assert MollifierKernel.for_length(1.0).radius == 0.05


@given(fluxes, fluxes, coefficients, coefficients)
def test_mollified_velocity_is_linear(u, w, a, b):
    """v(a*u + b*w) = a*v(u) + b*v(w)"""
    grid = build_graded_grid(16, 1.0, 1.1)
    kernel = MollifierKernel(radius=0.15)
    u, w = np.array(u), np.array(w)
    combined = mollified_velocity(a * u + b * w, kernel, 2.0, grid)
    separate = a * mollified_velocity(u, kernel, 2.0, grid) + b * mollified_velocity(w, kernel, 2.0, grid)
    np.testing.assert_allclose(combined, separate, rtol=0, atol=1e-11)


def test_kernel_validation():
    with pytest.raises(ConfigError) as excinfo:
        MollifierKernel(radius=0.0, profile="gauss")
    assert len(excinfo.value.violations) == 2


def test_darcy_flux_follows_pressure_gradient(grid):
    curve = WettingCurve.linear(0.0, 2.0)
    law = PermeabilityLaw.constant(1e-3)
    s = grid.nodes.copy()
    q = compute_water_flux(s, np.zeros(grid.n_nodes), curve, law, grid)
    assert np.allclose(q, -2e-3)
    with pytest.raises(ValueError):
        compute_water_flux(s[:-1], np.zeros(grid.n_nodes), curve, law, grid)


def test_flux_uses_cell_average_of_precipitate(grid):
    law = PermeabilityLaw.exp_decay(1e-3, 1.0, 1e-4)
    c_p = np.zeros(grid.n_nodes)
    c_p[1] = 2.0
    q = compute_water_flux(grid.nodes.copy(), c_p, WettingCurve.linear(), law, grid)
    expected = 1e-4 + 9e-4 * np.exp(-1.0)
    assert q[0] == pytest.approx(-expected)
    assert q[1] == pytest.approx(-expected)
    assert q[2] == pytest.approx(-1e-3)


def test_truncate_velocity():
    v = np.array([-20.0, -3.0, 0.0, 4.0, 11.0])
    assert np.array_equal(truncate_velocity(v, 10.0), [-10.0, -3.0, 0.0, 4.0, 10.0])
    with pytest.raises(ValueError):
        truncate_velocity(v, -1.0)


@pytest.mark.parametrize("profile", ["triangular", "bump"])
def test_velocity_respects_bound_constant(grid, profile):
    """sup|v| <= C ||ds/dx||_2 on rough random profiles"""
    rng = np.random.default_rng(11)
    curve = WettingCurve.tabulated([(0.0, 0.0), (0.5, 0.2), (1.0, 1.5)])
    law = PermeabilityLaw.exp_decay(1e-2, 0.5, 1e-3)
    kernel = MollifierKernel(radius=0.08, profile=profile)
    constant = velocity_bound_constant(curve, law, kernel, 0.7, grid.length)
    for _ in range(20):
        s = rng.uniform(0.0, 1.0, grid.n_nodes)
        c_p = rng.uniform(0.0, 3.0, grid.n_nodes)
        v = velocity_field(s, c_p, curve, law, kernel, 0.7, grid)
        assert np.max(np.abs(v)) <= constant * gradient_l2(s, grid) * (1 + 1e-9)
