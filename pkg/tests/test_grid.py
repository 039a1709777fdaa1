import numpy as np
import pytest
from hypothesis import given, strategies as st

from khdress.errors import ConfigError, GridMismatch
from khdress.grid import (
    Grid,
    GridInterpolator,
    ScalarField,
    diff,
    diff_matrix,
    fd_weights,
    node_weights,
    skew_central_matrix,
)


def test_fd_weights_central_second_derivative():
    w = fd_weights(0.0, [-1.0, 0.0, 1.0], 2)
    assert np.allclose(w[:, 2], [1, -2, 1])
    assert np.allclose(w[:, 1], [-0.5, 0, 0.5])


@pytest.mark.parametrize("acc", [2, 4, 6])
@pytest.mark.parametrize("deriv", [1, 2])
def test_diff_matrix_order(acc, deriv):
    errs = []
    for n in (40, 80):
        x = np.linspace(0, 2, n)
        D = diff_matrix(n, x[1] - x[0], deriv, acc)
        exact = np.cos(x) if deriv == 1 else -np.sin(x)
        errs.append(np.abs(D @ np.sin(x) - exact).max())
    assert np.log2(errs[0] / errs[1]) > acc - 0.6


def test_periodic_diff_is_exact_for_low_modes():
    g = Grid.uniform(((0, 2 * np.pi), (0, 1)), (64, 8), (True, False))
    Q1, _ = g.mesh()
    d = diff(np.sin(Q1), g, 0, 1, acc=8)
    assert np.abs(d - np.cos(Q1)).max() < 1e-9


@given(st.sampled_from([2, 4, 6, 8]), st.integers(9, 40), st.booleans())
def test_skew_central_is_antisymmetric(acc, n, periodic):
    C = skew_central_matrix(n, 0.3, periodic, acc)
    assert abs(C + C.T).max() == 0


def test_skew_central_order():
    errs = []
    for n in (50, 100):
        x = np.linspace(-1, 1, n)
        C = skew_central_matrix(n, x[1] - x[0], False, 8)
        e = np.abs(C @ np.exp(-4 * x**2) - (-8 * x * np.exp(-4 * x**2)))[8:-8]
        errs.append(e.max())
    assert np.log2(errs[0] / errs[1]) > 7


def test_uniform_grid_validation():
    with pytest.raises(ConfigError):
        Grid.uniform(((0, 0), (0, 1)), (16, 16))
    with pytest.raises(ConfigError):
        Grid.uniform(((0, 1), (0, 1)), (4, 16))


def test_periodic_axis_excludes_endpoint():
    g = Grid.uniform(((0, 2 * np.pi), (0, 1)), (16, 9), (True, False))
    assert g.q1[-1] < 2 * np.pi and np.isclose(g.spacing[0], 2 * np.pi / 16)
    assert g.domain()[0] == (0.0, 2 * np.pi)


def test_check_rejects_wrong_shape():
    g = Grid.uniform(((0, 1), (0, 1)), (10, 12))
    with pytest.raises(GridMismatch):
        g.check(np.zeros((12, 10)))


def test_interior_mask_and_weights():
    g = Grid.uniform(((0, 1), (0, 2)), (11, 21))
    m = g.interior_mask()
    assert m.sum() == 9 * 19
    assert np.isclose(g.quadrature_weights().sum(), 2.0)
    assert np.isclose(node_weights(g, np.ones(g.shape)).sum(), 11 * 21 * 0.01)


@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_interpolator_reproduces_smooth_field(x, y):
    g = Grid.uniform(((-1, 1), (-1, 1)), (41, 41))
    Q1, Q2 = g.mesh()
    f = np.sin(Q1) * np.exp(Q2)
    ip = GridInterpolator(g, f)
    assert abs(ip(np.array([x]), np.array([y]))[0, 0] - np.sin(x) * np.exp(y)) < 1e-8


def test_interpolator_periodic_wrap_and_nodes():
    g = Grid.uniform(((0, 2 * np.pi), (0, 1)), (32, 12), (True, False))
    Q1, Q2 = g.mesh()
    f = np.cos(Q1) * (1 + Q2)
    ip = GridInterpolator(g, f)
    assert np.abs(ip(g.q1, g.q2) - f).max() < 1e-12
    x = np.array([2 * np.pi + 0.3, -0.3])
    assert np.abs(ip(x, np.array([0.5]))[:, 0] - np.cos(x) * 1.5).max() < 1e-6


def test_scalar_field_prefers_exact_function():
    g = Grid.uniform(((0, 1), (0, 1)), (9, 9))
    Q1, Q2 = g.mesh()
    f = ScalarField(Q1**7, g, func=lambda a, b: a**7)
    assert abs(f.evaluate(np.array([0.55]), np.array([0.2]))[0, 0] - 0.55**7) < 1e-16
