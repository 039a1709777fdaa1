import numpy as np
import pytest
from hypothesis import given, strategies as st

from khdress.drive import AxisProfile, DisplacementShape, prescribed_shape
from khdress.errors import NonSeparable, RangeExceeded, SignChange
from khdress.geometry import SurfaceSpec, frame_and_metric, make_surface
from khdress.grid import Grid, ScalarField
from khdress.shift import (
    AxisAbelMap,
    MomentumOperator,
    apply_alpha_momentum,
    apply_alpha_momentum_direct,
    build_abel_maps,
    flow_map,
    shift_field,
    shifted_derivative_identities,
)

tau_s = st.floats(-0.3, 0.3, allow_nan=False)


@pytest.fixture(scope="module")
def linear_axis():
    return AxisAbelMap(np.linspace(0.2, 5.0, 65), func=lambda x, k=0: x if k == 0 else (np.ones_like(x) if k == 1 else np.zeros_like(x)))


@pytest.fixture(scope="module")
def quadratic_axis():
    # v = 1 + x^2: h = arctan x, g_tau(x) = tan(arctan x + tau)
    def v(x, k=0):
        return [1 + x**2, 2 * x, 2 + 0 * x, 0 * x][k]
    return AxisAbelMap(np.linspace(-2, 2, 81), func=v, center=0.0)


def test_linear_flow_is_exponential(linear_axis):
    x = np.linspace(0.8, 1.2, 9)
    for tau in (-0.4, 0.1, 0.9):
        y, ok = linear_axis.flow(x, tau)
        assert ok.all() and np.allclose(y, x * np.exp(tau), rtol=1e-13)


def test_arctan_flow(quadratic_axis):
    x = np.linspace(-0.5, 0.5, 11)
    y, _ = quadratic_axis.flow(x, 0.3)
    assert np.allclose(y, np.tan(np.arctan(x) + 0.3), atol=1e-12)
    assert np.allclose(quadratic_axis.h(x), np.arctan(x), atol=1e-12)


@given(tau_s)
def test_abel_equation(quadratic_axis, tau):
    x = np.linspace(-0.6, 0.6, 7)
    assert np.allclose(quadratic_axis.h(quadratic_axis.flow(x, tau)[0]), quadratic_axis.h(x) + tau, atol=1e-12)


@given(tau_s, tau_s)
def test_group_law(quadratic_axis, s, t):
    x = np.linspace(-0.3, 0.3, 5)
    a = quadratic_axis.flow(quadratic_axis.flow(x, s)[0], t)[0]
    b = quadratic_axis.flow(x, s + t)[0]
    assert np.allclose(a, b, atol=1e-12)


@given(tau_s)
def test_inverse_flow(quadratic_axis, tau):
    x = np.linspace(-0.5, 0.5, 5)
    assert np.allclose(quadratic_axis.flow(quadratic_axis.flow(x, tau)[0], -tau)[0], x, atol=1e-12)


def test_node_valued_map_matches_exact(quadratic_axis):
    x = np.linspace(-2, 2, 81)
    spl = AxisAbelMap(x, values=1 + x**2, center=0.0)
    q = np.linspace(-0.5, 0.5, 7)
    assert np.allclose(spl.flow(q, 0.2)[0], quadratic_axis.flow(q, 0.2)[0], atol=1e-8)


def test_range_exceeded_reports_max_tau(linear_axis):
    with pytest.raises(RangeExceeded) as err:
        linear_axis.flow(np.array([4.0]), 1.0)
    assert np.isclose(err.value.max_tau, np.log(5.0 / 4.0))
    y, ok = linear_axis.flow(np.array([1.0, 4.0]), 1.0, policy="mask")
    assert ok.tolist() == [True, False] and np.isnan(y[1])


def test_sign_change_detected():
    x = np.linspace(-1, 1, 33)
    with pytest.raises(SignChange) as err:
        AxisAbelMap(x, func=lambda z, k=0: z + 0.1 if k == 0 else np.ones_like(z))
    assert abs(err.value.location + 0.1) < 0.1


def test_non_separable_shape_rejected():
    g = Grid.uniform(((-1, 1), (-1, 1)), (17, 17))
    Q1, Q2 = g.mesh()
    sh = DisplacementShape(g, np.stack([1 + 0.2 * Q2, np.ones_like(Q1)], axis=-1), 1.0)
    with pytest.raises(NonSeparable) as err:
        build_abel_maps(sh)
    assert err.value.residual is not None


def test_periodic_flow_wraps():
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ax = AxisAbelMap(x, func=lambda z, k=0: (2 + np.cos(z)) if k == 0 else -np.sin(z), periodic=True, period=2 * np.pi)
    y, ok = ax.flow(x, 25.0)
    assert ok.all()
    back, _ = ax.flow(y, -25.0)
    assert np.allclose(back, x, atol=1e-10)
    assert np.isinf(ax.max_tau(x))


def _const_shape(g, a=0.3, b=1.0):
    return prescribed_shape(g, (AxisProfile("affine", a=a, b=0.0), AxisProfile("const", value=b)), 1.0, normalize=False)


def test_shift_field_translates_and_copies_at_zero():
    g = Grid.uniform(((-3, 3), (-3, 3)), (31, 31))
    Q1, Q2 = g.mesh()
    f = ScalarField(np.exp(-(Q1**2 + Q2**2)), g, func=lambda a, b: np.exp(-(a**2 + b**2)))
    maps = build_abel_maps(_const_shape(g))
    same = shift_field(f, maps, 0.0)
    assert same.values is not f.values and np.array_equal(same.values, f.values)
    out = shift_field(f, maps, 0.5, policy="mask").values
    ok = np.isfinite(out)
    exact = np.exp(-((Q1 + 0.15) ** 2 + (Q2 + 0.5) ** 2))
    assert np.allclose(out[ok], exact[ok], atol=1e-14) and (~ok).any()
    pts = flow_map(maps, np.array([[0.0, 0.0]]), 0.5)
    assert np.allclose(pts, [[0.15, 0.5]])


def test_chain_rule_identities():
    g = Grid.uniform(((-3, 3), (-3, 3)), (81, 81))
    Q1, Q2 = g.mesh()
    sh = prescribed_shape(g, (AxisProfile("sech", amp=1, width=1.2, offset=0.5), AxisProfile("const", value=0.4)), 1.0)
    maps = build_abel_maps(sh)
    f = ScalarField(np.exp(-(Q1**2 + 0.5 * Q2**2)), g)
    rep = shifted_derivative_identities(f, maps, 0.3, acc=6)
    assert rep["max"] < 1e-4


def test_momentum_is_symmetric_and_matches_direct_form():
    s = make_surface(SurfaceSpec("gaussian_bump", {"A": 1.0, "sigma": 1.0}, ((-4, 4), (-4, 4)), (48, 48)))
    m = frame_and_metric(s)
    sh = prescribed_shape(s.grid, (AxisProfile("sech", amp=1, width=1.5, offset=0.2), AxisProfile("const", value=0.5)), 0.7)
    op = MomentumOperator.build(m, sh)
    P = op.matrix()
    W = m.weights.ravel()
    # sqrt(g)-weighted symmetry: W P = (W P)^dagger
    A = P.multiply(W[:, None]).tocsr()
    assert abs(A - A.conj().T).max() < 1e-12
    Q1, Q2 = s.grid.mesh()
    psi = np.exp(-(Q1**2 + Q2**2)) * (1 + 0.3j * Q1)
    t = 0.4
    a = apply_alpha_momentum(op, psi, t)
    b = apply_alpha_momentum_direct(op, psi, t)
    inner = s.grid.interior_mask()
    assert np.abs(a - b)[inner].max() < 5e-3 * np.abs(b).max()
    assert not apply_alpha_momentum(op, psi, 0.0).any()
