import numpy as np
import pytest
from hypothesis import given, strategies as st

from khdress.errors import ConfigError, DegenerateFrame, DomainMismatch, UnknownKind
from khdress.geometry import (
    SurfaceSpec,
    conservative_stiffness,
    curvatures,
    frame_and_metric,
    geometric_potential,
    laplace_beltrami,
    laplace_beltrami_reference,
    lb_matrix,
    make_surface,
)


def cylinder(R=2.0, n=(64, 32)):
    return make_surface(SurfaceSpec("cylinder", {"R": R}, ((0, 2 * np.pi), (0, 5)), n))


def test_cylinder_closed_form():
    s = cylinder(2.0)
    c = curvatures(s)
    assert np.allclose(np.abs(c.M), 0.25) and np.allclose(c.K, 0)
    V = geometric_potential(c).values
    assert np.allclose(V, -1 / 32, rtol=1e-14)
    m = frame_and_metric(s)
    assert np.allclose(m.sqrt_g, 2.0) and np.allclose(m.g[..., 0, 1], 0)


def test_cylinder_is_periodic_on_full_turn():
    assert SurfaceSpec("cylinder", {"R": 1}, ((0, 2 * np.pi), (0, 1)), (16, 16)).periodic == (True, False)
    assert SurfaceSpec("cylinder", {"R": 1}, ((0, 3), (0, 1)), (16, 16)).periodic == (False, False)


def test_plane_and_sphere_have_no_gap():
    p = make_surface(SurfaceSpec("plane", {}, ((-1, 1), (-1, 1)), (16, 16)))
    assert np.all(geometric_potential(curvatures(p)).values == 0)
    s = make_surface(SurfaceSpec("sphere_patch", {"R": 3.0}, ((0.3, 2.8), (0, 2 * np.pi)), (48, 48)))
    c = curvatures(s)
    assert np.abs(geometric_potential(c).values).max() < 1e-12
    assert np.allclose(c.K, 1 / 9) and np.allclose(np.abs(c.M), 1 / 3)


def test_fd_path_converges_at_second_order():
    errs = []
    for n in (32, 64):
        s = make_surface(SurfaceSpec("gaussian_bump", {"A": 1.0, "sigma": 1.5}, ((-6, 6), (-6, 6)), (n, n)))
        errs.append(np.abs(curvatures(s, "fd").M - curvatures(s).M).max())
    assert 3.4 < errs[0] / errs[1] < 4.6


@given(st.floats(0.1, 3.0), st.floats(0.4, 2.0), st.sampled_from(["analytic", "fd"]))
def test_geometric_potential_is_attractive(A, sigma, method):
    s = make_surface(SurfaceSpec("gaussian_bump", {"A": A, "sigma": sigma}, ((-4, 4), (-4, 4)), (24, 24)))
    assert geometric_potential(curvatures(s, method)).values.max() <= 0


def test_bump_gap_vanishes_at_umbilic_apex():
    s = make_surface(SurfaceSpec("gaussian_bump", {"A": 2.0, "sigma": 1.0}, ((-3, 3), (-3, 3)), (61, 61)))
    c = curvatures(s)
    assert c.gap[30, 30] < 1e-20
    assert np.isclose(c.K[30, 30], 4.0) and np.isclose(abs(c.M[30, 30]), 2.0)


def test_monge_matches_analytic_bump():
    x = np.linspace(-5, 5, 201)
    X, Y = np.meshgrid(x, x, indexing="ij")
    H = np.exp(-(X**2 + Y**2) / (2 * 1.5**2))
    dom = ((-3, 3), (-3, 3))
    mon = make_surface(SurfaceSpec("monge", {"heights": H, "x": x, "y": x}, dom, (32, 32)))
    ref = make_surface(SurfaceSpec("gaussian_bump", {"A": 1.0, "sigma": 1.5}, dom, (32, 32)))
    assert np.abs(curvatures(mon).gap - curvatures(ref).gap).max() < 1e-4


def test_monge_domain_must_lie_inside_samples():
    x = np.linspace(-1, 1, 21)
    with pytest.raises(DomainMismatch):
        make_surface(SurfaceSpec("monge", {"heights": np.zeros((21, 21)), "x": x, "y": x}, ((-2, 2), (-1, 1)), (16, 16)))


def test_spec_validation():
    with pytest.raises(UnknownKind):
        SurfaceSpec("torus", {}, ((0, 1), (0, 1)), (16, 16))
    with pytest.raises(ConfigError, match="surface.R"):
        SurfaceSpec("cylinder", {"R": -2}, ((0, 1), (0, 1)), (16, 16))
    with pytest.raises(ConfigError):
        SurfaceSpec("gaussian_bump", {"A": 1}, ((0, 1), (0, 1)), (16, 16))


def test_degenerate_frame_at_pole():
    s = make_surface(SurfaceSpec("sphere_patch", {"R": 1.0}, ((0.0, 1.0), (0, 2 * np.pi)), (16, 16)))
    with pytest.raises(DegenerateFrame):
        frame_and_metric(s)


def test_lb_matches_loop_oracle():
    s = make_surface(SurfaceSpec("gaussian_bump", {"A": 1.3, "sigma": 0.8}, ((-2, 2), (-2.5, 2)), (21, 23)))
    m = frame_and_metric(s)
    Q1, Q2 = s.grid.mesh()
    f = np.sin(Q1) * np.cos(0.7 * Q2) + Q1 * Q2
    assert np.abs(laplace_beltrami(m, f).values - laplace_beltrami_reference(m, f)).max() < 1e-11


def test_lb_on_sphere_spherical_harmonic():
    R = 2.0
    errs = []
    for n in (32, 64):
        s = make_surface(SurfaceSpec("sphere_patch", {"R": R}, ((0.4, 2.7), (0, 2 * np.pi)), (n, n)))
        m = frame_and_metric(s)
        th, _ = s.grid.mesh()
        f = np.cos(th)
        lap = laplace_beltrami(m, f).values
        inner = s.grid.interior_mask()
        errs.append(np.abs(lap + 2 / R**2 * f)[inner].max())
    assert errs[1] < 2e-3 and errs[0] / errs[1] > 3.5


def test_stiffness_symmetric_and_kills_constants():
    s = make_surface(SurfaceSpec("gaussian_bump", {"A": 2.0, "sigma": 1.0}, ((-3, 3), (-3, 3)), (24, 24)))
    m = frame_and_metric(s)
    S = conservative_stiffness(m)
    assert abs(S - S.T).max() < 1e-14
    L = lb_matrix(m)
    assert np.abs(L @ np.ones(s.grid.size)).max() < 1e-12
