import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import jv

from khdress.dressing import (
    bch_diagnostic,
    composed_action_direct,
    composed_coefficients,
    conjugated_laplacian_coeffs,
    dress_laplacian,
    dress_potential,
    quadrature_angles,
    reconstruct_laplacian,
    reconstruct_potential,
    time_average,
)
from khdress.drive import AxisProfile, DriveSpec, displacement_shape, prescribed_shape, project_vector_potential
from khdress.errors import ConfigError, NonConvergedTail
from khdress.geometry import SLOTS, SurfaceSpec, apply_slots, frame_and_metric, lb_coefficients, make_surface, slot_matrices
from khdress.grid import ScalarField
from khdress.scene import build_scene
from khdress.shift import build_abel_maps, shift_field

K = 1.3
PROF = ({"kind": "const", "value": 1.0}, {"kind": "zero"})


def cosine(Q1, Q2):
    return np.cos(K * Q1)


def plane_scene(alpha0, n=(48, 12), n_max=6):
    spec = SurfaceSpec("plane", {}, ((-4, 4), (-1, 1)), n)
    return build_scene(spec, profiles=PROF, alpha0=alpha0, potential=cosine, n_max=n_max, n_theta=128)


@given(st.floats(0.05, 3.0))
def test_jacobi_anger(alpha0):
    sc = plane_scene(alpha0)
    X, _ = sc.grid.mesh()
    z = K * alpha0
    dp = sc.dp
    assert np.abs(dp.F0.values - jv(0, z) * np.cos(K * X)).max() < 1e-10
    c1, s1 = dp.harmonics[0]
    assert np.abs(c1.values).max() < 1e-10
    assert np.abs(s1.values - 2 * jv(1, z) * np.sin(K * X)).max() < 1e-10
    c2, s2 = dp.harmonics[1]
    assert np.abs(c2.values - 2 * jv(2, z) * np.cos(K * X)).max() < 1e-10
    assert np.abs(s2.values).max() < 1e-10


def test_flat_plane_laplacian_is_not_dressed():
    sc = plane_scene(1.1)
    dl = sc.dl
    for k in SLOTS:
        assert np.abs(dl.D0[k] - dl.bare[k]).max() < 1e-12
        for c, s in dl.harmonics:
            assert np.abs(c[k]).max() < 1e-12 and np.abs(s[k]).max() < 1e-12


def test_alpha0_zero_is_trivial():
    sc = plane_scene(0.0)
    assert sc.alpha0 == 0
    assert np.array_equal(sc.dp.F0.values, sc.V.values)
    assert all(not c.values.any() and not s.values.any() for c, s in sc.dp.harmonics)
    for k in SLOTS:
        assert np.array_equal(sc.dl.D0[k], sc.dl.bare[k])


@pytest.fixture(scope="module")
def bump():
    spec = SurfaceSpec("gaussian_bump", {"A": 1.0, "sigma": 1.5}, ((-6, 6), (-6, 6)), (49, 49))
    s = make_surface(spec)
    m = frame_and_metric(s)
    sh = prescribed_shape(s.grid, (AxisProfile("sech", amp=1.0, width=3.0, offset=0.5), AxisProfile("const", value=0.4)), 0.6)
    return s, m, sh, build_abel_maps(sh)


def test_fourier_mean_matches_time_average(bump):
    s, m, sh, maps = bump
    Q1, Q2 = s.grid.mesh()
    f = lambda a, b: np.exp(-(a**2 + b**2) / 8)
    V = ScalarField(f(Q1, Q2), s.grid, func=f)
    dp = dress_potential(V, maps, sh.alpha0, n_max=10, n_theta=128, policy="mask", tail_action="ignore")
    avg = time_average(V, maps, sh.alpha0, n_t=512, policy="mask")
    ok = np.isfinite(avg) & np.isfinite(dp.F0.values)
    assert ok.sum() > 0.5 * ok.size
    assert np.abs(dp.F0.values - avg)[ok].max() < 1e-12


def test_potential_reconstruction_matches_shift(bump):
    s, m, sh, maps = bump
    Q1, Q2 = s.grid.mesh()
    f = lambda a, b: np.exp(-(a**2 + b**2) / 8)
    V = ScalarField(f(Q1, Q2), s.grid, func=f)
    dp = dress_potential(V, maps, sh.alpha0, n_max=14, n_theta=128, policy="mask", tail_action="ignore")
    for t in (0.3, 1.7, 4.0):
        direct = shift_field(V, maps, sh.alpha0 * np.sin(t), policy="mask").values
        rec = reconstruct_potential(dp, t).values
        ok = np.isfinite(direct) & np.isfinite(rec)
        assert np.abs(rec - direct)[ok].max() < 1e-9


def test_reconstruction_error_decreases_with_n_max(bump):
    s, m, sh, maps = bump
    Q1, Q2 = s.grid.mesh()
    f = lambda a, b: np.exp(-(a**2 + b**2) / 8)
    V = ScalarField(f(Q1, Q2), s.grid, func=f)
    ts = np.random.default_rng(7).uniform(0, 2 * np.pi, 32)
    direct = [shift_field(V, maps, sh.alpha0 * np.sin(t), policy="mask").values for t in ts]
    errs = []
    for n_max in (1, 2, 4, 8):
        dp = dress_potential(V, maps, sh.alpha0, n_max=n_max, n_theta=128, policy="mask", tail_action="ignore")
        e = 0.0
        for t, d in zip(ts, direct):
            r = reconstruct_potential(dp, t).values
            ok = np.isfinite(d) & np.isfinite(r)
            e = max(e, np.abs(r - d)[ok].max())
        errs.append(e)
    assert all(b < 0.5 * a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6


def test_tail_warning():
    with pytest.warns(NonConvergedTail):
        spec = SurfaceSpec("plane", {}, ((-4, 4), (-1, 1)), (32, 12))
        build_scene(spec, profiles=PROF, alpha0=3.0, potential=cosine, n_max=1, n_theta=64)


def test_quadrature_angle_validation():
    with pytest.raises(ConfigError):
        quadrature_angles(63)
    with pytest.raises(ConfigError):
        quadrature_angles(32)


def test_raw_coefficients_do_not_depend_on_alpha0(bump):
    s, m, sh, maps = bump
    a = conjugated_laplacian_coeffs(m, sh)
    b = conjugated_laplacian_coeffs(m, sh.with_alpha0(2.5))
    for name in ("B0", "B1", "C1", "C2", "div"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_cylinder_raw_coefficients_closed_form():
    R = 1.5
    s = make_surface(SurfaceSpec("cylinder", {"R": R}, ((0, 2 * np.pi), (0, 3)), (128, 12)))
    m = frame_and_metric(s)
    d = DriveSpec((0.7, 0.0, 0.0))
    sh = displacement_shape(project_vector_potential(m, d), d)
    raw = conjugated_laplacian_coeffs(m, sh, acc=8)
    th, _ = s.grid.mesh()
    assert np.abs(raw.div + np.cos(th)).max() < 1e-9
    assert np.abs(raw.C2 - 0.25 * np.sin(th) ** 2 / R**2).max() < 1e-9
    assert np.abs(raw.C1 + np.cos(th) / (2 * R**2)).max() < 1e-8
    assert np.abs(raw.B1[..., 0] + np.sin(th) / R**2).max() < 1e-9
    assert np.abs(raw.B1[..., 1]).max() < 1e-12


def test_bch_ratio_closed_form_and_scaling():
    s = make_surface(SurfaceSpec("cylinder", {"R": 1.0}, ((0, 2 * np.pi), (0, 1)), (128, 12)))
    m = frame_and_metric(s)
    d = DriveSpec((1.0, 0.0, 0.0))
    sh = displacement_shape(project_vector_potential(m, d), d)
    diag = bch_diagnostic(sh, m, acc=8)
    th, _ = s.grid.mesh()
    ok = np.isfinite(diag.s.values) & (np.abs(np.cos(th)) > 0.2)
    assert np.abs(diag.s.values - np.sin(th) * np.tan(th))[ok].max() < 1e-7
    norms = [bch_diagnostic(sh, m, a, acc=8).neglected_norm for a in (0.5, 1.0, 2.0)]
    assert np.allclose(np.array(norms) / norms[0], [1, 4, 16], rtol=1e-2)


def test_static_mode_of_composed_series_is_D0(bump):
    s, m, sh, maps = bump
    raw = conjugated_laplacian_coeffs(m, sh)
    dl = dress_laplacian(raw, sh, maps, sh.alpha0, n_max=12, n_theta=128, policy="mask", tail_action="ignore")
    n = 256
    acc = {k: np.zeros(s.grid.shape) for k in SLOTS}
    for j in range(n):
        c = composed_coefficients(raw, maps, sh.alpha0 * np.sin(2 * np.pi * j / n), policy="mask")
        for k in SLOTS:
            acc[k] += c[k] / n
    for k in SLOTS:
        ok = np.isfinite(acc[k]) & np.isfinite(dl.D0[k])
        scale = max(np.abs(dl.bare[k]).max(), 1.0)
        assert np.abs(acc[k] - dl.D0[k])[ok].max() < 1e-8 * scale


def test_reconstruction_matches_literal_composition(bump):
    s, m, sh, maps = bump
    raw = conjugated_laplacian_coeffs(m, sh, acc=8)
    dl = dress_laplacian(raw, sh, maps, sh.alpha0, n_max=16, n_theta=128, policy="mask", tail_action="ignore")
    mats = slot_matrices(s.grid, 8)
    X, Y = s.grid.mesh()
    f = np.exp(-(X**2 + Y**2) / 4) * np.cos(X - 0.3 * Y)
    inner = (np.abs(X) < 4.5) & (np.abs(Y) < 4.5)
    for t in (0.4, 2.0):
        a = apply_slots(reconstruct_laplacian(dl, t), mats, f)
        b = composed_action_direct(m, sh, maps, ScalarField(f, s.grid), sh.alpha0 * np.sin(t), 8).values
        ok = inner & np.isfinite(a) & np.isfinite(b)
        assert np.abs(a - b)[ok].max() < 1e-3 * np.abs(b[ok]).max()


def test_symmetry_defect_is_second_order():
    spec = SurfaceSpec("gaussian_bump", {"A": 1.0, "sigma": 1.5}, ((-6, 6), (-6, 6)), (40, 40))
    prof = ({"kind": "sech", "amp": 1.0, "width": 3.0, "offset": 0.5}, {"kind": "const", "value": 0.4})
    alphas = [0.05, 0.1, 0.2]
    defects = []
    for a0 in alphas:
        sc = build_scene(spec, profiles=prof, alpha0=a0, n_max=4, n_theta=64, tail_action="ignore")
        defects.append(sc.operator().symmetry_defect())
    p = np.polyfit(np.log(alphas), np.log(defects), 1)[0]
    assert abs(p - 2) < 0.2
    sc0 = build_scene(spec, profiles=prof, alpha0=0.0, n_max=4, n_theta=64)
    assert sc0.operator().symmetry_defect() < 1e-14
