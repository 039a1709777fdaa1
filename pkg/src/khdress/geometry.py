"""Embedded surfaces: frames, metric, curvature, geometric potential and the
Laplace-Beltrami operator on a parameter grid.

Conventions. The frame is t_mu = dY/dq^mu with unit normal n = t1 x t2 / |t1 x t2|.
The second fundamental form is II_ij = -n . d_ij Y, so a surface bending away
from its normal (sphere with outward normal, bump cap with upward normal) has
positive mean curvature M = (k1 + k2) / 2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline

from . import grid as gridmod
from .errors import ConfigError, DegenerateFrame, DomainMismatch, GridMismatch, UnknownKind
from .grid import Grid, ScalarField, diff, diff_matrix
from .units import HBAR

log = logging.getLogger(__name__)

KINDS = ("plane", "cylinder", "gaussian_bump", "sphere_patch", "monge")
_REQUIRED = {
    "plane": (),
    "cylinder": ("R",),
    "gaussian_bump": ("A", "sigma"),
    "sphere_patch": ("R",),
    "monge": ("heights",),
}


@dataclass
class SurfaceSpec:
    """Surface kind, its parameters (atomic units) and the sampling grid.

    ``periodic`` defaults per kind: the cylinder angle (and the sphere azimuth)
    is periodic when the domain spans a full turn.
    """

    kind: str
    params: dict = field(default_factory=dict)
    domain: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    resolution: tuple = (64, 64)
    periodic: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnknownKind(f"unknown surface kind {self.kind!r}; expected one of {KINDS}", "surface.kind")
        for name in _REQUIRED[self.kind]:
            if name not in self.params:
                raise ConfigError(f"missing parameter {name!r}", f"surface.{name}")
        for name, value in self.params.items():
            if name in ("heights", "x", "y"):
                continue
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"parameter must be strictly positive, got {value}", f"surface.{name}")
        if len(self.resolution) != 2 or min(self.resolution) < 8:
            raise ConfigError(f"resolution must be two integers >= 8, got {self.resolution}", "surface.resolution")
        for mu, (lo, hi) in enumerate(self.domain):
            if not hi > lo:
                raise ConfigError(f"degenerate interval [{lo}, {hi}]", f"surface.domain[{mu}]")
        if self.periodic is None:
            full_turn = [abs((hi - lo) - 2 * np.pi) < 1e-12 for lo, hi in self.domain]
            if self.kind == "cylinder":
                self.periodic = (full_turn[0], False)
            elif self.kind == "sphere_patch":
                self.periodic = (False, full_turn[1])
            else:
                self.periodic = (False, False)
        self.periodic = tuple(bool(p) for p in self.periodic)

    def grid(self):
        return Grid.uniform(self.domain, self.resolution, self.periodic)


class Surface:
    """Embedding Y(q) with first and second partial derivatives.

    Subclasses implement ``_eval(Q1, Q2)`` returning ``(Y, (Y1, Y2), (Y11, Y12, Y22))``
    with trailing vector axis of length 3.
    """

    def __init__(self, spec: SurfaceSpec):
        self.spec = spec
        self.grid = spec.grid()

    def embed(self, Q1, Q2):
        return self._eval(np.asarray(Q1, float), np.asarray(Q2, float))[0]

    def first(self, Q1, Q2):
        return self._eval(np.asarray(Q1, float), np.asarray(Q2, float))[1]

    def second(self, Q1, Q2):
        return self._eval(np.asarray(Q1, float), np.asarray(Q2, float))[2]

    def _eval(self, Q1, Q2):
        raise NotImplementedError


def _stack(*comps):
    comps = np.broadcast_arrays(*comps)
    return np.stack(comps, axis=-1)


class Plane(Surface):
    def _eval(self, Q1, Q2):
        z = np.zeros_like(Q1 + Q2)
        one = np.ones_like(z)
        Y = _stack(Q1 + z, Q2 + z, z)
        return Y, (_stack(one, z, z), _stack(z, one, z)), (_stack(z, z, z),) * 3


class Cylinder(Surface):
    """Y = (R cos q1, R sin q1, q2); q1 is the angle."""

    def _eval(self, Q1, Q2):
        R = self.spec.params["R"]
        c, s = np.cos(Q1), np.sin(Q1)
        z = np.zeros_like(Q1 + Q2)
        c, s = c + z, s + z
        Y = _stack(R * c, R * s, Q2 + z)
        t1 = _stack(-R * s, R * c, z)
        t2 = _stack(z, z, z + 1.0)
        d11 = _stack(-R * c, -R * s, z)
        zero = _stack(z, z, z)
        return Y, (t1, t2), (d11, zero, zero)


class SpherePatch(Surface):
    """Y = R (sin q1 cos q2, sin q1 sin q2, cos q1); q1 polar, q2 azimuth."""

    def _eval(self, Q1, Q2):
        R = self.spec.params["R"]
        st, ct = np.sin(Q1), np.cos(Q1)
        sp_, cp = np.sin(Q2), np.cos(Q2)
        z = np.zeros_like(Q1 + Q2)
        st, ct, sp_, cp = st + z, ct + z, sp_ + z, cp + z
        Y = R * _stack(st * cp, st * sp_, ct)
        t1 = R * _stack(ct * cp, ct * sp_, -st)
        t2 = R * _stack(-st * sp_, st * cp, z)
        d11 = -Y
        d12 = R * _stack(-ct * sp_, ct * cp, z)
        d22 = R * _stack(-st * cp, -st * sp_, z)
        return Y, (t1, t2), (d11, d12, d22)


class _HeightSurface(Surface):
    """Monge patch Y = (x, y, f(x, y))."""

    def _height(self, X, Y):
        raise NotImplementedError

    def _eval(self, Q1, Q2):
        f, fx, fy, fxx, fxy, fyy = self._height(Q1, Q2)
        z = np.zeros_like(f)
        one = z + 1.0
        Y = _stack(Q1 + z, Q2 + z, f)
        return Y, (_stack(one, z, fx), _stack(z, one, fy)), (_stack(z, z, fxx), _stack(z, z, fxy), _stack(z, z, fyy))


class GaussianBump(_HeightSurface):
    """f = A exp(-(x^2 + y^2) / (2 sigma^2))."""

    def _height(self, X, Y):
        A, s = self.spec.params["A"], self.spec.params["sigma"]
        f = A * np.exp(-(X**2 + Y**2) / (2 * s**2))
        fx, fy = -X / s**2 * f, -Y / s**2 * f
        fxx = (X**2 / s**4 - 1 / s**2) * f
        fyy = (Y**2 / s**4 - 1 / s**2) * f
        fxy = X * Y / s**4 * f
        return f, fx, fy, fxx, fxy, fyy


class MongeSurface(_HeightSurface):
    """Height samples on their own tensor grid.

    Derivatives are taken with fourth-order differences at the sample nodes and
    carried to arbitrary points by quintic splines.
    """

    def __init__(self, spec):
        super().__init__(spec)
        H = np.asarray(spec.params["heights"], dtype=float)
        if H.ndim != 2 or min(H.shape) < 8:
            raise DomainMismatch("height samples must be a 2D array with at least 8x8 entries", "surface.heights")
        (x0, x1), (y0, y1) = spec.domain
        xs = np.asarray(spec.params.get("x", np.linspace(x0, x1, H.shape[0])), dtype=float)
        ys = np.asarray(spec.params.get("y", np.linspace(y0, y1, H.shape[1])), dtype=float)
        if xs.shape != (H.shape[0],) or ys.shape != (H.shape[1],):
            raise DomainMismatch("sample axes do not match the height array", "surface.heights")
        tol = 1e-12 * max(1.0, abs(x1 - x0), abs(y1 - y0))
        if xs[0] > x0 + tol or xs[-1] < x1 - tol or ys[0] > y0 + tol or ys[-1] < y1 - tol:
            raise DomainMismatch("height samples do not cover the domain", "surface.heights")
        sg = Grid(xs, ys)
        derivs = [
            H,
            diff(H, sg, 0, 1, acc=4),
            diff(H, sg, 1, 1, acc=4),
            diff(H, sg, 0, 2, acc=4),
            diff(diff(H, sg, 0, 1, acc=4), sg, 1, 1, acc=4),
            diff(H, sg, 1, 2, acc=4),
        ]
        self._splines = [RectBivariateSpline(xs, ys, d, kx=5, ky=5, s=0) for d in derivs]

    def _height(self, X, Y):
        X, Y = np.broadcast_arrays(X, Y)
        return tuple(s.ev(X.ravel(), Y.ravel()).reshape(X.shape) for s in self._splines)


_CLASSES = {
    "plane": Plane,
    "cylinder": Cylinder,
    "gaussian_bump": GaussianBump,
    "sphere_patch": SpherePatch,
    "monge": MongeSurface,
}


def make_surface(spec: SurfaceSpec) -> Surface:
    try:
        cls = _CLASSES[spec.kind]
    except KeyError:
        raise UnknownKind(f"unknown surface kind {spec.kind!r}", "surface.kind") from None
    return cls(spec)


# --------------------------------------------------------------------------
# metric and curvature


@dataclass
class MetricField:
    grid: Grid
    t1: np.ndarray
    t2: np.ndarray
    n: np.ndarray
    g: np.ndarray  # (N1, N2, 2, 2)
    g_inv: np.ndarray
    sqrt_g: np.ndarray
    method: str = "analytic"
    acc: int = 2

    @property
    def weights(self):
        return gridmod.node_weights(self.grid, self.sqrt_g)

    def crop(self, slices):
        sub = Grid(self.grid.q1[slices[0]], self.grid.q2[slices[1]], self.grid.periodic, self.grid.period)
        return MetricField(
            sub, self.t1[slices], self.t2[slices], self.n[slices], self.g[slices],
            self.g_inv[slices], self.sqrt_g[slices], self.method, self.acc,
        )


def _sample_derivatives(surface, method, acc):
    grid = surface.grid
    Q1, Q2 = grid.mesh()
    if method == "analytic":
        _, (t1, t2), (d11, d12, d22) = surface._eval(Q1, Q2)
        return t1, t2, d11, d12, d22
    if method != "fd":
        raise ValueError(f"unknown derivative method {method!r}")
    Y = surface.embed(Q1, Q2)
    t1 = diff(Y, grid, 0, 1, acc)
    t2 = diff(Y, grid, 1, 1, acc)
    d11 = diff(Y, grid, 0, 2, acc)
    d22 = diff(Y, grid, 1, 2, acc)
    d12 = diff(t1, grid, 1, 1, acc)
    return t1, t2, d11, d12, d22


def _metric_from_frame(grid, t1, t2, method, acc):
    cross = np.cross(t1, t2)
    area = np.linalg.norm(cross, axis=-1)
    bad = area < 1e-12
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise DegenerateFrame(
            f"|t1 x t2| < 1e-12 at node ({i}, {j}), q = ({grid.q1[i]:.6g}, {grid.q2[j]:.6g})"
        )
    n = cross / area[..., None]
    g11 = np.einsum("...k,...k", t1, t1)
    g12 = np.einsum("...k,...k", t1, t2)
    g22 = np.einsum("...k,...k", t2, t2)
    det = g11 * g22 - g12**2
    g = np.stack([np.stack([g11, g12], -1), np.stack([g12, g22], -1)], -2)
    g_inv = np.stack([np.stack([g22, -g12], -1), np.stack([-g12, g11], -1)], -2) / det[..., None, None]
    return MetricField(grid, t1, t2, n, g, g_inv, np.sqrt(det), method, acc)


def frame_and_metric(surface: Surface, method: str = "analytic", acc: int = 2) -> MetricField:
    """Frame, metric tensor, its inverse and sqrt|g| at every grid node.

    ``method="fd"`` differentiates the sampled embedding instead of using the
    analytic partials; it is what convergence studies exercise.
    """
    t1, t2, *_ = _sample_derivatives(surface, method, acc)
    return _metric_from_frame(surface.grid, t1, t2, method, acc)


@dataclass
class CurvatureField:
    grid: Grid
    M: np.ndarray
    K: np.ndarray
    gap: np.ndarray  # M^2 - K, non-negative by construction

    def crop(self, slices):
        sub = Grid(self.grid.q1[slices[0]], self.grid.q2[slices[1]], self.grid.periodic, self.grid.period)
        return CurvatureField(sub, self.M[slices], self.K[slices], self.gap[slices])


def curvatures(surface: Surface, method: str = "analytic", acc: int = 2, metric: MetricField | None = None) -> CurvatureField:
    """Mean and Gaussian curvature from the two fundamental forms.

    The shape operator is symmetrized through the Cholesky factor of g, so
    M^2 - K = ((a - c)/2)^2 + b^2 comes out non-negative node by node.
    """
    t1, t2, d11, d12, d22 = _sample_derivatives(surface, method, acc)
    if metric is None:
        metric = _metric_from_frame(surface.grid, t1, t2, method, acc)
    n = metric.n
    II = np.empty(n.shape[:-1] + (2, 2))
    II[..., 0, 0] = -np.einsum("...k,...k", n, d11)
    II[..., 1, 1] = -np.einsum("...k,...k", n, d22)
    II[..., 0, 1] = II[..., 1, 0] = -np.einsum("...k,...k", n, d12)
    L = np.linalg.cholesky(metric.g)
    Linv = np.linalg.inv(L)
    P = Linv @ II @ np.swapaxes(Linv, -1, -2)
    a, b, c = P[..., 0, 0], 0.5 * (P[..., 0, 1] + P[..., 1, 0]), P[..., 1, 1]
    M = 0.5 * (a + c)
    K = a * c - b * b
    gap = (0.5 * (a - c)) ** 2 + b * b
    return CurvatureField(surface.grid, M, K, gap)


def geometric_potential(curv: CurvatureField, mass: float = 1.0) -> ScalarField:
    """V_geo = -hbar^2 / (2m) (M^2 - K); never positive."""
    if not mass > 0:
        raise ConfigError(f"mass must be positive, got {mass}", "mass")
    return ScalarField(-(HBAR**2) / (2 * mass) * curv.gap, curv.grid, unit="energy")


# --------------------------------------------------------------------------
# Laplace-Beltrami


def drift(metric: MetricField, acc: int = 2):
    """b^nu = (1/sqrt g) d_mu (sqrt g g^{mu nu}), the first-order part of the operator."""
    sg, gi, gr = metric.sqrt_g, metric.g_inv, metric.grid
    b1 = (diff(sg * gi[..., 0, 0], gr, 0, 1, acc) + diff(sg * gi[..., 1, 0], gr, 1, 1, acc)) / sg
    b2 = (diff(sg * gi[..., 0, 1], gr, 0, 1, acc) + diff(sg * gi[..., 1, 1], gr, 1, 1, acc)) / sg
    return b1, b2


SLOTS = ("d11", "d22", "d12", "d1", "d2", "id")


def lb_coefficients(metric: MetricField, acc: int = 2) -> dict:
    """Coefficients of the plain operator in non-conservative slot form.

    Delta = c11 d1^2 + c22 d2^2 + c12 d1 d2 + c1 d1 + c2 d2; the mixed slot
    carries the factor 2 of the symmetric sum.
    """
    gi = metric.g_inv
    b1, b2 = drift(metric, acc)
    return {
        "d11": gi[..., 0, 0].copy(),
        "d22": gi[..., 1, 1].copy(),
        "d12": 2.0 * gi[..., 0, 1],
        "d1": b1,
        "d2": b2,
        "id": np.zeros(metric.grid.shape),
    }


def slot_matrices(grid: Grid, acc: int = 2) -> dict:
    """Sparse stencils for every operator slot on the full grid."""
    n1, n2 = grid.shape
    h1, h2 = grid.spacing
    p1, p2 = grid.periodic
    I1, I2 = sp.identity(n1, format="csr"), sp.identity(n2, format="csr")
    D1 = diff_matrix(n1, h1, 1, acc, p1)
    D2 = diff_matrix(n2, h2, 1, acc, p2)
    return {
        "d11": sp.kron(diff_matrix(n1, h1, 2, acc, p1), I2, format="csr"),
        "d22": sp.kron(I1, diff_matrix(n2, h2, 2, acc, p2), format="csr"),
        "d12": sp.kron(D1, D2, format="csr"),
        "d1": sp.kron(D1, I2, format="csr"),
        "d2": sp.kron(I1, D2, format="csr"),
        "id": sp.identity(n1 * n2, format="csr"),
    }


def apply_slots(coeffs: dict, mats: dict, f):
    """Sum over slots of coefficient times stencil applied to a grid array."""
    shape = np.shape(f)
    v = np.ravel(f)
    out = np.zeros(v.shape, dtype=np.result_type(v, float, *[np.asarray(c).dtype for c in coeffs.values()]))
    for slot, c in coeffs.items():
        out += np.ravel(c) * (mats[slot] @ v)
    return out.reshape(shape)


def _forward_difference(n, h, periodic):
    """Edge-difference matrix mapping nodes to the half-points between them."""
    m = n if periodic else n - 1
    rows = np.repeat(np.arange(m), 2)
    cols = np.stack([np.arange(m), (np.arange(m) + 1) % n], axis=1).ravel()
    vals = np.tile([-1.0 / h, 1.0 / h], m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


def _half_average(a, axis, periodic):
    if periodic:
        return 0.5 * (a + np.roll(a, -1, axis=axis))
    lo = [slice(None)] * 2
    hi = [slice(None)] * 2
    lo[axis], hi[axis] = slice(0, -1), slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def conservative_stiffness(metric: MetricField) -> sp.csr_matrix:
    """Symmetric matrix S with S f approximating d_mu (sqrt g g^{mu nu} d_nu f).

    Diagonal fluxes live on half-points, the mixed terms use antisymmetric
    central differences, so S is exactly symmetric and kills constants on
    interior rows.
    """
    grid = metric.grid
    n1, n2 = grid.shape
    h1, h2 = grid.spacing
    p1, p2 = grid.periodic
    a = metric.sqrt_g[..., None, None] * metric.g_inv
    I1, I2 = sp.identity(n1, format="csr"), sp.identity(n2, format="csr")
    G1 = sp.kron(_forward_difference(n1, h1, p1), I2, format="csr")
    G2 = sp.kron(I1, _forward_difference(n2, h2, p2), format="csr")
    a11 = _half_average(a[..., 0, 0], 0, p1).ravel()
    a22 = _half_average(a[..., 1, 1], 1, p2).ravel()
    C1 = sp.kron(gridmod.skew_central_matrix(n1, h1, p1), I2, format="csr")
    C2 = sp.kron(I1, gridmod.skew_central_matrix(n2, h2, p2), format="csr")
    A12 = sp.diags(a[..., 0, 1].ravel())
    S = -(G1.T @ sp.diags(a11) @ G1) - (G2.T @ sp.diags(a22) @ G2) + C1 @ A12 @ C2 + C2 @ A12 @ C1
    return sp.csr_matrix(S)


def _boundary_rows(grid):
    m = ~grid.interior_mask()
    return np.flatnonzero(m.ravel())


def lb_matrix(metric: MetricField) -> sp.csr_matrix:
    """Sparse plain Laplace-Beltrami operator on the full grid.

    Interior rows come from the symmetric conservative form divided by sqrt g.
    Rows on a non-periodic boundary use one-sided stencils of the slot form.
    """
    S = conservative_stiffness(metric)
    L = sp.diags(1.0 / metric.sqrt_g.ravel()) @ S
    rows = _boundary_rows(metric.grid)
    if rows.size:
        coeffs = lb_coefficients(metric)
        mats = slot_matrices(metric.grid)
        B = sp.csr_matrix(L.shape)
        for slot, c in coeffs.items():
            if slot != "id":
                B = B + sp.diags(c.ravel()) @ mats[slot]
        keep = np.ones(L.shape[0])
        keep[rows] = 0.0
        L = sp.diags(keep) @ L + sp.diags(1.0 - keep) @ B
    return sp.csr_matrix(L)


def laplace_beltrami(metric: MetricField, f) -> ScalarField:
    values = gridmod.as_values(f)
    if isinstance(f, ScalarField) and not f.grid.matches(metric.grid):
        raise GridMismatch("field and metric live on different grids")
    metric.grid.check(values, "laplace_beltrami input")
    out = (lb_matrix(metric) @ values.ravel()).reshape(metric.grid.shape)
    return ScalarField(out, metric.grid, unit="1/length^2")


def laplace_beltrami_reference(metric: MetricField, f) -> np.ndarray:
    """Node-by-node loop evaluation of the same discrete operator.

    Written independently of the sparse assembly; used as a brute-force oracle.
    """
    f = np.asarray(gridmod.as_values(f))
    grid = metric.grid
    n1, n2 = grid.shape
    h1, h2 = grid.spacing
    p1, p2 = grid.periodic
    sg = metric.sqrt_g
    gi = metric.g_inv
    a11 = sg * gi[..., 0, 0]
    a12 = sg * gi[..., 0, 1]
    a22 = sg * gi[..., 1, 1]
    out = np.zeros(f.shape, dtype=np.result_type(f, float))
    interior = grid.interior_mask()

    def wrap(i, n, per):
        if per:
            return i % n
        return i if 0 <= i < n else None

    for i in range(n1):
        for j in range(n2):
            if not interior[i, j]:
                continue
            ip, im = wrap(i + 1, n1, p1), wrap(i - 1, n1, p1)
            jp, jm = wrap(j + 1, n2, p2), wrap(j - 1, n2, p2)
            flux = (0.5 * (a11[i, j] + a11[ip, j]) * (f[ip, j] - f[i, j])
                    - 0.5 * (a11[i, j] + a11[im, j]) * (f[i, j] - f[im, j])) / h1**2
            flux += (0.5 * (a22[i, j] + a22[i, jp]) * (f[i, jp] - f[i, j])
                     - 0.5 * (a22[i, j] + a22[i, jm]) * (f[i, j] - f[i, jm])) / h2**2

            # d1 (a12 d2 f) with central differences, d2 f truncated at the chart edge
            def d2f(ii):
                up = f[ii, jp] if jp is not None else 0.0
                dn = f[ii, jm] if jm is not None else 0.0
                return (up - dn) / (2 * h2)

            def d1f(jj):
                up = f[ip, jj] if ip is not None else 0.0
                dn = f[im, jj] if im is not None else 0.0
                return (up - dn) / (2 * h1)

            flux += (a12[ip, j] * d2f(ip) - a12[im, j] * d2f(im)) / (2 * h1)
            flux += (a12[i, jp] * d1f(jp) - a12[i, jm] * d1f(jm)) / (2 * h2)
            out[i, j] = flux / sg[i, j]
    # boundary nodes: non-conservative slot form with one-sided stencils
    if not interior.all():
        coeffs = lb_coefficients(metric)
        full = apply_slots(coeffs, slot_matrices(grid), f)
        out[~interior] = full[~interior]
    return out
