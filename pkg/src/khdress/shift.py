"""Shift-operator calculus for separable displacement fields.

Along each axis the generator v(x) d/dx becomes a unit translation in the Abel
coordinate h(x) = int dx / v(x), and the shift exp(tau v d/dx) moves arguments
along the flow g_tau = h^-1 o (h + tau).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import make_interp_spline

from .drive import DisplacementShape, covariant_divergence
from .errors import GridMismatch, NonSeparable, RangeExceeded, SignChange
from .geometry import MetricField
from .grid import GridInterpolator, ScalarField, diff, skew_central_matrix
from .units import HBAR

log = logging.getLogger(__name__)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def separability_residual(shape: DisplacementShape, tol: float = 1e-10, acc: int = 2):
    """Commutator components a1 d1 a2 and a2 d2 a1 of the two flow generators.

    Returns the residual field (max of both magnitudes, per node) and whether it
    stays below ``tol`` relative to the shape scale.
    """
    a1, a2 = shape.component(0), shape.component(1)
    if shape.profiles is not None:
        r1 = np.zeros(shape.grid.shape)
        r2 = np.zeros(shape.grid.shape)
    else:
        r1 = a1 * diff(a2, shape.grid, 0, 1, acc)
        r2 = a2 * diff(a1, shape.grid, 1, 1, acc)
    res = np.maximum(np.abs(r1), np.abs(r2))
    ok = bool(res.max() < tol)
    return ScalarField(res, shape.grid, unit="1/length"), ok


class AxisAbelMap:
    """Abel coordinate along one axis for a fixed-sign speed profile v.

    ``v`` is either a callable ``v(x, k)`` giving the k-th derivative or node
    values, in which case a quintic spline through them is used. A static axis
    (v identically zero) flows trivially.
    """

    REFINE = 8

    def __init__(self, x, values=None, func=None, periodic=False, period=None, center=None):
        self.nodes = np.asarray(x, dtype=float)
        self.periodic = bool(periodic)
        self.period = period
        x0 = self.nodes[0]
        x1 = x0 + period if periodic else self.nodes[-1]
        self.interval = (float(x0), float(x1))
        if func is None:
            vals = np.asarray(values, dtype=float)
            scale = np.max(np.abs(vals)) if vals.size else 0.0
        else:
            vals = np.asarray(func(self.nodes, 0), dtype=float)
            scale = np.max(np.abs(vals))
        self.static = bool(scale == 0.0)
        if self.static:
            return
        if func is None:
            if periodic:
                spl = make_interp_spline(np.append(self.nodes, x1), np.append(vals, vals[0]), k=5, bc_type="periodic")
            else:
                spl = make_interp_spline(self.nodes, vals, k=5)
            self._vspl = spl
            self._vfunc = lambda z, k=0: spl(z, k) if k else spl(z)
        else:
            self._vfunc = func
        nd = (self.nodes.size - (0 if periodic else 1)) * self.REFINE + 1
        xd = np.linspace(x0, x1, nd)
        vd = self.v(xd)
        self._check_sign(xd, vd, scale)
        self.sign = float(np.sign(vd[0]))
        # Gauss-Legendre on every dense interval, then cumulative sum
        a, b = xd[:-1], xd[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        seg = np.sum(_GL_W[None, :] / self.v(pts), axis=1) * half
        hd = np.concatenate([[0.0], np.cumsum(seg)])
        if center is None:
            center = 0.5 * (x0 + x1)
        self.center = float(center)
        self._H = make_interp_spline(xd, hd, k=5)
        self._dH = self._H.derivative()
        self._offset = float(self._H(self.center))
        self._xd = xd
        self._hd = hd - self._offset
        self.h_range = (min(self._hd[0], self._hd[-1]), max(self._hd[0], self._hd[-1]))
        self.turn = self._hd[-1] - self._hd[0] if periodic else None

    def _check_sign(self, xd, vd, scale):
        small = np.abs(vd) < 1e-12 * scale
        flips = np.flatnonzero(np.sign(vd[1:]) != np.sign(vd[:-1]))
        if small.any() or flips.size:
            k = int(np.flatnonzero(small)[0]) if small.any() else int(flips[0])
            raise SignChange(
                f"displacement component vanishes or changes sign near x = {xd[k]:.6g}; "
                "the Abel integral diverges there",
                location=float(xd[k]),
            )

    # -- speed profile
    def v(self, x, k=0):
        x = np.asarray(x, dtype=float)
        if self.static:
            return np.zeros_like(x)
        if self.periodic:
            x = self.interval[0] + np.mod(x - self.interval[0], self.period)
        return np.asarray(self._vfunc(x, k), dtype=float)

    # -- Abel coordinate and inverse
    def h(self, x):
        x = np.asarray(x, dtype=float)
        if self.static:
            raise ValueError("static axis has no Abel coordinate")
        if self.periodic:
            k = np.floor((x - self.interval[0]) / self.period)
            return self._H(x - k * self.period) - self._offset + k * self.turn
        return self._H(x) - self._offset

    def h_inverse(self, hv, policy="error"):
        hv = np.asarray(hv, dtype=float)
        if self.periodic:
            base = hv - self._hd[0]
            k = np.floor(base / self.turn)
            y = self._invert(hv - k * self.turn)
            return y + k * self.period, np.ones(hv.shape, dtype=bool)
        lo, hi = self.h_range
        slack = 1e-13 * max(1.0, hi - lo)
        ok = (hv >= lo - slack) & (hv <= hi + slack)
        if not ok.all() and policy == "error":
            raise RangeExceeded("flow leaves the validity interval of the displacement field")
        y = np.full(hv.shape, np.nan)
        y[ok] = self._invert(np.clip(hv[ok], lo, hi))
        return y, ok

    def _invert(self, hv):
        hd, xd = self._hd, self._xd
        if hd[-1] < hd[0]:
            y = np.interp(hv, hd[::-1], xd[::-1])
        else:
            y = np.interp(hv, hd, xd)
        a, b = self.interval
        for _ in range(12):
            step = (self._H(y) - self._offset - hv) / self._dH(y)
            y = np.clip(y - step, a, b)
            if np.max(np.abs(step), initial=0.0) < 1e-15 * max(1.0, abs(b - a)):
                break
        return y

    def flow(self, x, tau, policy="error"):
        """g_tau(x) with a validity mask; static axes return x."""
        x = np.asarray(x, dtype=float)
        if self.static or tau == 0:
            return x.copy(), np.ones(x.shape, dtype=bool)
        try:
            return self.h_inverse(self.h(x) + tau, policy=policy)
        except RangeExceeded:
            raise RangeExceeded(
                f"flow by tau = {tau:.6g} leaves the validity interval {self.interval}",
                max_tau=self.max_tau(x, np.sign(tau)),
            ) from None

    def max_tau(self, x, direction=1.0):
        """Largest |tau| in the given direction admissible for every point x."""
        if self.static or self.periodic:
            return np.inf
        hx = self.h(np.asarray(x, dtype=float))
        lo, hi = self.h_range
        return float(np.min(hi - hx)) if direction > 0 else float(np.min(hx - lo))


@dataclass
class AbelMap:
    axes: tuple  # two AxisAbelMap
    grid: object

    def flow(self, x1, x2, tau, policy="error"):
        """Flowed coordinates of the tensor grid x1 x x2 (separable flows stay tensor)."""
        y1, m1 = self.axes[0].flow(x1, tau, policy)
        y2, m2 = self.axes[1].flow(x2, tau, policy)
        return y1, y2, m1, m2

    def max_tau(self, direction=1.0):
        return min(ax.max_tau(self.grid.axis(mu), direction) for mu, ax in enumerate(self.axes))


def _axis_profile(shape: DisplacementShape, mu: int, tol=1e-12):
    """Values of component mu along its own axis, checking it ignores the other one."""
    a = shape.component(mu)
    scale = np.max(np.abs(shape.alpha_shape)) if shape.alpha_shape.size else 0.0
    line = a[:, 0] if mu == 0 else a[0, :]
    other = a - (line[:, None] if mu == 0 else line[None, :])
    dev = float(np.max(np.abs(other)))
    if scale > 0 and dev > tol * scale:
        raise NonSeparable(
            f"component {mu + 1} of the displacement field depends on the other coordinate "
            f"(deviation {dev:.3g}); only tensor-product flows are supported",
            residual=dev,
        )
    return line


def build_abel_maps(shape: DisplacementShape, tol: float = 1e-10) -> AbelMap:
    res, ok = separability_residual(shape, tol)
    if not ok:
        raise NonSeparable(
            f"flow generators do not commute (max residual {res.values.max():.3g})", residual=res
        )
    grid = shape.grid
    axes = []
    for mu in range(2):
        x = grid.axis(mu)
        per, P = grid.periodic[mu], grid.period[mu]
        if shape.profiles is not None:
            prof = shape.profiles[mu]
            if prof.is_zero:
                axes.append(AxisAbelMap(x, values=np.zeros_like(x), periodic=per, period=P))
            else:
                axes.append(AxisAbelMap(x, func=prof, periodic=per, period=P))
        else:
            line = _axis_profile(shape, mu)
            axes.append(AxisAbelMap(x, values=line, periodic=per, period=P))
    return AbelMap(tuple(axes), grid)


def flow_map(maps: AbelMap, q, tau: float, policy="error"):
    """g_tau applied to a single point or stacked points of shape (..., 2)."""
    q = np.asarray(q, dtype=float)
    y1, m1 = maps.axes[0].flow(q[..., 0], tau, policy)
    y2, m2 = maps.axes[1].flow(q[..., 1], tau, policy)
    return np.stack([y1, y2], axis=-1)


def shift_field(f: ScalarField, maps: AbelMap, tau: float, policy: str = "error") -> ScalarField:
    """(Omega f)(q) = f(g_tau(q)).

    Uses the field's exact evaluator when present and quintic interpolation of
    the node values otherwise. Masked nodes (policy ``mask``) come back as NaN.
    """
    if not f.grid.matches(maps.grid):
        raise GridMismatch("field and Abel maps live on different grids")
    if tau == 0:
        return ScalarField(f.values.copy(), f.grid, f.unit, f.func)
    y1, y2, m1, m2 = maps.flow(f.grid.q1, f.grid.q2, tau, policy)
    out = np.full(f.grid.shape, np.nan, dtype=np.result_type(f.values, float))
    if m1.any() and m2.any():
        out[np.ix_(m1, m2)] = f.evaluate(y1[m1], y2[m2])
    return ScalarField(out, f.grid, f.unit)


def shifted_derivative_identities(f: ScalarField, maps: AbelMap, tau: float, acc: int = 2) -> dict:
    """Check the chain rules for derivatives of a transported field.

    With F(x) = f(g_tau(x)) and rho = v(g_tau(x)) / v(x):
    dF = rho f'(y), d2F = rho^2 f''(y) + rho (v'(y) - v'(x)) / v(x) f'(y),
    d1 d2 F = rho1 rho2 f_12(y). Left sides are finite differences of F on the
    grid, right sides use spline derivatives of f. Nodes whose stencil touches a
    point that flows off the chart are skipped. Returns max relative mismatches.
    """
    grid = f.grid
    F = shift_field(f, maps, tau, policy="mask").values
    y1, y2, _, _ = maps.flow(grid.q1, grid.q2, tau, policy="mask")
    y1, y2 = np.nan_to_num(y1, nan=grid.q1[0]), np.nan_to_num(y2, nan=grid.q2[0])
    I = GridInterpolator(grid, f.values)
    fy = [I(y1, y2, 1, 0), I(y1, y2, 0, 1)]
    fyy = [I(y1, y2, 2, 0), I(y1, y2, 0, 2)]
    fxy = I(y1, y2, 1, 1)
    rho, curv = [], []
    for mu, (ax, x, y) in enumerate(zip(maps.axes, (grid.q1, grid.q2), (y1, y2))):
        if ax.static:
            rho.append(np.ones_like(x))
            curv.append(np.zeros_like(x))
        else:
            vx = ax.v(x)
            rho.append(ax.v(y) / vx)
            curv.append((ax.v(y, 1) - ax.v(x, 1)) / vx)
    R = [rho[0][:, None] * np.ones(grid.shape), rho[1][None, :] * np.ones(grid.shape)]
    Cv = [curv[0][:, None] * np.ones(grid.shape), curv[1][None, :] * np.ones(grid.shape)]
    report = {}
    scale = max(np.nanmax(np.abs(F)), 1e-300)

    def mismatch(lhs, rhs):
        ok = np.isfinite(lhs)
        if not ok.any():
            raise RangeExceeded("no node survives the flow", max_tau=maps.max_tau(np.sign(tau)))
        return float(np.max(np.abs(lhs - rhs)[ok]) / max(np.max(np.abs(rhs[ok])), scale))

    for mu in range(2):
        lhs1 = diff(F, grid, mu, 1, acc)
        rhs1 = R[mu] * fy[mu]
        lhs2 = diff(F, grid, mu, 2, acc)
        rhs2 = R[mu] ** 2 * fyy[mu] + R[mu] * Cv[mu] * fy[mu]
        report[f"first_{mu + 1}"] = mismatch(lhs1, rhs1)
        report[f"second_{mu + 1}"] = mismatch(lhs2, rhs2)
    lhs = diff(diff(F, grid, 0, 1, acc), grid, 1, 1, acc)
    report["mixed"] = mismatch(lhs, R[0] * R[1] * fxy)
    report["max"] = max(report.values())
    return report


# --------------------------------------------------------------------------
# generalized momentum


@dataclass
class MomentumOperator:
    """p_alpha = -i hbar (div(alpha)/2 + alpha^mu d_mu) for alpha = shape * alpha0 * sin(omega t).

    Applied in the split form -i hbar (1/w) [d_mu(w alpha^mu psi) + w alpha^mu d_mu psi] / 2
    with antisymmetric central differences, which makes it exactly symmetric in
    the sqrt(g)-weighted inner product.
    """

    metric: MetricField
    shape: DisplacementShape
    alpha0: float
    omega: float
    div: ScalarField

    @classmethod
    def build(cls, metric: MetricField, shape: DisplacementShape):
        return cls(metric, shape, shape.alpha0, shape.omega, covariant_divergence(metric, shape))

    def matrix(self, acc: int = 2):
        """Sparse operator for unit amplitude (alpha = alpha_shape)."""
        grid = self.metric.grid
        n1, n2 = grid.shape
        h1, h2 = grid.spacing
        C1 = sp.kron(skew_central_matrix(n1, h1, grid.periodic[0], acc), sp.identity(n2), format="csr")
        C2 = sp.kron(sp.identity(n1), skew_central_matrix(n2, h2, grid.periodic[1], acc), format="csr")
        w = self.metric.sqrt_g.ravel()
        A1 = sp.diags(w * self.shape.component(0).ravel())
        A2 = sp.diags(w * self.shape.component(1).ravel())
        inner = C1 @ A1 + A1 @ C1 + C2 @ A2 + A2 @ C2
        return sp.csr_matrix((-0.5j * HBAR) * (sp.diags(1.0 / w) @ inner))

    def amplitude(self, t):
        return self.alpha0 * np.sin(self.omega * t)


def apply_alpha_momentum(op: MomentumOperator, psi, t: float):
    psi = np.asarray(psi.values if isinstance(psi, ScalarField) else psi)
    op.metric.grid.check(psi, "wave field")
    a = op.amplitude(t)
    if a == 0:
        return np.zeros(psi.shape, dtype=complex)
    return a * (op.matrix() @ psi.ravel()).reshape(psi.shape)


def apply_alpha_momentum_direct(op: MomentumOperator, psi, t: float, acc: int = 2):
    """Unsplit form -i hbar (div/2 psi + alpha^mu d_mu psi); reference for the split one."""
    psi = np.asarray(psi, dtype=complex)
    g = op.metric.grid
    a = op.amplitude(t)
    lead = op.shape.component(0) * diff(psi, g, 0, 1, acc) + op.shape.component(1) * diff(psi, g, 1, 1, acc)
    return -1j * HBAR * a * (0.5 * op.div.values * psi + lead)
