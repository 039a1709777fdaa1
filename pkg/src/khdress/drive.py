"""Laser drive: tangent projection of the vector potential, the displacement
field and its covariant divergence."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, GridMismatch, ZeroField
from .geometry import MetricField
from .grid import Grid, ScalarField, diff

log = logging.getLogger(__name__)


@dataclass
class DriveSpec:
    """Harmonic drive A(t) = A0 cos(omega t) acting on a charge Q of mass m.

    ``envelope`` is an optional scalar profile evaluated at embedding points
    (array of shape (..., 3)); the default drive is homogeneous.
    """

    A0: tuple = (0.0, 0.0, 0.0)
    omega: float = 1.0
    charge: float = -1.0
    mass: float = 1.0
    envelope: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.A0 = np.asarray(self.A0, dtype=float)
        if self.A0.shape != (3,) or not np.all(np.isfinite(self.A0)):
            raise ConfigError("A0 must be a finite 3-vector", "drive.A0")
        if not self.omega > 0:
            raise ConfigError(f"omega must be positive, got {self.omega}", "drive.omega")
        if not self.mass > 0:
            raise ConfigError(f"mass must be positive, got {self.mass}", "drive.mass")


@dataclass
class TangentField:
    grid: Grid
    cov: np.ndarray  # (N1, N2, 2) covariant A_mu
    contra: np.ndarray  # (N1, N2, 2) contravariant A^mu


def project_vector_potential(metric: MetricField, drive: DriveSpec, Y=None) -> TangentField:
    """Tangential components of the hyperspace amplitude.

    The normal part is dropped (gauge with vanishing normal component), so
    adding any multiple of n to A0 leaves the result unchanged.
    """
    cov = np.stack([metric.t1 @ drive.A0, metric.t2 @ drive.A0], axis=-1)
    if drive.envelope is not None:
        if Y is None:
            raise ConfigError("a spatial envelope needs the embedding points", "drive.envelope")
        metric.grid.check(Y, "embedding")
        cov = cov * np.asarray(drive.envelope(Y))[..., None]
    contra = np.einsum("...mn,...n->...m", metric.g_inv, cov)
    return TangentField(metric.grid, cov, contra)


# --------------------------------------------------------------------------
# displacement shapes


class AxisProfile:
    """One-dimensional shape component v(x) with exact derivatives.

    kinds: ``zero``; ``const`` (value); ``affine`` (a + b x); ``sech``
    (amp * sech((x - center) / width) + offset).
    """

    def __init__(self, kind="const", **p):
        self.kind = kind
        self.p = p
        if kind not in ("zero", "const", "affine", "sech"):
            raise ConfigError(f"unknown profile kind {kind!r}", "shape.kind")
        if kind == "sech" and not p.get("width", 1.0) > 0:
            raise ConfigError("sech width must be positive", "shape.width")

    @property
    def is_zero(self):
        return self.kind == "zero" or (self.kind == "const" and self.p.get("value", 1.0) == 0.0)

    def __call__(self, x, k=0):
        """k-th derivative of the profile at x (k = 0, 1, 2, 3)."""
        x = np.asarray(x, dtype=float)
        zero = np.zeros_like(x)
        if self.kind == "zero":
            return zero
        if self.kind == "const":
            return zero + (self.p.get("value", 1.0) if k == 0 else 0.0)
        if self.kind == "affine":
            a, b = self.p.get("a", 0.0), self.p.get("b", 1.0)
            return (a + b * x) if k == 0 else (zero + b if k == 1 else zero)
        amp, w = self.p.get("amp", 1.0), self.p.get("width", 1.0)
        c, off = self.p.get("center", 0.0), self.p.get("offset", 0.0)
        u = (x - c) / w
        s, t = 1.0 / np.cosh(u), np.tanh(u)
        if k == 0:
            return amp * s + off
        if k == 1:
            return -amp * s * t / w
        if k == 2:
            return amp * s * (t * t - s * s) / w**2
        if k == 3:
            return amp * s * t * (5 * s * s - t * t) / w**3
        raise ValueError("derivative order up to 3")

    def scaled(self, factor):
        p = dict(self.p)
        if self.kind == "const":
            p["value"] = p.get("value", 1.0) * factor
        elif self.kind == "affine":
            p["a"], p["b"] = p.get("a", 0.0) * factor, p.get("b", 1.0) * factor
        elif self.kind == "sech":
            p["amp"], p["offset"] = p.get("amp", 1.0) * factor, p.get("offset", 0.0) * factor
        return AxisProfile(self.kind, **p)


@dataclass
class DisplacementShape:
    """alpha^mu(q, t) = alpha_shape^mu(q) * alpha0 * sin(omega t).

    ``alpha_shape`` has unit max Euclidean norm over the grid (or vanishes).
    ``profiles`` holds exact per-axis components when the shape was prescribed
    as separable; it lets the Abel maps and derivatives avoid interpolation.
    ``normalization`` is the max norm that was divided out, so cropped or padded
    grids can reuse it.
    """

    grid: Grid
    alpha_shape: np.ndarray  # (N1, N2, 2)
    alpha0: float
    omega: float = 1.0
    profiles: Optional[tuple] = None
    normalization: float = 1.0

    def __post_init__(self):
        self.grid.check(self.alpha_shape, "alpha_shape")
        if not np.all(np.isfinite(self.alpha_shape)):
            raise ConfigError("displacement shape is not finite", "drive")
        if self.alpha0 < 0:
            raise ConfigError("alpha0 must be non-negative", "dressing.alpha0")

    def component(self, mu):
        return self.alpha_shape[..., mu]

    def with_alpha0(self, alpha0):
        return DisplacementShape(self.grid, self.alpha_shape, float(alpha0), self.omega, self.profiles, self.normalization)

    def on_grid(self, grid):
        """Same shape evaluated on another grid (only for prescribed profiles)."""
        if self.profiles is None:
            raise ConfigError("re-gridding needs an analytically prescribed shape", "drive")
        return prescribed_shape(grid, self.profiles, self.alpha0, self.omega, normalize=False)


def displacement_shape(A: TangentField, drive: DriveSpec, normalization: float | None = None) -> DisplacementShape:
    """Factor alpha = -(Q / (m omega)) A^mu_0 sin(omega t) into shape and amplitude."""
    norms = np.linalg.norm(A.contra, axis=-1)
    amax = float(norms.max()) if normalization is None else float(normalization)
    if amax == 0.0:
        return DisplacementShape(A.grid, np.zeros_like(A.contra), 0.0, drive.omega, None, 0.0)
    alpha0 = abs(drive.charge) * amax / (drive.mass * drive.omega)
    shape = -np.sign(drive.charge) * A.contra / amax
    return DisplacementShape(A.grid, shape, alpha0, drive.omega, None, amax)


def prescribed_shape(grid: Grid, profiles, alpha0: float, omega: float = 1.0, normalize: bool = True) -> DisplacementShape:
    """Separable shape alpha_shape = (p1(q1), p2(q2)) from two AxisProfile objects."""
    p1, p2 = profiles
    Q1, Q2 = grid.mesh()
    shape = np.stack([p1(Q1), p2(Q2)], axis=-1)
    scale = 1.0
    if normalize:
        m = float(np.linalg.norm(shape, axis=-1).max())
        if m == 0.0:
            if alpha0 != 0.0:
                raise ZeroField("prescribed displacement shape vanishes identically")
            return DisplacementShape(grid, shape, 0.0, omega, (p1, p2), 0.0)
        if m != 1.0:
            scale = m
            p1, p2 = p1.scaled(1.0 / m), p2.scaled(1.0 / m)
            shape = shape / m
    return DisplacementShape(grid, shape, float(alpha0) * scale, omega, (p1, p2), scale)


def shape_derivative(shape: DisplacementShape, mu: int, nu: int, k: int = 1, acc: int = 2):
    """d^k alpha_shape^mu / (dq^nu)^k, exact for prescribed profiles."""
    if shape.profiles is not None:
        if mu != nu:
            return np.zeros(shape.grid.shape)
        Q = shape.grid.mesh()[mu]
        return shape.profiles[mu](Q, k)
    return diff(shape.component(mu), shape.grid, nu, k, acc)


def covariant_divergence(metric: MetricField, shape: DisplacementShape, acc: int = 2) -> ScalarField:
    """div(alpha_shape) = (1/sqrt g) d_mu (sqrt g alpha_shape^mu)."""
    if not metric.grid.matches(shape.grid):
        raise GridMismatch("metric and displacement shape live on different grids")
    sg = metric.sqrt_g
    tot = diff(sg * shape.component(0), metric.grid, 0, 1, acc) + diff(sg * shape.component(1), metric.grid, 1, 1, acc)
    return ScalarField(tot / sg, metric.grid, unit="1/length")


@dataclass
class ChargeBalance:
    integral: float
    boundary_flux: float
    scale: float  # integral of |div|, floored at 1e-12 of the chart area

    @property
    def residual(self):
        return self.integral - self.boundary_flux

    @property
    def normalized(self):
        """|integral - boundary flux| relative to the integral of |div|."""
        return abs(self.residual) / self.scale


def charge_balance(divfield: ScalarField, metric: MetricField, shape: DisplacementShape | None = None) -> ChargeBalance:
    """Integrated divergence over the truncated chart, with the boundary flux.

    On a closed or periodic chart both vanish; on a truncated non-compact chart
    they agree to quadrature accuracy (divergence theorem).
    """
    grid = metric.grid
    if not grid.matches(divfield.grid):
        raise GridMismatch("divergence and metric live on different grids")
    w = grid.quadrature_weights() * metric.sqrt_g
    integral = float(np.sum(divfield.values * w))
    scale = max(float(np.sum(np.abs(divfield.values) * w)), 1e-12 * float(np.sum(w)))
    flux = 0.0
    if shape is not None:
        h1, h2 = grid.spacing
        F = metric.sqrt_g[..., None] * shape.alpha_shape
        if not grid.periodic[0]:
            t = np.full(grid.shape[1], h2)
            if not grid.periodic[1]:
                t[0] *= 0.5
                t[-1] *= 0.5
            flux += float(np.sum((F[-1, :, 0] - F[0, :, 0]) * t))
        if not grid.periodic[1]:
            t = np.full(grid.shape[0], h1)
            if not grid.periodic[0]:
                t[0] *= 0.5
                t[-1] *= 0.5
            flux += float(np.sum((F[:, -1, 1] - F[:, 0, 1]) * t))
    return ChargeBalance(integral, flux, scale)
