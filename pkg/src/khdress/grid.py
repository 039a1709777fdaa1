"""Tensor-product parameter grids, finite differences and field interpolation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline

from .errors import ConfigError, GridMismatch


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid on a parameter rectangle.

    Periodic axes exclude the right end point, so ``N`` nodes cover one period
    with spacing ``(hi - lo) / N``. Arrays living on the grid have shape
    ``(N1, N2)`` with C ordering of the flattened index ``i * N2 + j``.
    """

    q1: np.ndarray
    q2: np.ndarray
    periodic: tuple = (False, False)
    period: tuple = (None, None)

    @classmethod
    def uniform(cls, domain, resolution, periodic=(False, False)):
        axes, periods = [], []
        for (lo, hi), n, per in zip(domain, resolution, periodic):
            lo, hi, n = float(lo), float(hi), int(n)
            if not hi > lo:
                raise ConfigError(f"degenerate interval [{lo}, {hi}]", "domain")
            if n < 8:
                raise ConfigError(f"need at least 8 nodes per axis, got {n}", "resolution")
            if per:
                axes.append(lo + (hi - lo) * np.arange(n) / n)
                periods.append(hi - lo)
            else:
                axes.append(np.linspace(lo, hi, n))
                periods.append(None)
        return cls(axes[0], axes[1], tuple(bool(p) for p in periodic), tuple(periods))

    @property
    def shape(self):
        return (self.q1.size, self.q2.size)

    @property
    def size(self):
        return self.q1.size * self.q2.size

    @property
    def spacing(self):
        return (self.q1[1] - self.q1[0], self.q2[1] - self.q2[0])

    def axis(self, mu):
        return self.q1 if mu == 0 else self.q2

    def mesh(self):
        return np.meshgrid(self.q1, self.q2, indexing="ij")

    def domain(self):
        out = []
        for mu in range(2):
            x = self.axis(mu)
            hi = x[0] + self.period[mu] if self.periodic[mu] else x[-1]
            out.append((float(x[0]), float(hi)))
        return tuple(out)

    def matches(self, other):
        return (
            self is other
            or (
                self.shape == other.shape
                and self.periodic == other.periodic
                and np.array_equal(self.q1, other.q1)
                and np.array_equal(self.q2, other.q2)
            )
        )

    def check(self, array, what="field"):
        if np.shape(array)[:2] != self.shape:
            raise GridMismatch(f"{what} has shape {np.shape(array)}, grid is {self.shape}")

    def interior_mask(self):
        """True on nodes that are unknowns under Dirichlet truncation."""
        m = np.ones(self.shape, dtype=bool)
        if not self.periodic[0]:
            m[0, :] = m[-1, :] = False
        if not self.periodic[1]:
            m[:, 0] = m[:, -1] = False
        return m

    def quadrature_weights(self):
        """Trapezoid weights (rectangle rule along periodic axes) times the cell area."""
        ws = []
        for mu in range(2):
            n = self.shape[mu]
            w = np.full(n, self.spacing[mu])
            if not self.periodic[mu]:
                w[0] *= 0.5
                w[-1] *= 0.5
            ws.append(w)
        return np.outer(ws[0], ws[1])

    def padded(self, n1, n2):
        """Grid extended by ``n`` nodes on both ends of each non-periodic axis.

        Returns the new grid and the index slices recovering the original nodes.
        """
        axes, slices = [], []
        for mu, n in enumerate((n1, n2)):
            x = self.axis(mu)
            if self.periodic[mu] or n == 0:
                axes.append(x)
                slices.append(slice(None))
                continue
            h = x[1] - x[0]
            left = x[0] - h * np.arange(n, 0, -1)
            right = x[-1] + h * np.arange(1, n + 1)
            axes.append(np.concatenate([left, x, right]))
            slices.append(slice(n, n + x.size))
        return Grid(axes[0], axes[1], self.periodic, self.period), tuple(slices)


@dataclass
class ScalarField:
    """Grid function with a unit tag and an optional exact evaluator.

    ``func(Q1, Q2)`` evaluates the field at arbitrary parameter points given as
    broadcastable arrays; when present it is used instead of interpolation.
    """

    values: np.ndarray
    grid: Grid
    unit: str = "dimensionless"
    func: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.grid.check(self.values, "ScalarField")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.values)))

    def evaluate(self, x1, x2):
        """Values on the tensor product of coordinate arrays ``x1`` and ``x2``."""
        if self.func is not None:
            X1, X2 = np.meshgrid(x1, x2, indexing="ij")
            return np.broadcast_to(self.func(X1, X2), X1.shape).astype(self.values.dtype, copy=True)
        return interpolator(self.grid, self.values)(x1, x2)


def as_values(f):
    return f.values if isinstance(f, ScalarField) else np.asarray(f)


# --------------------------------------------------------------------------
# finite differences


def fd_weights(z, x, m):
    """Fornberg weights for derivatives 0..m at ``z`` on nodes ``x``.

    Returns an array ``c`` of shape ``(len(x), m + 1)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def diff_matrix(n, h, deriv=1, acc=2, periodic=False):
    """Sparse 1D derivative matrix.

    Central stencils of order ``acc`` in the interior, one-sided stencils of the
    same order at the ends of a non-periodic axis, wrap-around when periodic.
    """
    if acc % 2:
        raise ValueError("acc must be even")
    p = (deriv + 1) // 2 - 1 + acc // 2
    offsets = np.arange(-p, p + 1)
    central = fd_weights(0.0, offsets, deriv)[:, deriv] / h**deriv
    rows, cols, vals = [], [], []
    if periodic:
        for i in range(n):
            rows.extend([i] * offsets.size)
            cols.extend((i + offsets) % n)
            vals.extend(central)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    width = deriv + acc
    if n < width:
        raise ValueError("axis too short for the requested stencil")
    for i in range(n):
        if p <= i < n - p:
            idx = i + offsets
            w = central
        else:
            start = 0 if i < p else n - width
            idx = np.arange(start, start + width)
            w = fd_weights(float(i), idx.astype(float), deriv)[:, deriv] / h**deriv
        rows.extend([i] * idx.size)
        cols.extend(idx)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def skew_central_matrix(n, h, periodic=False, acc=2):
    """Central first derivative of even order ``acc`` kept exactly antisymmetric.

    End rows of a non-periodic axis are truncated rather than one-sided; they
    only matter for functions that do not vanish at the boundary.
    """
    if acc % 2 or acc < 2:
        raise ValueError("acc must be a positive even integer")
    p = acc // 2
    offs = np.arange(-p, p + 1)
    w = fd_weights(0.0, offs.astype(float), 1)[:, 1] / h
    w = 0.5 * (w - w[::-1])
    rows, cols, vals = [], [], []
    for i in range(n):
        for off, v in zip(offs, w):
            if off == 0:
                continue
            j = i + off
            if periodic:
                j %= n
            elif not 0 <= j < n:
                continue
            rows.append(i)
            cols.append(j)
            vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def diff(f, grid, axis, deriv=1, acc=2):
    """Derivative of a grid array (real or complex, optional trailing dims)."""
    f = np.asarray(f)
    n = grid.shape[axis]
    D = _cached_matrix(n, float(grid.spacing[axis]), deriv, acc, grid.periodic[axis])
    moved = np.moveaxis(f, axis, 0)
    out = (D @ moved.reshape(n, -1)).reshape(moved.shape)
    return np.moveaxis(out, 0, axis)


_MATRIX_CACHE = {}


def _cached_matrix(n, h, deriv, acc, periodic):
    key = (n, h, deriv, acc, periodic)
    if key not in _MATRIX_CACHE:
        if len(_MATRIX_CACHE) > 256:
            _MATRIX_CACHE.clear()
        _MATRIX_CACHE[key] = diff_matrix(n, h, deriv, acc, periodic)
    return _MATRIX_CACHE[key]


def operator_2d(grid, m1, m2, acc=2):
    """Sparse full-grid matrix of the derivative d^m1/dq1^m1 d^m2/dq2^m2."""
    n1, n2 = grid.shape
    h1, h2 = grid.spacing
    A = sp.identity(n1, format="csr") if m1 == 0 else diff_matrix(n1, h1, m1, acc, grid.periodic[0])
    B = sp.identity(n2, format="csr") if m2 == 0 else diff_matrix(n2, h2, m2, acc, grid.periodic[1])
    return sp.kron(A, B, format="csr")


# --------------------------------------------------------------------------
# interpolation


class GridInterpolator:
    """Quintic tensor spline through grid values, periodic where the grid is.

    Evaluated on tensor products of coordinate arrays, which is exactly what
    separable flows produce.
    """

    PAD = 7

    def __init__(self, grid, values, k=5):
        values = np.asarray(values)
        grid.check(values, "interpolated field")
        self.grid = grid
        self.k = k
        axes = []
        data = values
        for mu in range(2):
            x = grid.axis(mu)
            if grid.periodic[mu]:
                P = grid.period[mu]
                pad = min(self.PAD, x.size)
                x = np.concatenate([x[-pad:] - P, x, x[:pad] + P])
                data = np.take(data, np.arange(-pad, grid.shape[mu] + pad), axis=mu, mode="wrap")
            axes.append(x)
        self._axes = axes
        self._complex = np.iscomplexobj(data)
        parts = [data.real, data.imag] if self._complex else [data]
        self._splines = [RectBivariateSpline(axes[0], axes[1], np.ascontiguousarray(p), kx=k, ky=k, s=0) for p in parts]

    def _wrap(self, mu, x):
        x = np.asarray(x, dtype=float)
        if self.grid.periodic[mu]:
            x0 = self.grid.axis(mu)[0]
            x = x0 + np.mod(x - x0, self.grid.period[mu])
        return x

    def __call__(self, x1, x2, d1=0, d2=0):
        x1 = np.atleast_1d(self._wrap(0, x1))
        x2 = np.atleast_1d(self._wrap(1, x2))
        o1, o2 = np.argsort(x1, kind="stable"), np.argsort(x2, kind="stable")
        i1, i2 = np.empty_like(o1), np.empty_like(o2)
        i1[o1] = np.arange(o1.size)
        i2[o2] = np.arange(o2.size)
        res = [s(x1[o1], x2[o2], dx=d1, dy=d2, grid=True)[np.ix_(i1, i2)] for s in self._splines]
        return res[0] + 1j * res[1] if self._complex else res[0]


def interpolator(grid, values, k=5):
    return GridInterpolator(grid, values, k=k)


# --------------------------------------------------------------------------
# inner products


def node_weights(grid, sqrt_g):
    """Weights of the metric inner product: sqrt|g| dq1 dq2 per node."""
    h1, h2 = grid.spacing
    return np.asarray(sqrt_g) * h1 * h2


def inner(phi, psi, weights):
    return np.sum(np.conj(phi) * psi * weights)


def norm(psi, weights):
    return float(np.sqrt(np.real(inner(psi, psi, weights))))
