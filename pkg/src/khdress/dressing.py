"""Kramers-Henneberger dressing of the scalar potential and of the
Laplace-Beltrami operator.

Time convention. The shift applied at time t is tau(t) = alpha0 sin(omega t).
Quadrature runs over theta in [-pi, pi) with tau = -alpha0 sin(theta), i.e.
theta = -omega t, and every dressed quantity is stored as

    Q(t) = Q0 + sum_n (Qn_cos cos(n omega t) - Qn_sin sin(n omega t)),

where Qn_cos, Qn_sin are the plain cos/sin Fourier coefficients in theta.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .drive import DisplacementShape, covariant_divergence
from .errors import ConfigError, GridMismatch, NonConvergedTail
from .geometry import SLOTS, MetricField, apply_slots, lb_coefficients, slot_matrices
from .grid import GridInterpolator, ScalarField, diff
from .shift import AbelMap, shift_field

log = logging.getLogger(__name__)

TAIL_TOL = 1e-6


def quadrature_angles(n_theta: int):
    if n_theta < 64 or n_theta % 2:
        raise ConfigError(f"n_theta must be even and >= 64, got {n_theta}", "dressing.n_theta")
    return -np.pi + 2 * np.pi * np.arange(n_theta) / n_theta


def _fourier_accumulate(sample, thetas, n_max, shape, chunk=32):
    """Cos/sin Fourier coefficients (orders 0..n_max) of a theta series.

    ``sample(theta)`` returns an array of ``shape``; the series is never held
    in memory in full. Returns (c, s) with c[0] the mean and c[n], s[n] the
    1/pi-normalized coefficients.
    """
    N = thetas.size
    n = np.arange(n_max + 1)
    c = np.zeros((n_max + 1,) + shape)
    s = np.zeros((n_max + 1,) + shape)
    for start in range(0, N, chunk):
        th = thetas[start:start + chunk]
        block = np.stack([sample(t) for t in th])
        cos_w = np.cos(np.outer(th, n))
        sin_w = np.sin(np.outer(th, n))
        c += np.tensordot(cos_w, block, axes=(0, 0))
        s += np.tensordot(sin_w, block, axes=(0, 0))
    c[0] /= N
    c[1:] *= 2.0 / N
    s[1:] *= 2.0 / N
    s[0] = 0.0
    return c, s


# --------------------------------------------------------------------------
# potential


@dataclass
class DressedPotential:
    F0: ScalarField
    harmonics: list  # [(Fn_cos, Fn_sin)] for n = 1..n_max
    alpha0: float
    omega: float
    tail: float = 0.0

    @property
    def n_max(self):
        return len(self.harmonics)


def dress_potential(V: ScalarField, maps: AbelMap, alpha0: float, n_max: int = 8, n_theta: int = 256,
                    omega: float = 1.0, policy: str = "error", tail_action: str = "warn") -> DressedPotential:
    """Fourier data in time of the flowed potential V(g_tau(q))."""
    if n_max < 0:
        raise ConfigError("n_max must be non-negative", "dressing.n_max")
    thetas = quadrature_angles(n_theta)
    grid = V.grid
    if alpha0 == 0:
        zero = np.zeros(grid.shape)
        harm = [(ScalarField(zero.copy(), grid, V.unit), ScalarField(zero.copy(), grid, V.unit)) for _ in range(n_max)]
        return DressedPotential(ScalarField(V.values.copy(), grid, V.unit), harm, 0.0, omega, 0.0)

    def sample(th):
        return shift_field(V, maps, -alpha0 * np.sin(th), policy).values

    c, s = _fourier_accumulate(sample, thetas, n_max, grid.shape)
    harm = [(ScalarField(c[n], grid, V.unit), ScalarField(s[n], grid, V.unit)) for n in range(1, n_max + 1)]
    # relative to the undressed scale: the static part itself may vanish (Bessel zeros)
    tail = _tail(c, s, float(np.nanmax(np.abs(V.values))))
    _report_tail(tail, "potential", tail_action)
    return DressedPotential(ScalarField(c[0], grid, V.unit), harm, float(alpha0), omega, tail)


def _tail(c, s, base=None):
    """Largest top-order harmonic relative to ``base`` (default: the static part)."""
    if c.shape[0] < 2:
        return 0.0
    top = np.nanmax(np.hypot(c[-1], s[-1]))
    base = np.nanmax(np.abs(c[0])) if base is None else base
    if base == 0:
        return 0.0 if top == 0 else np.inf
    return float(top / base)


def _report_tail(tail, what, action):
    if tail > TAIL_TOL:
        msg = f"{what}: highest harmonic is {tail:.3g} of the static part (threshold {TAIL_TOL:g})"
        if action == "warn":
            warnings.warn(msg, NonConvergedTail, stacklevel=3)
        elif action == "log":
            log.info(msg)


def time_average(V: ScalarField, maps: AbelMap, alpha0: float, n_t: int = 4096, policy: str = "error") -> np.ndarray:
    """One-period average of V(g_{tau(t)}(q)) by direct sampling in t."""
    acc = np.zeros(V.grid.shape)
    for k in range(n_t):
        acc += shift_field(V, maps, alpha0 * np.sin(2 * np.pi * k / n_t), policy).values
    return acc / n_t


def reconstruct_potential(dp: DressedPotential, t: float) -> ScalarField:
    out = dp.F0.values.copy()
    for n, (fc, fs) in enumerate(dp.harmonics, start=1):
        out += fc.values * np.cos(n * dp.omega * t) - fs.values * np.sin(n * dp.omega * t)
    return ScalarField(out, dp.F0.grid, dp.F0.unit)


# --------------------------------------------------------------------------
# conjugated Laplacian


@dataclass
class RawConjugatedCoeffs:
    """Coefficients of exp(phi) Delta exp(-phi) with phi = tau div / 2.

    Delta' = A^{mu nu} d_mu d_nu + (B0^nu + tau B1^nu) d_nu + tau C1 + tau^2 C2
    """

    metric: MetricField
    g_inv: np.ndarray
    B0: np.ndarray  # (N1, N2, 2)
    B1: np.ndarray  # (N1, N2, 2)
    C1: np.ndarray
    C2: np.ndarray
    div: np.ndarray
    acc: int = 2

    @property
    def grid(self):
        return self.metric.grid


def conjugated_laplacian_coeffs(metric: MetricField, shape: DisplacementShape, acc: int = 2) -> RawConjugatedCoeffs:
    """Independent of alpha0: built from the shape alone."""
    if not metric.grid.matches(shape.grid):
        raise GridMismatch("metric and displacement shape live on different grids")
    grid = metric.grid
    d = covariant_divergence(metric, shape, acc).values
    bare = lb_coefficients(metric, acc)
    gi = metric.g_inv
    dd = np.stack([diff(d, grid, 0, 1, acc), diff(d, grid, 1, 1, acc)], axis=-1)
    grad_up = np.einsum("...mn,...m->...n", gi, dd)
    lap_d = apply_slots(bare, slot_matrices(grid, acc), d)
    B0 = np.stack([bare["d1"], bare["d2"]], axis=-1)
    C2 = 0.25 * np.einsum("...m,...m->...", dd, grad_up)
    return RawConjugatedCoeffs(metric, gi.copy(), B0, -grad_up, -0.5 * lap_d, C2, d, acc)


class _Composer:
    """Evaluates the sin-power coefficient parts at flowed points for a given tau."""

    def __init__(self, raw: RawConjugatedCoeffs, maps: AbelMap, policy="error"):
        if not raw.grid.matches(maps.grid):
            raise GridMismatch("raw coefficients and Abel maps live on different grids")
        self.raw, self.maps, self.policy = raw, maps, policy
        gi = raw.g_inv
        self.fields = {
            "g11": gi[..., 0, 0], "g22": gi[..., 1, 1], "g12": gi[..., 0, 1],
            "b1": raw.B0[..., 0], "b2": raw.B0[..., 1],
            "e1": raw.B1[..., 0], "e2": raw.B1[..., 1],
            "c1": raw.C1, "c2": raw.C2,
        }
        self._interp = {}

    def _at(self, key, y1, y2, tau):
        vals = self.fields[key]
        if tau == 0:
            return vals
        if key not in self._interp:
            self._interp[key] = GridInterpolator(self.raw.grid, vals)
        return self._interp[key](y1, y2)

    def parts(self, tau):
        """(X, Y, Z) slot dictionaries; the composed operator is X + tau Y + tau^2 Z."""
        grid = self.raw.grid
        q = (grid.q1, grid.q2)
        if tau == 0:
            y = q
            masks = (np.ones(q[0].size, bool), np.ones(q[1].size, bool))
        else:
            y1, y2, m1, m2 = self.maps.flow(q[0], q[1], tau, self.policy)
            y = (np.where(m1, y1, q[0]), np.where(m2, y2, q[1]))
            masks = (m1, m2)
        rho, curv = [], []
        for mu, ax in enumerate(self.maps.axes):
            if ax.static or tau == 0:
                rho.append(np.ones_like(q[mu]))
                curv.append(np.zeros_like(q[mu]))
            else:
                vy = ax.v(y[mu])
                rho.append(ax.v(q[mu]) / vy)
                curv.append((ax.v(q[mu], 1) - ax.v(y[mu], 1)) / vy)
        r1, r2 = rho[0][:, None], rho[1][None, :]
        k1, k2 = curv[0][:, None], curv[1][None, :]
        at = {k: self._at(k, y[0], y[1], tau) for k in self.fields}
        ones = np.ones(grid.shape)
        X = {
            "d11": at["g11"] * r1**2 * ones,
            "d22": at["g22"] * r2**2 * ones,
            "d12": 2.0 * at["g12"] * r1 * r2 * ones,
            "d1": (at["g11"] * k1 + at["b1"]) * r1 * ones,
            "d2": (at["g22"] * k2 + at["b2"]) * r2 * ones,
            "id": np.zeros(grid.shape),
        }
        Y = {
            "d1": at["e1"] * r1 * ones,
            "d2": at["e2"] * r2 * ones,
            "id": at["c1"] * ones,
        }
        Z = {"id": at["c2"] * ones}
        if not (masks[0].all() and masks[1].all()):
            bad = ~np.outer(masks[0], masks[1])
            for part in (X, Y, Z):
                for k in part:
                    part[k] = np.where(bad, np.nan, part[k])
        return X, Y, Z


def sin_power_terms(raw: RawConjugatedCoeffs, maps: AbelMap, tau: float, policy: str = "error"):
    """Sin-power split (X, Y, Z) of the conjugated operator at shift tau."""
    return _Composer(raw, maps, policy).parts(tau)


def composed_coefficients(raw: RawConjugatedCoeffs, maps: AbelMap, tau: float, policy: str = "error") -> dict:
    """Slot coefficients of Omega1 Omega2 Delta Omega2^-1 Omega1^-1 at shift tau."""
    X, Y, Z = sin_power_terms(raw, maps, tau, policy)
    out = {k: v.copy() for k, v in X.items()}
    for k, v in Y.items():
        out[k] = out[k] + tau * v
    out["id"] = out["id"] + tau**2 * Z["id"]
    return out


@dataclass
class DressedLaplacian:
    """Static slot coefficients D0 and per-harmonic (cos, sin) slot coefficients."""

    grid: object
    D0: dict
    harmonics: list  # [(dict cos, dict sin)] for n = 1..n_max
    bare: dict
    alpha0: float
    omega: float
    tail: float = 0.0

    @property
    def n_max(self):
        return len(self.harmonics)

    def at(self, t: float, n_used: int | None = None) -> dict:
        n_used = self.n_max if n_used is None else min(n_used, self.n_max)
        out = {k: v.copy() for k, v in self.D0.items()}
        for n in range(1, n_used + 1):
            dc, ds = self.harmonics[n - 1]
            c, s = np.cos(n * self.omega * t), np.sin(n * self.omega * t)
            for k in SLOTS:
                out[k] = out[k] + c * dc[k] - s * ds[k]
        return out

    def crop(self, slices, grid):
        def cut(d):
            return {k: v[slices] for k, v in d.items()}
        return DressedLaplacian(grid, cut(self.D0), [(cut(c), cut(s)) for c, s in self.harmonics],
                                cut(self.bare), self.alpha0, self.omega, self.tail)


def _series_coefficients(X, Y, Z, alpha0, n):
    """Order-n cos and sin theta coefficients of X + tau Y + tau^2 Z, tau = -alpha0 sin(theta).

    X, Y, Z are given as (c, s) Fourier arrays indexed by order. Products with
    sin(theta) and sin(theta)^2 are resolved with the product-to-sum rules;
    orders 1 and 2 pick up the reflected terms from negative indices.
    """
    (Xc, Xs), (Yc, Ys), (Zc, Zs) = X, Y, Z
    K = Xc.shape[0] - 1

    def get(a, m):
        return a[m] if 0 <= m <= K else 0.0

    if n == 0:
        return Xc[0] - 0.5 * alpha0 * Ys[1] + 0.5 * alpha0**2 * (Zc[0] - 0.5 * Zc[2]), None
    # sin(theta) * Y
    ycos = 0.5 * (get(Ys, n + 1) - get(Ys, n - 1))
    if n == 1:
        ysin = Yc[0] - 0.5 * Yc[2]
    else:
        ysin = 0.5 * (get(Yc, n - 1) - get(Yc, n + 1))
    # sin(theta)^2 * Z
    if n == 1:
        zcos = 0.25 * (Zc[1] - get(Zc, 3))
        zsin = 0.75 * Zs[1] - 0.25 * get(Zs, 3)
    elif n == 2:
        zcos = 0.5 * Zc[2] - 0.25 * get(Zc, 4) - 0.5 * Zc[0]
        zsin = 0.5 * Zs[2] - 0.25 * get(Zs, 4)
    else:
        zcos = 0.5 * Zc[n] - 0.25 * (get(Zc, n + 2) + get(Zc, n - 2))
        zsin = 0.5 * Zs[n] - 0.25 * (get(Zs, n + 2) + get(Zs, n - 2))
    cos_n = Xc[n] - alpha0 * ycos + alpha0**2 * zcos
    sin_n = Xs[n] - alpha0 * ysin + alpha0**2 * zsin
    return cos_n, sin_n


def dress_laplacian(raw: RawConjugatedCoeffs, shape: DisplacementShape, maps: AbelMap, alpha0: float,
                    n_max: int = 8, n_theta: int = 256, policy: str = "error", tail_action: str = "warn") -> DressedLaplacian:
    """Fourier-analyze the sin-power parts over theta and assemble D0 and the harmonics."""
    grid = raw.grid
    bare = lb_coefficients(raw.metric, raw.acc)
    if alpha0 == 0:
        zero = {k: np.zeros(grid.shape) for k in SLOTS}
        harm = [({k: v.copy() for k, v in zero.items()}, {k: v.copy() for k, v in zero.items()}) for _ in range(n_max)]
        return DressedLaplacian(grid, {k: v.copy() for k, v in bare.items()}, harm, bare, 0.0, shape.omega)
    thetas = quadrature_angles(n_theta)
    comp = _Composer(raw, maps, policy)
    K = n_max + 2
    xkeys, ykeys = list(SLOTS), ["d1", "d2", "id"]
    layout = [("X", k) for k in xkeys] + [("Y", k) for k in ykeys] + [("Z", "id")]

    def sample(th):
        X, Y, Z = comp.parts(-alpha0 * np.sin(th))
        parts = {"X": X, "Y": Y, "Z": Z}
        return np.stack([parts[p][k] for p, k in layout])

    c, s = _fourier_accumulate(sample, thetas, K, (len(layout),) + grid.shape)
    zero = np.zeros((K + 1,) + grid.shape)

    def series(part, key):
        if (part, key) not in layout:
            return zero, zero
        i = layout.index((part, key))
        return c[:, i], s[:, i]

    D0, harm = {}, [({}, {}) for _ in range(n_max)]
    for key in SLOTS:
        X, Y, Z = series("X", key), series("Y", key), series("Z", key)
        D0[key] = _series_coefficients(X, Y, Z, alpha0, 0)[0]
        for n in range(1, n_max + 1):
            cn, sn = _series_coefficients(X, Y, Z, alpha0, n)
            harm[n - 1][0][key] = cn * np.ones(grid.shape)
            harm[n - 1][1][key] = sn * np.ones(grid.shape)
    tail = 0.0
    if n_max:
        top = max(np.nanmax(np.abs(harm[-1][0][k]) + np.abs(harm[-1][1][k])) for k in SLOTS)
        base = max(np.nanmax(np.abs(D0[k])) for k in SLOTS)
        tail = float(top / base) if base > 0 else 0.0
        _report_tail(tail, "laplacian", tail_action)
    return DressedLaplacian(grid, D0, harm, bare, float(alpha0), shape.omega, tail)


def composed_action_direct(metric: MetricField, shape: DisplacementShape, maps: AbelMap, f: ScalarField, tau: float,
                           acc: int = 2):
    """Omega1 Omega2 Delta Omega2^-1 Omega1^-1 f built literally from shifts,
    multiplications and the discrete Laplace-Beltrami operator.

    Nodes whose inner shift leaves the chart are zero-filled before the outer
    interpolation and reported as NaN; the spline's influence of that fill
    decays geometrically with the node distance from the band. ``acc > 2``
    switches the Laplacian to the slot form with stencils of that order.
    """
    from .geometry import laplace_beltrami

    d = covariant_divergence(metric, shape, acc).values
    u = shift_field(f, maps, -tau, policy="mask").values
    bad = ~np.isfinite(u)
    u = np.where(bad, 0.0, np.exp(-0.5 * tau * d) * u)
    if acc == 2:
        w = laplace_beltrami(metric, u).values
    else:
        w = apply_slots(lb_coefficients(metric, acc), slot_matrices(metric.grid, acc), u)
    w = ScalarField(np.exp(0.5 * tau * d) * w, metric.grid)
    out = shift_field(w, maps, tau, policy="mask").values
    if bad.any():
        band = bad.astype(float)
        band = shift_field(ScalarField(band, metric.grid), maps, tau, policy="mask").values
        out[~np.isfinite(band) | (np.abs(np.nan_to_num(band, nan=1.0)) > 1e-3)] = np.nan
    return ScalarField(out, metric.grid)


# --------------------------------------------------------------------------
# BCH truncation diagnostic


@dataclass
class BchDiagnostic:
    s: ScalarField
    s_div: ScalarField
    neglected_norm: float
    masked: int = 0
    mask: np.ndarray = field(default=None, repr=False)


def bch_diagnostic(shape: DisplacementShape, metric: MetricField, alpha0: float | None = None, acc: int = 2,
                   zero_tol: float = 1e-12) -> BchDiagnostic:
    """s = alpha^mu d_mu ln|div| at unit sine and the size of the dropped commutator.

    The product s * div = alpha^mu d_mu div is formed directly, so nodes where
    the divergence vanishes only mask s, not the norm.
    """
    alpha0 = shape.alpha0 if alpha0 is None else alpha0
    grid = metric.grid
    d = covariant_divergence(metric, shape, acc).values
    sd = shape.component(0) * diff(d, grid, 0, 1, acc) + shape.component(1) * diff(d, grid, 1, 1, acc)
    scale = np.max(np.abs(d)) if d.size else 0.0
    mask = np.abs(d) <= zero_tol * max(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(mask, np.nan, sd / d)
    if scale == 0.0:
        s = np.zeros(grid.shape)
        mask = np.zeros(grid.shape, dtype=bool)
    norm = 0.25 * alpha0**2 * float(np.max(np.abs(sd)))
    return BchDiagnostic(ScalarField(s, grid), ScalarField(sd, grid), norm, int(mask.sum()), mask)


def reconstruct_laplacian(dl: DressedLaplacian, t: float, n_used: int | None = None) -> dict:
    return dl.at(t, n_used)
