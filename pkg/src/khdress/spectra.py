"""Discrete dressed Hamiltonians and their low-lying spectra."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dressing import DressedLaplacian, DressedPotential
from .errors import FactorizationFailed, GridMismatch, NotConverged, UnknownBoundary
from .geometry import SLOTS, MetricField, lb_matrix, slot_matrices
from .grid import ScalarField
from .units import HBAR

log = logging.getLogger(__name__)

BOUNDARIES = ("dirichlet", "periodic")


def unknown_indices(grid, boundary="dirichlet"):
    """Flat indices of the unknowns: every node off a non-periodic chart edge."""
    if boundary not in BOUNDARIES:
        raise UnknownBoundary(f"unknown boundary {boundary!r}; expected one of {BOUNDARIES}", "solve.boundary")
    if boundary == "periodic" and not all(grid.periodic):
        # periodic on the compact axes, Dirichlet on the rest
        log.debug("periodic boundary requested; non-periodic axes keep Dirichlet truncation")
    return np.flatnonzero(grid.interior_mask().ravel())


def _restrict(M, idx):
    return sp.csr_matrix(M[idx][:, idx])


@dataclass
class AssembledOperator:
    """H restricted to the unknowns with the weights of the metric inner product."""

    matrix: sp.csr_matrix
    weights: np.ndarray
    index: np.ndarray
    grid: object
    symmetric: bool
    time_independent: bool = True
    harmonics: list = field(default_factory=list)  # [(Hn_cos, Hn_sin)]
    omega: float = 1.0

    @property
    def n(self):
        return self.index.size

    def at(self, t: float, n_used: int | None = None):
        if self.time_independent or not self.harmonics:
            return self.matrix
        n_used = len(self.harmonics) if n_used is None else min(n_used, len(self.harmonics))
        M = self.matrix
        for n in range(1, n_used + 1):
            hc, hs = self.harmonics[n - 1]
            M = M + np.cos(n * self.omega * t) * hc - np.sin(n * self.omega * t) * hs
        return sp.csr_matrix(M)

    def to_grid(self, v):
        out = np.zeros(self.grid.size, dtype=np.result_type(v, float))
        out[self.index] = v
        return out.reshape(self.grid.shape)

    def from_grid(self, f):
        return np.asarray(f).ravel()[self.index]

    def inner(self, a, b):
        return np.sum(np.conj(a) * b * self.weights)

    def norm(self, a):
        return float(np.sqrt(np.real(self.inner(a, a))))

    def symmetry_defect(self):
        """max |W H - (W H)^T| relative to max |W H|."""
        WH = sp.diags(self.weights) @ self.matrix
        d = abs(WH - WH.T).max()
        return float(d / max(abs(WH).max(), 1e-300))


def assemble(dl: DressedLaplacian | None, dp, metric: MetricField, mass: float = 1.0,
             boundary: str = "dirichlet", include_harmonics: bool = False) -> AssembledOperator:
    """H = -(hbar^2 / 2m) [L + sum_slots (D_slot - bare_slot) S_slot] + F.

    ``L`` is the symmetric plain Laplace-Beltrami matrix, so the bare operator
    (no dressing or alpha0 = 0) is self-adjoint in the weighted product; the
    dressing enters as a slot-wise correction. ``dp`` is a DressedPotential or a
    plain potential field/array.
    """
    grid = metric.grid
    idx = unknown_indices(grid, boundary)
    kin = -(HBAR**2) / (2 * mass)
    L = lb_matrix(metric)
    if isinstance(dp, DressedPotential):
        V, Vharm = dp.F0.values, dp.harmonics
    else:
        V = np.asarray(dp.values if isinstance(dp, ScalarField) else dp, dtype=float)
        Vharm = []
    grid.check(V, "potential")
    dressed = dl is not None and dl.alpha0 != 0
    mats = slot_matrices(grid) if dressed or (dl is not None and include_harmonics) else None
    K = L
    if dressed:
        if dl.grid.shape != grid.shape:
            raise GridMismatch("dressed coefficients and metric live on different grids")
        corr = _slot_sum({k: dl.D0[k] - dl.bare[k] for k in SLOTS}, mats)
        K = L + corr
    H = kin * K + sp.diags(V.ravel())
    if not np.all(np.isfinite(H.data)):
        raise GridMismatch("assembled operator has non-finite entries (crop the padded dressing)")
    harmonics = []
    if include_harmonics and dl is not None:
        n_used = max(dl.n_max, len(Vharm))
        for n in range(1, n_used + 1):
            parts = []
            for j in range(2):
                M = sp.csr_matrix((grid.size, grid.size))
                if n <= dl.n_max and dressed:
                    M = kin * _slot_sum(dl.harmonics[n - 1][j], mats)
                if n <= len(Vharm):
                    M = M + sp.diags(Vharm[n - 1][j].values.ravel())
                parts.append(_restrict(sp.csr_matrix(M), idx))
            harmonics.append(tuple(parts))
    w = metric.weights.ravel()[idx]
    return AssembledOperator(
        _restrict(H, idx), w, idx, grid, symmetric=not dressed,
        time_independent=not harmonics, harmonics=harmonics,
        omega=dl.omega if dl is not None else 1.0,
    )


def _slot_sum(coeffs, mats):
    M = None
    for k in SLOTS:
        c = np.ravel(coeffs[k])
        if not np.any(c):
            continue
        term = sp.diags(c) @ mats[k]
        M = term if M is None else M + term
    if M is None:
        n = next(iter(mats.values())).shape[0]
        return sp.csr_matrix((n, n))
    return sp.csr_matrix(M)


# --------------------------------------------------------------------------
# eigenproblems


@dataclass
class EigenReport:
    values: np.ndarray  # complex, sorted by real part
    vectors: np.ndarray  # (k, N1, N2), w-normalized
    residuals: np.ndarray
    imag: np.ndarray
    shift: float
    symmetric: bool

    @property
    def k(self):
        return self.values.size


def default_shift(op: AssembledOperator):
    """A shift below the smallest diagonal potential entry."""
    d = op.matrix.diagonal().real
    lo = float(np.min(d)) if d.size else 0.0
    return lo - 1.0 - abs(lo)


def _factor_retry(solve, shift, attempts=4):
    last = None
    for i in range(attempts):
        s = shift + (0.0 if i == 0 else 1e-6 * (1 + abs(shift)) * 10 ** (i - 1) * (-1) ** i)
        try:
            return solve(s), s
        except RuntimeError as err:  # singular factorization
            last = err
            log.info("shift-invert factorization failed at shift %.6g, retrying", s)
        except spla.ArpackNoConvergence as err:
            raise NotConverged(f"eigensolver did not converge ({len(err.eigenvalues)} pairs)",
                               k_achieved=len(err.eigenvalues)) from None
    raise FactorizationFailed(f"shift-invert factorization failed: {last}")


def eigensolve(op: AssembledOperator, k: int = 4, shift: float | None = None, tol: float = 1e-12,
               sort_from_bottom: bool = True) -> EigenReport:
    """k eigenpairs nearest ``shift`` by shift-invert Lanczos/Arnoldi.

    The self-adjoint case solves the symmetric matrix W^(1/2) H W^(-1/2);
    otherwise the non-symmetric problem is solved as is and imaginary parts
    are reported.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    k = min(k, op.n - 2)
    shift = default_shift(op) if shift is None else float(shift)
    H = op.matrix
    w = op.weights
    if op.symmetric:
        s_half = np.sqrt(w)
        B = sp.diags(s_half) @ H @ sp.diags(1.0 / s_half)
        B = sp.csc_matrix(0.5 * (B + B.T))

        def solve(s):
            return spla.eigsh(B, k=k, sigma=s, which="LM", tol=tol)

        (vals, U), used = _factor_retry(solve, shift)
        vecs = U / s_half[:, None]
        vals = vals.astype(complex)
    else:
        Hc = sp.csc_matrix(H)

        def solve(s):
            return spla.eigs(Hc, k=k, sigma=s, which="LM", tol=tol)

        (vals, vecs), used = _factor_retry(solve, shift)
    order = np.argsort(vals.real, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    out_vecs, res = [], []
    for j in range(vals.size):
        v = vecs[:, j]
        v = v / np.sqrt(np.real(np.sum(np.conj(v) * v * w)))
        # fix the global phase so the largest entry is real and positive
        p = v[np.argmax(np.abs(v))]
        v = v * (np.abs(p) / p)
        r = H @ v - vals[j] * v
        res.append(float(np.sqrt(np.real(np.sum(np.conj(r) * r * w)))))
        out_vecs.append(op.to_grid(v))
    return EigenReport(vals, np.array(out_vecs), np.array(res), np.abs(vals.imag), used, op.symmetric)


def rayleigh_quotient(op: AssembledOperator, v):
    v = op.from_grid(v) if np.ndim(v) == 2 else np.asarray(v)
    return float(np.real(op.inner(v, op.matrix @ v) / op.inner(v, v)))


def dressed_spectrum_sweep(build, alpha0_list, k: int = 4, shift: float | None = None):
    """Spectrum per alpha0. ``build(alpha0)`` returns (AssembledOperator, F0 field).

    Rows: (alpha0, index, Re E, Im E, residual, min F0).
    """
    rows = []
    for a0 in alpha0_list:
        op, F0 = build(float(a0))
        rep = eigensolve(op, k=k, shift=shift)
        fmin = float(np.nanmin(np.asarray(F0)))
        for i, (lam, r) in enumerate(zip(rep.values, rep.residuals)):
            rows.append((float(a0), i, float(lam.real), float(lam.imag), float(r), fmin))
    return rows


def weakening_diagnostics(rows):
    """Does the ground-state binding |E0| and the F0 depth shrink along the sweep?

    ``rows`` as returned by dressed_spectrum_sweep. Bound (negative) ground
    states only count toward the binding trend.
    """
    ground = sorted((r for r in rows if r[1] == 0), key=lambda r: r[0])
    binding = np.array([max(-r[2], 0.0) for r in ground])
    depth = np.array([-r[5] for r in ground])
    return {
        "alpha0": [r[0] for r in ground],
        "binding": binding.tolist(),
        "depth": depth.tolist(),
        "binding_monotone": bool(np.all(np.diff(binding) <= 0)),
        "depth_monotone": bool(np.all(np.diff(depth) <= 0)),
    }
