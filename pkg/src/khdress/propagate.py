"""Crank-Nicolson propagation and the lab-frame / KH-frame cross-check."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, LinearSolveFailed, Unstable
from .grid import ScalarField
from .shift import MomentumOperator, shift_field
from .spectra import AssembledOperator, assemble
from .units import HBAR

log = logging.getLogger(__name__)


@dataclass
class PropagationConfig:
    dt: float
    n_steps: int
    scheme: str = "crank_nicolson"
    n_harmonics_used: int | None = None
    frames: str = "kh"
    sample_every: int = 0
    stability: str = "warn"
    solver_tol: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive", "propagate.dt")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be at least 1", "propagate.n_steps")
        if self.scheme != "crank_nicolson":
            raise ConfigError(f"unknown scheme {self.scheme!r}", "propagate.scheme")
        if self.frames not in ("kh", "lab", "both"):
            raise ConfigError(f"unknown frames {self.frames!r}", "propagate.frames")
        if self.stability not in ("warn", "error", "off"):
            raise ConfigError(f"unknown stability policy {self.stability!r}", "propagate.stability")


@dataclass
class Trajectory:
    times: np.ndarray
    norms: np.ndarray
    energies: np.ndarray
    overlaps: np.ndarray
    final: np.ndarray  # vector over unknowns
    samples: list = field(default_factory=list)  # (t, vector) pairs
    max_solver_residual: float = 0.0


def spectral_radius_bound(M):
    """Row-sum (Gershgorin) bound on the spectral radius."""
    return float(abs(M).sum(axis=1).max())


class _Stepper:
    """Solves (I + i dt H / 2 hbar) x = b with a residual contract."""

    def __init__(self, op: AssembledOperator, dt: float, tol: float):
        self.op, self.dt, self.tol = op, dt, tol
        n = op.n
        self.I = sp.identity(n, format="csc", dtype=complex)
        self.c = 0.5j * dt / HBAR
        self.ref = spla.splu(sp.csc_matrix(self.I + self.c * op.matrix))
        self.max_res = 0.0

    def step(self, psi, H):
        b = psi - self.c * (H @ psi)
        if H is self.op.matrix:
            x = self.ref.solve(b)
            A = None
        else:
            A = sp.csr_matrix(self.I + self.c * H)
            M = spla.LinearOperator(A.shape, matvec=self.ref.solve, dtype=complex)
            x, info = spla.gmres(A, b, x0=self.ref.solve(b), M=M, rtol=0.1 * self.tol, atol=0.0, restart=30, maxiter=50)
            if info != 0:
                log.info("preconditioned GMRES did not converge (info=%d); direct solve", info)
                x = spla.spsolve(sp.csc_matrix(A), b)
        if A is None:
            A = self.I + self.c * H
        r = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
        if r > self.tol:
            x = spla.spsolve(sp.csc_matrix(A), b)
            r = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
            if r > self.tol:
                raise LinearSolveFailed(f"Crank-Nicolson solve residual {r:.3g} above {self.tol:g}")
        self.max_res = max(self.max_res, r)
        return x


def propagate(op: AssembledOperator, psi0, cfg: PropagationConfig, t0: float = 0.0) -> Trajectory:
    """Crank-Nicolson with the Hamiltonian taken at the step midpoint."""
    psi = op.from_grid(psi0) if np.ndim(psi0) == 2 else np.asarray(psi0)
    psi = psi.astype(complex)
    n0 = op.norm(psi)
    if abs(n0 - 1.0) > 1e-8:
        raise ConfigError(f"initial state must be normalized (norm {n0:.12g})", "propagate.psi0")
    rho = spectral_radius_bound(op.matrix)
    if cfg.dt * rho >= 2 and cfg.stability != "off":
        msg = f"dt * rho = {cfg.dt * rho:.3g} >= 2 (Crank-Nicolson stays stable, accuracy may suffer)"
        if cfg.stability == "error":
            raise Unstable(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    stepper = _Stepper(op, cfg.dt, cfg.solver_tol)
    ref = psi.copy()
    times = [t0]
    norms = [n0]
    energies = [float(np.real(op.inner(psi, op.at(t0, cfg.n_harmonics_used) @ psi)))]
    overlaps = [abs(op.inner(ref, psi))]
    samples = [(t0, psi.copy())] if cfg.sample_every else []
    t = t0
    for k in range(1, cfg.n_steps + 1):
        H = op.at(t + 0.5 * cfg.dt, cfg.n_harmonics_used)
        psi = stepper.step(psi, H)
        t = t0 + k * cfg.dt
        nrm = op.norm(psi)
        if not np.isfinite(nrm) or nrm > 1.1 * n0:
            raise Unstable(f"norm grew to {nrm:.6g} at step {k}")
        times.append(t)
        norms.append(nrm)
        Ht = op.at(t, cfg.n_harmonics_used)
        energies.append(float(np.real(op.inner(psi, Ht @ psi))))
        overlaps.append(abs(op.inner(ref, psi)))
        if cfg.sample_every and k % cfg.sample_every == 0:
            samples.append((t, psi.copy()))
    return Trajectory(np.array(times), np.array(norms), np.array(energies), np.array(overlaps),
                      psi, samples, stepper.max_res)


def propagate_exact(op: AssembledOperator, psi0, t: float):
    """exp(-i H t / hbar) psi0 for a time-independent operator (reference)."""
    psi = op.from_grid(psi0) if np.ndim(psi0) == 2 else np.asarray(psi0)
    return spla.expm_multiply(-1j * t / HBAR * sp.csc_matrix(op.matrix), psi.astype(complex))


# --------------------------------------------------------------------------
# frame cross-check


def lab_operator(scene, momentum_acc: int = 8) -> AssembledOperator:
    """-(hbar^2/2m) Delta + V_geo + p_alpha_dot with alpha_dot = shape alpha0 omega cos(omega t).

    Only the terms linear in the vector potential are kept, the same ones the
    dressing keeps, so the comparison isolates the factorization error.
    """
    base = assemble(None, scene.V, scene.metric, scene.mass, scene.boundary)
    if scene.alpha0 == 0:
        return base
    P = MomentumOperator.build(scene.metric, scene.shape).matrix(momentum_acc)
    idx = base.index
    Pc = sp.csr_matrix(P[idx][:, idx]) * (scene.alpha0 * scene.shape.omega)
    zero = sp.csr_matrix(Pc.shape, dtype=complex)
    base.harmonics = [(Pc, zero)]
    base.time_independent = False
    base.symmetric = False
    base.omega = scene.shape.omega
    return base


def kh_to_lab(scene, psi_grid, t):
    """Apply Omega2^-1 Omega1^-1: shift by -tau(t), then multiply by exp(-tau div / 2)."""
    tau = scene.alpha0 * np.sin(scene.shape.omega * t)
    if tau == 0:
        return psi_grid.copy()
    big = ScalarField(scene.embed_padded(psi_grid), scene.pad_metric.grid)
    shifted = shift_field(big, scene.maps, -tau, policy="mask").values[scene.slices]
    shifted = np.nan_to_num(shifted)
    d = scene.raw.div[scene.slices]
    return np.exp(-0.5 * tau * d) * shifted


def gaussian_packet(metric, center=None, width=None):
    """w-normalized Gaussian in chart coordinates, vanishing at the chart edges."""
    grid = metric.grid
    (a1, b1), (a2, b2) = grid.domain()
    center = ((a1 + b1) / 2, (a2 + b2) / 2) if center is None else center
    width = min(b1 - a1, b2 - a2) / 16 if width is None else width
    Q1, Q2 = grid.mesh()
    psi = np.exp(-((Q1 - center[0]) ** 2 + (Q2 - center[1]) ** 2) / (2 * width**2)).astype(complex)
    psi[~grid.interior_mask()] = 0
    return psi / np.sqrt(np.sum(np.abs(psi) ** 2 * metric.weights))


def end_time_scaling(alpha0s, discrepancies):
    """Least-squares exponent p of discrepancy ~ alpha0^p."""
    return float(np.polyfit(np.log(alpha0s), np.log(discrepancies), 1)[0])


@dataclass
class CrosscheckReport:
    times: np.ndarray
    discrepancy: np.ndarray
    alpha0: float
    lab: Trajectory
    kh: Trajectory


def frame_crosscheck(scene, cfg: PropagationConfig, psi0=None) -> CrosscheckReport:
    """Propagate in both frames from the same state and compare in the lab frame."""
    kh_op = scene.operator(dressed=True, include_harmonics=True)
    lab_op = lab_operator(scene)
    if psi0 is None:
        psi0 = gaussian_packet(scene.metric)
    every = cfg.sample_every or cfg.n_steps
    run_cfg = PropagationConfig(cfg.dt, cfg.n_steps, cfg.scheme, cfg.n_harmonics_used, cfg.frames,
                                every, cfg.stability, cfg.solver_tol)
    lab = propagate(lab_op, psi0, run_cfg)
    kh = propagate(kh_op, psi0, run_cfg)
    times, disc = [], []
    for (t, a), (_, b) in zip(lab.samples, kh.samples):
        back = lab_op.from_grid(kh_to_lab(scene, kh_op.to_grid(b), t))
        times.append(t)
        disc.append(lab_op.norm(a - back))
    return CrosscheckReport(np.array(times), np.array(disc), scene.alpha0, lab, kh)
