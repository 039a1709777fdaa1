"""End-to-end assembly of a dressed scene on a parameter grid.

Flows move points by up to alpha0 * max|alpha_shape| along non-periodic axes,
so the dressing is computed on a grid padded by that amount and cropped back
to the requested chart afterwards.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dressing import (
    DressedLaplacian,
    DressedPotential,
    RawConjugatedCoeffs,
    conjugated_laplacian_coeffs,
    dress_laplacian,
    dress_potential,
)
from .drive import (
    AxisProfile,
    DisplacementShape,
    DriveSpec,
    displacement_shape,
    prescribed_shape,
    project_vector_potential,
)
from .errors import RangeExceeded
from .geometry import (
    CurvatureField,
    MetricField,
    SurfaceSpec,
    curvatures,
    frame_and_metric,
    geometric_potential,
    make_surface,
)
from .grid import ScalarField
from .shift import AbelMap, build_abel_maps
from .spectra import AssembledOperator, assemble
from .units import HBAR

log = logging.getLogger(__name__)

PAD_MARGIN = 6


def potential_function(surface, mass=1.0):
    """Pointwise V_geo(Q1, Q2) from the analytic partials of the embedding."""

    def V(Q1, Q2):
        _, (t1, t2), (d11, d12, d22) = surface._eval(np.asarray(Q1, float), np.asarray(Q2, float))
        cross = np.cross(t1, t2)
        n = cross / np.linalg.norm(cross, axis=-1)[..., None]
        E, F, G = (t1 * t1).sum(-1), (t1 * t2).sum(-1), (t2 * t2).sum(-1)
        L, M, N = -(n * d11).sum(-1), -(n * d12).sum(-1), -(n * d22).sum(-1)
        # g = C C^T with C = [[a, 0], [b, c]]; P = C^-1 II C^-T, written out
        a = np.sqrt(E)
        b = F / a
        c = np.sqrt(G - b * b)
        p11 = L / E
        p12 = (M - b * L / a) / (a * c)
        p22 = (N - 2 * b * M / a + b * b * L / E) / (c * c)
        gap = (0.5 * (p11 - p22)) ** 2 + p12**2
        return -(HBAR**2) / (2 * mass) * gap

    return V


@dataclass
class Scene:
    spec: SurfaceSpec
    surface: object
    metric: MetricField
    curv: CurvatureField
    V: ScalarField
    shape: DisplacementShape
    alpha0: float
    mass: float
    boundary: str
    # padded dressing data
    pad_spec: SurfaceSpec
    pad_metric: MetricField
    pad_shape: DisplacementShape
    pad_V: ScalarField
    maps: Optional[AbelMap]
    raw: Optional[RawConjugatedCoeffs]
    slices: tuple
    dp: Optional[DressedPotential] = None
    dl: Optional[DressedLaplacian] = None

    @property
    def grid(self):
        return self.metric.grid

    def operator(self, dressed=True, include_harmonics=False) -> AssembledOperator:
        if not dressed or self.dl is None:
            return assemble(None, self.V, self.metric, self.mass, self.boundary)
        return assemble(self.dl, self.dp, self.metric, self.mass, self.boundary, include_harmonics)

    def embed_padded(self, f):
        """Zero-extend a core grid array onto the padded grid."""
        out = np.zeros(self.pad_metric.grid.shape, dtype=np.result_type(f, float))
        out[self.slices] = f
        return out


def _padded_spec(spec, n_pad):
    dom = []
    res = []
    for mu, ((lo, hi), n) in enumerate(zip(spec.domain, spec.resolution)):
        if spec.periodic[mu] or n_pad[mu] == 0:
            dom.append((lo, hi))
            res.append(n)
            continue
        h = (hi - lo) / (n - 1)
        dom.append((lo - n_pad[mu] * h, hi + n_pad[mu] * h))
        res.append(n + 2 * n_pad[mu])
    return replace(spec, domain=tuple(dom), resolution=tuple(res))


def build_scene(spec: SurfaceSpec, *, drive: DriveSpec | None = None, profiles=None, alpha0: float | None = None,
                n_max: int = 8, n_theta: int = 256, mass: float = 1.0, boundary: str = "dirichlet",
                potential=None, dress: bool = True, tail_action: str = "warn", omega: float | None = None) -> Scene:
    """Surface, drive shape, Abel maps and (optionally) the dressed operators.

    The displacement shape comes either from a drive (projected vector
    potential) or from explicit per-axis ``profiles``. ``alpha0`` overrides the
    amplitude implied by the drive. ``potential`` replaces V_geo by a callable
    V(Q1, Q2) (benchmark scenes).
    """
    surface = make_surface(spec)
    metric = frame_and_metric(surface)
    curv = curvatures(surface, metric=metric)
    mass = drive.mass if drive is not None else mass
    omega = omega if omega is not None else (drive.omega if drive is not None else 1.0)
    Vfunc = potential if potential is not None else potential_function(surface, mass)
    if potential is None:
        V = geometric_potential(curv, mass)
        V.func = Vfunc
    else:
        Q1, Q2 = surface.grid.mesh()
        V = ScalarField(potential(Q1, Q2), surface.grid, "energy", potential)

    # shape on the core grid fixes the normalization
    if profiles is not None:
        p = tuple(pr if isinstance(pr, AxisProfile) else AxisProfile(**pr) for pr in profiles)
        core_shape = prescribed_shape(surface.grid, p, 1.0 if alpha0 is None else alpha0, omega)
        norm = core_shape.normalization

        def shape_on(grid, mt=None):
            sh = prescribed_shape(grid, core_shape.profiles, core_shape.alpha0, omega, normalize=False)
            sh.normalization = norm
            return sh
    elif drive is not None:
        A = project_vector_potential(metric, drive, surface.embed(*surface.grid.mesh()))
        core_shape = displacement_shape(A, drive)
        if alpha0 is not None:
            core_shape = core_shape.with_alpha0(alpha0)
        norm = core_shape.normalization

        def shape_on(grid, mt=None):
            if grid is surface.grid:
                return core_shape
            A = project_vector_potential(mt, drive, mt_surface.embed(*grid.mesh()))
            sh = displacement_shape(A, drive, normalization=norm if norm > 0 else None)
            return sh.with_alpha0(core_shape.alpha0)
    else:
        core_shape = DisplacementShape(surface.grid, np.zeros(surface.grid.shape + (2,)), 0.0, omega)

        def shape_on(grid, mt=None):
            return DisplacementShape(grid, np.zeros(grid.shape + (2,)), 0.0, omega)

    a0 = core_shape.alpha0
    # pad non-periodic axes by the flow extent, re-checked on the padded grid
    n_pad = [0, 0]
    pad_spec, mt_surface, pad_metric = spec, surface, metric
    pad_shape = core_shape
    if dress and a0 > 0:
        h = surface.grid.spacing
        for _ in range(4):
            ext = [a0 * float(np.max(np.abs(pad_shape.component(mu)))) for mu in range(2)]
            need = [0 if spec.periodic[mu] or ext[mu] == 0 else math.ceil(ext[mu] / h[mu]) + PAD_MARGIN
                    for mu in range(2)]
            if all(nd <= npd for nd, npd in zip(need, n_pad)):
                break
            n_pad = [max(x, y) for x, y in zip(need, n_pad)]
            pad_spec = _padded_spec(spec, n_pad)
            mt_surface = make_surface(pad_spec)
            pad_metric = frame_and_metric(mt_surface)
            pad_shape = shape_on(pad_metric.grid, pad_metric)
    slices = tuple(slice(n, n + N) for n, N in zip(n_pad, spec.resolution))
    if pad_spec is spec:
        pad_V = V
    else:
        Q1, Q2 = pad_metric.grid.mesh()
        pad_V = ScalarField(Vfunc(Q1, Q2), pad_metric.grid, "energy", Vfunc)

    scene = Scene(spec, surface, metric, curv, V, core_shape, a0, mass, boundary,
                  pad_spec, pad_metric, pad_shape, pad_V, None, None, slices)
    if not dress or a0 == 0:
        if dress:
            scene.dp = dress_potential(V, None, 0.0, n_max, n_theta, omega)
            scene.dl = dress_laplacian(conjugated_laplacian_coeffs(metric, core_shape), core_shape, None, 0.0, n_max, n_theta)
        return scene
    maps = build_abel_maps(pad_shape)
    raw = conjugated_laplacian_coeffs(pad_metric, pad_shape)
    scene.maps, scene.raw = maps, raw
    dp = dress_potential(pad_V, maps, a0, n_max, n_theta, omega, policy="mask", tail_action=tail_action)
    dl = dress_laplacian(raw, pad_shape, maps, a0, n_max, n_theta, policy="mask", tail_action=tail_action)
    scene.dp = _crop_potential(dp, slices, surface.grid)
    scene.dl = dl.crop(slices, surface.grid)
    if not np.all(np.isfinite(scene.dp.F0.values)):
        raise RangeExceeded("padding too small: dressed potential has masked nodes inside the chart")
    return scene


def _crop_potential(dp, slices, grid):
    def cut(f):
        return ScalarField(f.values[slices], grid, f.unit)
    return DressedPotential(cut(dp.F0), [(cut(c), cut(s)) for c, s in dp.harmonics], dp.alpha0, dp.omega, dp.tail)
