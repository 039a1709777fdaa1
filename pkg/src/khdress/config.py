"""Run configuration: YAML files validated against pydantic models.

Every physical number may be written either bare (atomic units) or as a
``"<value> <unit>"`` string. Unknown keys are rejected. Validation failures are
re-raised as ConfigError with the dotted path of the offending field.
"""
from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Annotated, Any, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .units import parse_quantity

_PI = re.compile(r"^\s*([-+]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def _qty(dimension):
    def parse(v):
        if isinstance(v, str) and "pi" in v:
            return _pi_expr(v)
        try:
            return parse_quantity(v, dimension)
        except ValueError as err:
            raise ValueError(str(err)) from None
    return BeforeValidator(parse)


def _pi_expr(s):
    m = _PI.match(s)
    if not m:
        raise ValueError(f"cannot parse {s!r}")
    coef, den = m.groups()
    c = 1.0 if coef in ("", "+") else (-1.0 if coef == "-" else float(coef))
    return c * math.pi / (float(den) if den else 1.0)


Length = Annotated[float, _qty("length")]
Energy = Annotated[float, _qty("energy")]
Time = Annotated[float, _qty("time")]
Frequency = Annotated[float, _qty("frequency")]
Mass = Annotated[float, _qty("mass")]
Charge = Annotated[float, _qty("charge")]
Dimensionless = Annotated[float, _qty("dimensionless")]

# chart coordinate dimension per surface kind
_CHART = {
    "plane": ("length", "length"),
    "cylinder": ("angle", "length"),
    "gaussian_bump": ("length", "length"),
    "sphere_patch": ("angle", "angle"),
    "monge": ("length", "length"),
}


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=False)


class SurfaceSection(_Model):
    kind: Literal["plane", "cylinder", "gaussian_bump", "sphere_patch", "monge"]
    params: dict[str, Any] = Field(default_factory=dict)
    domain: tuple[tuple[Any, Any], tuple[Any, Any]]
    resolution: tuple[int, int] = (64, 64)
    periodic: Optional[tuple[bool, bool]] = None
    method: Literal["analytic", "fd"] = "analytic"

    def coordinates(self):
        dims = _CHART[self.kind]
        out = []
        for (lo, hi), dim in zip(self.domain, dims):
            pair = []
            for v in (lo, hi):
                pair.append(_pi_expr(v) if isinstance(v, str) and "pi" in v else parse_quantity(v, dim))
            out.append(tuple(pair))
        return tuple(out)

    def physical_params(self, base: Path | None = None):
        out = {}
        for k, v in self.params.items():
            if k == "heights":
                out.update(_load_heights(v, base))
            else:
                out[k] = parse_quantity(v, "length")
        return out


def _load_heights(v, base):
    if isinstance(v, str):
        from .csvio import read_csv

        path = Path(v) if base is None or Path(v).is_absolute() else base / v
        _, cols = read_csv(path)
        x, y = np.unique(cols["q1"]), np.unique(cols["q2"])
        return {"x": x, "y": y, "heights": np.asarray(cols["h"]).reshape(x.size, y.size)}
    h = np.asarray(v, dtype=float)
    if h.ndim != 2:
        raise ValueError("inline heights must be a 2D list")
    return {"heights": h}


class ProfileSection(_Model):
    kind: Literal["zero", "const", "affine", "sech"] = "const"
    value: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    amp: Optional[float] = None
    width: Optional[float] = None
    center: Optional[float] = None
    offset: Optional[float] = None

    def as_kwargs(self):
        return {"kind": self.kind, **{k: v for k, v in self.model_dump().items() if k != "kind" and v is not None}}


class DriveSection(_Model):
    A0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    omega: Frequency = 1.0
    charge: Charge = -1.0
    mass: Mass = 1.0
    shape: Optional[tuple[ProfileSection, ProfileSection]] = None

    @field_validator("omega", "mass")
    @classmethod
    def _positive(cls, v):
        if not v > 0:
            raise ValueError(f"must be positive, got {v}")
        return v


class PotentialSection(_Model):
    kind: Literal["geometric", "cosine"] = "geometric"
    amplitude: Energy = 1.0
    k: Annotated[float, _qty("dimensionless")] = 1.0
    axis: Literal[0, 1] = 0


class DressingSection(_Model):
    alpha0: Optional[list[Length]] = None
    n_max: int = Field(8, ge=1)
    n_theta: int = Field(256, ge=64)
    tail_action: Literal["warn", "error", "ignore"] = "warn"

    @field_validator("alpha0", mode="before")
    @classmethod
    def _listify(cls, v):
        if v is None or isinstance(v, list):
            return v
        return [v]

    @field_validator("alpha0")
    @classmethod
    def _nonneg(cls, v):
        if v is not None and any(a < 0 for a in v):
            raise ValueError("alpha0 must be non-negative")
        return v

    @field_validator("n_theta")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("n_theta must be even")
        return v


class SolveSection(_Model):
    k: int = Field(4, ge=1)
    shift: Optional[Energy] = None
    boundary: Literal["dirichlet", "periodic"] = "dirichlet"
    dressed: bool = True


class PropagateSection(_Model):
    dt: Time
    n_steps: int = Field(ge=1)
    scheme: Literal["crank_nicolson"] = "crank_nicolson"
    n_harmonics_used: Optional[int] = Field(None, ge=0)
    frames: Literal["kh", "lab", "both"] = "kh"
    sample_every: int = Field(0, ge=0)
    stability: Literal["warn", "error", "off"] = "warn"
    initial: Literal["ground", "packet"] = "ground"


class OutputSection(_Model):
    directory: str = "out"
    format: Literal["csv"] = "csv"


class RunConfig(_Model):
    surface: SurfaceSection
    drive: DriveSection = Field(default_factory=DriveSection)
    potential: PotentialSection = Field(default_factory=PotentialSection)
    dressing: DressingSection = Field(default_factory=DressingSection)
    solve: SolveSection = Field(default_factory=SolveSection)
    propagate: Optional[PropagateSection] = None
    output: OutputSection = Field(default_factory=OutputSection)
    source: Optional[str] = Field(None, exclude=True)

    # -- conversions into library objects

    def surface_spec(self):
        from .geometry import SurfaceSpec

        base = Path(self.source).parent if self.source else None
        try:
            params = self.surface.physical_params(base)
            domain = self.surface.coordinates()
        except (ValueError, OSError, KeyError) as err:
            raise ConfigError(str(err), "surface") from None
        return SurfaceSpec(self.surface.kind, params, domain, tuple(self.surface.resolution), self.surface.periodic)

    def drive_spec(self):
        from .drive import DriveSpec

        d = self.drive
        return DriveSpec(tuple(d.A0), d.omega, d.charge, d.mass)

    def profiles(self):
        if self.drive.shape is None:
            return None
        return tuple(p.as_kwargs() for p in self.drive.shape)

    def potential_function(self):
        p = self.potential
        if p.kind == "geometric":
            return None
        amp, k, ax = p.amplitude, p.k, p.axis

        def V(Q1, Q2):
            return amp * np.cos(k * (Q1 if ax == 0 else Q2))
        return V

    def alpha0_list(self):
        return [None] if self.dressing.alpha0 is None else list(self.dressing.alpha0)


def _path(loc):
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def parse_config(data: dict, source: str | None = None, model=RunConfig):
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", "")
    try:
        cfg = model.model_validate(data)
    except ValidationError as err:
        e = err.errors()[0]
        raise ConfigError(e["msg"], _path(e["loc"])) from None
    if source is not None and hasattr(cfg, "source"):
        cfg.source = source
    return cfg


def load_config(path, model=RunConfig):
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}", str(path)) from None
    except yaml.YAMLError as err:
        raise ConfigError(f"invalid YAML: {err}", str(path)) from None
    return parse_config(data, str(path), model)


def apply_overrides(cfg: RunConfig, grid=None, nmax=None, ntheta=None, alpha0=None):
    """Command line flags win over the file."""
    data = cfg.model_dump()
    if grid is not None:
        data["surface"]["resolution"] = grid
    if nmax is not None:
        data["dressing"]["n_max"] = nmax
    if ntheta is not None:
        data["dressing"]["n_theta"] = ntheta
    if alpha0 is not None:
        data["dressing"]["alpha0"] = alpha0
    out = parse_config(data, cfg.source)
    return out


def parse_grid(s: str):
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", s)
    if not m:
        raise ConfigError(f"grid must look like N1xN2, got {s!r}", "--grid")
    return int(m.group(1)), int(m.group(2))
