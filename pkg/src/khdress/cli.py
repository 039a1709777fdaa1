"""Command line front end: ``khdress {geometry,dress,spectrum,propagate,check}``.

Exit codes: 0 success, 1 a check failed, 2 configuration error, 3 a modelling
assumption is violated, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, apply_overrides, load_config, parse_grid
from .csvio import grid_columns, write_csv
from .errors import ConfigError, KHError, NonSeparable
from .geometry import SLOTS, curvatures, frame_and_metric, geometric_potential, make_surface

log = logging.getLogger("khdress")


def _meta(cfg: RunConfig, grid, **extra):
    m = {"units": "au", "grid": f"{grid.shape[0]}x{grid.shape[1]}", "surface": cfg.surface.kind}
    m.update(extra)
    return m


def _out_dir(args, cfg):
    d = Path(args.out) if args.out else Path(cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _sweep_dirs(out, alphas):
    if len(alphas) == 1:
        return [out]
    dirs = []
    for i in range(len(alphas)):
        d = out / f"sweep_{i:03d}"
        d.mkdir(exist_ok=True)
        dirs.append(d)
    return dirs


def _scene(cfg: RunConfig, alpha0, dress=True):
    from .scene import build_scene

    spec = cfg.surface_spec()
    prof = cfg.profiles()
    drive = None if prof is not None else cfg.drive_spec()
    if prof is None and not np.any(drive.A0) and alpha0 is None:
        alpha0 = 0.0
    return build_scene(spec, drive=drive, profiles=prof, alpha0=alpha0, n_max=cfg.dressing.n_max,
                       n_theta=cfg.dressing.n_theta, mass=cfg.drive.mass, boundary=cfg.solve.boundary,
                       potential=cfg.potential_function(), dress=dress, tail_action=cfg.dressing.tail_action,
                       omega=cfg.drive.omega)


# -- commands


def cmd_geometry(cfg: RunConfig, out: Path):
    spec = cfg.surface_spec()
    surf = make_surface(spec)
    method = cfg.surface.method
    metric = frame_and_metric(surf, method)
    curv = curvatures(surf, method, metric=metric)
    V = geometric_potential(curv, cfg.drive.mass)
    g = metric.g
    meta = _meta(cfg, surf.grid, method=method)
    write_csv(out / "metric.csv", grid_columns(surf.grid, g11=g[..., 0, 0], g12=g[..., 0, 1], g22=g[..., 1, 1],
                                               sqrt_g=metric.sqrt_g), meta)
    write_csv(out / "curvature.csv", grid_columns(surf.grid, M=curv.M, K=curv.K, Vgeo=V.values), meta)
    return 0


def _dress_files(cfg, scene, out):
    from .dressing import bch_diagnostic
    from .drive import charge_balance, covariant_divergence

    grid = scene.grid
    dp, dl = scene.dp, scene.dl
    meta = _meta(cfg, grid, alpha0=scene.alpha0, n_max=dl.n_max, n_theta=cfg.dressing.n_theta)
    cols = grid_columns(grid, F0=dp.F0.values, Vgeo=scene.V.values)
    if cfg.potential.kind == "cosine":
        V = scene.V.values
        with np.errstate(divide="ignore", invalid="ignore"):
            cols["ratio"] = np.where(np.abs(V) > 0.5 * np.abs(V).max(), dp.F0.values / V, np.nan).ravel()
    write_csv(out / "F0.csv", cols, meta)
    nodes = np.arange(grid.size)
    rows = {"n": [], "node": [], "cos": [], "sin": []}
    for n, (c, s) in enumerate(dp.harmonics, start=1):
        rows["n"].append(np.full(grid.size, n))
        rows["node"].append(nodes)
        rows["cos"].append(c.values.ravel())
        rows["sin"].append(s.values.ravel())
    write_csv(out / "Fn.csv", {k: np.concatenate(v) if v else np.array([]) for k, v in rows.items()}, meta)
    d0 = grid_columns(grid, **{k: dl.D0[k] for k in SLOTS})
    d0.update({f"bare_{k}": np.ravel(dl.bare[k]) for k in SLOTS})
    write_csv(out / "delta0_coeffs.csv", d0, meta)
    dn = {"n": [], "node": []}
    for k in SLOTS:
        dn[f"{k}_cos"], dn[f"{k}_sin"] = [], []
    for n, (c, s) in enumerate(dl.harmonics, start=1):
        dn["n"].append(np.full(grid.size, n))
        dn["node"].append(nodes)
        for k in SLOTS:
            dn[f"{k}_cos"].append(np.ravel(c[k]))
            dn[f"{k}_sin"].append(np.ravel(s[k]))
    write_csv(out / "deltaN_coeffs.csv", {k: np.concatenate(v) if v else np.array([]) for k, v in dn.items()}, meta)
    div = covariant_divergence(scene.metric, scene.shape)
    cb = charge_balance(div, scene.metric, scene.shape)
    bch = bch_diagnostic(scene.shape, scene.metric, scene.alpha0)
    diag = {
        "alpha0": scene.alpha0,
        "charge_integral": cb.integral,
        "charge_boundary_flux": cb.boundary_flux,
        "charge_residual": cb.residual,
        "charge_normalized": cb.normalized,
        "bch_neglected_norm": bch.neglected_norm,
        "bch_masked_nodes": bch.masked,
        "tail_potential": dp.tail,
        "tail_laplacian": dl.tail,
        "min_F0": float(np.min(dp.F0.values)),
        "min_Vgeo": float(np.min(scene.V.values)),
        "padded_grid": f"{scene.pad_metric.grid.shape[0]}x{scene.pad_metric.grid.shape[1]}",
    }
    write_csv(out / "diagnostics.csv", {"key": list(diag), "value": [diag[k] for k in diag]}, meta)


def cmd_dress(cfg: RunConfig, out: Path):
    alphas = cfg.alpha0_list()
    for a0, d in zip(alphas, _sweep_dirs(out, alphas)):
        scene = _scene(cfg, a0)
        _dress_files(cfg, scene, d)
    return 0


def cmd_spectrum(cfg: RunConfig, out: Path):
    from .spectra import eigensolve

    alphas = cfg.alpha0_list()
    spec_rows = {k: [] for k in ("sweep", "alpha0", "index", "re_E", "im_E", "residual", "min_F0")}
    states = {k: [] for k in ("sweep", "index", "q1", "q2", "re", "im")}
    grid = None
    for i, a0 in enumerate(alphas):
        scene = _scene(cfg, a0, dress=cfg.solve.dressed)
        grid = scene.grid
        op = scene.operator(dressed=cfg.solve.dressed)
        rep = eigensolve(op, k=cfg.solve.k, shift=cfg.solve.shift)
        fmin = float(np.min(scene.dp.F0.values)) if scene.dp is not None else float(np.min(scene.V.values))
        Q1, Q2 = grid.mesh()
        for j, (lam, r) in enumerate(zip(rep.values, rep.residuals)):
            for k, v in zip(spec_rows, (i, scene.alpha0, j, lam.real, lam.imag, r, fmin)):
                spec_rows[k].append(v)
            states["sweep"].append(np.full(grid.size, i))
            states["index"].append(np.full(grid.size, j))
            states["q1"].append(Q1.ravel())
            states["q2"].append(Q2.ravel())
            states["re"].append(rep.vectors[j].real.ravel())
            states["im"].append(rep.vectors[j].imag.ravel())
        log.info("alpha0=%g: E = %s", scene.alpha0, np.array2string(rep.values.real, precision=6))
    if len(alphas) > 1:
        from .spectra import weakening_diagnostics

        rows = list(zip(*(spec_rows[k] for k in ("alpha0", "index", "re_E", "im_E", "residual", "min_F0"))))
        wd = weakening_diagnostics(rows)
        log.info("sweep: binding monotone=%s, F0 depth monotone=%s", wd["binding_monotone"], wd["depth_monotone"])
    meta = _meta(cfg, grid, boundary=cfg.solve.boundary, dressed=cfg.solve.dressed, k=cfg.solve.k)
    write_csv(out / "spectrum.csv", spec_rows, meta)
    write_csv(out / "states.csv", {k: np.concatenate(v) for k, v in states.items()}, meta)
    return 0


def cmd_propagate(cfg: RunConfig, out: Path):
    from .propagate import PropagationConfig, frame_crosscheck, gaussian_packet, lab_operator, propagate
    from .spectra import eigensolve

    if cfg.propagate is None:
        raise ConfigError("the propagate section is required for this command", "propagate")
    p = cfg.propagate
    pc = PropagationConfig(p.dt, p.n_steps, p.scheme, p.n_harmonics_used, p.frames, p.sample_every, p.stability)
    alphas = cfg.alpha0_list()
    for a0, d in zip(alphas, _sweep_dirs(out, alphas)):
        scene = _scene(cfg, a0)
        bare = scene.operator(dressed=False)
        psi0 = eigensolve(bare, k=1).vectors[0] if p.initial == "ground" else gaussian_packet(scene.metric)
        meta = _meta(cfg, scene.grid, alpha0=scene.alpha0, dt=p.dt, n_steps=p.n_steps, frames=p.frames)
        runs = []
        if p.frames == "both":
            rep = frame_crosscheck(scene, pc, psi0)
            runs = [("lab", rep.lab), ("kh", rep.kh)]
            write_csv(d / "crosscheck.csv", {"t": rep.times, "L2_discrepancy": rep.discrepancy}, meta)
        elif p.frames == "lab":
            runs = [("lab", propagate(lab_operator(scene), psi0, pc))]
        else:
            runs = [("kh", propagate(scene.operator(dressed=True, include_harmonics=True), psi0, pc))]
        fields = {"t": "times", "norm": "norms", "energy": "energies", "overlap": "overlaps"}
        cols = {"frame": [name for name, tr in runs for _ in tr.times]}
        for col, attr in fields.items():
            cols[col] = np.concatenate([getattr(tr, attr) for _, tr in runs])
        write_csv(d / "trajectory.csv", cols, meta)
    return 0


def cmd_check(args, out: Path):
    from .checks import load_check_config, run_suite

    cfg = load_check_config(args.config)
    echo = None if args.quiet else print
    rows = run_suite(cfg, echo=echo)
    cols = {k: [getattr(r, k) for r in rows] for k in ("criterion", "name", "value", "threshold", "passed", "seconds")}
    meta = {"units": "au", "suite": args.config or "default"}
    write_csv(out / "report.csv", cols, meta)
    failed = [r for r in rows if not r.passed]
    if failed:
        log.error("%d of %d checks failed", len(failed), len(rows))
        return 1
    return 0


COMMANDS = {"geometry": cmd_geometry, "dress": cmd_dress, "spectrum": cmd_spectrum, "propagate": cmd_propagate}


def _grid_arg(s):
    try:
        return parse_grid(s)
    except ConfigError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def build_parser():
    ap = argparse.ArgumentParser(prog="khdress", description="KH dressing of particles confined to curved surfaces")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("geometry", "dress", "spectrum", "propagate", "check"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "check", help="YAML configuration file")
        p.add_argument("--out", help="output directory (default: output.directory of the config)")
        p.add_argument("--quiet", action="store_true", help="only report warnings and errors")
        if name != "check":
            p.add_argument("--grid", type=_grid_arg, help="override the resolution, e.g. 128x128")
            p.add_argument("--nmax", type=int, help="override dressing.n_max")
            p.add_argument("--ntheta", type=int, help="override dressing.n_theta")
            p.add_argument("--alpha0", help="comma separated alpha0 list (overrides dressing.alpha0)")
    return ap


def _dump_residual(err: NonSeparable, out):
    if out is None or err.residual is None:
        return
    res = err.residual
    write_csv(Path(out) / "separability_residual.csv", grid_columns(res.grid, residual=res.values),
              {"units": "au", "grid": f"{res.grid.shape[0]}x{res.grid.shape[1]}"})


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # argparse usage errors are configuration errors
        return 2 if e.code not in (0, None) else 0
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.quiet:
        warnings.simplefilter("ignore")
    out = None
    try:
        if args.command == "check":
            out = Path(args.out or "out")
            out.mkdir(parents=True, exist_ok=True)
            return cmd_check(args, out)
        cfg = load_config(args.config)
        alpha = [a.strip() for a in args.alpha0.split(",")] if args.alpha0 else None
        cfg = apply_overrides(cfg, args.grid, args.nmax, args.ntheta, alpha)
        out = _out_dir(args, cfg)
        return COMMANDS[args.command](cfg, out)
    except NonSeparable as err:
        _dump_residual(err, out)
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except KHError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
