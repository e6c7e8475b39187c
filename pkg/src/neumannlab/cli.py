"""Configuration-driven experiment runner.

Config files are plain key = value lines (dotted keys for sections, ``#``
comments); every key has a default.  Example::

    kind = full-suite
    seed = 7
    mesh.extents = 1 1 1
    mesh.n = 12
    coeff.type = checkerboard
    coeff.contrast = 10
    poles = center
    threads = 1

Experiment kinds: verify-coeff, solve, kernel, estimates, oracle-compare,
full-suite.  Reports are one JSON document plus one CSV per fitted check;
re-emission is byte-identical.  Exit codes: 0 all checks pass, 1 check
failure, 2 config/io error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import coeff as coeffmod
from . import estimates as est
from .discretize import DiscreteField, boundary_mean
from .errors import CompatibilityError, NeumannLabError, NumericFailureError
from .kernel import (
    Mollifier,
    build_kernel,
    check_defining_identity,
    check_symmetry_identity,
    integrate_mollifier,
)
from .mesh import build_box_mesh, build_truncated_graph_mesh
from .oracle import SeriesConfig, cube_neumann_series_batch
from .solve import NeumannSolver, SolveConfig, solve_neumann_bounded

KINDS = ("verify-coeff", "solve", "kernel", "estimates", "oracle-compare", "full-suite")


@dataclass
class RunConfig:
    kind: str = "full-suite"
    seed: int = 0
    outdir: str = "out"
    threads: int = 1
    mesh_type: str = "box"  # box | graph
    mesh_extents: tuple = (1.0, 1.0, 1.0)
    mesh_n: int = 8
    graph_k: float = 0.0
    coeff_type: str = "identity"  # identity | checkerboard | cellwise-random | skew | smooth
    coeff_m: int = 1
    coeff_contrast: float = 10.0
    coeff_cell: float = 0.25
    coeff_amplitude: float = 0.5
    coeff_lam: float = 0.5
    coeff_bound: float = 2.0
    coeff_frequency: float = 1.0
    solve_tolerance: float = 1e-10
    solve_method: str = "bordered-lagrange"
    linear_solver: str = "direct"
    eps_factor: float = 2.0
    poles: str = "center"  # center | near-boundary | lattice
    identity_tol: float = 1e-8
    oracle_cutoff: int = 20
    oracle_rtol: float = 0.05
    trials: int = 8

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_KEYMAP = {
    "kind": ("kind", str),
    "seed": ("seed", int),
    "outdir": ("outdir", str),
    "threads": ("threads", int),
    "mesh.type": ("mesh_type", str),
    "mesh.extents": ("mesh_extents", "floats"),
    "mesh.n": ("mesh_n", int),
    "mesh.graph_k": ("graph_k", float),
    "coeff.type": ("coeff_type", str),
    "coeff.m": ("coeff_m", int),
    "coeff.contrast": ("coeff_contrast", float),
    "coeff.cell": ("coeff_cell", float),
    "coeff.amplitude": ("coeff_amplitude", float),
    "coeff.lam": ("coeff_lam", float),
    "coeff.bound": ("coeff_bound", float),
    "coeff.frequency": ("coeff_frequency", float),
    "solve.tolerance": ("solve_tolerance", float),
    "solve.method": ("solve_method", str),
    "solve.linear_solver": ("linear_solver", str),
    "kernel.eps_factor": ("eps_factor", float),
    "poles": ("poles", str),
    "tol.identity": ("identity_tol", float),
    "oracle.cutoff": ("oracle_cutoff", int),
    "oracle.rtol": ("oracle_rtol", float),
    "trials": ("trials", int),
}


def parse_config(path):
    cfg = RunConfig()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYMAP:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        attr, conv = _KEYMAP[key]
        if conv == "floats":
            setattr(cfg, attr, tuple(float(tok) for tok in value.split()))
        else:
            setattr(cfg, attr, conv(value))
    if cfg.kind not in KINDS:
        raise ValueError(f"unknown experiment kind {cfg.kind!r}")
    return cfg


def _build_mesh(cfg):
    if cfg.mesh_type == "box":
        return build_box_mesh(cfg.mesh_extents, cfg.mesh_n)
    if cfg.mesh_type == "graph":
        lo = (0.0, 0.0, 0.0)
        hi = cfg.mesh_extents
        return build_truncated_graph_mesh(
            lambda x, y: np.zeros_like(x), cfg.graph_k, (lo, hi), 1.0 / cfg.mesh_n
        )
    raise ValueError(f"unknown mesh type {cfg.mesh_type!r}")


def _build_spec(cfg):
    t = cfg.coeff_type
    if t == "identity":
        return coeffmod.Identity(m=cfg.coeff_m)
    if t == "checkerboard":
        return coeffmod.ScalarCheckerboard(
            cfg.coeff_contrast, cell=cfg.coeff_cell, seed=cfg.seed, m=cfg.coeff_m
        )
    if t == "cellwise-random":
        return coeffmod.CellwiseRandom(
            cfg.coeff_lam, cfg.coeff_bound, cell=cfg.coeff_cell, seed=cfg.seed, m=cfg.coeff_m
        )
    if t == "skew":
        return coeffmod.SkewPerturbed(
            coeffmod.ScalarCheckerboard(
                cfg.coeff_contrast, cell=cfg.coeff_cell, seed=cfg.seed, m=cfg.coeff_m
            ),
            cfg.coeff_amplitude,
            seed=cfg.seed,
        )
    if t == "smooth":
        return coeffmod.SmoothVMO(cfg.coeff_frequency, cfg.coeff_amplitude, m=cfg.coeff_m)
    raise ValueError(f"unknown coefficient type {t!r}")


def _solve_config(cfg):
    return SolveConfig(
        tolerance=cfg.solve_tolerance,
        constraint_method=cfg.solve_method,
        linear_solver=cfg.linear_solver,
    )


def _pole_list(cfg, mesh):
    center = 0.5 * (mesh.nodes.min(axis=0) + mesh.nodes.max(axis=0))
    if cfg.poles == "center":
        return [center]
    if cfg.poles == "near-boundary":
        depth = max(4 * mesh.h, 2 * mesh.h * cfg.eps_factor)
        p = center.copy()
        p[0] = mesh.nodes[:, 0].min() + depth
        return [center, p]
    if cfg.poles == "lattice":
        lo = mesh.nodes.min(axis=0)
        hi = mesh.nodes.max(axis=0)
        offs = (0.375, 0.625)
        return [lo + np.array([a, b, c]) * (hi - lo) for a in offs for b in offs for c in offs]
    raise ValueError(f"unknown pole policy {cfg.poles!r}")


def _rec(name, value, tol, extra=None):
    rec = est.CheckRecord(name=name, samples=[(1.0, value)], params=extra or {})
    rec.empirical_constant = float(value)
    rec.passed = bool(value <= tol)
    rec.params["tolerance"] = tol
    return rec


def run_experiment(cfg):
    """Execute the configured pipeline; deterministic given (config, seed)."""
    records = []
    failures = []
    provenance = {
        "config": cfg.to_dict(),
        "mesh": {"type": cfg.mesh_type, "extents": list(cfg.mesh_extents), "n": cfg.mesh_n},
        "coeff": repr(_build_spec(cfg)),
        "seed": cfg.seed,
    }
    try:
        _run_kind(cfg, records)
    except CompatibilityError as e:
        failures.append(
            {
                "stage": cfg.kind,
                "error": "compatibility",
                "detail": "volume/boundary data violate the integral balance",
                "residual": [float(v) for v in np.atleast_1d(e.residual)],
            }
        )
    except NumericFailureError as e:
        failures.append({"stage": cfg.kind, "error": "numeric-failure", "detail": str(e)})
    except NeumannLabError as e:
        failures.append({"stage": cfg.kind, "error": type(e).__name__, "detail": str(e)})
    return est.EstimateReport(records, provenance, cfg.hash(), failures)


def _run_kind(cfg, records):
    kind = cfg.kind
    if kind == "verify-coeff":
        records.extend(_verify_coeff(cfg))
    elif kind == "solve":
        records.extend(_solve_experiment(cfg))
    elif kind == "kernel":
        records.extend(_kernel_experiment(cfg))
    elif kind == "estimates":
        records.extend(_estimates_experiment(cfg))
    elif kind == "oracle-compare":
        records.extend(_oracle_experiment(cfg))
    elif kind == "full-suite":
        records.extend(_verify_coeff(cfg))
        records.extend(_solve_experiment(cfg))
        records.extend(_kernel_experiment(cfg))
        records.extend(_estimates_experiment(cfg))
        if cfg.coeff_type == "identity" and cfg.mesh_type == "box":
            records.extend(_oracle_experiment(cfg))


def _verify_coeff(cfg):
    fld = coeffmod.make_coefficient(_build_spec(cfg))
    rng = np.random.default_rng(cfg.seed)
    lo = np.zeros(3)
    hi = np.asarray(cfg.mesh_extents, dtype=float)
    pts = lo + rng.uniform(size=(64, 3)) * (hi - lo)
    lam_est, m_est = coeffmod.verify_ellipticity_bounds(fld, pts, probe_count=8, seed=cfg.seed)
    rec = est.CheckRecord(
        name="ellipticity-bounds",
        samples=[(1.0, lam_est), (2.0, m_est)],
        params={"lambda_est": lam_est, "M_est": m_est, "declared": [fld.lam, fld.bound]},
    )
    rec.passed = True  # verify_ellipticity_bounds raises on violation
    return [rec]


def _solve_experiment(cfg):
    mesh = _build_mesh(cfg)
    fld = coeffmod.make_coefficient(_build_spec(cfg))
    scfg = _solve_config(cfg)
    m = fld.m
    L = cfg.mesh_extents[0]

    def f(p):
        return np.broadcast_to(
            (np.pi / L) ** 2 * np.cos(np.pi * p[:, 0] / L)[:, None], (len(p), m)
        ).copy()

    if mesh.is_graph:
        from .solve import solve_neumann_graph

        center = 0.5 * (mesh.nodes.min(0) + mesh.nodes.max(0))

        def bump(p):
            r2 = ((p - center) ** 2).sum(axis=1)
            return np.broadcast_to(
                np.maximum(0.0, 1.0 - r2 / (4 * mesh.h) ** 2)[:, None], (len(p), m)
            ).copy()

        u = solve_neumann_graph(mesh, fld, bump, scfg)
        far = float(np.abs(u.values[mesh.far_nodes]).max())
        return [
            _rec("graph-far-boundary-zero", far, 1e-14),
            _rec("solve-residual", u.info.residual, scfg.tolerance * 100),
        ]

    u = solve_neumann_bounded(mesh, fld, f, None, scfg)
    bm = float(np.abs(boundary_mean(u)).max())
    recs = [_rec("solve-boundary-mean", bm, 10 * scfg.tolerance)]
    recs.append(_rec("solve-residual", u.info.residual, scfg.tolerance * 100))
    return recs


def _kernel_experiment(cfg):
    mesh = _build_mesh(cfg)
    fld = coeffmod.make_coefficient(_build_spec(cfg))
    scfg = _solve_config(cfg)
    eps = cfg.eps_factor * mesh.h
    recs = []

    mol = Mollifier(tuple(0.5 * (mesh.nodes.min(0) + mesh.nodes.max(0))), eps)
    mass = integrate_mollifier(mol)
    recs.append(_rec("mollifier-mass", abs(mass - 1.0), 1e-6))

    rng = np.random.default_rng(cfg.seed)
    solver = NeumannSolver(mesh, fld, scfg)
    for pole in _pole_list(cfg, mesh):
        kern = build_kernel(mesh, fld, pole, scfg, eps=eps, solver=solver, threads=cfg.threads)
        worst = 0.0
        for _ in range(cfg.trials):
            vals = rng.standard_normal((mesh.n_nodes, fld.m))
            if mesh.is_graph:
                vals[mesh.far_nodes] = 0.0
            phi = DiscreteField(mesh, vals)
            worst = max(worst, float(np.abs(check_defining_identity(kern, phi)).max()))
        recs.append(
            _rec(
                "defining-identity",
                worst,
                cfg.identity_tol,
                {"pole": list(map(float, pole)), "telemetry": kern.telemetry},
            )
        )
    if not mesh.is_graph:
        poles = _pole_list(cfg, mesh)
        pole_y = poles[0]
        pole_x = poles[-1] if len(poles) > 1 else pole_y + 0.0
        k_fwd = build_kernel(mesh, fld, pole_y, scfg, eps=eps, solver=solver)
        k_adj = build_kernel(mesh, fld, pole_x, scfg, eps=eps, adjoint=True)
        defect = check_symmetry_identity(k_fwd, k_adj)
        recs.append(_rec("symmetry-identity", defect, cfg.identity_tol))
    return recs


def _estimates_experiment(cfg):
    mesh = _build_mesh(cfg)
    fld = coeffmod.make_coefficient(_build_spec(cfg))
    scfg = _solve_config(cfg)
    solver = NeumannSolver(mesh, fld, scfg)
    pole = _pole_list(cfg, mesh)[0]
    kern = build_kernel(mesh, fld, pole, scfg, eps=cfg.eps_factor * mesh.h, solver=solver)
    recs = [est.pointwise_decay_check(kern, seed=cfg.seed)]
    a6, adn = est.annulus_fit(kern)
    recs += [a6, adn]
    recs.append(est.local_norm_fit(kern, 1.0, gradient=False))
    recs.append(est.local_norm_fit(kern, 1.0, gradient=True))
    recs.append(est.distribution_fit(kern, gradient=False))
    recs.append(est.distribution_fit(kern, gradient=True))
    if not mesh.is_graph:
        recs.append(
            est.test_local_boundedness(mesh, fld, trials=cfg.trials, seed=cfg.seed, solver=solver)
        )
    return recs


def _oracle_experiment(cfg):
    mesh = _build_mesh(cfg)
    if mesh.is_graph or cfg.coeff_type != "identity":
        raise NeumannLabError("oracle-compare requires identity coefficients on a box/graph mesh")
    if tuple(cfg.mesh_extents) != (1.0, 1.0, 1.0):
        raise NeumannLabError("the cube series oracle is defined on the unit cube")
    fld = coeffmod.make_coefficient(_build_spec(cfg))
    scfg = _solve_config(cfg)
    kern = build_kernel(mesh, fld, (0.5, 0.5, 0.5), scfg, eps=cfg.eps_factor * mesh.h)
    h = mesh.h
    rng = np.random.default_rng(cfg.seed)
    dirs = rng.standard_normal((16, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.geomspace(4 * h, 0.25, 4)
    probes = np.concatenate([np.array([0.5, 0.5, 0.5]) + r * dirs for r in radii])
    fe = kern.magnitude_at(probes)
    oracle = np.abs(cube_neumann_series_batch(probes, np.array([0.5, 0.5, 0.5]), SeriesConfig(cfg.oracle_cutoff)))
    rel = float(np.max(np.abs(fe - oracle) / oracle))
    return [_rec("oracle-cube-agreement", rel, cfg.oracle_rtol, {"probes": len(probes)})]


def emit_report(report, outdir, formats=("json", "csv-bundle")):
    """Write report.json and one CSV per record; returns the file list."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(report.to_json())
        written.append(path)
    if "csv-bundle" in formats:
        rec_dir = out / "records"
        rec_dir.mkdir(exist_ok=True)
        for i, rec in enumerate(report.records):
            path = rec_dir / f"{i:02d}_{rec.name}.csv"
            lines = ["scale,value"] + [f"{a!r},{b!r}" for a, b in rec.samples]
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
    return written


def main(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--threads", type=int, help="bounded work pool size")
    parser = argparse.ArgumentParser(prog="neumannlab", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="kind")
    for kind in KINDS:
        sub.add_parser(kind, parents=[common])
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config) if args.config else RunConfig()
        if args.kind:
            cfg.kind = args.kind
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.outdir = args.out
        if args.threads:
            cfg.threads = args.threads
    except (OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    report = run_experiment(cfg)
    try:
        emit_report(report, cfg.outdir)
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2
    for rec in report.records:
        if rec.skipped:
            status = "skip"
        elif rec.passed is None:
            status = "info"  # recorded but not suite-gating (e.g. low-power fits)
        else:
            status = "pass" if rec.passed else "FAIL"
        slope = "" if rec.slope is None else f" slope={rec.slope:.3f}"
        const = (
            ""
            if rec.empirical_constant is None
            else f" const={rec.empirical_constant:.3g}"
        )
        print(f"[{status}] {rec.name}{slope}{const}")
    for failure in report.failures:
        print(f"[FAIL] {failure['error']}: {failure['detail']}")
    if any(f["error"] == "numeric-failure" for f in report.failures):
        return 3
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
