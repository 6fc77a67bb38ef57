"""Config-driven command-line entry point.

Subcommands: ``mesh gen`` / ``mesh check`` for mesh tooling and ``run``
for the preset experiments (convergence studies and the driven
surface/subsurface flow demo).  All outputs land under ``--out-dir``
with a manifest JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:      # pragma: no cover - py310 fallback
    import tomli as tomllib

from importlib import resources

from .assembly import LoadAssembler, PenaltySpec, SourceSet, assemble_system
from .material import MaterialModel
from .mesh import (MeshError, generate_cartesian, generate_triangulated,
                   generate_voronoi, load_mesh, regularity_report, save_mesh)
from .space import DgSpace
from .stepper import ThetaScheme, TimeStepper, n_steps_for, project_initial, run
from .analysis import (make_energy_monitor, manufactured_case,
                       run_convergence, weak_symmetry_residuals)
from .postproc import export_vtk, interface_flux_profile, make_snapshot

log = logging.getLogger("polydg")

PRESET_NAMES = ("test1", "test2", "test3A", "test3B")

TEST1_BOXES = {"p": (-1.0, 0.0, 0.0, 1.0), "f": (0.0, 0.0, 1.0, 1.0)}
TEST3_BOXES = {"p": (0.0, -1.0, 2.0, 0.0), "f": (0.0, 0.0, 2.0, 1.0)}


class ConfigError(Exception):
    pass


def inflow_h(t):
    """Logistic inflow ramp 1 / (1 + exp(-10 (t - 1)))."""
    return 1.0 / (1.0 + np.exp(-10.0 * (t - 1.0)))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_preset(name):
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    ref = resources.files("polydg.presets").joinpath(f"{name}.toml")
    with ref.open("rb") as fh:
        return tomllib.load(fh)


def _deep_update(base, extra):
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], val)
        else:
            base[key] = val
    return base


def resolve_config(args):
    """Merge preset, optional config file, and CLI overrides."""
    config = load_preset(args.preset) if args.preset else {}
    if args.config:
        with open(args.config, "rb") as fh:
            _deep_update(config, tomllib.load(fh))
    if not config:
        raise ConfigError("need --preset and/or --config")
    if args.degree is not None:
        config.setdefault("space", {})["degree"] = args.degree
    if args.refinements is not None:
        config.setdefault("mesh", {})["refinements"] = args.refinements
    if args.mesh_kind is not None:
        config.setdefault("mesh", {})["kind"] = args.mesh_kind
    if args.dt is not None:
        config.setdefault("time", {})["dt"] = args.dt
    if args.T is not None:
        config.setdefault("time", {})["T"] = args.T
    if args.theta is not None:
        config.setdefault("time", {})["theta"] = args.theta
    if args.pstudy:
        config.setdefault("case", {})["kind"] = "p_study"
        lo, hi = args.pstudy.split("..")
        config["case"]["degrees"] = list(range(int(lo), int(hi) + 1))
    validate_config(config)
    return config


def validate_config(config):
    bad = []
    case = config.get("case", {})
    if case.get("name") not in ("test1", "test2", "test3"):
        bad.append("case.name")
    if case.get("kind") not in ("h_convergence", "p_study", "simulate"):
        bad.append("case.kind")
    if config.get("space", {}).get("degree", 1) < 1:
        bad.append("space.degree")
    mesh = config.get("mesh", {})
    if mesh.get("kind", "cartesian") not in ("cartesian", "voronoi", "triangle"):
        bad.append("mesh.kind")
    tm = config.get("time", {})
    for key in ("T", "dt"):
        if tm.get(key, 1.0) <= 0:
            bad.append(f"time.{key}")
    if not 0.5 <= tm.get("theta", 0.5) <= 1.0:
        bad.append("time.theta")
    solver = config.get("solver", {})
    if solver.get("kind", "direct") not in ("direct", "iterative"):
        bad.append("solver.kind")
    if solver.get("tol", 1e-10) <= 0:
        bad.append("solver.tol")
    if bad:
        raise ConfigError("invalid config keys: " + ", ".join(bad))


def material_from_config(config):
    mp = dict(config.get("material", {}).get("p", {}))
    mf = dict(config.get("material", {}).get("f", {}))
    it = dict(config.get("interface", {}))
    rho_f = mp.get("rho_f", 1.0)
    if "rho_f" in mf and abs(mf["rho_f"] - rho_f) > 0:
        raise ConfigError("material.p.rho_f and material.f.rho_f must agree")
    return MaterialModel(
        rho_s=mp.get("rho_s", 1.0), rho_f=rho_f, phi=mp.get("phi", 0.5),
        a=mp.get("a", 1.0), eta=mp.get("eta", 1.0), kappa=mp.get("kappa", 1.0),
        lam=mp.get("lam", 1.0), mu=mp.get("mu", 1.0),
        beta=mp.get("beta", 1.0), m=mp.get("m", 1.0),
        mu_f=mf.get("mu_f", 0.5),
        alpha=it.get("alpha", 1.0), delta=it.get("delta", 1.0),
        gamma=it.get("gamma", 0.0))


def penalty_from_config(config):
    pen = config.get("penalty", {})
    return PenaltySpec(c1=pen.get("c1", 10.0), c2=pen.get("c2", 10.0),
                       c3=pen.get("c3", 10.0))


# ---------------------------------------------------------------------------
# mesh construction helpers
# ---------------------------------------------------------------------------

def test3_tagger(region, midpoint, normal, tol=1e-9):
    x, y = midpoint
    if region == "f":
        if abs(x - 2.0) < tol:
            return "neumann"          # outflow: traction-free
        return "dirichlet"            # left inflow and top lid
    if abs(y + 1.0) < tol:
        return "neumann"              # drained, traction-free bottom
    return "dirichlet"                # clamped lateral sides


def build_mesh_family(config, boxes, tagger=None):
    mesh_cfg = config.get("mesh", {})
    kind = mesh_cfg.get("kind", "cartesian")
    base = mesh_cfg.get("base", 4)
    refinements = mesh_cfg.get("refinements", 1)
    rng_seed = mesh_cfg.get("rng_seed", 1)
    lloyd = mesh_cfg.get("lloyd", 3)
    meshes = []
    for lvl in range(refinements):
        if kind == "cartesian":
            n = base * 2 ** lvl
            meshes.append(generate_cartesian(boxes, n, n, tagger))
        elif kind == "triangle":
            n = base * 2 ** lvl
            meshes.append(generate_triangulated(boxes, n, n, tagger))
        else:
            seeds = mesh_cfg.get("seeds", base ** 2) * 4 ** lvl
            meshes.append(generate_voronoi(boxes, seeds, lloyd,
                                           rng_seed + lvl, tagger))
    return meshes


def single_mesh(config, boxes, tagger=None):
    cfg = dict(config.get("mesh", {}))
    cfg["refinements"] = 1
    sub = dict(config)
    sub["mesh"] = cfg
    return build_mesh_family(sub, boxes, tagger)[0]


# ---------------------------------------------------------------------------
# run modes
# ---------------------------------------------------------------------------

def run_case(config, out_dir, workers=1, dump_matrices=False):
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    kind = config["case"]["kind"]
    outputs = []
    if kind in ("h_convergence", "p_study"):
        outputs = _run_verification(config, out_dir, workers)
    else:
        outputs = _run_simulation(config, out_dir, dump_matrices)
    manifest = {
        "config": config,
        "outputs": outputs,
        "elapsed_seconds": time.time() - t0,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    log.info("wrote %s", path)
    return manifest


def _run_verification(config, out_dir, workers):
    name = config["case"]["name"]
    material = material_from_config(config)
    case = manufactured_case(name, material)
    tm = config.get("time", {})
    case_kwargs = dict(dt=tm.get("dt"), T=tm.get("T"), theta=tm.get("theta"))
    outputs = []
    if config["case"]["kind"] == "h_convergence":
        meshes = build_mesh_family(config, case.region_boxes)
        degree = config.get("space", {}).get("degree", 2)
        table = run_convergence(case, meshes=meshes, degree=degree,
                                workers=workers, **case_kwargs)
        out = os.path.join(out_dir, f"{name}_h_p{degree}.csv")
        table.write_csv(out)
        outputs.append(out)
        print(table)
    else:
        mesh = single_mesh(config, case.region_boxes)
        degrees = config["case"].get("degrees", [1, 2, 3])
        table = run_convergence(case, mesh=mesh, degrees=degrees,
                                **case_kwargs)
        out = os.path.join(out_dir, f"{name}_p_study.csv")
        table.write_csv(out)
        outputs.append(out)
        print(table)
    return outputs


def test3_sources():
    """Driven flow: zero body forces, inflow through the velocity data."""
    def G_fD(pts, t):
        out = np.zeros((len(pts), 2))
        left = np.abs(pts[:, 0]) < 1e-9
        y = pts[left, 1]
        out[left, 0] = inflow_h(t) * (-40.0 * y * (y - 1.0))
        return out

    return SourceSet(G_fD=G_fD)


def _run_simulation(config, out_dir, dump_matrices=False):
    material = material_from_config(config)
    spec = penalty_from_config(config)
    mesh = single_mesh(config, TEST3_BOXES, test3_tagger)
    degree = config.get("space", {}).get("degree", 3)
    space = DgSpace(mesh, degree, degree)
    system = assemble_system(mesh, space, material, spec)
    loads = LoadAssembler(mesh, space, material, spec, test3_sources(),
                          system.segmentation)
    tm = config.get("time", {})
    solver = config.get("solver", {})
    scheme = ThetaScheme(theta=tm.get("theta", 0.5), dt=tm.get("dt", 0.01),
                         solver=solver.get("kind", "direct"),
                         tol=solver.get("tol", 1e-10))
    stepper = TimeStepper(system.M, system.A, scheme, loads.assemble)
    state0 = project_initial(space)
    stride = config.get("output", {}).get("stride", 0)
    n_steps = n_steps_for(tm.get("T", 1.5), scheme.dt)
    log.info("simulate: %d cells, ndof=%d, %d steps",
             mesh.n_cells, space.ndof, n_steps)
    monitor = make_energy_monitor(system, full_norm=True)
    traj = run(stepper, state0, n_steps, monitor=monitor,
               snapshot_stride=stride or max(n_steps, 1))
    outputs = []

    if dump_matrices:
        from .assembly import dump_blocks
        mat_dir = os.path.join(out_dir, "matrices")
        dump_blocks(system.blocks, mat_dir)
        outputs.append(mat_dir)

    mon_path = os.path.join(out_dir, "energy_monitor.csv")
    with open(mon_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "E", "E_p", "E_f", "E_lyap"])
        for rec in traj.monitors:
            writer.writerow([rec["t"], rec["E"], rec["Ep"], rec["Ef"],
                             rec["E_lyap"]])
    outputs.append(mon_path)

    snapshots = traj.states if stride else [traj.final]
    for snap_state in snapshots:
        if snap_state.k == 0:
            continue
        prev_k = _previous_state(traj, snap_state)
        snap = make_snapshot(space, material, snap_state, prev_k)
        path = os.path.join(out_dir, f"fields_{snap_state.k:05d}.vtk")
        export_vtk(mesh, space, snap, path)
        outputs.append(path)

    # interface flux continuity profile at final time
    prof = interface_flux_profile(space, material, traj.final,
                                  segmentation=system.segmentation)
    prof_path = os.path.join(out_dir, "interface_flux.csv")
    with open(prof_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "poro_flux", "fluid_flux"])
        writer.writerows(zip(*prof))
    outputs.append(prof_path)

    wsr = max(weak_symmetry_residuals(system, [traj.final]))
    log.info("final weak-symmetry residual: %.3e", wsr)
    return outputs


def _previous_state(traj, state):
    # states are strided; re-step is not available, so use the nearest
    # earlier snapshot for the backward-difference stress rate
    best = None
    for s in traj.states:
        if s.k < state.k and (best is None or s.k > best.k):
            best = s
    return best or state


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _mesh_gen(args):
    boxes = TEST1_BOXES if args.geometry == "test1" else TEST3_BOXES
    tagger = None if args.geometry == "test1" else test3_tagger
    if args.kind == "cartesian":
        mesh = generate_cartesian(boxes, args.nx, args.ny, tagger)
    elif args.kind == "triangle":
        mesh = generate_triangulated(boxes, args.nx, args.ny, tagger)
    else:
        mesh = generate_voronoi(boxes, args.seeds, args.lloyd, args.rng,
                                tagger)
    save_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_cells} cells, "
          f"{len(mesh.faces)} faces")
    return 0


def _mesh_check(args):
    mesh = load_mesh(args.file)
    rep = regularity_report(mesh)
    print(f"{args.file}: {mesh.n_cells} cells OK")
    print(f"  regularity ratio max: {rep.max_cell_ratio:.3f}")
    print(f"  neighbour size ratio max: {rep.max_neighbor_ratio:.3f}")
    from collections import Counter
    print("  face tags:", dict(Counter(f.tag for f in mesh.faces)))
    return 0


def _run(args):
    config = resolve_config(args)
    if args.dry_run:
        print(json.dumps(config, indent=2, sort_keys=True))
        return 0
    run_case(config, args.out_dir, workers=args.workers,
             dump_matrices=args.dump_matrices)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="polydg",
        description="Polytopal dG solver for coupled poroelastic/free-flow "
                    "wave propagation")
    sub = parser.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="mesh tooling")
    msub = pm.add_subparsers(dest="mesh_command", required=True)
    pg = msub.add_parser("gen", help="generate a mesh file")
    pg.add_argument("--kind", choices=("cartesian", "voronoi", "triangle"),
                    default="voronoi")
    pg.add_argument("--geometry", choices=("test1", "test3"), default="test1")
    pg.add_argument("--seeds", type=int, default=100,
                    help="voronoi seeds per region")
    pg.add_argument("--nx", type=int, default=8)
    pg.add_argument("--ny", type=int, default=8)
    pg.add_argument("--lloyd", type=int, default=3)
    pg.add_argument("--rng", type=int, default=0)
    pg.add_argument("--out", required=True)
    pg.set_defaults(func=_mesh_gen)
    pc = msub.add_parser("check", help="validate a mesh file")
    pc.add_argument("file")
    pc.set_defaults(func=_mesh_check)

    pr = sub.add_parser("run", help="run a preset or configured case")
    pr.add_argument("--preset", choices=PRESET_NAMES)
    pr.add_argument("--config", help="TOML file overriding the preset")
    pr.add_argument("--degree", type=int)
    pr.add_argument("--refinements", type=int)
    pr.add_argument("--pstudy", help="degree range, e.g. 1..4")
    pr.add_argument("--mesh-kind", choices=("cartesian", "voronoi", "triangle"))
    pr.add_argument("--dt", type=float)
    pr.add_argument("--T", type=float)
    pr.add_argument("--theta", type=float)
    pr.add_argument("--out-dir", default="out")
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--dump-matrices", action="store_true",
                    help="write per-block coordinate-format matrix files")
    pr.add_argument("--dry-run", action="store_true")
    pr.set_defaults(func=_run)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("POLYDG_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
