"""Command-line orchestration of the off-line / on-line pipeline.

Subcommands: `celldb build`, `macro run`, `reconstruct`, `dns run`,
`errors`, `demo`.  Exit codes: 0 success, 2 configuration error,
3 solver failure, 4 I/O failure.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import fem
from .analysis import ErrorRow, energy_monitor, error_norms, write_error_csv
from .celldb import CellDatabase, build_database
from .config import ConfigError, parse_config
from .dns import dns_mesh, run_dns
from .fieldio import load_fields, load_trajectory, save_fields, \
    save_trajectory
from .macro import db_coeff_provider, run_macro
from .materials import MaterialError, validate_assumptions
from .presets import PRESETS, demo_config
from .reconstruct import derivatives_for, reconstruct
from .vtkio import write_vtk

log = logging.getLogger("homshell")


def _progress(tag):
    def cb(done, total):
        if done == total or done % max(1, total // 10) == 0:
            print(f"  {tag}: {done}/{total}", file=sys.stderr)
    return cb


def cmd_celldb_build(args):
    cfg = parse_config(args.config)
    report = validate_assumptions(cfg.material)
    log.info("coefficient assumptions hold: gamma0=%.3g gamma1=%.3g",
             report["gamma0"], report["gamma1"])
    db = build_database(cfg.frame, cfg.domain, cfg.unitcell, cfg.material,
                        (cfg.sampling.cell_divisions,) * 3,
                        cfg.sampling.alpha3_count, cfg.sampling.tbar_count,
                        t_ref=cfg.loads.t_ref, workers=args.workers,
                        progress=_progress("cell samples"))
    db.save(args.out)
    print(f"cell database written to {args.out} "
          f"({db.alpha3.size} x {db.tbar.size} samples, "
          f"cell mesh {db.cell_div[0]}^3)")
    return 0


def _load_db(cfg, path):
    return CellDatabase.load(path, frame=cfg.frame, unitcell=cfg.unitcell,
                             material=cfg.material)


def cmd_macro_run(args):
    cfg = parse_config(args.config)
    db = _load_db(cfg, args.db)
    mesh = fem.mesh_box(cfg.domain.lo, cfg.domain.hi,
                        cfg.sampling.macro_divisions)
    traj = run_macro(mesh, cfg.frame, cfg.domain, db, cfg.loads, cfg.params,
                     stride=cfg.output.stride, linear_mode=args.linear,
                     progress=_progress("macro steps"))
    save_trajectory(args.out, mesh, cfg.frame, traj)
    final = traj.final()
    write_vtk(os.path.join(args.out, "final.vtk"), mesh, cfg.frame,
              T=final.T, u=final.u, title="homogenized fields")
    provider = db_coeff_provider(db, mesh)
    metric = fem.MeshMetric.from_frame(mesh, cfg.frame) \
        if not cfg.frame.is_cartesian else fem.MeshMetric.unit()
    _, energy, flag = energy_monitor(mesh, metric, provider, traj)
    print(f"macro run complete: {cfg.params.steps} steps, "
          f"{mesh.n_nodes} nodes ({4 * mesh.n_nodes} unknowns/step), "
          f"final energy {energy[-1]:.6g}"
          + (" [GROWTH FLAG]" if flag else ""))
    return 0


def cmd_dns_run(args):
    cfg = parse_config(args.config)
    mesh, traj = run_dns(cfg.domain, cfg.frame, cfg.unitcell, cfg.material,
                         cfg.loads, cfg.params,
                         divisions_per_cell=cfg.sampling.dns_divisions_per_cell,
                         stride=cfg.output.stride, linear_mode=args.linear,
                         progress=_progress("dns steps"))
    save_trajectory(args.out, mesh, cfg.frame, traj)
    final = traj.final()
    write_vtk(os.path.join(args.out, "final.vtk"), mesh, cfg.frame,
              T=final.T, u=final.u, title="fine-mesh reference fields")
    print(f"dns run complete: {mesh.n_nodes} nodes "
          f"({4 * mesh.n_nodes} unknowns/step)")
    return 0


def cmd_reconstruct(args):
    cfg = parse_config(args.config)
    db = _load_db(cfg, args.db)
    mesh, frame, traj = load_trajectory(args.traj)
    query = dns_mesh(cfg.domain, cfg.sampling.dns_divisions_per_cell)
    snaps = traj.snapshots if args.step is None else \
        [traj.at_step(args.step)]
    entries = []
    for snap in snaps:
        derivs = derivatives_for(mesh, frame, snap, traj.dt) \
            if args.order > 0 else None
        mf = reconstruct(args.order, query.nodes, snap, db, mesh, frame,
                         cfg.domain, cfg.loads.t_ref, derivs=derivs,
                         dt=traj.dt)
        entries.append((snap.step, snap.t, mf.T, mf.u))
    save_fields(args.out, query, frame, args.order, entries)
    step, t, T, u = entries[-1]
    write_vtk(os.path.join(args.out, f"step_{step}.vtk"), query, frame,
              T=T, u=u, title=f"order-{args.order} reconstruction")
    print(f"reconstruction order {args.order}: {len(entries)} step(s) at "
          f"{query.n_nodes} query points -> {args.out}")
    return 0


def cmd_errors(args):
    ref_mesh, ref_frame, ref_traj = load_trajectory(args.ref)
    metric = fem.MeshMetric.from_frame(ref_mesh, ref_frame) \
        if not ref_frame.is_cartesian else fem.MeshMetric.unit()
    cands = {}
    for path in args.cand:
        mesh, _, order, fields = load_fields(path)
        if mesh.div != ref_mesh.div or not np.allclose(mesh.lo, ref_mesh.lo)\
                or not np.allclose(mesh.hi, ref_mesh.hi):
            raise ValueError(f"candidate {path} query mesh differs from "
                             "the reference mesh")
        cands[order] = {step: (T, u) for step, _, T, u in fields}
    rows = []
    for snap in ref_traj.snapshots:
        if snap.step == 0:
            continue
        if not any(snap.step in c for c in cands.values()):
            continue
        per = {o: [np.nan] * 4 for o in range(3)}
        for order, fields in cands.items():
            if snap.step in fields:
                T, u = fields[snap.step]
                per[order] = error_norms(ref_mesh, metric, T, u,
                                         snap.T, snap.u)
        rows.append(ErrorRow(
            t=snap.t,
            Terr=tuple(per[o][0] for o in range(3)),
            TErr=tuple(per[o][1] for o in range(3)),
            Derr=tuple(per[o][2] for o in range(3)),
            DErr=tuple(per[o][3] for o in range(3))))
    if not rows:
        raise ValueError("no common steps between reference and candidates")
    write_error_csv(args.out, rows)
    print(f"error table with {len(rows)} row(s) -> {args.out}")
    return 0


def cmd_demo(args):
    text = demo_config(args.name, scale=args.scale)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        print(f"{args.name} preset ({args.scale} scale) -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="homshell",
        description="two-stage multiscale thermo-mechanical shell solver")
    p.add_argument("--verbose", action="store_true",
                   help="log conversions and stage details")
    sub = p.add_subparsers(dest="command", required=True)

    celldb = sub.add_parser("celldb", help="off-line cell database stage")
    celldb_sub = celldb.add_subparsers(dest="action", required=True)
    b = celldb_sub.add_parser("build", help="solve all cell samples")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_celldb_build)

    macro = sub.add_parser("macro", help="on-line homogenized solve")
    macro_sub = macro.add_subparsers(dest="action", required=True)
    r = macro_sub.add_parser("run")
    r.add_argument("--config", required=True)
    r.add_argument("--db", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--linear", action="store_true",
                   help="freeze coefficients at the reference temperature")
    r.set_defaults(func=cmd_macro_run)

    rec = sub.add_parser("reconstruct",
                         help="multiscale field reconstruction")
    rec.add_argument("--config", required=True)
    rec.add_argument("--db", required=True)
    rec.add_argument("--traj", required=True)
    rec.add_argument("--order", type=int, choices=(0, 1, 2), required=True)
    rec.add_argument("--out", required=True)
    rec.add_argument("--step", type=int, default=None)
    rec.set_defaults(func=cmd_reconstruct)

    dns = sub.add_parser("dns", help="fine-mesh reference solve")
    dns_sub = dns.add_subparsers(dest="action", required=True)
    d = dns_sub.add_parser("run")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--linear", action="store_true")
    d.set_defaults(func=cmd_dns_run)

    err = sub.add_parser("errors", help="error tables against a reference")
    err.add_argument("--ref", required=True)
    err.add_argument("--cand", action="append", required=True)
    err.add_argument("--out", required=True)
    err.set_defaults(func=cmd_errors)

    demo = sub.add_parser("demo", help="emit a preset configuration")
    demo.add_argument("name", choices=sorted(PRESETS))
    demo.add_argument("--scale", choices=("desk", "paper"), default="desk")
    demo.add_argument("--out", default=None)
    demo.set_defaults(func=cmd_demo)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (fem.SolverError, MaterialError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
