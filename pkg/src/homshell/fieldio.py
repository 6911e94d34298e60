"""Exact-round-trip binary persistence of trajectories and field sets.

A field directory holds a text manifest plus one `step_<n>.bin` per
stored step, all arrays 64-bit little-endian in the documented order.
"""

import os

import numpy as np

from . import fem
from .geometry import CurvilinearFrame
from .macro import Snapshot, Trajectory

FORMAT_TAG = "homshell-field-v1"


def _write_manifest(path, entries):
    with open(os.path.join(path, "manifest"), "w") as f:
        for k, v in entries:
            f.write(f"{k} = {v}\n")


def _read_manifest(path):
    out = {}
    with open(os.path.join(path, "manifest")) as f:
        for line in f:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    if out.get("format") != FORMAT_TAG:
        raise ValueError(f"not a {FORMAT_TAG} directory: {path}")
    return out


def _frame_entries(frame):
    return [("frame_kind", frame.kind), ("frame_r1", repr(float(frame.r1))),
            ("frame_r2", repr(float(frame.r2)))]


def _frame_from(mf):
    return CurvilinearFrame(mf["frame_kind"], r1=float(mf["frame_r1"]),
                            r2=float(mf["frame_r2"]))


def _mesh_entries(mesh):
    return [("mesh_lo", ",".join(repr(float(v)) for v in mesh.lo)),
            ("mesh_hi", ",".join(repr(float(v)) for v in mesh.hi)),
            ("mesh_div", ",".join(str(d) for d in mesh.div))]


def _mesh_from(mf):
    lo = tuple(float(x) for x in mf["mesh_lo"].split(","))
    hi = tuple(float(x) for x in mf["mesh_hi"].split(","))
    div = tuple(int(x) for x in mf["mesh_div"].split(","))
    return fem.mesh_box(lo, hi, div)


def save_trajectory(path, mesh, frame, traj, extra=()):
    os.makedirs(path, exist_ok=True)
    steps = [s.step for s in traj.snapshots]
    entries = ([("format", FORMAT_TAG), ("kind", "trajectory"),
                ("dt", repr(float(traj.dt))), ("t_ref", repr(float(traj.t_ref))),
                ("steps", ",".join(str(s) for s in steps)),
                ("nl_iterations",
                 ",".join(str(i) for i in traj.nl_iterations))]
               + _frame_entries(frame) + _mesh_entries(mesh) + list(extra))
    _write_manifest(path, entries)
    for snap in traj.snapshots:
        blob = np.concatenate([snap.u.ravel(), snap.v.ravel(),
                               snap.acc.ravel(), snap.T,
                               snap.u_prev.ravel(), snap.T_prev])
        blob.astype("<f8").tofile(os.path.join(path,
                                               f"step_{snap.step}.bin"))


def load_trajectory(path):
    mf = _read_manifest(path)
    if mf.get("kind") != "trajectory":
        raise ValueError(f"{path} does not hold a trajectory")
    mesh = _mesh_from(mf)
    frame = _frame_from(mf)
    traj = Trajectory(dt=float(mf["dt"]), t_ref=float(mf["t_ref"]))
    if mf.get("nl_iterations"):
        traj.nl_iterations = [int(x) for x in
                              mf["nl_iterations"].split(",") if x]
    nn = mesh.n_nodes
    for step in (int(s) for s in mf["steps"].split(",") if s):
        blob = np.fromfile(os.path.join(path, f"step_{step}.bin"),
                           dtype="<f8")
        if blob.size != 14 * nn:
            raise ValueError(f"corrupt snapshot step_{step}.bin")
        u = blob[:3 * nn].reshape(nn, 3)
        v = blob[3 * nn:6 * nn].reshape(nn, 3)
        acc = blob[6 * nn:9 * nn].reshape(nn, 3)
        T = blob[9 * nn:10 * nn]
        u_prev = blob[10 * nn:13 * nn].reshape(nn, 3)
        T_prev = blob[13 * nn:]
        traj.snapshots.append(Snapshot(step=step, t=step * traj.dt, u=u,
                                       v=v, acc=acc, T=T, u_prev=u_prev,
                                       T_prev=T_prev))
    return mesh, frame, traj


def save_fields(path, query_mesh, frame, order, entries_ts):
    """Persist reconstructed (step, t, T (m,), u (m,3)) tuples."""
    os.makedirs(path, exist_ok=True)
    steps = [e[0] for e in entries_ts]
    times = [e[1] for e in entries_ts]
    entries = ([("format", FORMAT_TAG), ("kind", "reconstruction"),
                ("order", str(order)),
                ("steps", ",".join(str(s) for s in steps)),
                ("times", ",".join(repr(float(t)) for t in times))]
               + _frame_entries(frame) + _mesh_entries(query_mesh))
    _write_manifest(path, entries)
    for step, _, T, u in entries_ts:
        blob = np.concatenate([T, u.ravel()])
        blob.astype("<f8").tofile(os.path.join(path, f"step_{step}.bin"))


def load_fields(path):
    mf = _read_manifest(path)
    if mf.get("kind") != "reconstruction":
        raise ValueError(f"{path} does not hold reconstructed fields")
    mesh = _mesh_from(mf)
    frame = _frame_from(mf)
    order = int(mf["order"])
    steps = [int(s) for s in mf["steps"].split(",") if s]
    times = [float(t) for t in mf["times"].split(",") if t]
    out = []
    nn = mesh.n_nodes
    for step, t in zip(steps, times):
        blob = np.fromfile(os.path.join(path, f"step_{step}.bin"),
                           dtype="<f8")
        if blob.size != 4 * nn:
            raise ValueError(f"corrupt field file step_{step}.bin")
        out.append((step, t, blob[:nn], blob[nn:].reshape(nn, 3)))
    return mesh, frame, order, out
