"""Error metrics, convergence-rate fits, residual ordering and stability.

All comparisons run on the reference (fine) mesh with the curvilinear
volume weight; relative norms use the reference field's own norm.
"""

from dataclasses import dataclass

import numpy as np

from . import fem
from .macro import elem_strain_voigt


def l2_sq(mesh, metric, nodal):
    """integral(f^2 H) by the exact P1 element rule; vector fields sum."""
    f = np.asarray(nodal, dtype=float)
    wv = metric.wvol(mesh)
    if f.ndim == 1:
        v = f[mesh.tets]
        return float(np.sum(wv / 20.0 * (v.sum(axis=1) ** 2
                                         + (v ** 2).sum(axis=1))))
    return sum(l2_sq(mesh, metric, f[:, c]) for c in range(f.shape[1]))


def h1_semi_sq(mesh, metric, nodal):
    """integral(|Psi grad f|^2 H) for a scalar nodal field."""
    g = fem.elem_gradient(mesh, nodal, metric)
    wv = metric.wvol(mesh)
    return float(np.sum(wv[:, None] * g * g))


def h1_norm(mesh, nodal, metric=None):
    met = metric if metric is not None else fem.MeshMetric.unit()
    f = np.asarray(nodal, dtype=float)
    if f.ndim == 1:
        return np.sqrt(l2_sq(mesh, met, f) + h1_semi_sq(mesh, met, f))
    return np.sqrt(sum(l2_sq(mesh, met, f[:, c])
                       + h1_semi_sq(mesh, met, f[:, c])
                       for c in range(f.shape[1])))


def disp_seminorm(mesh, metric, u_nodal):
    """sqrt(sum_ij ||eps_ij(u)||_L2): strain-component seminorm."""
    eps = elem_strain_voigt(mesh, u_nodal, metric)
    wv = metric.wvol(mesh)
    comp_norms = np.sqrt(np.sum(wv[:, None] * eps * eps, axis=0))
    return float(np.sqrt(np.sum(fem.VOIGT_MULT * comp_norms)))


@dataclass
class ErrorRow:
    t: float
    Terr: tuple      # relative L2 temperature errors, orders 0,1,2
    TErr: tuple      # relative H1-seminorm temperature errors
    Derr: tuple      # relative L2 displacement errors
    DErr: tuple      # relative strain-seminorm displacement errors


def error_norms(mesh, metric, T_cand, u_cand, T_ref, u_ref):
    """One (Terr, TErr, Derr, DErr) tuple for a single candidate order."""
    ref_T_l2 = np.sqrt(l2_sq(mesh, metric, T_ref))
    ref_T_h1 = np.sqrt(h1_semi_sq(mesh, metric, T_ref))
    ref_u_l2 = np.sqrt(l2_sq(mesh, metric, u_ref))
    ref_u_h1 = disp_seminorm(mesh, metric, u_ref)
    if min(ref_T_l2, ref_u_l2) == 0.0:
        raise ZeroDivisionError("reference norm vanishes; relative error "
                                "undefined")
    dT = T_cand - T_ref
    du = u_cand - u_ref
    return (
        np.sqrt(l2_sq(mesh, metric, dT)) / ref_T_l2,
        np.sqrt(h1_semi_sq(mesh, metric, dT)) / max(ref_T_h1, 1e-300),
        np.sqrt(l2_sq(mesh, metric, du)) / ref_u_l2,
        disp_seminorm(mesh, metric, du) / max(ref_u_h1, 1e-300),
    )


@dataclass
class RateFit:
    xis: tuple
    errors: tuple
    slope: float
    residual: float


def rate_fit(xis, errors):
    """Least-squares slope of log(error) against log(xi)."""
    if len(xis) < 3:
        raise ValueError("rate fit needs at least 3 points")
    lx = np.log(np.asarray(xis, dtype=float))
    le = np.log(np.asarray(errors, dtype=float))
    coef, res = np.polyfit(lx, le, 1, full=True)[:2]
    resid = float(res[0]) if len(res) else 0.0
    return RateFit(xis=tuple(xis), errors=tuple(errors),
                   slope=float(coef[0]), residual=resid)


def weak_residual(mesh, frame, domain, provider, loads, params,
                  T_now, T_prev, u_now, u_prev, u_prev2, acc, t_now):
    """Discrete weak residual of the governing system for given fields.

    Plugs the fields into the same fully discrete forms the solvers use
    (theta-weighted conduction with the displacement predictor; momentum
    with the supplied acceleration) and returns the 2-norms of the free
    thermal / mechanical residual vectors.
    """
    p = params
    metric = fem.MeshMetric.from_frame(mesh, frame) \
        if not frame.is_cartesian else fem.MeshMetric.unit()
    hfun = None if frame.is_cartesian else (lambda pts: frame.eval(pts)[2])
    c = provider(T_now[mesh.tets].mean(axis=1))

    K_th = fem.assemble_scalar_stiffness(mesh, c["k"], metric)
    M_S = fem.assemble_scalar_mass(mesh, c["S"], metric, point_weight=hfun)

    def mat3(arr):
        a = np.asarray(arr, dtype=float)
        if a.ndim == 1:
            out = np.zeros((a.size, 3, 3))
            out[:, np.arange(3), np.arange(3)] = a[:, None]
            return out
        return a

    theta = mat3(c["theta"])
    d_eps = (elem_strain_voigt(mesh, u_prev, metric)
             - elem_strain_voigt(mesh, u_prev2, metric))
    tv = np.stack([theta[:, i, j] for (i, j) in fem.VOIGT_PAIRS], axis=1)
    s = np.einsum("eI,eI->e", tv * fem.VOIGT_MULT[None, :], d_eps)
    twoway = fem.load_point_sources(mesh, s, metric)

    hload_now = fem.load_point_sources(
        mesh, loads.fn("heat_source", 1)(mesh.centroids, t_now), metric)
    hload_prev = fem.load_point_sources(
        mesh, loads.fn("heat_source", 1)(mesh.centroids, t_now - p.dt),
        metric)
    r_T = (M_S @ (T_now - T_prev) / p.dt
           + p.delta * (K_th @ T_now) + (1 - p.delta) * (K_th @ T_prev)
           + p.varpi * twoway / p.dt
           - p.delta * hload_now - (1 - p.delta) * hload_prev)

    K_me = fem.assemble_elasticity_stiffness(mesh, c["D"], metric)
    M_me = fem.assemble_vector_mass(mesh, c["rho"], metric,
                                    point_weight=hfun)
    b = mat3(c["b"])
    bv = np.stack([b[:, i, j] for (i, j) in fem.VOIGT_PAIRS], axis=1)
    T_e = T_now[mesh.tets].mean(axis=1) - loads.t_ref
    bload = fem.load_strain_test(mesh, bv * T_e[:, None], metric)
    fload = fem.load_point_sources(
        mesh, loads.fn("body_force", 3)(mesh.centroids, t_now), metric,
        vector=True)
    r_u = (M_me @ acc.ravel() + K_me @ u_now.ravel() - bload - fload)

    tn = [mesh.boundary_nodes(f) for f in domain.dirichlet_t]
    t_fixed = np.unique(np.concatenate(tn)) if tn else np.array([], int)
    un = [mesh.boundary_nodes(f) for f in domain.dirichlet_u]
    u_fixed_nodes = np.unique(np.concatenate(un)) if un else \
        np.array([], int)
    free_T = np.setdiff1d(np.arange(mesh.n_nodes), t_fixed)
    u_fixed = (3 * u_fixed_nodes[:, None] + np.arange(3)).ravel()
    free_u = np.setdiff1d(np.arange(3 * mesh.n_nodes), u_fixed)
    return (float(np.linalg.norm(r_T[free_T])),
            float(np.linalg.norm(r_u[free_u])))


def energy_monitor(mesh, metric, provider, traj):
    """Kinetic + strain + thermal energy per stored snapshot.

    Returns (times, energies, growth_flag); the flag marks monotone growth
    over the trailing half of the series beyond a factor of 10.
    """
    times, energies = [], []
    wv = metric.wvol(mesh)
    for snap in traj.snapshots:
        c = provider(snap.T[mesh.tets].mean(axis=1))
        v_e = snap.v[mesh.tets].mean(axis=1)
        kinetic = float(np.sum(c["rho"] * wv * np.sum(v_e ** 2, axis=1)))
        eps = elem_strain_voigt(mesh, snap.u, metric)
        strain = float(np.einsum("e,eI,eIJ,eJ->", wv, eps, c["D"], eps))
        dT_e = snap.T[mesh.tets].mean(axis=1) - traj.t_ref
        thermal = float(np.sum(c["S"] * wv * dT_e ** 2))
        times.append(snap.t)
        energies.append(kinetic + strain + thermal)
    E = np.asarray(energies)
    flag = False
    if len(E) >= 4:
        half = len(E) // 2
        tail = E[half:]
        if np.all(np.diff(tail) > 0) and tail[-1] > 10.0 * max(tail[0], 1e-300):
            flag = True
    if not np.all(np.isfinite(E)):
        flag = True
    return np.asarray(times), E, bool(flag)


CSV_HEADER = ("t,Terr0,Terr1,Terr2,TErr0,TErr1,TErr2,"
              "Derr0,Derr1,Derr2,DErr0,DErr1,DErr2")


def write_error_csv(path, rows):
    """Machine-readable error table, one row per compared snapshot."""
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for r in rows:
            cells = [f"{r.t:.10g}"]
            for tup in (r.Terr, r.TErr, r.Derr, r.DErr):
                cells += [f"{v:.10g}" if v == v else "nan" for v in tup]
            f.write(",".join(cells) + "\n")
