"""First- and second-order multiscale field reconstruction.

Macroscopic derivatives are recovered by volume-weighted element-to-node
averaging (applied twice for second derivatives); temporal derivatives use
backward differences on the stored step pair with the acceleration taken
from the integrator state.  Correction terms are then composed pointwise
from database-interpolated cell functions evaluated at the fast coordinate.
"""

from dataclasses import dataclass

import numpy as np

from . import fem
from .geometry import breve_strain
from .macro import elem_strain_voigt

PAIRS = fem.VOIGT_PAIRS
MULT = fem.VOIGT_MULT


@dataclass
class RecoveredDerivatives:
    """Nodal macroscopic derivative fields of one trajectory snapshot."""

    eps: np.ndarray        # (nn,6) breve strain, Voigt
    grad_eps: np.ndarray   # (nn,3,6) Psi_p of each strain component
    grad_T: np.ndarray     # (nn,3)
    hess_T: np.ndarray     # (nn,3,3) Psi_m Psi_n T, unsymmetrized
    acc: np.ndarray        # (nn,3) second time derivative of displacement
    dT_dt: np.ndarray      # (nn,)
    deps_dt: np.ndarray    # (nn,6)


def _psi_scale(mesh, frame, nodal_grad):
    """Scale recovered coordinate gradients to Psi-form at the nodes."""
    H, _, _ = frame.eval(mesh.nodes)
    if nodal_grad.ndim == 2:
        return nodal_grad / H
    return nodal_grad / H[:, :, None]


def recover_gradients(mesh, frame, T_nodal, u_nodal):
    """Spatial parts: nodal strain, strain gradients, Psi T and Psi Psi T."""
    # raw coordinate gradient of u, node-averaged, then breve strain at nodes
    Gu = fem.node_average(mesh, fem.elem_gradient(mesh, u_nodal))
    H, dH, _ = frame.eval(mesh.nodes)
    eps_t = breve_strain(u_nodal, Gu, H, dH)
    eps = np.stack([eps_t[:, i, j] for (i, j) in PAIRS], axis=1)

    gT = _psi_scale(mesh, frame,
                    fem.node_average(mesh, fem.elem_gradient(mesh, T_nodal)))

    hess = np.empty((mesh.n_nodes, 3, 3))
    for n in range(3):
        g = fem.node_average(mesh, fem.elem_gradient(mesh, gT[:, n]))
        hess[:, :, n] = _psi_scale(mesh, frame, g)

    grad_eps = np.empty((mesh.n_nodes, 3, 6))
    for I in range(6):
        g = fem.node_average(mesh, fem.elem_gradient(mesh, eps[:, I]))
        grad_eps[:, :, I] = _psi_scale(mesh, frame, g)
    return eps, grad_eps, gT, hess


def derivatives_for(mesh, frame, snap, dt):
    """Full derivative recovery for one snapshot.

    Backward time differences use the stored predecessor fields; at the
    initial snapshot the predecessor encodes the initial velocity, so the
    strain rate degenerates to the initial rate and the temperature rate
    to zero.
    """
    eps, grad_eps, gT, hess = recover_gradients(mesh, frame, snap.T, snap.u)
    eps_prev, _, _, _ = recover_gradients(mesh, frame, snap.T_prev,
                                          snap.u_prev)
    return RecoveredDerivatives(
        eps=eps, grad_eps=grad_eps, grad_T=gT, hess_T=hess,
        acc=snap.acc,
        dT_dt=(snap.T - snap.T_prev) / dt,
        deps_dt=(eps - eps_prev) / dt,
    )


@dataclass
class MicroField:
    """Reconstructed fields at query points, tagged by correction order."""

    points: np.ndarray
    T: np.ndarray
    u: np.ndarray
    order: int


def reconstruct(order, points, snap, db, mesh, frame, domain, t_ref,
                derivs=None, dt=None, chunk=50_000):
    """Evaluate homogenized (0), first-order (1) or second-order (2) fields.

    `mesh` is the macroscopic mesh carrying the snapshot; `points` are
    coordinate-space query locations (typically the reference-mesh nodes);
    `t_ref` is the stress-free reference temperature of the run.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    span = float(np.max(hi - lo))
    if np.any(pts < lo - 1e-9 * span) or np.any(pts > hi + 1e-9 * span):
        raise ValueError("query point outside the macroscopic domain")
    if derivs is None and order > 0:
        derivs = derivatives_for(mesh, frame, snap,
                                 dt if dt is not None else 1.0)
    xi = domain.xi

    T_out = np.empty(pts.shape[0])
    u_out = np.empty((pts.shape[0], 3))
    for s in range(0, pts.shape[0], chunk):
        sl = slice(s, min(s + chunk, pts.shape[0]))
        p = pts[sl]
        T0 = mesh.interpolate(snap.T, p)
        u0 = mesh.interpolate(snap.u, p)
        if order == 0:
            T_out[sl] = T0
            u_out[sl] = u0
            continue
        eps = mesh.interpolate(derivs.eps, p)             # (m,6)
        gT = mesh.interpolate(derivs.grad_T, p)           # (m,3)
        beta = domain.beta(p)
        packed = db.funcs_at(p[:, 2], T0, beta)
        view = db.field_view
        dT = T0 - t_ref

        n1 = view(packed, "n1")                           # (m,6,3)
        p1 = view(packed, "p1")                           # (m,3)
        m1 = view(packed, "m1")                           # (m,3)
        epsm = eps * MULT[None, :]
        T_out[sl] = T0 + xi * np.einsum("mk,mk->m", m1, gT)
        u_out[sl] = u0 + xi * (np.einsum("mIc,mI->mc", n1, epsm)
                               - p1 * dT[:, None])
        if order == 1:
            continue

        geps = mesh.interpolate(derivs.grad_eps, p)       # (m,3,6)
        hess = mesh.interpolate(derivs.hess_T, p)         # (m,3,3)
        hs = 0.5 * (hess + np.transpose(hess, (0, 2, 1)))
        hess_v = np.stack([hs[:, i, j] for (i, j) in PAIRS], axis=1)
        acc = mesh.interpolate(derivs.acc, p)             # (m,3)
        dTdt = mesh.interpolate(derivs.dT_dt, p)          # (m,)
        depsdt = mesh.interpolate(derivs.deps_dt, p)      # (m,6)

        u2 = (np.einsum("mpIc,mpI->mc", view(packed, "n2"),
                        geps * MULT[None, None, :])
              + np.einsum("mpc,mp->mc", view(packed, "h2"), gT)
              + np.einsum("mpc,mp->mc", view(packed, "f2"), acc)
              + np.einsum("mIc,mI->mc", view(packed, "w2"), epsm)
              + view(packed, "q2") * dT[:, None]
              + np.einsum("mpc,mp->mc", view(packed, "z2"), gT) * dT[:, None]
              - np.einsum("mpIc,mp,mI->mc", view(packed, "x2"), gT, epsm))
        gTo = np.stack([gT[:, i] * gT[:, j] for (i, j) in PAIRS], axis=1)
        T2 = (np.einsum("mI,mI->m", view(packed, "m2"), hess_v * MULT)
              + view(packed, "a2")[:, 0] * dTdt
              + np.einsum("mI,mI->m", view(packed, "g2"), depsdt * MULT)
              + np.einsum("mk,mk->m", view(packed, "r2"), gT)
              - np.einsum("mI,mI->m", view(packed, "b2"), gTo * MULT))
        T_out[sl] += xi * xi * T2
        u_out[sl] += xi * xi * u2
    return MicroField(points=pts, T=T_out, u=u_out, order=order)


def stress_and_flux(mesh, metric, coeffs, u_nodal, T_nodal, t_ref):
    """Pointwise constitutive post-processing on element midpoints.

    sigma_ij = a_ijkl eps_kl - b_ij (T - t_ref);  q_i = -k_ij Psi_j T.
    `coeffs` is a per-element coefficient dict as used by the assemblers.
    Returns (sigma (ne,6) Voigt, q (ne,3)).
    """
    eps = elem_strain_voigt(mesh, u_nodal, metric)
    sigma = np.einsum("eIJ,eJ->eI", coeffs["D"], eps)
    # undo the test-side multiplicity folded into the energy matrix
    sigma /= MULT[None, :]
    T_e = T_nodal[mesh.tets].mean(axis=1) - t_ref
    b = np.asarray(coeffs["b"])
    if b.ndim == 1:
        bv = np.zeros((mesh.n_elems, 6))
        bv[:, :3] = b[:, None]
    else:
        bv = np.stack([b[:, i, j] for (i, j) in PAIRS], axis=1)
    sigma -= bv * T_e[:, None]
    gT = fem.elem_gradient(mesh, T_nodal, metric)
    k = np.asarray(coeffs["k"])
    if k.ndim == 1:
        q = -k[:, None] * gT
    else:
        q = -np.einsum("eij,ej->ei", k, gT)
    return sigma, q
