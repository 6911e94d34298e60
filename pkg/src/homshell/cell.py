"""Unit-cell corrector problems and homogenized coefficients.

All cell problems share two SPD operators on the unit-cell mesh (the
metric-scaled elasticity and conduction forms with the macroscopic H
frozen per sample) and differ only in their load vectors.  Periodic
boundary conditions are replaced by homogeneous Dirichlet values on the
whole cell boundary; right-hand sides containing derivatives of the
piecewise-constant coefficients are assembled weakly.
"""

from dataclasses import dataclass

import numpy as np

from . import fem
from .materials import lame_constants

# symmetric index pairs in Voigt order and their summation multiplicity
PAIRS = fem.VOIGT_PAIRS
PAIR_MULT = fem.VOIGT_MULT


@dataclass
class ElemCoeffs:
    """Per-element coefficient values (and T-derivatives) on the cell mesh."""

    lam: np.ndarray
    mu: np.ndarray
    b: np.ndarray
    k: np.ndarray
    theta: np.ndarray
    rho: np.ndarray
    c: np.ndarray
    lam1: np.ndarray     # first T-derivatives
    mu1: np.ndarray
    b1: np.ndarray
    k1: np.ndarray

    @classmethod
    def from_jets(cls, jets, phase):
        """jets: (matrix, inclusion) CoefficientJets; phase: (ne,) int."""
        def pick(vals):
            arr = np.array(vals, dtype=float)
            return arr[phase]

        lam = np.empty(2)
        mu = np.empty(2)
        lam1 = np.empty(2)
        mu1 = np.empty(2)
        for p, j in enumerate(jets):
            lam[p], mu[p] = lame_constants(j.E.val, j.nu)
            l1, m1 = lame_constants(1.0, j.nu)
            lam1[p], mu1[p] = l1 * j.E.d1, m1 * j.E.d1
        return cls(
            lam=pick(lam), mu=pick(mu),
            b=pick([j.b.val for j in jets]),
            k=pick([j.k.val for j in jets]),
            theta=pick([j.theta.val for j in jets]),
            rho=pick([j.rho.val for j in jets]),
            c=pick([j.c.val for j in jets]),
            lam1=pick(lam1), mu1=pick(mu1),
            b1=pick([j.b.d1 for j in jets]),
            k1=pick([j.k.d1 for j in jets]),
        )

    def a_contract(self, G, use_d1=False):
        """a_ijkl G[k,l] for isotropic a: returns (ne,3,3) symmetric in ij."""
        lam = self.lam1 if use_d1 else self.lam
        mu = self.mu1 if use_d1 else self.mu
        tr = np.trace(G, axis1=1, axis2=2)
        sym = G + np.transpose(G, (0, 2, 1))
        out = mu[:, None, None] * sym
        out[:, np.arange(3), np.arange(3)] += (lam * tr)[:, None]
        return out

    def a_pair(self, m, n, use_d1=False):
        """a_ijmn for a fixed pair (m,n): (ne,3,3)."""
        lam = self.lam1 if use_d1 else self.lam
        mu = self.mu1 if use_d1 else self.mu
        out = np.zeros((lam.size, 3, 3))
        if m == n:
            out[:, np.arange(3), np.arange(3)] += lam[:, None]
        out[:, m, n] += mu
        out[:, n, m] += mu
        return out


@dataclass
class FirstOrderCellSet:
    """Nodal corrector fields: n1 (6,nn,3), p1 (nn,3), m1 (3,nn)."""

    n1: np.ndarray
    p1: np.ndarray
    m1: np.ndarray

    def scalar_component_count(self):
        # symmetric pairs count twice, matching the unsymmetrized tally
        return int(sum(PAIR_MULT) * 3 + 3 + 3)


@dataclass
class SecondOrderCellSet:
    """Nodal second-order corrector fields (see build order in celldb)."""

    n2: np.ndarray   # (3,6,nn,3)
    h2: np.ndarray   # (3,nn,3)
    f2: np.ndarray   # (3,nn,3)
    w2: np.ndarray   # (6,nn,3)
    q2: np.ndarray   # (nn,3)
    z2: np.ndarray   # (3,nn,3)
    x2: np.ndarray   # (3,6,nn,3)
    m2: np.ndarray   # (6,nn)
    a2: np.ndarray   # (nn,)
    g2: np.ndarray   # (6,nn)
    r2: np.ndarray   # (3,nn)
    b2: np.ndarray   # (6,nn)

    def scalar_component_count(self):
        mult = sum(PAIR_MULT)          # 9 with double-counted shears
        vec = (3 * mult + 3 + 3 + mult + 1 + 3 + 3 * mult) * 3
        sca = mult + 1 + mult + 3 + mult
        return int(vec + sca)


@dataclass
class HomogenizedCoefficients:
    rho: float
    S: float
    a: np.ndarray        # (3,3,3,3)
    b: np.ndarray        # (3,3)
    k: np.ndarray        # (3,3)
    theta: np.ndarray    # (3,3)

    def pack(self):
        return np.concatenate([[self.rho, self.S], self.a.ravel(),
                               self.b.ravel(), self.k.ravel(),
                               self.theta.ravel()])

    @classmethod
    def unpack(cls, v):
        return cls(rho=float(v[0]), S=float(v[1]),
                   a=v[2:83].reshape(3, 3, 3, 3),
                   b=v[83:92].reshape(3, 3),
                   k=v[92:101].reshape(3, 3),
                   theta=v[101:110].reshape(3, 3))

    SIZE = 110


class CellOperators:
    """The two frozen-metric SPD operators with their boundary constraints."""

    def __init__(self, mesh, coeffs, H):
        self.mesh = mesh
        self.coeffs = coeffs
        self.metric = fem.MeshMetric.frozen(H)
        bn = mesh.all_boundary_nodes()
        self.bn = bn
        D = fem.iso_voigt(coeffs.lam, coeffs.mu)
        K_el = fem.assemble_elasticity_stiffness(mesh, D, self.metric)
        dofs_el = (3 * bn[:, None] + np.arange(3)[None, :]).ravel()
        self.el = fem.SpdSolver(K_el, dofs_el)
        self.zeros_el = np.zeros(dofs_el.size)
        K_th = fem.assemble_scalar_stiffness(mesh, coeffs.k, self.metric)
        self.th = fem.SpdSolver(K_th, bn)
        self.zeros_th = np.zeros(bn.size)

    def solve_el(self, F):
        x = self.el.solve(F, self.zeros_el)
        return x.reshape(-1, 3)

    def solve_th(self, F):
        return self.th.solve(F, self.zeros_th)


def solve_first_order(ops):
    """First-order correctors: strain, thermal-stress and conduction drivers."""
    mesh, met, co = ops.mesh, ops.metric, ops.coeffs
    n1 = np.empty((6, mesh.n_nodes, 3))
    for I, (m, n) in enumerate(PAIRS):
        W = co.a_pair(m, n)
        n1[I] = ops.solve_el(-fem.load_grad_test_vector(mesh, W, met))
    Wb = np.zeros((mesh.n_elems, 3, 3))
    Wb[:, np.arange(3), np.arange(3)] = co.b[:, None]
    p1 = ops.solve_el(-fem.load_grad_test_vector(mesh, Wb, met))
    m1 = np.empty((3, mesh.n_nodes))
    for m in range(3):
        w = np.zeros((mesh.n_elems, 3))
        w[:, m] = co.k
        m1[m] = ops.solve_th(-fem.load_grad_test_scalar(mesh, w, met))
    return FirstOrderCellSet(n1=n1, p1=p1, m1=m1)


def _cell_average(mesh, elem_vals):
    vol = mesh.volumes
    v = np.asarray(elem_vals)
    return np.tensordot(vol, v, axes=(0, 0)) / vol.sum()


def homogenize(ops, first):
    """Volume averages of coefficient + corrector-gradient combinations."""
    mesh, met, co = ops.mesh, ops.metric, ops.coeffs

    a_hat = np.zeros((3, 3, 3, 3))
    theta_hat = np.zeros((3, 3))
    for I, (kk, ll) in enumerate(PAIRS):
        GN = fem.elem_gradient(mesh, first.n1[I], met)       # Psi_m N_n
        contrib = co.a_pair(kk, ll) + co.a_contract(GN)
        mean = _cell_average(mesh, contrib)                  # (3,3) over ij
        a_hat[:, :, kk, ll] = mean
        a_hat[:, :, ll, kk] = mean
        div = np.trace(GN, axis1=1, axis2=2)
        th = _cell_average(mesh, co.theta * (float(kk == ll) + div))
        theta_hat[kk, ll] = th
        theta_hat[ll, kk] = th

    GP = fem.elem_gradient(mesh, first.p1, met)
    b_contrib = co.a_contract(GP)
    b_contrib[:, np.arange(3), np.arange(3)] += co.b[:, None]
    b_hat = _cell_average(mesh, b_contrib)

    divP = np.trace(GP, axis1=1, axis2=2)
    S_hat = float(_cell_average(mesh, co.rho * co.c - co.theta * divP))
    rho_hat = float(_cell_average(mesh, co.rho))

    k_hat = np.zeros((3, 3))
    for j in range(3):
        GM = fem.elem_gradient(mesh, first.m1[j], met)       # (ne,3)
        col = _cell_average(mesh, co.k[:, None] * GM)
        k_hat[:, j] = col
        k_hat[j, j] += float(_cell_average(mesh, co.k))
    k_hat = 0.5 * (k_hat + k_hat.T)

    return HomogenizedCoefficients(rho=rho_hat, S=S_hat, a=a_hat,
                                   b=b_hat, k=k_hat, theta=theta_hat)


def frame_factors(H, dH):
    """Frozen macroscopic frame factors entering curvature-driven loads.

    d[i,j] = Psi_j(H_i)/H_i;  psi[j] = (1/H) d(H/H_j)/d a_j = sum_{k!=j} d[k,j].
    """
    H = np.asarray(H, dtype=float)
    dH = np.asarray(dH, dtype=float)
    d = dH / (H[:, None] * H[None, :])
    psi = np.array([sum(d[k, j] for k in range(3) if k != j)
                    for j in range(3)])
    return d, psi


def _centroid_values(mesh, nodal):
    return nodal[mesh.tets].mean(axis=1)


def solve_second_order(ops, first, hom, H, dH, aux_terms=None):
    """The twelve second-order corrector families.

    `aux_terms`, when given, is a callable returning per-element tensors
    (D_klmn (ne,3,3,3,3), E_kl (ne,3,3)) feeding the two loads the source
    equations leave to an external reference; the default treats both as
    zero.  Families whose loads carry first T-derivatives vanish for
    T-independent coefficients.
    """
    mesh, met, co = ops.mesh, ops.metric, ops.coeffs
    nn, ne = mesh.n_nodes, mesh.n_elems
    d_fac, psi_fac = frame_factors(H, dH)
    eye = np.arange(3)

    GN = np.empty((6, ne, 3, 3))
    aGN = np.empty((6, ne, 3, 3))
    for I in range(6):
        GN[I] = fem.elem_gradient(mesh, first.n1[I], met)
        aGN[I] = co.a_contract(GN[I])
    GP = fem.elem_gradient(mesh, first.p1, met)
    aGP = co.a_contract(GP)
    GM = np.stack([fem.elem_gradient(mesh, first.m1[m], met)
                   for m in range(3)])                       # (3,ne,3)
    Nc = np.stack([_centroid_values(mesh, first.n1[I]) for I in range(6)])
    Pc = _centroid_values(mesh, first.p1)
    Mc = np.stack([_centroid_values(mesh, first.m1[m]) for m in range(3)])

    D_aux = E_aux = None
    if aux_terms is not None:
        D_aux, E_aux = aux_terms(mesh, co)

    # ---- elasticity-operator families ----------------------------------
    n2 = np.empty((3, 6, nn, 3))
    for I, (m, n) in enumerate(PAIRS):
        for p in range(3):
            s = hom.a[:, p, m, n][None, :] - co.a_pair(m, n)[:, :, p] \
                - aGN[I][:, :, p]
            # W[i,l] = a_ilkp N_k = lam d_il N_p + mu (N_i d_lp + N_l d_ip)
            W = np.zeros((ne, 3, 3))
            W[:, eye, eye] = (co.lam * Nc[I][:, p])[:, None]
            W[:, :, p] += co.mu[:, None] * Nc[I]
            W[:, p, :] += co.mu[:, None] * Nc[I]
            F = (-fem.load_point_sources(mesh, s, met, vector=True)
                 - fem.load_grad_test_vector(mesh, W, met))
            n2[p, I] = ops.solve_el(F)

    h2 = np.empty((3, nn, 3))
    for p in range(3):
        s = np.zeros((ne, 3))
        s[:, p] += co.b
        s -= hom.b[:, p][None, :]
        s += aGP[:, :, p]
        W = np.zeros((ne, 3, 3))
        W[:, eye, eye] = (co.lam * Pc[:, p])[:, None]
        W[:, :, p] += co.mu[:, None] * Pc
        W[:, p, :] += co.mu[:, None] * Pc
        W[:, eye, eye] += (co.b * Mc[p])[:, None]
        F = (-fem.load_point_sources(mesh, s, met, vector=True)
             + fem.load_grad_test_vector(mesh, W, met))
        h2[p] = ops.solve_el(F)

    f2 = np.empty((3, nn, 3))
    for p in range(3):
        s = np.zeros((ne, 3))
        s[:, p] = co.rho - hom.rho
        f2[p] = ops.solve_el(-fem.load_point_sources(mesh, s, met, vector=True))

    w2 = np.empty((6, nn, 3))
    q2 = np.empty((nn, 3))
    for I, (m, n) in enumerate(PAIRS):
        g = co.a_pair(m, n) + aGN[I] - hom.a[:, :, m, n][None, :, :]
        s = np.einsum("j,eij->ei", psi_fac, g)
        s += np.einsum("ij,eij->ei", d_fac, g) \
            - d_fac[eye, eye][None, :] * g[:, eye, eye]
        gd = g[:, eye, eye]                                  # g_jj (ne,3)
        s -= np.einsum("ji,ej->ei", d_fac, gd) \
            - d_fac[eye, eye][None, :] * gd
        F = fem.load_point_sources(mesh, s, met, vector=True)
        if D_aux is not None:
            WD = co.a_contract(
                np.ascontiguousarray(D_aux[:, :, :, m, n]))
            F -= fem.load_grad_test_vector(mesh, WD, met)
        w2[I] = ops.solve_el(F)

    q = aGP.copy()
    q[:, eye, eye] += co.b[:, None]
    q -= hom.b[None, :, :]
    s = np.einsum("j,eij->ei", psi_fac, q)
    s += np.einsum("ij,eij->ei", d_fac, q) \
        - d_fac[eye, eye][None, :] * q[:, eye, eye]
    qd = q[:, eye, eye]
    s -= np.einsum("ji,ej->ei", d_fac, qd) - d_fac[eye, eye][None, :] * qd
    F = -fem.load_point_sources(mesh, s, met, vector=True)
    if E_aux is not None:
        F += fem.load_grad_test_vector(mesh, co.a_contract(E_aux), met)
    q2[:] = ops.solve_el(F)

    z2 = np.empty((3, nn, 3))
    aGP1 = co.a_contract(GP, use_d1=True)
    for p in range(3):
        W = aGP1 * Mc[p][:, None, None]
        W[:, eye, eye] += (co.b1 * Mc[p])[:, None]
        z2[p] = ops.solve_el(fem.load_grad_test_vector(mesh, W, met))

    x2 = np.empty((3, 6, nn, 3))
    for I, (m, n) in enumerate(PAIRS):
        aGN1 = co.a_contract(GN[I], use_d1=True)
        base = co.a_pair(m, n, use_d1=True) + aGN1
        for p in range(3):
            W = base * Mc[p][:, None, None]
            x2[p, I] = ops.solve_el(fem.load_grad_test_vector(mesh, W, met))

    # ---- conduction-operator families -----------------------------------
    def m2_load(m, n):
        s = np.full(ne, hom.k[m, n])
        if m == n:
            s -= co.k
        s -= co.k * GM[n][:, m]
        w = np.zeros((ne, 3))
        w[:, m] = co.k * Mc[n]
        return (-fem.load_point_sources(mesh, s, met)
                - fem.load_grad_test_scalar(mesh, w, met))

    m2 = np.empty((6, nn))
    for I, (m, n) in enumerate(PAIRS):
        F = m2_load(m, n) if m == n else 0.5 * (m2_load(m, n) + m2_load(n, m))
        m2[I] = ops.solve_th(F)

    divP = np.trace(GP, axis1=1, axis2=2)
    s = co.rho * co.c - hom.S - co.theta * divP
    a2 = ops.solve_th(-fem.load_point_sources(mesh, s, met))

    g2 = np.empty((6, nn))
    for I, (m, n) in enumerate(PAIRS):
        divN = np.trace(GN[I], axis1=1, axis2=2)
        s = co.theta * (float(m == n) + divN) - hom.theta[m, n]
        g2[I] = ops.solve_th(-fem.load_point_sources(mesh, s, met))

    r2 = np.empty((3, nn))
    for m in range(3):
        r = np.full((ne, 3), hom.k[:, m][None, :])
        r[:, m] -= co.k
        r -= co.k[:, None] * GM[m]
        s = r @ psi_fac
        r2[m] = ops.solve_th(-fem.load_point_sources(mesh, s, met))

    def b2_load(m, n):
        w = co.k1[:, None] * GM[n] * Mc[m][:, None]
        w[:, n] += co.k1 * Mc[m]
        return fem.load_grad_test_scalar(mesh, w, met)

    b2 = np.empty((6, nn))
    for I, (m, n) in enumerate(PAIRS):
        F = b2_load(m, n) if m == n else 0.5 * (b2_load(m, n) + b2_load(n, m))
        b2[I] = ops.solve_th(F)

    return SecondOrderCellSet(n2=n2, h2=h2, f2=f2, w2=w2, q2=q2, z2=z2,
                              x2=x2, m2=m2, a2=a2, g2=g2, r2=r2, b2=b2)
