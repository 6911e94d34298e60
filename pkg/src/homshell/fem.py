"""P1 tetrahedral finite-element kernel on structured box meshes.

Shared by the unit-cell, homogenized and fine-mesh solvers: Kuhn-split
meshing, metric-weighted assembly of conduction / elasticity / mass forms,
symmetric Dirichlet elimination and an SPD solve (conjugate gradients with
Jacobi preconditioning; algebraic-multigrid preconditioning or a direct
factorization is substituted automatically on larger systems).
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import breve_strain  # noqa: F401  (re-exported for callers)

# Kuhn subdivision: six permutation paths from corner (0,0,0) to (1,1,1).
_KUHN_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))

# Voigt pair ordering 11,22,33,12,13,23 and symmetry multiplicities.
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
VOIGT_MULT = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

# 4-point Gauss rule on the reference tetrahedron (barycentric, degree 2).
_QA = 0.5854101966249685
_QB = 0.13819660112501052
_TET4_BARY = np.array([
    [_QA, _QB, _QB, _QB],
    [_QB, _QA, _QB, _QB],
    [_QB, _QB, _QA, _QB],
    [_QB, _QB, _QB, _QA],
])

FACE_TAGS = ("x-", "x+", "y-", "y+", "z-", "z+")


class SolverError(RuntimeError):
    """Iterative solve failed to reach the requested residual."""


class BoxMesh:
    """Structured tetrahedral mesh of a box, six tets per grid cell."""

    def __init__(self, lo, hi, divisions):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.div = tuple(int(d) for d in divisions)
        if any(d < 1 for d in self.div):
            raise ValueError("divisions must be >= 1 along every axis")
        nx, ny, nz = self.div
        self.h = (self.hi - self.lo) / np.array(self.div, dtype=float)

        xs = np.linspace(self.lo[0], self.hi[0], nx + 1)
        ys = np.linspace(self.lo[1], self.hi[1], ny + 1)
        zs = np.linspace(self.lo[2], self.hi[2], nz + 1)
        X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
        self.nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
        self.n_nodes = self.nodes.shape[0]

        # node id of grid point (i,j,k)
        def nid(i, j, k):
            return (i * (ny + 1) + j) * (nz + 1) + k

        I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                              indexing="ij")
        I, J, K = I.ravel(), J.ravel(), K.ravel()
        corner = ((I * (ny + 1) + J) * (nz + 1) + K).astype(np.int64)
        strides = np.array([(ny + 1) * (nz + 1), nz + 1, 1], dtype=np.int64)

        tets = np.empty((6 * corner.size, 4), dtype=np.int64)
        for t, perm in enumerate(_KUHN_PERMS):
            v0 = corner
            v1 = v0 + strides[perm[0]]
            v2 = v1 + strides[perm[1]]
            v3 = v2 + strides[perm[2]]
            tets[t::6, 0] = v0
            tets[t::6, 1] = v1
            tets[t::6, 2] = v2
            tets[t::6, 3] = v3
        self.tets = tets
        self.n_elems = tets.shape[0]

        self._geom = None
        self._nid = nid

    # -- geometry --------------------------------------------------------

    def geometry(self):
        """Per-element P1 basis gradients (ne,4,3), volumes, centroids."""
        if self._geom is None:
            p = self.nodes[self.tets]              # (ne,4,3)
            e = p[:, 1:] - p[:, :1]                # (ne,3,3) edge matrix
            det = np.linalg.det(e)
            vol = np.abs(det) / 6.0
            inv = np.linalg.inv(e)                 # rows: dlambda/dx ...
            grad = np.empty((self.n_elems, 4, 3))
            grad[:, 1:, :] = np.transpose(inv, (0, 2, 1))
            grad[:, 0, :] = -grad[:, 1:, :].sum(axis=1)
            cent = p.mean(axis=1)
            self._geom = (grad, vol, cent)
        return self._geom

    @property
    def volumes(self):
        return self.geometry()[1]

    @property
    def centroids(self):
        return self.geometry()[2]

    # -- boundary --------------------------------------------------------

    def boundary_nodes(self, tag):
        """Node ids on one box face."""
        axis = "xyz".index(tag[0])
        value = self.lo[axis] if tag[1] == "-" else self.hi[axis]
        tol = 1e-12 * max(1.0, float(np.max(np.abs(self.hi - self.lo))))
        return np.nonzero(np.abs(self.nodes[:, axis] - value) <= tol)[0]

    def all_boundary_nodes(self):
        masks = [self.boundary_nodes(t) for t in FACE_TAGS]
        return np.unique(np.concatenate(masks))

    def boundary_triangles(self):
        """(tri (m,3), tag index (m,)) for every boundary facet."""
        faces = np.concatenate([
            self.tets[:, [0, 1, 2]], self.tets[:, [0, 1, 3]],
            self.tets[:, [0, 2, 3]], self.tets[:, [1, 2, 3]]])
        key = np.sort(faces, axis=1)
        order = np.lexsort((key[:, 2], key[:, 1], key[:, 0]))
        key_s = key[order]
        dup = np.all(key_s[1:] == key_s[:-1], axis=1)
        boundary = np.ones(len(key_s), dtype=bool)
        boundary[1:][dup] = False
        boundary[:-1][dup] = False
        tris = faces[order][boundary]
        tags = np.full(len(tris), -1, dtype=np.int32)
        for t, tag in enumerate(FACE_TAGS):
            axis = "xyz".index(tag[0])
            value = self.lo[axis] if tag[1] == "-" else self.hi[axis]
            tol = 1e-12 * max(1.0, float(np.max(np.abs(self.hi - self.lo))))
            on = np.all(np.abs(self.nodes[tris][:, :, axis] - value) <= tol,
                        axis=1)
            tags[on] = t
        return tris, tags

    # -- interpolation ---------------------------------------------------

    def interp_weights(self, pts):
        """P1 interpolation stencil for arbitrary points inside the box.

        Returns (node ids (m,4), weights (m,4)).  Exploits the Kuhn split:
        the containing tet and barycentric weights follow from the ordering
        of the local cell coordinates.
        """
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        nx, ny, nz = self.div
        t = (p - self.lo) / self.h
        cell = np.clip(np.floor(t).astype(np.int64), 0,
                       np.array([nx - 1, ny - 1, nz - 1]))
        loc = np.clip(t - cell, 0.0, 1.0)

        order = np.argsort(-loc, axis=1, kind="stable")   # descending coords
        s = np.take_along_axis(loc, order, axis=1)
        w = np.empty((p.shape[0], 4))
        w[:, 0] = 1.0 - s[:, 0]
        w[:, 1] = s[:, 0] - s[:, 1]
        w[:, 2] = s[:, 1] - s[:, 2]
        w[:, 3] = s[:, 2]

        strides = np.array([(ny + 1) * (nz + 1), nz + 1, 1], dtype=np.int64)
        base = (cell * strides).sum(axis=1)
        nid = np.empty((p.shape[0], 4), dtype=np.int64)
        nid[:, 0] = base
        step = np.take_along_axis(
            np.broadcast_to(strides, loc.shape), order, axis=1)
        nid[:, 1] = base + step[:, 0]
        nid[:, 2] = nid[:, 1] + step[:, 1]
        nid[:, 3] = nid[:, 2] + step[:, 2]
        return nid, w

    def interpolate(self, nodal, pts):
        """Evaluate a nodal field (n_nodes, ...) at points (m,3)."""
        nid, w = self.interp_weights(pts)
        vals = nodal[nid]                    # (m,4,...)
        wexp = w.reshape(w.shape + (1,) * (vals.ndim - 2))
        return (vals * wexp).sum(axis=1)


def mesh_box(lo, hi, divisions):
    return BoxMesh(lo, hi, divisions)


class MeshMetric:
    """Per-element gradient scaling 1/H_i, volume weight and curvature data.

    For unit-cell problems the scaling is the frozen 1/H and the weight is
    one; for macroscopic meshes everything is evaluated at element
    centroids from the analytic frame.
    """

    def __init__(self, inv_h, weight, curv=None):
        self.inv_h = np.asarray(inv_h, dtype=float)
        self.weight = np.asarray(weight, dtype=float)
        self.curv = None if curv is None else np.asarray(curv, dtype=float)

    @classmethod
    def unit(cls):
        return cls(np.ones(3), 1.0)

    @classmethod
    def frozen(cls, H):
        return cls(1.0 / np.asarray(H, dtype=float), 1.0)

    @classmethod
    def from_frame(cls, mesh, frame, curvature=True):
        H, dH, Hprod = frame.eval(mesh.centroids)
        curv = None
        if curvature:
            curv = dH / (H[:, :, None] * H[:, None, :])
        return cls(1.0 / H, Hprod, curv)

    def scaled_grads(self, mesh):
        grad, _, _ = mesh.geometry()
        inv = self.inv_h
        if inv.ndim == 1:
            return grad * inv[None, None, :]
        return grad * inv[:, None, :]

    def wvol(self, mesh):
        return mesh.volumes * self.weight


def _scatter(rows, cols, data, n, chunk=6_000_000):
    """Accumulate COO triplets into CSR in bounded-memory chunks."""
    total = data.size
    if total <= chunk:
        return sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(n, n)).tocsr()
    A = sp.csr_matrix((n, n))
    flat_r, flat_c, flat_d = rows.ravel(), cols.ravel(), data.ravel()
    for s in range(0, total, chunk):
        e = min(s + chunk, total)
        A = A + sp.coo_matrix((flat_d[s:e], (flat_r[s:e], flat_c[s:e])),
                              shape=(n, n)).tocsr()
    return A


def assemble_scalar_stiffness(mesh, k_elem, metric):
    """Conduction form  sum_e w V (k_ij Psi_j phi_b Psi_i phi_a).

    k_elem: (ne,) isotropic scalar per element or (ne,3,3) full tensor.
    """
    SG = metric.scaled_grads(mesh)           # (ne,4,3)
    wv = metric.wvol(mesh)
    k = np.asarray(k_elem, dtype=float)
    if k.ndim == 1:
        ke = np.einsum("eai,ebi->eab", SG, SG) * (k * wv)[:, None, None]
    else:
        ke = np.einsum("eai,eij,ebj->eab", SG, k, SG) * wv[:, None, None]
    rows = np.repeat(mesh.tets, 4, axis=1)
    cols = np.tile(mesh.tets, (1, 4))
    return _scatter(rows, cols, ke.reshape(mesh.n_elems, 16), mesh.n_nodes)


def assemble_scalar_mass(mesh, rho_elem, metric, point_weight=None):
    """Capacity form  sum_e (rho c ...)_e * integral(phi_a phi_b w).

    With `point_weight(points) -> (m,)` the weight is sampled on a 4-point
    rule (used for position-dependent H); otherwise the element weight of
    the metric applies.
    """
    rho = np.asarray(rho_elem, dtype=float)
    vol = mesh.volumes
    if point_weight is None:
        wv = metric.wvol(mesh) * rho
        base = (np.full((4, 4), 1.0 / 20.0) + np.eye(4) / 20.0)
        ke = wv[:, None, None] * base[None, :, :]
    else:
        p = mesh.nodes[mesh.tets]            # (ne,4,3)
        ke = np.zeros((mesh.n_elems, 4, 4))
        for q in range(4):
            bary = _TET4_BARY[q]
            pts = np.einsum("a,eaj->ej", bary, p)
            wq = point_weight(pts) * 0.25 * vol * rho
            ke += wq[:, None, None] * np.outer(bary, bary)[None, :, :]
    rows = np.repeat(mesh.tets, 4, axis=1)
    cols = np.tile(mesh.tets, (1, 4))
    return _scatter(rows, cols, ke.reshape(mesh.n_elems, 16), mesh.n_nodes)


def iso_voigt(lam, mu):
    """Energy-form Voigt matrix (both shear multiplicities folded in)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    D = np.zeros((lam.size, 6, 6))
    D[:, :3, :3] = lam[:, None, None]
    for i in range(3):
        D[:, i, i] += 2.0 * mu
        D[:, 3 + i, 3 + i] = 4.0 * mu
    return D


def energy_voigt(a):
    """Energy-form 6x6 of a full tensor a_ijkl (multiplicities folded in)."""
    a = np.asarray(a, dtype=float)
    single = a.ndim == 4
    ae = a.reshape((-1, 3, 3, 3, 3))
    D = np.empty((ae.shape[0], 6, 6))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for J, (k, l) in enumerate(VOIGT_PAIRS):
            D[:, I, J] = ae[:, i, j, k, l] * VOIGT_MULT[I] * VOIGT_MULT[J]
    return D[0] if single else D


def strain_B(mesh, metric, elems=slice(None)):
    """Per-element 6x12 operator: nodal displacements -> Voigt strain.

    Gradient part uses the metric-scaled derivatives; curvature part (when
    the metric carries it) adds the zero-order H-derivative terms sampled
    at the element centroid.
    """
    SG = metric.scaled_grads(mesh)[elems]
    ne = SG.shape[0]
    B = np.zeros((ne, 6, 12))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for a in range(4):
            if i == j:
                B[:, I, 3 * a + i] += SG[:, a, i]
            else:
                B[:, I, 3 * a + j] += 0.5 * SG[:, a, i]
                B[:, I, 3 * a + i] += 0.5 * SG[:, a, j]
    if metric.curv is not None:
        curv = metric.curv[elems]
        for I, (i, j) in enumerate(VOIGT_PAIRS):
            for a in range(4):
                if i == j:
                    for m in range(3):
                        if m != i:
                            B[:, I, 3 * a + m] += 0.25 * curv[:, i, m]
                else:
                    B[:, I, 3 * a + j] -= 0.125 * curv[:, j, i]
                    B[:, I, 3 * a + i] -= 0.125 * curv[:, i, j]
    return B


def assemble_elasticity_stiffness(mesh, D_elem, metric, chunk=200_000):
    """Elasticity form  sum_e w V  (B u)^T D (B v)  with D per element.

    D_elem: (ne,6,6) energy-form Voigt matrices (see iso_voigt/energy_voigt).
    """
    n = 3 * mesh.n_nodes
    wv = metric.wvol(mesh)
    A = sp.csr_matrix((n, n))
    for s in range(0, mesh.n_elems, chunk):
        e = min(s + chunk, mesh.n_elems)
        sl = slice(s, e)
        B = strain_B(mesh, metric, sl)
        ke = np.einsum("eIp,eIJ,eJq->epq", B, D_elem[sl], B,
                       optimize=True) * wv[sl, None, None]
        dofs = (3 * mesh.tets[sl][:, :, None]
                + np.arange(3)[None, None, :]).reshape(e - s, 12)
        rows = np.repeat(dofs, 12, axis=1)
        cols = np.tile(dofs, (1, 12))
        A = A + _scatter(rows, cols, ke.reshape(e - s, 144), n)
    return A


def assemble_vector_mass(mesh, rho_elem, metric, point_weight=None):
    """Consistent mass for the 3-component displacement space."""
    Ms = assemble_scalar_mass(mesh, rho_elem, metric, point_weight)
    return sp.kron(Ms, sp.identity(3, format="csr"), format="csr")


def load_point_sources(mesh, s_elem, metric, vector=False):
    """Volume load  integral(s v) with s constant per element."""
    wv = metric.wvol(mesh) * 0.25
    if not vector:
        F = np.zeros(mesh.n_nodes)
        np.add.at(F, mesh.tets, (np.asarray(s_elem) * wv)[:, None])
        return F
    F = np.zeros(3 * mesh.n_nodes)
    contrib = np.asarray(s_elem) * wv[:, None]       # (ne,3)
    dofs = 3 * mesh.tets[:, :, None] + np.arange(3)[None, None, :]
    np.add.at(F, dofs.reshape(-1, 3), np.repeat(contrib, 4, axis=0))
    return F


def load_grad_test_scalar(mesh, w_elem, metric):
    """Load  integral(w_i Psi_i(phi)) for the scalar test space."""
    SG = metric.scaled_grads(mesh)
    wv = metric.wvol(mesh)
    contrib = np.einsum("ei,eai->ea", np.asarray(w_elem), SG) * wv[:, None]
    F = np.zeros(mesh.n_nodes)
    np.add.at(F, mesh.tets, contrib)
    return F


def load_grad_test_vector(mesh, W_elem, metric):
    """Load  integral(W_ij Psi_j(v_i)) for the displacement test space."""
    SG = metric.scaled_grads(mesh)
    wv = metric.wvol(mesh)
    contrib = np.einsum("eij,eaj->eai", np.asarray(W_elem), SG) * wv[:, None, None]
    F = np.zeros(3 * mesh.n_nodes)
    dofs = 3 * mesh.tets[:, :, None] + np.arange(3)[None, None, :]
    np.add.at(F, dofs.reshape(-1, 3), contrib.reshape(-1, 3))
    return F


def load_strain_test(mesh, s_voigt, metric):
    """Load  integral(s_ij breve-eps_ij(v))  with s in Voigt order."""
    wv = metric.wvol(mesh)
    sm = np.asarray(s_voigt) * VOIGT_MULT[None, :]
    F = np.zeros(3 * mesh.n_nodes)
    chunk = 200_000
    for st in range(0, mesh.n_elems, chunk):
        en = min(st + chunk, mesh.n_elems)
        sl = slice(st, en)
        B = strain_B(mesh, metric, sl)
        contrib = np.einsum("eI,eIp->ep", sm[sl], B) * wv[sl, None]
        dofs = (3 * mesh.tets[sl][:, :, None]
                + np.arange(3)[None, None, :]).reshape(en - st, 12)
        np.add.at(F, dofs.ravel(), contrib.ravel())
    return F


def elem_gradient(mesh, nodal, metric=None):
    """Element gradients of a nodal field; scaled to Psi-form if metric given.

    scalar (nn,) -> (ne,3);  vector (nn,3) -> (ne,3,3) with [i,j] = Psi_i u_j.
    """
    grad = metric.scaled_grads(mesh) if metric is not None \
        else mesh.geometry()[0]
    vals = nodal[mesh.tets]                 # (ne,4) or (ne,4,3)
    if vals.ndim == 2:
        return np.einsum("eai,ea->ei", grad, vals)
    return np.einsum("eai,eaj->eij", grad, vals)


def node_average(mesh, elem_vals):
    """Volume-weighted average of element values onto nodes."""
    vol = mesh.volumes
    vals = np.asarray(elem_vals, dtype=float)
    flat = vals.reshape(mesh.n_elems, -1)
    acc = np.zeros((mesh.n_nodes, flat.shape[1]))
    wsum = np.zeros(mesh.n_nodes)
    np.add.at(acc, mesh.tets, (flat * vol[:, None])[:, None, :]
              * np.ones((1, 4, 1)))
    np.add.at(wsum, mesh.tets, vol[:, None] * np.ones((1, 4)))
    out = acc / wsum[:, None]
    return out.reshape((mesh.n_nodes,) + vals.shape[1:])


# -- solving ---------------------------------------------------------------

def rigid_modes(nodes):
    """Six rigid-body modes of a displacement space, shape (3*nn, 6)."""
    nn = nodes.shape[0]
    B = np.zeros((3 * nn, 6))
    x = nodes - nodes.mean(axis=0)
    for c in range(3):
        B[c::3, c] = 1.0
    B[1::3, 3], B[2::3, 3] = -x[:, 2], x[:, 1]
    B[0::3, 4], B[2::3, 4] = x[:, 2], -x[:, 0]
    B[0::3, 5], B[1::3, 5] = -x[:, 1], x[:, 0]
    return B


class SpdSolver:
    """Reduced SPD system with reusable preconditioner / factorization.

    Dirichlet constraints are eliminated symmetrically; the reduced
    operator is kept for repeated right-hand sides (cell problems, time
    stepping with frozen coefficients).  Methods: 'direct' (sparse
    factorization, small systems), 'amg' (CG with a smoothed-aggregation
    preconditioner), 'jacobi' (CG with diagonal scaling), 'cg' (CG with a
    caller-supplied preconditioner), or 'auto'.
    """

    def __init__(self, A, dirichlet_dofs, rtol=1e-10, method="auto",
                 direct_limit=12_000, near_nullspace=None, precond=None):
        n = A.shape[0]
        self.n = n
        self.rtol = rtol
        cons = np.asarray(dirichlet_dofs, dtype=np.int64)
        mask = np.ones(n, dtype=bool)
        mask[cons] = False
        self.free = np.nonzero(mask)[0]
        self.cons = cons
        A = A.tocsr()
        self.A_fc = A[self.free][:, cons]
        self.A_ff = A[self.free][:, self.free].tocsr()
        nf = self.free.size

        if method == "auto":
            method = "direct" if nf <= direct_limit else "amg"
        self.method = method
        self._M = None
        if nf == 0:
            return
        if method == "direct":
            self._lu = spla.splu(self.A_ff.tocsc())
        elif method == "amg":
            import pyamg
            kwargs = {}
            if near_nullspace is not None:
                kwargs["B"] = np.ascontiguousarray(
                    near_nullspace[self.free])
            self._ml = pyamg.smoothed_aggregation_solver(
                self.A_ff, max_coarse=300, **kwargs)
            self._M = self._ml.aspreconditioner(cycle="V")
        elif method == "cg":
            if precond is None:
                raise ValueError("method 'cg' needs a preconditioner")
            self._M = precond
        elif method == "jacobi":
            d = self.A_ff.diagonal()
            if np.any(d <= 0):
                raise SolverError("non-positive diagonal in SPD system")
            self._diag = 1.0 / d
        else:
            raise ValueError(f"unknown solver method {method!r}")

    def preconditioner(self):
        """The reduced-space preconditioner, for reuse on nearby systems."""
        return self._M

    def solve(self, b, dirichlet_vals, x0=None):
        """Full-length solution honouring the constraint values exactly."""
        x = np.zeros(self.n)
        x[self.cons] = dirichlet_vals
        if self.free.size == 0:
            return x
        r = b[self.free] - self.A_fc @ np.asarray(dirichlet_vals, dtype=float)
        nrm = np.linalg.norm(r)
        if nrm == 0.0:
            return x
        x0f = None if x0 is None else np.asarray(x0)[self.free]
        if x0f is not None and np.linalg.norm(r - self.A_ff @ x0f) <= self.rtol * nrm:
            x[self.free] = x0f
            return x
        if self.method == "direct":
            x[self.free] = self._lu.solve(r)
            return x
        M = self._M if self._M is not None else \
            spla.LinearOperator(self.A_ff.shape,
                                matvec=lambda v: self._diag * v)
        maxiter = min(10 * self.free.size, 20_000)
        xf, info = spla.cg(self.A_ff, r, x0=x0f, rtol=self.rtol, atol=0.0,
                           maxiter=maxiter, M=M)
        if info != 0:
            res = np.linalg.norm(r - self.A_ff @ xf) / nrm
            raise SolverError(
                f"CG did not converge in {maxiter} iterations "
                f"(relative residual {res:.3e})")
        x[self.free] = xf
        return x


def solve_spd(A, b, dirichlet_dofs=(), dirichlet_vals=(), rtol=1e-10,
              method="jacobi"):
    """One-shot SPD solve (conjugate gradients, Jacobi preconditioner)."""
    solver = SpdSolver(A, np.asarray(dirichlet_dofs, dtype=np.int64),
                       rtol=rtol, method=method)
    return solver.solve(np.asarray(b, dtype=float),
                        np.asarray(dirichlet_vals, dtype=float))
