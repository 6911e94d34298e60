"""On-line stage: theta-scheme / Newmark time integration.

One transient engine serves both the homogenized solver (coefficients
interpolated from a cell database) and the fine-mesh reference solver
(oscillatory per-element coefficients): each step solves the conduction
sub-system with a displacement predictor for the two-way term, then the
Newmark-form momentum sub-system, wrapped in direct (Picard) iteration on
the temperature-dependent coefficients.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np

from . import fem


@dataclass
class TimeSchemeParams:
    dt: float
    steps: int
    delta: float = 1.0
    gamma: float = 0.6
    omega: float = 0.35
    varpi: float = 1.0
    tol_nl: float = 1e-8
    max_nl: int = 50

    def __post_init__(self):
        if self.dt <= 0 or self.steps < 1:
            raise ValueError("need dt > 0 and steps >= 1")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0,1]")
        if self.gamma < 0.5 or self.omega < 0.25 * (self.gamma + 0.5) ** 2:
            warnings.warn(
                "time-scheme weights outside the unconditional-stability "
                f"region (gamma={self.gamma}, omega={self.omega})",
                stacklevel=2)


def _const_vec(value, dim):
    v = np.asarray(value, dtype=float).reshape(-1)
    if dim == 1:
        return lambda pts, t: np.full(pts.shape[0], float(v[0]))
    return lambda pts, t: np.tile(v, (pts.shape[0], 1))


@dataclass
class LoadSpec:
    """Body force, heat source, boundary data and initial data.

    Entries may be constants or callables (points (m,3), t) -> array.
    `bc_temp` is evaluated on the temperature-Dirichlet nodes, `bc_disp`
    on the displacement-Dirichlet nodes.
    """

    body_force: object = (0.0, 0.0, 0.0)
    heat_source: object = 0.0
    bc_disp: object = (0.0, 0.0, 0.0)
    bc_temp: object = None          # defaults to t_ref
    u0: object = (0.0, 0.0, 0.0)
    v0: object = (0.0, 0.0, 0.0)
    t_ref: float = 293.15

    def fn(self, name, dim):
        val = getattr(self, name)
        if val is None:
            val = self.t_ref
        return val if callable(val) else _const_vec(val, dim)


@dataclass
class Snapshot:
    step: int
    t: float
    u: np.ndarray
    v: np.ndarray
    acc: np.ndarray
    T: np.ndarray
    u_prev: np.ndarray
    T_prev: np.ndarray


@dataclass
class Trajectory:
    dt: float
    t_ref: float
    snapshots: list = field(default_factory=list)
    nl_iterations: list = field(default_factory=list)

    def final(self):
        return self.snapshots[-1]

    def at_step(self, step):
        for s in self.snapshots:
            if s.step == step:
                return s
        raise KeyError(f"no snapshot stored for step {step}")


class TransientSolver:
    """Coupled thermo-mechanical stepping on one mesh.

    coeff_provider(T_elem) must return per-element arrays
      rho (ne,), S (ne,), D (ne,6,6) energy-Voigt elasticity,
      k (ne,) or (ne,3,3), b (ne,) or (ne,3,3), theta (ne,) or (ne,3,3).
    `constant_coeffs` skips reassembly and the Picard loop entirely.
    """

    def __init__(self, mesh, frame, domain, coeff_provider, loads, params,
                 constant_coeffs=False, coupled=False, theta_coupling=True,
                 solver_method="auto"):
        self.mesh = mesh
        self.frame = frame
        self.domain = domain
        self.provider = coeff_provider
        self.loads = loads
        self.p = params
        self.constant = constant_coeffs
        self.coupled = coupled
        self.theta_coupling = theta_coupling
        self.method = solver_method

        self.metric = fem.MeshMetric.from_frame(mesh, frame) \
            if not frame.is_cartesian else fem.MeshMetric.unit()
        if frame.is_cartesian:
            self._hfun = None
        else:
            self._hfun = lambda pts: frame.eval(pts)[2]

        tn = [mesh.boundary_nodes(f) for f in domain.dirichlet_t]
        self.t_nodes = np.unique(np.concatenate(tn)) if tn else \
            np.array([], dtype=np.int64)
        un = [mesh.boundary_nodes(f) for f in domain.dirichlet_u]
        u_nodes = np.unique(np.concatenate(un)) if un else \
            np.array([], dtype=np.int64)
        self.u_nodes = u_nodes
        self.u_dofs = (3 * u_nodes[:, None] + np.arange(3)[None, :]).ravel()

        self._th_solver = None
        self._me_solver = None
        self._mass_th = None
        self._mass_me = None
        self._K_th = None
        self._coeffs = None
        self._th_M = None
        self._me_M = None
        self._rigid = fem.rigid_modes(mesh.nodes)

    # -- assembly ---------------------------------------------------------

    def _mat3(self, arr):
        a = np.asarray(arr, dtype=float)
        if a.ndim == 1:
            out = np.zeros((a.size, 3, 3))
            out[:, np.arange(3), np.arange(3)] = a[:, None]
            return out
        return a

    def _make_solver(self, A, dofs, cache_attr, fresh, nullspace=None):
        """AMG solver on fresh assemblies; reuse the step's hierarchy as a
        preconditioner while Picard updates the coefficients."""
        if self.constant:
            return fem.SpdSolver(A, dofs, method=self.method,
                                 near_nullspace=nullspace)
        cached = getattr(self, cache_attr)
        if fresh or cached is None:
            s = fem.SpdSolver(A, dofs, method="amg",
                              near_nullspace=nullspace)
            setattr(self, cache_attr, s.preconditioner())
            return s
        return fem.SpdSolver(A, dofs, method="cg", precond=cached)

    def _assemble(self, T_elem, fresh=True):
        c = self.provider(T_elem)
        mesh, met = self.mesh, self.metric
        dt = self.p.dt
        self._coeffs = c
        self._K_th = fem.assemble_scalar_stiffness(mesh, c["k"], met)
        self._mass_th = fem.assemble_scalar_mass(
            mesh, c["S"], met, point_weight=self._hfun)
        A_th = self._mass_th / dt + self.p.delta * self._K_th
        self._th_solver = self._make_solver(A_th, self.t_nodes, "_th_M",
                                            fresh)
        K_me = fem.assemble_elasticity_stiffness(mesh, c["D"], met)
        self._mass_me = fem.assemble_vector_mass(
            mesh, c["rho"], met, point_weight=self._hfun)
        A_me = self._mass_me / (self.p.omega * dt * dt) + K_me
        self._me_solver = self._make_solver(A_me, self.u_dofs, "_me_M",
                                            fresh, nullspace=self._rigid)
        self._K_me = K_me

    # -- loads ------------------------------------------------------------

    def _heat_load(self, t):
        h = self.loads.fn("heat_source", 1)(self.mesh.centroids, t)
        return fem.load_point_sources(self.mesh, h, self.metric)

    def _force_load(self, t):
        f = self.loads.fn("body_force", 3)(self.mesh.centroids, t)
        return fem.load_point_sources(self.mesh, f, self.metric, vector=True)

    def _thermal_stress_load(self, T_nodal):
        c = self._coeffs
        b = self._mat3(c["b"])
        T_e = T_nodal[self.mesh.tets].mean(axis=1) - self.loads.t_ref
        s = np.stack([b[:, i, j] for (i, j) in fem.VOIGT_PAIRS], axis=1)
        return fem.load_strain_test(self.mesh, s * T_e[:, None], self.metric)

    def _twoway_load(self, du_nodal):
        """integral( theta_ij  d eps_ij  phi H ) for a displacement increment."""
        theta = self._mat3(self._coeffs["theta"])
        eps = elem_strain_voigt(self.mesh, du_nodal, self.metric)
        tv = np.stack([theta[:, i, j] for (i, j) in fem.VOIGT_PAIRS], axis=1)
        s = np.einsum("eI,eI->e", tv * fem.VOIGT_MULT[None, :], eps)
        return fem.load_point_sources(self.mesh, s, self.metric)

    # -- stepping ---------------------------------------------------------

    def initial_state(self):
        mesh = self.mesh
        u = np.asarray(self.loads.fn("u0", 3)(mesh.nodes, 0.0), dtype=float)
        v = np.asarray(self.loads.fn("v0", 3)(mesh.nodes, 0.0), dtype=float)
        T = np.full(mesh.n_nodes, self.loads.t_ref)
        if self.t_nodes.size:
            T[self.t_nodes] = self.loads.fn("bc_temp", 1)(
                mesh.nodes[self.t_nodes], 0.0)
        if self.u_nodes.size:
            u[self.u_nodes] = self.loads.fn("bc_disp", 3)(
                mesh.nodes[self.u_nodes], 0.0)
        T_e = T[mesh.tets].mean(axis=1)
        self._assemble(T_e)
        # initial acceleration from the semi-discrete momentum balance
        F = (self._force_load(0.0) + self._thermal_stress_load(T)
             - self._K_me @ u.ravel())
        acc_solver = fem.SpdSolver(self._mass_me, self.u_dofs,
                                   method=self.method)
        acc = acc_solver.solve(F, np.zeros(self.u_dofs.size),
                               x0=np.zeros(F.size)).reshape(-1, 3)
        return Snapshot(step=0, t=0.0, u=u, v=v, acc=acc, T=T,
                        u_prev=u - self.p.dt * v, T_prev=T.copy())

    def _thermal_step(self, state, t_next, T_guess, u_pred_incr):
        p, mesh = self.p, self.mesh
        rhs = (p.delta * self._heat_load(t_next)
               + (1.0 - p.delta) * self._heat_load(state.t)
               + self._mass_th @ state.T / p.dt)
        if p.delta < 1.0:
            rhs -= (1.0 - p.delta) * (self._K_th @ state.T)
        if self.theta_coupling:
            rhs -= self._twoway_load(u_pred_incr) / p.dt
        vals = self.loads.fn("bc_temp", 1)(mesh.nodes[self.t_nodes], t_next) \
            if self.t_nodes.size else np.zeros(0)
        return self._th_solver.solve(rhs, vals, x0=T_guess)

    def _mechanical_step(self, state, t_next, T_new):
        p, mesh = self.p, self.mesh
        odt2 = 1.0 / (p.omega * p.dt * p.dt)
        hist = (state.u.ravel() * odt2
                + state.v.ravel() / (p.omega * p.dt)
                + (0.5 / p.omega - 1.0) * state.acc.ravel())
        rhs = (self._force_load(t_next) + self._thermal_stress_load(T_new)
               + self._mass_me @ hist)
        vals = self.loads.fn("bc_disp", 3)(mesh.nodes[self.u_nodes], t_next)\
            .ravel() if self.u_nodes.size else np.zeros(0)
        u_new = self._me_solver.solve(rhs, vals, x0=state.u.ravel())
        acc_new = ((u_new - state.u.ravel()) * odt2
                   - state.v.ravel() / (p.omega * p.dt)
                   - (0.5 / p.omega - 1.0) * state.acc.ravel())
        v_new = (state.v.ravel()
                 + p.dt * ((1.0 - p.gamma) * state.acc.ravel()
                           + p.gamma * acc_new))
        return (u_new.reshape(-1, 3), v_new.reshape(-1, 3),
                acc_new.reshape(-1, 3))

    def step(self, state):
        """Advance one step; returns (new Snapshot, Picard iterations)."""
        p, mesh = self.p, self.mesh
        t_next = state.t + p.dt
        T_it = state.T.copy()
        u_it = state.u.copy()
        iters = 0
        while True:
            iters += 1
            if not self.constant:
                self._assemble(T_it[mesh.tets].mean(axis=1),
                               fresh=(iters == 1))
            if self.coupled:
                incr = u_it - state.u
            else:
                incr = p.varpi * (state.u - state.u_prev)
            T_new = self._thermal_step(state, t_next, T_it, incr)
            u_new, v_new, acc_new = self._mechanical_step(state, t_next,
                                                          T_new)
            dT = np.linalg.norm(T_new - T_it) / max(np.linalg.norm(T_new),
                                                    1e-300)
            du = np.linalg.norm(u_new - u_it) / max(np.linalg.norm(u_new),
                                                    1e-300)
            T_it, u_it = T_new, u_new
            if self.constant and not self.coupled:
                break
            if dT < p.tol_nl and du < p.tol_nl:
                break
            if iters >= p.max_nl:
                raise fem.SolverError(
                    f"nonlinear iteration stalled at step t={t_next}: "
                    f"dT={dT:.3e}, du={du:.3e} after {iters} iterations")
        if not (np.all(np.isfinite(T_it)) and np.all(np.isfinite(u_it))):
            raise fem.SolverError(f"non-finite field at t={t_next}")
        return Snapshot(step=state.step + 1, t=t_next, u=u_new, v=v_new,
                        acc=acc_new, T=T_new, u_prev=state.u,
                        T_prev=state.T), iters

    def run(self, stride=1, progress=None):
        traj = Trajectory(dt=self.p.dt, t_ref=self.loads.t_ref)
        state = self.initial_state()
        traj.snapshots.append(state)
        for n in range(self.p.steps):
            state, iters = self.step(state)
            traj.nl_iterations.append(iters)
            if (state.step % stride == 0) or (state.step == self.p.steps):
                traj.snapshots.append(state)
            if progress:
                progress(state.step, self.p.steps)
        return traj


def elem_strain_voigt(mesh, u_nodal, metric):
    """Element curvilinear strain of a nodal displacement, Voigt order."""
    u = np.asarray(u_nodal, dtype=float).reshape(-1, 3)
    G = fem.elem_gradient(mesh, u, metric)       # Psi_i u_j
    eps = np.empty((mesh.n_elems, 6))
    if metric.curv is None:
        for I, (i, j) in enumerate(fem.VOIGT_PAIRS):
            eps[:, I] = G[:, i, j] if i == j else 0.5 * (G[:, i, j]
                                                         + G[:, j, i])
        return eps
    uc = u[mesh.tets].mean(axis=1)
    curv = metric.curv
    for I, (i, j) in enumerate(fem.VOIGT_PAIRS):
        if i == j:
            val = G[:, i, i].copy()
            for m in range(3):
                if m != i:
                    val += curv[:, i, m] * uc[:, m]
        else:
            val = 0.5 * (G[:, i, j] + G[:, j, i]
                         - curv[:, j, i] * uc[:, j]
                         - curv[:, i, j] * uc[:, i])
        eps[:, I] = val
    return eps


def db_coeff_provider(db, mesh):
    """Per-element homogenized coefficients interpolated from a database."""
    alpha3 = mesh.centroids[:, 2]

    def provider(T_elem):
        c = db.coeffs_at(alpha3, T_elem)
        D = fem.energy_voigt(c["a"])
        D = 0.5 * (D + np.transpose(D, (0, 2, 1)))
        return {"rho": c["rho"], "S": c["S"], "D": D,
                "k": 0.5 * (c["k"] + np.transpose(c["k"], (0, 2, 1))),
                "b": c["b"], "theta": c["theta"]}

    return provider


def run_macro(mesh, frame, domain, db, loads, params, stride=1,
              linear_mode=False, t_freeze=None, coupled=False,
              theta_coupling=True, solver_method="auto", progress=None):
    """Integrate the homogenized system; returns the trajectory.

    `linear_mode` freezes coefficients at `t_freeze` (default: the load
    reference temperature), turning the stepping linear.
    """
    provider = db_coeff_provider(db, mesh)
    if linear_mode:
        tf = loads.t_ref if t_freeze is None else t_freeze
        frozen = provider(np.full(mesh.n_elems, tf))
        provider = lambda T_elem: frozen     # noqa: E731
    solver = TransientSolver(mesh, frame, domain, provider, loads, params,
                             constant_coeffs=linear_mode, coupled=coupled,
                             theta_coupling=theta_coupling,
                             solver_method=solver_method)
    return solver.run(stride=stride, progress=progress)
