import numpy as np
import pytest

from homshell import fem
from homshell.geometry import CurvilinearFrame, MacroDomain, UnitCell
from homshell.macro import (LoadSpec, TimeSchemeParams, TransientSolver,
                            Trajectory, run_macro)
from homshell.materials import TwoPhaseMaterial, sic_carbon_si
from homshell.celldb import build_database

CM = 0.01
CM_FACTORS = {"density": CM ** 3, "youngs_modulus": CM, "thermal_modulus": CM,
              "specific_heat": CM ** -2, "conductivity": CM ** -1,
              "two_way_modulus": CM}


def cm_material(t_max=1073.15):
    m = sic_carbon_si()
    return TwoPhaseMaterial(m.matrix.scaled(CM_FACTORS),
                            m.inclusion.scaled(CM_FACTORS), 373.15, t_max)


def const_provider(mesh, rho=1.0, S=1.0, k=1.0, b=0.0, theta=0.0,
                   lam=1.0, mu=1.0):
    ne = mesh.n_elems
    frozen = {
        "rho": np.full(ne, rho), "S": np.full(ne, S),
        "D": fem.iso_voigt(np.full(ne, lam), np.full(ne, mu)),
        "k": np.full(ne, k), "b": np.full(ne, b),
        "theta": np.full(ne, theta),
    }
    return lambda T_elem: frozen


def block_setup(xi=0.25, n=6, tbar=4):
    frame = CurvilinearFrame("cartesian")
    dom = MacroDomain((0, 0, 0), (1, 1, 1), xi,
                      dirichlet_u=("x-", "x+", "y-", "y+"),
                      dirichlet_t=("z-", "z+"))
    mat = cm_material()
    db = build_database(frame, dom, UnitCell("sphere", radius=0.35), mat,
                        (6, 6, 6), 1, tbar)
    mesh = fem.mesh_box(dom.lo, dom.hi, (n, n, n))
    return frame, dom, mat, db, mesh


def block_loads():
    def bc_T(pts, t):
        return np.where(pts[:, 2] > 0.5, 773.15, 373.15)
    return LoadSpec(body_force=(0.0, 0.0, -1e6), heat_source=5e7,
                    bc_temp=bc_T, t_ref=373.15)


class TestSchemeParams:
    def test_defaults_stable(self):
        p = TimeSchemeParams(dt=0.01, steps=10)
        assert (p.delta, p.gamma, p.omega) == (1.0, 0.6, 0.35)

    def test_outside_stability_warns(self):
        with pytest.warns(UserWarning, match="stability"):
            TimeSchemeParams(dt=0.01, steps=1, gamma=0.3, omega=0.1)

    def test_invalid(self):
        with pytest.raises(ValueError):
            TimeSchemeParams(dt=-1.0, steps=5)


class TestFixedPoints:
    def test_trivial_state_preserved(self):
        frame, dom, mat, db, mesh = block_setup()
        loads = LoadSpec(bc_temp=373.15, t_ref=373.15)
        traj = run_macro(mesh, frame, dom, db, loads,
                         TimeSchemeParams(dt=0.01, steps=25), stride=25)
        f = traj.final()
        assert np.abs(f.T - 373.15).max() == 0.0
        assert np.abs(f.u).max() == 0.0
        assert np.abs(f.v).max() == 0.0

    def test_zero_load_constant_trajectory(self):
        frame = CurvilinearFrame("cartesian")
        dom = MacroDomain((0, 0, 0), (1, 1, 1), 0.5, dirichlet_u=("x-",),
                          dirichlet_t=("z-",))
        mesh = fem.mesh_box(dom.lo, dom.hi, (4, 4, 4))
        loads = LoadSpec(bc_temp=500.0, t_ref=500.0)
        solver = TransientSolver(mesh, frame, dom, const_provider(mesh),
                                 loads, TimeSchemeParams(dt=0.1, steps=8),
                                 constant_coeffs=True)
        traj = solver.run(stride=1)
        for s in traj.snapshots:
            assert np.abs(s.T - 500.0).max() == 0.0
            assert np.abs(s.u).max() == 0.0


class TestThermalStep:
    def test_manufactured_heat_equation(self):
        # T(x,t) = exp(-pi^2 t) sin(pi x) on unit coefficients
        frame = CurvilinearFrame("cartesian")
        dom = MacroDomain((0, 0, 0), (1, 1, 1), 1.0,
                          dirichlet_t=("x-", "x+"))
        mesh = fem.mesh_box(dom.lo, dom.hi, (32, 2, 2))
        loads = LoadSpec(bc_temp=0.0, t_ref=0.0)
        params = TimeSchemeParams(dt=1e-3, steps=500)
        solver = TransientSolver(mesh, frame, dom, const_provider(mesh),
                                 loads, params, constant_coeffs=True,
                                 theta_coupling=False)
        state = solver.initial_state()
        state.T[:] = np.sin(np.pi * mesh.nodes[:, 0])
        state.T_prev[:] = state.T
        for _ in range(params.steps):
            state, _ = solver.step(state)
        exact = np.exp(-np.pi ** 2 * 0.5) * np.sin(np.pi * mesh.nodes[:, 0])
        mask = np.abs(exact) > 1e-4
        rel = np.abs(state.T[mask] - exact[mask]) / np.abs(exact[mask])
        assert rel.max() < 0.05


class TestMechanicalStep:
    def test_newmark_scalar_recurrence_decays(self):
        # algorithmic damping of the gamma=0.6, omega=0.35 scheme
        gamma, omega, dt, w0 = 0.6, 0.35, 0.1, 2.0
        k, m = w0 ** 2, 1.0
        u, v, a = 1.0, 0.0, -k / m
        e0 = 0.5 * k * u ** 2 + 0.5 * m * v ** 2
        peak = e0
        for _ in range(1000):
            lhs = m / (omega * dt ** 2) + k
            rhs = m * (u / (omega * dt ** 2) + v / (omega * dt)
                       + (0.5 / omega - 1.0) * a)
            u_new = rhs / lhs
            a_new = ((u_new - u) / (omega * dt ** 2) - v / (omega * dt)
                     - (0.5 / omega - 1.0) * a)
            v = v + dt * ((1 - gamma) * a + gamma * a_new)
            u, a = u_new, a_new
            peak = max(peak, 0.5 * k * u ** 2 + 0.5 * m * v ** 2)
        energy = 0.5 * k * u ** 2 + 0.5 * m * v ** 2
        assert peak <= e0 * (1 + 1e-6)      # never grows beyond the start
        assert energy < 0.1 * e0            # strong algorithmic damping

    def test_static_limit_matches_direct_solve(self):
        frame = CurvilinearFrame("cartesian")
        dom = MacroDomain((0, 0, 0), (1, 1, 1), 1.0,
                          dirichlet_u=("x-", "x+", "y-", "y+", "z-", "z+"))
        mesh = fem.mesh_box(dom.lo, dom.hi, (5, 5, 5))
        provider = const_provider(mesh, lam=2.0, mu=1.0, rho=1e-6)
        loads = LoadSpec(body_force=(0.0, 0.0, -1.0), bc_temp=0.0, t_ref=0.0)
        params = TimeSchemeParams(dt=1e5, steps=1)
        solver = TransientSolver(mesh, frame, dom, provider, loads, params,
                                 constant_coeffs=True, theta_coupling=False)
        state = solver.initial_state()
        state.acc[:] = 0.0                   # history-free (static) start
        state, _ = solver.step(state)
        u_dyn = state.u

        met = fem.MeshMetric.unit()
        K = fem.assemble_elasticity_stiffness(
            mesh, provider(None)["D"], met)
        F = fem.load_point_sources(mesh, np.tile([0.0, 0.0, -1.0],
                                                 (mesh.n_elems, 1)),
                                   met, vector=True)
        bn = mesh.all_boundary_nodes()
        dofs = (3 * bn[:, None] + np.arange(3)).ravel()
        u_st = fem.solve_spd(K, F, dofs, np.zeros(dofs.size),
                             method="direct").reshape(-1, 3)
        scale = np.abs(u_st).max()
        assert np.abs(u_dyn - u_st).max() <= 1e-6 * scale


class TestNonlinearIteration:
    def test_t_independent_converges_in_one_plus_verification(self):
        frame = CurvilinearFrame("cartesian")
        dom = MacroDomain((0, 0, 0), (1, 1, 1), 0.5,
                          dirichlet_u=("x-",), dirichlet_t=("z-", "z+"))
        mesh = fem.mesh_box(dom.lo, dom.hi, (4, 4, 4))

        def bc_T(pts, t):
            return np.where(pts[:, 2] > 0.5, 700.0, 400.0)
        loads = LoadSpec(bc_temp=bc_T, heat_source=1.0, t_ref=400.0)
        solver = TransientSolver(mesh, frame, dom, const_provider(
            mesh, rho=1.0, S=1.0, k=1.0, b=0.1, theta=0.1),
            loads, TimeSchemeParams(dt=0.05, steps=6))
        traj = solver.run()
        assert all(i == 2 for i in traj.nl_iterations)

    def test_nonlinear_count_moderate(self):
        frame, dom, mat, db, mesh = block_setup()
        traj = run_macro(mesh, frame, dom, db, block_loads(),
                         TimeSchemeParams(dt=0.01, steps=5))
        assert max(traj.nl_iterations) <= 10

    def test_zero_tolerance_stalls(self):
        frame, dom, mat, db, mesh = block_setup(n=4)
        params = TimeSchemeParams(dt=0.01, steps=1, tol_nl=0.0, max_nl=4)
        with pytest.raises(fem.SolverError, match="nonlinear"):
            run_macro(mesh, frame, dom, db, block_loads(), params)


class TestConvergenceAndStability:
    def test_dt_halving_self_convergence(self):
        frame, dom, mat, db, mesh = block_setup(n=5)
        loads = block_loads()
        ends = {}
        for steps, dt in ((10, 0.02), (20, 0.01), (40, 0.005)):
            traj = run_macro(mesh, frame, dom, db, loads,
                             TimeSchemeParams(dt=dt, steps=steps),
                             stride=steps)
            ends[dt] = traj.final()
        e1 = np.linalg.norm(ends[0.02].T - ends[0.01].T)
        e2 = np.linalg.norm(ends[0.01].T - ends[0.005].T)
        assert e1 / e2 >= 1.5

    def test_bounded_energy_100_steps(self):
        from homshell.analysis import energy_monitor
        from homshell.macro import db_coeff_provider
        frame, dom, mat, db, mesh = block_setup(n=5)
        traj = run_macro(mesh, frame, dom, db, block_loads(),
                         TimeSchemeParams(dt=0.01, steps=100), stride=10)
        f = traj.final()
        assert np.all(np.isfinite(f.T)) and np.all(np.isfinite(f.u))
        _, E, flag = energy_monitor(mesh, fem.MeshMetric.unit(),
                                    db_coeff_provider(db, mesh), traj)
        assert not flag

    def test_linear_mode_matches_frozen_picard(self):
        frame, dom, mat, db, mesh = block_setup(n=4)
        loads = block_loads()
        params = TimeSchemeParams(dt=0.01, steps=4)
        t1 = run_macro(mesh, frame, dom, db, loads, params,
                       linear_mode=True)
        # frozen-coefficient run through the full Picard machinery
        from homshell.macro import db_coeff_provider
        provider = db_coeff_provider(db, mesh)
        frozen = provider(np.full(mesh.n_elems, loads.t_ref))
        solver = TransientSolver(mesh, frame, dom, lambda T: frozen, loads,
                                 params)
        t2 = solver.run()
        assert np.allclose(t1.final().T, t2.final().T, rtol=1e-9)
        assert np.allclose(t1.final().u, t2.final().u, rtol=1e-9, atol=1e-18)
