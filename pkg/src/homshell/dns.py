"""Direct fine-mesh reference solver for the oscillatory-coefficient system.

Reuses the transient engine verbatim; only the coefficients differ: every
element is assigned the phase of its centroid through the fast coordinate
and carries the temperature-dependent phase values at the current iterate.
"""

import numpy as np

from . import fem
from .macro import LoadSpec, TimeSchemeParams, TransientSolver  # noqa: F401
from .materials import MaterialError


def dns_mesh(domain, divisions_per_cell=8, min_divisions_per_cell=4):
    """Fine mesh resolving every periodic cell."""
    if divisions_per_cell < min_divisions_per_cell:
        raise ValueError(
            f"divisions per cell {divisions_per_cell} below the resolution "
            f"floor {min_divisions_per_cell}")
    div = tuple(c * divisions_per_cell for c in domain.edge_cells)
    return fem.mesh_box(domain.lo, domain.hi, div)


def _poly_table(material):
    """Stacked (2,3) polynomial coefficient rows per parameter."""
    keys = ("density", "youngs_modulus", "thermal_modulus", "specific_heat",
            "conductivity", "two_way_modulus")
    table = {}
    for key in keys:
        rows = []
        for ph in material.phases():
            c = np.zeros(3)
            src = np.asarray(getattr(ph, key), dtype=float)
            c[:src.size] = src
            rows.append(c)
        table[key] = np.stack(rows)
    table["poisson"] = np.array([ph.poisson for ph in material.phases()])
    return table


def dns_coeff_provider(mesh, domain, unitcell, material, t_ref):
    """Per-element oscillatory coefficients at the current temperature."""
    beta = domain.beta(mesh.centroids)
    phase = unitcell.phase_at(beta)
    tab = _poly_table(material)
    nu = tab["poisson"][phase]
    linearized = material.theta_mode == "linearized"

    def peval(key, T):
        c = tab[key][phase]
        return c[:, 0] + c[:, 1] * T + c[:, 2] * T * T

    def provider(T_elem):
        T = np.clip(T_elem, material.t_min, material.t_max)
        E = peval("youngs_modulus", T)
        if np.any(E <= 0.0):
            raise MaterialError("non-positive stiffness inside DNS run")
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = E / (2.0 * (1.0 + nu))
        rho = peval("density", T)
        b = peval("thermal_modulus", T)
        theta = t_ref * b if linearized else peval("two_way_modulus", T)
        return {
            "rho": rho,
            "S": rho * peval("specific_heat", T),
            "D": fem.iso_voigt(lam, mu),
            "k": peval("conductivity", T),
            "b": b,
            "theta": theta,
        }

    return provider, phase


def run_dns(domain, frame, unitcell, material, loads, params,
            divisions_per_cell=8, stride=1, linear_mode=False, t_freeze=None,
            min_divisions_per_cell=4, solver_method="auto", progress=None):
    """Integrate the original multiscale system on a resolving mesh."""
    mesh = dns_mesh(domain, divisions_per_cell, min_divisions_per_cell)
    provider, _ = dns_coeff_provider(mesh, domain, unitcell, material,
                                     loads.t_ref)
    if linear_mode:
        tf = loads.t_ref if t_freeze is None else t_freeze
        frozen = provider(np.full(mesh.n_elems, tf))
        provider_run = lambda T_elem: frozen     # noqa: E731
    else:
        provider_run = provider
    solver = TransientSolver(mesh, frame, domain, provider_run, loads,
                             params, constant_coeffs=linear_mode,
                             solver_method=solver_method)
    traj = solver.run(stride=stride, progress=progress)
    return mesh, traj
