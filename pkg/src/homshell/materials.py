"""Temperature-dependent two-phase material model.

Each phase carries seven parameters as polynomials in temperature of degree
at most two.  Evaluation at a reference temperature yields the value plus
first and second T-derivatives (the Taylor jet) of every parameter; the
elasticity tensor jet follows by pushing the Young's-modulus jet through
the isotropic Lame formulas (Poisson ratio constant).
"""

from dataclasses import dataclass

import numpy as np

PARAM_KEYS = ("density", "youngs_modulus", "poisson", "thermal_modulus",
              "specific_heat", "conductivity", "two_way_modulus")

# Voigt pair ordering used throughout: 11, 22, 33, 12, 13, 23
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class MaterialError(ValueError):
    """Invalid material data or violated coefficient assumption."""


def _poly(coeffs):
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1 or c.size > 3:
        raise MaterialError("parameter polynomials are limited to degree 2")
    out = np.zeros(3)
    out[:c.size] = c
    return out


@dataclass(frozen=True)
class PhasePolynomials:
    """One phase: polynomial coefficients [c0, c1, c2] in T per parameter."""

    density: tuple
    youngs_modulus: tuple
    poisson: float
    thermal_modulus: tuple
    specific_heat: tuple
    conductivity: tuple
    two_way_modulus: tuple

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in PARAM_KEYS if k not in d]
        if missing:
            raise MaterialError(f"missing material keys: {missing}")
        kw = {k: tuple(_poly(d[k])) for k in PARAM_KEYS if k != "poisson"}
        nu = float(np.atleast_1d(d["poisson"])[0])
        return cls(poisson=nu, **kw)

    def scaled(self, factors):
        """Return a copy with parameters multiplied by unit-scale factors."""
        kw = {}
        for k in PARAM_KEYS:
            if k == "poisson":
                kw[k] = self.poisson
            else:
                kw[k] = tuple(np.asarray(getattr(self, k)) * factors.get(k, 1.0))
        return PhasePolynomials(**kw)


@dataclass(frozen=True)
class Jet:
    """Value and first/second T-derivatives of one scalar parameter."""

    val: float
    d1: float
    d2: float


def eval_poly_jet(coeffs, T):
    c = _poly(coeffs)
    return Jet(c[0] + c[1] * T + c[2] * T * T, c[1] + 2.0 * c[2] * T, 2.0 * c[2])


def lame_constants(E, nu):
    if E <= 0.0:
        raise MaterialError("Young's modulus must be positive")
    if nu >= 0.5 or nu <= -1.0:
        raise MaterialError(f"Poisson ratio {nu} gives a singular tensor")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def isotropic_elasticity(E, nu):
    """Full a_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk), shape (3,3,3,3)."""
    lam, mu = lame_constants(E, nu)
    d = np.eye(3)
    a = (lam * np.einsum("ij,kl->ijkl", d, d)
         + mu * (np.einsum("ik,jl->ijkl", d, d)
                 + np.einsum("il,jk->ijkl", d, d)))
    return a


def voigt_matrix(a):
    """6x6 Voigt form of a_ijkl with engineering factor 2 on shear columns,
    so that sigma_voigt = D @ eps_voigt with eps_voigt = (e11,e22,e33,e12,e13,e23)
    carrying plain tensor shear components and D[i,j>=3] doubled."""
    D = np.empty((6, 6))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for J, (k, l) in enumerate(VOIGT_PAIRS):
            D[I, J] = a[i, j, k, l] * (2.0 if J >= 3 else 1.0)
    return D


def voigt_kelvin(a):
    """Symmetric Kelvin 6x6 (sqrt(2) scaling) for eigenvalue checks."""
    s = np.array([1.0, 1.0, 1.0, np.sqrt(2), np.sqrt(2), np.sqrt(2)])
    K = np.empty((6, 6))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for J, (k, l) in enumerate(VOIGT_PAIRS):
            K[I, J] = a[i, j, k, l] * s[I] * s[J]
    return K


@dataclass(frozen=True)
class CoefficientJets:
    """All parameter jets for one phase at a reference temperature.

    Tensor-valued entries hold the isotropic tensors built from the scalar
    jets; b, k, theta are scalars times identity.
    """

    rho: Jet
    c: Jet
    k: Jet
    b: Jet
    theta: Jet
    E: Jet
    nu: float

    def elasticity(self, order=0):
        """a_ijkl jet of the given T-derivative order (0, 1 or 2)."""
        e = (self.E.val, self.E.d1, self.E.d2)[order]
        if order == 0:
            return isotropic_elasticity(e, self.nu)
        # derivatives scale linearly with the E-jet at fixed nu
        base = isotropic_elasticity(1.0, self.nu)
        return e * base


def eval_jet(phase, T0, theta_mode="table", t_ref=None):
    """Taylor jets of every parameter of `phase` at temperature T0.

    theta_mode 'table' reads the tabulated two-way modulus; 'linearized'
    replaces it by t_ref * b(T0) (with zero T-derivatives beyond b's).
    """
    rho = eval_poly_jet(phase.density, T0)
    c = eval_poly_jet(phase.specific_heat, T0)
    k = eval_poly_jet(phase.conductivity, T0)
    b = eval_poly_jet(phase.thermal_modulus, T0)
    E = eval_poly_jet(phase.youngs_modulus, T0)
    if theta_mode == "table":
        theta = eval_poly_jet(phase.two_way_modulus, T0)
    elif theta_mode == "linearized":
        if t_ref is None:
            raise MaterialError("linearized theta mode needs t_ref")
        theta = Jet(t_ref * b.val, t_ref * b.d1, t_ref * b.d2)
    else:
        raise MaterialError(f"unknown theta mode {theta_mode!r}")
    return CoefficientJets(rho=rho, c=c, k=k, b=b, theta=theta, E=E,
                           nu=phase.poisson)


@dataclass(frozen=True)
class TwoPhaseMaterial:
    """Matrix + inclusion phases plus the admissible temperature range."""

    matrix: PhasePolynomials
    inclusion: PhasePolynomials
    t_min: float
    t_max: float
    theta_mode: str = "table"

    def phases(self):
        return (self.matrix, self.inclusion)

    def jets(self, T0, t_ref=None):
        if not (self.t_min - 1e-9 <= T0 <= self.t_max + 1e-9):
            raise MaterialError(
                f"temperature {T0} outside [{self.t_min}, {self.t_max}]")
        return tuple(eval_jet(p, T0, self.theta_mode, t_ref)
                     for p in self.phases())

    def frozen(self, T0, t_ref=None):
        """T-independent copy: every polynomial collapsed to its value at T0."""
        def freeze(p):
            kw = {}
            for key in PARAM_KEYS:
                if key == "poisson":
                    kw[key] = p.poisson
                elif key == "two_way_modulus" and self.theta_mode == "linearized":
                    kw[key] = ((t_ref if t_ref is not None else T0)
                               * eval_poly_jet(p.thermal_modulus, T0).val,)
                else:
                    kw[key] = (eval_poly_jet(getattr(p, key), T0).val,)
            return PhasePolynomials(**kw)
        return TwoPhaseMaterial(freeze(self.matrix), freeze(self.inclusion),
                                self.t_min, self.t_max, theta_mode="table")


def validate_assumptions(material, n_samples=100):
    """Check positivity/ellipticity of every phase over the temperature range.

    Hard requirements (violations raise): positive density, specific heat,
    stiffness and conductivity; Poisson ratio inside (0, 0.5); positive
    definite elasticity.  Sign changes of the coupling moduli b and theta
    are collected as warnings: they model negative thermal expansion and do
    not affect well-posedness of the system.  Returns the tightest observed
    ellipticity constants gamma0, gamma1 (elasticity and conduction).
    """
    Ts = np.linspace(material.t_min, material.t_max, n_samples)
    gamma0 = np.inf
    gamma1 = 0.0
    warnings_ = []
    for name, phase in zip(("matrix", "inclusion"), material.phases()):
        if not 0.0 < phase.poisson < 0.5:
            raise MaterialError(
                f"{name}: poisson {phase.poisson} violates 0 < nu < 0.5")
        for T in Ts:
            jets = eval_jet(phase, T, material.theta_mode,
                            t_ref=material.t_min)
            for pname, val in (("density", jets.rho.val),
                               ("specific_heat", jets.c.val),
                               ("conductivity", jets.k.val),
                               ("youngs_modulus", jets.E.val)):
                if val <= 0.0:
                    raise MaterialError(
                        f"{name}.{pname} = {val} non-positive at T = {T}")
            for pname, val in (("thermal_modulus", jets.b.val),
                               ("two_way_modulus", jets.theta.val)):
                if val <= 0.0:
                    msg = f"{name}.{pname} = {val:.6g} <= 0 at T = {T:.6g}"
                    if not any(msg.split("=")[0] in w for w in warnings_):
                        warnings_.append(msg)
            ev = np.linalg.eigvalsh(voigt_kelvin(jets.elasticity(0)))
            if ev[0] <= 0.0:
                raise MaterialError(
                    f"{name}: elasticity tensor not positive definite at T={T}")
            gamma0 = min(gamma0, ev[0], jets.k.val)
            gamma1 = max(gamma1, ev[-1], jets.k.val)
    return {"gamma0": float(gamma0), "gamma1": float(gamma1), "ok": True,
            "warnings": warnings_}


def sic_carbon_si():
    """The SiC-matrix / carbon-inclusion pair in SI units (Pa, kg/m^3, ...)."""
    matrix = PhasePolynomials(
        density=(3210.0,),
        youngs_modulus=(350.0e9, -3.04e-2 * 1e9),
        poisson=0.25,
        thermal_modulus=(3.50,),
        specific_heat=(660.0, 1.915, -1.491e-3),
        conductivity=(250.0, 0.02728),
        two_way_modulus=(1306.025,),
    )
    inclusion = PhasePolynomials(
        density=(1760.0,),
        youngs_modulus=(220.0e9, -1.10e-4 * 1e9),
        poisson=0.20,
        thermal_modulus=(9273.0, -57.53, 0.0817),
        specific_heat=(710.0, 1.781, -1.976e-3),
        conductivity=(8.0, 0.02535),
        two_way_modulus=(3.46e6, -2.147e4, 30.486),
    )
    return TwoPhaseMaterial(matrix, inclusion, 373.15, 773.15)
