"""Tabulated cell functions and homogenized coefficients.

A database directory holds one text manifest plus one flat binary file per
(thickness sample, temperature sample) pair: the packed homogenized
coefficients followed by node-major corrector components, all 64-bit
little-endian floats in the order documented by the manifest.  Queries
interpolate multilinearly over the rectangular sample grid.
"""

import hashlib
import os
import warnings

import numpy as np

from . import fem
from .cell import (CellOperators, ElemCoeffs, HomogenizedCoefficients,
                   homogenize, solve_first_order, solve_second_order)

FORMAT_TAG = "homshell-celldb-v1"

# node-major component layout: name -> (offset, shape-after-node-axis)
FUNC_LAYOUT = (
    ("n1", (6, 3)), ("p1", (3,)), ("m1", (3,)),
    ("n2", (3, 6, 3)), ("h2", (3, 3)), ("f2", (3, 3)),
    ("w2", (6, 3)), ("q2", (3,)), ("z2", (3, 3)), ("x2", (3, 6, 3)),
    ("m2", (6,)), ("a2", (1,)), ("g2", (6,)), ("r2", (3,)), ("b2", (6,)),
)


def _layout_offsets():
    off = {}
    pos = 0
    for name, shape in FUNC_LAYOUT:
        size = int(np.prod(shape))
        off[name] = (pos, pos + size, shape)
        pos += size
    return off, pos


FUNC_OFFSETS, FUNC_WIDTH = _layout_offsets()


def pack_sample(first, second, nn):
    """Node-major (nn, FUNC_WIDTH) packing of one sample's corrector fields."""
    out = np.empty((nn, FUNC_WIDTH))

    def put(name, arr):
        s, e, shape = FUNC_OFFSETS[name]
        out[:, s:e] = arr.reshape(nn, e - s)

    put("n1", np.transpose(first.n1, (1, 0, 2)))
    put("p1", first.p1)
    put("m1", first.m1.T)
    put("n2", np.transpose(second.n2, (2, 0, 1, 3)))
    put("h2", np.transpose(second.h2, (1, 0, 2)))
    put("f2", np.transpose(second.f2, (1, 0, 2)))
    put("w2", np.transpose(second.w2, (1, 0, 2)))
    put("q2", second.q2)
    put("z2", np.transpose(second.z2, (1, 0, 2)))
    put("x2", np.transpose(second.x2, (2, 0, 1, 3)))
    put("m2", second.m2.T)
    put("a2", second.a2[:, None])
    put("g2", second.g2.T)
    put("r2", second.r2.T)
    put("b2", second.b2.T)
    return out


def material_hash(material):
    text = repr((material.matrix, material.inclusion, material.t_min,
                 material.t_max, material.theta_mode))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _bracket(samples, x):
    """Interval index and local weight on a sorted 1D sample grid."""
    xs = np.asarray(samples)
    if xs.size == 1:
        z = np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))
        return z.astype(np.int64), z
    i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
    w = (np.asarray(x, dtype=float) - xs[i]) / (xs[i + 1] - xs[i])
    return i.astype(np.int64), np.clip(w, 0.0, 1.0)


class CellDatabase:
    """In-memory view of a built (or loaded) cell-function database."""

    def __init__(self, frame, unitcell, material, cell_div, alpha3, tbar,
                 hom, funcs, aux_note="zero-default"):
        self.frame = frame
        self.unitcell = unitcell
        self.material = material
        self.cell_div = tuple(cell_div)
        self.alpha3 = np.asarray(alpha3, dtype=float)
        self.tbar = np.asarray(tbar, dtype=float)
        self.hom = hom                      # (na, nt, 110)
        self.funcs = funcs                  # (na, nt, nn, FUNC_WIDTH)
        self.aux_note = aux_note
        self.cell_mesh = fem.mesh_box((0, 0, 0), (1, 1, 1), self.cell_div)
        self._t_warned = False

    # -- temperature guard -------------------------------------------------

    def _guard_T(self, T):
        T = np.asarray(T, dtype=float)
        if self.tbar.size == 1:
            return T
        lo, hi = self.tbar[0], self.tbar[-1]
        span = max(hi - lo, 1e-300)
        tol = 0.01 * span
        if np.any(T < lo - tol) or np.any(T > hi + tol):
            raise ValueError(
                f"temperature query outside sampled range [{lo}, {hi}] "
                "by more than 1% of the range")
        if (np.any(T < lo) or np.any(T > hi)) and not self._t_warned:
            warnings.warn("temperature query slightly outside sampled "
                          "range; clamping", stacklevel=3)
            self._t_warned = True
        return np.clip(T, lo, hi)

    def _weights(self, alpha3, T):
        T = self._guard_T(T)
        ia, wa = _bracket(self.alpha3, np.asarray(alpha3, dtype=float))
        it, wt = _bracket(self.tbar, T)
        return ia, wa, it, wt

    # -- queries -----------------------------------------------------------

    def coeffs_at(self, alpha3, T):
        """Interpolated homogenized coefficients at query points.

        Returns a dict of arrays: rho (m,), S (m,), a (m,3,3,3,3),
        b/k/theta (m,3,3).
        """
        alpha3 = np.atleast_1d(np.asarray(alpha3, dtype=float))
        T = np.broadcast_to(np.asarray(T, dtype=float), alpha3.shape)
        ia, wa, it, wt = self._weights(alpha3, T)
        acc = np.zeros((alpha3.size, HomogenizedCoefficients.SIZE))
        for da, ca in ((0, 1.0 - wa), (1, wa)):
            if self.alpha3.size == 1 and da == 1:
                continue
            for dt, ct in ((0, 1.0 - wt), (1, wt)):
                if self.tbar.size == 1 and dt == 1:
                    continue
                iia = np.minimum(ia + da, self.alpha3.size - 1)
                iit = np.minimum(it + dt, self.tbar.size - 1)
                acc += (ca * ct)[:, None] * self.hom[iia, iit]
        m = alpha3.size
        return {
            "rho": acc[:, 0], "S": acc[:, 1],
            "a": acc[:, 2:83].reshape(m, 3, 3, 3, 3),
            "b": acc[:, 83:92].reshape(m, 3, 3),
            "k": acc[:, 92:101].reshape(m, 3, 3),
            "theta": acc[:, 101:110].reshape(m, 3, 3),
        }

    def funcs_at(self, alpha3, T, beta):
        """Interpolated corrector-field values at cell points beta (m,3).

        Returns the packed (m, FUNC_WIDTH) matrix; slice with `field_view`.
        """
        alpha3 = np.atleast_1d(np.asarray(alpha3, dtype=float))
        T = np.broadcast_to(np.asarray(T, dtype=float), alpha3.shape)
        ia, wa, it, wt = self._weights(alpha3, T)
        nid, wb = self.cell_mesh.interp_weights(beta)
        out = np.zeros((alpha3.size, FUNC_WIDTH))
        for da, ca in ((0, 1.0 - wa), (1, wa)):
            if self.alpha3.size == 1 and da == 1:
                continue
            for dt, ct in ((0, 1.0 - wt), (1, wt)):
                if self.tbar.size == 1 and dt == 1:
                    continue
                iia = np.minimum(ia + da, self.alpha3.size - 1)
                iit = np.minimum(it + dt, self.tbar.size - 1)
                vals = self.funcs[iia[:, None], iit[:, None], nid]  # (m,4,W)
                out += (ca * ct)[:, None] * np.einsum("maw,ma->mw", vals, wb)
        return out

    @staticmethod
    def field_view(packed, name):
        s, e, shape = FUNC_OFFSETS[name]
        return packed[:, s:e].reshape((packed.shape[0],) + shape)

    def sample_field(self, ia, it, name):
        """Raw nodal corrector field of one stored sample."""
        s, e, shape = FUNC_OFFSETS[name]
        nn = self.funcs.shape[2]
        return self.funcs[ia, it, :, s:e].reshape((nn,) + shape)

    def hom_at_sample(self, ia, it):
        return HomogenizedCoefficients.unpack(self.hom[ia, it])

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        os.makedirs(path, exist_ok=True)
        na, nt = self.alpha3.size, self.tbar.size
        nn = self.funcs.shape[2]
        lines = [
            f"format = {FORMAT_TAG}",
            f"frame_kind = {self.frame.kind}",
            f"frame_r1 = {float(self.frame.r1)!r}",
            f"frame_r2 = {float(self.frame.r2)!r}",
            f"inclusion = {self.unitcell.inclusion}",
            f"inclusion_radius = {float(self.unitcell.radius)!r}",
            f"inclusion_axis = {self.unitcell.axis}",
            "inclusion_interfaces = "
            + ",".join(repr(float(p)) for p in self.unitcell.interfaces),
            f"cell_divisions = {self.cell_div[0]},{self.cell_div[1]},{self.cell_div[2]}",
            f"n_alpha3 = {na}",
            f"n_tbar = {nt}",
            "alpha3 = " + ",".join(repr(float(v)) for v in self.alpha3),
            "tbar = " + ",".join(repr(float(v)) for v in self.tbar),
            f"nodes = {nn}",
            f"material_hash = {material_hash(self.material)}",
            f"aux_terms = {self.aux_note}",
            "field_order = hom[110] then per-node components: "
            + " ".join(f"{n}{list(s)}" for n, s in FUNC_LAYOUT),
            "dtype = <f8",
        ]
        with open(os.path.join(path, "manifest"), "w") as f:
            f.write("\n".join(lines) + "\n")
        for i in range(na):
            for s in range(nt):
                blob = np.concatenate(
                    [self.hom[i, s], self.funcs[i, s].ravel()])
                blob.astype("<f8").tofile(
                    os.path.join(path, f"sample_{i}_{s}.bin"))

    @classmethod
    def load(cls, path, frame=None, unitcell=None, material=None):
        from .geometry import CurvilinearFrame, UnitCell
        mf = {}
        with open(os.path.join(path, "manifest")) as f:
            for line in f:
                if "=" in line:
                    key, val = line.split("=", 1)
                    mf[key.strip()] = val.strip()
        if mf.get("format") != FORMAT_TAG:
            raise ValueError(f"not a {FORMAT_TAG} database: {path}")
        if frame is None:
            frame = CurvilinearFrame(mf["frame_kind"],
                                     r1=float(mf["frame_r1"]),
                                     r2=float(mf["frame_r2"]))
        if unitcell is None:
            interfaces = tuple(float(x) for x in
                               mf["inclusion_interfaces"].split(",") if x)
            unitcell = UnitCell(mf["inclusion"],
                                radius=float(mf["inclusion_radius"]),
                                axis=int(mf["inclusion_axis"]),
                                interfaces=interfaces or (0.5,))
        div = tuple(int(x) for x in mf["cell_divisions"].split(","))
        alpha3 = np.array([float(x) for x in mf["alpha3"].split(",")])
        tbar = np.array([float(x) for x in mf["tbar"].split(",")])
        nn = int(mf["nodes"])
        na, nt = alpha3.size, tbar.size
        hom = np.empty((na, nt, HomogenizedCoefficients.SIZE))
        funcs = np.empty((na, nt, nn, FUNC_WIDTH))
        for i in range(na):
            for s in range(nt):
                blob = np.fromfile(
                    os.path.join(path, f"sample_{i}_{s}.bin"), dtype="<f8")
                hom[i, s] = blob[:HomogenizedCoefficients.SIZE]
                funcs[i, s] = blob[HomogenizedCoefficients.SIZE:].reshape(
                    nn, FUNC_WIDTH)
        return cls(frame, unitcell, material, div, alpha3, tbar, hom, funcs,
                   aux_note=mf.get("aux_terms", "zero-default"))


def _solve_sample(mesh, phase, material, H, dH, tbar, t_ref, aux_terms):
    jets = material.jets(tbar, t_ref=t_ref)
    co = ElemCoeffs.from_jets(jets, phase)
    ops = CellOperators(mesh, co, H)
    first = solve_first_order(ops)
    hom = homogenize(ops, first)
    second = solve_second_order(ops, first, hom, H, dH, aux_terms)
    assert first.scalar_component_count() == 33
    assert second.scalar_component_count() == 250
    return hom.pack(), pack_sample(first, second, mesh.n_nodes)


def build_database(frame, domain, unitcell, material, cell_div,
                   n_alpha3, n_tbar, t_ref=None, aux_terms=None,
                   workers=1, progress=None):
    """Off-line stage: solve every sample of the (alpha3, Tbar) grid.

    For frames with constant H (cartesian) a single thickness sample is
    stored regardless of `n_alpha3`; temperature samples are equidistant
    across the material's admissible range.
    """
    lo3, hi3 = domain.lo[2], domain.hi[2]
    if frame.is_cartesian or n_alpha3 <= 1:
        alpha3 = np.array([0.5 * (lo3 + hi3)])
    else:
        alpha3 = np.linspace(lo3, hi3, n_alpha3)
    if n_tbar <= 1:
        tbar = np.array([0.5 * (material.t_min + material.t_max)])
    else:
        tbar = np.linspace(material.t_min, material.t_max, n_tbar)

    mesh = fem.mesh_box((0, 0, 0), (1, 1, 1), cell_div)
    phase = unitcell.phase_at(mesh.centroids)
    na, nt = alpha3.size, tbar.size
    hom = np.empty((na, nt, HomogenizedCoefficients.SIZE))
    funcs = np.empty((na, nt, mesh.n_nodes, FUNC_WIDTH))

    jobs = []
    for i, a3 in enumerate(alpha3):
        pt = np.array([0.5 * (domain.lo[0] + domain.hi[0]),
                       0.5 * (domain.lo[1] + domain.hi[1]), a3])
        H, dH, _ = frame.eval(pt)
        for s, tb in enumerate(tbar):
            jobs.append((i, s, H, dH, tb))

    def run(job):
        i, s, H, dH, tb = job
        return i, s, _solve_sample(mesh, phase, material, H, dH, tb,
                                   t_ref, aux_terms)

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sample_entry,
                                  [(mesh.lo, mesh.hi, mesh.div, unitcell,
                                    material, j, t_ref) for j in jobs]))
    else:
        results = []
        for n, job in enumerate(jobs):
            results.append(run(job))
            if progress:
                progress(n + 1, len(jobs))

    for i, s, (hv, fv) in results:
        hom[i, s] = hv
        funcs[i, s] = fv
    note = "zero-default" if aux_terms is None else "custom-provider"
    return CellDatabase(frame, unitcell, material, cell_div, alpha3, tbar,
                        hom, funcs, aux_note=note)


def _sample_entry(packed):
    """Process-pool entry point (aux_terms unsupported across processes)."""
    lo, hi, div, unitcell, material, job, t_ref = packed
    mesh = fem.mesh_box(lo, hi, div)
    phase = unitcell.phase_at(mesh.centroids)
    i, s, H, dH, tb = job
    return i, s, _solve_sample(mesh, phase, material, H, dH, tb, t_ref, None)
