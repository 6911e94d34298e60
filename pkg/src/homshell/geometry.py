"""Orthogonal curvilinear frames, shell domains and the curvilinear strain.

A frame supplies the Lame coefficients H1, H2, H3 of an orthogonal
coordinate system together with their analytic derivatives.  Shell domains
are boxes in coordinate space; curvature enters every operator only
through the H weights.
"""

from dataclasses import dataclass, field

import numpy as np

FRAME_KINDS = ("cartesian", "cylindrical", "doubly_curved")


class DomainError(ValueError):
    """Raised when a coordinate leaves the frame's admissible region."""


@dataclass(frozen=True)
class CurvilinearFrame:
    """Analytic orthogonal frame: cartesian, cylindrical or doubly curved.

    cylindrical:   H1 = H3 = 1, H2 = R2 + a3
    doubly_curved: H1 = R1 + a3, H2 = R2 + a3, H3 = 1
    """

    kind: str = "cartesian"
    r1: float = 0.0
    r2: float = 0.0

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if self.kind == "cylindrical" and self.r2 <= 0.0:
            raise ValueError("cylindrical frame needs r2 > 0")
        if self.kind == "doubly_curved" and (self.r1 <= 0.0 or self.r2 <= 0.0):
            raise ValueError("doubly curved frame needs r1, r2 > 0")

    @property
    def is_cartesian(self):
        return self.kind == "cartesian"

    def eval(self, alpha):
        """Evaluate (H1,H2,H3), dH[i,j] = dH_i/da_j and H = H1*H2*H3.

        `alpha` may be a single point (3,) or a batch (n,3); the outputs
        broadcast accordingly: H (...,3), dH (...,3,3), Hprod (...).
        """
        a = np.asarray(alpha, dtype=float)
        scalar = a.ndim == 1
        pts = a.reshape(-1, 3)
        n = pts.shape[0]
        H = np.ones((n, 3))
        dH = np.zeros((n, 3, 3))
        if self.kind == "cylindrical":
            H[:, 1] = self.r2 + pts[:, 2]
            dH[:, 1, 2] = 1.0
        elif self.kind == "doubly_curved":
            H[:, 0] = self.r1 + pts[:, 2]
            H[:, 1] = self.r2 + pts[:, 2]
            dH[:, 0, 2] = 1.0
            dH[:, 1, 2] = 1.0
        if np.any(H <= 0.0):
            raise DomainError("Lame coefficient <= 0 at a queried point")
        Hprod = H[:, 0] * H[:, 1] * H[:, 2]
        if scalar:
            return H[0], dH[0], Hprod[0]
        return H, dH, Hprod

    def map_to_cartesian(self, alpha):
        """Embed coordinate points into 3D cartesian space (for output only).

        cartesian: identity.  cylindrical (a1 axial, a2 angle, a3 through
        thickness): (x,y,z) = ((R2+a3) cos a2, (R2+a3) sin a2, a1).
        doubly curved: two-angle patch
            x = (R1+a3) sin a1,
            y = (R2+a3) cos a1 sin a2,
            z = (R2+a3) cos a1 cos a2 - R2,
        which reduces to a sphere patch when R1 = R2.
        """
        a = np.asarray(alpha, dtype=float)
        scalar = a.ndim == 1
        pts = a.reshape(-1, 3)
        out = np.empty_like(pts)
        if self.kind == "cartesian":
            out[:] = pts
        elif self.kind == "cylindrical":
            r = self.r2 + pts[:, 2]
            out[:, 0] = r * np.cos(pts[:, 1])
            out[:, 1] = r * np.sin(pts[:, 1])
            out[:, 2] = pts[:, 0]
        else:
            r1 = self.r1 + pts[:, 2]
            r2 = self.r2 + pts[:, 2]
            out[:, 0] = r1 * np.sin(pts[:, 0])
            out[:, 1] = r2 * np.cos(pts[:, 0]) * np.sin(pts[:, 1])
            out[:, 2] = r2 * np.cos(pts[:, 0]) * np.cos(pts[:, 1]) - self.r2
        return out[0] if scalar else out


def frame_eval(frame, alpha):
    """Functional alias for CurvilinearFrame.eval."""
    return frame.eval(alpha)


def map_to_cartesian(frame, alpha):
    return frame.map_to_cartesian(alpha)


@dataclass(frozen=True)
class MacroDomain:
    """Box [a1,b1] x [a2,b2] x [a3,b3] in coordinate space.

    `xi` is the cell size in coordinate units; every box edge must be an
    integer number of cells.  `dirichlet_u` / `dirichlet_t` list the box
    faces ('x-','x+','y-','y+','z-','z+') carrying prescribed displacement
    and temperature.
    """

    lo: tuple
    hi: tuple
    xi: float
    dirichlet_u: tuple = ()
    dirichlet_t: tuple = ()

    def __post_init__(self):
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        for a, b in zip(self.lo, self.hi):
            if b <= a:
                raise ValueError("degenerate box")
            ratio = (b - a) / self.xi
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError(
                    f"box edge {b - a} is not an integer multiple of xi={self.xi}")
        for f in tuple(self.dirichlet_u) + tuple(self.dirichlet_t):
            if f not in ("x-", "x+", "y-", "y+", "z-", "z+"):
                raise ValueError(f"unknown face tag {f!r}")

    @property
    def edge_cells(self):
        return tuple(int(round((b - a) / self.xi))
                     for a, b in zip(self.lo, self.hi))

    def beta(self, alpha):
        """Fast coordinate beta = frac(alpha/xi), componentwise in [0,1)."""
        a = np.asarray(alpha, dtype=float) / self.xi
        return a - np.floor(a)


@dataclass(frozen=True)
class UnitCell:
    """Periodic unit cell (0,1)^3 with a two-phase inclusion geometry.

    inclusion: 'sphere' (centered, radius r < 0.5), 'laminate' (axis-aligned
    slabs split at `interfaces` along `axis`, phases alternating starting
    with phase 0), or 'none'.
    """

    inclusion: str = "none"
    radius: float = 0.35
    axis: int = 0
    interfaces: tuple = (0.5,)

    def __post_init__(self):
        if self.inclusion not in ("none", "sphere", "laminate"):
            raise ValueError(f"unknown inclusion {self.inclusion!r}")
        if self.inclusion == "sphere" and not (0.0 < self.radius < 0.5):
            raise ValueError("sphere radius must lie in (0, 0.5)")
        if self.inclusion == "laminate":
            if self.axis not in (0, 1, 2):
                raise ValueError("laminate axis must be 0, 1 or 2")
            pos = tuple(self.interfaces)
            if not pos or any(not 0.0 < p < 1.0 for p in pos) \
                    or list(pos) != sorted(pos):
                raise ValueError("interfaces must be sorted and inside (0,1)")

    def phase_at(self, beta):
        """Phase id (0 = matrix, 1 = inclusion) at cell points (n,3) or (3,).

        Boundary points (exact equality) belong to the matrix.
        """
        b = np.asarray(beta, dtype=float)
        scalar = b.ndim == 1
        pts = b.reshape(-1, 3)
        if self.inclusion == "sphere":
            d2 = np.sum((pts - 0.5) ** 2, axis=1)
            ph = (d2 < self.radius ** 2).astype(np.int32)
        elif self.inclusion == "laminate":
            ph = np.zeros(pts.shape[0], dtype=np.int32)
            for p in self.interfaces:
                ph ^= (pts[:, self.axis] >= p).astype(np.int32)
        else:
            ph = np.zeros(pts.shape[0], dtype=np.int32)
        return int(ph[0]) if scalar else ph


def breve_strain(u, grad_u, H, dH):
    """Curvilinear small-strain tensor of a displacement sample.

    Parameters: u (...,3) displacement values, grad_u (...,3,3) with
    grad_u[i,j] = du_j/da_i (raw coordinate gradient), frame data H (...,3)
    and dH (...,3,3).  Returns the symmetric 3x3 strain (...,3,3):

      diag:  e_ii = Psi_i(u_i) + sum_{j != i} (Psi_j(H_i)/H_i) u_j
      off:   e_ij = [Psi_i(u_j) + Psi_j(u_i)
                     - (Psi_i(H_j)/H_j) u_j - (Psi_j(H_i)/H_i) u_i] / 2

    with Psi_i = (1/H_i) d/da_i.
    """
    u = np.asarray(u, dtype=float)
    g = np.asarray(grad_u, dtype=float)
    H = np.asarray(H, dtype=float)
    dH = np.asarray(dH, dtype=float)
    scalar = u.ndim == 1
    u = np.atleast_2d(u)
    g = g.reshape(u.shape[0], 3, 3)
    H = np.atleast_2d(H)
    dH = dH.reshape(u.shape[0], 3, 3)

    # Psi_i(u_j) = g[i,j]/H_i ; curv[i,j] = Psi_j(H_i)/H_i = dH[i,j]/(H_i H_j)
    psi_u = g / H[:, :, None]
    curv = dH / (H[:, :, None] * H[:, None, :])

    eps = np.empty((u.shape[0], 3, 3))
    for i in range(3):
        others = [j for j in range(3) if j != i]
        eps[:, i, i] = psi_u[:, i, i] + sum(
            curv[:, i, j] * u[:, j] for j in others)
    for i in range(3):
        for j in range(i + 1, 3):
            val = 0.5 * (psi_u[:, i, j] + psi_u[:, j, i]
                         - curv[:, j, i] * u[:, j]
                         - curv[:, i, j] * u[:, i])
            eps[:, i, j] = val
            eps[:, j, i] = val
    return eps[0] if scalar else eps
