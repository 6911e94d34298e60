"""Legacy ASCII VTK export of temperature/displacement fields.

Points are embedded into cartesian space through the frame mapping, so
shell runs render with their physical curvature.
"""

import numpy as np

VTK_TET = 10


def write_vtk(path, mesh, frame, T=None, u=None, title="homshell fields"):
    pts = frame.map_to_cartesian(mesh.nodes)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(title[:255] + "\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_nodes} double\n")
        np.savetxt(f, pts, fmt="%.17g")
        f.write(f"CELLS {mesh.n_elems} {5 * mesh.n_elems}\n")
        cells = np.column_stack([np.full(mesh.n_elems, 4, dtype=np.int64),
                                 mesh.tets])
        np.savetxt(f, cells, fmt="%d")
        f.write(f"CELL_TYPES {mesh.n_elems}\n")
        np.savetxt(f, np.full(mesh.n_elems, VTK_TET, dtype=np.int64),
                   fmt="%d")
        if T is None and u is None:
            return
        f.write(f"POINT_DATA {mesh.n_nodes}\n")
        if T is not None:
            f.write("SCALARS temperature double\n")
            f.write("LOOKUP_TABLE default\n")
            np.savetxt(f, np.asarray(T, dtype=float), fmt="%.17g")
        if u is not None:
            f.write("VECTORS displacement double\n")
            np.savetxt(f, np.asarray(u, dtype=float).reshape(-1, 3),
                       fmt="%.17g")
