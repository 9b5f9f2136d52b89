"""Text mesh import/export.

Surface geometry uses Wavefront OBJ with v/f records plus l (polyline) and
p (point) records for rods and particles. Tet meshes use a minimal ASCII
format with `v x y z` and `t i j k l` lines (zero-based indices). Positions
are written with 17 significant digits so round-trips are exact.
"""

import numpy as np

FLOAT_FMT = "{:.17g}"


def write_obj(path, positions, tris=None, edges=None, points=None):
    with open(path, "w") as fh:
        for p in np.asarray(positions, dtype=np.float64):
            fh.write(
                "v "
                + " ".join(FLOAT_FMT.format(c) for c in p)
                + "\n"
            )
        if tris is not None:
            for f in np.asarray(tris, dtype=np.int64):
                fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
        if edges is not None:
            for e in np.asarray(edges, dtype=np.int64):
                fh.write(f"l {e[0] + 1} {e[1] + 1}\n")
        if points is not None:
            for i in np.asarray(points, dtype=np.int64):
                fh.write(f"p {i + 1}\n")


def read_obj(path):
    """Returns (positions, tris, edges, points)."""
    verts = []
    tris = []
    edges = []
    points = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                verts.append([float(v) for v in parts[1:4]])
            elif tag == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan-triangulate
                    tris.append([idx[0], idx[k], idx[k + 1]])
            elif tag == "l":
                idx = [int(p) - 1 for p in parts[1:]]
                for k in range(len(idx) - 1):
                    edges.append([idx[k], idx[k + 1]])
            elif tag == "p":
                points.extend(int(p) - 1 for p in parts[1:])
    verts = np.array(verts, dtype=np.float64).reshape(-1, 3)
    tris = np.array(tris, dtype=np.int64).reshape(-1, 3)
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    points = np.array(points, dtype=np.int64)
    return verts, tris, edges, points


def write_tet(path, positions, tets):
    with open(path, "w") as fh:
        for p in np.asarray(positions, dtype=np.float64):
            fh.write("v " + " ".join(FLOAT_FMT.format(c) for c in p) + "\n")
        for t in np.asarray(tets, dtype=np.int64):
            fh.write(f"t {t[0]} {t[1]} {t[2]} {t[3]}\n")


def read_tet(path):
    verts = []
    tets = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                verts.append([float(v) for v in parts[1:4]])
            elif parts[0] == "t":
                tets.append([int(v) for v in parts[1:5]])
    return (
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(tets, dtype=np.int64).reshape(-1, 4),
    )
