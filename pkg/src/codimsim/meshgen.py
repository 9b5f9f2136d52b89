"""Procedural meshes for scenes, demos and tests."""

import numpy as np


def grid_cloth(nx, ny=None, size=1.0):
    """Regular triangulated grid in the XZ plane, centered at the origin.

    nx, ny count nodes per side. Returns (positions (n,3), triangles (m,3)).
    """
    ny = nx if ny is None else ny
    xs = np.linspace(-0.5 * size, 0.5 * size, nx)
    zs = np.linspace(-0.5 * size, 0.5 * size, ny)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    verts = np.column_stack([gx.ravel(), np.zeros(nx * ny), gz.ravel()])
    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            c = (i + 1) * ny + j + 1
            d = i * ny + j + 1
            if (i + j) % 2 == 0:  # alternate the diagonal
                tris.append([a, b, c])
                tris.append([a, c, d])
            else:
                tris.append([a, b, d])
                tris.append([b, c, d])
    return verts, np.array(tris, dtype=np.int64)


def icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron. Returns (positions, triangles)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []
        vlist = [v for v in verts]

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key in cache:
                return cache[key]
            m = vlist[i] + vlist[j]
            m /= np.linalg.norm(m)
            vlist.append(m)
            cache[key] = len(vlist) - 1
            return cache[key]

        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.int64)
    verts = verts * radius + np.asarray(center, dtype=np.float64)
    return verts, faces


def rod_line(n_nodes, length=1.0, origin=(0.0, 0.0, 0.0), direction=(1.0, 0.0, 0.0)):
    """Straight polyline of n_nodes. Returns (positions, edges)."""
    d = np.asarray(direction, dtype=np.float64)
    d /= np.linalg.norm(d)
    ts = np.linspace(0.0, length, n_nodes)
    verts = np.asarray(origin, dtype=np.float64)[None, :] + ts[:, None] * d[None, :]
    edges = np.column_stack([np.arange(n_nodes - 1), np.arange(1, n_nodes)])
    return verts, edges.astype(np.int64)


def particle_grid(nx, ny, nz, spacing, origin=(0.0, 0.0, 0.0)):
    xs = np.arange(nx) * spacing
    ys = np.arange(ny) * spacing
    zs = np.arange(nz) * spacing
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()]) + np.asarray(
        origin, dtype=np.float64
    )


def box_tets(nx, ny, nz, size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Lattice of cells split into 6 positively oriented tets each.

    nx, ny, nz count cells. Returns (positions, tets).
    """
    sx, sy, sz = size
    xs = np.linspace(0, sx, nx + 1)
    ys = np.linspace(0, sy, ny + 1)
    zs = np.linspace(0, sz, nz + 1)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()]) + np.asarray(
        origin, dtype=np.float64
    )

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    # 6-tet decomposition of the unit cube (all share the main diagonal).
    corner_tets = [
        (0, 1, 3, 7), (0, 3, 2, 7), (0, 2, 6, 7),
        (0, 6, 4, 7), (0, 4, 5, 7), (0, 5, 1, 7),
    ]
    corners = [
        (0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0),
        (0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1),
    ]
    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                ids = [vid(i + c[0], j + c[1], k + c[2]) for c in corners]
                for t in corner_tets:
                    tets.append([ids[t[0]], ids[t[1]], ids[t[2]], ids[t[3]]])
    tets = np.array(tets, dtype=np.int64)
    # Fix orientation so all signed volumes are positive.
    d1 = verts[tets[:, 1]] - verts[tets[:, 0]]
    d2 = verts[tets[:, 2]] - verts[tets[:, 0]]
    d3 = verts[tets[:, 3]] - verts[tets[:, 0]]
    vol = np.einsum("ij,ij->i", np.cross(d1, d2), d3)
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    return verts, tets
