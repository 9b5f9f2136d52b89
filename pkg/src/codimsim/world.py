"""Mesh and state containers for mixed-codimension scenes.

A SimMesh stores the element lists of every codimension (particles, rod
edges, shell triangles, tets) together with rest data, per-element material
coefficients and the collision primitive sets with their thickness offsets.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MaterialParams:
    density: float
    youngs: float = 0.0
    poisson: float = 0.0
    thickness: float = 0.0  # shells: xi^t; rods/particles: radius
    bending_youngs: float = None
    model: str = "stvk"  # membrane model for shells

    def __post_init__(self):
        if self.density <= 0.0:
            raise ValueError("density must be positive")
        if not 0.0 <= self.poisson < 0.5:
            raise ValueError("poisson ratio must lie in [0, 0.5)")
        if self.bending_youngs is None:
            self.bending_youngs = self.youngs

    @property
    def lame(self):
        """Plane-stress 2D Lame parameters (mu, lam)."""
        mu = self.youngs / (2.0 * (1.0 + self.poisson))
        lam = self.youngs * self.poisson / (1.0 - self.poisson**2)
        return mu, lam

    @property
    def lame_3d(self):
        mu = self.youngs / (2.0 * (1.0 + self.poisson))
        lam = (
            self.youngs
            * self.poisson
            / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson))
        )
        return mu, lam

    @property
    def bending_stiffness(self):
        """Plate-scaling hinge constant: E xi^3 / (24 (1 - nu^2))."""
        return (
            self.bending_youngs
            * self.thickness**3
            / (24.0 * (1.0 - self.poisson**2))
        )


def _empty(shape, dtype=np.float64):
    return np.zeros(shape, dtype=dtype)


@dataclass
class SimMesh:
    """Element lists per codimension with rest data and contact offsets."""

    rest: np.ndarray  # (n, 3) rest positions

    # codim-3: particles (single nodes)
    particles: np.ndarray = field(default_factory=lambda: _empty(0, np.int64))
    particle_volume: np.ndarray = field(default_factory=lambda: _empty(0))
    particle_density: np.ndarray = field(default_factory=lambda: _empty(0))

    # codim-2: rod segments
    rod_edges: np.ndarray = field(default_factory=lambda: _empty((0, 2), np.int64))
    rod_rest_len: np.ndarray = field(default_factory=lambda: _empty(0))
    rod_ks: np.ndarray = field(default_factory=lambda: _empty(0))  # E*pi*r^2
    rod_volume: np.ndarray = field(default_factory=lambda: _empty(0))
    rod_density: np.ndarray = field(default_factory=lambda: _empty(0))

    # codim-1: shell triangles
    triangles: np.ndarray = field(default_factory=lambda: _empty((0, 3), np.int64))
    tri_rest_inv: np.ndarray = field(default_factory=lambda: _empty((0, 2, 2)))
    tri_area: np.ndarray = field(default_factory=lambda: _empty(0))
    tri_thickness: np.ndarray = field(default_factory=lambda: _empty(0))
    tri_density: np.ndarray = field(default_factory=lambda: _empty(0))
    tri_mu: np.ndarray = field(default_factory=lambda: _empty(0))
    tri_lam: np.ndarray = field(default_factory=lambda: _empty(0))
    tri_model: np.ndarray = field(default_factory=lambda: _empty(0, np.int64))
    tri_strain_limited: np.ndarray = field(default_factory=lambda: _empty(0, bool))

    # bending hinges: nodes (e0, e1, opp_a, opp_b)
    hinges: np.ndarray = field(default_factory=lambda: _empty((0, 4), np.int64))
    hinge_rest_angle: np.ndarray = field(default_factory=lambda: _empty(0))
    hinge_stiffness: np.ndarray = field(default_factory=lambda: _empty(0))

    # codim-0: tets
    tets: np.ndarray = field(default_factory=lambda: _empty((0, 4), np.int64))
    tet_rest_inv: np.ndarray = field(default_factory=lambda: _empty((0, 3, 3)))
    tet_volume: np.ndarray = field(default_factory=lambda: _empty(0))
    tet_density: np.ndarray = field(default_factory=lambda: _empty(0))
    tet_mu: np.ndarray = field(default_factory=lambda: _empty(0))
    tet_lam: np.ndarray = field(default_factory=lambda: _empty(0))

    # collision primitives with per-primitive thickness offsets xi_i
    col_points: np.ndarray = field(default_factory=lambda: _empty(0, np.int64))
    col_point_xi: np.ndarray = field(default_factory=lambda: _empty(0))
    col_edges: np.ndarray = field(default_factory=lambda: _empty((0, 2), np.int64))
    col_edge_xi: np.ndarray = field(default_factory=lambda: _empty(0))
    col_tris: np.ndarray = field(default_factory=lambda: _empty((0, 3), np.int64))
    col_tri_xi: np.ndarray = field(default_factory=lambda: _empty(0))
    # points eligible for point-edge pairs (rod nodes and particles)
    pe_points: np.ndarray = field(default_factory=lambda: _empty(0, np.int64))
    pe_point_xi: np.ndarray = field(default_factory=lambda: _empty(0))

    @property
    def n_nodes(self):
        return self.rest.shape[0]


@dataclass
class WorldState:
    """Nodal kinematic state plus constraint bookkeeping."""

    x: np.ndarray  # (n, 3)
    v: np.ndarray  # (n, 3)
    mass: np.ndarray  # (n,)
    kinematic: np.ndarray  # (n,) bool; True nodes follow scripts exactly
    time: float = 0.0

    def copy(self):
        return WorldState(
            self.x.copy(), self.v.copy(), self.mass.copy(),
            self.kinematic.copy(), self.time,
        )


MODEL_IDS = {"stvk": 0, "neohookean": 1, "orthotropic": 2}


def triangle_areas(positions, tris):
    x = np.asarray(positions, dtype=np.float64)
    e1 = x[tris[:, 1]] - x[tris[:, 0]]
    e2 = x[tris[:, 2]] - x[tris[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def tet_volumes(positions, tets):
    x = np.asarray(positions, dtype=np.float64)
    d1 = x[tets[:, 1]] - x[tets[:, 0]]
    d2 = x[tets[:, 2]] - x[tets[:, 0]]
    d3 = x[tets[:, 3]] - x[tets[:, 0]]
    return np.einsum("ij,ij->i", np.cross(d1, d2), d3) / 6.0


def unique_edges(tris):
    """Undirected unique edges of a triangle set."""
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def boundary_faces(tets):
    """Outward-ordered boundary triangles of a tet mesh."""
    faces = np.concatenate(
        [
            tets[:, [0, 2, 1]],
            tets[:, [0, 1, 3]],
            tets[:, [0, 3, 2]],
            tets[:, [1, 2, 3]],
        ]
    )
    key = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(
        key, axis=0, return_inverse=True, return_counts=True
    )
    return faces[counts[inverse] == 1]


def hinges_from_triangles(tris):
    """Interior edges with their two opposite vertices: rows (e0, e1, a, b)."""
    edge_map = {}
    for t_idx, (i, j, k) in enumerate(np.asarray(tris)):
        for e0, e1, opp in ((i, j, k), (j, k, i), (k, i, j)):
            key = (min(e0, e1), max(e0, e1))
            edge_map.setdefault(key, []).append(int(opp))
    rows = []
    for (e0, e1), opps in sorted(edge_map.items()):
        if len(opps) == 2:
            rows.append((e0, e1, opps[0], opps[1]))
    if not rows:
        return np.zeros((0, 4), dtype=np.int64)
    return np.array(rows, dtype=np.int64)
