"""Spatial-hash candidate generation with thickness-extended bounding volumes.

Primitive AABBs are inflated by half their thickness offset (plus half the
query radius) before voxel assignment, so pairs within distance dhat + xi_k of
each other always land in a shared voxel neighborhood. Candidate sets are
supersets; the narrow phase applies the exact distance test.
"""

from dataclasses import dataclass

import numpy as np

from .distance import batch_pair_d2


@dataclass
class SpatialHash:
    voxel_size: float
    lo: np.ndarray  # grid origin
    dims: np.ndarray  # cells per axis
    cell_keys: np.ndarray  # sorted packed cell ids
    prim_ids: np.ndarray  # primitive id per (cell, prim) entry

    def query(self, boxes_lo, boxes_hi):
        """(query_idx, prim_id) pairs for every box overlapping a hashed cell."""
        if len(boxes_lo) == 0 or len(self.cell_keys) == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        lo_idx, hi_idx = self._cell_range(boxes_lo, boxes_hi)
        valid = np.all(hi_idx >= lo_idx, axis=1)
        keys, owner = _expand_cells(
            lo_idx[valid], hi_idx[valid], self.dims, np.flatnonzero(valid)
        )
        left = np.searchsorted(self.cell_keys, keys, side="left")
        right = np.searchsorted(self.cell_keys, keys, side="right")
        counts = right - left
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        q_ids = np.repeat(owner, counts)
        starts = np.repeat(left, counts)
        offsets = np.arange(total) - np.repeat(
            np.cumsum(counts) - counts, counts
        )
        p_ids = self.prim_ids[starts + offsets]
        return q_ids, p_ids

    def _cell_range(self, boxes_lo, boxes_hi):
        lo_idx = np.floor((boxes_lo - self.lo) / self.voxel_size).astype(np.int64)
        hi_idx = np.floor((boxes_hi - self.lo) / self.voxel_size).astype(np.int64)
        np.clip(lo_idx, 0, self.dims - 1, out=lo_idx)
        np.clip(hi_idx, -1, self.dims - 1, out=hi_idx)
        # boxes entirely outside the grid produce empty ranges via the clip
        outside = np.any(
            (boxes_hi < self.lo) | (boxes_lo > self.lo + self.dims * self.voxel_size),
            axis=1,
        )
        hi_idx[outside] = lo_idx[outside] - 1
        return lo_idx, hi_idx


def _expand_cells(lo_idx, hi_idx, dims, owner_ids):
    spans = hi_idx - lo_idx + 1
    counts = spans.prod(axis=1)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    owner_rows = np.repeat(np.arange(len(lo_idx)), counts)
    local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    sy = spans[owner_rows, 1]
    sz = spans[owner_rows, 2]
    iz = local % sz
    iy = (local // sz) % sy
    ix = local // (sz * sy)
    cx = lo_idx[owner_rows, 0] + ix
    cy = lo_idx[owner_rows, 1] + iy
    cz = lo_idx[owner_rows, 2] + iz
    keys = (cx * dims[1] + cy) * dims[2] + cz
    return keys, owner_ids[owner_rows]


def build_hash(boxes_lo, boxes_hi, voxel_size=None):
    """Hash a set of AABBs; voxel size defaults to the mean box diagonal."""
    n = len(boxes_lo)
    if n == 0:
        return SpatialHash(1.0, np.zeros(3), np.ones(3, np.int64),
                           np.empty(0, np.int64), np.empty(0, np.int64))
    if voxel_size is None:
        diag = np.linalg.norm(boxes_hi - boxes_lo, axis=1)
        voxel_size = float(diag.mean())
        if voxel_size <= 0.0:
            voxel_size = 1.0
    lo = boxes_lo.min(axis=0)
    hi = boxes_hi.max(axis=0)
    dims = np.maximum(
        np.floor((hi - lo) / voxel_size).astype(np.int64) + 1, 1
    )
    grid = SpatialHash(voxel_size, lo, dims, np.empty(0, np.int64),
                       np.empty(0, np.int64))
    lo_idx, hi_idx = grid._cell_range(boxes_lo, boxes_hi)
    keys, owners = _expand_cells(lo_idx, hi_idx, dims, np.arange(n))
    order = np.argsort(keys, kind="stable")
    grid.cell_keys = keys[order]
    grid.prim_ids = owners[order]
    return grid


def _aabbs(x, prim_nodes, inflate):
    """AABBs of primitives given per-primitive node lists and inflation radii."""
    pts = x[prim_nodes]  # (n, k, 3)
    if pts.ndim == 2:
        pts = pts[:, None, :]
    lo = pts.min(axis=1) - inflate[:, None]
    hi = pts.max(axis=1) + inflate[:, None]
    return lo, hi


def _swept_aabbs(x, dx, prim_nodes, inflate):
    pts0 = x[prim_nodes]
    pts1 = (x + dx)[prim_nodes]
    if pts0.ndim == 2:
        pts0 = pts0[:, None, :]
        pts1 = pts1[:, None, :]
    allpts = np.concatenate([pts0, pts1], axis=1)
    lo = allpts.min(axis=1) - inflate[:, None]
    hi = allpts.max(axis=1) + inflate[:, None]
    return lo, hi


def _overlap_pairs(lo_a, hi_a, ids_a, lo_b, hi_b, ids_b, same_set, voxel_size=None):
    """Deduplicated (a, b) overlap candidates between two AABB sets."""
    if len(lo_a) == 0 or len(lo_b) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    if voxel_size is None:
        diag_a = np.linalg.norm(hi_a - lo_a, axis=1)
        diag_b = np.linalg.norm(hi_b - lo_b, axis=1)
        voxel_size = float(np.concatenate([diag_a, diag_b]).mean()) or 1.0
    grid = build_hash(lo_a, hi_a, voxel_size)
    qa, pb = grid.query(lo_b, hi_b)
    if len(qa) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    a_idx = pb  # hashed set is A
    b_idx = qa
    # Exact AABB overlap check (hash cells over-approximate).
    keep = np.all(
        (lo_a[a_idx] <= hi_b[b_idx]) & (lo_b[b_idx] <= hi_a[a_idx]), axis=1
    )
    a_idx = a_idx[keep]
    b_idx = b_idx[keep]
    if same_set:
        keep = a_idx < b_idx
        a_idx = a_idx[keep]
        b_idx = b_idx[keep]
    if len(a_idx) == 0:
        return a_idx, b_idx
    pair_key = a_idx * (ids_b.max() + 1 if len(ids_b) else 1) + b_idx
    _, unique_pos = np.unique(pair_key, return_index=True)
    return a_idx[unique_pos], b_idx[unique_pos]


def _exclude_shared_nodes(nodes_a, nodes_b):
    """Mask of pairs whose primitives share no node (adjacency exclusion)."""
    na = nodes_a[:, :, None]
    nb = nodes_b[:, None, :]
    return ~np.any(na == nb, axis=(1, 2))


class CandidateSet:
    """Flattened candidate pairs: kind, node quadruple (padded -1), offsets."""

    def __init__(self):
        self.kinds = np.empty(0, np.int64)
        self.nodes = np.empty((0, 4), np.int64)
        self.xi = np.empty(0)

    def __len__(self):
        return len(self.kinds)

    def extend(self, kind, nodes, xi):
        if len(nodes) == 0:
            return
        pad = np.full((len(nodes), 4 - nodes.shape[1]), -1, np.int64)
        nodes = np.concatenate([nodes, pad], axis=1) if pad.shape[1] else nodes
        self.kinds = np.concatenate([self.kinds, np.full(len(nodes), kind)])
        self.nodes = np.concatenate([self.nodes, nodes])
        self.xi = np.concatenate([self.xi, xi])

    def sort(self):
        if len(self.kinds) == 0:
            return self
        order = np.lexsort(
            (self.nodes[:, 3], self.nodes[:, 2], self.nodes[:, 1],
             self.nodes[:, 0], self.kinds)
        )
        self.kinds = self.kinds[order]
        self.nodes = self.nodes[order]
        self.xi = self.xi[order]
        return self


def _primitive_kinematic(kinematic, prim_nodes):
    flags = kinematic[prim_nodes]
    if flags.ndim == 1:
        return flags
    return np.all(flags, axis=1)


def candidate_pairs(mesh, x, radius, dx=None, kinematic=None):
    """Candidate contact pairs within `radius` of each other (superset).

    With dx given, swept boxes along the displacement are used instead
    (CCD broadphase; gaps are the offsets xi_k, radius should then be 0).
    """
    x = np.asarray(x, dtype=np.float64)
    half = 0.5 * radius
    out = CandidateSet()

    def boxes(prim_nodes, xi):
        inflate = 0.5 * xi + half
        if dx is None:
            return _aabbs(x, prim_nodes, inflate)
        return _swept_aabbs(x, dx, prim_nodes, inflate)

    p_nodes = mesh.col_points
    t_nodes = mesh.col_tris
    e_nodes = mesh.col_edges

    kin_p = kin_e = kin_t = None
    if kinematic is not None:
        kin_p = _primitive_kinematic(kinematic, p_nodes) if len(p_nodes) else None
        kin_e = _primitive_kinematic(kinematic, e_nodes) if len(e_nodes) else None
        kin_t = _primitive_kinematic(kinematic, t_nodes) if len(t_nodes) else None

    # Point-triangle.
    if len(p_nodes) and len(t_nodes):
        lo_p, hi_p = boxes(p_nodes, mesh.col_point_xi)
        lo_t, hi_t = boxes(t_nodes, mesh.col_tri_xi)
        ip, it = _overlap_pairs(
            lo_p, hi_p, np.arange(len(p_nodes)), lo_t, hi_t,
            np.arange(len(t_nodes)), same_set=False,
        )
        if len(ip):
            keep = _exclude_shared_nodes(
                p_nodes[ip][:, None], t_nodes[it]
            )
            if kin_p is not None:
                keep &= ~(kin_p[ip] & kin_t[it])
            ip, it = ip[keep], it[keep]
            nodes = np.concatenate([p_nodes[ip][:, None], t_nodes[it]], axis=1)
            xi_k = 0.5 * (mesh.col_point_xi[ip] + mesh.col_tri_xi[it])
            out.extend(2, nodes, xi_k)

    # Edge-edge.
    if len(e_nodes):
        lo_e, hi_e = boxes(e_nodes, mesh.col_edge_xi)
        ia, ib = _overlap_pairs(
            lo_e, hi_e, np.arange(len(e_nodes)), lo_e, hi_e,
            np.arange(len(e_nodes)), same_set=True,
        )
        if len(ia):
            keep = _exclude_shared_nodes(e_nodes[ia], e_nodes[ib])
            if kin_e is not None:
                keep &= ~(kin_e[ia] & kin_e[ib])
            ia, ib = ia[keep], ib[keep]
            nodes = np.concatenate([e_nodes[ia], e_nodes[ib]], axis=1)
            xi_k = 0.5 * (mesh.col_edge_xi[ia] + mesh.col_edge_xi[ib])
            out.extend(3, nodes, xi_k)

    # Point-edge (rod nodes and particles against rod edges).
    pe_pts = mesh.pe_points
    rod_e = mesh.rod_edges
    if len(pe_pts) and len(rod_e):
        rod_xi = _rod_edge_xi(mesh)
        lo_p, hi_p = boxes(pe_pts, mesh.pe_point_xi)
        lo_e, hi_e = boxes(rod_e, rod_xi)
        ip, ie = _overlap_pairs(
            lo_p, hi_p, np.arange(len(pe_pts)), lo_e, hi_e,
            np.arange(len(rod_e)), same_set=False,
        )
        if len(ip):
            keep = _exclude_shared_nodes(pe_pts[ip][:, None], rod_e[ie])
            if kinematic is not None:
                kin_pp = _primitive_kinematic(kinematic, pe_pts)
                kin_re = _primitive_kinematic(kinematic, rod_e)
                keep &= ~(kin_pp[ip] & kin_re[ie])
            ip, ie = ip[keep], ie[keep]
            nodes = np.concatenate([pe_pts[ip][:, None], rod_e[ie]], axis=1)
            xi_k = 0.5 * (mesh.pe_point_xi[ip] + rod_xi[ie])
            out.extend(1, nodes, xi_k)

    # Point-point between particles.
    parts = mesh.particles
    if len(parts) > 1:
        part_xi = _particle_xi(mesh)
        lo_p, hi_p = boxes(parts, part_xi)
        ia, ib = _overlap_pairs(
            lo_p, hi_p, np.arange(len(parts)), lo_p, hi_p,
            np.arange(len(parts)), same_set=True,
        )
        if len(ia):
            if kinematic is not None:
                kin_pp = kinematic[parts]
                keep = ~(kin_pp[ia] & kin_pp[ib])
                ia, ib = ia[keep], ib[keep]
            nodes = np.stack([parts[ia], parts[ib]], axis=1)
            xi_k = 0.5 * (part_xi[ia] + part_xi[ib])
            out.extend(0, nodes, xi_k)

    return out.sort()


def _rod_edge_xi(mesh):
    """Offsets of rod edges looked up from the collision edge table (cached)."""
    cached = getattr(mesh, "_rod_edge_xi_cache", None)
    if cached is not None:
        return cached
    if not len(mesh.rod_edges):
        out = np.empty(0)
    else:
        key = {tuple(sorted(e)): xi
               for e, xi in zip(mesh.col_edges.tolist(), mesh.col_edge_xi)}
        out = np.array([key.get(tuple(sorted(e)), 0.0)
                        for e in mesh.rod_edges.tolist()])
    mesh._rod_edge_xi_cache = out
    return out


def _particle_xi(mesh):
    cached = getattr(mesh, "_particle_xi_cache", None)
    if cached is not None:
        return cached
    if not len(mesh.particles):
        out = np.empty(0)
    else:
        key = {int(p): xi for p, xi in zip(mesh.col_points, mesh.col_point_xi)}
        out = np.array([key.get(int(p), 0.0) for p in mesh.particles])
    mesh._particle_xi_cache = out
    return out


def build_proximity_hash(positions, mesh, dhat):
    """Spatial hash over all collision primitives at query radius dhat."""
    x = np.asarray(positions, dtype=np.float64)
    boxes = []
    half = 0.5 * dhat
    if len(mesh.col_points):
        boxes.append(_aabbs(x, mesh.col_points, 0.5 * mesh.col_point_xi + half))
    if len(mesh.col_edges):
        boxes.append(_aabbs(x, mesh.col_edges, 0.5 * mesh.col_edge_xi + half))
    if len(mesh.col_tris):
        boxes.append(_aabbs(x, mesh.col_tris, 0.5 * mesh.col_tri_xi + half))
    if not boxes:
        return build_hash(np.empty((0, 3)), np.empty((0, 3)))
    lo = np.concatenate([b[0] for b in boxes])
    hi = np.concatenate([b[1] for b in boxes])
    return build_hash(lo, hi)


def candidate_pairs_proximity(mesh, x, dhat, kinematic=None):
    """Pairs possibly within d < dhat + xi_k (superset contract)."""
    return candidate_pairs(mesh, x, dhat, dx=None, kinematic=kinematic)


def candidate_pairs_ccd(mesh, x, dx, kinematic=None, margin=0.0):
    """Swept candidates whose gap can reach xi_k along the linear trajectory."""
    return candidate_pairs(mesh, x, margin, dx=dx, kinematic=kinematic)


def narrow_phase_filter(candidates: CandidateSet, x, dhat):
    """Keep candidates with exact distance d < dhat + xi_k."""
    if len(candidates) == 0:
        return candidates
    d2 = batch_pair_d2(candidates.kinds, candidates.nodes,
                       np.ascontiguousarray(x, dtype=np.float64))
    keep = d2 < (dhat + candidates.xi) ** 2
    out = CandidateSet()
    out.kinds = candidates.kinds[keep]
    out.nodes = candidates.nodes[keep]
    out.xi = candidates.xi[keep]
    return out
