"""Scene loading, validation and the simulation driver.

A scene is a JSON document: global solver/contact settings plus an object
array. Each object references a mesh file (OBJ for shells/rods/particles, the
`.tet` format for volumes), a material, a contact offset and optional
kinematic scripting. Loading assembles the mixed-codimension mesh, lumps
masses and rejects configurations that violate the offset feasibility
precondition.
"""

import json
import os
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import meshio
from .accd import accd_query_stats, load_corpus
from .barrier import BarrierParams
from .broadphase import candidate_pairs
from .ccd_oracle import verify_query
from .distance import batch_pair_d2
from .elasticity import hinge_rest_geometry, lump_mass_and_volume
from .solver import StepConfig, System, friction_outer_loop
from .strain_limit import StrainLimitParams, triangle_rest_inverse
from .world import (
    MODEL_IDS,
    MaterialParams,
    SimMesh,
    WorldState,
    boundary_faces,
    hinges_from_triangles,
    tet_volumes,
    triangle_areas,
    unique_edges,
)


class SceneError(Exception):
    """Scene rejection with a machine-readable kind: parse|missing|infeasible."""

    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


@dataclass
class Scene:
    system: System
    world: WorldState
    config: StepConfig
    frames: int
    out_dir: str
    on_unconverged: str
    deterministic: bool
    export: dict
    raw: dict
    node_ranges: dict = field(default_factory=dict)


def _rotation_matrix(euler_deg):
    rx, ry, rz = np.deg2rad(np.asarray(euler_deg, dtype=np.float64))
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def _transform(verts, spec):
    v = verts * float(spec.get("scale", 1.0))
    if "rotate_deg" in spec:
        v = v @ _rotation_matrix(spec["rotate_deg"]).T
    v = v + np.asarray(spec.get("translate", [0.0, 0.0, 0.0]), dtype=np.float64)
    return v


def _load_mesh_file(path):
    if not os.path.exists(path):
        raise SceneError("missing", f"mesh file not found: {path}")
    if path.endswith(".tet"):
        verts, tets = meshio.read_tet(path)
        return verts, None, None, None, tets
    verts, tris, edges, points = meshio.read_obj(path)
    return verts, tris, edges, points, None


def _material(spec):
    try:
        return MaterialParams(
            density=float(spec["density"]),
            youngs=float(spec.get("youngs", 0.0)),
            poisson=float(spec.get("poisson", 0.0)),
            thickness=float(spec.get("thickness", 0.0)),
            bending_youngs=spec.get("bending_youngs"),
            model=spec.get("model", "stvk"),
        )
    except KeyError as exc:
        raise SceneError("parse", f"material missing key {exc}") from exc


def load_scene(path):
    """Parse, assemble and validate a scene file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise SceneError("missing", f"scene file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SceneError("parse", f"scene parse error: {exc}") from exc

    base_dir = os.path.dirname(os.path.abspath(path))
    objects = raw.get("objects", [])
    if not objects:
        raise SceneError("parse", "scene has no objects")

    nodes = []
    node_base = 0
    node_ranges = {}

    particles, particle_vol, particle_rho = [], [], []
    rod_edges, rod_len, rod_ks, rod_vol, rod_rho = [], [], [], [], []
    tris, tri_ri, tri_area, tri_thick, tri_rho = [], [], [], [], []
    tri_mu, tri_lam, tri_model, tri_sl = [], [], [], []
    hinge_rows, hinge_angle, hinge_k = [], [], []
    tets, tet_ri, tet_vol, tet_rho, tet_mu, tet_lam = [], [], [], [], [], []
    col_pts, col_pt_xi = [], []
    col_edges, col_edge_xi = [], []
    col_tris, col_tri_xi = [], []
    pe_pts, pe_pt_xi = [], []
    kin_nodes = []
    velocities = []
    scripts = []  # (node slice, velocity)
    export = {"tris": [], "edges": [], "points": []}

    sl_spec = raw.get("strain_limit")

    for idx, obj in enumerate(objects):
        name = obj.get("name", f"object{idx}")
        mesh_path = obj.get("mesh")
        if mesh_path is None:
            raise SceneError("parse", f"{name}: missing mesh path")
        mesh_path = os.path.join(base_dir, mesh_path)
        verts, f_tris, f_edges, f_points, f_tets = _load_mesh_file(mesh_path)
        verts = _transform(verts, obj)
        codim = obj.get("codimension")
        if codim is None:
            if f_tets is not None:
                codim = 0
            elif f_tris is not None and len(f_tris):
                codim = 1
            elif f_edges is not None and len(f_edges):
                codim = 2
            else:
                codim = 3
        mat = _material(obj.get("material", {"density": 1000.0}))
        xi = float(obj.get("offset", 0.0))
        kinematic = bool(obj.get("kinematic", False))

        n_local = len(verts)
        sl_here = bool(sl_spec) and obj.get("strain_limit", True) and codim == 1

        base = node_base
        nodes.append(verts)
        node_ranges[name] = (base, base + n_local)
        node_base += n_local

        vel = np.asarray(obj.get("velocity", [0.0, 0.0, 0.0]), dtype=np.float64)
        velocities.append(np.tile(vel, (n_local, 1)))

        if kinematic:
            kin_nodes.extend(range(base, base + n_local))
            script = obj.get("script")
            if script:
                if script.get("type") != "linear":
                    raise SceneError("parse", f"{name}: unknown script type")
                svel = np.asarray(script["velocity"], dtype=np.float64)
                scripts.append(((base, base + n_local), svel))
        for p in obj.get("pinned_nodes", []):
            if not 0 <= int(p) < n_local:
                raise SceneError("parse", f"{name}: pinned node {p} out of range")
            kin_nodes.append(base + int(p))

        if codim == 0:
            if f_tets is None or not len(f_tets):
                raise SceneError("parse", f"{name}: volume object needs tets")
            t = f_tets + base
            dm = np.stack(
                [verts[f_tets[:, 1]] - verts[f_tets[:, 0]],
                 verts[f_tets[:, 2]] - verts[f_tets[:, 0]],
                 verts[f_tets[:, 3]] - verts[f_tets[:, 0]]], axis=2,
            )
            vols = tet_volumes(verts, f_tets)
            if np.any(vols <= 0.0):
                raise SceneError("parse", f"{name}: non-positive tet volume")
            mu, lam = mat.lame_3d
            tets.append(t)
            tet_ri.append(np.linalg.inv(dm))
            tet_vol.append(vols)
            tet_rho.append(np.full(len(t), mat.density))
            tet_mu.append(np.full(len(t), mu))
            tet_lam.append(np.full(len(t), lam))
            bf_local = boundary_faces(f_tets)
            bf = bf_local + base
            col_tris.append(bf)
            col_tri_xi.append(np.full(len(bf), xi))
            be = unique_edges(bf_local) + base
            col_edges.append(be)
            col_edge_xi.append(np.full(len(be), xi))
            bp = np.unique(bf_local) + base
            col_pts.append(bp)
            col_pt_xi.append(np.full(len(bp), xi))
            export["tris"].append(bf)
        elif codim == 1:
            if f_tris is None or not len(f_tris):
                raise SceneError("parse", f"{name}: shell object needs faces")
            t = f_tris + base
            try:
                ri = np.stack([
                    triangle_rest_inverse(verts[a], verts[b], verts[c])
                    for a, b, c in f_tris
                ])
            except ValueError as exc:
                raise SceneError("parse", f"{name}: {exc}") from exc
            areas = triangle_areas(verts, f_tris)
            mu, lam = mat.lame
            tris.append(t)
            tri_ri.append(ri)
            tri_area.append(areas)
            tri_thick.append(np.full(len(t), mat.thickness))
            tri_rho.append(np.full(len(t), mat.density))
            tri_mu.append(np.full(len(t), mu))
            tri_lam.append(np.full(len(t), lam))
            tri_model.append(np.full(len(t), MODEL_IDS[mat.model]))
            tri_sl.append(np.full(len(t), sl_here))
            hl = hinges_from_triangles(f_tris)
            if len(hl):
                angles, ratios = hinge_rest_geometry(verts, hl)
                hinge_rows.append(hl + base)
                hinge_angle.append(angles)
                hinge_k.append(mat.bending_stiffness * ratios)
            col_tris.append(t)
            col_tri_xi.append(np.full(len(t), xi))
            ed = unique_edges(f_tris) + base
            col_edges.append(ed)
            col_edge_xi.append(np.full(len(ed), xi))
            pts = np.arange(base, base + n_local)
            col_pts.append(pts)
            col_pt_xi.append(np.full(n_local, xi))
            export["tris"].append(t)
        elif codim == 2:
            if f_edges is None or not len(f_edges):
                raise SceneError("parse", f"{name}: rod object needs l records")
            radius = float(obj.get("radius", mat.thickness))
            if radius <= 0.0:
                raise SceneError("parse", f"{name}: rod needs a positive radius")
            e = f_edges + base
            lens = np.linalg.norm(
                verts[f_edges[:, 1]] - verts[f_edges[:, 0]], axis=1
            )
            if np.any(lens <= 0.0):
                raise SceneError("parse", f"{name}: zero-length rod segment")
            area = np.pi * radius**2
            rod_edges.append(e)
            rod_len.append(lens)
            rod_ks.append(np.full(len(e), mat.youngs * area))
            rod_vol.append(lens * area)
            rod_rho.append(np.full(len(e), mat.density))
            col_edges.append(e)
            col_edge_xi.append(np.full(len(e), xi))
            pts = np.arange(base, base + n_local)
            col_pts.append(pts)
            col_pt_xi.append(np.full(n_local, xi))
            pe_pts.append(pts)
            pe_pt_xi.append(np.full(n_local, xi))
            export["edges"].append(e)
        else:
            radius = float(obj.get("radius", mat.thickness))
            if radius <= 0.0:
                raise SceneError("parse", f"{name}: particle needs a radius")
            pts = np.arange(base, base + n_local)
            particles.append(pts)
            particle_vol.append(np.full(n_local, 4.0 / 3.0 * np.pi * radius**3))
            particle_rho.append(np.full(n_local, mat.density))
            col_pts.append(pts)
            col_pt_xi.append(np.full(n_local, xi))
            pe_pts.append(pts)
            pe_pt_xi.append(np.full(n_local, xi))
            export["points"].append(pts)

    rest = np.concatenate(nodes) if nodes else np.zeros((0, 3))
    mesh = SimMesh(rest=rest)

    def cat(parts, shape, dtype=np.float64):
        if parts:
            return np.concatenate(parts).astype(dtype)
        return np.zeros(shape, dtype=dtype)

    mesh.particles = cat(particles, 0, np.int64)
    mesh.particle_volume = cat(particle_vol, 0)
    mesh.particle_density = cat(particle_rho, 0)
    mesh.rod_edges = cat(rod_edges, (0, 2), np.int64).reshape(-1, 2)
    mesh.rod_rest_len = cat(rod_len, 0)
    mesh.rod_ks = cat(rod_ks, 0)
    mesh.rod_volume = cat(rod_vol, 0)
    mesh.rod_density = cat(rod_rho, 0)
    mesh.triangles = cat(tris, (0, 3), np.int64).reshape(-1, 3)
    mesh.tri_rest_inv = (
        np.concatenate(tri_ri) if tri_ri else np.zeros((0, 2, 2))
    )
    mesh.tri_area = cat(tri_area, 0)
    mesh.tri_thickness = cat(tri_thick, 0)
    mesh.tri_density = cat(tri_rho, 0)
    mesh.tri_mu = cat(tri_mu, 0)
    mesh.tri_lam = cat(tri_lam, 0)
    mesh.tri_model = cat(tri_model, 0, np.int64)
    mesh.tri_strain_limited = cat(tri_sl, 0, bool)
    mesh.hinges = cat(hinge_rows, (0, 4), np.int64).reshape(-1, 4)
    mesh.hinge_rest_angle = cat(hinge_angle, 0)
    mesh.hinge_stiffness = cat(hinge_k, 0)
    mesh.tets = cat(tets, (0, 4), np.int64).reshape(-1, 4)
    mesh.tet_rest_inv = (
        np.concatenate(tet_ri) if tet_ri else np.zeros((0, 3, 3))
    )
    mesh.tet_volume = cat(tet_vol, 0)
    mesh.tet_density = cat(tet_rho, 0)
    mesh.tet_mu = cat(tet_mu, 0)
    mesh.tet_lam = cat(tet_lam, 0)
    mesh.col_points = cat(col_pts, 0, np.int64)
    mesh.col_point_xi = cat(col_pt_xi, 0)
    mesh.col_edges = cat(col_edges, (0, 2), np.int64).reshape(-1, 2)
    mesh.col_edge_xi = cat(col_edge_xi, 0)
    mesh.col_tris = cat(col_tris, (0, 3), np.int64).reshape(-1, 3)
    mesh.col_tri_xi = cat(col_tri_xi, 0)
    mesh.pe_points = cat(pe_pts, 0, np.int64)
    mesh.pe_point_xi = cat(pe_pt_xi, 0)

    mass, _ = lump_mass_and_volume(mesh)
    kinematic = np.zeros(len(rest), dtype=bool)
    kinematic[np.array(kin_nodes, dtype=np.int64)] = True if kin_nodes else False
    if np.any(~kinematic & (mass <= 0.0)):
        raise SceneError("parse", "free nodes with non-positive mass")

    velocity = (
        np.concatenate(velocities) if velocities else np.zeros_like(rest)
    )
    velocity[kinematic] = 0.0
    world = WorldState(rest.copy(), velocity, mass, kinematic)

    # Global parameters.
    dhat = float(raw.get("dhat", 1e-3))
    accd = raw.get("accd", {})
    barrier_params = BarrierParams(
        dhat=dhat, kappa=1.0, s_conservative=float(accd.get("s", 0.1))
    )
    sl_params = None
    if sl_spec:
        sl_params = StrainLimitParams(
            s=float(sl_spec["s"]), shat=float(sl_spec.get("shat", 1.0))
        )
    system = System(mesh, barrier_params, sl_params)

    if scripts:
        base_positions = rest.copy()

        def targets(t):
            out = base_positions.copy()
            for (lo, hi), svel in scripts:
                out[lo:hi] += t * svel
            return out

        system.kinematic_targets = targets

    friction = raw.get("friction", {})
    newton = raw.get("newton", {})
    cfg = StepConfig(
        h=float(raw.get("h", 0.01)),
        newton_tol=float(newton.get("tol", 1e-2)),
        max_newton=int(newton.get("max_iterations", 100)),
        gravity=np.asarray(raw.get("gravity", [0.0, -9.81, 0.0]), np.float64),
        mu=float(friction.get("mu", 0.0)),
        epsv=float(friction.get("epsv", 1e-3)),
        friction_iterations=int(friction.get("iterations", 1)),
        accd_s=float(accd.get("s", 0.1)),
    )

    scene = Scene(
        system=system,
        world=world,
        config=cfg,
        frames=int(raw.get("frames", 0)),
        out_dir=raw.get("output", {}).get("dir", "out"),
        on_unconverged=raw.get("on_unconverged", "warn"),
        deterministic=bool(raw.get("deterministic", True)),
        export={k: (np.concatenate(v) if v else np.zeros((0, 3), np.int64))
                for k, v in (("tris", export["tris"]),
                             ("edges", export["edges"]))} |
               {"points": (np.concatenate(export["points"])
                           if export["points"] else np.zeros(0, np.int64))},
        raw=raw,
        node_ranges=node_ranges,
    )

    ok, report = feasibility_audit(system, world.x)
    if not ok:
        raise SceneError("infeasible", f"initial state violates offsets: {report}")
    if sl_params is not None:
        smax = system.max_stretch(world.x)
        if smax >= sl_params.s:
            raise SceneError(
                "infeasible", f"initial stretch {smax} exceeds limit {sl_params.s}"
            )
    return scene


def feasibility_audit(system, x, radius=None):
    """Verify every candidate pair keeps d > xi_k; returns (ok, report)."""
    r = system.barrier.dhat if radius is None else radius
    cands = candidate_pairs(system.mesh, x, r)
    if len(cands) == 0:
        return True, "no candidate pairs"
    d2 = batch_pair_d2(cands.kinds, cands.nodes, np.ascontiguousarray(x))
    gap = np.sqrt(d2) - cands.xi
    bad = np.flatnonzero(gap <= 0.0)
    if len(bad) == 0:
        return True, f"min gap {gap.min():.3e} over {len(cands)} candidates"
    k = bad[np.argmin(gap[bad])]
    names = {0: "PP", 1: "PE", 2: "PT", 3: "EE"}
    return False, (
        f"{names[int(cands.kinds[k])]} pair nodes "
        f"{[int(v) for v in cands.nodes[k] if v >= 0]}: distance "
        f"{np.sqrt(d2[k]):.6e} <= xi_k {cands.xi[k]:.6e}"
    )


def write_frame(scene: Scene, path, x):
    meshio.write_obj(
        path, x, tris=scene.export["tris"], edges=scene.export["edges"],
        points=scene.export["points"],
    )


def run(scene: Scene, frames=None, out_dir=None, progress=False):
    """Step the scene, writing one surface mesh per frame and a stats stream.

    Returns (exit_code, stats_list): 0 on success, 3 when a step fails to
    converge under the abort policy.
    """
    frames = scene.frames if frames is None else frames
    out = scene.out_dir if out_dir is None else out_dir
    os.makedirs(out, exist_ok=True)
    write_frame(scene, os.path.join(out, "frame_0000.obj"), scene.world.x)

    stats_path = os.path.join(out, "stats.jsonl")
    all_stats = []
    world = scene.world
    with open(stats_path, "w") as sf:
        for step in range(frames):
            world, stats = friction_outer_loop(
                world, scene.system, scene.config, step_index=step
            )
            rec = stats.record()
            all_stats.append(rec)
            sf.write(json.dumps(rec) + "\n")
            write_frame(
                scene, os.path.join(out, f"frame_{step + 1:04d}.obj"), world.x
            )
            if progress:
                print(
                    f"step {step + 1}/{frames}: iters={stats.newton_iterations} "
                    f"contacts={stats.contacts} converged={stats.converged}"
                )
            if not stats.converged and scene.on_unconverged == "abort":
                return 3, all_stats
    scene.world = world
    return 0, all_stats


def ccd_bench(corpus_path, nsamples=10_000):
    """Replay a CCD query corpus: ACCD vs the time-sampling oracle."""
    queries = load_corpus(corpus_path)
    results = []
    mismatches = 0
    timings = []
    max_iters = 0
    for q in queries:
        t0 = _time.perf_counter()
        t, iters = accd_query_stats(q)
        timings.append(_time.perf_counter() - t0)
        max_iters = max(max_iters, iters)
        safe, tight, min_gap, first = verify_query(q, t, nsamples)
        ok = safe and tight
        if not ok:
            mismatches += 1
        results.append(
            {"toi": t, "iterations": iters, "safe": bool(safe),
             "tight": bool(tight)}
        )
    timings = np.array(timings)
    report = {
        "queries": len(queries),
        "mismatches": mismatches,
        "max_iterations": max_iters,
        "timing_us": {}
        if not len(timings)
        else {
            "p50": float(np.percentile(timings, 50) * 1e6),
            "p90": float(np.percentile(timings, 90) * 1e6),
            "p99": float(np.percentile(timings, 99) * 1e6),
        },
        "results": results,
    }
    return report
