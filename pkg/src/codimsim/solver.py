"""Implicit-Euler time stepping by projected-Newton minimization.

Each step minimizes the incremental potential

    E(x) = 1/2 ||x - xhat||^2_M + h^2 (Psi(x) + Psi_SL(x)) + B(x) + h^2 D(x)

with the line search capped by the conservative-advancement CCD step and
halved on energy increase or strain-limit violation, so every accepted
iterate keeps all pair distances above their offsets and all stretches below
the limit.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import strain_limit as _sl
from .accd import SOLVER_ITERATION_CAP, max_step_indexed
from .barrier import (
    BarrierParams,
    ContactStiffness,
    batch_contact_energy,
    batch_contact_grad_hess,
)
from .broadphase import candidate_pairs_ccd, candidate_pairs_proximity
from .elasticity import (
    _green_strain,
    _neohookean_st,
    _orthotropic_st,
    _stvk_st,
    bending_batch,
    bending_energy_only,
    corotated_batch,
    membrane_batch,
    membrane_jacobian,
    rod_stretch_batch,
    tet_deformation_gradients,
    tet_w_map,
)
from .friction import LaggedContacts, build_lagged_contacts, friction_energy, \
    friction_grad_hess
from .strain_limit import StrainLimitStiffness
from .world import MODEL_IDS, SimMesh, WorldState


@dataclass
class StepConfig:
    h: float
    newton_tol: float = 1e-2
    max_newton: int = 100
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81, 0.0]))
    mu: float = 0.0
    epsv: float = 1e-3
    friction_iterations: int = 1
    accd_s: float = 0.1
    max_line_search: int = 60
    alpha_floor: float = 1e-14

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError("time step h must be positive")
        if self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        self.gravity = np.asarray(self.gravity, dtype=np.float64)


class LineSearchUnderflow(RuntimeError):
    """Step length collapsed below the floor; indicates a feasibility bug."""


@dataclass
class StepStats:
    step: int = 0
    newton_iterations: int = 0
    contacts: int = 0
    min_gap: float = np.inf
    max_sigma: float = 0.0
    energy_trace: list = field(default_factory=list)
    kappa: float = 0.0
    kappa_s: float = 0.0
    converged: bool = True
    alpha_history: list = field(default_factory=list)

    def record(self):
        return {
            "step": self.step,
            "newton_iterations": self.newton_iterations,
            "contacts": self.contacts,
            "min_gap": None if np.isinf(self.min_gap) else self.min_gap,
            "max_sigma": self.max_sigma,
            "energy_trace": self.energy_trace,
            "kappa": self.kappa,
            "kappa_s": self.kappa_s,
            "converged": self.converged,
        }


class System:
    """Assembled scene: mesh, material arrays, contact and limit parameters."""

    def __init__(self, mesh: SimMesh, barrier_params: BarrierParams,
                 sl_params=None, orthotropic=None):
        self.mesh = mesh
        self.barrier = barrier_params
        self.sl_params = sl_params
        self.sl_stiffness = (
            StrainLimitStiffness(sl_params) if sl_params is not None else None
        )
        self.contact_stiffness = ContactStiffness()
        self.orthotropic = orthotropic or {}
        self.kinematic_targets = None  # callable t -> (n,3) positions
        self._tri_w = _sl._w_map(mesh.tri_rest_inv) if len(mesh.triangles) else None
        self._tri_jac = membrane_jacobian(self._tri_w) if len(mesh.triangles) \
            else None
        self._tet_w = tet_w_map(mesh.tet_rest_inv) if len(mesh.tets) else None
        self._assembly_cache = None

    def assembly_cache(self, free_idx):
        cache = self._assembly_cache
        if cache is None or cache.nf != len(free_idx):
            cache = _AssemblyCache(self.mesh.n_nodes, free_idx)
            self._assembly_cache = cache
        return cache

    # -- candidate helpers ---------------------------------------------------

    def proximity_candidates(self, x, kinematic=None):
        return candidate_pairs_proximity(
            self.mesh, x, self.barrier.dhat, kinematic=kinematic
        )

    def ccd_candidates(self, x, dx, kinematic=None):
        return candidate_pairs_ccd(self.mesh, x, dx, kinematic=kinematic)

    def ee_mollifier_eps(self, cands):
        """Per-candidate mollifier thresholds from rest edge lengths."""
        eps = np.zeros(len(cands))
        if len(cands) == 0:
            return eps
        rest = self.mesh.rest
        ee = cands.kinds == 3
        if np.any(ee):
            n = cands.nodes[ee]
            la = np.sum((rest[n[:, 1]] - rest[n[:, 0]]) ** 2, axis=1)
            lb = np.sum((rest[n[:, 3]] - rest[n[:, 2]]) ** 2, axis=1)
            eps[ee] = 1e-3 * la * lb
        return eps

    def ensure_contact_stiffness(self, mass, free_mask):
        if self.contact_stiffness.kappa == 0.0:
            mass_mean = float(np.mean(mass[free_mask])) if np.any(free_mask) \
                else 1.0
            self.contact_stiffness.initialize(
                mass_mean, _reference_xi(self.mesh), self.barrier.dhat
            )
        self.barrier.kappa = self.contact_stiffness.kappa

    # -- elasticity ----------------------------------------------------------

    def elastic_energy(self, x):
        mesh = self.mesh
        total = 0.0
        if len(mesh.triangles):
            f = _sl.deformation_gradients(x, mesh.triangles, mesh.tri_rest_inv)
            e, _ = _green_strain(f)
            vols = mesh.tri_area * mesh.tri_thickness
            for model_id in np.unique(mesh.tri_model):
                sel = mesh.tri_model == model_id
                if model_id == MODEL_IDS["stvk"]:
                    psi, _, _ = _stvk_st(e[sel], mesh.tri_mu[sel], mesh.tri_lam[sel])
                elif model_id == MODEL_IDS["neohookean"]:
                    try:
                        psi, _, _ = _neohookean_st(
                            e[sel], mesh.tri_mu[sel], mesh.tri_lam[sel]
                        )
                    except ValueError:
                        return np.inf
                else:
                    o = self.orthotropic
                    try:
                        psi, _, _ = _orthotropic_st(
                            e[sel], o["moduli"], o["limits"], o.get("barrier", False)
                        )
                    except _sl.StrainLimitError:
                        return np.inf
                total += float(np.sum(vols[sel] * psi))
        if len(mesh.hinges):
            total += float(
                bending_energy_only(
                    np.ascontiguousarray(x), mesh.hinges, mesh.hinge_rest_angle,
                    mesh.hinge_stiffness,
                )
            )
        if len(mesh.rod_edges):
            e_len = np.linalg.norm(x[mesh.rod_edges[:, 1]] - x[mesh.rod_edges[:, 0]],
                                   axis=1)
            strain = e_len / mesh.rod_rest_len - 1.0
            total += float(np.sum(0.5 * mesh.rod_ks * strain**2 * mesh.rod_rest_len))
        if len(mesh.tets):
            f = tet_deformation_gradients(x, mesh.tets, mesh.tet_rest_inv)
            sig = np.linalg.svd(f, compute_uv=False)
            det = np.linalg.det(f)
            psi = mesh.tet_mu * np.sum((sig - 1.0) ** 2, axis=1) + 0.5 * \
                mesh.tet_lam * (det - 1.0) ** 2
            total += float(np.sum(mesh.tet_volume * psi))
        if self.sl_params is not None and np.any(self.mesh.tri_strain_limited):
            sel = self.mesh.tri_strain_limited
            vols = mesh.tri_area[sel] * mesh.tri_thickness[sel]
            try:
                e_sl, _, _ = _sl.sl_potential(
                    x, mesh.triangles[sel], mesh.tri_rest_inv[sel], vols,
                    self.sl_params, with_derivs=False,
                )
            except _sl.StrainLimitError:
                return np.inf
            total += e_sl
        return total

    def elastic_grad_hess(self, x):
        """Gradient (n,3) and element Hessian blocks [(nodes, H)] of Psi."""
        mesh = self.mesh
        n = mesh.n_nodes
        grad = np.zeros((n, 3))
        blocks = []
        if len(mesh.triangles):
            f = _sl.deformation_gradients(x, mesh.triangles, mesh.tri_rest_inv)
            vols = mesh.tri_area * mesh.tri_thickness
            for model_id in np.unique(mesh.tri_model):
                sel = mesh.tri_model == model_id
                kw = {}
                if model_id == MODEL_IDS["orthotropic"]:
                    o = self.orthotropic
                    kw = dict(moduli=o["moduli"], limits=o["limits"],
                              use_barrier=o.get("barrier", False))
                _, g, h = membrane_batch(
                    f[sel], self._tri_w[sel], vols[sel], mesh.tri_mu[sel],
                    mesh.tri_lam[sel], int(model_id), project=True,
                    jac=self._tri_jac[sel], **kw,
                )
                tri = mesh.triangles[sel]
                np.add.at(grad, tri.ravel(), g.reshape(-1, 3, 3).reshape(-1, 3))
                blocks.append((f"tri{model_id}", tri, h))
        if len(mesh.hinges):
            _, g, h = bending_batch(
                np.ascontiguousarray(x), mesh.hinges, mesh.hinge_rest_angle,
                mesh.hinge_stiffness, True,
            )
            np.add.at(grad, mesh.hinges.ravel(), g.reshape(-1, 4, 3).reshape(-1, 3))
            blocks.append(("hinges", mesh.hinges, h))
        if len(mesh.rod_edges):
            _, g, h = rod_stretch_batch(
                x, mesh.rod_edges, mesh.rod_rest_len, mesh.rod_ks, project=True
            )
            np.add.at(grad, mesh.rod_edges.ravel(),
                      g.reshape(-1, 2, 3).reshape(-1, 3))
            blocks.append(("rods", mesh.rod_edges, h))
        if len(mesh.tets):
            f = tet_deformation_gradients(x, mesh.tets, mesh.tet_rest_inv)
            _, g, h = corotated_batch(
                f, self._tet_w, mesh.tet_volume, mesh.tet_mu, mesh.tet_lam,
                project=True,
            )
            np.add.at(grad, mesh.tets.ravel(), g.reshape(-1, 4, 3).reshape(-1, 3))
            blocks.append(("tets", mesh.tets, h))
        if self.sl_params is not None and np.any(mesh.tri_strain_limited):
            sel = mesh.tri_strain_limited
            vols = mesh.tri_area[sel] * mesh.tri_thickness[sel]
            _, g_sl, h_sl = _sl.sl_potential(
                x, mesh.triangles[sel], mesh.tri_rest_inv[sel], vols,
                self.sl_params, project=True,
            )
            grad += g_sl
            blocks.append(("sl", mesh.triangles[sel], h_sl))
        return grad, blocks

    # -- contact -------------------------------------------------------------

    def barrier_energy(self, x, cands=None, kinematic=None):
        if cands is None:
            cands = self.proximity_candidates(x, kinematic)
        if len(cands) == 0:
            return 0.0
        eps = self.ee_mollifier_eps(cands)
        return float(
            batch_contact_energy(
                cands.kinds, cands.nodes, cands.xi, eps,
                np.ascontiguousarray(x), self.barrier.dhat, self.barrier.kappa,
            )
        )

    def barrier_grad_hess(self, x, cands):
        n = self.mesh.n_nodes
        grad = np.zeros((n, 3))
        if len(cands) == 0:
            return grad, [], np.inf, 0
        eps = self.ee_mollifier_eps(cands)
        energies, g, h, d2s = batch_contact_grad_hess(
            cands.kinds, cands.nodes, cands.xi, eps,
            np.ascontiguousarray(x), self.barrier.dhat, self.barrier.kappa, True,
        )
        gaps = np.sqrt(d2s) - cands.xi
        n_active = int(np.count_nonzero(energies > 0.0))
        min_gap = float(gaps.min()) if len(gaps) else np.inf
        nd = np.maximum(cands.nodes, 0)
        np.add.at(grad, nd.ravel(), g.reshape(-1, 4, 3).reshape(-1, 3))
        blocks = [(None, cands.nodes, h)]
        return grad, blocks, min_gap, n_active

    def max_stretch(self, x):
        if self.sl_params is None or not np.any(self.mesh.tri_strain_limited):
            return 0.0
        sel = self.mesh.tri_strain_limited
        return _sl.max_stretch(x, self.mesh.triangles[sel],
                               self.mesh.tri_rest_inv[sel])

    def min_strain_gap(self, x):
        if self.sl_params is None or not np.any(self.mesh.tri_strain_limited):
            return np.inf
        return self.sl_params.s - self.max_stretch(x)


def incremental_potential(system: System, x, xhat, mass, free, h,
                          lagged: LaggedContacts = None, kinematic=None):
    """E(x); +infinity at infeasible states (never evaluated by the stepper
    thanks to the CCD and strain-limit filters)."""
    if system.sl_params is not None:
        if system.max_stretch(x) >= system.sl_params.s:
            return np.inf
    elastic = system.elastic_energy(x)
    if not np.isfinite(elastic):
        return np.inf
    contact = system.barrier_energy(x, kinematic=kinematic)
    if not np.isfinite(contact):
        return np.inf
    diff = (x - xhat)[free]
    inertia = 0.5 * float(np.sum(mass[free, None] * diff * diff))
    total = inertia + h * h * elastic + contact
    if lagged is not None and len(lagged):
        total += h * h * friction_energy(x, lagged)
    return total


class _AssemblyCache:
    """Reduced COO index patterns per static element block."""

    def __init__(self, n_nodes, free_idx):
        self.full_to_free = -np.ones(3 * n_nodes, dtype=np.int64)
        self.full_to_free[free_idx] = np.arange(len(free_idx))
        self.nf = len(free_idx)
        self._static = {}

    def indices(self, key, nodes):
        if key is not None and key in self._static:
            return self._static[key]
        k = nodes.shape[1]
        nd = np.maximum(nodes, 0)
        dof = (nd[:, :, None] * 3 + np.arange(3)[None, None, :]).reshape(
            -1, 3 * k
        )
        r = np.repeat(dof[:, :, None], 3 * k, axis=2).ravel()
        c = np.repeat(dof[:, None, :], 3 * k, axis=1).ravel()
        rr = self.full_to_free[r]
        cc = self.full_to_free[c]
        keep = (rr >= 0) & (cc >= 0)
        entry = (rr[keep], cc[keep], keep)
        if key is not None:
            self._static[key] = entry
        return entry


def _assemble(cache: _AssemblyCache, grad, blocks, mass, free_idx):
    """Reduced gradient and SPD-candidate Hessian of the IP over free dofs."""
    rows = []
    cols = []
    vals = []
    for key, nodes, h_blk in blocks:
        if len(nodes) == 0:
            continue
        rr, cc, keep = cache.indices(key, nodes)
        rows.append(rr)
        cols.append(cc)
        vals.append(h_blk.ravel()[keep])

    nf = cache.nf
    if rows:
        h_mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nf, nf),
        ).tocsc()
    else:
        h_mat = sp.csc_matrix((nf, nf))

    m_diag = np.repeat(mass, 3)[free_idx]
    h_mat = h_mat + sp.diags(m_diag)
    g = grad.ravel()[free_idx].copy()
    return g, h_mat, m_diag


def _solve_direction(h_mat, g, m_diag):
    """SPD solve with progressive diagonal regularization on non-descent."""
    if len(g) == 0 or np.abs(g).max() == 0.0:
        return np.zeros_like(g)
    reg = 0.0
    base = 1e-8 * float(np.mean(m_diag)) if len(m_diag) else 1e-8
    eye = sp.identity(h_mat.shape[0], format="csc")
    for _ in range(40):
        try:
            lu = spla.splu((h_mat + reg * eye).tocsc())
            d = lu.solve(-g)
        except RuntimeError:
            d = None
        if d is not None and np.all(np.isfinite(d)) and np.dot(g, d) < 0.0:
            return d
        reg = base if reg == 0.0 else reg * 10.0
    raise RuntimeError("linear solve failed to produce a descent direction")


def line_search_filter(system: System, x, dx, cfg: StepConfig, kinematic=None):
    """Intersection-free starting step: min(1, ACCD) then strain-limit halving."""
    cands = system.ccd_candidates(x, dx, kinematic=kinematic)
    alpha = 1.0
    if len(cands):
        alpha = max_step_indexed(
            cands.kinds, cands.nodes, x, dx, cands.xi, cfg.accd_s,
            max_iter=SOLVER_ITERATION_CAP,
        )
    if system.sl_params is not None:
        while alpha > cfg.alpha_floor and \
                system.max_stretch(x + alpha * dx) >= system.sl_params.s:
            alpha *= 0.5
    if alpha <= cfg.alpha_floor:
        raise LineSearchUnderflow(f"line-search filter underflow: alpha={alpha}")
    return alpha


def _place_kinematic_targets(system, kin, x, targets, cfg):
    """Move kinematic nodes toward their scripted targets, CCD-gated.

    Returns True once the targets are reached exactly.
    """
    dxk = np.zeros_like(x)
    dxk[kin] = targets[kin] - x[kin]
    move = float(np.abs(dxk).max()) if dxk.size else 0.0
    if move == 0.0:
        return True
    cands = system.ccd_candidates(x, dxk, kinematic=None)
    alpha = 1.0
    if len(cands):
        alpha = max_step_indexed(
            cands.kinds, cands.nodes, x, dxk, cands.xi, cfg.accd_s,
            max_iter=SOLVER_ITERATION_CAP,
        )
    if system.sl_params is not None:
        while alpha > cfg.alpha_floor and \
                system.max_stretch(x + alpha * dxk) >= system.sl_params.s:
            alpha *= 0.5
    if alpha > cfg.alpha_floor:
        x += alpha * dxk
    return alpha >= 1.0


def newton_step(world: WorldState, system: System, cfg: StepConfig,
                lagged: LaggedContacts = None, iterate_callback=None,
                stats: StepStats = None, x_init=None):
    """Minimize the IP for one time step; returns (new WorldState, StepStats)."""
    if stats is None:
        stats = StepStats()
    h = cfg.h
    mesh = system.mesh
    n = mesh.n_nodes
    kin = world.kinematic
    free_mask = ~kin
    free_idx = np.flatnonzero(np.repeat(free_mask & (world.mass > 0.0), 3))
    x_n = world.x.copy()

    system.ensure_contact_stiffness(world.mass, free_mask)
    system.contact_stiffness.reset_step()

    x = world.x.copy() if x_init is None else x_init.copy()

    targets = x_n.copy()
    if system.kinematic_targets is not None:
        targets = system.kinematic_targets(world.time + h)
    bc_done = _place_kinematic_targets(system, kin, x, targets, cfg)

    xhat = x_n + h * world.v + h * h * cfg.gravity[None, :]
    mass = world.mass

    def energy(z):
        return incremental_potential(system, z, xhat, mass, free_mask, h,
                                     lagged, kinematic=kin)

    cache = system.assembly_cache(free_idx)
    e_curr = energy(x)
    stats.energy_trace.append(e_curr)
    converged = False
    res = np.inf
    for iteration in range(cfg.max_newton):
        stats.newton_iterations = iteration + 1
        if not bc_done:
            bc_done = _place_kinematic_targets(system, kin, x, targets, cfg)
            e_curr = energy(x)

        system.barrier.kappa = system.contact_stiffness.kappa
        if system.sl_stiffness is not None:
            system.sl_params.kappa = system.sl_stiffness.kappa

        cands = system.proximity_candidates(x, kinematic=kin)
        grad_el, blocks_el = system.elastic_grad_hess(x)
        grad_b, blocks_b, min_gap, n_active = system.barrier_grad_hess(x, cands)
        stats.contacts = n_active
        stats.min_gap = min(stats.min_gap, min_gap)

        grad = (h * h) * grad_el + grad_b
        grad[free_mask] += mass[free_mask, None] * (x - xhat)[free_mask]
        blocks = [(key, nd, (h * h) * hb) for key, nd, hb in blocks_el]
        blocks += blocks_b
        if lagged is not None and len(lagged):
            _, g_f, h_f = friction_grad_hess(x, lagged)
            grad += (h * h) * g_f
            blocks.append((None, lagged.nodes, (h * h) * h_f))

        g, h_mat, m_diag = _assemble(cache, grad, blocks, mass, free_idx)
        direction = _solve_direction(h_mat, g, m_diag)
        dx = np.zeros((n, 3))
        dx.ravel()[free_idx] = direction

        res = np.abs(direction).max() / h if len(direction) else 0.0
        if res < cfg.newton_tol and bc_done:
            converged = True
            break

        # One swept candidate superset serves both the CCD filter and every
        # backtracking trial energy (no per-trial broadphase rebuilds).
        sweep = candidate_pairs_ccd(
            system.mesh, x, dx, kinematic=kin, margin=system.barrier.dhat,
        )
        alpha = 1.0
        if len(sweep):
            alpha = max_step_indexed(
                sweep.kinds, sweep.nodes, x, dx, sweep.xi, cfg.accd_s,
                max_iter=SOLVER_ITERATION_CAP,
            )
        if system.sl_params is not None:
            while alpha > cfg.alpha_floor and \
                    system.max_stretch(x + alpha * dx) >= system.sl_params.s:
                alpha *= 0.5
        if alpha <= cfg.alpha_floor:
            raise LineSearchUnderflow(
                f"line-search filter underflow: alpha={alpha}"
            )
        sweep_eps = system.ee_mollifier_eps(sweep)

        def ls_energy(z):
            if system.sl_params is not None and \
                    system.max_stretch(z) >= system.sl_params.s:
                return np.inf
            elastic = system.elastic_energy(z)
            if not np.isfinite(elastic):
                return np.inf
            contact = 0.0
            if len(sweep):
                contact = float(batch_contact_energy(
                    sweep.kinds, sweep.nodes, sweep.xi, sweep_eps,
                    np.ascontiguousarray(z), system.barrier.dhat,
                    system.barrier.kappa,
                ))
            if not np.isfinite(contact):
                return np.inf
            diff = (z - xhat)[free_mask]
            total = 0.5 * float(np.sum(mass[free_mask, None] * diff * diff)) \
                + h * h * elastic + contact
            if lagged is not None and len(lagged):
                total += h * h * friction_energy(z, lagged)
            return total

        e_curr = ls_energy(x)
        accepted = False
        e_trial = e_curr
        for _ in range(cfg.max_line_search):
            trial = x + alpha * dx
            e_trial = ls_energy(trial)
            if e_trial < e_curr:
                accepted = True
                break
            alpha *= 0.5
            if alpha <= cfg.alpha_floor:
                break
        if not accepted:
            # Energy plateau at float precision: accept in place.
            converged = bc_done and res < 10.0 * cfg.newton_tol
            break
        x = x + alpha * dx
        e_curr = e_trial
        stats.energy_trace.append(e_curr)
        stats.alpha_history.append(alpha)
        stats.max_sigma = max(stats.max_sigma, system.max_stretch(x))
        if iterate_callback is not None:
            iterate_callback(x)

        system.contact_stiffness.update(min_gap)
        if system.sl_stiffness is not None:
            system.sl_stiffness.update(system.min_strain_gap(x))

    stats.converged = converged and bc_done
    stats.max_sigma = max(stats.max_sigma, system.max_stretch(x))
    stats.kappa = system.contact_stiffness.kappa
    if system.sl_stiffness is not None:
        stats.kappa_s = system.sl_stiffness.kappa

    v_new = (x - x_n) / h
    new_world = WorldState(x, v_new, world.mass.copy(), world.kinematic.copy(),
                           time=world.time + h)
    return new_world, stats


def _reference_xi(mesh):
    parts = [mesh.col_point_xi, mesh.col_edge_xi, mesh.col_tri_xi]
    parts = [p for p in parts if len(p)]
    if not parts:
        return 0.0
    return float(np.mean(np.concatenate(parts)))


def friction_outer_loop(world: WorldState, system: System, cfg: StepConfig,
                        iterate_callback=None, step_index=0):
    """Lagged friction iterations around the Newton solve (default one)."""
    if system.sl_stiffness is not None:
        system.sl_stiffness.reset_step()
    system.ensure_contact_stiffness(world.mass, ~world.kinematic)

    n_lag = max(1, cfg.friction_iterations)
    lag_state = world
    result, stats = None, None
    for _ in range(n_lag):
        lagged = None
        if cfg.friction_iterations > 0:
            cands = system.proximity_candidates(lag_state.x,
                                                kinematic=world.kinematic)
            lagged = build_lagged_contacts(
                cands, lag_state.x, system.barrier.dhat, system.barrier.kappa,
                cfg.h, cfg.mu, cfg.epsv, anchor=world.x,
            )
        stats = StepStats(step=step_index)
        result, stats = newton_step(world, system, cfg, lagged,
                                    iterate_callback, stats)
        lag_state = result
    return result, stats
