"""Global assembly and nonlinear solve for the primal HHO discretization.

Unknowns are ordered cells first (one degree-k polynomial block per element)
followed by one degree-k block per face, in mesh face order.  Homogeneous or
inhomogeneous Dirichlet data is imposed strongly: boundary face blocks hold
the face projection of the boundary datum and the corresponding residual rows
are masked.

The Newton loop supports backtracking damping, regularization of the flux
Jacobian near vanishing gradients, continuation in the exponent p starting
from the linear problem, and optional static condensation of the cell blocks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import spsolve

from .hho_local import LocalOperators, build_local_operators, cell_dim
from .law import LerayLionsLaw
from .polybasis import l2_project, l2_project_face


class DofMap:
    """Global indices: element cell blocks first, then face blocks."""

    def __init__(self, mesh, k: int):
        self.mesh = mesh
        self.k = k
        self.n_cell = cell_dim(k)
        self.n_face = k + 1
        self.cell_span = len(mesh.elements) * self.n_cell
        self.ndofs = self.cell_span + len(mesh.faces) * self.n_face
        self._element_dofs = []
        for ei, el in enumerate(mesh.elements):
            idx = [np.arange(ei * self.n_cell, (ei + 1) * self.n_cell)]
            for fid in el.faces:
                idx.append(self.face_dofs(fid))
            self._element_dofs.append(np.concatenate(idx))
        bnd = [self.face_dofs(fid) for fid, f in enumerate(mesh.faces)
               if f.is_boundary]
        self.boundary_dofs = (np.concatenate(bnd) if bnd
                              else np.empty(0, dtype=int))

    def cell_dofs(self, ei: int) -> np.ndarray:
        return np.arange(ei * self.n_cell, (ei + 1) * self.n_cell)

    def face_dofs(self, fid: int) -> np.ndarray:
        off = self.cell_span + fid * self.n_face
        return np.arange(off, off + self.n_face)

    def element_dofs(self, ei: int) -> np.ndarray:
        return self._element_dofs[ei]


def build_packs(mesh, k: int, boost: int = 0) -> list[LocalOperators]:
    return [build_local_operators(mesh, ei, k, boost)
            for ei in range(len(mesh.elements))]


def interpolate_global(dm: DofMap, packs, field) -> np.ndarray:
    """Cell and face projections of a field, each face computed once."""
    U = np.zeros(dm.ndofs)
    seen = set()
    for ei, ops in enumerate(packs):
        U[dm.cell_dofs(ei)] = l2_project(ops.basis_k, field, ops.rule)
        for i, fid in enumerate(ops.face_ids):
            if fid not in seen:
                seen.add(fid)
                U[dm.face_dofs(fid)] = l2_project_face(
                    ops.face_bases[i], field, ops.face_rules[i])
    return U


def dirichlet_values(dm: DofMap, packs, g) -> tuple[np.ndarray, np.ndarray]:
    """Boundary dof indices and the face projections of the datum g."""
    idx, vals = [], []
    seen = set()
    for ei, ops in enumerate(packs):
        for i, fid in enumerate(ops.face_ids):
            if dm.mesh.faces[fid].is_boundary and fid not in seen:
                seen.add(fid)
                idx.append(dm.face_dofs(fid))
                vals.append(l2_project_face(ops.face_bases[i], g,
                                            ops.face_rules[i]))
    if not idx:
        return np.empty(0, dtype=int), np.empty(0)
    return np.concatenate(idx), np.concatenate(vals)


def compute_loads(packs, source) -> list[np.ndarray]:
    """Cell load vectors int_T f phi_i, one per element."""
    loads = []
    for ops in packs:
        if source is None:
            loads.append(np.zeros(ops.n_cell))
        else:
            fv = source(ops.rule.points)
            loads.append(ops.cellval_q.T @ (ops.rule.weights * fv))
    return loads


def _stab_weights(d: np.ndarray, p: float, eps: float):
    """Residual weight |d|^{p-2} (regularized) and its derivative weight."""
    n2 = d * d + eps * eps
    if p == 2.0:
        return np.ones_like(d), np.ones_like(d)
    w = np.zeros_like(d)
    w4 = np.zeros_like(d)
    nz = n2 > 0
    w[nz] = n2[nz] ** ((p - 2.0) / 2.0)
    w4[nz] = n2[nz] ** ((p - 4.0) / 2.0)
    jac = w4 * ((p - 1.0) * d * d + eps * eps)
    return w, jac


def _element_system(ops: LocalOperators, law: LerayLionsLaw, Ue: np.ndarray,
                    load: np.ndarray, eps: float, want_jac: bool):
    w = ops.rule.weights
    x = ops.rule.points
    p = law.p
    g = ops.grad_q @ Ue
    a = law.flux(x, g, eps)
    re = np.einsum("q,qc,qci->i", w, a, ops.grad_q, optimize=True)
    re[:ops.n_cell] -= load
    Je = None
    if want_jac:
        Da = law.flux_jacobian(x, g, eps)
        wDa = w[:, None, None] * Da
        tmp = np.einsum("qab,qbj->qaj", wDa, ops.grad_q, optimize=True)
        Je = np.einsum("qaj,qai->ij", tmp, ops.grad_q, optimize=True)
    for i, dval in enumerate(ops.dval_q):
        du = dval @ Ue
        wq = ops.face_rules[i].weights
        hcoef = ops.face_lengths[i] ** (1.0 - p)
        sw, jw = _stab_weights(du, p, eps)
        re += hcoef * (dval.T @ (wq * sw * du))
        if want_jac:
            Je += hcoef * (dval.T * (wq * jw)) @ dval
    return re, Je


def assemble_residual(dm: DofMap, packs, law, U, loads,
                      eps: float = 0.0) -> np.ndarray:
    r = np.zeros(dm.ndofs)
    for ei, ops in enumerate(packs):
        gd = dm.element_dofs(ei)
        re, _ = _element_system(ops, law, U[gd], loads[ei], eps, False)
        r[gd] += re
    r[dm.boundary_dofs] = 0.0
    return r


def assemble_system(dm: DofMap, packs, law, U, loads, eps: float = 0.0):
    """Masked residual and Jacobian (identity rows/cols on boundary dofs)."""
    r = np.zeros(dm.ndofs)
    rows, cols, vals = [], [], []
    for ei, ops in enumerate(packs):
        gd = dm.element_dofs(ei)
        re, Je = _element_system(ops, law, U[gd], loads[ei], eps, True)
        r[gd] += re
        rr, cc = np.meshgrid(gd, gd, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(Je.ravel())
    J = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dm.ndofs, dm.ndofs)).tocsr()
    r[dm.boundary_dofs] = 0.0
    keep = np.ones(dm.ndofs)
    keep[dm.boundary_dofs] = 0.0
    K = sp.diags(keep)
    mask = np.zeros(dm.ndofs)
    mask[dm.boundary_dofs] = 1.0
    J = K @ J @ K + sp.diags(mask)
    return r, J.tocsr()


def energy(dm: DofMap, packs, law, U, loads) -> float:
    """Dirichlet energy of the discrete solution (gradient is the residual)."""
    if law.energy_density is None:
        raise ValueError("law has no energy density")
    total = 0.0
    p = law.p
    for ei, ops in enumerate(packs):
        Ue = U[dm.element_dofs(ei)]
        g = ops.grad_q @ Ue
        total += float(ops.rule.weights @ law.energy_density(g))
        for i, dval in enumerate(ops.dval_q):
            du = dval @ Ue
            wq = ops.face_rules[i].weights
            total += (ops.face_lengths[i] ** (1.0 - p) / p
                      * float(wq @ np.abs(du) ** p))
        total -= float(loads[ei] @ Ue[:ops.n_cell])
    return total


# ---------------------------------------------------------------------------
# linear solves, with optional static condensation of cell blocks


def _solve_full(dm, packs, law, U, loads, eps):
    r, J = assemble_system(dm, packs, law, U, loads, eps)
    return spsolve(J, -r)


def _solve_condensed(dm, packs, law, U, loads, eps):
    nfdofs = dm.ndofs - dm.cell_span
    rc = np.zeros(nfdofs)
    rows, cols, vals = [], [], []
    back = []
    nk = dm.n_cell
    for ei, ops in enumerate(packs):
        gd = dm.element_dofs(ei)
        re, Je = _element_system(ops, law, U[gd], loads[ei], eps, True)
        fd = gd[nk:] - dm.cell_span
        lu = lu_factor(Je[:nk, :nk])
        X = lu_solve(lu, Je[:nk, nk:])
        y = lu_solve(lu, re[:nk])
        S = Je[nk:, nk:] - Je[nk:, :nk] @ X
        rc_e = re[nk:] - Je[nk:, :nk] @ y
        rc[fd] += rc_e
        rr, cc = np.meshgrid(fd, fd, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(S.ravel())
        back.append((X, y))
    S = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nfdofs, nfdofs)).tocsr()
    bnd = dm.boundary_dofs - dm.cell_span
    rc[bnd] = 0.0
    keep = np.ones(nfdofs)
    keep[bnd] = 0.0
    K = sp.diags(keep)
    mask = np.zeros(nfdofs)
    mask[bnd] = 1.0
    S = (K @ S @ K + sp.diags(mask)).tocsr()
    df = spsolve(S, -rc)
    delta = np.zeros(dm.ndofs)
    delta[dm.cell_span:] = df
    for ei, (X, y) in enumerate(back):
        gd = dm.element_dofs(ei)
        delta[gd[:nk]] = -y - X @ delta[gd[nk:]]
    return delta


# ---------------------------------------------------------------------------
# Newton with continuation


@dataclass
class NewtonConfig:
    atol: float = 1e-10
    stall_tol: float = 1e-6     # accept a roundoff-floor stall below this
    max_iterations: int = 60
    armijo: float = 1e-4
    min_step: float = 2.0 ** -16
    condense: bool = False
    boost: int = 0
    eps_scale: float = 1e-10
    continuation: tuple | None = None   # explicit p path overrides the default


@dataclass
class StageReport:
    p: float
    iterations: int
    residual_norm: float      # of the regularized system Newton solved
    residual_raw: float       # same iterate, eps = 0 weights
    converged: bool
    damping_events: int = 0


@dataclass
class SolveReport:
    stages: list
    converged: bool
    newton_iters: int
    wall_time: float
    ndofs: int

    @property
    def diverged(self) -> bool:
        return not self.converged


def continuation_path(p: float) -> tuple:
    """Exponent schedule from the linear problem to the target, steps <= 1."""
    if p == 2.0:
        return (2.0,)
    path = [2.0]
    cur = 2.0
    step = 1.0 if p > 2.0 else -1.0
    while abs(p - cur) > 1.0:
        cur += step
        path.append(cur)
    path.append(p)
    return tuple(path)


def _gradient_scale(dm, packs, U) -> float:
    worst = 1.0
    for ei, ops in enumerate(packs):
        g = ops.grad_q @ U[dm.element_dofs(ei)]
        worst = max(worst, float(np.max(np.hypot(g[:, 0], g[:, 1]))))
    return worst


def _newton_stage(dm, packs, law, U, loads, cfg: NewtonConfig) -> StageReport:
    eps = cfg.eps_scale * _gradient_scale(dm, packs, U)
    solve_step = _solve_condensed if cfg.condense else _solve_full
    iters = 0
    damping = 0
    converged = False
    r = assemble_residual(dm, packs, law, U, loads, eps)
    rn = float(np.linalg.norm(r))
    while True:
        if rn <= cfg.atol:
            converged = True
            break
        if iters >= cfg.max_iterations:
            break
        delta = solve_step(dm, packs, law, U, loads, eps)
        if np.max(np.abs(delta)) <= 1e-13 * (1.0 + np.max(np.abs(U))):
            # step at roundoff scale: the residual floor has been reached
            converged = rn <= cfg.stall_tol
            break
        t = 1.0
        accepted = False
        while t >= cfg.min_step:
            r_try = assemble_residual(dm, packs, law, U + t * delta, loads, eps)
            rn_try = float(np.linalg.norm(r_try))
            if rn_try <= (1.0 - cfg.armijo * t) * rn:
                accepted = True
                break
            t *= 0.5
            damping += 1
        if not accepted:
            converged = rn <= cfg.stall_tol
            break
        U += t * delta
        r, rn = r_try, rn_try
        iters += 1
    raw = float(np.linalg.norm(assemble_residual(dm, packs, law, U, loads)))
    return StageReport(p=law.p, iterations=iters, residual_norm=rn,
                       residual_raw=raw, converged=converged,
                       damping_events=damping)


def newton_solve(mesh, k: int, law: LerayLionsLaw, source=None, dirichlet=None,
                 config: NewtonConfig | None = None,
                 packs=None, dm: DofMap | None = None):
    """Solve the discrete problem; returns (U, report, dm, packs)."""
    cfg = config or NewtonConfig()
    if packs is None:
        packs = build_packs(mesh, k, cfg.boost)
    if dm is None:
        dm = DofMap(mesh, k)
    loads = compute_loads(packs, source)
    U = np.zeros(dm.ndofs)
    if dirichlet is not None:
        idx, vals = dirichlet_values(dm, packs, dirichlet)
        U[idx] = vals
    path = cfg.continuation or continuation_path(law.p)
    t0 = time.perf_counter()
    stages = []
    ok = True
    for pstage in path:
        if pstage == law.p:
            stage_law = law
        elif law.family is None:
            raise ValueError("continuation requires the law's family")
        else:
            stage_law = law.family(pstage)
        rep = _newton_stage(dm, packs, stage_law, U, loads, cfg)
        stages.append(rep)
        if not rep.converged:
            ok = False
            break
    report = SolveReport(stages=stages, converged=ok,
                         newton_iters=sum(s.iterations for s in stages),
                         wall_time=time.perf_counter() - t0, ndofs=dm.ndofs)
    return U, report, dm, packs
