"""Quasi-static inflation and recovery of the zero-pressure configuration.

The static solve balances the weak-form internal forces against a
follower pressure load on a tagged luminal surface (the load acts on the
deformed surface normal).  Newton iteration uses the analytic material
tangent with a backtracking line search; the follower-load stiffness is
omitted.  If full-load Newton diverges, the load is applied in
increments.

The zero-pressure geometry is recovered by the backward displacement
fixed point: starting from the loaded coordinates x, iterate

    X <- X + (x - chi[X])

where chi[X] is the static inflation of reference X, until the residual
|x - chi| (discrete L2) falls below 0.1% of the average vessel radius
and its change between iterations falls below 0.015% of that radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .circulation import MMHG_TO_CGS
from .constitutive import stress_tangent
from .errors import ContractViolation, NonconvergenceError
from .fesolid import (
    FEMesh,
    _element_kinematics,
    boundary_facets,
    internal_nodal_forces,
)


@dataclass
class StaticProblem:
    """Mesh + material + pressure load (mmHg) on a luminal facet set.

    `law` must be in CGS stress units (dyn/cm^2) to match cm geometry.
    Constraints: `fixed_nodes` are pinned at their reference positions;
    `pin_rigid_modes` adds Lagrange constraints on the global translations
    and rotations instead (for closed, self-equilibrated loads).
    """

    mesh: FEMesh
    law: object
    pressure_mmhg: float
    luminal_facets: np.ndarray
    fixed_nodes: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    pin_rigid_modes: bool = False

    def __post_init__(self):
        self.luminal_facets = np.asarray(self.luminal_facets, dtype=int)
        self.fixed_nodes = np.asarray(self.fixed_nodes, dtype=int)
        if self.fixed_nodes.size == 0 and not self.pin_rigid_modes:
            raise ContractViolation(
                "need displacement constraints or rigid-mode pinning"
            )

    def with_reference(self, X):
        m = FEMesh(X, self.mesh.elems)
        return StaticProblem(
            m, self.law, self.pressure_mmhg, self.luminal_facets,
            self.fixed_nodes, self.pin_rigid_modes,
        )

    @property
    def pressure_cgs(self):
        return self.pressure_mmhg * MMHG_TO_CGS


def luminal_surface_facets(mesh, tags=None):
    """Facets of the inner (luminal) surface.

    Uses generator tags when available; otherwise classifies boundary
    facets of a tube-like mesh by distance from the centroid axis.
    """
    tags = getattr(mesh, "tags", None) if tags is None else tags
    facets, _ = boundary_facets(mesh)
    if tags is not None and "inner" in tags:
        inner = set(int(n) for n in tags["inner"])
        keep = [i for i, f in enumerate(facets) if all(int(n) in inner for n in f)]
        return facets[keep]
    centroid = mesh.nodes.mean(axis=0)
    rel = mesh.nodes - centroid
    if mesh.dim == 3:
        # principal axis = largest-variance direction
        _, _, vt = np.linalg.svd(rel, full_matrices=False)
        axis = vt[0]
        rad = np.linalg.norm(rel - np.outer(rel @ axis, axis), axis=1)
    else:
        rad = np.linalg.norm(rel, axis=1)
    fac_r = rad[facets].mean(axis=1)
    if mesh.dim == 3:
        # drop end-cap facets (normals nearly axial)
        keep = []
        for i, f in enumerate(facets):
            pts = mesh.nodes[f]
            n = np.cross(pts[2] - pts[0], pts[3] - pts[1])
            n /= np.linalg.norm(n)
            if abs(n @ axis) < 0.5:
                keep.append(i)
        facets = facets[keep]
        fac_r = fac_r[keep]
    split = 0.5 * (fac_r.min() + fac_r.max())
    return facets[fac_r < split]


def average_vessel_radius(coords, facets, dim):
    """Mean distance of luminal-surface nodes from the centerline axis."""
    ids = np.unique(facets)
    pts = coords[ids]
    centroid = pts.mean(axis=0)
    rel = pts - centroid
    if dim == 3:
        _, _, vt = np.linalg.svd(rel, full_matrices=False)
        axis = vt[0]
        rad = np.linalg.norm(rel - np.outer(rel @ axis, axis), axis=1)
    else:
        rad = np.linalg.norm(rel, axis=1)
    return float(rad.mean())


def pressure_nodal_forces(facets, coords, p_cgs, dim):
    """Follower pressure load: -p times the deformed outward surface normal,
    integrated against the facet shape functions."""
    forces = np.zeros_like(coords)
    if p_cgs == 0.0 or facets.size == 0:
        return forces
    if dim == 2:
        a, b = facets[:, 0], facets[:, 1]
        t = coords[b] - coords[a]
        n_out = np.column_stack([t[:, 1], -t[:, 0]])  # outward for CCW elements
        contrib = -0.5 * p_cgs * n_out
        np.add.at(forces, a, contrib)
        np.add.at(forces, b, contrib)
        return forces
    # bilinear quad facets, 2x2 Gauss
    gp = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    quad_pts = [(xi, eta) for xi in gp for eta in gp]
    pts = coords[facets]  # (nf, 4, 3)
    for xi, eta in quad_pts:
        N = 0.25 * np.array(
            [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
             (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)]
        )
        dN_xi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
        dN_eta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
        t1 = np.einsum("m,fmi->fi", dN_xi, pts)
        t2 = np.einsum("m,fmi->fi", dN_eta, pts)
        n_area = np.cross(t1, t2)  # outward (facet ordering), area-scaled
        for m in range(4):
            np.add.at(forces, facets[:, m], -p_cgs * N[m] * n_area)
    return forces


def _tangent_stiffness(mesh, law, coords):
    _, w, _, dNX, detJ = _element_kinematics(mesh, 2)
    xe = coords[mesh.elems]
    F = np.einsum("emi,egma->egia", xe, dNX, optimize=True)
    A = stress_tangent(F, law)
    Ke = np.einsum(
        "egmj,egijkl,egnl,eg,g->emink", dNX, A, dNX, detJ, w, optimize=True
    )
    dim = mesh.dim
    nen = mesh.elems.shape[1]
    dof = (mesh.elems[:, :, None] * dim + np.arange(dim)[None, None, :]).reshape(
        mesh.n_elems, nen * dim
    )
    rows = np.repeat(dof[:, :, None], nen * dim, axis=2)
    cols = np.repeat(dof[:, None, :], nen * dim, axis=1)
    K = sparse.coo_matrix(
        (Ke.reshape(mesh.n_elems, nen * dim, nen * dim).ravel(),
         (rows.ravel(), cols.ravel())),
        shape=(mesh.n_nodes * dim, mesh.n_nodes * dim),
    )
    return K.tocsc()


def _rigid_mode_rows(coords, dim):
    n = coords.shape[0]
    modes = []
    for d in range(dim):
        m = np.zeros((n, dim))
        m[:, d] = 1.0
        modes.append(m.ravel())
    centered = coords - coords.mean(axis=0)
    if dim == 2:
        m = np.column_stack([-centered[:, 1], centered[:, 0]])
        modes.append(m.ravel())
    else:
        for a in range(3):
            m = np.zeros((n, 3))
            e = np.zeros(3)
            e[a] = 1.0
            m[:] = np.cross(e, centered)
            modes.append(m.ravel())
    return np.array(modes)


def _residual(prob, coords, load_fraction):
    R = internal_nodal_forces(prob.mesh, prob.law, coords)
    f_ext = pressure_nodal_forces(
        prob.luminal_facets, coords, load_fraction * prob.pressure_cgs, prob.mesh.dim
    )
    return R + f_ext, f_ext


def _newton(prob, coords, load_fraction, tol, max_iter=50):
    dim = prob.mesh.dim
    ndof = prob.mesh.n_nodes * dim
    free = np.ones(ndof, dtype=bool)
    for n in prob.fixed_nodes:
        free[n * dim : (n + 1) * dim] = False
    coords = coords.copy()
    for it in range(max_iter):
        R, f_ext = _residual(prob, coords, load_fraction)
        Rv = R.ravel().copy()
        Rv[~free] = 0.0
        ref = max(float(np.linalg.norm(f_ext)), 1e-30)
        res = float(np.linalg.norm(Rv))
        if res <= tol * ref or res < 1e-14 * max(1.0, float(np.abs(coords).max())):
            return coords, res / ref
        K = _tangent_stiffness(prob.mesh, prob.law, coords)
        if prob.pin_rigid_modes:
            C = sparse.csr_matrix(_rigid_mode_rows(prob.mesh.nodes, dim))
            nc = C.shape[0]
            KKT = sparse.bmat([[K, C.T], [C, None]], format="csc")
            rhs = np.concatenate([Rv, np.zeros(nc)])
            sol = splu(KKT).solve(rhs)
            delta = sol[:ndof]
        else:
            # eliminate fixed dofs by zeroing rows/cols and pinning diagonal
            K = K.tolil()
            fixed_idx = np.where(~free)[0]
            for i in fixed_idx:
                K.rows[i] = [i]
                K.data[i] = [1.0]
            K = K.tocsc()
            delta = splu(K).solve(Rv)
            delta[~free] = 0.0
        # backtracking line search on the residual norm
        step = 1.0
        while step > 1e-4:
            trial = coords + step * delta.reshape(coords.shape)
            Rt, _ = _residual(prob, trial, load_fraction)
            Rtv = Rt.ravel().copy()
            Rtv[~free] = 0.0
            if np.linalg.norm(Rtv) < (1.0 - 1e-4 * step) * res:
                coords = trial
                break
            step *= 0.5
        else:
            raise NonconvergenceError(
                f"line search stalled at Newton iteration {it} "
                f"(residual {res:.3e}, load fraction {load_fraction})"
            )
    raise NonconvergenceError(
        f"Newton did not converge in {max_iter} iterations at load "
        f"fraction {load_fraction}"
    )


def solve_static_inflation(prob, initial=None, tol=1e-8, load_steps=1):
    """Deformed coordinates chi balancing the follower pressure load.

    Tries a single full-load Newton solve first; on divergence, the load
    is applied in 10 increments (once).
    """
    coords = prob.mesh.nodes.copy() if initial is None else initial.copy()
    if prob.pressure_mmhg == 0.0:
        return prob.mesh.nodes.copy()
    fractions = np.linspace(0.0, 1.0, load_steps + 1)[1:]
    try:
        for f in fractions:
            coords, _ = _newton(prob, coords, f, tol)
        return coords
    except NonconvergenceError:
        if load_steps >= 10:
            raise
        return solve_static_inflation(prob, initial, tol, load_steps=10)


def residual_norm(x, chi):
    """Discrete L2 norm of the nodewise mismatch between coordinate sets."""
    x = np.asarray(x, dtype=float)
    chi = np.asarray(chi, dtype=float)
    if x.shape != chi.shape:
        raise ContractViolation("coordinate sets must index the same nodes")
    return float(np.sqrt(np.sum((x - chi) ** 2)))


def backward_displacement(
    x_loaded, prob, max_iter=50, r_tol_frac=1e-3, dr_tol_frac=1.5e-4
):
    """Recover the unloaded reference X with chi[X] matching x_loaded.

    Starts from X = x_loaded and applies the backward update
    X <- X + (x - chi[X]).  Convergence needs the residual below
    r_tol_frac of the average vessel radius and the residual change below
    dr_tol_frac of it.  Returns (X, history dict).
    """
    x = np.asarray(x_loaded, dtype=float)
    R_avg = average_vessel_radius(x, prob.luminal_facets, prob.mesh.dim)
    X = x.copy()
    history = []
    chi = None
    for i in range(max_iter):
        prob_i = prob.with_reference(X)
        chi = solve_static_inflation(prob_i, initial=chi)
        r = residual_norm(x, chi)
        history.append(r)
        small = r < r_tol_frac * R_avg
        settled = i == 0 or abs(history[-1] - history[-2]) < dr_tol_frac * R_avg
        if small and settled:
            return X, {
                "residuals": history,
                "iterations": i + 1,
                "average_radius": R_avg,
                "computed_loaded": chi,
            }
        X = X + (x - chi)
    raise NonconvergenceError(
        f"backward displacement did not converge in {max_iter} iterations",
        history=history,
    )
