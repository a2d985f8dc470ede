"""Volumetric hyperelastic solids: nodal finite elements on quads/hexes.

The solid is a conforming mesh of bilinear quadrilaterals (2D) or
trilinear hexahedra (3D).  Deformation is interpolated from nodal
positions, the first Piola-Kirchhoff stress is evaluated at Gauss points,
and the nodal force density G solves the weak-form system

    M G = R,   M_mn = int phi_m phi_n dX,
               R_n  = -int P : grad_X phi_n dX,

with a Gauss rule exact for M.  Fluid coupling evaluates positions and
force densities at adaptively chosen interaction points inside each
element (spacing tied to the Eulerian meshwidth), spreads with the
regularized delta, and restricts velocity by an L2 projection onto the
element basis using the same points, which makes the two transfers exact
adjoints.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse
from scipy.sparse.linalg import cg, splu

from .errors import ContractViolation, LinearSolverError, LocationError
from .kernels import IB4
from .transfer import interpolate_faces, spread_to_faces

DIRECT_SOLVE_NODE_LIMIT = 20000


def _corner_signs(dim):
    """(nen, dim) +-1 pattern of the multi-linear element corners."""
    if dim == 2:
        return np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    return np.array(
        [
            [-1, -1, -1],
            [1, -1, -1],
            [1, 1, -1],
            [-1, 1, -1],
            [-1, -1, 1],
            [1, -1, 1],
            [1, 1, 1],
            [-1, 1, 1],
        ],
        dtype=float,
    )


def shape_functions(xi, dim):
    """Interpolatory multi-linear basis at points xi: returns (npts, nen)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    S = _corner_signs(dim)
    vals = np.ones((xi.shape[0], S.shape[0]))
    for a in range(dim):
        vals *= 0.5 * (1.0 + S[None, :, a] * xi[:, None, a])
    return vals


def shape_gradients(xi, dim):
    """d(phi)/d(xi) at points xi: returns (npts, nen, dim)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    S = _corner_signs(dim)
    npts, nen = xi.shape[0], S.shape[0]
    grads = np.ones((npts, nen, dim))
    for b in range(dim):
        for a in range(dim):
            if a == b:
                grads[:, :, b] *= 0.5 * S[None, :, a]
            else:
                grads[:, :, b] *= 0.5 * (1.0 + S[None, :, a] * xi[:, None, a])
    return grads


_EDGES_2D = ((0, 1), (1, 2), (2, 3), (3, 0))
_FACES_3D = (
    (0, 3, 2, 1),
    (4, 5, 6, 7),
    (0, 1, 5, 4),
    (2, 3, 7, 6),
    (1, 2, 6, 5),
    (3, 0, 4, 7),
)
# reference-axis edge pairs used for size estimates
_AXIS_EDGES = {
    2: (((0, 1), (3, 2)), ((0, 3), (1, 2))),
    3: (
        ((0, 1), (3, 2), (4, 5), (7, 6)),
        ((0, 3), (1, 2), (4, 7), (5, 6)),
        ((0, 4), (1, 5), (2, 6), (3, 7)),
    ),
}


class FEMesh:
    """Nodal FE mesh: reference coords, connectivity, current coords."""

    def __init__(self, nodes, elems, validate=True):
        self.nodes = np.array(nodes, dtype=float)
        self.elems = np.array(elems, dtype=int)
        if self.nodes.ndim != 2 or self.nodes.shape[1] not in (2, 3):
            raise ContractViolation("nodes must have shape (N, 2|3)")
        dim = self.nodes.shape[1]
        nen = 4 if dim == 2 else 8
        if self.elems.ndim != 2 or self.elems.shape[1] != nen:
            raise ContractViolation(f"elements must have {nen} nodes in {dim}D")
        self.current = self.nodes.copy()
        self._mass_solver = None
        if validate and np.any(self.reference_jacobians() <= 0):
            raise ContractViolation("every element needs a positive Jacobian")

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elems(self):
        return self.elems.shape[0]

    def gauss_data(self, order):
        pts_1d, wts_1d = leggauss(order)
        grids = np.meshgrid(*([pts_1d] * self.dim), indexing="ij")
        xi = np.column_stack([a.ravel() for a in grids])
        wgrids = np.meshgrid(*([wts_1d] * self.dim), indexing="ij")
        w = np.prod(np.column_stack([a.ravel() for a in wgrids]), axis=1)
        return xi, w

    def reference_jacobians(self, order=2):
        """det(dX/dxi) at the Gauss points of every element: (E, n_gauss)."""
        xi, _ = self.gauss_data(order)
        dN = shape_gradients(xi, self.dim)
        Xe = self.nodes[self.elems]
        J = np.einsum("ema,gmb->egab", Xe, dN, optimize=True)
        return np.linalg.det(J)

    def displace(self, coords):
        self.current = np.array(coords, dtype=float)

    def mass_matrix(self):
        """Consistent mass matrix (reference measure), exact Gauss rule."""
        xi, w = self.gauss_data(3)
        Nv = shape_functions(xi, self.dim)
        dN = shape_gradients(xi, self.dim)
        Xe = self.nodes[self.elems]
        J = np.einsum("ema,gmb->egab", Xe, dN, optimize=True)
        detJ = np.linalg.det(J)
        Me = np.einsum("gm,gn,eg,g->emn", Nv, Nv, detJ, w, optimize=True)
        rows = np.repeat(self.elems[:, :, None], self.elems.shape[1], axis=2)
        cols = np.repeat(self.elems[:, None, :], self.elems.shape[1], axis=1)
        M = sparse.coo_matrix(
            (Me.ravel(), (rows.ravel(), cols.ravel())),
            shape=(self.n_nodes, self.n_nodes),
        )
        return M.tocsc()

    def mass_solve(self, rhs):
        """Solve M x = rhs (columns are independent right-hand sides)."""
        if self._mass_solver is None:
            M = self.mass_matrix()
            if self.n_nodes <= DIRECT_SOLVE_NODE_LIMIT:
                lu = splu(M)
                self._mass_solver = lu.solve
            else:
                def solver(b, M=M.tocsr()):
                    out = np.empty_like(b)
                    for j in range(b.shape[1]):
                        x, info = cg(M, b[:, j], rtol=1e-12, atol=0.0)
                        if info != 0:
                            raise LinearSolverError("mass solve failed", iterations=info)
                        out[:, j] = x
                    return out

                self._mass_solver = solver
        return self._mass_solver(rhs)


def _pk_stress_batch(F, law):
    """First PK stress on batched F without the strict det check.

    det F <= 0 at a quadrature point is reported as a warning: the
    log(I3) stabilization produces a large restoring stress, which is the
    intended response rather than an abort.
    """
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        warnings.warn("inverted element detected (det F <= 0)", RuntimeWarning)
        J = np.where(np.abs(J) < 1e-12, 1e-12, J)
    dim = F.shape[-1]
    I1 = np.einsum("...ij,...ij->...", F, F)
    if dim == 2:
        I1 = I1 + 1.0
    cexp = law.c * np.exp(law.b * (I1 - 3.0))
    p_s = cexp - law.beta_s * np.log(J * J)
    Finv_T = np.swapaxes(np.linalg.inv(F), -1, -2)
    return cexp[..., None, None] * F - p_s[..., None, None] * Finv_T


def _element_kinematics(mesh, order):
    xi, w = mesh.gauss_data(order)
    Nv = shape_functions(xi, mesh.dim)
    dN = shape_gradients(xi, mesh.dim)
    Xe = mesh.nodes[mesh.elems]
    J = np.einsum("ema,gmb->egab", Xe, dN, optimize=True)
    detJ = np.linalg.det(J)
    Jinv = np.linalg.inv(J)
    dNX = np.einsum("gmb,egba->egma", dN, Jinv, optimize=True)
    return xi, w, Nv, dNX, detJ


def internal_nodal_forces(mesh, law, coords=None, order=2):
    """Assembled weak-form nodal forces R_n = -int P : grad phi_n dX."""
    coords = mesh.current if coords is None else coords
    _, w, _, dNX, detJ = _element_kinematics(mesh, order)
    xe = coords[mesh.elems]
    F = np.einsum("emi,egma->egia", xe, dNX, optimize=True)
    P = _pk_stress_batch(F, law)
    Re = -np.einsum("egia,egma,eg,g->emi", P, dNX, detJ, w, optimize=True)
    R = np.zeros_like(coords)
    np.add.at(R, mesh.elems, Re)
    return R


def nodal_force_density(mesh, law, coords=None):
    """Nodal force densities G: the mass solve applied to the weak forces."""
    R = internal_nodal_forces(mesh, law, coords)
    return mesh.mass_solve(R)


def deformation_gradient(mesh, X, coords=None):
    """F = dX(chi)/dX at a reference point located inside the mesh."""
    coords = mesh.current if coords is None else coords
    X = np.asarray(X, dtype=float)
    elem, xi = locate_point(mesh, X)
    dN = shape_gradients(xi[None, :], mesh.dim)[0]
    Xe = mesh.nodes[mesh.elems[elem]]
    xe = coords[mesh.elems[elem]]
    J = np.einsum("ma,mb->ab", Xe, dN)
    dNX = dN @ np.linalg.inv(J)
    return np.einsum("mi,ma->ia", xe, dNX)


def locate_point(mesh, X, tol=1e-10):
    """Find (element, xi) with X(xi) = X by Newton on candidate elements."""
    Xe_all = mesh.nodes[mesh.elems]
    lo = Xe_all.min(axis=1) - tol
    hi = Xe_all.max(axis=1) + tol
    candidates = np.where(np.all((X >= lo) & (X <= hi), axis=1))[0]
    for e in candidates:
        Xe = Xe_all[e]
        xi = np.zeros(mesh.dim)
        for _ in range(30):
            r = shape_functions(xi[None, :], mesh.dim)[0] @ Xe - X
            if np.max(np.abs(r)) < tol:
                break
            dN = shape_gradients(xi[None, :], mesh.dim)[0]
            J = np.einsum("ma,mb->ab", Xe, dN)
            xi = xi - np.linalg.solve(J.T, r)
        if np.max(np.abs(r)) < tol and np.all(np.abs(xi) <= 1.0 + 1e-8):
            return e, np.clip(xi, -1.0, 1.0)
    raise LocationError(f"point {X} lies outside the mesh")


@dataclass
class InteractionQuadrature:
    """Per-element interaction points in reference coordinates."""

    elem: np.ndarray       # (Q,) element index per point
    xi: np.ndarray         # (Q, dim)
    weights: np.ndarray    # (Q,) reference measure
    shape_vals: np.ndarray  # (Q, nen) cached basis values
    counts: np.ndarray     # (E, dim) points per axis

    @property
    def n_points(self):
        return self.elem.shape[0]

    def element_weight_sums(self, n_elems):
        sums = np.zeros(n_elems)
        np.add.at(sums, self.elem, self.weights)
        return sums


def _edge_lengths(coords_e, dim):
    """Average current edge length per reference axis: (E, dim)."""
    out = np.zeros((coords_e.shape[0], dim))
    for d, pairs in enumerate(_AXIS_EDGES[dim]):
        acc = 0.0
        for a, b in pairs:
            seg = coords_e[:, b, :] - coords_e[:, a, :]
            acc = acc + np.sqrt(np.sum(seg * seg, axis=1))
        out[:, d] = acc / len(pairs)
    return out


def build_quadrature(mesh, h, coords=None, min_points=2, max_points=12):
    """Adaptive tensor-Gauss interaction points: deformed spacing <= h/2.

    Per element and reference axis, the point count is the smallest n with
    (current edge length) / n <= h / 2, floored at min_points so the rule
    integrates the reference volume exactly.
    """
    if h <= 0:
        raise ContractViolation("meshwidth must be positive")
    coords = mesh.current if coords is None else coords
    lengths = _edge_lengths(coords[mesh.elems], mesh.dim)
    counts = np.maximum(min_points, np.ceil(2.0 * lengths / h).astype(int))
    counts = np.minimum(counts, max_points)
    dim = mesh.dim
    rule_cache = {}
    xi_parts, w_parts, elem_parts = [], [], []
    for e in range(mesh.n_elems):
        key = tuple(counts[e])
        if key not in rule_cache:
            axes = [leggauss(n) for n in key]
            grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
            xi = np.column_stack([a.ravel() for a in grids])
            wg = np.meshgrid(*[a[1] for a in axes], indexing="ij")
            w = np.prod(np.column_stack([a.ravel() for a in wg]), axis=1)
            rule_cache[key] = (xi, w)
        xi, w = rule_cache[key]
        xi_parts.append(xi)
        w_parts.append(w)
        elem_parts.append(np.full(xi.shape[0], e, dtype=int))
    xi_all = np.concatenate(xi_parts)
    elem_all = np.concatenate(elem_parts)
    dN = shape_gradients(xi_all, dim)
    Xe = mesh.nodes[mesh.elems[elem_all]]
    J = np.einsum("qma,qmb->qab", Xe, dN, optimize=True)
    w_all = np.concatenate(w_parts) * np.linalg.det(J)
    Nv = shape_functions(xi_all, dim)
    return InteractionQuadrature(elem_all, xi_all, w_all, Nv, counts)


def interaction_positions(quad, mesh, coords=None):
    """Deformed positions of the interaction points: (Q, dim)."""
    coords = mesh.current if coords is None else coords
    xe = coords[mesh.elems[quad.elem]]
    return np.einsum("qm,qmi->qi", quad.shape_vals, xe, optimize=True)


def spread_solid_force(G, quad, mesh, g, kernel=IB4, bc=None, coords=None):
    """Spread nodal force densities through the interaction points (S^w)."""
    from .grid import BoundarySpec

    if bc is None:
        bc = BoundarySpec.no_slip(g.dim)
    Ge = np.asarray(G, dtype=float)[mesh.elems[quad.elem]]
    values = np.einsum("qm,qmi->qi", quad.shape_vals, Ge, optimize=True)
    points = interaction_positions(quad, mesh, coords)
    return spread_to_faces(points, values, quad.weights, g, bc, kernel)


def _projection_matrix(quad, mesh):
    conn = mesh.elems[quad.elem]
    nen = conn.shape[1]
    blocks = np.einsum(
        "qm,qn,q->qmn", quad.shape_vals, quad.shape_vals, quad.weights, optimize=True
    )
    rows = np.repeat(conn[:, :, None], nen, axis=2)
    cols = np.repeat(conn[:, None, :], nen, axis=1)
    A = sparse.coo_matrix(
        (blocks.ravel(), (rows.ravel(), cols.ravel())),
        shape=(mesh.n_nodes, mesh.n_nodes),
    )
    return A.tocsc()


def restrict_solid_velocity(u, quad, mesh, g, kernel=IB4, bc=None, coords=None):
    """Velocity restriction (R^w): interpolate at the interaction points and
    L2-project onto the nodal basis with the interaction weights.

    The projection solves a quadrature-weighted mass system, which is what
    makes R^w the exact adjoint of S^w.
    """
    from .grid import BoundarySpec

    if bc is None:
        bc = BoundarySpec.no_slip(g.dim)
    points = interaction_positions(quad, mesh, coords)
    U_pts = interpolate_faces(u, points, g, bc, kernel)
    conn = mesh.elems[quad.elem]
    rhs = np.zeros((mesh.n_nodes, g.dim))
    contrib = quad.shape_vals[:, :, None] * (quad.weights[:, None, None] * U_pts[:, None, :])
    np.add.at(rhs, conn, contrib)
    lu = getattr(quad, "_proj_lu", None)
    if lu is None:
        try:
            lu = splu(_projection_matrix(quad, mesh))
        except RuntimeError as exc:
            raise LinearSolverError(f"degenerate interaction quadrature: {exc}")
        quad._proj_lu = lu
    return lu.solve(rhs)


def gauss_point_stress(mesh, law, coords=None, order=2):
    """Deformation and stress samples at element Gauss points.

    Returns a dict with reference positions, deformed positions, F, first
    PK stress, and Cauchy stress (all shaped (E, n_gauss, ...)).
    """
    coords = mesh.current if coords is None else coords
    xi, w, Nv, dNX, detJ = _element_kinematics(mesh, order)
    Xe = mesh.nodes[mesh.elems]
    xe = coords[mesh.elems]
    X_pts = np.einsum("gm,emi->egi", Nv, Xe, optimize=True)
    x_pts = np.einsum("gm,emi->egi", Nv, xe, optimize=True)
    F = np.einsum("emi,egma->egia", xe, dNX, optimize=True)
    P = _pk_stress_batch(F, law)
    J = np.linalg.det(F)
    sigma = np.einsum("egia,egja->egij", P, F, optimize=True) / J[..., None, None]
    return {
        "reference": X_pts,
        "deformed": x_pts,
        "F": F,
        "P": P,
        "cauchy": sigma,
        "detJ_ref": detJ,
        "gauss_weights": w,
    }


# ---------------------------------------------------------------------------
# boundary facets (used for pressure loading and surface tagging)


def boundary_facets(mesh):
    """Facets that belong to exactly one element.

    Returns (facets, owners): facets is an (n, 2|4) node-id array ordered so
    the facet normal points out of the owning element; owners gives the
    element index of each facet.
    """
    if mesh.dim == 2:
        local = _EDGES_2D
    else:
        local = _FACES_3D
    all_facets = []
    owners = []
    for e in range(mesh.n_elems):
        conn = mesh.elems[e]
        for loc in local:
            all_facets.append(tuple(conn[i] for i in loc))
            owners.append(e)
    keys = {}
    for idx, f in enumerate(all_facets):
        key = tuple(sorted(f))
        keys.setdefault(key, []).append(idx)
    facets, own = [], []
    for key, idxs in keys.items():
        if len(idxs) == 1:
            facets.append(all_facets[idxs[0]])
            own.append(owners[idxs[0]])
    return np.array(facets, dtype=int), np.array(own, dtype=int)


# ---------------------------------------------------------------------------
# FE mesh files


def write_fe_mesh(path, mesh):
    """Header `femesh dim <2|3> nodes <N> elems <E>`, then `id x y [z]`
    node lines and `id n0 ...` element lines."""
    with open(path, "w") as f:
        f.write(f"femesh dim {mesh.dim} nodes {mesh.n_nodes} elems {mesh.n_elems}\n")
        for i, x in enumerate(mesh.nodes):
            f.write(f"{i} " + " ".join(format(v, ".17g") for v in x) + "\n")
        for i, conn in enumerate(mesh.elems):
            f.write(f"{i} " + " ".join(str(n) for n in conn) + "\n")


def read_fe_mesh(path):
    with open(path) as f:
        header = f.readline().split()
        if not header or header[0] != "femesh":
            raise ContractViolation(f"not an FE mesh file: {path}")
        dim = int(header[header.index("dim") + 1])
        n_nodes = int(header[header.index("nodes") + 1])
        n_elems = int(header[header.index("elems") + 1])
        nodes = np.empty((n_nodes, dim))
        for _ in range(n_nodes):
            parts = f.readline().split()
            nodes[int(parts[0])] = [float(v) for v in parts[1:]]
        nen = 4 if dim == 2 else 8
        elems = np.empty((n_elems, nen), dtype=int)
        for _ in range(n_elems):
            parts = f.readline().split()
            elems[int(parts[0])] = [int(v) for v in parts[1:]]
    return FEMesh(nodes, elems)
