"""Fiber-based thin elastic structures on curvilinear (q, r) lattices.

A FiberMesh is a structured lattice of nodes: index q labels a fiber and
index r runs along it (a single chain in 2D scenes, a surface in 3D).
Elasticity is the sum of a stretching energy over the links along r,

    E_s = sum_links 1/2 k (|dx|/len0 - 1)^2 A_link,

with A_link the link's share of the curvilinear area, and a bending
energy over interior nodes,

    E_b = sum_nodes 1/2 c_b |D2(x - rest)|^2 dq,

where D2 is the second difference along r at the fiber's rest spacing
and free ends are simply omitted.  Forces are returned as densities with
respect to the node quadrature weights dq, so spreading with those same
weights conserves total force.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, SingularTangentError
from .kernels import IB4
from .transfer import interpolate_faces, spread_to_faces


class FiberMesh:
    """Curvilinear node lattice with positions, rest state, and stiffness."""

    def __init__(self, positions, dq, kstretch, cbend, q_coord=None, r_coord=None,
                 rest=None):
        self.x = np.array(positions, dtype=float)
        if self.x.ndim != 3 or self.x.shape[2] not in (2, 3):
            raise ContractViolation("positions must have shape (nq, nr, dim)")
        self.rest = np.array(rest if rest is not None else positions, dtype=float)
        if self.rest.shape != self.x.shape:
            raise ContractViolation("rest configuration shape mismatch")
        nq, nr, _ = self.x.shape
        self.dq = np.array(dq, dtype=float)
        self.kstretch = np.array(kstretch, dtype=float)
        self.cbend = np.array(cbend, dtype=float)
        for name, arr in (("dq", self.dq), ("kstretch", self.kstretch),
                          ("cbend", self.cbend)):
            if arr.shape != (nq, nr):
                raise ContractViolation(f"{name} must have shape (nq, nr)")
        if np.any(self.dq <= 0):
            raise ContractViolation("quadrature weights must be positive")
        self.q_coord = (
            np.array(q_coord, dtype=float)
            if q_coord is not None
            else np.broadcast_to(np.arange(nq)[:, None], (nq, nr)).astype(float).copy()
        )
        self.r_coord = (
            np.array(r_coord, dtype=float)
            if r_coord is not None
            else np.broadcast_to(np.arange(nr)[None, :], (nq, nr)).astype(float).copy()
        )
        if np.any(self.rest_lengths() <= 0):
            raise ContractViolation("rest link lengths must be positive")

    @property
    def shape(self):
        return self.x.shape[:2]

    @property
    def dim(self):
        return self.x.shape[2]

    @property
    def n_nodes(self):
        return self.x.shape[0] * self.x.shape[1]

    def rest_lengths(self):
        """Per-link rest lengths along r, shape (nq, nr-1)."""
        d = np.diff(self.rest, axis=1)
        return np.sqrt(np.sum(d * d, axis=2))

    def link_stiffness(self):
        """Per-link stretch stiffness: mean of the endpoint node values."""
        return 0.5 * (self.kstretch[:, :-1] + self.kstretch[:, 1:])

    def node_width(self):
        """Curvilinear strip width at each node, recovered from dq.

        dq apportions width * rest-arclength to nodes with half shares at
        the fiber ends, so dividing by each node's arclength share returns
        the width.  Constant width along a fiber makes uniform tension
        exactly force-free at interior nodes.
        """
        ell = self.rest_lengths()
        share = np.zeros(self.dq.shape)
        share[:, 0] = 0.5 * ell[:, 0]
        share[:, -1] += 0.5 * ell[:, -1]
        share[:, 1:-1] = 0.5 * (ell[:, :-1] + ell[:, 1:])
        return self.dq / share

    def link_area(self):
        """Per-link curvilinear area: mean endpoint width times rest length."""
        w = self.node_width()
        return 0.5 * (w[:, :-1] + w[:, 1:]) * self.rest_lengths()

    def rest_spacing(self):
        """Per-fiber uniform rest spacing used by the bending stencil."""
        return np.mean(self.rest_lengths(), axis=1)

    def copy(self):
        m = FiberMesh(self.x, self.dq, self.kstretch, self.cbend,
                      self.q_coord, self.r_coord, rest=self.rest)
        return m


def _tangents(x, rest_len):
    d = np.diff(x, axis=1)
    length = np.sqrt(np.sum(d * d, axis=2))
    if np.any(length < 1e-12 * np.maximum(rest_len, 1e-300)):
        raise SingularTangentError("adjacent fiber nodes coincide")
    return d / length[..., None], length


def stretching_energy(m, x=None):
    """Assembled stretching energy (oracle hook for the force)."""
    x = m.x if x is None else x
    rest_len = m.rest_lengths()
    _, length = _tangents(x, rest_len)
    lam = length / rest_len
    return float(np.sum(0.5 * m.link_stiffness() * (lam - 1.0) ** 2 * m.link_area()))


def stretching_force(m, x=None):
    """Per-node force density from fiber tension, shape (nq, nr, dim).

    Link tension k (stretch - 1) acts along the deformed tangent; each
    link pulls its endpoints together with force tension * area / len0,
    and node forces are converted to densities by the dq weights.
    """
    x = m.x if x is None else x
    rest_len = m.rest_lengths()
    tau, length = _tangents(x, rest_len)
    lam = length / rest_len
    pull = (m.link_stiffness() * (lam - 1.0) * m.link_area() / rest_len)[..., None] * tau
    force = np.zeros_like(x)
    force[:, :-1, :] += pull
    force[:, 1:, :] -= pull
    return force / m.dq[..., None]


def bending_energy(m, x=None):
    x = m.x if x is None else x
    if m.x.shape[1] < 3:
        return 0.0
    dr = m.rest_spacing()[:, None, None]
    y = x - m.rest
    d2 = (y[:, 2:, :] - 2.0 * y[:, 1:-1, :] + y[:, :-2, :]) / dr ** 2
    w = m.cbend[:, 1:-1] * m.dq[:, 1:-1]
    return float(np.sum(0.5 * w * np.sum(d2 * d2, axis=2)))


def bending_force(m, x=None):
    """Per-node force density resisting curvature change along r.

    The second-difference operator is applied to (x - rest), weighted by
    the per-node bending stiffness and dq, and applied again in adjoint
    form; ends with missing neighbors contribute nothing.
    """
    x = m.x if x is None else x
    force = np.zeros_like(x)
    if m.x.shape[1] < 3:
        return force
    dr = m.rest_spacing()[:, None, None]
    y = x - m.rest
    d2 = (y[:, 2:, :] - 2.0 * y[:, 1:-1, :] + y[:, :-2, :]) / dr ** 2
    w = (m.cbend[:, 1:-1] * m.dq[:, 1:-1])[..., None] * d2 / dr ** 2
    force[:, 2:, :] -= w
    force[:, 1:-1, :] += 2.0 * w
    force[:, :-2, :] -= w
    return force / m.dq[..., None]


def elastic_force(m, x=None):
    """Total elastic force density: stretching plus bending."""
    return stretching_force(m, x) + bending_force(m, x)


def spread_fiber_force(F, m, g, kernel=IB4, bc=None, x=None):
    """Spread per-node force densities to the staggered grid (S^l)."""
    from .grid import BoundarySpec

    if bc is None:
        bc = BoundarySpec.no_slip(g.dim)
    if F.shape != m.x.shape:
        raise ContractViolation("force array shape does not match mesh")
    pos = m.x if x is None else x
    pts = pos.reshape(-1, m.dim)
    vals = F.reshape(-1, m.dim)
    return spread_to_faces(pts, vals, m.dq.reshape(-1), g, bc, kernel)


def interp_fiber_velocity(u, m, g, kernel=IB4, bc=None, x=None):
    """Interpolate the staggered velocity at the fiber nodes (R^l)."""
    from .grid import BoundarySpec

    if bc is None:
        bc = BoundarySpec.no_slip(g.dim)
    pos = m.x if x is None else x
    pts = pos.reshape(-1, m.dim)
    return interpolate_faces(u, pts, g, bc, kernel).reshape(m.x.shape)


class TetherSet:
    """Stiff springs anchoring selected nodes to fixed target points."""

    def __init__(self, node_ids, targets, stiffness):
        self.node_ids = np.array(node_ids, dtype=int)      # (n, 2) lattice indices
        self.targets = np.array(targets, dtype=float)       # (n, dim)
        self.stiffness = float(stiffness)

    def force_density(self, m, x=None):
        pos = m.x if x is None else x
        F = np.zeros_like(pos)
        iq, ir = self.node_ids[:, 0], self.node_ids[:, 1]
        pull = -self.stiffness * (pos[iq, ir, :] - self.targets)
        F[iq, ir, :] = pull / m.dq[iq, ir, None]
        return F


# ---------------------------------------------------------------------------
# fiber mesh files


def write_fiber_mesh(path, m):
    """Header `fibermesh dim <2|3> nq <..> nr <..>`, then per-node lines
    `q r x y [z] dq kstretch cbend` in r-fastest order."""
    nq, nr = m.shape
    with open(path, "w") as f:
        f.write(f"fibermesh dim {m.dim} nq {nq} nr {nr}\n")
        for i in range(nq):
            for j in range(nr):
                fields = [m.q_coord[i, j], m.r_coord[i, j]]
                fields += list(m.x[i, j])
                fields += [m.dq[i, j], m.kstretch[i, j], m.cbend[i, j]]
                f.write(" ".join(format(v, ".17g") for v in fields) + "\n")


def read_fiber_mesh(path):
    with open(path) as f:
        header = f.readline().split()
        if not header or header[0] != "fibermesh":
            raise ContractViolation(f"not a fiber mesh file: {path}")
        dim = int(header[header.index("dim") + 1])
        nq = int(header[header.index("nq") + 1])
        nr = int(header[header.index("nr") + 1])
        data = np.array(f.read().split(), dtype=float).reshape(nq * nr, 4 + dim + 1)
    data = data.reshape(nq, nr, -1)
    return FiberMesh(
        positions=data[:, :, 2 : 2 + dim],
        dq=data[:, :, 2 + dim],
        kstretch=data[:, :, 3 + dim],
        cbend=data[:, :, 4 + dim],
        q_coord=data[:, :, 0],
        r_coord=data[:, :, 1],
    )
