"""Parametric scene generators: annuli, tubes, root-like vessels with sinus
bulges, membrane leaflets, and the 2D channel-with-leaflets demo scene.

All generators produce meshes in CGS units (cm).  FE meshes are returned
with a `tags` attribute mapping named node sets (inner/outer surfaces,
end rings) to node-id arrays; tags are a generator convenience and are
not part of the mesh file format.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SceneSpecError
from .fesolid import FEMesh
from .fiber import FiberMesh, TetherSet


@dataclass(frozen=True)
class TubeSpec:
    """Thick-walled cylinder: 2D annulus or 3D tube."""

    inner_radius: float
    thickness: float
    n_radial: int
    n_theta: int
    dim: int = 2
    length: float = 0.0
    n_axial: int = 0
    center: tuple = (0.0, 0.0)

    def validate(self):
        if self.thickness <= 0:
            raise SceneSpecError("wall thickness must be positive")
        if self.inner_radius <= 0:
            raise SceneSpecError("inner radius must be positive")
        if self.n_radial < 1 or self.n_theta < 3:
            raise SceneSpecError("need at least 1 radial and 3 angular elements")
        if self.dim == 3 and (self.length <= 0 or self.n_axial < 1):
            raise SceneSpecError("3D tubes need a positive length and n_axial >= 1")
        if self.dim not in (2, 3):
            raise SceneSpecError("dimension must be 2 or 3")


def make_tube(spec):
    """Structured quad annulus (2D) or hex tube (3D) with positive Jacobians."""
    spec.validate()
    nr, nt = spec.n_radial, spec.n_theta
    radii = spec.inner_radius + spec.thickness * np.arange(nr + 1) / nr
    theta = 2.0 * np.pi * np.arange(nt) / nt
    cx, cy = spec.center[0], spec.center[1]
    if spec.dim == 2:
        nodes = np.empty(((nr + 1) * nt, 2))
        for i, r in enumerate(radii):
            ids = i * nt + np.arange(nt)
            nodes[ids, 0] = cx + r * np.cos(theta)
            nodes[ids, 1] = cy + r * np.sin(theta)
        elems = []
        for i in range(nr):
            for j in range(nt):
                jp = (j + 1) % nt
                elems.append([i * nt + j, (i + 1) * nt + j, (i + 1) * nt + jp, i * nt + jp])
        mesh = FEMesh(nodes, np.array(elems))
        mesh.tags = {
            "inner": np.arange(nt),
            "outer": nr * nt + np.arange(nt),
        }
        return mesh
    na = spec.n_axial
    z0 = spec.center[2] if len(spec.center) > 2 else 0.0
    zs = z0 + spec.length * np.arange(na + 1) / na
    n_ring = (nr + 1) * nt
    nodes = np.empty(((na + 1) * n_ring, 3))
    for a, z in enumerate(zs):
        for i, r in enumerate(radii):
            ids = a * n_ring + i * nt + np.arange(nt)
            nodes[ids, 0] = cx + r * np.cos(theta)
            nodes[ids, 1] = cy + r * np.sin(theta)
            nodes[ids, 2] = z
    elems = []
    for a in range(na):
        for i in range(nr):
            for j in range(nt):
                jp = (j + 1) % nt
                base0 = a * n_ring
                base1 = (a + 1) * n_ring
                elems.append(
                    [
                        base0 + i * nt + j,
                        base0 + (i + 1) * nt + j,
                        base0 + (i + 1) * nt + jp,
                        base0 + i * nt + jp,
                        base1 + i * nt + j,
                        base1 + (i + 1) * nt + j,
                        base1 + (i + 1) * nt + jp,
                        base1 + i * nt + jp,
                    ]
                )
    mesh = FEMesh(nodes, np.array(elems))
    inner = np.concatenate([a * n_ring + np.arange(nt) for a in range(na + 1)])
    outer = np.concatenate([a * n_ring + nr * nt + np.arange(nt) for a in range(na + 1)])
    mesh.tags = {
        "inner": inner,
        "outer": outer,
        "end_lo": np.arange(n_ring),
        "end_hi": na * n_ring + np.arange(n_ring),
    }
    return mesh


BERDAJS_ANGLES = (136.22, 122.48, 101.3)


@dataclass(frozen=True)
class RootSpec:
    """Idealized root-like vessel: straight tube with three sinus bulges."""

    aortic_diameter: float = 3.0
    sinus_diameter: float = 3.5
    thickness: float = 0.2
    length: float = 10.0
    sinus_angles: tuple = (120.0, 120.0, 120.0)
    symmetric: bool = True
    n_radial: int = 1
    n_theta: int = 24
    n_axial: int = 10
    sinus_start: float = 0.15   # fraction of length where the bulge begins
    sinus_height: float = 0.35  # fraction of length covered by the bulge
    center: tuple = (0.0, 0.0, 0.0)

    def validate(self):
        if abs(sum(self.sinus_angles) - 360.0) > 1e-9:
            raise SceneSpecError("sinus angles must sum to 360 degrees")
        if self.thickness <= 0:
            raise SceneSpecError("wall thickness must be positive")
        if self.sinus_diameter < self.aortic_diameter:
            raise SceneSpecError("sinus diameter must be >= aortic diameter")
        if self.symmetric and self.n_theta % 3 != 0:
            raise SceneSpecError("symmetric roots need n_theta divisible by 3")


def _sector_bounds(angles_deg):
    edges = np.concatenate([[0.0], np.cumsum(np.asarray(angles_deg, dtype=float))])
    return np.deg2rad(edges)


def _root_lumen_radius(theta, z_frac, spec):
    """Luminal radius at angle theta and axial fraction z_frac in [0, 1]."""
    r_a = 0.5 * spec.aortic_diameter
    r_s = 0.5 * spec.sinus_diameter
    edges = _sector_bounds(spec.sinus_angles)
    th = np.mod(theta, 2.0 * np.pi)
    bump_t = np.zeros_like(np.asarray(th, dtype=float))
    for k in range(3):
        inside = (th >= edges[k]) & (th <= edges[k + 1])
        s = (th - edges[k]) / (edges[k + 1] - edges[k])
        bump_t = np.where(inside, np.sin(np.pi * s) ** 2, bump_t)
    zf = np.asarray(z_frac, dtype=float)
    s_lo, s_h = spec.sinus_start, spec.sinus_height
    inside_z = (zf >= s_lo) & (zf <= s_lo + s_h)
    bump_z = np.where(inside_z, np.sin(np.pi * (zf - s_lo) / s_h) ** 2, 0.0)
    return r_a + (r_s - r_a) * bump_t * bump_z


def make_root(spec):
    """Hex-mesh vessel with three sinus bulges over the given angular spans."""
    spec.validate()
    nr, nt, na = spec.n_radial, spec.n_theta, spec.n_axial
    theta = 2.0 * np.pi * np.arange(nt) / nt
    zf = np.arange(na + 1) / na
    cx, cy, z0 = spec.center
    n_ring = (nr + 1) * nt
    nodes = np.empty(((na + 1) * n_ring, 3))
    for a in range(na + 1):
        lumen = _root_lumen_radius(theta, zf[a], spec)
        for i in range(nr + 1):
            r = lumen + spec.thickness * i / nr
            ids = a * n_ring + i * nt + np.arange(nt)
            nodes[ids, 0] = cx + r * np.cos(theta)
            nodes[ids, 1] = cy + r * np.sin(theta)
            nodes[ids, 2] = z0 + spec.length * zf[a]
    elems = []
    for a in range(na):
        for i in range(nr):
            for j in range(nt):
                jp = (j + 1) % nt
                b0, b1 = a * n_ring, (a + 1) * n_ring
                elems.append(
                    [
                        b0 + i * nt + j, b0 + (i + 1) * nt + j,
                        b0 + (i + 1) * nt + jp, b0 + i * nt + jp,
                        b1 + i * nt + j, b1 + (i + 1) * nt + j,
                        b1 + (i + 1) * nt + jp, b1 + i * nt + jp,
                    ]
                )
    mesh = FEMesh(nodes, np.array(elems))
    mesh.tags = {
        "inner": np.concatenate([a * n_ring + np.arange(nt) for a in range(na + 1)]),
        "outer": np.concatenate(
            [a * n_ring + nr * nt + np.arange(nt) for a in range(na + 1)]
        ),
        "end_lo": np.arange(n_ring),
        "end_hi": na * n_ring + np.arange(n_ring),
    }
    return mesh


@dataclass(frozen=True)
class LeafletSpec:
    """Membrane leaflets for a root-like vessel: one per sinus sector."""

    root: RootSpec
    n_span: int = 13          # nodes commissure-to-commissure
    n_radial: int = 7         # nodes attachment-to-free-edge
    coapt_radius: float = 0.15
    coapt_height: float = 0.97
    leaflet_radius: float = 1.45
    k_commissural: float = 7.5e6
    stiffness_ratio: float = 10.0
    c_bend: float = 1e-3

    def validate(self):
        if self.n_span < 4 or self.n_radial < 3:
            raise SceneSpecError("leaflet lattice too coarse")
        if self.coapt_radius <= 0:
            raise SceneSpecError("coaptation radius must be positive")
        if self.stiffness_ratio <= 0:
            raise SceneSpecError("stiffness ratio must be positive")


def make_leaflet_membranes(spec):
    """Three two-family membrane leaflets spanning the sinus sectors.

    Each leaflet is a ruled surface from a scalloped attachment curve on
    the luminal wall to a free-edge curve near the axis, represented as
    two co-located FiberMesh objects: the commissural family (fibers
    running commissure to commissure, stiff) and the radial family
    (attachment to free edge, softer by `stiffness_ratio`, carrying the
    bending stiffness).  Returns a list of (commissural, radial) pairs
    flattened into a single list.
    """
    spec.validate()
    root = spec.root
    root.validate()
    edges = _sector_bounds(root.sinus_angles)
    cx, cy, z0 = root.center
    z_annulus = z0 + root.length * root.sinus_start
    z_free = z_annulus + spec.coapt_height
    scallop_drop = min(spec.leaflet_radius, 0.9 * spec.coapt_height)
    meshes = []
    for k in range(3):
        th0, th1 = edges[k], edges[k + 1]
        s = np.linspace(0.0, 1.0, spec.n_span)
        w = np.linspace(0.0, 1.0, spec.n_radial)
        th = th0 + s * (th1 - th0)
        zf_att = (z_annulus + scallop_drop * (1.0 - np.sin(np.pi * s)) - z0) / root.length
        lumen = _root_lumen_radius(th, np.clip(zf_att, 0.0, 1.0), root)
        attach = np.column_stack(
            [cx + lumen * np.cos(th), cy + lumen * np.sin(th),
             z_annulus + scallop_drop * (1.0 - np.sin(np.pi * s))]
        )
        rho_f = spec.coapt_radius + (lumen - spec.coapt_radius) * np.abs(2.0 * s - 1.0)
        free = np.column_stack(
            [cx + rho_f * np.cos(th), cy + rho_f * np.sin(th), np.full_like(th, z_free)]
        )
        surf = (1.0 - w[None, :, None]) * attach[:, None, :] + w[None, :, None] * free[:, None, :]
        # curvilinear measure: span arclength x radial arclength per node
        d_span = np.linalg.norm(np.diff(surf, axis=0), axis=2)
        d_rad = np.linalg.norm(np.diff(surf, axis=1), axis=2)
        span_share = np.zeros(surf.shape[:2])
        span_share[:-1, :] += 0.5 * d_span
        span_share[1:, :] += 0.5 * d_span
        rad_share = np.zeros(surf.shape[:2])
        rad_share[:, :-1] += 0.5 * d_rad
        rad_share[:, 1:] += 0.5 * d_rad
        dq = span_share * rad_share
        k_rad = spec.k_commissural / spec.stiffness_ratio
        radial = FiberMesh(
            surf, dq,
            np.full(surf.shape[:2], k_rad),
            np.full(surf.shape[:2], spec.c_bend),
            q_coord=np.broadcast_to(s[:, None], surf.shape[:2]).copy(),
            r_coord=np.broadcast_to(w[None, :], surf.shape[:2]).copy(),
        )
        surf_t = np.swapaxes(surf, 0, 1)
        commissural = FiberMesh(
            surf_t, np.swapaxes(dq, 0, 1),
            np.full(surf_t.shape[:2], spec.k_commissural),
            np.zeros(surf_t.shape[:2]),
            q_coord=np.broadcast_to(w[:, None], surf_t.shape[:2]).copy(),
            r_coord=np.broadcast_to(s[None, :], surf_t.shape[:2]).copy(),
        )
        meshes.append(commissural)
        meshes.append(radial)
    return meshes


@dataclass(frozen=True)
class ChannelValveSpec:
    """2D channel with one or two flexible fiber leaflets across it.

    wall_margin offsets the anchors from the channel walls so every node
    keeps the regularized-kernel support inside the domain; the no-slip
    boundary layer seals the residual gap.
    """

    length: float = 4.0
    height: float = 2.0
    leaflet_x: float = 1.25
    leaflet_length: float = 1.1
    n_nodes: int = 33
    k_stretch: float = 4.0e5
    c_bend: float = 40.0
    k_tether: float = 4.0e6
    tilt_deg: float = 12.0
    two_leaflets: bool = True
    wall_margin: float = 0.05
    seat_upstream: float = 0.6
    seat_downstream: float = 0.3
    seat_spacing: float = 0.03
    anchor_stagger: float = 0.0
    post_offset: float = 0.0    # > 0 adds a rigid center post this far upstream
    post_half_span: float = 0.35
    throat_half: float = 0.0    # > 0 switches to nozzle masks with sinus pockets
    sinus_length: float = 0.55
    sinus_depth: float = 0.25

    def validate(self):
        if self.leaflet_length >= self.height:
            raise SceneSpecError("leaflet length must be below the channel height")
        if self.leaflet_length <= 0 or self.n_nodes < 5:
            raise SceneSpecError("degenerate leaflet")
        if not 0 < self.leaflet_x < self.length:
            raise SceneSpecError("leaflet anchor must lie inside the channel")
        if self.wall_margin < 0:
            raise SceneSpecError("wall margin must be nonnegative")
        if self.leaflet_x - self.seat_upstream <= 0:
            raise SceneSpecError("seat rail extends past the inlet")
        if self.leaflet_x + self.seat_downstream >= self.length:
            raise SceneSpecError("seat rail extends past the outlet")


def make_channel_leaflet_2d(spec):
    """Straight channel scene: returns (walls, leaflets, tethers).

    Walls are rigid masks: fully tethered straight fiber rails hugging the
    channel walls around the valve station, sealing the kernel-margin gap
    between the domain boundary and the leaflet anchors.  Leaflets are
    straight fiber chains anchored on the rails by stiff tether springs
    on their first two nodes, tilted downstream so forward flow opens
    them and reverse flow closes them.  The tether list is aligned with
    walls + leaflets.
    """
    spec.validate()
    tilt = np.deg2rad(spec.tilt_deg)
    ell = spec.leaflet_length / (spec.n_nodes - 1)
    walls, leaflets, tethers = [], [], []

    def build_mask(points):
        """Fully tethered polyline mask (rigid wall piece)."""
        pts = np.asarray(points, dtype=float)
        segs = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        n_per = np.maximum(1, np.ceil(segs / spec.seat_spacing).astype(int))
        chain = [pts[0]]
        for i, n in enumerate(n_per):
            for k in range(1, n + 1):
                chain.append(pts[i] + (pts[i + 1] - pts[i]) * k / n)
        chain = np.array(chain)[None, :, :]
        d = np.linalg.norm(np.diff(chain[0], axis=0), axis=1)
        dq = np.zeros((1, chain.shape[1]))
        dq[0, :-1] += 0.5 * d
        dq[0, 1:] += 0.5 * d
        mesh = FiberMesh(chain, dq, np.zeros(dq.shape), np.zeros(dq.shape))
        ids = [(0, j) for j in range(chain.shape[1])]
        return mesh, TetherSet(ids, chain[0].copy(), spec.k_tether)

    def build_rail(y):
        x0 = spec.leaflet_x - spec.seat_upstream
        x1 = spec.leaflet_x + spec.seat_downstream
        return build_mask([(x0, y), (x1, y)])

    def build_leaflet(anchor_x, anchor_y, direction):
        t = np.linspace(0.0, spec.leaflet_length, spec.n_nodes)
        x = np.zeros((1, spec.n_nodes, 2))
        x[0, :, 0] = anchor_x + np.sin(tilt) * t
        x[0, :, 1] = anchor_y + direction * np.cos(tilt) * t
        dq = np.full((1, spec.n_nodes), ell)
        dq[0, 0] = dq[0, -1] = 0.5 * ell
        mesh = FiberMesh(
            x, dq,
            np.full((1, spec.n_nodes), spec.k_stretch),
            np.full((1, spec.n_nodes), spec.c_bend),
        )
        ids = [(0, 0), (0, 1)]
        targets = mesh.x[0, :2, :].copy()
        return mesh, TetherSet(ids, targets, spec.k_tether)

    if spec.throat_half > 0.0:
        # nozzle masks: a vertical post up to the annulus corner, then a
        # receding pocket wall (the sinus) that collects the fluid swept
        # by valve closure; the pocket opens downstream
        y_mid = 0.5 * spec.height
        for sign in (+1.0, -1.0) if spec.two_leaflets else (+1.0,):
            y_wall = y_mid - sign * (y_mid - spec.wall_margin)
            y_corner = y_mid - sign * spec.throat_half
            y_pocket = y_corner - sign * spec.sinus_depth
            mask, tet = build_mask(
                [(spec.leaflet_x, y_wall), (spec.leaflet_x, y_corner),
                 (spec.leaflet_x + 0.4 * spec.sinus_length, y_pocket),
                 (spec.leaflet_x + spec.sinus_length, y_pocket)]
            )
            walls.append(mask)
            tethers.append(tet)
        anchor_ys = (y_mid - spec.throat_half, y_mid + spec.throat_half)
    else:
        for y in (spec.wall_margin, spec.height - spec.wall_margin) if spec.two_leaflets \
                else (spec.wall_margin,):
            rail, tet = build_rail(y)
            walls.append(rail)
            tethers.append(tet)
        anchor_ys = (spec.wall_margin, spec.height - spec.wall_margin)
    if spec.post_offset > 0.0:
        # rigid center post: the landing stop for the closed leaflets
        x_post = spec.leaflet_x - spec.post_offset
        y_mid = 0.5 * spec.height
        n = max(5, int(np.ceil(2.0 * spec.post_half_span / spec.seat_spacing)) + 1)
        pts = np.zeros((1, n, 2))
        pts[0, :, 0] = x_post
        pts[0, :, 1] = np.linspace(y_mid - spec.post_half_span,
                                   y_mid + spec.post_half_span, n)
        seg = 2.0 * spec.post_half_span / (n - 1)
        dq = np.full((1, n), seg)
        dq[0, 0] = dq[0, -1] = 0.5 * seg
        post = FiberMesh(pts, dq, np.zeros((1, n)), np.zeros((1, n)))
        walls.append(post)
        tethers.append(TetherSet([(0, j) for j in range(n)], pts[0].copy(),
                                 spec.k_tether))
    # staggered anchors let the leaflets coapt over a zone instead of a point
    mesh, tet = build_leaflet(
        spec.leaflet_x - 0.5 * spec.anchor_stagger, anchor_ys[0], +1.0
    )
    leaflets.append(mesh)
    tethers.append(tet)
    if spec.two_leaflets:
        mesh, tet = build_leaflet(
            spec.leaflet_x + 0.5 * spec.anchor_stagger, anchor_ys[1], -1.0,
        )
        leaflets.append(mesh)
        tethers.append(tet)
    return walls, leaflets, tethers
