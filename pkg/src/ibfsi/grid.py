"""Uniform staggered (MAC) Cartesian grids in 2D and 3D.

Layout conventions (axis 0 = x, axis 1 = y, axis 2 = z):

  pressure / scalars   cell centers   shape  (nx, ny[, nz])
  u (x-velocity)       x-faces        shape  (nx+1, ny[, nz])
  v (y-velocity)       y-faces        shape  (nx, ny+1[, nz])
  w (z-velocity)       z-faces        shape  (nx, ny, nz+1)

On an axis with periodic boundaries the duplicated face is dropped, so
the normal component has nx (not nx+1) entries and index i wraps.

Boundary closures used by the difference operators:

  velocity (Dirichlet) walls   normal face value is the prescribed value;
                               ghosts beyond the wall are linear
                               reflections through the wall value;
                               pressure ghosts are zeroth-order copies
                               (zero normal pressure gradient).
  pressure (traction) planes   the boundary-normal face is a live degree
                               of freedom; velocity ghosts beyond the
                               plane are copies (zero normal gradient);
                               the pressure gradient at the plane uses the
                               prescribed value at half-cell distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

PERIODIC = "periodic"
VELOCITY = "velocity"
PRESSURE = "pressure"


@dataclass(frozen=True)
class GridSpec:
    """Uniform Cartesian grid: cell counts, spacing h (cm), domain corner."""

    dims: tuple
    h: float
    origin: tuple = None

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "dims", dims)
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * len(dims))
        else:
            object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        if self.h <= 0:
            raise ContractViolation("grid spacing h must be positive")
        if any(n < 4 for n in dims):
            raise ContractViolation("all cell counts must be >= 4")
        if len(dims) not in (2, 3):
            raise ContractViolation("dimension must be 2 or 3")
        if len(self.origin) != len(dims):
            raise ContractViolation("origin dimension mismatch")

    @property
    def dim(self):
        return len(self.dims)

    @property
    def cell_volume(self):
        return self.h ** self.dim

    def extent(self, axis):
        return self.dims[axis] * self.h

    def cell_centers(self, axis):
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.h


@dataclass(frozen=True)
class FaceBC:
    """Condition on one domain face: periodic, velocity vector, or pressure."""

    kind: str
    value: tuple = ()

    def velocity_component(self, d):
        if not self.value:
            return 0.0
        return float(self.value[d])

    @property
    def pressure(self):
        if not self.value:
            return 0.0
        return float(self.value[0])


class BoundarySpec:
    """Per-axis (lo, hi) face conditions for the whole domain boundary."""

    def __init__(self, faces):
        self.faces = tuple(tuple(pair) for pair in faces)
        for lo, hi in self.faces:
            if (lo.kind == PERIODIC) != (hi.kind == PERIODIC):
                raise ContractViolation("periodic boundaries must come in pairs")

    @classmethod
    def periodic(cls, dim):
        f = FaceBC(PERIODIC)
        return cls([(f, f)] * dim)

    @classmethod
    def no_slip(cls, dim):
        f = FaceBC(VELOCITY, (0.0,) * dim)
        return cls([(f, f)] * dim)

    @classmethod
    def uniform_inflow(cls, dim, velocity):
        f = FaceBC(VELOCITY, tuple(velocity))
        return cls([(f, f)] * dim)

    @classmethod
    def channel(cls, dim, p_in=0.0, p_out=0.0):
        """Pressure-driven duct along x: traction ends, no-slip side walls."""
        wall = FaceBC(VELOCITY, (0.0,) * dim)
        faces = [(FaceBC(PRESSURE, (p_in,)), FaceBC(PRESSURE, (p_out,)))]
        faces += [(wall, wall)] * (dim - 1)
        return cls(faces)

    def is_periodic(self, axis):
        return self.faces[axis][0].kind == PERIODIC

    def side(self, axis, hi):
        return self.faces[axis][1 if hi else 0]

    @property
    def dim(self):
        return len(self.faces)

    def with_pressures(self, p_lo_x, p_hi_x):
        """Copy with new traction values on the x-axis faces (run loop use)."""
        faces = list(self.faces)
        lo, hi = faces[0]
        faces[0] = (FaceBC(lo.kind, (p_lo_x,)), FaceBC(hi.kind, (p_hi_x,)))
        return BoundarySpec(faces)


def component_shape(g, bc, d):
    """Array shape of velocity component d under the staggering convention."""
    shape = list(g.dims)
    if not bc.is_periodic(d):
        shape[d] += 1
    return tuple(shape)


class StaggeredField:
    """Face-normal velocity components, one array per axis."""

    def __init__(self, parts, grid):
        self.parts = [np.asarray(p, dtype=float) for p in parts]
        self.grid = grid
        if len(self.parts) != grid.dim:
            raise ContractViolation("component count does not match grid dimension")

    @classmethod
    def zeros(cls, g, bc):
        return cls([np.zeros(component_shape(g, bc, d)) for d in range(g.dim)], g)

    def copy(self):
        return StaggeredField([p.copy() for p in self.parts], self.grid)

    def check_shapes(self, g, bc):
        for d, p in enumerate(self.parts):
            if p.shape != component_shape(g, bc, d):
                raise ContractViolation(
                    f"component {d} has shape {p.shape}, expected "
                    f"{component_shape(g, bc, d)}"
                )

    def __add__(self, other):
        return StaggeredField(
            [a + b for a, b in zip(self.parts, other.parts)], self.grid
        )

    def __sub__(self, other):
        return StaggeredField(
            [a - b for a, b in zip(self.parts, other.parts)], self.grid
        )

    def __mul__(self, s):
        return StaggeredField([s * a for a in self.parts], self.grid)

    __rmul__ = __mul__

    def max_abs(self):
        return max(float(np.max(np.abs(p))) if p.size else 0.0 for p in self.parts)


def face_coordinates(g, bc, d):
    """Broadcastable per-axis coordinate arrays for the faces of component d."""
    coords = []
    shape = component_shape(g, bc, d)
    for a in range(g.dim):
        if a == d:
            x = g.origin[a] + np.arange(shape[a]) * g.h
        else:
            x = g.cell_centers(a)
        shp = [1] * g.dim
        shp[a] = shape[a]
        coords.append(x.reshape(shp))
    return coords


def _sl(ndim, axis, s):
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def extend_component(comp, d, g, bc, layers=1):
    """Pad velocity component d with `layers` ghost planes per side, all axes.

    Ghost values implement the boundary closures documented in the module
    header.  Along the component's own axis the lattice sits on the wall,
    so ghost face -k mirrors interior face +k; transverse lattices are
    cell-centered, so ghost cell -k mirrors interior cell k-1.
    """
    ndim = comp.ndim
    ext = comp
    for a in range(ndim):
        n = ext.shape[a]
        shape = list(ext.shape)
        shape[a] = n + 2 * layers
        new = np.empty(shape)
        new[_sl(ndim, a, slice(layers, layers + n))] = ext
        if bc.is_periodic(a):
            new[_sl(ndim, a, slice(0, layers))] = ext[_sl(ndim, a, slice(n - layers, n))]
            new[_sl(ndim, a, slice(layers + n, None))] = ext[_sl(ndim, a, slice(0, layers))]
        else:
            for hi in (False, True):
                fbc = bc.side(a, hi)
                for k in range(1, layers + 1):
                    if hi:
                        tgt = _sl(ndim, a, layers + n - 1 + k)
                        edge = _sl(ndim, a, layers + n - 1)
                        mirror_face = _sl(ndim, a, layers + n - 1 - k)
                        mirror_cell = _sl(ndim, a, layers + n - k)
                    else:
                        tgt = _sl(ndim, a, layers - k)
                        edge = _sl(ndim, a, layers)
                        mirror_face = _sl(ndim, a, layers + k)
                        mirror_cell = _sl(ndim, a, layers + k - 1)
                    if fbc.kind == PRESSURE:
                        new[tgt] = new[edge]
                    elif a == d:
                        new[tgt] = 2.0 * fbc.velocity_component(d) - new[mirror_face]
                    else:
                        new[tgt] = 2.0 * fbc.velocity_component(d) - new[mirror_cell]
        ext = new
    return ext


def gradient(p, g, bc=None):
    """Staggered pressure gradient: face-normal differences / h."""
    p = np.asarray(p, dtype=float)
    if p.shape != g.dims:
        raise ContractViolation(f"cell field shape {p.shape} != grid dims {g.dims}")
    if bc is None:
        bc = BoundarySpec.no_slip(g.dim)
    parts = []
    nd = p.ndim
    for d in range(g.dim):
        out = np.zeros(component_shape(g, bc, d))
        if bc.is_periodic(d):
            out[...] = (p - np.roll(p, 1, axis=d)) / g.h
        else:
            n = g.dims[d]
            out[_sl(nd, d, slice(1, n))] = np.diff(p, axis=d) / g.h
            lo, hi = bc.side(d, False), bc.side(d, True)
            if lo.kind == PRESSURE:
                out[_sl(nd, d, 0)] = (p[_sl(nd, d, 0)] - lo.pressure) / (0.5 * g.h)
            if hi.kind == PRESSURE:
                out[_sl(nd, d, n)] = (hi.pressure - p[_sl(nd, d, n - 1)]) / (0.5 * g.h)
            # velocity walls keep a zero normal pressure gradient (copy ghost)
        parts.append(out)
    return StaggeredField(parts, g)


def divergence(u, g, bc=None):
    """Cell-centered divergence: sum of face-normal differences / h."""
    if bc is None:
        bc = BoundarySpec.no_slip(g.dim)
    u.check_shapes(g, bc)
    out = np.zeros(g.dims)
    for d in range(g.dim):
        comp = u.parts[d]
        nd = comp.ndim
        if bc.is_periodic(d):
            out += (np.roll(comp, -1, axis=d) - comp) / g.h
        else:
            n = g.dims[d]
            out += (
                comp[_sl(nd, d, slice(1, n + 1))] - comp[_sl(nd, d, slice(0, n))]
            ) / g.h
    return out


def laplacian(u, g, bc=None):
    """Componentwise 5-point (2D) / 7-point (3D) Laplacian with BC closures."""
    if bc is None:
        bc = BoundarySpec.no_slip(g.dim)
    u.check_shapes(g, bc)
    h2 = g.h * g.h
    parts = []
    for d in range(g.dim):
        ext = extend_component(u.parts[d], d, g, bc, layers=1)
        nd = ext.ndim
        out = np.zeros(u.parts[d].shape)
        center = ext[tuple(slice(1, -1) for _ in range(nd))]
        for a in range(g.dim):
            plus = ext[
                tuple(slice(2, None) if ax == a else slice(1, -1) for ax in range(nd))
            ]
            minus = ext[
                tuple(slice(0, -2) if ax == a else slice(1, -1) for ax in range(nd))
            ]
            out += (plus - 2.0 * center + minus) / h2
        parts.append(out)
    return StaggeredField(parts, g)


def _minmod3(a, b, c):
    pos = np.minimum(np.minimum(a, b), c)
    neg = np.maximum(np.maximum(a, b), c)
    out = np.where((a > 0) & (b > 0) & (c > 0), pos, 0.0)
    return np.where((a < 0) & (b < 0) & (c < 0), neg, out)


def _limited_slopes(w, axis, theta):
    """Generalized minmod slopes along `axis` (per index, not per length)."""
    nd = w.ndim
    dm = w[_sl(nd, axis, slice(1, -1))] - w[_sl(nd, axis, slice(0, -2))]
    dp = w[_sl(nd, axis, slice(2, None))] - w[_sl(nd, axis, slice(1, -1))]
    return _minmod3(theta * dm, 0.5 * (dm + dp), theta * dp)


def _trim_to(arr, shape):
    """Center-trim equal ghost margins so arr matches `shape`."""
    slices = []
    for have, want in zip(arr.shape, shape):
        excess = have - want
        if excess % 2:
            raise AssertionError("unbalanced ghost trim")
        slices.append(slice(excess // 2, excess // 2 + want))
    return arr[tuple(slices)]


def _advecting_at_midpoints(u, g, bc, d, a):
    """Component a at the midpoints (along axis a) between consecutive points
    of the 2-layer-ghosted d-component lattice.

    Along axis d the advecting component is averaged from cell centers to
    d-faces (no-op offset when a == d, where consecutive-face averages land
    directly on the midpoints).  The slice windows reproduce the ghost
    extents of the reconstruction arrays exactly, including the dropped
    duplicate face on periodic axes.
    """
    comp = extend_component(u.parts[a], a, g, bc, layers=3)
    nd = comp.ndim
    mid = 0.5 * (comp[_sl(nd, d, slice(0, -1))] + comp[_sl(nd, d, slice(1, None))])
    slices = []
    for ax in range(nd):
        m = mid.shape[ax]
        if ax == a == d:
            slices.append(slice(2, m - 2))
        elif ax == d:
            slices.append(slice(0, m - 1) if bc.is_periodic(d) else slice(None))
        elif ax == a:
            slices.append(slice(3, 3 + g.dims[a] + 1))
        else:
            slices.append(slice(1, m - 1))
    return mid[tuple(slices)]


def convective(u, g, bc=None, theta=2.0):
    """Approximation of (u . grad) u at each face, componentwise.

    Second-order upwind: each component is reconstructed to the midpoints
    of its own lattice with generalized-minmod-limited slopes, upwinded on
    the sign of the advecting velocity there, and differenced in flux form
    with the correction w * div(a) subtracted, which makes the result
    exactly zero for constant fields and exact for linear profiles in a
    constant advecting velocity.
    """
    if bc is None:
        bc = BoundarySpec.no_slip(g.dim)
    u.check_shapes(g, bc)
    parts = []
    for d in range(g.dim):
        w = extend_component(u.parts[d], d, g, bc, layers=2)
        nd = w.ndim
        out = np.zeros(u.parts[d].shape)
        for a in range(g.dim):
            slopes = _limited_slopes(w, a, theta)
            wc = w[_sl(nd, a, slice(1, -1))]
            w_left = (
                wc[_sl(nd, a, slice(0, -1))] + 0.5 * slopes[_sl(nd, a, slice(0, -1))]
            )
            w_right = (
                wc[_sl(nd, a, slice(1, None))] - 0.5 * slopes[_sl(nd, a, slice(1, None))]
            )
            adv = _advecting_at_midpoints(u, g, bc, d, a)
            if adv.shape != w_left.shape:
                raise AssertionError(
                    f"advecting lattice misaligned: {adv.shape} vs {w_left.shape}"
                )
            w_up = np.where(
                adv > 0.0, w_left, np.where(adv < 0.0, w_right, 0.5 * (w_left + w_right))
            )
            flux = adv * w_up
            dflux = flux[_sl(nd, a, slice(1, None))] - flux[_sl(nd, a, slice(0, -1))]
            dadv = adv[_sl(nd, a, slice(1, None))] - adv[_sl(nd, a, slice(0, -1))]
            core = wc[_sl(nd, a, slice(1, -1))]
            out += _trim_to((dflux - core * dadv) / g.h, out.shape)
        parts.append(out)
    return StaggeredField(parts, g)


def inner_product_staggered(a, b, g):
    """Natural discrete inner product over faces: sum of products * cell volume."""
    total = 0.0
    for pa, pb in zip(a.parts, b.parts):
        total += float(np.sum(pa * pb))
    return total * g.cell_volume


def inner_product_cells(a, b, g):
    return float(np.sum(np.asarray(a) * np.asarray(b))) * g.cell_volume


# ---------------------------------------------------------------------------
# field snapshot files

_STAGGER_NAMES = ("u", "v", "w")


def write_snapshot(path, values, g, staggering):
    """One field per file: header line, then values in x-fastest order."""
    values = np.asarray(values, dtype=float)
    dims = " ".join(str(n) for n in g.dims)
    origin = " ".join(format(x, ".17g") for x in g.origin)
    header = f"dims {dims}; h {g.h:.17g}; origin {origin}; staggering {staggering}"
    flat = values.flatten(order="F")
    with open(path, "w") as f:
        f.write(header + "\n")
        f.write(" ".join(format(x, ".17g") for x in flat))
        f.write("\n")


def read_snapshot(path):
    """Inverse of write_snapshot: returns (array, meta dict)."""
    with open(path) as f:
        header = f.readline().strip()
        data = np.array(f.read().split(), dtype=float)
    meta = {}
    for part in header.split(";"):
        tokens = part.strip().split()
        key, vals = tokens[0], tokens[1:]
        if key == "dims":
            meta["dims"] = tuple(int(v) for v in vals)
        elif key == "h":
            meta["h"] = float(vals[0])
        elif key == "origin":
            meta["origin"] = tuple(float(v) for v in vals)
        elif key == "staggering":
            meta["staggering"] = vals[0]
    dims = list(meta["dims"])
    stag = meta["staggering"]
    if stag in _STAGGER_NAMES:
        d = _STAGGER_NAMES.index(stag)
        cells = int(np.prod(dims))
        if data.size == cells // dims[d] * (dims[d] + 1):
            dims[d] += 1
        # otherwise the axis is periodic and the face count equals dims[d]
    arr = data.reshape(dims, order="F")
    return arr, meta
