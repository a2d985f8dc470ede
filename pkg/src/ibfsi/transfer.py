"""Point-cloud force spreading and velocity interpolation on MAC grids.

The two halves of every Lagrangian-Eulerian transfer:

  spread:       f_face = sum_p  value_p * delta_h(x_face - x_p) * weight_p
  interpolate:  v_p    = sum_faces u_face * delta_h(x_face - x_p) * dV

with delta_h the tensor-product regularized delta (1/h^dim scaling) and
dV = h^dim, so the pair is adjoint under the natural inner products:
the face sum of (spread values) . u times dV equals the point sum of
values . (interpolated u) times weights, to roundoff.

Accumulation order is fixed by the point ordering, so repeated calls are
bitwise reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import OutOfSupportError
from .grid import StaggeredField, component_shape

_BC_CACHE_NOTE = None  # transfers carry no state


def _stencils(points, g, bc, d, kernel):
    """Per-axis stencil indices and 1D weights for component d's lattice.

    Returns (idx, wts): lists over axes of (n_points, support) arrays.
    Raises OutOfSupportError if a stencil leaves a non-periodic lattice.
    """
    n_pts = points.shape[0]
    K = kernel.support_width
    half = K // 2
    offsets = np.arange(K)
    idx, wts = [], []
    for a in range(g.dim):
        s = (points[:, a] - g.origin[a]) / g.h
        if a != d:
            s = s - 0.5
        j0 = np.floor(s).astype(int) - half + 1
        cols = j0[:, None] + offsets[None, :]
        w = kernel.evaluate(s[:, None] - cols)
        size = component_shape(g, bc, d)[a]
        if bc.is_periodic(a):
            cols = np.mod(cols, size)
        elif np.any((cols < 0) | (cols >= size)):
            bad = np.where(np.any((cols < 0) | (cols >= size), axis=1))[0][0]
            raise OutOfSupportError(
                f"point {bad} at {points[bad]} is within {half} meshwidths of "
                "a non-periodic boundary"
            )
        idx.append(cols)
        wts.append(w)
    return idx, wts


def _tensor_terms(idx, wts, shape):
    """Flat indices and product weights over the full tensor stencil."""
    dim = len(idx)
    n_pts = idx[0].shape[0]
    if dim == 2:
        flat = idx[0][:, :, None] * shape[1] + idx[1][:, None, :]
        w = wts[0][:, :, None] * wts[1][:, None, :]
    else:
        flat = (
            (idx[0][:, :, None, None] * shape[1] + idx[1][:, None, :, None])
            * shape[2]
            + idx[2][:, None, None, :]
        )
        w = (
            wts[0][:, :, None, None]
            * wts[1][:, None, :, None]
            * wts[2][:, None, None, :]
        )
    return flat.reshape(n_pts, -1), w.reshape(n_pts, -1)


def spread_to_faces(points, values, weights, g, bc, kernel):
    """Spread weighted point values to a staggered field (adds delta_h scaling)."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    out = StaggeredField.zeros(g, bc)
    scale = 1.0 / g.cell_volume
    for d in range(g.dim):
        idx, wts = _stencils(points, g, bc, d, kernel)
        comp = out.parts[d]
        flat, w = _tensor_terms(idx, wts, comp.shape)
        contrib = (values[:, d] * weights * scale)[:, None] * w
        np.add.at(comp.ravel(), flat.ravel(), contrib.ravel())
    return out


def interpolate_faces(u, points, g, bc, kernel):
    """Interpolate a staggered field at points; returns (n_points, dim)."""
    points = np.asarray(points, dtype=float)
    out = np.zeros((points.shape[0], g.dim))
    for d in range(g.dim):
        idx, wts = _stencils(points, g, bc, d, kernel)
        comp = u.parts[d]
        flat, w = _tensor_terms(idx, wts, comp.shape)
        out[:, d] = np.sum(comp.ravel()[flat] * w, axis=1)
    return out
