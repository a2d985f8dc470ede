"""Regularized delta functions for Lagrangian-Eulerian transfers.

Every structure-fluid transfer in this package (force spreading and
velocity interpolation, for both fiber and solid bodies) is built from a
one-dimensional kernel evaluated at normalized offsets r = (x - X)/h and
tensorized over the spatial dimensions.  The kernels satisfy, for every
real r,

    sum_j kernel(r - j)           = 1      (partition of unity)
    sum_j (r - j) * kernel(r - j) = 0      (zero first moment)

so that interpolation reproduces constants and linears exactly and
spreading conserves total force.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def ib4(r):
    """Four-point piecewise-algebraic kernel.

    Supported on (-2, 2), nonnegative, continuous, and satisfying the
    partition-of-unity, zero-first-moment, and even-odd sum conditions
    (the even- and odd-indexed translates each sum to 1/2, which forces
    ib4(0) = 1/2).  Accepts scalars or arrays.
    """
    r = np.abs(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    inner = r <= 1.0
    outer = (r > 1.0) & (r < 2.0)
    ri = r[inner]
    ro = r[outer]
    out[inner] = 0.125 * (3.0 - 2.0 * ri + np.sqrt(1.0 + 4.0 * ri - 4.0 * ri * ri))
    out[outer] = 0.125 * (5.0 - 2.0 * ro - np.sqrt(-7.0 + 12.0 * ro - 4.0 * ro * ro))
    return out if out.ndim else float(out)


def ib8(r):
    """Eight-point kernel: the 2x dilation ib4(r/2)/2.

    Dilation preserves the unit integral and all translate identities,
    and doubles the physical support so that halving the meshwidth keeps
    the regularized interface thickness fixed.
    """
    return ib4(np.asarray(r, dtype=float) / 2.0) / 2.0


@dataclass(frozen=True)
class KernelFunction:
    """A 1D regularized delta with known support width (in meshwidths)."""

    name: str
    support_width: int
    evaluate: callable

    @property
    def half_width(self):
        return self.support_width // 2


IB4 = KernelFunction("ib4", 4, ib4)
IB8 = KernelFunction("ib8", 8, ib8)

_KERNELS = {"ib4": IB4, "ib8": IB8}


def get_kernel(name):
    """Look up a kernel by its config name ('ib4' or 'ib8')."""
    try:
        return _KERNELS[name]
    except KeyError:
        raise KeyError(f"unknown kernel {name!r}; expected one of {sorted(_KERNELS)}")


def tensor_weight(offset, kernel=IB4):
    """Product of per-axis kernel weights for a dimensionless offset vector."""
    offset = np.asarray(offset, dtype=float)
    w = 1.0
    for r in offset:
        w *= kernel.evaluate(r)
    return w


def stencil_weights_1d(r, kernel=IB4):
    """Kernel weights on the integer stencil covering offset r.

    For points at integer positions j, returns (j0, w) where w[k] is the
    weight of position j0 + k and len(w) == support_width.  r is the
    position measured in units of the grid spacing relative to the
    integer lattice; the stencil is the support_width consecutive
    integers nearest r.
    """
    half = kernel.support_width // 2
    j0 = int(np.floor(r)) - half + 1
    j = j0 + np.arange(kernel.support_width)
    return j0, kernel.evaluate(r - j)
