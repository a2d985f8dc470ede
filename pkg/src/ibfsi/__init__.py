"""Immersed-boundary / finite-element FSI toolkit on staggered Cartesian grids."""

from .grid import (
    BoundarySpec,
    FaceBC,
    GridSpec,
    StaggeredField,
    convective,
    divergence,
    gradient,
    laplacian,
)
from .kernels import IB4, IB8, KernelFunction, get_kernel, ib4, ib8, tensor_weight

__all__ = [
    "BoundarySpec",
    "FaceBC",
    "GridSpec",
    "StaggeredField",
    "convective",
    "divergence",
    "gradient",
    "laplacian",
    "IB4",
    "IB8",
    "KernelFunction",
    "get_kernel",
    "ib4",
    "ib8",
    "tensor_weight",
]
