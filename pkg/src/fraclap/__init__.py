"""Fractional Sobolev calculus on closed Riemannian manifolds.

Heat kernels, subordinated singular kernels, four equivalent fractional
Laplacians, three equivalent fractional seminorms, nonlocal perimeters,
harmonic extensions to one extra dimension, and the associated localized
monotonicity density.
"""

__version__ = "0.1.0"

from .backend import USING_NUMBA, backend_name
from .manifold import (Field, SpectralManifold, build_mesh, build_sphere,
                       build_torus, geodesic_distance)

__all__ = [
    "__version__", "USING_NUMBA", "backend_name",
    "SpectralManifold", "Field",
    "build_torus", "build_sphere", "build_mesh", "geodesic_distance",
]
