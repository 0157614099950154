"""Multi-frequency inverse medium scattering on the unit disk.

Forward Helmholtz solvers (P1 finite elements with an absorbing boundary
condition or an exact Hankel-series exterior coupling), a Born initializer,
and a recursive-linearization reconstruction over increasing wavenumbers.
"""

from .mesh import Mesh, generate_disk_mesh, refine
from .grid import ReconGrid

__all__ = ["Mesh", "ReconGrid", "generate_disk_mesh", "refine"]
__version__ = "0.1.0"
