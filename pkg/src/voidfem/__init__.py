"""voidfem: plane-strain finite elements for pneumatically actuated voids.

A single hyperelastic third-medium material carries an exact prescribed
hydrostatic Cauchy stress inside meshed voids (pneumatic actuation), acts as
a frictionless contact medium through its compliant neo-Hookean terms, and is
stabilized by a second-gradient penalty on rotation and volume-change
gradients.  A modified-Newton solver with Cholesky-based Hessian modification
traverses instabilities and reads the factorization inertia to locate
critical loads.
"""

__version__ = "0.1.0"

from .materials import BulkModel, ThirdMediumModel  # noqa: F401
from .mesh import Mesh, quadrature  # noqa: F401

__all__ = ["BulkModel", "ThirdMediumModel", "Mesh", "quadrature", "__version__"]
