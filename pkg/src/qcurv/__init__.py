"""Numerics for singular constant-curvature profiles of higher fractional order.

The package is organized bottom-up:

- ``params``       derived exponents and normalizing constants
- ``kernels``      cylindrical reduction of the Riesz kernel, periodization, calibration
- ``bubbles``      bubble profiles, Emden-Fowler transforms, towers, (co)kernel modes
- ``delaunay``     periodic cylinder solutions, neck diagnostics
- ``interactions`` interaction constants and integrals, cokernel Gram matrices
- ``balancing``    force-balance equations for multi-point configurations
- ``toda``         upper-banded interaction operators and their explicit inverses
- ``assembler``    glued approximate solutions, dual-operator application, residuals
- ``cli``          command-line front end
"""

from .params import Params, derive_params, gamma_fn

__all__ = ["Params", "derive_params", "gamma_fn"]

__version__ = "0.1.0"
