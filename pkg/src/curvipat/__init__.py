"""Simulation engine for stiff diffusion-reaction systems on curvilinear
domains (disk, sphere surface, ball, cylinder), built on Kronecker-structured
finite differences and a split exponential Euler integrator."""

import os as _os

# Cap BLAS parallelism before numpy starts its thread pools; single-threaded
# by default so repeated runs are reproducible bit for bit.
_threads = _os.environ.get("CURVIPAT_THREADS", "1")
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, _threads)

from . import integrators, models, operators, output, phifun, tensor  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "integrators",
    "models",
    "operators",
    "output",
    "phifun",
    "tensor",
    "__version__",
]
