"""Random-cluster model with a ghost field: oracles, samplers, bounds, scans."""

__version__ = "0.1.0"

from ._kernels import HAVE_NUMBA  # noqa: F401
