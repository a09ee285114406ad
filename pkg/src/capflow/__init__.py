"""capflow: planar Cauchy transforms, certified capacity bounds, and the
coefficient-matching approximation toolbox built on them."""
__version__ = "0.1.0"

from .errors import CapflowError, ConfigError, GeometryError, SolverError, InvariantError  # noqa: F401
