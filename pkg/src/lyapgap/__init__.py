"""Numerical toolkit for gap growth in randomly perturbed matrix products."""

from .errors import (
    ConditioningError,
    ConfigError,
    GeometryError,
    InputError,
    LyapgapError,
    NumericalAbort,
    SingularityError,
    UnderflowError,
    UnsupportedError,
)
from .matcore import Subspace, exterior_power, singular_values, svd
from .noise import NoiseSpec, sample_noise
from .products import GapTrace, ProductState, run_product

__version__ = "0.1.0"
