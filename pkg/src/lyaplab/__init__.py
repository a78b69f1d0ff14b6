"""lyaplab: Lyapunov exponents and projective measures of random conservative cocycles."""

__version__ = "0.1.0"

from .errors import (BaseNotDegenerate, ConfigError, DomainError, IncompatibleGridError,  # noqa: E402
                     RenormalizationTooSparse)
from .systems import (BumpProfile, Composite, ConstantMatrix, FrameField, GeneratorSet,  # noqa: E402
                      LinearToralMap, Shear, StandardMap, Translation, WordSampler, cat_map,
                      identity_frame, make_shear, shear_pair)
from .zoo import get_system, zoo  # noqa: E402

__all__ = [
    "BaseNotDegenerate", "ConfigError", "DomainError", "IncompatibleGridError", "RenormalizationTooSparse",
    "BumpProfile", "Composite", "ConstantMatrix", "FrameField", "GeneratorSet", "LinearToralMap", "Shear",
    "StandardMap", "Translation", "WordSampler", "cat_map", "identity_frame", "make_shear", "shear_pair",
    "get_system", "zoo",
]
