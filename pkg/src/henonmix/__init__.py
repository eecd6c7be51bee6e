"""Green functions, equilibrium measures and mixing for complex Hénon maps."""

__version__ = "0.1.0"

from .map_core import (  # noqa: E402
    HenonFactor,
    HenonMap,
    Polynomial,
    ProductMap,
    build_product,
    check_regularity,
    degree,
    eval_backward,
    eval_forward,
    indeterminacy,
    jacobian_det,
    standard_map,
    top_homogeneous,
)
from .green import GreenConfig, GreenResult, escape_radius, green_minus, green_plus, green_product  # noqa: E402

__all__ = [
    "HenonFactor", "HenonMap", "Polynomial", "ProductMap", "build_product", "check_regularity",
    "degree", "eval_backward", "eval_forward", "indeterminacy", "jacobian_det", "standard_map",
    "top_homogeneous", "GreenConfig", "GreenResult", "escape_radius", "green_minus", "green_plus",
    "green_product",
]
