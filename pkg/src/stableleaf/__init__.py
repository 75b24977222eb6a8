"""Finite-time local stable manifolds of hyperbolic fixed points of planar maps."""

from .dynsys import MapSpec, builtin_catalog, find_fixed_point, make_map, parse_map
from .errors import StableLeafError
from .leaf import LeafCurve, integrate_leaf, leaf_distance, limit_leaf

__all__ = [
    "LeafCurve",
    "MapSpec",
    "StableLeafError",
    "builtin_catalog",
    "find_fixed_point",
    "integrate_leaf",
    "leaf_distance",
    "limit_leaf",
    "make_map",
    "parse_map",
]
