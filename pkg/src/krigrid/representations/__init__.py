"""The five discrete representations of a scalar field."""
from .base import (
    KINDS,
    DiscreteRepresentation,
    RepresentationError,
    polygon_mask,
    region_stats,
    render_repr,
)
from .bsp_lse import build_bsp_lse
from .bsp_region import build_bsp_region
from .codec import CodecError, deserialize_repr, serialize_repr
from .hexmap import build_hexmap
from .quadtree import build_quadtree, build_wedgelet

BUILDERS = {
    "quadtree": build_quadtree,
    "wedgelet": build_wedgelet,
    "bsp-lse": build_bsp_lse,
    "bsp-region": build_bsp_region,
    "hexmap": build_hexmap,
}


def build(kind: str, field, **params) -> DiscreteRepresentation:
    try:
        builder = BUILDERS[kind]
    except KeyError:
        raise RepresentationError(f"unknown representation kind {kind!r}") from None
    return builder(field, **params)


__all__ = [
    "BUILDERS",
    "KINDS",
    "CodecError",
    "DiscreteRepresentation",
    "RepresentationError",
    "build",
    "build_bsp_lse",
    "build_bsp_region",
    "build_hexmap",
    "build_quadtree",
    "build_wedgelet",
    "deserialize_repr",
    "polygon_mask",
    "region_stats",
    "render_repr",
    "serialize_repr",
]
