from .camera import PinholeCamera
from .io import load_depth, load_float_blob, load_mask, load_png, save_depth, save_float_blob, save_png
from .prompts import (
    ImaginationComposite,
    MarkedPoints,
    contour_arc_positions,
    grid_shape,
    largest_contour,
    point_overlay,
    region_anchor,
    render_imagination,
    sample_mask_contour,
    som_overlay,
)
from .raster import RenderResult, back_project, render

__all__ = [
    "ImaginationComposite", "MarkedPoints", "PinholeCamera", "RenderResult", "back_project", "contour_arc_positions",
    "grid_shape", "largest_contour", "load_depth", "load_float_blob", "load_mask", "load_png",
    "point_overlay", "region_anchor", "render", "render_imagination", "sample_mask_contour",
    "save_depth", "save_float_blob", "save_png", "som_overlay",
]
