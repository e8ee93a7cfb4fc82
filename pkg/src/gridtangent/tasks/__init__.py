"""Experiment drivers: image regression and signed distance fields."""

from .export import export_field, quantize, sample_field
from .images import ImageTask, Metrics, fit_image, holdout_mask, load_image, psnr
from .netpbm import (DepthError, HeaderError, NetpbmError, TruncatedError, encode_netpbm,
                     read_netpbm, write_netpbm)
from .sdf import (Box, Circle, SdfTask, Sphere, Torus, analytic_normal, analytic_sdf, eval_grid, fit_sdf,
                  iou_metric, nae_metric, shape_from_dict, surface_samples)

__all__ = [
    "export_field", "sample_field", "quantize",
    "ImageTask", "Metrics", "fit_image", "holdout_mask", "load_image", "psnr",
    "NetpbmError", "HeaderError", "DepthError", "TruncatedError",
    "read_netpbm", "write_netpbm", "encode_netpbm",
    "Circle", "Box", "Sphere", "Torus", "SdfTask", "analytic_sdf", "analytic_normal",
    "surface_samples", "eval_grid", "iou_metric", "nae_metric", "fit_sdf", "shape_from_dict",
]
