"""Learnable localized histogram layer with a numpy training stack."""
from histlayer.histogram import (Binning, EquispacedInit, HistogramConfig, HistogramLayer,
                                 HistogramParams, UniformInit, forward_composed,
                                 hist_backward, hist_forward, init_params)
from histlayer.model import ModelSpec, Variant, build_model

__all__ = [
    "Binning", "EquispacedInit", "HistogramConfig", "HistogramLayer", "HistogramParams",
    "UniformInit", "forward_composed", "hist_backward", "hist_forward", "init_params",
    "ModelSpec", "Variant", "build_model",
]
__version__ = "0.1.0"
