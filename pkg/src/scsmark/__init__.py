"""Blind, saliency-guided SCS watermarking of triangle meshes."""

from .mesh import Mesh, MeshGeometry, compute_geometry, load_mesh, reconstruct_from_norms, save_mesh
from .saliency import SaliencyMap, SaliencyParams, compute_saliency, mean_curvature, select_salient
from .scs import WatermarkKey, embed, extract, random_watermark
from .metrics import correlation, hausdorff, mrms, msdm, rms_distance

__version__ = "0.1.0"

__all__ = [
    "Mesh", "MeshGeometry", "compute_geometry", "load_mesh", "save_mesh", "reconstruct_from_norms",
    "SaliencyMap", "SaliencyParams", "compute_saliency", "mean_curvature", "select_salient",
    "WatermarkKey", "embed", "extract", "random_watermark",
    "correlation", "hausdorff", "mrms", "msdm", "rms_distance",
]
