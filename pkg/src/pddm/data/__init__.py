"""Synthetic scenes, sampling patterns, metrics and file formats."""

from .io import (
    read_dmap, read_pgm16, read_ppm, read_sparse_csv, write_dmap, write_pgm16, write_ppm,
    write_sparse_csv,
)
from .metrics import MetricReport, compute_metrics
from .sampling import (
    SparseDepthSamples, add_noise, biased_probabilities, sample_biased, sample_grid,
    sample_random,
)
from .scenes import Box, Plane, SceneSpec, Sphere, render, synth_scene

__all__ = [
    "SparseDepthSamples", "sample_random", "sample_grid", "sample_biased", "add_noise",
    "biased_probabilities", "MetricReport", "compute_metrics", "SceneSpec", "Plane", "Box",
    "Sphere", "render", "synth_scene", "read_dmap", "write_dmap", "read_sparse_csv",
    "write_sparse_csv", "write_ppm", "read_ppm", "write_pgm16", "read_pgm16",
]
