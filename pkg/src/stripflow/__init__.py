"""Strip-partitioned D8 up-slope area with a one-round-trip master/worker protocol."""

from .grid import ElevationGrid, StripSpec, load_ascii_grid, partition_strips, save_ascii_grid
from .hydro import (
    AreaGrid,
    FlowField,
    compute_flow_directions,
    fill_pits,
    naive_accumulate,
    resolve_flats,
    serial_accumulate,
)
from .kernels import BACKEND
from .pipeline import accumulate_distributed

__version__ = "0.1.0"

__all__ = [
    "AreaGrid",
    "BACKEND",
    "ElevationGrid",
    "FlowField",
    "StripSpec",
    "accumulate_distributed",
    "compute_flow_directions",
    "fill_pits",
    "load_ascii_grid",
    "naive_accumulate",
    "partition_strips",
    "resolve_flats",
    "save_ascii_grid",
    "serial_accumulate",
]
