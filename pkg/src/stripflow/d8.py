"""D8 direction codes, neighbor offsets, and distance factors.

Direction codes used throughout the package:

* ``-1`` -- cell excluded from the computation (nodata),
* ``0``  -- outlet: flow leaves the grid (no lower in-grid neighbor),
* ``1..8`` -- N, NE, E, SE, S, SW, W, NW in the fixed tie-break scan order.

Ties between equally steep descents are broken by scanning neighbors in
exactly this order and keeping the first maximum, so repeated runs are
byte-identical.
"""

from enum import IntEnum

import numpy as np

INV_SQRT2 = 1.0 / np.sqrt(np.float64(2.0))


class FlowDir(IntEnum):
    OUTLET = 0
    N = 1
    NE = 2
    E = 3
    SE = 4
    S = 5
    SW = 6
    W = 7
    NW = 8


NODATA_DIR = -1

# (drow, dcol) per direction code 1..8, index 0 unused.
OFFSETS = (
    (0, 0),
    (-1, 0),   # N
    (-1, 1),   # NE
    (0, 1),    # E
    (1, 1),    # SE
    (1, 0),    # S
    (1, -1),   # SW
    (0, -1),   # W
    (-1, -1),  # NW
)

# 1/distance per direction code (1 for cardinal, 1/sqrt(2) for diagonal).
INV_DIST = (
    0.0,
    1.0, INV_SQRT2, 1.0, INV_SQRT2,
    1.0, INV_SQRT2, 1.0, INV_SQRT2,
)

# ESRI ArcGIS D8 raster codes for the optional flow-direction export.
ESRI_CODES = {
    FlowDir.OUTLET: 0,
    FlowDir.E: 1,
    FlowDir.SE: 2,
    FlowDir.S: 4,
    FlowDir.SW: 8,
    FlowDir.W: 16,
    FlowDir.NW: 32,
    FlowDir.N: 64,
    FlowDir.NE: 128,
}

OFFSETS_ARR = np.array(OFFSETS, dtype=np.int64)
INV_DIST_ARR = np.array(INV_DIST, dtype=np.float64)


def target_of(row: int, col: int, code: int) -> tuple[int, int] | None:
    """Cell that (row, col) flows into, or None for outlet/nodata."""
    if code <= 0:
        return None
    dr, dc = OFFSETS[code]
    return row + dr, col + dc
