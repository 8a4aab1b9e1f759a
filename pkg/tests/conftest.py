"""Shared DEM builders and fixtures.

Fixture DEMs are deterministic and at least 16 rows tall so every strip has
two or more rows for worker counts up to 8 (a one-row strip is legal but is
exercised separately).
"""

import numpy as np
import pytest

from stripflow import ElevationGrid, fill_pits, resolve_flats

NODATA = -9999.0


def random_dem(rng, rows, cols, nodata_frac=0.0, quantize=None):
    vals = rng.uniform(0.0, 100.0, (rows, cols))
    if quantize:
        vals = np.round(vals / quantize) * quantize
    if nodata_frac:
        n = int(rows * cols * nodata_frac)
        if n:
            idx = rng.choice(rows * cols, size=n, replace=False)
            vals.flat[idx] = NODATA
    return ElevationGrid(vals, nodata_value=NODATA)


def preprocess(grid):
    return resolve_flats(fill_pits(grid))


def funnel_dem(rows=16, cols=17):
    """V-shaped valley: columns beside the axis drain diagonally into it.

    Every interior axis cell receives SE + S + SW from the row above, which
    makes each strip's top axis cell a receiver with three cross-border
    feeders.
    """
    mid = cols // 2
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    vals = (rows - r) * 10.0 + np.abs(c - mid) * 20.0
    return ElevationGrid(vals.astype(np.float64))


def serpentine_dem(rows=16, cols=16):
    """Flow snakes down and up alternate columns across every strip boundary.

    Channel columns (even) carry a strictly descending path; wall columns
    (odd) are high and drain sideways into the channels, except for one gap
    cell per wall that joins consecutive channels at alternating ends.
    """
    order = []
    for k, col in enumerate(range(0, cols, 2)):
        rows_iter = range(rows) if k % 2 == 0 else range(rows - 1, -1, -1)
        order.extend((r, col) for r in rows_iter)
        if col + 1 < cols:
            order.append((rows - 1 if k % 2 == 0 else 0, col + 1))
    total = len(order)
    vals = np.full((rows, cols), float(total + 50))
    for i, (r, c) in enumerate(order):
        vals[r, c] = float(total - i)
    return ElevationGrid(vals)


def south_slope_dem(rows=16, cols=20):
    vals = np.repeat(np.arange(rows, 0, -1.0)[:, None], cols, axis=1)
    return ElevationGrid(vals)


def basin_dem(rows=16, cols=16):
    r = np.arange(rows)[:, None] - rows / 2
    c = np.arange(cols)[None, :] - cols / 2
    return ElevationGrid((r * r + c * c).astype(np.float64))


def fixture_dems():
    """Ten deterministic DEMs used for the invariance and fan-in criteria."""
    rng = np.random.default_rng(20110833)
    smooth = np.cumsum(np.cumsum(rng.normal(size=(20, 24)), axis=0), axis=1)
    dems = {
        "smooth": ElevationGrid(smooth - smooth.min()),
        "rough": random_dem(rng, 17, 19),
        "terraced": random_dem(rng, 16, 21, quantize=20.0),
        "nodata": random_dem(rng, 18, 18, nodata_frac=0.15),
        "funnel": funnel_dem(),
        "serpentine": serpentine_dem(),
        "plateau": ElevationGrid(np.full((16, 16), 7.0)),
        "south": south_slope_dem(),
        "ridge": ElevationGrid(
            50.0
            - np.abs(np.arange(19)[None, :] - 9) * 2.0
            + np.arange(16)[:, None] * 0.01
        ),
        "basin": basin_dem(),
    }
    return dems


@pytest.fixture(scope="session")
def fixtures():
    return {name: preprocess(dem) for name, dem in fixture_dems().items()}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
