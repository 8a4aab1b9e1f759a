"""DEM rasters, ESRI ASCII grid I/O, and horizontal strip partitioning.

Row 0 is the north (top) row, matching the ESRI ASCII convention; columns run
west to east. Elevation grids carry a nodata sentinel; nodata cells pass
through I/O untouched and their hydrologic meaning is decided in
:mod:`stripflow.hydro`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")
DEFAULT_NODATA = -9999.0


class GridFormatError(ValueError):
    """Raised for malformed ESRI ASCII grid files; carries the line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class CellId(NamedTuple):
    row: int
    col: int


@dataclass
class ElevationGrid:
    """2-D raster of 64-bit elevations with a nodata sentinel."""

    values: np.ndarray
    cellsize: float = 1.0
    nodata_value: float = DEFAULT_NODATA
    xllcorner: float = 0.0
    yllcorner: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError("elevation grid must be 2-D with at least one row and column")
        bad = ~np.isfinite(self.values) & (self.values != self.nodata_value)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValueError(f"non-finite elevation at ({r}, {c}) is not the nodata sentinel")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def participating(self) -> np.ndarray:
        """Boolean mask of cells that take part in the computation."""
        return self.values != self.nodata_value

    def __eq__(self, other):
        if not isinstance(other, ElevationGrid):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and self.cellsize == other.cellsize
            and self.nodata_value == other.nodata_value
            and self.xllcorner == other.xllcorner
            and self.yllcorner == other.yllcorner
        )


@dataclass(frozen=True)
class StripSpec:
    """One worker's band of owned rows plus up to two halo rows per side."""

    worker_id: int
    row_start: int
    row_stop: int
    halo_above: tuple[int, ...] = field(default=())
    halo_below: tuple[int, ...] = field(default=())

    @property
    def owned_rows(self) -> range:
        return range(self.row_start, self.row_stop)

    @property
    def read_start(self) -> int:
        return self.halo_above[0] if self.halo_above else self.row_start

    @property
    def read_stop(self) -> int:
        return self.halo_below[-1] + 1 if self.halo_below else self.row_stop


def partition_strips(rows: int, workers: int) -> list[StripSpec]:
    """Split ``rows`` into ``workers`` horizontal strips.

    Every worker owns ``rows // workers`` rows except the last, which takes
    the remainder. Halo rows (two per side) are clipped at the DEM borders,
    never wrapped.
    """
    if workers < 1:
        raise ValueError(f"need at least one worker, got {workers}")
    if workers > rows:
        raise ValueError(
            f"cannot partition {rows} rows into {workers} strips: "
            "strips thinner than one row are not defined"
        )
    base = rows // workers
    strips = []
    for w in range(workers):
        start = w * base
        stop = (w + 1) * base if w < workers - 1 else rows
        above = tuple(range(max(0, start - 2), start))
        below = tuple(range(stop, min(rows, stop + 2)))
        strips.append(StripSpec(w, start, stop, above, below))
    return strips


def _format_value(v) -> str:
    """Shortest decimal that round-trips; integers stay integral."""
    f = float(v)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def load_ascii_grid(path) -> ElevationGrid:
    """Read an ESRI ASCII grid.

    Header keys are case-insensitive; ``NODATA_value`` is optional and
    defaults to -9999. Malformed files raise :class:`GridFormatError` with
    the offending line number.
    """
    header: dict[str, float] = {}
    body: list[float] = []
    body_started_at = 0
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            first = tokens[0]
            key = first.lower()
            is_header = not body and (key in HEADER_KEYS or key == "nodata_value")
            if is_header:
                if len(tokens) != 2:
                    raise GridFormatError(path, line_no, f"header '{first}' needs exactly one value")
                if key in header:
                    raise GridFormatError(path, line_no, f"duplicate header key '{first}'")
                try:
                    header[key] = float(tokens[1])
                except ValueError:
                    raise GridFormatError(
                        path, line_no, f"unparseable header value {tokens[1]!r} for '{first}'"
                    ) from None
                continue
            if not body:
                body_started_at = line_no
                missing = [k for k in HEADER_KEYS if k not in header]
                if missing:
                    raise GridFormatError(
                        path, line_no, f"missing header key(s): {', '.join(missing)}"
                    )
            for tok in tokens:
                try:
                    body.append(float(tok))
                except ValueError:
                    raise GridFormatError(path, line_no, f"unparseable cell value {tok!r}") from None
            line_no_last = line_no

    if not body:
        raise GridFormatError(path, body_started_at or 1, "no cell values found")
    rows = int(header["nrows"])
    cols = int(header["ncols"])
    if rows < 1 or cols < 1:
        raise GridFormatError(path, 1, f"bad dimensions nrows={rows} ncols={cols}")
    if len(body) != rows * cols:
        raise GridFormatError(
            path, line_no_last,
            f"cell count mismatch: got {len(body)} values, expected {rows * cols}",
        )
    values = np.array(body, dtype=np.float64).reshape(rows, cols)
    return ElevationGrid(
        values=values,
        cellsize=header["cellsize"],
        nodata_value=header.get("nodata_value", DEFAULT_NODATA),
        xllcorner=header["xllcorner"],
        yllcorner=header["yllcorner"],
    )


def save_ascii_grid(grid, path) -> None:
    """Write an ElevationGrid or AreaGrid as an ESRI ASCII grid.

    Elevations are written as shortest round-trippable decimals, area counts
    as unsigned integers, so ``load_ascii_grid(save_ascii_grid(g))``
    reproduces ``g`` exactly.
    """
    if hasattr(grid, "areas"):
        data = grid.areas
        fmt = str
    else:
        data = grid.values
        fmt = _format_value
    rows, cols = data.shape
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w") as fh:
            fh.write(f"ncols {cols}\n")
            fh.write(f"nrows {rows}\n")
            fh.write(f"xllcorner {_format_value(getattr(grid, 'xllcorner', 0.0))}\n")
            fh.write(f"yllcorner {_format_value(getattr(grid, 'yllcorner', 0.0))}\n")
            fh.write(f"cellsize {_format_value(getattr(grid, 'cellsize', 1.0))}\n")
            fh.write(f"NODATA_value {_format_value(getattr(grid, 'nodata_value', DEFAULT_NODATA))}\n")
            for r in range(rows):
                fh.write(" ".join(fmt(v) for v in data[r]))
                fh.write("\n")
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
