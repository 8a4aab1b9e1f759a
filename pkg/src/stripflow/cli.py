"""Command-line tool: preprocess, partition, run the protocol, write results.

Exit codes: 0 ok, 1 usage or configuration error, 2 I/O error,
3 verification mismatch.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .d8 import OFFSETS
from .grid import ElevationGrid, GridFormatError, StripSpec, load_ascii_grid, partition_strips, save_ascii_grid
from .hydro import (
    AreaGrid,
    FlatSurfaceError,
    FlowField,
    compute_flow_directions,
    esri_direction_codes,
    fill_pits,
    resolve_flats,
    serial_accumulate,
)
from .pipeline import accumulate_distributed
from .transport import CommStats

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_VERIFY = 3


@dataclass
class RunConfig:
    input_path: str
    output_path: str
    workers: int = 1
    threads: int = 1
    fill_pits: bool = True
    resolve_flats: bool = True
    emit_flowdir: str | None = None
    verify: bool = False
    stats_path: str | None = None
    transport: str = "inprocess"


def compute_winding_stats(field: FlowField, strips: list[StripSpec]) -> tuple[int, float]:
    """Count inter-strip flow edges and the winding factor (crossings / workers).

    Every participating cell contributes its single outgoing edge once; an
    edge crosses when its endpoints are owned by different workers. Purely
    diagnostic: the message count never depends on it.
    """
    rows = strips[-1].row_stop
    owner = np.empty(rows, dtype=np.int32)
    for s in strips:
        owner[s.row_start : s.row_stop] = s.worker_id
    dirs = field.dirs
    crossings = 0
    for code in range(1, 9):
        dr = OFFSETS[code][0]
        if dr == 0:
            continue
        src_rows = np.arange(max(0, -dr), rows - max(0, dr))
        mask = dirs[src_rows] == code
        crossed = owner[src_rows] != owner[src_rows + dr]
        crossings += int((mask & crossed[:, None]).sum())
    return crossings, crossings / len(strips)


def _parse_transport(spec: str) -> tuple[str, str | None]:
    if spec == "inprocess":
        return "inprocess", None
    if spec.startswith("spool:") and len(spec) > len("spool:"):
        return "spool", spec[len("spool:"):]
    raise ValueError(f"transport must be 'inprocess' or 'spool:<dir>', not {spec!r}")


def run(config: RunConfig) -> int:
    """Execute one accumulation run; returns the process exit code."""
    err = sys.stderr
    if config.workers < 1:
        print(f"error: --workers must be >= 1, got {config.workers}", file=err)
        return EXIT_CONFIG
    if config.threads < 1:
        print(f"error: --threads must be >= 1, got {config.threads}", file=err)
        return EXIT_CONFIG
    try:
        kind, spool_dir = _parse_transport(config.transport)
    except ValueError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CONFIG

    try:
        grid = load_ascii_grid(config.input_path)
    except GridFormatError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_IO
    except OSError as exc:
        print(f"error: cannot read {config.input_path}: {exc}", file=err)
        return EXIT_IO

    if config.workers > grid.rows:
        print(
            f"error: cannot split {grid.rows} rows across {config.workers} workers",
            file=err,
        )
        return EXIT_CONFIG

    if config.fill_pits:
        grid = fill_pits(grid)
    if config.resolve_flats:
        grid = resolve_flats(grid)

    stats = CommStats()
    try:
        result = accumulate_distributed(
            grid, config.workers, threads=config.threads,
            transport=kind, spool_dir=spool_dir, stats=stats,
        )
    except RuntimeError as exc:
        cause = exc.__cause__
        if isinstance(cause, FlatSurfaceError) or isinstance(exc, FlatSurfaceError):
            print(f"error: {cause or exc} (preprocessing disabled?)", file=err)
            return EXIT_CONFIG
        raise

    try:
        save_ascii_grid(result, config.output_path)
    except OSError as exc:
        print(f"error: cannot write {config.output_path}: {exc}", file=err)
        return EXIT_IO

    field = None
    if config.emit_flowdir or config.verify or config.stats_path:
        field = compute_flow_directions(grid)

    if config.emit_flowdir:
        codes = AreaGrid(
            esri_direction_codes(field), grid.cellsize, grid.nodata_value,
            grid.xllcorner, grid.yllcorner,
        )
        try:
            save_ascii_grid(codes, config.emit_flowdir)
        except OSError as exc:
            print(f"error: cannot write {config.emit_flowdir}: {exc}", file=err)
            return EXIT_IO

    if config.stats_path:
        strips = partition_strips(grid.rows, config.workers)
        crossings, phi = compute_winding_stats(field, strips)
        stats.set_winding(crossings, phi)
        lines = [f"workers {config.workers}"]
        lines += [f"{key} {value}" for key, value in stats.snapshot().items()]
        try:
            with open(config.stats_path, "w") as fh:
                fh.write("\n".join(lines) + "\n")
        except OSError as exc:
            print(f"error: cannot write {config.stats_path}: {exc}", file=err)
            return EXIT_IO

    if config.verify:
        oracle = serial_accumulate(field)
        if not np.array_equal(result.areas, oracle.areas):
            diff = int(np.count_nonzero(result.areas != oracle.areas))
            print(
                f"error: verification mismatch: {diff} cell(s) differ from the serial result",
                file=err,
            )
            return EXIT_VERIFY

    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stripflow",
        description="D8 up-slope area over horizontal strips with one message "
                    "each way per worker.",
    )
    parser.add_argument("--input", required=True, help="input DEM (ESRI ASCII grid)")
    parser.add_argument("--output", required=True, help="output accumulation raster")
    parser.add_argument("--workers", type=int, default=1, help="number of worker strips")
    parser.add_argument("--threads", type=int, default=1, help="executor threads per worker")
    parser.add_argument("--no-fill-pits", action="store_true", help="skip pit filling")
    parser.add_argument("--no-resolve-flats", action="store_true", help="skip flat resolution")
    parser.add_argument("--emit-flowdir", metavar="PATH",
                        help="also write the D8 direction raster (ESRI codes)")
    parser.add_argument("--verify", action="store_true",
                        help="compare against the serial result; exit 3 on mismatch")
    parser.add_argument("--stats", metavar="PATH",
                        help="write message counts and winding factor as 'key value' lines")
    parser.add_argument("--transport", default="inprocess",
                        help="inprocess | spool:<dir>")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract reserves 2 for I/O.
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    config = RunConfig(
        input_path=args.input,
        output_path=args.output,
        workers=args.workers,
        threads=args.threads,
        fill_pits=not args.no_fill_pits,
        resolve_flats=not args.no_resolve_flats,
        emit_flowdir=args.emit_flowdir,
        verify=args.verify,
        stats_path=args.stats,
        transport=args.transport,
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
