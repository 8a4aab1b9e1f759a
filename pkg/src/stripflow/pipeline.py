"""Coordinator: spawn workers and master, join, and assemble the raster.

Workers run as threads; the compiled kernels release the GIL in their hot
loops, and all protocol traffic goes through the chosen transport so the
message accounting holds for both in-process queues and spool files. The
final numeric result is independent of scheduling: every phase propagates
along the same dependency DAG whatever order cells drain in.
"""

from __future__ import annotations

import threading

import numpy as np

from .grid import ElevationGrid, partition_strips
from .hydro import AreaGrid
from .master import run_master
from .transport import CommStats, make_links
from .worker import StripFrame, run_worker


def accumulate_distributed(grid: ElevationGrid, workers: int, threads: int = 1,
                           transport: str = "inprocess", spool_dir: str | None = None,
                           stats: CommStats | None = None) -> AreaGrid:
    """Run the full two-message protocol over ``workers`` strips.

    ``threads`` bounds the executor threads inside each worker's per-cell
    loops. Raises the first worker/master error after all tasks stop.
    """
    strips = partition_strips(grid.rows, workers)
    worker_eps, master_eps = make_links(workers, stats, transport, spool_dir)
    results: list[np.ndarray | None] = [None] * workers
    errors: list[tuple[str, BaseException]] = []

    def worker_main(i: int) -> None:
        try:
            frame = StripFrame(strips[i], grid.rows, grid.cols)
            sub = grid.values[strips[i].read_start : strips[i].read_stop]
            results[i] = run_worker(frame, sub, grid.nodata_value, worker_eps[i], threads)
        except BaseException as exc:  # noqa: BLE001 - reported after join
            errors.append((f"worker {i}", exc))
            worker_eps[i].close()

    def master_main() -> None:
        try:
            run_master(master_eps)
        except BaseException as exc:  # noqa: BLE001
            errors.append(("master", exc))
            for ep in master_eps:
                ep.close()

    tasks = [threading.Thread(target=worker_main, args=(i,), name=f"stripflow-w{i}")
             for i in range(workers)]
    tasks.append(threading.Thread(target=master_main, name="stripflow-master"))
    for t in tasks:
        t.start()
    for t in tasks:
        t.join()
    if errors:
        where, exc = errors[0]
        raise RuntimeError(f"{where} failed: {exc}") from exc

    areas = np.vstack([r for r in results])
    return AreaGrid(areas, grid.cellsize, grid.nodata_value, grid.xllcorner, grid.yllcorner)
