import numpy as np
import pytest

from conftest import NODATA, preprocess, random_dem
from stripflow.d8 import OFFSETS, FlowDir
from stripflow.grid import ElevationGrid
from stripflow.hydro import (
    AreaGrid,
    FlatSurfaceError,
    FlowCycleError,
    FlowField,
    compute_flow_directions,
    esri_direction_codes,
    fill_pits,
    naive_accumulate,
    resolve_flats,
    serial_accumulate,
)

E, SE, S, OUT = int(FlowDir.E), int(FlowDir.SE), int(FlowDir.S), int(FlowDir.OUTLET)


def grid(rows):
    return ElevationGrid(np.array(rows, dtype=np.float64), nodata_value=NODATA)


def drains_everywhere(values, nodata):
    """Independent oracle: every participating cell has a non-ascending
    8-neighbor path to a grid-border or nodata-adjacent cell (reverse BFS
    from the drains, stepping only to equal-or-higher cells)."""
    h, w = values.shape
    part = values != nodata
    reach = np.zeros((h, w), dtype=bool)
    stack = []
    for r in range(h):
        for c in range(w):
            if not part[r, c]:
                continue
            edge = r in (0, h - 1) or c in (0, w - 1)
            if not edge:
                for code in range(1, 9):
                    dr, dc = OFFSETS[code]
                    if values[r + dr, c + dc] == nodata:
                        edge = True
                        break
            if edge:
                reach[r, c] = True
                stack.append((r, c))
    while stack:
        r, c = stack.pop()
        for code in range(1, 9):
            dr, dc = OFFSETS[code]
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and part[nr, nc] and not reach[nr, nc]:
                if values[nr, nc] >= values[r, c]:
                    reach[nr, nc] = True
                    stack.append((nr, nc))
    return bool(reach[part].all())


class TestFlowDirections:
    def test_linear_chain(self):
        f = compute_flow_directions(grid([[3.0, 2.0, 1.0]]))
        assert f.dirs.tolist() == [[E, E, OUT]]

    def test_diagonal_wins_on_slope_not_drop(self):
        # center 5.0: drop east = 1.0 over distance 1 -> slope 1.0;
        # drop southeast = 1.5 over sqrt(2) -> slope ~1.0607, so SE wins.
        g = grid([
            [9.0, 9.0, 9.0],
            [9.0, 5.0, 4.0],
            [9.0, 9.0, 3.5],
        ])
        f = compute_flow_directions(g)
        assert f.direction(1, 1) is FlowDir.SE

    def test_equal_slope_tie_breaks_in_scan_order(self):
        # east and south both drop 1.0 at distance 1; N,NE,E,SE,S,... scan
        # order reaches E first.
        g = grid([
            [9.0, 9.0, 9.0],
            [9.0, 5.0, 4.0],
            [9.0, 4.0, 9.0],
        ])
        f = compute_flow_directions(g)
        assert f.direction(1, 1) is FlowDir.E

    def test_interior_flat_is_a_precondition_violation(self):
        g = grid([
            [9.0, 9.0, 9.0, 9.0],
            [9.0, 5.0, 5.0, 9.0],
            [9.0, 9.0, 9.0, 9.0],
        ])
        with pytest.raises(FlatSurfaceError, match=r"\(1, 1\)"):
            compute_flow_directions(g)

    def test_border_cells_drain_off_grid(self):
        # 1xN grids sit entirely on the border: equal neighbors are fine.
        f = compute_flow_directions(grid([[2.0, 1.0, 1.0, 0.0]]))
        assert f.dirs.tolist() == [[E, OUT, E, OUT]]

    def test_nodata_adjacent_local_minimum_is_outlet(self):
        g = grid([
            [9.0, 9.0, 9.0],
            [9.0, 5.0, NODATA],
            [9.0, 9.0, 9.0],
        ])
        f = compute_flow_directions(g)
        assert f.direction(1, 1) is FlowDir.OUTLET
        assert f.dirs[1, 2] == -1
        assert not f.participating[1, 2]

    def test_nodata_never_selected_as_target(self):
        g = grid([
            [9.0, 9.0, 9.0],
            [9.0, 5.0, NODATA],
            [9.0, 4.0, 9.0],
        ])
        f = compute_flow_directions(g)
        assert f.direction(1, 1) is FlowDir.S

    def test_deterministic_across_calls(self, rng):
        g = preprocess(random_dem(rng, 20, 20))
        a = compute_flow_directions(g).dirs
        b = compute_flow_directions(g).dirs
        assert a.tobytes() == b.tobytes()

    def test_every_direction_points_strictly_downhill(self, rng):
        g = preprocess(random_dem(rng, 24, 17, nodata_frac=0.1))
        f = compute_flow_directions(g)
        for r in range(g.rows):
            for c in range(g.cols):
                t = f.target(r, c)
                if t is not None:
                    assert g.values[t] < g.values[r, c]

    def test_esri_codes(self):
        f = FlowField(np.array([[3, 4, 5, 0, -1]], dtype=np.int8))
        assert esri_direction_codes(f).tolist() == [[1, 2, 4, 0, 0]]


class TestFillPits:
    def test_single_pit_raised_to_lowest_neighbor(self):
        g = grid([
            [5.0, 6.0, 7.0],
            [6.0, 1.0, 8.0],
            [7.0, 8.0, 9.0],
        ])
        filled = fill_pits(g)
        assert filled.values[1, 1] == 5.0
        changed = filled.values != g.values
        assert changed.sum() == 1

    def test_monotone_ramp_unchanged(self):
        g = grid([[3.0, 2.0], [2.0, 1.0]])
        assert fill_pits(g) == g

    def test_enclosed_basin_gains_escape_paths(self):
        vals = np.full((5, 5), 9.0)
        vals[2, 2] = 1.0
        vals[2, 3] = 1.5
        g = ElevationGrid(vals)
        assert not drains_everywhere(g.values, NODATA)
        filled = fill_pits(g)
        assert drains_everywhere(filled.values, NODATA)

    def test_all_nodata_unchanged(self):
        g = ElevationGrid(np.full((3, 3), NODATA), nodata_value=NODATA)
        assert fill_pits(g) == g

    def test_never_lowers_and_always_drains(self, rng):
        for _ in range(20):
            g = random_dem(rng, int(rng.integers(2, 20)), int(rng.integers(2, 20)),
                           nodata_frac=0.1)
            filled = fill_pits(g)
            assert (filled.values >= g.values).all()
            assert drains_everywhere(filled.values, NODATA)


class TestResolveFlats:
    def test_interior_flat_gains_descending_gradient(self):
        g = grid([
            [9.0, 9.0, 9.0, 9.0],
            [9.0, 5.0, 5.0, 4.0],
            [9.0, 9.0, 9.0, 9.0],
        ])
        fixed = resolve_flats(g)
        assert fixed.values[1, 1] > 5.0
        assert fixed.values[1, 2] == 5.0  # the flat's draining cell stays put
        f = compute_flow_directions(fixed)
        assert f.direction(1, 1) is FlowDir.E

    def test_border_draining_flat_left_alone(self):
        g = grid([[2.0, 1.0, 1.0, 0.0]])
        fixed = resolve_flats(g)
        assert fixed == g
        compute_flow_directions(fixed)  # must not raise

    def test_no_flats_means_no_change(self, rng):
        g = preprocess(random_dem(rng, 10, 10))
        assert resolve_flats(g) == g

    def test_whole_plateau_drains_to_the_border(self):
        g = ElevationGrid(np.full((6, 6), 7.0))
        fixed = resolve_flats(g)
        f = compute_flow_directions(fixed)
        naive_accumulate(f)  # walking every path proves termination at outlets

    def test_modifications_never_reorder_distinct_elevations(self, rng):
        g = fill_pits(random_dem(rng, 14, 14, quantize=25.0))
        fixed = resolve_flats(g)
        a, b = g.values.ravel(), fixed.values.ravel()
        for i in range(a.size):
            lt = a < a[i]
            assert (b[lt] < b[i]).all()

    def test_raises_on_unfilled_pit_flat(self):
        vals = np.full((5, 5), 9.0)
        vals[2, 2] = vals[2, 3] = 1.0  # enclosed two-cell flat, no outlet
        with pytest.raises(RuntimeError, match="no draining cell"):
            resolve_flats(ElevationGrid(vals))


class TestAccumulation:
    def test_chain(self):
        f = FlowField(np.array([[E, E, OUT]], dtype=np.int8))
        assert serial_accumulate(f).areas.tolist() == [[1, 2, 3]]
        assert naive_accumulate(f).areas.tolist() == [[1, 2, 3]]

    def test_three_cells_into_one(self):
        # (0,0) -> SE, (0,1) -> S, (1,0) -> E, all into the sink (1,1):
        # every forward path ends there, so the sink drains all 4 cells.
        f = FlowField(np.array([[SE, S], [E, OUT]], dtype=np.int8))
        assert naive_accumulate(f).areas.tolist() == [[1, 1], [1, 4]]
        assert serial_accumulate(f).areas.tolist() == [[1, 1], [1, 4]]

    def test_single_cell(self):
        f = FlowField(np.array([[OUT]], dtype=np.int8))
        assert naive_accumulate(f).areas.tolist() == [[1]]

    def test_random_grids_match_brute_force(self, rng):
        for _ in range(30):
            g = preprocess(random_dem(rng, int(rng.integers(2, 13)),
                                      int(rng.integers(2, 13)), nodata_frac=0.07))
            f = compute_flow_directions(g)
            assert serial_accumulate(f) == naive_accumulate(f)

    def test_conservation_and_bounds(self, rng):
        for _ in range(15):
            g = preprocess(random_dem(rng, 16, 16, nodata_frac=0.1))
            f = compute_flow_directions(g)
            a = serial_accumulate(f).areas
            part = f.participating
            assert a[f.dirs == OUT].sum() == part.sum()
            assert (a[part] >= 1).all()
            assert (a[part] <= part.sum()).all()
            assert (a[~part] == 0).all()

    def test_cycle_detected(self):
        two_cycle = FlowField(np.array([[E, int(FlowDir.W)]], dtype=np.int8))
        with pytest.raises(FlowCycleError):
            serial_accumulate(two_cycle)
        with pytest.raises(FlowCycleError):
            naive_accumulate(two_cycle)

    def test_preprocessing_always_satisfies_direction_precondition(self, rng):
        for _ in range(25):
            g = random_dem(rng, int(rng.integers(2, 24)), int(rng.integers(2, 24)),
                           nodata_frac=0.12, quantize=10.0)
            compute_flow_directions(preprocess(g))  # must not raise

    def test_area_grid_equality_is_by_value(self):
        a = AreaGrid(np.array([[1, 2]], dtype=np.uint64))
        b = AreaGrid(np.array([[1, 2]], dtype=np.uint64), cellsize=5.0)
        assert a == b
        assert a != AreaGrid(np.array([[1, 3]], dtype=np.uint64))
