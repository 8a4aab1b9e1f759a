"""Master-side merge of worker reports into the inter-strip dependency DAG.

Border cells form a directed acyclic graph: givers carry final areas and
feed receivers across strip boundaries; receivers collect their feeders'
areas and hand the sum to the path terminus recorded in the origin lists;
termini forward their own internal area plus everything collected. One pass
in dependency order yields every receiver's incoming area, which is all a
worker needs to finalise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .hydro import FlowCycleError
from .transport import (
    CellClass,
    MasterReply,
    ProtocolError,
    WorkerReport,
    decode_report,
    encode_reply,
)

Cell = tuple[int, int]


@dataclass
class BorderNode:
    worker_id: int
    cls: int
    area: int
    target: Cell | None
    var: int | None
    recv_deps: int = 0       # cross-border feeders still outstanding
    recv_total: int = 0      # sum of feeder areas so far
    recv_done: bool = False
    join_deps: int = 0       # origin deliveries still outstanding
    join_total: int = 0      # sum of delivered origin streams
    sent: bool = False


@dataclass
class BorderGraph:
    nodes: dict[Cell, BorderNode] = field(default_factory=dict)
    destination: dict[Cell, Cell] = field(default_factory=dict)
    worker_ids: list[int] = field(default_factory=list)
    incoming: dict[Cell, int] = field(default_factory=dict)

    def dependency_of(self, cell: Cell) -> int:
        """Master-side dependency counter: -1 for givers, feeder count for
        receivers, origin count for termini (the paper's D for Alg 5)."""
        node = self.nodes[cell]
        if node.cls == CellClass.GIVER:
            return -1
        if node.cls == CellClass.RECEIVER:
            return node.recv_deps
        return node.join_deps

    def max_receiver_fan_in(self) -> int:
        return max(
            (n.recv_deps for n in self.nodes.values() if n.cls == CellClass.RECEIVER),
            default=0,
        )


def master_prep(reports: list[WorkerReport]) -> BorderGraph:
    """Merge reports: classify cells, count feeders, and build destinations.

    Validates exactly one report per worker, globally unique path variables,
    origin cells that are known receivers, and explicit targets that land on
    receivers.
    """
    graph = BorderGraph()
    seen_workers = set()
    var_owner: dict[int, Cell] = {}
    for report in reports:
        if report.worker_id in seen_workers:
            raise ProtocolError(f"duplicate report from worker {report.worker_id}")
        seen_workers.add(report.worker_id)
        for rec in report.records:
            cell = (rec.row, rec.col)
            if cell in graph.nodes:
                raise ProtocolError(f"cell {cell} reported twice")
            graph.nodes[cell] = BorderNode(
                worker_id=report.worker_id,
                cls=rec.cls,
                area=rec.area,
                target=rec.target,
                var=rec.var,
            )
            if rec.var is not None and rec.var >= 0:
                if rec.var in var_owner:
                    raise ProtocolError(f"path variable {rec.var} parked on two cells")
                var_owner[rec.var] = cell
    graph.worker_ids = sorted(seen_workers)

    receivers_by_worker: dict[int, set[Cell]] = {}
    for cell, node in graph.nodes.items():
        if node.cls == CellClass.RECEIVER:
            receivers_by_worker.setdefault(node.worker_id, set()).add(cell)

    seen_origins: set[Cell] = set()
    for report in reports:
        own_receivers = receivers_by_worker.get(report.worker_id, set())
        for var, cells in report.origins.items():
            terminus = var_owner.get(var)
            for cell in cells:
                if cell not in own_receivers:
                    raise ProtocolError(
                        f"origin {cell} of variable {var} is not a known receiver "
                        f"of worker {report.worker_id}"
                    )
                if cell in seen_origins:
                    raise ProtocolError(f"receiver {cell} appears in two origin lists")
                seen_origins.add(cell)
                if terminus is not None:
                    graph.destination[cell] = terminus
            if terminus is not None:
                graph.nodes[terminus].join_deps = len(cells)

    for cell, node in graph.nodes.items():
        if node.target is None:
            continue
        tnode = graph.nodes.get(node.target)
        if tnode is None or tnode.cls != CellClass.RECEIVER:
            raise ProtocolError(
                f"cell {cell} targets {node.target}, which is not a reported receiver"
            )
        tnode.recv_deps += 1
    return graph


def master_upslope(graph: BorderGraph) -> None:
    """Propagate areas through the border DAG in dependency order.

    A cell with no explicit target contributes nothing further (its flow
    stays inside a strip or leaves the DEM); receivers finalise once every
    feeder delivered, then hand their collected sum to their path terminus.
    """
    work: deque[tuple[str, Cell]] = deque()
    for cell in sorted(graph.nodes):
        node = graph.nodes[cell]
        if node.cls == CellClass.GIVER:
            work.append(("send", cell))
        elif node.cls == CellClass.RECEIVER and node.recv_deps == 0:
            work.append(("collected", cell))

    while work:
        action, cell = work.popleft()
        node = graph.nodes[cell]
        if action == "send":
            node.sent = True
            if node.target is None:
                continue
            tnode = graph.nodes[node.target]
            tnode.recv_total += node.area + node.join_total
            tnode.recv_deps -= 1
            if tnode.recv_deps == 0:
                work.append(("collected", node.target))
        else:  # a receiver finished collecting its feeders
            node.recv_done = True
            graph.incoming[cell] = node.recv_total
            dest = graph.destination.get(cell)
            if dest is None:
                continue
            dnode = graph.nodes[dest]
            dnode.join_total += node.recv_total
            dnode.join_deps -= 1
            if dnode.join_deps == 0:
                work.append(("send", dest))

    stuck = [
        cell for cell, node in graph.nodes.items()
        if (node.cls == CellClass.RECEIVER and not node.recv_done) or node.join_deps > 0
    ]
    if stuck:
        raise FlowCycleError(f"border graph did not drain; first stuck cell {sorted(stuck)[0]}")


def build_replies(graph: BorderGraph) -> list[MasterReply]:
    """One reply per worker: incoming area for each of its receivers (0 included)."""
    replies = []
    for wid in graph.worker_ids:
        incoming = {
            cell: graph.incoming[cell]
            for cell in sorted(graph.nodes)
            if graph.nodes[cell].worker_id == wid and graph.nodes[cell].cls == CellClass.RECEIVER
        }
        replies.append(MasterReply(worker_id=wid, incoming=incoming))
    return replies


def run_master(endpoints: list) -> BorderGraph:
    """Receive one report per worker, solve the border DAG, send replies."""
    reports = []
    for ep in endpoints:
        raw = ep.recv()
        if raw is None:
            raise ProtocolError("worker link closed before its report arrived")
        reports.append(decode_report(raw))
    graph = master_prep(reports)
    master_upslope(graph)
    replies = {r.worker_id: r for r in build_replies(graph)}
    for ep, report in zip(endpoints, reports):
        reply = replies.get(report.worker_id, MasterReply(worker_id=report.worker_id))
        ep.send(encode_reply(reply))
    return graph
