"""Serial reference searches: an exhaustive Dijkstra oracle, classic
weighted A*, and a serial anytime-repair search.

These double as experiment baselines and as correctness oracles for the
parallel engine, so they deliberately do not import anything from the
engine module: the repair search re-implements the edge-expansion
discipline serially (no threads, no locks, no independence checks).
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

from .controller import (
    STATUS_COMPLETED_BOUNDED,
    STATUS_INFEASIBLE,
    STATUS_PROVED_OPTIMAL,
    STATUS_TIMEOUT,
    IterationStats,
    PlanResult,
    PlannerConfig,
    SolutionRecord,
    publish,
    weight_schedule,
)
from .domain import DUMMY_ACTION, Edge, EdgeCache, Path, SearchDomain
from .structures import (
    INF,
    InconsistentSet,
    OpenQueue,
    SearchNode,
    edge_priority,
    merge_incons,
)


@dataclass(frozen=True)
class OracleResult:
    cost: float
    path: Path | None
    expansions: int


def _reconstruct(cache: EdgeCache, parents: dict[int, Edge], start: int, goal: int) -> Path:
    edges: list[Edge] = []
    states: list[int] = [goal]
    cost = 0.0
    current = goal
    while current != start:
        edge = parents[current]
        outcome = cache.get(edge)
        assert outcome is not None and outcome.valid and outcome.successor == current
        cost += outcome.cost
        edges.append(edge)
        current = edge.state
        states.append(current)
    edges.reverse()
    states.reverse()
    return Path(edges=tuple(edges), states=tuple(states), cost=cost)


def dijkstra_distances(domain: SearchDomain, start: int,
                       cache: EdgeCache | None = None) -> dict[int, float]:
    """Exact cost-to-come of every state reachable from ``start``."""
    if cache is None:
        cache = EdgeCache()
    dist = {start: 0.0}
    settled: set[int] = set()
    heap: list[tuple[float, int]] = [(0.0, start)]
    while heap:
        d, s = heapq.heappop(heap)
        if s in settled:
            continue
        settled.add(s)
        for a in domain.actions(s):
            out = cache.evaluate(domain, Edge(s, a))
            if not out.valid or out.successor in settled:
                continue
            nd = d + out.cost
            if nd < dist.get(out.successor, INF):
                dist[out.successor] = nd
                heapq.heappush(heap, (nd, out.successor))
    return dist


def dijkstra_oracle(domain: SearchDomain, start: int, goal_predicate=None,
                    cache: EdgeCache | None = None) -> OracleResult:
    """Exhaustive uniform-cost search; the ground-truth optimal cost.

    No heuristic is consulted.  An unreachable goal region yields cost inf
    and no path.
    """
    goal_predicate = goal_predicate or domain.is_goal
    if cache is None:
        cache = EdgeCache()
    dist = {start: 0.0}
    parents: dict[int, Edge] = {}
    settled: set[int] = set()
    heap: list[tuple[float, int]] = [(0.0, start)]
    expansions = 0
    while heap:
        d, s = heapq.heappop(heap)
        if s in settled:
            continue
        settled.add(s)
        expansions += 1
        if goal_predicate(s):
            return OracleResult(d, _reconstruct(cache, parents, start, s), expansions)
        for a in domain.actions(s):
            out = cache.evaluate(domain, Edge(s, a))
            if not out.valid or out.successor in settled:
                continue
            nd = d + out.cost
            if nd < dist.get(out.successor, INF):
                dist[out.successor] = nd
                parents[out.successor] = Edge(s, a)
                heapq.heappush(heap, (nd, out.successor))
    return OracleResult(INF, None, expansions)


def weighted_astar(domain: SearchDomain, start: int, w: float = 1.0,
                   goal_predicate=None, cache: EdgeCache | None = None) -> OracleResult:
    """Classic state-based weighted A*: f = g + w*h, closed states are
    never re-expanded, ties break on (f, h, state)."""
    if w < 1.0:
        raise ValueError(f"w must be >= 1, got {w}")
    goal_predicate = goal_predicate or domain.is_goal
    if cache is None:
        cache = EdgeCache()
    g = {start: 0.0}
    parents: dict[int, Edge] = {}
    closed: set[int] = set()
    h0 = domain.heuristic(start)
    heap: list[tuple[float, float, int]] = [(w * h0, h0, start)]
    expansions = 0
    while heap:
        _f, _h, s = heapq.heappop(heap)
        if s in closed:
            continue
        closed.add(s)
        expansions += 1
        if goal_predicate(s):
            return OracleResult(g[s], _reconstruct(cache, parents, start, s), expansions)
        gs = g[s]
        for a in domain.actions(s):
            out = cache.evaluate(domain, Edge(s, a))
            if not out.valid or out.successor in closed:
                continue
            ng = gs + out.cost
            if ng < g.get(out.successor, INF):
                g[out.successor] = ng
                parents[out.successor] = Edge(s, a)
                hs = domain.heuristic(out.successor)
                heapq.heappush(heap, (ng + w * hs, hs, out.successor))
    return OracleResult(INF, None, expansions)


def ara_star(config: PlannerConfig, domain: SearchDomain, start: int, *,
             sink=None, collect_trace: bool = False) -> PlanResult:
    """Serial anytime repairing search over the same edge-expansion
    discipline as the parallel engine, minus all parallel machinery.

    Keeps the inconsistent list across passes, seeds each pass with
    OPEN u INCON, and terminates a pass once the incumbent's priority is no
    worse than OPEN's minimum.  With the shared tie-break rule this yields
    the same published costs as the parallel engine at one thread, which is
    what makes it a useful cross-engine oracle.

    ``collect_trace`` records every popped (iteration, state, action) in
    ``result.trace``.
    """
    t0 = time.monotonic()
    deadline = t0 + config.time_budget
    schedule = weight_schedule(config.w0, config.delta_w)
    if config.max_iterations is not None:
        schedule = schedule[: config.max_iterations]

    cache = EdgeCache()
    nodes: dict[int, SearchNode] = {}
    open_q = OpenQueue()
    incons = InconsistentSet()
    be: set[int] = set()
    closed: set[int] = set()
    trace: list[tuple[int, int, int]] = []
    unjustified = 0

    def node_of(state: int) -> SearchNode:
        node = nodes.get(state)
        if node is None:
            node = SearchNode(h=domain.heuristic(state))
            nodes[state] = node
        return node

    start_node = node_of(start)
    start_node.g = 0.0
    open_q.upsert(Edge(start, DUMMY_ACTION),
                  edge_priority(0.0, start_node.h, schedule[0]), start_node.h)

    goal_found: int | None = None
    records: list[SolutionRecord] = []
    iterations: list[IterationStats] = []
    status: str | None = None
    best_path: Path | None = None
    best_cost = INF

    for i, w in enumerate(schedule):
        if time.monotonic() >= deadline:
            status = STATUS_TIMEOUT
            break
        eps = config.epsilon_for(w)
        for s in closed:
            nodes[s].in_closed = False
        closed.clear()
        merge_incons(open_q, incons, nodes, w)
        open_q.rebalance(w, nodes)

        n_dummy = n_real = 0
        it_t0 = time.monotonic()
        outcome = "solved"
        while True:
            if time.monotonic() >= deadline:
                outcome = "timeout"
                break
            goal_g = nodes[goal_found].g if goal_found is not None else INF
            if goal_found is not None and goal_g <= open_q.min_f():
                break
            if not open_q:
                outcome = "exhausted"
                break
            edge = open_q.pop_min()
            node = nodes[edge.state]
            if collect_trace:
                trace.append((i, edge.state, edge.action))
            if edge.action == DUMMY_ACTION:
                if node.g >= node.g_expanded:
                    unjustified += 1
                node._g_expanded_prev = node.g_expanded
                node.g_expanded = node.g
                node.in_be = True
                be.add(edge.state)
                node.n_actions = len(domain.actions(edge.state))
                node.n_successors_generated = 0
                n_dummy += 1
            else:
                n_real += 1
            if node.g < goal_g and domain.is_goal(edge.state):
                goal_found = edge.state

            if edge.action == DUMMY_ACTION:
                f = edge_priority(node.g, node.h, w)
                for a in domain.actions(edge.state):
                    open_q.upsert(Edge(edge.state, a), f, node.h)
                if node.n_actions == 0:  # nothing to expand: close right away
                    node.in_be = False
                    be.discard(edge.state)
                    node.in_closed = True
                    closed.add(edge.state)
            else:
                out = cache.evaluate(domain, edge)
                if out.valid:
                    succ = node_of(out.successor)
                    ng = node.g + out.cost
                    if succ.g > ng:
                        succ.g = ng
                        succ.parent = edge
                        if not succ.in_closed and not succ.in_be:
                            open_q.upsert(Edge(out.successor, DUMMY_ACTION),
                                          edge_priority(ng, succ.h, w), succ.h)
                        else:
                            succ.in_incon = True
                            incons.add(out.successor)
                node.n_successors_generated += 1
                if node.n_successors_generated == node.n_actions:
                    node.in_be = False
                    be.discard(edge.state)
                    node.in_closed = True
                    closed.add(edge.state)

        iterations.append(IterationStats(
            w=w, eps=eps, n_dummy_expansions=n_dummy, n_real_expansions=n_real,
            n_incon_end=len(incons), wall_time=time.monotonic() - it_t0,
            outcome=outcome))
        if outcome == "exhausted":
            status = STATUS_INFEASIBLE
            break
        if outcome == "timeout":
            status = STATUS_TIMEOUT
            break

        # fold interrupted expansions back into dummy edges
        for s in sorted(be):
            node = nodes[s]
            for a in domain.actions(s):
                open_q.discard(Edge(s, a))
            node.n_successors_generated = 0
            node.n_actions = -1
            node.in_be = False
            node.g_expanded = node._g_expanded_prev
            if not node.in_incon:
                open_q.upsert(Edge(s, DUMMY_ACTION),
                              edge_priority(node.g, node.h, w), node.h)
        be.clear()

        path = _reconstruct(cache, {s: n.parent for s, n in nodes.items()
                                    if n.parent is not None}, start, goal_found)
        if path.cost < best_cost:
            best_path, best_cost = path, path.cost
        record = SolutionRecord(
            path=best_path, cost=best_cost, w_at_publish=w,
            bound_lambda=max(eps, w),
            t_since_plan_start=time.monotonic() - t0,
            iteration_index=i)
        records.append(record)
        publish(sink, record)
    else:
        last_w = schedule[-1]
        if last_w == 1.0 and config.epsilon_for(last_w) == 1.0:
            status = STATUS_PROVED_OPTIMAL
        else:
            status = STATUS_COMPLETED_BOUNDED

    return PlanResult(records=records, status=status or STATUS_TIMEOUT,
                      iterations=iterations, wall_time=time.monotonic() - t0,
                      unjustified_reexpansions=unjustified,
                      trace=trace if collect_trace else None)
