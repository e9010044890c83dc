"""Stage C: candidate pruning, LP screening, and the MILP allocation solve.

The MILP maximizes total weighted benefit over per-arc flows subject to
offer/order capacities, semi-continuous minimum-trade bounds, and optional
single-counterparty restrictions. Branch-and-bound fixes arc activations;
node relaxations are bounded-variable LPs over the same capacity rows.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .lp import LpError, LpSolution, solve_flow_lp
from .model import Offer, Order, QTY_TOL
from .scoring import ScoredArc

#: Flows below this are dropped from solver output.
FLOW_EMIT_TOL = 1e-9

#: Semi-continuity violation tolerance when classifying node LP solutions.
SC_TOL = 1e-7


@dataclass(frozen=True)
class MilpConfig:
    top_k: int = 250
    screen_epsilon: float = 1e-6   # tonnes; "negligible" relaxed flow
    rel_gap: float = 1e-6
    node_limit: int = 100_000


@dataclass(frozen=True)
class ArcAllocation:
    arc: ScoredArc
    quantity: float


@dataclass
class SolveReport:
    status: str                      # OPTIMAL | INFEASIBLE | EMPTY | NODE_LIMIT
    objective_value: float
    allocations: list[ArcAllocation]
    node_count: int = 0
    lp_iterations: int = 0
    pruned_arcs: int = 0             # removed by top-k pruning
    screened_arcs: int = 0           # removed by LP screening
    lp_bound: float = 0.0
    gap: float = 0.0
    pruned: list[ScoredArc] = field(default_factory=list)
    screened: list[ScoredArc] = field(default_factory=list)


class MilpModel:
    """Arrays and capacity rows for one allocation instance."""

    def __init__(self, offers: Sequence[Offer], orders: Sequence[Order],
                 arcs: Sequence[ScoredArc]):
        self.arcs = list(arcs)
        offer_ids = sorted({a.offer_id for a in arcs})
        order_ids = sorted({a.order_id for a in arcs})
        offers_by_id = {o.id: o for o in offers}
        orders_by_id = {o.id: o for o in orders}
        self._offers_by_id = offers_by_id
        self._orders_by_id = orders_by_id
        self.offer_ids = offer_ids
        self.order_ids = order_ids
        offer_idx = {oid: i for i, oid in enumerate(offer_ids)}
        order_idx = {oid: i for i, oid in enumerate(order_ids)}

        n = len(self.arcs)
        self.scores = np.array([a.aggregate for a in self.arcs])
        self.lower = np.array([a.arc.lower_bound for a in self.arcs])
        self.upper = np.array([a.arc.upper_bound for a in self.arcs])
        self.offer_row = np.array([offer_idx[a.offer_id] for a in self.arcs], dtype=int)
        self.order_row = np.array([order_idx[a.order_id] for a in self.arcs], dtype=int)
        self.offer_caps = np.array([offers_by_id[oid].quantity for oid in offer_ids])
        self.order_caps = np.array([orders_by_id[oid].quantity for oid in order_ids])
        self.single_order_offers = [
            i for i, oid in enumerate(offer_ids) if offers_by_id[oid].single_order]
        self.single_offer_orders = [
            i for i, oid in enumerate(order_ids) if orders_by_id[oid].single_offer]
        self._single_order_set = set(self.single_order_offers)
        self._single_offer_set = set(self.single_offer_orders)

        self.arcs_of_offer: list[list[int]] = [[] for _ in offer_ids]
        self.arcs_of_order: list[list[int]] = [[] for _ in order_ids]
        for a_idx in range(n):
            self.arcs_of_offer[self.offer_row[a_idx]].append(a_idx)
            self.arcs_of_order[self.order_row[a_idx]].append(a_idx)

        n_offers = len(offer_ids)
        rows = np.concatenate([self.offer_row, self.order_row + n_offers])
        cols = np.concatenate([np.arange(n), np.arange(n)])
        self._a_ub = sparse.csr_matrix(
            (np.ones(2 * n), (rows, cols)), shape=(n_offers + len(order_ids), n))
        self._b_ub = np.concatenate([self.offer_caps, self.order_caps])

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def has_semicontinuity(self) -> bool:
        return bool(self.n_arcs) and bool(np.any(self.lower > QTY_TOL))

    def has_counterparty_flags(self) -> bool:
        return bool(self.single_order_offers or self.single_offer_orders)

    def solve_node_lp(self, lower: np.ndarray, upper: np.ndarray) -> LpSolution:
        res = linprog(c=-self.scores, A_ub=self._a_ub, b_ub=self._b_ub,
                      bounds=np.column_stack([lower, upper]), method="highs-ds")
        if res.status == 2:
            return LpSolution("infeasible", np.zeros(0), 0.0, int(res.nit or 0))
        if res.status != 0:
            raise LpError(
                f"node LP failure (status={res.status}: {res.message}); "
                f"arc census: {self.n_arcs} arcs, {len(self.offer_ids)} offers, "
                f"{len(self.order_ids)} orders")
        return LpSolution("optimal", np.asarray(res.x), float(-res.fun), int(res.nit))


def build_model(offers: Sequence[Offer], orders: Sequence[Order],
                arcs: Sequence[ScoredArc]) -> MilpModel:
    return MilpModel(offers, orders, arcs)


def _rank_key(arc: ScoredArc):
    return (-arc.aggregate, arc.offer_id, arc.order_id)


def prune_topk(arcs: Sequence[ScoredArc], k: int) -> list[ScoredArc]:
    """Keep arcs ranking within the top-k of their order or of their offer.

    Union semantics: surviving on either side is enough, so no participant is
    starved of all its candidates. Ties break by higher score, then ids.
    """
    if k < 1:
        raise ValueError("top-k must be at least 1")
    by_offer: dict[str, list[ScoredArc]] = {}
    by_order: dict[str, list[ScoredArc]] = {}
    for arc in arcs:
        by_offer.setdefault(arc.offer_id, []).append(arc)
        by_order.setdefault(arc.order_id, []).append(arc)
    keep: set[tuple[str, str]] = set()
    for group in (*by_offer.values(), *by_order.values()):
        for arc in sorted(group, key=_rank_key)[:k]:
            keep.add((arc.offer_id, arc.order_id))
    return [a for a in arcs if (a.offer_id, a.order_id) in keep]


def solve_lp_relaxation(model: MilpModel) -> tuple[np.ndarray, float, int]:
    """Solve the capacity-only relaxation (activation bounds dropped).

    Returns per-arc relaxed flows, the LP bound on the MILP optimum, and the
    simplex iteration count.
    """
    if model.n_arcs == 0:
        return np.zeros(0), 0.0, 0
    sol = solve_flow_lp(model.scores, model.offer_row, model.order_row,
                        model.offer_caps, model.order_caps,
                        np.zeros(model.n_arcs), model.upper)
    if sol.status != "optimal":
        raise LpError("capacity-only relaxation reported infeasible; "
                      f"arc census: {model.n_arcs} arcs")
    return sol.x, sol.objective, sol.iterations


def lp_screen(arcs: Sequence[ScoredArc], relaxed_flows: np.ndarray,
              epsilon: float) -> list[ScoredArc]:
    """Drop arcs with negligible relaxed flow, guarding each entity's last arc."""
    kept = [flow >= epsilon for flow in relaxed_flows]

    alive_offers: set[str] = set()
    alive_orders: set[str] = set()
    for arc, keep in zip(arcs, kept):
        if keep:
            alive_offers.add(arc.offer_id)
            alive_orders.add(arc.order_id)

    by_offer: dict[str, list[int]] = {}
    by_order: dict[str, list[int]] = {}
    for idx, arc in enumerate(arcs):
        by_offer.setdefault(arc.offer_id, []).append(idx)
        by_order.setdefault(arc.order_id, []).append(idx)

    def revive(group: list[int]) -> None:
        best = min(group, key=lambda i: _rank_key(arcs[i]))
        kept[best] = True
        alive_offers.add(arcs[best].offer_id)
        alive_orders.add(arcs[best].order_id)

    for offer_id in sorted(by_offer):
        if offer_id not in alive_offers:
            revive(by_offer[offer_id])
    for order_id in sorted(by_order):
        if order_id not in alive_orders:
            revive(by_order[order_id])

    return [arc for arc, keep in zip(arcs, kept) if keep]


class _Node:
    __slots__ = ("parent", "decision")

    def __init__(self, parent: Optional["_Node"], decision: Optional[tuple[int, bool]]):
        self.parent = parent
        self.decision = decision


def _node_bounds(model: MilpModel, node: _Node) -> tuple[np.ndarray, np.ndarray, set[int]]:
    """Replay branching decisions from the root; returns (lower, upper, decided)."""
    decisions: list[tuple[int, bool]] = []
    cur: Optional[_Node] = node
    while cur is not None and cur.decision is not None:
        decisions.append(cur.decision)
        cur = cur.parent
    decisions.reverse()

    lower = np.zeros(model.n_arcs)
    upper = model.upper.copy()
    decided: set[int] = set()
    for arc_idx, on in decisions:
        decided.add(arc_idx)
        if on:
            lower[arc_idx] = model.lower[arc_idx]
            offer = model.offer_row[arc_idx]
            if offer in model._single_order_set:
                for sibling in model.arcs_of_offer[offer]:
                    if sibling != arc_idx:
                        lower[sibling] = 0.0
                        upper[sibling] = 0.0
                        decided.add(sibling)
            order = model.order_row[arc_idx]
            if order in model._single_offer_set:
                for sibling in model.arcs_of_order[order]:
                    if sibling != arc_idx:
                        lower[sibling] = 0.0
                        upper[sibling] = 0.0
                        decided.add(sibling)
        else:
            lower[arc_idx] = 0.0
            upper[arc_idx] = 0.0
    return lower, upper, decided


def _semicontinuity_violation(model: MilpModel, x: np.ndarray,
                              decided: set[int]) -> Optional[int]:
    """Free arc whose flow sits strictly inside (0, L); largest flow wins."""
    best_idx = None
    best_flow = 0.0
    for arc_idx in range(model.n_arcs):
        if arc_idx in decided:
            continue
        flow = x[arc_idx]
        if flow > FLOW_EMIT_TOL and flow < model.lower[arc_idx] - SC_TOL:
            if flow > best_flow:
                best_flow = flow
                best_idx = arc_idx
    return best_idx


def _counterparty_violation(model: MilpModel, x: np.ndarray) -> Optional[int]:
    """Arc to branch on for the most fractional violated flag constraint."""
    candidates: list[tuple[float, float, int, int]] = []
    groups = [(0, row, model.arcs_of_offer[row]) for row in model.single_order_offers]
    groups += [(1, row, model.arcs_of_order[row]) for row in model.single_offer_orders]
    for side, row, arc_indices in groups:
        active = [i for i in arc_indices if x[i] > FLOW_EMIT_TOL]
        if len(active) < 2:
            continue
        activation_sum = float(sum(
            x[i] / model.upper[i] for i in active if model.upper[i] > 0))
        frac = activation_sum - math.floor(activation_sum)
        fracness = min(frac, 1.0 - frac)
        # heapq-style key: prefer most fractional, then largest sum, stable by side/row
        candidates.append((-fracness, -activation_sum, side, row))
    if not candidates:
        return None
    _, _, side, row = min(candidates)
    arc_indices = model.arcs_of_offer[row] if side == 0 else model.arcs_of_order[row]
    active = [i for i in arc_indices if x[i] > FLOW_EMIT_TOL]
    return max(active, key=lambda i: (x[i], -i))


def _extract_allocations(model: MilpModel, x: np.ndarray) -> list[ArcAllocation]:
    return [ArcAllocation(model.arcs[i], float(x[i]))
            for i in range(model.n_arcs) if x[i] >= FLOW_EMIT_TOL]


def _round_to_feasible(model: MilpModel, x: np.ndarray) -> np.ndarray:
    """Repair an LP point into MILP feasibility: lift slivers, else drop them.

    A flow below its minimum is first lifted to the minimum by shaving the
    surplus of sibling flows that sit above their own minima (keeping every
    capacity row satisfied); when no surplus exists the sliver is dropped.
    Lowering flows can never violate the capacity rows, so the result is
    always MILP-feasible and provides an incumbent at every node.
    """
    rounded = x.copy()
    viol = [i for i in range(model.n_arcs)
            if FLOW_EMIT_TOL < rounded[i] < model.lower[i] - SC_TOL]
    if viol:
        offer_use = np.zeros(len(model.offer_ids))
        order_use = np.zeros(len(model.order_ids))
        for i in range(model.n_arcs):
            offer_use[model.offer_row[i]] += rounded[i]
            order_use[model.order_row[i]] += rounded[i]

        def shave(arc_indices, rows, use, caps, skip, needed) -> float:
            got = 0.0
            for j in arc_indices:
                if j == skip or got >= needed - 1e-12:
                    continue
                surplus = rounded[j] - model.lower[j]
                if rounded[j] > FLOW_EMIT_TOL and surplus > 1e-12:
                    take = min(surplus, needed - got)
                    rounded[j] -= take
                    use[rows[j]] -= take
                    got += take
            return got

        # largest slivers first: they carry the most recoverable score
        for i in sorted(viol, key=lambda i: (-x[i], i)):
            deficit = model.lower[i] - rounded[i]
            f_row, o_row = model.offer_row[i], model.order_row[i]
            f_slack = model.offer_caps[f_row] - offer_use[f_row]
            o_slack = model.order_caps[o_row] - order_use[o_row]
            # free capacity first, then shave surplus off siblings
            lift = min(deficit, f_slack, o_slack)
            need_f = deficit - min(deficit, f_slack)
            need_o = deficit - min(deficit, o_slack)
            ok = True
            if need_f > 1e-12:
                got = shave(model.arcs_of_offer[f_row], model.order_row,
                            order_use, model.order_caps, i, need_f)
                ok = got >= need_f - 1e-9
            if ok and need_o > 1e-12:
                got = shave(model.arcs_of_order[o_row], model.offer_row,
                            offer_use, model.offer_caps, i, need_o)
                ok = ok and got >= need_o - 1e-9
            rounded[i] = model.lower[i] if ok else 0.0
            offer_use[f_row] = sum(rounded[j] for j in model.arcs_of_offer[f_row])
            order_use[o_row] = sum(rounded[j] for j in model.arcs_of_order[o_row])

    below = rounded < model.lower - SC_TOL
    rounded[below & (rounded > 0.0)] = 0.0
    for row in model.single_order_offers:
        active = [i for i in model.arcs_of_offer[row] if rounded[i] > FLOW_EMIT_TOL]
        if len(active) > 1:
            keep = max(active, key=lambda i: (rounded[i], -i))
            for i in active:
                if i != keep:
                    rounded[i] = 0.0
    for row in model.single_offer_orders:
        active = [i for i in model.arcs_of_order[row] if rounded[i] > FLOW_EMIT_TOL]
        if len(active) > 1:
            keep = max(active, key=lambda i: (rounded[i], -i))
            for i in active:
                if i != keep:
                    rounded[i] = 0.0
    return rounded


def _components(model: MilpModel) -> list[list[int]]:
    """Connected components of the arc graph, as lists of arc indices.

    Capacity rows couple only arcs sharing an offer or an order, so the MILP
    decomposes exactly across components.
    """
    n_offers = len(model.offer_ids)
    n_nodes = n_offers + len(model.order_ids)
    parent = list(range(n_nodes))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a in range(model.n_arcs):
        ra = find(int(model.offer_row[a]))
        rb = find(int(model.order_row[a]) + n_offers)
        if ra != rb:
            parent[rb] = ra

    groups: dict[int, list[int]] = {}
    for a in range(model.n_arcs):
        groups.setdefault(find(int(model.offer_row[a])), []).append(a)
    return [groups[root] for root in sorted(groups, key=lambda r: groups[r][0])]


def _solve_component(model: MilpModel, config: MilpConfig,
                     node_budget: int) -> SolveReport:
    """Best-bound branch-and-bound on one connected component."""
    incumbent_value = 0.0
    incumbent: list[ArcAllocation] = []
    node_count = 0
    lp_iterations = 0

    seq = 0
    heap: list[tuple[float, int, _Node]] = [(-math.inf, seq, _Node(None, None))]
    root_infeasible = False
    limit_hit = False
    best_open_bound = math.inf

    while heap:
        neg_bound, _, node = heapq.heappop(heap)
        parent_bound = -neg_bound
        gap_slack = config.rel_gap * max(1.0, abs(incumbent_value))
        if parent_bound <= incumbent_value + gap_slack:
            break  # heap is bound-ordered: nothing left can improve
        if node_count >= node_budget:
            limit_hit = True
            best_open_bound = parent_bound
            break

        lower, upper, decided = _node_bounds(model, node)
        sol = model.solve_node_lp(lower, upper)
        node_count += 1
        lp_iterations += sol.iterations
        if sol.status != "optimal":
            if node.decision is None:
                root_infeasible = True
            continue
        bound = sol.objective
        if bound <= incumbent_value + gap_slack:
            continue

        x = sol.x.copy()
        x[x < FLOW_EMIT_TOL] = 0.0

        rounded = _round_to_feasible(model, x)
        rounded_value = float(model.scores @ rounded)
        if rounded_value > incumbent_value:
            incumbent_value = rounded_value
            incumbent = _extract_allocations(model, rounded)
            gap_slack = config.rel_gap * max(1.0, abs(incumbent_value))
            if bound <= incumbent_value + gap_slack:
                continue

        branch_idx = _semicontinuity_violation(model, x, decided)
        if branch_idx is None:
            branch_idx = _counterparty_violation(model, x)
        if branch_idx is None:
            continue  # LP point was already feasible; rounding kept it intact

        seq += 1
        heapq.heappush(heap, (-bound, seq, _Node(node, (branch_idx, True))))
        seq += 1
        heapq.heappush(heap, (-bound, seq, _Node(node, (branch_idx, False))))

    if root_infeasible:
        return SolveReport("INFEASIBLE", 0.0, [], node_count, lp_iterations)

    report = SolveReport(
        "NODE_LIMIT" if limit_hit else "OPTIMAL",
        incumbent_value, incumbent, node_count, lp_iterations)
    if limit_hit:
        report.gap = max(0.0, best_open_bound - incumbent_value) / max(1.0, abs(incumbent_value))
    return report


def branch_and_bound(model: MilpModel, config: MilpConfig = MilpConfig()) -> SolveReport:
    """Prove-optimal solve of the semi-continuous allocation MILP.

    The arc graph is split into connected components, each solved by
    best-bound branch-and-bound with deterministic tie-breaking; branching
    fixes the arc most violating semi-continuity, else the most fractional
    violated single-counterparty constraint. The empty allocation is always
    feasible, so a node-limit exit still returns a valid incumbent.
    """
    if model.n_arcs == 0:
        return SolveReport("EMPTY", 0.0, [])

    components = _components(model)
    if len(components) == 1:
        report = _solve_component(model, config, config.node_limit)
    else:
        total_value = 0.0
        allocations: list[ArcAllocation] = []
        node_count = 0
        lp_iterations = 0
        gap = 0.0
        statuses: list[str] = []
        budget = config.node_limit
        for arc_indices in components:
            sub_arcs = [model.arcs[i] for i in arc_indices]
            sub_offers = {model._offers_by_id[a.offer_id] for a in sub_arcs}
            sub_orders = {model._orders_by_id[a.order_id] for a in sub_arcs}
            sub_model = MilpModel(sorted(sub_offers, key=lambda o: o.id),
                                  sorted(sub_orders, key=lambda o: o.id), sub_arcs)
            sub_report = _solve_component(sub_model, config, max(1, budget - node_count))
            statuses.append(sub_report.status)
            total_value += sub_report.objective_value
            allocations.extend(sub_report.allocations)
            node_count += sub_report.node_count
            lp_iterations += sub_report.lp_iterations
            gap += sub_report.gap * max(1.0, abs(sub_report.objective_value))
        if "INFEASIBLE" in statuses:
            status = "INFEASIBLE"
        elif "NODE_LIMIT" in statuses:
            status = "NODE_LIMIT"
        else:
            status = "OPTIMAL"
        report = SolveReport(status, total_value, allocations,
                             node_count, lp_iterations)
        report.gap = gap / max(1.0, abs(total_value))

    report.allocations.sort(key=lambda a: (a.arc.offer_id, a.arc.order_id))
    return report


def solve(offers: Sequence[Offer], orders: Sequence[Order],
          arcs: Sequence[ScoredArc], config: MilpConfig = MilpConfig()) -> SolveReport:
    """Full Stage C pipeline: prune, relax, screen, then branch-and-bound.

    When no arc carries a positive minimum trade and no single-counterparty
    flag is set, the capacity-only relaxation is already integral and its
    solution is returned directly.
    """
    arcs = list(arcs)
    if not arcs:
        return SolveReport("EMPTY", 0.0, [])

    kept = prune_topk(arcs, config.top_k)
    kept_keys = {(a.offer_id, a.order_id) for a in kept}
    pruned = [a for a in arcs if (a.offer_id, a.order_id) not in kept_keys]

    model = build_model(offers, orders, kept)
    relaxed, lp_bound, relax_iters = solve_lp_relaxation(model)

    if not model.has_semicontinuity() and not model.has_counterparty_flags():
        allocations = _extract_allocations(model, relaxed)
        objective = float(sum(a.arc.aggregate * a.quantity for a in allocations))
        return SolveReport("OPTIMAL", objective, allocations,
                           node_count=0, lp_iterations=relax_iters,
                           pruned_arcs=len(pruned), screened_arcs=0,
                           lp_bound=lp_bound, pruned=pruned)

    survivors = lp_screen(kept, relaxed, config.screen_epsilon)
    survivor_keys = {(a.offer_id, a.order_id) for a in survivors}
    screened = [a for a in kept if (a.offer_id, a.order_id) not in survivor_keys]

    final_model = build_model(offers, orders, survivors)
    report = branch_and_bound(final_model, config)
    report.lp_iterations += relax_iters
    report.pruned_arcs = len(pruned)
    report.screened_arcs = len(screened)
    report.lp_bound = lp_bound
    report.pruned = pruned
    report.screened = screened
    return report
