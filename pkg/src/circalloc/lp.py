"""Bounded-variable LP layer for the allocation network.

The allocation LPs are maximization problems over per-arc flow variables with
one capacity row per offer and per order. Solutions are vertex-optimal and
deterministic for identical inputs (dual simplex, single solve path).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog


class LpError(RuntimeError):
    """The LP backend failed for a reason other than plain infeasibility."""


@dataclass
class LpSolution:
    status: str          # "optimal" | "infeasible"
    x: np.ndarray        # per-arc flows (empty when infeasible)
    objective: float     # maximized value (0.0 when infeasible)
    iterations: int


def solve_flow_lp(
    scores: np.ndarray,
    offer_row: np.ndarray,
    order_row: np.ndarray,
    offer_caps: np.ndarray,
    order_caps: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
) -> LpSolution:
    """Maximize sum(scores * x) subject to capacity rows and per-arc bounds.

    ``offer_row[a]``/``order_row[a]`` give the capacity-row index of arc ``a``
    on each side; row a's flow is bounded by ``lower[a] <= x_a <= upper[a]``.
    """
    n_arcs = scores.size
    if n_arcs == 0:
        return LpSolution("optimal", np.zeros(0), 0.0, 0)

    n_offers = offer_caps.size
    n_rows = n_offers + order_caps.size
    cols = np.concatenate([np.arange(n_arcs), np.arange(n_arcs)])
    rows = np.concatenate([offer_row, order_row + n_offers])
    a_ub = sparse.csr_matrix(
        (np.ones(2 * n_arcs), (rows, cols)), shape=(n_rows, n_arcs))
    b_ub = np.concatenate([offer_caps, order_caps])

    res = linprog(
        c=-scores,
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=np.column_stack([lower, upper]),
        method="highs-ds",
    )
    if res.status == 2:
        return LpSolution("infeasible", np.zeros(0), 0.0, int(res.nit or 0))
    if res.status != 0:
        raise LpError(
            f"LP backend failure (status={res.status}: {res.message}); "
            f"arc census: {n_arcs} arcs, {n_offers} offers, {order_caps.size} orders")
    return LpSolution("optimal", np.asarray(res.x), float(-res.fun), int(res.nit))
