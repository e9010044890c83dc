"""circalloc: weighted-sum MILP allocation for perishable-food trading.

Pipeline: feasibility filtering -> criterion scoring -> MILP allocation ->
residual circulation, repeated until no feasible matches remain.
"""

from .engine import AllocationResult, EngineConfig, run_to_termination
from .milp import MilpConfig, SolveReport, solve
from .model import (Flow, Offer, Order, ReasonCode, ValidationError, Weights,
                    subtract_flows, validate_offer, validate_order)

__version__ = "0.1.0"

__all__ = [
    "AllocationResult", "EngineConfig", "run_to_termination",
    "MilpConfig", "SolveReport", "solve",
    "Flow", "Offer", "Order", "ReasonCode", "ValidationError", "Weights",
    "subtract_flows", "validate_offer", "validate_order",
    "__version__",
]
