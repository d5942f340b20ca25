"""Run-time options shared by the engine, the oracles and the CLI."""

from dataclasses import dataclass
from typing import Optional

ORDER_POLICIES = ("declaration", "lexicographic")
ORACLE_MODES = ("none", "enumerate", "qe", "differential")


@dataclass
class SolverConfig:
    max_steps: int = 0  # 0 means unlimited
    trace_path: Optional[str] = None
    order_policy: str = "declaration"
    emit_model: bool = True
    oracle_mode: str = "none"
    debug: bool = False

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.order_policy not in ORDER_POLICIES:
            raise ValueError(f"unknown order policy {self.order_policy!r}")
        if self.oracle_mode not in ORACLE_MODES:
            raise ValueError(f"unknown oracle mode {self.oracle_mode!r}")
