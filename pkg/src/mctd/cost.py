"""Worst-case search cost predictors and their measured counterpart.

Costs are in denoise iterations so they can be compared across machines. The
dense predictor is ``n_child ** s_bar * c_sub``; the sparse one replaces the
depth by ``S / H`` (a real exponent, no rounding) and the per-subplan cost by
``c_coarse``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class CostOverflow(OverflowError):
    pass


@dataclass(frozen=True)
class CostInputs:
    n_child: int
    s_bar: int
    S: int = 1
    H: int = 1
    c_sub: float = 1.0
    c_coarse: float = 1.0

    def __post_init__(self):
        if self.n_child < 1:
            raise ValueError("n_child must be >= 1")
        # s_bar = 0 is the empty search (goal already at hand)
        if self.s_bar < 0:
            raise ValueError("s_bar must be >= 0")
        if self.S < 1 or self.H < 1:
            raise ValueError("S and H must be >= 1")
        if self.H > self.S:
            raise ValueError("H must not exceed S")
        if not (self.c_sub > 0 and self.c_coarse > 0):
            raise ValueError("per-subplan costs must be > 0")


def _power_cost(base: int, exponent: float, unit: float) -> float:
    try:
        out = math.pow(base, exponent) * unit
    except OverflowError:
        out = math.inf
    if not math.isfinite(out):
        raise CostOverflow(f"{base}**{exponent} * {unit} is not representable as a float")
    return out


def predicted_cost_mctd(inputs: CostInputs) -> float:
    return _power_cost(inputs.n_child, inputs.s_bar, inputs.c_sub)


def predicted_cost_smctd(inputs: CostInputs) -> float:
    return _power_cost(inputs.n_child, inputs.S / inputs.H, inputs.c_coarse)


def empirical_cost(result) -> float:
    """Denoise iterations recorded for a run (0 if nothing was sampled)."""
    return float(getattr(result, "denoise_iterations", 0) or 0)


def full_expansion_count(n_child: int, depth: int) -> int:
    """Nodes below the root of a complete ``n_child``-ary tree of ``depth`` levels."""
    return sum(n_child**i for i in range(1, depth + 1))
