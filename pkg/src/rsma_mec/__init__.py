"""Successful computation probability of a two-user uplink RSMA edge-computing link.

Finite-blocklength error model, closed-form offloading, convex restrictions
solved by a small interior-point kernel, the alternating optimiser and the
Monte Carlo harness around it.
"""

from .ao import Allocation, AoTrace, brute_force_oracle, optimize, optimize_noma
from .streams import ChannelRealization, PowerAllocation, SplitFactors
from .system import OffloadFactors, ScpResult, SystemConfig, optimal_lambda, scp

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "AoTrace",
    "ChannelRealization",
    "OffloadFactors",
    "PowerAllocation",
    "ScpResult",
    "SplitFactors",
    "SystemConfig",
    "brute_force_oracle",
    "optimal_lambda",
    "optimize",
    "optimize_noma",
    "scp",
]
