"""Proportional-share baseline: everyone asks for everything, edges split pro rata."""
from __future__ import annotations

import numpy as np

from .core import Allocation, SystemInstance, align_to_units, proportional_result


def baseline_requests(instance: SystemInstance) -> np.ndarray:
    return np.minimum(instance.demand, instance.capacities[None, :])


def run_baseline(instance: SystemInstance) -> Allocation:
    """Single-shot proportional split of full-demand requests; funds are ignored."""
    raw = proportional_result(baseline_requests(instance), instance.capacities)
    return Allocation(align_to_units(raw.granted, instance.units))
