"""Bounded greedy pixel search: symbolic analysis under the L0 norm.

Instead of an LP (which needs a linear distance metric), NC and NBC
requirements are attacked by changing one pixel at a time: every step
evaluates the family objective for each not-yet-modified pixel at the extreme
values {0, 1} (plus the pixel's source value, a no-op) and applies the single
best strictly-improving change. The search stops as soon as the requirement
holds, or fails when the pixel budget is exhausted or no change improves the
objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .logic import NBCTag, NCTag, Requirement
from .network import Network, forward

QUANT_TOL = 1.0 / 510.0  # half of one 8-bit quantization step


@dataclass(frozen=True)
class L0Budget:
    max_pixels: int = 100
    extremes: tuple[float, ...] = (0.0, 1.0)

    def __post_init__(self):
        if self.max_pixels < 1:
            raise ValueError("pixel budget must be at least 1")


def l0_distance(a: np.ndarray, b: np.ndarray, tol: float = QUANT_TOL) -> int:
    """Number of coordinates differing by more than the quantization tolerance."""
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return int(np.count_nonzero(np.abs(a - b) > tol))


def _objective_and_check(net: Network, r: Requirement):
    tag = r.tag
    if isinstance(tag, NCTag):
        k, i = tag.layer, tag.neuron

        def obj(x):
            return float(forward(net, x).u_flat(k)[i])

        return obj, lambda val: val >= 0.0
    if isinstance(tag, NBCTag):
        k, i = tag.layer, tag.neuron
        if tag.side == "hi":
            def obj(x):
                return float(forward(net, x).u_flat(k)[i]) - tag.high
        else:
            def obj(x):
                return tag.low - float(forward(net, x).u_flat(k)[i])
        return obj, lambda val: val > 0.0
    raise ValueError(f"L0 search supports NC and NBC requirements, not {type(tag).__name__}")


def symbolic_l0(
    net: Network, t: np.ndarray, r: Requirement, budget: L0Budget = L0Budget()
) -> Optional[np.ndarray]:
    """Greedy coordinate search for an input satisfying ``r`` within the pixel budget.

    Returns a new input differing from ``t`` in at most ``budget.max_pixels``
    coordinates, or None on failure. Every accepted step strictly increases the
    requirement's objective, so the loop runs at most ``max_pixels`` steps.
    """
    cur = np.ravel(np.asarray(t, dtype=np.float64)).copy()
    obj, satisfied = _objective_and_check(net, r)
    value = obj(cur)
    if satisfied(value):
        return cur
    modified: set[int] = set()
    while len(modified) < budget.max_pixels:
        best: Optional[tuple[int, float, float]] = None  # pixel, candidate value, objective
        for pix in range(cur.size):
            if pix in modified:
                continue
            original = cur[pix]
            for cand in (*budget.extremes, float(t[pix])):
                if cand == original:
                    continue
                cur[pix] = cand
                trial = obj(cur)
                if trial > value and (best is None or trial > best[2]):
                    best = (pix, cand, trial)
            cur[pix] = original
        if best is None:
            return None
        pix, cand, value = best
        cur[pix] = cand
        modified.add(pix)
        if satisfied(value):
            return cur
    return None
