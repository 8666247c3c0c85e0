"""Nonparametric estimators on a counting system.

Cumulative transition intensities (Nelson-Aalen form dN/Y), state survival
via the scalar product integral (Kaplan-Meier form), and the plug-in
semi-Markov kernel dQ_ij = G_i(x-) dA_ij(x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import Clock, CountingSystem, StateSpace
from .steps import StepFunction, StepMatrix, product_integral_scalar, sum_functions


@dataclass(frozen=True)
class IntensityEstimate:
    """Cumulative transition intensities A_ij as step functions (zero diagonal)."""

    space: StateSpace
    clock: Clock
    A: StepMatrix
    risk_at_jumps: dict[tuple[int, int], np.ndarray]


@dataclass(frozen=True)
class SurvivalEstimate:
    """State survival G_i = prod (1 - dB_i) with B_i the row sums of A."""

    space: StateSpace
    clock: Clock
    B: dict[int, StepFunction]
    G: dict[int, StepFunction]

    def g_at(self, i: int, x) -> float:
        return self.G[i](x)

    def g_left(self, i: int, x) -> float:
        return self.G[i].left_limit(x)


@dataclass(frozen=True)
class KernelEstimate:
    """Semi-Markov kernel Q_ij(x): next-state-and-sojourn joint distribution."""

    space: StateSpace
    clock: Clock
    Q: StepMatrix
    provenance: str = "nonparametric"


def nelson_aalen(cs: CountingSystem) -> IntensityEstimate:
    """Cumulative intensity estimate: A_ij jumps by dN_ij(x) / Y_i(x).

    Tied events aggregate over one risk-set value (Breslow-style ties); jump
    times where the risk set is empty contribute nothing.
    """
    cells = {}
    risk_at_jumps = {}
    for pair in cs.space.transitions:
        times = cs.event_times[pair]
        if times.size == 0:
            risk_at_jumps[pair] = np.empty(0)
            continue
        uniq, counts = np.unique(times, return_counts=True)
        y = np.asarray(cs.y_at(pair[0], uniq), dtype=float)
        keep = y > 0
        uniq, counts, y = uniq[keep], counts[keep], y[keep]
        cells[pair] = StepFunction(uniq, counts / y)
        risk_at_jumps[pair] = y
    return IntensityEstimate(
        space=cs.space,
        clock=cs.clock,
        A=StepMatrix.from_cells(cs.space.r, cells),
        risk_at_jumps=risk_at_jumps,
    )


def state_survival(a: IntensityEstimate) -> SurvivalEstimate:
    """Survival in each state from the summed exit intensities."""
    B, G = {}, {}
    for i in range(a.space.r):
        b = sum_functions(a.A[i, j] for j in range(a.space.r) if j != i)
        B[i] = b
        G[i] = product_integral_scalar(b)
    return SurvivalEstimate(space=a.space, clock=a.clock, B=B, G=G)


def semi_markov_kernel(a: IntensityEstimate, g: SurvivalEstimate) -> KernelEstimate:
    """Plug-in kernel: Q_ij jumps by G_i(x-) dA_ij(x) at each jump of A_ij.

    Left limits are taken against the merged exit-hazard grid B_i, so
    simultaneous jumps of A_ij and A_ik at one time both see the pre-jump
    survival.
    """
    cells = {}
    for pair in a.space.transitions:
        f = a.A[pair]
        if f.times.size == 0:
            continue
        g_minus = g.G[pair[0]].left_limit(f.times)
        cells[pair] = StepFunction(f.times, np.asarray(g_minus) * f.increments)
    provenance = "nonparametric"
    return KernelEstimate(
        space=a.space, clock=a.clock, Q=StepMatrix.from_cells(a.space.r, cells),
        provenance=provenance,
    )
