"""Transition probabilities: renewal convolution series and product integrals.

The renewal route convolves the estimated kernel with itself, sums the
orders, and convolves the partial sum with state survival; it is evaluated
lazily at query times, summing over the (finite) jump set of the renewal
matrix rather than materializing the full convolution grid. The comparator
route is the ordered matrix product of (I + dA) over an interval.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import TruncationWarning, ZeroSurvivalAtStart
from .events import Clock, StateSpace
from .nonparametric import (
    IntensityEstimate,
    KernelEstimate,
    SurvivalEstimate,
    semi_markov_kernel,
    state_survival,
)
from .steps import (
    StepMatrix,
    _ordered_factor_product,
    convolve,
)


def n_step_kernel(q: KernelEstimate, p: int) -> StepMatrix:
    """p-fold kernel convolution; p = 0 is the identity atom at time 0."""
    if p < 0:
        raise ValueError("order must be >= 0")
    out = StepMatrix.identity_atom(q.space.r)
    for _ in range(p):
        out = convolve(q.Q, out)
    return out


@dataclass(frozen=True)
class RenewalEstimate:
    """Partial sum of kernel convolution orders (expected visit counts)."""

    space: StateSpace
    clock: Clock
    R: StepMatrix
    orders_used: int
    truncation_gap: float
    converged: bool


def renewal_function(q: KernelEstimate, max_order: int | None = None,
                     tol: float = 1e-12) -> RenewalEstimate:
    """Sum the convolution orders of the kernel until they vanish.

    For progressive spaces the series is exactly finite: orders beyond r - 1
    are identically zero, so the default cap is r - 1 and the reported gap is
    exactly 0. Otherwise the cap defaults to 50 and a `TruncationWarning` is
    issued when the first omitted order still carries mass above `tol`; the
    partial sum is returned either way.

    The gap is the sup-norm of the first omitted order, computed exactly as
    the total-mass matrix product without materializing the convolution.
    """
    space = q.space
    progressive = space.is_progressive
    if max_order is None:
        cap = space.r - 1 if progressive else 50
    else:
        cap = min(max_order, space.r - 1) if progressive else max_order

    total = StepMatrix.identity_atom(space.r)
    term = StepMatrix.identity_atom(space.r)
    q_mass = q.Q.total_mass()
    orders = 0
    for p in range(1, cap + 1):
        term = convolve(q.Q, term)
        orders = p
        total = total + term
        if float(term.total_mass().max()) < tol:
            break
    # mass of the first omitted order: exact because total mass multiplies
    # through convolution of nonnegative jump measures
    omitted = q_mass @ term.total_mass()
    truncation_gap = float(omitted.max()) if omitted.size else 0.0
    converged = truncation_gap <= tol
    if not converged:
        warnings.warn(
            f"renewal series truncated at order {orders} with remaining mass "
            f"{truncation_gap:.3g} > tol {tol:g}",
            TruncationWarning,
            stacklevel=2,
        )
    return RenewalEstimate(
        space=space, clock=q.clock, R=total, orders_used=orders,
        truncation_gap=truncation_gap, converged=converged,
    )


class TransitionEstimate:
    """Transition probability matrix estimate, evaluable at any time.

    `method` is "dsh" (renewal convolution with survival) or "aj" (interval
    product integral); `start` is the conditioning time s (0 for the plain
    estimate). Rows are reported raw; no renormalization is applied.
    """

    def __init__(self, space: StateSpace, clock: Clock, method: str, start: float = 0.0):
        self.space = space
        self.clock = clock
        self.method = method
        self.start = float(start)

    def at(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def at_many(self, ts) -> np.ndarray:
        return np.stack([self.at(float(t)) for t in np.atleast_1d(ts)])

    def default_grid(self) -> np.ndarray:
        raise NotImplementedError


class _DshTransition(TransitionEstimate):
    def __init__(self, renewal: RenewalEstimate, survival: SurvivalEstimate):
        super().__init__(renewal.space, renewal.clock, "dsh", 0.0)
        self.renewal = renewal
        self.survival = survival

    def at(self, t: float) -> np.ndarray:
        r = self.space.r
        out = np.zeros((r, r))
        if t < 0:
            return out
        for i in range(r):
            for j in range(r):
                cell = self.renewal.R[i, j]
                times, weights = cell.atoms()
                if times.size == 0:
                    continue
                hi = np.searchsorted(times, t, side="right")
                if hi == 0:
                    continue
                out[i, j] = float(
                    weights[:hi] @ self.survival.G[j](t - times[:hi])
                )
        return out

    def default_grid(self) -> np.ndarray:
        parts = [self.renewal.R.jump_times()]
        parts.extend(g.times for g in self.survival.G.values())
        times = np.unique(np.concatenate([np.zeros(1), *parts]))
        return times


class _ProductTransition(TransitionEstimate):
    def __init__(self, space: StateSpace, clock: Clock, start: float,
                 times: np.ndarray, prefix: np.ndarray):
        super().__init__(space, clock, "aj", start)
        self.times = times  # jump times > start
        self.prefix = prefix  # (len(times)+1, r, r) cumulative products

    def at(self, t: float) -> np.ndarray:
        if t <= self.start:
            return np.eye(self.space.r)
        idx = np.searchsorted(self.times, t, side="right")
        return self.prefix[idx].copy()

    def default_grid(self) -> np.ndarray:
        return np.unique(np.concatenate([[self.start], self.times]))


def dsh_transition(renewal: RenewalEstimate, survival: SurvivalEstimate) -> TransitionEstimate:
    """P(t) = sum over renewal atoms u <= t of dR(u) G(t - u), lazily evaluated."""
    return _DshTransition(renewal, survival)


def aalen_johansen(a: IntensityEstimate, start: float = 0.0) -> TransitionEstimate:
    """Product-integral estimate: ordered product of (I + dA) over (start, t].

    The diagonal is completed as minus the off-diagonal row sums at each jump
    time (generator convention); every factor must be row-stochastic.
    """
    r = a.space.r
    times = a.A.jump_times()
    times = times[times > start]
    deltas = a.A.increments_on(times)
    for k in range(times.size):
        np.fill_diagonal(deltas[k], -deltas[k].sum(axis=1))
    prefix = _ordered_factor_product(times, deltas)
    return _ProductTransition(a.space, a.clock, start, times, prefix)


def dsh_pipeline(a: IntensityEstimate, max_order: int | None = None,
                 tol: float = 1e-12) -> TransitionEstimate:
    """Full renewal route from a cumulative intensity: survival, kernel, sum, convolve."""
    g = state_survival(a)
    q = semi_markov_kernel(a, g)
    r = renewal_function(q, max_order=max_order, tol=tol)
    return dsh_transition(r, g)


@dataclass(frozen=True)
class Occupant:
    """Conditioning information for prediction: current state and its entry time."""

    state: int
    entry: float


def predict_from(s: float, t: float, occupant: Occupant, q: KernelEstimate,
                 g: SurvivalEstimate, p: TransitionEstimate) -> np.ndarray:
    """Prediction probabilities from calendar time s to t for a known occupant.

    The occupant has been in `occupant.state` since calendar time
    `occupant.entry` <= s. Conditioning divides by the survival already
    accrued; the first future jump is drawn from the rescaled kernel and the
    remainder of the path follows the time-zero transition estimate. No
    Markov ratio shortcut is valid here, and none is used.
    """
    i = occupant.state
    tn = occupant.entry
    if not tn <= s <= t:
        raise ValueError("need occupant.entry <= s <= t")
    x0 = s - tn
    x1 = t - tn
    g_start = g.G[i](x0)
    if g_start <= 0.0:
        raise ZeroSurvivalAtStart(
            f"estimated survival in state {q.space.labels[i]} is 0 at elapsed {x0:g}"
        )
    r = q.space.r
    row = np.zeros(r)
    row[i] = g.G[i](x1) / g_start
    for k in range(r):
        if k == i:
            continue
        cell = q.Q[i, k]
        if cell.times.size == 0:
            continue
        lo = np.searchsorted(cell.times, x0, side="right")
        hi = np.searchsorted(cell.times, x1, side="right")
        for idx in range(lo, hi):
            u = tn + cell.times[idx]  # calendar time of the candidate jump
            mass = cell.increments[idx] / g_start
            row += mass * p.at(t - u)[k]
    return row
