"""Exact arithmetic on right-continuous step functions and step matrices.

Every estimator in this package is a jump process; curves are represented
exactly on their event-time grids (jump times + increments), with
right-continuity supplying inter-event values. No smoothing, no
interpolation. Increments smaller than `INCREMENT_FLOOR` in magnitude are
dropped on construction to bound grid growth under repeated convolution.
"""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from .errors import DimensionMismatch, IncrementOutOfRange, NonStochasticFactor

INCREMENT_FLOOR = 1e-15

_EMPTY = np.empty(0, dtype=float)


class StepFunction:
    """A right-continuous piecewise-constant function on [0, inf).

    f(x) = value_at_zero + sum of increments at jump times <= x.

    Jump times are strictly increasing and strictly positive; a mass at
    time 0 is carried by `value_at_zero` and is treated as an atom by the
    convolution operators.
    """

    __slots__ = ("times", "increments", "value_at_zero", "_cum")

    def __init__(self, times, increments, value_at_zero: float = 0.0):
        t = np.ascontiguousarray(times, dtype=float)
        dv = np.ascontiguousarray(increments, dtype=float)
        if t.shape != dv.shape or t.ndim != 1:
            raise ValueError("times and increments must be 1-d arrays of equal length")
        if t.size:
            if not np.all(np.isfinite(t)) or not np.all(np.isfinite(dv)):
                raise ValueError("jump times and increments must be finite")
            if t[0] <= 0.0:
                raise ValueError("jump times must be strictly positive")
            if np.any(np.diff(t) <= 0.0):
                raise ValueError("jump times must be strictly increasing")
            keep = np.abs(dv) >= INCREMENT_FLOOR
            if not np.all(keep):
                t, dv = t[keep], dv[keep]
        self.times = t
        self.increments = dv
        self.value_at_zero = float(value_at_zero)
        self._cum = self.value_at_zero + np.cumsum(dv)

    @classmethod
    def from_jumps(cls, times, increments, value_at_zero: float = 0.0) -> "StepFunction":
        """Build from possibly unsorted, possibly tied jumps (ties aggregate)."""
        t = np.asarray(times, dtype=float)
        dv = np.asarray(increments, dtype=float)
        if t.size:
            order = np.argsort(t, kind="stable")
            t, dv = t[order], dv[order]
            uniq, inverse = np.unique(t, return_inverse=True)
            agg = np.zeros(uniq.size)
            np.add.at(agg, inverse, dv)
            t, dv = uniq, agg
        return cls(t, dv, value_at_zero)

    @classmethod
    def zero(cls) -> "StepFunction":
        return cls(_EMPTY, _EMPTY, 0.0)

    @classmethod
    def constant(cls, value: float) -> "StepFunction":
        return cls(_EMPTY, _EMPTY, value)

    @property
    def final(self) -> float:
        """Value at +inf (the total accumulated mass)."""
        return self._cum[-1] if self.times.size else self.value_at_zero

    def _lookup(self, x, side: str):
        idx = np.searchsorted(self.times, x, side=side)
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(self._cum[idx - 1]) if idx > 0 else self.value_at_zero
        if self.times.size == 0:
            return np.full(np.shape(x), self.value_at_zero)
        return np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], self.value_at_zero)

    def __call__(self, x):
        """Right-continuous evaluation."""
        return self._lookup(x, "right")

    def left_limit(self, x):
        """Left limit f(x-); equals value_at_zero for x <= first jump time."""
        return self._lookup(x, "left")

    def increment_at(self, x) -> float:
        idx = np.searchsorted(self.times, x, side="left")
        if idx < self.times.size and self.times[idx] == x:
            return float(self.increments[idx])
        return 0.0

    def __add__(self, other: "StepFunction") -> "StepFunction":
        return StepFunction.from_jumps(
            np.concatenate([self.times, other.times]),
            np.concatenate([self.increments, other.increments]),
            self.value_at_zero + other.value_at_zero,
        )

    def scale(self, c: float) -> "StepFunction":
        return StepFunction(self.times, c * self.increments, c * self.value_at_zero)

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Jump representation including a time-0 atom when value_at_zero != 0."""
        if self.value_at_zero != 0.0:
            return (
                np.concatenate([[0.0], self.times]),
                np.concatenate([[self.value_at_zero], self.increments]),
            )
        return self.times, self.increments

    def __repr__(self):
        return (
            f"StepFunction({self.times.size} jumps, f(0)={self.value_at_zero:g}, "
            f"f(inf)={self.final:g})"
        )


def sum_functions(fs: Iterable[StepFunction]) -> StepFunction:
    fs = list(fs)
    if not fs:
        return StepFunction.zero()
    return StepFunction.from_jumps(
        np.concatenate([f.times for f in fs]),
        np.concatenate([f.increments for f in fs]),
        sum(f.value_at_zero for f in fs),
    )


class StepMatrix:
    """An r x r grid of StepFunction sharing one state-space dimension."""

    __slots__ = ("r", "cells")

    def __init__(self, cells: list[list[StepFunction]]):
        self.r = len(cells)
        for row in cells:
            if len(row) != self.r:
                raise DimensionMismatch("step matrix must be square")
        self.cells = cells

    @classmethod
    def zeros(cls, r: int) -> "StepMatrix":
        return cls([[StepFunction.zero() for _ in range(r)] for _ in range(r)])

    @classmethod
    def identity_atom(cls, r: int) -> "StepMatrix":
        """The identity as an atom at time 0 (Q^(0) in renewal series)."""
        return cls(
            [
                [StepFunction.constant(1.0) if i == j else StepFunction.zero() for j in range(r)]
                for i in range(r)
            ]
        )

    @classmethod
    def from_cells(cls, r: int, mapping: dict[tuple[int, int], StepFunction]) -> "StepMatrix":
        cells = [[StepFunction.zero() for _ in range(r)] for _ in range(r)]
        for (i, j), f in mapping.items():
            cells[i][j] = f
        return cls(cells)

    def __getitem__(self, key: tuple[int, int]) -> StepFunction:
        i, j = key
        return self.cells[i][j]

    def jump_times(self) -> np.ndarray:
        parts = [f.times for row in self.cells for f in row if f.times.size]
        if not parts:
            return _EMPTY
        return np.unique(np.concatenate(parts))

    def value_at(self, t) -> np.ndarray:
        return np.array([[f(t) for f in row] for row in self.cells])

    def value_at_zero(self) -> np.ndarray:
        return np.array([[f.value_at_zero for f in row] for row in self.cells])

    def total_mass(self) -> np.ndarray:
        """Entrywise value at +inf, including time-0 atoms."""
        return np.array([[f.final for f in row] for row in self.cells])

    def increments_on(self, grid: np.ndarray) -> np.ndarray:
        """(len(grid), r, r) entrywise increments at each grid time.

        Jump times not present in `grid` are ignored.
        """
        out = np.zeros((grid.size, self.r, self.r))
        for i, row in enumerate(self.cells):
            for j, f in enumerate(row):
                if f.times.size:
                    idx = np.searchsorted(grid, f.times)
                    hit = idx < grid.size
                    hit[hit] = grid[idx[hit]] == f.times[hit]
                    out[idx[hit], i, j] = f.increments[hit]
        return out

    def scale(self, c: float) -> "StepMatrix":
        return StepMatrix([[f.scale(c) for f in row] for row in self.cells])

    def __add__(self, other: "StepMatrix") -> "StepMatrix":
        if self.r != other.r:
            raise DimensionMismatch(f"matrix sizes differ: {self.r} vs {other.r}")
        return StepMatrix(
            [[self.cells[i][j] + other.cells[i][j] for j in range(self.r)] for i in range(self.r)]
        )

    def __repr__(self):
        return f"StepMatrix(r={self.r}, {self.jump_times().size} jump times)"


def evaluate(f: StepFunction, x) -> float:
    """Right-continuous evaluation of a step function (free-function form)."""
    return f(x)


def product_integral_scalar(b: StepFunction) -> StepFunction:
    """Survival-type product integral G(x) = prod_{u<=x} (1 - dB(u)).

    G(0) = 1 and G is non-increasing with values in [0, 1]. Requires every
    increment of `b` to lie in [0, 1]; increments are hazard mass, so a value
    above one admits no survival interpretation.
    """
    if b.value_at_zero != 0.0:
        raise ValueError("cumulative hazard must start at zero")
    inc = b.increments
    if inc.size == 0:
        return StepFunction.constant(1.0)
    if inc.min() < -1e-12 or inc.max() > 1.0 + 1e-12:
        raise IncrementOutOfRange(
            f"hazard increment outside [0, 1]: min {inc.min():g}, max {inc.max():g}"
        )
    surv = np.cumprod(1.0 - np.clip(inc, 0.0, 1.0))
    prev = np.concatenate([[1.0], surv[:-1]])
    return StepFunction(b.times, surv - prev, value_at_zero=1.0)


def _ordered_factor_product(times: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Cumulative products P_k = (I + D_1) ... (I + D_k); returns (n+1, r, r)."""
    r = deltas.shape[1]
    out = np.empty((times.size + 1, r, r))
    out[0] = np.eye(r)
    eye = np.eye(r)
    for k in range(times.size):
        factor = eye + deltas[k]
        if factor.min() < -1e-12 or factor.max() > 1.0 + 1e-12:
            raise NonStochasticFactor(
                f"factor at t={times[k]:g} has entries in "
                f"[{factor.min():g}, {factor.max():g}]"
            )
        out[k + 1] = out[k] @ factor
    return out


def product_integral_matrix(a: StepMatrix) -> StepMatrix:
    """Matrix product integral prod (I + dA) under the Markov generator convention.

    `a` must carry diagonal increments equal to minus the row sums of the
    off-diagonal increments at every jump time, so each factor I + dA is
    row-stochastic.
    """
    times = a.jump_times()
    deltas = a.increments_on(times)
    rowsum = deltas.sum(axis=2)
    if rowsum.size and np.max(np.abs(rowsum)) > 1e-9:
        raise ValueError(
            "diagonal increments must cancel off-diagonal row sums at every jump"
        )
    prods = _ordered_factor_product(times, deltas)
    incs = np.diff(prods, axis=0)
    return StepMatrix(
        [
            [
                StepFunction(times, incs[:, i, j], value_at_zero=1.0 if i == j else 0.0)
                for j in range(a.r)
            ]
            for i in range(a.r)
        ]
    )


def _convolve_cell(f: StepFunction, g: StepFunction) -> tuple[np.ndarray, np.ndarray, float]:
    """Measure convolution of two nonneg.-jump step functions, as raw atoms."""
    tf, wf = f.atoms()
    tg, wg = g.atoms()
    if tf.size == 0 or tg.size == 0:
        return _EMPTY, _EMPTY, 0.0
    t = (tf[:, None] + tg[None, :]).ravel()
    w = (wf[:, None] * wg[None, :]).ravel()
    at_zero = 0.0
    if t.size and t[0] == 0.0:  # both operands had a time-0 atom
        at_zero = w[0]
        t, w = t[1:], w[1:]
    return t, w, at_zero


def convolve(a: StepMatrix, b: StepMatrix) -> StepMatrix:
    """Matrix convolution (A * B)(t) = sum_{u <= t} dA(u) . B(t - u).

    Time-0 atoms (stored in value_at_zero) participate: convolving with the
    identity atom at 0 is the identity operation on either side.
    """
    if a.r != b.r:
        raise DimensionMismatch(f"matrix sizes differ: {a.r} vs {b.r}")
    r = a.r
    cells = []
    for i in range(r):
        row = []
        for k in range(r):
            ts, ws, z = [], [], 0.0
            for j in range(r):
                t, w, z0 = _convolve_cell(a.cells[i][j], b.cells[j][k])
                if t.size:
                    ts.append(t)
                    ws.append(w)
                z += z0
            if ts:
                row.append(
                    StepFunction.from_jumps(np.concatenate(ts), np.concatenate(ws), z)
                )
            else:
                row.append(StepFunction.constant(z) if z else StepFunction.zero())
        cells.append(row)
    return StepMatrix(cells)
