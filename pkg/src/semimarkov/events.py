"""Domain model for multi-state event-history data.

Long format is canonical: one record per observed sojourn, carrying the
origin state, the destination (or a censoring flag), the duration on the
sojourn clock, and the calendar entry time so that both clocks derive from
one dataset.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from graphlib import CycleError, TopologicalSorter

import numpy as np

from .errors import (
    ChainBroken,
    DisallowedTransition,
    MissingCovariates,
    NonPositiveSojourn,
)
from .steps import StepFunction

_TIME_ATOL = 1e-9


class Clock(str, enum.Enum):
    SOJOURN = "sojourn"
    CALENDAR = "calendar"


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Labeled finite state space with an allowed-transition adjacency.

    Self-transitions are forbidden; absorbing states are exactly those with
    an all-false row. The space is progressive when the adjacency is acyclic.
    """

    labels: tuple[str, ...]
    allowed: np.ndarray

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        allowed = np.asarray(self.allowed, dtype=bool)
        r = len(labels)
        if len(set(labels)) != r:
            raise ValueError("state labels must be unique")
        if allowed.shape != (r, r):
            raise ValueError(f"adjacency must be {r}x{r}")
        if np.any(np.diag(allowed)):
            raise ValueError("self-transitions are not allowed")
        object.__setattr__(self, "allowed", allowed)

    @classmethod
    def from_transitions(cls, labels, pairs) -> "StateSpace":
        labels = tuple(str(x) for x in labels)
        index = {lab: k for k, lab in enumerate(labels)}
        allowed = np.zeros((len(labels), len(labels)), dtype=bool)
        for a, b in pairs:
            i = a if isinstance(a, int) else index[str(a)]
            j = b if isinstance(b, int) else index[str(b)]
            allowed[i, j] = True
        return cls(labels, allowed)

    @property
    def r(self) -> int:
        return len(self.labels)

    @cached_property
    def absorbing(self) -> frozenset[int]:
        return frozenset(i for i in range(self.r) if not self.allowed[i].any())

    @cached_property
    def transitions(self) -> tuple[tuple[int, int], ...]:
        """Allowed (from, to) index pairs in row-major order."""
        return tuple((i, j) for i in range(self.r) for j in range(self.r) if self.allowed[i, j])

    @cached_property
    def is_progressive(self) -> bool:
        ts = TopologicalSorter(
            {i: [j for j in range(self.r) if self.allowed[j, i]] for i in range(self.r)}
        )
        try:
            ts.prepare()
        except CycleError:
            return False
        return True

    def index(self, label: str) -> int:
        return self.labels.index(label)


CENSORED = None


@dataclass(frozen=True)
class SojournRecord:
    """One observed sojourn: from-state, destination or censored, duration."""

    subject_id: str
    seq: int
    from_state: int
    to_state: int | None
    entry_calendar: float
    sojourn: float
    status: int

    def __post_init__(self):
        if self.status not in (0, 1):
            raise ValueError("status must be 0 (censored) or 1 (observed)")
        if self.status == 0 and self.to_state is not None:
            object.__setattr__(self, "to_state", None)

    @property
    def exit_calendar(self) -> float:
        return self.entry_calendar + self.sojourn


@dataclass(frozen=True)
class CovariateProfile:
    """Per-subject covariate vectors, one per allowed transition pair."""

    subject_id: str
    vectors: dict[tuple[int, int], np.ndarray]

    @property
    def dim(self) -> int:
        for v in self.vectors.values():
            return int(np.asarray(v).size)
        return 0

    @classmethod
    def shared(cls, subject_id: str, space: StateSpace, z) -> "CovariateProfile":
        """One vector reused on every allowed transition (subject-level covariates)."""
        z = np.asarray(z, dtype=float)
        return cls(subject_id, {pair: z for pair in space.transitions})


@dataclass(frozen=True)
class ValidatedHistory:
    """Chain-checked, per-subject-sorted event history with covariates."""

    space: StateSpace
    records: tuple[SojournRecord, ...]
    profiles: dict[str, CovariateProfile]
    subjects: tuple[str, ...]
    d: int

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @cached_property
    def _by_subject(self) -> dict[str, tuple[SojournRecord, ...]]:
        by: dict[str, list[SojournRecord]] = {sid: [] for sid in self.subjects}
        for rec in self.records:
            by[rec.subject_id].append(rec)
        return {sid: tuple(recs) for sid, recs in by.items()}

    def records_of(self, subject_id: str) -> tuple[SojournRecord, ...]:
        return self._by_subject[subject_id]

    def initial_state(self, subject_id: str) -> int:
        return self._by_subject[subject_id][0].from_state

    def subject_index(self, subject_id: str) -> int:
        return self.subjects.index(subject_id)


def validate_records(records, profiles, space: StateSpace) -> ValidatedHistory:
    """Validate and assemble a history.

    Checks per record: positive sojourn, allowed transition; per subject:
    chain consistency of states and calendar times, and a single terminal
    censoring at most. Every subject must have a covariate profile covering
    all allowed transitions (pass profiles=None for a covariate-free model).
    """
    by_subject: dict[str, list[SojournRecord]] = {}
    order: list[str] = []
    for rec in records:
        if rec.subject_id not in by_subject:
            by_subject[rec.subject_id] = []
            order.append(rec.subject_id)
        by_subject[rec.subject_id].append(rec)

    profile_map: dict[str, CovariateProfile] = {}
    d = 0
    if profiles is not None:
        for p in profiles:
            profile_map[p.subject_id] = p
        dims = {p.dim for p in profile_map.values()}
        if len(dims) > 1:
            raise MissingCovariates(
                next(iter(profile_map)), f"covariate dimensions differ across subjects: {dims}"
            )
        d = dims.pop() if dims else 0

    checked: list[SojournRecord] = []
    for sid in order:
        recs = sorted(by_subject[sid], key=lambda rec: rec.seq)
        if len({rec.seq for rec in recs}) != len(recs):
            raise ChainBroken(sid, recs[0].seq, "duplicate seq values")
        for k, rec in enumerate(recs):
            if rec.sojourn <= 0.0:
                raise NonPositiveSojourn(sid, rec.seq, f"sojourn {rec.sojourn!r} <= 0")
            if rec.entry_calendar < 0.0:
                raise NonPositiveSojourn(sid, rec.seq, f"entry time {rec.entry_calendar!r} < 0")
            if not 0 <= rec.from_state < space.r:
                raise DisallowedTransition(sid, rec.seq, f"unknown state {rec.from_state}")
            if rec.status == 1:
                if rec.to_state is None or not 0 <= rec.to_state < space.r:
                    raise DisallowedTransition(sid, rec.seq, f"unknown state {rec.to_state}")
                if not space.allowed[rec.from_state, rec.to_state]:
                    raise DisallowedTransition(
                        sid,
                        rec.seq,
                        f"{space.labels[rec.from_state]} -> {space.labels[rec.to_state]} "
                        "is not an allowed transition",
                    )
            if k > 0:
                prev = recs[k - 1]
                if prev.status == 0:
                    raise ChainBroken(sid, rec.seq, "record follows a censored sojourn")
                if prev.to_state != rec.from_state:
                    raise ChainBroken(
                        sid,
                        rec.seq,
                        f"enters state {rec.from_state} but previous record "
                        f"ended in {prev.to_state}",
                    )
                expected = prev.entry_calendar + prev.sojourn
                if abs(rec.entry_calendar - expected) > _TIME_ATOL * max(1.0, expected):
                    raise ChainBroken(
                        sid,
                        rec.seq,
                        f"entry time {rec.entry_calendar!r} != previous exit {expected!r}",
                    )
        checked.extend(recs)

    if profiles is None:
        profile_map = {sid: CovariateProfile(sid, {}) for sid in order}
        d = 0
    else:
        for sid in order:
            prof = profile_map.get(sid)
            if prof is None:
                raise MissingCovariates(sid, "no covariate profile")
            if d > 0:
                for pair in space.transitions:
                    if pair not in prof.vectors:
                        raise MissingCovariates(
                            sid, f"profile missing transition {pair[0]} -> {pair[1]}"
                        )
                    v = np.asarray(prof.vectors[pair], dtype=float)
                    if v.size != d or not np.all(np.isfinite(v)):
                        raise MissingCovariates(
                            sid, f"covariate vector for {pair} has wrong shape or NaN"
                        )

    return ValidatedHistory(
        space=space,
        records=tuple(checked),
        profiles=profile_map,
        subjects=tuple(order),
        d=d,
    )


@dataclass(frozen=True)
class CountingSystem:
    """Aggregated counting processes N_ij and risk processes Y_i on one clock.

    On the sojourn clock a record in state i is at risk for durations
    x <= W (closed at censoring); on the calendar clock it is at risk on
    (entry, exit]. Per-record arrays are retained for risk-sum computations.
    """

    space: StateSpace
    clock: Clock
    subjects: tuple[str, ...]
    N: dict[tuple[int, int], StepFunction]
    risk_start: dict[int, np.ndarray]  # aligned with risk_stop order
    risk_stop: dict[int, np.ndarray]  # sorted ascending
    risk_subject: dict[int, np.ndarray]  # aligned with risk_stop order
    event_times: dict[tuple[int, int], np.ndarray]
    event_subject: dict[tuple[int, int], np.ndarray]

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    def max_event_time(self) -> float:
        times = [t[-1] for t in self.event_times.values() if t.size]
        return max(times) if times else 0.0

    def y_at(self, i: int, x) -> np.ndarray | int:
        """Risk count Y_i(x); vectorized over x."""
        stop = self.risk_stop[i]
        n_stop = stop.size - np.searchsorted(stop, x, side="left")
        if self.clock is Clock.SOJOURN:
            out = n_stop
        else:
            start = np.sort(self.risk_start[i])
            out = n_stop - (start.size - np.searchsorted(start, x, side="left"))
        if np.ndim(x) == 0:
            return int(out)
        return out


def build_counting_system(history: ValidatedHistory, clock: Clock | str) -> CountingSystem:
    """Aggregate a validated history into counting and risk processes."""
    clock = Clock(clock)
    space = history.space
    subj_index = {sid: k for k, sid in enumerate(history.subjects)}

    starts: dict[int, list[float]] = {i: [] for i in range(space.r)}
    stops: dict[int, list[float]] = {i: [] for i in range(space.r)}
    subjs: dict[int, list[int]] = {i: [] for i in range(space.r)}
    ev_times: dict[tuple[int, int], list[float]] = {p: [] for p in space.transitions}
    ev_subj: dict[tuple[int, int], list[int]] = {p: [] for p in space.transitions}

    for rec in history.records:
        i = rec.from_state
        m = subj_index[rec.subject_id]
        if clock is Clock.SOJOURN:
            start, stop = 0.0, rec.sojourn
            event_time = rec.sojourn
        else:
            start, stop = rec.entry_calendar, rec.exit_calendar
            event_time = rec.exit_calendar
        starts[i].append(start)
        stops[i].append(stop)
        subjs[i].append(m)
        if rec.status == 1:
            ev_times[(i, rec.to_state)].append(event_time)
            ev_subj[(i, rec.to_state)].append(m)

    risk_start, risk_stop, risk_subject = {}, {}, {}
    for i in range(space.r):
        start = np.asarray(starts[i], dtype=float)
        stop = np.asarray(stops[i], dtype=float)
        subj = np.asarray(subjs[i], dtype=np.intp)
        order = np.argsort(stop, kind="stable")
        risk_start[i] = start[order]
        risk_stop[i] = stop[order]
        risk_subject[i] = subj[order]

    N, event_times, event_subject = {}, {}, {}
    for pair in space.transitions:
        t = np.asarray(ev_times[pair], dtype=float)
        s = np.asarray(ev_subj[pair], dtype=np.intp)
        order = np.argsort(t, kind="stable")
        t, s = t[order], s[order]
        event_times[pair] = t
        event_subject[pair] = s
        N[pair] = StepFunction.from_jumps(t, np.ones_like(t))

    return CountingSystem(
        space=space,
        clock=clock,
        subjects=history.subjects,
        N=N,
        risk_start=risk_start,
        risk_stop=risk_stop,
        risk_subject=risk_subject,
        event_times=event_times,
        event_subject=event_subject,
    )


@dataclass(frozen=True)
class TransitionFrequencyTable:
    """Observed transition counts and relative frequencies among exits."""

    space: StateSpace
    counts: dict[tuple[int, int], int]
    relative: dict[tuple[int, int], float]

    def rows(self) -> list[tuple[str, str, int, float]]:
        return [
            (self.space.labels[i], self.space.labels[j], self.counts[(i, j)], self.relative[(i, j)])
            for (i, j) in self.space.transitions
        ]

    def format(self) -> str:
        lines = [f"{'from':<12} {'to':<12} {'count':>7} {'relative':>9}"]
        for frm, to, n, rel in self.rows():
            lines.append(f"{frm:<12} {to:<12} {n:>7d} {rel:>9.4g}")
        return "\n".join(lines)


def summarize_transitions(history: ValidatedHistory) -> TransitionFrequencyTable:
    """Count observed transitions per allowed pair; relative to exits from the origin."""
    counts = {pair: 0 for pair in history.space.transitions}
    for rec in history.records:
        if rec.status == 1:
            counts[(rec.from_state, rec.to_state)] += 1
    exits = {i: 0 for i in range(history.space.r)}
    for (i, _), n in counts.items():
        exits[i] += n
    relative = {
        (i, j): (counts[(i, j)] / exits[i] if exits[i] > 0 else 0.0)
        for (i, j) in counts
    }
    return TransitionFrequencyTable(history.space, counts, relative)
