"""File formats: long-format dataset CSV, state-space config, curve exports.

The dataset CSV carries one row per observed sojourn with columns
`id, from, to, tstart, tstop, status`, then covariate columns; the sojourn is
`tstop - tstart`. An optional `entry` column supplies calendar entry times for
calendar-clock analyses; otherwise entries accumulate within each subject in
row order. States are referenced by label, or by 1-based position in the
configured label list.

All numbers are written with `repr`, so re-parsing reproduces values exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError
from .events import (
    CovariateProfile,
    SojournRecord,
    StateSpace,
    ValidatedHistory,
    validate_records,
)
from .simulate import SimConfig
from .steps import StepFunction

REQUIRED_COLUMNS = ("id", "from", "to", "tstart", "tstop", "status")


def load_state_space(path) -> StateSpace:
    """Read `{"labels": [...], "transitions": [[from, to], ...]}` JSON."""
    with open(path) as fh:
        spec = json.load(fh)
    try:
        labels = spec["labels"]
        pairs = [(t[0], t[1]) for t in spec["transitions"]]
    except (KeyError, IndexError, TypeError) as exc:
        raise DatasetFormatError(f"bad state-space config {path}: {exc}") from exc
    return StateSpace.from_transitions(labels, pairs)


def load_sim_config(path, seed: int | None = None) -> SimConfig:
    """Read a simulation config; `transitions` entries are [from, to, rate]."""
    with open(path) as fh:
        spec = json.load(fh)
    try:
        labels = tuple(str(x) for x in spec["labels"])
        triples = spec["transitions"]
        space = StateSpace.from_transitions(labels, [(t[0], t[1]) for t in triples])
        coeffs = np.zeros((space.r, space.r))
        for t in triples:
            coeffs[_state_index(space, t[0]), _state_index(space, t[1])] = float(t[2])
        return SimConfig(
            space=space,
            rate_coeffs=coeffs,
            n_subjects=int(spec["cohort_size"]),
            horizon=float(spec["horizon"]),
            seed=int(seed if seed is not None else spec.get("seed", 0)),
            power=float(spec.get("power", 1.0)),
            beta=np.asarray(spec.get("beta", []), dtype=float),
            shared_covariates=spec.get("covariates", "per_subject") == "per_subject",
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"bad simulation config {path}: {exc}") from exc


def _state_index(space: StateSpace, token) -> int:
    text = str(token).strip()
    if text in space.labels:
        return space.labels.index(text)
    try:
        k = int(text)
    except ValueError:
        raise DatasetFormatError(f"unknown state {token!r}") from None
    if not 1 <= k <= space.r:
        raise DatasetFormatError(f"state index {k} outside 1..{space.r}")
    return k - 1


def read_dataset(path, space: StateSpace, covariate_cols=()) -> ValidatedHistory:
    """Read and validate a long-format dataset CSV."""
    covariate_cols = tuple(covariate_cols)
    records: list[SojournRecord] = []
    values: dict[str, np.ndarray] = {}
    seq_counter: dict[str, int] = {}
    entry_running: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DatasetFormatError(f"{path}: missing columns {missing}")
        for col in covariate_cols:
            if col not in header:
                raise DatasetFormatError(f"{path}: missing covariate column {col!r}")
        has_entry = "entry" in header
        for line, row in enumerate(reader, start=2):
            sid = row["id"].strip()
            if not sid:
                raise DatasetFormatError(f"{path}:{line}: empty id")
            try:
                tstart = float(row["tstart"])
                tstop = float(row["tstop"])
                status = int(float(row["status"]))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{line}: {exc}") from exc
            sojourn = tstop - tstart
            frm = _state_index(space, row["from"])
            to = _state_index(space, row["to"]) if status == 1 else None
            if has_entry and row["entry"].strip() != "":
                entry = float(row["entry"])
            else:
                entry = entry_running.get(sid, 0.0)
            entry_running[sid] = entry + sojourn
            seq = seq_counter.get(sid, 0) + 1
            seq_counter[sid] = seq
            records.append(SojournRecord(sid, seq, frm, to, entry, sojourn, status))
            if covariate_cols:
                try:
                    z = np.array([float(row[c]) for c in covariate_cols])
                except ValueError as exc:
                    raise DatasetFormatError(f"{path}:{line}: {exc}") from exc
                if sid in values:
                    if not np.array_equal(values[sid], z):
                        raise DatasetFormatError(
                            f"{path}:{line}: covariates change within subject {sid!r} "
                            "(time-varying covariates are not supported)"
                        )
                else:
                    values[sid] = z
    profiles = None
    if covariate_cols:
        profiles = [
            CovariateProfile.shared(sid, space, values[sid]) for sid in values
        ]
    return validate_records(records, profiles, space)


def write_dataset(path, history: ValidatedHistory, covariate_names=None) -> None:
    """Write the long-format CSV; covariates must be subject-level (shared)."""
    d = history.d
    if covariate_names is None:
        covariate_names = [f"z{k + 1}" for k in range(d)]
    shared: dict[str, np.ndarray] = {}
    for sid in history.subjects:
        prof = history.profiles[sid]
        if d:
            vecs = {tuple(np.asarray(v, dtype=float)) for v in prof.vectors.values()}
            if len(vecs) > 1:
                raise DatasetFormatError(
                    "transition-specific covariates cannot be written to the "
                    "subject-level CSV layout"
                )
            shared[sid] = np.asarray(next(iter(prof.vectors.values())), dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(REQUIRED_COLUMNS) + ["entry"] + list(covariate_names))
        for rec in history.records:
            to_label = "" if rec.to_state is None else history.space.labels[rec.to_state]
            row = [
                rec.subject_id,
                history.space.labels[rec.from_state],
                to_label,
                repr(0.0),
                repr(rec.sojourn),
                rec.status,
                repr(rec.entry_calendar),
            ]
            if d:
                row.extend(repr(float(v)) for v in shared[rec.subject_id])
            writer.writerow(row)


def write_step_function(path, f: StepFunction) -> None:
    """Two-column serialization (time, cumulative value), including time 0."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "value"])
        writer.writerow([repr(0.0), repr(f.value_at_zero)])
        running = f.value_at_zero
        for t, dv in zip(f.times, f.increments):
            running += dv
            writer.writerow([repr(float(t)), repr(float(running))])


def read_step_function(path) -> StepFunction:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        times, values = [], []
        for row in reader:
            times.append(float(row["time"]))
            values.append(float(row["value"]))
    if not times or times[0] != 0.0:
        raise DatasetFormatError(f"{path}: curve must start at time 0")
    v0 = values[0]
    increments = np.diff(values)
    return StepFunction(np.asarray(times[1:]), increments, value_at_zero=v0)


def write_frequency_table(path, table) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["from", "to", "count", "relative"])
        for frm, to, count, rel in table.rows():
            writer.writerow([frm, to, count, repr(rel)])


def write_fit_report(path, fit_result, covariate_names=None) -> None:
    rows = fit_result.coefficient_table()
    if covariate_names:
        for row, name in zip(rows, covariate_names):
            row["name"] = name
    report = {
        "clock": fit_result.clock.value,
        "m": fit_result.m,
        "tau": fit_result.tau,
        "loglik": fit_result.loglik,
        "iterations": fit_result.iterations,
        "converged": fit_result.converged,
        "coefficients": rows,
    }
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")


def write_transition_curves(path, est, space: StateSpace, grid) -> None:
    """Long curve CSV (t, from, to, probability, method, clock, row_sum)."""
    grid = np.asarray(grid, dtype=float)
    probs = est.at_many(grid)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "from", "to", "probability", "method", "clock", "row_sum"])
        for g, t in enumerate(grid):
            row_sums = probs[g].sum(axis=1)
            for i in range(space.r):
                for j in range(space.r):
                    writer.writerow(
                        [
                            repr(float(t)),
                            space.labels[i],
                            space.labels[j],
                            repr(float(probs[g, i, j])),
                            est.method,
                            est.clock.value,
                            repr(float(row_sums[i])),
                        ]
                    )


def write_bands(path, run, space: StateSpace, level: float) -> None:
    """Bootstrap band CSV (t, from, to, estimate, lo, hi, level, B)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "from", "to", "estimate", "lo", "hi", "level", "B"])
        for i in range(space.r):
            for j in range(space.r):
                if (i, j) not in run.point_transition:
                    continue
                point = run.point_transition[(i, j)]
                lo, hi = run.transition_band(i, j, level)
                for g, t in enumerate(run.query_grid):
                    writer.writerow(
                        [
                            repr(float(t)),
                            space.labels[i],
                            space.labels[j],
                            repr(float(point[g])),
                            repr(float(lo[g])),
                            repr(float(hi[g])),
                            repr(level),
                            run.B,
                        ]
                    )


def write_truth(path, truth: dict) -> None:
    space = truth["space"]
    payload = {
        "labels": list(space.labels),
        "transitions": [
            [space.labels[i], space.labels[j], float(truth["rate_coeffs"][i, j])]
            for (i, j) in space.transitions
        ],
        "beta": [float(b) for b in np.atleast_1d(truth["beta"])],
        "power": truth["power"],
        "horizon": truth["horizon"],
        "seed": truth["seed"],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
