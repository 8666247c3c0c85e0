"""Command-line front end.

Subcommands: ingest, fit, transitions, predict, simulate, bootstrap. Exit
codes: 0 success, 1 validation error (bad data or config), 2 numerical
failure (estimation broke on valid data).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from .bootstrap import BootstrapConfig, bootstrap_distribution
from .cox import FitConfig, TransitionCovariates, covariate_hazard, fit
from .errors import NumericalError, ValidationError
from .events import Clock, build_counting_system, summarize_transitions
from .nonparametric import nelson_aalen, semi_markov_kernel, state_survival
from .plots import render_curves
from .simulate import simulate_cohort
from .transition import Occupant, aalen_johansen, dsh_pipeline, predict_from, renewal_function, dsh_transition


@dataclass(frozen=True)
class RunConfig:
    """Parsed invocation: every knob a subcommand can see."""

    command: str
    input: str | None = None
    states: str | None = None
    clock: Clock = Clock.SOJOURN
    method: str = "dsh"
    covariates: tuple[str, ...] = ()
    profile: np.ndarray | None = None
    seed: int = 0
    out: Path = Path(".")
    plot: bool = False
    tau: float | None = None
    max_order: int | None = None
    tol: float = 1e-12
    grid: tuple[float, ...] = ()
    B: int = 200
    level: float = 0.95
    s: float = 0.0
    t: float = 0.0
    from_state: str | None = None
    entry: float = 0.0
    sim_config: str | None = None
    beta_only: bool = False


def _parse_floats(text: str | None) -> tuple[float, ...]:
    if not text:
        return ()
    return tuple(float(x) for x in text.split(",") if x.strip() != "")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semimarkov",
        description="Multi-state event-history estimation, prediction, "
                    "simulation, and bootstrap inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data=True):
        if data:
            p.add_argument("--input", required=True, help="long-format dataset CSV")
            p.add_argument("--states", required=True,
                           help="state-space config JSON (labels + transitions)")
            p.add_argument("--covariates", default="",
                           help="comma-separated covariate column names")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ingest", help="validate a dataset and summarize transitions")
    add_common(p)

    p = sub.add_parser("fit", help="fit the proportional-hazards model")
    add_common(p)
    p.add_argument("--clock", choices=["sojourn", "calendar"], default="sojourn")
    p.add_argument("--tau", type=float, default=None,
                   help="upper clock limit (default: largest event time)")

    p = sub.add_parser("transitions", help="estimate transition-probability curves")
    add_common(p)
    p.add_argument("--clock", choices=["sojourn", "calendar"], default=None,
                   help="default: sojourn for dsh, calendar for aj")
    p.add_argument("--method", choices=["dsh", "aj"], default="dsh")
    p.add_argument("--profile", default="",
                   help="covariate profile vector, e.g. '0.5,1' (default zeros)")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--orders", type=int, default=None,
                   help="renewal series cap (default: r-1 progressive, else 50)")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--grid", default="", help="extra evaluation times, comma-separated")
    p.add_argument("--plot", action="store_true", help="also render SVG panels")

    p = sub.add_parser("predict", help="prediction probabilities for a current occupant")
    add_common(p)
    p.add_argument("--clock", choices=["sojourn", "calendar"], default=None,
                   help="required for dsh; aj defaults to calendar")
    p.add_argument("--method", choices=["dsh", "aj"], default="dsh")
    p.add_argument("--profile", default="")
    p.add_argument("--s", type=float, required=True, help="conditioning time")
    p.add_argument("--t", type=float, required=True, help="prediction time")
    p.add_argument("--state", required=True, dest="from_state",
                   help="state occupied at time s")
    p.add_argument("--entry", type=float, default=0.0,
                   help="calendar time the occupant entered the state")
    p.add_argument("--orders", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-12)

    p = sub.add_parser("simulate", help="generate a cohort from a simulation config")
    p.add_argument("--config", required=True, dest="sim_config",
                   help="simulation config JSON")
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")

    p = sub.add_parser("bootstrap", help="percentile intervals and bands")
    add_common(p)
    p.add_argument("--clock", choices=["sojourn", "calendar"], default="sojourn")
    p.add_argument("--method", choices=["dsh", "aj"], default="dsh")
    p.add_argument("--profile", default="")
    p.add_argument("--bootstrap", type=int, default=200, dest="B",
                   help="replication count B")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--grid", default="", help="query grid, comma-separated times")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--orders", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--beta-only", action="store_true",
                   help="skip transition-curve functionals")
    return parser


def _run_config(ns: argparse.Namespace) -> RunConfig:
    clock = getattr(ns, "clock", None)
    if clock is None:
        clock = "calendar" if getattr(ns, "method", "dsh") == "aj" else "sojourn"
    profile_text = getattr(ns, "profile", "")
    profile = np.asarray(_parse_floats(profile_text)) if profile_text else None
    covs = tuple(c.strip() for c in getattr(ns, "covariates", "").split(",") if c.strip())
    return RunConfig(
        command=ns.command,
        input=getattr(ns, "input", None),
        states=getattr(ns, "states", None),
        clock=Clock(clock),
        method=getattr(ns, "method", "dsh"),
        covariates=covs,
        profile=profile,
        seed=getattr(ns, "seed", 0) if getattr(ns, "seed", 0) is not None else 0,
        out=Path(getattr(ns, "out", ".")),
        plot=getattr(ns, "plot", False),
        tau=getattr(ns, "tau", None),
        max_order=getattr(ns, "orders", None),
        tol=getattr(ns, "tol", 1e-12),
        grid=_parse_floats(getattr(ns, "grid", "")),
        B=getattr(ns, "B", 200),
        level=getattr(ns, "level", 0.95),
        s=getattr(ns, "s", 0.0),
        t=getattr(ns, "t", 0.0),
        from_state=getattr(ns, "from_state", None),
        entry=getattr(ns, "entry", 0.0),
        sim_config=getattr(ns, "sim_config", None),
        beta_only=getattr(ns, "beta_only", False),
    )


def _load(cfg: RunConfig):
    space = dataio.load_state_space(cfg.states)
    history = dataio.read_dataset(cfg.input, space, cfg.covariates)
    return space, history


def _intensity(cfg: RunConfig, history):
    """Covariate-adjusted intensity at the requested profile, or Nelson-Aalen."""
    cs = build_counting_system(history, cfg.clock)
    if cfg.covariates:
        Z = TransitionCovariates.from_history(history, names=cfg.covariates)
        result = fit(cs, Z, FitConfig(tau=cfg.tau))
        profile = cfg.profile if cfg.profile is not None else np.zeros(len(cfg.covariates))
        return cs, result, covariate_hazard(result, profile=profile)
    return cs, None, nelson_aalen(cs)


def _cmd_ingest(cfg: RunConfig) -> int:
    _, history = _load(cfg)
    table = summarize_transitions(history)
    out = dataio.ensure_dir(cfg.out)
    dataio.write_frequency_table(out / "transitions_summary.csv", table)
    censored = sum(rec.status == 0 for rec in history.records)
    print(f"subjects: {history.n_subjects}")
    print(f"records: {len(history.records)} ({censored} censored)")
    print(table.format())
    print(f"wrote {out / 'transitions_summary.csv'}")
    return 0


def _cmd_fit(cfg: RunConfig) -> int:
    _, history = _load(cfg)
    if not cfg.covariates:
        raise ValidationError("fit requires --covariates naming at least one column")
    cs = build_counting_system(history, cfg.clock)
    Z = TransitionCovariates.from_history(history, names=cfg.covariates)
    result = fit(cs, Z, FitConfig(tau=cfg.tau))
    out = dataio.ensure_dir(cfg.out)
    dataio.write_fit_report(out / "fit.json", result)
    for (i, j) in result.space.transitions:
        cell = result.baseline[i, j]
        if cell.times.size:
            name = f"baseline_{result.space.labels[i]}_{result.space.labels[j]}.csv"
            dataio.write_step_function(out / name, cell)
    header = f"{'name':<16} {'coef':>12} {'exp(coef)':>12} {'se':>12} {'z':>8} {'p':>10}"
    print(header)
    for row in result.coefficient_table():
        print(
            f"{row['name']:<16} {row['coef']:>12.6f} {row['exp_coef']:>12.6f} "
            f"{row['se_coef']:>12.6f} {row['z']:>8.3f} {row['p']:>10.3g}"
        )
    print(f"loglik {result.loglik:.6f} after {result.iterations} iterations")
    print(f"wrote {out / 'fit.json'}")
    return 0


def _default_grid(est, extra) -> np.ndarray:
    grid = est.default_grid()
    return np.unique(np.concatenate([grid, np.asarray(extra, dtype=float), [0.0]]))


def _cmd_transitions(cfg: RunConfig) -> int:
    space, history = _load(cfg)
    _, _, intensity = _intensity(cfg, history)
    if cfg.method == "aj":
        est = aalen_johansen(intensity)
    else:
        est = dsh_pipeline(intensity, max_order=cfg.max_order, tol=cfg.tol)
    grid = _default_grid(est, cfg.grid)
    out = dataio.ensure_dir(cfg.out)
    curve_path = out / f"transitions_{cfg.method}_{cfg.clock.value}.csv"
    dataio.write_transition_curves(curve_path, est, space, grid)
    print(f"wrote {curve_path} ({grid.size} grid times)")
    if cfg.plot:
        svg = render_curves(curve_path, curve_path.with_suffix(".svg"))
        print(f"wrote {svg}")
    return 0


def _cmd_predict(cfg: RunConfig) -> int:
    space, history = _load(cfg)
    _, _, intensity = _intensity(cfg, history)
    i = space.index(cfg.from_state) if cfg.from_state in space.labels else int(cfg.from_state) - 1
    if cfg.method == "aj":
        row = aalen_johansen(intensity, start=cfg.s).at(cfg.t)[i]
    else:
        g = state_survival(intensity)
        q = semi_markov_kernel(intensity, g)
        renewal = renewal_function(q, max_order=cfg.max_order, tol=cfg.tol)
        p = dsh_transition(renewal, g)
        row = predict_from(cfg.s, cfg.t, Occupant(state=i, entry=cfg.entry), q, g, p)
    payload = {
        "method": cfg.method,
        "clock": cfg.clock.value,
        "state": space.labels[i],
        "entry": cfg.entry,
        "s": cfg.s,
        "t": cfg.t,
        "probabilities": {space.labels[j]: float(row[j]) for j in range(space.r)},
        "row_sum": float(row.sum()),
    }
    out = dataio.ensure_dir(cfg.out)
    with open(out / "prediction.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_simulate(cfg: RunConfig, seed_override) -> int:
    sim = dataio.load_sim_config(cfg.sim_config, seed=seed_override)
    cohort = simulate_cohort(sim)
    history = cohort.history()
    out = dataio.ensure_dir(cfg.out)
    dataio.write_dataset(out / "cohort.csv", history)
    dataio.write_truth(out / "truth.json", cohort.truth)
    censored = sum(rec.status == 0 for rec in history.records)
    print(f"simulated {history.n_subjects} subjects, {len(history.records)} records "
          f"({censored} censored)")
    print(f"wrote {out / 'cohort.csv'} and {out / 'truth.json'}")
    return 0


def _cmd_bootstrap(cfg: RunConfig) -> int:
    space, history = _load(cfg)
    grid = np.asarray(cfg.grid, dtype=float)
    if grid.size == 0:
        cs = build_counting_system(history, cfg.clock)
        hi = cs.max_event_time()
        grid = np.linspace(0.0, hi, 21)
    bcfg = BootstrapConfig(
        clock=cfg.clock,
        seed=cfg.seed,
        method=cfg.method,
        profile=cfg.profile,
        max_order=cfg.max_order,
        tol=cfg.tol,
        fit=FitConfig(tau=cfg.tau),
        track_transitions=not cfg.beta_only,
    )
    run = bootstrap_distribution(history, bcfg, cfg.B, grid)
    out = dataio.ensure_dir(cfg.out)
    report = {
        "B": run.B,
        "failures": run.failures,
        "level": cfg.level,
        "coefficients": [],
    }
    names = cfg.covariates or tuple(f"z{k+1}" for k in range(run.point_beta.size))
    if run.point_beta.size and run.kept >= 2:
        se = run.beta_se()
        for k, name in enumerate(names):
            lo, hi_ = run.beta_interval(k, cfg.level)
            report["coefficients"].append(
                {"name": name, "coef": float(run.point_beta[k]),
                 "se_boot": float(se[k]), "lo": lo, "hi": hi_}
            )
    with open(out / "bootstrap.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"bootstrap: kept {run.kept} of {run.B} replications "
          f"({run.failures} failures)")
    for row in report["coefficients"]:
        print(f"{row['name']:<16} coef {row['coef']:+.6f} se* {row['se_boot']:.6f} "
              f"[{row['lo']:+.6f}, {row['hi']:+.6f}]")
    if not cfg.beta_only:
        dataio.write_bands(out / "bands.csv", run, space, cfg.level)
        print(f"wrote {out / 'bands.csv'}")
    print(f"wrote {out / 'bootstrap.json'}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    cfg = _run_config(ns)
    try:
        if cfg.command == "ingest":
            return _cmd_ingest(cfg)
        if cfg.command == "fit":
            return _cmd_fit(cfg)
        if cfg.command == "transitions":
            return _cmd_transitions(cfg)
        if cfg.command == "predict":
            return _cmd_predict(cfg)
        if cfg.command == "simulate":
            return _cmd_simulate(cfg, getattr(ns, "seed", None))
        if cfg.command == "bootstrap":
            return _cmd_bootstrap(cfg)
        parser.error(f"unknown command {cfg.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
