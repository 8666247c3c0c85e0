"""Model-based bootstrap: resample, regenerate, refit, percentile bands.

Each replication draws covariates and initial states with replacement from
the observed subjects, censoring times from the reverse Kaplan-Meier of the
observed censoring durations, and sojourns/destinations from the fitted
hazards (discrete inverse sampling over the baseline jump grid). Refits that
fail are dropped and counted, never imputed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cox import FitConfig, FitResult, TransitionCovariates, covariate_hazard, fit
from .errors import (
    CensoringFallbackWarning,
    InsufficientSamples,
    NumericalError,
    TooManyFailures,
)
from .events import (
    Clock,
    CovariateProfile,
    SojournRecord,
    ValidatedHistory,
    build_counting_system,
    validate_records,
)
from .nonparametric import nelson_aalen
from .transition import TransitionEstimate, aalen_johansen, dsh_pipeline


@dataclass(frozen=True)
class CensoringDistribution:
    """Discrete censoring-time law from the reverse Kaplan-Meier.

    Mass that the estimator leaves beyond the largest observation collapses
    onto the largest observed follow-up time, so draws are always finite.
    """

    times: np.ndarray
    masses: np.ndarray
    fallback: bool = False

    @classmethod
    def from_history(cls, history: ValidatedHistory) -> "CensoringDistribution":
        followup = []
        censored = []
        for sid in history.subjects:
            recs = history.records_of(sid)
            followup.append(recs[-1].exit_calendar)
            censored.append(recs[-1].status == 0)
        followup = np.asarray(followup)
        censored = np.asarray(censored)
        horizon = float(followup.max())
        if not censored.any():
            warnings.warn(
                "no censored observations; synthetic censoring fixed at the "
                f"largest observed follow-up {horizon:g}",
                CensoringFallbackWarning,
                stacklevel=2,
            )
            return cls(times=np.array([horizon]), masses=np.array([1.0]), fallback=True)
        cens_times = np.unique(followup[censored])
        surv_prev = 1.0
        times, masses = [], []
        for t in cens_times:
            d = int(np.sum(followup[censored] == t))
            n = int(np.sum(followup >= t))  # ties: terminal events stay at risk
            surv = surv_prev * (1.0 - d / n)
            times.append(t)
            masses.append(surv_prev - surv)
            surv_prev = surv
        if surv_prev > 1e-12:
            if times and times[-1] == horizon:
                masses[-1] += surv_prev
            else:
                times.append(horizon)
                masses.append(surv_prev)
        return cls(times=np.asarray(times), masses=np.asarray(masses))

    def sample(self, rng: np.random.Generator) -> float:
        if self.times.size == 1:
            return float(self.times[0])
        cum = np.cumsum(self.masses)
        u = rng.uniform(0.0, cum[-1])
        return float(self.times[np.searchsorted(cum, u, side="left")])


class _StateHazardGrid:
    """Baseline jump grid of one state with per-target increments."""

    __slots__ = ("times", "targets", "increments")

    def __init__(self, fit_result: FitResult, i: int):
        space = fit_result.space
        self.targets = [j for j in range(space.r) if space.allowed[i, j]]
        cells = [fit_result.baseline[i, j] for j in self.targets]
        parts = [c.times for c in cells if c.times.size]
        self.times = np.unique(np.concatenate(parts)) if parts else np.empty(0)
        self.increments = np.zeros((self.times.size, len(self.targets)))
        for col, cell in enumerate(cells):
            if cell.times.size:
                idx = np.searchsorted(self.times, cell.times)
                self.increments[idx, col] = cell.increments


class _CohortSampler:
    """Trajectory sampler from a fitted model and a covariate pool.

    The discrete sojourn law in state i for pool subject p depends only on
    (i, p), so its cumulative mass function is computed once and reused
    across synthetic subjects and replications. Per-subject hazard
    increments above one (possible at tail jumps when the covariate weight
    shrinks a tiny risk denominator) mean the discrete survival hits zero
    there: the exit is certain, so the increment is capped at one.
    """

    def __init__(self, fit_result: FitResult, pool_profiles):
        space = fit_result.space
        self.space = space
        self.grids = {
            i: _StateHazardGrid(fit_result, i)
            for i in range(space.r)
            if i not in space.absorbing
        }
        d = fit_result.beta.size
        m = len(pool_profiles)
        self.weights = {}
        for i, grid in self.grids.items():
            if d:
                self.weights[i] = np.exp(
                    np.array(
                        [[fit_result.beta @ prof.vectors[(i, j)] for j in grid.targets]
                         for prof in pool_profiles]
                    )
                )
            else:
                self.weights[i] = np.ones((m, len(grid.targets)))
        self._cum: dict[tuple[int, int], np.ndarray] = {}

    def _cum_pmf(self, i: int, p: int) -> np.ndarray:
        key = (i, p)
        cum = self._cum.get(key)
        if cum is None:
            grid = self.grids[i]
            hazard = np.clip(grid.increments @ self.weights[i][p], 0.0, 1.0)
            surv_left = np.concatenate([[1.0], np.cumprod(1.0 - hazard)[:-1]])
            cum = np.cumsum(surv_left * hazard)
            self._cum[key] = cum
        return cum

    def draw(self, i: int, p: int, rng: np.random.Generator) -> tuple[float, int]:
        """Sample (sojourn, destination); sojourn is +inf beyond the grid support."""
        grid = self.grids[i]
        if grid.times.size == 0:
            return np.inf, -1
        cum = self._cum_pmf(i, p)
        idx = int(np.searchsorted(cum, rng.uniform(), side="left"))
        if idx >= grid.times.size:
            return np.inf, -1
        w = grid.increments[idx] * self.weights[i][p]
        total = w.sum()
        j_col = int(np.searchsorted(np.cumsum(w), rng.uniform() * total, side="right"))
        return float(grid.times[idx]), grid.targets[min(j_col, len(grid.targets) - 1)]


def resample_cohort(fit_result: FitResult, history: ValidatedHistory,
                    rng: np.random.Generator,
                    censoring: CensoringDistribution | None = None,
                    sampler: "_CohortSampler | None" = None) -> ValidatedHistory:
    """One synthetic dataset of the original size from the fitted model."""
    if censoring is None:
        censoring = CensoringDistribution.from_history(history)
    space = fit_result.space
    pool_states = [history.initial_state(sid) for sid in history.subjects]
    pool_profiles = [history.profiles[sid] for sid in history.subjects]
    if sampler is None:
        sampler = _CohortSampler(fit_result, pool_profiles)
    d = fit_result.beta.size
    m = history.n_subjects
    absorbing = space.absorbing

    records: list[SojournRecord] = []
    profiles: list[CovariateProfile] = []
    for k in range(m):
        p = int(rng.integers(m))
        sid = f"b{k:06d}"
        prof = CovariateProfile(sid, dict(pool_profiles[p].vectors))
        state = pool_states[p]
        censor = censoring.sample(rng)
        t = 0.0
        seq = 1
        while state not in absorbing and t < censor:
            w, nxt = sampler.draw(state, p, rng)
            if not np.isfinite(w) or t + w > censor:
                records.append(SojournRecord(sid, seq, state, None, t, censor - t, status=0))
                break
            records.append(SojournRecord(sid, seq, state, nxt, t, w, status=1))
            t += w
            state = nxt
            seq += 1
        profiles.append(prof)

    return validate_records(records, profiles if d else None, space)


@dataclass(frozen=True)
class BootstrapConfig:
    clock: Clock | str = Clock.SOJOURN
    seed: int = 0
    method: str = "dsh"  # transition-curve functional: "dsh" or "aj"
    profile: object = None  # covariate profile used for the tracked curves
    max_order: int | None = None
    tol: float = 1e-12
    fit: FitConfig = field(default_factory=FitConfig)
    # curve functionals at the chosen profile can be undefined when a scaled
    # hazard increment exceeds one; disable to bootstrap coefficients only
    track_transitions: bool = True


@dataclass
class BootstrapRun:
    """Stored replication results; only converged refits are kept."""

    B: int
    seeds: tuple[int, ...]
    query_grid: np.ndarray
    beta_samples: np.ndarray  # (kept, d)
    baseline_samples: dict[tuple[int, int], np.ndarray]  # (kept, len(grid))
    transition_samples: dict[tuple[int, int], np.ndarray]
    failures: int
    point_beta: np.ndarray
    point_transition: dict[tuple[int, int], np.ndarray]

    @property
    def kept(self) -> int:
        return self.beta_samples.shape[0]

    def beta_se(self) -> np.ndarray:
        if self.kept < 2:
            raise InsufficientSamples("need at least two converged replications")
        return np.std(self.beta_samples, axis=0, ddof=1)

    def beta_interval(self, k: int, level: float = 0.95) -> tuple[float, float]:
        return percentile_interval(self.beta_samples[:, k], level)

    def transition_band(self, i: int, j: int, level: float = 0.95):
        samples = self.transition_samples[(i, j)]
        lo = np.empty(samples.shape[1])
        hi = np.empty(samples.shape[1])
        for g in range(samples.shape[1]):
            lo[g], hi[g] = percentile_interval(samples[:, g], level)
        return lo, hi


def _transition_estimate(fit_result: FitResult, cfg: BootstrapConfig) -> TransitionEstimate:
    a = covariate_hazard(fit_result, profile=cfg.profile)
    if cfg.method == "aj":
        return aalen_johansen(a)
    return dsh_pipeline(a, max_order=cfg.max_order, tol=cfg.tol)


def _curves_at(fit_result: FitResult, est: TransitionEstimate, grid: np.ndarray):
    space = fit_result.space
    base = {
        pair: np.asarray(fit_result.baseline[pair](grid), dtype=float)
        for pair in space.transitions
    }
    probs = est.at_many(grid)  # (len(grid), r, r)
    trans = {
        (i, j): probs[:, i, j]
        for i in range(space.r)
        for j in range(space.r)
    }
    return base, trans


def bootstrap_distribution(history: ValidatedHistory, config: BootstrapConfig, B: int,
                           query_grid) -> BootstrapRun:
    """Run B resample-refit cycles and record beta and curve functionals."""
    cfg = config
    clock = Clock(cfg.clock)
    grid = np.asarray(query_grid, dtype=float)
    cs = build_counting_system(history, clock)
    Z = TransitionCovariates.from_history(history)
    fit0 = fit(cs, Z, cfg.fit)
    if cfg.track_transitions:
        est0 = _transition_estimate(fit0, cfg)
        _, point_trans = _curves_at(fit0, est0, grid)
    else:
        point_trans = {}
    censoring = CensoringDistribution.from_history(history)
    sampler = _CohortSampler(
        fit0, [history.profiles[sid] for sid in history.subjects]
    )

    betas = []
    base_samples: dict[tuple[int, int], list[np.ndarray]] = {
        pair: [] for pair in history.space.transitions
    }
    trans_samples: dict[tuple[int, int], list[np.ndarray]] = {
        (i, j): [] for i in range(history.space.r) for j in range(history.space.r)
    } if cfg.track_transitions else {}
    failures = 0
    seeds = tuple(range(B))
    for b in seeds:
        rng = np.random.default_rng([cfg.seed, b])
        try:
            synth = resample_cohort(fit0, history, rng, censoring, sampler)
            cs_b = build_counting_system(synth, clock)
            Z_b = TransitionCovariates.from_history(synth)
            fit_b = fit(cs_b, Z_b, cfg.fit)
            if cfg.track_transitions:
                est_b = _transition_estimate(fit_b, cfg)
                base_b, trans_b = _curves_at(fit_b, est_b, grid)
            else:
                base_b = {
                    pair: np.asarray(fit_b.baseline[pair](grid), dtype=float)
                    for pair in history.space.transitions
                }
                trans_b = {}
        except NumericalError:
            failures += 1
            continue
        betas.append(fit_b.beta)
        for pair in base_samples:
            base_samples[pair].append(base_b[pair])
        for key in trans_samples:
            trans_samples[key].append(trans_b[key])

    if B > 0 and failures > B / 2:
        raise TooManyFailures(f"{failures} of {B} bootstrap refits failed")

    d = fit0.beta.size
    return BootstrapRun(
        B=B,
        seeds=seeds,
        query_grid=grid,
        beta_samples=np.asarray(betas).reshape(len(betas), d),
        baseline_samples={pair: np.asarray(v).reshape(len(betas), grid.size)
                          for pair, v in base_samples.items()},
        transition_samples={key: np.asarray(v).reshape(len(betas), grid.size)
                            for key, v in trans_samples.items()},
        failures=failures,
        point_beta=fit0.beta,
        point_transition=point_trans,
    )


def percentile_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Nearest-rank empirical quantiles at (1-level)/2 and 1-(1-level)/2."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {n}")
    alpha = (1.0 - level) / 2.0
    lo_rank = max(1, int(np.ceil(alpha * n)))
    hi_rank = min(n, int(np.ceil((1.0 - alpha) * n)))
    return float(x[lo_rank - 1]), float(x[hi_rank - 1])
