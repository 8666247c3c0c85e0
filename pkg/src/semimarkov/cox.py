"""Semi-parametric fitting of the multi-state Cox model on either clock.

One coefficient vector is shared across all transitions; transition-specific
coefficients are obtained by block-expanding the covariates (see
`expand_transition_covariates`). The profile log-likelihood sums, over every
observed jump, the linear predictor minus the log of the risk-weighted sum

    m * S0_ij(x, beta) = sum over records at risk in state i of exp(beta' Z_mij),

and is maximized by a safeguarded Newton iteration. Baselines are Breslow
steps dN_ij / (m * S0_ij) at event times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, MaxIterations, SingularInformation
from .events import Clock, CountingSystem, StateSpace, ValidatedHistory, CovariateProfile
from .nonparametric import IntensityEstimate
from .steps import StepFunction, StepMatrix


@dataclass(frozen=True)
class TransitionCovariates:
    """Per-transition covariate matrices, rows aligned with subject order."""

    space: StateSpace
    d: int
    matrix: dict[tuple[int, int], np.ndarray]
    names: tuple[str, ...] | None = None

    @classmethod
    def from_history(cls, history: ValidatedHistory, names=None) -> "TransitionCovariates":
        n, d = history.n_subjects, history.d
        matrix = {}
        for pair in history.space.transitions:
            block = np.zeros((n, d))
            if d > 0:
                for k, sid in enumerate(history.subjects):
                    block[k] = np.asarray(history.profiles[sid].vectors[pair], dtype=float)
            matrix[pair] = block
        if names is not None:
            names = tuple(names)
        return cls(space=history.space, d=d, matrix=matrix, names=names)

    def vector(self, pair: tuple[int, int], subject_index: int) -> np.ndarray:
        return self.matrix[pair][subject_index]


@dataclass(frozen=True)
class RiskSums:
    """S0, S1, S2 and derived E = S1/S0, V = S2/S0 - E (x) E at one (i,j,x,beta)."""

    s0: float
    s1: np.ndarray
    s2: np.ndarray

    @property
    def e(self) -> np.ndarray:
        if self.s0 <= 0.0:
            return np.zeros_like(self.s1)
        return self.s1 / self.s0

    @property
    def v(self) -> np.ndarray:
        if self.s0 <= 0.0:
            return np.zeros_like(self.s2)
        e = self.e
        return self.s2 / self.s0 - np.outer(e, e)


def risk_sums(cs: CountingSystem, Z: TransitionCovariates, i: int, j: int, x: float,
              beta: np.ndarray) -> RiskSums:
    """Direct O(n) computation of the risk-weighted sums at one clock time."""
    beta = np.asarray(beta, dtype=float)
    stop = cs.risk_stop[i]
    at_risk = stop >= x
    if cs.clock is Clock.CALENDAR:
        at_risk &= cs.risk_start[i] < x
    m = cs.n_subjects
    zrec = Z.matrix[(i, j)][cs.risk_subject[i][at_risk]]
    w = np.exp(zrec @ beta)
    s0 = w.sum() / m
    s1 = (w[:, None] * zrec).sum(axis=0) / m
    s2 = np.einsum("n,nd,ne->de", w, zrec, zrec) / m
    return RiskSums(s0=float(s0), s1=s1, s2=s2)


class _PairData:
    """Precomputed per-transition arrays for fast risk-sum sweeps."""

    __slots__ = ("pair", "stop_sorted", "z_stop", "start_sorted", "z_start",
                 "uniq_times", "dN", "z_event_sum", "lp_event_sum_rows", "n_events")

    def __init__(self, cs: CountingSystem, Z: TransitionCovariates,
                 pair: tuple[int, int], tau: float):
        i, _ = pair
        self.pair = pair
        self.stop_sorted = cs.risk_stop[i]
        self.z_stop = Z.matrix[pair][cs.risk_subject[i]]
        if cs.clock is Clock.CALENDAR:
            order = np.argsort(cs.risk_start[i], kind="stable")
            self.start_sorted = cs.risk_start[i][order]
            self.z_start = Z.matrix[pair][cs.risk_subject[i][order]]
        else:
            self.start_sorted = None
            self.z_start = None
        times = cs.event_times[pair]
        subj = cs.event_subject[pair]
        keep = times <= tau
        times, subj = times[keep], subj[keep]
        self.uniq_times, inverse, counts = np.unique(
            times, return_inverse=True, return_counts=True
        )
        self.dN = counts.astype(float)
        zev = Z.matrix[pair][subj]
        self.z_event_sum = np.zeros((self.uniq_times.size, Z.d))
        np.add.at(self.z_event_sum, inverse, zev)
        self.n_events = times.size


class _Engine:
    """Shared evaluation of profile log-likelihood, score, and information."""

    def __init__(self, cs: CountingSystem, Z: TransitionCovariates, tau: float | None = None):
        self.cs = cs
        self.Z = Z
        self.m = cs.n_subjects
        self.d = Z.d
        self.tau = float(tau) if tau is not None else cs.max_event_time()
        self.pairs: list[_PairData] = []
        for pair in cs.space.transitions:
            pd = _PairData(cs, Z, pair, self.tau)
            if pd.n_events:
                self.pairs.append(pd)

    def _suffix(self, values: np.ndarray, z: np.ndarray, order: int):
        """Suffix sums of w, w*z, w*z*z' over records sorted by threshold time."""
        w = values
        s0 = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
        s1 = s2 = None
        if order >= 1:
            wz = w[:, None] * z
            s1 = np.vstack([np.cumsum(wz[::-1], axis=0)[::-1], np.zeros((1, self.d))])
        if order >= 2:
            wzz = wz[:, :, None] * z[:, None, :]
            s2 = np.concatenate(
                [np.cumsum(wzz[::-1], axis=0)[::-1], np.zeros((1, self.d, self.d))]
            )
        return s0, s1, s2

    def pair_event_stats(self, pd: _PairData, beta: np.ndarray, order: int):
        """Per unique event time: denom (= m*S0), and E, V when requested."""
        w_stop = np.exp(pd.z_stop @ beta)
        s0s, s1s, s2s = self._suffix(w_stop, pd.z_stop, order)
        idx = np.searchsorted(pd.stop_sorted, pd.uniq_times, side="left")
        denom = s0s[idx]
        s1 = s1s[idx] if order >= 1 else None
        s2 = s2s[idx] if order >= 2 else None
        if pd.start_sorted is not None:
            w_start = np.exp(pd.z_start @ beta)
            t0s, t1s, t2s = self._suffix(w_start, pd.z_start, order)
            jdx = np.searchsorted(pd.start_sorted, pd.uniq_times, side="left")
            denom = denom - t0s[jdx]
            if order >= 1:
                s1 = s1 - t1s[jdx]
            if order >= 2:
                s2 = s2 - t2s[jdx]
        e = v = None
        if order >= 1:
            e = s1 / denom[:, None]
        if order >= 2:
            v = s2 / denom[:, None, None] - e[:, :, None] * e[:, None, :]
        return denom, e, v

    def evaluate(self, beta: np.ndarray, order: int = 2):
        """Profile log-likelihood and, as requested, score and information."""
        beta = np.asarray(beta, dtype=float)
        loglik = 0.0
        score = np.zeros(self.d)
        info = np.zeros((self.d, self.d))
        for pd in self.pairs:
            denom, e, v = self.pair_event_stats(pd, beta, order)
            loglik += float(pd.z_event_sum.sum(axis=0) @ beta - pd.dN @ np.log(denom))
            if order >= 1:
                score += pd.z_event_sum.sum(axis=0) - pd.dN @ e
            if order >= 2:
                info += np.einsum("k,kde->de", pd.dN, v)
        if order == 0:
            return loglik
        if order == 1:
            return loglik, score
        return loglik, score, info


def profile_loglik(cs: CountingSystem, Z: TransitionCovariates, tau: float | None,
                   beta) -> float:
    """C(tau, beta): exact sum over observed jumps up to tau."""
    return _Engine(cs, Z, tau).evaluate(np.asarray(beta, dtype=float), order=0)


def score(cs: CountingSystem, Z: TransitionCovariates, tau: float | None, beta) -> np.ndarray:
    """Estimating equation U(tau, beta); the gradient of profile_loglik."""
    return _Engine(cs, Z, tau).evaluate(np.asarray(beta, dtype=float), order=1)[1]


def information(cs: CountingSystem, Z: TransitionCovariates, tau: float | None,
                beta) -> np.ndarray:
    """Observed information (minus the Hessian of profile_loglik); symmetric PSD."""
    return _Engine(cs, Z, tau).evaluate(np.asarray(beta, dtype=float), order=2)[2]


@dataclass(frozen=True)
class FitConfig:
    tau: float | None = None
    tol: float = 1e-8
    max_iter: int = 50
    max_halvings: int = 20
    divergence_bound: float = 10.0


@dataclass(frozen=True)
class FitResult:
    """Converged coefficient estimate with Breslow baselines and diagnostics."""

    space: StateSpace
    clock: Clock
    beta: np.ndarray
    coef_cov: np.ndarray
    information: np.ndarray
    baseline: StepMatrix
    loglik: float
    iterations: int
    converged: bool
    tau: float
    m: int
    covariates: TransitionCovariates
    event_denoms: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = field(
        repr=False, default_factory=dict
    )

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.coef_cov)) if self.beta.size else np.empty(0)

    def aggregate_weights(self) -> dict[tuple[int, int], float]:
        """Cohort sums sum_m exp(beta' Z_mij) per transition."""
        return {
            pair: float(np.exp(block @ self.beta).sum())
            for pair, block in self.covariates.matrix.items()
        }

    def coefficient_table(self) -> list[dict]:
        names = self.covariates.names or tuple(f"z{k + 1}" for k in range(self.beta.size))
        rows = []
        for k, name in enumerate(names):
            coef = float(self.beta[k])
            se = float(self.se[k])
            zval = coef / se if se > 0 else math.inf
            pval = math.erfc(abs(zval) / math.sqrt(2.0)) if math.isfinite(zval) else 0.0
            rows.append(
                {
                    "name": name,
                    "coef": coef,
                    "exp_coef": math.exp(coef),
                    "se_coef": se,
                    "z": zval,
                    "p": pval,
                }
            )
        return rows


def _invert_information(info: np.ndarray) -> np.ndarray:
    if info.size == 0:
        return np.zeros((0, 0))
    if not np.all(np.isfinite(info)):
        raise SingularInformation("information matrix is not finite")
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation(str(exc)) from exc
    if np.linalg.cond(info) > 1e12:
        raise SingularInformation("information matrix is numerically singular")
    return cov


def _breslow_cells(engine: _Engine, beta: np.ndarray):
    cells = {}
    denoms = {}
    for pd in engine.pairs:
        denom, e, _ = engine.pair_event_stats(pd, beta, order=1)
        cells[pd.pair] = StepFunction(pd.uniq_times, pd.dN / denom)
        denoms[pd.pair] = (pd.uniq_times, denom, e)
    return cells, denoms


def fit(cs: CountingSystem, Z: TransitionCovariates, config: FitConfig | None = None) -> FitResult:
    """Maximize the profile log-likelihood by Newton iteration from beta = 0.

    Steps are halved (up to `max_halvings`) whenever the log-likelihood would
    decrease; `Diverged` is raised once coefficients leave the configured
    sup-norm ball, which is the signature of a monotone likelihood.
    """
    config = config or FitConfig()
    engine = _Engine(cs, Z, config.tau)
    d = Z.d
    beta = np.zeros(d)

    if d == 0:
        loglik = engine.evaluate(beta, order=0)
        cells, denoms = _breslow_cells(engine, beta)
        return FitResult(
            space=cs.space, clock=cs.clock, beta=beta, coef_cov=np.zeros((0, 0)),
            information=np.zeros((0, 0)), baseline=StepMatrix.from_cells(cs.space.r, cells),
            loglik=loglik, iterations=0, converged=True, tau=engine.tau, m=cs.n_subjects,
            covariates=Z, event_denoms=denoms,
        )

    loglik, u, info = engine.evaluate(beta, order=2)
    for iteration in range(config.max_iter):
        if np.max(np.abs(u)) < config.tol:
            cov = _invert_information(info)
            cells, denoms = _breslow_cells(engine, beta)
            return FitResult(
                space=cs.space, clock=cs.clock, beta=beta, coef_cov=cov,
                information=info, baseline=StepMatrix.from_cells(cs.space.r, cells),
                loglik=loglik, iterations=iteration, converged=True, tau=engine.tau,
                m=cs.n_subjects, covariates=Z, event_denoms=denoms,
            )
        if not np.all(np.isfinite(info)):
            raise SingularInformation("information matrix is not finite")
        try:
            delta = np.linalg.solve(info, u)
        except np.linalg.LinAlgError as exc:
            raise SingularInformation(str(exc)) from exc
        step = 1.0
        slack = 1e-10 * (1.0 + abs(loglik))  # a few ulps of the log-likelihood
        for _ in range(config.max_halvings + 1):
            candidate = beta + step * delta
            cand_loglik = engine.evaluate(candidate, order=0)
            if cand_loglik >= loglik - slack:
                break
            step *= 0.5
        else:
            raise MaxIterations(f"no ascent step found at iteration {iteration}")
        beta = candidate
        if np.max(np.abs(beta)) > config.divergence_bound:
            raise Diverged(
                f"coefficients exceeded {config.divergence_bound:g} in sup-norm "
                "(monotone likelihood)"
            )
        loglik, u, info = engine.evaluate(beta, order=2)
    raise MaxIterations(f"score tolerance not met after {config.max_iter} iterations")


def fit_at(cs: CountingSystem, Z: TransitionCovariates, beta,
           tau: float | None = None) -> FitResult:
    """Evaluate the model at a pinned coefficient vector without optimizing.

    Useful for baselines and variance pieces at a reference beta (for example
    0, where the Breslow baseline collapses to Nelson-Aalen). The covariance
    slot holds the pseudo-inverse of the information so degenerate covariates
    do not block the evaluation; `converged` reports whether the pinned beta
    happens to solve the score equation.
    """
    beta = np.asarray(beta, dtype=float)
    engine = _Engine(cs, Z, tau)
    loglik, u, info = engine.evaluate(beta, order=2)
    cells, denoms = _breslow_cells(engine, beta)
    return FitResult(
        space=cs.space, clock=cs.clock, beta=beta,
        coef_cov=np.linalg.pinv(info) if info.size else np.zeros((0, 0)),
        information=info, baseline=StepMatrix.from_cells(cs.space.r, cells),
        loglik=loglik, iterations=0,
        converged=bool(u.size == 0 or np.max(np.abs(u)) < 1e-8),
        tau=engine.tau, m=cs.n_subjects, covariates=Z, event_denoms=denoms,
    )


def breslow_baseline(fit_result: FitResult, cs: CountingSystem) -> StepMatrix:
    """Baseline cumulative hazards: jumps dN_ij(x) / (m S0_ij(x, beta-hat))."""
    engine = _Engine(cs, fit_result.covariates, fit_result.tau)
    cells, _ = _breslow_cells(engine, fit_result.beta)
    return StepMatrix.from_cells(cs.space.r, cells)


AGGREGATE = "aggregate"


def covariate_hazard(fit_result: FitResult, profile=None, mode: str = "profile") -> IntensityEstimate:
    """Cumulative intensities implied by the fit.

    Profile mode (default) scales each baseline by exp(beta' z_ij) for a
    covariate profile z (a single vector broadcast to all transitions, a
    per-transition mapping, or None for the baseline itself). Aggregate mode
    instead multiplies by the cohort sum over subjects of exp(beta' Z_mij).
    """
    space = fit_result.space
    weights = {}
    if mode == AGGREGATE:
        weights = fit_result.aggregate_weights()
    elif mode == "profile":
        for pair in space.transitions:
            if profile is None:
                z = np.zeros(fit_result.beta.size)
            elif isinstance(profile, dict):
                z = np.asarray(profile[pair], dtype=float)
            elif isinstance(profile, CovariateProfile):
                z = np.asarray(profile.vectors[pair], dtype=float)
            else:
                z = np.asarray(profile, dtype=float)
            weights[pair] = float(np.exp(fit_result.beta @ z))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    cells = {}
    risk = {}
    for pair in space.transitions:
        base = fit_result.baseline[pair]
        if base.times.size:
            cells[pair] = base.scale(weights[pair])
        if pair in fit_result.event_denoms:
            risk[pair] = fit_result.event_denoms[pair][1]
        else:
            risk[pair] = np.empty(0)
    return IntensityEstimate(
        space=space, clock=fit_result.clock, A=StepMatrix.from_cells(space.r, cells),
        risk_at_jumps=risk,
    )


def baseline_asymptotic_variance(fit_result: FitResult, cs: CountingSystem, i: int, j: int,
                                 x: float) -> tuple[float, np.ndarray, float]:
    """Plug-in variance pieces for the Breslow baseline at one point.

    gamma_hat(x) sums dN / (m S0)^2 over event times up to x; eta_hat(x) is
    minus the running integral of E against the baseline. The reported
    variance gamma_hat + eta_hat' cov(beta-hat) eta_hat is the finite-sample
    plug-in of the limiting decomposition (the m-normalizations of the two
    pieces cancel against the 1/m of the limit variance).
    """
    pair = (i, j)
    if pair not in fit_result.event_denoms:
        return 0.0, np.zeros(fit_result.beta.size), 0.0
    times, denom, e = fit_result.event_denoms[pair]
    base = fit_result.baseline[pair]
    keep = times <= x
    if not np.any(keep):
        return 0.0, np.zeros(fit_result.beta.size), 0.0
    d_base = base.increments[keep]
    gamma = float(np.sum(d_base / denom[keep]))
    if fit_result.beta.size:
        eta = -np.sum(e[keep] * d_base[:, None], axis=0)
        var = gamma + float(eta @ fit_result.coef_cov @ eta)
    else:
        eta = np.zeros(0)
        var = gamma
    return gamma, eta, var


def expand_transition_covariates(history: ValidatedHistory) -> ValidatedHistory:
    """Block-expand covariates so a shared-beta fit yields per-transition effects.

    Each transition pair receives its own coefficient block; entries outside a
    pair's own block are zero, so fitting the expanded model reproduces
    separate per-transition fits exactly.
    """
    pairs = history.space.transitions
    d = history.d
    new_profiles = []
    for sid in history.subjects:
        prof = history.profiles[sid]
        vectors = {}
        for k, pair in enumerate(pairs):
            v = np.zeros(d * len(pairs))
            v[k * d:(k + 1) * d] = np.asarray(prof.vectors[pair], dtype=float)
            vectors[pair] = v
        new_profiles.append(CovariateProfile(sid, vectors))
    from .events import validate_records

    return validate_records(list(history.records), new_profiles, history.space)
