"""Monte Carlo estimators, the path-integral moment oracle, and probes.

Estimators follow one pattern: replicas are independent solver runs indexed
by stream id, farmed out in contiguous chunks (optionally across a thread
pool), and every reduction happens after sorting by stream id, so results
do not depend on the thread count.

The moment oracle estimates E|u_t(x)|^k for flat initial data without
touching the lattice solver.  For multiplicative noise the k-th moment has
the path-integral representation

    E u_t(x)^k = u0^k * E exp( sum_{i != j} int_0^t f(sqrt(kappa) (b^i_r - b^j_r)) dr ),

with k independent standard d-dimensional Brownian motions b^i.  The time
integral is a trapezoid sum over inner steps; a riesz correlation is
evaluated as f(max(|z|, r_reg)) with r_reg = sqrt(kappa * dt_inner) so the
singularity is sampled at the walk's own resolution.  Averages of
exp(large) are done in log space, and the stderr of the log-mean comes
from a delete-one jackknife.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .correlation import CorrelationModel, CorrelationError, evaluate_f
from .lattice import LatticeGrid, d_separation
from .noise import WhiteNoiseSource
from .solver import (
    LocalizationConfig,
    SolutionField,
    SolverConfig,
    SolverError,
    localized_solve_batch,
    solve_batch,
)


class AnalysisError(ValueError):
    pass


_CHUNK = 256


def _chunks(n: int) -> list:
    return [range(a, min(a + _CHUNK, n)) for a in range(0, n, _CHUNK)]


def replica_map(fn: Callable, n_replicas: int, threads: int = 1) -> np.ndarray:
    """Run fn(list_of_stream_ids) -> array over replica chunks, ordered merge.

    fn must return one row per stream id.  Chunk boundaries are fixed (not a
    function of the thread count) and per-replica noise depends only on
    (seed, stream id), so the concatenated output is invariant to threads.
    """
    if n_replicas < 1:
        raise AnalysisError("need at least one replica")
    parts = {}
    chunks = _chunks(n_replicas)
    if threads <= 1:
        for c in chunks:
            parts[c.start] = fn(list(c))
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futs = {ex.submit(fn, list(c)): c.start for c in chunks}
            for fut, start in futs.items():
                parts[start] = fut.result()
    return np.concatenate([parts[k] for k in sorted(parts)], axis=0)


def jackknife_stat(values: np.ndarray, stat: str = "mean"):
    """Delete-one jackknife estimate and stderr for the mean or variance."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise AnalysisError("jackknife needs at least two values")
    if stat == "mean":
        est = float(np.mean(x))
        loo = (np.sum(x) - x) / (n - 1)
    elif stat == "var":
        s1, s2 = np.sum(x), np.sum(x * x)
        est = float(np.var(x, ddof=1))
        mean_loo = (s1 - x) / (n - 1)
        loo = (s2 - x * x - (n - 1) * mean_loo**2) / (n - 2)
    else:
        raise AnalysisError(f"unknown jackknife stat {stat!r}")
    se = math.sqrt((n - 1) / n * float(np.sum((loo - np.mean(loo)) ** 2)))
    return est, se


@dataclass(frozen=True)
class Scenario:
    """A solver setup plus the observation geometry for estimators."""

    cfg: SolverConfig
    t_final: float
    probes: tuple = ((0.0,),)
    radius: Optional[float] = None

    def probe_indices(self) -> tuple:
        grid = self.cfg.grid
        pts = np.asarray(self.probes, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if grid.d == 1 else pts.reshape(1, -1)
        if pts.shape[-1] != grid.d:
            raise AnalysisError(f"probe points must have {grid.d} coordinates")
        return grid.nearest_index(pts)


@dataclass
class MomentReport:
    ks: list
    estimates: list
    stderrs: list
    flags: list
    n_replicas: int
    t: float
    probes: tuple
    samples_logmean: Optional[list] = None


def _heavy_tail_flag(samples: np.ndarray) -> bool:
    """True when the top 1% of samples carries more than half the mass."""
    s = np.sort(np.abs(samples))[::-1]
    top = max(1, math.ceil(0.01 * s.size))
    tot = float(np.sum(s))
    return tot > 0 and float(np.sum(s[:top])) / tot > 0.5


def estimate_moments(
    scenario: Scenario,
    ks: Sequence[int],
    n_replicas: int,
    seed: int = 0,
    threads: int = 1,
) -> MomentReport:
    """Monte Carlo absolute moments E|u_t(x)|^k at the probe sites.

    Per-replica values are the probe-site average of |u|^k (probes are
    exchangeable by stationarity); the stderr is a delete-one jackknife over
    replicas.  k outside 1..8, heavy-tailed samples, or relative stderr
    above 50% set the per-k unreliable flag.
    """
    ks = [int(k) for k in ks]
    if any(k < 1 for k in ks):
        raise AnalysisError("moment orders must be >= 1")
    cfg = scenario.cfg
    idx = scenario.probe_indices()

    def batch(streams):
        vals = solve_batch(cfg, scenario.t_final, seed, streams)
        probe_vals = vals[(slice(None),) + idx]
        return np.abs(probe_vals.reshape(len(streams), -1))

    samples = replica_map(batch, n_replicas, threads)  # (N, n_probes)
    estimates, stderrs, flags = [], [], []
    for k in ks:
        per_rep = np.mean(samples**k, axis=1)
        est, se = jackknife_stat(per_rep, "mean")
        flagged = k > 8 or _heavy_tail_flag(per_rep) or (est > 0 and se / est > 0.5)
        estimates.append(est)
        stderrs.append(se)
        flags.append(bool(flagged))
    return MomentReport(
        ks=ks,
        estimates=estimates,
        stderrs=stderrs,
        flags=flags,
        n_replicas=n_replicas,
        t=scenario.t_final,
        probes=scenario.probes,
    )


@dataclass(frozen=True)
class FkOracleConfig:
    walkers: int = 10_000
    inner_steps: int = 256
    reg_scale: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.walkers < 2 or self.inner_steps < 2:
            raise AnalysisError("oracle needs walkers >= 2 and inner_steps >= 2")


@dataclass
class FkOracleResult:
    k: int
    t: float
    log_mean: float
    log_stderr: float
    estimate: float
    stderr: float
    heavy_tail: bool
    walkers: int
    reg_scale: float


def _radial_f(model: CorrelationModel, r: np.ndarray, r_reg: float) -> np.ndarray:
    if model.kind == "riesz":
        return model.c0 * np.maximum(r, r_reg) ** (-model.alpha)
    if model.kind == "gaussian_h":
        return model.f_at_zero() * np.exp(-(r * r) / (4.0 * model.width**2))
    return np.full_like(r, model.c)


def fk_moment_oracle(
    model: CorrelationModel,
    kappa: float,
    t: float,
    k: int,
    cfg: FkOracleConfig,
    u0_level: float = 1.0,
) -> FkOracleResult:
    """Path-integral estimate of E u_t^k for flat initial data u0_level.

    Exact (zero variance) for the constant correlation, where the exponent
    is k(k-1) c t for every path.  Riesz correlations need alpha < 2.
    """
    if k < 2:
        raise AnalysisError("oracle moments need k >= 2")
    if kappa <= 0 or t <= 0 or u0_level <= 0:
        raise AnalysisError("oracle needs kappa > 0, t > 0, u0_level > 0")
    if model.kind == "riesz" and model.alpha >= 2:
        raise AnalysisError("path integrability needs riesz alpha < 2")
    M, n_inner = cfg.walkers, cfg.inner_steps
    dt = t / n_inner
    r_reg = cfg.reg_scale if cfg.reg_scale is not None else math.sqrt(kappa * dt)
    d = model.d
    rng = np.random.Generator(
        np.random.Philox(key=np.array([cfg.seed, 0x6F7261636C65], dtype=np.uint64))
    )
    ii, jj = np.triu_indices(k, 1)
    pos = np.zeros((M, k, d))
    scale = math.sqrt(dt)

    def pair_sum(p):
        diff = p[:, ii, :] - p[:, jj, :]
        r = math.sqrt(kappa) * np.sqrt(np.sum(diff * diff, axis=-1))
        return 2.0 * np.sum(_radial_f(model, r, r_reg), axis=1)

    S = 0.5 * dt * pair_sum(pos)
    for step in range(1, n_inner + 1):
        pos += scale * rng.standard_normal((M, k, d))
        w = dt if step < n_inner else 0.5 * dt
        S += w * pair_sum(pos)

    log_mean = float(logsumexp(S) - math.log(M))
    shift = float(np.max(S))
    e = np.exp(S - shift)
    tot = float(np.sum(e))
    loo = shift + np.log(np.maximum(tot - e, 1e-300) / (M - 1))
    loo_bar = float(np.mean(loo))
    log_se = math.sqrt((M - 1) / M * float(np.sum((loo - loo_bar) ** 2)))
    heavy = _heavy_tail_flag(e)
    log_total = log_mean + k * math.log(u0_level)
    estimate = math.exp(log_total) if log_total < 700 else math.inf
    stderr = estimate * log_se if math.isfinite(estimate) else math.inf
    return FkOracleResult(
        k=k,
        t=t,
        log_mean=log_total,
        log_stderr=log_se,
        estimate=estimate,
        stderr=stderr,
        heavy_tail=bool(heavy),
        walkers=M,
        reg_scale=r_reg,
    )


@dataclass
class TailEstimate:
    lam: float
    p_hat: float
    lo: float
    hi: float
    exceedances: int
    n: int


def wilson_interval(x: int, n: int, z: float = 1.96) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n < 1 or not (0 <= x <= n):
        raise AnalysisError("wilson_interval needs 0 <= x <= n, n >= 1")
    p = x / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def tail_probability(
    scenario: Scenario,
    lam: float,
    n_replicas: int,
    seed: int = 0,
    threads: int = 1,
) -> TailEstimate:
    """P( sup_{|x| <= R} |u_t(x)| > lam ) with a Wilson confidence interval.

    Requires lam > e (the tail regime of the growth statements) and a
    radius on the scenario.  With zero exceedances the point estimate is 0
    and the upper bound is still informative.
    """
    if lam <= math.e:
        raise AnalysisError(f"tail threshold must exceed e ~ 2.718, got {lam}")
    if scenario.radius is None:
        raise AnalysisError("scenario.radius is required for tail probabilities")
    cfg = scenario.cfg
    mask = cfg.grid.ball_mask(scenario.radius)

    def batch(streams):
        vals = solve_batch(cfg, scenario.t_final, seed, streams)
        sups = np.max(np.abs(vals[:, mask]), axis=1)
        return sups

    sups = replica_map(batch, n_replicas, threads)
    x = int(np.count_nonzero(sups > lam))
    lo, hi = wilson_interval(x, n_replicas)
    return TailEstimate(lam=lam, p_hat=x / n_replicas, lo=lo, hi=hi, exceedances=x, n=n_replicas)


def spatial_sup(fld: Union[SolutionField, np.ndarray], R: float, grid: Optional[LatticeGrid] = None) -> float:
    """sup of |u| over the centered Euclidean ball of radius R (R <= L/2)."""
    if isinstance(fld, SolutionField):
        grid = fld.grid
        values = fld.values
    else:
        if grid is None:
            raise AnalysisError("grid required when passing a bare array")
        values = fld
    mask = grid.ball_mask(R)
    return float(np.max(np.abs(values[..., mask])))


@dataclass
class ExponentFit:
    abscissae: list
    ordinates: list
    exponent: float
    stderr: float
    intercept: float
    r2: float
    extras: dict = dc_field(default_factory=dict)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple:
    """Slope, intercept, slope stderr, r2 of ordinary least squares."""
    n = x.size
    xbar, ybar = np.mean(x), np.mean(y)
    sxx = float(np.sum((x - xbar) ** 2))
    if sxx == 0:
        raise AnalysisError("degenerate abscissae for a fit")
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ybar) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    se = math.sqrt(ss_res / max(n - 2, 1) / sxx)
    return slope, intercept, se, r2


def fluctuation_exponent(radii: Sequence[float], mean_log_sup: Sequence[float]) -> ExponentFit:
    """Fit mean log u*(R) = A (log R)^psi, i.e. a line in log-log-R space.

    Nonpositive ordinates cannot enter the outer log and are dropped with a
    count recorded in extras; at least two usable rungs are required, and
    radii must be strictly increasing with log R > 0 (R > 1).
    """
    r = np.asarray(radii, dtype=float)
    y = np.asarray(mean_log_sup, dtype=float)
    if r.size != y.size or r.size < 2:
        raise AnalysisError("need matching radii and ordinates, at least two")
    if np.any(np.diff(r) <= 0) or np.any(r <= 1.0):
        raise AnalysisError("radii must be strictly increasing and > 1")
    keep = y > 0
    dropped = int(np.count_nonzero(~keep))
    if int(np.count_nonzero(keep)) < 2:
        raise AnalysisError("fewer than two positive mean-log-sup values")
    x_fit = np.log(np.log(r[keep]))
    y_fit = np.log(y[keep])
    slope, intercept, se, r2 = _ols(x_fit, y_fit)
    return ExponentFit(
        abscissae=list(r),
        ordinates=list(y),
        exponent=slope,
        stderr=se,
        intercept=intercept,
        r2=r2,
        extras={"dropped_nonpositive": dropped, "amplitude": math.exp(intercept)},
    )


def _profile_power_fit(ks: np.ndarray, logm: np.ndarray) -> tuple:
    """Least squares for log-moment = a k^theta + b k, profiled over theta.

    The linear nuisance term absorbs u0^k prefactors and the -k part of
    k(k-1)-type exponents, so exact c*k^2 and c*t*k(k-1) inputs both
    recover theta = 2.
    """

    def ssr(theta):
        X = np.column_stack([ks**theta, ks])
        coef, res, rank, sv = np.linalg.lstsq(X, logm, rcond=None)
        r = logm - X @ coef
        return float(np.dot(r, r)), coef

    res = optimize.minimize_scalar(
        lambda th: ssr(th)[0], bounds=(1.05, 5.0), method="bounded",
        options={"xatol": 1e-12},
    )
    theta = float(res.x)
    sse, coef = ssr(theta)
    return theta, coef, sse


def moment_growth_exponent(report: MomentReport) -> ExponentFit:
    """Growth exponent theta of log E|u|^k ~ a k^theta (+ linear nuisance).

    Fits log-moment = a k^theta + b k by profiled least squares; the naive
    log(log-moment) vs log k slope is reported in extras for reference.
    Flagged (unreliable) moments are excluded; needs at least four distinct
    k with positive, unflagged estimates.
    """
    ks = np.asarray(report.ks, dtype=float)
    est = np.asarray(report.estimates, dtype=float)
    keep = (est > 0) & ~np.asarray(report.flags, dtype=bool)
    ks, est = ks[keep], est[keep]
    if ks.size < 4:
        raise AnalysisError("growth fit needs at least four reliable positive moments")
    logm = np.log(est)
    theta, coef, sse = _profile_power_fit(ks, logm)
    # delete-one jackknife over the k points for a stderr on theta
    loo = []
    for i in range(ks.size):
        sel = np.arange(ks.size) != i
        if np.count_nonzero(sel) >= 4:
            th_i, _, _ = _profile_power_fit(ks[sel], logm[sel])
            loo.append(th_i)
    if len(loo) >= 2:
        loo_arr = np.asarray(loo)
        se = math.sqrt((len(loo) - 1) / len(loo) * float(np.sum((loo_arr - loo_arr.mean()) ** 2)))
    else:
        se = math.nan
    pos = logm > 0
    if np.count_nonzero(pos) >= 2:
        naive_slope, _, _, _ = _ols(np.log(ks[pos]), np.log(logm[pos]))
    else:
        naive_slope = math.nan
    ss_tot = float(np.sum((logm - logm.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - sse / ss_tot
    return ExponentFit(
        abscissae=list(ks),
        ordinates=list(logm),
        exponent=theta,
        stderr=se,
        intercept=float(coef[0]),
        r2=r2,
        extras={"linear_term": float(coef[1]), "loglog_slope": naive_slope},
    )


@dataclass
class IndependenceResult:
    points: list
    correlations: np.ndarray
    max_abs_offdiag: float
    null_band: float
    separations: np.ndarray
    required_separation: float
    passed: bool


def independence_test(
    cfg: SolverConfig,
    loc: LocalizationConfig,
    t_final: float,
    points: Sequence,
    n_replicas: int,
    seed: int = 0,
    threads: int = 1,
) -> IndependenceResult:
    """Sample correlations of the localized field across probe points.

    The null band is 4 / sqrt(N).  Exact independence is expected when the
    pairwise per-coordinate torus separation D is at least
    2 * n_picard * beta * (1 + sqrt(t)).
    """
    grid = cfg.grid
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] < 2:
        raise AnalysisError("independence test needs at least two points")
    idx = grid.nearest_index(pts)

    def batch(streams):
        vals = localized_solve_batch(cfg, loc, t_final, seed, streams)
        return vals[(slice(None),) + idx]

    samples = replica_map(batch, n_replicas, threads)  # (N, P)
    corr = np.corrcoef(samples, rowvar=False)
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    max_abs = float(np.max(np.abs(off)))
    band = 4.0 / math.sqrt(n_replicas)
    P = pts.shape[0]
    seps = np.full((P, P), np.inf)
    for a in range(P):
        for b in range(P):
            if a != b:
                seps[a, b] = d_separation(pts[a], pts[b], period=grid.period)
    required = 2.0 * loc.depth() * loc.beta * (1.0 + math.sqrt(t_final))
    return IndependenceResult(
        points=[tuple(p) for p in pts],
        correlations=corr,
        max_abs_offdiag=max_abs,
        null_band=band,
        separations=seps,
        required_separation=required,
        passed=max_abs < band,
    )


@dataclass
class LocalizationCurve:
    betas: list
    errors: list
    stderrs: list
    k: int
    fit: Optional[ExponentFit]


def localization_error_curve(
    cfg: SolverConfig,
    t_final: float,
    betas: Sequence[float],
    k: int,
    n_replicas: int,
    seed: int = 0,
    threads: int = 1,
    n_picard: Optional[int] = None,
) -> LocalizationCurve:
    """Coupled L^k error between the full solution and localized iterates.

    Every beta reuses the same white-noise streams (paired comparison), so
    the error ladder is monotone decrease under refinement rather than
    Monte Carlo noise.  Errors are (E |u - U^{beta}|^k)^{1/k} with the
    spatial mean inside the expectation.
    """
    if k < 1:
        raise AnalysisError("error norm order k must be >= 1")
    blist = [float(b) for b in betas]
    if sorted(blist) != blist or len(set(blist)) != len(blist):
        raise AnalysisError("beta ladder must be strictly increasing")

    def batch(streams):
        full = solve_batch(cfg, t_final, seed, streams)
        rows = np.empty((len(streams), len(blist)))
        for bi, beta in enumerate(blist):
            loc = LocalizationConfig(beta=beta, n_picard=n_picard)
            approx = localized_solve_batch(cfg, loc, t_final, seed, streams)
            diff = np.abs(full - approx) ** k
            rows[:, bi] = diff.reshape(len(streams), -1).mean(axis=1)
        return rows

    rows = replica_map(batch, n_replicas, threads)  # (N, B)
    errors, stderrs = [], []
    for bi in range(len(blist)):
        est, se = jackknife_stat(rows[:, bi], "mean")
        err = est ** (1.0 / k)
        errors.append(err)
        stderrs.append(se / k * est ** (1.0 / k - 1.0) if est > 0 else 0.0)
    fit = None
    if len(blist) >= 2 and all(e > 0 for e in errors):
        slope, intercept, se, r2 = _ols(np.log(np.asarray(blist)), np.log(np.asarray(errors)))
        fit = ExponentFit(
            abscissae=blist,
            ordinates=[math.log(e) for e in errors],
            exponent=slope,
            stderr=se,
            intercept=intercept,
            r2=r2,
            extras={"decay_rate": -slope},
        )
    return LocalizationCurve(betas=blist, errors=errors, stderrs=stderrs, k=k, fit=fit)


@dataclass
class BoundednessProbe:
    radii: list
    mean_sup: list
    stderr_sup: list
    mean_log_sup: list
    increments: list
    increment_stderrs: list
    verdict: str
    dropped_nonpositive: int
    samples: Optional[np.ndarray] = None  # (n_replicas, n_radii) raw sups


def boundedness_probe(
    scenario: Scenario,
    radii: Sequence[float],
    n_replicas: int,
    seed: int = 0,
    threads: int = 1,
) -> BoundednessProbe:
    """Does sup_{|x| <= R} |u_t| saturate or keep growing in R?

    Uses paired per-replica increments between consecutive rungs of the
    radius ladder.  Verdict 'saturating' when the last two mean increments
    are both below 2 stderr, 'growing' when the last increment exceeds
    2 stderr, otherwise 'inconclusive'.
    """
    rl = [float(r) for r in radii]
    if len(rl) < 2 or sorted(rl) != rl or len(set(rl)) != len(rl):
        raise AnalysisError("radius ladder must be strictly increasing with >= 2 rungs")
    cfg = scenario.cfg
    masks = [cfg.grid.ball_mask(r) for r in rl]

    def batch(streams):
        vals = solve_batch(cfg, scenario.t_final, seed, streams)
        out = np.empty((len(streams), len(rl)))
        for i, mask in enumerate(masks):
            out[:, i] = np.max(np.abs(vals[:, mask]), axis=1)
        return out

    sups = replica_map(batch, n_replicas, threads)  # (N, n_radii)
    mean_sup, se_sup, mean_log = [], [], []
    dropped = 0
    for i in range(len(rl)):
        est, se = jackknife_stat(sups[:, i], "mean")
        mean_sup.append(est)
        se_sup.append(se)
        logs = np.log(sups[:, i][sups[:, i] > 0])
        dropped += int(np.count_nonzero(sups[:, i] <= 0))
        mean_log.append(float(np.mean(logs)) if logs.size else math.nan)
    increments, inc_se = [], []
    for i in range(1, len(rl)):
        d = sups[:, i] - sups[:, i - 1]
        est, se = jackknife_stat(d, "mean")
        increments.append(est)
        inc_se.append(se)
    last, last_se = increments[-1], inc_se[-1]
    if len(increments) >= 2:
        prev, prev_se = increments[-2], inc_se[-2]
    else:
        prev, prev_se = last, last_se
    # <= so that exactly-zero increments (sup determined inside the smallest
    # ball in every replica) count as saturation, not as a failed band test.
    if abs(last) <= 2 * last_se and abs(prev) <= 2 * prev_se:
        verdict = "saturating"
    elif last > 2 * last_se:
        verdict = "growing"
    else:
        verdict = "inconclusive"
    return BoundednessProbe(
        radii=rl,
        mean_sup=mean_sup,
        stderr_sup=se_sup,
        mean_log_sup=mean_log,
        increments=increments,
        increment_stderrs=inc_se,
        verdict=verdict,
        dropped_nonpositive=dropped,
        samples=sups,
    )
