"""Ensemble simulation and statistics.

run_ensemble integrates many trajectories at once, vectorized across a
compressed active set: every trajectory owns the same per-index noise
stream as the single-trajectory integrator (blocks of steps are
pre-drawn from it), frozen trajectories stop contributing at the step
they reach stop_epsilon, and fully frozen rows are dropped from the
arrays at block boundaries.  Random-permutation controls for a batch
come from one dedicated ensemble stream, so paired runs that share a
master seed also share their measurement noise exactly.

The rest of the module turns ensembles into numbers: mean log-infidelity
curves with standard errors, mean first-passage times with censoring
fractions, fixed-target and asymptotic speed-ups, scaling sweeps over
register sizes, a sampled single-step collapse rate under random
permutations, and small regression and runs-test utilities used by the
above.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .policies import POLICY_KINDS, ControlPolicy, h_order_targets, no_control
from .registers import DiagonalState, z_table
from .sde import (
    LOG_FLOOR,
    NEGATIVITY_TOL,
    IntegrationError,
    SimulationParams,
    trajectory_noise_rng,
)
from .theory import (
    SpeedupBounds,
    RateEstimate,
    h_ordering_speedup_bounds,
    random_permutation_speedup_bounds,
)

# Steps pre-drawn per trajectory between active-set compressions.
NOISE_BLOCK_STEPS = 128
# Spawn key of the batch control stream: outside the per-trajectory
# (index, 0/1) key space, so ensemble permutation draws never collide
# with any trajectory's own streams.
BATCH_CONTROL_KEY = (0xFFFFFFFF, 2)
# A first-passage mean is considered unusable above this censoring level.
CENSOR_LIMIT = 1e-3

SPEEDUP_METHODS = ("fixed_epsilon", "asymptotic_regression")


def default_epsilon_grid() -> np.ndarray:
    """Standard first-passage target grid: 13 points per decade from
    1e-1 down to 1e-6, descending."""
    return np.logspace(-1.0, -6.0, 66)


@dataclass(frozen=True)
class EnsembleStats:
    """Aggregated results of one ensemble run.

    Curves carry the full trajectory count at every time: a trajectory
    that reached stop_epsilon keeps contributing its final value, and
    active_fraction records how many were still evolving.  First-passage
    entries are per target epsilon; censored trajectories contribute
    max_time to the mean and to the censored fraction.
    """

    sample_times: np.ndarray
    mean_ln_delta: np.ndarray
    stderr_ln_delta: np.ndarray
    active_fraction: np.ndarray
    epsilons: np.ndarray
    mean_first_passage: np.ndarray
    stderr_first_passage: np.ndarray
    censored_fraction: np.ndarray
    trajectory_count: int
    params: SimulationParams
    policy_kind: str
    final_indices: np.ndarray
    retrodicted_indices: np.ndarray | None = None
    final_states: np.ndarray | None = None
    first_passage_times: np.ndarray | None = None

    @property
    def has_excessive_censoring(self) -> bool:
        """True when any target lost more than 10% of trajectories."""
        return bool(self.censored_fraction.size) and bool(
            np.any(self.censored_fraction > 0.10)
        )

    def epsilon_index(self, epsilon: float) -> int:
        hits = np.where(np.isclose(self.epsilons, epsilon, rtol=1e-9, atol=0.0))[0]
        if hits.size == 0:
            raise ValueError(f"epsilon {epsilon!r} is not in this ensemble's grid")
        return int(hits[0])

    def mean_time(self, epsilon: float) -> tuple[float, float, float]:
        """(mean, stderr, censored fraction) of the first-passage time."""
        j = self.epsilon_index(epsilon)
        return (
            float(self.mean_first_passage[j]),
            float(self.stderr_first_passage[j]),
            float(self.censored_fraction[j]),
        )


def _masked_infidelity_rows(lam: np.ndarray, rows: np.ndarray, amax: np.ndarray):
    """Infidelity per row as the sum of non-maximal entries.

    Summing the tail directly (instead of 1 - max) keeps relative
    accuracy once the maximum approaches 1.
    """
    tail = lam.copy()
    tail[rows, amax] = 0.0
    return tail.sum(axis=1)


def run_ensemble(
    params: SimulationParams,
    policy: ControlPolicy,
    epsilons,
    count: int,
    master_seed: int,
    *,
    record_every: int = 8,
    initial_state: DiagonalState | None = None,
    run_full_time: bool = False,
    collect_final_states: bool = False,
    collect_retrodiction: bool = False,
    collect_first_passage: bool = False,
) -> EnsembleStats:
    """Run `count` trajectories and aggregate their statistics.

    Trajectory i consumes the noise stream of trajectory_noise_rng(
    master_seed, i), so ensembles with equal seeds are paired noise-wise
    across policies, and the whole result is a deterministic function of
    the arguments.
    """
    if count < 2:
        raise ValueError("an ensemble needs at least 2 trajectories")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    eps = np.asarray([float(e) for e in epsilons], dtype=float)
    E = eps.size
    if E:
        if np.any(eps <= 0.0) or np.any(eps >= 1.0):
            raise ValueError("epsilon targets must lie in (0, 1)")
        if np.any(np.diff(eps) >= 0.0):
            raise ValueError("epsilons must be strictly decreasing")
        if not run_full_time and eps[-1] < params.stop_epsilon:
            raise ValueError("epsilon targets below stop_epsilon are unreachable")

    n = params.n
    d = 2**n
    if initial_state is None:
        initial = np.full(d, 1.0 / d)
    else:
        if initial_state.n != n:
            raise ValueError("initial state size does not match params.n")
        initial = initial_state.probs.copy()

    kind = policy.kind
    targets = None
    cycle_inverse = None
    cycle_images = None
    ctrl_rng = None
    if kind == "h_ordering":
        targets = np.asarray(h_order_targets(n), dtype=np.intp)[None, :]
    elif kind == "fixed_cycle":
        cycle_images = [np.asarray(p.image, dtype=np.intp) for p in policy.cycle]
        if any(im.size != d for im in cycle_images):
            raise ValueError("cycle permutation dimension does not match 2**n")
        cycle_inverse = [np.argsort(im) for im in cycle_images]
    elif kind == "random_permutation":
        ctrl_rng = np.random.default_rng(
            np.random.SeedSequence(master_seed, spawn_key=BATCH_CONTROL_KEY)
        )

    dt = params.dt
    gamma = params.gamma
    c = 2.0 * math.sqrt(2.0 * gamma)
    cdt = c * dt
    sqrt_dt = math.sqrt(dt)
    total_steps = params.total_steps
    exact = params.integrator == "exact"
    z = z_table(n)
    zT = z.T

    grid_steps = np.arange(0, total_steps + 1, record_every, dtype=np.int64)
    if grid_steps[-1] != total_steps:
        grid_steps = np.append(grid_steps, total_steps)
    G = grid_steps.size
    sum_ln = np.zeros(G)
    sumsq_ln = np.zeros(G)
    active_at = np.zeros(G, dtype=np.int64)

    amax0 = int(np.argmax(initial))
    tail0 = initial.copy()
    tail0[amax0] = 0.0
    delta0 = float(tail0.sum())
    ln0 = math.log(max(delta0, LOG_FLOOR))
    ln_eps = np.log(eps) if E else np.zeros(0)
    stop_ln = math.log(params.stop_epsilon)

    fp = np.full((count, E), np.nan)
    ptr = np.full(count, int(np.sum(ln_eps >= ln0)) if E else 0, dtype=np.int64)
    if E:
        fp[:, : ptr[0]] = 0.0
    cur_ln = np.full(count, ln0)
    final_idx = np.full(count, amax0, dtype=np.intp)
    finals = np.tile(initial, (count, 1)) if collect_final_states else None
    retro = np.full(count, amax0, dtype=np.intp) if collect_retrodiction else None
    cum = (
        np.tile(np.arange(d, dtype=np.intp), (count, 1))
        if collect_retrodiction
        else None
    )

    frozen_at_start = (not run_full_time) and delta0 <= params.stop_epsilon
    active_at[0] = 0 if frozen_at_start else count
    sum_ln[0] = count * ln0
    sumsq_ln[0] = count * ln0 * ln0

    lam = np.tile(initial, (count, 1))
    idx = np.arange(count)
    A = 0 if frozen_at_start else count
    if frozen_at_start:
        sum_ln[:] = sum_ln[0]
        sumsq_ln[:] = sumsq_ln[0]
    alive = np.ones(A, dtype=bool)
    gens = [trajectory_noise_rng(master_seed, i) for i in range(count)] if A else []

    step = 0
    g_next = 1
    while A > 0 and step < total_steps:
        k_steps = min(NOISE_BLOCK_STEPS, total_steps - step)
        noise = np.empty((A, k_steps, n))
        for j in range(A):
            noise[j] = gens[j].standard_normal((k_steps, n))
        noise *= sqrt_dt
        rows = np.arange(A)

        for k in range(k_steps):
            if kind == "h_ordering":
                order = np.argsort(-lam, axis=1, kind="stable")
                img = np.empty_like(order)
                np.put_along_axis(img, order, targets, axis=1)
                new_lam = np.empty_like(lam)
                np.put_along_axis(new_lam, img, lam, axis=1)
                lam = new_lam
                if cum is not None:
                    cum = np.take_along_axis(img, cum, axis=1)
            elif kind == "random_permutation":
                img = np.argsort(ctrl_rng.random((A, d)), axis=1)
                new_lam = np.empty_like(lam)
                np.put_along_axis(new_lam, img, lam, axis=1)
                lam = new_lam
                if cum is not None:
                    cum = np.take_along_axis(img, cum, axis=1)
            elif kind == "fixed_cycle":
                j = step % len(cycle_images)
                lam = lam[:, cycle_inverse[j]]
                if cum is not None:
                    cum = cycle_images[j][cum]

            expect = lam @ zT
            dR = cdt * expect + noise[:, k, :]
            if exact:
                expo = c * (dR @ z)
                expo -= expo.max(axis=1, keepdims=True)
                lam = lam * np.exp(expo)
                lam /= lam.sum(axis=1, keepdims=True)
            else:
                dw = dR - cdt * expect
                coeff = dw @ z - np.sum(dw * expect, axis=1, keepdims=True)
                lam = lam * (1.0 + c * coeff)
                low = float(lam.min())
                if low < -NEGATIVITY_TOL:
                    raise IntegrationError(
                        f"population went to {low:.3e} before clamping at step "
                        f"{step + 1}; reduce dt (or gamma*dt)"
                    )
                np.clip(lam, 0.0, 1.0, out=lam)
                lam /= lam.sum(axis=1, keepdims=True)
            step += 1

            amax = np.argmax(lam, axis=1)
            delta = _masked_infidelity_rows(lam, rows, amax)
            ln_new = np.log(np.maximum(delta, LOG_FLOOR))
            if not np.all(np.isfinite(ln_new)):
                raise IntegrationError(f"non-finite infidelity at step {step}")

            if E:
                while True:
                    p = ptr[idx]
                    can = alive & (p < E)
                    if not can.any():
                        break
                    pc = np.minimum(p, E - 1)
                    hit = can & (ln_new <= ln_eps[pc])
                    if not hit.any():
                        break
                    h = np.where(hit)[0]
                    prev = cur_ln[idx[h]]
                    tgt = ln_eps[pc[h]]
                    denom = ln_new[h] - prev
                    frac = np.ones(h.size)
                    strict = denom < 0.0
                    frac[strict] = (tgt[strict] - prev[strict]) / denom[strict]
                    np.clip(frac, 0.0, 1.0, out=frac)
                    fp[idx[h], pc[h]] = (step - 1) * dt + frac * dt
                    ptr[idx[h]] += 1

            live = np.where(alive)[0]
            cur_ln[idx[live]] = ln_new[live]
            final_idx[idx[live]] = amax[live]
            if not run_full_time:
                newly = alive & (ln_new <= stop_ln)
                if newly.any():
                    w = np.where(newly)[0]
                    if finals is not None:
                        finals[idx[w]] = lam[w]
                    if cum is not None:
                        retro[idx[w]] = np.argmax(
                            cum[w] == final_idx[idx[w]][:, None], axis=1
                        )
                    alive[w] = False

            if g_next < G and step == grid_steps[g_next]:
                sum_ln[g_next] = cur_ln.sum()
                sumsq_ln[g_next] = cur_ln @ cur_ln
                active_at[g_next] = int(alive.sum())
                g_next += 1

        if not alive.all():
            keep = alive
            lam = lam[keep]
            idx = idx[keep]
            if cum is not None:
                cum = cum[keep]
            gens = [g for g, kf in zip(gens, keep) if kf]
            A = idx.size
            alive = np.ones(A, dtype=bool)

    if A > 0:
        live = np.where(alive)[0]
        if finals is not None:
            finals[idx[live]] = lam[live]
        if cum is not None:
            retro[idx[live]] = np.argmax(
                cum[live] == final_idx[idx[live]][:, None], axis=1
            )
    while g_next < G:
        sum_ln[g_next] = cur_ln.sum()
        sumsq_ln[g_next] = cur_ln @ cur_ln
        active_at[g_next] = int(alive.sum()) if A else 0
        g_next += 1

    mean_ln = sum_ln / count
    var_ln = np.maximum(sumsq_ln - count * mean_ln**2, 0.0) / (count - 1)
    stderr_ln = np.sqrt(var_ln / count)

    filled = np.where(np.isnan(fp), params.max_time, fp)
    mean_fp = filled.mean(axis=0) if E else np.zeros(0)
    std_fp = filled.std(axis=0, ddof=1) if E else np.zeros(0)
    stderr_fp = std_fp / math.sqrt(count)
    censored = np.isnan(fp).mean(axis=0) if E else np.zeros(0)

    return EnsembleStats(
        sample_times=grid_steps * dt,
        mean_ln_delta=mean_ln,
        stderr_ln_delta=stderr_ln,
        active_fraction=active_at / count,
        epsilons=eps,
        mean_first_passage=mean_fp,
        stderr_first_passage=stderr_fp,
        censored_fraction=censored,
        trajectory_count=count,
        params=params,
        policy_kind=kind,
        final_indices=final_idx,
        retrodicted_indices=retro,
        final_states=finals,
        first_passage_times=fp if collect_first_passage else None,
    )


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line fit: (slope, intercept, slope stderr)."""
    m = x.size
    if m < 3:
        raise ValueError("regression needs at least 3 points")
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx <= 0.0:
        raise ValueError("regression abscissae are degenerate")
    slope = float(dx @ (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    sigma2 = float(resid @ resid) / (m - 2)
    return slope, intercept, math.sqrt(sigma2 / sxx)


def fit_ln_delta_slope(
    stats: EnsembleStats, t_min: float, t_max: float
) -> tuple[float, float]:
    """Slope of the mean log-infidelity curve over a time window.

    Returns (slope, stderr).  The stderr is the usual regression value
    and understates the truth a little, since neighboring time points
    share trajectories.
    """
    mask = (stats.sample_times >= t_min) & (stats.sample_times <= t_max)
    if int(mask.sum()) < 3:
        raise ValueError("slope window contains fewer than 3 sample times")
    slope, _, err = _ols(stats.sample_times[mask], stats.mean_ln_delta[mask])
    return slope, err


def auto_slope_window(
    stats: EnsembleStats, min_active_fraction: float = 0.999
) -> tuple[float, float]:
    """Latter half of the time range where at least the given fraction of
    trajectories was still evolving; falls back to the latter half of the
    whole run when freezing starts immediately."""
    good = np.where(stats.active_fraction >= min_active_fraction)[0]
    t_end = stats.sample_times[good[-1]] if good.size else stats.sample_times[-1]
    if t_end <= 0.0:
        t_end = stats.sample_times[-1]
    return 0.5 * t_end, t_end


@dataclass(frozen=True)
class MeanTimeFit:
    """Line fit of mean first-passage time against ln(1/epsilon)."""

    slope: float
    slope_stderr: float
    intercept: float
    point_count: int


def _fit_selection(
    stats: EnsembleStats, eps_lo: float, eps_hi: float, max_censored: float
) -> np.ndarray:
    sel = (
        (stats.epsilons >= eps_lo)
        & (stats.epsilons <= eps_hi)
        & (stats.censored_fraction <= max_censored)
    )
    m = int(sel.sum())
    if m < 3:
        raise ValueError("fewer than 3 usable epsilon points in the fit range")
    if m < 5:
        warnings.warn(
            f"only {m} epsilon points in the regression range", stacklevel=3
        )
    return sel


def regression_mean_time(
    stats: EnsembleStats,
    eps_lo: float = 1e-6,
    eps_hi: float = 1e-4,
    max_censored: float = CENSOR_LIMIT,
) -> MeanTimeFit:
    """Fit mean_T = slope * ln(1/epsilon) + intercept over a target range.

    Points with censoring above max_censored are dropped.  Fewer than 3
    usable points is an error; fewer than 5 draws a warning.  The quoted
    slope_stderr is the plain regression value; it understates the truth
    somewhat because neighboring targets share trajectories.
    """
    sel = _fit_selection(stats, eps_lo, eps_hi, max_censored)
    x = np.log(1.0 / stats.epsilons[sel])
    y = stats.mean_first_passage[sel]
    slope, intercept, err = _ols(x, y)
    return MeanTimeFit(
        slope=slope, slope_stderr=err, intercept=intercept,
        point_count=int(sel.sum()),
    )


def _slope_variance(
    stats: EnsembleStats, eps_lo: float, eps_hi: float, groups: int = 20
) -> tuple[float, float]:
    """Mean-time slope and an honest variance for it.

    With per-trajectory passage times available, uses a delete-group
    jackknife over trajectories, which captures the correlation between
    targets that share trajectories; otherwise falls back to the plain
    regression variance.
    """
    fit = regression_mean_time(stats, eps_lo, eps_hi)
    fp = stats.first_passage_times
    if fp is None:
        return fit.slope, fit.slope_stderr**2
    sel = _fit_selection(stats, eps_lo, eps_hi, CENSOR_LIMIT)
    x = np.log(1.0 / stats.epsilons[sel])
    filled = np.where(np.isnan(fp), stats.params.max_time, fp)[:, sel]
    count = filled.shape[0]
    g = min(groups, count)
    reps = np.empty(g)
    for k in range(g):
        mask = np.ones(count, dtype=bool)
        mask[k::g] = False
        reps[k] = _ols(x, filled[mask].mean(axis=0))[0]
    var = (g - 1) / g * float(np.sum((reps - reps.mean()) ** 2))
    return fit.slope, var


@dataclass(frozen=True)
class SpeedupEstimate:
    """A measured speed-up factor with its standard error."""

    value: float
    stderr: float
    method: str
    epsilon_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.method not in SPEEDUP_METHODS:
            raise ValueError(f"method must be one of {SPEEDUP_METHODS}")
        if not self.value > 0.0:
            raise ValueError("speed-up must be positive")


def speedup_fixed_epsilon(
    stats_nc: EnsembleStats, stats_ctrl: EnsembleStats, epsilon: float
) -> SpeedupEstimate:
    """Ratio of mean first-passage times at one target infidelity."""
    t_nc, e_nc, c_nc = stats_nc.mean_time(epsilon)
    t_ct, e_ct, c_ct = stats_ctrl.mean_time(epsilon)
    if c_nc > CENSOR_LIMIT or c_ct > CENSOR_LIMIT:
        raise ValueError(
            f"censoring above {CENSOR_LIMIT:g} at epsilon {epsilon:g}; "
            "increase max_time"
        )
    value = t_nc / t_ct
    stderr = value * math.hypot(e_nc / t_nc, e_ct / t_ct)
    return SpeedupEstimate(
        value=value,
        stderr=stderr,
        method="fixed_epsilon",
        epsilon_range=(epsilon, epsilon),
    )


def asymptotic_speedup(
    stats_nc: EnsembleStats,
    stats_ctrl: EnsembleStats,
    eps_lo: float = 1e-6,
    eps_hi: float = 1e-4,
) -> SpeedupEstimate:
    """Small-epsilon speed-up: ratio of the regression slopes of mean
    first-passage time against ln(1/epsilon).

    The stderr combines the two slope variances without a covariance
    term, which stays conservative when the ensembles share seeds.
    """
    s_nc, v_nc = _slope_variance(stats_nc, eps_lo, eps_hi)
    s_ct, v_ct = _slope_variance(stats_ctrl, eps_lo, eps_hi)
    value = s_nc / s_ct
    stderr = abs(value) * math.sqrt(v_nc / s_nc**2 + v_ct / s_ct**2)
    return SpeedupEstimate(
        value=value,
        stderr=stderr,
        method="asymptotic_regression",
        epsilon_range=(eps_lo, eps_hi),
    )


def speedup_bounds_for_policy(kind: str, n: int) -> SpeedupBounds:
    """Analytic band to overlay on a measured speed-up of this policy."""
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}")
    if kind == "h_ordering":
        return h_ordering_speedup_bounds(n)
    if kind in ("random_permutation", "fixed_cycle"):
        return random_permutation_speedup_bounds(n)
    return SpeedupBounds(1.0, 1.0)


@dataclass(frozen=True)
class SweepPoint:
    """One register size's speed-up next to its analytic band."""

    n: int
    estimate: SpeedupEstimate
    bounds: SpeedupBounds


def speedup_scaling_sweep(
    n_values,
    policy: ControlPolicy,
    params_template: SimulationParams,
    count: int,
    master_seed: int,
    *,
    epsilons=None,
    eps_lo: float = 1e-6,
    eps_hi: float = 1e-4,
    record_every: int = 64,
) -> list[SweepPoint]:
    """Asymptotic speed-up of a policy for each register size.

    Each size runs a no-control ensemble and a controlled ensemble with
    the same master seed, so the pair shares measurement noise; the
    reported stderr is still the unpaired propagation (conservative).
    """
    if epsilons is None:
        epsilons = default_epsilon_grid()
    points: list[SweepPoint] = []
    for n in n_values:
        params = replace(params_template, n=int(n))
        stats_nc = run_ensemble(
            params, no_control(), epsilons, count, master_seed,
            record_every=record_every, collect_first_passage=True,
        )
        stats_ctrl = run_ensemble(
            params, policy, epsilons, count, master_seed,
            record_every=record_every, collect_first_passage=True,
        )
        estimate = asymptotic_speedup(stats_nc, stats_ctrl, eps_lo, eps_hi)
        points.append(
            SweepPoint(
                n=int(n),
                estimate=estimate,
                bounds=speedup_bounds_for_policy(policy.kind, int(n)),
            )
        )
    return points


@dataclass(frozen=True)
class ScalingFit:
    """Weighted line fit of speed-up against register size."""

    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float


def fit_speedup_scaling(points: list[SweepPoint]) -> ScalingFit:
    """Weighted least squares of SweepPoint values against n."""
    if len(points) < 3:
        raise ValueError("scaling fit needs at least 3 register sizes")
    x = np.array([p.n for p in points], dtype=float)
    y = np.array([p.estimate.value for p in points])
    s = np.array([p.estimate.stderr for p in points])
    if np.any(s <= 0.0):
        raise ValueError("every point needs a positive stderr")
    w = 1.0 / s**2
    W = float(w.sum())
    X = float(w @ x)
    Y = float(w @ y)
    XX = float(w @ (x * x))
    XY = float(w @ (x * y))
    denom = W * XX - X * X
    if denom <= 0.0:
        raise ValueError("scaling fit abscissae are degenerate")
    slope = (W * XY - X * Y) / denom
    intercept = (XX * Y - X * XY) / denom
    return ScalingFit(
        slope=slope,
        intercept=intercept,
        slope_stderr=math.sqrt(W / denom),
        intercept_stderr=math.sqrt(XX / denom),
    )


def mc_permuted_step_rate(
    state: DiagonalState,
    gamma: float,
    dt: float,
    samples: int,
    master_seed: int,
    chunk_size: int = 200_000,
) -> RateEstimate:
    """Monte Carlo single-step estimate of the permutation-averaged
    log-infidelity rate: each sample draws a uniform permutation of the
    state, takes one exact integration step, and measures the change of
    ln(Delta) over dt."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = state.n
    d = 2**n
    probs = state.probs
    delta0 = state.infidelity()
    if delta0 <= 0.0:
        raise ValueError("rate is singular for a collapsed state (Delta = 0)")
    ln0 = math.log(delta0)
    z = z_table(n)
    zT = z.T
    c = 2.0 * math.sqrt(2.0 * gamma)
    cdt = c * dt
    sqrt_dt = math.sqrt(dt)
    rng = np.random.default_rng(master_seed)

    acc = 0.0
    accsq = 0.0
    done = 0
    while done < samples:
        m = min(chunk_size, samples - done)
        rows = np.arange(m)[:, None]
        img = np.argsort(rng.random((m, d)), axis=1)
        lamp = np.empty((m, d))
        lamp[rows, img] = probs[None, :]
        expect = lamp @ zT
        dR = cdt * expect + rng.standard_normal((m, n)) * sqrt_dt
        expo = c * (dR @ z)
        expo -= expo.max(axis=1, keepdims=True)
        w = lamp * np.exp(expo)
        w /= w.sum(axis=1, keepdims=True)
        amax = np.argmax(w, axis=1)
        w[np.arange(m), amax] = 0.0
        dl = np.log(np.maximum(w.sum(axis=1), LOG_FLOOR)) - ln0
        acc += float(dl.sum())
        accsq += float(dl @ dl)
        done += m

    mean_dl = acc / samples
    var_dl = max(accsq - samples * mean_dl**2, 0.0) / (samples - 1)
    return RateEstimate(
        value=mean_dl / dt,
        stderr=math.sqrt(var_dl / samples) / dt,
    )


@dataclass(frozen=True)
class RunsTestResult:
    """Wald-Wolfowitz runs test on the signs of a sequence."""

    runs: int
    positive: int
    negative: int
    z_score: float
    p_value: float


def runs_test(values) -> RunsTestResult:
    """Two-sided runs test for randomness of the sign sequence.

    Uses the normal approximation.  Values of exactly zero count as
    positive; an all-one-sign sequence returns p = 1 (no run structure to
    test), which for regression residuals cannot occur.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("runs test needs at least 3 values")
    signs = v >= 0.0
    n1 = int(signs.sum())
    n2 = int(v.size - n1)
    runs = 1 + int(np.sum(signs[1:] != signs[:-1]))
    if n1 == 0 or n2 == 0:
        return RunsTestResult(runs, n1, n2, 0.0, 1.0)
    total = n1 + n2
    mu = 1.0 + 2.0 * n1 * n2 / total
    var = (
        2.0 * n1 * n2 * (2.0 * n1 * n2 - total)
        / (total**2 * (total - 1))
    )
    zscore = (runs - mu) / math.sqrt(var)
    p = 2.0 * (1.0 - 0.5 * (1.0 + math.erf(abs(zscore) / math.sqrt(2.0))))
    return RunsTestResult(runs, n1, n2, zscore, min(p, 1.0))
