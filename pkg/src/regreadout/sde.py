"""Single-trajectory integration of the conditional register state under
independent continuous z measurements of every qubit.

Each qubit r produces a measurement record increment

    dR[r] = 2*sqrt(2*gamma) * <Z^r> dt + dW[r],

with independent Wiener increments dW[r] ~ Normal(0, dt) and <Z^r> the
unshifted (+1/-1) expectation in the current state.  Because the state
stays diagonal, the conditional update only reweights populations.  Two
interchangeable integrators consume the same record stream:

``euler``
    The explicit first-order update

        lam_i += 2*sqrt(2*gamma) * sum_r dW[r] * (z_i^r - <Z^r>) * lam_i,

    with dW recovered from the record as dR - 2*sqrt(2*gamma)*<Z^r>*dt,
    followed by clamping to [0, 1] and renormalization.  A negative
    excursion beyond -1e-6 before clamping aborts the step: the time step
    is too large for the requested strength.

``exact``
    The multiplicative update

        lam_i *= exp(2*sqrt(2*gamma) * sum_r z_i^r * dR[r]),

    then normalization.  Composed over steps this equals the closed-form
    conditional state given the accumulated record, so it is
    unconditionally positive and remains valid for arbitrarily collapsed
    states.

A trajectory starts from the maximally mixed state unless told otherwise,
applies its control permutation at the start of every step (before the
record for that step is generated), and tracks the infidelity
Delta = 1 - max_i lam_i together with first-passage times to a grid of
infidelity targets, linearly interpolated in ln(Delta) between the
bracketing steps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .policies import ControlPolicy, policy_step
from .registers import BasisIndex, DiagonalState, Permutation, compose, z_table

DEFAULT_DT_GAMMA = 6.25e-4     # default step size in units of 1/gamma
DEFAULT_STOP_EPSILON = 1e-6
DT_GAMMA_WARN = 0.01
NEGATIVITY_TOL = 1e-6
# Smallest positive double; keeps ln(Delta) finite when a trajectory
# collapses beyond floating-point resolution.
LOG_FLOOR = 5e-324

INTEGRATORS = ("exact", "euler")


class IntegrationError(RuntimeError):
    """Raised when a step produces an invalid state (dt too large, or a
    non-finite value appeared in the update)."""


@dataclass(frozen=True)
class SimulationParams:
    """Physical and numerical parameters of a measurement trajectory."""

    n: int
    gamma: float = 1.0
    dt: float | None = None
    max_time: float = 3.0
    integrator: str = "exact"
    stop_epsilon: float = DEFAULT_STOP_EPSILON

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("register needs at least one qubit")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive and finite")
        if self.dt is None:
            object.__setattr__(self, "dt", DEFAULT_DT_GAMMA / self.gamma)
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if self.dt * self.gamma > DT_GAMMA_WARN:
            warnings.warn(
                f"dt*gamma = {self.dt * self.gamma:.3g} is large; the "
                "discretized record statistics degrade above 0.01",
                stacklevel=2,
            )
        if not (self.max_time > 0.0 and math.isfinite(self.max_time)):
            raise ValueError("max_time must be positive and finite")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if not 0.0 < self.stop_epsilon < 1.0:
            raise ValueError("stop_epsilon must lie in (0, 1)")

    @property
    def total_steps(self) -> int:
        return int(round(self.max_time / self.dt))


@dataclass(frozen=True)
class StepIncrements:
    """One step of measurement records: raw Wiener part dW and the full
    record dR = 2*sqrt(2*gamma)*<Z^r>*dt + dW, both of length n."""

    dW: np.ndarray
    dR: np.ndarray


@dataclass(frozen=True)
class RecordAccumulator:
    """Integrated record R[r] = sum of dR[r] up to time t."""

    R: np.ndarray
    t: float


def generate_increments(
    state: DiagonalState, params: SimulationParams, rng: np.random.Generator
) -> StepIncrements:
    """Draw the n record increments for one step from the given state."""
    z = z_table(state.n)
    expect = z @ state.probs
    dw = rng.normal(0.0, math.sqrt(params.dt), size=state.n)
    c = 2.0 * math.sqrt(2.0 * params.gamma)
    dr = c * expect * params.dt + dw
    return StepIncrements(dW=dw, dR=dr)


def euler_step(
    state: DiagonalState, inc: StepIncrements, params: SimulationParams
) -> DiagonalState:
    """First-order update; recovers dW from the record so that both
    integrators consume identical dR streams."""
    z = z_table(state.n)
    probs = state.probs
    expect = z @ probs
    c = 2.0 * math.sqrt(2.0 * params.gamma)
    dw = inc.dR - c * expect * params.dt
    # sum_r dw[r] * (z_i^r - <Z^r>); invariant under the eigenvalue shift
    coeff = dw @ z - float(dw @ expect)
    new = probs * (1.0 + c * coeff)
    low = float(new.min())
    if low < -NEGATIVITY_TOL:
        raise IntegrationError(
            f"population went to {low:.3e} before clamping; "
            "reduce dt (or gamma*dt) for this trajectory"
        )
    new = np.clip(new, 0.0, 1.0)
    total = float(new.sum())
    if not (total > 0.0 and math.isfinite(total)):
        raise IntegrationError("state collapsed to an invalid vector")
    return DiagonalState(state.n, new / total)


def exact_step(
    state: DiagonalState, inc: StepIncrements, params: SimulationParams
) -> DiagonalState:
    """Multiplicative closed-form update for one record increment."""
    z = z_table(state.n)
    c = 2.0 * math.sqrt(2.0 * params.gamma)
    expo = c * (inc.dR @ z)
    if not np.all(np.isfinite(expo)):
        raise IntegrationError("non-finite record increment")
    expo -= expo.max()  # the largest weight becomes 1; no overflow
    new = state.probs * np.exp(expo)
    total = float(new.sum())
    if not (total > 0.0 and math.isfinite(total)):
        raise IntegrationError("state collapsed to an invalid vector")
    return DiagonalState(state.n, new / total)


_STEPPERS = {"euler": euler_step, "exact": exact_step}


@dataclass(frozen=True)
class TrajectoryResult:
    """Everything a single trajectory reports back.

    first_passage maps each infidelity target to the interpolated crossing
    time, or None if the trajectory was censored at max_time before
    reaching it.
    """

    sample_times: np.ndarray
    infidelity: np.ndarray
    first_passage: dict[float, float | None]
    final_index: BasisIndex
    cumulative_control: Permutation
    records: RecordAccumulator
    final_state: DiagonalState

    def censored(self) -> list[float]:
        return [eps for eps, t in self.first_passage.items() if t is None]


def trajectory_noise_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Measurement-noise stream of trajectory `index` under a master seed."""
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(index, 0))
    )


def trajectory_control_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Control stream (random-permutation draws) of trajectory `index`.

    Kept separate from the noise stream so open-loop permutation
    sequences are identical whatever the measurement record does.
    """
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(index, 1))
    )


def _infidelity_of(probs: np.ndarray) -> float:
    rest = probs.copy()
    rest[int(np.argmax(rest))] = 0.0
    return float(rest.sum())


def simulate_trajectory(
    params: SimulationParams,
    policy: ControlPolicy,
    epsilons,
    master_seed: int,
    trajectory_index: int = 0,
    *,
    initial_state: DiagonalState | None = None,
    record_every: int = 1,
    run_full_time: bool = False,
) -> TrajectoryResult:
    """Integrate one trajectory and collect its statistics.

    epsilons must be strictly decreasing and (unless run_full_time is set)
    no smaller than params.stop_epsilon, so every target is reachable
    before the trajectory stops.  The trajectory ends at the first step
    with Delta <= stop_epsilon, or at max_time, whichever comes first;
    run_full_time disables the early exit.
    """
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    if eps and not run_full_time and eps[-1] < params.stop_epsilon:
        raise ValueError("epsilon targets below stop_epsilon are unreachable")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")

    state = (
        DiagonalState.maximally_mixed(params.n)
        if initial_state is None
        else initial_state
    )
    if state.n != params.n:
        raise ValueError("initial state size does not match params.n")

    noise_rng = trajectory_noise_rng(master_seed, trajectory_index)
    control_rng = trajectory_control_rng(master_seed, trajectory_index)

    d = state.probs.size
    cumulative = Permutation.identity(d)
    step_fn = _STEPPERS[params.integrator]
    total_steps = params.total_steps
    dt = params.dt

    records = np.zeros(params.n)
    ln_eps = [math.log(e) for e in eps]
    passage: dict[float, float | None] = {e: None for e in eps}
    ptr = 0

    delta = _infidelity_of(state.probs)
    ln_prev = math.log(max(delta, LOG_FLOOR))
    while ptr < len(eps) and delta <= eps[ptr]:
        passage[eps[ptr]] = 0.0
        ptr += 1

    times = [0.0]
    infid = [delta]

    stopped = (not run_full_time) and delta <= params.stop_epsilon
    step = 0
    while not stopped and step < total_steps:
        perm = policy_step(policy, state, step, control_rng)
        if policy.kind != "none":
            state = DiagonalState(state.n, _apply_image(state.probs, perm.image))
            cumulative = compose(perm, cumulative)
        inc = generate_increments(state, params, noise_rng)
        state = step_fn(state, inc, params)
        records += inc.dR
        step += 1

        delta = _infidelity_of(state.probs)
        if not math.isfinite(delta):
            raise IntegrationError(f"non-finite infidelity at step {step}")
        ln_new = math.log(max(delta, LOG_FLOOR))
        while ptr < len(eps) and ln_new <= ln_eps[ptr]:
            frac = 1.0
            if ln_new < ln_prev:
                frac = (ln_eps[ptr] - ln_prev) / (ln_new - ln_prev)
            passage[eps[ptr]] = (step - 1) * dt + min(max(frac, 0.0), 1.0) * dt
            ptr += 1
        ln_prev = ln_new

        if step % record_every == 0:
            times.append(step * dt)
            infid.append(delta)
        if not run_full_time and delta <= params.stop_epsilon:
            stopped = True

    return TrajectoryResult(
        sample_times=np.asarray(times),
        infidelity=np.asarray(infid),
        first_passage=passage,
        final_index=state.argmax_index(),
        cumulative_control=cumulative,
        records=RecordAccumulator(R=records, t=step * dt),
        final_state=state,
    )


def _apply_image(probs: np.ndarray, image: np.ndarray) -> np.ndarray:
    out = np.empty_like(probs)
    out[image] = probs
    return out
