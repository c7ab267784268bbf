"""Closed-form predictions and exact permutation-group results.

Covers the asymptotic no-control collapse laws, the instantaneous
log-infidelity decay rate of an arbitrary diagonal state, the analytic
bounds on that rate and on the protocol speed-ups, the exact average of
the rate over the full permutation group (brute-force enumeration for
small registers), the integer sum identities that the bounds rest on,
and the closed-form conditional state reached from a given accumulated
record.

Rates are d<ln Delta>/dt values and are negative for valid states.  The
two extremal tail shapes appear throughout: the two-level state puts the
whole tail on a single basis index, the flat-tail state spreads it evenly
over the other 2^n - 1 indices.  Under the group average these are the
fastest and slowest collapsing states at fixed infidelity, so they
bracket every other state.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .registers import DiagonalState, z_table
from .sde import RecordAccumulator

# Full enumeration of the permutation group is kept below 8! elements.
ENUMERATION_MAX_QUBITS = 3

RATE_MODES = ("exact_enumeration", "closed_form_bounds")


def nofb_log_infidelity(t, n: int, gamma: float = 1.0):
    """Asymptotic mean log-infidelity -16*gamma*t + ln(n) with no control.

    Accepts scalar or array t.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    return -16.0 * gamma * np.asarray(t, dtype=float) + math.log(n)


def mean_time_nofb(epsilon: float, gamma: float = 1.0) -> float:
    """Asymptotic mean time for an uncontrolled register to reach
    infidelity epsilon: ln(1/epsilon) / (16*gamma)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return math.log(1.0 / epsilon) / (16.0 * gamma)


@dataclass(frozen=True)
class RateEstimate:
    """A d<ln Delta>/dt value, with a standard error when it came from
    sampling rather than a closed form.  Negative for valid states;
    Monte Carlo noise can push a near-zero estimate slightly positive.
    """

    value: float
    stderr: float | None = None


@dataclass(frozen=True)
class SpeedupBounds:
    """Analytic lower/upper bounds on a protocol speed-up factor."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not 0.0 < self.lower <= self.upper:
            raise ValueError("bounds must satisfy 0 < lower <= upper")

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


def log_infidelity_rate(state: DiagonalState, gamma: float = 1.0) -> RateEstimate:
    """Instantaneous mean decay rate of ln(Delta) for a diagonal state.

        rate = -4*gamma * (1-Delta)^2 / Delta^2 * sum_r <Z~^r>^2

    where Z~^r is Z^r shifted so the eigenvalue at the state's maximal
    index is zero (for a maximum at index 0 this is the usual {0, -2}
    convention).  The shift makes the formula valid wherever the maximum
    sits.
    """
    delta = state.infidelity()
    if delta <= 0.0:
        raise ValueError("rate is singular for a collapsed state (Delta = 0)")
    z = z_table(state.n)
    zs = z - z[:, [state.argmax_index()]]
    expect = zs @ state.probs
    zsum = float(expect @ expect)
    value = -4.0 * gamma * zsum * (1.0 - delta) ** 2 / delta**2
    return RateEstimate(value)


def zsum_bounds(delta: float, n: int) -> tuple[float, float]:
    """Bounds on sum_r <Z~^r>^2 for an H-ordered state with infidelity
    delta: the flat-tail state attains the lower bound, the two-level
    state (tail at the all-ones index) the upper."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be at least 1")
    d = 2**n
    lower = n * d**2 / (d - 1) ** 2 * delta**2
    upper = 4.0 * n * delta**2
    return lower, upper


def h_ordering_speedup_bounds(n: int) -> SpeedupBounds:
    """Speed-up bounds for the locally optimal H-ordering feedback."""
    if n < 1:
        raise ValueError("n must be at least 1")
    d = 2**n
    return SpeedupBounds(lower=d**2 / (d - 1) ** 2 * n / 4.0, upper=float(n))


def random_permutation_speedup_bounds(n: int) -> SpeedupBounds:
    """Speed-up bounds for the open-loop random-permutation protocol.

    Shares the H-ordering lower bound; the upper bound approaches 0.5*n
    from above as n grows (large-n band 0.25*n to 0.5*n).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    d = 2**n
    lower = d**2 / (d - 1) ** 2 * n / 4.0
    upper = n * (d / 2) / (d - 1)
    return SpeedupBounds(lower=lower, upper=upper)


@lru_cache(maxsize=None)
def all_permutation_images(d: int) -> np.ndarray:
    """All d! permutation image arrays, one per row, lexicographic order."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if d > 8:
        raise ValueError("enumeration cap exceeded (d! grows too fast above 8)")
    images = np.array(list(itertools.permutations(range(d))), dtype=np.intp)
    images.setflags(write=False)
    return images


@dataclass(frozen=True)
class IdentityReport:
    """Brute-force verification of the permutation sum identities.

    For a single-qubit shifted observable (diagonal entries in {0, -2})
    conjugated by every permutation s of the D basis indices:

        sum_s (Z_s)_{ii}^2        = 2 * D!          for every i
        sum_s (Z_s)_{ii} (Z_s)_{jj} = [1 - 1/(D-1)] * D!  for every i != j

    square_sum and cross_sum are the representative entries (i=0, j=1);
    passed reports the check over every index pair, in exact integer
    arithmetic.
    """

    dimension: int
    qubit: int
    permutation_count: int
    square_sum: int
    cross_sum: int
    expected_square_sum: int
    expected_cross_sum: int
    passed: bool


def permutation_sum_identities(d: int, qubit: int = 1) -> IdentityReport:
    """Enumerate all d! permutations and verify the two sum identities."""
    if d not in (4, 8):
        raise ValueError("identity enumeration supports d = 4 or 8")
    n = d.bit_length() - 1
    if not 1 <= qubit <= n:
        raise ValueError(f"qubit must lie in [1, {n}]")
    zrow = z_table(n, shifted=True)[qubit - 1].astype(np.int64)
    values = zrow[all_permutation_images(d)]
    cross = values.T @ values  # exact: |entries| <= 4 * d!
    fact = math.factorial(d)
    expected_square = 2 * fact
    expected_cross = (fact // (d - 1)) * (d - 2)  # (d-1) divides d!
    diag = np.diagonal(cross).copy()
    off = cross[~np.eye(d, dtype=bool)]
    passed = bool(np.all(diag == expected_square) and np.all(off == expected_cross))
    return IdentityReport(
        dimension=d,
        qubit=qubit,
        permutation_count=fact,
        square_sum=int(cross[0, 0]),
        cross_sum=int(cross[0, 1]),
        expected_square_sum=expected_square,
        expected_cross_sum=expected_cross,
        passed=passed,
    )


def two_level_state(n: int, delta: float, tail_index: int | None = None) -> DiagonalState:
    """State with 1-delta at index 0 and the whole tail on one other index
    (default: the all-ones index, the H-ordered placement)."""
    if not 0.0 < delta <= 0.5:
        raise ValueError("delta must lie in (0, 0.5] so the maximum stays at 0")
    d = 2**n
    if tail_index is None:
        tail_index = d - 1
    if not 1 <= tail_index < d:
        raise ValueError("tail index must be a nonzero basis index")
    probs = np.zeros(d)
    probs[0] = 1.0 - delta
    probs[tail_index] = delta
    return DiagonalState(n, probs)


def flat_tail_state(n: int, delta: float) -> DiagonalState:
    """State with 1-delta at index 0 and the tail spread evenly."""
    d = 2**n
    if not 0.0 < delta <= (d - 1) / d:
        raise ValueError("delta too large for the maximum to stay at 0")
    probs = np.full(d, delta / (d - 1))
    probs[0] = 1.0 - delta
    return DiagonalState(n, probs)


def two_level_permuted_rate(n: int, delta: float, gamma: float = 1.0) -> float:
    """Group-averaged collapse rate of the two-level state: the fastest
    (most negative) envelope, -8*gamma*n*D/(D-1) * (1-delta)^2."""
    d = 2**n
    return -8.0 * gamma * n * d / (d - 1) * (1.0 - delta) ** 2


def flat_tail_permuted_rate(n: int, delta: float, gamma: float = 1.0) -> float:
    """Group-averaged collapse rate of the flat-tail state: the slowest
    (least negative) envelope, -4*gamma*n*D^2/(D-1)^2 * (1-delta)^2."""
    d = 2**n
    return -4.0 * gamma * n * d**2 / (d - 1) ** 2 * (1.0 - delta) ** 2


def permutation_averaged_rate(
    state: DiagonalState, gamma: float = 1.0, mode: str = "exact_enumeration"
):
    """Mean of log_infidelity_rate over every permutation of the state.

    mode "exact_enumeration" (n <= 3) averages over the full group and
    returns a RateEstimate with no standard error.  Each permuted state's
    observables are shifted by the eigenvalue at its own maximum, which
    keeps every term finite however the state collapses.

    mode "closed_form_bounds" returns the (two_level, flat_tail) envelope
    pair at this state's n and infidelity: two RateEstimates ordered from
    most to least negative.  Any state's enumeration average lies between
    them (the average is a convex quadratic over the fixed-infidelity
    simplex, symmetric in the tail indices, so the extremes sit at a
    vertex and at the centroid).
    """
    if mode not in RATE_MODES:
        raise ValueError(f"mode must be one of {RATE_MODES}")
    delta = state.infidelity()
    if delta <= 0.0:
        raise ValueError("rate is singular for a collapsed state (Delta = 0)")
    n = state.n
    if mode == "closed_form_bounds":
        return (
            RateEstimate(two_level_permuted_rate(n, delta, gamma)),
            RateEstimate(flat_tail_permuted_rate(n, delta, gamma)),
        )
    if n > ENUMERATION_MAX_QUBITS:
        raise ValueError(
            f"exact enumeration limited to n <= {ENUMERATION_MAX_QUBITS}"
        )
    images = all_permutation_images(2**n)
    z = z_table(n)
    i_star = state.argmax_index()
    zsum_avg = 0.0
    for r in range(n):
        permuted = z[r][images]
        shifted = permuted - permuted[:, [i_star]]
        moments = shifted @ state.probs
        zsum_avg += float(np.mean(moments * moments))
    value = -4.0 * gamma * zsum_avg * (1.0 - delta) ** 2 / delta**2
    return RateEstimate(value)


def linear_trajectory_state(records, n: int, gamma: float = 1.0) -> DiagonalState:
    """Conditional state implied by an accumulated record, from the
    maximally mixed start: lambda_i proportional to
    exp(2*sqrt(2*gamma) * sum_r z_i^r * R[r]) with unshifted z.

    Accepts a RecordAccumulator or a plain length-n array.  The softmax is
    exponent-shifted, so arbitrarily long records cannot overflow.
    """
    R = records.R if isinstance(records, RecordAccumulator) else np.asarray(
        records, dtype=float
    )
    if R.shape != (n,):
        raise ValueError(f"record must have shape ({n},)")
    expo = 2.0 * math.sqrt(2.0 * gamma) * (R @ z_table(n))
    expo -= expo.max()
    weights = np.exp(expo)
    return DiagonalState(n, weights / weights.sum())


def mean_random_hamming_distance(n: int) -> float:
    """Mean Hamming distance between two independent uniform n-bit
    strings (with replacement): n/2."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return n / 2.0
