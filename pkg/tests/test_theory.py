"""Closed-form rates, bounds, and the exact permutation-sum identities.

The numeric expectations here were frozen from independent evaluations of
the closed forms (small-n brute force, exact fractions), not from the
module under test.
"""

import math
import time

import numpy as np
import pytest

from regreadout import (
    DiagonalState,
    SimulationParams,
    SpeedupBounds,
    all_permutation_images,
    apply_permutation,
    flat_tail_permuted_rate,
    flat_tail_state,
    h_ordering_speedup_bounds,
    linear_trajectory_state,
    log_infidelity_rate,
    mean_random_hamming_distance,
    mean_time_nofb,
    nofb_log_infidelity,
    permutation_averaged_rate,
    permutation_sum_identities,
    random_permutation_speedup_bounds,
    sample_uniform_permutation,
    simulate_trajectory,
    two_level_permuted_rate,
    two_level_state,
    zsum_bounds,
)
from regreadout.policies import no_control


def test_nofb_curve_values():
    assert nofb_log_infidelity(0.0, 1) == pytest.approx(0.0)
    assert nofb_log_infidelity(0.5, 2) == pytest.approx(-8.0 + math.log(2.0))
    assert nofb_log_infidelity(1.0, 3, gamma=0.5) == pytest.approx(
        -8.0 + math.log(3.0)
    )
    arr = nofb_log_infidelity(np.array([0.0, 1.0]), 1)
    assert np.allclose(arr, [0.0, -16.0])
    with pytest.raises(ValueError):
        nofb_log_infidelity(1.0, 0)


def test_mean_time_nofb_values():
    assert mean_time_nofb(1e-6) == pytest.approx(6.0 * math.log(10.0) / 16.0)
    assert mean_time_nofb(math.exp(-16.0)) == pytest.approx(1.0)
    assert mean_time_nofb(1e-2, gamma=2.0) == pytest.approx(
        mean_time_nofb(1e-2) / 2.0
    )
    with pytest.raises(ValueError):
        mean_time_nofb(0.0)
    with pytest.raises(ValueError):
        mean_time_nofb(1.0)


def test_zsum_bounds_frozen_example():
    lower, upper = zsum_bounds(0.1, 2)
    assert lower == pytest.approx(0.035556, rel=1e-4)
    assert upper == pytest.approx(0.08)
    with pytest.raises(ValueError):
        zsum_bounds(0.0, 2)
    with pytest.raises(ValueError):
        zsum_bounds(1.0, 2)


def test_zsum_bounds_attained_by_envelope_states():
    for n in (1, 2, 3, 4):
        delta = 0.05
        lower, upper = zsum_bounds(delta, n)
        two = log_infidelity_rate(two_level_state(n, delta))
        flat = log_infidelity_rate(flat_tail_state(n, delta))
        scale = -4.0 * (1.0 - delta) ** 2 / delta**2
        # rate = scale * zsum, so the envelope states hit the two ends
        assert two.value == pytest.approx(scale * upper, rel=1e-12)
        assert flat.value == pytest.approx(scale * lower, rel=1e-12)


def test_speedup_bounds_frozen_examples():
    h2 = h_ordering_speedup_bounds(2)
    assert h2.lower == pytest.approx(8.0 / 9.0)
    assert h2.upper == pytest.approx(2.0)
    rp2 = random_permutation_speedup_bounds(2)
    assert rp2.lower == pytest.approx(0.888889, rel=1e-5)
    assert rp2.upper == pytest.approx(1.33333, rel=1e-5)
    rp3 = random_permutation_speedup_bounds(3)
    assert rp3.lower == pytest.approx(64.0 / 49.0 * 0.75)
    assert rp3.upper == pytest.approx(3.0 * 4.0 / 7.0)


def test_speedup_bounds_large_n_band():
    # per-qubit band tightens to [1/4, 1/2] from above as n grows
    for n in (6, 10, 16):
        b = random_permutation_speedup_bounds(n)
        assert b.lower / n > 0.25
        assert b.upper / n > 0.5
        assert b.upper / n == pytest.approx(0.5, abs=0.01 if n >= 10 else 0.1)
    h = h_ordering_speedup_bounds(12)
    assert h.upper == pytest.approx(12.0)


def test_speedup_bounds_validation():
    with pytest.raises(ValueError):
        SpeedupBounds(2.0, 1.0)
    with pytest.raises(ValueError):
        SpeedupBounds(0.0, 1.0)
    b = SpeedupBounds(1.0, 2.0)
    assert b.contains(1.5)
    assert not b.contains(2.1)
    assert b.contains(2.1, slack=0.2)


def test_all_permutation_images():
    images = all_permutation_images(3)
    assert images.shape == (6, 3)
    assert np.array_equal(images[0], [0, 1, 2])
    assert np.array_equal(images[-1], [2, 1, 0])
    assert len({tuple(row) for row in images}) == 6
    with pytest.raises(ValueError):
        all_permutation_images(9)


@pytest.mark.parametrize(
    "d,square,cross",
    [(4, 48, 16), (8, 80640, 34560)],
)
def test_permutation_sum_identities_exact(d, square, cross):
    report = permutation_sum_identities(d)
    assert report.passed
    assert report.permutation_count == math.factorial(d)
    assert report.square_sum == square == report.expected_square_sum
    assert report.cross_sum == cross == report.expected_cross_sum
    # integer arithmetic end to end
    assert isinstance(report.square_sum, int)


def test_permutation_sum_identities_supported_dimensions():
    with pytest.raises(ValueError):
        permutation_sum_identities(2)
    with pytest.raises(ValueError):
        permutation_sum_identities(16)


def test_permutation_sum_identities_runtime():
    start = time.perf_counter()
    permutation_sum_identities(8)
    assert time.perf_counter() - start < 5.0


def test_envelope_states():
    two = two_level_state(2, 1e-3)
    assert np.allclose(two.probs, [0.999, 0.0, 0.0, 1e-3])
    shifted = two_level_state(2, 1e-3, tail_index=1)
    assert shifted.probs[1] == pytest.approx(1e-3)
    flat = flat_tail_state(2, 0.3)
    assert np.allclose(flat.probs, [0.7, 0.1, 0.1, 0.1])
    with pytest.raises(ValueError):
        two_level_state(2, 0.6)
    with pytest.raises(ValueError):
        two_level_state(2, 1e-3, tail_index=0)
    with pytest.raises(ValueError):
        flat_tail_state(1, 0.6)


def test_single_qubit_rate_closed_form():
    # n=1: <Z~> = -2*delta, so rate = -16*gamma*(1-delta)^2
    for delta in (0.01, 0.2, 0.5):
        rate = log_infidelity_rate(two_level_state(1, delta))
        assert rate.value == pytest.approx(-16.0 * (1.0 - delta) ** 2)
    rate = log_infidelity_rate(two_level_state(1, 0.01), gamma=2.5)
    assert rate.value == pytest.approx(-2.5 * 16.0 * 0.99**2)


def test_rate_is_shift_covariant():
    # relabeling the register relabels the argmax but not the rate
    rng = np.random.default_rng(14)
    probs = rng.dirichlet(np.ones(8))
    state = DiagonalState(3, probs)
    base = log_infidelity_rate(state).value
    for _ in range(20):
        perm = sample_uniform_permutation(rng, 8)
        hop = log_infidelity_rate(apply_permutation(state, perm)).value
        # not equal in general (different <Z> pattern), but both finite
        assert np.isfinite(hop)
    # moving the whole state by a bit flip on every qubit preserves zsum
    flipped = DiagonalState(3, probs[::-1].copy())
    assert log_infidelity_rate(flipped).value == pytest.approx(base)


def test_rate_rejects_collapsed_state():
    with pytest.raises(ValueError):
        log_infidelity_rate(DiagonalState.pure(2, 1))


def test_permuted_rate_closed_forms():
    # frozen: n=2 envelopes at delta -> 0 are -64/3 and -128/9
    assert two_level_permuted_rate(2, 1e-12) == pytest.approx(-64.0 / 3.0)
    assert flat_tail_permuted_rate(2, 1e-12) == pytest.approx(-128.0 / 9.0)
    assert two_level_permuted_rate(3, 1e-12) == pytest.approx(-192.0 / 7.0)
    assert flat_tail_permuted_rate(3, 1e-12) == pytest.approx(
        -12.0 * 64.0 / 49.0
    )
    # exact quadratic delta dependence
    assert two_level_permuted_rate(2, 0.3) == pytest.approx(-64.0 / 3.0 * 0.49)


def test_enumeration_matches_envelope_closed_forms():
    """Brute-force group averages reproduce the closed forms at any
    infidelity, not just in the small-delta limit."""
    for n in (1, 2, 3):
        for delta in (1e-3, 0.2, 0.45):
            two = permutation_averaged_rate(two_level_state(n, delta))
            assert two.value == pytest.approx(
                two_level_permuted_rate(n, delta), rel=1e-12
            )
            flat = permutation_averaged_rate(flat_tail_state(n, delta))
            assert flat.value == pytest.approx(
                flat_tail_permuted_rate(n, delta), rel=1e-12
            )


def test_enumeration_average_sits_inside_envelopes():
    rng = np.random.default_rng(77)
    for n in (2, 3):
        for _ in range(25):
            probs = rng.dirichlet(np.full(2**n, 0.7))
            state = DiagonalState(n, probs)
            if state.infidelity() <= 0.0:
                continue
            avg = permutation_averaged_rate(state).value
            fast, slow = permutation_averaged_rate(
                state, mode="closed_form_bounds"
            )
            assert fast.value <= avg + 1e-12
            assert avg <= slow.value + 1e-12


def test_permutation_averaged_rate_validation():
    with pytest.raises(ValueError):
        permutation_averaged_rate(two_level_state(2, 0.1), mode="mc")
    with pytest.raises(ValueError):
        permutation_averaged_rate(DiagonalState.pure(2, 0))
    with pytest.raises(ValueError):
        permutation_averaged_rate(two_level_state(4, 0.1))
    # closed-form bounds stay available above the enumeration cap
    fast, slow = permutation_averaged_rate(
        two_level_state(4, 0.1), mode="closed_form_bounds"
    )
    assert fast.value < slow.value < 0.0


def test_gamma_scales_every_rate():
    state = flat_tail_state(2, 0.2)
    assert log_infidelity_rate(state, gamma=3.0).value == pytest.approx(
        3.0 * log_infidelity_rate(state).value
    )
    assert permutation_averaged_rate(state, gamma=3.0).value == pytest.approx(
        3.0 * permutation_averaged_rate(state).value
    )


def test_linear_trajectory_state_single_qubit():
    # lambda proportional to exp(2*sqrt(2*gamma)*R*z)
    R = np.array([0.25])
    state = linear_trajectory_state(R, 1)
    c = 2.0 * math.sqrt(2.0)
    expected = np.array([math.exp(c * 0.25), math.exp(-c * 0.25)])
    expected /= expected.sum()
    assert np.allclose(state.probs, expected, atol=1e-15)
    with pytest.raises(ValueError):
        linear_trajectory_state(np.zeros(3), 2)


def test_linear_trajectory_state_matches_exact_integrator():
    """From the maximally mixed start with no control, the exact
    integrator's final state is a function of the accumulated record
    alone.  Strong cross-check between the two implementations."""
    params = SimulationParams(n=2, max_time=0.3, stop_epsilon=1e-9)
    for seed in (1, 2, 3):
        res = simulate_trajectory(
            params, no_control(), [], seed, run_full_time=True
        )
        replay = linear_trajectory_state(res.records.R, 2)
        assert np.allclose(replay.probs, res.final_state.probs, atol=1e-10)


def test_mean_random_hamming_distance():
    assert mean_random_hamming_distance(1) == 0.5
    assert mean_random_hamming_distance(4) == 2.0
    rng = np.random.default_rng(2)
    pairs = rng.integers(0, 16, size=(20000, 2))
    sampled = np.mean([bin(a ^ b).count("1") for a, b in pairs])
    assert sampled == pytest.approx(2.0, abs=0.05)
    with pytest.raises(ValueError):
        mean_random_hamming_distance(0)
