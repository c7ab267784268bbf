"""Control protocols, Hamming ordering, retrodiction, cycle files."""

import numpy as np
import pytest

from regreadout import (
    ControlLog,
    ControlPolicy,
    DiagonalState,
    Permutation,
    SimulationParams,
    apply_permutation,
    compose,
    fixed_cycle_policy,
    h_order,
    h_order_targets,
    h_ordering_policy,
    hamming_distance,
    leading_rotation,
    no_control,
    policy_step,
    random_permutation_policy,
    read_cycle_file,
    retrodict,
    simulate_trajectory,
)


def test_policy_constructors():
    assert no_control().kind == "none"
    assert h_ordering_policy().kind == "h_ordering"
    assert random_permutation_policy().kind == "random_permutation"
    fc = fixed_cycle_policy([leading_rotation(4)])
    assert fc.kind == "fixed_cycle"
    assert len(fc.cycle) == 1


def test_policy_validation():
    with pytest.raises(ValueError):
        ControlPolicy("greedy")
    with pytest.raises(ValueError):
        ControlPolicy("fixed_cycle")
    with pytest.raises(ValueError):
        ControlPolicy("none", (leading_rotation(4),))
    with pytest.raises(ValueError):
        fixed_cycle_policy([leading_rotation(4), Permutation.identity(8)])


def test_h_order_targets_frozen():
    assert np.array_equal(h_order_targets(1), [0, 1])
    assert np.array_equal(h_order_targets(2), [0, 3, 1, 2])
    assert np.array_equal(h_order_targets(3), [0, 7, 3, 5, 6, 1, 2, 4])


def test_h_order_targets_distance_profile():
    # after the leader at 0, targets climb in Hamming distance from the
    # all-ones vertex, so runner-up population crowds as far from the
    # leader as possible
    for n in (2, 3, 4):
        targets = h_order_targets(n)
        all_ones = (1 << n) - 1
        dists = [hamming_distance(int(v), all_ones) for v in targets[1:]]
        assert dists == sorted(dists)
        assert sorted(targets.tolist()) == list(range(1 << n))


def test_h_order_moves_populations_to_targets():
    probs = np.array([0.1, 0.2, 0.4, 0.05, 0.15, 0.03, 0.02, 0.05])
    state = DiagonalState(3, probs)
    ordered = apply_permutation(state, h_order(state))
    ranked = np.sort(probs)[::-1]
    assert np.allclose(ordered.probs[h_order_targets(3)], ranked)
    assert ordered.argmax_index() == 0
    # runner-up sits at the all-ones vertex
    assert ordered.probs[7] == pytest.approx(0.2)


def test_h_order_of_ordered_state_is_identity():
    probs = np.zeros(8)
    probs[h_order_targets(3)[:5]] = np.array([0.4, 0.3, 0.12, 0.1, 0.08])
    state = DiagonalState(3, probs)
    assert np.array_equal(h_order(state).image, np.arange(8))


def test_h_order_tie_break_is_stable():
    state = DiagonalState(1, np.array([0.5, 0.5]))
    assert np.array_equal(h_order(state).image, [0, 1])


def test_policy_step_none_and_cycle():
    state = DiagonalState.maximally_mixed(2)
    rng = np.random.default_rng(0)
    assert np.array_equal(
        policy_step(no_control(), state, 0, rng).image, np.arange(4)
    )
    rot = leading_rotation(4)
    fc = fixed_cycle_policy([rot, Permutation.identity(4)])
    assert np.array_equal(policy_step(fc, state, 0, rng).image, rot.image)
    assert np.array_equal(policy_step(fc, state, 1, rng).image, np.arange(4))
    assert np.array_equal(policy_step(fc, state, 2, rng).image, rot.image)
    with pytest.raises(ValueError):
        policy_step(fc, DiagonalState.maximally_mixed(3), 0, rng)


def test_policy_step_h_ordering_tracks_state():
    state = DiagonalState(2, np.array([0.1, 0.6, 0.1, 0.2]))
    rng = np.random.default_rng(0)
    perm = policy_step(h_ordering_policy(), state, 0, rng)
    assert np.array_equal(perm.image, h_order(state).image)
    out = apply_permutation(state, perm)
    assert out.argmax_index() == 0
    assert out.probs[3] == pytest.approx(0.2)


def test_policy_step_random_permutation_uses_control_stream():
    state = DiagonalState.maximally_mixed(2)
    a = policy_step(random_permutation_policy(), state, 0, np.random.default_rng(8))
    b = policy_step(random_permutation_policy(), state, 0, np.random.default_rng(8))
    assert np.array_equal(a.image, b.image)
    assert sorted(a.image.tolist()) == [0, 1, 2, 3]


def test_retrodict_inverts_control_frame():
    rng = np.random.default_rng(31)
    for _ in range(100):
        p = Permutation(rng.permutation(8))
        q = Permutation(rng.permutation(8))
        log = ControlLog(cumulative=compose(q, p))
        for start in range(8):
            final = int(compose(q, p).image[start])
            assert retrodict(final, log) == start


@pytest.mark.parametrize(
    "policy",
    [
        no_control(),
        h_ordering_policy(),
        random_permutation_policy(),
        fixed_cycle_policy([leading_rotation(4)]),
    ],
    ids=["none", "h_ordering", "random_permutation", "fixed_cycle"],
)
def test_trajectory_retrodiction_recovers_prepared_index(policy):
    """A register prepared in a basis state stays there in the control
    frame, so undoing the frame names the prepared index exactly."""
    params = SimulationParams(n=2, max_time=0.03)
    for k in range(4):
        res = simulate_trajectory(
            params,
            policy,
            [],
            master_seed=50 + k,
            initial_state=DiagonalState.pure(2, k),
            run_full_time=True,
        )
        log = ControlLog(cumulative=res.cumulative_control)
        assert retrodict(res.final_index, log) == k


def test_read_cycle_file(tmp_path):
    path = tmp_path / "cycle.txt"
    path.write_text("# comment\n\n2 0 1 3\n0 1 2 3\n")
    perms = read_cycle_file(path)
    assert len(perms) == 2
    assert np.array_equal(perms[0].image, [2, 0, 1, 3])
    assert np.array_equal(perms[1].image, np.arange(4))


def test_read_cycle_file_dimension_check(tmp_path):
    path = tmp_path / "cycle.txt"
    path.write_text("0 1\n0 2 1\n")
    with pytest.raises(ValueError, match="line 2"):
        read_cycle_file(path, dimension=2)


def test_read_cycle_file_malformed(tmp_path):
    bad_token = tmp_path / "a.txt"
    bad_token.write_text("0 x 2\n")
    with pytest.raises(ValueError, match="line 1"):
        read_cycle_file(bad_token)
    not_bijection = tmp_path / "b.txt"
    not_bijection.write_text("0 1 2 3\n0 0 1 2\n")
    with pytest.raises(ValueError, match="line 2"):
        read_cycle_file(not_bijection)
    empty = tmp_path / "c.txt"
    empty.write_text("# nothing here\n")
    with pytest.raises(ValueError, match="no permutations"):
        read_cycle_file(empty)
