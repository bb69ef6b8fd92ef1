"""Dynamic programming tests: tree structure, DP vs exhaustive search, policies."""

from fractions import Fraction

import numpy as np
import pytest

from macfb.dp import (
    backward_dp,
    backward_dp_rational,
    brute_force_rational,
    brute_force_unstructured,
    build_reachable_tree,
    check_belief_recursion,
    constant_policy,
    evaluate_policy_exact,
    policy_from_fn,
    simulate_monte_carlo,
)
from macfb.errors import BudgetExceeded, IncompletePolicy
from macfb.model import (
    JointBelief,
    ProblemSpec,
    all_joint_actions,
    identity_pair_channel,
    random_channel,
    uniform_channel,
    validate_channel,
    xor_bsc_channel,
)

BIN = ProblemSpec(2, 2, 2, 2, 2)


def test_tree_root_and_transition_stochasticity():
    ch = xor_bsc_channel(BIN, 0.1)
    tree = build_reachable_tree(BIN, ch, 2)
    assert np.allclose(tree.levels[0].beliefs[0], 0.25)
    for t in range(2):
        sums = tree.trans_prob[t].sum(axis=2)
        assert np.allclose(sums, 1.0, atol=1e-12)


def test_tree_dedup_uniform_channel():
    # an uninformative channel never moves the posterior
    tree = build_reachable_tree(BIN, uniform_channel(BIN), 3)
    assert tree.level_sizes() == [1, 1, 1, 1]


def test_tree_pruning_identity_channel():
    spec = ProblemSpec(2, 2, 4, 2, 2)
    tree = build_reachable_tree(spec, identity_pair_channel(spec), 1)
    assert tree.pruned_branches > 0
    # pruned outputs carry zero probability, the rest still sum to one
    assert np.allclose(tree.trans_prob[0].sum(axis=2), 1.0, atol=1e-12)


def test_tree_node_cap():
    ch = random_channel(BIN, 3)
    with pytest.raises(BudgetExceeded):
        build_reachable_tree(BIN, ch, 3, node_cap=10)


def test_dp_uniform_channel_value():
    """No information ever flows, so the error stays at 1 - 1/(m1*m2)."""
    tree = build_reachable_tree(BIN, uniform_channel(BIN), 2)
    _, ann = backward_dp(tree)
    assert ann.root_value == pytest.approx(0.75, abs=1e-15)


def test_dp_identity_pair_one_shot():
    """A channel that reveals (x1, x2) resolves both messages in one use."""
    spec = ProblemSpec(2, 2, 4, 2, 2)
    tree = build_reachable_tree(spec, identity_pair_channel(spec), 1)
    _, ann = backward_dp(tree)
    assert ann.root_value == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("p", [0.05, 0.2])
@pytest.mark.parametrize("horizon", [1, 2])
def test_dp_matches_brute_force_xor(p, horizon):
    ch = xor_bsc_channel(BIN, p)
    tree = build_reachable_tree(BIN, ch, horizon)
    _, ann = backward_dp(tree)
    bf = brute_force_unstructured(BIN, ch, horizon)
    assert abs(ann.root_value - bf.value) < 1e-12


def test_dp_matches_brute_force_random():
    ch = random_channel(BIN, 101)
    tree = build_reachable_tree(BIN, ch, 2)
    _, ann = backward_dp(tree)
    bf = brute_force_unstructured(BIN, ch, 2)
    assert abs(ann.root_value - bf.value) < 1e-12


def test_dp_value_monotone_in_horizon():
    """Extra channel uses never hurt: a constant encoder pair is a no-op."""
    for seed in range(5):
        ch = random_channel(BIN, 200 + seed)
        vals = []
        for n in (1, 2, 3):
            tree = build_reachable_tree(BIN, ch, n)
            _, ann = backward_dp(tree)
            vals.append(ann.root_value)
        assert vals[0] >= vals[1] - 1e-12
        assert vals[1] >= vals[2] - 1e-12


def test_dp_invariant_under_alphabet_relabeling():
    """Permuting input or output labels only relabels encoder functions."""
    ch = random_channel(BIN, 55)
    base = backward_dp(build_reachable_tree(BIN, ch, 2))[1].root_value
    ch_in = validate_channel(BIN, ch.q[::-1, :, :])   # swap user-1 symbols
    ch_out = validate_channel(BIN, ch.q[:, :, ::-1])  # swap output symbols
    v_in = backward_dp(build_reachable_tree(BIN, ch_in, 2))[1].root_value
    v_out = backward_dp(build_reachable_tree(BIN, ch_out, 2))[1].root_value
    assert base == pytest.approx(v_in, abs=1e-12)
    assert base == pytest.approx(v_out, abs=1e-12)


def test_dp_tie_break_lexicographic():
    """On the uninformative channel every action ties; index 0 must win."""
    tree = build_reachable_tree(BIN, uniform_channel(BIN), 1)
    policy, _ = backward_dp(tree)
    assert policy.action_index_at(0, JointBelief.uniform(2, 2)) == 0


def test_policy_evaluation_matches_dp_value():
    ch = random_channel(BIN, 77)
    tree = build_reachable_tree(BIN, ch, 2)
    policy, ann = backward_dp(tree)
    ev = evaluate_policy_exact(tree, policy)
    assert ev.value == pytest.approx(ann.root_value, abs=1e-12)
    assert ev.stage_value == 0.0


def test_policy_from_fn_and_incomplete():
    ch = xor_bsc_channel(BIN, 0.1)
    tree = build_reachable_tree(BIN, ch, 2)
    pol = constant_policy(tree, 3)
    assert pol.action_index_at(0, JointBelief.uniform(2, 2)) == 3
    stale = policy_from_fn(tree, lambda t, pi: 0)
    del stale.assignment[(0, tree.levels[0].keys[0])]
    with pytest.raises(IncompletePolicy):
        stale.action_index_at(0, JointBelief.uniform(2, 2))
    with pytest.raises(ValueError):
        policy_from_fn(tree, lambda t, pi: 99)


def test_monte_carlo_reproducible_and_consistent():
    ch = xor_bsc_channel(BIN, 0.1)
    tree = build_reachable_tree(BIN, ch, 2)
    policy, ann = backward_dp(tree)
    r1 = simulate_monte_carlo(tree, policy, 20000, seed=7)
    r2 = simulate_monte_carlo(tree, policy, 20000, seed=7)
    assert r1.num_errors == r2.num_errors
    assert abs(r1.error_rate - ann.root_value) <= max(r1.ci_half_width, 3e-3)


def test_brute_force_counts_and_cap():
    ch = xor_bsc_channel(BIN, 0.1)
    bf = brute_force_unstructured(BIN, ch, 1)
    assert bf.num_pairs == 16
    with pytest.raises(BudgetExceeded):
        brute_force_unstructured(BIN, ch, 2, strategy_cap=100)


def test_rational_dp_matches_float():
    ch = xor_bsc_channel(BIN, 0.25)  # entries exact in binary
    res = backward_dp_rational(BIN, ch, 2)
    tree = build_reachable_tree(BIN, ch, 2)
    _, ann = backward_dp(tree)
    assert abs(float(res.value) - ann.root_value) < 1e-12
    # the float tree and the exact recursion agree on node counts
    assert res.nodes_per_level == tree.level_sizes()


def test_rational_dp_equals_rational_brute_force():
    ch = xor_bsc_channel(BIN, 0.25)
    dp_val = backward_dp_rational(BIN, ch, 1).value
    bf_val = brute_force_rational(BIN, ch, 1)
    assert dp_val == bf_val  # exact Fraction equality
    assert isinstance(dp_val, Fraction)


def test_belief_recursion_checker():
    for seed in (1, 2):
        ch = random_channel(BIN, 400 + seed)
        dev = check_belief_recursion(BIN, ch, horizon=4, num_histories=50, seed=seed)
        assert dev < 1e-12
