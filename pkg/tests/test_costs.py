"""Cost functional tests: frozen values, telescoping identities, fixed points."""

import numpy as np
import pytest

from macfb.costs import (
    CostFunctional,
    SimplexGrid,
    check_telescoping,
    cost_conditional_entropy,
    cost_ejs,
    cost_joint_entropy,
    fixed_point_solve,
)
from macfb.dp import backward_dp, build_reachable_tree, constant_policy
from macfb.information import binary_entropy, entropy
from macfb.model import (
    Channel,
    JointBelief,
    ProblemSpec,
    all_joint_actions,
    identity_encoders,
    identity_pair_channel,
    random_channel,
    uniform_channel,
    validate_channel,
    xor_bsc_channel,
)

BIN = ProblemSpec(2, 2, 2, 2, 2)
QUAD = ProblemSpec(2, 2, 4, 2, 2)


def _random_belief(rng, m1, m2):
    p = rng.dirichlet(np.ones(m1 * m2)).reshape(m1, m2)
    return JointBelief(p)


def test_costs_vanish_on_uninformative_channel():
    ch = uniform_channel(BIN)
    pi = JointBelief.uniform(2, 2)
    for act in all_joint_actions(BIN):
        assert cost_joint_entropy(pi, act, ch) == pytest.approx(0.0, abs=1e-15)
        assert cost_conditional_entropy(pi, act, ch, 1) == pytest.approx(0.0, abs=1e-15)
        assert cost_ejs(pi, act, ch).value == pytest.approx(0.0, abs=1e-15)


def test_joint_cost_identity_channel():
    """One perfectly revealing use extracts both uniform message bits."""
    ch = identity_pair_channel(QUAD)
    pi = JointBelief.uniform(2, 2)
    e = identity_encoders(QUAD)
    assert cost_joint_entropy(pi, e, ch) == pytest.approx(-2.0, abs=1e-12)
    assert cost_conditional_entropy(pi, e, ch, 1) == pytest.approx(-1.0, abs=1e-12)
    assert cost_conditional_entropy(pi, e, ch, 2) == pytest.approx(-1.0, abs=1e-12)


def test_joint_and_conditional_cost_xor_frozen():
    ch = xor_bsc_channel(BIN, 0.1)
    pi = JointBelief.uniform(2, 2)
    e = identity_encoders(BIN)
    expected = -(1.0 - binary_entropy(0.1))  # -0.5310044064107188 bits
    assert cost_joint_entropy(pi, e, ch) == pytest.approx(expected, abs=1e-12)
    # given the other message, Z is a binary-symmetric observation of yours
    assert cost_conditional_entropy(pi, e, ch, 1) == pytest.approx(expected, abs=1e-12)
    assert cost_conditional_entropy(pi, e, ch, 2) == pytest.approx(expected, abs=1e-12)


def test_ejs_against_direct_enumeration():
    """Re-derive the EJS value with an independent textbook-style loop."""
    ch = xor_bsc_channel(BIN, 0.1)
    pi = JointBelief.uniform(2, 2)
    e = identity_encoders(BIN)
    rows = {}
    for w1 in range(2):
        for w2 in range(2):
            rows[(w1, w2)] = ch.q[e.e1.mapping[w1], e.e2.mapping[w2]]
    total = 0.0
    for w, qw in rows.items():
        mix = np.zeros(2)
        for v, qv in rows.items():
            if v != w:
                mix += (0.25 / 0.75) * qv
        total += 0.25 * float(np.sum(qw * np.log2(qw / mix)))
    got = cost_ejs(pi, e, ch)
    assert got.value == pytest.approx(-total, abs=1e-12)
    assert not got.overflow
    assert got.value == pytest.approx(-0.89962, abs=1e-4)


def test_ejs_point_mass_skip():
    ch = xor_bsc_channel(BIN, 0.1)
    pi = JointBelief(np.array([[1.0, 0.0], [0.0, 0.0]]))
    res = cost_ejs(pi, identity_encoders(BIN), ch)
    assert res.value == 0.0 and not res.overflow


def test_ejs_overflow_saturates():
    q = np.zeros((2, 2, 2))
    q[0, 0] = [1.0, 0.0]          # this pair's law escapes the others' support
    q[0, 1] = q[1, 0] = q[1, 1] = [0.0, 1.0]
    ch = validate_channel(BIN, q)
    res = cost_ejs(JointBelief.uniform(2, 2), identity_encoders(BIN), ch)
    assert res.overflow
    assert np.isfinite(res.value)
    assert res.value <= -0.25 * 1e6  # the saturated term, weighted by pi(w)


def test_mutual_information_rewrite_identity():
    """c_joint(pi,e) must equal -(H(Z) - sum_w pi(w) H(Q(.|e(w))))."""
    rng = np.random.default_rng(5)
    acts = all_joint_actions(BIN)
    for seed in range(3):
        ch = random_channel(BIN, 600 + seed)
        for _ in range(10):
            pi = _random_belief(rng, 2, 2)
            act = acts[int(rng.integers(len(acts)))]
            like = np.stack(
                [ch.q[act.e1.mapping[w1], act.e2.mapping[w2]] for w1 in range(2) for w2 in range(2)]
            )
            pz = pi.p.ravel() @ like
            h_rows = sum(pi.p.ravel()[k] * entropy(like[k]) for k in range(4))
            expected = -(entropy(pz) - h_rows)
            assert cost_joint_entropy(pi, act, ch) == pytest.approx(expected, abs=1e-12)


def test_costs_are_nonpositive_and_bounded():
    rng = np.random.default_rng(6)
    acts = all_joint_actions(BIN)
    for seed in range(3):
        ch = random_channel(BIN, 700 + seed)
        for _ in range(10):
            pi = _random_belief(rng, 2, 2)
            act = acts[int(rng.integers(len(acts)))]
            cj = cost_joint_entropy(pi, act, ch)
            cc = cost_conditional_entropy(pi, act, ch, 1)
            ce = cost_ejs(pi, act, ch).value
            assert -2.0 - 1e-12 <= cj <= 1e-12
            assert -1.0 - 1e-12 <= cc <= 1e-12
            assert ce <= 1e-12


@pytest.mark.parametrize(
    "kind",
    ["joint_entropy_drift", "conditional_entropy_drift_user1", "conditional_entropy_drift_user2", "ejs"],
)
def test_telescoping_identity(kind):
    ch = xor_bsc_channel(BIN, 0.1)
    tree = build_reachable_tree(BIN, ch, 3)
    policy, _ = backward_dp(tree)
    res = check_telescoping(tree, policy, CostFunctional(kind))
    assert res.abs_diff < 1e-10
    const = constant_policy(tree, 6)  # e1=(0,1), e2=(1,0)
    res2 = check_telescoping(tree, const, CostFunctional(kind))
    assert res2.abs_diff < 1e-10


def test_telescoping_uniform_channel_joint():
    tree = build_reachable_tree(BIN, uniform_channel(BIN), 2)
    policy = constant_policy(tree, 0)
    res = check_telescoping(tree, policy, CostFunctional("joint_entropy_drift"))
    assert res.lhs == pytest.approx(2.0, abs=1e-12)
    assert res.rhs == pytest.approx(2.0, abs=1e-12)


def test_telescoping_weighted_kind():
    ch = random_channel(BIN, 31)
    tree = build_reachable_tree(BIN, ch, 2)
    policy, _ = backward_dp(tree)
    cost = CostFunctional(
        "weighted",
        weights={"joint_entropy_drift": 0.5, "conditional_entropy_drift_user1": 1.5},
    )
    res = check_telescoping(tree, policy, cost)
    assert res.abs_diff < 1e-10


def test_telescoping_rejects_terminal_only_kind():
    tree = build_reachable_tree(BIN, xor_bsc_channel(BIN, 0.1), 1)
    policy, _ = backward_dp(tree)
    with pytest.raises(ValueError):
        check_telescoping(tree, policy, CostFunctional("error_probability"))


def test_cost_functional_validation():
    with pytest.raises(ValueError):
        CostFunctional("nonsense")
    with pytest.raises(ValueError):
        CostFunctional("weighted")
    with pytest.raises(ValueError):
        CostFunctional("weighted", weights={"ejs": 1.0})
    with pytest.raises(ValueError):
        CostFunctional("joint_entropy_drift", weights={"joint_entropy_drift": 1.0})


def test_simplex_grid_counts_and_points():
    g = SimplexGrid(4, 3)
    assert len(g) == 15  # C(6, 2)
    assert all(row.sum() == 4 for row in g.points)
    # uniform is an exact grid point when dim divides resolution
    g4 = SimplexGrid(20, 4)
    idx, err = g4.project_index(np.full(4, 0.25))
    assert err == 0.0
    assert tuple(g4.points[idx]) == (5, 5, 5, 5)


def test_grid_projection_against_exhaustive_oracle():
    rng = np.random.default_rng(9)
    g = SimplexGrid(5, 3)
    for _ in range(50):
        p = rng.dirichlet(np.ones(3))
        idx, err = g.project_index(p)
        dists = np.abs(g.points / 5 - p).sum(axis=1)
        best = dists.min()
        assert err == pytest.approx(best, abs=1e-12)
        # lexicographically smallest among the L1-minimizers
        ties = [tuple(g.points[i]) for i in range(len(g)) if dists[i] < best + 1e-12]
        assert tuple(g.points[idx]) == min(ties)


def test_fixed_point_uniform_channel_average():
    grid = SimplexGrid(8, 4)
    res = fixed_point_solve(
        BIN, uniform_channel(BIN), CostFunctional("joint_entropy_drift"), grid, mode="average"
    )
    assert res.converged
    assert res.gain == pytest.approx(0.0, abs=1e-10)
    assert np.abs(res.values).max() < 1e-10
    assert res.gain_near_zero


def test_fixed_point_identity_channel_discounted():
    """Resolve 2 uniform bits in one step, then sit at point masses forever."""
    grid = SimplexGrid(20, 4)
    res = fixed_point_solve(
        QUAD,
        identity_pair_channel(QUAD),
        CostFunctional("joint_entropy_drift"),
        grid,
        mode="discounted",
        discount=0.9,
    )
    uniform_idx, _ = grid.project_index(np.full(4, 0.25))
    assert res.converged
    assert res.values[uniform_idx] == pytest.approx(-2.0, abs=0.05)


def test_fixed_point_identity_channel_average_gain_zero():
    grid = SimplexGrid(10, 4)
    res = fixed_point_solve(
        QUAD,
        identity_pair_channel(QUAD),
        CostFunctional("joint_entropy_drift"),
        grid,
        mode="average",
        max_iter=3000,
    )
    assert abs(res.gain) < 1e-6


def test_fixed_point_residuals_contract_at_discount_rate():
    grid = SimplexGrid(10, 4)
    res = fixed_point_solve(
        BIN,
        xor_bsc_channel(BIN, 0.1),
        CostFunctional("joint_entropy_drift"),
        grid,
        mode="discounted",
        discount=0.8,
    )
    assert res.converged
    r = res.residuals
    for i in range(1, len(r) - 1):
        assert r[i + 1] <= 0.8 * r[i] + 1e-12
        assert r[i + 1] <= r[i] + 1e-15


def test_fixed_point_rejects_error_probability():
    grid = SimplexGrid(4, 4)
    with pytest.raises(ValueError):
        fixed_point_solve(
            BIN, xor_bsc_channel(BIN, 0.1), CostFunctional("error_probability"), grid
        )
