"""Acceptance battery.

Each test is one acceptance criterion, prints exactly one PASS/FAIL line
on the real stdout (pytest capture is suspended around the print so the
line survives a plain `pytest -v` run), and enforces the stated tolerance
and runtime budget.
"""

import contextlib
import time

import numpy as np
import pytest

from macfb.capacity import (
    LambdaWeights,
    check_factorization,
    check_kernel_independence,
    evaluate_In,
    full_history_In,
    search_Cn_lambda,
)
from macfb.costs import CostFunctional, SimplexGrid, check_telescoping, fixed_point_solve
from macfb.dp import (
    backward_dp,
    backward_dp_rational,
    brute_force_rational,
    brute_force_unstructured,
    build_reachable_tree,
    constant_policy,
    evaluate_policy_exact,
    simulate_monte_carlo,
)
from macfb.model import (
    DENOM_MIN,
    ProblemSpec,
    action_likelihood,
    all_joint_actions,
    identity_pair_channel,
    random_channel,
    uniform_channel,
    xor_bsc_channel,
)

SPEC = ProblemSpec(2, 2, 2, 2, 2)
SPEC4 = ProblemSpec(2, 2, 4, 2, 2)

# the shared small-channel battery: three crossover levels plus three
# seeded asymmetric draws
CHANNEL_SET = (
    [(f"xor-bsc({p})", xor_bsc_channel(SPEC, p)) for p in (0.05, 0.1, 0.2)]
    + [(f"random({s})", random_channel(SPEC, s)) for s in (101, 102, 103)]
)

LAMBDAS = [
    LambdaWeights(1, 0, 0),
    LambdaWeights(0, 1, 0),
    LambdaWeights(0, 0, 1),
    LambdaWeights(1, 1, 1),
]


_CAPMAN = None


@pytest.fixture(autouse=True)
def _expose_capture_manager(request):
    global _CAPMAN
    _CAPMAN = request.config.pluginmanager.getplugin("capturemanager")
    yield


def _announce(line: str):
    if _CAPMAN is not None:
        _CAPMAN.suspend_global_capture(in_=False)
    try:
        print(line, flush=True)
    finally:
        if _CAPMAN is not None:
            _CAPMAN.resume_global_capture()


@contextlib.contextmanager
def _criterion(label: str, budget_s: float):
    start = time.time()
    try:
        yield
    except BaseException:
        _announce(f"{label}: FAIL")
        raise
    elapsed = time.time() - start
    _announce(f"{label}: PASS ({elapsed:.1f}s)")
    assert elapsed < budget_s, f"{label} exceeded its {budget_s}s budget: {elapsed:.1f}s"


def test_criterion_1_dp_matches_unstructured_oracle():
    with _criterion("acceptance 1/9 structured dp equals unstructured optimum", 60):
        for name, ch in CHANNEL_SET:
            for n in (1, 2):
                tree = build_reachable_tree(SPEC, ch, n)
                _, annotation = backward_dp(tree)
                oracle = brute_force_unstructured(SPEC, ch, n)
                assert abs(annotation.root_value - oracle.value) < 1e-12, (name, n)
        # exact arithmetic: the same equality with no tolerance at all
        for ch, n in ((xor_bsc_channel(SPEC, 0.1), 1), (xor_bsc_channel(SPEC, 0.1), 2),
                      (random_channel(SPEC, 101), 1)):
            assert backward_dp_rational(SPEC, ch, n).value == brute_force_rational(SPEC, ch, n)


def test_criterion_2_recursive_equals_direct_posterior():
    with _criterion("acceptance 2/9 recursive posterior equals direct bayes", 30):
        acts = all_joint_actions(SPEC)
        for name, ch in CHANNEL_SET:
            like = np.stack([action_likelihood(ch, a).reshape(-1, ch.z_size) for a in acts])
            K = like.shape[1]
            # every positive-probability (action, output) history up to n=4:
            # R renormalizes each step, D normalizes the raw product once
            renorm = np.full((1, K), 1.0 / K)
            direct = np.full((1, K), 1.0 / K)
            worst = 0.0
            for _t in range(4):
                rn = (renorm[:, None, :, None] * like[None, :, :, :]).transpose(0, 1, 3, 2).reshape(-1, K)
                dn = (direct[:, None, :, None] * like[None, :, :, :]).transpose(0, 1, 3, 2).reshape(-1, K)
                mass = rn.sum(axis=1)
                keep = mass > DENOM_MIN
                renorm = rn[keep] / mass[keep][:, None]
                direct = dn[keep]
                settled = direct / direct.sum(axis=1)[:, None]
                worst = max(worst, float(np.abs(renorm - settled).max()))
            assert worst < 1e-12, (name, worst)


def _three_policies(tree):
    policy, _ = backward_dp(tree)
    return [policy, constant_policy(tree, 6), constant_policy(tree, 9)]


def test_criterion_3_private_public_factorization():
    with _criterion("acceptance 3/9 private-by-private factorization of input laws", 60):
        for seed in (201, 202, 203, 204, 205):
            ch = random_channel(SPEC, seed)
            tree = build_reachable_tree(SPEC, ch, 3)
            for policy in _three_policies(tree):
                report = check_factorization(SPEC, policy, ch, 3)
                assert report.passed and report.max_deviation < 1e-12, seed


def test_criterion_4_stage_expectations_equal_history_information():
    with _criterion("acceptance 4/9 stage-function expectations equal history-based information", 120):
        for name, ch in CHANNEL_SET:
            tree = build_reachable_tree(SPEC, ch, 4)
            for policy in _three_policies(tree):
                for lam in LAMBDAS:
                    a = evaluate_In(SPEC, policy, ch, 4, lam)
                    b = full_history_In(SPEC, policy, ch, 4, lam)
                    for x, y in zip(
                        a.per_t_i1 + a.per_t_i2 + a.per_t_i3 + [a.in_lambda],
                        b.per_t_i1 + b.per_t_i2 + b.per_t_i3 + [b.in_lambda],
                    ):
                        assert abs(x - y) < 1e-10, (name, lam.as_tuple())


def test_criterion_5_kernel_policy_independence():
    with _criterion("acceptance 5/9 state transition kernel independent of policy", 60):
        for name, ch in CHANNEL_SET:
            tree = build_reachable_tree(SPEC, ch, 3)
            report = check_kernel_independence(SPEC, _three_policies(tree), ch, 3)
            assert report.max_deviation < 1e-12, name
            assert report.num_checks > 0


def test_criterion_6_telescoping_identities():
    with _criterion("acceptance 6/9 telescoping identities for entropy and ejs costs", 60):
        kinds = (
            "joint_entropy_drift",
            "conditional_entropy_drift_user1",
            "conditional_entropy_drift_user2",
            "ejs",
        )
        for name, ch in CHANNEL_SET:
            tree = build_reachable_tree(SPEC, ch, 4)
            for kind in kinds:
                cost = CostFunctional(kind)
                tuned, _ = backward_dp(tree, cost)
                for policy in (tuned, constant_policy(tree, 6)):
                    check = check_telescoping(tree, policy, cost)
                    assert check.abs_diff < 1e-10, (name, kind)


def test_criterion_7_closed_form_spot_values():
    with _criterion("acceptance 7/9 closed-form spot values", 5):
        ch_u = uniform_channel(SPEC)
        tree_u = build_reachable_tree(SPEC, ch_u, 2)
        _, ann = backward_dp(tree_u)
        assert abs(ann.root_value - 0.75) < 1e-12
        bd = evaluate_In(SPEC, constant_policy(tree_u, 0), ch_u, 2, LambdaWeights(1, 1, 1))
        assert max(map(abs, bd.per_t_i1 + bd.per_t_i2 + bd.per_t_i3)) < 1e-12

        ch_id = identity_pair_channel(SPEC4)
        tree_id = build_reachable_tree(SPEC4, ch_id, 1)
        _, ann_id = backward_dp(tree_id)
        assert abs(ann_id.root_value - 0.0) < 1e-12
        found = search_Cn_lambda(SPEC4, ch_id, 1, LambdaWeights(0, 0, 1))
        assert abs(found.value - 2.0) < 1e-12

        ch_x = xor_bsc_channel(SPEC, 0.1)
        tree_x = build_reachable_tree(SPEC, ch_x, 1)
        identity_idx = next(
            i for i, a in enumerate(tree_x.actions)
            if a.e1.mapping == (0, 1) and a.e2.mapping == (0, 1)
        )
        bd_x = evaluate_In(SPEC, constant_policy(tree_x, identity_idx), ch_x, 1, LambdaWeights(0, 0, 1))
        assert abs(bd_x.in_lambda - 0.53100440641071878) < 1e-4


def test_criterion_8_monte_carlo_within_ci():
    with _criterion("acceptance 8/9 monte carlo agrees with exact evaluation", 30):
        ch = xor_bsc_channel(SPEC, 0.1)
        tree = build_reachable_tree(SPEC, ch, 2)
        policy, _ = backward_dp(tree)
        exact = evaluate_policy_exact(tree, policy).value
        sim = simulate_monte_carlo(tree, policy, 1_000_000, 42)
        assert abs(sim.error_rate - exact) <= sim.ci_half_width


def test_criterion_9_fixed_point_sanity():
    with _criterion("acceptance 9/9 fixed-point solver sanity", 60):
        cost = CostFunctional("joint_entropy_drift")
        res = fixed_point_solve(
            SPEC, uniform_channel(SPEC), cost, SimplexGrid(8, 4),
            mode="average", tol=1e-10, max_iter=5000,
        )
        assert res.converged and res.residual < 1e-10
        assert abs(res.gain) < 1e-9
        assert float(np.abs(res.values).max()) < 1e-9

        grid = SimplexGrid(20, 4)
        resd = fixed_point_solve(
            SPEC4, identity_pair_channel(SPEC4), cost, grid,
            mode="discounted", discount=0.9, tol=1e-10, max_iter=2000,
        )
        assert resd.converged
        anchor, _ = grid.project_index(np.full(4, 0.25))
        assert abs(float(resd.values[anchor]) - (-2.0)) < 0.05
