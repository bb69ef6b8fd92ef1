"""Belief-state dynamic programming over the reachable posterior tree.

The common-information view turns the coding problem into a finite-horizon
MDP whose state is the joint posterior over message pairs and whose actions
are encoder-function pairs.  All posteriors reachable from the uniform
prior form a finite tree (merged across histories that induce the same
posterior); backward induction over that tree yields the minimum error
probability and an optimal deterministic policy.

Also here: exact policy evaluation by a forward pass, Monte Carlo
simulation of a policy, an exhaustive search over unstructured strategy
pairs (the reference the DP is checked against), and an exact-rational
variant of both for arithmetic-free verification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .errors import BudgetExceeded, IncompletePolicy
from .model import (
    Channel,
    DENOM_MIN,
    JointAction,
    JointBelief,
    KEY_DECIMALS,
    ProblemSpec,
    SNAP_TOL,
    action_likelihood,
    all_joint_actions,
    belief_update,
    channel_fractions,
    direct_posterior,
    uniform_fraction_belief,
)

DEFAULT_NODE_CAP = 5_000_000
DEFAULT_STRATEGY_CAP = 10_000_000


# ---------------------------------------------------------------------------
# Reachable belief tree
# ---------------------------------------------------------------------------

@dataclass
class LevelData:
    """All distinct posteriors at one depth; beliefs stored flat, row-major."""

    beliefs: np.ndarray            # (N, m1*m2)
    keys: list                     # canonical key per node
    key_to_index: dict


@dataclass
class ReachableTree:
    """Deduplicated posterior tree together with its transition tables.

    trans_child[t][n, a, z] is the level-(t+1) index of the posterior that
    action a and output z lead to from node n at level t, or -1 when the
    output has zero probability there.  trans_prob holds the corresponding
    output probabilities P(z | node, action) and is zero on pruned entries.
    """

    spec: ProblemSpec
    channel: Channel
    horizon: int
    actions: list
    levels: list = field(default_factory=list)
    trans_child: list = field(default_factory=list)
    trans_prob: list = field(default_factory=list)
    pruned_mass: float = 0.0
    pruned_branches: int = 0

    @property
    def num_nodes(self) -> int:
        return sum(len(lv.keys) for lv in self.levels)

    def level_sizes(self) -> list:
        return [len(lv.keys) for lv in self.levels]

    def belief_at(self, t: int, i: int) -> JointBelief:
        return JointBelief(self.levels[t].beliefs[i].reshape(self.spec.m1, self.spec.m2))


def _canonical_rows(rows: np.ndarray) -> tuple:
    """Vectorized canonicalization of belief rows plus their memo keys."""
    snapped = np.where(rows < SNAP_TOL, 0.0, rows)
    snapped = snapped / snapped.sum(axis=1, keepdims=True)
    keyed = np.round(snapped, KEY_DECIMALS)
    keyed = np.where(keyed == 0.0, 0.0, keyed)  # clear -0.0
    return snapped, keyed


def build_reachable_tree(
    spec: ProblemSpec,
    ch: Channel,
    horizon: int,
    action_set: Optional[list] = None,
    node_cap: int = DEFAULT_NODE_CAP,
) -> ReachableTree:
    """Enumerate every posterior reachable from the uniform prior.

    Children across all (node, action, output) branches of a level are
    computed in one tensor product, canonicalized, and merged by key.
    Raises BudgetExceeded once the total node count passes node_cap.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    actions = list(action_set) if action_set is not None else all_joint_actions(spec)
    if not actions:
        raise ValueError("action set is empty")
    K = spec.num_pairs
    Z = ch.z_size
    A = len(actions)
    like = np.stack([action_likelihood(ch, a).reshape(K, Z) for a in actions])  # (A,K,Z)

    root = np.full((1, K), 1.0 / K)
    tree = ReachableTree(spec, ch, horizon, actions)
    tree.levels.append(LevelData(root, [_row_key(root[0])], {_row_key(root[0]): 0}))

    total = 1
    for t in range(horizon):
        B = tree.levels[t].beliefs                     # (N,K)
        N = B.shape[0]
        J = B[:, None, :, None] * like[None, :, :, :]  # (N,A,K,Z)
        Pz = J.sum(axis=2)                             # (N,A,Z)

        flat_children = J.transpose(0, 1, 3, 2).reshape(-1, K)
        flat_mass = Pz.reshape(-1)
        valid = flat_mass > DENOM_MIN
        tree.pruned_mass += float(flat_mass[~valid].sum())
        tree.pruned_branches += int((~valid).sum())

        child_idx = np.full(N * A * Z, -1, dtype=np.int64)
        if valid.any():
            posts = flat_children[valid] / flat_mass[valid][:, None]
            posts, keyed = _canonical_rows(posts)
            key_to_index: dict = {}
            new_rows: list = []
            assign = np.empty(posts.shape[0], dtype=np.int64)
            for i in range(posts.shape[0]):
                k = keyed[i].tobytes()
                j = key_to_index.get(k)
                if j is None:
                    j = len(new_rows)
                    key_to_index[k] = j
                    new_rows.append(posts[i])
                assign[i] = j
            child_idx[valid] = assign
            beliefs = np.vstack(new_rows)
            keys = [None] * len(new_rows)
            for k, j in key_to_index.items():
                keys[j] = k
            tree.levels.append(LevelData(beliefs, keys, key_to_index))
        else:
            raise ValueError("all branches pruned; channel table is degenerate")

        prob = np.where(valid, flat_mass, 0.0).reshape(N, A, Z)
        tree.trans_child.append(child_idx.reshape(N, A, Z))
        tree.trans_prob.append(prob)

        total += len(tree.levels[-1].keys)
        if total > node_cap:
            raise BudgetExceeded(
                f"reachable tree exceeds node cap: {total} > {node_cap} at depth {t + 1}"
            )
    return tree


def _row_key(row: np.ndarray) -> bytes:
    keyed = np.round(row, KEY_DECIMALS)
    keyed = np.where(keyed == 0.0, 0.0, keyed)
    return np.ascontiguousarray(keyed).tobytes()


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

@dataclass
class PolicyTree:
    """Deterministic policy: one action index per (depth, posterior) node."""

    horizon: int
    actions: list
    assignment: dict  # (t, canonical key) -> index into actions

    def action_index_at(self, t: int, pi: JointBelief) -> int:
        key = (t, pi.key())
        if key not in self.assignment:
            raise IncompletePolicy(f"no action assigned at depth {t} for this posterior")
        return self.assignment[key]

    def action_at(self, t: int, pi: JointBelief) -> JointAction:
        return self.actions[self.action_index_at(t, pi)]


def policy_from_fn(tree: ReachableTree, fn: Callable) -> PolicyTree:
    """Materialize fn(depth, belief) -> action index over every tree node."""
    assignment = {}
    A = len(tree.actions)
    for t in range(tree.horizon):
        lv = tree.levels[t]
        for i, key in enumerate(lv.keys):
            idx = int(fn(t, tree.belief_at(t, i)))
            if not 0 <= idx < A:
                raise ValueError(f"policy function returned action index {idx} out of range")
            assignment[(t, key)] = idx
    return PolicyTree(tree.horizon, tree.actions, assignment)


def constant_policy(tree: ReachableTree, action_index: int) -> PolicyTree:
    return policy_from_fn(tree, lambda t, pi: action_index)


def _policy_action_arrays(tree: ReachableTree, policy: PolicyTree) -> list:
    """Per-level arrays of the policy's action index at each node."""
    out = []
    for t in range(tree.horizon):
        lv = tree.levels[t]
        arr = np.empty(len(lv.keys), dtype=np.int64)
        for i, key in enumerate(lv.keys):
            if (t, key) not in policy.assignment:
                raise IncompletePolicy(f"policy missing node at depth {t}")
            arr[i] = policy.assignment[(t, key)]
        out.append(arr)
    return out


# ---------------------------------------------------------------------------
# Backward induction
# ---------------------------------------------------------------------------

@dataclass
class ValueAnnotation:
    """Value of every tree node plus the minimizing action at non-leaves."""

    values: list          # per level, (N,) arrays; last level is terminal
    action_indices: list  # per non-leaf level, (N,) arrays

    @property
    def root_value(self) -> float:
        return float(self.values[0][0])


def _terminal_values(tree: ReachableTree, cost=None) -> np.ndarray:
    B = tree.levels[tree.horizon].beliefs
    if cost is None:
        return 1.0 - B.max(axis=1)
    m1, m2 = tree.spec.m1, tree.spec.m2
    return np.array([cost.terminal(JointBelief(B[i].reshape(m1, m2))) for i in range(B.shape[0])])


def _stage_values(tree: ReachableTree, t: int, cost) -> np.ndarray:
    """Stage cost c(pi, a) for every node/action pair at depth t; (N, A)."""
    lv = tree.levels[t]
    N, A = len(lv.keys), len(tree.actions)
    if cost is None:
        return np.zeros((N, A))
    if hasattr(cost, "stage_batch"):
        return cost.stage_batch(lv.beliefs, tree.actions, tree.channel, tree.spec)
    out = np.empty((N, A))
    for i in range(N):
        pi = tree.belief_at(t, i)
        for a, act in enumerate(tree.actions):
            out[i, a] = cost.instantaneous(pi, act, tree.channel)
    return out


def backward_dp(tree: ReachableTree, cost=None) -> tuple:
    """Backward induction over the tree; returns (PolicyTree, ValueAnnotation).

    With cost=None the objective is the terminal error probability
    1 - max(pi); otherwise cost must expose .instantaneous(pi, action, ch)
    and .terminal(pi) and the accumulated stage costs are minimized.  Ties
    between actions go to the smallest action index.
    """
    H = tree.horizon
    values = [None] * (H + 1)
    action_indices = [None] * H
    values[H] = _terminal_values(tree, cost)
    for t in range(H - 1, -1, -1):
        TC, TP = tree.trans_child[t], tree.trans_prob[t]
        v_next = values[t + 1]
        safe = np.where(TC >= 0, TC, 0)
        cont = v_next[safe]
        cont[TC < 0] = 0.0
        q = (TP * cont).sum(axis=2) + _stage_values(tree, t, cost)  # (N,A)
        action_indices[t] = q.argmin(axis=1)
        values[t] = q.min(axis=1)

    assignment = {}
    for t in range(H):
        for i, key in enumerate(tree.levels[t].keys):
            assignment[(t, key)] = int(action_indices[t][i])
    policy = PolicyTree(H, tree.actions, assignment)
    return policy, ValueAnnotation(values, action_indices)


# ---------------------------------------------------------------------------
# Exact policy evaluation and simulation
# ---------------------------------------------------------------------------

@dataclass
class PolicyEvaluation:
    value: float
    stage_value: float
    terminal_value: float
    reach: list  # per-level arrays of node reach probabilities


def evaluate_policy_exact(tree: ReachableTree, policy: PolicyTree, cost=None) -> PolicyEvaluation:
    """Forward pass: expected total cost of the policy, split into parts."""
    acts = _policy_action_arrays(tree, policy)
    reach = [np.zeros(len(lv.keys)) for lv in tree.levels]
    reach[0][0] = 1.0
    stage_total = 0.0
    for t in range(tree.horizon):
        idx = np.arange(len(tree.levels[t].keys))
        if cost is not None:
            sv = _stage_values(tree, t, cost)
            stage_total += float((reach[t] * sv[idx, acts[t]]).sum())
        TC = tree.trans_child[t][idx, acts[t]]  # (N,Z)
        TP = tree.trans_prob[t][idx, acts[t]]
        flow = reach[t][:, None] * TP
        ok = TC >= 0
        np.add.at(reach[t + 1], TC[ok], flow[ok])
    term = _terminal_values(tree, cost)
    terminal_total = float((reach[tree.horizon] * term).sum())
    return PolicyEvaluation(stage_total + terminal_total, stage_total, terminal_total, reach)


@dataclass
class SimulationResult:
    trials: int
    num_errors: int
    error_rate: float
    ci_half_width: float
    seed: int


def simulate_monte_carlo(
    tree: ReachableTree, policy: PolicyTree, trials: int, seed: int
) -> SimulationResult:
    """Simulate the closed loop and report the empirical error rate.

    Counter-based generator, fixed draw order (messages for user 1, then
    user 2, then one uniform per step per trial): reruns with the same
    seed reproduce byte-identical results.  The 95% confidence half-width
    uses the normal approximation.
    """
    spec, ch = tree.spec, tree.channel
    rng = np.random.Generator(np.random.Philox(seed))
    w1 = rng.integers(0, spec.m1, size=trials)
    w2 = rng.integers(0, spec.m2, size=trials)
    u = rng.random((trials, tree.horizon))

    acts = _policy_action_arrays(tree, policy)
    E1 = np.stack([a.e1.as_array() for a in tree.actions])  # (A, m1)
    E2 = np.stack([a.e2.as_array() for a in tree.actions])  # (A, m2)

    cur = np.zeros(trials, dtype=np.int64)
    for t in range(tree.horizon):
        a = acts[t][cur]
        x1 = E1[a, w1]
        x2 = E2[a, w2]
        rows = ch.q[x1, x2, :]                    # (T, Z)
        cum = np.cumsum(rows, axis=1)
        z = (cum <= u[:, t : t + 1]).sum(axis=1)
        z = np.minimum(z, ch.z_size - 1)
        nxt = tree.trans_child[t][cur, a, z]
        if np.any(nxt < 0):
            raise RuntimeError("simulation reached a pruned branch")
        cur = nxt

    leaf = tree.levels[tree.horizon].beliefs
    dec = leaf.argmax(axis=1)
    w1_hat = dec // spec.m2
    w2_hat = dec % spec.m2
    errs = (w1_hat[cur] != w1) | (w2_hat[cur] != w2)
    num_errors = int(errs.sum())
    p_hat = num_errors / trials
    half = 1.96 * float(np.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / trials))
    return SimulationResult(trials, num_errors, p_hat, half, seed)


# ---------------------------------------------------------------------------
# Exhaustive unstructured-strategy search (oracle)
# ---------------------------------------------------------------------------

@dataclass
class BruteForceResult:
    value: float
    num_pairs: int
    witness1: tuple  # per step, per message, per feedback-history: symbol
    witness2: tuple


def _strategy_shapes(m: int, z_size: int, horizon: int) -> list:
    """Slot layout for one user: at step t a table of shape (m, z_size**t)."""
    return [(m, z_size**t) for t in range(horizon)]


def _enumerate_strategies(x_size: int, shapes: list):
    """All full-feedback strategies, slot order: step, message, history (lex)."""
    slots = sum(m * p for m, p in shapes)
    for flat in itertools.product(range(x_size), repeat=slots):
        out = []
        pos = 0
        for m, p in shapes:
            step = tuple(tuple(flat[pos + w * p : pos + (w + 1) * p]) for w in range(m))
            pos += m * p
            out.append(step)
        yield tuple(out)


def _pair_error(q: np.ndarray, m1: int, m2: int, s1, s2, horizon: int) -> float:
    """Exact error probability of one strategy pair under ML decoding."""
    L = np.ones((m1, m2, 1))
    for t in range(horizon):
        X1 = np.asarray(s1[t], dtype=np.intp)  # (m1, P)
        X2 = np.asarray(s2[t], dtype=np.intp)  # (m2, P)
        step = q[X1[:, None, :], X2[None, :, :], :]  # (m1, m2, P, Z)
        L = (L[:, :, :, None] * step).reshape(m1, m2, -1)
    best = L.reshape(m1 * m2, -1).max(axis=0)
    return float(1.0 - best.sum() / (m1 * m2))


def brute_force_unstructured(
    spec: ProblemSpec,
    ch: Channel,
    horizon: int,
    strategy_cap: int = DEFAULT_STRATEGY_CAP,
) -> BruteForceResult:
    """Minimum error probability over ALL feedback strategies, by enumeration.

    Each user's strategy may depend on her message and the entire feedback
    sequence, with no structural restriction, so this value is the true
    optimum the dynamic program must reproduce.  Cost grows doubly
    exponentially in the horizon; the pair count is checked against
    strategy_cap before any work is done.
    """
    sh1 = _strategy_shapes(spec.m1, ch.z_size, horizon)
    sh2 = _strategy_shapes(spec.m2, ch.z_size, horizon)
    n1 = spec.x1_size ** sum(m * p for m, p in sh1)
    n2 = spec.x2_size ** sum(m * p for m, p in sh2)
    if n1 * n2 > strategy_cap:
        raise BudgetExceeded(
            f"{n1 * n2} strategy pairs exceed the cap of {strategy_cap}"
        )
    best = np.inf
    wit = None
    count = 0
    all2 = list(_enumerate_strategies(spec.x2_size, sh2))
    for s1 in _enumerate_strategies(spec.x1_size, sh1):
        for s2 in all2:
            count += 1
            v = _pair_error(ch.q, spec.m1, spec.m2, s1, s2, horizon)
            if v < best:
                best = v
                wit = (s1, s2)
    return BruteForceResult(best, count, wit[0], wit[1])


# ---------------------------------------------------------------------------
# Exact-rational variants
# ---------------------------------------------------------------------------

@dataclass
class RationalDPResult:
    value: Fraction
    nodes_per_level: list


def backward_dp_rational(
    spec: ProblemSpec,
    ch: Channel,
    horizon: int,
    action_set: Optional[list] = None,
    node_cap: int = DEFAULT_NODE_CAP,
) -> RationalDPResult:
    """Backward induction in exact rational arithmetic.

    Operates on Fractions obtained from the exact binary values of the
    float channel entries, so the result is the mathematically exact DP
    value for the channel as stored.  Only feasible for small instances.
    """
    actions = list(action_set) if action_set is not None else all_joint_actions(spec)
    chfr = channel_fractions(ch)
    K = spec.num_pairs
    Z = ch.z_size
    lf = []
    for a in actions:
        rows = []
        for w1 in range(spec.m1):
            for w2 in range(spec.m2):
                rows.append(chfr[a.e1.mapping[w1]][a.e2.mapping[w2]])
        lf.append(rows)  # lf[a][k][z]

    memo: dict = {}
    seen_per_level = [set() for _ in range(horizon + 1)]

    def value(t: int, pi: tuple) -> Fraction:
        key = (t, pi)
        if key in memo:
            return memo[key]
        seen_per_level[t].add(pi)
        if sum(len(s) for s in seen_per_level) > node_cap:
            raise BudgetExceeded("rational DP exceeds node cap")
        if t == horizon:
            v = 1 - max(pi)
        else:
            v = None
            for rows in lf:
                tot = Fraction(0)
                for z in range(Z):
                    pz = sum(pi[k] * rows[k][z] for k in range(K))
                    if pz == 0:
                        continue
                    child = tuple(pi[k] * rows[k][z] / pz for k in range(K))
                    tot += pz * value(t + 1, child)
                if v is None or tot < v:
                    v = tot
        memo[key] = v
        return v

    root = uniform_fraction_belief(spec.m1, spec.m2)
    v = value(0, root)
    return RationalDPResult(v, [len(s) for s in seen_per_level])


def brute_force_rational(
    spec: ProblemSpec,
    ch: Channel,
    horizon: int,
    strategy_cap: int = DEFAULT_STRATEGY_CAP,
) -> Fraction:
    """Exhaustive strategy search in exact rational arithmetic."""
    chfr = channel_fractions(ch)
    sh1 = _strategy_shapes(spec.m1, ch.z_size, horizon)
    sh2 = _strategy_shapes(spec.m2, ch.z_size, horizon)
    n1 = spec.x1_size ** sum(m * p for m, p in sh1)
    n2 = spec.x2_size ** sum(m * p for m, p in sh2)
    if n1 * n2 > strategy_cap:
        raise BudgetExceeded(f"{n1 * n2} strategy pairs exceed the cap of {strategy_cap}")
    Z = ch.z_size
    prior = Fraction(1, spec.num_pairs)
    paths = list(itertools.product(range(Z), repeat=horizon))
    best = None
    all2 = list(_enumerate_strategies(spec.x2_size, sh2))
    for s1 in _enumerate_strategies(spec.x1_size, sh1):
        for s2 in all2:
            total = Fraction(0)
            for path in paths:
                top = None
                for w1 in range(spec.m1):
                    for w2 in range(spec.m2):
                        lik = prior
                        pidx = 0
                        for t, z in enumerate(path):
                            x1 = s1[t][w1][pidx]
                            x2 = s2[t][w2][pidx]
                            lik *= chfr[x1][x2][z]
                            pidx = pidx * Z + z
                        if top is None or lik > top:
                            top = lik
                total += top
            err = 1 - total
            if best is None or err < best:
                best = err
    return best


# ---------------------------------------------------------------------------
# Recursion checker
# ---------------------------------------------------------------------------

def check_belief_recursion(
    spec: ProblemSpec,
    ch: Channel,
    horizon: int,
    num_histories: int = 100,
    seed: int = 0,
) -> float:
    """Max deviation between the recursive posterior and direct normalization.

    Histories are sampled by drawing a message pair and rolling the channel
    forward under random encoder pairs, so every sampled history has
    positive probability.
    """
    rng = np.random.default_rng(seed)
    actions = all_joint_actions(spec)
    worst = 0.0
    for _ in range(num_histories):
        w1 = int(rng.integers(spec.m1))
        w2 = int(rng.integers(spec.m2))
        acts, outs = [], []
        pi = JointBelief.uniform(spec.m1, spec.m2)
        for _t in range(horizon):
            e = actions[int(rng.integers(len(actions)))]
            x1 = e.e1.mapping[w1]
            x2 = e.e2.mapping[w2]
            z = int(rng.choice(ch.z_size, p=ch.q[x1, x2]))
            acts.append(e)
            outs.append(z)
            pi = belief_update(pi, e, z, ch)
            ref = direct_posterior(spec, ch, acts, outs)
            worst = max(worst, float(np.max(np.abs(pi.p - ref.p))))
    return worst
