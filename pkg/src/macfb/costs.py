"""Alternative objective costs, their telescoping identities, and fixed points.

Besides the terminal error probability, three stage costs turn terminal
uncertainty measures into sums of per-step terms:

  * joint entropy drift: the expected one-step drop in -log pi(W1, W2),
    whose expectation is -I(W1,W2; Z_t | past outputs);
  * conditional entropy drift (per user): the same for -log pi(W1 | W2),
    with expectation -I(W1; Z_t | W2, past outputs);
  * negative extrinsic Jensen-Shannon divergence: the expected drift of
    the log-likelihood ratio -log[pi(W)/(1 - pi(W))].

Each satisfies an exact telescoping identity
    E[terminal statistic of pi_n] = initial constant + sum_t E[cost_t],
checked here against the reachable-tree measure.  The same costs feed an
infinite-horizon solver (discounted value iteration or relative value
iteration for average cost) on a discretized belief simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import xlogy

from .errors import BudgetExceeded
from .information import entropy, ln_factor
from .model import (
    Channel,
    DENOM_MIN,
    JointAction,
    JointBelief,
    ProblemSpec,
    action_likelihood,
    all_joint_actions,
)

EJS_SKIP_TOL = 1e-12     # point-mass convention: extrinsic mixture undefined
KL_SATURATION = 1e6      # cap on a single KL term, in the active log units
GRID_POINT_CAP = 5_000_000


# ---------------------------------------------------------------------------
# Stage cost functions
# ---------------------------------------------------------------------------

def cost_joint_entropy(pi: JointBelief, e: JointAction, ch: Channel, base: str = "bits") -> float:
    """Expected one-step drift of log pi(W1, W2); equals -I(W1,W2;Z) here.

    c(pi, e) = -sum_{z,w} Q(z|e(w)) pi(w) log[Q(z|e(w)) / P(z)] with
    P(z) = sum_w Q(z|e(w)) pi(w).  Zero-numerator terms contribute 0.
    """
    like = action_likelihood(ch, e)                  # (m1, m2, Z)
    joint = like * pi.p[:, :, None]                  # P(w, z)
    pz = joint.sum(axis=(0, 1))
    mask = joint > 0.0
    ratio = np.ones_like(joint)
    ratio[mask] = like[mask] / np.broadcast_to(pz, joint.shape)[mask]
    return float(-(joint[mask] * np.log(ratio[mask])).sum() / ln_factor(base))


def cost_conditional_entropy(
    pi: JointBelief, e: JointAction, ch: Channel, user: int, base: str = "bits"
) -> float:
    """Expected drift of log pi(W1 | W2) (user=1) or log pi(W2 | W1) (user=2).

    The reference law in the log ratio mixes only over the selected user's
    messages: P(z | w_other) = sum_w~ Q(z | ...) pi(w~ | w_other).  Message
    values of the other user with zero marginal contribute 0.
    """
    if user not in (1, 2):
        raise ValueError(f"user must be 1 or 2, got {user}")
    p = pi.p if user == 1 else pi.p.T
    like = action_likelihood(ch, e)
    like = like if user == 1 else like.transpose(1, 0, 2)
    marg = p.sum(axis=0)                              # other user's marginal
    cond = np.zeros_like(p)
    pos = marg > 0.0
    cond[:, pos] = p[:, pos] / marg[pos]
    denom = np.einsum("ab,abz->bz", cond, like)       # P(z | w_other)
    joint = like * p[:, :, None]
    mask = joint > 0.0
    ratio = np.ones_like(joint)
    ratio[mask] = like[mask] / np.broadcast_to(denom[None, :, :], joint.shape)[mask]
    return float(-(joint[mask] * np.log(ratio[mask])).sum() / ln_factor(base))


class EjsCost(NamedTuple):
    value: float
    overflow: bool


def cost_ejs(pi: JointBelief, e: JointAction, ch: Channel, base: str = "bits") -> EjsCost:
    """Negative extrinsic Jensen-Shannon divergence of the output laws.

    c(pi, e) = -sum_w pi(w) D(Q(.|e(w)) || mix_w) where mix_w blends the
    OTHER message pairs' output laws with weights pi(w~)/(1 - pi(w)).
    Terms with 1 - pi(w) < 1e-12 are skipped (the mixture is undefined at
    a point mass and nothing remains to learn there).  A KL term whose
    support escapes the mixture saturates at KL_SATURATION log-units and
    raises the overflow flag instead of propagating infinity.
    """
    lnf = ln_factor(base)
    pvec = pi.p.ravel()
    like = action_likelihood(ch, e).reshape(pvec.size, ch.z_size)
    pz = pvec @ like
    total = 0.0
    overflow = False
    for w in range(pvec.size):
        pw = pvec[w]
        if pw <= 0.0 or 1.0 - pw < EJS_SKIP_TOL:
            continue
        mix = np.maximum(pz - pw * like[w], 0.0) / (1.0 - pw)
        qw = like[w]
        support = qw > DENOM_MIN
        if np.any(mix[support] <= DENOM_MIN):
            kl = KL_SATURATION
            overflow = True
        else:
            kl = float((qw[support] * np.log(qw[support] / mix[support])).sum() / lnf)
            if kl > KL_SATURATION:
                kl = KL_SATURATION
                overflow = True
        total += pw * kl
    return EjsCost(-total, overflow)


# ---------------------------------------------------------------------------
# Cost functional wrapper
# ---------------------------------------------------------------------------

COST_KINDS = (
    "error_probability",
    "joint_entropy_drift",
    "conditional_entropy_drift_user1",
    "conditional_entropy_drift_user2",
    "ejs",
    "weighted",
)

_WEIGHTABLE = (
    "joint_entropy_drift",
    "conditional_entropy_drift_user1",
    "conditional_entropy_drift_user2",
)


def _conditional_entropy_of(pi: JointBelief, user: int, base: str) -> float:
    other_marginal = pi.p.sum(axis=0 if user == 1 else 1)
    return entropy(pi.p.ravel(), base) - entropy(other_marginal, base)


def _llr_statistic(pi: JointBelief, base: str) -> float:
    """sum_w pi(w) log[(1 - pi(w)) / pi(w)]; -inf at an exact point mass."""
    p = pi.p.ravel()
    return float((xlogy(p, 1.0 - p) - xlogy(p, p)).sum() / ln_factor(base))


@dataclass
class CostFunctional:
    """One of the supported objectives with a uniform evaluation interface.

    instantaneous() is the stage cost c(pi, e); terminal() is the cost
    applied to the final posterior (nonzero only for error_probability);
    terminal_statistic() and initial_constant() are the two sides of the
    kind's telescoping identity.  kind="weighted" takes a mapping from the
    entropy-drift kinds to non-negative weights and is the sum of its
    parts in every respect.
    """

    kind: str
    log_base: str = "bits"
    weights: Optional[dict] = None
    overflow_seen: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "weighted":
            if not self.weights:
                raise ValueError("weighted kind needs a non-empty weights mapping")
            for k, v in self.weights.items():
                if k not in _WEIGHTABLE:
                    raise ValueError(f"kind {k!r} cannot appear in a weighted sum")
                if v < 0:
                    raise ValueError("weights must be non-negative")
        elif self.weights is not None:
            raise ValueError("weights are only meaningful for kind='weighted'")

    # -- stage cost --------------------------------------------------------
    def instantaneous(self, pi: JointBelief, e: JointAction, ch: Channel) -> float:
        if self.kind == "error_probability":
            return 0.0
        if self.kind == "joint_entropy_drift":
            return cost_joint_entropy(pi, e, ch, self.log_base)
        if self.kind == "conditional_entropy_drift_user1":
            return cost_conditional_entropy(pi, e, ch, 1, self.log_base)
        if self.kind == "conditional_entropy_drift_user2":
            return cost_conditional_entropy(pi, e, ch, 2, self.log_base)
        if self.kind == "ejs":
            res = cost_ejs(pi, e, ch, self.log_base)
            if res.overflow:
                self.overflow_seen = True
            return res.value
        return sum(
            w * CostFunctional(k, self.log_base).instantaneous(pi, e, ch)
            for k, w in self.weights.items()
        )

    # -- terminal cost (DP objective) ---------------------------------------
    def terminal(self, pi: JointBelief) -> float:
        if self.kind == "error_probability":
            return float(1.0 - pi.p.max())
        return 0.0

    # -- telescoping identity pieces ----------------------------------------
    def initial_constant(self, spec: ProblemSpec) -> float:
        lnf = ln_factor(self.log_base)
        m = spec.m1 * spec.m2
        if self.kind == "joint_entropy_drift":
            return math.log(m) / lnf
        if self.kind == "conditional_entropy_drift_user1":
            return math.log(spec.m1) / lnf
        if self.kind == "conditional_entropy_drift_user2":
            return math.log(spec.m2) / lnf
        if self.kind == "ejs":
            return math.log(m - 1) / lnf
        if self.kind == "weighted":
            return sum(
                w * CostFunctional(k, self.log_base).initial_constant(spec)
                for k, w in self.weights.items()
            )
        raise ValueError(f"kind {self.kind!r} has no telescoping identity")

    def terminal_statistic(self, pi: JointBelief) -> float:
        if self.kind == "joint_entropy_drift":
            return entropy(pi.p.ravel(), self.log_base)
        if self.kind == "conditional_entropy_drift_user1":
            return _conditional_entropy_of(pi, 1, self.log_base)
        if self.kind == "conditional_entropy_drift_user2":
            return _conditional_entropy_of(pi, 2, self.log_base)
        if self.kind == "ejs":
            return _llr_statistic(pi, self.log_base)
        if self.kind == "weighted":
            return sum(
                w * CostFunctional(k, self.log_base).terminal_statistic(pi)
                for k, w in self.weights.items()
            )
        raise ValueError(f"kind {self.kind!r} has no telescoping identity")


# ---------------------------------------------------------------------------
# Telescoping check
# ---------------------------------------------------------------------------

class TelescopingCheck(NamedTuple):
    lhs: float  # E[terminal statistic of the final posterior]
    rhs: float  # initial constant + sum of expected stage costs
    abs_diff: float


def check_telescoping(tree, policy, cost: CostFunctional) -> TelescopingCheck:
    """Verify the exact stage-cost decomposition of a terminal statistic.

    Both sides are computed over the exact reachable-tree measure induced
    by the policy: the left side sums the terminal statistic over leaves,
    the right side accumulates the stage costs along the way.
    """
    from .dp import _policy_action_arrays  # local import; dp imports nothing from here

    if cost.kind == "error_probability":
        raise ValueError("error_probability is terminal-only; nothing telescopes")
    spec = tree.spec
    acts = _policy_action_arrays(tree, policy)
    reach = [np.zeros(len(lv.keys)) for lv in tree.levels]
    reach[0][0] = 1.0
    stage_total = 0.0
    for t in range(tree.horizon):
        n_nodes = len(tree.levels[t].keys)
        for i in range(n_nodes):
            if reach[t][i] <= 0.0:
                continue
            pi = tree.belief_at(t, i)
            act = tree.actions[acts[t][i]]
            stage_total += reach[t][i] * cost.instantaneous(pi, act, tree.channel)
        idx = np.arange(n_nodes)
        TC = tree.trans_child[t][idx, acts[t]]
        TP = tree.trans_prob[t][idx, acts[t]]
        flow = reach[t][:, None] * TP
        ok = TC >= 0
        np.add.at(reach[t + 1], TC[ok], flow[ok])
    lhs = 0.0
    for i in range(len(tree.levels[tree.horizon].keys)):
        if reach[tree.horizon][i] > 0.0:
            lhs += reach[tree.horizon][i] * cost.terminal_statistic(tree.belief_at(tree.horizon, i))
    rhs = cost.initial_constant(spec) + stage_total
    return TelescopingCheck(lhs, rhs, abs(lhs - rhs))


# ---------------------------------------------------------------------------
# Simplex grid
# ---------------------------------------------------------------------------

def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass
class SimplexGrid:
    """All probability vectors with entries that are multiples of 1/k."""

    resolution: int
    dim: int
    points: np.ndarray = field(init=False)        # (P, dim) integer counts
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("grid resolution must be at least 2")
        if self.dim < 2:
            raise ValueError("grid dimension must be at least 2")
        count = math.comb(self.resolution + self.dim - 1, self.dim - 1)
        if count > GRID_POINT_CAP:
            raise BudgetExceeded(f"{count} grid points exceed the cap of {GRID_POINT_CAP}")
        self.points = np.array(list(_compositions(self.resolution, self.dim)), dtype=np.int64)
        self._index = {tuple(row): i for i, row in enumerate(self.points)}

    def __len__(self) -> int:
        return self.points.shape[0]

    def belief(self, i: int) -> np.ndarray:
        return self.points[i] / self.resolution

    def project_index(self, p: np.ndarray) -> tuple:
        """Nearest grid point in L1 via largest-remainder rounding.

        Among L1-nearest points, fractional-part ties are resolved so the
        lexicographically smallest grid point wins.  Returns (index, L1
        distance from p to the chosen point).
        """
        k = self.resolution
        scaled = np.asarray(p, dtype=float) * k
        base = np.floor(scaled).astype(np.int64)
        r = int(k - base.sum())
        if r > 0:
            fracs = scaled - base
            order = np.lexsort((-np.arange(self.dim), -fracs))
            base[order[:r]] += 1
        comp = tuple(int(v) for v in base)
        idx = self._index[comp]
        err = float(np.abs(base / k - np.asarray(p, dtype=float)).sum())
        return idx, err


# ---------------------------------------------------------------------------
# Infinite-horizon fixed points
# ---------------------------------------------------------------------------

@dataclass
class FixedPointResult:
    mode: str
    grid_resolution: int
    values: np.ndarray
    greedy: np.ndarray
    gain: Optional[float]
    iterations: int
    residual: float
    residuals: list
    converged: bool
    projection_error_max: float
    gain_near_zero: Optional[bool] = None


def fixed_point_solve(
    spec: ProblemSpec,
    ch: Channel,
    cost: CostFunctional,
    grid: SimplexGrid,
    mode: str = "discounted",
    discount: float = 0.9,
    tol: float = 1e-9,
    max_iter: int = 2000,
    action_set: Optional[list] = None,
) -> FixedPointResult:
    """Solve V = min_e [c + beta E V] (discounted) or the average-cost
    analogue J + V = min_e [c + E V] by (relative) value iteration.

    Continuation beliefs fall off the grid, so each is mapped to its
    nearest L1 grid point; the largest such projection error is reported.
    The average-cost iteration is anchored at the grid point nearest the
    uniform belief.  Non-convergence within max_iter is reported through
    the converged flag, with the last iterate returned.
    """
    if cost.kind == "error_probability":
        raise ValueError("error_probability has no instantaneous form; no fixed point to solve")
    if mode not in ("discounted", "average"):
        raise ValueError(f"mode must be 'discounted' or 'average', got {mode!r}")
    if mode == "discounted" and not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    if grid.dim != spec.num_pairs:
        raise ValueError("grid dimension must equal m1*m2")

    actions = list(action_set) if action_set is not None else all_joint_actions(spec)
    P, A, Z = len(grid), len(actions), ch.z_size
    like = np.stack(
        [action_likelihood(ch, a).reshape(spec.num_pairs, Z) for a in actions]
    )  # (A, K, Z)

    c_table = np.empty((P, A))
    succ = np.zeros((P, A, Z), dtype=np.int64)
    prob = np.zeros((P, A, Z))
    proj_err = 0.0
    for i in range(P):
        b = grid.belief(i)
        pi = JointBelief(b.reshape(spec.m1, spec.m2))
        for a in range(A):
            c_table[i, a] = cost.instantaneous(pi, actions[a], ch)
            pz = b @ like[a]                      # (Z,)
            for z in range(Z):
                if pz[z] <= DENOM_MIN:
                    continue
                child = b * like[a, :, z] / pz[z]
                j, err = grid.project_index(child)
                succ[i, a, z] = j
                prob[i, a, z] = pz[z]
                proj_err = max(proj_err, err)

    anchor, _ = grid.project_index(np.full(grid.dim, 1.0 / grid.dim))
    v = np.zeros(P)
    residuals = []
    gain = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        cont = (prob * v[succ]).sum(axis=2)
        q = c_table + (discount * cont if mode == "discounted" else cont)
        new_v = q.min(axis=1)
        if mode == "average":
            gain = float(new_v[anchor])
            new_v = new_v - gain
        res = float(np.abs(new_v - v).max())
        residuals.append(res)
        v = new_v
        if res < tol:
            converged = True
            break

    cont = (prob * v[succ]).sum(axis=2)
    q = c_table + (discount * cont if mode == "discounted" else cont)
    greedy = q.argmin(axis=1)
    return FixedPointResult(
        mode=mode,
        grid_resolution=grid.resolution,
        values=v,
        greedy=greedy,
        gain=gain,
        iterations=it,
        residual=residuals[-1] if residuals else float("nan"),
        residuals=residuals,
        converged=converged,
        projection_error_max=proj_err,
        gain_near_zero=(abs(gain) < 1e-9) if gain is not None else None,
    )
