"""Directed-information evaluation and inner-bound search for the MAC with feedback.

The per-step conditional mutual informations that enter the feedback
inner bound,

    I(X1_t; Z_t | X2_{1:t}, Z_{1:t-1}),
    I(X2_t; Z_t | X1_{1:t}, Z_{1:t-1}),
    I(X1_t, X2_t; Z_t | Z_{1:t-1}),

reduce, for encoders that are deterministic functions of (message, common
posterior), to expectations of time-invariant stage functions of the state
(pihat1, pihat2, pi): each sender's input history is summarized by her
private posterior pihat_i, the common history by pi.  That state evolves
as a controlled Markov chain whose kernel does not depend on the encoding
policy, so the expectations are computed exactly by a forward pass over a
merged state tree.  Everything is cross-checked against brute-force
enumeration of the full history distribution P(w1, w2, z_{1:n}).

The search over deterministic tree policies maximizes the lambda-weighted
combination; since the true bound optimizes over all (randomized,
input-history-dependent) input distributions, the searched value is a
lower bound and is labeled as such.
"""

from __future__ import annotations

import itertools
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dp import DEFAULT_NODE_CAP, PolicyTree
from .errors import BudgetExceeded, NegativeInformation, ZeroProbabilityObservation
from .information import entropy, ln_factor
from .model import (
    Channel,
    DENOM_MIN,
    JointAction,
    JointBelief,
    PrivateBelief,
    ProblemSpec,
    action_likelihood,
    all_joint_actions,
    belief_update,
    canonicalize,
    induced_input_marginal,
    private_belief_update,
)

HISTORY_CAP = 10_000_000
POLICY_CAP = 1_000_000

REWARD_CLIP_TOL = 1e-9    # negatives above this are silent float noise
REWARD_ERROR_TOL = 1e-6   # negatives below this indicate a broken state
BOUND_TYPE = "structured_deterministic_lower_bound"


@dataclass(frozen=True)
class LambdaWeights:
    """Non-negative weights on (R1, R2, R1+R2) in the supporting hyperplane."""

    l1: float
    l2: float
    l3: float

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0 or self.l3 < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.l1 == 0 and self.l2 == 0 and self.l3 == 0:
            raise ValueError("lambda weights must not all be zero")

    def as_tuple(self) -> tuple:
        return (self.l1, self.l2, self.l3)


@dataclass(eq=False)
class JointState:
    """Common posterior plus both private posteriors; the kernel's state."""

    pihat1: PrivateBelief
    pihat2: PrivateBelief
    pi: JointBelief

    def __post_init__(self):
        if self.pihat1.user != 1 or self.pihat2.user != 2:
            raise ValueError("pihat1 must belong to user 1 and pihat2 to user 2")
        m1, m2 = self.pi.p.shape
        if self.pihat1.p.size != m1 or self.pihat2.p.size != m2:
            raise ValueError("private belief sizes must match the joint belief")

    @classmethod
    def initial(cls, spec: ProblemSpec) -> "JointState":
        return cls(
            PrivateBelief.uniform(1, spec.m1),
            PrivateBelief.uniform(2, spec.m2),
            JointBelief.uniform(spec.m1, spec.m2),
        )

    def key(self) -> tuple:
        return (self.pihat1.key(), self.pihat2.key(), self.pi.key())


@dataclass
class DirectedInfoBreakdown:
    """Per-step and averaged directed informations with the weighted value."""

    lam: LambdaWeights
    log_base: str
    per_t_i1: list
    per_t_i2: list
    per_t_i3: list
    avg_i1: float = field(init=False)
    avg_i2: float = field(init=False)
    avg_i3: float = field(init=False)
    in_lambda: float = field(init=False)
    bound_type: str = BOUND_TYPE

    def __post_init__(self):
        n = len(self.per_t_i1)
        if not (n == len(self.per_t_i2) == len(self.per_t_i3)) or n == 0:
            raise ValueError("per-step lists must be non-empty and equally long")
        for seq in (self.per_t_i1, self.per_t_i2, self.per_t_i3):
            if min(seq) < -1e-12:
                raise NegativeInformation(f"mutual information {min(seq)} below -1e-12")
        self.avg_i1 = sum(self.per_t_i1) / n
        self.avg_i2 = sum(self.per_t_i2) / n
        self.avg_i3 = sum(self.per_t_i3) / n
        self.in_lambda = (
            self.lam.l1 * self.avg_i1 + self.lam.l2 * self.avg_i2 + self.lam.l3 * self.avg_i3
        )

    def to_json_dict(self) -> dict:
        return {
            "lambda": list(self.lam.as_tuple()),
            "log_base": self.log_base,
            "per_t_i1": list(self.per_t_i1),
            "per_t_i2": list(self.per_t_i2),
            "per_t_i3": list(self.per_t_i3),
            "avg_i1": self.avg_i1,
            "avg_i2": self.avg_i2,
            "avg_i3": self.avg_i3,
            "in_lambda": self.in_lambda,
            "bound_type": self.bound_type,
        }


# ---------------------------------------------------------------------------
# Stage entropy functions
# ---------------------------------------------------------------------------

def _pair_input_dist(pi: JointBelief, e: JointAction) -> np.ndarray:
    """P(x1, x2 | pi, e): push the joint belief through the encoder pair."""
    out = np.zeros((e.e1.x_size, e.e2.x_size))
    a1, a2 = e.e1.as_array(), e.e2.as_array()
    np.add.at(out, (a1[:, None], a2[None, :]), pi.p)
    return out


def h0(pi: JointBelief, e: JointAction, ch: Channel, base: str = "bits") -> float:
    """H(Z | X1, X2) stage value: belief-weighted channel-row entropies."""
    like = action_likelihood(ch, e)  # (m1, m2, Z)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(like > 0, np.log(like), 0.0)
    row_ent = -(like * lg).sum(axis=2) / ln_factor(base)
    return float((pi.p * row_ent).sum())


def h3(pi: JointBelief, e: JointAction, ch: Channel, base: str = "bits") -> float:
    """H(Z | common history) stage value: entropy of the predictive output law."""
    like = action_likelihood(ch, e)
    pz = (pi.p[:, :, None] * like).sum(axis=(0, 1))
    return entropy(pz, base)


def _conditional_given_other(pi: JointBelief, other_user: int) -> np.ndarray:
    """pi(w_self | w_other); columns with zero marginal are left at zero."""
    p = pi.p if other_user == 2 else pi.p.T  # axes: (self, other)
    marg = p.sum(axis=0)
    cond = np.zeros_like(p)
    pos = marg > 0.0
    cond[:, pos] = p[:, pos] / marg[pos]
    return cond


def h1(pihat2: PrivateBelief, pi: JointBelief, e: JointAction, ch: Channel, base: str = "bits") -> float:
    """H(Z | user 2's input history, common history) stage value.

    Conditioning on user 2's inputs leaves user 1's input distributed as
    P(x1 | x2) built from pi(w1 | w2) reweighted by user 2's private
    posterior.  Output symbols x2 outside the induced support contribute 0.
    """
    px2 = induced_input_marginal(pihat2, e.e2)
    cond = _conditional_given_other(pi, other_user=2)        # (m1, m2)
    weight = cond * pihat2.p[None, :]                        # pi(w1|w2) pihat2(w2)
    g = np.zeros((e.e1.x_size, e.e2.x_size))
    np.add.at(g, (e.e1.as_array()[:, None], e.e2.as_array()[None, :]), weight)
    norm = g.sum(axis=0)
    total = 0.0
    for x2 in range(e.e2.x_size):
        if px2[x2] <= 0.0 or norm[x2] <= 0.0:
            continue
        px1_given = g[:, x2] / norm[x2]
        pz = px1_given @ ch.q[:, x2, :]
        total += px2[x2] * entropy(pz, base)
    return float(total)


def h2(pihat1: PrivateBelief, pi: JointBelief, e: JointAction, ch: Channel, base: str = "bits") -> float:
    """H(Z | user 1's input history, common history); mirror image of h1."""
    px1 = induced_input_marginal(pihat1, e.e1)
    cond = _conditional_given_other(pi, other_user=1)        # (m2, m1)
    weight = cond * pihat1.p[None, :]                        # pi(w2|w1) pihat1(w1)
    g = np.zeros((e.e2.x_size, e.e1.x_size))
    np.add.at(g, (e.e2.as_array()[:, None], e.e1.as_array()[None, :]), weight)
    norm = g.sum(axis=0)
    total = 0.0
    for x1 in range(e.e1.x_size):
        if px1[x1] <= 0.0 or norm[x1] <= 0.0:
            continue
        px2_given = g[:, x1] / norm[x1]
        pz = px2_given @ ch.q[x1, :, :]
        total += px1[x1] * entropy(pz, base)
    return float(total)


def stage_rewards(state: JointState, e: JointAction, ch: Channel, base: str = "bits") -> tuple:
    """(i1, i2, i3) = (h1, h2, h3) - h0 at this state, clipped at zero.

    Exact values are non-negative; float noise below REWARD_CLIP_TOL is
    clipped silently, noise up to REWARD_ERROR_TOL is clipped with a
    warning, and anything more negative raises NegativeInformation since
    it means the state components are mutually inconsistent.
    """
    base_h0 = h0(state.pi, e, ch, base)
    raw = (
        h1(state.pihat2, state.pi, e, ch, base) - base_h0,
        h2(state.pihat1, state.pi, e, ch, base) - base_h0,
        h3(state.pi, e, ch, base) - base_h0,
    )
    out = []
    for name, v in zip(("i1", "i2", "i3"), raw):
        if v < -REWARD_ERROR_TOL:
            raise NegativeInformation(f"{name} = {v:.3e}; state and action are inconsistent")
        if v < -REWARD_CLIP_TOL:
            warnings.warn(f"{name} = {v:.3e} clipped to 0; beyond float-noise tolerance")
        out.append(max(v, 0.0))
    return tuple(out)


# ---------------------------------------------------------------------------
# Joint controlled-Markov kernel
# ---------------------------------------------------------------------------

def joint_kernel_step(state: JointState, e: JointAction, ch: Channel) -> list:
    """One-step law of the next (pihat1, pihat2, pi) given the action.

    Branches over (x1, x2, z) with weight Q(z|x1,x2) P(x1|pihat1,e1)
    P(x2|pihat2,e2); identical next states (canonicalized) are merged.
    The kernel depends on the policy only through the action argument.
    """
    p1 = induced_input_marginal(state.pihat1, e.e1)
    p2 = induced_input_marginal(state.pihat2, e.e2)
    next_pi = {}
    for z in range(ch.z_size):
        try:
            next_pi[z] = JointBelief(canonicalize(belief_update(state.pi, e, z, ch).p))
        except ZeroProbabilityObservation:
            next_pi[z] = None
    next_hat1 = {
        x1: PrivateBelief(1, canonicalize(private_belief_update(state.pihat1, e.e1, x1).p))
        for x1 in range(e.e1.x_size)
        if p1[x1] > DENOM_MIN
    }
    next_hat2 = {
        x2: PrivateBelief(2, canonicalize(private_belief_update(state.pihat2, e.e2, x2).p))
        for x2 in range(e.e2.x_size)
        if p2[x2] > DENOM_MIN
    }
    merged = {}
    order = []
    for x1, h1next in next_hat1.items():
        for x2, h2next in next_hat2.items():
            for z in range(ch.z_size):
                w = float(ch.q[x1, x2, z] * p1[x1] * p2[x2])
                if w <= DENOM_MIN:
                    continue
                if next_pi[z] is None:
                    raise ZeroProbabilityObservation(
                        "kernel branch has positive weight but the common posterior "
                        "assigns the output zero probability; state is inconsistent"
                    )
                ns = JointState(h1next, h2next, next_pi[z])
                k = ns.key()
                if k in merged:
                    merged[k] = (merged[k][0] + w, merged[k][1])
                else:
                    merged[k] = (w, ns)
                    order.append(k)
    return [(merged[k][0], merged[k][1]) for k in order]


# ---------------------------------------------------------------------------
# Exact evaluation of the directed informations for a policy
# ---------------------------------------------------------------------------

def evaluate_In(
    spec: ProblemSpec,
    policy: PolicyTree,
    ch: Channel,
    n: int,
    lam: LambdaWeights,
    node_cap: int = DEFAULT_NODE_CAP,
) -> DirectedInfoBreakdown:
    """Expected stage rewards over the joint-state tree, step by step.

    The policy picks the action from the common posterior alone; states
    reached with identical canonical triples are merged so each stage
    expectation is a finite exact sum.
    """
    if n < 1:
        raise ValueError("horizon must be at least 1")
    base = spec.log_base
    init = JointState.initial(spec)
    frontier = {init.key(): (1.0, init)}
    total_states = 1
    per1, per2, per3 = [], [], []
    for t in range(n):
        e_of = {}
        s1 = s2 = s3 = 0.0
        for k, (prob, st) in frontier.items():
            e = policy.action_at(t, st.pi)
            e_of[k] = e
            # raw differences, not stage_rewards: at a single state the
            # private-history and common-history conditionings differ, so
            # individual terms may dip below zero on asymmetric channels.
            # Only the expected per-stage values are conditional mutual
            # informations, and those come out nonnegative after the sum.
            base_h0 = h0(st.pi, e, ch, base)
            s1 += prob * (h1(st.pihat2, st.pi, e, ch, base) - base_h0)
            s2 += prob * (h2(st.pihat1, st.pi, e, ch, base) - base_h0)
            s3 += prob * (h3(st.pi, e, ch, base) - base_h0)
        per1.append(s1)
        per2.append(s2)
        per3.append(s3)
        nxt = {}
        for k, (prob, st) in frontier.items():
            for w, ns in joint_kernel_step(st, e_of[k], ch):
                nk = ns.key()
                if nk in nxt:
                    nxt[nk] = (nxt[nk][0] + prob * w, nxt[nk][1])
                else:
                    nxt[nk] = (prob * w, ns)
        total_states += len(nxt)
        if total_states > node_cap:
            raise BudgetExceeded(f"joint-state tree exceeds {node_cap} states at depth {t + 1}")
        frontier = nxt
    return DirectedInfoBreakdown(lam, base, per1, per2, per3)


# ---------------------------------------------------------------------------
# Full-history brute force
# ---------------------------------------------------------------------------

def _assert_history_budget(spec: ProblemSpec, ch: Channel, n: int, cap: int):
    count = spec.m1 * spec.m2 * ch.z_size**n
    if count > cap:
        raise BudgetExceeded(f"{count} histories exceed the cap of {cap}")


def _enumerate_histories(spec: ProblemSpec, policy: PolicyTree, ch: Channel, n: int):
    """All positive-probability (w1, w2, x-sequences, z-sequence) histories.

    Returns (records, action_at_prefix) where each record is the tuple
    (w1, w2, x1seq, x2seq, zseq, probability) and action_at_prefix maps a
    z-prefix to the JointAction the policy plays after it.
    """
    act_at = {}
    paths = []
    stack = [((), JointBelief.uniform(spec.m1, spec.m2))]
    while stack:
        zpref, pi = stack.pop()
        e = policy.action_at(len(zpref), pi)
        act_at[zpref] = e
        for z in range(ch.z_size - 1, -1, -1):
            try:
                nxt = belief_update(pi, e, z, ch)
            except ZeroProbabilityObservation:
                continue
            if len(zpref) + 1 == n:
                paths.append(zpref + (z,))
            else:
                stack.append((zpref + (z,), nxt))
    prior = 1.0 / spec.num_pairs
    records = []
    for zseq in paths:
        for w1 in range(spec.m1):
            for w2 in range(spec.m2):
                x1seq, x2seq = [], []
                prob = prior
                for t, z in enumerate(zseq):
                    e = act_at[zseq[:t]]
                    x1, x2 = e.e1.mapping[w1], e.e2.mapping[w2]
                    x1seq.append(x1)
                    x2seq.append(x2)
                    prob *= ch.q[x1, x2, z]
                if prob > 0.0:
                    records.append((w1, w2, tuple(x1seq), tuple(x2seq), zseq, prob))
    return records, act_at


def _grouped_mi(groups: dict, lnf: float) -> float:
    """Sum over groups of P(group) * I(A; B | group) from joint tables."""
    total = 0.0
    for table in groups.values():
        pg = sum(table.values())
        if pg <= 0.0:
            continue
        pa, pb = defaultdict(float), defaultdict(float)
        for (a, b), p in table.items():
            pa[a] += p
            pb[b] += p
        # with absolute probabilities, sum p log(p pg / (pa pb)) = P(g) I(A;B|g)
        acc = 0.0
        for (a, b), p in table.items():
            if p > 0.0:
                acc += p * math.log(p * pg / (pa[a] * pb[b]))
        total += acc
    return total / lnf


def full_history_In(
    spec: ProblemSpec,
    policy: PolicyTree,
    ch: Channel,
    n: int,
    lam: LambdaWeights,
    history_cap: int = HISTORY_CAP,
) -> DirectedInfoBreakdown:
    """Directed informations straight from P(w1, w2, z_{1:n}) by enumeration.

    No stage-function machinery: each conditional mutual information is
    computed by grouping full histories on the conditioning variables.
    Serves as the independent reference for evaluate_In.
    """
    _assert_history_budget(spec, ch, n, history_cap)
    records, _ = _enumerate_histories(spec, policy, ch, n)
    lnf = ln_factor(spec.log_base)
    per1, per2, per3 = [], [], []
    for t in range(1, n + 1):
        g1 = defaultdict(lambda: defaultdict(float))
        g2 = defaultdict(lambda: defaultdict(float))
        g3 = defaultdict(lambda: defaultdict(float))
        for w1, w2, xs1, xs2, zs, p in records:
            zpast = zs[: t - 1]
            g1[(xs2[:t], zpast)][(xs1[t - 1], zs[t - 1])] += p
            g2[(xs1[:t], zpast)][(xs2[t - 1], zs[t - 1])] += p
            g3[zpast][((xs1[t - 1], xs2[t - 1]), zs[t - 1])] += p
        per1.append(_grouped_mi(g1, lnf))
        per2.append(_grouped_mi(g2, lnf))
        per3.append(_grouped_mi(g3, lnf))
    return DirectedInfoBreakdown(lam, spec.log_base, per1, per2, per3)


# ---------------------------------------------------------------------------
# Structural checkers
# ---------------------------------------------------------------------------

@dataclass
class DeviationReport:
    max_deviation: float
    num_checks: int

    @property
    def passed(self) -> bool:
        return self.max_deviation < 1e-12


def _private_chain(user: int, m: int, xseq: tuple, zpref: tuple, act_at: dict) -> PrivateBelief:
    hat = PrivateBelief.uniform(user, m)
    for tau, x in enumerate(xseq):
        e = act_at[zpref[:tau]]
        hat = private_belief_update(hat, e.e1 if user == 1 else e.e2, x)
    return hat


def check_factorization(
    spec: ProblemSpec,
    policy: PolicyTree,
    ch: Channel,
    n: int,
    history_cap: int = HISTORY_CAP,
) -> DeviationReport:
    """Test the conditional-independence structure of the inputs.

    For every positive-probability joint history prefix, the next input
    pair must satisfy (a) P(x1,x2|prefix) = P(x1|prefix) P(x2|prefix) and
    (b) each factor must equal the private-posterior push-forward
    P(x_i) = sum_{w: e_i(w)=x_i} pihat_i(w).  Both are checked against the
    exact enumerated joint distribution.
    """
    _assert_history_budget(spec, ch, n, history_cap)
    records, act_at = _enumerate_histories(spec, policy, ch, n)
    worst = 0.0
    checks = 0
    for t in range(1, n + 1):
        groups = defaultdict(lambda: defaultdict(float))
        for w1, w2, xs1, xs2, zs, p in records:
            prefix = (xs1[: t - 1], xs2[: t - 1], zs[: t - 1])
            groups[prefix][(xs1[t - 1], xs2[t - 1])] += p
        for (xp1, xp2, zp), table in groups.items():
            pg = sum(table.values())
            joint = {k: v / pg for k, v in table.items()}
            m1 = defaultdict(float)
            m2 = defaultdict(float)
            for (x1, x2), v in joint.items():
                m1[x1] += v
                m2[x2] += v
            for x1 in range(spec.x1_size):
                for x2 in range(spec.x2_size):
                    dev = abs(joint.get((x1, x2), 0.0) - m1[x1] * m2[x2])
                    worst = max(worst, dev)
                    checks += 1
            e = act_at[zp]
            hat1 = _private_chain(1, spec.m1, xp1, zp, act_at)
            hat2 = _private_chain(2, spec.m2, xp2, zp, act_at)
            ind1 = induced_input_marginal(hat1, e.e1)
            ind2 = induced_input_marginal(hat2, e.e2)
            for x1 in range(spec.x1_size):
                worst = max(worst, abs(m1[x1] - ind1[x1]))
            for x2 in range(spec.x2_size):
                worst = max(worst, abs(m2[x2] - ind2[x2]))
            checks += spec.x1_size + spec.x2_size
    return DeviationReport(worst, checks)


def check_kernel_independence(
    spec: ProblemSpec,
    policies: list,
    ch: Channel,
    n: int,
    history_cap: int = HISTORY_CAP,
) -> DeviationReport:
    """Verify the state transition law is the same under every policy.

    Histories from all supplied policies are grouped by the canonical
    (pihat1, pihat2, pi) state they induce and the action taken there;
    within a group, every empirical next-state law must match the
    joint_kernel_step closed form (and hence each other).
    """
    buckets = {}
    for policy in policies:
        _assert_history_budget(spec, ch, n, history_cap)
        records, act_at = _enumerate_histories(spec, policy, ch, n)
        for t in range(1, n + 1):
            groups = defaultdict(lambda: defaultdict(float))
            for w1, w2, xs1, xs2, zs, p in records:
                prefix = (xs1[: t - 1], xs2[: t - 1], zs[: t - 1])
                groups[prefix][(xs1[t - 1], xs2[t - 1], zs[t - 1])] += p
            for (xp1, xp2, zp), table in groups.items():
                e = act_at[zp]
                pi = JointBelief.uniform(spec.m1, spec.m2)
                for tau, z in enumerate(zp):
                    pi = belief_update(pi, act_at[zp[:tau]], z, ch)
                state = JointState(
                    _private_chain(1, spec.m1, xp1, zp, act_at),
                    _private_chain(2, spec.m2, xp2, zp, act_at),
                    JointBelief(canonicalize(pi.p)),
                )
                pg = sum(table.values())
                law = defaultdict(float)
                for (x1, x2, z), v in table.items():
                    ns = JointState(
                        PrivateBelief(1, canonicalize(private_belief_update(state.pihat1, e.e1, x1).p)),
                        PrivateBelief(2, canonicalize(private_belief_update(state.pihat2, e.e2, x2).p)),
                        JointBelief(canonicalize(belief_update(state.pi, e, z, ch).p)),
                    )
                    law[ns.key()] += v / pg
                bkey = (state.key(), e.e1.mapping, e.e2.mapping)
                buckets.setdefault(bkey, []).append((dict(law), state, e))
    worst = 0.0
    checks = 0
    for entries in buckets.values():
        _, state, e = entries[0]
        closed = {}
        for w, ns in joint_kernel_step(state, e, ch):
            closed[ns.key()] = closed.get(ns.key(), 0.0) + w
        for law, _, _ in entries:
            keys = set(law) | set(closed)
            for k in keys:
                worst = max(worst, abs(law.get(k, 0.0) - closed.get(k, 0.0)))
                checks += 1
    return DeviationReport(worst, checks)


# ---------------------------------------------------------------------------
# Inner-bound search
# ---------------------------------------------------------------------------

@dataclass
class CnSearchResult:
    value: float
    policy: PolicyTree
    breakdown: DirectedInfoBreakdown
    num_policies: int
    bound_type: str = BOUND_TYPE


def search_Cn_lambda(
    spec: ProblemSpec,
    ch: Channel,
    n: int,
    lam: LambdaWeights,
    action_set: Optional[list] = None,
    policy_cap: int = POLICY_CAP,
    node_cap: int = DEFAULT_NODE_CAP,
) -> CnSearchResult:
    """Maximize I_n(lambda) over deterministic posterior-tree policies.

    Enumerates one action per reachable common posterior, depth by depth,
    evaluating each complete policy exactly.  The optimization class is
    the structured deterministic one, so the result is a lower bound on
    the supremum over all admissible input distributions; ties keep the
    first maximizer in enumeration order.
    """
    actions = list(action_set) if action_set is not None else all_joint_actions(spec)
    root = JointBelief.uniform(spec.m1, spec.m2)
    assignment: dict = {}
    best: dict = {"result": None, "count": 0}

    def expand(t: int, frontier: list):
        if t == n:
            best["count"] += 1
            if best["count"] > policy_cap:
                raise BudgetExceeded(f"policy enumeration exceeds the cap of {policy_cap}")
            policy = PolicyTree(n, actions, dict(assignment))
            bd = evaluate_In(spec, policy, ch, n, lam, node_cap=node_cap)
            cur = best["result"]
            if cur is None or bd.in_lambda > cur[0].in_lambda:
                best["result"] = (bd, policy)
            return
        keys = [pi.key() for pi in frontier]
        for combo in itertools.product(range(len(actions)), repeat=len(frontier)):
            children = {}
            for pi, key, a_idx in zip(frontier, keys, combo):
                assignment[(t, key)] = a_idx
                e = actions[a_idx]
                for z in range(ch.z_size):
                    try:
                        child = JointBelief(canonicalize(belief_update(pi, e, z, ch).p))
                    except ZeroProbabilityObservation:
                        continue
                    children.setdefault(child.key(), child)
            expand(t + 1, list(children.values()))
        for key in keys:
            assignment.pop((t, key), None)

    expand(0, [root])
    bd, policy = best["result"]
    return CnSearchResult(bd.in_lambda, policy, bd, best["count"])


@dataclass
class SweepRow:
    lam: LambdaWeights
    breakdown: Optional[DirectedInfoBreakdown]
    error: Optional[str] = None


def lambda_sweep(
    spec: ProblemSpec,
    ch: Channel,
    n: int,
    lambdas: list,
    action_set: Optional[list] = None,
    policy_cap: int = POLICY_CAP,
    node_cap: int = DEFAULT_NODE_CAP,
) -> list:
    """search_Cn_lambda once per weight vector; failures stay in their row."""
    from .errors import MacfbError

    rows = []
    for lam in lambdas:
        try:
            res = search_Cn_lambda(
                spec, ch, n, lam,
                action_set=action_set, policy_cap=policy_cap, node_cap=node_cap,
            )
            rows.append(SweepRow(lam, res.breakdown))
        except (MacfbError, ValueError) as exc:
            rows.append(SweepRow(lam, None, error=f"{type(exc).__name__}: {exc}"))
    return rows


CSV_HEADER = "λ1,λ2,λ3,In_lambda,I1,I2,I3"


def sweep_rows_to_csv(rows: list) -> str:
    """Render sweep rows as CSV; failed rows carry the error in In_lambda."""
    lines = [CSV_HEADER]
    for row in rows:
        l1, l2, l3 = row.lam.as_tuple()
        if row.breakdown is None:
            lines.append(f"{l1:.17g},{l2:.17g},{l3:.17g},ERROR({row.error}),,,")
        else:
            bd = row.breakdown
            lines.append(
                f"{l1:.17g},{l2:.17g},{l3:.17g},{bd.in_lambda:.17g},"
                f"{bd.avg_i1:.17g},{bd.avg_i2:.17g},{bd.avg_i3:.17g}"
            )
    return "\n".join(lines) + "\n"
