"""Core model: alphabets, channel, beliefs, encoder functions, Bayes recursions.

Two senders hold private messages w1, w2 and share a discrete memoryless
multiple access channel Q(z | x1, x2) whose output is fed back noiselessly
to both of them.  The receiver-side posterior over message pairs (the joint
belief) and each sender's posterior over her own message (the private
belief) evolve by the recursions implemented here; everything downstream
(dynamic programming, cost functionals, directed-information evaluation)
is built on these updates.

Conventions used throughout the package:
  * channel input/output symbols are 0-based indices,
  * messages are numbered from 1 in user-facing results (decoder output),
    while belief tables are plain 0-based arrays,
  * message priors are uniform.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeEntry,
    NotStochastic,
    ZeroProbabilityInput,
    ZeroProbabilityObservation,
)

# Tolerances fixed once, package-wide.
SNAP_TOL = 1e-15        # belief entries below this snap to zero
KEY_DECIMALS = 12       # decimal digits kept when forming memo keys
PROB_ATOL = 1e-12       # normalization tolerance for belief invariants
ROW_SUM_ATOL = 1e-9     # stochasticity tolerance for channel rows
DENOM_MIN = 1e-300      # smallest Bayes denominator accepted


@dataclass(frozen=True)
class ProblemSpec:
    """Alphabet and message-set cardinalities plus the log unit in use."""

    x1_size: int
    x2_size: int
    z_size: int
    m1: int
    m2: int
    log_base: str = "bits"

    def __post_init__(self):
        for name in ("x1_size", "x2_size", "z_size", "m1", "m2"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.m1 * self.m2 < 2:
            raise ValueError("need m1*m2 >= 2 for a nontrivial problem")
        if self.log_base not in ("bits", "nats"):
            raise ValueError(f"log_base must be 'bits' or 'nats', got {self.log_base!r}")

    @property
    def num_pairs(self) -> int:
        return self.m1 * self.m2


@dataclass(eq=False)
class Channel:
    """Conditional law q[x1, x2, z] over the output alphabet."""

    q: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.ndim != 3:
            raise DimensionMismatch(f"channel table must be 3-d, got shape {self.q.shape}")

    @property
    def x1_size(self) -> int:
        return self.q.shape[0]

    @property
    def x2_size(self) -> int:
        return self.q.shape[1]

    @property
    def z_size(self) -> int:
        return self.q.shape[2]


def validate_channel(spec: ProblemSpec, q_raw) -> Channel:
    """Check dimensions, non-negativity and row-stochasticity of a raw table."""
    q = np.asarray(q_raw, dtype=float)
    expected = (spec.x1_size, spec.x2_size, spec.z_size)
    if q.shape != expected:
        raise DimensionMismatch(f"channel table has shape {q.shape}, expected {expected}")
    if np.any(q < 0):
        idx = tuple(int(i) for i in np.argwhere(q < 0)[0])
        raise NegativeEntry(f"negative channel entry at {idx}")
    sums = q.sum(axis=2)
    bad = np.abs(sums - 1.0) > ROW_SUM_ATOL
    if np.any(bad):
        x1, x2 = (int(i) for i in np.argwhere(bad)[0])
        raise NotStochastic(
            f"row (x1={x1}, x2={x2}) sums to {sums[x1, x2]:.12g}, outside 1 +/- {ROW_SUM_ATOL}"
        )
    return Channel(q)


# ---------------------------------------------------------------------------
# Built-in channel constructors
# ---------------------------------------------------------------------------

def uniform_channel(spec: ProblemSpec) -> Channel:
    """Output independent of the inputs: q = 1/|Z| everywhere."""
    q = np.full((spec.x1_size, spec.x2_size, spec.z_size), 1.0 / spec.z_size)
    return validate_channel(spec, q)


def identity_pair_channel(spec: ProblemSpec) -> Channel:
    """Noiseless channel revealing the input pair: z = x1*|X2| + x2."""
    if spec.z_size != spec.x1_size * spec.x2_size:
        raise DimensionMismatch(
            f"identity-pair channel needs z_size == x1_size*x2_size, got {spec.z_size}"
        )
    q = np.zeros((spec.x1_size, spec.x2_size, spec.z_size))
    for x1 in range(spec.x1_size):
        for x2 in range(spec.x2_size):
            q[x1, x2, x1 * spec.x2_size + x2] = 1.0
    return validate_channel(spec, q)


def xor_bsc_channel(spec: ProblemSpec, p: float) -> Channel:
    """Binary channel: z equals x1 XOR x2, flipped with probability p."""
    if (spec.x1_size, spec.x2_size, spec.z_size) != (2, 2, 2):
        raise DimensionMismatch("xor-bsc requires binary alphabets (2, 2, 2)")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must be in [0, 1], got {p}")
    q = np.empty((2, 2, 2))
    for x1, x2, z in itertools.product(range(2), repeat=3):
        q[x1, x2, z] = 1.0 - p if z == x1 ^ x2 else p
    return validate_channel(spec, q)


def random_channel(spec: ProblemSpec, seed: int) -> Channel:
    """Rows drawn from a flat Dirichlet; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(spec.z_size), size=(spec.x1_size, spec.x2_size))
    return validate_channel(spec, q)


# ---------------------------------------------------------------------------
# Beliefs
# ---------------------------------------------------------------------------

def canonicalize(p: np.ndarray) -> np.ndarray:
    """Snap tiny entries to zero and renormalize (shape preserved)."""
    q = np.where(p < SNAP_TOL, 0.0, np.asarray(p, dtype=float))
    s = q.sum()
    if s <= 0.0:
        raise ValueError("belief has no mass after snapping")
    return q / s


def canonical_key(p: np.ndarray) -> bytes:
    """Memo key: canonicalize, round to KEY_DECIMALS, take raw bytes.

    Two beliefs are treated as the same node iff their keys match.
    """
    q = np.round(canonicalize(p), KEY_DECIMALS)
    q = np.where(q == 0.0, 0.0, q)  # normalize -0.0
    return np.ascontiguousarray(q).tobytes()


@dataclass(eq=False)
class JointBelief:
    """Posterior over message pairs; p[w1-1, w2-1] with shape (m1, m2)."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.ndim != 2:
            raise ValueError(f"joint belief must be 2-d, got shape {self.p.shape}")
        if np.any(self.p < 0):
            raise ValueError("joint belief has a negative entry")
        if abs(self.p.sum() - 1.0) > PROB_ATOL:
            raise ValueError(f"joint belief sums to {self.p.sum():.15g}, not 1")

    @classmethod
    def uniform(cls, m1: int, m2: int) -> "JointBelief":
        return cls(np.full((m1, m2), 1.0 / (m1 * m2)))

    def canonical(self) -> "JointBelief":
        return JointBelief(canonicalize(self.p))

    def key(self) -> bytes:
        return canonical_key(self.p)


@dataclass(eq=False)
class PrivateBelief:
    """One sender's posterior over her own message."""

    user: int
    p: np.ndarray

    def __post_init__(self):
        if self.user not in (1, 2):
            raise ValueError(f"user must be 1 or 2, got {self.user}")
        self.p = np.asarray(self.p, dtype=float)
        if self.p.ndim != 1:
            raise ValueError("private belief must be 1-d")
        if np.any(self.p < 0):
            raise ValueError("private belief has a negative entry")
        if abs(self.p.sum() - 1.0) > PROB_ATOL:
            raise ValueError(f"private belief sums to {self.p.sum():.15g}, not 1")

    @classmethod
    def uniform(cls, user: int, m: int) -> "PrivateBelief":
        return cls(user, np.full(m, 1.0 / m))

    def key(self) -> bytes:
        return canonical_key(self.p)


# ---------------------------------------------------------------------------
# Encoder functions (the DP actions)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderFunction:
    """A map from one user's message set into her input alphabet.

    `mapping[w-1]` is the 0-based symbol sent for message w.  The alphabet
    size is carried so the symbol-validity invariant is checkable and the
    induced input distribution covers the whole alphabet.
    """

    user: int
    mapping: tuple
    x_size: int

    def __post_init__(self):
        if self.user not in (1, 2):
            raise ValueError(f"user must be 1 or 2, got {self.user}")
        object.__setattr__(self, "mapping", tuple(int(v) for v in self.mapping))
        if not self.mapping:
            raise ValueError("encoder mapping is empty")
        for v in self.mapping:
            if not 0 <= v < self.x_size:
                raise ValueError(f"symbol {v} outside alphabet of size {self.x_size}")

    @property
    def num_messages(self) -> int:
        return len(self.mapping)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.mapping, dtype=np.intp)


@dataclass(frozen=True)
class JointAction:
    """A pair of encoder functions, one per user."""

    e1: EncoderFunction
    e2: EncoderFunction

    def __post_init__(self):
        if self.e1.user != 1 or self.e2.user != 2:
            raise ValueError("joint action must pair a user-1 and a user-2 encoder")


def all_encoder_functions(user: int, x_size: int, m: int) -> list:
    """Every map W -> X, ordered as base-|X| numerals of the value sequence."""
    return [
        EncoderFunction(user, mapping, x_size)
        for mapping in itertools.product(range(x_size), repeat=m)
    ]


def all_joint_actions(spec: ProblemSpec) -> list:
    """All joint actions in row-major (e1, e2) order."""
    e1s = all_encoder_functions(1, spec.x1_size, spec.m1)
    e2s = all_encoder_functions(2, spec.x2_size, spec.m2)
    return [JointAction(e1, e2) for e1 in e1s for e2 in e2s]


def identity_encoders(spec: ProblemSpec) -> JointAction:
    """Message w sent as symbol w-1; requires |Xi| >= Mi."""
    if spec.x1_size < spec.m1 or spec.x2_size < spec.m2:
        raise ValueError("identity encoders need alphabets at least as large as message sets")
    return JointAction(
        EncoderFunction(1, tuple(range(spec.m1)), spec.x1_size),
        EncoderFunction(2, tuple(range(spec.m2)), spec.x2_size),
    )


def action_likelihood(ch: Channel, e: JointAction) -> np.ndarray:
    """Per-pair output law: L[w1, w2, z] = q[e1(w1), e2(w2), z]."""
    return ch.q[e.e1.as_array()[:, None], e.e2.as_array()[None, :], :]


# ---------------------------------------------------------------------------
# Bayes recursions
# ---------------------------------------------------------------------------

def belief_update(pi: JointBelief, e: JointAction, z: int, ch: Channel) -> JointBelief:
    """One step of the common-information posterior recursion.

    pi'(w1, w2) = q(z | e1(w1), e2(w2)) * pi(w1, w2) / normalizer.  The
    recursion is policy independent: it only sees the realized action and
    output.
    """
    if not 0 <= z < ch.z_size:
        raise ValueError(f"output symbol {z} outside alphabet of size {ch.z_size}")
    like = action_likelihood(ch, e)[:, :, z]
    numer = like * pi.p
    denom = numer.sum()
    if denom <= DENOM_MIN:
        raise ZeroProbabilityObservation(
            f"output z={z} has probability {denom:.3g} under the current belief"
        )
    return JointBelief(numer / denom)


def private_belief_update(pihat: PrivateBelief, e_i: EncoderFunction, x_i: int) -> PrivateBelief:
    """Condition a private belief on the sender's own transmitted symbol.

    Renormalizes onto the preimage {w : e_i(w) = x_i}.
    """
    if pihat.user != e_i.user:
        raise ValueError("private belief and encoder belong to different users")
    mask = e_i.as_array() == x_i
    numer = np.where(mask, pihat.p, 0.0)
    denom = numer.sum()
    if denom <= DENOM_MIN:
        raise ZeroProbabilityInput(
            f"input x={x_i} unreachable under this encoder and private belief"
        )
    return PrivateBelief(pihat.user, numer / denom)


def induced_input_marginal(pihat: PrivateBelief, e_i: EncoderFunction) -> np.ndarray:
    """Distribution of the channel input: P(x) = sum of pihat over e_i^{-1}(x)."""
    if pihat.user != e_i.user:
        raise ValueError("private belief and encoder belong to different users")
    return np.bincount(e_i.as_array(), weights=pihat.p, minlength=e_i.x_size)


def ml_decode(pi: JointBelief) -> tuple:
    """Maximum-likelihood message pair, 1-based, smallest pair on ties."""
    flat = int(np.argmax(pi.p))  # argmax scans row-major: lexicographic tie-break
    m2 = pi.p.shape[1]
    return (flat // m2 + 1, flat % m2 + 1)


def terminal_cost(pi: JointBelief) -> float:
    """Probability of error under ML decoding of this belief: 1 - max pi."""
    return float(1.0 - pi.p.max())


def direct_posterior(spec: ProblemSpec, ch: Channel, actions, outputs) -> JointBelief:
    """Posterior over message pairs by brute-force enumeration of the history.

    Multiplies the per-step likelihoods q(z_t | e_t(w1), e_t(w2)) over the
    whole history and normalizes once; serves as the independent reference
    for the recursive update.
    """
    if len(actions) != len(outputs):
        raise ValueError("history needs one action per output")
    weight = np.full((spec.m1, spec.m2), 1.0 / spec.num_pairs)
    for e, z in zip(actions, outputs):
        weight = weight * action_likelihood(ch, e)[:, :, z]
    total = weight.sum()
    if total <= DENOM_MIN:
        raise ZeroProbabilityObservation("history has zero probability")
    return JointBelief(weight / total)


# ---------------------------------------------------------------------------
# Exact-rational helpers (used by the oracle paths)
# ---------------------------------------------------------------------------

def channel_fractions(ch: Channel) -> tuple:
    """Channel table as nested tuples of exact Fractions.

    Each row is renormalized by its exact sum: float rows are only
    stochastic to within ROW_SUM_ATOL, and exact-arithmetic identities
    (for one, the agreement between the dynamic program and the
    strategy-enumeration oracle) hold for exactly stochastic rows only.
    """
    out = []
    for plane in ch.q:
        rows = []
        for row in plane:
            exact = [Fraction(v) for v in row]
            total = sum(exact)
            rows.append(tuple(v / total for v in exact))
        out.append(tuple(rows))
    return tuple(out)


def uniform_fraction_belief(m1: int, m2: int) -> tuple:
    """Flattened (row-major) uniform belief as Fractions."""
    return (Fraction(1, m1 * m2),) * (m1 * m2)
