"""Entropy and divergence primitives with explicit log-base handling.

Conventions: 0*log(0) = 0, and probabilities below 1e-300 are treated as
exact zeros so logs never underflow.
"""

import numpy as np
from scipy.special import rel_entr, xlogy

UNDERFLOW_TOL = 1e-300

_LN_FACTOR = {"bits": float(np.log(2.0)), "nats": 1.0}


def ln_factor(base: str) -> float:
    """Natural-log divisor for the requested unit ('bits' or 'nats')."""
    try:
        return _LN_FACTOR[base]
    except KeyError:
        raise ValueError(f"unknown log base {base!r}, expected 'bits' or 'nats'") from None


def entropy(p, base: str = "bits") -> float:
    """Shannon entropy of a probability vector (any shape, summed over all axes)."""
    p = np.asarray(p, dtype=float)
    p = np.where(p < UNDERFLOW_TOL, 0.0, p)
    return float(-xlogy(p, p).sum() / ln_factor(base))


def binary_entropy(p: float, base: str = "bits") -> float:
    return entropy([p, 1.0 - p], base)


def kl_divergence(p, q, base: str = "bits") -> float:
    """D(p || q); returns +inf when p puts mass where q does not."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.where(p < UNDERFLOW_TOL, 0.0, p)
    q = np.where(q < UNDERFLOW_TOL, 0.0, q)
    return float(rel_entr(p, q).sum() / ln_factor(base))
