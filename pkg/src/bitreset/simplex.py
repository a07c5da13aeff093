"""Probability-vector primitives.

Entropies and divergences are in natural units (k_B = 1).  The convention
``0 ln 0 = 0`` is used throughout.  Binary distributions are represented by
the weight of logical state 1 alone (``p1``; ``p0 = 1 - p1``), which keeps the
binary helpers vectorizable over numpy arrays.
"""

import logging
import math
from typing import NamedTuple

import numpy as np

from .errors import DistributionError

logger = logging.getLogger(__name__)

NORM_ATOL = 1e-12
NORM_RENORM_LIMIT = 1e-8


def as_distribution(p, name="p"):
    """Validate ``p`` as a probability vector and return it as a float array.

    Sum errors up to 1e-12 pass silently, up to 1e-8 are renormalized with a
    warning, anything larger raises :class:`DistributionError`.
    """
    arr = np.array(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DistributionError(f"{name} must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise DistributionError(f"{name} has non-finite weights")
    if arr.min() < -NORM_ATOL:
        raise DistributionError(f"{name} has a negative weight {arr.min():.3e}")
    arr = np.clip(arr, 0.0, None)
    err = abs(arr.sum() - 1.0)
    if err > NORM_RENORM_LIMIT:
        raise DistributionError(f"{name} sums to {arr.sum():.12g}, not 1")
    if err > NORM_ATOL:
        logger.warning("%s off normalization by %.2e; renormalizing", name, err)
        arr = arr / arr.sum()
    return arr


def _xlogy_ratio(p, q):
    """Elementwise p ln(p/q) with 0 ln 0 = 0 and +inf where p > 0, q = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(np.broadcast(p, q).shape)
    p, q = np.broadcast_arrays(p, q)
    pos = p > 0
    bad = pos & (q <= 0)
    ok = pos & ~bad
    out[ok] = p[ok] * np.log(p[ok] / q[ok])
    out[bad] = np.inf
    return out


def shannon_entropy(p):
    """Return ``-sum p_i ln p_i`` for a probability vector."""
    p = as_distribution(p)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def relative_entropy(p, q):
    """Relative entropy ``D[p||q] = sum p_i ln(p_i / q_i)`` in nats.

    Returns ``math.inf`` when some ``p_i > 0`` meets ``q_i = 0``.
    """
    p = as_distribution(p, "p")
    q = as_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    return float(np.sum(_xlogy_ratio(p, q)))


def relent_rows(p, q):
    """Row-wise relative entropy along the last axis, without validation.

    Used on the hot paths (quadrature nodes, sweeps) where inputs come from the
    engine and are already known to be distributions.
    """
    return np.sum(_xlogy_ratio(p, q), axis=-1)


def binary_relative_entropy(r1, s1):
    """``D[r||s]`` for binary distributions given by their state-1 weights.

    Broadcasts over arrays.
    """
    r1 = np.asarray(r1, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    out = _xlogy_ratio(r1, s1) + _xlogy_ratio(1.0 - r1, 1.0 - s1)
    return out if out.ndim else float(out)


def _check_unit_interval(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return x


def symmetric_relative_entropy(r1, s1):
    """``J[r,s] = D[r||s] + D[s||r]`` for binary distributions.

    Boundary distributions (a zero weight in either argument) return
    ``inf`` unless ``r == s``.
    """
    r1 = _check_unit_interval(r1, "r1")
    s1 = _check_unit_interval(s1, "s1")
    j = np.asarray(binary_relative_entropy(r1, s1) + binary_relative_entropy(s1, r1))
    boundary = (r1 <= 0) | (r1 >= 1) | (s1 <= 0) | (s1 >= 1)
    j = np.where(boundary & (r1 != s1), np.inf, j)
    return j if j.ndim else float(j)


def norm1_distance(p, q):
    """1-norm distance ``sum |p_a - q_a|``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sum(np.abs(p - q)))


def binary_entropy(eps):
    """Binary entropy ``-eps ln eps - (1-eps) ln(1-eps)`` in nats."""
    eps = _check_unit_interval(eps, "eps")
    h = -(_xlogy_ratio(eps, 1.0) + _xlogy_ratio(1.0 - eps, 1.0))
    return h if h.ndim else float(h)


def log_sum_lower_bound(u, v):
    """Both sides of the log-sum inequality.

    Returns ``(sum u_i ln(u_i/v_i), (sum u) ln(sum u / sum v))``; the first is
    never smaller than the second, with equality iff ``u`` is proportional to
    ``v``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.size == 0 or v.size == 0:
        raise ValueError("log-sum inequality needs non-empty sequences")
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    if np.any(u < 0) or np.any(v <= 0):
        raise ValueError("need u_i >= 0 and v_i > 0")
    lhs = float(np.sum(_xlogy_ratio(u, v)))
    rhs = float(_xlogy_ratio(u.sum(), v.sum()))
    return lhs, rhs


class AsymmetryWitness(NamedTuple):
    holds: bool
    forward: float  # D[r||s]
    reverse: float  # D[s||r]


def binary_relent_asymmetry(r1, s1):
    """Witness ``D[r||s] >= D[s||r]`` for binary ``s1 <= r1 <= 1/2``."""
    r1 = float(r1)
    s1 = float(s1)
    if not (0.0 < s1 <= r1 <= 0.5):
        raise ValueError(f"need 0 < s1 <= r1 <= 1/2, got r1={r1}, s1={s1}")
    fwd = binary_relative_entropy(r1, s1)
    rev = binary_relative_entropy(s1, r1)
    return AsymmetryWitness(fwd >= rev - 1e-15, fwd, rev)


def relent_convexity_bound(p1, q1, x1, y1, alpha):
    """Both sides of the mixture lower bound on a binary relative entropy.

    ``lhs = D[p||q]`` and
    ``rhs = a D[x||q] + (1-a) D[y||q] + (a^2 - a)(D[x||y] + D[y||x])``.

    Preconditions checked here: ``p0 >= p1``, ``p1 >= a x1 + (1-a) y1``,
    ``q1 <= p1``, ``a`` in [0, 1], all weights strictly interior.  These alone
    do not guarantee ``lhs >= rhs``; the inequality also needs the mixture
    ``a x1 + (1-a) y1`` to stay at or above ``q1`` (see
    :func:`mixture_above_reference`).  Broadcasts over arrays.
    """
    p1, q1, x1, y1, alpha = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (p1, q1, x1, y1, alpha))
    )
    interior = all(np.all((v > 0) & (v < 1)) for v in (p1, q1, x1, y1))
    if not interior:
        raise ValueError("binary distributions must be strictly interior")
    if np.any((alpha < 0) | (alpha > 1)):
        raise ValueError("alpha must lie in [0, 1]")
    if np.any(p1 > 0.5):
        raise ValueError("need p0 >= p1")
    mix = alpha * x1 + (1 - alpha) * y1
    if np.any(mix > p1 * (1 + 1e-12)):
        raise ValueError("need p1 >= alpha*x1 + (1-alpha)*y1")
    if np.any(q1 > p1):
        raise ValueError("need q1 <= p1")
    brel = binary_relative_entropy
    lhs = np.asarray(brel(p1, q1))
    rhs = np.asarray(
        alpha * brel(x1, q1)
        + (1 - alpha) * brel(y1, q1)
        + (alpha**2 - alpha) * (brel(x1, y1) + brel(y1, x1))
    )
    if lhs.ndim == 0:
        return float(lhs), float(rhs)
    return lhs, rhs


def mixture_above_reference(q1, x1, y1, alpha):
    """True where ``alpha*x1 + (1-alpha)*y1 >= q1``."""
    return np.asarray(alpha) * np.asarray(x1) + (1 - np.asarray(alpha)) * np.asarray(y1) >= np.asarray(q1)
