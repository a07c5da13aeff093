"""Projection of microstates onto a logical bit.

A :class:`BitPartition` splits the microstates into blocks 0 and 1.  The bit
distribution is the block sum, and the effective bit rates are

    G01 = sum_{i in 0, j in 1} G_ij p_j / P1   (1 -> 0)
    G10 = sum_{i in 1, j in 0} G_ij p_j / P0   (0 -> 1)

so that ``dP0/dt = G01 P1 - G10 P0`` holds exactly.  The swap rate is
``mu = G01 + G10`` and the bit relaxes as ``dP/dt = mu (P_st - P)`` toward
``P_st = [G01, G10] / mu``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .simplex import relent_rows

logger = logging.getLogger(__name__)

UNDERFLOW = 1e-300


class BitPartition:
    """Disjoint, exhaustive split of ``range(n)`` into blocks 0 and 1."""

    def __init__(self, omega0, omega1):
        o0 = sorted(int(i) for i in omega0)
        o1 = sorted(int(i) for i in omega1)
        if not o0 or not o1:
            raise ValueError("both blocks must be non-empty")
        if set(o0) & set(o1):
            raise ValueError("blocks must be disjoint")
        n = len(o0) + len(o1)
        if set(o0) | set(o1) != set(range(n)) or len(set(o0)) != len(o0) or len(set(o1)) != len(o1):
            raise ValueError(f"blocks must cover 0..{n - 1} exactly once")
        self.omega0 = np.array(o0)
        self.omega1 = np.array(o1)
        self.n = n
        self.mask1 = np.zeros(n, dtype=bool)
        self.mask1[o1] = True

    @classmethod
    def halves(cls, n):
        """Lower half of the indices in block 0, upper half in block 1."""
        return cls(range(n // 2), range(n // 2, n))

    @classmethod
    def from_labels(cls, labels):
        labels = np.asarray(labels)
        return cls(np.nonzero(labels == 0)[0], np.nonzero(labels == 1)[0])

    def __repr__(self):
        return f"BitPartition({self.omega0.tolist()}, {self.omega1.tolist()})"

    def _check(self, size):
        if size != self.n:
            raise ValueError(f"partition covers {self.n} states, got {size}")


def coarse_state(p, part):
    """Block sums ``[P0, P1]`` (works along the last axis)."""
    p = np.asarray(p, dtype=float)
    part._check(p.shape[-1])
    P1 = p[..., part.mask1].sum(axis=-1)
    P0 = p[..., ~part.mask1].sum(axis=-1)
    return np.stack([P0, P1], axis=-1)


def coarse_rates(rates, p, part):
    """Effective bit rates ``(G01, G10)``; broadcasts over leading axes.

    A block whose probability is below 1e-300 gets zero outgoing bit rate,
    since the flow out of it vanishes as well.
    """
    G = np.asarray(rates, dtype=float)
    p = np.asarray(p, dtype=float)
    part._check(p.shape[-1])
    m1 = part.mask1
    F = G * p[..., None, :]
    flow_1to0 = F[..., ~m1, :][..., :, m1].sum(axis=(-1, -2))
    flow_0to1 = F[..., m1, :][..., :, ~m1].sum(axis=(-1, -2))
    P = coarse_state(p, part)
    P0, P1 = P[..., 0], P[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        g01 = np.where(P1 > UNDERFLOW, flow_1to0 / np.where(P1 > UNDERFLOW, P1, 1.0), 0.0)
        g10 = np.where(P0 > UNDERFLOW, flow_0to1 / np.where(P0 > UNDERFLOW, P0, 1.0), 0.0)
    g01 = np.clip(g01, 0.0, None)
    g10 = np.clip(g10, 0.0, None)
    if g01.ndim == 0:
        return float(g01), float(g10)
    return g01, g10


def coarse_entropy_production_rate(g01, g10, P1):
    """``(G01 P1 - G10 P0) ln(G01 P1 / (G10 P0))``; zero when both flows vanish."""
    g01, g10, P1 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (g01, g10, P1)))
    a = g01 * P1
    b = g10 * (1.0 - P1)
    out = np.zeros(a.shape)
    both = (a > 0) & (b > 0)
    out[both] = (a[both] - b[both]) * (np.log(a[both]) - np.log(b[both]))
    out[(a > 0) != (b > 0)] = np.inf
    return out if out.ndim else float(out)


def coarse_stationary_state(g01, g10):
    """``P_st = [G01, G10] / (G01 + G10)``."""
    mu = g01 + g10
    if not mu > 0:
        raise DegenerateInputError("both bit rates vanish; no stationary state")
    return np.array([g01 / mu, g10 / mu])


def swap_rate_upper_bound(rates, part):
    """State-independent bound
    ``sum_{i in 0} max_{j in 1} G_ij + sum_{j in 1} max_{i in 0} G_ji``.
    Broadcasts over leading axes."""
    G = np.asarray(rates, dtype=float)
    part._check(G.shape[-1])
    m1 = part.mask1
    into0 = G[..., ~m1, :][..., :, m1]  # rows in block 0, columns in block 1
    into1 = G[..., m1, :][..., :, ~m1]
    return into0.max(axis=-1).sum(axis=-1) + into1.max(axis=-1).sum(axis=-1)


def swap_rate_local_equilibrium(rates, gamma, part):
    """``omega = G^bit_{a,abar} / gamma^bit_a`` evaluated in local equilibrium.

    Under local equilibrium the bit rates do not depend on the block weights,
    and ``mu = omega`` for either block.
    """
    gamma = np.asarray(gamma, dtype=float)
    g01, g10 = coarse_rates(rates, gamma, part)
    gb = coarse_state(gamma, part)
    return np.asarray(g01) / gb[..., 0]


def local_equilibrium_check(p, gamma, part):
    """Largest relative spread of ``p_i / gamma_i`` within a block (0 = exact)."""
    p = np.asarray(p, dtype=float)
    g = gamma.gamma if hasattr(gamma, "gamma") else np.asarray(gamma, dtype=float)
    if np.any(g <= 0):
        raise ValueError("thermal weights must be strictly positive")
    part._check(p.size)
    ratio = p / g
    dev = 0.0
    for block in (part.omega0, part.omega1):
        r = ratio[block]
        scale = r.mean()
        if scale > 0:
            dev = max(dev, float((r.max() - r.min()) / scale))
    return dev


def coarse_relative_entropy_pair(p, gamma, part):
    """``(D[p||gamma], D[P^bit||gamma^bit])``; broadcasts over rows."""
    p = np.asarray(p, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    fine = relent_rows(p, gamma)
    coarse = relent_rows(coarse_state(p, part), coarse_state(gamma, part))
    return fine, coarse


@dataclass
class CoarseTrace:
    """Bit-level view of a trajectory.

    Sample-level arrays share the trajectory's time grid.  ``Sigma_bit`` and
    ``mu_integral`` are cumulative integrals evaluated on the trajectory's
    dense output.
    """

    times: np.ndarray
    P_bit: np.ndarray
    gamma_bit: np.ndarray
    Gamma01: np.ndarray
    Gamma10: np.ndarray
    mu: np.ndarray
    P_st: np.ndarray
    Sigma_bit: np.ndarray
    mu_integral: np.ndarray
    beta: float
    partition: BitPartition

    @property
    def tau(self):
        return float(self.times[-1] - self.times[0])

    @property
    def mu_avg(self):
        """Time-averaged swap rate over the run."""
        return float(self.mu_integral[-1] / self.tau) if self.tau > 0 else float(self.mu[0])

    @property
    def eps(self):
        """Reset error: final weight of logical state 1."""
        return float(self.P_bit[-1, 1])

    @property
    def D_eps(self):
        return float(relent_rows(self.P_bit[-1], self.gamma_bit[-1]))

    def mu_avg_trapezoid(self):
        h = np.diff(self.times)
        return float(np.sum(0.5 * h * (self.mu[:-1] + self.mu[1:])) / self.tau)

    def sigma_bit_trapezoid(self):
        rate = coarse_entropy_production_rate(self.Gamma01, self.Gamma10, self.P_bit[:, 1])
        h = np.diff(self.times)
        change = np.abs(np.diff(rate)) > 0.1 * np.maximum(np.abs(rate[:-1]), 1e-300)
        if np.any(change & (h > 0)):
            logger.warning("coarse production rate changes by more than 10 percent between samples; refine dt_max")
        return float(np.sum(0.5 * h * (rate[:-1] + rate[1:])))

    def to_columns(self):
        return {
            "t": self.times,
            "P0": self.P_bit[:, 0],
            "P1": self.P_bit[:, 1],
            "gamma1": self.gamma_bit[:, 1],
            "Gamma01": self.Gamma01,
            "Gamma10": self.Gamma10,
            "mu": self.mu,
            "Pst1": self.P_st[:, 1],
            "Sigma_bit": self.Sigma_bit,
        }


def coarse_trace(traj, part):
    """Build the :class:`CoarseTrace` of a trajectory under ``part``."""
    part._check(traj.n_levels)
    gamma, _ = traj.thermal()
    G = traj.generators_at(traj.times, traj.energies)
    g01, g10 = coarse_rates(G, traj.states, part)
    mu = g01 + g10
    with np.errstate(invalid="ignore", divide="ignore"):
        P_st = np.stack([g01 / mu, g10 / mu], axis=-1)
    idx, t, w, p, E = traj.quadrature()
    n_int = len(traj.times) - 1
    sig_inc = np.zeros(n_int)
    mu_inc = np.zeros(n_int)
    if t.size:
        Gq = traj.generators_at(t, E)
        a, b = coarse_rates(Gq, p, part)
        Pq = coarse_state(p, part)
        sig_inc = np.bincount(idx, weights=w * coarse_entropy_production_rate(a, b, Pq[:, 1]), minlength=n_int)
        mu_inc = np.bincount(idx, weights=w * (a + b), minlength=n_int)
    return CoarseTrace(
        times=traj.times.copy(),
        P_bit=coarse_state(traj.states, part),
        gamma_bit=coarse_state(gamma, part),
        Gamma01=g01,
        Gamma10=g10,
        mu=mu,
        P_st=P_st,
        Sigma_bit=np.concatenate([[0.0], np.cumsum(sig_inc)]),
        mu_integral=np.concatenate([[0.0], np.cumsum(mu_inc)]),
        beta=traj.beta,
        partition=part,
    )


def coarse_entropy_production(trace):
    """Total coarse-grained entropy production ``Sigma^bit(tau)``."""
    return float(trace.Sigma_bit[-1])


def swap_rate(trace):
    """Measured ``mu(t)`` at the samples and its time average."""
    return trace.mu, trace.mu_avg


def check_swap_rate_consistency(trace, analytic, rtol=1e-8):
    """Assert the measured swap rate matches an analytic value (scalar or per sample)."""
    analytic = np.broadcast_to(np.asarray(analytic, dtype=float), trace.mu.shape)
    if not np.allclose(trace.mu, analytic, rtol=rtol, atol=1e-12):
        gap = np.max(np.abs(trace.mu - analytic))
        raise AssertionError(f"measured swap rate deviates from analytic by {gap:.3e}")
    return True
