"""First-law bookkeeping and entropy production along trajectories.

Conventions: ``W`` is work done on the system, ``Q`` heat absorbed from the
bath, ``U = sum_i p_i E_i`` and ``S = -sum_i p_i ln p_i``.  Entropy production
``Sigma`` and relative entropies are dimensionless (k_B = 1); work and heat
carry energy units so ``T * D`` converts a divergence into energy.

Entropy production is available two independent ways: the state-function
difference ``dS - Q/T`` and the time integral of the local rate

    sigma(t) = 1/2 sum_ij (G_ij p_j - G_ji p_i) ln(G_ij p_j / (G_ji p_i)).

The penalty identity ``W_pn = T dD + T Sigma`` is checked with the rate
integral; with the state-function path it would hold by construction.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .dynamics import JUMP
from .errors import UnsupportedProtocolError
from .landscape import thermal_state
from .simplex import relent_rows


@dataclass(frozen=True)
class ThermoLedger:
    W: float
    Q: float
    dU: float
    dS: float
    Sigma: float
    Sigma_rate: float
    D_initial: float
    D_final: float
    W_qs: float
    W_pn: float
    T: float

    @property
    def dD(self):
        return self.D_final - self.D_initial

    @property
    def penalty_residual(self):
        return abs(self.W_pn - self.T * (self.dD + self.Sigma_rate))

    def to_dict(self):
        d = asdict(self)
        d["penalty_residual"] = self.penalty_residual
        return d


def entropy_production_rate(G, p):
    """Instantaneous entropy production rate for generators ``(..., n, n)``
    and states ``(..., n)``.  Pairs with both flows zero contribute nothing."""
    G = np.asarray(G, dtype=float)
    p = np.asarray(p, dtype=float)
    F = G * p[..., None, :]  # F_ij = G_ij p_j, flow j -> i
    Ft = np.swapaxes(F, -1, -2)
    n = G.shape[-1]
    off = ~np.eye(n, dtype=bool)
    both = (F > 0) & (Ft > 0) & off
    one = (F > 0) != (Ft > 0)
    term = np.zeros(np.broadcast(F, Ft).shape)
    term[both] = (F[both] - Ft[both]) * (np.log(F[both]) - np.log(Ft[both]))
    term[one & off] = np.inf
    return 0.5 * term.sum(axis=(-1, -2))


def internal_energy(traj):
    return np.sum(traj.states * traj.energies, axis=1)


def relative_entropy_trace(traj):
    """``D[p(t)||gamma(E(t))]`` at every sample."""
    gamma, _ = traj.thermal()
    return relent_rows(traj.states, gamma)


def work(traj, method="gauss"):
    """Total work: frozen-state jump work plus ramp work.

    ``method="gauss"`` integrates ramps on the trajectory's dense output;
    ``"trapezoid"`` uses the sample grid only.
    """
    if traj.energies is None or len(traj.energies) != len(traj.times):
        raise ValueError("trajectory lacks energy samples")
    if method == "gauss":
        return float(traj.work_increments().sum())
    if method == "trapezoid":
        return float(traj.work_increments_trapezoid().sum())
    raise ValueError(f"unknown quadrature {method!r}")


def heat_increments(traj):
    """Per-interval heat ``dU - dW``."""
    return np.diff(internal_energy(traj)) - traj.work_increments()


def heat(traj):
    """``Q = dU - W`` with ``dU`` from the endpoint states and energies."""
    U = internal_energy(traj)
    return float(U[-1] - U[0] - work(traj))


def _entropy(p):
    return float(-np.sum(p[p > 0] * np.log(p[p > 0])))


def entropy_production(traj, T=None, path="state"):
    """Total entropy production.

    ``path="state"`` gives ``dS - Q/T``; ``path="rate"`` integrates the local
    production rate over the dense output (jumps contribute nothing).
    """
    T = traj.T if T is None else float(T)
    if not T > 0:
        raise ValueError("T must be positive")
    if path == "state":
        dS = _entropy(traj.final) - _entropy(traj.initial)
        return dS - heat(traj) / T
    if path == "rate":
        if traj.rate_model is None:
            raise ValueError("rate path needs the trajectory's rate model")
        _, t, w, p, E = traj.quadrature()
        if t.size == 0:
            return 0.0
        G = traj.generators_at(t, E)
        return float(np.sum(w * entropy_production_rate(G, p)))
    raise ValueError(f"unknown path {path!r}")


def entropy_production_trace(traj):
    """Cumulative rate-integral entropy production at every sample."""
    idx, t, w, p, E = traj.quadrature()
    inc = np.zeros(len(traj.times) - 1)
    if t.size:
        rate = entropy_production_rate(traj.generators_at(t, E), p)
        inc = np.bincount(idx, weights=w * rate, minlength=inc.size)
    return np.concatenate([[0.0], np.cumsum(inc)])


def ledger(traj):
    """Assemble the full :class:`ThermoLedger` for a trajectory.

    ``D_initial`` is taken against the thermal state of the energies before
    any jump at ``t = 0`` so the cost of that jump lands in ``W_pn``.
    """
    T = traj.T
    gamma, logZ = traj.thermal()
    U = internal_energy(traj)
    W = work(traj)
    Q = float(U[-1] - U[0] - W)
    dS = _entropy(traj.final) - _entropy(traj.initial)
    W_qs = T * float(logZ[0] - logZ[-1])
    D = relent_rows(traj.states[[0, -1]], gamma[[0, -1]])
    sig_rate = entropy_production(traj, path="rate") if traj.rate_model is not None else np.nan
    return ThermoLedger(
        W=W,
        Q=Q,
        dU=float(U[-1] - U[0]),
        dS=dS,
        Sigma=dS - Q / T,
        Sigma_rate=float(sig_rate),
        D_initial=float(D[0]),
        D_final=float(D[1]),
        W_qs=W_qs,
        W_pn=W - W_qs,
        T=T,
    )


def penalty_equality_residual(traj, T=None):
    """``|W_pn - (T dD + T Sigma)|`` with the rate-integral ``Sigma``."""
    led = ledger(traj)
    T = led.T if T is None else float(T)
    return abs(led.W_pn - T * (led.dD + led.Sigma_rate))


@dataclass(frozen=True)
class StepDecomposition:
    """Per-step entropy production and penalty of a constant-shifting run,
    both dimensionless (multiply by T for energy)."""

    sigma: np.ndarray
    w_pn: np.ndarray
    P_pre: np.ndarray  # P^{k-1}: state just before lift k, k = 1..N, then final
    D_window_start: np.ndarray


def step_decomposition(traj):
    """Split a constant-shifting run into its N lift-and-relax steps.

    ``sigma[k] = D[P^{k-1}||g^k] - D[P^k||g^k]`` and
    ``w_pn[k] = D[P^{k-1}||g^k] - D[P^{k-1}||g^{k-1}]``; their sums equal the
    run's ``Sigma`` and ``beta W_pn``.
    """
    sched = traj.schedule
    if sched is None or sched.kind != "constant-shifting":
        raise UnsupportedProtocolError("step decomposition needs a constant-shifting schedule")
    segs = sched.landscape.segments
    beta = traj.beta
    pre = []
    for seg in segs:
        i = int(np.searchsorted(traj.times, seg.t0 - 1e-12 * max(1.0, seg.t0), side="left"))
        pre.append(traj.states[i])
    pre.append(traj.final)
    P = np.array(pre)
    g_prev = np.array([thermal_state(sched.landscape.initial, beta).gamma]
                      + [thermal_state(s.start, beta).gamma for s in segs[:-1]])
    g_k = np.array([thermal_state(s.start, beta).gamma for s in segs])
    D_start = relent_rows(P[:-1], g_k)
    sigma = D_start - relent_rows(P[1:], g_k)
    w_pn = D_start - relent_rows(P[:-1], g_prev)
    return StepDecomposition(sigma, w_pn, P, D_start)


__all__ = [
    "ThermoLedger",
    "StepDecomposition",
    "entropy_production_rate",
    "internal_energy",
    "relative_entropy_trace",
    "work",
    "heat",
    "heat_increments",
    "entropy_production",
    "entropy_production_trace",
    "ledger",
    "penalty_equality_residual",
    "step_decomposition",
    "JUMP",
]
