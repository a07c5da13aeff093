"""Master-equation dynamics ``dp_i/dt = sum_j Gamma_ij(t) p_j``.

Rate matrices follow the column convention: ``Gamma[i, j]`` is the rate from
state ``j`` to state ``i`` and every column sums to zero.  All rate models are
checked for detailed balance against the instantaneous thermal state at every
evaluation time; a violating model stops the integration.

Trajectories record the distribution at every sample time together with its
time derivative, so the state can be evaluated anywhere in between (exactly on
partial-swap relaxation windows, by cubic Hermite interpolation elsewhere).
Downstream quadratures use that dense output rather than the sample grid.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import null_space
from scipy.sparse.csgraph import connected_components

from .errors import DetailedBalanceError, ReducibleChainError
from .landscape import ThermalState, thermal_rows, thermal_state
from .simplex import as_distribution

DB_RTOL = 1e-10
COLSUM_TOL = 1e-12
DRIFT_TOL = 1e-9
STIFF_HLAMBDA = 0.025  # RK4 steps are refined until h * max(exit rate, beta |dE/dt|) <= this

JUMP, RELAX, HERMITE = 0, 1, 2


def check_rate_matrices(G, gamma):
    """Validate a stack of generators ``(K, n, n)`` against thermal states ``(K, n)``.

    Raises :class:`DetailedBalanceError` naming the first offending sample.
    """
    G = np.asarray(G, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if G.ndim == 2:
        G, gamma = G[None], gamma[None]
    n = G.shape[-1]
    off = ~np.eye(n, dtype=bool)
    scale = np.maximum(1.0, np.abs(G).max(axis=(1, 2)))
    if np.any(G[:, off] < -1e-14 * scale[:, None]):
        k = int(np.argmax(np.any(G[:, off] < 0, axis=1)))
        raise DetailedBalanceError(f"negative off-diagonal rate at sample {k}")
    colsum = np.abs(G.sum(axis=1)).max(axis=1)
    if np.any(colsum > COLSUM_TOL * scale):
        k = int(np.argmax(colsum / scale))
        raise DetailedBalanceError(f"column sums not zero at sample {k}: {colsum[k]:.3e}")
    flow = G * gamma[:, None, :]  # Gamma_ij gamma_j
    back = np.swapaxes(flow, 1, 2)
    gap = np.abs(flow - back)
    lim = DB_RTOL * np.maximum(flow, back) + 1e-300
    if np.any(gap[:, off] > lim[:, off]):
        k = int(np.argmax(np.any(gap[:, off] > lim[:, off], axis=1)))
        raise DetailedBalanceError(f"detailed balance violated at sample {k}")


def partial_swap_generator(gamma, mu):
    """Generator ``Gamma_ij = mu (gamma_i - delta_ij)`` whose flow is ``mu (gamma - p)``."""
    if mu < 0:
        raise ValueError(f"swap rate must be non-negative, got {mu}")
    g = gamma.gamma if isinstance(gamma, ThermalState) else np.asarray(gamma, dtype=float)
    return mu * (g[:, None] - np.eye(g.size))


def evolve_partial_swap_constant(p0, gamma, mu, dt):
    """Exact relaxation ``p(dt) = e^{-mu dt} p0 + (1 - e^{-mu dt}) gamma``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    g = gamma.gamma if isinstance(gamma, ThermalState) else np.asarray(gamma, dtype=float)
    r = math.exp(-mu * dt)
    return r * np.asarray(p0, dtype=float) + (1.0 - r) * g


class RateModel:
    """Supplies generators along a protocol.

    Subclasses implement :meth:`generators` for a batch of times with the
    matching energies.  ``closed_form`` marks models whose relaxation at fixed
    energies is solved exactly by :func:`evolve_partial_swap_constant`.
    """

    closed_form = False

    def generators(self, times, energies, beta):
        raise NotImplementedError

    def generator(self, t, energies, beta):
        return self.generators(np.array([float(t)]), np.asarray(energies, float)[None], beta)[0]


class PartialSwapRates(RateModel):
    """Fine-grained partial swap with swap rate ``mu`` (constant or ``mu(t)``)."""

    def __init__(self, mu):
        self.mu = mu
        if callable(mu):
            self.closed_form = False
        else:
            if mu < 0:
                raise ValueError(f"swap rate must be non-negative, got {mu}")
            self.closed_form = True

    def mu_at(self, times):
        times = np.asarray(times, dtype=float)
        if callable(self.mu):
            return np.array([float(self.mu(t)) for t in times])
        return np.full(times.shape, float(self.mu))

    def generators(self, times, energies, beta):
        gamma, _ = thermal_rows(energies, beta)
        n = gamma.shape[-1]
        return self.mu_at(times)[:, None, None] * (gamma[:, :, None] - np.eye(n))


class BarrierRates(RateModel):
    """Symmetric-barrier rates ``Gamma_ij = k_ij exp(-beta (E_i - E_j) / 2)``.

    ``couplings`` is a symmetric non-negative matrix; detailed balance holds
    by construction for any energies.
    """

    def __init__(self, couplings):
        k = np.array(couplings, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("couplings must be a square matrix")
        if not np.allclose(k, k.T, rtol=0, atol=0) or np.any(k < 0):
            raise ValueError("couplings must be symmetric and non-negative")
        np.fill_diagonal(k, 0.0)
        self.couplings = k

    def generators(self, times, energies, beta):
        e = np.asarray(energies, dtype=float)
        G = self.couplings * np.exp(-0.5 * beta * (e[:, :, None] - e[:, None, :]))
        n = G.shape[-1]
        idx = np.arange(n)
        G[:, idx, idx] = 0.0
        G[:, idx, idx] = -G.sum(axis=1)
        return G


class CallableRates(RateModel):
    """Wraps a user function ``fn(t, energies, beta) -> (n, n)`` generator."""

    def __init__(self, fn):
        self.fn = fn

    def generators(self, times, energies, beta):
        return np.stack([np.asarray(self.fn(t, e, beta), dtype=float) for t, e in zip(times, energies)])


def _as_rate_model(rate_model):
    if isinstance(rate_model, RateModel):
        return rate_model
    if callable(rate_model):
        return CallableRates(rate_model)
    return PartialSwapRates(float(rate_model))


def _validated(model, times, energies, beta):
    G = model.generators(times, energies, beta)
    gamma, _ = thermal_rows(energies, beta)
    check_rate_matrices(G, gamma)
    return G


@dataclass
class Trajectory:
    """Sampled solution of the master equation along a protocol.

    Consecutive samples at equal times bracket an instantaneous jump (same
    distribution, new energies).  ``kinds[k]`` tells how the state is
    reconstructed on ``[times[k], times[k+1]]``.
    """

    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    derivs: np.ndarray
    kinds: np.ndarray
    beta: float
    schedule: object = None
    rate_model: object = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def T(self):
        return 1.0 / self.beta

    @property
    def n_levels(self):
        return self.states.shape[1]

    @property
    def tau(self):
        return float(self.times[-1])

    @property
    def initial(self):
        return self.states[0]

    @property
    def final(self):
        return self.states[-1]

    def thermal(self):
        """Instantaneous thermal states and log partition functions at all samples."""
        if "thermal" not in self._cache:
            self._cache["thermal"] = thermal_rows(self.energies, self.beta)
        return self._cache["thermal"]

    def dense_states(self, idx, t):
        """States at times ``t`` inside intervals ``idx`` (arrays of equal length)."""
        idx = np.asarray(idx, dtype=int)
        t = np.asarray(t, dtype=float)
        t0 = self.times[idx]
        h = self.times[idx + 1] - t0
        p0, p1 = self.states[idx], self.states[idx + 1]
        out = np.empty_like(p0)
        kind = self.kinds[idx]
        herm = kind == HERMITE
        if np.any(herm):
            s = ((t - t0) / h)[herm][:, None]
            hh = h[herm][:, None]
            out[herm] = (
                (2 * s**3 - 3 * s**2 + 1) * p0[herm]
                + (s**3 - 2 * s**2 + s) * hh * self.derivs[idx[herm]]
                + (-2 * s**3 + 3 * s**2) * p1[herm]
                + (s**3 - s**2) * hh * self.derivs[idx[herm] + 1]
            )
        rel = kind == RELAX
        if np.any(rel):
            gamma, _ = thermal_rows(self.energies[idx[rel]], self.beta)
            mu = self.rate_model.mu_at(t[rel])
            r = np.exp(-mu * (t[rel] - t0[rel]))[:, None]
            out[rel] = gamma + (p0[rel] - gamma) * r
        jmp = kind == JUMP
        out[jmp] = p0[jmp]
        return out

    def dense_energies(self, idx, t):
        idx = np.asarray(idx, dtype=int)
        t0 = self.times[idx]
        h = self.times[idx + 1] - t0
        s = np.where(h > 0, (np.asarray(t) - t0) / np.where(h > 0, h, 1.0), 0.0)[:, None]
        return self.energies[idx] + s * (self.energies[idx + 1] - self.energies[idx])

    def quadrature(self, order=8):
        """Gauss-Legendre nodes over every finite interval.

        Exact-relaxation intervals are split into panels with ``mu h <= 1/2``
        so fast exponential decay is resolved.  Returns ``(idx, t, w, p, E)``
        with one row per node; ``w`` already includes the panel length.
        """
        key = ("quad", order)
        if key not in self._cache:
            x, wx = leggauss(order)
            t0, t1 = self.times[:-1], self.times[1:]
            live = np.nonzero(t1 > t0)[0]
            h = (t1 - t0)[live]
            panels = np.ones(live.size, dtype=int)
            rel = self.kinds[live] == RELAX
            if np.any(rel):
                mu = self.rate_model.mu_at(t0[live][rel])
                panels[rel] = np.maximum(1, np.ceil(2.0 * mu * h[rel])).astype(int)
            pidx = np.repeat(live, panels)
            offs = np.concatenate([np.arange(m) for m in panels]) if live.size else np.zeros(0, int)
            hp = np.repeat(h / panels, panels)
            a = self.times[pidx] + offs * hp
            idx = np.repeat(pidx, order)
            t = (a[:, None] + 0.5 * hp[:, None] * (x + 1)).ravel()
            w = (0.5 * hp[:, None] * wx).ravel()
            p = self.dense_states(idx, t)
            E = self.dense_energies(idx, t)
            self._cache[key] = (idx, t, w, p, E)
        return self._cache[key]

    def generators_at(self, t, E):
        if self.rate_model is None:
            raise ValueError("trajectory carries no rate model")
        return self.rate_model.generators(t, E, self.beta)

    def work_increments(self, order=8):
        """Work done on each interval: ``p . dE`` across jumps, quadrature of
        ``sum_i p_i dE_i/dt`` on ramps."""
        key = ("dW", order)
        if key not in self._cache:
            dE = np.diff(self.energies, axis=0)
            dW = np.zeros(len(self.times) - 1)
            jmp = self.kinds == JUMP
            dW[jmp] = np.sum(self.states[:-1][jmp] * dE[jmp], axis=1)
            moving = (~jmp) & np.any(dE != 0, axis=1)
            if np.any(moving):
                idx, t, w, p, _ = self.quadrature(order)
                h = np.diff(self.times)
                slope = dE / np.where(h > 0, h, 1.0)[:, None]
                rate = np.sum(p * slope[idx], axis=1)
                contrib = np.bincount(idx, weights=w * rate, minlength=dW.size)
                dW[moving] = contrib[moving]
            self._cache[key] = dW
        return self._cache[key]

    def work_increments_trapezoid(self):
        """Same as :meth:`work_increments` but trapezoidal on the sample grid."""
        dE = np.diff(self.energies, axis=0)
        pm = 0.5 * (self.states[:-1] + self.states[1:])
        jmp = self.kinds == JUMP
        return np.where(jmp, np.sum(self.states[:-1] * dE, axis=1), np.sum(pm * dE, axis=1))


def _rk4_step(p, h, Gs):
    G0, Gm, G1 = Gs
    k1 = G0 @ p
    k2 = Gm @ (p + 0.5 * h * k1)
    k3 = Gm @ (p + 0.5 * h * k2)
    k4 = G1 @ (p + h * k3)
    return p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_master_equation(schedule, rate_model, dt_max, p0=None):
    """Evolve a distribution along ``schedule`` and return a :class:`Trajectory`.

    Samples fall at least every ``dt_max``, at every segment boundary and twice
    at every jump.  Constant-energy segments under a constant partial-swap
    model are solved exactly; everything else is stepped with classic RK4,
    refined so that ``h`` times the larger of the largest exit rate and
    ``beta max |dE/dt|`` stays below ``STIFF_HLAMBDA``, and halving any step
    whose probability-sum drift or negativity exceeds tolerance.  ``p0`` defaults to the thermal state of the initial energies.
    """
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    model = _as_rate_model(rate_model)
    beta = schedule.beta
    ls = schedule.landscape
    p = thermal_state(ls.initial, beta).gamma if p0 is None else as_distribution(p0, "p0")
    if p.size != ls.n_levels:
        raise ValueError(f"p0 has {p.size} levels, landscape has {ls.n_levels}")

    times, states, energies, derivs, kinds = [], [], [], [], []

    def deriv(t, E, pv):
        G = _validated(model, np.array([t]), E[None], beta)[0]
        return G @ pv

    E_now = ls.initial.copy()
    times.append(0.0)
    states.append(p.copy())
    energies.append(E_now.copy())
    derivs.append(deriv(0.0, E_now, p))

    for seg in ls.segments:
        if not np.array_equal(E_now, seg.start):
            E_now = seg.start.copy()
            times.append(seg.t0)
            states.append(p.copy())
            energies.append(E_now.copy())
            derivs.append(deriv(seg.t0, E_now, p))
            kinds.append(JUMP)

        n_sub = max(1, math.ceil((seg.t1 - seg.t0) / dt_max - 1e-9))
        grid = np.linspace(seg.t0, seg.t1, n_sub + 1)
        grid[-1] = seg.t1

        if seg.is_constant and model.closed_form:
            gamma = thermal_state(seg.start, beta).gamma
            G = _validated(model, grid[:1], seg.start[None], beta)[0]
            mu = float(model.mu_at(grid[:1])[0])
            p_start = p.copy()
            for t in grid[1:]:
                r = math.exp(-mu * (t - seg.t0))
                p = r * p_start + (1.0 - r) * gamma
                times.append(float(t))
                states.append(p.copy())
                energies.append(seg.start.copy())
                derivs.append(G @ p)
                kinds.append(RELAX)
        else:
            # substep count from the fastest exit rate and energy drive seen
            # on the dt_max grid, then all stage generators validated at once
            probe = _validated(model, grid, np.stack([seg.at(t) for t in grid]), beta)
            exit_rate = float(-np.einsum("kii->ki", probe).min())
            drive_rate = beta * float(np.abs(seg.slope).max())
            n_fine = math.ceil((seg.t1 - seg.t0) * max(exit_rate, drive_rate) / STIFF_HLAMBDA - 1e-9)
            n_steps = max(n_sub, n_fine)
            fine = np.linspace(seg.t0, seg.t1, n_steps + 1)
            fine[-1] = seg.t1
            mids = 0.5 * (fine[:-1] + fine[1:])
            ts = np.concatenate([fine, mids])
            G_all = _validated(model, ts, np.stack([seg.at(t) for t in ts]), beta)
            G_edge, G_mid = G_all[: n_steps + 1], G_all[n_steps + 1 :]
            for i in range(n_steps):
                ta, tb = float(fine[i]), float(fine[i + 1])
                pn = _rk4_step(p, tb - ta, (G_edge[i], G_mid[i], G_edge[i + 1]))
                if abs(pn.sum() - p.sum()) > 1e-13 or pn.min() < -1e-13:
                    steps = _adaptive_rk4(model, seg, beta, ta, tb, p)
                else:
                    pn = np.clip(pn, 0.0, None)
                    pn /= pn.sum()
                    steps = [(tb, pn, G_edge[i + 1] @ pn)]
                for t, pn, dn in steps:
                    p = pn
                    times.append(t)
                    states.append(p.copy())
                    energies.append(seg.at(t))
                    derivs.append(dn)
                    kinds.append(HERMITE)
        E_now = seg.end.copy()

    states = np.array(states)
    drift = np.abs(states.sum(axis=1) - 1.0).max()
    if drift > DRIFT_TOL:
        raise RuntimeError(f"probability drift {drift:.2e} exceeds {DRIFT_TOL}")
    return Trajectory(
        np.array(times),
        states,
        np.array(energies),
        np.array(derivs),
        np.array(kinds, dtype=int),
        beta,
        schedule,
        model,
    )


def _adaptive_rk4(model, seg, beta, ta, tb, p, depth=0):
    h = tb - ta
    ts = np.array([ta, ta + 0.5 * h, tb])
    Es = np.stack([seg.at(t) for t in ts])
    Gs = _validated(model, ts, Es, beta)
    pn = _rk4_step(p, h, Gs)
    bad = abs(pn.sum() - p.sum()) > 1e-13 or pn.min() < -1e-13
    if bad and depth < 12:
        mid = ta + 0.5 * h
        first = _adaptive_rk4(model, seg, beta, ta, mid, p, depth + 1)
        return first + _adaptive_rk4(model, seg, beta, mid, tb, first[-1][1], depth + 1)
    pn = np.clip(pn, 0.0, None)
    pn /= pn.sum()
    return [(float(tb), pn, Gs[2] @ pn)]


def stationary_state(rates):
    """Stationary distribution of an irreducible generator (null vector on the simplex)."""
    G = np.asarray(rates, dtype=float)
    n = G.shape[0]
    adj = (np.abs(G) > 0) & ~np.eye(n, dtype=bool)
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    if ncomp > 1:
        blocks = [np.nonzero(labels == c)[0].tolist() for c in range(ncomp)]
        raise ReducibleChainError(f"rate matrix is reducible; blocks {blocks}", blocks)
    ns = null_space(G)
    if ns.shape[1] != 1:
        raise ReducibleChainError(f"null space has dimension {ns.shape[1]}")
    v = ns[:, 0]
    v = v / v.sum()
    return as_distribution(np.clip(v, 0.0, None) / np.clip(v, 0.0, None).sum())
