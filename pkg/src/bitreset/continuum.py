"""Overdamped Fokker-Planck backend on a uniform grid.

The density obeys ``dp/dt = D d/dx [beta V'(x, t) + d/dx] p`` with zero-flux
walls.  Space is discretized by finite volumes with an exponentially fitted
(Scharfetter-Gummel / Chang-Cooper) flux between neighbouring cells,

    J_{i+1/2} = (D / dx^2) [B(beta dV) p_i - B(-beta dV) p_{i+1}],
    B(z) = z / (e^z - 1),   dV = V_{i+1} - V_i,

where ``p_i`` are cell probabilities.  This is a nearest-neighbour master
equation whose hop rates obey detailed balance against ``exp(-beta V_i)``, so
the discrete Gibbs state is an exact fixed point.  All accounting and the bit
coarse-graining (cells left / right of ``x = 0``) are therefore exact
statements about that chain, and the discrete bound checks apply directly.

Time stepping is classical RK4; work, entropy production and swap-rate
integrals use Simpson's rule per step with a cubic-Hermite midpoint state.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, logsumexp

from .accounting import ThermoLedger
from .bounds import evaluate_bounds
from .coarse import BitPartition, CoarseTrace
from .errors import StabilityError
from .report import fmt

RK4_STABILITY = 2.78  # |h lambda| limit of classical RK4 on the negative real axis
CONFINEMENT = 40.0


def bernoulli(z):
    """``B(z) = z / expm1(z)`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - 0.5 * z, safe / np.expm1(safe))


@dataclass
class GridDensity:
    """Probability density on ``M`` uniform cells spanning ``[x_min, x_max]``."""

    x_min: float
    x_max: float
    M: int
    density: np.ndarray

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != (self.M,):
            raise ValueError(f"density must have {self.M} cells")
        if not self.x_max > self.x_min:
            raise ValueError("need x_max > x_min")
        if np.any(self.density < 0):
            raise ValueError("density must be non-negative")
        if abs(self.mass - 1.0) > 1e-9:
            raise ValueError(f"density integrates to {self.mass}, not 1")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.M

    @property
    def x(self):
        return self.x_min + (np.arange(self.M) + 0.5) * self.dx

    @property
    def probs(self):
        return self.density * self.dx

    @property
    def mass(self):
        return float(self.density.sum() * self.dx)

    @classmethod
    def from_probs(cls, x_min, x_max, probs):
        probs = np.asarray(probs, dtype=float)
        M = probs.size
        return cls(x_min, x_max, M, probs / ((x_max - x_min) / M))


@dataclass(frozen=True)
class PotentialProtocol:
    """Quartic double well ``V = k x^4/4 - a(t) x^2/2 + f(t) x``.

    Default schedule over ``[0, tau]``: during the first half ``a`` ramps
    linearly from ``a0`` to ``a1`` while ``f`` ramps from 0 to ``f1``; during
    the second half ``a`` returns to ``a0`` with ``f`` held at ``f1``.  A
    positive tilt favours ``x < 0``, the logical 0.
    """

    k: float = 1.0
    a0: float = 4.0
    a1: float = -1.0
    f1: float = 2.0
    D: float = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive (confinement)")
        if not self.a0 > 0:
            raise ValueError("a0 must be positive (initial double well)")
        if not self.D > 0:
            raise ValueError("diffusion constant must be positive")

    @classmethod
    def idle(cls, k=1.0, a0=4.0, D=1.0):
        return cls(k=k, a0=a0, a1=a0, f1=0.0, D=D)

    def phases(self, tau):
        """``(t0, t1, a_start, a_end, f_start, f_end)`` for each linear phase."""
        h = 0.5 * tau
        return [(0.0, h, self.a0, self.a1, 0.0, self.f1), (h, tau, self.a1, self.a0, self.f1, self.f1)]

    def coefficients(self, t, tau):
        for t0, t1, as_, ae, fs, fe in self.phases(tau):
            if t <= t1 or t1 == tau:
                s = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
                return as_ + s * (ae - as_), fs + s * (fe - fs)
        raise AssertionError("unreachable")

    def V(self, x, a, f):
        return self.k * x**4 / 4 - a * x**2 / 2 + f * x

    def dVdx(self, x, a, f):
        return self.k * x**3 - a * x + f


def continuum_thermal(V, beta, x_min, x_max):
    """Normalized discrete Gibbs density for cell potentials ``V`` (log domain)."""
    V = np.asarray(V, dtype=float)
    logw = -beta * V
    p = np.exp(logw - logsumexp(logw))
    return GridDensity.from_probs(x_min, x_max, p)


def _log_partition(V, beta):
    return float(logsumexp(-beta * np.asarray(V, dtype=float)))


def hop_rates(V, beta, D, dx):
    """Right- and left-hop rates across each interior edge."""
    z = beta * np.diff(V)
    c = D / dx**2
    return c * bernoulli(z), c * bernoulli(-z)


def _drift(p, up, down):
    J = up * p[:-1] - down * p[1:]
    dp = np.empty_like(p)
    dp[0] = -J[0]
    dp[1:-1] = J[:-1] - J[1:]
    dp[-1] = J[-1]
    return dp


def stable_dt(up, down):
    """Largest RK4 step that is both stable and positivity preserving.

    With ``nu`` the largest exit rate, the generator is ``nu (P - I)`` with
    ``P`` non-negative, and the RK4 update is a polynomial in ``P`` whose
    coefficients are the derivatives of ``R(z) = sum_{k<=4} z^k/k!`` at
    ``z = -h nu``; all are non-negative iff ``h nu <= 1``.  This is stricter
    than the Gershgorin stability limit ``RK4_STABILITY / (2 nu)``.
    """
    exit_rate = np.zeros(up.size + 1)
    exit_rate[:-1] += up
    exit_rate[1:] += down
    nu = exit_rate.max()
    return min(1.0, RK4_STABILITY / 2.0) / nu


def _rk4(p, h, rates):
    (u0, d0), (um, dm), (u1, d1) = rates
    k1 = _drift(p, u0, d0)
    k2 = _drift(p + 0.5 * h * k1, um, dm)
    k3 = _drift(p + 0.5 * h * k2, um, dm)
    k4 = _drift(p + h * k3, u1, d1)
    return p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), k1


def fp_step(density, V, beta, D, dt):
    """Advance ``density`` by ``dt`` under the static cell potential ``V``.

    Raises :class:`StabilityError` (with the largest admissible step) when
    ``dt`` exceeds the explicit scheme's limit.
    """
    up, down = hop_rates(V, beta, D, density.dx)
    lim = stable_dt(up, down)
    if dt > lim:
        raise StabilityError(f"dt={dt:.3e} exceeds the stability limit; use dt <= {lim:.3e}", dt_max=lim)
    p, _ = _rk4(density.probs, dt, [(up, down)] * 3)
    return GridDensity.from_probs(density.x_min, density.x_max, p)


def _edge_production(up, down, p):
    a = up * p[:-1]
    b = down * p[1:]
    ok = (a > 0) & (b > 0)
    out = np.zeros_like(a)
    out[ok] = (a[ok] - b[ok]) * (np.log(a[ok]) - np.log(b[ok]))
    return out


def continuum_coarse_rates(density, V, beta, D, delta_t_probe=None):
    """Short-time Gaussian estimate of the bit rates ``(G01, G10, mu)``.

    Mass in cell ``j`` is propagated for ``delta_t_probe`` (default
    ``0.1 dx^2 / D``) with a Gaussian of variance ``2 D dt`` centred at the
    drifted position ``x_j - beta D V'(x_j) dt``; the fraction landing on the
    other side of ``x = 0`` per unit time and per unit source-block mass gives
    the rate.  Raises ``ValueError`` when more than 10% of a block moves.
    """
    x = density.x
    dx = density.dx
    dt = 0.1 * dx**2 / D if delta_t_probe is None else float(delta_t_probe)
    V = np.asarray(V, dtype=float)
    dV = np.gradient(V, dx)
    p = density.probs
    left = x < 0
    centre = x - beta * D * dV * dt
    edges = np.concatenate([x - 0.5 * dx, [x[-1] + 0.5 * dx]])
    width = math.sqrt(4 * D * dt)
    # cumulative Gaussian mass below the x = 0 boundary for every source cell
    below0 = 0.5 * (1 + erf((0.0 - centre) / width))
    lo = 0.5 * (1 + erf((edges[0] - centre) / width))
    hi = 0.5 * (1 + erf((edges[-1] - centre) / width))
    inside = hi - lo
    to_left = np.clip((below0 - lo) / inside, 0.0, 1.0)
    P0 = p[left].sum()
    P1 = p[~left].sum()
    move_10 = float(np.sum(p[left] * (1 - to_left[left])))
    move_01 = float(np.sum(p[~left] * to_left[~left]))
    if (P0 > 0 and move_10 > 0.1 * P0) or (P1 > 0 and move_01 > 0.1 * P1):
        raise ValueError("delta_t_probe too large: more than 10% of a block crosses x = 0")
    g01 = move_01 / (dt * P1) if P1 > 0 else 0.0
    g10 = move_10 / (dt * P0) if P0 > 0 else 0.0
    return g01, g10, g01 + g10


def default_half_width(protocol, beta, tau=1.0, samples=41):
    """Smallest ``x_L`` with ``beta V(+-x_L) >= 40`` above the minimum at every phase."""
    probe = np.linspace(-20, 20, 8001)
    coeffs = [protocol.coefficients(t, tau) for t in np.linspace(0, tau, samples)]
    xL = 1.0
    while xL < 20:
        ok = True
        for a, f in coeffs:
            vmin = protocol.V(probe, a, f).min()
            if min(protocol.V(xL, a, f), protocol.V(-xL, a, f)) - vmin < CONFINEMENT / beta:
                ok = False
                break
        if ok:
            return xL
        xL *= 1.01
    raise ValueError("could not confine the potential within |x| < 20")


@dataclass
class ContinuumRun:
    ledger: ThermoLedger
    trace: CoarseTrace
    report: object
    grid: tuple  # (x_min, x_max, M)
    dt: float
    steps: int
    final: GridDensity
    gamma_final: GridDensity
    diagnostics: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)


def run_continuum_reset(protocol, tau, beta=1.0, M=512, dt=None, x_L=None, snapshot_times=(), safety=0.9):
    """Full reset run on the grid with accounting, bit trace and bound checks."""
    if M % 2 or M < 4:
        raise ValueError("M must be even and at least 4 so x = 0 is a cell edge")
    if not tau > 0:
        raise ValueError("tau must be positive")
    x_L = default_half_width(protocol, beta, tau) if x_L is None else float(x_L)
    dx = 2 * x_L / M
    x = -x_L + (np.arange(M) + 0.5) * dx
    c = M // 2 - 1  # edge index between the last x<0 cell and the first x>0 cell
    Dc = protocol.D

    def pot(t):
        a, f = protocol.coefficients(t, tau)
        return protocol.V(x, a, f)

    # stability across the protocol
    lim = min(stable_dt(*hop_rates(pot(t), beta, Dc, dx)) for t in np.linspace(0, tau, 21))
    if dt is None:
        dt = safety * lim
    elif dt > lim:
        raise StabilityError(f"dt={dt:.3e} exceeds the stability limit; use dt <= {lim:.3e}", dt_max=lim)

    V0 = pot(0.0)
    p = continuum_thermal(V0, beta, -x_L, x_L).probs
    logZ0 = _log_partition(V0, beta)

    times, P1s, g1s, G01, G10, Sb, MuI = [], [], [], [], [], [], []
    W = sig = sig_bit = mu_int = 0.0
    steps = 0
    clipped = 0
    max_step_drift = 0.0
    snaps = []
    snap_pending = sorted(float(s) for s in snapshot_times)

    def bit_quantities(pv, up, down):
        a = up[c] * pv[c]  # 0 -> 1 flow
        b = down[c] * pv[c + 1]  # 1 -> 0 flow
        P0 = pv[: c + 1].sum()
        P1 = pv[c + 1 :].sum()
        g01 = b / P1 if P1 > 1e-300 else 0.0
        g10 = a / P0 if P0 > 1e-300 else 0.0
        sb = (a - b) * (math.log(a) - math.log(b)) if a > 0 and b > 0 else 0.0
        return P1, g01, g10, sb

    def gamma1(V):
        w = -beta * V
        return float(np.exp(logsumexp(w[c + 1 :]) - logsumexp(w)))

    def record(t, pv, up, down, V):
        P1, g01, g10, _ = bit_quantities(pv, up, down)
        times.append(t)
        P1s.append(P1)
        g1s.append(gamma1(V))
        G01.append(g01)
        G10.append(g10)
        Sb.append(sig_bit)
        MuI.append(mu_int)

    def snapshot(t, pv, V):
        g = continuum_thermal(V, beta, -x_L, x_L)
        snaps.append({"t": t, "x": x.copy(), "p": pv / dx, "gamma": g.density, "V": V.copy()})

    U_start = float(np.dot(p, V0))
    S_start = float(-np.sum(p[p > 0] * np.log(p[p > 0])))
    rates_now = hop_rates(V0, beta, Dc, dx)
    record(0.0, p, *rates_now, V0)
    while snap_pending and snap_pending[0] <= 0.0:
        snapshot(0.0, p, V0)
        snap_pending.pop(0)
    deriv_now = _drift(p, *rates_now)

    for t0, t1, as_, ae, fs, fe in protocol.phases(tau):
        n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
        h = (t1 - t0) / n
        da = (ae - as_) / (t1 - t0)
        df = (fe - fs) / (t1 - t0)
        dVdt = -da * x**2 / 2 + df * x
        for s in range(n):
            ta = t0 + s * h
            tm, tb = ta + 0.5 * h, t0 + (s + 1) * h
            Vm, Vb = pot(tm), pot(tb)
            rm, rb = hop_rates(Vm, beta, Dc, dx), hop_rates(Vb, beta, Dc, dx)
            pa = p
            pb, _ = _rk4(pa, h, [rates_now, rm, rb])
            if pb.min() < 0:
                clipped += 1
                pb = np.clip(pb, 0.0, None)
            max_step_drift = max(max_step_drift, abs(pb.sum() - pa.sum()))
            deriv_b = _drift(pb, *rb)
            pm = 0.5 * (pa + pb) + (h / 8.0) * (deriv_now - deriv_b)
            pm = np.clip(pm, 0.0, None)
            w3 = np.array([1.0, 4.0, 1.0]) * h / 6.0
            states = (pa, pm, pb)
            rates = (rates_now, rm, rb)
            W += float(sum(wk * np.dot(pk, dVdt) for wk, pk in zip(w3, states)))
            sig += float(sum(wk * _edge_production(*rk, pk).sum() for wk, rk, pk in zip(w3, rates, states)))
            for wk, rk, pk in zip(w3, rates, states):
                _, g01, g10, sb = bit_quantities(pk, *rk)
                sig_bit += wk * sb
                mu_int += wk * (g01 + g10)
            p = pb
            rates_now, deriv_now = rb, deriv_b
            steps += 1
            record(tb, p, *rates_now, Vb)
            while snap_pending and snap_pending[0] <= tb + 1e-12:
                snapshot(tb, p, Vb)
                snap_pending.pop(0)

    V_end = pot(tau)
    logZ1 = _log_partition(V_end, beta)
    T = 1.0 / beta
    U_end = float(np.dot(p, V_end))
    S_end = float(-np.sum(p[p > 0] * np.log(p[p > 0])))
    g_end = continuum_thermal(V_end, beta, -x_L, x_L).probs
    g_start = continuum_thermal(V0, beta, -x_L, x_L).probs
    p_start = g_start

    def D(pv, gv):
        m = pv > 0
        return float(np.sum(pv[m] * np.log(pv[m] / gv[m])))

    Q = U_end - U_start - W
    dS = S_end - S_start
    W_qs = T * (logZ0 - logZ1)
    led = ThermoLedger(
        W=W, Q=Q, dU=U_end - U_start, dS=dS, Sigma=dS - Q / T, Sigma_rate=sig,
        D_initial=D(p_start, g_start), D_final=D(p, g_end), W_qs=W_qs, W_pn=W - W_qs, T=T,
    )
    times = np.array(times)
    P1s = np.array(P1s)
    g1s = np.array(g1s)
    G01, G10 = np.array(G01), np.array(G10)
    mu = G01 + G10
    with np.errstate(invalid="ignore", divide="ignore"):
        Pst1 = G10 / mu
    trace = CoarseTrace(
        times=times,
        P_bit=np.stack([1 - P1s, P1s], axis=1),
        gamma_bit=np.stack([1 - g1s, g1s], axis=1),
        Gamma01=G01,
        Gamma10=G10,
        mu=mu,
        P_st=np.stack([1 - Pst1, Pst1], axis=1),
        Sigma_bit=np.array(Sb),
        mu_integral=np.array(MuI),
        beta=beta,
        partition=BitPartition(range(M // 2), range(M // 2, M)),
    )
    report = evaluate_bounds(led, trace)
    diagnostics = {
        "mass_drift": abs(p.sum() - 1.0),
        "max_step_mass_drift": max_step_drift,
        "clipped_steps": clipped,
        "x_L": x_L,
        "dt_limit": lim,
        "penalty_residual": led.penalty_residual,
    }
    try:
        diagnostics["mu_gaussian_final"] = continuum_coarse_rates(
            GridDensity.from_probs(-x_L, x_L, p), V_end, beta, Dc
        )[2]
    except ValueError:
        diagnostics["mu_gaussian_final"] = float("nan")
    return ContinuumRun(
        led, trace, report, (-x_L, x_L, M), h, steps,
        GridDensity.from_probs(-x_L, x_L, p), GridDensity.from_probs(-x_L, x_L, g_end), diagnostics, snaps,
    )


def write_snapshot_csv(path, snapshot):
    """Write one density snapshot as columns ``x, p, gamma, V``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "p", "gamma", "V"])
        for row in zip(snapshot["x"], snapshot["p"], snapshot["gamma"], snapshot["V"]):
            w.writerow([fmt(float(v)) for v in row])
