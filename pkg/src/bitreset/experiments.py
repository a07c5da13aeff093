"""Experiment drivers for the two-level constant-shifting reset.

* :func:`run_constant_shifting` -- one engine run with full accounting and
  every bound check.
* :func:`run_fixed_energy_sweep` / :func:`run_fixed_error_sweep` -- duration
  scans at fixed final energy or fixed final error.
* :func:`region_map` -- classification of the (E_max, eps) plane into the
  relative-entropy dominated (I), entropy-production dominated (II) and
  unreachable (III) regimes.

Root finding and the region map use :func:`shifting_recursion`, a vectorized
closed form of the step-by-step relaxation; the test-suite cross-checks it
against the engine.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .accounting import ledger as make_ledger
from .bounds import evaluate_bounds
from .coarse import BitPartition, coarse_trace
from .dynamics import PartialSwapRates, integrate_master_equation
from .errors import InfeasibleError
from .landscape import constant_shifting_schedule
from .simplex import binary_relative_entropy

SWEEP_COLUMNS = ["tau", "E_max", "eps", "W", "W_qs", "W_pn", "Sigma", "Sigma_bit", "D_eps", "mu_avg"]
SWEEP_RECORDS = [
    "main_penalty_bound",
    "speed_limit",
    "relent_exponential_upper",
    "penalty_envelope_lower",
    "penalty_envelope_upper",
    "sigma_ge_sigma_bit",
    "relent_coarse_graining",
    "relent_general_lower",
    "relent_case2_lower",
]
REGION_COLUMNS = ["E_max", "eps", "label", "D_eps", "Sigma", "tau"]


def _parallel_map(fn, items, workers):
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# closed-form kernel


def shifting_recursion(N, E_max, tau, mu, beta):
    """Exact constant-shifting quantities, broadcasting over ``E_max`` and ``tau``.

    Returns a dict with ``P1`` (weights of level 1 before lift 1, ..., after
    the final window, last axis of length ``N + 1``), ``eps``, ``W``, ``W_qs``,
    ``W_pn``, ``Sigma`` and ``D_eps``.  Work and penalty are in energy units,
    ``Sigma`` and ``D_eps`` dimensionless.
    """
    E, tau = np.broadcast_arrays(np.asarray(E_max, dtype=float), np.asarray(tau, dtype=float))
    N = int(N)
    step = E / N
    r = np.exp(-mu * tau / N)
    P = np.empty(E.shape + (N + 1,))
    P[..., 0] = 0.5
    W = np.zeros(E.shape)
    Sigma = np.zeros(E.shape)
    g = np.full(E.shape, 0.5)
    for k in range(1, N + 1):
        Ek = E if k == N else k * step
        g = expit(-beta * Ek)
        prev = P[..., k - 1]
        W += prev * step
        cur = r * prev + (1.0 - r) * g
        P[..., k] = cur
        Sigma += binary_relative_entropy(prev, g) - binary_relative_entropy(cur, g)
    T = 1.0 / beta
    W_qs = T * (math.log(2.0) - np.log1p(np.exp(-beta * E)))
    eps = P[..., N]
    return {
        "P1": P,
        "eps": eps,
        "W": W,
        "W_qs": W_qs,
        "W_pn": W - W_qs,
        "Sigma": Sigma,
        "D_eps": np.asarray(binary_relative_entropy(eps, g)),
    }


def _final_p1(N, E_max, tau, mu, beta):
    """Final level-1 weight only (cheaper than the full recursion)."""
    E, tau = np.broadcast_arrays(np.asarray(E_max, dtype=float), np.asarray(tau, dtype=float))
    r = np.exp(-mu * tau / N)
    p = np.full(E.shape, 0.5)
    for k in range(1, N + 1):
        Ek = E if k == N else k * (E / N)
        p = r * p + (1.0 - r) * expit(-beta * Ek)
    return p


# --------------------------------------------------------------------------
# single runs


@dataclass
class ResetRun:
    schedule: object
    trajectory: object
    ledger: object
    trace: object
    report: object
    mu: float

    def row(self):
        L, tr = self.ledger, self.trace
        out = {
            "tau": self.schedule.tau,
            "E_max": self.schedule.params["E_max"],
            "eps": tr.eps,
            "W": L.W,
            "W_qs": L.W_qs,
            "W_pn": L.W_pn,
            "Sigma": L.Sigma_rate,
            "Sigma_bit": float(tr.Sigma_bit[-1]),
            "D_eps": tr.D_eps,
            "mu_avg": tr.mu_avg,
        }
        for name in SWEEP_RECORDS:
            if name in self.report:
                rec = self.report[name]
                out[f"{name}_lhs"] = rec.lhs
                out[f"{name}_rhs"] = rec.rhs
        return out


def run_constant_shifting(N, E_max, tau, mu, beta, dt_max=None, p0=None, require_hypotheses=False):
    """Engine run of the constant-shifting protocol with all checks evaluated.

    ``p0`` overrides the thermal initial state; with ``require_hypotheses``
    a run violating the main bound's preconditions raises instead of
    reporting the bound as not applicable.
    """
    sched = constant_shifting_schedule(N, E_max, tau, beta)
    traj = integrate_master_equation(sched, PartialSwapRates(mu), dt_max or tau / N, p0=p0)
    led = make_ledger(traj)
    trace = coarse_trace(traj, BitPartition([0], [1]))
    report = evaluate_bounds(led, trace, sched, require_hypotheses=require_hypotheses)
    return ResetRun(sched, traj, led, trace, report, float(mu))


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepSpec:
    mode: str
    taus: tuple
    N: int = 100
    mu: float = 0.1
    beta: float = 1.0
    E_max: float = None
    eps_target: float = None
    E_cap: float = None

    def __post_init__(self):
        if self.mode not in ("fixed-energy", "fixed-error"):
            raise ValueError(f"unknown sweep mode {self.mode!r}")
        taus = np.asarray(self.taus, dtype=float)
        if taus.ndim != 1 or taus.size == 0 or np.any(taus <= 0) or np.any(np.diff(taus) <= 0):
            raise ValueError("tau grid must be positive and strictly increasing")
        self.taus = tuple(taus.tolist())
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.mu > 0 or not self.beta > 0:
            raise ValueError("mu and beta must be positive")
        if self.E_cap is None:
            self.E_cap = 50.0 / self.beta
        if self.mode == "fixed-energy":
            if self.E_max is None or not self.E_max >= 0:
                raise ValueError("fixed-energy sweeps need E_max >= 0")
        else:
            if self.eps_target is None or not 0 < self.eps_target <= 0.5:
                raise ValueError("fixed-error sweeps need 0 < eps_target <= 1/2")
            floor = float(expit(-self.beta * self.E_cap))
            if self.eps_target <= floor:
                raise InfeasibleError(
                    f"eps_target {self.eps_target} is below the thermal floor {floor:.3e} at E_cap",
                    min_eps=floor,
                )


@dataclass
class SweepPoint:
    tau: float
    status: str
    run: ResetRun = None
    E_max: float = None
    min_eps: float = None
    note: str = ""

    def row(self):
        if self.run is not None:
            out = self.run.row()
        else:
            out = {"tau": self.tau, "E_max": self.E_max}
        out["status"] = self.status
        out["min_eps"] = self.min_eps
        return out


def sweep_header():
    cols = list(SWEEP_COLUMNS)
    for name in SWEEP_RECORDS:
        cols += [f"{name}_lhs", f"{name}_rhs"]
    return cols + ["status", "min_eps"]


def _fixed_energy_point(args):
    tau, N, E_max, mu, beta = args
    return SweepPoint(tau, "ok", run_constant_shifting(N, E_max, tau, mu, beta), E_max)


def run_fixed_energy_sweep(spec, workers=None):
    """One engine run per duration at the sweep's fixed ``E_max``."""
    if spec.mode != "fixed-energy":
        raise ValueError("spec is not a fixed-energy sweep")
    items = [(t, spec.N, spec.E_max, spec.mu, spec.beta) for t in spec.taus]
    return _parallel_map(_fixed_energy_point, items, workers)


def solve_fixed_error_energy(eps_target, tau, N, mu, beta, E_cap=None, tol=1e-10):
    """Final energy ``E_max`` at which the protocol ends with error ``eps_target``.

    Bisection on ``[0, E_cap]`` (default ``50 / beta``).  The final error is
    asserted to decrease with ``E_max`` at every bisection step.  Raises
    :class:`InfeasibleError` carrying the smallest reachable error.
    """
    if not 0 < eps_target <= 0.5:
        raise ValueError("eps_target must lie in (0, 1/2]")
    if eps_target == 0.5:
        return 0.0
    E_cap = 50.0 / beta if E_cap is None else float(E_cap)

    def f(E):
        return float(_final_p1(N, E, tau, mu, beta)) - eps_target

    lo, hi = 0.0, E_cap
    f_lo, f_hi = f(lo), f(hi)
    if f_hi > 0:
        raise InfeasibleError(
            f"eps_target {eps_target} unreachable for tau={tau}, mu={mu}, N={N}; "
            f"minimum error {f_hi + eps_target:.6g}",
            min_eps=f_hi + eps_target,
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if not f_hi - 1e-15 <= f_mid <= f_lo + 1e-15:
            raise RuntimeError(f"final error not monotone in E_max near {mid}")
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    E = lo if abs(f_lo) < abs(f_hi) else hi
    if abs(f(E)) > tol:
        raise RuntimeError(f"bisection stalled with residual {f(E):.3e}")
    return E


def _fixed_error_point(args):
    tau, N, eps, mu, beta, E_cap = args
    try:
        E = solve_fixed_error_energy(eps, tau, N, mu, beta, E_cap)
    except InfeasibleError as exc:
        return SweepPoint(tau, "infeasible", None, None, exc.min_eps, str(exc))
    run = run_constant_shifting(N, E, tau, mu, beta)
    if abs(run.trace.eps - eps) > 1e-8:
        raise RuntimeError(f"forward run at E_max={E} gives eps={run.trace.eps}, target {eps}")
    return SweepPoint(tau, "ok", run, E)


def run_fixed_error_sweep(spec, workers=None):
    """Solve ``E_max(tau)`` for the target error, then run each point.

    Durations too short to reach the target are kept as ``infeasible`` points.
    """
    if spec.mode != "fixed-error":
        raise ValueError("spec is not a fixed-error sweep")
    items = [(t, spec.N, spec.eps_target, spec.mu, spec.beta, spec.E_cap) for t in spec.taus]
    return _parallel_map(_fixed_error_point, items, workers)


# --------------------------------------------------------------------------
# region map


@dataclass
class RegionMap:
    """Labels on an ``E_max`` x ``eps`` grid (rows follow ``E_grid``).

    ``tau`` holds, per reachable cell, the protocol duration at which the
    final error equals the requested ``eps``; ``tau_cap`` is the longest
    duration allowed.
    """

    E_grid: np.ndarray
    eps_grid: np.ndarray
    labels: np.ndarray
    D_eps: np.ndarray
    Sigma: np.ndarray
    tau: np.ndarray
    tau_cap: float
    params: dict = field(default_factory=dict)

    def boundary(self):
        """Per-row crossings of ``D_eps - Sigma`` (log-interpolated ``eps``).

        Returns a list with one entry per ``E_max`` row: the list of crossing
        errors found among reachable cells.
        """
        out = []
        le = np.log(self.eps_grid)
        for i in range(self.E_grid.size):
            ok = self.labels[i] != "III"
            d = (self.D_eps[i] - self.Sigma[i])[ok]
            x = le[ok]
            s = np.sign(d)
            cross = []
            for j in np.nonzero(s[:-1] * s[1:] < 0)[0]:
                t = d[j] / (d[j] - d[j + 1])
                cross.append(float(np.exp(x[j] + t * (x[j + 1] - x[j]))))
            out.append(cross)
        return out

    def rows(self):
        for i, E in enumerate(self.E_grid):
            for j, e in enumerate(self.eps_grid):
                yield {
                    "E_max": float(E),
                    "eps": float(e),
                    "label": str(self.labels[i, j]),
                    "D_eps": float(self.D_eps[i, j]),
                    "Sigma": float(self.Sigma[i, j]),
                    "tau": float(self.tau[i, j]),
                }


def _region_rows(args):
    E_rows, eps_grid, tau_cap, N, mu, beta = args
    E = np.repeat(np.asarray(E_rows, float)[:, None], eps_grid.size, axis=1)
    eps = np.broadcast_to(eps_grid, E.shape)
    floor = _final_p1(N, E, tau_cap, mu, beta)
    thermal = expit(-beta * E)
    infeasible = (eps < floor) | (eps < thermal)
    lo = np.full(E.shape, math.log(tau_cap) - 40.0)
    hi = np.full(E.shape, math.log(tau_cap))
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        above = _final_p1(N, E, np.exp(mid), mu, beta) > eps
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    tau = np.exp(hi)
    res = shifting_recursion(N, E, tau, mu, beta)
    D, S = res["D_eps"], res["Sigma"]
    labels = np.where(infeasible, "III", np.where(D > S, "I", "II"))
    nan = np.full(E.shape, np.nan)
    return (
        labels,
        np.where(infeasible, nan, D),
        np.where(infeasible, nan, S),
        np.where(infeasible, nan, tau),
    )


def region_map(tau_cap, N, mu, beta, E_grid=None, eps_grid=None, workers=None):
    """Classify each ``(E_max, eps)`` cell.

    A cell is III when ``eps`` lies below the final error reachable within
    ``tau_cap`` (which is never below ``gamma_1(E_max)``).  Otherwise the
    duration reaching ``eps`` exactly is found by bisection on ``log tau``
    and the cell is I when ``D_eps > Sigma`` there, II otherwise.
    """
    E_grid = np.logspace(-1, math.log10(20.0), 64) if E_grid is None else np.asarray(E_grid, float)
    eps_grid = np.logspace(-4, math.log10(0.5), 65)[:-1] if eps_grid is None else np.asarray(eps_grid, float)
    if np.any(E_grid <= 0) or np.any(eps_grid <= 0) or np.any(eps_grid >= 0.5):
        raise ValueError("grids must be positive with eps < 1/2")
    if not tau_cap > 0:
        raise ValueError("tau must be positive")
    n_chunks = max(1, min(len(E_grid), workers or 1))
    chunks = [c for c in np.array_split(E_grid, n_chunks) if c.size]
    parts = _parallel_map(_region_rows, [(c, eps_grid, tau_cap, N, mu, beta) for c in chunks], workers)
    labels, D, S, tau = (np.concatenate([p[k] for p in parts], axis=0) for k in range(4))
    return RegionMap(
        E_grid, eps_grid, labels, D, S, tau, float(tau_cap), {"N": N, "mu": mu, "beta": beta}
    )
