"""Energy landscapes, thermal states and driving schedules.

A landscape is a sequence of contiguous segments covering ``[0, tau]``.  Each
segment holds its energies at the left and right ends and interpolates
linearly in between (constant when both ends agree).  Whenever a segment
starts at energies different from where the previous one ended (or from the
landscape's initial energies at ``t = 0``), the difference is an
instantaneous jump: the work reservoir changes the levels faster than the
bath can respond.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class ThermalState:
    gamma: np.ndarray
    logZ: float


def thermal_state(energies, beta):
    """Gibbs state ``gamma_i = exp(-beta E_i) / Z`` computed in the log domain."""
    e = np.asarray(energies, dtype=float)
    if e.size == 0:
        raise ValueError("thermal state of an empty level set")
    if not np.all(np.isfinite(e)):
        raise ValueError("energies must be finite")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    a = -beta * e
    logZ = float(logsumexp(a))
    return ThermalState(np.exp(a - logZ), logZ)


def thermal_rows(energies, beta):
    """Vectorized Gibbs states along the last axis; returns ``(gamma, logZ)``."""
    # max-shifted log-sum-exp; this sits in the integrator's inner loop, where
    # the generic scipy wrapper's per-call overhead dominates
    a = -beta * np.asarray(energies, dtype=float)
    m = a.max(axis=-1, keepdims=True)
    logZ = m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True))
    return np.exp(a - logZ), logZ[..., 0]


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    start: np.ndarray
    end: np.ndarray

    @property
    def is_constant(self):
        return bool(np.array_equal(self.start, self.end))

    @property
    def slope(self):
        return (self.end - self.start) / (self.t1 - self.t0)

    def at(self, t):
        s = (t - self.t0) / (self.t1 - self.t0)
        return self.start + s * (self.end - self.start)


class EnergyLandscape:
    """Piecewise-linear level energies ``E_i(t)`` on ``[0, tau]``."""

    def __init__(self, initial, segments):
        self.initial = np.asarray(initial, dtype=float)
        if self.initial.ndim != 1 or self.initial.size == 0:
            raise ValueError("initial energies must be a non-empty vector")
        segs = []
        prev = 0.0
        for seg in segments:
            if not isinstance(seg, Segment):
                t0, t1, start, end = seg
                seg = Segment(float(t0), float(t1), np.asarray(start, float), np.asarray(end, float))
            if seg.start.shape != self.initial.shape or seg.end.shape != self.initial.shape:
                raise ValueError("segment energies must match the number of levels")
            if not (np.all(np.isfinite(seg.start)) and np.all(np.isfinite(seg.end))):
                raise ValueError("energies must be finite")
            if abs(seg.t0 - prev) > 1e-12 * max(1.0, abs(prev)):
                raise ValueError(f"segments must be contiguous: gap at t={prev}")
            if not seg.t1 > seg.t0:
                raise ValueError("segment boundaries must be strictly increasing")
            segs.append(seg)
            prev = seg.t1
        if not segs:
            raise ValueError("a landscape needs at least one segment")
        self.segments = tuple(segs)

    @property
    def n_levels(self):
        return self.initial.size

    @property
    def tau(self):
        return self.segments[-1].t1

    @property
    def final(self):
        return self.segments[-1].end

    def energies_at(self, t, side="right"):
        """Energies at time ``t``; ``side="left"`` gives the pre-jump value."""
        if t < 0 or t > self.tau * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.tau}]")
        if side == "left":
            if t <= 0:
                return self.initial.copy()
            for seg in self.segments:
                if t <= seg.t1:
                    return seg.at(t)
        for seg in self.segments:
            if t < seg.t1:
                return seg.at(t)
        return self.final.copy()

    def jumps(self):
        """List of ``(t, before, after)`` for every discontinuity."""
        out = []
        before = self.initial
        for seg in self.segments:
            if not np.array_equal(before, seg.start):
                out.append((seg.t0, before.copy(), seg.start.copy()))
            before = seg.end
        return out

    def is_closed_cycle(self):
        return bool(np.allclose(self.initial, self.final, rtol=0, atol=0))

    def to_dict(self):
        return {
            "initial": self.initial.tolist(),
            "segments": [
                {"t0": s.t0, "t1": s.t1, "start": s.start.tolist(), "end": s.end.tolist()}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["initial"],
            [(s["t0"], s["t1"], s["start"], s["end"]) for s in d["segments"]],
        )


@dataclass(frozen=True)
class ProtocolSchedule:
    landscape: EnergyLandscape
    tau: float
    beta: float
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if abs(self.landscape.tau - self.tau) > 1e-9 * self.tau:
            raise ValueError("landscape does not cover [0, tau]")
        if self.kind not in ("custom", "constant-shifting"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @property
    def T(self):
        return 1.0 / self.beta

    def to_dict(self):
        return {
            "tau": self.tau,
            "beta": self.beta,
            "kind": self.kind,
            "params": dict(self.params),
            "landscape": self.landscape.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            EnergyLandscape.from_dict(d["landscape"]),
            float(d["tau"]),
            float(d["beta"]),
            d.get("kind", "custom"),
            dict(d.get("params", {})),
        )


def quasistatic_work(schedule):
    """``W_qs = T ln(Z(0) / Z(tau))`` from the initial and final energies."""
    ls = schedule.landscape
    z0 = thermal_state(ls.initial, schedule.beta).logZ
    z1 = thermal_state(ls.final, schedule.beta).logZ
    return schedule.T * (z0 - z1)


def constant_shifting_schedule(N, E_max, tau, beta):
    """Two-level reset: N instant lifts of E_1 by E_max/N, each followed by a
    thermalization window of length tau/N.  E_0 stays at 0."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    if not E_max >= 0:
        raise ValueError(f"E_max must be non-negative, got {E_max}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    N = int(N)
    step = E_max / N
    dt = tau / N
    segments = []
    for k in range(1, N + 1):
        e = np.array([0.0, E_max if k == N else k * step])
        t1 = tau if k == N else k * dt
        segments.append(Segment((k - 1) * dt, t1, e, e.copy()))
    landscape = EnergyLandscape([0.0, 0.0], segments)
    return ProtocolSchedule(
        landscape, float(tau), float(beta), "constant-shifting", {"N": N, "E_max": float(E_max)}
    )


def linear_ramp_schedule(E_start, E_end, tau, beta, initial=None):
    """Single linear ramp from ``E_start`` to ``E_end`` over ``[0, tau]``.

    ``initial`` (default ``E_start``) sets the pre-protocol energies, so a
    jump at ``t = 0`` can be included.
    """
    E_start = np.asarray(E_start, dtype=float)
    init = E_start if initial is None else np.asarray(initial, dtype=float)
    landscape = EnergyLandscape(init, [(0.0, tau, E_start, np.asarray(E_end, dtype=float))])
    return ProtocolSchedule(landscape, float(tau), float(beta))
