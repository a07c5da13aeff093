"""Inequality checks for finite-time bit reset.

Every check is returned as an :class:`InequalityRecord` oriented so that the
claim reads ``lhs >= rhs``.  A record is satisfied when
``lhs >= rhs - (ABS_SLACK + REL_SLACK * max(|lhs|, |rhs|))``.

Records of kind ``"diagnostic"`` carry asymptotic estimates that are not
inequalities; they are reported but never counted as failures.  Records whose
hypotheses are not met are kept with ``applicable=False``.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import HypothesisError, UnsupportedProtocolError
from .landscape import thermal_state
from .simplex import binary_entropy, binary_relative_entropy, norm1_distance, symmetric_relative_entropy

ABS_SLACK = 1e-9
REL_SLACK = 1e-9


def within_slack(lhs, rhs):
    """``lhs >= rhs`` up to the package slack policy (infinities handled exactly)."""
    if math.isnan(lhs) or math.isnan(rhs):
        return False
    if math.isinf(rhs) or math.isinf(lhs):
        return lhs >= rhs
    return lhs >= rhs - (ABS_SLACK + REL_SLACK * max(abs(lhs), abs(rhs)))


@dataclass
class InequalityRecord:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float
    kind: str = "check"
    applicable: bool = True
    note: str = ""
    terms: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def make_record(name, lhs, rhs, kind="check", applicable=True, note="", terms=None):
    lhs = float(lhs)
    rhs = float(rhs)
    slack = lhs - rhs if not (math.isinf(lhs) and math.isinf(rhs)) else 0.0
    return InequalityRecord(
        name, lhs, rhs, within_slack(lhs, rhs), slack, kind, applicable, note, dict(terms or {})
    )


@dataclass
class BoundsReport:
    records: list
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name):
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name):
        return any(r.name == name for r in self.records)

    @property
    def checks(self):
        return [r for r in self.records if r.kind == "check" and r.applicable]

    @property
    def all_satisfied(self):
        return all(r.satisfied for r in self.checks)

    def violations(self):
        return [r for r in self.checks if not r.satisfied]

    def to_dict(self):
        return {"metadata": dict(self.metadata), "records": [r.to_dict() for r in self.records]}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _speed_term(L, mu_tau):
    if L == 0:
        return 0.0
    if mu_tau <= 0:
        return math.inf
    return L * L / mu_tau


def speed_limit_check(trace, tau=None):
    """``Sigma^bit >= L^2 / (<mu> tau)`` with ``L`` the 1-norm bit displacement."""
    tau = trace.tau if tau is None else float(tau)
    L = norm1_distance(trace.P_bit[-1], trace.P_bit[0])
    mu_tau = trace.mu_avg * tau
    rhs = _speed_term(L, mu_tau)
    return make_record(
        "speed_limit",
        trace.Sigma_bit[-1],
        rhs,
        terms={"L": L, "mu_avg": trace.mu_avg, "tau": tau},
    )


def main_penalty_bound_check(ledger, trace, atol=1e-9):
    """``beta W_pn >= D_eps + (1 - 2 eps)^2 / (<mu> tau)``.

    Refuses (:class:`HypothesisError`) unless the run starts thermal with an
    unbiased bit.  ``eps`` is the measured final weight of logical 1.
    """
    P0 = trace.P_bit[0]
    if abs(P0[1] - 0.5) > atol:
        raise HypothesisError(f"initial bit distribution is {P0.tolist()}, not [1/2, 1/2]")
    if ledger.D_initial > atol:
        raise HypothesisError(f"initial state is not thermal (D = {ledger.D_initial:.3e})")
    eps = trace.eps
    D_eps = trace.D_eps
    L = norm1_distance(trace.P_bit[-1], P0)
    speed = _speed_term(L, trace.mu_avg * trace.tau)
    return make_record(
        "main_penalty_bound",
        ledger.W_pn / ledger.T,
        D_eps + speed,
        terms={"D_eps": D_eps, "speed": speed, "eps": eps, "L": L, "mu_avg": trace.mu_avg},
    )


def _require_constant_shifting(schedule):
    if schedule is None or schedule.kind != "constant-shifting":
        raise UnsupportedProtocolError("this check applies to constant-shifting protocols only")
    if schedule.landscape.n_levels != 2:
        raise UnsupportedProtocolError("this check applies to two-level systems only")
    return int(schedule.params["N"]), float(schedule.params["E_max"])


def relent_exponential_upper(trace, schedule, mu=None):
    """``e^{-mu tau / N} D[gamma(0)||gamma(tau)] >= D_eps`` for constant shifting."""
    N, _ = _require_constant_shifting(schedule)
    mu = trace.mu_avg if mu is None else float(mu)
    g0, gt = trace.gamma_bit[0, 1], trace.gamma_bit[-1, 1]
    D0 = binary_relative_entropy(g0, gt)
    return make_record(
        "relent_exponential_upper",
        math.exp(-mu * trace.tau / N) * D0,
        trace.D_eps,
        terms={"D_gamma": D0, "mu": mu, "N": N},
    )


def relent_general_lower(trace, case2_atol=1e-8):
    """Lower bounds on ``D_eps`` from relaxation toward a moving target.

    Returns three records: the three-term bound, the stationary-target
    (``P_st(tau) = gamma^bit(tau)``) specialisation and the short-time
    first-order estimate as a diagnostic.  The first two are applicable only
    when ``P_st_1`` never increases along the trace.
    """
    q = math.exp(-trace.mu_avg * trace.tau)
    g0 = float(trace.gamma_bit[0, 1])
    gt = float(trace.gamma_bit[-1, 1])
    pst = trace.P_st[:, 1]
    finite = pst[np.isfinite(pst)]
    monotone = finite.size > 0 and bool(np.all(np.diff(finite) <= 1e-12))
    pst_tau = float(pst[-1]) if np.isfinite(pst[-1]) else gt
    D_eps = trace.D_eps
    D0 = binary_relative_entropy(g0, gt)

    def J(r, s):
        if r == s:
            return 0.0
        return float(symmetric_relative_entropy(r, s))

    three = q * D0 + (1 - q) * binary_relative_entropy(pst_tau, gt) - q * (1 - q) * J(g0, pst_tau)
    recs = [
        make_record(
            "relent_general_lower",
            D_eps,
            three,
            applicable=monotone,
            note="" if monotone else "stationary bit state not monotone in time",
            terms={"q": q},
        )
    ]
    case2 = monotone and abs(pst_tau - gt) <= case2_atol and gt <= g0 <= 0.5
    rhs2 = q * (2 * q - 1) * D0
    recs.append(
        make_record(
            "relent_case2_lower",
            D_eps,
            rhs2,
            applicable=case2,
            note="" if case2 else "final stationary state differs from thermal or ordering fails",
            terms={"q": q, "intermediate": q * q * J(g0, gt) - q * binary_relative_entropy(gt, g0)},
        )
    )
    case1 = q * D0 - (1 - q) * binary_relative_entropy(g0, pst_tau)
    recs.append(
        make_record(
            "relent_case1_estimate",
            D_eps,
            case1,
            kind="diagnostic",
            note="first-order short-time estimate; not an inequality",
            terms={"q": q, "one_minus_q": 1 - q},
        )
    )
    return recs


def penalty_envelope_values(N, E_max, beta, mu, tau, W_qs):
    """Analytic ``(W_pn^L, W_pn^U)`` for the constant-shifting protocol."""
    step = E_max / N
    T = 1.0 / beta
    decay = math.exp(-mu * tau / N)
    lower = decay * (0.5 - 1.0 / (1.0 + math.exp(beta * (E_max - step)))) * step
    upper = T * math.expm1(beta * step) / 2 + decay * (E_max / 2 - W_qs)
    return lower, upper


def penalty_envelope(ledger, trace, schedule, mu=None):
    """Records ``W_pn >= W_pn^L`` and ``W_pn^U >= W_pn``; returns ``(records, (L, U))``."""
    N, E_max = _require_constant_shifting(schedule)
    mu = trace.mu_avg if mu is None else float(mu)
    lo, hi = penalty_envelope_values(N, E_max, schedule.beta, mu, trace.tau, ledger.W_qs)
    recs = [
        make_record("penalty_envelope_lower", ledger.W_pn, lo),
        make_record("penalty_envelope_upper", hi, ledger.W_pn),
    ]
    return recs, (lo, hi)


def coarse_graining_checks(ledger, trace):
    """``Sigma >= Sigma^bit >= 0`` and ``D[p||gamma] >= D_eps`` at the final time."""
    sb = float(trace.Sigma_bit[-1])
    return [
        make_record("sigma_ge_sigma_bit", ledger.Sigma_rate, sb),
        make_record("sigma_bit_nonnegative", sb, 0.0),
        make_record("relent_coarse_graining", ledger.D_final, trace.D_eps),
    ]


def two_level_quasistatic_work(E_max, beta):
    """``T ln(Z(0)/Z(tau))`` for levels ``[0, 0] -> [0, E_max]``."""
    return (math.log(2.0) - math.log1p(math.exp(-beta * E_max))) / beta


def throughput_identity(eps, E_max, beta):
    """Both sides of ``ln Z(0)/Z(tau) + D_eps = ln 2 - H_b(eps) + eps beta E_max``."""
    g = thermal_state([0.0, E_max], beta)
    lhs = beta * two_level_quasistatic_work(E_max, beta) + binary_relative_entropy(eps, g.gamma[1])
    rhs = math.log(2.0) - binary_entropy(eps) + eps * beta * E_max
    return lhs, rhs


def throughput_bound(n, tau_sw, T, mu, eps, E_max):
    """Minimum dissipated power per area for ``n`` switches per area every ``tau_sw``."""
    for name, v in (("n", n), ("tau_sw", tau_sw), ("T", T), ("mu", mu)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if not 0 <= eps <= 0.5:
        raise ValueError("eps must lie in [0, 1/2]")
    if not E_max >= 0:
        raise ValueError("E_max must be non-negative")
    beta = 1.0 / T
    return (T * n / tau_sw) * (
        math.log(2.0) - binary_entropy(eps) + eps * beta * E_max + (1 - 2 * eps) ** 2 / (mu * tau_sw)
    )


@dataclass(frozen=True)
class ThroughputTerms:
    B: float  # switches per area per time
    W_qs: float
    W_pn_min: float
    E_bit: float
    power: float


def throughput_composition(n, tau_sw, T, mu, eps, E_max):
    """Assemble the power bound from per-switch quasistatic work plus minimum penalty."""
    beta = 1.0 / T
    g1 = thermal_state([0.0, E_max], beta).gamma[1]
    W_qs = two_level_quasistatic_work(E_max, beta)
    W_pn_min = T * (binary_relative_entropy(eps, g1) + (1 - 2 * eps) ** 2 / (mu * tau_sw))
    E_bit = W_qs + W_pn_min
    B = n / tau_sw
    return ThroughputTerms(B, W_qs, W_pn_min, E_bit, B * E_bit)


def evaluate_bounds(ledger, trace, schedule=None, require_hypotheses=False):
    """Run every applicable check on one run and collect a :class:`BoundsReport`.

    The main bound is included when its hypotheses hold (or raises if
    ``require_hypotheses``); protocol-specific checks are included for
    constant-shifting two-level schedules.
    """
    recs = [speed_limit_check(trace)]
    recs += coarse_graining_checks(ledger, trace)
    try:
        recs.append(main_penalty_bound_check(ledger, trace))
    except HypothesisError as exc:
        if require_hypotheses:
            raise
        recs.append(
            InequalityRecord("main_penalty_bound", math.nan, math.nan, False, math.nan, "check", False, str(exc))
        )
    recs += relent_general_lower(trace)
    meta = {
        "tau": trace.tau,
        "beta": trace.beta,
        "mu_avg": trace.mu_avg,
        "eps": trace.eps,
        "D_eps": trace.D_eps,
        "W_pn": ledger.W_pn,
        "Sigma": ledger.Sigma_rate,
        "Sigma_bit": float(trace.Sigma_bit[-1]),
    }
    if schedule is not None and schedule.kind == "constant-shifting" and schedule.landscape.n_levels == 2:
        recs.append(relent_exponential_upper(trace, schedule))
        env, _ = penalty_envelope(ledger, trace, schedule)
        recs += env
        lhs, rhs = throughput_identity(trace.eps, schedule.params["E_max"], schedule.beta)
        meta.update(N=schedule.params["N"], E_max=schedule.params["E_max"], throughput_identity_gap=lhs - rhs)
    return BoundsReport(recs, meta)
