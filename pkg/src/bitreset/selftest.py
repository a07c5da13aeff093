"""Seeded invariant battery run by ``bitreset selftest``.

Also provides :func:`random_protocol`, the sampler of random detailed-balance
protocols shared with the test-suite.
"""

import math

import numpy as np

from .accounting import ledger
from .bounds import throughput_identity
from .coarse import BitPartition, coarse_relative_entropy_pair, coarse_trace
from .dynamics import BarrierRates, integrate_master_equation, stationary_state
from .experiments import run_constant_shifting
from .landscape import EnergyLandscape, ProtocolSchedule, thermal_state


def random_protocol(rng, n_levels=None, n_segments=None, jumps=True, tau=None, beta=None):
    """Random piecewise-linear protocol with symmetric-barrier rates.

    Returns ``(schedule, rate_model, partition)``.  Energies lie in
    ``[-2, 2]``, couplings in ``[0.2, 2]`` (all pairs connected), and
    segments may start with a sudden jump when ``jumps`` is true.
    """
    n = int(rng.integers(2, 9)) if n_levels is None else int(n_levels)
    m = int(rng.integers(1, 4)) if n_segments is None else int(n_segments)
    tau = float(rng.uniform(0.5, 5.0)) if tau is None else float(tau)
    beta = float(rng.uniform(0.5, 2.0)) if beta is None else float(beta)
    cuts = np.sort(rng.uniform(0, tau, m - 1))
    bounds = np.concatenate([[0.0], cuts, [tau]])
    initial = rng.uniform(-2, 2, n)
    segs = []
    prev = initial
    for k in range(m):
        start = rng.uniform(-2, 2, n) if (jumps and rng.random() < 0.5) else prev
        end = rng.uniform(-2, 2, n)
        segs.append((bounds[k], bounds[k + 1], start, end))
        prev = end
    sched = ProtocolSchedule(EnergyLandscape(initial, segs), tau, beta)
    k = rng.uniform(0.2, 2.0, (n, n))
    k = 0.5 * (k + k.T)
    cut = int(rng.integers(1, n))
    return sched, BarrierRates(k), BitPartition(range(cut), range(cut, n))


def _result(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def run_selftest(seed=0, n_protocols=10, n_states=1000):
    """Run the battery and return one result dict per invariant."""
    rng = np.random.default_rng(seed)
    out = []

    worst = 0.0
    worst_cg = -math.inf
    neg_bit = math.inf
    for _ in range(n_protocols):
        sched, model, part = random_protocol(rng)
        traj = integrate_master_equation(sched, model, 1e-3 * sched.tau)
        L = ledger(traj)
        worst = max(worst, abs(L.penalty_residual))
        tr = coarse_trace(traj, part)
        worst_cg = max(worst_cg, float(tr.Sigma_bit[-1]) - L.Sigma_rate)
        neg_bit = min(neg_bit, float(tr.Sigma_bit[-1]))
    out.append(_result("penalty_equality", worst < 1e-6, f"max residual {worst:.3e} over {n_protocols} protocols"))
    out.append(
        _result(
            "sigma_ge_sigma_bit_ge_0",
            worst_cg <= 1e-9 and neg_bit >= -1e-12,
            f"max(Sigma_bit - Sigma) {worst_cg:.3e}, min Sigma_bit {neg_bit:.3e}",
        )
    )

    gap = math.inf
    for _ in range(n_states):
        n = int(rng.integers(2, 9))
        p = rng.dirichlet(np.ones(n))
        g = rng.dirichlet(np.ones(n))
        cut = int(rng.integers(1, n))
        fine, coarse = coarse_relative_entropy_pair(p, g, BitPartition(range(cut), range(cut, n)))
        gap = min(gap, float(fine - coarse))
    out.append(_result("relent_coarse_graining", gap >= -1e-12, f"min D - D_bit {gap:.3e} over {n_states} states"))

    err = 0.0
    for _ in range(20):
        sched, model, _ = random_protocol(rng)
        E = sched.landscape.initial
        G = model.generator(0.0, E, sched.beta)
        err = max(err, float(np.abs(stationary_state(G) - thermal_state(E, sched.beta).gamma).max()))
    out.append(_result("gibbs_stationary", err < 1e-10, f"max |p_st - gamma| {err:.3e}"))

    bad = []
    for tau in (1.0, 100.0, 1000.0):
        run = run_constant_shifting(100, 10.0, tau, 0.1, 1.0)
        bad += [f"{r.name}@tau={tau}" for r in run.report.violations()]
    out.append(_result("constant_shifting_bounds", not bad, "all satisfied" if not bad else ", ".join(bad)))

    tgap = 0.0
    for eps in np.linspace(0.01, 0.49, 25):
        lhs, rhs = throughput_identity(eps, 10.0, 1.0)
        tgap = max(tgap, abs(lhs - rhs))
    out.append(_result("throughput_identity", tgap < 1e-10, f"max gap {tgap:.3e}"))
    return out
