import math

import numpy as np
import pytest

from bitreset.accounting import (
    entropy_production,
    entropy_production_rate,
    heat,
    ledger,
    penalty_equality_residual,
    step_decomposition,
    work,
)
from bitreset.dynamics import BarrierRates, PartialSwapRates, integrate_master_equation
from bitreset.errors import UnsupportedProtocolError
from bitreset.landscape import constant_shifting_schedule, linear_ramp_schedule, thermal_state
from bitreset.selftest import random_protocol
from bitreset.simplex import relative_entropy


def g1(E, beta=1.0):
    return 1.0 / (1.0 + math.exp(beta * E))


class TestWork:
    def test_static_landscape(self):
        sched = linear_ramp_schedule([0.0, 1.0], [0.0, 1.0], 5.0, 1.0)
        traj = integrate_master_equation(sched, 0.3, 0.1, p0=[0.2, 0.8])
        assert work(traj) == 0.0

    def test_single_jump(self):
        traj = integrate_master_equation(constant_shifting_schedule(1, 10.0, 5.0, 1.0), 0.1, 1.0)
        assert work(traj) == pytest.approx(5.0, abs=1e-14)

    def test_two_jumps(self):
        mu, tau = 0.1, 7.0
        traj = integrate_master_equation(constant_shifting_schedule(2, 10.0, tau, 1.0), mu, 0.5)
        r = math.exp(-mu * tau / 2)
        P1_half = r * 0.5 + (1 - r) * g1(5.0)
        assert work(traj) == pytest.approx(0.5 * 5 + P1_half * 5, rel=1e-13)

    def test_linear_ramp_quadrature(self):
        # frozen dynamics on a ramp: W = p . (E_end - E_start) exactly
        sched = linear_ramp_schedule([0.0, 0.0, 0.0], [1.0, -2.0, 0.5], 3.0, 1.0)
        traj = integrate_master_equation(sched, 0.0, 0.1, p0=[0.2, 0.3, 0.5])
        assert work(traj) == pytest.approx(0.2 - 0.6 + 0.25, abs=1e-13)

    def test_gauss_and_trapezoid_converge(self, rng):
        sched, model, _ = random_protocol(rng, jumps=False)
        traj = integrate_master_equation(sched, model, 1e-3 * sched.tau)
        assert work(traj) == pytest.approx(work(traj, method="trapezoid"), abs=1e-5)


class TestHeat:
    def test_frozen(self):
        traj = integrate_master_equation(constant_shifting_schedule(3, 2.0, 3.0, 1.0), 0.0, 0.1)
        assert heat(traj) == pytest.approx(0.0, abs=1e-14)

    def test_pure_thermalization(self):
        sched = linear_ramp_schedule([0.0, 1.0], [0.0, 1.0], 5.0, 1.0)
        traj = integrate_master_equation(sched, 0.3, 0.1, p0=[0.2, 0.8])
        L = ledger(traj)
        assert L.W == 0.0 and L.Q == pytest.approx(L.dU, abs=1e-15)

    def test_single_jump(self):
        traj = integrate_master_equation(constant_shifting_schedule(1, 10.0, 10.0, 1.0), 0.1, 1.0)
        U_end = traj.final[1] * 10.0
        assert heat(traj) == pytest.approx(U_end - 5.0, rel=1e-13)

    def test_first_law(self, rng):
        for _ in range(10):
            sched, model, _ = random_protocol(rng)
            L = ledger(integrate_master_equation(sched, model, 1e-2 * sched.tau))
            assert abs(L.dU - L.Q - L.W) < 1e-8


class TestEntropyProduction:
    def test_frozen(self):
        traj = integrate_master_equation(constant_shifting_schedule(3, 2.0, 3.0, 1.0), 0.0, 0.1)
        assert entropy_production(traj) == pytest.approx(0.0, abs=1e-14)
        assert entropy_production(traj, path="rate") == 0.0

    def test_sudden_quench_full_thermalization(self):
        traj = integrate_master_equation(constant_shifting_schedule(1, 10.0, 1000.0, 1.0), 0.1, 1.0)
        ref = relative_entropy([0.5, 0.5], thermal_state([0, 10], 1.0).gamma)
        assert entropy_production(traj) == pytest.approx(ref, rel=1e-12)
        assert entropy_production(traj, path="rate") == pytest.approx(ref, rel=1e-9)
        assert ref == pytest.approx(4.30690, abs=1e-5)

    def test_quasistatic_trend(self):
        vals = [
            entropy_production(integrate_master_equation(constant_shifting_schedule(N, 10.0, tau, 1.0), 0.1, tau / N))
            for N, tau in ((10, 100.0), (100, 1e4), (1000, 1e6))
        ]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 0.02

    def test_rate_is_nonnegative(self, rng):
        for _ in range(100):
            n = rng.integers(2, 7)
            k = rng.uniform(0, 2, (n, n))
            G = BarrierRates(0.5 * (k + k.T)).generator(0.0, rng.normal(size=n), 1.0)
            assert entropy_production_rate(G, rng.dirichlet(np.ones(n))) >= 0

    def test_paths_agree(self, rng):
        for _ in range(10):
            sched, model, _ = random_protocol(rng)
            traj = integrate_master_equation(sched, model, 1e-3 * sched.tau)
            a, b = entropy_production(traj), entropy_production(traj, path="rate")
            assert b >= -1e-9
            assert a == pytest.approx(b, abs=1e-6)


class TestPenaltyEquality:
    def test_frozen(self):
        traj = integrate_master_equation(constant_shifting_schedule(3, 2.0, 3.0, 1.0), 0.0, 0.1)
        assert penalty_equality_residual(traj) < 1e-12

    def test_single_window(self):
        traj = integrate_master_equation(constant_shifting_schedule(1, 10.0, 10.0, 1.0), 0.1, 0.1)
        assert penalty_equality_residual(traj) < 1e-10

    def test_random_five_level(self):
        sched, model, _ = random_protocol(np.random.default_rng(5), n_levels=5)
        traj = integrate_master_equation(sched, model, 1e-3 * sched.tau)
        assert penalty_equality_residual(traj) < 1e-6

    def test_converges_under_refinement(self):
        sched, model, _ = random_protocol(np.random.default_rng(11), n_levels=4, n_segments=2, jumps=False)
        res = [penalty_equality_residual(integrate_master_equation(sched, model, f * sched.tau)) for f in (1e-1, 1e-2)]
        assert res[1] <= res[0] + 1e-12

    def test_ledger_identities(self, rng):
        sched, model, _ = random_protocol(rng)
        L = ledger(integrate_master_equation(sched, model, 1e-2 * sched.tau))
        assert L.W_pn == L.W - L.W_qs
        assert L.Sigma == pytest.approx(L.dS - L.Q / L.T)
        assert set(L.to_dict()) >= {"W", "Q", "Sigma", "W_pn", "penalty_residual"}


class TestStepDecomposition:
    def test_sums_reproduce_totals(self):
        traj = integrate_master_equation(constant_shifting_schedule(20, 10.0, 50.0, 1.0), 0.1, 0.5)
        L = ledger(traj)
        dec = step_decomposition(traj)
        assert dec.sigma.sum() == pytest.approx(L.Sigma, abs=1e-8)
        assert dec.w_pn.sum() == pytest.approx(L.W_pn / L.T, abs=1e-8)

    def test_single_step(self):
        traj = integrate_master_equation(constant_shifting_schedule(1, 10.0, 5.0, 1.0), 0.1, 0.5)
        dec = step_decomposition(traj)
        g = thermal_state([0, 10], 1.0).gamma
        ref = relative_entropy([0.5, 0.5], g) - relative_entropy(traj.final, g)
        assert dec.sigma[0] == pytest.approx(ref, rel=1e-12)

    def test_full_thermalization_telescopes(self):
        N, E = 5, 5.0
        traj = integrate_master_equation(constant_shifting_schedule(N, E, 1e4, 1.0), 0.1, 100.0)
        gam = [thermal_state([0, k * E / N], 1.0).gamma for k in range(N + 1)]
        ref = sum(relative_entropy(gam[k - 1], gam[k]) for k in range(1, N + 1))
        L = ledger(traj)
        assert L.W_pn / L.T == pytest.approx(ref, rel=1e-9)
        assert step_decomposition(traj).w_pn.sum() == pytest.approx(ref, rel=1e-9)

    def test_no_thermalization(self):
        traj = integrate_master_equation(constant_shifting_schedule(4, 4.0, 4.0, 1.0), PartialSwapRates(0.0), 0.5)
        np.testing.assert_allclose(step_decomposition(traj).sigma, 0.0, atol=1e-15)

    def test_unsupported(self):
        sched = linear_ramp_schedule([0.0, 0.0], [0.0, 1.0], 1.0, 1.0)
        with pytest.raises(UnsupportedProtocolError):
            step_decomposition(integrate_master_equation(sched, 0.1, 0.1))
