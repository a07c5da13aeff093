import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitreset.bounds import (
    ABS_SLACK,
    BoundsReport,
    evaluate_bounds,
    main_penalty_bound_check,
    make_record,
    penalty_envelope,
    penalty_envelope_values,
    relent_exponential_upper,
    relent_general_lower,
    speed_limit_check,
    throughput_bound,
    throughput_composition,
    throughput_identity,
    two_level_quasistatic_work,
    within_slack,
)
from bitreset.coarse import BitPartition, CoarseTrace, coarse_trace
from bitreset.dynamics import integrate_master_equation
from bitreset.errors import HypothesisError, UnsupportedProtocolError
from bitreset.experiments import run_constant_shifting
from bitreset.landscape import linear_ramp_schedule
from bitreset.simplex import binary_entropy, binary_relative_entropy


def synthetic_trace(P1_start, P1_end, mu_avg, tau, sigma_bit, gamma1=(0.5, 0.5)):
    times = np.array([0.0, tau])
    P = np.array([[1 - P1_start, P1_start], [1 - P1_end, P1_end]])
    g = np.array([[1 - gamma1[0], gamma1[0]], [1 - gamma1[1], gamma1[1]]])
    mu = np.full(2, mu_avg)
    return CoarseTrace(
        times=times,
        P_bit=P,
        gamma_bit=g,
        Gamma01=mu * g[:, 0],
        Gamma10=mu * g[:, 1],
        mu=mu,
        P_st=g.copy(),
        Sigma_bit=np.array([0.0, sigma_bit]),
        mu_integral=np.array([0.0, mu_avg * tau]),
        beta=1.0,
        partition=BitPartition([0], [1]),
    )


@pytest.fixture(scope="module")
def fig2_runs():
    return [run_constant_shifting(100, 10.0, tau, 0.1, 1.0) for tau in (0.1, 1.0, 10.0, 100.0, 1000.0)]


class TestSlackPolicy:
    def test_exact(self):
        assert within_slack(1.0, 1.0)

    def test_inside_absolute(self):
        assert within_slack(0.0, 0.5 * ABS_SLACK)

    def test_outside(self):
        assert not within_slack(0.0, 3e-9)

    def test_relative_part(self):
        assert within_slack(1e3, 1e3 + 5e-7)
        assert not within_slack(1e3, 1e3 + 5e-6)

    def test_infinities_and_nan(self):
        assert within_slack(math.inf, 1.0)
        assert not within_slack(1.0, math.inf)
        assert not within_slack(math.nan, 0.0)

    def test_record_fields(self):
        r = make_record("x", 2.0, 1.0)
        assert r.satisfied and r.slack == 1.0
        assert set(r.to_dict()) >= {"name", "lhs", "rhs", "satisfied", "slack"}

    def test_report_roundtrip(self):
        rep = BoundsReport([make_record("a", 1, 0), make_record("b", 0, 1), make_record("c", 0, 1, kind="diagnostic")])
        assert not rep.all_satisfied
        assert [r.name for r in rep.violations()] == ["b"]
        assert "c" in rep and rep["a"].lhs == 1.0
        assert '"records"' in rep.to_json()


class TestSpeedLimit:
    def test_worked_example(self):
        tr = synthetic_trace(0.5, 0.25, 0.1, 100.0, 0.03)
        rec = speed_limit_check(tr)
        assert rec.rhs == pytest.approx(0.025, rel=1e-14)
        assert rec.satisfied

    def test_violated_example(self):
        assert not speed_limit_check(synthetic_trace(0.5, 0.25, 0.1, 100.0, 0.02)).satisfied

    def test_no_motion(self):
        rec = speed_limit_check(synthetic_trace(0.5, 0.5, 0.1, 100.0, 0.0))
        assert rec.rhs == 0.0 and rec.satisfied

    def test_motion_without_production_flags(self):
        assert not speed_limit_check(synthetic_trace(0.5, 0.3, 0.1, 10.0, 0.0)).satisfied

    def test_frozen_dynamics_with_motion_is_infinite(self):
        rec = speed_limit_check(synthetic_trace(0.5, 0.3, 0.0, 10.0, 0.0))
        assert rec.rhs == math.inf and not rec.satisfied

    def test_sweep(self, fig2_runs):
        for run in fig2_runs:
            assert run.report["speed_limit"].satisfied


class TestMainBound:
    def test_sweep(self, fig2_runs):
        for run in fig2_runs:
            rec = run.report["main_penalty_bound"]
            assert rec.applicable and rec.satisfied
            assert rec.rhs == pytest.approx(rec.terms["D_eps"] + rec.terms["speed"], abs=1e-12)

    def test_rhs_composition(self, fig2_runs):
        for run in fig2_runs:
            tr = run.trace
            speed = (1 - 2 * tr.eps) ** 2 / (tr.mu_avg * tr.tau)
            assert run.report["main_penalty_bound"].rhs == pytest.approx(tr.D_eps + speed, abs=1e-12)
            assert run.report["main_penalty_bound"].terms["speed"] == pytest.approx(
                run.report["speed_limit"].rhs, abs=1e-12
            )

    def test_biased_start_refused(self):
        run = run_constant_shifting(10, 5.0, 10.0, 0.1, 1.0, p0=[0.7, 0.3])
        assert not run.report["main_penalty_bound"].applicable
        with pytest.raises(HypothesisError, match="1/2"):
            main_penalty_bound_check(run.ledger, run.trace)

    def test_nonthermal_start_refused(self):
        sched = linear_ramp_schedule([0.0, 1.0, 1.0], [0.0, 1.0, 1.0], 1.0, 1.0)
        traj = integrate_master_equation(sched, 0.1, 0.1, p0=[0.5, 0.5, 0.0])
        tr = coarse_trace(traj, BitPartition([0], [1, 2]))
        from bitreset.accounting import ledger

        with pytest.raises(HypothesisError, match="thermal"):
            main_penalty_bound_check(ledger(traj), tr)

    def test_idle(self):
        sched = linear_ramp_schedule([0.0, 0.0], [0.0, 0.0], 5.0, 1.0)
        traj = integrate_master_equation(sched, 0.1, 0.5)
        from bitreset.accounting import ledger

        rec = main_penalty_bound_check(ledger(traj), coarse_trace(traj, BitPartition([0], [1])))
        assert rec.lhs == 0.0 and rec.rhs == pytest.approx(0.0, abs=1e-15) and rec.satisfied

    def test_small_error_limit(self):
        # eps -> 0 with gamma_1(tau) = 1e-3: D_eps -> ln(1 / gamma_0(tau)), speed term -> 1/(mu tau)
        speed = (1 - 2e-12) ** 2 / 10.0
        D = binary_relative_entropy(1e-12, 1e-3)
        assert D == pytest.approx(math.log(1 / (1 - 1e-3)), abs=1e-9)
        assert D + speed == pytest.approx(math.log(1 / (1 - 1e-3)) + 0.1, abs=1e-9)


class TestExponentialUpper:
    def test_sweep(self, fig2_runs):
        for run in fig2_runs:
            assert run.report["relent_exponential_upper"].satisfied

    def test_single_window(self):
        mu, tau = 0.1, 5.0
        run = run_constant_shifting(1, 10.0, tau, mu, 1.0)
        rec = relent_exponential_upper(run.trace, run.schedule)
        assert rec.terms["D_gamma"] == pytest.approx(4.30690, abs=1e-5)
        assert rec.lhs == pytest.approx(math.exp(-mu * tau) * rec.terms["D_gamma"], rel=1e-12)
        assert rec.satisfied

    def test_full_thermalization(self):
        run = run_constant_shifting(1, 10.0, 1e3, 0.1, 1.0)
        rec = relent_exponential_upper(run.trace, run.schedule)
        assert rec.lhs < 1e-40 and rec.rhs < 1e-40

    def test_unsupported(self):
        sched = linear_ramp_schedule([0.0, 0.0], [0.0, 1.0], 1.0, 1.0)
        traj = integrate_master_equation(sched, 0.1, 0.1)
        tr = coarse_trace(traj, BitPartition([0], [1]))
        with pytest.raises(UnsupportedProtocolError):
            relent_exponential_upper(tr, sched)
        with pytest.raises(UnsupportedProtocolError):
            penalty_envelope(None, tr, sched)


class TestGeneralLower:
    def test_zero_duration_limit(self):
        recs = relent_general_lower(synthetic_trace(0.5, 0.5, 0.1, 1e-14, 0.0))
        assert recs[0].rhs == pytest.approx(0.0, abs=1e-12)

    def test_sweep_case2(self, fig2_runs):
        for run in fig2_runs:
            rec = run.report["relent_case2_lower"]
            assert rec.applicable and rec.satisfied
            assert run.report["relent_general_lower"].satisfied

    def test_case2_trivial_when_q_small(self):
        run = run_constant_shifting(10, 5.0, 100.0, 0.1, 1.0)
        rec = run.report["relent_case2_lower"]
        assert rec.terms["q"] < 0.5 and rec.rhs <= 0

    def test_case1_is_diagnostic(self, fig2_runs):
        rec = fig2_runs[0].report["relent_case1_estimate"]
        assert rec.kind == "diagnostic"

    def test_nonmonotone_target_not_applicable(self):
        tr = synthetic_trace(0.5, 0.3, 0.1, 10.0, 1.0, gamma1=(0.2, 0.4))
        recs = relent_general_lower(tr)
        assert not recs[0].applicable and not recs[1].applicable


class TestEnvelope:
    def test_sweep(self, fig2_runs):
        for run in fig2_runs:
            assert run.report["penalty_envelope_lower"].satisfied
            assert run.report["penalty_envelope_upper"].satisfied

    def test_single_window(self):
        run = run_constant_shifting(1, 10.0, 10.0, 0.1, 1.0)
        (lo_rec, hi_rec), (lo, hi) = penalty_envelope(run.ledger, run.trace, run.schedule)
        assert lo_rec.satisfied and hi_rec.satisfied
        assert lo == pytest.approx(math.exp(-1.0) * 0.0 * 10.0, abs=1e-15)  # gamma_1(E_max - step) = 1/2
        assert hi == pytest.approx(math.expm1(10.0) / 2 + math.exp(-1.0) * (5.0 - run.ledger.W_qs))

    def test_limits(self):
        W_qs = two_level_quasistatic_work(10.0, 1.0)
        lo, hi = penalty_envelope_values(100, 10.0, 1.0, 0.1, 1e8, W_qs)
        assert lo == pytest.approx(0.0, abs=1e-300)
        assert hi == pytest.approx(math.expm1(0.1) / 2, rel=1e-12)


class TestThroughput:
    def test_half_error(self):
        val = throughput_bound(2.0, 0.5, 1.5, 0.1, 0.5, 10.0)
        assert val == pytest.approx((1.5 * 2 / 0.5) * 0.5 * 10.0 / 1.5, rel=1e-14)

    def test_zero_error(self):
        val = throughput_bound(1.0, 2.0, 1.0, 0.1, 0.0, 10.0)
        assert val == pytest.approx(0.5 * (math.log(2) + 1 / 0.2), rel=1e-14)

    def test_composition(self):
        terms = throughput_composition(1.0, 1.0, 1.0, 0.1, 0.25, 10.0)
        direct = throughput_bound(1.0, 1.0, 1.0, 0.1, 0.25, 10.0)
        assert terms.power == pytest.approx(direct, abs=1e-12)
        assert terms.B == 1.0
        assert terms.E_bit == pytest.approx(terms.W_qs + terms.W_pn_min)
        ref = math.log(2) - binary_entropy(0.25) + 2.5 + 0.25 / 0.1
        assert direct == pytest.approx(ref, rel=1e-14)

    @pytest.mark.parametrize("bad", [dict(n=0), dict(tau_sw=-1), dict(T=0), dict(mu=0), dict(eps=0.6), dict(E_max=-1)])
    def test_invalid(self, bad):
        kw = dict(n=1.0, tau_sw=1.0, T=1.0, mu=0.1, eps=0.25, E_max=10.0)
        kw.update(bad)
        with pytest.raises(ValueError):
            throughput_bound(**kw)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(1e-6, 0.5),
        st.floats(0.0, 40.0),
        st.floats(0.2, 5.0),
    )
    def test_identity_property(self, eps, E_max, beta):
        lhs, rhs = throughput_identity(eps, E_max, beta)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(rhs))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-3, 10), st.floats(1e-2, 10), st.floats(0.1, 5), st.floats(1e-2, 5), st.floats(0, 0.5), st.floats(0, 30))
    def test_composition_property(self, n, tau_sw, T, mu, eps, E_max):
        terms = throughput_composition(n, tau_sw, T, mu, eps, E_max)
        direct = throughput_bound(n, tau_sw, T, mu, eps, E_max)
        assert terms.power == pytest.approx(direct, rel=1e-12, abs=1e-12)


class TestEvaluate:
    def test_generic_protocol_has_no_protocol_specific_records(self, rng):
        from bitreset.accounting import ledger
        from bitreset.selftest import random_protocol

        sched, model, part = random_protocol(rng)
        traj = integrate_master_equation(sched, model, 1e-2 * sched.tau)
        rep = evaluate_bounds(ledger(traj), coarse_trace(traj, part), sched)
        assert "relent_exponential_upper" not in rep
        assert "speed_limit" in rep and "sigma_ge_sigma_bit" in rep

    def test_metadata(self, fig2_runs):
        meta = fig2_runs[2].report.metadata
        assert meta["N"] == 100 and meta["E_max"] == 10.0
        assert abs(meta["throughput_identity_gap"]) < 1e-10
