"""Tests for the planner, closed-form readout maps, and resource accounting."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shadowlab import protocol
from shadowlab.protocol import (Alg1Plan, Alg2Plan, DEFAULT_CONSTANTS,
                                ProtocolConstants)


class TestScalarMaps:
    def test_angle_anchors(self):
        assert protocol.theta_of_mean(0.0) == pytest.approx(math.pi / 3)
        assert protocol.theta_of_mean(1.0) == pytest.approx(2 * math.pi / 3)
        assert protocol.readout_prob(math.pi / 2) == pytest.approx(0.5)
        assert protocol.readout_prob(math.pi / 3) == pytest.approx(0.25)

    def test_estimate_anchors(self):
        assert protocol.estimate_from_fraction(0.25) == pytest.approx(0.0, abs=1e-12)
        assert protocol.estimate_from_fraction(0.75) == pytest.approx(1.0)
        assert protocol.estimate_from_fraction(0.0) == pytest.approx(-1.0)
        assert protocol.estimate_from_fraction(1.0) == pytest.approx(2.0)

    def test_estimate_clamped(self):
        assert protocol.estimate_from_fraction(0.0, clamp=True) == 0.0
        assert protocol.estimate_from_fraction(1.0, clamp=True) == 1.0

    def test_fraction_domain(self):
        with pytest.raises(ValueError):
            protocol.estimate_from_fraction(1.2)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_pipeline_is_identity(self, s):
        # mean -> angle -> readout probability -> estimate returns the mean
        mu = protocol.readout_prob(protocol.theta_of_mean(s))
        assert protocol.estimate_from_fraction(mu) == pytest.approx(s, abs=1e-9)

    def test_lowmem_estimate(self):
        assert protocol.estimate_lowmem(6, 3) == pytest.approx(2.0)
        with pytest.raises(ValueError):
            protocol.estimate_lowmem(2 * 3 * 3, 3)  # just past the register edge


class TestConstants:
    def test_defaults(self):
        c = DEFAULT_CONSTANTS
        assert c.c0 == 1.0
        assert c.c1 == pytest.approx(math.pi / 6)
        assert c.c2 == pytest.approx(1.2032846497398342)
        assert c.C == 2.0

    def test_c2_closed_form(self):
        assert DEFAULT_CONSTANTS.c2 == pytest.approx(
            math.pi**2 * (math.e**2 - 3.0) / 36.0)

    def test_overrides(self):
        c = DEFAULT_CONSTANTS.with_overrides(c0=3.0)
        assert c.c0 == 3.0
        assert c.c1 == DEFAULT_CONSTANTS.c1

    def test_validation(self):
        with pytest.raises(ValueError):
            ProtocolConstants(c0=0.0)
        with pytest.raises(ValueError):
            ProtocolConstants(C=-1.0)


class TestAlg1Planner:
    def test_single_shadow_reference_point(self):
        plan = protocol.plan_alg1(1, 0.1, 0.01)
        assert plan.feasible
        assert plan.k == 461
        assert plan.n == 4610
        assert all(c.satisfied for c in plan.constraints)

    def test_k_formula(self):
        plan = protocol.plan_alg1(4, 0.2, 0.1)
        assert plan.k == math.ceil(math.log(10.0) / 0.04)

    def test_union_bound_spends_delta_per_index(self):
        base = protocol.plan_alg1(8, 0.2, 0.1)
        strict = protocol.plan_alg1(8, 0.2, 0.1, union_bound=True)
        assert strict.delta_effective == pytest.approx(0.1 / 8)
        assert strict.k > base.k

    def test_commuting_family_degenerates_to_copy_floor(self):
        plan = protocol.plan_alg1(8, 0.2, 0.1, cmax=0.0)
        assert plan.n == 10 * plan.k

    def test_cmax_note_present(self):
        plan = protocol.plan_alg1(2, 0.2, 0.1, cmax=1.0)
        assert any("8*c1^2" in note for note in plan.notes)

    def test_n_is_minimal(self):
        plan = protocol.plan_alg1(3, 0.2, 0.1)
        log_term = math.log(1.0 / 0.1)

        def feasible_at(n):
            return all(c.satisfied for c in protocol._alg1_constraints(
                n, 3, plan.k, 0.2, log_term, DEFAULT_CONSTANTS, None))

        assert feasible_at(plan.n)
        assert not feasible_at(plan.n - 1)

    def test_infeasible_reported_not_raised(self):
        plan = protocol.plan_alg1(1, 0.1, 0.01, n_ceiling=100)
        assert not plan.feasible
        assert plan.n is None
        assert "VIOLATED" in plan.report()

    def test_manual_plan(self):
        plan = Alg1Plan.manual(3, 50, 10)
        assert (plan.m, plan.n, plan.k, plan.feasible) == (3, 50, 10, True)

    def test_target_validation(self):
        with pytest.raises(ValueError):
            protocol.plan_alg1(0, 0.1, 0.1)
        with pytest.raises(ValueError):
            protocol.plan_alg1(1, -0.1, 0.1)
        with pytest.raises(ValueError):
            protocol.plan_alg1(1, 0.1, 1.0)
        with pytest.raises(ValueError):
            protocol.plan_alg1(1, 0.1, 0.1, cmax=-1.0)

    def test_untested_regime_notice(self):
        plan = protocol.plan_alg1(1, 0.5, 0.1)
        assert any("tested accuracy regime" in note for note in plan.notes)


class TestAlg2Planner:
    def test_single_shadow_reference_point(self):
        plan = protocol.plan_alg2(1, 0.1, 0.1)
        assert plan.feasible
        assert plan.n == 256
        assert plan.p == 231
        assert plan.N == 2 * 256 * 256

    def test_n_power_of_two(self):
        for m, eps, delta in ((1, 0.1, 0.1), (4, 0.2, 0.05), (16, 0.15, 0.1)):
            plan = protocol.plan_alg2(m, eps, delta)
            assert plan.n & (plan.n - 1) == 0

    def test_p_inside_interval(self):
        plan = protocol.plan_alg2(3, 0.2, 0.1)
        lo, hi = plan.p_interval
        assert lo <= plan.p <= hi
        assert plan.p <= plan.N - 1

    def test_infeasible_with_tiny_ceiling(self):
        plan = protocol.plan_alg2(1, 0.1, 0.1, n_ceiling=4)
        assert not plan.feasible
        assert plan.n is None and plan.p is None

    def test_manual_plan(self):
        plan = Alg2Plan.manual(2, 4, 7)
        assert (plan.n, plan.p, plan.N) == (4, 7, 32)


class TestConstraintCheck:
    def test_margin_sign(self):
        ok = protocol.ConstraintCheck("a", 5.0, ">=", 3.0)
        bad = protocol.ConstraintCheck("a", 2.0, ">=", 3.0)
        assert ok.satisfied and ok.margin == pytest.approx(2.0)
        assert not bad.satisfied and bad.margin == pytest.approx(-1.0)
        assert "VIOLATED" in bad.line()
        le = protocol.ConstraintCheck("b", 1.0, "<=", 4.0)
        assert le.satisfied and le.margin == pytest.approx(3.0)


class TestResources:
    def test_batch_literal(self):
        r = protocol.estimate_resources(2, 3, 5, (2, 4), "batch")
        assert r.gate_units == 60  # 2*3*5 + 5*6
        assert r.ancilla_qubits == 8  # n + k
        assert r.overhead_units == 0

    def test_log_memory_literal(self):
        r = protocol.estimate_resources(2, 3, 5, (2, 4), "log-memory")
        assert r.ancilla_qubits == 3  # ceil(log2 5)
        assert r.overhead_units == 2 * 5 * 3 + 2 * 3 * 3
        assert r.gate_units == 60 + r.overhead_units

    def test_const_memory(self):
        r = protocol.estimate_resources(2, 3, 5, (2, 4), "const-memory")
        assert r.ancilla_qubits == 2
        assert r.overhead_units == 5 * 3 * 6

    def test_read_once(self):
        r = protocol.estimate_resources(2, 3, 5, (2, 4), "read-once")
        assert r.ancilla_qubits == 2 * 3 + 5

    def test_validation(self):
        with pytest.raises(ValueError):
            protocol.estimate_resources(2, 3, 5, (2,), "batch")
        with pytest.raises(ValueError):
            protocol.estimate_resources(2, 3, 5, (2, 4), "banana")

    def test_report_mentions_unit_constants(self):
        r = protocol.estimate_resources(1, 2, 4, (3,))
        assert "unit implied constants" in r.report()


def test_plan_reports_render():
    p1 = protocol.plan_alg1(2, 0.2, 0.1)
    assert "k = " in p1.report() and "feasible: True" in p1.report()
    p2 = protocol.plan_alg2(2, 0.2, 0.1)
    assert "admissible p interval" in p2.report()


def test_estimates_match_sampling_identity():
    # binomial mean through the link: E[mu] = readout probability exactly
    rng = np.random.default_rng(0)
    s = 0.4
    prob = protocol.readout_prob(protocol.theta_of_mean(s))
    k = 200000
    mu = rng.binomial(k, prob) / k
    assert protocol.estimate_from_fraction(mu) == pytest.approx(s, abs=0.02)
