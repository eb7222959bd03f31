"""Tests for the brute-force joint-state engine."""

import math

import numpy as np
import pytest
import scipy.stats

from shadowlab import linalg, protocol
from shadowlab.engines import full as ef
from shadowlab.errors import BudgetExceededError


def plan1(m=1, n=3, k=2):
    return protocol.Alg1Plan.manual(m, n, k)


def plan2(m=1, n=2, p=3):
    return protocol.Alg2Plan.manual(m, n, p)


def test_ancilla_qubit_init_state():
    # R_X(pi/3)|0> = cos(pi/6)|0> - i sin(pi/6)|1>
    np.testing.assert_allclose(ef.ANCILLA_QUBIT_INIT,
                               [math.sqrt(3) / 2, -0.5j], atol=1e-15)
    assert np.linalg.norm(ef.ANCILLA_QUBIT_INIT) == pytest.approx(1.0)


class TestStatePlumbing:
    def test_init_round_normalized(self):
        rho = linalg.random_density(2, seed=0)
        state = ef.init_round(rho, 3, plan1())
        assert np.linalg.norm(state.tensor) == pytest.approx(1.0, abs=1e-12)

    def test_reduced_density_recovers_copies(self):
        rho = linalg.random_density(2, seed=1)
        state = ef.init_round(rho, 3, plan1())
        want = np.kron(np.kron(rho.matrix, rho.matrix), rho.matrix)
        np.testing.assert_allclose(ef.reduced_system_density(state), want,
                                   atol=1e-12)

    def test_budget_refusal(self):
        rho = linalg.random_density(2, seed=2)
        tiny = ef.FullSimConfig(max_amplitudes=8)
        with pytest.raises(BudgetExceededError) as err:
            ef.init_round(rho, 4, plan1(n=4), tiny)
        assert err.value.allowed == 8

    def test_identity_effect_gives_binomial_readout(self):
        rho = linalg.random_density(2, seed=3)
        state = ef.apply_round_unitary(ef.init_round(rho, 4, plan1(n=4, k=3)),
                                       linalg.PovmElement(np.eye(2)))
        support, probs = ef.ancilla_distribution(state)
        ref = scipy.stats.binom.pmf(np.arange(4), 3, 0.75)
        np.testing.assert_allclose(probs, ref, atol=1e-12)

    def test_ancilla_basis_choice_does_not_move_copies(self):
        # resolving the ancilla measurement in the computational or the x basis
        # must leave the same unconditional post-measurement copy state
        rho = linalg.random_density(2, seed=4)
        m = linalg.random_povm_element(2, seed=5)
        state = ef.apply_round_unitary(ef.init_round(rho, 3, plan1()), m)
        a = ef.copies_mixed_after(state, basis="computational")
        b = ef.copies_mixed_after(state, basis="x")
        np.testing.assert_allclose(a, b, atol=1e-11)

    def test_measure_collapses_and_normalizes(self):
        rho = linalg.random_density(2, seed=6)
        m = linalg.random_projector(2, 1, seed=7)
        state = ef.apply_round_unitary(ef.init_round(rho, 3, plan1()), m)
        outcome, copies = ef.measure_ancillas(state, np.random.default_rng(8))
        assert 0 <= outcome <= 2
        assert copies.ancilla is None
        assert np.linalg.norm(copies.tensor) == pytest.approx(1.0, abs=1e-12)


class TestRunProtocol:
    def test_validates_inputs(self):
        rho = linalg.random_density(2, seed=9)
        ms = [linalg.random_povm_element(2, seed=10)]
        with pytest.raises(ValueError, match="m="):
            ef.run_protocol(rho, ms * 2, plan1(), 0)
        with pytest.raises(ValueError, match="eta"):
            ef.run_protocol(rho, ms, plan1(), 0, eta=0.7)
        with pytest.raises(ValueError, match="qubit"):
            ef.run_protocol(rho, ms, plan2(), 0, eta=0.1)

    def test_reproducible(self):
        rho = linalg.random_density(2, seed=11)
        ms = [linalg.random_povm_element(2, seed=s) for s in (12, 13)]
        r1 = ef.run_protocol(rho, ms, plan1(m=2, n=4, k=2), 99)
        r2 = ef.run_protocol(rho, ms, plan1(m=2, n=4, k=2), 99)
        assert r1.estimates == r2.estimates
        assert r1.raw_outcomes == r2.raw_outcomes

    def test_estimates_in_codomain(self):
        rho = linalg.random_density(2, seed=14)
        ms = [linalg.random_povm_element(2, seed=s) for s in (15, 16, 17)]
        run = ef.run_protocol(rho, ms, plan1(m=3, n=4, k=2), 1)
        assert all(-1.0 <= e <= 2.0 for e in run.estimates)

    def test_counter_run(self):
        rho = linalg.random_density(2, seed=18)
        ms = [linalg.random_projector(2, 1, seed=19)]
        run = ef.run_protocol(rho, ms, plan2(), 7)
        n, big_n = 2, 8
        assert -big_n <= run.raw_outcomes[0] <= big_n - 1
        assert run.estimates[0] == run.raw_outcomes[0] / n


class TestExactDistribution:
    def test_round1_matches_closed_form(self):
        from shadowlab.engines import kickback
        rho = linalg.random_density(2, seed=20)
        m = linalg.random_projector(2, 1, seed=21)
        support, pf = ef.exact_output_distribution(rho, [m], plan1(), 1)
        _, pk = kickback.round_output_dist_alg1(rho, m, 3, 2)
        assert 0.5 * np.abs(pf - pk).sum() < 1e-12

    def test_counter_round1_matches_closed_form(self):
        from shadowlab.engines import kickback
        rho = linalg.random_density(2, seed=22)
        m = linalg.random_povm_element(2, seed=23)
        support, pf = ef.exact_output_distribution(rho, [m], plan2(), 1)
        _, pk = kickback.round_output_dist_alg2(rho, m, 2, 3)
        assert 0.5 * np.abs(pf - pk).sum() < 1e-12

    def test_pmf_normalized(self):
        rho = linalg.random_density(2, seed=24)
        ms = [linalg.random_povm_element(2, seed=s) for s in (25, 26)]
        _, probs = ef.exact_output_distribution(rho, ms, plan1(m=2), 2)
        assert float(np.sum(probs)) == pytest.approx(1.0, abs=1e-12)

    def test_branch_budget_refusal(self):
        rho = linalg.random_density(2, seed=27)
        ms = [linalg.random_povm_element(2, seed=s) for s in (28, 29)]
        tiny = ef.FullSimConfig(max_branches=2)
        with pytest.raises(BudgetExceededError):
            ef.exact_output_distribution(rho, ms, plan1(m=2), 2, tiny)

    def test_round_index_validated(self):
        rho = linalg.random_density(2, seed=30)
        ms = [linalg.random_povm_element(2, seed=31)]
        with pytest.raises(ValueError):
            ef.exact_output_distribution(rho, ms, plan1(), 2)


def test_noise_flips_shift_readout_mean():
    # rho, M eigenpair with eigenvalue 1: each ancilla reads 1 w.p. 3/4; under
    # eta flips that becomes 3/4*(1-eta) + 1/4*eta = 0.6 per bit
    rho = linalg.DensityMatrix(np.diag([1.0, 0.0]))
    m = linalg.PovmElement(np.diag([1.0, 0.0]))
    plan = plan1(m=1, n=4, k=4)
    rng = np.random.default_rng(42)
    raw, debiased = [], []
    for _ in range(300):
        raw.append(ef.run_protocol(rho, [m], plan, rng, eta=0.3, debias=False).mus[0])
        debiased.append(ef.run_protocol(rho, [m], plan, rng, eta=0.3, debias=True).mus[0])
    assert np.mean(raw) == pytest.approx(0.6, abs=0.05)
    # the clipped de-bias at k=4 lands on sum_c P(c) clip((c/4 - .3)/.4, 0, 1)
    # with c ~ Binomial(4, 0.6): exactly 0.648
    assert np.mean(debiased) == pytest.approx(0.648, abs=0.07)
    assert np.mean(debiased) > np.mean(raw)
