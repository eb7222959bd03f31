"""Tests for the marginal-exact sampling engine."""

import math
import warnings

import numpy as np
import pytest
import scipy.stats

from shadowlab import linalg, protocol
from shadowlab.engines import kickback as kb
from shadowlab.errors import BudgetExceededError


def plan1(m=2, n=80, k=8):
    return protocol.Alg1Plan.manual(m, n, k)


def plan2(m=2, n=2, p=3):
    return protocol.Alg2Plan.manual(m, n, p)


def test_kick_angle():
    assert kb.kick_angle(3.0, 10, "alg1") == pytest.approx(math.pi * 3 / 60)
    assert kb.kick_angle(3.0, 10, "alg2") == pytest.approx(0.3)
    with pytest.raises(ValueError):
        kb.kick_angle(1.0, 10, "alg3")


class TestKickbackStep:
    def test_preserves_spectrum(self):
        rho = linalg.random_density(3, seed=0)
        m = linalg.random_povm_element(3, seed=1)
        out = kb.kickback_step(rho, m, 2.0, 30, "alg1")
        np.testing.assert_allclose(np.linalg.eigvalsh(out.matrix),
                                   np.linalg.eigvalsh(rho.matrix), atol=1e-11)

    def test_commuting_state_is_fixed_point(self):
        m = linalg.PovmElement(np.diag([0.8, 0.1]))
        rho = linalg.DensityMatrix(np.diag([0.25, 0.75]))
        out = kb.kickback_step(rho, m, 3.0, 20, "alg1")
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-13)

    def test_warns_outside_small_angle_regime(self):
        rho = linalg.random_density(2, seed=2)
        m = linalg.PovmElement(np.eye(2))
        with pytest.warns(RuntimeWarning, match="kick"):
            kb.kickback_step(rho, m, 10.0, 3, "alg1")


class TestRoundLawQubits:
    def test_identity_and_zero_effects(self):
        rho = linalg.random_density(2, seed=3)
        k = 9
        for mat, prob in ((np.eye(2), 0.75), (np.zeros((2, 2)), 0.25)):
            support, pmf = kb.round_output_dist_alg1(rho, linalg.PovmElement(mat),
                                                     40, k)
            ref = scipy.stats.binom.pmf(np.arange(k + 1), k, prob)
            assert 0.5 * np.abs(pmf - ref).sum() < 1e-12

    def test_projector_law_by_hand(self):
        # d=2 projector: spectrum {0, 1} with weights (1-q, q); n copies mix
        # binomials over the ones-count of the spectral draw
        rho = linalg.random_density(2, seed=4)
        m = linalg.random_projector(2, 1, seed=5)
        q = linalg.expectation(m, rho)
        n, k = 3, 4
        support, pmf = kb.round_output_dist_alg1(rho, m, n, k)
        want = np.zeros(k + 1)
        for ones in range(n + 1):
            w = math.comb(n, ones) * q**ones * (1 - q) ** (n - ones)
            theta = protocol.theta_of_mean(ones / n)
            want += w * scipy.stats.binom.pmf(np.arange(k + 1), k,
                                              protocol.readout_prob(theta))
        np.testing.assert_allclose(pmf, want, atol=1e-12)

    def test_budget_refusal(self):
        rho = linalg.random_density(12, seed=6)
        m = linalg.random_povm_element(12, seed=7)
        with pytest.raises(BudgetExceededError):
            kb.round_output_dist_alg1(rho, m, 60, 10)

    def test_sampler_matches_law(self):
        rho = linalg.random_density(2, seed=8)
        m = linalg.random_povm_element(2, seed=9)
        n, k = 12, 6
        support, pmf = kb.round_output_dist_alg1(rho, m, n, k)
        rng = np.random.default_rng(10)
        counts = np.zeros(k + 1)
        trials = 4000
        for _ in range(trials):
            out = kb.round_output_sample_alg1(rho, m, n, k, rng)
            counts[out.raw] += 1
        # loose 5-sigma multinomial check per bin
        for j in range(k + 1):
            se = math.sqrt(max(pmf[j] * (1 - pmf[j]), 1e-9) / trials)
            assert abs(counts[j] / trials - pmf[j]) < 5 * se + 1e-3


class TestRoundLawCounter:
    def test_eigenstate_shifts_noise_profile(self):
        # rho in the eigenvalue-1 eigenspace: every copy advances the counter,
        # so the outcome law is the idle-noise law translated by n
        n, p = 2, 3
        rho = linalg.DensityMatrix(np.diag([1.0, 0.0]))
        m = linalg.PovmElement(np.diag([1.0, 0.0]))
        support, pmf = kb.round_output_dist_alg2(rho, m, n, p)
        from shadowlab.distributions import NoiseSDist
        noise = NoiseSDist(p)
        want = np.zeros_like(pmf)
        big_n = 2 * n * n
        for x, q in zip(noise.support, noise.probs):
            want[int(x) + n + big_n] += q
        np.testing.assert_allclose(pmf, want, atol=1e-13)

    def test_normalized(self):
        rho = linalg.random_density(2, seed=11)
        m = linalg.random_povm_element(2, seed=12)
        _, pmf = kb.round_output_dist_alg2(rho, m, 4, 5)
        assert float(np.sum(pmf)) == pytest.approx(1.0, abs=1e-12)


class TestMarginals:
    def test_round1_stream_identical_to_plain_sampler(self):
        rho = linalg.random_density(2, seed=13)
        ms = [linalg.random_povm_element(2, seed=s) for s in (14, 15)]
        p = plan1()
        a = kb.marginal_sample(rho, ms, p, 1, np.random.default_rng(16))
        b = kb.round_output_sample_alg1(rho, ms[0], p.n, p.k,
                                        np.random.default_rng(16))
        assert a.raw == b.raw and a.estimate == b.estimate

    def test_marginal_dist_round1_equals_closed_form(self):
        rho = linalg.random_density(2, seed=17)
        ms = [linalg.random_povm_element(2, seed=18)]
        p = plan1(m=1)
        _, pmf = kb.marginal_dist(rho, ms, p, 1)
        _, ref = kb.round_output_dist_alg1(rho, ms[0], p.n, p.k)
        np.testing.assert_allclose(pmf, ref, atol=1e-14)

    def test_branch_budget(self):
        rho = linalg.random_density(2, seed=19)
        ms = [linalg.random_povm_element(2, seed=s) for s in range(20, 26)]
        with pytest.raises(BudgetExceededError):
            kb.marginal_dist(rho, ms, plan1(m=6, k=30), 6, branch_budget=100)

    def test_target_index_validated(self):
        rho = linalg.random_density(2, seed=26)
        ms = [linalg.random_povm_element(2, seed=27)]
        with pytest.raises(ValueError):
            kb.marginal_sample(rho, ms, plan1(m=1), 2, 0)


class TestTrajectories:
    def test_shapes_and_reproducibility(self):
        rho = linalg.random_density(2, seed=28)
        ms = [linalg.random_povm_element(2, seed=s) for s in (29, 30, 31)]
        p = plan1(m=3)
        t1 = kb.trajectory_run(rho, ms, p, np.random.default_rng(5))
        t2 = kb.trajectory_run(rho, ms, p, np.random.default_rng(5))
        assert len(t1.outcomes) == 3
        assert len(t1.lambdas) == 2
        assert len(t1.states) == 3
        assert [o.estimate for o in t1.outcomes] == [o.estimate for o in t2.outcomes]
        assert t1.lambdas == t2.lambdas

    def test_plan_size_mismatch(self):
        rho = linalg.random_density(2, seed=32)
        ms = [linalg.random_povm_element(2, seed=33)]
        with pytest.raises(ValueError):
            kb.trajectory_run(rho, ms, plan1(m=2), np.random.default_rng(0))

    def test_table_columns_and_target_semantics(self):
        rho = linalg.random_density(2, seed=34)
        ms = [linalg.random_povm_element(2, seed=s) for s in (35, 36, 37)]
        traj = kb.trajectory_run(rho, ms, plan1(m=3), np.random.default_rng(6))
        rows = kb.trajectory_table(traj, ms)
        assert list(rows[0].keys()) == list(kb.TRAJECTORY_COLUMNS)
        # rows before the (default last) target carry the deviation columns
        assert rows[0]["S1"] != "" and rows[1]["S1"] != ""
        assert rows[2]["S1"] == "" and rows[2]["cum_deviation"] == ""
        rows1 = kb.trajectory_table(traj, ms, target_index=2)
        assert rows1[0]["S1"] != "" and rows1[1]["S1"] == ""

    def test_commuting_family_never_drifts(self):
        mats = [np.diag([0.2, 0.9]), np.diag([0.6, 0.3]), np.diag([1.0, 0.0])]
        ms = [linalg.PovmElement(a) for a in mats]
        rho = linalg.random_density(2, seed=38)
        traj = kb.trajectory_run(rho, ms, plan1(m=3), np.random.default_rng(7))
        rows = kb.trajectory_table(traj, ms)
        for row in rows[:-1]:
            assert abs(row["cum_deviation"]) < 1e-12


class TestBaseline:
    def test_sample_count_formula(self):
        rho = linalg.random_density(2, seed=39)
        ms = [linalg.random_povm_element(2, seed=s) for s in (40, 41)]
        run = kb.naive_baseline_run(rho, ms, 0.2, 0.1, np.random.default_rng(8))
        assert run.samples_per_index == math.ceil(math.log(2 * 2 / 0.1) / (2 * 0.2**2))
        assert run.samples_per_index == 47
        assert run.total_copies == 2 * 47
        assert len(run.estimates) == 2

    def test_estimates_are_accurate_at_tight_targets(self):
        rho = linalg.random_density(2, seed=42)
        ms = [linalg.random_povm_element(2, seed=43)]
        run = kb.naive_baseline_run(rho, ms, 0.05, 0.01, np.random.default_rng(9))
        truth = linalg.expectation(ms[0], rho)
        assert abs(run.estimates[0] - truth) < 0.05


def test_guard_warning_on_small_plans():
    rho = linalg.random_density(2, seed=44)
    ms = [linalg.random_povm_element(2, seed=45)]
    with pytest.warns(RuntimeWarning, match="planner regime"):
        kb.trajectory_run(rho, ms, plan1(m=1, n=10, k=8), np.random.default_rng(1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kb.trajectory_run(rho, ms, plan1(m=1, n=80, k=8), np.random.default_rng(1))
