"""Kickback trajectory sampler: classical evolution of the copies' state.

One round is sampled in two independent pieces, mirroring the analysis: the
readout outcome is drawn from the closed-form law of the current state, and
the back-action on the copies is a unitary kick exp(-i phi M) whose weight
is drawn from the ancilla register's transverse law. Per-round marginals of
this process match the brute-force engine exactly; the joint law across
rounds is *not* claimed to match and result summaries say so.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom as _binom

from shadowlab import linalg, protocol
from shadowlab.distributions import FourierLDist, LambdaDist, NoiseSDist
from shadowlab.errors import BudgetExceededError

DIST_BUDGET = 10**6
BRANCH_BUDGET = 4096


@dataclass
class RoundOutcome:
    """One sampled readout: the scalar chain from eigenvalue mean to estimate."""

    round_index: int
    raw: int
    mu: float
    estimate: float
    sample_mean: float | None = None
    theta: float | None = None


@dataclass
class KickbackTrajectory:
    """States rho_1..rho_m, the kick weights that produced them, and outcomes."""

    plan: object
    states: list
    lambdas: list
    outcomes: list


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@lru_cache(maxsize=64)
def _lambda_dist(k: int) -> LambdaDist:
    return LambdaDist(k)


@lru_cache(maxsize=64)
def _noise_dist(p: int) -> NoiseSDist:
    return NoiseSDist(p)


@lru_cache(maxsize=64)
def _fourier_dist(p: int, n: int) -> FourierLDist:
    return FourierLDist(p, n)


def _spectral_weights(rho: linalg.DensityMatrix, m: linalg.PovmElement) -> np.ndarray:
    """Born weights of M's eigenvectors under rho (clipped and renormalized)."""
    v = m.eigenvectors
    w = np.einsum("ij,jk,ki->i", v.conj().T, rho.matrix, v).real
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def kick_angle(lam: float, n: int, algorithm: str = "alg1") -> float:
    """Rotation weight of one kick: pi*lam/(6n) per qubit round, lam/n per counter round."""
    if algorithm == "alg1":
        return math.pi * lam / (6.0 * n)
    if algorithm != "alg2":
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return lam / n


def kickback_step(rho: linalg.DensityMatrix, m: linalg.PovmElement, lam: float, n: int,
                  algorithm: str = "alg1", guard: bool = True) -> linalg.DensityMatrix:
    """Conjugate rho by exp(-i phi M) with phi = kick_angle(lam, n)."""
    phi = kick_angle(lam, n, algorithm)
    norm = float(m.eigenvalues.max()) if m.dim else 0.0
    if guard and abs(phi) * norm > 1.0:
        warnings.warn(
            f"kick weight |phi|*||M|| = {abs(phi) * norm:.3g} exceeds 1; the per-step "
            "deviation bound no longer applies (run continues unchecked)",
            RuntimeWarning, stacklevel=2)
    u = (m.eigenvectors * np.exp(-1j * phi * m.eigenvalues)) @ m.eigenvectors.conj().T
    return linalg.DensityMatrix(u @ rho.matrix @ u.conj().T)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def round_output_dist_alg1(rho: linalg.DensityMatrix, m: linalg.PovmElement,
                           n: int, k: int, budget: int = DIST_BUDGET):
    """Exact law of the ones-count c in 0..k for one qubit-readout round.

    Enumerates eigenvalue count vectors of the n copies (multinomial weights)
    and mixes the matching binomial readout laws. Refuses above ``budget``
    enumerated terms; sampling stays available at any size.
    """
    d = m.dim
    terms = math.comb(n + d - 1, d - 1) * (k + 1)
    if terms > budget:
        raise BudgetExceededError("closed-form readout law too large", terms, budget)
    w = _spectral_weights(rho, m)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    alphas = m.eigenvalues
    lg_n = gammaln(n + 1)
    counts_support = np.arange(k + 1)
    pmf = np.zeros(k + 1)
    for counts in _compositions(n, d):
        logp = lg_n
        dead = False
        for c, lw in zip(counts, logw):
            if c == 0:
                continue
            if not np.isfinite(lw):
                dead = True
                break
            logp += c * lw - gammaln(c + 1)
        if dead:
            continue
        sbar = float(np.dot(counts, alphas)) / n
        q = protocol.readout_prob(protocol.theta_of_mean(sbar))
        pmf += math.exp(logp) * _binom.pmf(counts_support, k, q)
    return counts_support, pmf


def round_output_dist_alg2(rho: linalg.DensityMatrix, m: linalg.PovmElement,
                           n: int, p: int):
    """Exact law of the counter value in [-N, N-1] for one counter round.

    The register ends at (ones-count A) + (preparation noise S) modulo 2N;
    A is binomial because the measurement is a projector.
    """
    if not m.is_projector:
        raise ValueError("the counter variant requires projector-valued measurements")
    big_n = 2 * n * n
    q = min(max(linalg.expectation(m, rho), 0.0), 1.0)
    a_pmf = _binom.pmf(np.arange(n + 1), n, q)
    s = _noise_dist(p)
    pmf = np.zeros(2 * big_n)
    for a, pa in enumerate(a_pmf):
        idx = (a + s.support + big_n) % (2 * big_n)  # register index of a + S
        np.add.at(pmf, idx, pa * s.probs)
    return np.arange(-big_n, big_n), pmf


def _flip_count(count: int, k: int, eta: float, rng: np.random.Generator) -> int:
    if eta == 0.0:
        return count
    return count - int(rng.binomial(count, eta)) + int(rng.binomial(k - count, eta))


def round_output_sample_alg1(rho: linalg.DensityMatrix, m: linalg.PovmElement,
                             n: int, k: int, rng, round_index: int = 1,
                             eta: float = 0.0, debias: bool = True) -> RoundOutcome:
    """Sample one qubit-readout round from the closed-form law.

    Copy eigenvalue draws are taken as one multinomial count vector
    (distribution-identical to n independent draws); optional readout flips
    at rate ``eta`` corrupt the recorded count only.
    """
    rng = _as_rng(rng)
    w = _spectral_weights(rho, m)
    counts = rng.multinomial(n, w)
    sbar = float(np.dot(counts, m.eigenvalues)) / n
    theta = protocol.theta_of_mean(sbar)
    q = protocol.readout_prob(theta)
    c = int(rng.binomial(k, q))
    c = _flip_count(c, k, eta, rng)
    mu = c / k
    if eta and debias:
        mu = min(max((mu - eta) / (1.0 - 2.0 * eta), 0.0), 1.0)
    return RoundOutcome(round_index=round_index, raw=c, mu=mu,
                        estimate=protocol.estimate_from_fraction(mu),
                        sample_mean=sbar, theta=theta)


def round_output_sample_alg2(rho: linalg.DensityMatrix, m: linalg.PovmElement,
                             n: int, p: int, rng, round_index: int = 1) -> RoundOutcome:
    """Sample one counter round: binomial ones-count plus preparation noise, wrapped."""
    if not m.is_projector:
        raise ValueError("the counter variant requires projector-valued measurements")
    rng = _as_rng(rng)
    big_n = 2 * n * n
    q = min(max(linalg.expectation(m, rho), 0.0), 1.0)
    a = int(rng.binomial(n, q))
    s = int(_noise_dist(p).sample(rng))
    raw = (a + s + big_n) % (2 * big_n) - big_n
    return RoundOutcome(round_index=round_index, raw=raw, mu=float(raw),
                        estimate=protocol.estimate_lowmem(raw, n),
                        sample_mean=a / n, theta=None)


def _sample_lambda(plan, rng) -> float:
    if plan.algorithm == "alg1":
        return float(_lambda_dist(plan.k).sample(rng))
    l = int(_fourier_dist(plan.p, plan.n).sample(rng))
    return math.pi * l / (2.0 * plan.n)


def _round_sample(rho, m, plan, rng, round_index, eta, debias):
    if plan.algorithm == "alg1":
        return round_output_sample_alg1(rho, m, plan.n, plan.k, rng,
                                        round_index=round_index, eta=eta, debias=debias)
    if eta:
        raise ValueError("readout flips are defined for the qubit register only")
    return round_output_sample_alg2(rho, m, plan.n, plan.p, rng, round_index=round_index)


def _warn_outside_guard(plan) -> bool:
    """True when the n >= 10k regime holds (kick weights provably small)."""
    if plan.algorithm != "alg1":
        return True
    if plan.n >= 10 * plan.k:
        return True
    warnings.warn(
        f"n = {plan.n} < 10k = {10 * plan.k}: outside the planner regime, kick-weight "
        "guard disabled for this run", RuntimeWarning, stacklevel=3)
    return False


def marginal_sample(rho: linalg.DensityMatrix, ms: Sequence[linalg.PovmElement],
                    plan, target_index: int, rng, eta: float = 0.0,
                    debias: bool = True) -> RoundOutcome:
    """Sample round ``target_index``'s outcome with the exact per-index marginal.

    Kicks for the earlier rounds are drawn and folded into the state, then the
    target round is sampled; with target 1 this consumes the stream exactly
    like ``round_output_sample_*``.
    """
    if not 1 <= target_index <= len(ms):
        raise ValueError(f"target_index must lie in [1, {len(ms)}]")
    rng = _as_rng(rng)
    guard = _warn_outside_guard(plan)
    state = rho
    for j in range(target_index - 1):
        lam = _sample_lambda(plan, rng)
        state = kickback_step(state, ms[j], lam, plan.n, plan.algorithm, guard=False)
    del guard
    return _round_sample(state, ms[target_index - 1], plan, rng, target_index, eta, debias)


def marginal_dist(rho: linalg.DensityMatrix, ms: Sequence[linalg.PovmElement],
                  plan, target_index: int, branch_budget: int = BRANCH_BUDGET,
                  dist_budget: int = DIST_BUDGET):
    """Exact kick-averaged law of round ``target_index``'s outcome.

    Enumerates every kick-weight tuple of the earlier rounds with its exact
    probability and mixes the closed-form round laws. Branches grow as
    (support size)^(target-1); refuses above ``branch_budget``.
    """
    if not 1 <= target_index <= len(ms):
        raise ValueError(f"target_index must lie in [1, {len(ms)}]")
    if plan.algorithm == "alg1":
        kick_dist = _lambda_dist(plan.k)
        lam_of = float
    else:
        kick_dist = _fourier_dist(plan.p, plan.n)
        lam_of = lambda l: math.pi * l / (2.0 * plan.n)
    branches = [(1.0, rho)]
    for j in range(target_index - 1):
        if len(branches) * len(kick_dist.support) > branch_budget:
            raise BudgetExceededError("too many kick branches",
                                      len(branches) * len(kick_dist.support), branch_budget)
        grown = []
        for weight, state in branches:
            for val, prob in zip(kick_dist.support, kick_dist.probs):
                if prob <= 0.0:
                    continue
                grown.append((weight * prob,
                              kickback_step(state, ms[j], lam_of(int(val)), plan.n,
                                            plan.algorithm, guard=False)))
        branches = grown
    support = None
    pmf = None
    target = ms[target_index - 1]
    for weight, state in branches:
        if plan.algorithm == "alg1":
            support, probs = round_output_dist_alg1(state, target, plan.n, plan.k, dist_budget)
        else:
            support, probs = round_output_dist_alg2(state, target, plan.n, plan.p)
        pmf = weight * probs if pmf is None else pmf + weight * probs
    return support, pmf


def trajectory_run(rho: linalg.DensityMatrix, ms: Sequence[linalg.PovmElement],
                   plan, rng, eta: float = 0.0, debias: bool = True) -> KickbackTrajectory:
    """One full pass: sample every round's outcome and kick the state along.

    Each round j samples its outcome from rho_j, then (except after the last
    round) draws an independent kick weight and conjugates. Per-round
    marginals are exact; only those are claimed.
    """
    if len(ms) != plan.m:
        raise ValueError(f"plan expects m={plan.m} measurements, got {len(ms)}")
    rng = _as_rng(rng)
    guard = _warn_outside_guard(plan)
    del guard
    states = [rho]
    lambdas: list[float] = []
    outcomes = []
    state = rho
    for j, m in enumerate(ms, start=1):
        outcomes.append(_round_sample(state, m, plan, rng, j, eta, debias))
        if j < len(ms):
            lam = _sample_lambda(plan, rng)
            lambdas.append(lam)
            state = kickback_step(state, m, lam, plan.n, plan.algorithm, guard=False)
            states.append(state)
    return KickbackTrajectory(plan=plan, states=states, lambdas=lambdas, outcomes=outcomes)


def trajectory_table(traj: KickbackTrajectory, ms: Sequence[linalg.PovmElement],
                     target_index: int | None = None,
                     constants: protocol.ProtocolConstants = protocol.DEFAULT_CONSTANTS):
    """Rows (round, lambda, estimate, truth, S1, S2_bound, cum_deviation).

    estimate/truth are per the row's own index; the deviation columns audit
    the drift of the ``target_index`` expectation (default: the last round)
    across the kicks that precede it, so rows at or past the target leave
    them empty.
    """
    plan = traj.plan
    target_index = len(ms) if target_index is None else target_index
    if not 1 <= target_index <= len(ms):
        raise ValueError(f"target_index must lie in [1, {len(ms)}]")
    rho0 = traj.states[0]
    target = ms[target_index - 1]
    truth_target = linalg.expectation(target, rho0)
    rows = []
    for j, out in enumerate(traj.outcomes, start=1):
        row = {
            "round": j,
            "lambda": traj.lambdas[j - 1] if j - 1 < len(traj.lambdas) else "",
            "estimate": out.estimate,
            "truth": linalg.expectation(ms[j - 1], rho0),
            "S1": "", "S2_bound": "", "cum_deviation": "",
        }
        if j < target_index:
            lam = traj.lambdas[j - 1]
            phi = kick_angle(lam, plan.n, plan.algorithm)
            comm = linalg.commutator(ms[j - 1].matrix, target.matrix)
            row["S1"] = phi * linalg.expectation(1j * comm, traj.states[j - 1])
            if plan.algorithm == "alg1":
                row["S2_bound"] = constants.c2 * lam**2 / plan.n**2
            else:
                a = phi * ms[j - 1].matrix
                row["S2_bound"] = linalg.operator_norm(
                    linalg.commutator(a, linalg.commutator(a, target.matrix))
                ) * linalg.CONJUGATION_SLACK
            row["cum_deviation"] = abs(linalg.expectation(target, traj.states[j]) - truth_target)
        rows.append(row)
    return rows


TRAJECTORY_COLUMNS = ("round", "lambda", "estimate", "truth", "S1", "S2_bound", "cum_deviation")


@dataclass
class BaselineRun:
    """Direct per-index estimation with fresh copies (the no-kickback yardstick)."""

    estimates: list[float]
    samples_per_index: int
    total_copies: int


def naive_baseline_run(rho: linalg.DensityMatrix, ms: Sequence[linalg.PovmElement],
                       epsilon: float, delta: float, rng) -> BaselineRun:
    """Estimate every index from its own two-outcome trials.

    Sample count per index is ceil(ln(2m/delta) / (2 eps^2)), the smallest
    count whose two-sided tail bound covers all m indices at once.
    """
    if not 0 < epsilon:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rng = _as_rng(rng)
    m_count = len(ms)
    per_index = math.ceil(math.log(2.0 * m_count / delta) / (2.0 * epsilon**2))
    estimates = []
    for m in ms:
        q = min(max(linalg.expectation(m, rho), 0.0), 1.0)
        estimates.append(float(rng.binomial(per_index, q)) / per_index)
    return BaselineRun(estimates=estimates, samples_per_index=per_index,
                       total_copies=per_index * m_count)
