"""Bound audits: every certified inequality, checked against exact arithmetic.

Each audit returns an ``AuditReport`` whose margins are lhs - rhs (negative
is good). A report passes when the worst margin stays at or below a small
documented float allowance; the allowance exists for rounding noise only and
sits orders of magnitude under any honest violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from shadowlab import linalg, protocol
from shadowlab.distributions import (
    FourierLDist,
    LambdaDist,
    NoiseSDist,
    PsiPState,
    subgaussian_mgf_check,
    tail_bound_azuma,
    tail_bound_hoeffding,
)
from shadowlab.engines import kickback

FP_TOL = 1e-11


@dataclass
class AuditReport:
    """Outcome of one audit: worst margin over all checks (lhs - rhs <= 0 passes)."""

    kind: str
    checks: int
    max_margin: float
    tolerance: float = FP_TOL
    worst: str = ""
    details: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_margin <= self.tolerance

    def line(self) -> str:
        word = "pass" if self.passed else "FAIL"
        return (f"audit {self.kind}: {word} ({self.checks} checks, "
                f"worst margin {self.max_margin:.3e}, tolerance {self.tolerance:.1e})"
                + (f" [{self.worst}]" if self.worst and not self.passed else ""))


class _Tracker:
    def __init__(self):
        self.count = 0
        self.max_margin = -math.inf
        self.worst = ""

    def add(self, margin, label: str = "") -> None:
        self.count += 1
        margin = float(margin)  # exact-arithmetic audits may hand in Fractions
        if margin > self.max_margin:
            self.max_margin = margin
            self.worst = label

    def report(self, kind: str, tolerance: float = FP_TOL, details=None) -> AuditReport:
        return AuditReport(kind=kind, checks=self.count,
                           max_margin=self.max_margin if self.count else 0.0,
                           tolerance=tolerance, worst=self.worst,
                           details=details or [])


# ---------------------------------------------------------------------------
# matrix inequalities

def audit_conjugate_bound(count: int = 1000, dims=(2, 4, 8, 16), seed=0) -> AuditReport:
    """Second-order conjugation remainder vs its bound on random Hermitian pairs."""
    rng = np.random.default_rng(seed)
    track = _Tracker()
    for trial in range(count):
        d = int(rng.choice(dims))
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        a = 0.5 * (g + g.conj().T)
        a *= rng.uniform(0.05, 1.0) / max(linalg.operator_norm(a), 1e-300)
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        b = 0.5 * (g + g.conj().T) * rng.uniform(0.1, 3.0)
        lhs, rhs = linalg.conjugate_deviation(a, b)
        track.add(lhs - rhs, f"pair {trial} (d={d})")
    return track.report("conjugate-bound")


def deviation_audit(trajectory: kickback.KickbackTrajectory, ms, target_index: int,
                    constants: protocol.ProtocolConstants = protocol.DEFAULT_CONSTANTS,
                    tolerance: float = FP_TOL) -> AuditReport:
    """Check the per-step and telescoped drift bounds along one trajectory.

    For each kick before the target round: the remainder of the target
    expectation beyond its first-order term must sit under the conjugation
    bound (and under the budgeted c2*lam^2/n^2 form for the qubit variant);
    the accumulated drift must sit under the telescoped first-order +
    second-order budget. All quantities are evaluated from the recorded
    states with plain matrix arithmetic.
    """
    plan = trajectory.plan
    if not 1 <= target_index <= len(ms):
        raise ValueError(f"target_index must lie in [1, {len(ms)}]")
    target = ms[target_index - 1].matrix
    track = _Tracker()
    first_order = 0.0
    second_order_budget = 0.0
    lam_q_sum = 0.0
    lam_sq_sum = 0.0
    for j in range(1, target_index):
        lam = trajectory.lambdas[j - 1]
        phi = kickback.kick_angle(lam, plan.n, plan.algorithm)
        rho_j = trajectory.states[j - 1]
        rho_next = trajectory.states[j]
        mj = ms[j - 1].matrix
        a = phi * mj
        delta = linalg.expectation(target, rho_next) - linalg.expectation(target, rho_j)
        s1 = linalg.expectation(1j * linalg.commutator(mj, target), rho_j) * phi
        remainder = abs(delta - s1)
        exact_rhs = linalg.operator_norm(
            linalg.commutator(a, linalg.commutator(a, target))) * linalg.CONJUGATION_SLACK
        track.add(remainder - exact_rhs, f"step {j}: remainder vs conjugation bound")
        q_j = linalg.expectation(1j * linalg.commutator(target, mj), rho_j)
        track.add(abs(q_j) - 2.0, f"step {j}: |q_j| <= 2")
        first_order += s1
        if plan.algorithm == "alg1":
            budget = constants.c2 * lam**2 / plan.n**2
            track.add(remainder - budget, f"step {j}: remainder vs c2*lam^2/n^2")
            lam_q_sum += lam * q_j
            lam_sq_sum += lam**2
            second_order_budget += budget
        else:
            second_order_budget += exact_rhs
    if target_index > 1:
        drift = abs(linalg.expectation(target, trajectory.states[target_index - 1])
                    - linalg.expectation(target, trajectory.states[0]))
        if plan.algorithm == "alg1":
            rhs = (math.pi / (6.0 * plan.n)) * abs(lam_q_sum) \
                + constants.c2 / plan.n**2 * lam_sq_sum
        else:
            rhs = abs(first_order) + second_order_budget
        track.add(drift - rhs, "telescoped drift vs budget")
    return track.report("deviation-chain", tolerance)


def audit_deviation_chain(count: int = 100, d: int = 8, m: int = 32,
                          epsilon: float = 0.2, delta: float = 0.1, seed=0,
                          constants: protocol.ProtocolConstants = protocol.DEFAULT_CONSTANTS,
                          targets=None) -> AuditReport:
    """Run random planner-sized trajectories and audit every drift chain."""
    plan = protocol.plan_alg1(m, epsilon, delta, constants)
    if not plan.feasible:
        raise ValueError("planner found no feasible n; widen the ceiling")
    rng = np.random.default_rng(seed)
    track = _Tracker()
    details = []
    for trial in range(count):
        rho = linalg.random_density(d, seed=rng)
        ms = []
        for i in range(m):
            if i % 2 == 0:
                ms.append(linalg.random_projector(d, int(rng.integers(1, d)), seed=rng))
            else:
                ms.append(linalg.random_povm_element(d, seed=rng))
        traj = kickback.trajectory_run(rho, ms, plan, rng)
        audit_targets = targets if targets is not None else range(2, m + 1)
        for i in audit_targets:
            rep = deviation_audit(traj, ms, i, constants)
            track.add(rep.max_margin, f"trajectory {trial}, target {i}: {rep.worst}")
    return track.report("deviation-chain", details=details)


def audit_commutator_bounds(count: int = 200, dims=(2, 4, 8), seed=0) -> AuditReport:
    """||[M_i, M_j]|| <= 2 and family cmax <= 2 for effects with spectrum in [0, 1]."""
    rng = np.random.default_rng(seed)
    track = _Tracker()
    for trial in range(count):
        d = int(rng.choice(dims))
        a = linalg.random_povm_element(d, seed=rng)
        b = (linalg.random_projector(d, int(rng.integers(1, d)), seed=rng)
             if d > 1 else linalg.random_povm_element(d, seed=rng))
        norm = linalg.operator_norm(linalg.commutator(a.matrix, b.matrix))
        track.add(norm - 2.0, f"pair {trial} (d={d})")
        track.add(linalg.cmax_of_family([a, b]) - 2.0, f"family {trial} (d={d})")
    return track.report("commutator-bounds")


# ---------------------------------------------------------------------------
# scalar inequalities

def audit_cos_bound(points: int = 10001) -> AuditReport:
    """cos(x) <= 1 - x^2/4 on [-pi/2, pi/2] (corrected quadratic cosine bound)."""
    xs = np.linspace(-math.pi / 2.0, math.pi / 2.0, points)
    margins = np.cos(xs) - (1.0 - xs**2 / 4.0)
    track = _Tracker()
    idx = int(np.argmax(margins))
    track.count = points
    track.max_margin = float(margins[idx])
    track.worst = f"x = {xs[idx]:.6g}"
    return track.report("cos-bound")


def audit_exp_bound(points: int = 10001, x_max: float = 50.0) -> AuditReport:
    """exp(-x) <= 1 - x + x^2/2 for x >= 0, on a dense grid up to x_max."""
    xs = np.linspace(0.0, x_max, points)
    margins = np.exp(-xs) - (1.0 - xs + xs**2 / 2.0)
    track = _Tracker()
    idx = int(np.argmax(margins))
    track.count = points
    track.max_margin = float(margins[idx])
    track.worst = f"x = {xs[idx]:.6g}"
    return track.report("exp-bound")


def audit_lipschitz(points: int = 4001) -> AuditReport:
    """The readout inverse is (6/pi)(2/sqrt(3))-Lipschitz on (1/4, 3/4)."""
    bound = (6.0 / math.pi) * (2.0 / math.sqrt(3.0))
    xs = np.linspace(0.25 + 1e-9, 0.75 - 1e-9, points)
    vals = np.array([protocol.estimate_from_fraction(x) for x in xs])
    track = _Tracker()
    slopes = np.abs(np.diff(vals)) / np.diff(xs)
    idx = int(np.argmax(slopes))
    track.count = points - 1
    track.max_margin = float(slopes[idx] - bound)
    track.worst = f"secant near mu = {xs[idx]:.6g}"
    return track.report("lipschitz")


# ---------------------------------------------------------------------------
# distribution identities and tails

def audit_subgaussian_lambda(k_max: int = 64) -> AuditReport:
    """E[exp(lam^2 / 4k)] <= 2 for the k-sign kick weight, exact summation."""
    track = _Tracker()
    for k in range(1, k_max + 1):
        val = subgaussian_mgf_check(LambdaDist(k), 2.0 * math.sqrt(k))
        track.add(val - 2.0, f"k = {k}")
    return track.report("subgaussian-lambda")


def audit_subgaussian_fourier(p_max: int = 20, n_values=(2, 4, 8, 16, 32, 64)) -> AuditReport:
    """E[exp(l^2 / K^2)] <= 2 with K = 4N/(pi sqrt(p)), over every fitting (p, n)."""
    track = _Tracker()
    for n in n_values:
        for p in range(1, p_max + 1):
            if p >= 2 * n * n:
                continue  # state does not fit the register
            dist = FourierLDist(p, n)
            val = subgaussian_mgf_check(dist, dist.subgaussian_scale())
            track.add(val - 2.0, f"p = {p}, n = {n}")
    return track.report("subgaussian-fourier")


def audit_normalization(p_max: int = 64, fourier_p_max: int = 20,
                        n_values=(2, 4, 8, 16, 32, 64)) -> AuditReport:
    """Exact identities: noise pmf sums to one (rationals), register weights
    match the noise pmf, and the Fourier law sums to one within 1e-10."""
    track = _Tracker()
    for p in range(1, p_max + 1):
        total = sum(NoiseSDist(p)._exact)
        track.add(abs(total - 1), f"noise pmf sum, p = {p}")
        ident = sum(math.comb(2 * p, p + x) ** 2 for x in range(-p, p + 1))
        track.add(abs(ident - math.comb(4 * p, 2 * p)), f"square-sum identity, p = {p}")
    n_fixed = 16
    for p in range(1, min(p_max, 2 * n_fixed * n_fixed - 1) + 1):
        psi = PsiPState(p, n_fixed)
        noise = NoiseSDist(p)
        gap = max(abs(psi.exact_weight(x) - noise.exact_pmf(x)) for x in range(-p, p + 1))
        track.add(float(gap), f"register weights vs noise pmf, p = {p}")
        track.add(float(abs(sum(psi.exact_weight(int(x)) for x in psi.support) - Fraction(1))),
                  f"register norm, p = {p}")
    for n in n_values:
        for p in range(1, fourier_p_max + 1):
            if p >= 2 * n * n:
                continue
            total = float(np.sum(FourierLDist(p, n).probs))
            track.add(abs(total - 1.0) - 1e-10, f"fourier sum, p = {p}, n = {n}")
    return track.report("normalization", tolerance=0.0)


def audit_hoeffding_empirical(trials: int = 40000, n: int = 50, seed=0) -> AuditReport:
    """Monte Carlo tails of a bounded iid sum never exceed the Hoeffding bound."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, 1.0, size=(trials, n))
    devs = np.abs(xs.sum(axis=1) - n * 0.5)
    track = _Tracker()
    for t in (2.0, 4.0, 6.0, 8.0):
        emp = float(np.mean(devs >= t))
        track.add(emp - tail_bound_hoeffding([(0.0, 1.0)] * n, t), f"t = {t}")
    return track.report("hoeffding-empirical", tolerance=0.0)


def audit_azuma_empirical(trials: int = 40000, n: int = 50, seed=0) -> AuditReport:
    """Monte Carlo tails of a fair bounded-increment walk vs the Azuma bound."""
    rng = np.random.default_rng(seed)
    cs = rng.uniform(0.2, 1.0, size=n)
    steps = (2 * rng.integers(0, 2, size=(trials, n)) - 1) * cs
    devs = np.abs(steps.sum(axis=1))
    track = _Tracker()
    for eps in (3.0, 5.0, 8.0):
        emp = float(np.mean(devs >= eps))
        track.add(emp - tail_bound_azuma(cs, eps), f"eps = {eps}")
    return track.report("azuma-empirical", tolerance=0.0)


AUDIT_REGISTRY = {
    "conjugate-bound": audit_conjugate_bound,
    "deviation-chain": audit_deviation_chain,
    "commutator-bounds": audit_commutator_bounds,
    "cos-bound": audit_cos_bound,
    "exp-bound": audit_exp_bound,
    "lipschitz": audit_lipschitz,
    "subgaussian-lambda": audit_subgaussian_lambda,
    "subgaussian-fourier": audit_subgaussian_fourier,
    "normalization": audit_normalization,
    "hoeffding-empirical": audit_hoeffding_empirical,
    "azuma-empirical": audit_azuma_empirical,
}
