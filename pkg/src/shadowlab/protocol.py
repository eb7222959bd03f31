"""Scalar readout maps, feasibility planners, and circuit resource estimates.

The planners turn (m, epsilon, delta) into concrete register sizes by binary
search over monotone feasibility predicates; every inequality they used is
kept in the returned plan so reports can show "lhs relation rhs margin" lines
instead of a bare number. Infeasibility (against a configured ceiling) is a
report state, not an exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

SCALAR_ATOL = 1e-9

# guarantees are stated for small accuracy targets; larger ones still plan,
# but the report flags them as untested
TESTED_EPSILON_MAX = 0.25

RESOURCE_VARIANTS = ("batch", "read-once", "const-memory", "log-memory")


@dataclass(frozen=True)
class ProtocolConstants:
    """Tunable constants of the two feasibility analyses.

    c0 scales the ancilla count, c1/c2 the first/second-order kick terms, and
    C the per-index error split. C0..C5 drive the counter-register planner.
    Defaults are the analysis placeholders (1.0 except the derived c1, c2);
    empirical calibration is the harness's job, and every report records the
    values actually used.
    """

    c0: float = 1.0
    c1: float = math.pi / 6.0
    c2: float = math.pi**2 * (math.e**2 - 3.0) / 36.0
    C: float = 2.0
    C0: float = 1.0
    C1: float = 1.0
    C3: float = 1.0
    C4: float = 1.0
    C5: float = 1.0

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "C", "C0", "C1", "C3", "C4", "C5"):
            if getattr(self, name) <= 0:
                raise ValueError(f"constant {name} must be positive")

    def with_overrides(self, **kw) -> "ProtocolConstants":
        return replace(self, **kw)


DEFAULT_CONSTANTS = ProtocolConstants()


# ---------------------------------------------------------------------------
# scalar maps

def theta_of_mean(s: float) -> float:
    """Rotation angle pi/3 * (1 + s) for an eigenvalue sample mean s in [0, 1]."""
    if s < -SCALAR_ATOL or s > 1.0 + SCALAR_ATOL:
        raise ValueError(f"sample mean {s!r} outside [0, 1]")
    s = min(max(s, 0.0), 1.0)
    return math.pi / 3.0 * (1.0 + s)


def readout_prob(theta: float) -> float:
    """Probability sin^2(theta/2) of reading 1 from one ancilla qubit."""
    return math.sin(theta / 2.0) ** 2


def estimate_from_fraction(mu: float, clamp: bool = False) -> float:
    """Invert the readout: (6/pi) arcsin(sqrt(mu)) - 1.

    The raw value lives in [-1, 2]; ``clamp`` snaps it into [0, 1], which is
    where any true expectation lies.
    """
    if mu < -1e-12 or mu > 1.0 + 1e-12:
        raise ValueError(f"fraction {mu!r} outside [0, 1]")
    mu = min(max(mu, 0.0), 1.0)
    est = 6.0 / math.pi * math.asin(math.sqrt(mu)) - 1.0
    if clamp:
        est = min(max(est, 0.0), 1.0)
    return est


def estimate_lowmem(mu: int, n: int) -> float:
    """Counter-register estimate mu/n for an outcome mu in [-N, N-1], N = 2n^2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    big_n = 2 * n * n
    if not -big_n <= mu <= big_n - 1:
        raise ValueError(f"outcome {mu} outside the register range [-{big_n}, {big_n - 1}]")
    return mu / n


# ---------------------------------------------------------------------------
# plans

@dataclass(frozen=True)
class ConstraintCheck:
    """One planner inequality, kept around for the report."""

    name: str
    lhs: float
    relation: str  # ">=", "<=" or "=="
    rhs: float

    @property
    def satisfied(self) -> bool:
        return self.margin >= -1e-12

    @property
    def margin(self) -> float:
        if self.relation == ">=":
            return self.lhs - self.rhs
        if self.relation == "<=":
            return self.rhs - self.lhs
        return -abs(self.lhs - self.rhs)

    def line(self) -> str:
        flag = "ok" if self.satisfied else "VIOLATED"
        return f"{self.name}: {self.lhs:.9g} {self.relation} {self.rhs:.9g} margin {self.margin:.6g} [{flag}]"


def _constants_line(c: ProtocolConstants) -> str:
    return (
        f"constants: c0={c.c0:g} c1={c.c1:.10g} c2={c.c2:.10g} C={c.C:g} "
        f"C0={c.C0:g} C1={c.C1:g} C3={c.C3:g} C4={c.C4:g} C5={c.C5:g}"
    )


@dataclass(frozen=True)
class Alg1Plan:
    """Chosen (n, k) for the qubit-readout protocol, with the audit trail."""

    m: int
    epsilon: float
    delta: float
    k: int
    n: int | None
    feasible: bool
    constants: ProtocolConstants = DEFAULT_CONSTANTS
    cmax: float | None = None
    union_bound: bool = False
    delta_effective: float = 0.0
    constraints: tuple[ConstraintCheck, ...] = ()
    notes: tuple[str, ...] = ()

    algorithm = "alg1"

    @classmethod
    def manual(cls, m: int, n: int, k: int, epsilon: float = 0.1, delta: float = 0.1) -> "Alg1Plan":
        """A plan with explicitly chosen registers, for engines and tests."""
        return cls(m=m, epsilon=epsilon, delta=delta, k=k, n=n, feasible=True,
                   delta_effective=delta)

    def report(self) -> str:
        lines = [
            "plan: alg1 (qubit-ensemble readout)",
            f"m={self.m} epsilon={self.epsilon:g} delta={self.delta:g} "
            f"union_bound={self.union_bound} delta_effective={self.delta_effective:g}",
            _constants_line(self.constants),
            f"cmax={'-' if self.cmax is None else format(self.cmax, 'g')}",
            f"k = {self.k}",
            f"n = {self.n if self.n is not None else 'none'}",
            f"feasible: {self.feasible}",
        ]
        if self.constraints:
            lines.append("constraints:")
            lines.extend("  " + c.line() for c in self.constraints)
        lines.extend("note: " + n for n in self.notes)
        return "\n".join(lines)


@dataclass(frozen=True)
class Alg2Plan:
    """Chosen (n, p) for the counter-register protocol, with the audit trail."""

    m: int
    epsilon: float
    delta: float
    n: int | None
    p: int | None
    feasible: bool
    constants: ProtocolConstants = DEFAULT_CONSTANTS
    union_bound: bool = False
    delta_effective: float = 0.0
    p_interval: tuple[float, float] | None = None
    constraints: tuple[ConstraintCheck, ...] = ()
    notes: tuple[str, ...] = ()

    algorithm = "alg2"

    @property
    def N(self) -> int | None:
        return None if self.n is None else 2 * self.n * self.n

    @classmethod
    def manual(cls, m: int, n: int, p: int, epsilon: float = 0.1, delta: float = 0.1) -> "Alg2Plan":
        if n < 2 or n & (n - 1):
            raise ValueError("n must be a power of two >= 2")
        return cls(m=m, epsilon=epsilon, delta=delta, n=n, p=p, feasible=True,
                   delta_effective=delta)

    def report(self) -> str:
        lines = [
            "plan: alg2 (counter-register readout)",
            f"m={self.m} epsilon={self.epsilon:g} delta={self.delta:g} "
            f"union_bound={self.union_bound} delta_effective={self.delta_effective:g}",
            _constants_line(self.constants),
            f"n = {self.n if self.n is not None else 'none'} (N = {self.N if self.n else 'none'})",
            f"p = {self.p if self.p is not None else 'none'}",
        ]
        if self.p_interval is not None:
            lines.append(f"admissible p interval: [{self.p_interval[0]:.6g}, {self.p_interval[1]:.6g}]")
        lines.append(f"feasible: {self.feasible}")
        if self.constraints:
            lines.append("constraints:")
            lines.extend("  " + c.line() for c in self.constraints)
        lines.extend("note: " + n for n in self.notes)
        return "\n".join(lines)


def _validate_targets(m: int, epsilon: float, delta: float) -> None:
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0.0 < epsilon:
        raise ValueError("epsilon must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")


def _alg1_constraints(n: int, m: int, k: int, epsilon: float, log_term: float,
                      c: ProtocolConstants, cmax: float | None) -> list[ConstraintCheck]:
    checks = [ConstraintCheck("ancilla-count", float(k), ">=", c.c0 * log_term / epsilon**2)]
    checks.append(ConstraintCheck("copies-floor (n >= 10k)", float(n), ">=", 10.0 * k))
    if cmax is None:
        accum = 8.0 * c.c1**2 * m * k * log_term / epsilon**2
        scale = 1.0
    else:
        accum = 2.0 * c.c1**2 * cmax**2 * m * k * log_term / epsilon**2
        scale = cmax
    checks.append(ConstraintCheck("kick-accumulation (n^2)", float(n) ** 2, ">=", accum))
    budget = c.c2 * c.C**2 * scale * (m * k * math.log(2.0) + k * log_term) / float(n) ** 2
    checks.append(ConstraintCheck("deviation-budget", budget, "<=", epsilon))
    return checks


def plan_alg1(m: int, epsilon: float, delta: float,
              constants: ProtocolConstants = DEFAULT_CONSTANTS,
              cmax: float | None = None, union_bound: bool = False,
              n_ceiling: int = 10**9) -> Alg1Plan:
    """Smallest (k, n) meeting every qubit-readout feasibility constraint.

    ``cmax`` switches the kick-accumulation constraint to its
    commutator-aware form (and scales the deviation budget accordingly);
    ``union_bound`` spends delta/m per index so all m estimates hold at once.
    """
    _validate_targets(m, epsilon, delta)
    if cmax is not None and cmax < 0:
        raise ValueError("cmax must be nonnegative")
    delta_eff = delta / m if union_bound else delta
    log_term = math.log(1.0 / delta_eff)
    k = max(1, math.ceil(constants.c0 * log_term / epsilon**2))

    def ok(n: int) -> bool:
        return all(c.satisfied for c in _alg1_constraints(n, m, k, epsilon, log_term, constants, cmax))

    notes = []
    if epsilon > TESTED_EPSILON_MAX:
        notes.append(f"epsilon {epsilon:g} is outside the tested accuracy regime "
                     f"(<= {TESTED_EPSILON_MAX:g})")
    if cmax is not None:
        alt = math.sqrt(8.0 * constants.c1**2 * cmax**2 * m * k * log_term) / epsilon
        notes.append(
            "kick-accumulation uses coefficient 2*c1^2*cmax^2; the conservative "
            f"8*c1^2*cmax^2 variant would need n >= {alt:.6g}"
        )

    if not ok(n_ceiling):
        return Alg1Plan(m=m, epsilon=epsilon, delta=delta, k=k, n=None, feasible=False,
                        constants=constants, cmax=cmax, union_bound=union_bound,
                        delta_effective=delta_eff,
                        constraints=tuple(_alg1_constraints(n_ceiling, m, k, epsilon,
                                                            log_term, constants, cmax)),
                        notes=tuple(notes + [f"no feasible n below the ceiling {n_ceiling}"]))

    lo, hi = 1, n_ceiling
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return Alg1Plan(m=m, epsilon=epsilon, delta=delta, k=k, n=lo, feasible=True,
                    constants=constants, cmax=cmax, union_bound=union_bound,
                    delta_effective=delta_eff,
                    constraints=tuple(_alg1_constraints(lo, m, k, epsilon, log_term,
                                                        constants, cmax)),
                    notes=tuple(notes))


def _alg2_constraints(n: int, p: int, m: int, epsilon: float, log_term: float,
                      c: ProtocolConstants) -> list[ConstraintCheck]:
    big_n = 2 * n * n
    return [
        ConstraintCheck("copies-floor", float(n), ">=", c.C0 * log_term / epsilon**2),
        ConstraintCheck("power-of-two", float(n), "==", float(2 ** round(math.log2(n)))),
        ConstraintCheck("noise-budget (p upper)", float(p), "<=", c.C1 * n**2 * epsilon**2 / log_term),
        ConstraintCheck("index-coverage (p lower)", float(p), ">=", c.C3 * m * log_term / epsilon**2),
        ConstraintCheck("kick-coverage (p lower)", float(p), ">=",
                        c.C4 * log_term / epsilon + c.C5 * m / epsilon),
        ConstraintCheck("register-fit (p < N)", float(p), "<=", float(big_n - 1)),
    ]


def plan_alg2(m: int, epsilon: float, delta: float,
              constants: ProtocolConstants = DEFAULT_CONSTANTS,
              union_bound: bool = False, n_ceiling: int = 2**24) -> Alg2Plan:
    """Smallest power-of-two n (then smallest admissible p) for the counter variant."""
    _validate_targets(m, epsilon, delta)
    delta_eff = delta / m if union_bound else delta
    log_term = math.log(1.0 / delta_eff)
    c = constants
    notes = ()
    if epsilon > TESTED_EPSILON_MAX:
        notes = (f"epsilon {epsilon:g} is outside the tested accuracy regime "
                 f"(<= {TESTED_EPSILON_MAX:g})",)

    n = 2
    while n < c.C0 * log_term / epsilon**2:
        n *= 2

    while n <= n_ceiling:
        p_lo = max(c.C3 * m * log_term / epsilon**2,
                   c.C4 * log_term / epsilon + c.C5 * m / epsilon, 1.0)
        p_hi = min(c.C1 * n**2 * epsilon**2 / log_term, float(2 * n * n - 1))
        p = math.ceil(p_lo)
        if p <= math.floor(p_hi):
            return Alg2Plan(m=m, epsilon=epsilon, delta=delta, n=n, p=p, feasible=True,
                            constants=c, union_bound=union_bound, delta_effective=delta_eff,
                            p_interval=(p_lo, p_hi), notes=notes,
                            constraints=tuple(_alg2_constraints(n, p, m, epsilon, log_term, c)))
        n *= 2

    n_last = n // 2
    p_lo = max(c.C3 * m * log_term / epsilon**2,
               c.C4 * log_term / epsilon + c.C5 * m / epsilon, 1.0)
    p_hi = min(c.C1 * n_last**2 * epsilon**2 / log_term, float(2 * n_last * n_last - 1))
    return Alg2Plan(m=m, epsilon=epsilon, delta=delta, n=None, p=None, feasible=False,
                    constants=c, union_bound=union_bound, delta_effective=delta_eff,
                    p_interval=(p_lo, p_hi),
                    constraints=tuple(_alg2_constraints(n_last, math.ceil(p_lo), m,
                                                        epsilon, log_term, c)),
                    notes=(f"no feasible (n, p) with n below the ceiling {n_ceiling}",))


# ---------------------------------------------------------------------------
# resources

@dataclass(frozen=True)
class ResourceEstimate:
    """Gate and ancilla counts for one memory-layout variant (unit constants)."""

    variant: str
    m: int
    k: int
    n: int
    circuit_sizes: tuple[int, ...]
    gate_units: int
    ancilla_qubits: int
    overhead_units: int = 0

    def report(self) -> str:
        return "\n".join([
            f"resources ({self.variant}); unit implied constants, asymptotic-order accounting",
            f"m={self.m} k={self.k} n={self.n} sum(S)={sum(self.circuit_sizes)}",
            f"gate units: {self.gate_units} (incl. overhead {self.overhead_units})",
            f"ancilla qubits: {self.ancilla_qubits}",
        ])


def estimate_resources(m: int, k: int, n: int, circuit_sizes, variant: str = "batch") -> ResourceEstimate:
    """Account gates/ancillas for one protocol layout.

    ``circuit_sizes`` lists the gate count of each measurement's circuit (one
    entry per index). The base cost m*k*n + n*sum(S) is shared; variants
    differ in ancilla registers and bookkeeping overhead.
    """
    if variant not in RESOURCE_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {RESOURCE_VARIANTS}")
    sizes = tuple(int(s) for s in circuit_sizes)
    if len(sizes) != m:
        raise ValueError(f"need one circuit size per index: got {len(sizes)} for m={m}")
    if m < 1 or k < 1 or n < 1 or any(s < 0 for s in sizes):
        raise ValueError("m, k, n must be >= 1 and circuit sizes nonnegative")
    total = sum(sizes)
    base = m * k * n + n * total
    logn = math.ceil(math.log2(n)) if n > 1 else 1
    if variant == "batch":
        anc, overhead = n + k, 0
    elif variant == "read-once":
        anc, overhead = m * k + n, 0
    elif variant == "const-memory":
        anc, overhead = 2, n * k * total
    else:  # log-memory
        anc, overhead = logn, m * n * logn + m * k * logn
    return ResourceEstimate(variant=variant, m=m, k=k, n=n, circuit_sizes=sizes,
                            gate_units=base + overhead, ancilla_qubits=anc,
                            overhead_units=overhead)
