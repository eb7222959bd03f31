"""Reproducible experiment harness: configs, runs, comparisons, sweeps, exports.

A run is fully determined by its config (instance recipe + protocol targets +
engine + trials + base seed): the instance is drawn from a generator seeded
by (base_seed, 0) and trial t uses a generator seeded by base_seed + t.
Outputs are delimited records plus a structured summary; no plotting here
(the CSV columns are already plot-ready).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from shadowlab import linalg, protocol
from shadowlab.audits import AuditReport, deviation_audit
from shadowlab.engines import full as engine_full
from shadowlab.engines import kickback as engine_kickback
from shadowlab.errors import InfeasiblePlanError

POVM_KINDS = ("random-projector", "random-povm", "pauli", "commuting", "from-file")
STATE_KINDS = ("random-mixed", "random-pure", "from-file")
ENGINES = ("kickback", "full", "marginal", "naive")
ALGORITHMS = ("alg1", "alg2")

__all__ = [
    "ExperimentConfig", "TrialRecord", "ExperimentResult", "AuditReport",
    "build_instance", "build_plan", "run_experiment", "deviation_audit",
    "engine_compare", "sweep_scaling", "noise_injection", "joint_probe",
    "tv_distance", "load_config", "save_config",
    "write_records_csv", "read_records_csv", "write_summary", "write_trajectory_csv",
    "write_sweep_csv", "SweepResult", "SweepPoint", "CompareResult", "NoiseReport",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run, mirrored 1:1 by the config file."""

    d: int = 2
    m: int = 4
    povm_kind: str = "random-projector"
    state_kind: str = "random-mixed"
    povm_files: tuple[str, ...] | None = None
    state_file: str | None = None
    algorithm: str = "alg1"
    epsilon: float = 0.2
    delta: float = 0.1
    constants: protocol.ProtocolConstants = protocol.DEFAULT_CONSTANTS
    n: int | None = None
    k: int | None = None
    p: int | None = None
    union_bound: bool = False
    cmax_aware: bool = False
    engine: str = "kickback"
    trials: int = 100
    base_seed: int = 0
    eta: float = 0.0
    debias: bool = True

    def __post_init__(self):
        if self.povm_kind not in POVM_KINDS:
            raise ValueError(f"povm_kind must be one of {POVM_KINDS}")
        if self.state_kind not in STATE_KINDS:
            raise ValueError(f"state_kind must be one of {STATE_KINDS}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.d < 1 or self.m < 1 or self.trials < 1:
            raise ValueError("d, m and trials must be >= 1")
        if not 0.0 <= self.eta < 0.5:
            raise ValueError("eta must lie in [0, 0.5)")
        if self.eta and self.algorithm != "alg1":
            raise ValueError("readout flips are defined for the qubit register only")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["constants"] = asdict(self.constants)
        doc["povm_files"] = list(self.povm_files) if self.povm_files else None
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if "constants" in doc and doc["constants"] is not None:
            if isinstance(doc["constants"], dict):
                doc["constants"] = protocol.ProtocolConstants(**doc["constants"])
        else:
            doc.pop("constants", None)
        if doc.get("povm_files"):
            doc["povm_files"] = tuple(doc["povm_files"])
        return cls(**doc)


def load_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def save_config(config: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config.to_dict(), indent=1))
    return path


# ---------------------------------------------------------------------------
# instances

_PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _pauli_effect(index: int, qubits: int) -> np.ndarray:
    """(I + P)/2 for the index-th non-identity Pauli string (a projector)."""
    labels = "IXYZ"
    digits = []
    v = index
    for _ in range(qubits):
        digits.append(v % 4)
        v //= 4
    op = np.eye(1, dtype=complex)
    for dig in reversed(digits):
        op = np.kron(op, _PAULIS[labels[dig]])
    return 0.5 * (np.eye(2**qubits) + op)


def build_instance(config: ExperimentConfig):
    """Draw (rho, ms, truths) deterministically from the config's base seed."""
    rng = np.random.default_rng((config.base_seed, 0))
    d, m = config.d, config.m
    kind = config.povm_kind
    if kind == "random-projector":
        ms = [linalg.random_projector(d, int(rng.integers(1, d)) if d > 1 else 1, seed=rng)
              for _ in range(m)]
    elif kind == "random-povm":
        ms = [linalg.random_povm_element(d, seed=rng) for _ in range(m)]
    elif kind == "pauli":
        qubits = int(math.log2(d))
        if 2**qubits != d:
            raise ValueError("pauli family needs d a power of two")
        pool = 4**qubits - 1
        ms = [linalg.PovmElement(_pauli_effect(1 + (i % pool), qubits)) for i in range(m)]
    elif kind == "commuting":
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        q, _ = np.linalg.qr(g)
        ms = [linalg.PovmElement((q * rng.uniform(0.0, 1.0, size=d)) @ q.conj().T)
              for _ in range(m)]
    else:
        if not config.povm_files or len(config.povm_files) != m:
            raise ValueError("from-file POVM needs exactly m file paths")
        ms = [linalg.load_povm_element(p) for p in config.povm_files]

    if config.state_kind == "random-mixed":
        rho = linalg.random_density(d, seed=rng)
    elif config.state_kind == "random-pure":
        rho = linalg.random_density(d, rank=1, seed=rng)
    else:
        if not config.state_file:
            raise ValueError("from-file state needs a state_file path")
        rho = linalg.load_density(config.state_file)
    if rho.dim != d or any(mm.dim != d for mm in ms):
        raise ValueError("instance dimensions disagree with the configured d")
    truths = [linalg.expectation(mm, rho) for mm in ms]
    return rho, ms, truths


def build_plan(config: ExperimentConfig, ms=None):
    """Planner-chosen registers, with explicit config overrides taking precedence."""
    cmax = None
    if config.cmax_aware:
        if ms is None:
            _, ms, _ = build_instance(config)
        cmax = linalg.cmax_of_family(ms)
    if config.algorithm == "alg1":
        if config.n is not None and config.k is not None:
            return protocol.Alg1Plan.manual(config.m, config.n, config.k,
                                            config.epsilon, config.delta)
        plan = protocol.plan_alg1(config.m, config.epsilon, config.delta,
                                  config.constants, cmax=cmax,
                                  union_bound=config.union_bound)
        if (config.n, config.k) == (None, None):
            return plan
        if not plan.feasible:
            raise InfeasiblePlanError("cannot apply a partial override to an infeasible plan")
        return protocol.Alg1Plan.manual(config.m, config.n or plan.n, config.k or plan.k,
                                        config.epsilon, config.delta)
    if config.n is not None and config.p is not None:
        return protocol.Alg2Plan.manual(config.m, config.n, config.p,
                                        config.epsilon, config.delta)
    plan = protocol.plan_alg2(config.m, config.epsilon, config.delta, config.constants,
                              union_bound=config.union_bound)
    if (config.n, config.p) == (None, None):
        return plan
    if not plan.feasible:
        raise InfeasiblePlanError("cannot apply a partial override to an infeasible plan")
    return protocol.Alg2Plan.manual(config.m, config.n or plan.n, config.p or plan.p,
                                    config.epsilon, config.delta)


# ---------------------------------------------------------------------------
# runs

@dataclass(frozen=True)
class TrialRecord:
    """One (trial, index) estimate against its true expectation."""

    trial: int
    index: int
    estimate: float
    truth: float
    abs_error: float
    failed: bool
    engine: str
    seed: int


RECORD_COLUMNS = ("trial", "index", "estimate", "truth", "abs_error", "failed",
                  "engine", "seed")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    plan: object | None
    records: list[TrialRecord]
    truths: list[float]
    summary: dict
    baseline_samples: int | None = None


def _summarize(config: ExperimentConfig, records: Sequence[TrialRecord]) -> dict:
    per_index = []
    for i in range(config.m):
        errs = [r.failed for r in records if r.index == i + 1]
        per_index.append(sum(errs) / len(errs) if errs else 0.0)
    by_trial: dict[int, bool] = {}
    for r in records:
        by_trial[r.trial] = by_trial.get(r.trial, False) or r.failed
    abs_errors = [r.abs_error for r in records]
    return {
        "per_index_failure_rates": per_index,
        "pooled_failure_rate": sum(r.failed for r in records) / len(records),
        "simultaneous_failure_rate": sum(by_trial.values()) / len(by_trial),
        "max_abs_error": max(abs_errors),
        "mean_abs_error": sum(abs_errors) / len(abs_errors),
        "marginal_only": config.engine in ("kickback", "marginal") and config.m > 1,
        "constants": asdict(config.constants),
        "epsilon": config.epsilon,
        "delta": config.delta,
        "trials": config.trials,
        "engine": config.engine,
        "eta": config.eta,
        "debias": config.debias,
    }


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the configured engine over all trials; bit-reproducible per config."""
    rho, ms, truths = build_instance(config)
    plan = None
    if config.engine != "naive":
        plan = build_plan(config, ms)
        if not plan.feasible:
            raise InfeasiblePlanError("the planner found no feasible registers; "
                                      "see plan.report() for the failing constraints")
    records: list[TrialRecord] = []
    baseline_samples = None
    for t in range(config.trials):
        seed = config.base_seed + t
        rng = np.random.default_rng(seed)
        if config.engine == "kickback":
            traj = engine_kickback.trajectory_run(rho, ms, plan, rng,
                                                  eta=config.eta, debias=config.debias)
            estimates = [o.estimate for o in traj.outcomes]
        elif config.engine == "marginal":
            estimates = [
                engine_kickback.marginal_sample(rho, ms, plan, i + 1, rng,
                                                eta=config.eta, debias=config.debias).estimate
                for i in range(config.m)
            ]
        elif config.engine == "full":
            run = engine_full.run_protocol(rho, ms, plan, rng,
                                           eta=config.eta, debias=config.debias)
            estimates = run.estimates
        else:
            base = engine_kickback.naive_baseline_run(rho, ms, config.epsilon,
                                                      config.delta, rng)
            estimates = base.estimates
            baseline_samples = base.samples_per_index
        for i, (est, truth) in enumerate(zip(estimates, truths), start=1):
            err = abs(est - truth)
            records.append(TrialRecord(trial=t, index=i, estimate=est, truth=truth,
                                       abs_error=err, failed=err > config.epsilon,
                                       engine=config.engine, seed=seed))
    return ExperimentResult(config=config, plan=plan, records=records, truths=truths,
                            summary=_summarize(config, records),
                            baseline_samples=baseline_samples)


# ---------------------------------------------------------------------------
# engine comparison

def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share a support")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass
class CompareResult:
    round_index: int
    tv: float
    support: np.ndarray
    pmf_full: np.ndarray
    pmf_kickback: np.ndarray


def engine_compare(rho: linalg.DensityMatrix, ms, plan, round_index: int,
                   sim_config: engine_full.FullSimConfig = engine_full.DEFAULT_CONFIG,
                   branch_budget: int = engine_kickback.BRANCH_BUDGET) -> CompareResult:
    """Exact brute-force vs exact kick-averaged law of one round's outcome."""
    support, pmf_full = engine_full.exact_output_distribution(rho, ms, plan, round_index,
                                                              sim_config)
    _, pmf_kick = engine_kickback.marginal_dist(rho, ms, plan, round_index,
                                                branch_budget=branch_budget)
    return CompareResult(round_index=round_index, tv=tv_distance(pmf_full, pmf_kick),
                         support=support, pmf_full=pmf_full, pmf_kickback=pmf_kick)


def joint_probe(rho: linalg.DensityMatrix, ms, plan, trials: int, seed,
                sim_config: engine_full.FullSimConfig = engine_full.DEFAULT_CONFIG) -> dict:
    """Exploratory: empirical TV between the engines' *joint* outcome laws.

    The sampler only claims per-round marginals, so this measures (on tiny
    instances) how far its joint law actually sits from the brute-force one.
    """
    rng_full = np.random.default_rng((seed, 1))
    rng_kick = np.random.default_rng((seed, 2))
    counts_full: dict[tuple, int] = {}
    counts_kick: dict[tuple, int] = {}
    for _ in range(trials):
        run = engine_full.run_protocol(rho, ms, plan, rng_full, sim_config)
        key = tuple(run.raw_outcomes)
        counts_full[key] = counts_full.get(key, 0) + 1
        traj = engine_kickback.trajectory_run(rho, ms, plan, rng_kick)
        key = tuple(o.raw for o in traj.outcomes)
        counts_kick[key] = counts_kick.get(key, 0) + 1
    keys = set(counts_full) | set(counts_kick)
    tv = 0.5 * sum(abs(counts_full.get(k, 0) - counts_kick.get(k, 0)) for k in keys) / trials
    return {"trials": trials, "joint_tv_estimate": tv,
            "distinct_outcomes": len(keys), "marginal_only_claim": True}


# ---------------------------------------------------------------------------
# scaling sweeps

@dataclass
class SweepPoint:
    m: int
    n_required: int | None
    rate: float | None
    band: tuple[float, float] | None
    probes: list
    converged: bool


@dataclass
class SweepResult:
    k: int
    target_rate: float
    trials: int
    epsilon: float
    delta: float
    points: list[SweepPoint]
    slope: float | None
    slope_stderr: float | None


def _rate_band(rate: float, samples: int, z: float = 1.96) -> tuple[float, float]:
    half = z * math.sqrt(max(rate * (1.0 - rate), 1e-12) / samples)
    return max(0.0, rate - half), min(1.0, rate + half)


def sweep_scaling(config: ExperimentConfig, m_values: Sequence[int],
                  target_rate: float | None = None, trials: int = 200,
                  n_floor: int = 4, n_ceiling: int = 2**15) -> SweepResult:
    """Minimal copies n per family size m (k fixed by the planner), plus the
    fitted log-log slope of n against m.

    A probe runs ``trials`` kick trajectories and passes when the pooled
    per-index failure rate is at or under the target (default: delta).
    Doubling finds a passing n, bisection the smallest one; non-convergence
    below the ceiling is recorded, not raised.
    """
    if config.algorithm != "alg1":
        raise ValueError("scaling sweeps drive the qubit-readout variant only")
    target = config.delta if target_rate is None else target_rate
    log_term = math.log(1.0 / (config.delta / config.m if config.union_bound else config.delta))
    k = max(1, math.ceil(config.constants.c0 * log_term / config.epsilon**2))

    points: list[SweepPoint] = []
    for m in m_values:
        cfg_m = replace(config, m=m, n=None, k=None)
        rho, ms, truths = build_instance(cfg_m)
        probes = []

        def rate_at(n: int) -> float:
            plan = protocol.Alg1Plan.manual(m, n, k, config.epsilon, config.delta)
            fails = 0
            with warnings.catch_warnings():
                # tiny probe registers trip the kick-size guard by design
                warnings.simplefilter("ignore", RuntimeWarning)
                for t in range(trials):
                    trng = np.random.default_rng((config.base_seed, m, n, t))
                    traj = engine_kickback.trajectory_run(rho, ms, plan, trng)
                    fails += sum(abs(o.estimate - truth) > config.epsilon
                                 for o, truth in zip(traj.outcomes, truths))
            rate = fails / (trials * m)
            probes.append((n, rate))
            return rate

        n = n_floor
        rate = rate_at(n)
        if rate > target:
            while n < n_ceiling and rate > target:
                n *= 2
                rate = rate_at(n)
            if rate > target:
                points.append(SweepPoint(m=m, n_required=None, rate=None, band=None,
                                         probes=probes, converged=False))
                continue
            lo, hi = n // 2 + 1, n
        else:
            lo, hi = n_floor, n_floor
        best_rate = rate
        while lo < hi:
            mid = (lo + hi) // 2
            r = rate_at(mid)
            if r <= target:
                hi, best_rate = mid, r
            else:
                lo = mid + 1
        points.append(SweepPoint(m=m, n_required=hi, rate=best_rate,
                                 band=_rate_band(best_rate, trials * m),
                                 probes=probes, converged=True))

    fit_pts = [(pt.m, pt.n_required) for pt in points if pt.converged]
    slope = slope_err = None
    if len(fit_pts) >= 2:
        xs = np.log([p[0] for p in fit_pts])
        ys = np.log([p[1] for p in fit_pts])
        if len(fit_pts) >= 3:
            coeffs, cov = np.polyfit(xs, ys, 1, cov=True)
            slope, slope_err = float(coeffs[0]), float(math.sqrt(cov[0, 0]))
        else:
            coeffs = np.polyfit(xs, ys, 1)
            slope = float(coeffs[0])
    return SweepResult(k=k, target_rate=target, trials=trials, epsilon=config.epsilon,
                       delta=config.delta, points=points, slope=slope,
                       slope_stderr=slope_err)


# ---------------------------------------------------------------------------
# noise robustness

@dataclass
class NoiseReport:
    eta: float
    clean: ExperimentResult
    noisy: ExperimentResult
    pooled_delta: float
    pooled_band: float
    within_band: bool
    per_index_delta_max: float
    mean_bias_clean: float
    mean_bias_noisy: float


def noise_injection(config: ExperimentConfig) -> NoiseReport:
    """Run the config twice, with and without readout flips, on matched seeds.

    De-biasing is left as configured; the report compares pooled failure
    rates against twice the (two-sample) binomial standard error.
    """
    if config.eta <= 0.0:
        raise ValueError("config.eta must be positive for a noise comparison")
    clean = run_experiment(replace(config, eta=0.0))
    noisy = run_experiment(config)
    samples = config.trials * config.m
    r_c = clean.summary["pooled_failure_rate"]
    r_n = noisy.summary["pooled_failure_rate"]
    se = math.sqrt((r_c * (1 - r_c) + r_n * (1 - r_n)) / samples)
    delta_idx = max(abs(a - b) for a, b in zip(clean.summary["per_index_failure_rates"],
                                               noisy.summary["per_index_failure_rates"]))
    bias = lambda res: sum(r.estimate - r.truth for r in res.records) / len(res.records)
    return NoiseReport(eta=config.eta, clean=clean, noisy=noisy,
                       pooled_delta=abs(r_n - r_c), pooled_band=2.0 * se,
                       within_band=abs(r_n - r_c) <= 2.0 * se,
                       per_index_delta_max=delta_idx,
                       mean_bias_clean=bias(clean), mean_bias_noisy=bias(noisy))


# ---------------------------------------------------------------------------
# exports

def write_records_csv(path: str | Path, result: ExperimentResult) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in result.records:
            writer.writerow([r.trial, r.index, repr(r.estimate), repr(r.truth),
                             repr(r.abs_error), int(r.failed), r.engine, r.seed])
    return path


def read_records_csv(path: str | Path) -> list[TrialRecord]:
    records = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise ValueError(f"unexpected record columns {reader.fieldnames}")
        for row in reader:
            records.append(TrialRecord(
                trial=int(row["trial"]), index=int(row["index"]),
                estimate=float(row["estimate"]), truth=float(row["truth"]),
                abs_error=float(row["abs_error"]), failed=bool(int(row["failed"])),
                engine=row["engine"], seed=int(row["seed"])))
    return records


def write_summary(path: str | Path, result: ExperimentResult) -> Path:
    """Structured summary: config echo, plan report, rates. Enough to re-run."""
    doc = {
        "config": result.config.to_dict(),
        "plan": None if result.plan is None else {
            "algorithm": result.plan.algorithm,
            "n": result.plan.n,
            "k": getattr(result.plan, "k", None),
            "p": getattr(result.plan, "p", None),
            "feasible": result.plan.feasible,
            "report": result.plan.report(),
        },
        "summary": result.summary,
        "baseline_samples_per_index": result.baseline_samples,
        "truths": result.truths,
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1))
    return path


def write_trajectory_csv(path: str | Path, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=engine_kickback.TRAJECTORY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def write_sweep_csv(path: str | Path, sweep: SweepResult) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "n_required", "rate", "band_lo", "band_hi", "converged"])
        for pt in sweep.points:
            band = pt.band or ("", "")
            writer.writerow([pt.m, pt.n_required if pt.n_required is not None else "",
                             "" if pt.rate is None else repr(pt.rate),
                             band[0], band[1], int(pt.converged)])
        writer.writerow([])
        writer.writerow(["slope", "" if sweep.slope is None else repr(sweep.slope)])
        writer.writerow(["slope_stderr",
                         "" if sweep.slope_stderr is None else repr(sweep.slope_stderr)])
        writer.writerow(["k", sweep.k])
        writer.writerow(["target_rate", sweep.target_rate])
    return path
