"""Brute-force purified statevector engine.

The whole protocol state is one complex tensor: two axes of size d per copy
(system + purifier) followed by the ancilla register (k qubit axes, or one
axis of size 2N for the counter variant). Round unitaries are applied as
n*k commuting two-body factors (or n controlled counter shifts), never via
the spectral shortcut the closed-form sampler uses, so agreement between the
two engines is an actual check and not a tautology.

Sizes are guarded by ``FullSimConfig.max_amplitudes``; the exact-distribution
path additionally guards its branch count. Refusals raise
``BudgetExceededError`` rather than attempting the allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Sequence

import numpy as np

from shadowlab import linalg, protocol
from shadowlab.distributions import PsiPState
from shadowlab.errors import BudgetExceededError

# ancilla qubit initial state: rotate |0> by pi/3 about X
ANCILLA_QUBIT_INIT = np.array([math.sqrt(3.0) / 2.0, -0.5j])

_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class FullSimConfig:
    """Size budgets for the brute-force engine."""

    max_amplitudes: int = 2**26
    max_branches: int = 4096


DEFAULT_CONFIG = FullSimConfig()


class JointPureState:
    """Statevector over n purified copies, optionally with an ancilla register.

    ``ancilla`` is None (copies only), ("qubits", k) or ("counter", N).
    """

    __slots__ = ("d", "n_copies", "tensor", "ancilla")

    def __init__(self, d: int, n_copies: int, tensor: np.ndarray, ancilla=None):
        self.d = d
        self.n_copies = n_copies
        self.tensor = tensor
        self.ancilla = ancilla

    @property
    def ancilla_dim(self) -> int:
        if self.ancilla is None:
            return 1
        kind, size = self.ancilla
        return 2**size if kind == "qubits" else 2 * size

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensor.ravel()))

    def copy(self) -> "JointPureState":
        return JointPureState(self.d, self.n_copies, self.tensor.copy(), self.ancilla)

    def __repr__(self) -> str:
        return (f"JointPureState(d={self.d}, n={self.n_copies}, "
                f"ancilla={self.ancilla}, amplitudes={self.tensor.size})")


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _plan_ancilla(plan) -> tuple:
    if plan.algorithm == "alg1":
        return ("qubits", plan.k)
    return ("counter", 2 * plan.n * plan.n)


def _ancilla_vector(plan) -> np.ndarray:
    if plan.algorithm == "alg1":
        vec = reduce(np.kron, [ANCILLA_QUBIT_INIT] * plan.k)
        return vec.reshape((2,) * plan.k)
    return PsiPState(plan.p, plan.n).amplitudes.astype(complex)


def _check_budget(d: int, n: int, anc_dim: int, config: FullSimConfig) -> None:
    required = d ** (2 * n) * anc_dim
    if required > config.max_amplitudes:
        raise BudgetExceededError("joint state too large", required, config.max_amplitudes)


def _copies_tensor(rho: linalg.DensityMatrix, n: int) -> np.ndarray:
    """(purification of rho)^{tensor n}: axes sys1, pur1, ..., sysn, purn."""
    weights, vecs = rho.purification_weights()
    phi = vecs * np.sqrt(weights)[None, :]
    return reduce(np.multiply.outer, [phi] * n)


def attach_ancillas(state: JointPureState, plan) -> JointPureState:
    """Tensor a fresh ancilla register onto a copies-only state."""
    if state.ancilla is not None:
        raise ValueError("state already carries an ancilla register")
    anc = _plan_ancilla(plan)
    tensor = np.multiply.outer(state.tensor, _ancilla_vector(plan))
    return JointPureState(state.d, state.n_copies, tensor, anc)


def init_round(rho: linalg.DensityMatrix, n: int, plan,
               config: FullSimConfig = DEFAULT_CONFIG) -> JointPureState:
    """Fresh joint state: purified copies of rho plus the initial ancillas."""
    if n < 1:
        raise ValueError("n must be >= 1")
    anc_kind, anc_size = _plan_ancilla(plan)
    anc_dim = 2**anc_size if anc_kind == "qubits" else 2 * anc_size
    _check_budget(rho.dim, n, anc_dim, config)
    copies = JointPureState(rho.dim, n, _copies_tensor(rho, n), None)
    return attach_ancillas(copies, plan)


def _apply_two_site(tensor: np.ndarray, gate: np.ndarray, ax_a: int, ax_b: int) -> np.ndarray:
    """Contract a (a, b, a', b') gate against axes (ax_a, ax_b)."""
    out = np.tensordot(gate, tensor, axes=([2, 3], [ax_a, ax_b]))
    return np.moveaxis(out, (0, 1), (ax_a, ax_b))


def _apply_one_site(tensor: np.ndarray, op: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(op, tensor, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def apply_round_unitary(state: JointPureState, m: linalg.PovmElement) -> JointPureState:
    """One round's coupling between every copy and the whole ancilla register."""
    if state.ancilla is None:
        raise ValueError("no ancilla register attached")
    if m.dim != state.d:
        raise ValueError(f"measurement dimension {m.dim} != copy dimension {state.d}")
    kind, size = state.ancilla
    n = state.n_copies
    tensor = state.tensor
    if kind == "qubits":
        angle = -math.pi / (6.0 * n)
        gate = linalg.expm_i(np.kron(m.matrix, _X), angle).reshape(state.d, 2, state.d, 2)
        for i in range(n):
            for l in range(size):
                tensor = _apply_two_site(tensor, gate, 2 * i, 2 * n + l)
    else:
        if not m.is_projector:
            raise ValueError("the counter variant requires projector-valued measurements")
        keep = m.eigenvalues > 0.5
        basis = m.eigenvectors[:, keep]
        p1 = basis @ basis.conj().T
        p0 = np.eye(state.d) - p1
        anc_axis = 2 * n
        for i in range(n):
            stay = _apply_one_site(tensor, p0, 2 * i)
            move = _apply_one_site(tensor, p1, 2 * i)
            tensor = stay + np.roll(move, 1, axis=anc_axis)
    return JointPureState(state.d, n, tensor, state.ancilla)


@lru_cache(maxsize=32)
def _popcounts(k: int) -> np.ndarray:
    return np.array([bin(b).count("1") for b in range(2**k)])


def ancilla_distribution(state: JointPureState, basis: str = "computational"):
    """Exact readout law of the attached ancillas.

    Returns (support, probs): counts-of-ones 0..k for the qubit register
    (optionally after rotating every qubit into the X basis), or counter
    values -N..N-1.
    """
    if state.ancilla is None:
        raise ValueError("no ancilla register attached")
    kind, size = state.ancilla
    tensor = state.tensor
    if kind == "qubits" and basis == "x":
        h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
        for l in range(size):
            tensor = _apply_one_site(tensor, h, 2 * state.n_copies + l)
    elif basis != "computational":
        raise ValueError(f"unknown basis {basis!r}")
    flat = tensor.reshape(-1, state.ancilla_dim)
    probs = np.einsum("ib,ib->b", flat, flat.conj()).real
    if kind == "qubits":
        pmf = np.bincount(_popcounts(size), weights=probs, minlength=size + 1)
        return np.arange(size + 1), pmf
    return np.arange(-size, size), probs


def measure_ancillas(state: JointPureState, seed):
    """Sample the ancilla register, collapse, and drop it.

    Returns (outcome, copies_state): for the qubit register the outcome is
    the number of ones; for the counter it is the register value in
    [-N, N-1]. The surviving copies keep their purifiers and can take a
    fresh ancilla register for the next round.
    """
    if state.ancilla is None:
        raise ValueError("no ancilla register attached")
    rng = _as_rng(seed)
    kind, size = state.ancilla
    flat = state.tensor.reshape(-1, state.ancilla_dim)
    probs = np.einsum("ib,ib->b", flat, flat.conj()).real
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    b = int(rng.choice(len(probs), p=probs))
    column = flat[:, b] / math.sqrt(probs[b])
    copies = column.reshape((state.d,) * (2 * state.n_copies))
    outcome = int(_popcounts(size)[b]) if kind == "qubits" else b - size
    return outcome, JointPureState(state.d, state.n_copies, copies, None)


def copies_mixed_after(state: JointPureState, basis: str = "computational") -> np.ndarray:
    """Unconditional copies-register density matrix after reading the ancillas.

    Averaging the collapse over all outcomes in any fixed basis is the same
    as tracing the register out; exposing the basis lets tests check that.
    """
    if state.ancilla is None:
        raise ValueError("no ancilla register attached")
    tensor = state.tensor
    if basis == "x":
        kind, size = state.ancilla
        if kind != "qubits":
            raise ValueError("x-basis readout only applies to the qubit register")
        h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
        for l in range(size):
            tensor = _apply_one_site(tensor, h, 2 * state.n_copies + l)
    elif basis != "computational":
        raise ValueError(f"unknown basis {basis!r}")
    flat = tensor.reshape(-1, state.ancilla_dim)
    return flat @ flat.conj().T


def reduced_system_density(state: JointPureState) -> np.ndarray:
    """Density matrix of the n system slots alone (purifiers and ancillas traced)."""
    n = state.d**state.n_copies
    sys_axes = tuple(range(0, 2 * state.n_copies, 2))
    rest = tuple(a for a in range(state.tensor.ndim) if a not in sys_axes)
    flat = state.tensor.transpose(sys_axes + rest).reshape(n, -1)
    return flat @ flat.conj().T


def _flip_count(count: int, k: int, eta: float, rng: np.random.Generator) -> int:
    if eta == 0.0:
        return count
    return count - int(rng.binomial(count, eta)) + int(rng.binomial(k - count, eta))


@dataclass
class FullRunResult:
    """Per-round outcomes of one brute-force protocol execution."""

    estimates: list[float]
    raw_outcomes: list[int]
    mus: list[float]

    def trace_rows(self):
        for j, (raw, est) in enumerate(zip(self.raw_outcomes, self.estimates), start=1):
            yield j, raw, est


def run_protocol(rho: linalg.DensityMatrix, ms: Sequence[linalg.PovmElement], plan,
                 seed, config: FullSimConfig = DEFAULT_CONFIG,
                 eta: float = 0.0, debias: bool = True) -> FullRunResult:
    """Execute every round on the joint state, reusing the copies throughout.

    ``eta`` flips each recorded readout bit independently (qubit register
    only); the collapse itself follows the true outcome. ``debias`` undoes
    the flip bias in the estimate.
    """
    if len(ms) != plan.m:
        raise ValueError(f"plan expects m={plan.m} measurements, got {len(ms)}")
    if eta and plan.algorithm != "alg1":
        raise ValueError("readout flips are defined for the qubit register only")
    if not 0.0 <= eta < 0.5:
        raise ValueError("eta must lie in [0, 0.5)")
    rng = _as_rng(seed)
    state = init_round(rho, plan.n, plan, config)
    estimates, raws, mus = [], [], []
    for j, m in enumerate(ms):
        if j > 0:
            state = attach_ancillas(state, plan)
        state = apply_round_unitary(state, m)
        outcome, state = measure_ancillas(state, rng)
        if plan.algorithm == "alg1":
            outcome = _flip_count(outcome, plan.k, eta, rng)
            mu = outcome / plan.k
            if eta and debias:
                mu = min(max((mu - eta) / (1.0 - 2.0 * eta), 0.0), 1.0)
            est = protocol.estimate_from_fraction(mu)
        else:
            mu = float(outcome)
            est = protocol.estimate_lowmem(outcome, plan.n)
        estimates.append(est)
        raws.append(outcome)
        mus.append(mu)
    return FullRunResult(estimates, raws, mus)


def exact_output_distribution(rho: linalg.DensityMatrix, ms: Sequence[linalg.PovmElement],
                              plan, round_index: int,
                              config: FullSimConfig = DEFAULT_CONFIG):
    """Exact marginal law of round ``round_index``'s outcome (1-based).

    Earlier rounds are branched over every ancilla basis outcome with its
    Born weight; no outcome-grouping shortcut is taken, so this is a genuine
    brute-force reference for the sampler's closed forms.
    """
    if not 1 <= round_index <= len(ms):
        raise ValueError(f"round_index must lie in [1, {len(ms)}]")
    if len(ms) != plan.m:
        raise ValueError(f"plan expects m={plan.m} measurements, got {len(ms)}")
    anc_kind, anc_size = _plan_ancilla(plan)
    anc_dim = 2**anc_size if anc_kind == "qubits" else 2 * anc_size
    branch_total = anc_dim ** (round_index - 1)
    if branch_total > config.max_branches:
        raise BudgetExceededError("too many measurement branches", branch_total,
                                  config.max_branches)
    _check_budget(rho.dim, plan.n, anc_dim, config)

    branches = [(1.0, JointPureState(rho.dim, plan.n, _copies_tensor(rho, plan.n), None))]
    for j in range(round_index - 1):
        grown = []
        for weight, copies in branches:
            state = apply_round_unitary(attach_ancillas(copies, plan), ms[j])
            flat = state.tensor.reshape(-1, anc_dim)
            probs = np.einsum("ib,ib->b", flat, flat.conj()).real
            for b in range(anc_dim):
                if probs[b] <= 0.0:
                    continue
                column = flat[:, b] / math.sqrt(probs[b])
                grown.append((weight * probs[b],
                              JointPureState(rho.dim, plan.n,
                                             column.reshape((rho.dim,) * (2 * plan.n)), None)))
        branches = grown

    support = None
    pmf = None
    for weight, copies in branches:
        state = apply_round_unitary(attach_ancillas(copies, plan), ms[round_index - 1])
        support, probs = ancilla_distribution(state)
        pmf = weight * probs if pmf is None else pmf + weight * probs
    return support, pmf
