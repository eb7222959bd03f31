"""Finite-dimensional Hermitian toolbox: states, measurement effects, exponentials.

Everything downstream (planners, engines, audits) goes through this module, so
the conventions are fixed here once: eigenvalues ascending, eigenvectors as
columns, inputs Hermitian within ``HERM_ATOL`` (worse is rejected, smaller
asymmetry is symmetrized away).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

HERM_ATOL = 1e-9
TRACE_ATOL = 1e-9
EIG_ATOL = 1e-9
UNITARY_ATOL = 1e-9

# slack of the second-order conjugation remainder, sum_{j>=2} 2^(j-2)/j! = (e^2-3)/4
CONJUGATION_SLACK = (np.e**2 - 3.0) / 4.0


class SpectralDecomposition(NamedTuple):
    """Eigenvalues (ascending) and matching eigenvector columns of a Hermitian matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def hermitian_part(a: np.ndarray, atol: float = HERM_ATOL, what: str = "matrix") -> np.ndarray:
    """Symmetrize ``a``; reject if the asymmetry exceeds ``atol`` entrywise."""
    a = _as_square(a)
    gap = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if gap > atol:
        raise ValueError(f"{what} is not Hermitian: max entrywise asymmetry {gap:.3e} > {atol:.1e}")
    return 0.5 * (a + a.conj().T)


def spectral_decompose(a: np.ndarray) -> SpectralDecomposition:
    """Eigendecomposition of a Hermitian matrix (LAPACK behind the scenes)."""
    h = hermitian_part(a)
    vals, vecs = np.linalg.eigh(h)
    return SpectralDecomposition(vals, vecs)


def expm_i(h: np.ndarray, t: float) -> np.ndarray:
    """Unitary exp(i*t*H) for Hermitian H, via the spectral decomposition."""
    vals, vecs = spectral_decompose(h)
    return (vecs * np.exp(1j * t * vals)) @ vecs.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = _as_square(a)
    b = _as_square(b)
    return a @ b - b @ a


def operator_norm(a: np.ndarray) -> float:
    """Largest singular value."""
    a = _as_square(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


class DensityMatrix:
    """A trace-one positive-semidefinite matrix wrapped with validation.

    Hermiticity/trace violations above the module tolerances are rejected;
    below them the stored matrix is symmetrized (the trace is kept as given).
    """

    __slots__ = ("matrix", "dim")

    def __init__(self, matrix: np.ndarray):
        m = hermitian_part(matrix, what="density matrix")
        tr = float(np.real(np.trace(m)))
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"density matrix trace {tr!r} deviates from 1 by more than {TRACE_ATOL:.1e}")
        lo = float(np.min(np.linalg.eigvalsh(m))) if m.size else 0.0
        if lo < -EIG_ATOL:
            raise ValueError(f"density matrix has eigenvalue {lo:.3e} < -{EIG_ATOL:.1e}")
        self.matrix = m
        self.dim = m.shape[0]

    def eigensystem(self) -> SpectralDecomposition:
        vals, vecs = np.linalg.eigh(self.matrix)
        return SpectralDecomposition(vals, vecs)

    def purification_weights(self) -> SpectralDecomposition:
        """Eigensystem with tiny negative weights clipped and renormalized."""
        vals, vecs = self.eigensystem()
        w = np.clip(vals, 0.0, None)
        return SpectralDecomposition(w / w.sum(), vecs)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


class PovmElement:
    """A Hermitian effect with spectrum in [0, 1]; the eigensystem is cached."""

    __slots__ = ("matrix", "dim", "eigenvalues", "eigenvectors", "is_projector")

    def __init__(self, matrix: np.ndarray):
        m = hermitian_part(matrix, what="POVM element")
        vals, vecs = np.linalg.eigh(m) if m.size else (np.zeros(0), np.zeros((0, 0)))
        if m.size and (vals.min() < -EIG_ATOL or vals.max() > 1.0 + EIG_ATOL):
            raise ValueError(
                f"POVM element spectrum [{vals.min():.6g}, {vals.max():.6g}] leaves [0, 1] "
                f"by more than {EIG_ATOL:.1e}"
            )
        self.matrix = m
        self.dim = m.shape[0]
        self.eigenvalues = np.clip(vals, 0.0, 1.0)
        self.eigenvectors = vecs
        self.is_projector = bool(np.all(np.abs(vals - np.round(vals)) <= EIG_ATOL))

    def __repr__(self) -> str:
        kind = "projector" if self.is_projector else "effect"
        return f"PovmElement(dim={self.dim}, {kind})"


def expectation(m: PovmElement | np.ndarray, rho: DensityMatrix | np.ndarray) -> float:
    """Real expectation value Tr[M rho]."""
    mm = m.matrix if isinstance(m, PovmElement) else _as_square(m)
    rr = rho.matrix if isinstance(rho, DensityMatrix) else _as_square(rho)
    val = complex(np.trace(mm @ rr))
    return float(val.real)


def conjugate(rho: DensityMatrix, u: np.ndarray) -> DensityMatrix:
    """U rho U^dagger for a unitary U (unitarity checked)."""
    u = _as_square(u)
    gap = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if gap > UNITARY_ATOL:
        raise ValueError(f"conjugation operator is not unitary: max |U^H U - I| = {gap:.3e}")
    return DensityMatrix(u @ rho.matrix @ u.conj().T)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_density(dim: int, rank: int | None = None, seed=None) -> DensityMatrix:
    """Random mixed state G G^H / Tr[G G^H] with G a dim-by-rank complex Gaussian."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must lie in [1, {dim}], got {rank}")
    rng = _rng(seed)
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.real(np.trace(m)))


def random_projector(dim: int, rank: int, seed=None) -> PovmElement:
    """Rank-``rank`` orthogonal projector from a QR frame of a complex Gaussian."""
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must lie in [1, {dim}], got {rank}")
    rng = _rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, _ = np.linalg.qr(g)
    basis = q[:, :rank]
    return PovmElement(basis @ basis.conj().T)


def random_povm_element(dim: int, seed=None) -> PovmElement:
    """Random Hermitian matrix rescaled affinely so its spectrum spans [0, 1]."""
    rng = _rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (g + g.conj().T)
    vals = np.linalg.eigvalsh(h)
    spread = float(vals[-1] - vals[0])
    if spread < 1e-12:
        return PovmElement(0.5 * np.eye(dim))
    return PovmElement((h - vals[0] * np.eye(dim)) / spread)


def cmax_of_family(ms: Sequence[PovmElement]) -> float:
    """Largest commutator norm max_{i<j} ||[M_i, M_j]|| over the family (0 if size < 2)."""
    worst = 0.0
    for i in range(len(ms)):
        for j in range(i + 1, len(ms)):
            worst = max(worst, operator_norm(commutator(ms[i].matrix, ms[j].matrix)))
    return worst


def conjugate_deviation(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Second-order conjugation remainder and its certified bound.

    Returns (lhs, rhs) with
      lhs = ||e^{iA} B e^{-iA} - B - i[A, B]||
      rhs = ||[A, [A, B]]|| * (e^2 - 3)/4
    for Hermitian A, B with ||A|| <= 1. The inequality lhs <= rhs is the
    workhorse behind every per-step deviation audit.
    """
    a = hermitian_part(a, what="A")
    b = hermitian_part(b, what="B")
    na = operator_norm(a)
    if na > 1.0 + 1e-9:
        raise ValueError(f"||A|| = {na:.6g} exceeds 1; the remainder bound does not apply")
    u = expm_i(a, 1.0)
    lhs = operator_norm(u @ b @ u.conj().T - b - 1j * commutator(a, b))
    rhs = operator_norm(commutator(a, commutator(a, b))) * CONJUGATION_SLACK
    return lhs, rhs


# ---------------------------------------------------------------------------
# matrix files: {"dim": d, "entries": [[re, im], ...]} row-major, d*d entries

def save_matrix(path: str | Path, a: np.ndarray) -> Path:
    a = _as_square(a)
    entries = [[float(z.real), float(z.imag)] for z in a.ravel()]
    path = Path(path)
    path.write_text(json.dumps({"dim": int(a.shape[0]), "entries": entries}, indent=1))
    return path


def load_matrix(path: str | Path) -> np.ndarray:
    doc = json.loads(Path(path).read_text())
    try:
        dim = int(doc["dim"])
        entries = doc["entries"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: matrix file needs 'dim' and 'entries' fields") from exc
    if dim < 1 or len(entries) != dim * dim:
        raise ValueError(f"{path}: expected {dim * dim} entries for dim {dim}, got {len(entries)}")
    flat = np.array([complex(re, im) for re, im in entries])
    return flat.reshape(dim, dim)


def load_density(path: str | Path) -> DensityMatrix:
    return DensityMatrix(load_matrix(path))


def load_povm_element(path: str | Path) -> PovmElement:
    return PovmElement(load_matrix(path))
