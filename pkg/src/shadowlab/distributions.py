"""Exact discrete laws used by the readout analysis, plus the two tail bounds.

Three integer-supported distributions live here: the ancilla kick weight
(sum of independent fair signs), the counter-register preparation noise, and
the Fourier-side law of the counter kick. Probabilities are exact rationals
up to ``EXACT_P_MAX`` (integer work capped near 4p = 256) and log-space floats
beyond, as are the state amplitudes for the counter register.
"""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.special import gammaln, logsumexp

EXACT_P_MAX = 64


def log_comb(n: int, k: int) -> float:
    """ln C(n, k); exact integer route when n is small enough to stay cheap."""
    if k < 0 or k > n:
        return -np.inf
    if n <= 4 * EXACT_P_MAX:
        return math.log(math.comb(n, k))
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


class _TabulatedDist:
    """Shared plumbing: integer support, float/log pmf, inverse-CDF sampling."""

    support: np.ndarray
    probs: np.ndarray
    log_probs: np.ndarray

    def _finalize(self) -> None:
        self._cdf = np.cumsum(self.probs)
        # guard the last bin against float undershoot
        self._cdf[-1] = max(self._cdf[-1], 1.0)

    def pmf(self, x: int) -> float:
        idx = np.searchsorted(self.support, x)
        if idx >= len(self.support) or self.support[idx] != x:
            return 0.0
        return float(self.probs[idx])

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size=size)
        out = self.support[np.searchsorted(self._cdf, u, side="right")]
        return out if size is not None else int(out)

    def to_csv(self, path: str | Path) -> Path:
        return export_pmf_csv(path, self.support, self.probs)


class LambdaDist(_TabulatedDist):
    """Sum of k independent fair signs: support {-k, -k+2, ..., k}.

    This is the law of the transverse-sum outcome read off the k ancilla
    qubits, and the weight multiplying each kick applied back onto the copies.
    """

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.support = np.arange(-k, k + 1, 2)
        self._exact = [Fraction(math.comb(k, (k + int(v)) // 2), 2**k) for v in self.support]
        self.probs = np.array([float(q) for q in self._exact])
        self.log_probs = np.log(self.probs)
        self._finalize()

    def exact_pmf(self, lam: int) -> Fraction:
        if (lam + self.k) % 2 or abs(lam) > self.k:
            return Fraction(0)
        return self._exact[(lam + self.k) // 2]

    def sample(self, rng: np.random.Generator, size: int | None = None):
        # k independent fair signs, summed (not table lookup): keeps the
        # sampler faithful to how the register is actually read out.
        shape = (self.k,) if size is None else (size, self.k)
        signs = 2 * rng.integers(0, 2, size=shape) - 1
        out = signs.sum(axis=-1)
        return out if size is not None else int(out)


class NoiseSDist(_TabulatedDist):
    """Preparation noise of the counter register: support {-p, ..., p}.

    pmf(x) = C(2p, p+x)^2 / C(4p, 2p), the chance that a balanced 4p-bit
    string puts p+x of its ones into a fixed half.
    """

    def __init__(self, p: int):
        if p < 1:
            raise ValueError("p must be >= 1")
        self.p = p
        self.support = np.arange(-p, p + 1)
        if p <= EXACT_P_MAX:
            denom = math.comb(4 * p, 2 * p)
            self._exact = [Fraction(math.comb(2 * p, p + int(x)) ** 2, denom) for x in self.support]
            self.probs = np.array([float(q) for q in self._exact])
            self.log_probs = np.log(self.probs)
        else:
            self._exact = None
            lden = log_comb(4 * p, 2 * p)
            self.log_probs = np.array(
                [2.0 * log_comb(2 * p, p + int(x)) - lden for x in self.support]
            )
            self.probs = np.exp(self.log_probs)
        self._finalize()

    def exact_pmf(self, x: int) -> Fraction:
        if self._exact is None:
            raise ValueError(f"exact rationals are only kept for p <= {EXACT_P_MAX}")
        if abs(x) > self.p:
            return Fraction(0)
        return self._exact[x + self.p]


class FourierLDist(_TabulatedDist):
    """Law of the counter kick index l over [-N, N-1], N = 2n^2.

    pmf(l) = (2 cos(l pi / 2N))^{4p} / (2 C(4p, 2p) N). Requires p < N so the
    underlying register state fits without wrap-around (otherwise the formula
    stops summing to one).
    """

    def __init__(self, p: int, n: int):
        _check_counter_geometry(p, n)
        self.p = p
        self.n = n
        self.N = 2 * n * n
        self.support = np.arange(-self.N, self.N)
        lden = log_comb(4 * p, 2 * p) + math.log(2 * self.N)
        base = 2.0 * np.cos(self.support * np.pi / (2 * self.N))
        with np.errstate(divide="ignore"):
            self.log_probs = 4 * p * np.log(np.abs(base)) - lden
        self.log_probs[np.abs(base) == 0.0] = -np.inf
        self.probs = np.exp(self.log_probs)
        self._finalize()

    def subgaussian_scale(self) -> float:
        """The K for which E[exp(l^2/K^2)] stays below 2."""
        return 4.0 * self.N / (math.pi * math.sqrt(self.p))


class PsiPState:
    """Counter-register initial state: amplitude C(2p, p+x)/sqrt(C(4p, 2p)) at x.

    Squared amplitudes reproduce ``NoiseSDist(p)`` exactly; ``p < N`` required
    so the support [-p, p] fits the register range [-N, N-1].
    """

    def __init__(self, p: int, n: int):
        _check_counter_geometry(p, n)
        self.p = p
        self.n = n
        self.N = 2 * n * n
        self.support = np.arange(-self.N, self.N)
        if p <= EXACT_P_MAX:
            denom = math.comb(4 * p, 2 * p)
            amps = [
                math.comb(2 * p, p + int(x)) / math.sqrt(denom) if abs(x) <= p else 0.0
                for x in self.support
            ]
            self.amplitudes = np.array(amps)
        else:
            lden = log_comb(4 * p, 2 * p)
            logs = np.array(
                [
                    log_comb(2 * p, p + int(x)) - 0.5 * lden if abs(x) <= p else -np.inf
                    for x in self.support
                ]
            )
            self.amplitudes = np.exp(logs)

    def exact_weight(self, x: int) -> Fraction:
        """Exact squared amplitude at x (p small enough for integer work)."""
        if self.p > EXACT_P_MAX:
            raise ValueError(f"exact rationals are only kept for p <= {EXACT_P_MAX}")
        if abs(x) > self.p:
            return Fraction(0)
        return Fraction(math.comb(2 * self.p, self.p + x) ** 2, math.comb(4 * self.p, 2 * self.p))


def _check_counter_geometry(p: int, n: int) -> None:
    if p < 1:
        raise ValueError("p must be >= 1")
    if n < 2 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    if p >= 2 * n * n:
        raise ValueError(f"p = {p} does not fit the counter register (need p < N = {2 * n * n})")


def subgaussian_mgf_check(dist: _TabulatedDist, scale: float) -> float:
    """E[exp(X^2 / scale^2)], evaluated in log space over the whole table."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    mask = np.isfinite(dist.log_probs)
    terms = dist.log_probs[mask] + (dist.support[mask].astype(float) / scale) ** 2
    return float(np.exp(logsumexp(terms)))


def tail_bound_hoeffding(ranges, t: float) -> float:
    """Two-sided Hoeffding tail 2 exp(-2 t^2 / sum (b_i - a_i)^2) for a sum of
    independent bounded variables; ``ranges`` is a sequence of (a_i, b_i)."""
    ranges = list(ranges)
    if not ranges:
        raise ValueError("at least one range is required")
    if t < 0:
        raise ValueError("t must be nonnegative")
    denom = 0.0
    for lo, hi in ranges:
        if hi < lo:
            raise ValueError(f"empty range ({lo}, {hi})")
        denom += (hi - lo) ** 2
    if denom == 0.0:
        return 0.0 if t > 0 else 2.0
    return 2.0 * math.exp(-2.0 * t * t / denom)


def tail_bound_azuma(increments, eps: float) -> float:
    """Two-sided Azuma tail 2 exp(-eps^2 / (2 sum c_i^2)) for a martingale with
    |X_i - X_{i-1}| <= c_i."""
    cs = [float(c) for c in increments]
    if not cs:
        raise ValueError("at least one increment bound is required")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if any(c < 0 for c in cs):
        raise ValueError("increment bounds must be nonnegative")
    denom = 2.0 * sum(c * c for c in cs)
    if denom == 0.0:
        return 0.0 if eps > 0 else 2.0
    return 2.0 * math.exp(-eps * eps / denom)


def export_pmf_csv(path: str | Path, support, probs) -> Path:
    """Two-column pmf table (value, probability)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "probability"])
        for v, q in zip(support, probs):
            writer.writerow([int(v), repr(float(q))])
    return path
