"""Joint log-likelihood fitness and population fitness entropy.

For real fading the metric reduces to

    L(d, a) = 2 * v^T z - v^T R v,   v = sqrt(E) * a * d

which is what both the Python entry points and the compiled search kernels use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigurationError

D_BOX = (-1.5, 1.5)
A_BOX = (0.0, 2.0)
NORMALIZE_EPS = 1e-9


@dataclass(frozen=True)
class Candidate:
    d: np.ndarray
    a: np.ndarray

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "Candidate":
        x = np.asarray(x, dtype=float)
        u = x.shape[0] // 2
        return cls(d=x[:u].copy(), a=x[u:].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.d, self.a])

    def clipped(self) -> "Candidate":
        return Candidate(d=np.clip(self.d, *D_BOX), a=np.clip(self.a, *A_BOX))

    @property
    def symbols(self) -> np.ndarray:
        return hard_decision(self.d)


@dataclass(frozen=True)
class FitnessReport:
    raw: np.ndarray
    normalized: np.ndarray
    entropy: float


def hard_decision(d: np.ndarray) -> np.ndarray:
    """sign(d) with sign(0) := +1."""
    return np.where(np.asarray(d) >= 0.0, 1.0, -1.0)


@numba.njit(cache=True)
def metric(d, a, z, R, sqrtE):
    """2 v^T z - v^T R v for v = sqrtE * a * d (no dimension checks)."""
    u = z.shape[0]
    lin = 0.0
    quad = 0.0
    for i in range(u):
        vi = sqrtE[i] * a[i] * d[i]
        lin += vi * z[i]
        acc = 0.0
        for j in range(u):
            acc += R[i, j] * sqrtE[j] * a[j] * d[j]
        quad += vi * acc
    return 2.0 * lin - quad


def log_likelihood(candidate: Candidate, z, R, E, hard: bool = False) -> float:
    """Joint log-likelihood metric of a candidate for one matched-filter output ``z``.

    With ``hard=True`` the symbol part is replaced by its sign before evaluation.
    """
    z = np.asarray(z, dtype=float)
    R = np.asarray(R, dtype=float)
    E = np.asarray(E, dtype=float)
    u = z.shape[0]
    if candidate.d.shape != (u,) or candidate.a.shape != (u,) or E.shape != (u,) or R.shape != (u, u):
        raise ConfigurationError(
            f"dimension mismatch: d{candidate.d.shape} a{candidate.a.shape} z{z.shape} R{R.shape} E{E.shape}"
        )
    d = hard_decision(candidate.d) if hard else np.asarray(candidate.d, dtype=float)
    v = np.sqrt(E) * candidate.a * d
    return float(2.0 * v @ z - v @ R @ v)


@numba.njit(cache=True)
def _normalize(raw, out):
    n = raw.shape[0]
    lo = raw[0]
    for i in range(1, n):
        if raw[i] < lo:
            lo = raw[i]
    total = 0.0
    for i in range(n):
        out[i] = raw[i] - lo + NORMALIZE_EPS
        total += out[i]
    for i in range(n):
        out[i] /= total


@numba.njit(cache=True)
def _entropy(p):
    h = 0.0
    for i in range(p.shape[0]):
        if p[i] > 0.0:
            h -= p[i] * np.log(p[i])
    return h


def normalize_fitness(raw) -> np.ndarray:
    """Shift-by-minimum normalization onto the probability simplex."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or raw.shape[0] < 2:
        raise ConfigurationError("need at least two fitness values")
    out = np.empty_like(raw)
    _normalize(raw, out)
    return out


def population_entropy(normalized) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    return float(_entropy(np.asarray(normalized, dtype=float)))


def fitness_report(raw) -> FitnessReport:
    p = normalize_fitness(raw)
    return FitnessReport(raw=np.asarray(raw, dtype=float), normalized=p, entropy=population_entropy(p))
