"""Gold spreading-code families and signature correlation matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Preferred pairs of primitive polynomials, as bit masks including the x^m term.
PREFERRED_PAIRS = {
    5: (0o45, 0o75),  # x^5+x^2+1, x^5+x^4+x^3+x^2+1
    6: (0o103, 0o147),  # x^6+x+1, x^6+x^5+x^2+x+1
    7: (0o211, 0o217),  # x^7+x^3+1, x^7+x^3+x^2+x+1
}


def lfsr_sequence(poly: int, degree: int, length: int | None = None) -> np.ndarray:
    """Binary output of a Fibonacci LFSR for ``poly`` started from the all-ones state.

    The recurrence is b[k+m] = sum_j c_j b[k+j] (mod 2) where ``poly`` has
    coefficient c_j at bit j.
    """
    if poly >> degree != 1:
        raise ConfigurationError(f"polynomial {poly:#o} does not have degree {degree}")
    n = (1 << degree) - 1 if length is None else length
    taps = [j for j in range(degree) if (poly >> j) & 1]
    bits = np.ones(n + degree, dtype=np.uint8)
    for k in range(n):
        acc = 0
        for j in taps:
            acc ^= bits[k + j]
        bits[k + degree] = acc
    return bits[:n]


def lfsr_period(poly: int, degree: int) -> int:
    """Period of the LFSR state sequence from the all-ones state."""
    mask = (1 << degree) - 1
    start = state = mask
    taps = poly & mask
    for period in range(1, 1 << degree):
        feedback = bin(state & taps).count("1") & 1
        state = (state >> 1) | (feedback << (degree - 1))
        if state == start:
            return period
    return -1


@dataclass(frozen=True)
class CodeBook:
    degree: int
    chip_length: int
    family: np.ndarray = field(repr=False)  # family_size x N, entries in {0, 1}

    @property
    def family_size(self) -> int:
        return self.family.shape[0]

    @property
    def chips(self) -> np.ndarray:
        """Unnormalized +-1 chips, one row per family member (0 -> +1, 1 -> -1)."""
        return 1.0 - 2.0 * self.family

    @property
    def signatures(self) -> np.ndarray:
        """N x family_size matrix of unit-norm signatures."""
        return self.chips.T / np.sqrt(self.chip_length)

    def signature_matrix(self, num_users: int) -> np.ndarray:
        """First ``num_users`` normalized signatures as columns of an N x U matrix."""
        if not 1 <= num_users <= self.family_size:
            raise ConfigurationError(
                f"num_users={num_users} outside [1, {self.family_size}] for degree {self.degree}"
            )
        return self.signatures[:, :num_users]


@dataclass(frozen=True)
class CorrelationMatrix:
    R: np.ndarray
    min_eigenvalue: float

    @property
    def num_users(self) -> int:
        return self.R.shape[0]


def generate_gold_family(degree: int = 5, preferred_pair: tuple[int, int] | None = None) -> CodeBook:
    """Build the 2^m + 1 member Gold family from a preferred pair of m-sequences.

    Ordering is deterministic: the two m-sequences first, then ``u xor shift(v, k)``
    for k = 0 .. N-1.
    """
    if degree not in PREFERRED_PAIRS:
        raise ConfigurationError(f"degree must be one of {sorted(PREFERRED_PAIRS)}, got {degree}")
    pair = PREFERRED_PAIRS[degree] if preferred_pair is None else preferred_pair
    n = (1 << degree) - 1
    for poly in pair:
        period = lfsr_period(poly, degree)
        if period != n:
            raise ConfigurationError(
                f"polynomial {poly:#o} is not primitive: LFSR period {period} != {n}"
            )
    u = lfsr_sequence(pair[0], degree)
    v = lfsr_sequence(pair[1], degree)
    members = [u, v] + [u ^ np.roll(v, -k) for k in range(n)]
    return CodeBook(degree=degree, chip_length=n, family=np.array(members, dtype=np.uint8))


def correlation_matrix(codebook: CodeBook, active_users: int) -> CorrelationMatrix:
    S = codebook.signature_matrix(active_users)
    R = S.T @ S
    R = 0.5 * (R + R.T)
    return CorrelationMatrix(R=R, min_eigenvalue=float(np.linalg.eigvalsh(R)[0]))


def cyclic_cross_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unnormalized periodic cross-correlation of two +-1 sequences at every shift."""
    return np.array([np.dot(a, np.roll(b, -k)) for k in range(len(a))])
