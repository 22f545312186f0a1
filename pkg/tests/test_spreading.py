import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpacdma.errors import ConfigurationError
from fpacdma.spreading import (
    PREFERRED_PAIRS,
    correlation_matrix,
    cyclic_cross_correlation,
    generate_gold_family,
    lfsr_period,
    lfsr_sequence,
)

# t(m) = 1 + 2^floor((m+2)/2); cross-correlations take values {-t, -1, t-2}
def gold_values(m):
    t = 1 + 2 ** ((m + 2) // 2)
    return {-t, -1, t - 2}


@pytest.mark.parametrize("m", [5, 6, 7])
def test_family_size_and_length(m):
    cb = generate_gold_family(m)
    assert cb.family_size == 2**m + 1
    assert cb.chip_length == 2**m - 1
    assert set(np.unique(cb.family)) <= {0, 1}


@pytest.mark.parametrize("m", [5, 6, 7])
def test_preferred_pair_polynomials_are_primitive(m):
    for poly in PREFERRED_PAIRS[m]:
        assert lfsr_period(poly, m) == 2**m - 1


def test_m_sequence_balance():
    seq = lfsr_sequence(0o45, 5)
    # an m-sequence of period 31 has 16 ones and 15 zeros
    assert seq.sum() == 16
    chips = 1.0 - 2.0 * seq
    auto = cyclic_cross_correlation(chips, chips)
    assert auto[0] == 31
    assert np.all(auto[1:] == -1)


@pytest.mark.parametrize("m", [5, 6])
def test_three_valued_cross_correlation(m):
    cb = generate_gold_family(m)
    chips = cb.chips
    seen = set()
    for i, j in itertools.combinations(range(cb.family_size), 2):
        seen.update(cyclic_cross_correlation(chips[i], chips[j]).astype(int).tolist())
    assert seen <= gold_values(m)
    assert seen == gold_values(m)


def test_three_valued_degree7_sampled():
    cb = generate_gold_family(7)
    chips = cb.chips
    pairs = [(0, 1), (0, 5), (3, 40), (17, 100), (2, 128)]
    for i, j in pairs:
        assert set(cyclic_cross_correlation(chips[i], chips[j]).astype(int)) <= gold_values(7)


def test_signatures_unit_norm(gold5):
    S = gold5.signatures
    assert np.allclose(np.sum(S**2, axis=0), 1.0)


def test_correlation_matrix_properties(gold5):
    cm = correlation_matrix(gold5, 10)
    R = cm.R
    assert np.allclose(np.diag(R), 1.0)
    assert np.array_equal(R, R.T)
    assert cm.min_eigenvalue > 0
    assert cm.min_eigenvalue == pytest.approx(np.linalg.eigvalsh(R)[0])
    # zero-shift correlations are multiples of 1/31 from the three-valued set
    off = np.round(R[np.triu_indices(10, 1)] * 31).astype(int)
    assert set(off) <= {-9, -1, 7}


def test_family_order_is_deterministic():
    a = generate_gold_family(5)
    b = generate_gold_family(5)
    assert np.array_equal(a.family, b.family)
    u = lfsr_sequence(0o45, 5)
    v = lfsr_sequence(0o75, 5)
    assert np.array_equal(a.family[0], u)
    assert np.array_equal(a.family[1], v)
    assert np.array_equal(a.family[2], u ^ v)


def test_bad_degree_rejected():
    with pytest.raises(ConfigurationError):
        generate_gold_family(4)


def test_non_primitive_polynomial_rejected():
    # x^5 + x^4 + x + 1 = (x + 1)(x^4 + 1) is reducible
    with pytest.raises(ConfigurationError):
        generate_gold_family(5, preferred_pair=(0o63, 0o75))


def test_signature_matrix_range(gold5):
    assert gold5.signature_matrix(33).shape == (31, 33)
    with pytest.raises(ConfigurationError):
        gold5.signature_matrix(34)
    with pytest.raises(ConfigurationError):
        gold5.signature_matrix(0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 33))
def test_correlation_psd_for_any_prefix(u):
    cm = correlation_matrix(generate_gold_family(5), u)
    assert cm.min_eigenvalue > -1e-12
    assert cm.num_users == u
