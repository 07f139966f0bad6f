import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posix_index.errors import InvalidMatrixError, NoDataError, SetTooSmallError
from posix_index.sensitivity import (
    LogLikelihoodMatrix,
    SensitivityScore,
    aggregate,
    clamp_logprobs,
    compute_posix,
    compute_psi,
)

THREE = [[-1.0, -2.4, -0.9], [-1.6, -2.0, -0.7], [-1.2, -2.6, -0.5]]


def psi(entries, lengths):
    return compute_psi(LogLikelihoodMatrix(entries, lengths)).psi


def test_constant_columns_give_zero():
    assert psi([[-1.0, -2.0, -3.0]] * 3, [1, 1, 1]) == 0.0


def test_two_by_two():
    e = [[math.log(0.5), math.log(0.25)], [math.log(0.25), math.log(0.5)]]
    assert psi(e, [1, 1]) == pytest.approx(math.log(2), abs=1e-12)


def test_three_by_three():
    assert psi(THREE, [1, 2, 1]) == pytest.approx(19 / 60, abs=1e-12)


def test_constant_shift():
    shifted = [[v - 3.7 for v in row] for row in THREE]
    assert psi(shifted, [1, 2, 1]) == pytest.approx(19 / 60, abs=1e-12)


def test_too_small_and_non_finite():
    with pytest.raises(SetTooSmallError):
        psi([[-1.0]], [1])
    with pytest.raises(InvalidMatrixError):
        psi([[-1.0, float("nan")], [-1.0, -1.0]], [1, 1])
    with pytest.raises(InvalidMatrixError):
        psi([[-1.0, -math.inf], [-1.0, -1.0]], [1, 1])


def test_matrix_validation():
    with pytest.raises(ValueError):
        LogLikelihoodMatrix([[-1.0, -2.0]], [1, 1])
    with pytest.raises(ValueError):
        LogLikelihoodMatrix([[-1.0, -2.0], [-1.0, -2.0]], [1, 0])


def test_matrix_is_read_only_and_round_trips():
    m = LogLikelihoodMatrix(THREE, [1, 2, 1], clamped_cells=2)
    with pytest.raises(ValueError):
        m.entries[0, 0] = 0.0
    again = LogLikelihoodMatrix.from_dict(m.to_dict())
    assert np.array_equal(again.entries, m.entries)
    assert again.lengths == m.lengths and again.clamped_cells == 2


def test_clamp_logprobs():
    values, count = clamp_logprobs([-1.0, -math.inf, -250.0, -100.0])
    assert values == [-1.0, -100.0, -100.0, -100.0]
    assert count == 2


def test_posix_examples():
    assert compute_posix([SensitivityScore(0.0, 3)]).posix == 0.0
    res = compute_posix([SensitivityScore(math.log(2), 2), SensitivityScore(19 / 60, 3)])
    assert res.posix == pytest.approx(0.504907, abs=1e-6)
    res = compute_posix([SensitivityScore(0.5, 3), SensitivityScore(9.9, 3, degenerate=True)])
    assert res.posix == 0.5 and res.m == 1 and res.excluded == 1


def test_posix_no_data():
    with pytest.raises(NoDataError):
        compute_posix([])
    with pytest.raises(NoDataError):
        compute_posix([SensitivityScore(1.0, 3, degenerate=True)])


def test_aggregate_examples():
    st1 = aggregate([1.0, 1.0, 1.0])
    assert (st1.mean, st1.std, st1.quartiles) == (1.0, 0.0, (1.0,) * 5)
    st2 = aggregate([0.0, 1.0])
    assert (st2.mean, st2.std) == (0.5, 0.5)
    st3 = aggregate([3.0])
    assert st3.quartiles == (3.0,) * 5 and st3.std == 0.0
    assert aggregate([1.0, 2.0, 3.0, 4.0]).quartiles == (1.0, 1.75, 2.5, 3.25, 4.0)
    with pytest.raises(NoDataError):
        aggregate([])


finite = st.floats(min_value=-50, max_value=0, allow_nan=False)


@st.composite
def matrices(draw, max_n=6):
    n = draw(st.integers(2, max_n))
    entries = [[draw(finite) for _ in range(n)] for _ in range(n)]
    lengths = [draw(st.integers(1, 30)) for _ in range(n)]
    return entries, lengths


@settings(max_examples=200, deadline=None)
@given(matrices())
def test_psi_non_negative(m):
    assert psi(*m) >= 0.0


@settings(max_examples=200, deadline=None)
@given(matrices())
def test_psi_zero_when_rows_equal(m):
    entries, lengths = m
    same = [list(entries[0]) for _ in entries]
    assert psi(same, lengths) == 0.0


@settings(max_examples=100, deadline=None)
@given(matrices(), st.data())
def test_psi_permutation_invariant(m, data):
    entries, lengths = m
    n = len(lengths)
    perm = data.draw(st.permutations(range(n)))
    permuted = [[entries[perm[i]][perm[j]] for j in range(n)] for i in range(n)]
    assert psi(permuted, [lengths[p] for p in perm]) == pytest.approx(psi(entries, lengths), abs=1e-12)
