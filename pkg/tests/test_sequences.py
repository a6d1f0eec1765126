import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rsbilliard.rng import make_rng
from rsbilliard.sequences import (
    SequenceModel, check_irreducible_aperiodic, draw_sequence, markov_rho, shift_average,
    stationary_distribution,
)

EPS = 0.01
STATES = [[0.008, 0.0], [-0.004, 0.006]]


def test_fixed_sequence_is_constant():
    seq = draw_sequence(SequenceModel.fixed([0.003, -0.004], EPS), 50)
    assert np.all(seq == [0.003, -0.004])


def test_iid_draws_are_uniform_on_disk():
    seq = draw_sequence(SequenceModel.iid(EPS, seed=2), 20_000)
    rad = np.hypot(seq[:, 0], seq[:, 1])
    assert rad.max() <= EPS
    se = seq.std(axis=0) / math.sqrt(len(seq))
    assert np.all(np.abs(seq.mean(axis=0)) < 3 * se)
    assert stats.kstest(rad, lambda x: (x / EPS) ** 2).pvalue > 1e-3


def test_independent_markov_chain_decorrelates():
    m = SequenceModel.markov(STATES, [[0.5, 0.5], [0.5, 0.5]], EPS, seed=3)
    seq = draw_sequence(m, 20_000)
    x = seq[:, 0]
    r = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(r) < 3 / math.sqrt(len(x))
    assert markov_rho([[0.5, 0.5], [0.5, 0.5]], 1) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("k", [0, 1, 2, 5, 10])
def test_markov_rho_symmetric_chain(k):
    assert markov_rho([[0.9, 0.1], [0.1, 0.9]], k) == pytest.approx(0.8 ** k, rel=1e-10)


def test_markov_rho_asymmetric_against_correlation():
    P = np.array([[0.6, 0.4], [0.1, 0.9]])
    pi = stationary_distribution(P)
    # two states: the maximal correlation is the correlation of the indicator
    f = np.array([1.0, 0.0])
    mean = pi @ f
    var = pi @ (f - mean) ** 2
    k = 3
    cov = (pi * (f - mean)) @ np.linalg.matrix_power(P, k) @ (f - mean)
    assert markov_rho(P, k) == pytest.approx(abs(cov / var), rel=1e-10)


def test_stationary_distribution():
    pi = stationary_distribution([[0.6, 0.4], [0.1, 0.9]])
    assert pi == pytest.approx([0.2, 0.8])


@pytest.mark.parametrize("P", [[[0, 1], [1, 0]], [[1, 0], [0, 1]], [[0.5, 0.6], [0.5, 0.5]]])
def test_bad_transition_matrices(P):
    with pytest.raises(ValueError):
        check_irreducible_aperiodic(P)


def test_model_validation():
    with pytest.raises(ValueError):
        SequenceModel.fixed([0.02, 0.0], EPS)
    with pytest.raises(ValueError):
        SequenceModel.markov(STATES, [[1.0]], EPS)
    with pytest.raises(ValueError):
        SequenceModel.markov_nonstationary(STATES, [[0.7, 0.3], [0.3, 0.7]], [0.5, 0.5], EPS)


def test_shift_average_examples():
    assert shift_average([2.0] * 10, 7) == 2.0
    vals = np.zeros(10_000)
    vals[0] = 1.0
    assert shift_average(vals, 10_000) == pytest.approx(1e-4)
    with pytest.raises(ValueError):
        shift_average([1.0], 2)


def test_stationary_pair_law_is_shift_invariant():
    m = SequenceModel.markov(STATES, [[0.7, 0.3], [0.3, 0.7]], EPS, seed=4)
    s = m.sampler(40_000)
    seq = np.stack([s.next_states() for _ in range(12)])
    a = (seq[1] == 0) & (seq[3] == 1)
    b = (seq[9] == 0) & (seq[11] == 1)
    se = math.sqrt(2 * 0.25 / 40_000)
    assert abs(a.mean() - b.mean()) < 3 * se


def test_nonstationary_cesaro_limit():
    m = SequenceModel.markov_nonstationary(STATES, [[0.7, 0.3], [0.3, 0.7]], [1.0, 0.0], EPS)
    laws = np.array([m.state_law(n) for n in range(400)])
    ces = np.cumsum(laws[:, 0]) / np.arange(1, 401)
    # P(state 0 at n) = 1/2 + 0.4**n / 2, so the Cesaro mean is explicit
    assert ces[-1] == pytest.approx(0.5 + 0.5 * (1 - 0.4 ** 400) / 0.6 / 400, rel=1e-12)
    assert abs(ces[-1] - 0.5) < abs(ces[9] - 0.5)


def test_states_stay_admissible():
    for m in (SequenceModel.iid(EPS, 1), SequenceModel.markov(STATES, [[0.7, 0.3], [0.3, 0.7]], EPS)):
        c = m.sampler(5000).take(20)
        assert np.all(np.hypot(c[..., 0], c[..., 1]) <= EPS)


def test_streams_are_uncorrelated():
    m = SequenceModel.iid(EPS, seed=5)
    a = draw_sequence(m, 20_000, stream=1)[:, 0]
    b = draw_sequence(m, 20_000, stream=2)[:, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) < 3 / math.sqrt(20_000)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), stream=st.integers(0, 1000))
def test_rng_reproducible(seed, stream):
    assert make_rng(seed, stream).random() == make_rng(seed, stream).random()
    assert make_rng(seed, stream).random() != make_rng(seed, stream + 1).random()
