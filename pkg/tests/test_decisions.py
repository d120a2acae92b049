from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erskit.decisions import (
    DecisionConfig,
    SearchOutcome,
    identify,
    identify_with_ers,
    verify,
    verify_with_ers,
)
from erskit.embedding import normalize, normalize_rows
from erskit.errors import DimensionMismatchError, EmptyInputError
from erskit.ers import ErsValue

from oracles import brute_argmax

E1 = np.array([1.0, 0.0])


def at_similarity(s):
    """Unit vector whose dot product with E1 is exactly ``s``."""
    return np.array([s, math.sqrt(1.0 - s * s)])


def ers(x):
    return ErsValue(x, x)


@pytest.mark.parametrize("s, expected", [(0.9, True), (0.5, True), (0.49, False)])
def test_verify_examples(s, expected):
    assert verify(E1, at_similarity(s), DecisionConfig(tau=0.5)) is expected


@pytest.mark.parametrize(
    "s, e1, e2, expected",
    [
        (0.9, 0.95, 0.95, True),
        (0.9, 0.95, 0.5, False),
        (0.4, 1.0, 1.0, False),
        (0.9, 0.6, 0.6, True),  # gate is inclusive
    ],
)
def test_verify_with_ers_examples(s, e1, e2, expected):
    cfg = DecisionConfig(tau=0.5, gamma=0.6)
    assert verify_with_ers(E1, at_similarity(s), ers(e1), ers(e2), cfg) is expected
    assert verify_with_ers(E1, at_similarity(s), e1, e2, cfg) is expected


def test_verify_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        verify(E1, normalize((1, 0, 0)), DecisionConfig())


def test_config_validation_and_defaults():
    cfg = DecisionConfig()
    assert cfg.gamma == 0.60 and cfg.gate_gallery is False
    with pytest.raises(ValueError):
        DecisionConfig(tau=1.5)
    with pytest.raises(ValueError):
        DecisionConfig(gamma=-0.1)


def test_search_outcome_invariant():
    with pytest.raises(ValueError):
        SearchOutcome(True, None, 0.9)
    with pytest.raises(ValueError):
        SearchOutcome(False, 2, 0.9)
    assert SearchOutcome(False, None, 0.1).label == 0
    assert SearchOutcome(True, 3, 0.9).label == 3


def test_identify_examples():
    q = normalize((1, 0, 0))
    out = identify(q, [q, normalize((0, 1, 0))], DecisionConfig(tau=0.5))
    assert out == SearchOutcome(True, 1, 1.0)
    out = identify(q, [normalize((0, 1, 0)), normalize((0, 0, 1))], DecisionConfig(tau=0.5))
    assert not out.matched and out.gallery_index is None
    with pytest.raises(EmptyInputError):
        identify(q, [], DecisionConfig())
    with pytest.raises(DimensionMismatchError):
        identify(q, [E1], DecisionConfig())


def test_identify_ties_pick_lowest_index():
    q = normalize((1, 1))
    g = [normalize((1, 0)), normalize((0, 1)), normalize((1, 0))]
    assert identify(q, g, DecisionConfig(tau=0.0)).gallery_index == 1


def test_identify_matches_exhaustive_scan():
    rng = np.random.default_rng(21)
    means = normalize_rows(rng.standard_normal((10, 16)))
    gallery = normalize_rows(means + 0.3 * rng.standard_normal((10, 16)) / 4)
    queries = normalize_rows(means[rng.integers(0, 10, 100)] + 0.8 * rng.standard_normal((100, 16)) / 4)
    cfg = DecisionConfig(tau=0.7)
    for q in queries:
        j, s = brute_argmax(q, gallery)
        out = identify(q, gallery, cfg)
        assert out.best_similarity == pytest.approx(s, abs=1e-12)
        assert out.matched == (s >= cfg.tau)
        if out.matched:
            assert out.gallery_index == j + 1


def test_identify_with_ers_query_gate():
    q = normalize((1, 0))
    g = [q]
    cfg = DecisionConfig(tau=0.5, gamma=0.6)
    assert not identify_with_ers(q, 0.3, g, None, cfg).matched
    assert identify_with_ers(q, 0.95, g, None, cfg) == identify(q, g, cfg)


def test_gallery_gate_falls_back_to_next_best():
    q = normalize((1, 0, 0))
    g = normalize_rows([[1, 0.05, 0], [1, 0.2, 0], [0, 1, 0]])
    g_ers = [ers(0.2), ers(0.9), ers(0.9)]
    cfg = DecisionConfig(tau=0.5, gamma=0.6, gate_gallery=True)
    out = identify_with_ers(q, ers(0.95), g, g_ers, cfg)
    j, s = brute_argmax(q, g, [e.capped >= 0.6 for e in g_ers])
    assert out.gallery_index == j + 1 == 2
    assert out.best_similarity == pytest.approx(s)
    # without the gallery gate the low-ERS entry wins
    assert identify_with_ers(q, ers(0.95), g, g_ers, DecisionConfig(tau=0.5)).gallery_index == 1


def test_gallery_gate_all_excluded():
    q = normalize((1, 0))
    cfg = DecisionConfig(tau=0.5, gate_gallery=True)
    out = identify_with_ers(q, 1.0, [q, q], [0.1, 0.2], cfg)
    assert out == SearchOutcome(False, None, -math.inf)
    with pytest.raises(ValueError):
        identify_with_ers(q, 1.0, [q], None, cfg)
    with pytest.raises(ValueError):
        identify_with_ers(q, 1.0, [q], [0.9, 0.9], cfg)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.floats(0.0, 1.0))
def test_filtered_argmax_matches_oracle(seed, n, gamma):
    rng = np.random.default_rng(seed)
    d = 6
    G = normalize_rows(rng.standard_normal((n, d)))
    q = normalize(rng.standard_normal(d))
    g_ers = rng.random(n).tolist()
    e_q = float(rng.random())
    tau = float(rng.uniform(-1, 1))
    cfg = DecisionConfig(tau=tau, gamma=gamma, gate_gallery=True)
    out = identify_with_ers(q, e_q, G, g_ers, cfg)
    j, s = brute_argmax(q, G, [e >= gamma for e in g_ers])
    expected = j is not None and s >= tau and e_q >= gamma
    assert out.matched == expected
    if expected:
        assert out.gallery_index == j + 1
    if j is None:
        assert out.best_similarity == -math.inf
    else:
        assert out.best_similarity == pytest.approx(s, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1, 1), st.floats(0, 1))
def test_gating_only_removes_acceptances(seed, tau, gamma):
    rng = np.random.default_rng(seed)
    a, b = normalize_rows(rng.standard_normal((2, 4)))
    e1, e2 = rng.random(2)
    cfg = DecisionConfig(tau=tau, gamma=gamma)
    if verify_with_ers(a, b, e1, e2, cfg):
        assert verify(a, b, cfg)
    zero = DecisionConfig(tau=tau, gamma=0.0)
    assert verify_with_ers(a, b, e1, e2, zero) == verify(a, b, zero)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1))
def test_thresholds_are_monotone(seed, t1, t2, g1, g2):
    rng = np.random.default_rng(seed)
    a, b = normalize_rows(rng.standard_normal((2, 4)))
    e1, e2 = rng.random(2)
    lo = DecisionConfig(tau=min(t1, t2), gamma=min(g1, g2))
    hi = DecisionConfig(tau=max(t1, t2), gamma=max(g1, g2))
    if verify_with_ers(a, b, e1, e2, hi):
        assert verify_with_ers(a, b, e1, e2, lo)
    if verify(a, b, hi):
        assert verify(a, b, lo)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.floats(-1, 1))
def test_zero_gamma_search_equals_plain(seed, n, tau):
    rng = np.random.default_rng(seed)
    G = normalize_rows(rng.standard_normal((n, 5)))
    q = normalize(rng.standard_normal(5))
    g_ers = rng.random(n).tolist()
    plain = identify(q, G, DecisionConfig(tau=tau))
    for gate in (False, True):
        cfg = DecisionConfig(tau=tau, gamma=0.0, gate_gallery=gate)
        assert identify_with_ers(q, float(rng.random()), G, g_ers, cfg) == plain


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.floats(-1, 1))
def test_identify_permutation_invariant(seed, n, tau):
    rng = np.random.default_rng(seed)
    G = normalize_rows(rng.standard_normal((n, 5)))
    q = normalize(rng.standard_normal(5))
    perm = rng.permutation(n)
    a = identify(q, G, DecisionConfig(tau=tau))
    b = identify(q, G[perm], DecisionConfig(tau=tau))
    assert a.matched == b.matched
    assert a.best_similarity == pytest.approx(b.best_similarity, abs=1e-12)
