from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from erskit.embedding import (
    Dataset,
    LabeledEmbedding,
    chordal_distance,
    cosine_matrix,
    cosine_similarity,
    mean_direction,
    normalize,
    normalize_rows,
)
from erskit.errors import ConstructionError, DegenerateError, DimensionMismatchError, EmptyInputError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def unit_pairs(d_min=1, d_max=12):
    def build(d):
        vec = arrays(np.float64, d, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3).map(normalize)
        return st.tuples(vec, vec)

    return st.integers(d_min, d_max).flatmap(build)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ((3, 4), (0.6, 0.8)),
        ((1, 0, 0), (1, 0, 0)),
        ((0, -2), (0, -1)),
    ],
)
def test_normalize_examples(raw, expected):
    assert np.allclose(normalize(raw), expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("raw", [(0, 0), (), (1.0, np.nan), (np.inf, 1.0)])
def test_normalize_rejects(raw):
    with pytest.raises(ConstructionError):
        normalize(raw)


def test_normalized_vectors_are_read_only():
    v = normalize((1.0, 2.0))
    with pytest.raises(ValueError):
        v[0] = 3.0


def test_normalize_rows_names_bad_row():
    with pytest.raises(ConstructionError, match="row 1"):
        normalize_rows([[1.0, 0.0], [0.0, 0.0]])


def test_similarity_and_distance_examples():
    a = normalize((1, 0, 0))
    b = normalize((0, 1, 0))
    assert cosine_similarity(a, a) == 1.0
    assert cosine_similarity(a, b) == 0.0
    assert cosine_similarity(a, -a) == -1.0
    assert chordal_distance(a, a) == 0.0
    assert chordal_distance(a, b) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert chordal_distance(a, -a) == 2.0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        cosine_similarity(normalize((1, 0)), normalize((1, 0, 0)))
    with pytest.raises(DimensionMismatchError):
        chordal_distance(normalize((1, 0)), normalize((1, 0, 0)))


def test_similarity_is_clamped():
    # slightly over-long vectors can push the raw dot product past 1
    a = np.array([1.0 + 1e-12, 0.0])
    assert cosine_similarity(a, a) == 1.0
    assert cosine_matrix(a, a)[0, 0] == 1.0


@pytest.mark.parametrize(
    "vectors, expected",
    [
        ([(1, 0)], (1, 0)),
        ([(1, 0), (0, 1)], (math.sqrt(2) / 2, math.sqrt(2) / 2)),
    ],
)
def test_mean_direction_examples(vectors, expected):
    assert np.allclose(mean_direction(np.array(vectors, dtype=float)), expected, atol=1e-12)


def test_mean_direction_errors():
    with pytest.raises(DegenerateError):
        mean_direction(np.array([(1.0, 0.0), (-1.0, 0.0)]))
    with pytest.raises(EmptyInputError):
        mean_direction([])


@settings(max_examples=200, deadline=None)
@given(unit_pairs())
def test_chordal_squared_matches_cosine(pair):
    a, b = pair
    assert abs(chordal_distance(a, b) ** 2 - (2 - 2 * cosine_similarity(a, b))) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(unit_pairs())
def test_similarity_symmetric_and_reflexive(pair):
    a, b = pair
    assert cosine_similarity(a, b) == cosine_similarity(b, a)
    assert cosine_similarity(a, a) == pytest.approx(1.0, abs=1e-12)
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_mean_direction_order_and_duplication(d, n, seed):
    rng = np.random.default_rng(seed)
    V = normalize_rows(rng.standard_normal((n, d)))
    m = np.sum(V, axis=0)
    if np.linalg.norm(m) < 1e-3:
        return
    base = mean_direction(V)
    assert np.allclose(mean_direction(V[rng.permutation(n)]), base, atol=1e-12)
    assert np.allclose(mean_direction(np.vstack([V, V])), base, atol=1e-12)


def test_dataset_rejects_duplicates_and_normalizes():
    with pytest.raises(ConstructionError, match="duplicate"):
        Dataset(ids=["a", "a"], vectors=[[1.0, 0.0], [0.0, 1.0]])
    ds = Dataset(ids=["a", "b"], vectors=[[3.0, 4.0], [0.0, 2.0]], subjects=["x", "y"])
    assert np.allclose(ds.vector("a"), (0.6, 0.8))
    assert ds.subject("b") == "y"
    assert ds.media_of("b") is None
    with pytest.raises(KeyError):
        ds.index("zzz")


def test_dataset_round_trips_records():
    recs = [
        LabeledEmbedding("x1", normalize((1, 2)), "s", "m1"),
        LabeledEmbedding("x2", normalize((2, 1)), "t", None),
    ]
    ds = Dataset.from_records(recs)
    back = ds.records()
    assert [r.item_id for r in back] == ["x1", "x2"]
    assert back[0].media_id == "m1" and back[1].subject_id == "t"
    sub = ds.subset(["x2"])
    assert sub.ids == ["x2"] and np.array_equal(sub.vectors[0], ds.vector("x2"))
