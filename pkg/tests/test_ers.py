from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from erskit.cluster import UiModel
from erskit.embedding import Dataset, LabeledEmbedding, normalize, normalize_rows
from erskit.errors import DegenerateError, DimensionMismatchError
from erskit.ers import ErsValue, batch_ers, compute_ers, enhance_embedding, enhance_rows, ers_arrays
from erskit.synthetic import gen_degradation, make_rng

UI = UiModel(normalize((1.0, 0.0, 0.0)), 100)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 24)


def random_pair(seed, d):
    rng = np.random.default_rng(seed)
    return normalize(rng.standard_normal(d)), normalize(rng.standard_normal(d))


@pytest.mark.parametrize(
    "f, capped, raw",
    [
        ((1.0, 0.0, 0.0), 0.0, 0.0),
        ((0.0, 1.0, 0.0), 1.0, 1.0),
        ((-1.0, 0.0, 0.0), 1.0, 2.0),
        ((0.4, np.sqrt(1 - 0.16), 0.0), 0.6, 0.6),
    ],
)
def test_compute_ers_examples(f, capped, raw):
    e = compute_ers(np.array(f), UI)
    assert e.capped == pytest.approx(capped, abs=1e-9)
    assert e.raw == pytest.approx(raw, abs=1e-9)


def test_compute_ers_accepts_bare_centroid_and_checks_dims():
    assert compute_ers(normalize((0, 1, 0)), UI.centroid) == ErsValue(1.0, 1.0)
    with pytest.raises(DimensionMismatchError):
        compute_ers(normalize((1, 0)), UI)


def test_enhance_examples():
    f = normalize((0.0, 0.0, 1.0))
    assert np.array_equal(enhance_embedding(f, UI), f)
    assert np.allclose(enhance_embedding(np.array([0.6, 0.8, 0.0]), UI), (0.0, 1.0, 0.0), atol=1e-12)
    with pytest.raises(DegenerateError):
        enhance_embedding(UI.centroid, UI)
    with pytest.raises(DegenerateError):
        enhance_embedding(-UI.centroid, UI)
    with pytest.raises(DimensionMismatchError):
        enhance_embedding(normalize((1, 0)), UI)


def test_batch_ers_examples():
    assert batch_ers([], UI) == []
    out = batch_ers([LabeledEmbedding("u", UI.centroid)], UI)
    assert out == [("u", ErsValue(0.0, 0.0))]


def test_batch_ers_preserves_order_and_matches_scalar():
    rng = np.random.default_rng(3)
    ds = Dataset([f"k{j}" for j in range(20)][::-1], rng.standard_normal((20, 3)))
    out = batch_ers(ds, UI)
    assert [i for i, _ in out] == ds.ids
    for (item, e) in out:
        ref = compute_ers(ds.vector(item), UI)
        assert e.raw == pytest.approx(ref.raw, abs=1e-12)
        assert e.capped == pytest.approx(ref.capped, abs=1e-12)


def test_degradation_trajectory_lowers_ers():
    rng = make_rng(5)
    d = 32
    ui = normalize(rng.standard_normal(d))
    for _ in range(20):
        f = normalize(rng.standard_normal(d))
        levels = np.linspace(0.0, 1.0, 11)
        # direct evaluation along the path, independent of compute_ers
        traj = [gen_degradation(f, ui, t) for t in levels]
        expected = [min(1.0, 1.0 - float(np.dot(ui, g))) for g in traj]
        got = [e.capped for _, e in batch_ers(Dataset([str(k) for k in range(11)], np.stack(traj)), ui)]
        assert np.allclose(got, expected, atol=1e-12)
        raw = [1.0 - float(np.dot(ui, g)) for g in traj]
        assert all(b < a for a, b in zip(raw, raw[1:]))
        assert all(b <= a for a, b in zip(got, got[1:]))


@settings(max_examples=200, deadline=None)
@given(seeds, dims)
def test_enhanced_embedding_has_raw_ers_one(seed, d):
    f, c = random_pair(seed, d)
    assume(abs(float(f @ c)) < 0.999)
    g = enhance_embedding(f, c)
    assert compute_ers(g, c).raw == pytest.approx(1.0, abs=1e-9)
    assert np.linalg.norm(g) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(seeds, dims)
def test_enhancement_idempotent(seed, d):
    f, c = random_pair(seed, d)
    assume(abs(float(f @ c)) < 0.999)
    once = enhance_embedding(f, c)
    assert np.allclose(enhance_embedding(once, c), once, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(seeds, dims)
def test_ers_rotation_invariant(seed, d):
    f, c = random_pair(seed, d)
    Q, _ = np.linalg.qr(np.random.default_rng(seed + 1).standard_normal((d, d)))
    a = compute_ers(f, c)
    b = compute_ers(Q @ f, normalize(Q @ c))
    assert b.raw == pytest.approx(a.raw, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(seeds, dims)
def test_ers_ranges(seed, d):
    f, c = random_pair(seed, d)
    e = compute_ers(f, c)
    assert 0.0 <= e.capped <= 1.0
    assert 0.0 <= e.raw <= 2.0
    assert e.capped == min(e.raw, 1.0)


def test_vectorized_helpers_agree_with_scalar():
    rng = np.random.default_rng(9)
    X = normalize_rows(rng.standard_normal((15, 3)))
    capped, raw = ers_arrays(X, UI)
    E = enhance_rows(X, UI)
    for k in range(15):
        e = compute_ers(X[k], UI)
        assert capped[k] == pytest.approx(e.capped, abs=1e-12)
        assert raw[k] == pytest.approx(e.raw, abs=1e-12)
        assert np.allclose(E[k], enhance_embedding(X[k], UI))
    with pytest.raises(DimensionMismatchError):
        ers_arrays(X[:, :2], UI)
