from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import nnls

from erskit.aggregation import (
    Template,
    TemplateMember,
    TemplateSpec,
    WeightingStrategy,
    aggregate,
    build_template,
    compute_weights,
    media_groups,
    media_pool,
)
from erskit.cluster import UiModel
from erskit.embedding import Dataset, mean_direction, normalize, normalize_rows
from erskit.errors import DegenerateError, DimensionMismatchError, EmptyInputError
from erskit.ers import ErsValue, compute_ers

from oracles import two_stage_pool, weighted_mean_direction

WEIGHTED = ("identity", "square", "softmax")
ALL = [WeightingStrategy(k) for k in ("identity", "square", "softmax", "top_one", "uniform")] + [
    WeightingStrategy("top_fraction", 0.1),
    WeightingStrategy("top_fraction", 0.5),
]


def template(vectors, ers_values, media=None, tid="t"):
    media = media or [None] * len(vectors)
    members = [
        TemplateMember(normalize(v), ErsValue(e, e), m) for v, e, m in zip(vectors, ers_values, media)
    ]
    return Template(tid, "s", members)


def random_template(seed, n, d=5):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal(d)
    V = normalize_rows(base + 0.7 * rng.standard_normal((n, d)))
    e = rng.uniform(0.05, 1.0, n)
    return V, e


@pytest.mark.parametrize(
    "ers_values, kind, expected",
    [
        ([0.5, 0.5], "identity", [0.5, 0.5]),
        ([0.2, 0.8], "top_one", [0.0, 1.0]),
        ([0.3, 0.6, 0.9], "square", [0.09, 0.36, 0.81]),
        ([0.7, 0.7, 0.1], "top_one", [1.0, 0.0, 0.0]),
        ([0.1, 0.2], "uniform", [1.0, 1.0]),
    ],
)
def test_weights_examples(ers_values, kind, expected):
    assert compute_weights(ers_values, WeightingStrategy(kind)) == pytest.approx(expected, abs=1e-12)


def test_softmax_weights():
    w = compute_weights([0.0, 1.0], WeightingStrategy("softmax"))
    z = math.exp(0) + math.exp(1)
    assert w == pytest.approx([1 / z, math.e / z], abs=1e-12)


@pytest.mark.parametrize(
    "n, p, count",
    [(10, 0.1, 1), (11, 0.1, 2), (3, 0.1, 1), (20, 0.1, 2), (4, 0.5, 2), (5, 1.0, 5)],
)
def test_top_fraction_counts(n, p, count):
    e = np.linspace(0.1, 0.9, n)[::-1]
    w = compute_weights(e.tolist(), WeightingStrategy("top_fraction", p))
    assert sum(w) == count
    assert w[:count] == [1.0] * count


def test_weights_accept_ers_values_and_reject_empty():
    assert compute_weights([ErsValue(0.5, 0.5)], WeightingStrategy("square")) == [0.25]
    with pytest.raises(EmptyInputError):
        compute_weights([], WeightingStrategy("square"))


@pytest.mark.parametrize("text", ["bogus", "top_fraction", "top_fraction:0", "top_fraction:1.5", "square:0.2"])
def test_strategy_validation(text):
    with pytest.raises(ValueError):
        WeightingStrategy.parse(text)


def test_strategy_parse_round_trip():
    for s in ALL:
        assert WeightingStrategy.parse(str(s)) == s
    assert WeightingStrategy() == WeightingStrategy("square")


@pytest.mark.parametrize("strategy", ALL, ids=str)
def test_singleton_template(strategy):
    t = template([(1, 2, 3)], [0.7])
    res = aggregate(t, strategy)
    assert np.allclose(res.embedding, normalize((1, 2, 3)), atol=1e-12)
    assert res.ers == pytest.approx(0.7)


@pytest.mark.parametrize("strategy", ALL, ids=str)
def test_identical_members(strategy):
    t = template([(1, -1, 0)] * 4, [0.2, 0.9, 0.5, 0.7])
    assert np.allclose(aggregate(t, strategy).embedding, normalize((1, -1, 0)), atol=1e-12)


def test_square_weighted_mean_matches_hand_computation():
    V = [(1.0, 0.0, 0.0), (0.6, 0.8, 0.0), (0.0, 0.6, 0.8)]
    e = [0.9, 0.5, 0.2]
    res = aggregate(template(V, e), WeightingStrategy("square"))
    ref = weighted_mean_direction([normalize(v) for v in V], [x * x for x in e])
    assert np.allclose(res.embedding, ref, rtol=0, atol=1e-9)
    assert res.ers == pytest.approx(sum(e) / 3, abs=1e-12)


def test_aggregate_ers_uses_capped_values():
    members = [
        TemplateMember(normalize((1, 0)), ErsValue(1.0, 1.8)),
        TemplateMember(normalize((0, 1)), ErsValue(0.5, 0.5)),
    ]
    assert aggregate(Template("t", None, members), WeightingStrategy("square")).ers == 0.75


def test_degenerate_aggregates():
    with pytest.raises(DegenerateError):
        aggregate(template([(1, 0), (0, 1)], [0.0, 0.0]), WeightingStrategy("identity"))
    with pytest.raises(DegenerateError):
        aggregate(template([(1, 0), (-1, 0)], [0.5, 0.5]), WeightingStrategy("square"))


def test_template_validation():
    with pytest.raises(EmptyInputError):
        Template("t", "s", [])
    with pytest.raises(DimensionMismatchError):
        template([(1, 0), (1, 0, 0)], [0.5, 0.5])


def test_media_groups_order_and_solo_members():
    t = template([(1, 0)] * 5, [0.5] * 5, media=["b", None, "a", "b", None])
    assert media_groups(t) == [[0, 3], [1], [2], [4]]


@pytest.mark.parametrize("strategy", ALL, ids=str)
def test_media_pool_one_group_is_uniform_average(strategy):
    V, e = random_template(1, 6)
    t = template(V, e, media=["m"] * 6)
    pooled = media_pool(t, strategy)
    plain = aggregate(t, WeightingStrategy("uniform"))
    assert np.allclose(pooled.embedding, plain.embedding, atol=1e-12)
    assert pooled.ers == pytest.approx(plain.ers, abs=1e-12)


@pytest.mark.parametrize("strategy", ALL, ids=str)
def test_media_pool_singleton_groups_is_aggregate(strategy):
    V, e = random_template(2, 6)
    for media in ([None] * 6, [f"m{k}" for k in range(6)]):
        t = template(V, e, media=media)
        a, b = media_pool(t, strategy), aggregate(t, strategy)
        assert np.allclose(a.embedding, b.embedding, atol=1e-12)
        assert a.ers == pytest.approx(b.ers, abs=1e-12)


def test_media_pool_two_groups_matches_hand_computation():
    V = [(1.0, 0.0, 0.0), (0.8, 0.6, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    e = [0.9, 0.7, 0.4, 0.3]
    t = template(V, e, media=["A", "A", "A", "B"])
    res = media_pool(t, WeightingStrategy("square"))
    groups = [[(normalize(V[k]), e[k]) for k in range(3)], [(normalize(V[3]), e[3])]]
    ref, ref_ers = two_stage_pool(groups, lambda x: x * x)
    assert np.allclose(res.embedding, ref, rtol=0, atol=1e-9)
    assert res.ers == pytest.approx(ref_ers, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.sampled_from(WEIGHTED), st.floats(0.05, 1.0))
def test_constant_ers_collapses_to_uniform_mean(seed, n, kind, value):
    V, _ = random_template(seed, n)
    t = template(V, [value] * n)
    assert np.allclose(aggregate(t, WeightingStrategy(kind)).embedding, mean_direction(V), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.floats(1.01, 1.99))
def test_direction_is_scale_invariant_in_weights(seed, n, c):
    V, e = random_template(seed, n)
    e = e / 2  # keep c * e inside [0, 1]
    a = aggregate(template(V, e), WeightingStrategy("identity")).embedding
    b = aggregate(template(V, c * e), WeightingStrategy("identity")).embedding
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.sampled_from(ALL))
def test_aggregate_in_conic_hull(seed, n, strategy):
    V, e = random_template(seed, n, d=8)
    f = aggregate(template(V, e), strategy).embedding
    _, residual = nnls(V.T, f)
    assert residual < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.sampled_from(ALL))
def test_member_order_does_not_matter(seed, n, strategy):
    V, e = random_template(seed, n)  # continuous ERS: no top-k ties
    perm = np.random.default_rng(seed).permutation(n)
    a = aggregate(template(V, e), strategy)
    b = aggregate(template(V[perm], e[perm]), strategy)
    assert np.allclose(a.embedding, b.embedding, atol=1e-12)
    assert a.ers == pytest.approx(b.ers, abs=1e-12)


def test_build_template_scores_and_enhances():
    ui = UiModel(normalize((1.0, 0.0, 0.0)), 10)
    ds = Dataset(["a", "b"], [[0.6, 0.8, 0.0], [0.0, 0.6, 0.8]], media=["m", None])
    spec = TemplateSpec("t", "s", ("a", "b"))
    t = build_template(spec, ds, ui)
    assert t.members[0].ers == compute_ers(ds.vector("a"), ui)
    assert t.members[0].media_id == "m" and t.members[1].media_id is None
    enhanced = build_template(spec, ds, ui, enhance=True)
    assert np.allclose(enhanced.members[0].embedding, (0.0, 1.0, 0.0))
    # ERS is taken before enhancement
    assert enhanced.members[0].ers == t.members[0].ers
    bare = build_template(spec, ds)
    assert math.isnan(bare.members[0].ers.capped)
    assert np.allclose(aggregate(bare, WeightingStrategy("uniform")).embedding, mean_direction(ds.vectors))
    with pytest.raises(ValueError):
        build_template(spec, ds, None, enhance=True)
