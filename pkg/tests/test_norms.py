import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from advfilter.core import Image, ParameterError, ShapeError
from advfilter.norms import NormKind, distance, norm, project_to_ball
from oracles import l1_projection_oracle

KINDS = list(NormKind)
vectors = arrays(np.float64, st.integers(1, 12), elements=st.floats(-10, 10))


@pytest.mark.parametrize(
    "v, kind, expected",
    [([1, -2, 3], "l1", 6), ([3, 4], "l2", 5), ([1, -7, 3], "linf", 7), ([], "l2", 0)],
)
def test_norm_examples(v, kind, expected):
    assert norm(v, kind) == expected


def test_distance_examples():
    x = Image(np.array([[0.5, 0.5]]))
    y = Image(np.array([[0.4, 0.6]]))
    for kind in KINDS:
        assert distance(x, x, kind) == 0
    assert distance(x, y, NormKind.L2) == pytest.approx(0.1 * math.sqrt(2), abs=1e-6)
    with pytest.raises(ShapeError):
        distance(x, Image(np.zeros((2, 2))), NormKind.L1)


def test_distance_is_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x, y = Image(rng.random((4, 4, 3))), Image(rng.random((4, 4, 3)))
        for kind in KINDS:
            assert distance(x, y, kind) == distance(y, x, kind)


@pytest.mark.parametrize(
    "delta, kind, beta, expected",
    [
        ([0.3, -0.5], "linf", 0.2, [0.2, -0.2]),
        ([3, 4], "l2", 1, [0.6, 0.8]),
        ([0.5, 0.5], "l1", 0.5, [0.25, 0.25]),
        ([2.0, -1.0, 0.0], "l1", 0.0, [0.0, 0.0, 0.0]),
        ([1.0, 1.0], "l2", 0.0, [0.0, 0.0]),
    ],
)
def test_projection_examples(delta, kind, beta, expected):
    np.testing.assert_allclose(project_to_ball(np.array(delta), kind, beta), expected, atol=1e-15)


def test_projection_rejects_negative_beta():
    with pytest.raises(ParameterError):
        project_to_ball(np.ones(2), NormKind.L2, -1)


def test_unknown_norm():
    with pytest.raises(ParameterError):
        NormKind.parse("l3")


def test_projection_preserves_shape_and_input():
    d = np.random.default_rng(0).normal(size=(4, 5, 3))
    before = d.copy()
    for kind in KINDS:
        assert project_to_ball(d, kind, 0.5).shape == d.shape
    np.testing.assert_array_equal(d, before)


@settings(max_examples=300, deadline=None)
@given(vectors, st.floats(0.01, 20))
def test_l1_projection_matches_face_enumeration(v, beta):
    v = v[:4]
    np.testing.assert_allclose(project_to_ball(v, NormKind.L1, beta), l1_projection_oracle(v, beta), atol=1e-6)


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(0.01, 20), st.sampled_from(KINDS))
def test_projection_lands_in_ball_and_is_nearest_on_segment(v, beta, kind):
    p = project_to_ball(v, kind, beta)
    assert norm(p, kind) <= beta * (1 + 1e-9)
    # nothing on the segment toward the origin that is still inside the ball is closer
    assert np.sum((p - v) ** 2) <= np.sum((v * min(1.0, beta / max(norm(v, kind), 1e-300)) - v) ** 2) + 1e-9


@settings(max_examples=200, deadline=None)
@given(vectors, vectors, st.floats(-5, 5), st.sampled_from(KINDS))
def test_norm_axioms(a, b, c, kind):
    n = min(a.size, b.size)
    a, b = a[:n], b[:n]
    assert norm(c * a, kind) == pytest.approx(abs(c) * norm(a, kind), rel=1e-12, abs=1e-12)
    assert norm(a + b, kind) <= norm(a, kind) + norm(b, kind) + 1e-12
    assert norm(a, kind) >= 0
