from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loglap.errors import EmptyGrid, GridNotSymmetric
from loglap.geometry import (Ball, DiscreteField, Domain, Ellipse, ReflectionFrame, Rect, build_grid, contains,
                             critical_value, ray_segments, reflect)


def test_contains_ball_center_and_open_boundary():
    B = Domain.union(Ball((0.0, 0.0), 1.0))
    assert contains(B, (0.0, 0.0))
    assert not contains(B, (1.0, 0.0))


def test_contains_minkowski_sum():
    Om = Domain.minkowski(Domain.union(Ball((0.0, 0.0), 0.1)), 0.1)
    assert contains(Om, (0.15, 0.0))
    assert not contains(Om, (0.2, 0.0))
    assert not contains(Om, (0.21, 0.0))


def test_contains_minkowski_matches_distance_for_ellipse():
    G = Domain.union(Ellipse((0.0, 0.0), (0.14, 0.07)))
    Om = Domain.minkowski(G, 0.1)
    rng = np.random.default_rng(3)
    P = rng.uniform(-0.3, 0.3, size=(400, 2))
    d = G.dist(P)
    inside = Om.contains_many(P)
    clear = np.abs(d - 0.1) > 1e-9
    assert np.array_equal(inside[clear], (d < 0.1)[clear])


def test_ray_segments_ball():
    B = Domain.union(Ball((0.0, 0.0), 1.0))
    for t in np.linspace(0, 2 * math.pi, 7):
        segs = ray_segments(B, (0.0, 0.0), (math.cos(t), math.sin(t)), 2.0)
        assert len(segs) == 1
        assert segs[0] == pytest.approx((0.0, 1.0), abs=1e-12)


def test_ray_segments_square():
    S = Domain.union(Rect((-1.0, -1.0), (1.0, 1.0)))
    assert ray_segments(S, (0.0, 0.0), (1.0, 0.0), 3.0) == pytest.approx([(0.0, 1.0)])


def test_ray_segments_two_balls():
    D = Domain.union(Ball((-2.0, 0.0), 0.5), Ball((2.0, 0.0), 0.5))
    segs = ray_segments(D, (-2.0, 0.0), (1.0, 0.0), 5.0)
    assert len(segs) == 2
    assert segs[0] == pytest.approx((0.0, 0.5))
    assert segs[1] == pytest.approx((3.5, 4.5))


def test_build_grid_symmetric_ball():
    g = build_grid(Domain.union(Ball((0.0, 0.0), 0.5)), 0.1, [ReflectionFrame((1.0, 0.0), 0.0)])
    assert len(g.symmetry_planes) == 1
    m = g.reflection_map(g.symmetry_planes[0])
    assert np.all(m >= 0)
    assert np.allclose(g.centers[m][:, 0], -g.centers[:, 0])


def test_build_grid_empty():
    with pytest.raises(EmptyGrid):
        build_grid(Domain.union(Rect((-0.1,), (0.1,))), 0.25)


def test_build_grid_unit_square_four_cells():
    g = build_grid(Domain.union(Rect((0.0, 0.0), (1.0, 1.0))), 0.5)
    got = sorted(map(tuple, np.round(g.centers, 12)))
    assert got == [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
    assert g.measure() == pytest.approx(1.0)


def test_build_grid_rejects_oblique_plane():
    with pytest.raises(ValueError):
        build_grid(Domain.union(Ball((0.0, 0.0), 0.5)), 0.1,
                   [ReflectionFrame((math.sqrt(0.5), math.sqrt(0.5)), 0.0)])


def test_reflection_map_requires_lattice_plane():
    g = build_grid(Domain.union(Ball((0.0, 0.0), 0.5)), 0.1, [ReflectionFrame((1.0, 0.0), 0.0)])
    with pytest.raises(GridNotSymmetric):
        g.reflection_map(ReflectionFrame((1.0, 0.0), 0.013))


def test_reflect_examples():
    e1 = ReflectionFrame((1.0, 0.0), 0.0)
    assert np.allclose(reflect((3.0, 1.0), e1), (-3.0, 1.0))
    assert np.allclose(reflect((3.0, 1.0), ReflectionFrame((1.0, 0.0), 1.0)), (-1.0, 1.0))
    assert np.allclose(reflect((0.0, 7.0), e1), (0.0, 7.0))


def test_frame_requires_unit_normal():
    with pytest.raises(ValueError):
        ReflectionFrame((2.0, 0.0), 0.0)


def test_critical_value_ball_and_box():
    B = Domain.union(Ball((0.3, -0.1), 0.5))
    assert critical_value(B, (1.0, 0.0)) == pytest.approx(0.3, abs=1e-3)
    assert critical_value(B, (0.0, 1.0)) == pytest.approx(-0.1, abs=1e-3)
    R = Domain.union(Rect((0.0, 0.0), (2.0, 1.0)))
    assert critical_value(R, (1.0, 0.0)) == pytest.approx(1.0, abs=1e-3)


def test_critical_value_two_balls_stops_at_right_ball_center():
    # sweeping from the right, the reflected cap leaves the right ball as soon
    # as the plane passes its centre
    D = Domain.union(Ball((-2.0, 0.0), 0.5), Ball((2.0, 0.0), 0.5))
    assert critical_value(D, (1.0, 0.0)) == pytest.approx(2.0, abs=1e-3)


def test_discrete_field_lookup_zero_outside():
    g = build_grid(Domain.union(Rect((0.0, 0.0), (1.0, 1.0))), 0.5)
    u = DiscreteField(g, np.arange(4.0))
    assert u((2.0, 2.0))[0] == 0.0
    k = g.locate((0.3, 0.8))[0]
    assert u((0.3, 0.8))[0] == float(k)


def test_domain_measure():
    assert Domain.union(Ball((0.0, 0.0), 0.2)).measure() == pytest.approx(math.pi * 0.04)
    Om = Domain.minkowski(Domain.union(Rect((0.0, 0.0), (1.0, 0.5))), 0.1)
    assert Om.measure() == pytest.approx(0.5 + 2 * 1.5 * 0.1 + math.pi * 0.01)


# ------------------------------------------------------------ properties

coord = st.floats(-3, 3, allow_nan=False)


@given(x=st.tuples(coord, coord), ang=st.floats(0, 2 * math.pi), lam=st.floats(-2, 2))
def test_reflect_is_involution(x, ang, lam):
    fr = ReflectionFrame((math.cos(ang), math.sin(ang)), lam)
    y = reflect(reflect(x, fr), fr)
    assert np.allclose(y, x, rtol=0, atol=4 * np.finfo(float).eps * (1 + max(map(abs, x)) + abs(lam)))


DOMAINS = [
    Domain.union(Ball((0.0, 0.0), 0.6), Rect((0.2, -0.3), (1.2, 0.3))),
    Domain.union(Ellipse((0.1, 0.0), (0.5, 0.25))),
    Domain.minkowski(Domain.union(Rect((0.0, 0.0), (0.4, 0.2))), 0.15),
    Domain.minkowski(Domain.union(Ellipse((0.0, 0.0), (0.14, 0.07))), 0.1),
]


@settings(max_examples=40, deadline=None)
@given(k=st.integers(0, len(DOMAINS) - 1), x=st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)),
       ang=st.floats(0, 2 * math.pi))
def test_ray_segments_agree_with_containment(k, x, ang):
    D = DOMAINS[k]
    r_max = 3.0
    th = np.array([math.cos(ang), math.sin(ang)])
    segs = ray_segments(D, x, th, r_max)
    r = (np.arange(10_000) + 0.5) * r_max / 10_000
    inside = D.contains_many(np.asarray(x) + r[:, None] * th)
    by_segs = np.zeros_like(inside)
    for a, b in segs:
        by_segs |= (r > a) & (r < b)
    bad = r[inside != by_segs]
    # mismatches only at samples within 1e-9 r_max of a segment endpoint
    ends = np.array([t for s in segs for t in s] or [np.inf])
    assert all(np.min(np.abs(ends - t)) <= 1e-9 * r_max for t in bad)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-0.3, 0.3), r=st.floats(0.15, 0.6), h=st.sampled_from([0.05, 0.07, 0.1]))
def test_recorded_symmetry_planes_are_bijections(c, r, h):
    D = Domain.union(Ball((c, 0.0), r))
    g = build_grid(D, h, [ReflectionFrame((1.0, 0.0), c), ReflectionFrame((0.0, 1.0), 0.0)])
    for fr in g.symmetry_planes:
        m = g.reflection_map(fr)
        assert np.all(m >= 0)
        assert np.array_equal(np.sort(m), np.arange(g.n))
        assert np.array_equal(m[m], np.arange(g.n))


@settings(max_examples=25, deadline=None)
@given(r1=st.floats(0.05, 0.3), dr=st.floats(0.0, 0.2), R=st.floats(0.02, 0.3))
def test_minkowski_monotone(r1, dr, R):
    G = Domain.union(Ellipse((0.0, 0.0), (r1, 0.5 * r1)))
    G2 = Domain.union(Ellipse((0.0, 0.0), (r1 + dr, 0.5 * r1 + dr)))
    P = np.random.default_rng(0).uniform(-1, 1, size=(500, 2))
    inner = Domain.minkowski(G, R).contains_many(P)
    assert np.all(Domain.minkowski(G2, R).contains_many(P[inner]))
