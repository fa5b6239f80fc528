from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import affine_expm, affine_rk
from plds.flow import Terminal, boundary_crossing, flow_from_matrix, flow_state, region_system
from plds.model import ComplexPair, RealDistinct, RealRepeated, Region, SystemParams, build_curve

WHOLE = Region(1, -math.inf, math.inf)

coef = st.floats(-3.0, 3.0, allow_nan=False)
matrices = st.tuples(coef, coef, coef, coef)
offsets = st.tuples(coef, coef)


def _flow(m, b, region=WHOLE):
    return flow_from_matrix(region, ((m[0], m[1]), (m[2], m[3])), b)


@settings(max_examples=150, deadline=None)
@given(matrices, offsets, st.tuples(coef, coef), st.floats(-2.0, 2.0))
def test_flow_matches_matrix_exponential(m, b, p0, t):
    rf = _flow(m, b)
    got = flow_state(rf, p0, t)
    want = affine_expm(rf.matrix, rf.offset, p0, t)
    scale = 1.0 + float(np.max(np.abs(want)))
    assert np.allclose(got, want, rtol=0.0, atol=1e-9 * scale)


@settings(max_examples=100, deadline=None)
@given(matrices, offsets, st.tuples(coef, coef), st.floats(0.0, 1.5), st.floats(0.0, 1.5))
def test_flow_semigroup(m, b, p0, t1, t2):
    rf = _flow(m, b)
    direct = flow_state(rf, p0, t1 + t2)
    two_step = flow_state(rf, flow_state(rf, p0, t1), t2)
    scale = 1.0 + max(abs(direct[0]), abs(direct[1]))
    assert two_step == pytest.approx(direct, abs=1e-10 * scale)


@settings(max_examples=60, deadline=None)
@given(matrices, offsets, st.tuples(coef, coef), st.floats(0.0, 1.0))
def test_flow_runs_backwards(m, b, p0, t):
    rf = _flow(m, b)
    q = flow_state(rf, p0, t)
    back = flow_state(rf, q, -t)
    scale = 1.0 + max(abs(q[0]), abs(q[1]), abs(p0[0]), abs(p0[1]))
    assert back == pytest.approx(p0, abs=1e-9 * scale)


@pytest.mark.parametrize(
    "matrix, kind",
    [
        (((-1.0, 1.0), (-3.0, -1.0)), ComplexPair),
        (((2.0, 1.0), (-1.0, -1.0)), RealDistinct),
        (((-1.0, 1.0), (0.0, -1.0)), RealRepeated),
        (((1.0, 1.0), (1.0, 1.0)), RealDistinct),
    ],
)
def test_each_eigen_class_against_rk(matrix, kind):
    rf = flow_from_matrix(WHOLE, matrix, (0.3, -0.7))
    assert isinstance(rf.eigen, kind)
    for t in (0.1, 0.7, 2.0):
        assert np.allclose(flow_state(rf, (0.4, 1.1), t), affine_rk(matrix, rf.offset, (0.4, 1.1), t), atol=1e-10)


def test_region_system_examples(curve1):
    p = SystemParams(3.0, 5.0)
    r1 = region_system(curve1, p, 1)
    assert r1.matrix == ((-1.0, 1.0), (-3.0, -1.0))
    assert r1.offset == (-1.0, 5.0)
    assert r1.equilibrium == pytest.approx((1.0, 2.0))
    r2 = region_system(curve1, p, 2)
    assert r2.matrix == ((2.0, 1.0), (-3.0, -1.0))
    assert r2.equilibrium == pytest.approx((1.0, 2.0))
    assert r2.sigma == pytest.approx(0.5) and r1.sigma == pytest.approx(-1.0)
    assert r1.field((1.0, 2.0)) == pytest.approx((0.0, 0.0), abs=1e-15)


@pytest.mark.parametrize("sigma, omega", [(-1.0, math.sqrt(3.0)), (0.5, math.sqrt(3.0) / 2), (-0.3, 2.0), (0.0, 1.0)])
def test_half_turn_scales_distance(sigma, omega):
    # a matrix with eigenvalues sigma +- i omega and equilibrium at the origin
    m = -1.0 - 2.0 * sigma
    alpha = sigma * sigma + omega * omega - m
    rf = flow_from_matrix(WHOLE, ((-m, 1.0), (-alpha, -1.0)), (0.0, 0.0))
    q = flow_state(rf, (0.0, -1.0), math.pi / omega)
    assert q[0] == pytest.approx(0.0, abs=1e-12)
    assert q[1] == pytest.approx(math.exp(sigma * math.pi / omega), rel=1e-12)


def test_crossing_lands_on_bound_and_matches_rk(curve1):
    p = SystemParams(2.5, 4.5)
    rf = region_system(curve1, p, 1)
    p0 = (1.0, 1.0)
    ev = boundary_crossing(rf, p0, -math.inf, 1.0)
    assert ev.terminal is Terminal.Crossed
    assert ev.exit_point[0] == pytest.approx(1.0, abs=1e-12)
    assert ev.next_region == 2
    want = affine_rk(rf.matrix, rf.offset, p0, ev.tau)
    assert np.allclose(ev.exit_point, want, atol=1e-10)
    # the orbit stays in the strip before the exit
    for t in np.linspace(1e-6, ev.tau * (1 - 1e-9), 200):
        assert flow_state(rf, p0, t)[0] <= 1.0 + 1e-12


@settings(max_examples=150, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(0.5, 6.0), st.floats(-1.5, 1.5))
def test_crossing_is_first_exit(alpha, beta, y0):
    curve = build_curve([(1.0, 2.0), (2.0, 0.0)], 1.0, 2.0)
    rf = region_system(curve, SystemParams(alpha, beta), 2)
    p0 = (1.5, 1.0 + y0)
    ev = boundary_crossing(rf, p0, 1.0, 2.0)
    assume(ev.terminal is Terminal.Crossed)
    x = ev.exit_point[0]
    assert min(abs(x - 1.0), abs(x - 2.0)) <= 1e-11
    ts = np.linspace(0.0, ev.tau, 400)[1:-1]
    xs = [flow_state(rf, p0, t)[0] for t in ts]
    assert all(1.0 - 1e-9 <= v <= 2.0 + 1e-9 for v in xs)


def test_stable_focus_inside_strip_converges(curve1):
    # at alpha=1, beta=2.5 region I holds a stable focus at (0.75, 1.75)
    rf = region_system(curve1, SystemParams(1.0, 2.5), 1)
    ev = boundary_crossing(rf, (0.7, 1.7), -math.inf, 1.0)
    assert ev.terminal is Terminal.ConvergedToEquilibrium
    assert ev.exit_point == pytest.approx((0.75, 1.75), abs=1e-9)


def test_start_at_equilibrium_converges_immediately(curve1):
    rf = region_system(curve1, SystemParams(1.0, 2.5), 1)
    ev = boundary_crossing(rf, (0.75, 1.75), -math.inf, 1.0)
    assert ev.terminal is Terminal.ConvergedToEquilibrium and ev.tau == 0.0


def test_escape_is_unbounded():
    rf = flow_from_matrix(Region(3, 2.0, math.inf), ((1.0, 0.0), (0.0, 1.0)), (0.0, 0.0))
    ev = boundary_crossing(rf, (3.0, 1.0), 2.0, math.inf)
    assert ev.terminal is Terminal.Unbounded


def test_saddle_stable_manifold_converges():
    # saddle at origin; a start on the stable eigenline never crosses
    rf = flow_from_matrix(Region(2, -1.0, 1.0), ((1.0, 0.0), (0.0, -1.0)), (0.0, 0.0))
    ev = boundary_crossing(rf, (0.0, 0.5), -1.0, 1.0)
    assert ev.terminal is Terminal.ConvergedToEquilibrium
