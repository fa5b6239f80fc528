from __future__ import annotations

import io
import math

import numpy as np
import pytest

from plds.bifurcation import (
    CellOptions,
    CellReport,
    alpha_star,
    alpha_star_printed,
    analyze_cell,
    beta_invariance_check,
    find_separatrix_loop,
    read_scan_csv,
    scan_diagram,
    separatrix_data,
    separatrix_gap,
    separatrix_slopes,
    verify_bound,
    verify_cells,
    write_scan_csv,
)
from plds.errors import BadRange, GeometryError, NoSignChange, NotSaddle
from plds.model import SingularKind, SystemParams, find_singular_points, mirror_beta, piece_eigen


def _rule(alpha):
    return 1.5 * alpha + 1.0


def test_alpha_star_reference():
    assert alpha_star(1.0, 2.0) == pytest.approx(3.0, abs=1e-9)
    assert alpha_star_printed(1.0, 2.0) == pytest.approx(1 / 6)


def test_alpha_star_balances_half_turns(curve1):
    a = alpha_star(1.0, 2.0)
    e1, e2 = piece_eigen(curve1, a, 1), piece_eigen(curve1, a, 2)
    assert e1.sigma * e2.omega + e2.sigma * e1.omega == pytest.approx(0.0, abs=1e-9)


def test_alpha_star_grows_as_k1_shrinks():
    values = [alpha_star(k1, 2.0) for k1 in np.linspace(0.2, 1.8, 10)]
    assert all(a > b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("k2", [2.0, 3.0])
def test_separatrix_slopes_first_order(k2):
    e1 = separatrix_slopes(k2, k2 - 0.01)
    e2 = separatrix_slopes(k2, k2 - 0.001)
    for attr in ("alpha", "omega"):
        err1 = abs(getattr(e1, f"{attr}_exact") - getattr(e1, f"{attr}_first_order"))
        err2 = abs(getattr(e2, f"{attr}_exact") - getattr(e2, f"{attr}_first_order"))
        assert 80.0 <= err1 / err2 <= 120.0


def test_separatrix_slopes_at_eps_zero():
    s = separatrix_slopes(2.0, 2.0)
    assert s.alpha_exact == pytest.approx(-1.0) and s.omega_exact == pytest.approx(-2.0)
    with pytest.raises(NotSaddle):
        separatrix_slopes(2.0, 2.5)
    with pytest.raises(NotSaddle):
        separatrix_slopes(1.0, 0.5)


def test_separatrices_are_eigenvectors(curve1):
    params = SystemParams(1.0, 2.5)
    saddle = [p for p in find_singular_points(curve1, params) if p.kind is SingularKind.Saddle][0]
    data = separatrix_data(curve1, params, saddle)
    (a, b), (c, d) = ((2.0, 1.0), (-1.0, -1.0))
    for v in (data.eigvec_unstable, data.eigvec_stable):
        w = (a * v[0] + b * v[1], c * v[0] + d * v[1])
        assert v[0] * w[1] - v[1] * w[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NotSaddle):
        focus = [p for p in find_singular_points(curve1, params) if p.kind is SingularKind.StableFocus][0]
        separatrix_data(curve1, params, focus)


@pytest.mark.parametrize("kappas", [(0.1, 0.05, 0.01)])
def test_beta_invariance(curve1, kappas):
    alpha = 2.5
    betas = [alpha * 1.0 + 2.0 - k for k in kappas]
    samples = beta_invariance_check(curve1, alpha, betas)
    ratios = [s.ratio for s in samples]
    assert max(ratios) - min(ratios) <= 1e-8
    assert ratios[0] == pytest.approx(0.0498173932, rel=1e-8)
    for s in samples:
        assert s.s1 == pytest.approx(s.s1_formula, rel=1e-10)
        assert s.s0 / s.kappa == pytest.approx(samples[0].s0 / samples[0].kappa)


def test_beta_invariance_rejects_bad_geometry(curve1):
    with pytest.raises(GeometryError):
        beta_invariance_check(curve1, 2.5, [5.0])
    with pytest.raises(GeometryError):
        beta_invariance_check(curve1, 2.5, [4.4], corner=2)


def test_separatrix_loop_on_rotated_isocline(curve1):
    a = find_separatrix_loop(curve1, _rule, (1.93, 1.95), tol=1e-8)
    assert a == pytest.approx(1.9396712, abs=1e-6)
    assert abs(separatrix_gap(curve1, SystemParams(a, _rule(a)))) < 1e-5


def test_separatrix_loop_mirror_invariance(curve2):
    cx, cy = 5.0, 1.0
    mirror = curve2.mirrored(cx, cy)
    for a in (1.93, 1.95):
        g = separatrix_gap(curve2, SystemParams(a, _rule(a)), 2, "left")
        gm = separatrix_gap(mirror, SystemParams(a, mirror_beta(a, _rule(a), cx, cy)), 4, "right")
        assert g == pytest.approx(gm, rel=1e-9)
    a1 = find_separatrix_loop(curve2, _rule, (1.93, 1.95), tol=1e-8)
    a2 = find_separatrix_loop(
        mirror, lambda x: mirror_beta(x, _rule(x), cx, cy), (1.93, 1.95), saddle_region=4, side="right", tol=1e-8
    )
    assert a1 == pytest.approx(a2, abs=2e-8)


def test_separatrix_loop_needs_sign_change(curve1):
    with pytest.raises(NoSignChange):
        find_separatrix_loop(curve1, _rule, (1.95, 1.99))
    with pytest.raises(BadRange):
        find_separatrix_loop(curve1, _rule, (1.95, 1.93))
    with pytest.raises(ValueError):
        separatrix_gap(curve1, SystemParams(1.95, _rule(1.95)), side="up")


@pytest.mark.parametrize(
    "alpha, beta, n_small, n_big, flag",
    [
        (3.5, 5.5, 0, 0, None),
        (3.0, 5.0, 0, 0, "SewedCenter"),
        (2.5, 4.5, 0, 1, None),
        (2.0, 4.0, 0, 1, "EquilibriumSegment"),
        (1.95, 3.925, 2, 1, None),
    ],
)
def test_analyze_cell_along_path(curve1, alpha, beta, n_small, n_big, flag):
    rep = analyze_cell(curve1, alpha, beta, CellOptions(n_samples=120))
    assert (rep.n_small, rep.n_big) == (n_small, n_big)
    if flag:
        assert flag in rep.flags
    assert "NonReturning" not in rep.flags and rep.error is None


def test_scan_single_cell_and_csv_round_trip(curve1):
    d = scan_diagram(curve1, (2.5, 2.5), (4.5, 4.5), 1, 1)
    assert len(list(d.iter_cells())) == 1
    assert d.cells[0][0].n_big == 1
    buf = io.StringIO()
    write_scan_csv(buf, d)
    buf.seek(0)
    back = read_scan_csv(buf)
    c = d.cells[0][0]
    assert [(r.alpha, r.beta, r.n_singular, r.n_small, r.n_big, r.flags) for r in back] == [
        (c.alpha, c.beta, c.n_singular, c.n_small, c.n_big, c.flags)
    ]
    labels = {o.kind for o in d.curves}
    assert "discriminant" in labels and "alpha_star" in labels
    assert verify_bound(d).passed


def test_scan_small_grid_is_bounded(curve2):
    d = scan_diagram(curve2, (0.5, 3.5), (1.0, 5.0), 3, 3, CellOptions(n_samples=32), threads=2)
    rep = verify_bound(d)
    assert rep.passed and rep.bound == 4 and rep.max_total <= 4
    assert d.alpha_grid.tolist() == [0.5, 2.0, 3.5]


@pytest.mark.parametrize(
    "args",
    [((0.0, 1.0), (1.0, 2.0), 2, 2), ((1.0, 2.0), (2.0, 1.0), 2, 2), ((1.0, 1.0), (1.0, 2.0), 2, 2), ((1.0, 2.0), (1.0, 2.0), 0, 2)],
)
def test_scan_bad_range(curve1, args):
    with pytest.raises(BadRange):
        scan_diagram(curve1, *args)


def test_verify_flags_forged_counts():
    ok = CellReport(1.0, 2.0, 3, 1, 1)
    too_many = CellReport(1.0, 3.0, 3, 2, 2)
    pair = CellReport(1.0, 4.0, 3, 2, 0, {"MultipleSmallInPair"})
    rep = verify_cells([ok, too_many, pair], k=1)
    assert not rep.passed and rep.max_total == 4
    assert [(v["alpha"], v["beta"]) for v in rep.violations] == [(1.0, 3.0), (1.0, 4.0)]
    assert verify_cells([ok], k=1).passed
    with pytest.raises(BadRange):
        verify_cells([ok], k=0)


def test_cell_report_serialisation():
    rep = CellReport(1.0, 2.0, 3, 1, 0, {"NonReturning", "SewedCenter"})
    assert rep.flag_string() == "SewedCenter;NonReturning"
    d = rep.to_dict()
    assert d["flags"] == ["SewedCenter", "NonReturning"] and d["n_small"] == 1
    assert math.isfinite(d["alpha"])
