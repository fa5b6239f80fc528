"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the
terminal summary of the pytest run.
"""

from __future__ import annotations

import math
import time

import numpy as np

import conftest
from conftest import K1_CORNERS, K2_CORNERS
from oracles import affine_rk, focus_strip, strip_exit_rk
from plds.bifurcation import (
    CellOptions,
    alpha_star,
    analyze_cell,
    beta_invariance_check,
    scan_diagram,
    separatrix_slopes,
    verify_bound,
)
from plds.flow import flow_state, region_system
from plds.model import SystemParams, build_curve, find_singular_points
from plds.returnmap import (
    Branch,
    build_return_map,
    chi,
    equilibrium_segment_fixed_point,
    evaluate_return,
    find_limit_cycles,
    half_map_region,
    zeta,
)
from plds.sewing import Section, SewedSystem


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE.append(line)
    print(line)


def test_c1_sewed_center_identity(curve1):
    t0 = time.perf_counter()
    a_star = alpha_star(1.0, 2.0)
    system = SewedSystem(curve1, SystemParams(3.0, 5.0))
    # the identity holds on the two-region branch, up to where orbits reach region III
    probe = build_return_map(system, None, Section(1), s_range=(1e-3, 10.0), n=40)
    s_edge = probe.s_star
    rm = build_return_map(system, None, Section(1), s_range=(1e-3, 0.95 * s_edge), n=50)
    dev = max(abs(m.s0_bar - m.s0) / (1.0 + m.s0) for m in rm.samples)
    elapsed = time.perf_counter() - t0
    ok = (
        abs(a_star - 3.0) <= 1e-9
        and len(rm.samples) == 50
        and all(m.branch is Branch.Xi for m in rm.samples)
        and dev <= 1e-6
        and elapsed < 5.0
    )
    report(1, ok, f"alpha*={a_star:.10f} max|f(S)-S|/(1+S)={dev:.2e} on 50 samples S<={0.95 * s_edge:.4f}, {elapsed:.2f}s")
    assert ok


def test_c2_equilibrium_segment_fixed_point(curve1):
    t0 = time.perf_counter()
    system = SewedSystem(curve1, SystemParams(2.0, 4.0))
    rm = build_return_map(system, None, Section(1), s_range=(0.05, 5.0), n=60)
    cycles = find_limit_cycles(rm)
    simulated = cycles[0].s_fixed if len(cycles) == 1 else math.nan
    # the region-I Jacobian at alpha=2 has sigma1=-1 and omega1=sqrt(2)
    closed = equilibrium_segment_fixed_point(-1.0, math.sqrt(2.0), 1.0, 2.0)
    anchor = equilibrium_segment_fixed_point(-1.0, math.sqrt(3.0), 1.0, 2.0)
    elapsed = time.perf_counter() - t0
    rel = abs(simulated - closed) / closed
    ok = rel <= 1e-6 and elapsed < 5.0
    report(
        2,
        ok,
        f"simulated S*={simulated:.10f} closed form={closed:.10f} (omega1=sqrt2) rel={rel:.1e}; "
        f"omega1=sqrt3 anchor gives {anchor:.4f}, {elapsed:.2f}s",
    )
    assert ok


C3_POINTS = [(1, 2.5, 4.5), (1, 1.95, 3.925), (1, 3.0, 5.5), (2, 2.5, 4.5), (2, 1.95, 3.925)]


def test_c3_derivative_against_finite_differences():
    good = total = 0
    branches = set()
    for k, alpha, beta in C3_POINTS:
        curve = build_curve(K1_CORNERS if k == 1 else K2_CORNERS, 1.0, 2.0)
        system = SewedSystem(curve, SystemParams(alpha, beta))
        rm = build_return_map(system, None, Section(1), s_range=(1e-3, 30.0), n=100)
        # 20 returning starts spread over the sampled range
        picks = [rm.samples[int(i)] for i in np.linspace(0, len(rm.samples) - 1, 20)]
        for m in picks:
            # five-point stencil: a wide step keeps roundoff small where f' << f
            h = 1e-3 * m.s0
            near = [evaluate_return(system, Section(1), m.s0 + j * h)[0] for j in (-2, -1, 1, 2)]
            total += 1
            branches.add(m.branch)
            if any(e is None or e.regions != m.regions for e in near):
                continue
            f = [e.s0_bar for e in near]
            fd = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h)
            good += abs(m.deriv - fd) <= 1e-6 * abs(fd)
    frac = good / total
    ok = total == 100 and frac >= 0.95 and branches == {Branch.Xi, Branch.Psi}
    report(3, ok, f"{good}/{total} samples within 1e-6 rel, branches {sorted(b.value for b in branches)}")
    assert ok


def test_c4_half_map_limit_and_exact_flow():
    rng = np.random.default_rng(20240611)
    worst_lim = 0.0
    for _ in range(20):
        sigma, omega = -rng.uniform(0.05, 2.0), rng.uniform(0.3, 3.0)
        tau = math.pi / omega - 1e-6
        worst_lim = max(worst_lim, abs(chi(tau, sigma, omega) / zeta(tau, sigma, omega) - math.exp(math.pi * sigma / omega)))
    worst_map = 0.0
    cases = 0
    while cases < 50:
        sigma, omega = rng.uniform(-1.2, 1.2), rng.uniform(0.5, 3.0)
        delta0, s0, inside = rng.uniform(0.05, 1.5), rng.uniform(0.1, 30.0), bool(rng.integers(2))
        try:
            s1, _ = half_map_region(s0, sigma, omega, delta0, inside)
        except Exception:
            continue
        matrix, offset = focus_strip(sigma, omega, delta0, inside)
        p, _ = strip_exit_rk(matrix, offset, (0.0, -s0))
        worst_map = max(worst_map, abs(p[1] - s1) / s1)
        cases += 1
    ok = worst_lim <= 1e-5 and worst_map <= 1e-8
    report(4, ok, f"limit error {worst_lim:.1e} on 20 pairs; half-map rel error {worst_map:.1e} on 50 cases")
    assert ok


def test_c5_separatrix_slope_asymptotics():
    ratios = []
    for k2 in (2.0, 3.0):
        a, b = separatrix_slopes(k2, k2 - 1e-2), separatrix_slopes(k2, k2 - 1e-3)
        for attr in ("alpha", "omega"):
            e1 = abs(getattr(a, f"{attr}_exact") - getattr(a, f"{attr}_first_order"))
            e2 = abs(getattr(b, f"{attr}_exact") - getattr(b, f"{attr}_first_order"))
            ratios.append(e1 / e2)
    ok = all(80.0 <= r <= 120.0 for r in ratios)
    report(5, ok, "error ratios " + ", ".join(f"{r:.2f}" for r in ratios))
    assert ok


def test_c6_beta_invariance(curve1):
    alpha = 2.5
    kappas = (0.1, 0.05, 0.01)
    samples = beta_invariance_check(curve1, alpha, [alpha * 1.0 + 2.0 - k for k in kappas])
    r = [s.ratio for s in samples]
    spread = (max(r) - min(r)) / abs(r[0])
    ok = spread <= 1e-8
    report(6, ok, f"S1/S1' = {r[0]:.10f}, relative spread {spread:.1e} over kappa {kappas}")
    assert ok


SCANS = [("k=1", K1_CORNERS, (0.5, 6.0), 3), ("k=2", K2_CORNERS, (0.5, 5.0), 4)]


def test_c7_cycle_bound_scans():
    lines = []
    ok = True
    t0 = time.perf_counter()
    for name, corners, beta_range, bound in SCANS:
        t1 = time.perf_counter()
        curve = build_curve(corners, 1.0, 2.0)
        d = scan_diagram(curve, (0.2, 4.0), beta_range, 50, 50, CellOptions(), threads=8)
        rep = verify_bound(d)
        multi = sum("MultipleSmallInPair" in c.flags for c in d.iter_cells())
        ok &= rep.passed and rep.bound == bound and rep.max_total <= bound and multi == 0
        lines.append(
            f"{name}: max total {rep.max_total} (bound {bound}), {len(rep.violations)} violations, "
            f"{multi} multi-small cells, {time.perf_counter() - t1:.0f}s"
        )
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300.0
    report(7, ok, "; ".join(lines) + f"; total {elapsed:.0f}s with 8 workers")
    assert ok


def _state(curve, alpha, beta):
    pts = find_singular_points(curve, SystemParams(alpha, beta))
    cell = analyze_cell(curve, alpha, beta, CellOptions(n_samples=200, max_crossings=200))
    kinds = sorted(p.kind.value for p in pts)
    cycles = sorted((c["size"], c["stability"]) for c in cell.cycles)
    return kinds, cycles, cell


def test_c8_bifurcation_sequence(curve1):
    path = [(3.5, 5.5), (2.5, 4.5), (2.0, 4.0), (1.95, 3.925)]
    expected = [
        (["SewedFocusStable"], []),
        (["SewedFocusUnstable"], [("Big", "Stable")]),
        (["EquilibriumSegment"], [("Big", "Stable")]),
        (["Saddle", "StableFocus", "StableFocus"], [("Big", "Stable"), ("Small", "Unstable"), ("Small", "Unstable")]),
    ]
    got = []
    ok = True
    for (alpha, beta), want in zip(path, expected):
        kinds, cycles, cell = _state(curve1, alpha, beta)
        got.append((kinds, cycles))
        ok &= (kinds, cycles) == want and "NonReturning" not in cell.flags
    # the big cycle encloses the segment: it crosses below corner 1 and above corner 2
    _, _, seg = _state(curve1, 2.0, 4.0)
    ok &= seg.cycles and tuple(seg.cycles[0]["regions"]) == (1, 2, 3)
    # the small cycles each surround one focus: one per adjacent strip pair
    _, _, last = _state(curve1, 1.95, 3.925)
    ok &= sorted(tuple(c["regions"]) for c in last.cycles if c["size"] == "Small") == [(1, 2), (2, 3)]
    summary = " -> ".join(f"{'+'.join(k)} | {len(c)} cycles" for k, c in got)
    report(8, bool(ok), summary)
    assert ok


def test_c9_closed_form_against_integrator():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(200):
        k1, k2 = rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)
        w = rng.uniform(0.3, 2.0)
        x1, y1 = rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)
        curve = build_curve([(x1, y1), (x1 + w, y1 - k2 * w)], k1, k2)
        params = SystemParams(rng.uniform(0.1, 4.0), rng.uniform(0.1, 6.0))
        rf = region_system(curve, params, int(rng.integers(1, 4)))
        p0 = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0))
        for t in np.linspace(0.5, 5.0, 10):
            want = affine_rk(rf.matrix, rf.offset, p0, t)
            got = np.array(flow_state(rf, p0, t))
            worst = max(worst, float(np.max(np.abs(got - want))) / (1.0 + float(np.max(np.abs(want)))))
    ok = worst <= 1e-8
    report(9, ok, f"200 strip systems, max scaled deviation {worst:.1e} over t in [0, 5]")
    assert ok
