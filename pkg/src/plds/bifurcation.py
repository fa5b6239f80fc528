"""Bifurcation quantities, parameter-plane scans and the cycle-count bound."""

from __future__ import annotations

import csv
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import BadRange, GeometryError, NoRoot, NoSignChange, NoSolution, NotSaddle, PldsError
from .flow import CROSS_TOL, RegionFlow, Terminal, boundary_crossing
from .model import (
    ComplexPair,
    PwlCurve,
    SingularKind,
    SingularPoint,
    SystemParams,
    discriminant_curve,
    find_singular_points,
)
from .returnmap import TOL_CENTER, TOL_FIXEDPOINT, CycleSize, LimitCycle, half_map_region, search_cycles
from .sewing import Section, SewedSystem, Side, TrajTerminal

__all__ = [
    "alpha_star",
    "alpha_star_printed",
    "SeparatrixSlopes",
    "SeparatrixData",
    "separatrix_slopes",
    "separatrix_data",
    "BetaInvarianceSample",
    "beta_invariance_check",
    "separatrix_gap",
    "find_separatrix_loop",
    "CellOptions",
    "CellReport",
    "Overlay",
    "BifurcationDiagram",
    "analyze_cell",
    "scan_diagram",
    "VerifyReport",
    "verify_bound",
    "verify_cells",
    "write_scan_csv",
    "read_scan_csv",
    "FLAG_TOKENS",
]

FLAG_TOKENS = (
    "SewedCenter",
    "EquilibriumSegment",
    "SeparatrixLoopNear",
    "DoubleCycleNear",
    "NonReturning",
    "MultipleSmallInPair",
)


# -- sewed center -------------------------------------------------------------


def _center_balance(k1: float, k2: float, alpha: float) -> float:
    """``sigma1*omega2 + sigma2*omega1``; zero exactly where the half-turn decays cancel."""
    s1 = -(1.0 + k1) / 2.0
    s2 = (k2 - 1.0) / 2.0
    w1 = math.sqrt(max(k1 + alpha - s1 * s1, 0.0))
    w2 = math.sqrt(max(alpha - k2 - s2 * s2, 0.0))
    return s1 * w2 + s2 * w1


def alpha_star(k1: float, k2: float) -> float:
    """Slope ``alpha`` at which a corner on the zero isocline is a sewed center.

    Root of ``sigma1/omega1 + sigma2/omega2 = 0`` over the range where both
    adjacent pieces have complex eigenvalues.
    """
    if not k2 > 1.0:
        raise NoRoot(f"no sewed center for k2 = {k2} <= 1 (the dropping piece is not repelling)")
    lo = (k2 + 1.0) ** 2 / 4.0
    lo = max(lo, (k1 - 1.0) ** 2 / 4.0)
    hi = 1e3 * k2
    h_lo = _center_balance(k1, k2, lo)
    h_hi = _center_balance(k1, k2, hi)
    if h_lo == 0.0:
        return lo
    if (h_lo > 0) == (h_hi > 0):
        raise NoRoot(f"sigma/omega balance keeps one sign on ({lo}, {hi}] for k1={k1}, k2={k2}")
    return brentq(lambda a: _center_balance(k1, k2, a), lo, hi, xtol=1e-14, rtol=1e-13, maxiter=500)


def alpha_star_printed(k1: float, k2: float) -> float:
    """The alternative closed form ``(1 - k1/k2)/(k2 - k1 + 2)``, reported for comparison only."""
    return (1.0 - k1 / k2) / (k2 - k1 + 2.0)


# -- separatrices -------------------------------------------------------------


@dataclass(frozen=True)
class SeparatrixSlopes:
    eps: float
    alpha_exact: float
    omega_exact: float
    alpha_first_order: float
    omega_first_order: float


@dataclass(frozen=True)
class SeparatrixData:
    saddle: SingularPoint
    slope_alpha_sep: float
    slope_omega_sep: float
    eigvec_unstable: tuple[float, float]
    eigvec_stable: tuple[float, float]


def _saddle_eigenvalues(k2: float, alpha: float) -> tuple[float, float]:
    """Roots of ``l^2 - (k2-1) l - eps = 0`` without cancellation."""
    eps = k2 - alpha
    b = k2 - 1.0
    disc = b * b + 4.0 * eps
    if disc < 0.0:
        raise NotSaddle(f"complex eigenvalues at k2={k2}, alpha={alpha}")
    if b >= 0.0:
        lu = 0.5 * (b + math.sqrt(disc))
        ls = -eps / lu if lu != 0.0 else 0.0
    else:
        ls = 0.5 * (b - math.sqrt(disc))
        lu = -eps / ls
    return lu, ls


def separatrix_slopes(k2: float, alpha: float) -> SeparatrixSlopes:
    """Exact separatrix slopes of the dropping-piece saddle and their first-order forms in ``eps = k2 - alpha``."""
    if alpha > k2:
        raise NotSaddle(f"alpha = {alpha} > k2 = {k2}: the dropping piece has no saddle")
    if k2 == 1.0:
        raise NotSaddle("k2 = 1 makes the first-order expansion singular")
    eps = k2 - alpha
    lu, ls = _saddle_eigenvalues(k2, alpha)
    return SeparatrixSlopes(
        eps=eps,
        alpha_exact=lu - k2,
        omega_exact=ls - k2,
        alpha_first_order=-1.0 + eps / (k2 - 1.0),
        omega_first_order=-k2 - eps / (k2 - 1.0),
    )


def separatrix_data(curve: PwlCurve, params: SystemParams, saddle: SingularPoint) -> SeparatrixData:
    if saddle.kind is not SingularKind.Saddle or saddle.region is None or saddle.region.index % 2:
        raise NotSaddle(f"{saddle.kind.value} in {saddle.region} is not a dropping-piece saddle")
    sl = separatrix_slopes(curve.k2, params.alpha)
    vu = _unit((1.0, sl.alpha_exact))
    vs = _unit((1.0, sl.omega_exact))
    return SeparatrixData(saddle, sl.alpha_exact, sl.omega_exact, vu, vs)


def _unit(v) -> tuple[float, float]:
    n = math.hypot(v[0], v[1])
    return v[0] / n, v[1] / n


# -- beta invariance ----------------------------------------------------------


@dataclass(frozen=True)
class BetaInvarianceSample:
    beta: float
    kappa: float
    s0: float
    s1: float
    s1_prime: float
    s1_formula: float

    @property
    def ratio(self) -> float:
        return self.s1 / self.s1_prime


def _auto_gamma0(rf: RegionFlow, delta0: float, kappa: float) -> float:
    """Smallest power of two ``g`` such that ``S0 = g*kappa`` has a first return."""
    g = 1.0
    for _ in range(60):
        try:
            half_map_region(g * kappa, rf.sigma, rf.eigen.omega, delta0, inside=True)
            return g
        except NoSolution:
            g *= 2.0
    raise GeometryError("no starting segment returns through the ascending piece")


def beta_invariance_check(
    curve: PwlCurve,
    alpha: float,
    beta_samples: Sequence[float],
    corner: int = 1,
    gamma0: float | None = None,
) -> list[BetaInvarianceSample]:
    """Segments cut on the sewing line of an ascending-to-dropping corner as ``beta`` moves.

    ``kappa`` is how far the zero isocline sits below the corner. From the
    point ``S0 = gamma0*kappa`` below the corner, ``S1`` is where the
    ascending-piece flow returns above the corner (also evaluated through the
    half-turn formula as ``s1_formula``) and ``S1'`` is where the dropping-piece
    flow, run backwards from the same point, meets the line above the corner.
    Both pieces are affine with the offset proportional to ``kappa``, so every
    segment scales with ``kappa`` and ``S1/S1'`` stays fixed.
    """
    if corner % 2 == 0:
        raise GeometryError("the check needs a corner with the ascending piece on its left")
    xj, yj = curve.corners[corner - 1]
    beta0 = alpha * xj + yj
    out = []
    for beta in beta_samples:
        kappa = beta0 - beta
        if not kappa > 0.0:
            raise GeometryError(f"beta = {beta} does not place the zero isocline below corner {corner}")
        system = SewedSystem(curve, SystemParams(alpha, beta))
        left = system.flow(corner)
        if left.virtual or not isinstance(left.eigen, ComplexPair):
            raise GeometryError("the ascending piece has no focus inside its strip")
        delta0 = xj - left.equilibrium[0]
        if gamma0 is None:
            gamma0 = _auto_gamma0(left, delta0, kappa)
        s0 = gamma0 * kappa
        start = (xj, yj - s0)
        ev = boundary_crossing(left, start, left.region.x_lo, left.region.x_hi)
        if ev.terminal is not Terminal.Crossed or ev.next_region != corner + 1 or ev.exit_point[1] <= yj:
            raise GeometryError("forward ascending-piece orbit does not return above the corner")
        back = system.reversed().flow(corner + 1)
        evb = boundary_crossing(back, start, back.region.x_lo, back.region.x_hi)
        if evb.terminal is not Terminal.Crossed or evb.next_region != corner or evb.exit_point[1] <= yj:
            raise GeometryError("backward dropping-piece orbit does not meet the line above the corner")
        s1f, _ = half_map_region(s0, left.sigma, left.eigen.omega, delta0, inside=True)
        out.append(BetaInvarianceSample(beta, kappa, s0, ev.exit_point[1] - yj, evb.exit_point[1] - yj, s1f))
    return out


# -- separatrix loops ---------------------------------------------------------


def _saddle_in(curve: PwlCurve, params: SystemParams, region: int) -> SingularPoint:
    for p in find_singular_points(curve, params):
        if p.kind is SingularKind.Saddle and p.region is not None and p.region.index == region:
            return p
    raise NotSaddle(f"no saddle in region {region} at alpha={params.alpha}, beta={params.beta}")


def separatrix_gap(
    curve: PwlCurve, params: SystemParams, saddle_region: int = 2, side: str = "left", max_crossings: int = 200
) -> float:
    """Signed gap between the saddle's separatrices on the ray where a loop would close.

    The separatrices are straight inside the saddle's own strip, so they reach
    the strip boundary in closed form. For ``side="left"`` the unstable branch
    is followed around the left neighbour until it meets the ray above the
    left corner, where the stable branch also arrives; the returned value is
    ``S_unstable - S_stable`` (taking ``S_unstable = 0`` when the branch is
    captured by the neighbouring equilibrium before it gets there). ``side="right"`` is the mirror construction on
    the ray below the right corner. A zero is a homoclinic loop.
    """
    system = SewedSystem(curve, params)
    saddle = _saddle_in(curve, params, saddle_region)
    data = separatrix_data(curve, params, saddle)
    x0, y0 = saddle.location
    region = curve.region(saddle_region)
    if side == "left":
        j, ray = saddle_region - 1, Side.Above
    elif side == "right":
        j, ray = saddle_region, Side.Below
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    xj, yj = curve.corners[j - 1]
    # both branches leave along +-v and hit x = xj at a closed-form point
    yu = y0 + data.eigvec_unstable[1] / data.eigvec_unstable[0] * (xj - x0)
    ys = y0 + data.eigvec_stable[1] / data.eigvec_stable[0] * (xj - x0)
    if side == "left" and not (yu < yj < ys):
        raise GeometryError("separatrices do not straddle the left corner")
    if side == "right" and not (ys < yj < yu):
        raise GeometryError("separatrices do not straddle the right corner")
    if not region.contains(xj):
        raise GeometryError("corner outside the saddle strip")
    section = Section(j, ray)
    s_s = abs(ys - yj)
    traj = system.sew((xj, yu), max_crossings=max_crossings, until=section)
    if traj.terminal is TrajTerminal.ConvergedToEquilibrium and traj.regions == [j if side == "left" else j + 1]:
        # captured by the neighbouring antisaddle before coming back: inside the loop
        return -s_s
    if traj.terminal is not TrajTerminal.Crossed:
        raise GeometryError(f"unstable separatrix does not reach the loop section ({traj.terminal.value})")
    return abs(traj.end[1] - yj) - s_s


def find_separatrix_loop(
    curve: PwlCurve,
    beta_rule: Callable[[float], float],
    alpha_bracket: tuple[float, float],
    saddle_region: int = 2,
    side: str = "left",
    tol: float = 1e-9,
) -> float:
    """``alpha`` of a homoclinic loop along ``beta = beta_rule(alpha)``, by bisection on the gap."""
    a, b = alpha_bracket
    if not a < b:
        raise BadRange(f"empty alpha bracket {alpha_bracket}")

    def gap(alpha):
        return separatrix_gap(curve, SystemParams(alpha, beta_rule(alpha)), saddle_region, side)

    ga, gb = gap(a), gap(b)
    if ga == 0.0:
        return a
    if gb == 0.0:
        return b
    if (ga > 0) == (gb > 0):
        raise NoSignChange(f"separatrix gap keeps its sign on [{a}, {b}] ({ga:.3g}, {gb:.3g})")
    while b - a > tol:
        m = 0.5 * (a + b)
        gm = gap(m)
        if gm == 0.0:
            return m
        if (gm > 0) == (ga > 0):
            a, ga = m, gm
        else:
            b = m
    return 0.5 * (a + b)


# -- parameter-plane scan ----------------------------------------------------


@dataclass(frozen=True)
class CellOptions:
    n_samples: int = 48
    s_range: tuple[float, float] | None = None
    tol_fixedpoint: float = TOL_FIXEDPOINT
    tol_center: float = TOL_CENTER
    max_crossings: int = 60
    loop_tol: float = 1e-3
    tol_crossing: float = CROSS_TOL


@dataclass
class CellReport:
    alpha: float
    beta: float
    n_singular: int
    n_small: int
    n_big: int
    flags: set[str] = field(default_factory=set)
    singular: list[dict] = field(default_factory=list)
    cycles: list[dict] = field(default_factory=list)
    error: str | None = None

    @property
    def total(self) -> int:
        return self.n_small + self.n_big

    def flag_string(self) -> str:
        return ";".join(t for t in FLAG_TOKENS if t in self.flags)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "n_singular": self.n_singular,
            "n_small": self.n_small,
            "n_big": self.n_big,
            "flags": [t for t in FLAG_TOKENS if t in self.flags],
            "singular": self.singular,
            "cycles": self.cycles,
            "error": self.error,
        }


def _small_pairs(cycles: Sequence[LimitCycle]) -> Counter:
    return Counter(c.regions_spanned for c in cycles if c.size is CycleSize.Small)


def analyze_cell(curve: PwlCurve, alpha: float, beta: float, options: CellOptions = CellOptions()) -> CellReport:
    """Singular points, limit cycles and flags of one parameter point.

    Numerical trouble is recorded on the report (flag ``NonReturning``) and
    never raised, so that one bad cell cannot abort a scan.
    """
    params = SystemParams(alpha, beta)
    try:
        points = find_singular_points(curve, params, center_tol=options.tol_center)
    except PldsError as exc:
        return CellReport(alpha, beta, 0, 0, 0, {"NonReturning"}, error=f"{type(exc).__name__}: {exc}")
    rep = CellReport(alpha, beta, len(points), 0, 0, singular=[p.to_dict() for p in points])
    kinds = {p.kind for p in points}
    if SingularKind.SewedCenter in kinds:
        rep.flags.add("SewedCenter")
    if SingularKind.EquilibriumSegment in kinds:
        rep.flags.add("EquilibriumSegment")

    system = SewedSystem(curve, params, tol_crossing=options.tol_crossing)
    try:
        found = search_cycles(
            system,
            n=options.n_samples,
            s_range=options.s_range,
            tol_fixedpoint=options.tol_fixedpoint,
            tol_center=options.tol_center,
            max_crossings=options.max_crossings,
        )
    except PldsError as exc:
        rep.flags.add("NonReturning")
        rep.error = f"{type(exc).__name__}: {exc}"
        return rep
    rep.n_small = found.n_small
    rep.n_big = found.n_big
    rep.cycles = [c.to_dict() for c in found.cycles]
    if found.continuum:
        rep.flags.add("SewedCenter")
    if found.double_near:
        rep.flags.add("DoubleCycleNear")
    if found.nonreturning:
        rep.flags.add("NonReturning")
    if any(n > 1 for n in _small_pairs(found.cycles).values()):
        rep.flags.add("MultipleSmallInPair")

    for p in points:
        if p.kind is not SingularKind.Saddle or p.region is None or p.region.index % 2:
            continue
        for side in ("left", "right"):
            try:
                g = separatrix_gap(curve, params, p.region.index, side, options.max_crossings)
            except PldsError:
                continue
            if abs(g) <= options.loop_tol * curve.scale:
                rep.flags.add("SeparatrixLoopNear")
    return rep


@dataclass(frozen=True)
class Overlay:
    """A curve drawn over the diagram: ``beta = slope*alpha + intercept`` or a vertical line."""

    kind: str
    label: str
    slope: float | None = None
    intercept: float | None = None
    alpha: float | None = None
    points: tuple[tuple[float, float], ...] = ()

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v not in (None, ())}


@dataclass
class BifurcationDiagram:
    """Scan result; ``cells[i][j]`` belongs to ``(alpha_grid[i], beta_grid[j])``."""

    curve: PwlCurve
    alpha_grid: np.ndarray
    beta_grid: np.ndarray
    cells: list[list[CellReport]]
    curves: list[Overlay] = field(default_factory=list)

    def __post_init__(self):
        if len(self.cells) != len(self.alpha_grid) or any(len(r) != len(self.beta_grid) for r in self.cells):
            raise ValueError("cell matrix does not match the grids")

    def iter_cells(self):
        """Cells in row-major order (alpha outer, beta inner)."""
        for row in self.cells:
            yield from row


def _grid(lo: float, hi: float, n: int, name: str) -> np.ndarray:
    if n < 1:
        raise BadRange(f"{name} grid needs at least one point, got {n}")
    if hi < lo or (n > 1 and hi == lo):
        raise BadRange(f"empty {name} range [{lo}, {hi}]")
    if lo <= 0.0:
        raise BadRange(f"{name} range must be positive, got [{lo}, {hi}]")
    return np.array([lo]) if n == 1 else np.linspace(lo, hi, n)


def _cell_job(args) -> CellReport:
    curve, alpha, beta, options = args
    return analyze_cell(curve, alpha, beta, options)


def scan_diagram(
    curve: PwlCurve,
    alpha_range: tuple[float, float],
    beta_range: tuple[float, float],
    na: int,
    nb: int,
    options: CellOptions = CellOptions(),
    threads: int = 1,
) -> BifurcationDiagram:
    """Analyze every cell of an ``na x nb`` grid; cells run in parallel processes when ``threads > 1``."""
    ag = _grid(alpha_range[0], alpha_range[1], na, "alpha")
    bg = _grid(beta_range[0], beta_range[1], nb, "beta")
    jobs = [(curve, float(a), float(b), options) for a in ag for b in bg]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(_cell_job, jobs, chunksize=max(1, len(jobs) // (8 * threads))))
    else:
        flat = [_cell_job(j) for j in jobs]
    cells = [flat[i * nb:(i + 1) * nb] for i in range(na)]
    diagram = BifurcationDiagram(curve, ag, bg, cells)
    diagram.curves = _overlays(diagram)
    return diagram


def _overlays(d: BifurcationDiagram) -> list[Overlay]:
    out = []
    disc = discriminant_curve(d.curve)
    for ln in disc.lines:
        out.append(Overlay("discriminant", f"corner {ln.corner}", slope=ln.slope, intercept=ln.intercept))
    try:
        out.append(Overlay("alpha_star", "sewed center", alpha=alpha_star(d.curve.k1, d.curve.k2)))
    except NoRoot:
        pass
    folds = tuple((c.alpha, c.beta) for c in d.iter_cells() if "DoubleCycleNear" in c.flags)
    loops = tuple((c.alpha, c.beta) for c in d.iter_cells() if "SeparatrixLoopNear" in c.flags)
    if folds:
        out.append(Overlay("fold", "double cycle near", points=folds))
    if loops:
        out.append(Overlay("loop", "separatrix loop near", points=loops))
    return out


# -- bound verification -------------------------------------------------------


@dataclass
class VerifyReport:
    passed: bool
    max_total: int
    bound: int
    violations: list[dict]

    def to_dict(self) -> dict:
        return {"pass": self.passed, "max_total": self.max_total, "bound": self.bound, "violations": self.violations}


def verify_bound(diagram: BifurcationDiagram, k: int | None = None) -> VerifyReport:
    """Check every cell against ``total <= k+2``, ``small <= k+1``, ``big <= 2`` and one small cycle per strip pair."""
    return verify_cells(diagram.iter_cells(), diagram.curve.k if k is None else k)


def verify_cells(cells: Iterable[CellReport], k: int) -> VerifyReport:
    """The bound check of :func:`verify_bound` on bare cells, e.g. read back from a scan CSV."""
    if k < 1:
        raise BadRange(f"number of dropping sections must be positive, got {k}")
    bound = k + 2
    violations = []
    max_total = 0
    for c in cells:
        max_total = max(max_total, c.total)
        why = []
        if c.total > bound:
            why.append(f"total {c.total} > {bound}")
        if c.n_small > k + 1:
            why.append(f"small {c.n_small} > {k + 1}")
        if c.n_big > 2:
            why.append(f"big {c.n_big} > 2")
        if "MultipleSmallInPair" in c.flags:
            why.append("more than one small cycle in a strip pair")
        if why:
            violations.append(
                {"alpha": c.alpha, "beta": c.beta, "reasons": why, "cycles": c.cycles, "flags": sorted(c.flags)}
            )
    return VerifyReport(not violations, max_total, bound, violations)


# -- scan CSV -----------------------------------------------------------------


def write_scan_csv(fh, diagram: BifurcationDiagram) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["alpha", "beta", "n_singular", "n_small", "n_big", "flags"])
    for c in diagram.iter_cells():
        w.writerow([repr(c.alpha), repr(c.beta), c.n_singular, c.n_small, c.n_big, c.flag_string()])


def read_scan_csv(fh) -> list[CellReport]:
    out = []
    for r in csv.DictReader(fh):
        flags = {t for t in r["flags"].split(";") if t}
        out.append(
            CellReport(float(r["alpha"]), float(r["beta"]), int(r["n_singular"]), int(r["n_small"]), int(r["n_big"]), flags)
        )
    return out
