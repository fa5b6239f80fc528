"""Sewed Poincare return maps on sewing-line sections and limit-cycle extraction."""

from __future__ import annotations

import bisect
import csv
import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import NoSolution, OpenTrajectory, PldsError
from .model import PwlCurve, SystemParams
from .sewing import Section, SewedSystem, SewnTrajectory, Side, TrajTerminal, section_coordinate, section_point

__all__ = [
    "zeta",
    "chi",
    "half_map_region",
    "zeta_inverse",
    "Branch",
    "MapSample",
    "ReturnMap",
    "build_return_map",
    "evaluate_return",
    "map_derivative",
    "equilibrium_segment_map",
    "equilibrium_segment_fixed_point",
    "Stability",
    "CycleSize",
    "LimitCycle",
    "LimitCycles",
    "find_limit_cycles",
    "CycleSearch",
    "search_cycles",
    "all_sections",
    "default_s_range",
    "write_map_csv",
    "read_map_csv",
]

TOL_FIXEDPOINT = 1e-10
TOL_CENTER = 1e-9
DOUBLE_TOL = 1e-4
_EPS = float(np.finfo(float).eps)
_RTOL = 4.0 * _EPS


# -- half-turn map of one focus strip ----------------------------------------


def zeta(tau: float, sigma: float, omega: float) -> float:
    """Distance below the corner, per unit equilibrium distance, of an arc taking time ``tau``."""
    wt = omega * tau
    return (omega * math.cos(wt) - sigma * math.sin(wt) - omega * math.exp(-sigma * tau)) / math.sin(wt)


def chi(tau: float, sigma: float, omega: float) -> float:
    """Exit distance above the corner, per unit equilibrium distance (time-reversed ``zeta``)."""
    wt = omega * tau
    return (omega * math.cos(wt) + sigma * math.sin(wt) - omega * math.exp(sigma * tau)) / math.sin(wt)


def _tau_bracket(sigma: float, omega: float, inside: bool) -> tuple[float, float]:
    half = math.pi / omega
    if not inside:
        return half * 1e-12, half * (1.0 - 1e-12)
    # first-return branch: zeta decreases from +inf just after a half-turn
    lo = half * (1.0 + 1e-12)
    hi = 2.0 * half * (1.0 - 1e-12)
    if sigma < 0.0 or zeta(hi, sigma, omega) > 0.0:
        res = minimize_scalar(
            lambda t: zeta(t, sigma, omega), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13 * half}
        )
        hi = float(res.x)
    return lo, hi


def zeta_inverse(s_ratio: float, sigma: float, omega: float, inside: bool = False) -> float:
    """Arc time ``tau`` with ``|zeta(tau)| = s_ratio`` on the physical branch.

    ``inside=False`` is the case where the equilibrium lies across the sewing
    line (less than a half-turn, ``tau < pi/omega``); ``inside=True`` is a
    real equilibrium in the strip, where the orbit needs more than a half-turn
    and may not return at all.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    lo, hi = _tau_bracket(sigma, omega, inside)
    sign = 1.0 if inside else -1.0
    g = lambda t: sign * zeta(t, sigma, omega) - s_ratio  # noqa: E731
    glo, ghi = g(lo), g(hi)
    if (glo > 0) == (ghi > 0):
        raise NoSolution(
            f"no arc with S0/delta0 = {s_ratio:g}: the orbit does not reach the sewing line again"
        )
    return brentq(g, lo, hi, xtol=1e-15 * hi, rtol=1e-15, maxiter=200)


def half_map_region(
    s0: float, sigma: float, omega: float, delta0: float, inside: bool = False
) -> tuple[float, float]:
    """Map a distance ``s0`` below the corner to the exit distance above it.

    With ``delta0 == 0`` the equilibrium sits on the sewing line and the map is
    the linear half-turn ``s0 * exp(pi*sigma/omega)``.  Returns ``(s1, tau)``.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if s0 <= 0:
        raise ValueError("s0 must be positive")
    if delta0 < 0:
        raise ValueError("delta0 is a distance and must be nonnegative")
    if delta0 == 0.0:
        return s0 * math.exp(math.pi * sigma / omega), math.pi / omega
    tau = zeta_inverse(s0 / delta0, sigma, omega, inside)
    s1 = delta0 * chi(tau, sigma, omega) * (1.0 if inside else -1.0)
    return s1, tau


# -- equilibrium-segment map --------------------------------------------------


def equilibrium_segment_map(s0: float, sigma1: float, omega1: float, delta: float, k2: float) -> float:
    """Affine return map around an equilibrium segment of width ``delta``."""
    q = math.exp(math.pi * sigma1 / omega1)
    return s0 * q * q + delta * (k2 - 1.0) * (1.0 + q)


def equilibrium_segment_fixed_point(sigma1: float, omega1: float, delta: float, k2: float) -> float:
    if sigma1 >= 0:
        raise ValueError("the segment map has an attracting fixed point only for sigma1 < 0")
    q = math.exp(math.pi * sigma1 / omega1)
    return delta * (k2 - 1.0) * (1.0 + q) / (1.0 - q * q)


# -- simulated return maps -----------------------------------------------------


class Branch(str, enum.Enum):
    Xi = "Xi"
    Psi = "Psi"


@dataclass(frozen=True)
class MapSample:
    s0: float
    s0_bar: float
    deriv: float
    branch: Branch
    regions: tuple[int, ...]


@dataclass
class ReturnMap:
    system: SewedSystem
    section: Section
    samples: list[MapSample]
    s_star: float | None = None
    failures: list[tuple[float, str]] = field(default_factory=list)

    @property
    def branch_labels(self) -> list[Branch]:
        return [s.branch for s in self.samples]

    def arrays(self):
        s = np.array([m.s0 for m in self.samples])
        f = np.array([m.s0_bar for m in self.samples])
        d = np.array([m.deriv for m in self.samples])
        return s, f, d


def map_derivative(traj: SewnTrajectory, s0: float, s0_bar: float, system: SewedSystem) -> float:
    """Derivative of the return map from the arc dwell times.

    The normal speed through a vertical sewing line is ``|y - y_j|``, so the
    product of per-arc Jacobians telescopes to ``(s0/s0_bar) exp(sum trace_i tau_i)``.
    """
    if traj.terminal is not TrajTerminal.Crossed:
        raise OpenTrajectory(f"trajectory did not return to the section ({traj.terminal.value})")
    expo = 0.0
    for arc in traj.arcs:
        expo += 2.0 * system.sigma(arc.region) * arc.tau
    return (s0 / s0_bar) * math.exp(expo)


def _branch(system: SewedSystem, regions) -> Branch:
    last = system.curve.n_regions
    return Branch.Psi if (1 in regions and last in regions) else Branch.Xi


def evaluate_return(system: SewedSystem, section: Section, s0: float, max_crossings: int = 200):
    """``(sample, trajectory)`` for one start, or ``(None, trajectory)`` when it does not return."""
    start = section_point(system.curve, section, s0)
    traj = system.sew(start, max_crossings=max_crossings, until=section)
    if traj.terminal is not TrajTerminal.Crossed:
        return None, traj
    s_bar = section_coordinate(system.curve, section, traj.end)
    if s_bar <= 0.0:
        return None, traj
    regions = tuple(traj.regions)
    d = map_derivative(traj, s0, s_bar, system)
    return MapSample(s0, s_bar, d, _branch(system, regions), regions), traj


def _failure_reason(system: SewedSystem, section: Section, traj: SewnTrajectory) -> str:
    """Terminal name, or ``Captured`` when the orbit settled away from the section line."""
    if traj.terminal is TrajTerminal.MaxCrossings:
        xj = system.curve.corners[section.corner_index - 1][0]
        tail = traj.arcs[len(traj.arcs) // 2:]
        if not any(a.exit[0] == xj for a in tail):
            return "Captured"
    return traj.terminal.value


def default_s_range(curve: PwlCurve) -> tuple[float, float]:
    L = curve.scale
    return 1e-5 * L, 30.0 * L


def build_return_map(
    curve: PwlCurve | SewedSystem,
    params: SystemParams | None,
    section: Section,
    s_range: tuple[float, float] | None = None,
    n: int = 200,
    spacing: str = "log",
    max_crossings: int = 200,
    locate_switch: bool = True,
) -> ReturnMap:
    """Sample the first-return map of ``section`` on ``n`` points of ``s_range``.

    With ``locate_switch`` the boundary ``s_star`` between the two-region and
    the full circuit is refined by bisection.
    """
    system = curve if isinstance(curve, SewedSystem) else SewedSystem(curve, params)
    if n < 2:
        raise ValueError("need at least two samples")
    lo, hi = s_range if s_range is not None else default_s_range(system.curve)
    if not (0.0 < lo < hi):
        raise ValueError(f"bad section range {s_range}")
    grid = np.geomspace(lo, hi, n) if spacing == "log" else np.linspace(lo, hi, n)
    samples: list[MapSample] = []
    failures: list[tuple[float, str]] = []
    for s0 in grid:
        s0 = float(s0)
        try:
            sample, traj = evaluate_return(system, section, s0, max_crossings)
        except PldsError as exc:
            failures.append((s0, f"error: {exc}"))
            continue
        if sample is None:
            failures.append((s0, _failure_reason(system, section, traj)))
        else:
            samples.append(sample)
    rm = ReturnMap(system, section, samples, failures=failures)
    if locate_switch:
        rm.s_star = _locate_s_star(rm, max_crossings)
    return rm


def _locate_s_star(rm: ReturnMap, max_crossings: int) -> float | None:
    for a, b in zip(rm.samples, rm.samples[1:]):
        if a.branch is Branch.Xi and b.branch is Branch.Psi:
            lo, hi = a.s0, b.s0
            while hi - lo > 1e-10 * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                sample, _ = evaluate_return(rm.system, rm.section, mid, max_crossings)
                if sample is None:
                    return None
                if sample.branch is Branch.Xi:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
    return None


def write_map_csv(fh, rm: ReturnMap) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["S0", "S0_bar", "deriv", "branch"])
    for m in rm.samples:
        w.writerow([repr(m.s0), repr(m.s0_bar), repr(m.deriv), m.branch.value])


def read_map_csv(fh) -> list[tuple[float, float, float, Branch]]:
    rows = list(csv.DictReader(fh))
    return [(float(r["S0"]), float(r["S0_bar"]), float(r["deriv"]), Branch(r["branch"])) for r in rows]


# -- limit cycles --------------------------------------------------------------


class Stability(str, enum.Enum):
    Stable = "Stable"
    Unstable = "Unstable"
    SemiStable = "SemiStable"


class CycleSize(str, enum.Enum):
    Small = "Small"
    Big = "Big"


@dataclass(frozen=True)
class LimitCycle:
    section: Section
    s_fixed: float
    stability: Stability
    multiplicity_hint: int
    size: CycleSize
    regions_spanned: tuple[int, ...]
    deriv: float
    period: float
    canonical: float = math.nan

    def to_dict(self) -> dict:
        return {
            "corner": self.section.corner_index,
            "side": self.section.side.value,
            "s_fixed": self.s_fixed,
            "stability": self.stability.value,
            "multiplicity_hint": self.multiplicity_hint,
            "size": self.size.value,
            "regions": list(self.regions_spanned),
            "deriv": self.deriv,
            "period": self.period,
        }


class LimitCycles(list):
    """List of :class:`LimitCycle` carrying search flags.

    ``continuum`` marks a run of samples on which the map is the identity
    (a sewed center's annulus of closed orbits); ``double_near`` marks a
    tangency of the map with the diagonal within tolerance.
    """

    def __init__(self, cycles=(), continuum: bool = False, double_near: bool = False):
        super().__init__(cycles)
        self.continuum = continuum
        self.double_near = double_near


def _cycle(rm: ReturnMap, s: float, stability: Stability | None, max_crossings: int) -> LimitCycle | None:
    sample, traj = evaluate_return(rm.system, rm.section, s, max_crossings)
    if sample is None:
        return None
    # report the forward-time multiplier whichever direction the map runs in
    d = 1.0 / sample.deriv if rm.system.reverse else sample.deriv
    mult = 2 if abs(d - 1.0) <= DOUBLE_TOL else 1
    if stability is None:
        stability = Stability.Stable if d < 1.0 else Stability.Unstable
    size = CycleSize.Small if len(sample.regions) <= 2 else CycleSize.Big
    key = _canonical_crossing(rm.system, rm.section, s, traj)
    return LimitCycle(rm.section, s, stability, mult, size, sample.regions, d, traj.total_time, key)


def _canonical_crossing(system: SewedSystem, section: Section, s: float, traj: SewnTrajectory) -> float:
    """Distance below the lowest spanned corner where the closed orbit crosses it leftwards.

    The same cycle seen from different rays gets the same value, which is
    what deduplication compares.
    """
    j0 = min(traj.regions)
    if section.corner_index == j0 and section.side is Side.Below:
        return s
    xj, yj = system.curve.corners[j0 - 1]
    for a in traj.arcs:
        if a.exit[0] == xj and a.exit[1] < yj:
            return yj - a.exit[1]
    return math.nan


def _accept_root(g_root: float, s: float, deriv: float) -> bool:
    # Brent converges onto jumps of the map too. After refinement to machine
    # precision a true fixed point leaves a residual of a few ulps times the
    # slope of g; a jump leaves a residual of the size of the jump.
    return abs(g_root) <= 1e-6 * (1.0 + s) + 8.0 * abs(deriv - 1.0) * _EPS * s


def find_limit_cycles(
    rm: ReturnMap,
    tol_fixedpoint: float = TOL_FIXEDPOINT,
    tol_center: float = TOL_CENTER,
    max_crossings: int = 200,
) -> LimitCycles:
    """Isolated fixed points of a sampled return map.

    Sign changes of ``g = f(S) - S`` between consecutive returning samples are
    refined by Brent's method. Where ``f' - 1`` changes sign between samples
    the extremum of ``g`` is located, which uncovers pairs of nearby cycles and
    tangencies with the diagonal. Roots that turn out to be jumps of the map
    (trajectories splitting at a saddle) are discarded.
    """
    if len(rm.samples) < 2:
        return LimitCycles()
    smp = rm.samples
    g = [m.s0_bar - m.s0 for m in smp]
    zero = [abs(gi) <= tol_center * (1.0 + m.s0) for gi, m in zip(g, smp)]
    run = best = 0
    for z in zero:
        run = run + 1 if z else 0
        best = max(best, run)
    continuum = best >= 3
    # samples are consecutive in the grid unless a failure sits between them
    failed = sorted(s for s, _ in rm.failures)

    def adjacent(a: float, b: float) -> bool:
        i = bisect.bisect_right(failed, a)
        return i >= len(failed) or failed[i] >= b

    def sample_at(s: float) -> MapSample:
        sample, _ = evaluate_return(rm.system, rm.section, s, max_crossings)
        if sample is None:
            raise NoSolution("return lost inside a bracket")
        return sample

    def gfun(s: float) -> float:
        m = sample_at(s)
        return m.s0_bar - s

    cycles: list[LimitCycle] = []
    double_near = False

    def refine(lo: float, hi: float) -> None:
        nonlocal double_near
        try:
            s = brentq(gfun, lo, hi, xtol=min(tol_fixedpoint, _EPS) * lo, rtol=_RTOL, maxiter=300)
            m = sample_at(s)
        except (PldsError, ValueError, RuntimeError):
            return
        if not _accept_root(m.s0_bar - s, s, m.deriv):
            return
        cyc = _cycle(rm, s, None, max_crossings)
        if cyc is not None:
            double_near |= cyc.multiplicity_hint == 2
            cycles.append(cyc)

    for i in range(len(smp) - 1):
        a, b = smp[i], smp[i + 1]
        if not adjacent(a.s0, b.s0) or zero[i] or zero[i + 1]:
            continue
        ga, gb = g[i], g[i + 1]
        if (ga > 0) != (gb > 0):
            refine(a.s0, b.s0)
        elif (a.deriv > 1.0) != (b.deriv > 1.0) and a.regions == b.regions:
            # g has an extremum between the samples
            try:
                s_ext, g_ext = _extremum(rm, a.s0, b.s0, max_crossings)
            except (PldsError, ValueError, RuntimeError):
                continue
            if abs(g_ext) <= DOUBLE_TOL * (1.0 + s_ext):
                double_near = True
            if abs(g_ext) <= tol_fixedpoint * (1.0 + s_ext):
                cyc = _cycle(rm, s_ext, Stability.SemiStable, max_crossings)
                if cyc is not None:
                    cycles.append(dataclasses.replace(cyc, multiplicity_hint=2))
            elif (g_ext > 0) != (ga > 0):
                refine(a.s0, s_ext)
                refine(s_ext, b.s0)
    return LimitCycles(cycles, continuum=continuum, double_near=double_near)


def _extremum(rm: ReturnMap, lo: float, hi: float, max_crossings: int) -> tuple[float, float]:
    def dm1(s):
        sample, _ = evaluate_return(rm.system, rm.section, s, max_crossings)
        if sample is None:
            raise NoSolution("return lost inside a bracket")
        return sample.deriv - 1.0

    s = brentq(dm1, lo, hi, xtol=1e-12 * lo, maxiter=100)
    sample, _ = evaluate_return(rm.system, rm.section, s, max_crossings)
    return s, sample.s0_bar - s


def all_sections(curve: PwlCurve, sides: Sequence[Side] = (Side.Below,)) -> list[Section]:
    return [Section(j, side) for j in range(1, len(curve.corners) + 1) for side in sides]


@dataclass
class CycleSearch:
    """Distinct limit cycles of a system gathered from several sections."""

    cycles: list[LimitCycle]
    continuum: bool = False
    double_near: bool = False
    nonreturning: bool = False
    maps: list[ReturnMap] = field(default_factory=list)

    @property
    def n_small(self) -> int:
        return sum(c.size is CycleSize.Small for c in self.cycles)

    @property
    def n_big(self) -> int:
        return sum(c.size is CycleSize.Big for c in self.cycles)


_BENIGN = (TrajTerminal.ConvergedToEquilibrium.value, "Captured")
_STEEP = 1e4


def _needs_backward(rm: ReturnMap) -> bool:
    """Whether the forward map leaves room for a cycle it cannot resolve.

    A repelling cycle shows up in a forward map either as a resolvable sign
    change or next to a place where the map is steep, jumps to another
    circuit, or stops returning. Only in the latter cases can the backward map
    add anything.
    """
    if any(r.startswith("error") for _, r in rm.failures):
        return True
    if any(abs(m.deriv) > _STEEP for m in rm.samples):
        return True
    events = sorted([(m.s0, m.regions) for m in rm.samples] + [(s0, r) for s0, r in rm.failures])
    return any(a[1] != b[1] for a, b in zip(events, events[1:]))


def search_cycles(
    system: SewedSystem,
    sections: Sequence[Section] | None = None,
    n: int = 200,
    s_range: tuple[float, float] | None = None,
    tol_fixedpoint: float = TOL_FIXEDPOINT,
    tol_center: float = TOL_CENTER,
    max_crossings: int = 200,
    dedupe_rtol: float = 1e-6,
    backward: bool = True,
) -> CycleSearch:
    """Search the sections in both time directions and merge repeated cycles.

    A cycle passing close to a saddle can have a multiplier far beyond what a
    double-precision forward map can resolve; the backward map contracts
    instead and pins such a cycle easily. A section is searched backwards only
    when its forward map shows a reason to. Each cycle is identified by where
    it crosses the sewing line of its lowest corner, below the corner.
    """
    sections = list(sections) if sections is not None else all_sections(system.curve)
    out = CycleSearch([])
    pending = [(system, sec) for sec in sections]
    rev = system.reversed() if backward else None
    while pending:
        sysm, sec = pending.pop(0)
        rm = build_return_map(
            sysm, None, sec, s_range=s_range, n=n, max_crossings=max_crossings, locate_switch=False
        )
        if rev is not None and sysm is system and _needs_backward(rm):
            pending.append((rev, sec))
        out.maps.append(rm)
        found = find_limit_cycles(rm, tol_fixedpoint, tol_center, max_crossings)
        out.continuum |= found.continuum
        out.double_near |= found.double_near
        # escaping to infinity is normal in backward time, and settling onto an
        # attractor that never meets the section line is normal in forward time
        out.nonreturning |= any(
            r.startswith("error") or (not sysm.reverse and r not in _BENIGN)
            for _, r in rm.failures
        )
        for cyc in found:
            if not any(_same_cycle(cyc, c, dedupe_rtol) for c in out.cycles):
                out.cycles.append(cyc)
    return out


def _same_cycle(a: LimitCycle, b: LimitCycle, rtol: float) -> bool:
    if a.regions_spanned != b.regions_spanned:
        return False
    if math.isnan(a.canonical) or math.isnan(b.canonical):
        return a.section == b.section and abs(a.s_fixed - b.s_fixed) <= rtol * (1.0 + abs(a.s_fixed))
    return abs(a.canonical - b.canonical) <= rtol * (1.0 + abs(a.canonical))
