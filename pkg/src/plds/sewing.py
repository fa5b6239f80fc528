"""Global trajectories sewn from the exact strip flows, and sewing-line sections."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import OffSection, PldsError, ToleranceExhausted
from .flow import CROSS_TOL, RegionFlow, Terminal, boundary_crossing, flow_from_matrix, flow_state, region_system
from .model import PwlCurve, SystemParams, corner_on_line

__all__ = [
    "Side",
    "Section",
    "Arc",
    "TrajTerminal",
    "SewnTrajectory",
    "SewedSystem",
    "sew_trajectory",
    "section_coordinate",
    "section_point",
    "phase_portrait",
    "trajectory_rows",
    "write_trajectory_csv",
]

ON_LINE_TOL = 1e-12
SECTION_TOL = 1e-9


class Side(str, enum.Enum):
    Below = "Below"
    Above = "Above"


@dataclass(frozen=True)
class Section:
    """Vertical ray on the sewing line ``x = x_j`` starting at corner ``j``."""

    corner_index: int
    side: Side = Side.Below

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))


def section_coordinate(curve: PwlCurve, section: Section, p) -> float:
    xj, yj = curve.corners[section.corner_index - 1]
    x, y = p
    if abs(x - xj) > SECTION_TOL * (1.0 + abs(xj)):
        raise OffSection(f"point {p} is not on the sewing line x = {xj}")
    d = y - yj
    if section.side is Side.Below and d > SECTION_TOL * (1.0 + abs(yj)):
        raise OffSection(f"point {p} lies above corner {section.corner_index}")
    if section.side is Side.Above and d < -SECTION_TOL * (1.0 + abs(yj)):
        raise OffSection(f"point {p} lies below corner {section.corner_index}")
    return abs(d)


def section_point(curve: PwlCurve, section: Section, s: float) -> tuple[float, float]:
    if s < 0:
        raise OffSection(f"section coordinate must be nonnegative, got {s}")
    xj, yj = curve.corners[section.corner_index - 1]
    return (xj, yj - s) if section.side is Side.Below else (xj, yj + s)


@dataclass(frozen=True)
class Arc:
    region: int
    entry: tuple[float, float]
    exit: tuple[float, float]
    tau: float


class TrajTerminal(str, enum.Enum):
    Crossed = "Crossed"
    ConvergedToEquilibrium = "ConvergedToEquilibrium"
    Unbounded = "Unbounded"
    MaxCrossings = "MaxCrossings"
    Failed = "Failed"


@dataclass
class SewnTrajectory:
    arcs: list[Arc]
    terminal: TrajTerminal
    section: Section | None = None
    tangencies: int = 0
    error: str | None = None

    @property
    def total_time(self) -> float:
        return sum(a.tau for a in self.arcs)

    @property
    def regions(self) -> list[int]:
        return sorted({a.region for a in self.arcs})

    @property
    def end(self) -> tuple[float, float]:
        return self.arcs[-1].exit


def _reversed(rf: RegionFlow) -> RegionFlow:
    (a, b), (c, d) = rf.matrix
    return flow_from_matrix(rf.region, ((-a, -b), (-c, -d)), (-rf.offset[0], -rf.offset[1]))


class SewedSystem:
    """A curve and parameter pair with the strip flows precomputed.

    With ``reverse=True`` every strip flow runs backwards in time, which turns
    strongly repelling cycles into strongly attracting ones.
    """

    def __init__(
        self, curve: PwlCurve, params: SystemParams, reverse: bool = False, tol_crossing: float = CROSS_TOL
    ):
        if not tol_crossing > 0.0:
            raise ValueError(f"crossing tolerance must be positive, got {tol_crossing}")
        self.curve = curve
        self.params = params
        self.reverse = reverse
        self.tol_crossing = tol_crossing
        self.flows: list[RegionFlow] = [region_system(curve, params, r) for r in curve.regions()]
        if reverse:
            self.flows = [_reversed(rf) for rf in self.flows]
        self.corner_eq = [corner_on_line(curve, params, j) for j in range(1, len(curve.corners) + 1)]
        self._xs = curve.xs

    def flow(self, region: int) -> RegionFlow:
        return self.flows[region - 1]

    def reversed(self) -> "SewedSystem":
        """The same system with time running backwards."""
        return SewedSystem(self.curve, self.params, not self.reverse, self.tol_crossing)

    def sigma(self, region: int) -> float:
        return self.flows[region - 1].sigma

    def field(self, p) -> tuple[float, float]:
        return self.flow(self.curve.region_index(p[0])).field(p)

    def _start_region(self, p) -> int:
        x, y = p
        for j, xj in enumerate(self._xs, start=1):
            if abs(x - xj) <= ON_LINE_TOL * (1.0 + abs(xj)):
                return self._side_of_line(j, y)
        return self.curve.region_index(x)

    def _side_of_line(self, j: int, y: float) -> int:
        """Region entered from a point on sewing line ``j``, following the field."""
        yj = self.curve.corners[j - 1][1]
        sgn = -1.0 if self.reverse else 1.0
        xdot = sgn * (y - yj)
        if xdot > 0.0:
            return j + 1
        if xdot < 0.0:
            return j
        xj = self.curve.corners[j - 1][0]
        ydot = sgn * (self.params.beta - self.params.alpha * xj - y)
        if ydot > 0.0:
            return j + 1
        if ydot < 0.0:
            return j
        return j if j % 2 == 0 else j + 1

    def sew(self, start, max_crossings: int = 200, until: Section | None = None) -> SewnTrajectory:
        if max_crossings < 1:
            raise ValueError("max_crossings must be at least 1")
        p = (float(start[0]), float(start[1]))
        region = self._start_region(p)
        arcs: list[Arc] = []
        tangencies = 0
        last_turn: dict[tuple[int, bool], tuple[float, int]] = {}
        corners = self.curve.corners
        scale = self.curve.scale
        for n in range(max_crossings + 1):
            rf = self.flows[region - 1]
            try:
                ev = boundary_crossing(rf, p, rf.region.x_lo, rf.region.x_hi, self.tol_crossing)
            except ToleranceExhausted as exc:
                exc.arc_index = len(arcs)
                raise
            arcs.append(Arc(region, p, ev.exit_point, ev.tau))
            if ev.terminal is Terminal.ConvergedToEquilibrium:
                return SewnTrajectory(arcs, TrajTerminal.ConvergedToEquilibrium, tangencies=tangencies)
            if ev.terminal is Terminal.Unbounded:
                return SewnTrajectory(arcs, TrajTerminal.Unbounded, tangencies=tangencies)
            tangencies += ev.tangent
            j = region if ev.next_region > region else region - 1
            xj, yj = corners[j - 1]
            p = ev.exit_point
            moving_right = ev.next_region > region
            if until is not None and until.corner_index == j:
                # forward time crosses the upper ray rightwards, the lower one leftwards
                if until.side is Side.Above and moving_right != self.reverse and p[1] >= yj:
                    return SewnTrajectory(arcs, TrajTerminal.Crossed, until, tangencies)
                if until.side is Side.Below and moving_right == self.reverse and p[1] <= yj:
                    return SewnTrajectory(arcs, TrajTerminal.Crossed, until, tangencies)
            if self.corner_eq[j - 1]:
                dist = abs(p[1] - yj)
                if dist <= 1e-13 * scale:
                    return SewnTrajectory(arcs, TrajTerminal.ConvergedToEquilibrium, tangencies=tangencies)
                # Both pieces are linear about an equilibrium corner, so a full
                # turn around it scales every later turn by the same factor.
                prev = last_turn.get((j, moving_right))
                if (
                    prev is not None
                    and dist < prev[0]
                    and all(a.region in (j, j + 1) for a in arcs[prev[1]:])
                ):
                    return SewnTrajectory(arcs, TrajTerminal.ConvergedToEquilibrium, tangencies=tangencies)
                last_turn[(j, moving_right)] = (dist, len(arcs))
            if n == max_crossings:
                break
            region = self._side_of_line(j, p[1]) if p[1] == yj else ev.next_region
        return SewnTrajectory(arcs, TrajTerminal.MaxCrossings, tangencies=tangencies)


def sew_trajectory(
    curve: PwlCurve,
    params: SystemParams,
    start,
    max_crossings: int = 200,
    until: Section | None = None,
) -> SewnTrajectory:
    """Follow the sewed flow from ``start`` across sewing lines.

    Stops on convergence to an equilibrium, escape, after ``max_crossings``
    boundary crossings, or on reaching the section ``until`` in its own
    direction of motion.
    """
    return SewedSystem(curve, params).sew(start, max_crossings, until)


def phase_portrait(
    curve: PwlCurve, params: SystemParams, seeds: Iterable[Sequence[float]], max_crossings: int = 60
) -> list[SewnTrajectory]:
    system = SewedSystem(curve, params)
    out = []
    for seed in seeds:
        try:
            out.append(system.sew(seed, max_crossings))
        except PldsError as exc:
            out.append(SewnTrajectory([], TrajTerminal.Failed, error=str(exc)))
    return out


def trajectory_rows(system: SewedSystem, traj: SewnTrajectory, dt: float = 0.01, t_cap: float = 200.0):
    """Yield ``(arc_index, region, t_entry, x, y)`` samples at most ``dt`` apart."""
    t_entry = 0.0
    for i, arc in enumerate(traj.arcs):
        rf = system.flow(arc.region)
        tau = min(arc.tau, t_cap)
        n = max(1, math.ceil(tau / dt))
        for m in range(n + 1):
            if m == n and arc.tau <= t_cap:
                x, y = arc.exit
            else:
                x, y = flow_state(rf, arc.entry, tau * m / n)
            yield i, arc.region, t_entry, x, y
        t_entry += arc.tau


def write_trajectory_csv(fh, system: SewedSystem, traj: SewnTrajectory, dt: float = 0.01) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["arc_index", "region", "t_entry", "x", "y"])
    for row in trajectory_rows(system, traj, dt):
        w.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4])])
