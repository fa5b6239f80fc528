"""System definition, singular points and the discriminant curve.

The system under study is

    x' = y - phi(x),    y' = beta - alpha*x - y,    alpha > 0, beta > 0,

where ``phi`` is continuous and piecewise linear with ``k`` dropping sections
of slope ``-k2`` separated by ascending sections of slope ``k1``.  The vertical
lines through the corners of ``phi`` cut the plane into ``2k + 1`` strips;
strip ``j`` (1-based) lies between corners ``j - 1`` and ``j`` and the system
is affine inside each strip.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .errors import BadParams, BadSign, DegenerateLine, NonMonotone, SlopeMismatch

__all__ = [
    "ComplexPair",
    "RealDistinct",
    "RealRepeated",
    "Eigen",
    "eigen_from_trace_det",
    "PwlCurve",
    "SystemParams",
    "Region",
    "SingularKind",
    "SingularPoint",
    "DiscriminantLine",
    "DiscriminantCurve",
    "build_curve",
    "eval_phi",
    "find_singular_points",
    "discriminant_curve",
    "corner_on_line",
    "jacobian",
    "piece_eigen",
    "sewed_ratio",
    "mirror_beta",
    "CORNER_TOL",
]

CORNER_TOL = 1e-9
SLOPE_RTOL = 1e-9


# -- eigen-data ---------------------------------------------------------------


@dataclass(frozen=True)
class ComplexPair:
    sigma: float
    omega: float

    @property
    def trace(self) -> float:
        return 2.0 * self.sigma

    @property
    def det(self) -> float:
        return self.sigma**2 + self.omega**2


@dataclass(frozen=True)
class RealDistinct:
    l1: float
    l2: float

    @property
    def trace(self) -> float:
        return self.l1 + self.l2

    @property
    def det(self) -> float:
        return self.l1 * self.l2


@dataclass(frozen=True)
class RealRepeated:
    l: float

    @property
    def trace(self) -> float:
        return 2.0 * self.l

    @property
    def det(self) -> float:
        return self.l * self.l


Eigen = Union[ComplexPair, RealDistinct, RealRepeated]


def eigen_from_trace_det(trace: float, det: float) -> Eigen:
    """Eigenvalues of a real 2x2 matrix from its trace and determinant.

    Real roots are ordered ``l1 >= l2`` and computed without cancellation.
    """
    s = 0.5 * trace
    disc = s * s - det
    scale = max(s * s, abs(det), 1e-300)
    if abs(disc) <= 1e-14 * scale:
        return RealRepeated(s)
    if disc < 0.0:
        return ComplexPair(s, math.sqrt(-disc))
    r = math.sqrt(disc)
    big = s + math.copysign(r, s) if s != 0.0 else r
    other = det / big if big != 0.0 else -big
    return RealDistinct(max(big, other), min(big, other))


# -- curve and parameters -----------------------------------------------------


@dataclass(frozen=True)
class Region:
    index: int
    x_lo: float
    x_hi: float

    @property
    def ascending(self) -> bool:
        return self.index % 2 == 1

    def contains(self, x: float) -> bool:
        return self.x_lo <= x <= self.x_hi

    def __str__(self) -> str:
        return _roman(self.index)


def _roman(n: int) -> str:
    out = []
    for value, sym in ((1000, "M"), (900, "CM"), (500, "D"), (400, "CD"),
                       (100, "C"), (90, "XC"), (50, "L"), (40, "XL"),
                       (10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I")):
        while n >= value:
            out.append(sym)
            n -= value
    return "".join(out)


@dataclass(frozen=True)
class PwlCurve:
    """Piecewise linear characteristic with ``k`` dropping sections.

    Use :func:`build_curve` to construct a validated instance.
    """

    corners: tuple[tuple[float, float], ...]
    k1: float
    k2: float

    @property
    def k(self) -> int:
        return len(self.corners) // 2

    @property
    def n_regions(self) -> int:
        return len(self.corners) + 1

    @property
    def xs(self) -> tuple[float, ...]:
        return tuple(c[0] for c in self.corners)

    @property
    def interesting(self) -> bool:
        """True in the regime that admits limit cycles (k2 > 1, (k1-1)^2 < 4 k2)."""
        return self.k2 > 1.0 and (self.k1 - 1.0) ** 2 < 4.0 * self.k2

    @property
    def scale(self) -> float:
        xs = [c[0] for c in self.corners]
        ys = [c[1] for c in self.corners]
        return max(1.0, max(xs) - min(xs), max(ys) - min(ys))

    def region(self, index: int) -> Region:
        if not 1 <= index <= self.n_regions:
            raise IndexError(f"region index {index} outside 1..{self.n_regions}")
        lo = -math.inf if index == 1 else self.corners[index - 2][0]
        hi = math.inf if index == self.n_regions else self.corners[index - 1][0]
        return Region(index, lo, hi)

    def regions(self) -> list[Region]:
        return [self.region(j) for j in range(1, self.n_regions + 1)]

    def piece(self, index: int) -> tuple[float, float]:
        """``(slope, intercept)`` of phi inside region ``index``."""
        if index % 2 == 1:
            slope = self.k1
            # odd regions touch corner index-1 on the left or corner index on the right
            cx, cy = self.corners[index - 1] if index <= len(self.corners) else self.corners[-1]
        else:
            slope = -self.k2
            cx, cy = self.corners[index - 1]
        return slope, cy - slope * cx

    def region_index(self, x: float) -> int:
        """Strip containing ``x``; a corner abscissa belongs to the left strip."""
        for j, (cx, _) in enumerate(self.corners, start=1):
            if x <= cx:
                return j
        return self.n_regions

    def phi(self, x: float) -> float:
        slope, icpt = self.piece(self.region_index(x))
        return slope * x + icpt

    def mirrored(self, cx: float = 0.0, cy: float = 0.0) -> "PwlCurve":
        """Image under the point reflection ``(x, y) -> (cx - x, cy - y)``.

        The reflection maps the system with ``beta`` to the system on the
        mirrored curve with ``alpha*cx + cy - beta`` (see :func:`mirror_beta`).
        """
        pts = tuple((cx - x, cy - y) for x, y in reversed(self.corners))
        return PwlCurve(pts, self.k1, self.k2)

    def to_dict(self) -> dict:
        return {"k1": self.k1, "k2": self.k2, "corners": [list(c) for c in self.corners]}


@dataclass(frozen=True)
class SystemParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise BadParams(f"alpha must be positive and finite, got {self.alpha}")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise BadParams(f"beta must be positive and finite, got {self.beta}")


def build_curve(corners: Iterable[Sequence[float]], k1: float, k2: float) -> PwlCurve:
    """Validate corner geometry against the slopes and return a :class:`PwlCurve`."""
    pts = tuple((float(p[0]), float(p[1])) for p in corners)
    k1 = float(k1)
    k2 = float(k2)
    if not (k1 > 0.0):
        raise BadSign(f"k1 must be positive, got {k1}")
    if not (k2 > 0.0):
        raise BadSign(f"k2 must be positive (dropping slope is -k2), got {k2}")
    if len(pts) == 0 or len(pts) % 2:
        raise SlopeMismatch(f"need a non-empty even number of corners, got {len(pts)}")
    for (xa, _), (xb, _) in zip(pts, pts[1:]):
        if not xb > xa:
            raise NonMonotone(f"corner abscissae must increase strictly ({xa} -> {xb})")
    for j in range(len(pts) - 1):
        (xa, ya), (xb, yb) = pts[j], pts[j + 1]
        slope = (yb - ya) / (xb - xa)
        want = -k2 if j % 2 == 0 else k1
        if abs(slope - want) > SLOPE_RTOL * max(1.0, abs(want)):
            kind = "dropping" if j % 2 == 0 else "ascending"
            raise SlopeMismatch(
                f"{kind} section between corners {j + 1} and {j + 2} has slope {slope}, expected {want}"
            )
    return PwlCurve(pts, k1, k2)


def eval_phi(curve: PwlCurve, x: float) -> tuple[float, Region]:
    j = curve.region_index(x)
    slope, icpt = curve.piece(j)
    return slope * x + icpt, curve.region(j)


# -- singular points ----------------------------------------------------------


class SingularKind(str, enum.Enum):
    StableFocus = "StableFocus"
    StableNode = "StableNode"
    UnstableFocus = "UnstableFocus"
    UnstableNode = "UnstableNode"
    Saddle = "Saddle"
    Center = "Center"
    SewedFocusStable = "SewedFocusStable"
    SewedFocusUnstable = "SewedFocusUnstable"
    SewedCenter = "SewedCenter"
    SewedSaddleNode = "SewedSaddleNode"
    EquilibriumSegment = "EquilibriumSegment"


@dataclass(frozen=True)
class SingularPoint:
    location: tuple[float, float]
    kind: SingularKind
    eigen: tuple[Eigen, ...]
    region: Region | None = None
    corner: int | None = None
    segment_extent: tuple[float, float] | None = None

    @property
    def sewed(self) -> bool:
        return self.corner is not None

    def to_dict(self) -> dict:
        out = {
            "x": self.location[0],
            "y": self.location[1],
            "kind": self.kind.value,
            "region": self.region.index if self.region is not None else None,
            "corner": self.corner,
        }
        if self.segment_extent is not None:
            out["segment_extent"] = list(self.segment_extent)
        return out


def jacobian(curve: PwlCurve, alpha: float, index: int) -> tuple[tuple[float, float], tuple[float, float]]:
    slope, _ = curve.piece(index)
    return ((-slope, 1.0), (-alpha, -1.0))


def piece_eigen(curve: PwlCurve, alpha: float, index: int) -> Eigen:
    slope, _ = curve.piece(index)
    return eigen_from_trace_det(-slope - 1.0, slope + alpha)


def _classify(e: Eigen) -> SingularKind:
    if e.det < 0.0:
        return SingularKind.Saddle
    if isinstance(e, ComplexPair):
        if e.sigma == 0.0:
            return SingularKind.Center
        return SingularKind.StableFocus if e.sigma < 0 else SingularKind.UnstableFocus
    return SingularKind.StableNode if e.trace < 0 else SingularKind.UnstableNode


def corner_on_line(curve: PwlCurve, params: SystemParams, j: int, tol: float = CORNER_TOL) -> bool:
    """Whether the zero isocline passes through corner ``j`` (1-based)."""
    x, y = curve.corners[j - 1]
    return abs(params.beta - params.alpha * x - y) <= tol * (1.0 + abs(params.beta))


def sewed_ratio(e_odd: ComplexPair, e_even: ComplexPair) -> float:
    """sigma/omega summed over the two half-turns around a sewed focus."""
    return e_odd.sigma / e_odd.omega + e_even.sigma / e_even.omega


def _classify_corner(curve: PwlCurve, alpha: float, j: int, center_tol: float) -> tuple[SingularKind, tuple[Eigen, Eigen]]:
    e_left = piece_eigen(curve, alpha, j)
    e_right = piece_eigen(curve, alpha, j + 1)
    e_odd, e_even = (e_left, e_right) if j % 2 == 1 else (e_right, e_left)
    if e_even.det < 0.0:
        return SingularKind.SewedSaddleNode, (e_left, e_right)
    if isinstance(e_odd, ComplexPair) and isinstance(e_even, ComplexPair):
        r = sewed_ratio(e_odd, e_even)
        if abs(r) <= center_tol:
            kind = SingularKind.SewedCenter
        elif r < 0:
            kind = SingularKind.SewedFocusStable
        else:
            kind = SingularKind.SewedFocusUnstable
        return kind, (e_left, e_right)
    odd_node = not isinstance(e_odd, ComplexPair)
    even_node = not isinstance(e_even, ComplexPair)
    if odd_node and even_node:
        return SingularKind.SewedSaddleNode, (e_left, e_right)
    if even_node:
        return _classify(e_even), (e_left, e_right)
    return _classify(e_odd), (e_left, e_right)


def find_singular_points(
    curve: PwlCurve,
    params: SystemParams,
    corner_tol: float = CORNER_TOL,
    center_tol: float = 1e-9,
) -> list[SingularPoint]:
    """Locate and classify the equilibria of the sewed system, ordered by x.

    Corners lying on the zero isocline are reported as sewed singularities.
    When ``alpha == k2`` and the isocline contains a whole dropping section the
    section is reported as one ``EquilibriumSegment``.
    """
    alpha, beta = params.alpha, params.beta
    on_line = {j for j in range(1, len(curve.corners) + 1) if corner_on_line(curve, params, j, corner_tol)}
    parallel = abs(alpha - curve.k2) <= 1e-12 * curve.k2

    points: list[SingularPoint] = []
    absorbed: set[int] = set()
    for i in range(1, curve.k + 1):
        upper, lower = 2 * i - 1, 2 * i
        if not parallel:
            continue
        hit = (upper in on_line) + (lower in on_line)
        if hit == 2:
            (xa, ya), (xb, yb) = curve.corners[upper - 1], curve.corners[lower - 1]
            eig = piece_eigen(curve, alpha, 2 * i)
            points.append(
                SingularPoint(
                    ((xa + xb) / 2, (ya + yb) / 2),
                    SingularKind.EquilibriumSegment,
                    (eig,),
                    region=curve.region(2 * i),
                    segment_extent=(xa, xb),
                )
            )
            absorbed.update((upper, lower))
        elif hit == 1:
            raise DegenerateLine(
                f"alpha = k2 but only one end of dropping section {i} lies on the zero isocline"
            )

    for j in sorted(on_line - absorbed):
        kind, eig = _classify_corner(curve, alpha, j, center_tol)
        points.append(SingularPoint(curve.corners[j - 1], kind, eig, corner=j))

    for region in curve.regions():
        slope, icpt = curve.piece(region.index)
        denom = alpha + slope
        if abs(denom) <= 1e-12 * max(alpha, abs(slope)):
            continue
        x = (beta - icpt) / denom
        if not (region.x_lo < x < region.x_hi):
            continue
        near_corner = any(
            abs(x - curve.corners[j - 1][0]) <= corner_tol * (1.0 + abs(x)) for j in on_line
        )
        if near_corner:
            continue
        eig = piece_eigen(curve, alpha, region.index)
        points.append(SingularPoint((x, slope * x + icpt), _classify(eig), (eig,), region=region))

    points.sort(key=lambda p: p.location[0])
    return points


# -- discriminant curve -------------------------------------------------------


@dataclass(frozen=True)
class DiscriminantLine:
    corner: int
    slope: float
    intercept: float

    def beta_at(self, alpha: float) -> float:
        return self.slope * alpha + self.intercept


@dataclass(frozen=True)
class DiscriminantCurve:
    """Half-lines ``beta = x_j*alpha + y_j`` for ``alpha <= alpha_max``."""

    lines: tuple[DiscriminantLine, ...]
    alpha_max: float

    def on_line(self, alpha: float, beta: float, tol: float = CORNER_TOL) -> list[int]:
        return [
            ln.corner for ln in self.lines if abs(beta - ln.beta_at(alpha)) <= tol * (1.0 + abs(beta))
        ]

    def crossed_sections(self, alpha: float, beta: float) -> int:
        """Dropping sections strictly crossed by the zero isocline."""
        n = 0
        for up, lo in zip(self.lines[::2], self.lines[1::2]):
            if beta - up.beta_at(alpha) < 0.0 < beta - lo.beta_at(alpha):
                n += 1
        return n

    def predicted_count(self, alpha: float, beta: float) -> int:
        """Number of isolated singular points off the curve (generic case)."""
        if alpha >= self.alpha_max:
            return 1
        return 1 + 2 * self.crossed_sections(alpha, beta)


def discriminant_curve(curve: PwlCurve) -> DiscriminantCurve:
    lines = tuple(DiscriminantLine(j, x, y) for j, (x, y) in enumerate(curve.corners, start=1))
    return DiscriminantCurve(lines, curve.k2)


def mirror_beta(alpha: float, beta: float, cx: float, cy: float) -> float:
    """``beta`` of the reflected system on ``curve.mirrored(cx, cy)``."""
    return alpha * cx + cy - beta
