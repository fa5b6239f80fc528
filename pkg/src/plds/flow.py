"""Closed-form flow of the affine system inside one strip and sewing events."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .errors import ToleranceExhausted
from .model import (
    ComplexPair,
    Eigen,
    PwlCurve,
    RealDistinct,
    RealRepeated,
    Region,
    SystemParams,
    eigen_from_trace_det,
)

__all__ = [
    "RegionFlow",
    "CrossEvent",
    "Terminal",
    "region_system",
    "flow_from_matrix",
    "flow_state",
    "boundary_crossing",
]

CROSS_TOL = 1e-12
CONVERGED_DIST = 1e-13
UNBOUNDED = 1e9
TANGENT_SPEED = 1e-10
_MAX_INTERVALS = 20000
_SINGULAR_DET = 1e-10
_NEWTON_ITERS = 60


@dataclass(frozen=True)
class RegionFlow:
    """Affine system ``p' = A p + b`` valid in one strip."""

    region: Region
    matrix: tuple[tuple[float, float], tuple[float, float]]
    offset: tuple[float, float]
    eigen: Eigen
    equilibrium: tuple[float, float] | None

    @property
    def trace(self) -> float:
        return self.matrix[0][0] + self.matrix[1][1]

    @property
    def det(self) -> float:
        (a, b), (c, d) = self.matrix
        return a * d - b * c

    @property
    def sigma(self) -> float:
        return 0.5 * self.trace

    @property
    def virtual(self) -> bool:
        """Equilibrium lies outside the strip (or does not exist)."""
        if self.equilibrium is None:
            return True
        x = self.equilibrium[0]
        return not (self.region.x_lo < x < self.region.x_hi)

    def field(self, p: tuple[float, float]) -> tuple[float, float]:
        (a, b), (c, d) = self.matrix
        return a * p[0] + b * p[1] + self.offset[0], c * p[0] + d * p[1] + self.offset[1]


def flow_from_matrix(region: Region, matrix, offset) -> RegionFlow:
    (a, b), (c, d) = matrix
    tr = a + d
    det = a * d - b * c
    eig = eigen_from_trace_det(tr, det)
    eq = None
    scale = max(abs(a), abs(b), abs(c), abs(d), 1.0)
    if abs(det) > _SINGULAR_DET * scale * scale:
        bx, by = offset
        eq = ((-d * bx + b * by) / det, (c * bx - a * by) / det)
    return RegionFlow(region, ((a, b), (c, d)), (float(offset[0]), float(offset[1])), eig, eq)


def region_system(curve: PwlCurve, params: SystemParams, region: Region | int) -> RegionFlow:
    """Affine system ``x' = y - (m x + c)``, ``y' = beta - alpha x - y`` of one strip."""
    if isinstance(region, int):
        region = curve.region(region)
    slope, icpt = curve.piece(region.index)
    matrix = ((-slope, 1.0), (-params.alpha, -1.0))
    return flow_from_matrix(region, matrix, (-icpt, params.beta))


# -- closed-form trajectories ------------------------------------------------


class _Orbit:
    """Coefficients of one trajectory ``t -> p(t)`` of a :class:`RegionFlow`.

    ``x(t)``/``y(t)`` and ``x'(t)`` are evaluated from these without matrix
    work so that root isolation stays cheap.
    """

    __slots__ = ("kind", "s", "w", "ex", "ey", "ax", "bx", "ay", "by", "p0", "rf")

    def __init__(self, rf: RegionFlow, p0: tuple[float, float]):
        self.rf = rf
        self.p0 = (float(p0[0]), float(p0[1]))
        (a, b), (c, d) = rf.matrix
        s = 0.5 * (a + d)
        self.s = s
        eig = rf.eigen
        if rf.equilibrium is None:
            # singular matrix: p(t) = p0 + (t I + g(t) A) w with w = A p0 + b
            self.kind = "singular"
            wx, wy = rf.field(self.p0)
            self.ax, self.ay = wx, wy
            self.bx, self.by = a * wx + b * wy, c * wx + d * wy
            self.w = a + d
            self.ex = self.ey = 0.0
            return
        ex, ey = rf.equilibrium
        self.ex, self.ey = ex, ey
        ux, uy = self.p0[0] - ex, self.p0[1] - ey
        nux = (a - s) * ux + b * uy
        nuy = c * ux + (d - s) * uy
        if isinstance(eig, ComplexPair):
            self.kind = "complex"
            w = eig.omega
            self.w = w
            self.ax, self.bx = ux, nux / w
            self.ay, self.by = uy, nuy / w
        elif isinstance(eig, RealDistinct):
            self.kind = "real"
            mu = 0.5 * (eig.l1 - eig.l2)
            self.w = mu
            # p - e = c1 exp(l1 t) + c2 exp(l2 t), l1 = s + mu, l2 = s - mu
            self.ax, self.bx = 0.5 * (ux + nux / mu), 0.5 * (ux - nux / mu)
            self.ay, self.by = 0.5 * (uy + nuy / mu), 0.5 * (uy - nuy / mu)
        else:
            self.kind = "repeated"
            self.w = 0.0
            self.ax, self.bx = ux, nux
            self.ay, self.by = uy, nuy

    # state --------------------------------------------------------------
    def state(self, t: float) -> tuple[float, float]:
        k = self.kind
        if k == "complex":
            e = math.exp(self.s * t)
            cs, sn = math.cos(self.w * t), math.sin(self.w * t)
            return (self.ex + e * (self.ax * cs + self.bx * sn), self.ey + e * (self.ay * cs + self.by * sn))
        if k == "real":
            e1 = math.exp((self.s + self.w) * t)
            e2 = math.exp((self.s - self.w) * t)
            return (self.ex + self.ax * e1 + self.bx * e2, self.ey + self.ay * e1 + self.by * e2)
        if k == "repeated":
            e = math.exp(self.s * t)
            return (self.ex + e * (self.ax + t * self.bx), self.ey + e * (self.ay + t * self.by))
        g = self._g(t)
        return (self.p0[0] + t * self.ax + g * self.bx, self.p0[1] + t * self.ay + g * self.by)

    def _g(self, t: float) -> float:
        tr = self.w
        if abs(tr * t) < 1e-5:
            z = tr * t
            return t * t * (0.5 + z / 6.0 + z * z / 24.0)
        return (math.expm1(tr * t) / tr - t) / tr

    def x(self, t: float) -> float:
        k = self.kind
        if k == "complex":
            return self.ex + math.exp(self.s * t) * (self.ax * math.cos(self.w * t) + self.bx * math.sin(self.w * t))
        if k == "real":
            return self.ex + self.ax * math.exp((self.s + self.w) * t) + self.bx * math.exp((self.s - self.w) * t)
        if k == "repeated":
            return self.ex + math.exp(self.s * t) * (self.ax + t * self.bx)
        return self.p0[0] + t * self.ax + self._g(t) * self.bx

    def x_minus(self, t: float, bound: float) -> float:
        """``x(t) - bound`` without cancelling against a nearby equilibrium."""
        k = self.kind
        if k == "complex":
            return (self.ex - bound) + math.exp(self.s * t) * (
                self.ax * math.cos(self.w * t) + self.bx * math.sin(self.w * t)
            )
        if k == "real":
            return (self.ex - bound) + self.ax * math.exp((self.s + self.w) * t) + self.bx * math.exp(
                (self.s - self.w) * t
            )
        if k == "repeated":
            return (self.ex - bound) + math.exp(self.s * t) * (self.ax + t * self.bx)
        return (self.p0[0] - bound) + t * self.ax + self._g(t) * self.bx

    def xdot(self, t: float) -> float:
        k = self.kind
        if k == "complex":
            s, w = self.s, self.w
            cs, sn = math.cos(w * t), math.sin(w * t)
            return math.exp(s * t) * ((s * self.ax + w * self.bx) * cs + (s * self.bx - w * self.ax) * sn)
        if k == "real":
            l1, l2 = self.s + self.w, self.s - self.w
            return self.ax * l1 * math.exp(l1 * t) + self.bx * l2 * math.exp(l2 * t)
        if k == "repeated":
            s = self.s
            return math.exp(s * t) * (s * self.ax + self.bx + s * self.bx * t)
        tr = self.w
        gp = t if abs(tr * t) < 1e-12 else math.expm1(tr * t) / tr
        return self.ax + gp * self.bx

    # critical times of x(t) --------------------------------------------
    def critical_times(self) -> list[float] | None:
        """Positive zeros of x'(t) for non-oscillating flows; ``None`` when periodic."""
        k = self.kind
        if k == "complex":
            return None
        out: list[float] = []
        if k == "real":
            l1, l2 = self.s + self.w, self.s - self.w
            num, den = -self.bx * l2, self.ax * l1
            if den != 0.0 and num != 0.0 and num / den > 0.0:
                t = math.log(num / den) / (l1 - l2)
                if t > 0.0:
                    out.append(t)
        elif k == "repeated":
            s = self.s
            if s * self.bx != 0.0:
                t = -(s * self.ax + self.bx) / (s * self.bx)
                if t > 0.0:
                    out.append(t)
        else:
            tr = self.w
            if self.bx != 0.0 and tr != 0.0:
                arg = 1.0 - tr * self.ax / self.bx
                if arg > 0.0:
                    t = math.log(arg) / tr
                    if t > 0.0:
                        out.append(t)
        return out

    def first_complex_critical(self) -> float:
        s, w = self.s, self.w
        p = s * self.ax + w * self.bx
        q = s * self.bx - w * self.ax
        phase = math.atan2(q, p) + 0.5 * math.pi
        theta = math.fmod(phase, math.pi)
        if theta < 0.0:
            theta += math.pi
        return theta / w

    def distance_to_equilibrium(self, t: float) -> float:
        x, y = self.state(t)
        return math.hypot(x - self.ex, y - self.ey)


def flow_state(rf: RegionFlow, p0, t: float) -> tuple[float, float]:
    """Exact solution of the strip's affine system after time ``t`` (any sign)."""
    return _Orbit(rf, p0).state(t)


# -- sewing events -----------------------------------------------------------


class Terminal(str, enum.Enum):
    Crossed = "Crossed"
    ConvergedToEquilibrium = "ConvergedToEquilibrium"
    Unbounded = "Unbounded"


@dataclass(frozen=True)
class CrossEvent:
    tau: float
    exit_point: tuple[float, float]
    next_region: int | None
    terminal: Terminal
    tangent: bool = False


def _fdf(orb: _Orbit, bound: float):
    """``t -> (x(t) - bound, x'(t))`` sharing the exponentials between both."""
    k = orb.kind
    c0 = orb.ex - bound
    ax, bx, s, w = orb.ax, orb.bx, orb.s, orb.w
    if k == "complex":
        p, q = s * ax + w * bx, s * bx - w * ax

        def fdf(t):
            e = math.exp(s * t)
            cs, sn = math.cos(w * t), math.sin(w * t)
            return c0 + e * (ax * cs + bx * sn), e * (p * cs + q * sn)

    elif k == "real":
        l1, l2 = s + w, s - w

        def fdf(t):
            e1, e2 = ax * math.exp(l1 * t), bx * math.exp(l2 * t)
            return c0 + e1 + e2, l1 * e1 + l2 * e2

    else:

        def fdf(t):
            return orb.x_minus(t, bound), orb.xdot(t)

    return fdf


def _solve(orb: _Orbit, bound: float, ta: float, tb: float, tol: float = CROSS_TOL) -> float:
    """Root of ``x(t) = bound`` on a monotone stretch ``[ta, tb]``.

    Newton steps with the analytic ``x'(t)`` while they stay inside the
    shrinking bracket; Brent's method takes over on the bracket as soon as a
    step would leave it or Newton does not settle.
    """
    fa, fb = orb.x_minus(ta, bound), orb.x_minus(tb, bound)
    if fa == 0.0:
        return ta
    if fb == 0.0:
        return tb
    if (fa > 0) == (fb > 0):
        raise ToleranceExhausted("crossing not bracketed", tau=ta)
    fdf = _fdf(orb, bound)
    lo, hi, lo_pos = ta, tb, fa > 0
    # secant start: the stretch is monotone, so this lies inside the bracket
    t = ta - fa * (tb - ta) / (fb - fa)
    for _ in range(_NEWTON_ITERS):
        ft, d = fdf(t)
        if ft == 0.0:
            return t
        if (ft > 0) == lo_pos:
            lo = t
        else:
            hi = t
        t_new = t - ft / d if d != 0.0 else lo
        if not lo < t_new < hi:
            # far from the root on a strongly curved stretch: Brent is faster
            break
        if abs(t_new - t) <= 1e-10 * (1.0 + abs(t)) and abs(ft) <= tol * (1.0 + abs(bound)):
            # quadratic convergence: the step after this one is below roundoff
            return t_new
        if hi - lo <= 4e-16 * (1.0 + abs(hi)) or abs(t_new - t) <= 4e-16 * (1.0 + abs(t)):
            # the residual is at its roundoff floor
            return t_new
        t = t_new
    try:
        return brentq(lambda u: orb.x_minus(u, bound), lo, hi, xtol=1e-15 * max(1.0, abs(hi)), rtol=1e-15)
    except (RuntimeError, ValueError) as exc:  # pragma: no cover - brentq is robust on brackets
        raise ToleranceExhausted(f"root refinement failed: {exc}", tau=ta) from exc


def _exit(orb: _Orbit, bound: float, t: float, rf: RegionFlow, up: bool) -> CrossEvent:
    _, y = orb.state(t)
    tangent = abs(orb.xdot(t)) < TANGENT_SPEED
    nxt = rf.region.index + (1 if up else -1)
    return CrossEvent(t, (bound, y), nxt, Terminal.Crossed, tangent)


def _check_interval(orb, rf, x_lo, x_hi, ta, xa, tb, xb, tol=CROSS_TOL):
    """Crossing inside a monotone stretch of x(t), or ``None``."""
    if xb < x_lo <= xa:
        return _exit(orb, x_lo, _solve(orb, x_lo, ta, tb, tol), rf, up=False)
    if xb > x_hi >= xa:
        return _exit(orb, x_hi, _solve(orb, x_hi, ta, tb, tol), rf, up=True)
    return None


def boundary_crossing(rf: RegionFlow, p0, x_lo: float, x_hi: float, tol: float = CROSS_TOL) -> CrossEvent:
    """First time ``t > 0`` at which the trajectory from ``p0`` leaves ``[x_lo, x_hi]``.

    ``x(t)`` is split at the zeros of ``x'(t)`` (available in closed form), so
    each bound is crossed at most once per stretch and every crossing is
    bracketed exactly before refinement.
    """
    orb = _Orbit(rf, p0)
    p0 = orb.p0
    scale = max(1.0, abs(p0[0]), abs(p0[1]))

    if orb.kind == "singular":
        if math.hypot(orb.ax, orb.ay) <= CONVERGED_DIST:
            return CrossEvent(0.0, p0, None, Terminal.ConvergedToEquilibrium)
    elif math.hypot(p0[0] - orb.ex, p0[1] - orb.ey) <= CONVERGED_DIST * max(1.0, abs(orb.ex)):
        return CrossEvent(0.0, p0, None, Terminal.ConvergedToEquilibrium)

    if orb.kind == "complex":
        return _complex_crossing(orb, rf, x_lo, x_hi, tol)

    ta, xa = 0.0, p0[0]
    for tb in orb.critical_times():
        xb = orb.x(tb)
        ev = _check_interval(orb, rf, x_lo, x_hi, ta, xa, tb, xb, tol)
        if ev is not None:
            return _maybe_converged(orb, rf, ev)
        ta, xa = tb, xb
    return _tail(orb, rf, x_lo, x_hi, ta, xa, scale, tol)


def _complex_crossing(orb: _Orbit, rf: RegionFlow, x_lo: float, x_hi: float, tol: float) -> CrossEvent:
    s, w = orb.s, orb.w
    half = math.pi / w
    amp = math.hypot(orb.ax, orb.bx)
    ex = orb.ex
    inside = x_lo < ex < x_hi
    t_stop = math.inf
    if inside:
        margin = min(ex - x_lo, x_hi - ex)
        if s < 0.0:
            t_stop = max(0.0, math.log(amp / margin) / -s) if amp > margin else 0.0
        elif s == 0.0 and amp < margin:
            raise ToleranceExhausted("closed orbit inside the strip (center)", tau=math.inf)

    ta, xa = 0.0, orb.p0[0]
    tb = orb.first_complex_critical()
    if tb <= 1e-15 * half:
        tb += half
    for _ in range(_MAX_INTERVALS):
        if ta > t_stop:
            full = math.hypot(math.hypot(orb.ax, orb.bx), math.hypot(orb.ay, orb.by))
            tau = max(ta, math.log(full / CONVERGED_DIST) / -s) if full > CONVERGED_DIST else ta
            return CrossEvent(tau, (ex, orb.ey), None, Terminal.ConvergedToEquilibrium)
        xb = orb.x(tb)
        ev = _check_interval(orb, rf, x_lo, x_hi, ta, xa, tb, xb, tol)
        if ev is not None:
            return ev
        if abs(xb) > UNBOUNDED or amp * math.exp(s * tb) > UNBOUNDED:
            return CrossEvent(tb, orb.state(tb), None, Terminal.Unbounded)
        ta, xa = tb, xb
        tb = ta + half
    raise ToleranceExhausted("no crossing or convergence after many half-turns", tau=ta)


def _tail(orb: _Orbit, rf: RegionFlow, x_lo, x_hi, ta, xa, scale, tol) -> CrossEvent:
    """Last monotone stretch ``[ta, inf)`` of a non-oscillating trajectory."""
    rates = [abs(orb.s) + abs(orb.w)] if orb.kind != "singular" else [abs(orb.w)]
    h = 1.0 / max(max(rates), 1e-6) * 0.5
    h = max(h, 1e-3 * ta)
    for _ in range(400):
        tb = ta + h
        xb = orb.x(tb)
        ev = _check_interval(orb, rf, x_lo, x_hi, ta, xa, tb, xb, tol)
        if ev is not None:
            return _maybe_converged(orb, rf, ev)
        if orb.kind != "singular":
            if orb.distance_to_equilibrium(tb) <= CONVERGED_DIST * max(1.0, abs(orb.ex)):
                return CrossEvent(tb, (orb.ex, orb.ey), None, Terminal.ConvergedToEquilibrium)
        else:
            vx, vy = rf.field(orb.state(tb))
            if math.hypot(vx, vy) <= CONVERGED_DIST:
                return CrossEvent(tb, orb.state(tb), None, Terminal.ConvergedToEquilibrium)
        st = orb.state(tb)
        if max(abs(st[0]), abs(st[1])) > UNBOUNDED:
            return CrossEvent(tb, st, None, Terminal.Unbounded)
        ta, xa = tb, xb
        h *= 2.0
    raise ToleranceExhausted("tail search exhausted", tau=ta)


def _maybe_converged(orb: _Orbit, rf: RegionFlow, ev: CrossEvent) -> CrossEvent:
    """Report convergence when the orbit passes within tolerance of a real saddle first."""
    if orb.kind != "real" or rf.equilibrium is None or rf.virtual:
        return ev
    l1, l2 = orb.s + orb.w, orb.s - orb.w
    if not (l1 > 0.0 > l2):
        return ev
    c1 = math.hypot(orb.ax, orb.ay)
    c2 = math.hypot(orb.bx, orb.by)
    tol = CONVERGED_DIST * max(1.0, abs(orb.ex))
    if c1 == 0.0:
        t_min = math.inf
    else:
        arg = -c2 * l2 / (c1 * l1)
        t_min = math.log(arg) / (l1 - l2) if arg > 0 else 0.0
    t_min = min(max(t_min, 0.0), ev.tau)
    if orb.distance_to_equilibrium(t_min) <= tol:
        return CrossEvent(t_min, (orb.ex, orb.ey), None, Terminal.ConvergedToEquilibrium)
    return ev
