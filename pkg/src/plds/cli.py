"""Command-line front end: ``plds analyze|portrait|map|scan|verify``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 bound violated.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from .bifurcation import (
    CellOptions,
    alpha_star,
    alpha_star_printed,
    analyze_cell,
    read_scan_csv,
    scan_diagram,
    verify_cells,
    write_scan_csv,
)
from .config import ConfigError, RunConfig, load_config
from .errors import BadParams, BadRange, CurveError, NoRoot, OffSection, PldsError
from .model import SingularPoint, discriminant_curve, find_singular_points
from .returnmap import LimitCycle, build_return_map, search_cycles, write_map_csv
from .sewing import Section, SewedSystem, SewnTrajectory, TrajTerminal, section_point, trajectory_rows, write_trajectory_csv
from .svg import render_portrait

__all__ = ["main", "build_parser", "auto_seeds", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICS", "EXIT_BOUND"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_BOUND = 0, 2, 3, 4
FAILURE_BUDGET = 0.10
PORTRAIT_DT = 0.01

_CONFIG_ERRORS = (ConfigError, CurveError, BadParams, BadRange, OffSection)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- output -------------------------------------------------------------------


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def write_atomic(path: str | Path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_CONFIG) from exc
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(out, text)


def _json(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    return json.dumps(clean(obj), indent=2) + "\n"


# -- commands -----------------------------------------------------------------


def _cell_options(cfg: RunConfig, n_samples: int, max_crossings: int) -> CellOptions:
    return CellOptions(
        n_samples=n_samples,
        s_range=None,
        tol_fixedpoint=cfg.tol.fixedpoint,
        tol_center=cfg.tol.center,
        max_crossings=max_crossings,
        tol_crossing=cfg.tol.crossing,
    )


def cmd_analyze(cfg: RunConfig, args) -> int:
    params = cfg.require_params()
    curve = cfg.curve
    cell = analyze_cell(curve, params.alpha, params.beta, _cell_options(cfg, 200, 200))
    if cell.error is not None:
        raise CliError(f"analysis failed: {cell.error}", EXIT_NUMERICS)
    try:
        root = alpha_star(curve.k1, curve.k2)
    except NoRoot:
        root = None
    disc = discriminant_curve(curve)
    report = {
        "system": {**curve.to_dict(), "alpha": params.alpha, "beta": params.beta},
        "singular_points": cell.singular,
        "alpha_star": {"root": root, "printed": alpha_star_printed(curve.k1, curve.k2)},
        "discriminant": {
            "on_lines": disc.on_line(params.alpha, params.beta),
            "predicted_count": disc.predicted_count(params.alpha, params.beta),
        },
        "cycles": cell.cycles,
        "n_small": cell.n_small,
        "n_big": cell.n_big,
        "flags": sorted(cell.flags),
    }
    _emit(_json(report), args.out)
    return EXIT_OK


def auto_seeds(cfg: RunConfig, points: Sequence[SingularPoint], density: int) -> list[tuple[float, float]]:
    """``density`` seeds on a small circle around each equilibrium and along the first section.

    Equilibrium segments get their circle around the midpoint, wide enough
    to enclose the segment.
    """
    curve = cfg.curve
    r0 = 0.05 * curve.scale
    seeds = []
    for sp in points:
        r = r0
        if sp.segment_extent is not None:
            xa, xb = sp.segment_extent
            r = max(r0, 0.75 * math.hypot(xb - xa, curve.phi(xb) - curve.phi(xa)))
        cx, cy = sp.location
        for m in range(density):
            th = 2.0 * math.pi * (m + 0.5) / density
            seeds.append((cx + r * math.cos(th), cy + r * math.sin(th)))
    # distances from the lowest-left corner cover cycles of every size
    for m in range(density):
        s = curve.scale * 0.1 * 30.0 ** (m / max(1, density - 1))
        seeds.append(section_point(curve, Section(1), s))
    return seeds


def _points(system: SewedSystem, traj: SewnTrajectory, t_max: float) -> list[tuple[float, float]]:
    pts = []
    for _, _, t_entry, x, y in trajectory_rows(system, traj, PORTRAIT_DT, t_cap=t_max):
        if t_entry > t_max:
            break
        pts.append((x, y))
    return pts


def _cycle_points(system: SewedSystem, cyc: LimitCycle) -> list[tuple[float, float]]:
    start = section_point(system.curve, cyc.section, cyc.s_fixed)
    traj = system.sew(start, max_crossings=200, until=cyc.section)
    return _points(system, traj, math.inf)


def cmd_portrait(cfg: RunConfig, args) -> int:
    params = cfg.require_params()
    curve = cfg.curve
    system = SewedSystem(curve, params, tol_crossing=cfg.tol.crossing)
    points = find_singular_points(curve, params, center_tol=cfg.tol.center)
    seeds = list(cfg.portrait.seeds)
    if not seeds:
        seeds = auto_seeds(cfg, points, args.seed_density)
    trajs = []
    for seed in seeds:
        try:
            trajs.append(system.sew(seed, cfg.portrait.max_crossings))
        except PldsError as exc:
            trajs.append(SewnTrajectory([], TrajTerminal.Failed, error=str(exc)))
    failed = sum(t.terminal is TrajTerminal.Failed for t in trajs)
    if seeds and failed > FAILURE_BUDGET * len(seeds):
        raise CliError(f"{failed} of {len(seeds)} trajectories failed", EXIT_NUMERICS)

    found = search_cycles(
        system,
        n=200,
        tol_fixedpoint=cfg.tol.fixedpoint,
        tol_center=cfg.tol.center,
    )
    cycles = []
    for c in found.cycles:
        try:
            cycles.append((c.stability.value, _cycle_points(system, c)))
        except PldsError:
            continue
    svg = render_portrait(
        curve,
        params,
        [_points(system, t, cfg.portrait.t_max) for t in trajs if t.arcs],
        cycles,
        points,
    )
    if cfg.portrait.csv_dir is not None:
        d = Path(cfg.portrait.csv_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(trajs):
            if not t.arcs:
                continue
            buf = io.StringIO()
            write_trajectory_csv(buf, system, t, PORTRAIT_DT)
            write_atomic(d / f"trajectory_{i:03d}.csv", buf.getvalue())
    _emit(svg, args.out or "portrait.svg")
    return EXIT_OK


def cmd_map(cfg: RunConfig, args) -> int:
    params = cfg.require_params()
    system = SewedSystem(cfg.curve, params, tol_crossing=cfg.tol.crossing)
    m = cfg.map
    rm = build_return_map(system, None, m.section, s_range=m.s_range, n=m.n, spacing=m.spacing)
    if rm.failures:
        print(f"plds: {len(rm.failures)} of {m.n} starts did not return", file=sys.stderr)
    buf = io.StringIO()
    write_map_csv(buf, rm)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _verify_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".verify.json")


def cmd_scan(cfg: RunConfig, args) -> int:
    sc = cfg.scan
    out = args.out or "scan.csv"
    diagram = scan_diagram(
        cfg.curve,
        sc.alpha_range,
        sc.beta_range,
        sc.na,
        sc.nb,
        _cell_options(cfg, sc.n_samples, sc.max_crossings),
        threads=args.threads,
    )
    buf = io.StringIO()
    write_scan_csv(buf, diagram)
    report = verify_cells(diagram.iter_cells(), cfg.curve.k)
    write_atomic(out, buf.getvalue())
    write_atomic(_verify_path(out), _json(report.to_dict()))
    return _verdict(report)


def cmd_verify(cfg: RunConfig, args) -> int:
    src = args.scan_csv or cfg.input
    if src is None:
        raise CliError("verify needs a scan CSV (argument or 'input' key)", EXIT_CONFIG)
    try:
        with open(src, newline="") as fh:
            cells = read_scan_csv(fh)
    except OSError as exc:
        raise CliError(f"cannot read {src}: {exc}", EXIT_CONFIG) from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(f"malformed scan CSV {src}: {exc}", EXIT_CONFIG) from exc
    report = verify_cells(cells, cfg.curve.k)
    _emit(_json(report.to_dict()), args.out)
    return _verdict(report)


def _verdict(report) -> int:
    if report.passed:
        return EXIT_OK
    print(
        f"plds: bound {report.bound} violated in {len(report.violations)} cells (max total {report.max_total})",
        file=sys.stderr,
    )
    return EXIT_BOUND


COMMANDS = {
    "analyze": cmd_analyze,
    "portrait": cmd_portrait,
    "map": cmd_map,
    "scan": cmd_scan,
    "verify": cmd_verify,
}


# -- argument parsing ---------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="system definition JSON")
    p.add_argument("--out", default=d(None), help="output path (written atomically)")
    p.add_argument("--threads", type=_positive_int, default=d(None), help="worker processes (default: $PLDS_THREADS or 1)")
    p.add_argument("--seed-density", type=_positive_int, default=d(4), help="auto seeds per equilibrium")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="plds", description="Limit cycles of piecewise linear Lienard-type systems.")
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "analyze": "equilibria, sewed-center parameter and limit cycles as JSON",
        "portrait": "phase portrait as SVG",
        "map": "sampled return map as CSV",
        "scan": "parameter-plane scan CSV plus bound report",
        "verify": "check a scan CSV against the cycle-count bound",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        _global_flags(sp, suppress=True)
        if name == "verify":
            sp.add_argument("scan_csv", nargs="?", help="scan CSV to check")
    return ap


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("PLDS_THREADS")
    if env is None or env == "":
        return 1
    try:
        return _positive_int(env)
    except argparse.ArgumentTypeError as exc:
        raise CliError(f"PLDS_THREADS: {exc}", EXIT_CONFIG) from exc


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "scan_csv"):
        args.scan_csv = None
    try:
        args.threads = _threads(args)
        if args.config is None:
            raise CliError("--config is required", EXIT_CONFIG)
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except CliError as exc:
        print(f"plds: {exc}", file=sys.stderr)
        return exc.code
    except _CONFIG_ERRORS as exc:
        print(f"plds: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PldsError as exc:
        print(f"plds: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
