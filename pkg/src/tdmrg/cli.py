"""Command-line front end: parameter scans and the oracle cross-check suites.

Scan configuration is a flat ``key = value`` file; ``#`` starts a comment.
Recognized keys::

    model = staggered | spin1_xxz
    n = 40
    <model parameter> = <value>          fixed values, e.g. j = 1, b_alt = 1
    axis1 = <parameter>:<min>:<max>:<points>
    axis2 = <parameter>:<min>:<max>:<points>   optional
    beta = 40 | zero
    weights = boltzmann | ground_only     how the detector weighs targets
    m, k_targets, n_sweeps, lanczos_tol, energy_tol, target_weights, seed
    oracle_checks = none | ed | freefermion | ed,freefermion
    threshold_factor = 10
    min_jump = 1e-6
    workers = <count>
    out = <directory>
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .detector import JumpReport, ScanRecord, analyze_point, detect_jumps
from .dmrg import SweepConfig
from .errors import ConfigError, TdmrgError
from .models import MODEL_KINDS, ModelSpec

RESULT_COLUMNS = (
    "avg_trace_distance",
    "ground_energy",
    "geometric_phase",
    "max_discarded_weight",
    "support_dim_max",
    "error",
)

SWEEP_KEYS = {
    "m": int,
    "k_targets": int,
    "n_sweeps": int,
    "lanczos_tol": float,
    "energy_tol": float,
    "target_weights": str,
    "seed": int,
}


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    points: int

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)


@dataclass(frozen=True)
class ScanConfig:
    model: ModelSpec
    axes: tuple[Axis, ...]
    beta: float | None = 40.0
    weights: str = "boltzmann"
    sweep: SweepConfig = field(default_factory=SweepConfig)
    oracle_checks: tuple[str, ...] = ()
    threshold_factor: float = 10.0
    min_jump: float = 1e-6
    workers: int = 1
    out: Path = Path("scan_out")

    def points(self) -> list[ModelSpec]:
        """Grid points in row-major order (axis 1 outer)."""
        grids = [a.values() for a in self.axes]
        mesh = np.meshgrid(*grids, indexing="ij")
        flat = [g.ravel() for g in mesh]
        return [
            self.model.replace(**{a.name: float(v[i]) for a, v in zip(self.axes, flat)})
            for i in range(flat[0].size)
        ]


def _parse_axis(key: str, text: str, model: ModelSpec) -> Axis:
    parts = text.split(":")
    if len(parts) != 4:
        raise ConfigError(f"{key}: expected name:min:max:points, got {text!r}")
    name = parts[0].strip()
    if name not in model.parameter_names:
        raise ConfigError(
            f"{key}: unknown parameter {name!r} for model {model.kind}; "
            f"choose from {', '.join(model.parameter_names)}"
        )
    try:
        lo, hi, pts = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise ConfigError(f"{key}: bad number in {text!r}") from exc
    if pts < 2:
        raise ConfigError(f"{key}: need at least 2 points, got {pts}")
    if not hi > lo:
        raise ConfigError(f"{key}: max must exceed min")
    return Axis(name, lo, hi, pts)


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ScanConfig:
    """Parse the key/value grammar documented in the module docstring."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    raw.update(overrides or {})

    kind = raw.pop("model", None)
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model: expected one of {', '.join(MODEL_KINDS)}, got {kind!r}")
    cls = MODEL_KINDS[kind]
    params = {}
    for name in (*cls.parameter_names, "n"):
        if name in raw:
            try:
                params[name] = int(raw.pop(name)) if name == "n" else float(raw.pop(name))
            except ValueError as exc:
                raise ConfigError(f"{name}: not a number") from exc
    try:
        model = cls(**params)
    except ValueError as exc:
        raise ConfigError(f"model parameters: {exc}") from exc

    axes = []
    for key in ("axis1", "axis2"):
        if key in raw:
            axes.append(_parse_axis(key, raw.pop(key), model))
    if not axes:
        raise ConfigError("axis1: at least one scan axis is required")
    if len(axes) == 2 and axes[0].name == axes[1].name:
        raise ConfigError("axis2: must differ from axis1")

    beta_text = raw.pop("beta", "40")
    if beta_text.lower() in ("zero", "inf", "none"):
        beta = None
    else:
        try:
            beta = float(beta_text)
        except ValueError as exc:
            raise ConfigError(f"beta: expected a number or 'zero', got {beta_text!r}") from exc
        if beta <= 0:
            raise ConfigError("beta: must be positive")

    sweep_args = {}
    for key, conv in SWEEP_KEYS.items():
        if key in raw:
            try:
                sweep_args[key] = conv(raw.pop(key))
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse value") from exc
    if sweep_args.get("target_weights", "boltzmann") == "boltzmann" and beta is not None:
        sweep_args.setdefault("beta", beta)
    try:
        sweep = SweepConfig(**sweep_args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep settings: {exc}") from exc

    weights = raw.pop("weights", "boltzmann" if beta is not None else "ground_only")
    if weights not in ("boltzmann", "ground_only"):
        raise ConfigError(f"weights: expected boltzmann or ground_only, got {weights!r}")

    checks_text = raw.pop("oracle_checks", "none")
    checks = tuple(c.strip() for c in checks_text.split(",") if c.strip() and c.strip() != "none")
    for c in checks:
        if c not in ("ed", "freefermion"):
            raise ConfigError(f"oracle_checks: unknown check {c!r}")

    try:
        threshold = float(raw.pop("threshold_factor", "10"))
        min_jump = float(raw.pop("min_jump", "1e-6"))
        workers = int(raw.pop("workers", str(os.cpu_count() or 1)))
    except ValueError as exc:
        raise ConfigError(f"bad numeric setting: {exc}") from exc
    if workers < 1:
        raise ConfigError("workers: must be at least 1")
    out = Path(raw.pop("out", "scan_out"))
    if raw:
        raise ConfigError(f"unknown keys: {', '.join(sorted(raw))}")
    return ScanConfig(
        model, tuple(axes), beta, weights, sweep, checks, threshold, min_jump, workers, out
    )


def _run_point(args: tuple[ModelSpec, ScanConfig]) -> ScanRecord:
    spec, cfg = args
    try:
        return analyze_point(spec, cfg.sweep, cfg.beta, cfg.weights)
    except (TdmrgError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        nan = float("nan")
        return ScanRecord(
            spec.parameters(), nan, nan, np.array([]), nan, nan, 0, f"{type(exc).__name__}: {exc}"
        )


def _record_key(r: ScanRecord, axes: tuple[Axis, ...]) -> tuple[float, ...]:
    return tuple(r.parameters[a.name] for a in axes)


@dataclass
class ScanResult:
    records: list[ScanRecord]
    jumps: list[JumpReport]
    oracle_rows: list[dict] = field(default_factory=list)


def _lines(cfg: ScanConfig, records: list[ScanRecord]) -> Iterable[tuple[str, list[ScanRecord]]]:
    """Each 1-D line of the grid along each axis, labelled by axis name."""
    shape = tuple(a.points for a in cfg.axes)
    grid = np.empty(shape, dtype=object)
    for i, r in enumerate(records):
        grid[np.unravel_index(i, shape)] = r
    for k, axis in enumerate(cfg.axes):
        moved = np.moveaxis(grid, k, -1).reshape(-1, axis.points)
        for row in moved:
            yield axis.name, list(row)


def run_scan(
    cfg: ScanConfig, progress: Callable[[int, int], None] | None = None
) -> ScanResult:
    """Analyze every grid point, then look for jumps along every grid line."""
    points = cfg.points()
    tasks = [(p, cfg) for p in points]
    records: list[ScanRecord] = []
    if cfg.workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for rec in pool.map(_run_point, tasks):
                records.append(rec)
                if progress:
                    progress(len(records), len(points))
    else:
        for t in tasks:
            records.append(_run_point(t))
            if progress:
                progress(len(records), len(points))
    records.sort(key=lambda r: _record_key(r, cfg.axes))

    jumps: list[JumpReport] = []
    for axis_name, line in _lines(cfg, records):
        if len(line) < 4 or any(r.error for r in line):
            continue
        jumps.extend(
            detect_jumps(line, axis_name, cfg.threshold_factor, cfg.min_jump)
        )
    result = ScanResult(records, jumps)
    if cfg.oracle_checks:
        from .oracles import oracle_rows

        result.oracle_rows = oracle_rows(cfg, records)
    return result


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        return repr(float(x))
    return str(x)


def scan_csv(cfg: ScanConfig, records: list[ScanRecord]) -> str:
    names = cfg.model.parameter_names
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*names, *RESULT_COLUMNS])
    for r in records:
        w.writerow(
            [
                *(_fmt(r.parameters[n]) for n in names),
                _fmt(r.avg_trace_distance),
                _fmt(r.ground_energy),
                _fmt(r.geometric_phase),
                _fmt(r.max_discarded_weight),
                _fmt(r.support_dim_max),
                r.error or "",
            ]
        )
    return buf.getvalue()


def jumps_csv(jumps: list[JumpReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "location", "jump_size", "threshold_used"])
    for j in jumps:
        w.writerow([j.axis, _fmt(j.location), _fmt(j.jump_size), _fmt(j.threshold_used)])
    return buf.getvalue()


def heatmap_text(cfg: ScanConfig, records: list[ScanRecord], column: str = "avg_trace_distance") -> str:
    """Matrix file for gnuplot ``matrix`` plots: rows follow axis 1, columns axis 2."""
    a1, a2 = cfg.axes
    vals = np.array([getattr(r, column) for r in records]).reshape(a1.points, a2.points)
    lines = [
        f"# {column}",
        f"# rows: {a1.name} from {a1.lo!r} to {a1.hi!r} ({a1.points} points)",
        f"# columns: {a2.name} from {a2.lo!r} to {a2.hi!r} ({a2.points} points)",
    ]
    lines += [" ".join(_fmt(float(v)) for v in row) for row in vals]
    return "\n".join(lines) + "\n"


def oracle_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = ["point", "oracle", "quantity", "value", "reference", "abs_error", "passed"]
    w.writerow(keys)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in keys])
    return buf.getvalue()


def write_outputs(cfg: ScanConfig, result: ScanResult) -> list[Path]:
    cfg.out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str) -> None:
        path = cfg.out / name
        path.write_text(text)
        written.append(path)

    put("scan.csv", scan_csv(cfg, result.records))
    put("jumps.csv", jumps_csv(result.jumps))
    if len(cfg.axes) == 2:
        put("heatmap.dat", heatmap_text(cfg, result.records))
        put("phase_heatmap.dat", heatmap_text(cfg, result.records, "geometric_phase"))
    if cfg.oracle_checks:
        put("oracle_checks.csv", oracle_csv(result.oracle_rows))
    return written


def _cmd_scan(args: argparse.Namespace) -> int:
    overrides = {}
    if args.out is not None:
        overrides["out"] = args.out
    if args.workers is not None:
        overrides["workers"] = str(args.workers)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text, overrides)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    start = time.monotonic()

    def progress(done: int, total: int) -> None:
        if not args.quiet:
            print(f"[{done}/{total}] {time.monotonic() - start:.1f}s", file=sys.stderr)

    result = run_scan(cfg, progress)
    for path in write_outputs(cfg, result):
        print(path)
    failed = [r for r in result.records if r.error]
    for r in failed:
        print(f"point {r.parameters} failed: {r.error}", file=sys.stderr)
    bad_oracle = [row for row in result.oracle_rows if not row["passed"]]
    for row in bad_oracle:
        print(f"oracle mismatch: {row}", file=sys.stderr)
    return 2 if failed else 0


def _cmd_verify(args: argparse.Namespace) -> int:
    from .verify import SUITES, run_suites

    names = [args.suite] if args.suite else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        print(f"error: unknown suite {unknown[0]!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return 1
    ok = True
    for check in run_suites(names):
        print(json.dumps(dataclasses.asdict(check)))
        ok &= check.passed
    return 0 if ok else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tdmrg", description="Trace-distance phase-transition scans with DMRG"
    )
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("scan", help="run a parameter scan")
    s.add_argument("--config", required=True, help="key = value scan description")
    s.add_argument("--out", help="output directory (overrides the config)")
    s.add_argument("--workers", type=int, help="worker processes (default: cores)")
    s.add_argument("--seed", type=int, help="eigensolver seed")
    s.add_argument("--quiet", action="store_true", help="no progress lines")
    s.set_defaults(func=_cmd_scan)
    v = sub.add_parser("verify", help="run the invariant and oracle suites")
    v.add_argument("--suite", help="run a single suite")
    v.set_defaults(func=_cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
