"""Experiment runner: missions over (R, mode, seed), metrics and CSV output.

Usage::

    python -m ondemcpp --map maze-128-128-2 --robots 4,16 --kind turtlebot \
        --planner both --seeds 1-5 --out results.csv --trace-dir traces/
"""
from __future__ import annotations

import argparse
import csv
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Optional, Sequence

from . import _search
from .planner import CoveragePlanner, Mode, PlanningError
from .robots import RobotKind
from .simulator import MissionError, MissionTrace, deploy_robots, run_mission, verify_trajectories
from .workspace import GroundTruthMap, MapFormatError, load_map

log = logging.getLogger(__name__)

CSV_FIELDS = [
    "map", "kind", "mode", "R", "seed", "horizons", "lambda_total", "avg_participants",
    "t_c_s", "t_p_s", "t_halt_s", "t_nonhalt_s", "t_m_s", "complete",
]
_NUMERIC = CSV_FIELDS[5:13]


@dataclass
class ExperimentConfig:
    map_path: str
    robots: list[int]
    kind: RobotKind = RobotKind.TURTLEBOT
    modes: list[Mode] = field(default_factory=lambda: [Mode.ON_DEMAND])
    seeds: list[int] = field(default_factory=lambda: [1])
    tau: float = 1.0
    crop: Optional[tuple[int, int]] = None
    max_horizons: Optional[int] = None
    out: Optional[str] = None
    trace_dir: Optional[str] = None
    timing: bool = True
    jobs: int = 1

    def __post_init__(self):
        if not self.robots or any(r <= 0 for r in self.robots):
            raise ValueError("robot counts must be a non-empty list of positive integers")
        if not self.seeds:
            raise ValueError("seed list is empty")
        if not self.modes:
            raise ValueError("no planner mode selected")
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass
class MetricsRow:
    map: str
    kind: str
    mode: str
    R: int
    seed: int
    horizons: int
    lambda_total: int
    avg_participants: float
    t_c_s: float
    t_p_s: float
    t_halt_s: float
    t_nonhalt_s: float
    t_m_s: float
    complete: str = "true"  # "true", "false", "collision" or "error"

    @property
    def ok(self) -> bool:
        return self.complete == "true"

    def csv_values(self) -> list[str]:
        return [
            self.map, self.kind, self.mode, str(self.R), str(self.seed), str(self.horizons),
            str(self.lambda_total), f"{self.avg_participants:.4f}", f"{self.t_c_s:.6f}",
            f"{self.t_p_s:.6f}", f"{self.t_halt_s:.6f}", f"{self.t_nonhalt_s:.6f}",
            f"{self.t_m_s:.6f}", self.complete,
        ]


def compute_metrics(trace: MissionTrace, tau: float = 1.0, seed: int = 0) -> MetricsRow:
    lam = trace.lambda_total
    t_c = sum(h.plan_s for h in trace.horizons)
    t_p = lam * tau
    full = trace.full_paths()
    if full and lam:
        halts = [sum(1 for a, b in zip(p, p[1:]) if a == b) for p in full.values()]
        t_halt = tau * sum(halts) / len(halts)
    else:
        t_halt = 0.0
    H = len(trace.horizons)
    r_star = sum(len(h.participants) for h in trace.horizons) / H if H else 0.0
    return MetricsRow(
        trace.map_name,
        trace.kind.value,
        trace.mode.value,
        trace.n_robots,
        seed,
        H,
        lam,
        r_star,
        t_c,
        t_p,
        t_halt,
        t_p - t_halt,
        t_c + t_p,
        "true" if trace.coverage_complete else "false",
    )


def load_workspace(map_path: str, crop: Optional[tuple[int, int]] = None) -> GroundTruthMap:
    """Load a map file, falling back to the bundled maps by name."""
    p = Path(map_path)
    if not p.exists():
        bundled = files("ondemcpp") / "maps" / (p.name if p.suffix == ".map" else p.name + ".map")
        if not bundled.is_file():
            raise FileNotFoundError(f"map not found: {map_path}")
        truth = load_map(bundled.read_bytes(), name=p.stem)
    else:
        truth = load_map(p)
    if crop is not None:
        truth = truth.crop(*crop)
    return truth


def run_one(truth: GroundTruthMap, kind: RobotKind, mode: Mode, R: int, seed: int,
            tau: float = 1.0, max_horizons: Optional[int] = None):
    """One mission; returns (row, trace or None)."""
    agents = deploy_robots(truth, R, kind, seed)
    planner = CoveragePlanner(R, truth.dims, kind, mode)
    try:
        trace = run_mission(truth, agents, planner, tau=tau, max_horizons=max_horizons)
    except (MissionError, PlanningError) as e:
        log.error("%s %s %s R=%d seed=%d failed: %s", truth.name, kind.value, mode.value, R, seed, e)
        row = MetricsRow(truth.name, kind.value, mode.value, R, seed, 0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, "error")
        return row, None
    row = compute_metrics(trace, tau, seed)
    if row.ok and not verify_trajectories(trace, truth).ok:
        row.complete = "collision"
    return row, trace


def trace_filename(map_name: str, kind: str, mode: str, R: int, seed: int) -> str:
    safe = map_name.replace("@", "_").replace("/", "_")
    return f"{safe}_{kind}_{mode}_R{R}_s{seed}.jsonl"


def _run_task(args):
    truth, kind, mode, R, seed, tau, max_h, trace_dir, timing = args
    _search.warm_up()
    row, trace = run_one(truth, kind, mode, R, seed, tau, max_h)
    if not timing:
        row.t_c_s = 0.0
        row.t_m_s = row.t_p_s
    if trace is not None and trace_dir is not None:
        with open(Path(trace_dir) / trace_filename(row.map, row.kind, row.mode, R, seed), "w") as fh:
            trace.write_jsonl(fh, timing=timing)
    return row


def summarize(rows: Sequence[MetricsRow]) -> list[list[str]]:
    """One row per (R, mode) holding mean±std over seeds."""
    groups: dict[tuple[int, str], list[MetricsRow]] = {}
    for r in rows:
        groups.setdefault((r.R, r.mode), []).append(r)
    out = []
    for (R, mode), rs in groups.items():
        vals = []
        for name in _NUMERIC:
            xs = [float(getattr(r, name)) for r in rs]
            sd = statistics.stdev(xs) if len(xs) > 1 else 0.0
            vals.append(f"{statistics.fmean(xs):.4f}±{sd:.4f}")
        done = "true" if all(r.ok for r in rs) else "false"
        out.append([rs[0].map, rs[0].kind, mode, str(R), "summary"] + vals + [done])
    return out


def run_experiments(config: ExperimentConfig) -> tuple[list[MetricsRow], int]:
    """Run every (R, mode, seed) triple; returns rows and the exit code."""
    truth = load_workspace(config.map_path, config.crop)
    if config.trace_dir:
        Path(config.trace_dir).mkdir(parents=True, exist_ok=True)
    tasks = [
        (truth, config.kind, mode, R, seed, config.tau, config.max_horizons, config.trace_dir, config.timing)
        for R in config.robots
        for mode in config.modes
        for seed in config.seeds
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = [_run_task(t) for t in tasks]
    for r in rows:
        log.info("%s", ",".join(r.csv_values()))
    if config.out:
        with open(config.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for r in rows:
                w.writerow(r.csv_values())
            for s in summarize(rows):
                w.writerow(s)
    return rows, 0 if all(r.ok for r in rows) else 1


def _int_list(text: str) -> list[int]:
    # "1,2,5-8" -> [1, 2, 5, 6, 7, 8]
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, "")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _crop(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        size = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"crop must look like 64x64, got {text!r}")
    if min(size) <= 0:
        raise argparse.ArgumentTypeError("crop sizes must be positive")
    return size


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ondemcpp-bench",
        description="Run multi-robot coverage missions and write per-run metrics as CSV.",
    )
    p.add_argument("--map", required=True, help="MovingAI .map file, or the name of a bundled map")
    p.add_argument("--crop", type=_crop, help="keep the top-left WxH window (largest free component)")
    p.add_argument("--robots", type=_int_list, default=[4], help="robot counts, e.g. 4,16,64")
    p.add_argument("--kind", choices=[k.value for k in RobotKind], default=RobotKind.TURTLEBOT.value)
    p.add_argument("--planner", choices=["ondem", "gamrcpp", "both"], default="ondem",
                   help="ondem keeps remaining paths, gamrcpp replans every robot each horizon")
    p.add_argument("--seeds", type=_int_list, default=[1], help="deployment seeds, e.g. 1-10")
    p.add_argument("--tau", type=float, default=1.0, help="seconds per motion primitive")
    p.add_argument("--max-horizons", type=int, help="abort a mission after this many horizons (default |free|)")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--trace-dir", help="directory for per-run trace files")
    p.add_argument("--no-timing", action="store_true",
                   help="write zero planning times so repeated runs give identical files")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_args(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    parser = build_parser()
    a = parser.parse_args(argv)
    modes = [Mode.ON_DEMAND, Mode.FULL_REPLAN] if a.planner == "both" else [Mode(a.planner)]
    if a.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return ExperimentConfig(
            map_path=a.map,
            robots=a.robots,
            kind=RobotKind(a.kind),
            modes=modes,
            seeds=a.seeds,
            tau=a.tau,
            crop=a.crop,
            max_horizons=a.max_horizons,
            out=a.out,
            trace_dir=a.trace_dir,
            timing=not a.no_timing,
            jobs=max(1, a.jobs),
        )
    except ValueError as e:
        parser.error(str(e))


def main(argv: Optional[Sequence[str]] = None) -> int:
    config = parse_args(argv)
    try:
        rows, code = run_experiments(config)
    except (FileNotFoundError, MapFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if config.out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow(r.csv_values())
    bad = [r for r in rows if not r.ok]
    for r in bad:
        print(f"FAILED: {r.mode} R={r.R} seed={r.seed}: {r.complete}", file=sys.stderr)
    return code
