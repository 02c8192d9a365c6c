"""Deterministic lockstep mission simulator and trajectory verifier."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from .planner import CoveragePlanner, HorizonResult, Mode, PlanningError, RequestMessage
from .robots import Cell, Orientation, Path, RobotKind, State
from .workspace import (
    CellClass,
    GroundTruthMap,
    WorkspaceView,
    check_connectivity,
    components_without_robots,
    sense_at,
    sorted_cells,
)

log = logging.getLogger(__name__)

TRACE_SCHEMA = "ondemcpp-trace"
TRACE_VERSION = 1


class MissionError(RuntimeError):
    pass


@dataclass
class RobotAgent:
    id: int
    kind: RobotKind
    state: State
    local: WorkspaceView
    pending_path: Optional[Path] = None


@dataclass
class HorizonRecord:
    h: int
    lam: int
    active_ids: list[int]
    participants: list[int]
    plan_s: float
    paths: dict[int, Path]
    reached: list[int]
    goals_available: int
    # robots executing a remaining path stored in an earlier horizon
    continuing: dict[int, Path] = field(default_factory=dict)


@dataclass
class MissionTrace:
    map_name: str
    kind: RobotKind
    mode: Mode
    n_robots: int
    starts: dict[int, State]
    horizons: list[HorizonRecord] = field(default_factory=list)
    coverage_complete: bool = False
    covered: int = 0
    n_free: int = 0

    @property
    def lambda_total(self) -> int:
        return sum(h.lam for h in self.horizons)

    def full_paths(self) -> dict[int, list[State]]:
        """Every robot's concatenated states on the common timeline."""
        out = {i: [s] for i, s in self.starts.items()}
        for h in self.horizons:
            for i in out:
                p = h.paths.get(i)
                if p is None:
                    out[i].extend([out[i][-1]] * h.lam)
                else:
                    out[i].extend(p[1:])
        return out

    def write_jsonl(self, fh: TextIO, timing: bool = True) -> None:
        header = {
            "schema": TRACE_SCHEMA,
            "version": TRACE_VERSION,
            "map": self.map_name,
            "kind": self.kind.value,
            "mode": self.mode.value,
            "R": self.n_robots,
            "starts": {str(i): s.as_list() for i, s in self.starts.items()},
        }
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for h in self.horizons:
            rec = {
                "h": h.h,
                "lambda": h.lam,
                "active_ids": h.active_ids,
                "participants": h.participants,
                "plan_ms": round(h.plan_s * 1000.0, 3) if timing else 0.0,
                "paths": {str(i): [s.as_list() for s in p] for i, p in sorted(h.paths.items())},
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")

    @classmethod
    def read_jsonl(cls, fh: TextIO) -> "MissionTrace":
        lines = [json.loads(line) for line in fh if line.strip()]
        head = lines[0]
        if head.get("schema") != TRACE_SCHEMA:
            raise ValueError("not a mission trace file")
        trace = cls(
            head["map"],
            RobotKind(head["kind"]),
            Mode(head["mode"]),
            head["R"],
            {int(k): State.from_list(v) for k, v in head["starts"].items()},
        )
        for rec in lines[1:]:
            paths = {int(k): tuple(State.from_list(s) for s in v) for k, v in rec["paths"].items()}
            trace.horizons.append(
                HorizonRecord(
                    rec["h"], rec["lambda"], rec["active_ids"], rec["participants"],
                    rec["plan_ms"] / 1000.0, paths, [], 0,
                )
            )
        return trace


@dataclass
class Violation:
    t: int
    kind: str  # "obstacle", "same-cell" or "head-on"
    robots: tuple[int, ...]
    cell: Optional[Cell] = None


@dataclass
class CollisionReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.violations

    @property
    def ok(self) -> bool:
        return not self.violations


def deploy_robots(truth: GroundTruthMap, n_robots: int, kind: RobotKind, seed: int) -> list[RobotAgent]:
    """Seeded deployment on distinct free cells.

    The whole free set is permuted once per seed and the first ``n_robots``
    cells are taken, so deployments for a fixed seed are nested across R.
    """
    free = sorted_cells(truth.free_mask)
    if n_robots > len(free):
        raise ValueError(f"cannot place {n_robots} robots on {len(free)} free cells")
    if n_robots < 1:
        raise ValueError("need at least one robot")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(free))
    orients = rng.integers(0, 4, size=len(free))
    agents = []
    for i in range(n_robots):
        x, y = free[perm[i]]
        o = Orientation(int(orients[i])) if kind.oriented else None
        agents.append(RobotAgent(i + 1, kind, State(x, y, o), WorkspaceView(truth.dims)))
    return agents


def _check_step(prev: dict[int, Cell], cur: dict[int, Cell], truth: GroundTruthMap, t: int) -> list[Violation]:
    out = []
    seen: dict[Cell, int] = {}
    for i in sorted(cur):
        c = cur[i]
        if not truth.is_free(c):
            out.append(Violation(t, "obstacle", (i,), c))
        if c in seen:
            out.append(Violation(t, "same-cell", (seen[c], i), c))
        else:
            seen[c] = i
    if prev is not None:
        back = {}
        for i in cur:
            if prev[i] != cur[i]:
                back[(prev[i], cur[i])] = i
        for (a, b), i in back.items():
            k = back.get((b, a))
            if k is not None and i < k:
                out.append(Violation(t, "head-on", (i, k), None))
    return out


def verify_trajectories(trace: MissionTrace, truth: GroundTruthMap) -> CollisionReport:
    full = trace.full_paths()
    ids = sorted(full)
    report = CollisionReport()
    if not ids:
        return report
    T = len(full[ids[0]])
    prev = None
    for t in range(T):
        cur = {i: full[i][t].cell for i in ids}
        report.violations.extend(_check_step(prev, cur, truth, t))
        prev = cur
    return report


def run_mission(
    truth: GroundTruthMap,
    agents: list[RobotAgent],
    planner: CoveragePlanner,
    tau: float = 1.0,
    max_horizons: Optional[int] = None,
    check_steps: bool = True,
) -> MissionTrace:
    """Run request / plan / execute rounds until the planner reports coverage."""
    del tau  # simulated time only enters the metrics
    if max_horizons is None:
        max_horizons = truth.n_free
    by_id = {a.id: a for a in agents}
    starts = {a.id: a.state for a in agents}
    if not check_connectivity(truth):
        missing = components_without_robots(truth, [a.state.cell for a in agents])
        if missing:
            log.warning("%d free component(s) hold no robot; they cannot be covered", missing)
        else:
            log.warning("free space is disconnected; every component holds a robot")
    occupied = {a.state.cell for a in agents}
    for a in agents:
        sense_at(a.local, a.state, truth, occupied - {a.state.cell})
    trace = MissionTrace(truth.name, planner.kind, planner.mode, len(agents), starts)
    senders = sorted(by_id)
    pending_rem: dict[int, Path] = {}
    clock = 0
    while True:
        result: Optional[HorizonResult] = None
        for i in senders:
            a = by_id[i]
            out = planner.handle_request(RequestMessage(i, a.state, a.local))
            if out is not None:
                result = out
        if result is None:
            raise MissionError("planner did not answer after all requests")
        if result.coverage_complete:
            break
        if len(trace.horizons) >= max_horizons:
            raise MissionError(f"exceeded {max_horizons} horizons without completing coverage")
        continuing = {i: p for i, p in pending_rem.items() if i not in result.participants}
        for i, p in continuing.items():
            if result.paths.get(i) != p[: result.lam + 1]:
                raise MissionError(f"robot {i} deviated from its stored remaining path")
        _execute(truth, by_id, result, check_steps, clock)
        clock += result.lam
        trace.horizons.append(
            HorizonRecord(
                result.index,
                result.lam,
                sorted(result.paths),
                result.participants,
                result.planning_duration,
                result.paths,
                result.reached,
                result.goals_available,
                continuing,
            )
        )
        pending_rem = {i: p for i, p in planner.remaining.items() if p is not None}
        senders = sorted(result.paths)
    covered = planner.global_view.mask(CellClass.COVERED)
    trace.covered = int(covered.sum())
    trace.n_free = truth.n_free
    trace.coverage_complete = bool(np.array_equal(covered, truth.free_mask))
    return trace


def _execute(truth, by_id, result: HorizonResult, check_steps: bool, t0: int) -> None:
    movers = sorted(result.paths)
    for step in range(1, result.lam + 1):
        prev = {i: a.state.cell for i, a in by_id.items()}
        for i in movers:
            by_id[i].state = result.paths[i][step]
        cur = {i: a.state.cell for i, a in by_id.items()}
        if check_steps:
            bad = _check_step(prev, cur, truth, t0 + step)
            if bad:
                raise MissionError(f"collision during horizon {result.index}: {bad}")
        occupied = set(cur.values())
        for i in movers:
            a = by_id[i]
            occupied.discard(a.state.cell)
            sense_at(a.local, a.state, truth, occupied)
            occupied.add(a.state.cell)
    for i in movers:
        by_id[i].pending_path = None
