"""Centralized on-demand coverage planner.

Robots send a request (id, state, local view) after finishing their current
path. Once every robot that was active in the previous horizon has reported,
the planner plans one horizon: robots without a remaining path (the
participants) get new collision-free paths, robots with a remaining path keep
it, every active path is cut to the shortest active length, and the cut-off
suffixes are stored for later horizons.

``Mode.FULL_REPLAN`` drops all remaining paths before planning, so every robot
is replanned every horizon (the full-replan baseline).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .assignment import cop_for_par
from .prioritized import PlanningError, PriorityBundle, cfp_for_par, pack_path
from .robots import Cell, Path, RobotKind, State, dummy_path, path_length, split_path
from .workspace import GridDims, WorkspaceView, fuse_local_into_global, unassigned_goals

log = logging.getLogger(__name__)


class Mode(str, Enum):
    ON_DEMAND = "ondem"
    FULL_REPLAN = "gamrcpp"


class DeadlockError(PlanningError):
    pass


@dataclass(frozen=True)
class RequestMessage:
    id: int
    state: State
    view: WorkspaceView


@dataclass(frozen=True)
class ResponseMessage:
    path: Path


@dataclass
class HorizonResult:
    index: int
    lam: int
    paths: dict[int, Path]
    planning_duration: float
    participants: list[int]
    coverage_complete: bool = False
    # robots whose planned path ends inside this horizon
    reached: list[int] = field(default_factory=list)
    goals_available: int = 0
    bundle: Optional[PriorityBundle] = field(default=None, repr=False)

    @property
    def participants_count(self) -> int:
        return len(self.participants)


class CoveragePlanner:
    def __init__(self, n_robots: int, dims: GridDims, kind: RobotKind, mode: Mode = Mode.ON_DEMAND):
        self.R = n_robots
        self.kind = kind
        self.mode = Mode(mode)
        self.global_view = WorkspaceView(dims)
        self.remaining: dict[int, Optional[Path]] = {i: None for i in range(1, n_robots + 1)}
        # pack_path of each remaining path, kept in step by slicing
        self._packed: dict[int, tuple] = {}
        self.reserved: set[Cell] = set()
        self.participants: dict[int, State] = {}
        self.inactive_prev: dict[int, State] = {}
        self.n_req = 0
        self.n_act = n_robots
        self.requested: set[int] = set()
        self.full_paths: dict[int, Path] = {}
        self.horizon_index = 0
        self.done = False

    # -- request intake -------------------------------------------------

    def handle_request(self, req: RequestMessage) -> Optional[HorizonResult]:
        """Register one request; returns the horizon plan once all are in."""
        if self.done:
            raise PlanningError("coverage already complete")
        if not 1 <= req.id <= self.R:
            raise ValueError(f"unknown robot id {req.id}")
        if req.id in self.requested:
            raise PlanningError(f"duplicate request from robot {req.id} in horizon {self.horizon_index + 1}")
        self.requested.add(req.id)
        if req.id not in self.full_paths:
            self.full_paths[req.id] = (req.state,)
        if self.mode is Mode.FULL_REPLAN or self.remaining[req.id] is None:
            self.participants[req.id] = req.state
        fuse_local_into_global(self.global_view, req.view)
        self.n_req += 1
        if self.n_req < self.n_act:
            return None
        self.participants.update(self.inactive_prev)
        result = self.plan_horizon()
        self.participants = {}
        self.requested = set()
        self.n_req = 0
        return result

    # -- planning -------------------------------------------------------

    def plan_horizon(self) -> HorizonResult:
        t0 = time.perf_counter()
        if self.mode is Mode.FULL_REPLAN:
            self.remaining = {i: None for i in self.remaining}
            self._packed = {}
            self.reserved = set()
        self.horizon_index += 1
        par = dict(sorted(self.participants.items()))
        goals = unassigned_goals(self.global_view, self.reserved)
        bundle = None
        if goals:
            sigma, bundle = self.plan_participants(par, goals)
        elif len(par) < self.R:
            sigma = {i: (s,) for i, s in par.items()}
        else:
            self.done = True
            return HorizonResult(
                self.horizon_index, 0, {}, time.perf_counter() - t0, sorted(par), coverage_complete=True
            )
        combined = {}
        for i in range(1, self.R + 1):
            combined[i] = sigma[i] if i in par else self.remaining[i]
            if combined[i] is None:
                raise PlanningError(f"robot {i} has neither a new nor a remaining path")
        positive = [path_length(p) for p in combined.values() if path_length(p) > 0]
        if not positive:
            raise DeadlockError(
                f"horizon {self.horizon_index}: {len(goals)} unassigned goals but no active robot; "
                f"participants={sorted(par)} reserved={sorted(self.reserved)}"
            )
        lam = min(positive)
        paths, reached = self.reserve_and_split(combined, lam)
        return HorizonResult(
            self.horizon_index,
            lam,
            paths,
            time.perf_counter() - t0,
            sorted(par),
            reached=reached,
            goals_available=len(goals),
            bundle=bundle,
        )

    def plan_participants(self, par: dict[int, State], goals: list[Cell]):
        if not par:
            raise PlanningError("no participants to plan for")
        items = list(par.items())
        gamma, phi, _ = cop_for_par(self.global_view, self.reserved, items, self.kind)
        rem = {i: p for i, p in self.remaining.items() if i not in par and p is not None}
        bundle = cfp_for_par(gamma, phi, rem, self.kind, self._packed)
        return bundle.paths, bundle

    def reserve_and_split(self, combined: dict[int, Path], lam: int):
        paths: dict[int, Path] = {}
        reached = []
        packed_prev = self._packed
        self._packed = {}
        self.remaining = {}
        self.reserved = set()
        self.inactive_prev = {}
        self.n_act = 0
        for i in range(1, self.R + 1):
            p = combined[i]
            n = path_length(p)
            if n > 0:
                assert n >= lam, "horizon longer than an active path"
                self.n_act += 1
                head, tail = split_path(p, lam)
                paths[i] = head
                if tail is not None:
                    self.reserved.add(p[-1].cell)
                    self.remaining[i] = tail
                    cells, arr = packed_prev.get(i) or pack_path(p)
                    self._packed[i] = (cells[lam:], arr[lam:])
                else:
                    self.remaining[i] = None
                    reached.append(i)
                self.full_paths[i] = self.full_paths[i] + head[1:]
            else:
                self.inactive_prev[i] = p[0]
                self.remaining[i] = None
                self.full_paths[i] = self.full_paths[i] + dummy_path(p[0], lam)[1:]
        return paths, reached

    def responses(self, result: HorizonResult) -> dict[int, ResponseMessage]:
        return {i: ResponseMessage(p) for i, p in result.paths.items()}

    def run_baseline_horizon(self) -> HorizonResult:
        if self.mode is not Mode.FULL_REPLAN:
            raise PlanningError("baseline horizon requires FULL_REPLAN mode")
        return self.plan_horizon()
