"""Cost-optimal goal assignment for the participants of a horizon.

For every participant the optimal cost to every unassigned goal is found by
one breadth-first search over its state graph restricted to goal and covered
cells; a Hungarian solve then picks the sum-of-costs optimal matching.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _search
from .robots import Cell, Orientation, Path, RobotKind, State
from .workspace import WorkspaceView, unassigned_goals

INF = float("inf")

Assignment = dict[int, Optional[int]]


@dataclass
class CostMatrix:
    ids: list[int]
    goals: list[Cell]
    values: np.ndarray  # float, +inf where unreachable

    def __getitem__(self, key):
        i, j = key
        return float(self.values[self.ids.index(i), j])


@dataclass
class PathMatrix:
    """Optimal paths, materialised lazily from the per-participant searches."""

    ids: list[int]
    goals: list[Cell]
    kind: RobotKind
    X: int
    Y: int
    _ends: list[np.ndarray] = field(repr=False, default_factory=list)
    # (queue, parent) of each search, see _search.bfs_states
    _parents: list[tuple] = field(repr=False, default_factory=list)

    def __getitem__(self, key) -> Optional[Path]:
        i, j = key
        r = self.ids.index(i)
        end = int(self._ends[r][j])
        if end < 0:
            return None
        seq = _search.trace_back(*self._parents[r], end)
        return decode_states(seq, self.kind, self.Y, self.X)


def encode_state(s: State, kind: RobotKind, Y: int) -> int:
    c = (s.x - 1) * Y + (s.y - 1)
    return c * 4 + int(s.o) if kind.oriented else c


@lru_cache(maxsize=8)
def _state_table(oriented: bool, X: int, Y: int) -> list[State]:
    # one shared State per encoded index; States are immutable
    if oriented:
        return [State(x, y, o) for x in range(1, X + 1) for y in range(1, Y + 1) for o in Orientation]
    return [State(x, y) for x in range(1, X + 1) for y in range(1, Y + 1)]


def decode_states(seq, kind: RobotKind, Y: int, X: Optional[int] = None) -> Path:
    if X is None:
        X = int(max(seq)) // (4 if kind.oriented else 1) // Y + 1
    table = _state_table(kind.oriented, X, Y)
    return tuple(table[s] for s in seq.tolist())


def compute_optimal_costs(
    global_view: WorkspaceView,
    reserved,
    participants: Sequence[tuple[int, State]],
    kind: RobotKind,
    goals: Optional[list[Cell]] = None,
    nearest: Optional[int] = None,
) -> tuple[CostMatrix, PathMatrix]:
    """Optimal cost and path from each participant to each unassigned goal.

    Only goal and covered cells are traversable. Rows follow ``participants``
    order; columns follow ``goals`` (defaults to the unassigned goals in
    ascending (x, y) order). With ``nearest`` each search stops after that
    many goals and the goals it did not reach are left at inf.
    """
    if goals is None:
        goals = unassigned_goals(global_view, reserved)
    X, Y = global_view.dims.X, global_view.dims.Y
    trav = global_view.traversable_mask().ravel()
    targets = np.full(X * Y, -1, dtype=np.int64)
    for j, (gx, gy) in enumerate(goals):
        targets[(gx - 1) * Y + (gy - 1)] = j
    nbr = _search.neighbour_table(trav, X, Y)
    ids = [i for i, _ in participants]
    n_stop = len(goals) if nearest is None else min(nearest, len(goals))
    values = np.full((len(participants), len(goals)), INF)
    seen = np.zeros(X * Y * (4 if kind.oriented else 1), dtype=np.int32)
    pm = PathMatrix(ids, list(goals), kind, X, Y)
    for r, (i, s) in enumerate(participants):
        if not global_view.dims.contains(s.cell) or not trav[(s.x - 1) * Y + (s.y - 1)]:
            raise ValueError(f"participant {i} starts on non-traversable cell {s.cell}")
        if kind.oriented and s.o is None:
            raise ValueError(f"participant {i} state lacks an orientation")
        ends, cost, queue, parent = _search.bfs_states(
            nbr, targets, len(goals), encode_state(s, kind, Y), kind.oriented, n_stop, seen, r + 1
        )
        reached = cost >= 0
        values[r, reached] = cost[reached]
        pm._ends.append(ends)
        pm._parents.append((queue, parent))
    return CostMatrix(ids, list(goals), values), pm


def compute_optimal_assignments(costs: CostMatrix) -> Assignment:
    """Sum-of-costs optimal one-to-one assignment.

    Maximises the number of finite-cost pairs first, then minimises their
    total. Unmatched participants map to None.
    """
    v = costs.values
    out: Assignment = {i: None for i in costs.ids}
    if v.size == 0:
        return out
    finite = np.isfinite(v)
    if not finite.any():
        return out
    # Sentinel exceeds any finite total, so infinite pairs are used only when
    # unavoidable and then dropped.
    sentinel = float(v[finite].sum()) + 1.0
    work = np.where(finite, v, sentinel)
    rows, cols = linear_sum_assignment(work)
    for r, c in zip(rows.tolist(), cols.tolist()):
        if finite[r, c]:
            out[costs.ids[r]] = c
    return out


def get_optimal_paths(
    assignment: Assignment, paths: PathMatrix, participants: Sequence[tuple[int, State]]
) -> dict[int, Path]:
    phi = {}
    for i, s in participants:
        j = assignment.get(i)
        if j is None:
            phi[i] = (s,)
            continue
        p = paths[i, j]
        if p is None:
            raise ValueError(f"participant {i} assigned goal {j} without a stored path")
        phi[i] = p
    return phi


def cop_for_par(global_view, reserved, participants, kind):
    """Optimal assignment plus the matching optimal paths.

    Returns ``(assignment, phi, costs)``; goal indices refer to ``costs.goals``.

    Each search stops at the participant's n nearest goals (n = number of
    participants), so ``costs`` is inf beyond those. The optimum is unchanged:
    a participant matched to a goal outside its n nearest always has one of
    those n free (the others hold at most n - 1), and moving it there costs
    no more.
    """
    costs, paths = compute_optimal_costs(global_view, reserved, participants, kind, nearest=len(participants))
    gamma = compute_optimal_assignments(costs)
    phi = get_optimal_paths(gamma, paths, participants)
    return gamma, phi, costs

