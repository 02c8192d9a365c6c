"""Collision-free paths for the participants by dynamic prioritization.

The optimal paths coming out of the assignment step are first repaired so no
two of them form a crossover or nested pair, then ordered by their pairwise
must-move-first relations, and finally delayed at their start states until
they clear every higher-priority trajectory. Non-participants keep their
remaining paths untouched and always rank highest.

Occupancy convention used throughout: a robot occupies its first cell until
its path starts and its last cell forever after the path ends. Only cells are
compared; orientation is ignored.
"""
from __future__ import annotations

import heapq
import logging
from itertools import chain
from operator import itemgetter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .assignment import Assignment
from .robots import Cell, Path, RobotKind, State, path_cost, rotation_prefix

log = logging.getLogger(__name__)

CROSSOVER = "crossover"
NESTED = "nested"


class PlanningError(RuntimeError):
    pass


_xy = itemgetter(0, 1)


def _cells(path: Path) -> frozenset[Cell]:
    return frozenset(map(_xy, path))


def _pair_kind(a: Path, a_cells, a_active: bool, b: Path, b_cells, b_active: bool) -> Optional[str]:
    if a_active and b_active:
        a0, b0 = _xy(a[0]), _xy(b[0])
        a_on_b = a0 in b_cells
        b_on_a = b0 in a_cells
        if a_on_b and b_on_a:
            return CROSSOVER
        if (a_on_b and _xy(a[-1]) in b_cells) or (b_on_a and _xy(b[-1]) in a_cells):
            return NESTED
        return None
    if a_active and not b_active:
        return CROSSOVER if _xy(b[0]) in a_cells else None
    if b_active and not a_active:
        return CROSSOVER if _xy(a[0]) in b_cells else None
    return None


def detect_infeasible_pairs(omega: Mapping[int, Path], gamma: Assignment) -> list[tuple[tuple[int, int], str]]:
    """Crossover and nested pairs among the participants' paths."""
    ids = sorted(omega)
    cells = {i: _cells(omega[i]) for i in ids}
    out = []
    for n, i in enumerate(ids):
        for j in ids[n + 1 :]:
            kind = _pair_kind(
                omega[i], cells[i], gamma.get(i) is not None, omega[j], cells[j], gamma.get(j) is not None
            )
            if kind:
                out.append(((i, j), kind))
    return out


def pack_many(paths: Sequence[Path]) -> list[tuple[np.ndarray, np.ndarray]]:
    """pack_path for several paths with one conversion."""
    lens = [len(p) for p in paths]
    total = sum(lens)
    flat = np.fromiter(chain.from_iterable(map(_xy, chain.from_iterable(paths))), np.int64, 2 * total)
    arr = flat.reshape(total, 2)
    if total and arr.max() >= 1 << _CELL_BITS:
        raise ValueError("grid coordinates exceed the packed-key range")
    keys = (arr[:, 0] << _CELL_BITS) | arr[:, 1]
    out = []
    a = 0
    for n in lens:
        out.append((keys[a : a + n], arr[a : a + n]))
        a += n
    return out


def _on_paths(keys, owner, probes, n):
    """[p, k] is set when cell ``probes[k]`` occurs in path p."""
    out = np.zeros((n, n), dtype=bool)
    if not n:
        return out
    order = np.argsort(probes, kind="stable")
    sp = probes[order]
    lo = np.searchsorted(sp, keys, "left")
    hi = np.searchsorted(sp, keys, "right")
    hit = hi > lo
    out[owner[hit], order[lo[hit]]] = True
    # repeated probe cells (never expected, but kept exact)
    for r in np.nonzero(hi - lo > 1)[0].tolist():
        out[owner[r], order[lo[r] : hi[r]]] = True
    return out


def path_relations(packs) -> tuple[np.ndarray, np.ndarray]:
    """Start and goal incidence for packed paths in a fixed order.

    ``on_start[p, k]``: the start cell of path k lies on path p.
    ``on_goal[p, k]``: the last cell of path k lies on path p.
    """
    n = len(packs)
    if not n:
        return np.zeros((0, 0), bool), np.zeros((0, 0), bool)
    keys = np.concatenate([c for c, _ in packs])
    owner = np.repeat(np.arange(n), [len(c) for c, _ in packs])
    starts = np.array([c[0] for c, _ in packs], dtype=np.int64)
    goals = np.array([c[-1] for c, _ in packs], dtype=np.int64)
    return _on_paths(keys, owner, starts, n), _on_paths(keys, owner, goals, n)


def infeasible_matrix(on_start, on_goal, active) -> np.ndarray:
    """[i, j] is set when paths i and j form a crossover or nested pair."""
    both = active[:, None] & active[None, :]
    # i's start and goal both on j's path
    nested = on_start.T & on_goal.T
    bad = both & ((on_start & on_start.T) | nested | nested.T)
    # inactive j standing on active i's path
    lone = active[:, None] & ~active[None, :] & on_start
    bad |= lone | lone.T
    np.fill_diagonal(bad, False)
    return bad


def repair_paths(
    phi: Mapping[int, Path], gamma: Assignment, kind: RobotKind
) -> tuple[Assignment, dict[int, Path]]:
    """Remove infeasible pairs by killing and reviving participants.

    Active participants in an infeasible pair are killed (repeated until no
    active path meets a killed or inactive robot). Killed paths are then taken
    in ascending ID order and walked from the goal backwards; the first
    unrevived participant standing on the path whose takeover of the suffix
    forms no infeasible pair is revived and assigned that goal.
    """
    gamma, omega, _ = _repair(phi, gamma, kind)
    return gamma, omega


def _repair(phi, gamma, kind):
    """repair_paths plus (packs, relations) of ``omega`` in ascending ID order."""
    ids = sorted(phi)
    phi_packs = pack_many([phi[i] for i in ids])
    packs = list(phi_packs)
    on_start, on_goal = path_relations(packs)
    active = np.array([gamma.get(i) is not None for i in ids], dtype=bool)
    killed = np.zeros(len(ids), dtype=bool)
    while True:
        newly = active & infeasible_matrix(on_start, on_goal, active).any(axis=1)
        if not newly.any():
            break
        killed |= newly
        active &= ~newly
        # a killed robot's path shrinks to its start cell, which is also its goal now
        k = np.nonzero(newly)[0]
        on_start[k, :] = False
        on_goal[k, :] = False
        on_goal[:, k] = on_start[:, k]
        on_start[k, k] = True
        on_goal[k, k] = True
        for n in k.tolist():
            packs[n] = (packs[n][0][:1], packs[n][1][:1])
    omega = {i: ((phi[i][0],) if killed[n] else phi[i]) for n, i in enumerate(ids)}
    new_gamma: Assignment = {i: (gamma.get(i) if active[n] else None) for n, i in enumerate(ids)}
    if killed.any():
        _revive(phi, phi_packs, gamma, kind, ids, killed, active, packs, on_start, on_goal, omega, new_gamma)
    return new_gamma, omega, (packs, (on_start, on_goal))


def _revive(phi, phi_packs, gamma, kind, ids, killed, active, packs, on_start, on_goal, omega, new_gamma):
    """Hand killed paths' goals to robots standing on them; updates in place."""
    pos = {i: n for n, i in enumerate(ids)}
    starts = np.array([c[0] for c, _ in phi_packs], dtype=np.int64)
    goals = np.array([c[-1] for c, _ in packs], dtype=np.int64)
    unrevived = {int(starts[n]): i for n, i in enumerate(ids) if not active[n]}

    def flatten():
        return np.concatenate([c for c, _ in packs]), np.repeat(np.arange(len(ids)), [len(c) for c, _ in packs])

    all_keys, owner = flatten()
    for n in np.nonzero(killed)[0].tolist():
        if not unrevived:
            break
        i = ids[n]
        path = phi[i]
        keys, arr = phi_packs[n]
        last = {kk: k for k, kk in enumerate(keys.tolist())}
        # cells holding an unrevived robot, walked from the goal backwards
        hits = sorted(((last[c], c) for c in unrevived if c in last), reverse=True)
        if not hits:
            continue
        # every takeover keeps this path's goal and a suffix of its cells
        last_s = np.array([last.get(c, -1) for c in starts.tolist()])
        last_g = np.array([last.get(c, -1) for c in goals.tolist()])
        col_g = np.zeros(len(ids), dtype=bool)
        col_g[owner[all_keys == keys[-1]]] = True
        for k, key in hits:
            j = unrevived[key]
            m = pos[j]
            sj = phi[j][0]
            prefix = rotation_prefix(sj, path[k].o) if kind.oriented else (sj,)
            if len(prefix) + len(path) - k - 1 == 1:
                continue
            row_s = (last_s > k) | (starts == key)
            row_g = (last_g > k) | (goals == key)
            col_s = on_start[:, m]
            bad = (active & ((row_s & col_s) | (col_s & col_g) | (row_s & row_g))) | (~active & row_s)
            bad[m] = False
            if bad.any():
                continue
            ckeys = np.concatenate([np.full(len(prefix), key, dtype=np.int64), keys[k + 1 :]])
            carr = np.concatenate([np.repeat(arr[k : k + 1], len(prefix), axis=0), arr[k + 1 :]])
            packs[m] = (ckeys, carr)
            active[m] = True
            goals[m] = ckeys[-1]
            on_start[m, :] = row_s
            on_goal[m, :] = row_g
            on_goal[:, m] = col_g
            on_start[m, m] = on_goal[m, m] = True
            all_keys, owner = flatten()
            omega[j] = prefix + path[k + 1 :]
            new_gamma[j] = gamma[i]
            del unrevived[key]
            break


@dataclass
class RelativePrecedence:
    ids: list[int]
    m: np.ndarray

    def __getitem__(self, key) -> bool:
        i, j = key
        return bool(self.m[self.ids.index(i), self.ids.index(j)])

    def edges(self) -> dict[int, list[int]]:
        out = {i: [] for i in self.ids}
        rows, cols = np.nonzero(self.m)
        for r, c in zip(rows.tolist(), cols.tolist()):
            out[self.ids[r]].append(self.ids[c])
        return out


def compute_relative_precedences(
    omega: Mapping[int, Path], gamma: Assignment, relations=None
) -> RelativePrecedence:
    """``[i][j]`` is set when i must move before j.

    That holds when i's start lies on j's path or j's goal lies on i's path.
    Only active participants are ranked. ``relations`` may carry
    path_relations for ``omega`` in ascending ID order.
    """
    all_ids = sorted(omega)
    if relations is None:
        relations = path_relations(pack_many([omega[i] for i in all_ids]))
    on_start, on_goal = relations
    keep = np.array([gamma.get(i) is not None for i in all_ids], dtype=bool)
    ids = [i for i, k in zip(all_ids, keep.tolist()) if k]
    m = (on_start.T | on_goal)[np.ix_(keep, keep)]
    np.fill_diagonal(m, False)
    return RelativePrecedence(ids, m)


def compute_absolute_precedence(theta_r: RelativePrecedence) -> Optional[list[int]]:
    """Topological order (ties by ascending ID), or None on a cycle."""
    edges = theta_r.edges()
    indeg = {i: 0 for i in theta_r.ids}
    for i, succ in edges.items():
        for j in succ:
            indeg[j] += 1
    ready = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in edges[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != len(theta_r.ids):
        return None
    return order


def find_cycle(edges: Mapping[int, Sequence[int]], alive: set[int]) -> Optional[list[int]]:
    """One directed cycle among ``alive`` nodes, DFS from the smallest ID."""
    color = {i: 0 for i in alive}
    for root in sorted(alive):
        if color[root]:
            continue
        stack = [(root, iter(sorted(j for j in edges.get(root, ()) if j in alive)))]
        trail = [root]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                trail.pop()
                color[node] = 2
                continue
            if color[nxt] == 1:
                return trail[trail.index(nxt) :]
            if color[nxt] == 0:
                color[nxt] = 1
                trail.append(nxt)
                stack.append((nxt, iter(sorted(j for j in edges.get(nxt, ()) if j in alive))))
    return None


def break_precedence_cycles(
    gamma: Assignment, theta_r: RelativePrecedence, omega: Mapping[int, Path]
) -> Assignment:
    """Inactivate participants until the precedence graph is acyclic.

    In each cycle the participant with the costliest path is dropped, ties by
    ascending ID.
    """
    out = dict(gamma)
    edges = theta_r.edges()
    alive = set(theta_r.ids)
    while True:
        cycle = find_cycle(edges, alive)
        if cycle is None:
            return out
        victim = max(sorted(cycle), key=lambda i: path_cost(omega[i]))
        out[victim] = None
        alive.discard(victim)


# Packed integer keys: cell = x << 16 | y, vertex = t << 32 | cell,
# move into ``cell`` from direction d = vertex * 9 + d.
_CELL_BITS = 16


def pack_path(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """(cell keys, (n, 2) coordinates) of a path; slices stay valid for suffixes."""
    n = len(path)
    arr = np.fromiter(chain.from_iterable(map(_xy, path)), np.int64, 2 * n).reshape(n, 2)
    if arr.max() >= 1 << _CELL_BITS:
        raise ValueError("grid coordinates exceed the packed-key range")
    return (arr[:, 0] << _CELL_BITS) | arr[:, 1], arr


def _delay(packed, offset: int):
    if not offset:
        return packed
    cells, arr = packed
    return (
        np.concatenate([np.repeat(cells[:1], offset), cells]),
        np.concatenate([np.repeat(arr[:1], offset, axis=0), arr]),
    )


def _move_codes(arr):
    # direction code of each step arr[k-1] -> arr[k]; 4 (= no move) for halts
    d = arr[1:] - arr[:-1]
    return (d[:, 0] + 1) * 3 + (d[:, 1] + 1)


class Reservations:
    """Space-time occupancy of already fixed trajectories.

    A robot occupies its first cell until its path starts and its last cell
    forever after the path ends.
    """

    def __init__(self):
        self.occ: set[int] = set()
        self.moves: set[int] = set()
        self.parked_from: dict[Cell, int] = {}
        # all fixed cell keys and their time steps, plus tracks not merged yet
        self._cat = (np.empty(0, np.int64), np.empty(0, np.int64))
        self._pending: list[np.ndarray] = []
        self.end = 0

    def copy(self) -> "Reservations":
        out = Reservations()
        out.occ = set(self.occ)
        out.moves = set(self.moves)
        out.parked_from = dict(self.parked_from)
        out._cat = self._cat
        out._pending = list(self._pending)
        out.end = self.end
        return out

    def add(self, path: Path, offset: int = 0, packed=None) -> None:
        """Fix ``path`` delayed by ``offset``; ``packed`` may carry pack_path(path)."""
        cells, arr = _delay(packed if packed is not None else pack_path(path), offset)
        T = len(cells) - 1
        t = np.arange(T + 1, dtype=np.int64)
        vert = (t << 32) | cells
        self.occ.update(vert.tolist())
        if T:
            code = _move_codes(arr)
            moved = code != 4
            self.moves.update((vert[1:][moved] * 9 + code[moved]).tolist())
        last = _xy(path[-1])
        self.parked_from[last] = min(T, self.parked_from.get(last, T))
        self._pending.append(cells)
        self.end = max(self.end, T)

    def add_static(self, cell: Cell) -> None:
        self.parked_from[cell] = 0

    def _visits(self, cell: Cell) -> np.ndarray:
        """Time steps at which any fixed trajectory is on ``cell``."""
        if self._pending:
            cells, times = self._cat
            self._cat = (
                np.concatenate([cells] + self._pending),
                np.concatenate([times] + [np.arange(len(tr)) for tr in self._pending]),
            )
            self._pending = []
        cells, times = self._cat
        return times[cells == ((cell[0] << _CELL_BITS) | cell[1])]

    def first_visit(self, cell: Cell) -> Optional[int]:
        if self.parked_from.get(cell) == 0:
            return 0
        t = self._visits(cell)
        return int(t.min()) if t.size else None

    def last_visit(self, cell: Cell) -> int:
        t = self._visits(cell)
        return int(t.max()) if t.size else -1

    def conflicts(self, path: Path, offset: int) -> bool:
        """Whether ``path`` delayed by ``offset`` steps meets a fixed trajectory."""
        cells = [_xy(s) for s in path]
        start = cells[0]
        first = self.first_visit(start)
        if first is not None and first <= offset:
            return True
        prev = start
        t = offset
        for c in cells[1:]:
            t += 1
            key = (t << 32) | (c[0] << _CELL_BITS) | c[1]
            if key in self.occ:
                return True
            pf = self.parked_from.get(c)
            if pf is not None and pf <= t:
                return True
            if prev != c:
                # someone moving c -> prev at the same step
                back = (prev[0] - c[0] + 1) * 3 + (prev[1] - c[1] + 1)
                if ((t << 32) | (prev[0] << _CELL_BITS) | prev[1]) * 9 + back in self.moves:
                    return True
            prev = c
        goal = cells[-1]
        return goal in self.parked_from or self.last_visit(goal) > t

    def earliest_offset(self, path: Path, limit: int, packed=None) -> Optional[int]:
        """Smallest offset in [0, limit] for which ``path`` is conflict free.

        Gives the same answer as scanning ``conflicts`` upwards; the bounds
        that do not depend on the offset are worked out once.
        """
        goal = _xy(path[-1])
        if goal in self.parked_from:
            return None
        cells, arr = packed if packed is not None else pack_path(path)
        L = len(cells) - 1
        lo = max(0, self.last_visit(goal) - L)
        first = self.first_visit(_xy(path[0]))
        hi = limit if first is None else min(limit, first - 1)
        parked = self.parked_from
        for k in range(1, L + 1):
            pf = parked.get(_xy(path[k]))
            if pf is not None and pf - k - 1 < hi:
                hi = pf - k - 1
        if hi < lo:
            return None
        if L == 0:
            return lo
        ks = np.arange(1, L + 1, dtype=np.int64)
        body = cells[1:]
        # reverse moves: into prev from the direction of c
        rev_code = _move_codes(arr[::-1])[::-1]
        moved = rev_code != 4
        rev_cell = cells[:-1][moved]
        rev_k = ks[moved]
        rev_code = rev_code[moved]
        occ, moves = self.occ, self.moves
        for ups in range(lo, hi + 1):
            if not occ.isdisjoint((((ks + ups) << 32) | body).tolist()):
                continue
            if rev_k.size and not moves.isdisjoint(((((rev_k + ups) << 32) | rev_cell) * 9 + rev_code).tolist()):
                continue
            return ups
        return None


def compute_sto(
    gamma: Assignment,
    omega: Mapping[int, Path],
    order: Sequence[int],
    remaining: Mapping[int, Path],
    fixed: Optional[Reservations] = None,
    packs: Optional[Mapping[int, tuple]] = None,
) -> tuple[Assignment, dict[int, int]]:
    """Start-time offsets in priority order.

    Non-participants' remaining paths and inactive participants are fixed
    first. A participant that cannot be delayed clear of them is inactivated,
    which changes the returned assignment. ``fixed`` may hold the remaining
    paths already reserved; it is not modified. ``packs`` may map IDs to
    pack_path of their ``omega`` entry.
    """
    if fixed is None:
        fixed = reserve_remaining(remaining)
    res = fixed.copy()
    for i in sorted(omega):
        if gamma.get(i) is None:
            res.add_static(_xy(omega[i][0]))
    out = dict(gamma)
    offsets = {i: 0 for i in omega}
    for i in order:
        path = omega[i]
        packed = packs[i] if packs is not None else pack_path(path)
        # Past res.end every fixed robot is parked, so longer waits change nothing.
        ups = res.earliest_offset(path, res.end, packed)
        if ups is None:
            out[i] = None
            offsets[i] = 0
        else:
            offsets[i] = ups
            res.add(path, ups, packed)
    return out, offsets


def reserve_remaining(remaining: Mapping[int, Path], packed: Optional[Mapping[int, tuple]] = None) -> Reservations:
    res = Reservations()
    for k in sorted(remaining):
        res.add(remaining[k], 0, None if packed is None else packed.get(k))
    return res


def get_collision_free_paths(
    omega: Mapping[int, Path], offsets: Mapping[int, int], gamma: Assignment
) -> dict[int, Path]:
    out = {}
    for i, path in omega.items():
        if gamma.get(i) is None:
            out[i] = (path[0],)
        else:
            out[i] = (path[0],) * offsets.get(i, 0) + path
    return out


@dataclass
class PriorityBundle:
    gamma: Assignment
    omega: dict[int, Path]
    theta_r: Optional[RelativePrecedence]
    order: list[int]
    offsets: dict[int, int]
    paths: dict[int, Path]
    iterations: int = 0
    history: list[str] = field(default_factory=list)


def cfp_for_par(
    gamma: Assignment,
    phi: Mapping[int, Path],
    remaining: Mapping[int, Path],
    kind: RobotKind,
    remaining_packed: Optional[Mapping[int, tuple]] = None,
) -> PriorityBundle:
    """Turn optimal paths into collision-free ones without touching ``remaining``.

    ``remaining_packed`` optionally maps robot IDs to pack_path of their
    remaining path, saving the conversion.
    """
    n = len(phi)
    fixed = reserve_remaining(remaining, remaining_packed)
    cap = 4 * max(n, 1)
    gamma = dict(gamma)
    phi = dict(phi)
    history = []
    for it in range(1, cap + 1):
        ids = sorted(phi)
        gamma, omega, (packs, relations) = _repair(phi, gamma, kind)
        theta_r = compute_relative_precedences(omega, gamma, relations)
        order = compute_absolute_precedence(theta_r)
        if order is not None:
            before = dict(gamma)
            gamma, offsets = compute_sto(gamma, omega, order, remaining, fixed, dict(zip(ids, packs)))
            if gamma == before:
                paths = get_collision_free_paths(omega, offsets, gamma)
                return PriorityBundle(gamma, omega, theta_r, order, offsets, paths, it, history)
            history.append(f"iter {it}: offsets inactivated {sorted(k for k in gamma if before[k] is not None and gamma[k] is None)}")
        else:
            before = dict(gamma)
            gamma = break_precedence_cycles(gamma, theta_r, omega)
            history.append(f"iter {it}: cycle break inactivated {sorted(k for k in gamma if before[k] is not None and gamma[k] is None)}")
        phi = {i: (omega[i] if gamma.get(i) is not None else (omega[i][0],)) for i in omega}
    raise PlanningError(
        f"prioritization did not converge in {cap} iterations; "
        f"gamma={gamma}, history={history}, remaining={sorted(remaining)}"
    )
