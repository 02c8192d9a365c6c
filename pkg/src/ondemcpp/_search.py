"""Compiled breadth-first search over robot state graphs.

States are numbered ``cell * K + o`` where ``cell = (x - 1) * Y + (y - 1)``
and ``K`` is 4 for oriented robots (o in E, N, W, S order) and 1 otherwise.
Every non-Halt primitive costs 1, so BFS order is cost order.
"""
import numpy as np
from numba import njit

# East, North, West, South
_DX = np.array([1, 0, -1, 0], dtype=np.int64)
_DY = np.array([0, 1, 0, -1], dtype=np.int64)


@njit(cache=True)
def neighbour_table(trav, X, Y):
    """``nbr[c * 4 + d]``: traversable neighbour of cell c in direction d, or -1."""
    nbr = np.full(X * Y * 4, -1, dtype=np.int32)
    for x in range(X):
        for y in range(Y):
            c = x * Y + y
            if not trav[c]:
                continue
            for d in range(4):
                nx = x + _DX[d]
                ny = y + _DY[d]
                if 0 <= nx < X and 0 <= ny < Y and trav[nx * Y + ny]:
                    nbr[c * 4 + d] = nx * Y + ny
    return nbr


@njit(cache=True)
def bfs_states(nbr, targets, n_targets, start, oriented, n_stop, seen, stamp):
    """Single-source BFS from ``start`` over a neighbour_table.

    ``targets[c]`` is the target column index of cell c or -1. ``seen`` is a
    per-state int32 scratch array shared between calls; states equal to
    ``stamp`` count as visited, so every call needs a fresh stamp. Returns
    (goal_at, goal_cost, queue, parent) where ``queue`` lists the visited
    states in BFS order, ``parent[k]`` is the queue index of the predecessor
    of ``queue[k]`` (-1 for the start) and ``goal_at[j]`` is the queue index
    of the first state reached at target j (-1 if none). Stops once
    ``n_stop`` targets are reached.
    """
    n_states = seen.shape[0]
    goal_at = np.full(n_targets, -1, dtype=np.int64)
    goal_cost = np.full(n_targets, -1, dtype=np.int64)
    queue = np.empty(n_states, dtype=np.int32)
    parent = np.empty(n_states, dtype=np.int32)
    head = 0
    tail = 0
    seen[start] = stamp
    queue[tail] = start
    parent[tail] = -1
    tail += 1
    found = 0
    c0 = start >> 2 if oriented else start
    if targets[c0] >= 0:
        goal_at[targets[c0]] = 0
        goal_cost[targets[c0]] = 0
        found += 1
    # states queue[head:level_end] are at cost d - 1
    level_end = tail
    d = 1
    while head < tail and found < n_stop:
        if head == level_end:
            level_end = tail
            d += 1
        s = queue[head]
        ps = head
        head += 1
        if oriented:
            c = s >> 2
            o = s & 3
            # MoveNext, TurnLeft, TurnRight
            nc = nbr[c * 4 + o]
            t0 = nc * 4 + o if nc >= 0 else -1
            for t in (t0, c * 4 + ((o + 1) & 3), c * 4 + ((o + 3) & 3)):
                if t < 0 or seen[t] == stamp:
                    continue
                seen[t] = stamp
                queue[tail] = t
                parent[tail] = ps
                j = targets[t >> 2]
                if j >= 0 and goal_at[j] < 0:
                    goal_at[j] = tail
                    goal_cost[j] = d
                    found += 1
                tail += 1
        else:
            for k in range(4):
                t = nbr[s * 4 + k]
                if t < 0 or seen[t] == stamp:
                    continue
                seen[t] = stamp
                queue[tail] = t
                parent[tail] = ps
                j = targets[t]
                if j >= 0 and goal_at[j] < 0:
                    goal_at[j] = tail
                    goal_cost[j] = d
                    found += 1
                tail += 1
    return goal_at, goal_cost, queue[:tail].copy(), parent[:tail].copy()


@njit(cache=True)
def trace_back(queue, parent, end):
    """States from the start to ``queue[end]``."""
    n = 0
    k = end
    while k >= 0:
        n += 1
        k = parent[k]
    out = np.empty(n, dtype=np.int64)
    k = end
    for i in range(n - 1, -1, -1):
        out[i] = queue[k]
        k = parent[k]
    return out


def warm_up() -> None:
    """Compile (or load from cache) the kernels outside any timed region."""
    trav = np.ones(4, dtype=np.bool_)
    nbr = neighbour_table(trav, 2, 2)
    targets = np.array([-1, -1, -1, 0], dtype=np.int64)
    for oriented in (False, True):
        seen = np.zeros(16 if oriented else 4, dtype=np.int32)
        _, _, queue, parent = bfs_states(nbr, targets, 1, 0, oriented, 1, seen, 1)
        trace_back(queue, parent, 0)
