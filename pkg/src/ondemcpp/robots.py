"""Robot states, motion primitives and path algebra.

Two robot kinds are supported. A TurtleBot state is ``(x, y, orientation)``
and it moves with TurnRight / TurnLeft / MoveNext. A quadcopter state is
``(x, y)`` and it moves one cell East / North / West / South. Both kinds also
have Halt. Axes: East is +x, North is +y.

A path is a tuple of states; its *length* is the number of transitions,
i.e. ``len(path) - 1``.
"""
from __future__ import annotations

from enum import Enum, IntEnum
from typing import Callable, NamedTuple, Optional

Cell = tuple[int, int]


class Orientation(IntEnum):
    # Counterclockwise order, so TurnLeft is +1 and TurnRight is -1 (mod 4).
    E = 0
    N = 1
    W = 2
    S = 3

    @property
    def delta(self) -> Cell:
        return _DELTAS[self]

    def turned_right(self) -> "Orientation":
        return Orientation((self - 1) % 4)

    def turned_left(self) -> "Orientation":
        return Orientation((self + 1) % 4)


_DELTAS = {
    Orientation.E: (1, 0),
    Orientation.N: (0, 1),
    Orientation.W: (-1, 0),
    Orientation.S: (0, -1),
}


class RobotKind(str, Enum):
    TURTLEBOT = "turtlebot"
    QUADCOPTER = "quadcopter"

    @property
    def oriented(self) -> bool:
        return self is RobotKind.TURTLEBOT


class Motion(str, Enum):
    HALT = "H"
    TURN_RIGHT = "TR"
    TURN_LEFT = "TL"
    MOVE_NEXT = "MN"
    # Quadcopter moves get their own tags; "MN" is reserved for MoveNext.
    MOVE_EAST = "ME"
    MOVE_NORTH = "MNo"
    MOVE_WEST = "MW"
    MOVE_SOUTH = "MS"

    @property
    def cost(self) -> int:
        return 0 if self is Motion.HALT else 1


MOTIONS = {
    RobotKind.TURTLEBOT: (Motion.HALT, Motion.TURN_RIGHT, Motion.TURN_LEFT, Motion.MOVE_NEXT),
    RobotKind.QUADCOPTER: (
        Motion.HALT,
        Motion.MOVE_EAST,
        Motion.MOVE_NORTH,
        Motion.MOVE_WEST,
        Motion.MOVE_SOUTH,
    ),
}

_AERIAL_DELTAS = {
    Motion.MOVE_EAST: (1, 0),
    Motion.MOVE_NORTH: (0, 1),
    Motion.MOVE_WEST: (-1, 0),
    Motion.MOVE_SOUTH: (0, -1),
}


class State(NamedTuple):
    x: int
    y: int
    o: Optional[Orientation] = None

    @property
    def cell(self) -> Cell:
        return (self.x, self.y)

    def as_list(self) -> list:
        return [self.x, self.y] if self.o is None else [self.x, self.y, self.o.name]

    @classmethod
    def from_list(cls, item) -> "State":
        if len(item) == 2:
            return cls(int(item[0]), int(item[1]))
        return cls(int(item[0]), int(item[1]), Orientation[item[2]])


Path = tuple[State, ...]


class InvalidMotion(ValueError):
    pass


def check_state(state: State, kind: RobotKind) -> None:
    if kind.oriented and state.o is None:
        raise ValueError(f"{kind.value} state needs an orientation: {state}")
    if not kind.oriented and state.o is not None:
        raise ValueError(f"{kind.value} state cannot carry an orientation: {state}")


def apply_motion(state: State, m: Motion, kind: RobotKind) -> State:
    """Apply one primitive. No bounds or obstacle checks happen here."""
    if m not in MOTIONS[kind]:
        raise InvalidMotion(f"{m.value} is not a {kind.value} primitive")
    if m is Motion.HALT:
        return state
    if kind.oriented:
        o = state.o
        if m is Motion.TURN_RIGHT:
            return State(state.x, state.y, o.turned_right())
        if m is Motion.TURN_LEFT:
            return State(state.x, state.y, o.turned_left())
        dx, dy = o.delta
        return State(state.x + dx, state.y + dy, o)
    dx, dy = _AERIAL_DELTAS[m]
    return State(state.x + dx, state.y + dy)


def successors(
    state: State, kind: RobotKind, traversable: Callable[[Cell], bool]
) -> list[tuple[Motion, State]]:
    out = []
    for m in MOTIONS[kind][1:]:
        nxt = apply_motion(state, m, kind)
        if traversable(nxt.cell):
            out.append((m, nxt))
    return out


def infer_motion(a: State, b: State, kind: RobotKind) -> Motion:
    """Return the unique primitive taking ``a`` to ``b``.

    Raises InvalidMotion when no primitive connects them.
    """
    for m in MOTIONS[kind]:
        if apply_motion(a, m, kind) == b:
            return m
    raise InvalidMotion(f"no {kind.value} primitive takes {a} to {b}")


def check_path(path: Path, kind: RobotKind) -> None:
    if not path:
        raise ValueError("a path holds at least its start state")
    for s in path:
        check_state(s, kind)
    for a, b in zip(path, path[1:]):
        infer_motion(a, b, kind)


def path_length(path: Path) -> int:
    return len(path) - 1


def path_cost(path: Path) -> int:
    """Number of non-Halt transitions (each non-Halt primitive costs 1)."""
    return sum(1 for a, b in zip(path, path[1:]) if a != b)


def split_path(path: Path, k: int) -> tuple[Path, Optional[Path]]:
    n = path_length(path)
    if not 0 < k <= n:
        raise ValueError(f"split point {k} outside (0, {n}]")
    head = path[: k + 1]
    if k == n:
        return head, None
    return head, path[k:]


def concat_paths(first: Path, second: Path) -> Path:
    if first[-1] != second[0]:
        raise ValueError("paths do not join")
    return first + second[1:]


def pad_with_halt(path: Path, target: int) -> Path:
    n = path_length(path)
    if target < n:
        raise ValueError(f"cannot pad a length-{n} path down to {target}")
    return path + (path[-1],) * (target - n)


def dummy_path(state: State, k: int) -> Path:
    if k < 0:
        raise ValueError("negative length")
    return (state,) * (k + 1)


def rotation_prefix(state: State, heading: Orientation) -> Path:
    """Shortest in-place turn sequence from ``state`` to ``heading``."""
    out = [state]
    cur = state
    diff = (heading - state.o) % 4
    turn = Motion.TURN_LEFT if diff != 3 else Motion.TURN_RIGHT
    for _ in range(min(diff, 4 - diff)):
        cur = apply_motion(cur, turn, RobotKind.TURTLEBOT)
        out.append(cur)
    return tuple(out)
