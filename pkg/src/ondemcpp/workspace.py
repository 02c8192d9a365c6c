"""Grid workspace: benchmark map ingestion, views, sensing and fusion.

A view stores one class code per cell in an ``(X, Y)`` int8 array indexed by
``[x - 1, y - 1]``, so the four classes partition the grid by construction.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path as FsPath
from typing import BinaryIO, Iterable, Union

import numpy as np
from scipy import ndimage

from .robots import Cell, State

log = logging.getLogger(__name__)

PASSABLE = frozenset(".G")
BLOCKED = frozenset("@OT")
NEIGHBOR_DELTAS = ((1, 0), (0, 1), (-1, 0), (0, -1))


class MapFormatError(ValueError):
    pass


class CellClass(IntEnum):
    UNEXPLORED = 0
    OBSTACLE = 1
    GOAL = 2
    COVERED = 3


# plain ints for hot loops; enum attribute lookups are slow
_UNEXPLORED, _OBSTACLE, _GOAL, _COVERED = 0, 1, 2, 3


@dataclass(frozen=True)
class GridDims:
    X: int
    Y: int

    def __post_init__(self):
        if self.X < 1 or self.Y < 1:
            raise ValueError(f"grid dims must be positive, got {self.X}x{self.Y}")

    def contains(self, cell: Cell) -> bool:
        return 1 <= cell[0] <= self.X and 1 <= cell[1] <= self.Y

    @property
    def size(self) -> int:
        return self.X * self.Y


def _cells_of(mask: np.ndarray) -> frozenset[Cell]:
    xs, ys = np.nonzero(mask)
    return frozenset(zip((xs + 1).tolist(), (ys + 1).tolist()))


def sorted_cells(mask: np.ndarray) -> list[Cell]:
    """Cells of a boolean ``(X, Y)`` mask in ascending (x, y) order."""
    xs, ys = np.nonzero(mask)
    return list(zip((xs + 1).tolist(), (ys + 1).tolist()))


class GroundTruthMap:
    def __init__(self, free: np.ndarray, name: str = ""):
        self.free_mask = np.asarray(free, dtype=bool)
        self.dims = GridDims(*self.free_mask.shape)
        self.name = name

    @property
    def free(self) -> frozenset[Cell]:
        return _cells_of(self.free_mask)

    @property
    def obstacles(self) -> frozenset[Cell]:
        return _cells_of(~self.free_mask)

    @property
    def n_free(self) -> int:
        return int(self.free_mask.sum())

    def is_free(self, cell: Cell) -> bool:
        return self.dims.contains(cell) and bool(self.free_mask[cell[0] - 1, cell[1] - 1])

    def components(self) -> tuple[np.ndarray, int]:
        """4-connected labelling of the free cells."""
        return ndimage.label(self.free_mask)

    def crop(self, width: int, height: int, largest_component: bool = True) -> "GroundTruthMap":
        """Top-left ``width x height`` crop.

        The top-left of the file is x = 1, y = Y. With ``largest_component``
        every free cell outside the largest 4-connected component is turned
        into an obstacle, so the crop stays coverable from any deployment.
        """
        X, Y = self.dims.X, self.dims.Y
        if not (1 <= width <= X and 1 <= height <= Y):
            raise ValueError(f"crop {width}x{height} does not fit in {X}x{Y}")
        sub = self.free_mask[:width, Y - height :].copy()
        out = GroundTruthMap(sub, name=f"{self.name}@{width}x{height}")
        if largest_component:
            out = out.largest_component()
        return out

    def largest_component(self) -> "GroundTruthMap":
        labels, n = self.components()
        if n <= 1:
            return self
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        return GroundTruthMap(labels == int(np.argmax(sizes)), name=self.name)

    def to_text(self) -> str:
        rows = []
        for y in range(self.dims.Y, 0, -1):
            rows.append("".join("." if self.free_mask[x - 1, y - 1] else "@" for x in range(1, self.dims.X + 1)))
        head = f"type octile\nheight {self.dims.Y}\nwidth {self.dims.X}\nmap\n"
        return head + "\n".join(rows) + "\n"


def _expect(line: str, key: str, lineno: int) -> str:
    parts = line.split()
    if len(parts) < 1 or parts[0] != key:
        raise MapFormatError(f"line {lineno}: expected '{key}', got {line!r}")
    return " ".join(parts[1:])


def load_map(source: Union[BinaryIO, bytes, str, FsPath], name: str = "") -> GroundTruthMap:
    """Parse an octile map file (MovingAI benchmark layout).

    ``source`` may be a path or a binary stream. Row 1 of the grid block is
    y = Y; column 1 is x = 1.
    """
    if isinstance(source, (str, FsPath)):
        path = FsPath(source)
        name = name or path.stem
        data = path.read_bytes()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
    lines = data.decode("ascii").splitlines()
    if len(lines) < 4:
        raise MapFormatError("truncated header")
    if _expect(lines[0], "type", 1) != "octile":
        raise MapFormatError(f"line 1: unsupported map type {lines[0]!r}")
    dims = []
    for lineno, key in ((2, "height"), (3, "width")):
        value = _expect(lines[lineno - 1], key, lineno)
        try:
            dims.append(int(value))
        except ValueError:
            raise MapFormatError(f"line {lineno}: {key} is not an integer: {value!r}") from None
    Y, X = dims
    if X < 1 or Y < 1:
        raise MapFormatError(f"non-positive dimensions {X}x{Y}")
    if lines[3].strip() != "map":
        raise MapFormatError(f"line 4: expected 'map', got {lines[3]!r}")
    rows = lines[4 : 4 + Y]
    if len(rows) < Y:
        raise MapFormatError(f"expected {Y} grid rows, found {len(rows)}")
    free = np.zeros((X, Y), dtype=bool)
    for r, row in enumerate(rows):
        lineno = r + 5
        row = row.rstrip("\r")
        if len(row) != X:
            raise MapFormatError(f"line {lineno}: row has {len(row)} columns, expected {X}")
        y = Y - r
        for c, ch in enumerate(row):
            if ch in PASSABLE:
                free[c, y - 1] = True
            elif ch not in BLOCKED:
                raise MapFormatError(f"line {lineno}, column {c + 1}: unknown character {ch!r}")
    for extra in lines[4 + Y :]:
        if extra.strip():
            raise MapFormatError(f"unexpected content after {Y} grid rows")
    return GroundTruthMap(free, name=name)


def load_map_text(text: str, name: str = "") -> GroundTruthMap:
    return load_map(io.BytesIO(text.encode("ascii")), name=name)


def check_connectivity(truth: GroundTruthMap) -> bool:
    _, n = truth.components()
    return n <= 1


def components_without_robots(truth: GroundTruthMap, cells: Iterable[Cell]) -> int:
    labels, n = truth.components()
    hit = {int(labels[x - 1, y - 1]) for x, y in cells}
    return sum(1 for k in range(1, n + 1) if k not in hit)


class WorkspaceView:
    """Partition of the grid into unexplored/obstacle/goal/covered cells."""

    __slots__ = ("dims", "cls")

    def __init__(self, dims: GridDims, cls: np.ndarray | None = None):
        self.dims = dims
        if cls is None:
            cls = np.zeros((dims.X, dims.Y), dtype=np.int8)
        self.cls = cls

    def copy(self) -> "WorkspaceView":
        return WorkspaceView(self.dims, self.cls.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, WorkspaceView)
            and self.dims == other.dims
            and np.array_equal(self.cls, other.cls)
        )

    def classify(self, cell: Cell) -> CellClass:
        return CellClass(int(self.cls[cell[0] - 1, cell[1] - 1]))

    def set(self, cell: Cell, c: CellClass) -> None:
        self.cls[cell[0] - 1, cell[1] - 1] = c

    def mask(self, c: CellClass) -> np.ndarray:
        return self.cls == c

    def cells(self, c: CellClass) -> frozenset[Cell]:
        return _cells_of(self.cls == c)

    @property
    def unexplored(self) -> frozenset[Cell]:
        return self.cells(CellClass.UNEXPLORED)

    @property
    def obstacle(self) -> frozenset[Cell]:
        return self.cells(CellClass.OBSTACLE)

    @property
    def goal(self) -> frozenset[Cell]:
        return self.cells(CellClass.GOAL)

    @property
    def covered(self) -> frozenset[Cell]:
        return self.cells(CellClass.COVERED)

    def count(self, c: CellClass) -> int:
        return int(np.count_nonzero(self.cls == c))

    def traversable_mask(self) -> np.ndarray:
        return self.cls >= CellClass.GOAL


def sense_at(
    view: WorkspaceView, state: State, truth: GroundTruthMap, occupied: set[Cell] | frozenset[Cell]
) -> WorkspaceView:
    """Mark the robot's cell covered and classify its four neighbours.

    Updates ``view`` in place and returns it. A neighbour holding another
    robot reads as an obstacle. Only unexplored neighbours are classified;
    known classes change only through visitation or global fusion.
    """
    X, Y = view.dims.X, view.dims.Y
    cls = view.cls
    x, y = state.x, state.y
    cls[x - 1, y - 1] = _COVERED
    free = truth.free_mask
    for dx, dy in NEIGHBOR_DELTAS:
        nx, ny = x + dx, y + dy
        if not (1 <= nx <= X and 1 <= ny <= Y):
            continue
        if cls[nx - 1, ny - 1] != _UNEXPLORED:
            continue
        if (nx, ny) in occupied or not free[nx - 1, ny - 1]:
            cls[nx - 1, ny - 1] = _OBSTACLE
        else:
            cls[nx - 1, ny - 1] = _GOAL
    return view


def init_localview(
    start: State,
    dims: GridDims,
    truth: GroundTruthMap | None = None,
    occupied: Iterable[Cell] = (),
) -> WorkspaceView:
    """Initial local view of a robot standing at ``start``.

    Without ``truth`` the whole grid is assumed obstacle-free.
    """
    if not dims.contains(start.cell):
        raise ValueError(f"start {start.cell} outside {dims.X}x{dims.Y} grid")
    if truth is None:
        truth = GroundTruthMap(np.ones((dims.X, dims.Y), dtype=bool))
    occ = set(occupied) - {start.cell}
    return sense_at(WorkspaceView(dims), start, truth, occ)


def fuse_local_into_global(global_view: WorkspaceView, local: WorkspaceView) -> WorkspaceView:
    """Merge a robot's local view into the planner's global view in place."""
    if global_view.dims != local.dims:
        raise ValueError(f"dimension mismatch: {global_view.dims} vs {local.dims}")
    g = global_view.cls
    lc = local.cls
    # Covered wins; otherwise only unexplored global cells take the local class.
    np.copyto(g, lc, where=(g == _UNEXPLORED) | (lc == _COVERED))
    return global_view


def unassigned_goals(global_view: WorkspaceView, reserved: Iterable[Cell]) -> list[Cell]:
    """Goal cells not reserved by a pending remaining path, in (x, y) order.

    A reserved cell may already be covered (another robot passed over it before
    its owner arrived); that is ignored. A reserved cell that is unexplored or
    an obstacle means the bookkeeping is corrupt.
    """
    cls = global_view.cls
    mask = cls == _GOAL
    for cell in reserved:
        c = cls[cell[0] - 1, cell[1] - 1]
        if c == _GOAL:
            mask[cell[0] - 1, cell[1] - 1] = False
        elif c != _COVERED:
            raise ValueError(f"reserved cell {cell} is {CellClass(c).name.lower()}, not a goal")
    return sorted_cells(mask)
