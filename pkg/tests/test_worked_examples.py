"""Frozen small scenarios that reproduce the hand-worked examples."""
import numpy as np

from ondemcpp.assignment import cop_for_par
from ondemcpp.planner import CoveragePlanner
from ondemcpp.prioritized import Reservations, cfp_for_par
from ondemcpp.robots import Orientation as O, RobotKind, State
from ondemcpp.simulator import RobotAgent, run_mission, verify_trajectories
from ondemcpp.workspace import CellClass, GridDims, GroundTruthMap, WorkspaceView, unassigned_goals

TB = RobotKind.TURTLEBOT


def offset_example():
    """4x4, two participants; r2 sits on r1's way and must clear it first."""
    cls = np.full((4, 4), CellClass.COVERED, np.int8)
    cls[0, 1] = CellClass.OBSTACLE  # (1, 2)
    cls[0, 0] = CellClass.GOAL  # (1, 1)
    cls[1, 1] = CellClass.GOAL  # (2, 2)
    view = WorkspaceView(GridDims(4, 4), cls)
    parts = [(1, State(3, 1, O.W)), (2, State(2, 1, O.S))]
    return view, parts


def test_offset_example():
    view, parts = offset_example()
    gamma, phi, costs = cop_for_par(view, set(), parts, TB)
    assert {i: costs.goals[g] for i, g in gamma.items()} == {1: (1, 1), 2: (2, 2)}
    bundle = cfp_for_par(gamma, phi, {}, TB)
    assert bundle.omega == phi
    assert bundle.theta_r[2, 1] and not bundle.theta_r[1, 2]
    assert bundle.order == [2, 1]
    assert bundle.offsets == {1: 2, 2: 0}
    lengths = {i: len(p) - 1 for i, p in bundle.paths.items()}
    assert lengths == {1: 4, 2: 3}
    assert min(lengths.values()) == 3
    # smaller offsets really collide
    res = Reservations()
    res.add(phi[2])
    assert res.conflicts(phi[1], 0) and res.conflicts(phi[1], 1)
    assert not res.conflicts(phi[1], 2)


def inactivation_example():
    free = np.zeros((4, 2), bool)
    for x, y in [(2, 2), (3, 2), (4, 2), (3, 1), (4, 1)]:
        free[x - 1, y - 1] = True
    truth = GroundTruthMap(free, name="corner")
    agents = [
        RobotAgent(1, TB, State(2, 2, O.W), WorkspaceView(truth.dims)),
        RobotAgent(2, TB, State(4, 1, O.S), WorkspaceView(truth.dims)),
    ]
    return truth, agents


class RecordingPlanner(CoveragePlanner):
    def plan_horizon(self):
        before = (
            sorted(self.participants),
            {i: p for i, p in self.remaining.items() if p is not None},
            set(self.reserved),
            unassigned_goals(self.global_view, self.reserved),
        )
        res = super().plan_horizon()
        self.log.append((before, res))
        return res


def test_inactivation_example():
    truth, agents = inactivation_example()
    pl = RecordingPlanner(2, truth.dims, TB)
    pl.log = []
    trace = run_mission(truth, agents, pl)
    (par1, _, _, _), h1 = pl.log[0]
    assert par1 == [1, 2] and h1.lam == 2
    assert pl.log[1][0][2] == {(3, 2)}
    (par2, rem2, reserved2, goals2), h2 = pl.log[1]
    assert par2 == [2] and list(rem2) == [1]
    assert goals2 == [(4, 2)]
    assert h2.bundle.gamma == {2: None}
    assert h2.lam == 1 and sorted(h2.paths) == [1]
    # both take part again in the next horizon
    assert pl.log[2][0][0] == [1, 2]
    assert trace.coverage_complete and verify_trajectories(trace, truth).ok
