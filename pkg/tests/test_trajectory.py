"""
Tests for path planning, trajectory parameterization and placement checks.
"""

import numpy as np
import pytest

from acoustics.scene import BandCoefficients, SceneBuilder, box_mesh, panel_mesh, segment_crossings
from acoustics.trajectory import (
    Trajectory, occupancy_grid, plan_path, position_at, sample_rir_positions,
    validate_placement, with_duration,
)
from core.errors import DomainError, UnreachableError, ValidationError


def _room_with_partition(span: float):
    """10 x 3 x 10 room with a full-height wall at x = 5 covering z in [0, span]."""
    builder = SceneBuilder()
    builder.add(*box_mesh((10.0, 3.0, 10.0)), "default", BandCoefficients.flat(0.3))
    builder.add(*panel_mesh((5.0, 1.5, span / 2.0), axis=0, size=(3.0, span)), "default")
    return builder.build()


class TestPlanPath:
    def test_clear_line_is_straight(self, make_shoebox):
        scene = make_shoebox((6.0, 3.0, 6.0))
        traj = plan_path(scene, (1.0, 1.5, 1.0), (5.0, 1.5, 4.0))
        assert len(traj.waypoints) == 2
        assert traj.total_length == pytest.approx(5.0)

    def test_detours_around_wall(self):
        scene = _room_with_partition(7.0)
        start, end = (2.0, 1.5, 2.0), (8.0, 1.5, 2.0)
        traj = plan_path(scene, start, end)
        assert len(traj.waypoints) > 2
        np.testing.assert_allclose(traj.waypoints[0], start)
        np.testing.assert_allclose(traj.waypoints[-1], end)
        assert traj.total_length > 6.0
        for a, b in zip(traj.waypoints[:-1], traj.waypoints[1:]):
            assert segment_crossings(scene, a, b) == []
        # the detour passes the open end of the wall
        assert traj.waypoints[:, 2].max() > 7.0

    def test_sealed_wall_is_unreachable(self):
        scene = _room_with_partition(10.0)
        with pytest.raises(UnreachableError):
            plan_path(scene, (2.0, 1.5, 2.0), (8.0, 1.5, 2.0))

    def test_endpoint_outside_scene(self, make_shoebox):
        with pytest.raises(ValidationError):
            plan_path(make_shoebox(), (1.0, 1.5, 1.0), (9.0, 1.5, 1.0))

    def test_coincident_endpoints(self, make_shoebox):
        with pytest.raises(ValidationError):
            plan_path(make_shoebox(), (1.0, 1.5, 1.0), (1.0, 1.5, 1.0))


class TestOccupancyGrid:
    def test_border_cells_blocked(self, make_shoebox):
        grid = occupancy_grid(make_shoebox((4.0, 3.0, 4.0)), height=1.5)
        assert grid.shape == (16, 16)
        assert grid.blocked[0, :].all()
        assert grid.blocked[-1, :].all()
        assert not grid.blocked[1:-1, 1:-1].any()

    def test_grid_is_cached_per_scene(self, make_shoebox):
        scene = make_shoebox()
        assert occupancy_grid(scene) is occupancy_grid(scene)

    def test_partition_blocks_cells(self):
        grid = occupancy_grid(_room_with_partition(7.0), height=1.5)
        i, _ = grid.cell_of((4.9, 1.5, 3.0))
        assert grid.blocked[i, 12]
        assert not grid.blocked[i, 35]


class TestParameterization:
    def test_position_at_midpoint(self):
        traj = with_duration(Trajectory(np.array([[0.0, 1.5, 0.0], [4.0, 1.5, 0.0]])), 2.0)
        np.testing.assert_allclose(position_at(traj, 1.0), [2.0, 1.5, 0.0])
        np.testing.assert_allclose(position_at(traj, 2.0), [4.0, 1.5, 0.0])
        assert traj.speed == pytest.approx(2.0)

    def test_position_across_corner(self):
        traj = with_duration(Trajectory(np.array([[0, 0, 0], [3, 0, 0], [3, 0, 4]], dtype=float)), 7.0)
        np.testing.assert_allclose(position_at(traj, 5.0), [3.0, 0.0, 2.0])

    def test_time_outside_duration(self):
        traj = with_duration(Trajectory(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])), 1.0)
        with pytest.raises(DomainError):
            position_at(traj, 1.5)
        with pytest.raises(DomainError):
            position_at(traj, -0.1)

    def test_needs_duration(self):
        traj = Trajectory(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        with pytest.raises(DomainError):
            position_at(traj, 0.5)

    def test_invalid_trajectories(self):
        with pytest.raises(ValidationError):
            Trajectory(np.array([[0.0, 0.0, 0.0]]))
        with pytest.raises(ValidationError):
            Trajectory(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))

    def test_rir_positions_include_endpoint(self):
        traj = Trajectory(np.array([[0.0, 0.0, 0.0], [1.2, 0.0, 0.0]]))
        arcs = [p.arc_length for p in sample_rir_positions(traj, 0.5)]
        assert arcs == pytest.approx([0.0, 0.5, 1.0, 1.2])

    def test_rir_positions_exact_multiple(self):
        traj = Trajectory(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        positions = sample_rir_positions(traj, 0.5)
        assert [p.arc_length for p in positions] == pytest.approx([0.0, 0.5, 1.0])
        np.testing.assert_allclose(positions[-1].position, [1.0, 0.0, 0.0])


class TestValidatePlacement:
    def test_valid_layout(self):
        report = validate_placement((0, 1.5, 0), (2, 1.5, 0), (2, 1.5, 3), [(0, 1.5, 4)])
        assert report.ok
        assert bool(report)

    def test_reports_each_violation(self):
        report = validate_placement((0, 0, 0), (0.5, 0, 0), (9, 0, 0), [(3, 0, 0)])
        assert not report
        assert any(v.startswith("mic-start below 1 m") for v in report.violations)
        assert any(v.startswith("mic-end above 8 m") for v in report.violations)
        assert any(v.startswith("start-end above 8 m") for v in report.violations)
        assert not any(v.startswith("mic-noise0") for v in report.violations)

    def test_custom_bounds(self):
        report = validate_placement((0, 0, 0), (2, 0, 0), (2, 0, 2), min_distance=2.5)
        assert any(v.startswith("mic-start below 2.5 m") for v in report.violations)
