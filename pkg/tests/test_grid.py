import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dogm.evidential import Dogm
from dogm.grid import (OMEGA, EvidenceMass, GridSpec, Params, Pose, cell_center, check_masses, normalize_angle,
                       recenter_grid, shift_layer, world_to_cell)


def test_default_spec_matches_published_grid():
    spec = GridSpec()
    assert (spec.edge_length, spec.resolution, spec.k_max) == (50.0, 0.2, 50)
    assert spec.n == 250


def test_spec_rejects_non_integer_cell_count():
    with pytest.raises(ValueError):
        GridSpec(edge_length=10.0, resolution=0.3)
    with pytest.raises(ValueError):
        GridSpec(resolution=0.0)


def test_world_to_cell_examples():
    spec = GridSpec()
    o = spec.origin
    assert world_to_cell((o.x, o.y), spec) == (0, 0)
    assert world_to_cell((o.x + 0.30, o.y + 0.50), spec) == (1, 2)
    assert world_to_cell((o.x + 50.1, o.y), spec) is None
    assert world_to_cell((o.x - 0.01, o.y), spec) is None


def test_ego_sits_at_center_of_central_cell():
    spec = GridSpec()
    assert cell_center(spec.center_cell, spec) == pytest.approx((0.0, 0.0), abs=1e-12)


@given(st.integers(0, 249), st.integers(0, 249))
def test_cell_center_round_trip(ix, iy):
    spec = GridSpec()
    assert world_to_cell(cell_center((ix, iy), spec), spec) == (ix, iy)


def test_evidence_mass_validation():
    EvidenceMass(0.2, 0.2, 0.2, 0.2, 0.2)
    with pytest.raises(ValueError):
        EvidenceMass(0.5, 0.5, 0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        EvidenceMass(-0.1, 0.0, 0.0, 0.0, 1.1)


def test_check_masses_flags_violations():
    ok = np.array([[0.1, 0.2, 0.3, 0.2, 0.2]])
    check_masses(ok)
    with pytest.raises(AssertionError):
        check_masses(ok * 1.01)


@given(st.floats(-50, 50))
def test_normalize_angle_range(a):
    w = float(normalize_angle(a))
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_pose_compose_matches_transform():
    ego = Pose(1.0, 2.0, math.pi / 2)
    world = ego.compose(Pose(2.3, 0.0, 0.0))
    assert (world.x, world.y) == pytest.approx((1.0, 4.3))
    assert world.heading == pytest.approx(math.pi / 2)


def _marked_dogm(spec):
    d = Dogm.initial(spec)
    rng = np.random.default_rng(0)
    d.masses = rng.dirichlet(np.ones(5), size=spec.shape)
    return d


def test_recenter_sub_cell_motion_is_identity():
    spec = GridSpec()
    d = _marked_dogm(spec)
    out, new_spec = recenter_grid(d, Pose(0.15, -0.09), spec)
    assert new_spec == spec and out is d


def test_recenter_one_meter_shifts_five_cells():
    spec = GridSpec()
    d = _marked_dogm(spec)
    out, new_spec = recenter_grid(d, Pose(1.0, 0.0), spec)
    assert new_spec.origin.x == pytest.approx(spec.origin.x + 1.0)
    np.testing.assert_array_equal(out.masses[:, :-5], d.masses[:, 5:])
    far = out.masses[:, -5:]
    assert np.all(far[..., OMEGA] == 1.0)
    assert np.all(np.isnan(out.moments[:, -5:]))


def test_stationary_ego_never_recenters():
    spec = GridSpec()
    d = _marked_dogm(spec)
    for _ in range(10):
        d2, spec2 = recenter_grid(d, Pose(0.0, 0.0), spec)
        assert d2 is d and spec2 == spec


@given(st.integers(-20, 20), st.integers(-20, 20))
def test_recenter_and_back_restores_overlap(dx, dy):
    spec = GridSpec(edge_length=10.0, resolution=0.2, origin=Pose(-5.1, -5.1))
    d = _marked_dogm(spec)
    moved, s1 = recenter_grid(d, Pose(dx * 0.2, dy * 0.2), spec)
    back, s2 = recenter_grid(moved, Pose(0.0, 0.0), s1)
    assert s2.origin.x == pytest.approx(spec.origin.x) and s2.origin.y == pytest.approx(spec.origin.y)
    n = spec.n
    ys = slice(max(dy, 0), n + min(dy, 0))
    xs = slice(max(dx, 0), n + min(dx, 0))
    np.testing.assert_array_equal(back.masses[ys, xs], d.masses[ys, xs])


def test_shift_layer_fill():
    a = np.arange(9.0).reshape(3, 3)
    out = shift_layer(a, 1, 0, -1.0)
    np.testing.assert_array_equal(out, [[1, 2, -1], [4, 5, -1], [7, 8, -1]])
    assert np.all(shift_layer(a, 3, 0, 0.0) == 0.0)


def test_params_round_trip_and_unknown_keys():
    p = Params(k_d=0.5)
    assert Params.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        Params.from_dict({"k_dd": 1.0})
