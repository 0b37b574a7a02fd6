"""Built-in synthetic scenarios.

All scenarios run at 10 Hz with the ego at the world origin unless noted.
Object ids below 100 are static furniture, ids from 100 on are movers.
"""

from __future__ import annotations

import math

from .sensor_sim import Noise, Scenario, ScenarioObject, Segment, Trajectory

KMH = 1.0 / 3.6
V20 = 20.0 * KMH


def _parked(oid: int, x: float, y: float, heading: float = 0.0) -> ScenarioObject:
    return ScenarioObject(oid, "vehicle", 4.5, 1.8, Trajectory.stationary(x, y, heading))


def _fence(oid: int, x: float, y: float, length: float, heading: float = 0.0) -> ScenarioObject:
    return ScenarioObject(oid, "fence", length, 0.3, Trajectory.stationary(x, y, heading))


def parked_rows() -> list[ScenarioObject]:
    return [_parked(1, 6.0, 4.5), _parked(2, 12.0, 4.5), _parked(3, 18.0, 4.5),
            _parked(4, 8.0, -4.5), _parked(5, 15.0, -4.5)]


def braking(seed: int = 7, duration: float = 10.0) -> Scenario:
    """Stationary ego; a car approaches head-on at 20 km/h, brakes to standstill at t = 4 s."""
    x0 = 23.0
    t_cruise, t_stop = 1.5, 4.0
    decel = V20 / (t_stop - t_cruise)
    x1 = x0 - V20 * t_cruise
    x2 = x1 - 0.5 * V20 * (t_stop - t_cruise)
    traj = Trajectory((
        Segment(0.0, t_cruise, x0, 0.0, math.pi, V20, 0.0),
        Segment(t_cruise, t_stop, x1, 0.0, math.pi, V20, -decel),
        Segment(t_stop, duration, x2, 0.0, math.pi, 0.0, 0.0),
    ))
    target = ScenarioObject(100, "vehicle", 4.5, 1.8, traj)
    return Scenario("braking", duration, 0.1, parked_rows() + [target], seed=seed, reference_object=100)


BRAKING_STOP_TIME = 4.0


def crossing(seed: int = 3, duration: float = 3.0) -> Scenario:
    """A car crosses in front of the stationary ego, tangential to the front radar."""
    traj = Trajectory((Segment(0.0, duration, 15.0, -2.5, math.pi / 2, V20, 0.0),))
    target = ScenarioObject(100, "vehicle", 4.5, 1.8, traj)
    scene = [_parked(1, 6.0, 8.0), _parked(2, -6.0, 8.0)]
    return Scenario("crossing", duration, 0.1, scene + [target], seed=seed, reference_object=100)


def static_scene(seed: int = 11, duration: float = 10.0) -> Scenario:
    """Parked cars and a fence only."""
    objs = parked_rows() + [_fence(20, 0.0, 8.0, 30.0), _parked(6, -10.0, -4.5), _parked(7, -16.0, 4.5)]
    return Scenario("static", duration, 0.1, objs, seed=seed)


def ghosts(seed: int = 5, duration: float = 20.0, rate: float = 2.0) -> Scenario:
    """Static scene with spurious free-space radar returns."""
    sc = static_scene(seed, duration)
    sc.name = "ghosts"
    sc.noise = Noise(ghost_rate=rate)
    return sc


def mixed(seed: int = 13, duration: float = 6.0) -> Scenario:
    """Static fence and parked cars with one car passing the ego on the adjacent lane."""
    traj = Trajectory((Segment(0.0, duration, 22.0, -2.5, math.pi, V20, 0.0),))
    mover = ScenarioObject(100, "vehicle", 4.5, 1.8, traj)
    objs = [_fence(20, 0.0, 5.0, 36.0), _parked(4, 8.0, -6.0), _parked(5, -4.0, -6.0),
            _parked(6, 16.0, -6.0), mover]
    return Scenario("mixed", duration, 0.1, objs, seed=seed, reference_object=100)


def urban(seed: int = 17, duration: float = 6.0) -> Scenario:
    """Ego drives at 30 km/h behind two cars, passing parked cars and a fence."""
    v = 30.0 * KMH
    ego = Trajectory((Segment(0.0, duration, 0.0, 0.0, 0.0, v, 0.0),))
    lead = [ScenarioObject(100, "vehicle", 4.5, 1.8, Trajectory((Segment(0.0, duration, 12.0, 0.0, 0.0, v + 1.5),))),
            ScenarioObject(101, "vehicle", 4.5, 1.8, Trajectory((Segment(0.0, duration, 20.0, -3.5, 0.0, v),)))]
    furniture = [_parked(i, 6.0 * i - 10.0, 5.0) for i in range(1, 9)]
    furniture += [_fence(30, 20.0, -7.0, 60.0)]
    return Scenario("urban", duration, 0.1, furniture + lead, ego=ego, seed=seed, reference_object=100)


def intersection(seed: int = 19, duration: float = 8.0) -> Scenario:
    """Stationary ego at a crossing with tangential cars and pedestrians."""
    objs = [
        ScenarioObject(100, "vehicle", 4.5, 1.8, Trajectory((Segment(0.0, duration, 14.0, -20.0, math.pi / 2, 6.0),))),
        ScenarioObject(101, "vehicle", 4.5, 1.8, Trajectory((Segment(0.0, duration, 18.0, 22.0, -math.pi / 2, 5.0),))),
        ScenarioObject(102, "pedestrian", 0.5, 0.5, Trajectory((Segment(0.0, duration, 8.0, -6.0, math.pi / 2, 1.4),))),
        ScenarioObject(103, "pedestrian", 0.5, 0.5, Trajectory((Segment(0.0, duration, 9.0, 6.0, -math.pi / 2, 1.2),))),
        _parked(1, -8.0, 4.0), _parked(2, -14.0, 4.0),
    ]
    return Scenario("intersection", duration, 0.1, objs, seed=seed, reference_object=100)


LIBRARY = {
    "braking": braking,
    "crossing": crossing,
    "static": static_scene,
    "ghosts": ghosts,
    "mixed": mixed,
    "urban": urban,
    "intersection": intersection,
}
