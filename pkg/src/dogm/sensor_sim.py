"""Synthetic scenarios and radar/lidar detections.

Objects are rectangles moving along piecewise constant-acceleration
segments.  Each sensor casts a fan of beams against the object outlines;
radar returns carry a Doppler radial velocity, an SNR, a Doppler spread
feature and the static/dynamic score ``b_rsp``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .grid import GridSpec, Pose, normalize_angle

OBJECT_KINDS = ("vehicle", "pedestrian", "fence", "ghost-source")

# per-kind radar properties: detection probability, SNR at 1 m (dB),
# Doppler spread per m/s of object speed (wheels, limbs)
RADAR_KIND = {
    "vehicle": dict(p_detect=0.9, snr_1m=70.0, spread_gain=0.25),
    "pedestrian": dict(p_detect=0.55, snr_1m=55.0, spread_gain=0.8),
    "fence": dict(p_detect=0.8, snr_1m=65.0, spread_gain=0.0),
}
LIDAR_P_DETECT = 0.98
VISIBLE_RADIUS_CELLS = 2


class CellLabel(IntEnum):
    UNKNOWN = 0
    FREE = 1
    STATIC = 2
    DYNAMIC = 3


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    x: float
    y: float
    heading: float
    speed: float
    accel: float = 0.0


@dataclass(frozen=True)
class KinematicState:
    x: float
    y: float
    heading: float
    speed: float

    @property
    def vx(self) -> float:
        return self.speed * math.cos(self.heading)

    @property
    def vy(self) -> float:
        return self.speed * math.sin(self.heading)

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)


def _advance(seg: Segment, tau: float) -> tuple[float, float]:
    """Distance travelled and speed after ``tau`` seconds on ``seg``, speed clamped at 0."""
    v0, a = seg.speed, seg.accel
    if a < 0 and v0 + a * tau < 0:
        tau = -v0 / a
    return v0 * tau + 0.5 * a * tau * tau, max(v0 + a * tau, 0.0)


@dataclass(frozen=True)
class Trajectory:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("trajectory needs at least one segment")
        for seg in self.segments:
            if seg.t_end < seg.t_start:
                raise ValueError("segment ends before it starts")
            if seg.speed < 0:
                raise ValueError("speed must be nonnegative")
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.t_end - b.t_start) > 1e-9:
                raise ValueError("trajectory segments must be contiguous in time")

    @classmethod
    def stationary(cls, x: float, y: float, heading: float = 0.0, t_end: float = 1e9) -> "Trajectory":
        return cls((Segment(0.0, t_end, x, y, heading, 0.0, 0.0),))

    def state(self, t: float) -> KinematicState:
        segs = self.segments
        seg = segs[0]
        for s in segs:
            if t >= s.t_start:
                seg = s
        tau = t - seg.t_start
        dur = seg.t_end - seg.t_start
        if tau <= dur:
            dist, v = _advance(seg, tau) if tau >= 0 else (seg.speed * tau, seg.speed)
        else:
            # past the last segment: continue with the final speed
            dist, v = _advance(seg, dur)
            dist += v * (tau - dur)
        c, s = math.cos(seg.heading), math.sin(seg.heading)
        return KinematicState(seg.x + dist * c, seg.y + dist * s, seg.heading, v)

    @property
    def moves(self) -> bool:
        return any(s.speed > 0 or s.accel != 0 for s in self.segments)


@dataclass(frozen=True)
class ScenarioObject:
    id: int
    kind: str
    length: float
    width: float
    trajectory: Trajectory

    def __post_init__(self):
        if self.kind not in OBJECT_KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("object dimensions must be positive")

    @property
    def is_mover(self) -> bool:
        return self.kind != "ghost-source" and self.trajectory.moves

    def corners(self, t: float) -> np.ndarray:
        st = self.trajectory.state(t)
        c, s = math.cos(st.heading), math.sin(st.heading)
        hl, hw = self.length / 2, self.width / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([st.x, st.y])


@dataclass(frozen=True)
class SensorConfig:
    sensor_id: int
    kind: str  # "radar" or "lidar"
    mount: Pose
    fov: float
    beam_spacing: float
    range_max: float = 40.0
    range_min: float = 0.3
    range_std: float = 0.1
    azimuth_std: float = 0.005
    vr_std: float = 0.1

    @property
    def beam_azimuths(self) -> np.ndarray:
        n = int(math.floor(self.fov / self.beam_spacing + 1e-9)) + 1
        return -self.fov / 2 + self.beam_spacing * np.arange(n)

    def world_pose(self, ego: Pose) -> Pose:
        return ego.compose(self.mount)


def default_radar_rig() -> tuple[SensorConfig, ...]:
    """Four radars with 100 degree fields of view covering the full circle."""
    fov, sp = math.radians(100), math.radians(1.0)
    mounts = [Pose(2.3, 0.0, 0.0), Pose(0.0, 0.9, math.pi / 2),
              Pose(-2.3, 0.0, math.pi), Pose(0.0, -0.9, -math.pi / 2)]
    return tuple(SensorConfig(i, "radar", m, fov, sp, range_std=0.1,
                              azimuth_std=math.radians(0.3), vr_std=0.1)
                 for i, m in enumerate(mounts))


def default_lidar_rig() -> tuple[SensorConfig, ...]:
    """Four corner lidars; both vehicle sides stay uncovered."""
    fov, sp = math.radians(110), math.radians(0.5)
    yaw = math.radians(25)
    mounts = [Pose(2.3, 0.8, yaw), Pose(2.3, -0.8, -yaw),
              Pose(-2.3, 0.8, math.pi - yaw), Pose(-2.3, -0.8, -math.pi + yaw)]
    return tuple(SensorConfig(10 + i, "lidar", m, fov, sp, range_std=0.03,
                              azimuth_std=math.radians(0.05), vr_std=0.0)
                 for i, m in enumerate(mounts))


@dataclass
class Noise:
    ghost_rate: float = 0.0
    ghost_v_max: float = 10.0
    micro_doppler_rate: float = 0.0
    micro_doppler_std: float = 3.0
    rsp_sigma: float = 0.5
    noiseless: bool = False


@dataclass
class Scenario:
    name: str
    duration: float
    dt: float
    objects: list[ScenarioObject]
    ego: Trajectory = field(default_factory=lambda: Trajectory.stationary(0.0, 0.0))
    radar_rig: tuple[SensorConfig, ...] = field(default_factory=default_radar_rig)
    lidar_rig: tuple[SensorConfig, ...] = field(default_factory=default_lidar_rig)
    noise: Noise = field(default_factory=Noise)
    seed: int = 0
    reference_object: int | None = None

    @property
    def n_frames(self) -> int:
        return int(round(self.duration / self.dt))

    def frame_times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.dt

    def object(self, oid: int) -> ScenarioObject:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        raise KeyError(oid)


@dataclass(frozen=True)
class EgoMotion:
    """Ego velocity in the vehicle frame plus yaw rate."""

    vx: float = 0.0
    vy: float = 0.0
    yaw_rate: float = 0.0


@dataclass(frozen=True)
class RadarDetection:
    sensor_id: int
    range: float
    azimuth: float
    v_r: float
    snr: float = 30.0
    b_rsp: float = 1.0
    doppler_spread: float = 0.0
    ghost: bool = False

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("range must be positive")
        if not 0.0 <= self.b_rsp <= 1.0:
            raise ValueError("b_rsp must lie in [0, 1]")


@dataclass(frozen=True)
class LidarDetection:
    sensor_id: int
    range: float
    azimuth: float

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("range must be positive")


@dataclass(frozen=True)
class ObjectTruth:
    id: int
    kind: str
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    is_mover: bool


@dataclass
class FrameTruth:
    timestamp: float
    ego: Pose
    labels: np.ndarray | None  # CellLabel per cell, [iy, ix]
    l_dyn: np.ndarray | None  # boolean mask of cells covered by movers
    objects: list[ObjectTruth]
    spec: GridSpec | None = None
    object_ids: np.ndarray | None = None  # owning object id per cell, -1 where empty
    visible: np.ndarray | None = None  # footprint cells next to an unobstructed sensor ray hit

    def reference_cells(self, oid: int) -> np.ndarray:
        """Visible footprint cells of object ``oid``: the labelled region for velocity evaluation."""
        return (self.object_ids == oid) & self.visible

    def reference_velocity(self, oid: int) -> tuple[float, float]:
        for o in self.objects:
            if o.id == oid:
                return o.vx, o.vy
        raise KeyError(oid)


def static_radial_velocity(azimuth: float, sensor: SensorConfig, ego_motion: EgoMotion) -> float:
    """Radial velocity a static world point would show at ``azimuth`` (sensor frame)."""
    m = sensor.mount
    # sensor velocity in the vehicle frame: v + omega x r
    svx = ego_motion.vx - ego_motion.yaw_rate * m.y
    svy = ego_motion.vy + ego_motion.yaw_rate * m.x
    phi = m.heading + azimuth
    return -(svx * math.cos(phi) + svy * math.sin(phi))


def compute_b_rsp(det: RadarDetection, ego_motion: EgoMotion, sensor: SensorConfig,
                  sigma_vr: float = 0.5) -> float:
    """Score in [0, 1] that a return comes from a static world point.

    Residual of the measured radial velocity against the static expectation
    given ego motion, plus the Doppler spread of the return, both judged
    against ``sigma_vr``.
    """
    residual = det.v_r - static_radial_velocity(det.azimuth, sensor, ego_motion)
    z2 = (residual * residual + det.doppler_spread * det.doppler_spread) / (2.0 * sigma_vr * sigma_vr)
    return float(math.exp(-z2))


def inject_ghosts(detections: list[RadarDetection], rate: float, rng: np.random.Generator,
                  sample_free: Callable[[np.random.Generator], RadarDetection | None] | None = None
                  ) -> list[RadarDetection]:
    """Append a Poisson(``rate``) number of spurious returns drawn by ``sample_free``."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if rate == 0 or sample_free is None:
        return list(detections)
    out = list(detections)
    for _ in range(rng.poisson(rate)):
        g = sample_free(rng)
        if g is not None:
            out.append(g)
    return out


def _edges(objects: Sequence[ScenarioObject], t: float):
    starts, ends, owner = [], [], []
    for k, obj in enumerate(objects):
        c = obj.corners(t)
        starts.append(c)
        ends.append(np.roll(c, -1, axis=0))
        owner.extend([k] * 4)
    if not starts:
        return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
    return np.vstack(starts), np.vstack(ends), np.asarray(owner)


def cast_rays(origin: tuple[float, float], angles: np.ndarray, p: np.ndarray, q: np.ndarray,
              owner: np.ndarray, range_min: float, range_max: float):
    """Nearest hit per ray against segments ``p -> q``.

    Returns ``(ranges, owners)``; ``ranges`` is ``inf`` and owner ``-1`` on a miss.
    """
    n = len(angles)
    if len(p) == 0:
        return np.full(n, np.inf), np.full(n, -1)
    d = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (R, 2)
    e = q - p  # (E, 2)
    w = p - np.asarray(origin)  # (E, 2)
    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[None, :, 0] * e[None, :, 1] - w[None, :, 1] * e[None, :, 0]) / denom
        u = (w[None, :, 0] * d[:, None, 1] - w[None, :, 1] * d[:, None, 0]) / denom
    ok = (np.abs(denom) > 1e-12) & (u >= 0) & (u <= 1) & (t >= range_min) & (t <= range_max)
    t = np.where(ok, t, np.inf)
    k = np.argmin(t, axis=1)
    r = t[np.arange(n), k]
    return r, np.where(np.isfinite(r), owner[k], -1)


def rasterize(objects: Sequence[ScenarioObject], t: float, spec: GridSpec) -> np.ndarray:
    """Object id per cell (``-1`` for none); a cell is covered when it overlaps the outline."""
    ids = np.full(spec.shape, -1, dtype=np.int64)
    res = spec.resolution
    for obj in objects:
        if obj.kind == "ghost-source":
            continue
        st = obj.trajectory.state(t)
        corners = obj.corners(t)
        lo = np.floor((corners.min(axis=0) - [spec.origin.x, spec.origin.y]) / res).astype(int) - 1
        hi = np.floor((corners.max(axis=0) - [spec.origin.x, spec.origin.y]) / res).astype(int) + 2
        lo = np.clip(lo, 0, spec.n)
        hi = np.clip(hi, 0, spec.n)
        if np.any(hi <= lo):
            continue
        ix = np.arange(lo[0], hi[0])
        iy = np.arange(lo[1], hi[1])
        gx, gy = np.meshgrid(spec.origin.x + (ix + 0.5) * res, spec.origin.y + (iy + 0.5) * res)
        c, s = math.cos(st.heading), math.sin(st.heading)
        lx = (gx - st.x) * c + (gy - st.y) * s
        ly = -(gx - st.x) * s + (gy - st.y) * c
        # half-cell inflation so thin outlines still cover the cells they cross
        inside = (np.abs(lx) <= obj.length / 2 + res / 2) & (np.abs(ly) <= obj.width / 2 + res / 2)
        sub = ids[lo[1]:hi[1], lo[0]:hi[0]]
        sub[inside] = obj.id
    return ids


def _coverage(rig: Sequence[SensorConfig], ego: Pose, spec: GridSpec) -> np.ndarray:
    gx, gy = spec.cell_centers()
    cov = np.zeros(spec.shape, dtype=bool)
    for sensor in rig:
        sp = sensor.world_pose(ego)
        dx, dy = gx - sp.x, gy - sp.y
        r = np.hypot(dx, dy)
        bearing = normalize_angle(np.arctan2(dy, dx) - sp.heading)
        cov |= (r <= sensor.range_max) & (np.abs(bearing) <= sensor.fov / 2)
    return cov


def _surface_points(sp: Pose, az: np.ndarray, r: np.ndarray, own: np.ndarray, solid) -> np.ndarray:
    """Noise-free ray hits as rows ``(x, y, object id)``."""
    hit = np.flatnonzero(own >= 0)
    phi = sp.heading + az[hit]
    oid = np.array([solid[k].id for k in own[hit]], dtype=float)
    return np.stack([sp.x + r[hit] * np.cos(phi), sp.y + r[hit] * np.sin(phi), oid], axis=1).reshape(-1, 3)


def _visible_cells(points: np.ndarray, ids: np.ndarray, spec: GridSpec, radius: int = VISIBLE_RADIUS_CELLS):
    """Footprint cells within ``radius`` cells (Chebyshev) of a ray hit on the same object."""
    vis = np.zeros(spec.shape, dtype=bool)
    if len(points) == 0:
        return vis
    ix = np.floor((points[:, 0] - spec.origin.x) / spec.resolution).astype(np.int64)
    iy = np.floor((points[:, 1] - spec.origin.y) / spec.resolution).astype(np.int64)
    oid = points[:, 2].astype(np.int64)
    k = np.arange(-radius, radius + 1)
    wx = (ix[:, None, None] + k[None, None, :]).repeat(len(k), axis=1)
    wy = (iy[:, None, None] + k[None, :, None]).repeat(len(k), axis=2)
    o = np.broadcast_to(oid[:, None, None], wx.shape)
    ok = (wx >= 0) & (wx < spec.n) & (wy >= 0) & (wy < spec.n)
    wx, wy, o = wx[ok], wy[ok], o[ok]
    same = ids[wy, wx] == o
    vis[wy[same], wx[same]] = True
    return vis


def ego_motion_at(scenario: Scenario, t: float) -> EgoMotion:
    """Ego velocity at ``t`` expressed in the vehicle frame."""
    st = scenario.ego.state(t)
    c, s = math.cos(st.heading), math.sin(st.heading)
    return EgoMotion(c * st.vx + s * st.vy, -s * st.vx + c * st.vy, 0.0)


def simulate_frame(scenario: Scenario, t: float, sensor_rig=None, rng_seed: int | None = None,
                   spec: GridSpec | None = None):
    """Detections of both rigs and the ground truth at time ``t``.

    ``sensor_rig`` is ``(radar_rig, lidar_rig)``; ``None`` uses the scenario's.
    Deterministic for a fixed ``(scenario, t, rng_seed)``.
    """
    radar_rig, lidar_rig = sensor_rig if sensor_rig is not None else (scenario.radar_rig, scenario.lidar_rig)
    seed = scenario.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng([seed, int(round(t * 1e6))])
    noise = scenario.noise
    noiseless = noise.noiseless

    ego_state = scenario.ego.state(t)
    ego = ego_state.pose
    ego_motion = ego_motion_at(scenario, t)
    ego_v = np.array([ego_state.vx, ego_state.vy])

    solid = [o for o in scenario.objects if o.kind != "ghost-source"]
    p, q, owner = _edges(solid, t)
    states = [o.trajectory.state(t) for o in solid]

    radar: list[RadarDetection] = []
    surface: list[np.ndarray] = []
    beam_hits: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for sensor in radar_rig:
        sp = sensor.world_pose(ego)
        az = sensor.beam_azimuths
        r, own = cast_rays((sp.x, sp.y), sp.heading + az, p, q, owner, sensor.range_min, sensor.range_max)
        beam_hits[sensor.sensor_id] = (az, r)
        surface.append(_surface_points(sp, az, r, own, solid))
        hit = np.flatnonzero(own >= 0)
        u_det = rng.random(len(hit))
        n_r = rng.standard_normal((len(hit), 5))
        n_md = rng.random(len(hit))
        for j, b in enumerate(hit):
            obj = solid[own[b]]
            props = RADAR_KIND[obj.kind]
            if u_det[j] >= props["p_detect"]:
                continue
            st = states[own[b]]
            phi = sp.heading + az[b]
            los = np.array([math.cos(phi), math.sin(phi)])
            v_rel = np.array([st.vx, st.vy]) - ego_v
            v_r = float(v_rel @ los)
            rng_m, az_m = float(r[b]), float(az[b])
            spread = props["spread_gain"] * st.speed
            snr = props["snr_1m"] - 40.0 * math.log10(max(rng_m, 1.0))
            if not noiseless:
                rng_m += sensor.range_std * n_r[j, 0]
                az_m += sensor.azimuth_std * n_r[j, 1]
                v_r += sensor.vr_std * n_r[j, 2]
                snr += 2.0 * n_r[j, 3]
                spread = abs(spread + 0.05 * n_r[j, 4])
                if obj.kind == "vehicle" and n_md[j] < noise.micro_doppler_rate:
                    v_r += noise.micro_doppler_std * rng.standard_normal()
            det = RadarDetection(sensor.sensor_id, max(rng_m, 1e-3), float(normalize_angle(az_m)), v_r,
                                 snr, 1.0, spread)
            b_rsp = compute_b_rsp(det, ego_motion, sensor, noise.rsp_sigma)
            radar.append(RadarDetection(det.sensor_id, det.range, det.azimuth, det.v_r, det.snr,
                                        b_rsp, det.doppler_spread))

    def make_ghost(g: np.random.Generator, sensor: SensorConfig, rng_m: float, az_m: float):
        v_r = float(g.uniform(-noise.ghost_v_max, noise.ghost_v_max))
        det = RadarDetection(sensor.sensor_id, rng_m, az_m, v_r, float(g.uniform(5, 15)), 1.0,
                             float(abs(g.normal(0, 0.3))), ghost=True)
        b = compute_b_rsp(det, ego_motion, sensor, noise.rsp_sigma)
        return RadarDetection(det.sensor_id, det.range, det.azimuth, det.v_r, det.snr, b,
                              det.doppler_spread, ghost=True)

    def sample_free(g: np.random.Generator):
        if not radar_rig:
            return None
        sensor = radar_rig[g.integers(len(radar_rig))]
        az, r = beam_hits[sensor.sensor_id]
        b = g.integers(len(az))
        far = min(r[b], sensor.range_max) - 1.0
        if far <= 1.0:
            return None
        return make_ghost(g, sensor, float(g.uniform(1.0, far)), float(az[b]))

    radar = inject_ghosts(radar, noise.ghost_rate, rng, sample_free)
    for obj in scenario.objects:
        if obj.kind != "ghost-source" or not radar_rig:
            continue
        st = obj.trajectory.state(t)
        best = None
        for sensor in radar_rig:
            sp = sensor.world_pose(ego)
            dx, dy = st.x - sp.x, st.y - sp.y
            rr = math.hypot(dx, dy)
            bearing = float(normalize_angle(math.atan2(dy, dx) - sp.heading))
            if abs(bearing) <= sensor.fov / 2 and sensor.range_min < rr <= sensor.range_max:
                if best is None or rr < best[1]:
                    best = (sensor, rr, bearing)
        if best is not None and rng.random() < 0.5:
            radar.append(make_ghost(rng, *best))

    lidar: list[LidarDetection] = []
    for sensor in lidar_rig:
        sp = sensor.world_pose(ego)
        az = sensor.beam_azimuths
        r, own = cast_rays((sp.x, sp.y), sp.heading + az, p, q, owner, sensor.range_min, sensor.range_max)
        surface.append(_surface_points(sp, az, r, own, solid))
        hit = np.flatnonzero(own >= 0)
        u_det = rng.random(len(hit))
        n_l = rng.standard_normal((len(hit), 2))
        for j, b in enumerate(hit):
            if u_det[j] >= LIDAR_P_DETECT:
                continue
            rng_m, az_m = float(r[b]), float(az[b])
            if not noiseless:
                rng_m += sensor.range_std * n_l[j, 0]
                az_m += sensor.azimuth_std * n_l[j, 1]
            lidar.append(LidarDetection(sensor.sensor_id, max(rng_m, 1e-3), float(normalize_angle(az_m))))

    truths = []
    for o in scenario.objects:
        st = o.trajectory.state(t)
        truths.append(ObjectTruth(o.id, o.kind, st.x, st.y, st.heading, st.vx, st.vy, o.is_mover))

    labels = l_dyn = ids = visible = None
    if spec is not None:
        ids = rasterize(solid, t, spec)
        movers = np.array([o.id for o in solid if o.is_mover], dtype=np.int64)
        labels = np.full(spec.shape, CellLabel.FREE, dtype=np.int8)
        labels[~_coverage(tuple(radar_rig) + tuple(lidar_rig), ego, spec)] = CellLabel.UNKNOWN
        occupied = ids >= 0
        l_dyn = occupied & np.isin(ids, movers)
        labels[occupied] = CellLabel.STATIC
        labels[l_dyn] = CellLabel.DYNAMIC
        visible = _visible_cells(np.concatenate(surface), ids, spec)

    return radar, lidar, FrameTruth(t, ego, labels, l_dyn, truths, spec, ids, visible)


# ---------------------------------------------------------------- file I/O

_SEGMENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["t_start", "t_end", "x", "y", "heading", "speed"],
    "properties": {k: {"type": "number"} for k in
                   ("t_start", "t_end", "x", "y", "heading", "speed", "accel")},
}
_TRAJ_SCHEMA = {"type": "array", "minItems": 1, "items": _SEGMENT_SCHEMA}
_SENSOR_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["sensor_id", "mount", "fov", "beam_spacing"],
    "properties": {
        "sensor_id": {"type": "integer"},
        "mount": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        "fov": {"type": "number", "exclusiveMinimum": 0},
        "beam_spacing": {"type": "number", "exclusiveMinimum": 0},
        "range_max": {"type": "number", "exclusiveMinimum": 0},
        "range_min": {"type": "number", "minimum": 0},
        "range_std": {"type": "number", "minimum": 0},
        "azimuth_std": {"type": "number", "minimum": 0},
        "vr_std": {"type": "number", "minimum": 0},
    },
}
SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "duration", "dt", "objects"],
    "properties": {
        "name": {"type": "string"},
        "duration": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "reference_object": {"type": ["integer", "null"]},
        "ego": _TRAJ_SCHEMA,
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "kind", "length", "width", "trajectory"],
                "properties": {
                    "id": {"type": "integer"},
                    "kind": {"enum": list(OBJECT_KINDS)},
                    "length": {"type": "number", "exclusiveMinimum": 0},
                    "width": {"type": "number", "exclusiveMinimum": 0},
                    "trajectory": _TRAJ_SCHEMA,
                },
            },
        },
        "radar_rig": {"type": "array", "items": _SENSOR_SCHEMA},
        "lidar_rig": {"type": "array", "items": _SENSOR_SCHEMA},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ghost_rate": {"type": "number", "minimum": 0},
                "ghost_v_max": {"type": "number", "minimum": 0},
                "micro_doppler_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "micro_doppler_std": {"type": "number", "minimum": 0},
                "rsp_sigma": {"type": "number", "exclusiveMinimum": 0},
                "noiseless": {"type": "boolean"},
            },
        },
    },
}


def _traj_to_json(tr: Trajectory) -> list[dict]:
    return [asdict(s) for s in tr.segments]


def _traj_from_json(items: list[dict]) -> Trajectory:
    return Trajectory(tuple(Segment(**{"accel": 0.0, **s}) for s in items))


def _sensor_to_json(sn: SensorConfig) -> dict:
    d = asdict(sn)
    d.pop("kind")
    d["mount"] = [sn.mount.x, sn.mount.y, sn.mount.heading]
    return d


def _sensor_from_json(d: dict, kind: str) -> SensorConfig:
    d = dict(d)
    d["mount"] = Pose(*d["mount"])
    return SensorConfig(kind=kind, **d)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "duration": sc.duration,
        "dt": sc.dt,
        "seed": sc.seed,
        "reference_object": sc.reference_object,
        "ego": _traj_to_json(sc.ego),
        "objects": [{"id": o.id, "kind": o.kind, "length": o.length, "width": o.width,
                     "trajectory": _traj_to_json(o.trajectory)} for o in sc.objects],
        "radar_rig": [_sensor_to_json(s) for s in sc.radar_rig],
        "lidar_rig": [_sensor_to_json(s) for s in sc.lidar_rig],
        "noise": asdict(sc.noise),
    }


def scenario_from_dict(d: dict) -> Scenario:
    """Build a scenario from its JSON form; raises ``jsonschema.ValidationError`` on bad input."""
    import jsonschema

    jsonschema.validate(d, SCENARIO_SCHEMA)
    kw = {}
    if "ego" in d:
        kw["ego"] = _traj_from_json(d["ego"])
    if "radar_rig" in d:
        kw["radar_rig"] = tuple(_sensor_from_json(s, "radar") for s in d["radar_rig"])
    if "lidar_rig" in d:
        kw["lidar_rig"] = tuple(_sensor_from_json(s, "lidar") for s in d["lidar_rig"])
    objects = [ScenarioObject(o["id"], o["kind"], o["length"], o["width"], _traj_from_json(o["trajectory"]))
               for o in d["objects"]]
    return Scenario(d["name"], d["duration"], d["dt"], objects, noise=Noise(**d.get("noise", {})),
                    seed=d.get("seed", 0), reference_object=d.get("reference_object"), **kw)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2), encoding="utf-8")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_detections_csv(path, frame: int, radar: Sequence[RadarDetection], lidar: Sequence[LidarDetection],
                         append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["frame", "kind", "sensor_id", "range", "azimuth", "v_r", "snr", "b_rsp",
                        "doppler_spread", "ghost"])
        for d in radar:
            w.writerow([frame, "radar", d.sensor_id, f"{d.range:.6f}", f"{d.azimuth:.6f}", f"{d.v_r:.6f}",
                        f"{d.snr:.3f}", f"{d.b_rsp:.6f}", f"{d.doppler_spread:.6f}", int(d.ghost)])
        for d in lidar:
            w.writerow([frame, "lidar", d.sensor_id, f"{d.range:.6f}", f"{d.azimuth:.6f}", "", "", "", "", 0])
