"""Evidential measurement grids and Dempster's rule.

A measurement grid only carries ``m_F``, ``m_SD`` and ``m_Omega``; the
singleton classes S and D are never produced here.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .grid import D, F, N_MASSES, OMEGA, S, SD, EvidenceMass, GridSpec, Params, Pose, normalize_angle, vacuous_masses
from .sensor_sim import EgoMotion, SensorConfig, static_radial_velocity

TOTAL_CONFLICT_EPS = 1e-12


class TotalConflictError(ValueError):
    """Raised when two mass functions are in complete conflict."""


def combine_arrays(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dempster's rule on mass arrays with last axis ``(F, S, D, SD, OMEGA)``.

    Returns ``(masses, total_conflict)``.  Cells in total conflict get the
    vacuous mass.  Every product pair is grouped symmetrically, so swapping
    the operands gives bit-identical output.
    """
    aF, aS, aD, aSD, aO = (a[..., k] for k in range(N_MASSES))
    bF, bS, bD, bSD, bO = (b[..., k] for k in range(N_MASSES))
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., F] = aF * bF + (aF * bO + aO * bF)
    out[..., S] = aS * bS + (aS * bSD + aSD * bS) + (aS * bO + aO * bS)
    out[..., D] = aD * bD + (aD * bSD + aSD * bD) + (aD * bO + aO * bD)
    out[..., SD] = aSD * bSD + (aSD * bO + aO * bSD)
    out[..., OMEGA] = aO * bO
    norm = out.sum(axis=-1)  # 1 - K for normalized inputs
    total = norm <= TOTAL_CONFLICT_EPS
    safe = np.where(total, 1.0, norm)
    out /= safe[..., None]
    if np.any(total):
        out[total] = 0.0
        out[total, OMEGA] = 1.0
    return out, total


def conflict(a: EvidenceMass, b: EvidenceMass) -> float:
    x, y = a.as_array(), b.as_array()
    return float(x[F] * (y[S] + y[D] + y[SD]) + (x[S] + x[D] + x[SD]) * y[F] + x[S] * y[D] + x[D] * y[S])


def dempster_combine(a: EvidenceMass, b: EvidenceMass) -> EvidenceMass:
    """Combine two cell masses; raises :class:`TotalConflictError` when K >= 1 - 1e-12."""
    m, total = combine_arrays(a.as_array(), b.as_array())
    if bool(total):
        raise TotalConflictError(f"total conflict between {a} and {b}")
    m = np.clip(m, 0.0, 1.0)
    m[OMEGA] = max(0.0, 1.0 - m[F] - m[S] - m[D] - m[SD])
    return EvidenceMass.from_array(m)


@dataclass(frozen=True)
class MeasurementCell:
    m_SD: float
    m_F: float
    m_Omega: float
    v_r_obs: float | None = None
    los: tuple[float, float] | None = None
    b_rsp_obs: float | None = None


@dataclass
class MeasurementGrid:
    """Per-cell masses plus the dominant radar observation.

    ``v_r`` holds the ego-motion compensated radial velocity, ``los_x``/``los_y``
    the line-of-sight unit vector it was measured along; all three are ``nan``
    where no radar return contributes.
    """

    spec: GridSpec
    masses: np.ndarray
    v_r: np.ndarray
    b_rsp: np.ndarray
    los_x: np.ndarray
    los_y: np.ndarray
    sensor_id: int = -1
    dropped: int = 0
    total_conflicts: int = 0

    @classmethod
    def empty(cls, spec: GridSpec, sensor_id: int = -1) -> "MeasurementGrid":
        nan = np.full(spec.shape, np.nan)
        return cls(spec, vacuous_masses(spec.shape), nan.copy(), nan.copy(), nan.copy(), nan.copy(), sensor_id)

    @property
    def has_velocity(self) -> np.ndarray:
        return ~np.isnan(self.v_r)

    def cell(self, ix: int, iy: int) -> MeasurementCell:
        m = self.masses[iy, ix]
        if np.isnan(self.v_r[iy, ix]):
            return MeasurementCell(float(m[SD]), float(m[F]), float(m[OMEGA]))
        return MeasurementCell(float(m[SD]), float(m[F]), float(m[OMEGA]), float(self.v_r[iy, ix]),
                               (float(self.los_x[iy, ix]), float(self.los_y[iy, ix])), float(self.b_rsp[iy, ix]))

    def to_bytes(self) -> bytes:
        """Row-major cells, five ``float32`` masses each."""
        return np.ascontiguousarray(self.masses, dtype="<f4").tobytes()

    @classmethod
    def masses_from_bytes(cls, data: bytes, spec: GridSpec) -> np.ndarray:
        arr = np.frombuffer(data, dtype="<f4")
        if arr.size != spec.n_cells * N_MASSES:
            raise ValueError(f"expected {spec.n_cells * N_MASSES} floats, got {arr.size}")
        return arr.reshape(spec.n, spec.n, N_MASSES).astype(np.float64)


def probability_to_masses(p_occ: np.ndarray) -> np.ndarray:
    """Occupancy probability to ``(F, S, D, SD, OMEGA)`` masses (S and D stay 0)."""
    p = np.clip(np.asarray(p_occ, dtype=float), 0.0, 1.0)
    m = np.zeros(p.shape + (N_MASSES,))
    m[..., SD] = np.maximum(2.0 * (p - 0.5), 0.0)
    m[..., F] = np.maximum(1.0 - 2.0 * p, 0.0)
    m[..., OMEGA] = 1.0 - m[..., SD] - m[..., F]
    return m


def free_probability(r, r_max: float, p_free_max: float):
    """Free-space probability falling linearly from ``p_free_max`` at the sensor to 0.5 at ``r_max``."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, r_max)
    return p_free_max - (p_free_max - 0.5) * r / r_max


def _window_offsets(radius_cells: int) -> np.ndarray:
    k = np.arange(-radius_cells, radius_cells + 1)
    ox, oy = np.meshgrid(k, k)
    return np.stack([ox.ravel(), oy.ravel()], axis=1)


def inverse_sensor_model(detections: Sequence, sensor: SensorConfig, sensor_pose: Pose, spec: GridSpec,
                         params: Params, kind: str | None = None,
                         ego_motion: EgoMotion | None = None) -> MeasurementGrid:
    """Measurement grid of one sensor for one frame.

    Occupancy is a 2-D Gaussian around each detection; cells in front of the
    first return of their beam are free with a range-decaying probability;
    cells behind a return and outside the field of view stay unknown.
    """
    kind = kind or sensor.kind
    if kind == "radar":
        sigma, p_hit, p_free_max = params.sigma_occ_radar, params.p_hit_radar, params.p_free_max_radar
    elif kind == "lidar":
        sigma, p_hit, p_free_max = params.sigma_occ_lidar, params.p_hit_lidar, params.p_free_max_lidar
    else:
        raise ValueError(f"unknown sensor kind {kind!r}")
    ego_motion = ego_motion or EgoMotion()
    grid = MeasurementGrid.empty(spec, sensor.sensor_id)

    az_beams = sensor.beam_azimuths
    half_fov = sensor.fov / 2 + sensor.beam_spacing / 2
    beam_range = np.full(len(az_beams), sensor.range_max)

    rng_d = np.array([d.range for d in detections], dtype=float)
    az_d = np.array([d.azimuth for d in detections], dtype=float)
    keep = (np.abs(az_d) <= half_fov) & (rng_d >= sensor.range_min) & (rng_d <= sensor.range_max)
    grid.dropped = int(len(detections) - keep.sum())
    idx = np.flatnonzero(keep)
    rng_d, az_d = rng_d[idx], az_d[idx]
    beam_d = np.clip(np.rint((az_d + sensor.fov / 2) / sensor.beam_spacing).astype(np.int64), 0, len(az_beams) - 1)
    np.minimum.at(beam_range, beam_d, rng_d)

    # free space along every beam up to its first return
    gx, gy = spec.cell_centers()
    dx, dy = gx - sensor_pose.x, gy - sensor_pose.y
    r = np.hypot(dx, dy)
    bearing = normalize_angle(np.arctan2(dy, dx) - sensor_pose.heading)
    in_fov = (np.abs(bearing) <= half_fov) & (r <= sensor.range_max)
    beam_c = np.clip(np.rint((bearing + sensor.fov / 2) / sensor.beam_spacing).astype(np.int64), 0, len(az_beams) - 1)
    free = in_fov & (r < beam_range[beam_c] - 2.0 * sigma)
    p_free = free_probability(r, sensor.range_max, p_free_max)
    p_occ = np.where(free, 1.0 - p_free, 0.5)

    g = np.zeros(spec.shape)
    if len(idx):
        phi = sensor_pose.heading + az_d
        px = sensor_pose.x + rng_d * np.cos(phi)
        py = sensor_pose.y + rng_d * np.sin(phi)
        cut = params.occ_cutoff_sigmas * sigma
        rad = int(math.ceil(cut / spec.resolution))
        offs = _window_offsets(rad)
        cix = np.floor((px - spec.origin.x) / spec.resolution).astype(np.int64)
        ciy = np.floor((py - spec.origin.y) / spec.resolution).astype(np.int64)
        wx = cix[:, None] + offs[None, :, 0]
        wy = ciy[:, None] + offs[None, :, 1]
        ccx = spec.origin.x + (wx + 0.5) * spec.resolution
        ccy = spec.origin.y + (wy + 0.5) * spec.resolution
        d2 = (ccx - px[:, None]) ** 2 + (ccy - py[:, None]) ** 2
        ok = (wx >= 0) & (wx < spec.n) & (wy >= 0) & (wy < spec.n) & (d2 <= cut * cut)
        det_of = np.broadcast_to(np.arange(len(idx))[:, None], ok.shape)[ok]
        flat = (wy * spec.n + wx)[ok]
        gval = np.exp(-d2[ok] / (2.0 * sigma * sigma))
        # dominant detection per cell: largest Gaussian weight, ties to the lower index
        order = np.lexsort((-det_of, gval, flat))
        last = np.r_[flat[order][1:] != flat[order][:-1], True] if len(flat) else np.zeros(0, bool)
        win = order[last]
        gflat = g.reshape(-1)
        gflat[flat[win]] = gval[win]
        dom = np.full(spec.n_cells, -1, dtype=np.int64)
        dom[flat[win]] = det_of[win]

        if kind == "radar":
            v_abs = np.array([detections[i].v_r - static_radial_velocity(detections[i].azimuth, sensor, ego_motion)
                              for i in idx])
            b = np.array([detections[i].b_rsp for i in idx])
            lx = (px - sensor_pose.x) / rng_d
            ly = (py - sensor_pose.y) / rng_d
            has = dom >= 0
            sel = dom[has]
            for arr, vals in ((grid.v_r, v_abs), (grid.b_rsp, b), (grid.los_x, lx), (grid.los_y, ly)):
                arr.reshape(-1)[has] = vals[sel]

    p_occ = np.clip(p_occ + 0.5 * p_hit * g, 0.0, 1.0)
    grid.masses = probability_to_masses(p_occ)
    return grid


def fuse_sensor_grids(grids: Sequence[MeasurementGrid]) -> MeasurementGrid:
    """Cell-wise Dempster fold in ascending sensor id order.

    The radar observation kept per cell is the one whose ``b_rsp`` lies
    farthest from 0.5.
    """
    if not grids:
        raise ValueError("need at least one grid")
    ordered = sorted(grids, key=lambda gr: gr.sensor_id)
    spec = ordered[0].spec
    for gr in ordered[1:]:
        if gr.spec != spec:
            raise ValueError("all grids must share one GridSpec")
    first = ordered[0]
    out = replace(first, masses=first.masses.copy(), v_r=first.v_r.copy(), b_rsp=first.b_rsp.copy(),
                  los_x=first.los_x.copy(), los_y=first.los_y.copy(), sensor_id=-1)
    for gr in ordered[1:]:
        out.masses, total = combine_arrays(out.masses, gr.masses)
        out.total_conflicts += int(total.sum())
        out.dropped += gr.dropped
        cur = np.where(np.isnan(out.b_rsp), -1.0, np.abs(out.b_rsp - 0.5))
        new = np.where(np.isnan(gr.b_rsp), -1.0, np.abs(gr.b_rsp - 0.5))
        take = new > cur
        for name in ("v_r", "b_rsp", "los_x", "los_y"):
            getattr(out, name)[take] = getattr(gr, name)[take]
    return out


def build_measurement_grid(detections: Sequence, rig: Sequence[SensorConfig], ego: Pose, spec: GridSpec,
                           params: Params, ego_motion: EgoMotion | None = None,
                           threads: int = 1) -> MeasurementGrid:
    """Per-sensor inverse models (optionally in parallel) fused into one grid."""
    by_sensor = {sn.sensor_id: [] for sn in rig}
    for d in detections:
        by_sensor.setdefault(d.sensor_id, []).append(d)

    def one(sensor: SensorConfig) -> MeasurementGrid:
        return inverse_sensor_model(by_sensor[sensor.sensor_id], sensor, sensor.world_pose(ego), spec, params,
                                    sensor.kind, ego_motion)

    if threads > 1 and len(rig) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grids = list(pool.map(one, rig))
    else:
        grids = [one(sn) for sn in rig]
    if not grids:
        return MeasurementGrid.empty(spec)
    return fuse_sensor_grids(grids)
