"""Evidential map from the particle population and its temporal accumulation."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .grid import (D, F, N_MASSES, OMEGA, S, SD, DogmCell, EvidenceMass, GridSpec, ParticleClass, Params, Pose,
                   shift_layer, vacuous_masses)
from .measurement import MeasurementGrid
from .tracker import TrackerState

N_MOMENTS = 5  # v_x, v_y, var_vx, var_vy, cov_vxvy


def classify_particles(state: TrackerState, params: Params) -> TrackerState:
    """Unclassified below ``a_min``; then static iff ``||v|| <= eps_v``, else dynamic."""
    p = state.particles
    speed = np.hypot(p.vx, p.vy)
    cls = np.where(p.age < params.a_min, ParticleClass.UNCLASSIFIED,
                   np.where(speed <= params.eps_v, ParticleClass.STATIC, ParticleClass.DYNAMIC)).astype(np.int8)
    return replace(state, particles=replace(p, cls=cls))


def derive_instant_map(state: TrackerState, meas: MeasurementGrid | None = None) -> np.ndarray:
    """Instantaneous masses: class weight shares scaled by ``lam``, free mass from the measurement."""
    spec = state.spec
    p = state.particles
    n = spec.n_cells
    share = np.zeros((n, 3))
    for k, c in enumerate((ParticleClass.STATIC, ParticleClass.DYNAMIC, ParticleClass.UNCLASSIFIED)):
        sel = p.cls == c
        share[:, k] = np.bincount(p.cell[sel], weights=p.w[sel], minlength=n)
    tot = share.sum(axis=1)
    share /= np.where(tot > 0, tot, 1.0)[:, None]
    lam = np.where(tot > 0, np.clip(state.lam, 0.0, 1.0), 0.0)
    m = np.zeros((n, N_MASSES))
    m[:, S] = lam * share[:, 0]
    m[:, D] = lam * share[:, 1]
    m[:, SD] = lam * share[:, 2]
    if meas is not None:
        m[:, F] = (1.0 - lam) * meas.masses[..., F].reshape(-1)
    m[:, OMEGA] = np.maximum(1.0 - m[:, F] - m[:, S] - m[:, D] - m[:, SD], 0.0)
    return m.reshape(spec.n, spec.n, N_MASSES)


def suppress_unclassified(instant: np.ndarray) -> np.ndarray:
    """Move unclassified occupancy into the unknown mass."""
    out = np.array(instant, dtype=float, copy=True)
    out[..., OMEGA] = out[..., OMEGA] + out[..., SD]
    out[..., SD] = 0.0
    return out


def combine_maps(prev: np.ndarray, inst: np.ndarray) -> np.ndarray:
    """Accumulate the previous map with the modified instant map.

    Agreeing intersections follow Dempster's rule; S/D conflict goes to
    ``{S, D}`` and free/occupied conflict to ``Omega``, so no mass is
    discarded and no normalization is needed.
    """
    aF, aS, aD, aSD, aO = (prev[..., k] for k in range(N_MASSES))
    bF, bS, bD, bSD, bO = (inst[..., k] for k in range(N_MASSES))
    out = np.empty(np.broadcast_shapes(prev.shape, inst.shape))
    out[..., F] = aF * bF + aF * bO + aO * bF
    out[..., S] = aS * bS + aS * bSD + aSD * bS + aS * bO + aO * bS
    out[..., D] = aD * bD + aD * bSD + aSD * bD + aD * bO + aO * bD
    out[..., SD] = aSD * bSD + aSD * bO + aO * bSD + aS * bD + aD * bS
    out[..., OMEGA] = aO * bO + aF * (bS + bD + bSD) + bF * (aS + aD + aSD)
    return out


def estimate_moments(state: TrackerState, params: Params) -> np.ndarray:
    """Weighted velocity mean and covariance per cell over particles aged ``>= a_min``.

    Returns ``(n, n, 5)`` with channels ``v_x, v_y, var_vx, var_vy, cov``;
    ``nan`` where no particle qualifies.
    """
    spec = state.spec
    n = spec.n_cells
    p = state.particles
    sel = p.age >= params.a_min
    cell, w, vx, vy = p.cell[sel], p.w[sel], p.vx[sel], p.vy[sel]
    sw = np.bincount(cell, weights=w, minlength=n)
    cnt = np.bincount(cell, minlength=n)
    defined = cnt > 0
    # equal weights when a qualifying subset carries no weight
    zero = defined & (sw <= 0)
    if np.any(zero):
        w = np.where(zero[cell], 1.0, w)
        sw = np.bincount(cell, weights=w, minlength=n)
    safe = np.where(defined, sw, 1.0)
    mx = np.bincount(cell, weights=w * vx, minlength=n) / safe
    my = np.bincount(cell, weights=w * vy, minlength=n) / safe
    dx, dy = vx - mx[cell], vy - my[cell]
    var_x = np.bincount(cell, weights=w * dx * dx, minlength=n) / safe
    var_y = np.bincount(cell, weights=w * dy * dy, minlength=n) / safe
    cov = np.bincount(cell, weights=w * dx * dy, minlength=n) / safe
    lim = np.sqrt(var_x * var_y)
    cov = np.clip(cov, -lim, lim)
    out = np.stack([mx, my, var_x, var_y, cov], axis=1)
    out[~defined] = np.nan
    return out.reshape(spec.n, spec.n, N_MOMENTS)


_MAP_MAGIC = b"DOGMMAP"
_MAP_VERSION = 1
_MAP_HEADER = struct.Struct("<7sBIddIdddQQ")


@dataclass
class Dogm:
    """Accumulated evidential map plus the latest velocity moments."""

    spec: GridSpec
    masses: np.ndarray
    moments: np.ndarray
    step: int = 0
    seed: int = 0

    @classmethod
    def initial(cls, spec: GridSpec, seed: int = 0) -> "Dogm":
        return cls(spec, vacuous_masses(spec.shape), np.full(spec.shape + (N_MOMENTS,), np.nan), 0, seed)

    @property
    def channels(self) -> np.ndarray:
        return np.concatenate([self.masses, self.moments], axis=-1)

    def cell(self, ix: int, iy: int) -> DogmCell:
        m = self.masses[iy, ix]
        mom = self.moments[iy, ix]
        return DogmCell(EvidenceMass.from_array(m / m.sum()), *(float(v) for v in mom))

    def shifted(self, dx: int, dy: int, new_spec: GridSpec) -> "Dogm":
        vac = np.zeros(N_MASSES)
        vac[OMEGA] = 1.0
        return replace(self, spec=new_spec, masses=shift_layer(self.masses, dx, dy, vac),
                       moments=shift_layer(self.moments, dx, dy, np.nan))

    def to_bytes(self) -> bytes:
        sp = self.spec
        head = _MAP_HEADER.pack(_MAP_MAGIC, _MAP_VERSION, sp.n, sp.resolution, sp.edge_length, sp.k_max,
                                sp.origin.x, sp.origin.y, sp.origin.heading, self.step, self.seed)
        return head + np.ascontiguousarray(self.channels, dtype="<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Dogm":
        if len(data) < _MAP_HEADER.size:
            raise ValueError("truncated DOGM snapshot")
        magic, version, n, res, edge, k_max, ox, oy, oh, step, seed = _MAP_HEADER.unpack_from(data)
        if magic != _MAP_MAGIC or version != _MAP_VERSION:
            raise ValueError("not a DOGM snapshot of a supported version")
        try:
            spec = GridSpec(edge, res, k_max, Pose(ox, oy, oh))
        except ValueError as exc:
            raise ValueError(f"corrupt DOGM snapshot header: {exc}") from None
        if spec.n != n:
            raise ValueError("corrupt DOGM snapshot header: cell count mismatch")
        body = np.frombuffer(data, dtype="<f4", offset=_MAP_HEADER.size)
        if body.size != n * n * (N_MASSES + N_MOMENTS):
            raise ValueError("DOGM snapshot body has the wrong size")
        ch = body.reshape(n, n, N_MASSES + N_MOMENTS).astype(np.float64)
        return cls(spec, ch[..., :N_MASSES].copy(), ch[..., N_MASSES:].copy(), int(step), int(seed))


def update_map(dogm: Dogm, state: TrackerState, meas: MeasurementGrid, params: Params):
    """Classify, derive, suppress, combine and estimate moments.

    Returns ``(state, dogm, stages)`` where ``stages`` holds the instant and
    modified instant maps for inspection.
    """
    state = classify_particles(state, params)
    inst = derive_instant_map(state, meas)
    mod = suppress_unclassified(inst)
    masses = combine_maps(dogm.masses, mod)
    moments = estimate_moments(state, params)
    new = replace(dogm, masses=masses, moments=moments, step=state.step)
    return state, new, {"instant": inst, "modified": mod, "combined": masses}
