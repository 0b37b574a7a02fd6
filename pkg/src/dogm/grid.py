"""Grid geometry, evidence-mass types and the shared parameter set.

Mass grids are plain ``float64`` arrays whose last axis holds the five
hypotheses in the order ``F, S, D, SD, OMEGA``.  Cell arrays are indexed
``[iy, ix]`` (rows are y), and a cell is addressed by the tuple ``(ix, iy)``
or by the flat index ``iy * n + ix``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import IntEnum

import numpy as np

F, S, D, SD, OMEGA = range(5)
N_MASSES = 5
MASS_NAMES = ("m_F", "m_S", "m_D", "m_SD", "m_Omega")
MASS_TOL = 1e-9


class ParticleClass(IntEnum):
    UNCLASSIFIED = 0
    STATIC = 1
    DYNAMIC = 2


def normalize_angle(a):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    return math.pi - np.mod(math.pi - a, 2.0 * math.pi)


@dataclass(frozen=True)
class EvidenceMass:
    m_F: float = 0.0
    m_S: float = 0.0
    m_D: float = 0.0
    m_SD: float = 0.0
    m_Omega: float = 1.0

    def __post_init__(self):
        vals = self.as_array()
        if np.any(vals < -MASS_TOL) or np.any(vals > 1.0 + MASS_TOL):
            raise ValueError(f"masses must lie in [0, 1]: {vals}")
        if abs(vals.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses must sum to 1, got {vals.sum()!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.m_F, self.m_S, self.m_D, self.m_SD, self.m_Omega])

    @classmethod
    def from_array(cls, arr) -> "EvidenceMass":
        a = np.asarray(arr, dtype=float)
        return cls(*(float(v) for v in a))

    @classmethod
    def vacuous(cls) -> "EvidenceMass":
        return cls()


def vacuous_masses(shape) -> np.ndarray:
    """Mass array of the given cell shape with every cell unknown (m_Omega = 1)."""
    m = np.zeros(tuple(shape) + (N_MASSES,))
    m[..., OMEGA] = 1.0
    return m


def check_masses(m: np.ndarray, tol: float = MASS_TOL) -> None:
    """Raise ``AssertionError`` unless every cell is a valid mass vector."""
    m = np.asarray(m)
    if np.any(m < -tol) or np.any(m > 1.0 + tol):
        raise AssertionError("mass outside [0, 1]")
    err = np.abs(m.sum(axis=-1) - 1.0)
    if err.size and err.max() > tol:
        raise AssertionError(f"mass normalization violated by {err.max():.3e}")


@dataclass(frozen=True)
class DogmCell:
    """One cell of the dynamic grid: five masses plus velocity moments.

    Velocity channels are ``nan`` when the cell held no classified particle.
    """

    mass: EvidenceMass
    v_x: float = math.nan
    v_y: float = math.nan
    var_vx: float = math.nan
    var_vy: float = math.nan
    cov_vxvy: float = math.nan

    @property
    def has_velocity(self) -> bool:
        return not math.isnan(self.v_x)


@dataclass(frozen=True)
class Particle:
    s_x: float
    s_y: float
    v_x: float
    v_y: float
    weight: float = 0.0
    age: int = 0
    cls: ParticleClass = ParticleClass.UNCLASSIFIED


@dataclass(frozen=True)
class CellMixture:
    lam: float
    particles: tuple[Particle, ...] = ()


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", float(normalize_angle(self.heading)))

    def transform(self, px, py):
        """Map points from this pose's local frame into the parent frame."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return self.x + c * px - s * py, self.y + s * px + c * py

    def compose(self, local: "Pose") -> "Pose":
        x, y = self.transform(local.x, local.y)
        return Pose(x, y, self.heading + local.heading)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned square window; ``origin`` is the lower-left corner of cell (0, 0)."""

    edge_length: float = 50.0
    resolution: float = 0.2
    k_max: int = 50
    origin: Pose = field(default_factory=lambda: Pose(-25.1, -25.1))

    def __post_init__(self):
        if self.resolution <= 0 or self.edge_length <= 0:
            raise ValueError("edge_length and resolution must be positive")
        ratio = self.edge_length / self.resolution
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ValueError("edge_length / resolution must be a positive integer")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    @property
    def n(self) -> int:
        return int(round(self.edge_length / self.resolution))

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def center_cell(self) -> tuple[int, int]:
        c = self.n // 2
        return (c, c)

    @classmethod
    def centered_on(cls, pose: Pose, **kw) -> "GridSpec":
        """Spec whose central cell has its center exactly at ``pose``."""
        spec = cls(**kw)
        half = (spec.n // 2 + 0.5) * spec.resolution
        return replace(spec, origin=Pose(pose.x - half, pose.y - half))

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(x, y)`` of shape ``(n, n)`` with world coordinates of all centers."""
        idx = (np.arange(self.n) + 0.5) * self.resolution
        xs = self.origin.x + idx
        ys = self.origin.y + idx
        return np.meshgrid(xs, ys)


def world_to_cell(p, spec: GridSpec) -> tuple[int, int] | None:
    """Cell ``(ix, iy)`` containing point ``p`` or ``None`` when outside the window."""
    ix = math.floor((p[0] - spec.origin.x) / spec.resolution)
    iy = math.floor((p[1] - spec.origin.y) / spec.resolution)
    if 0 <= ix < spec.n and 0 <= iy < spec.n:
        return (ix, iy)
    return None


def cell_center(cell, spec: GridSpec) -> tuple[float, float]:
    ix, iy = cell
    return (spec.origin.x + (ix + 0.5) * spec.resolution,
            spec.origin.y + (iy + 0.5) * spec.resolution)


def flat_cell_index(x: np.ndarray, y: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Vectorized :func:`world_to_cell` returning flat indices, ``-1`` when outside."""
    ix = np.floor((np.asarray(x) - spec.origin.x) / spec.resolution).astype(np.int64)
    iy = np.floor((np.asarray(y) - spec.origin.y) / spec.resolution).astype(np.int64)
    inside = (ix >= 0) & (ix < spec.n) & (iy >= 0) & (iy < spec.n)
    return np.where(inside, iy * spec.n + ix, -1)


def window_shift(new_ego: Pose, spec: GridSpec) -> tuple[int, int]:
    """Whole-cell shift that brings ``new_ego`` back near the central cell.

    The offset from the central cell's center is truncated toward zero, so
    motion smaller than one cell never moves the window.
    """
    cx, cy = cell_center(spec.center_cell, spec)
    # nudge away from zero so exact multiples of the resolution survive rounding
    qx = (new_ego.x - cx) / spec.resolution
    qy = (new_ego.y - cy) / spec.resolution
    return int(qx + math.copysign(1e-9, qx)), int(qy + math.copysign(1e-9, qy))


def shift_layer(arr: np.ndarray, dx: int, dy: int, fill) -> np.ndarray:
    """Translate a cell layer so that ``new[iy, ix] = old[iy + dy, ix + dx]``."""
    out = np.empty_like(arr)
    out[...] = fill
    ny, nx = arr.shape[:2]
    if abs(dx) >= nx or abs(dy) >= ny:
        return out
    src_y = slice(max(dy, 0), ny + min(dy, 0))
    dst_y = slice(max(-dy, 0), ny + min(-dy, 0))
    src_x = slice(max(dx, 0), nx + min(dx, 0))
    dst_x = slice(max(-dx, 0), nx + min(-dx, 0))
    out[dst_y, dst_x] = arr[src_y, src_x]
    return out


def shifted_spec(spec: GridSpec, dx: int, dy: int) -> GridSpec:
    o = spec.origin
    return replace(spec, origin=Pose(o.x + dx * spec.resolution, o.y + dy * spec.resolution, o.heading))


def recenter_grid(grid, new_ego: Pose, spec: GridSpec):
    """Move the window of ``grid`` so the ego stays central.

    ``grid`` is any object with a ``shifted(dx, dy, new_spec)`` method
    (the DOGM, the tracker state).  Returns ``(grid, new_spec)``; when no
    whole-cell shift is needed both are returned unchanged.
    """
    dx, dy = window_shift(new_ego, spec)
    if dx == 0 and dy == 0:
        return grid, spec
    new_spec = shifted_spec(spec, dx, dy)
    return grid.shifted(dx, dy, new_spec), new_spec


@dataclass(frozen=True)
class Params:
    """Tunable constants of the whole pipeline."""

    # tracking
    eps_rsp: float = 0.5
    k_d: float = 0.8
    q_pos: float = 0.05
    q_vel: float = 0.2
    sigma_vr: float = 0.25
    v_max: float = 16.7
    birth_fraction: float = 0.2
    birth_mode: str = "hard"
    # evidential mapping / clustering
    a_min: int = 4
    eps_v: float = 1.0
    eps_d_min: float = 0.4
    eps_lambda: float = 0.5
    d_conn: int = 2
    eps_v_sim: float = 2.0
    min_cluster_cells: int = 3
    # inverse sensor models
    sigma_occ_radar: float = 0.6
    sigma_occ_lidar: float = 0.15
    p_hit_radar: float = 0.9
    p_hit_lidar: float = 0.95
    p_free_max_radar: float = 0.9
    p_free_max_lidar: float = 0.95
    occ_cutoff_sigmas: float = 3.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v < 0:
                raise ValueError(f"{f.name} must be nonnegative")
        if not 0.0 <= self.birth_fraction <= 1.0:
            raise ValueError("birth_fraction must lie in [0, 1]")
        if not 0.0 <= self.eps_lambda <= 1.0:
            raise ValueError("eps_lambda must lie in [0, 1]")
        if self.birth_mode not in ("hard", "soft"):
            raise ValueError("birth_mode must be 'hard' or 'soft'")
        for name in ("p_hit_radar", "p_hit_lidar"):
            if getattr(self, name) > 1.0:
                raise ValueError(f"{name} must be <= 1")
        for name in ("p_free_max_radar", "p_free_max_lidar"):
            if not 0.5 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0.5, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Params":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
        return cls(**d)
