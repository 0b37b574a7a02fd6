"""Per-cell particle filter: predict, births, weighting, mixture weights, resampling.

Particles are stored as structure-of-arrays kept sorted by flat cell index;
a cell's particles are one contiguous run.  Within-cell weights are
normalized per cell and the cell's mixture weight ``lam`` is kept apart.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as crng
from .grid import (F, SD, CellMixture, GridSpec, Params, Particle, ParticleClass, Pose, flat_cell_index,
                   shift_layer)
from .measurement import MeasurementGrid


@dataclass
class ParticleSet:
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    w: np.ndarray
    age: np.ndarray
    cls: np.ndarray
    cell: np.ndarray

    _FIELDS = ("x", "y", "vx", "vy", "w", "age", "cls", "cell")

    @classmethod
    def empty(cls) -> "ParticleSet":
        f = np.zeros(0)
        return cls(f, f.copy(), f.copy(), f.copy(), f.copy(), np.zeros(0, np.int32),
                   np.zeros(0, np.int8), np.zeros(0, np.int64))

    @classmethod
    def from_particles(cls, particles, spec: GridSpec) -> "ParticleSet":
        ps = list(particles)
        arr = lambda name, dt: np.array([getattr(p, name) for p in ps], dtype=dt)
        x, y = arr("s_x", float), arr("s_y", float)
        out = cls(x, y, arr("v_x", float), arr("v_y", float), arr("weight", float),
                  arr("age", np.int32), arr("cls", np.int8), flat_cell_index(x, y, spec))
        return out.take(np.flatnonzero(out.cell >= 0)).sorted()

    def __len__(self) -> int:
        return len(self.x)

    def take(self, idx) -> "ParticleSet":
        return ParticleSet(*(getattr(self, n)[idx] for n in self._FIELDS))

    def sorted(self) -> "ParticleSet":
        return self.take(np.argsort(self.cell, kind="stable"))

    @staticmethod
    def concat(a: "ParticleSet", b: "ParticleSet") -> "ParticleSet":
        return ParticleSet(*(np.concatenate([getattr(a, n), getattr(b, n)]) for n in ParticleSet._FIELDS))

    def particle(self, k: int) -> Particle:
        return Particle(float(self.x[k]), float(self.y[k]), float(self.vx[k]), float(self.vy[k]),
                        float(self.w[k]), int(self.age[k]), ParticleClass(int(self.cls[k])))

    def runs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(cells, starts, counts)`` of the contiguous per-cell runs."""
        if len(self) == 0:
            z = np.zeros(0, np.int64)
            return z, z, z
        brk = np.flatnonzero(np.diff(self.cell)) + 1
        starts = np.r_[0, brk]
        counts = np.diff(np.r_[starts, len(self)])
        return self.cell[starts], starts, counts

    def rank_in_cell(self) -> np.ndarray:
        _, starts, counts = self.runs()
        return np.arange(len(self)) - np.repeat(starts, counts)


@dataclass
class TrackerState:
    spec: GridSpec
    particles: ParticleSet
    lam: np.ndarray  # mixture weight per flat cell
    lam_pred: np.ndarray  # predicted, unnormalized mixture weight
    step: int = 0
    seed: int = 0
    threads: int = 1
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, spec: GridSpec, seed: int = 0, threads: int = 1) -> "TrackerState":
        z = np.zeros(spec.n_cells)
        return cls(spec, ParticleSet.empty(), z, z.copy(), 0, seed, threads, _fresh_diag())

    def mixture(self, ix: int, iy: int) -> CellMixture:
        c = iy * self.spec.n + ix
        k = np.flatnonzero(self.particles.cell == c)
        return CellMixture(float(self.lam[c]), tuple(self.particles.particle(i) for i in k))

    def particle_counts(self) -> np.ndarray:
        return np.bincount(self.particles.cell, minlength=self.spec.n_cells)

    def shifted(self, dx: int, dy: int, new_spec: GridSpec) -> "TrackerState":
        """Same particles (world coordinates) in a moved window; leavers are dropped."""
        n = self.spec.n
        lam = shift_layer(self.lam.reshape(n, n), dx, dy, 0.0).reshape(-1)
        lam_pred = shift_layer(self.lam_pred.reshape(n, n), dx, dy, 0.0).reshape(-1)
        p = self.particles
        cell = flat_cell_index(p.x, p.y, new_spec)
        p = replace(p, cell=cell).take(np.flatnonzero(cell >= 0)).sorted()
        return replace(self, spec=new_spec, particles=p, lam=lam, lam_pred=lam_pred,
                       diagnostics=dict(self.diagnostics))


def _fresh_diag() -> dict:
    return dict(births=0, dropped=0, zero_weight_resets=0)


def _cell_sums(cell: np.ndarray, values: np.ndarray, n_cells: int) -> np.ndarray:
    return np.bincount(cell, weights=values, minlength=n_cells)


def predict(state: TrackerState, dt: float, params: Params) -> TrackerState:
    """Constant-velocity motion with Gaussian noise, ageing and re-binning."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    spec = state.spec
    step = state.step + 1
    diag = _fresh_diag()
    p = state.particles
    if len(p) == 0:
        z = np.zeros(spec.n_cells)
        return replace(state, particles=p, lam_pred=z, step=step, diagnostics=diag)

    glob_w = state.lam[p.cell] * p.w
    slot = p.rank_in_cell() * 4
    nz = [crng.normal(state.seed, step, crng.PREDICT, p.cell, slot + j) for j in range(4)]
    x = p.x + p.vx * dt + params.q_pos * nz[0]
    y = p.y + p.vy * dt + params.q_pos * nz[1]
    vx = p.vx + params.q_vel * nz[2]
    vy = p.vy + params.q_vel * nz[3]
    cell = flat_cell_index(x, y, spec)
    moved = ParticleSet(x, y, vx, vy, glob_w, p.age + 1, p.cls, cell)
    inside = np.flatnonzero(cell >= 0)
    diag["dropped"] = int(len(p) - len(inside))
    moved = moved.take(inside).sorted()

    lam_pred = _cell_sums(moved.cell, moved.w, spec.n_cells)
    denom = lam_pred[moved.cell]
    counts = np.bincount(moved.cell, minlength=spec.n_cells)[moved.cell]
    moved.w = np.where(denom > 0, moved.w / np.where(denom > 0, denom, 1.0), 1.0 / counts)
    return replace(state, particles=moved, lam_pred=lam_pred, step=step, diagnostics=diag)


def _birth_counts(state: TrackerState, meas: MeasurementGrid, params: Params):
    """Birth cells, birth count per cell and the total proposal weight of the births."""
    spec = state.spec
    m_sd = meas.masses[..., SD].reshape(-1)
    cells = np.flatnonzero(m_sd > 0)
    n_prior = np.bincount(state.particles.cell, minlength=spec.n_cells)[cells]
    lam_bar = np.minimum(state.lam_pred[cells], 1.0)
    k = spec.k_max
    share = params.birth_fraction * (1.0 - lam_bar)
    n_b = np.where(n_prior > 0, np.floor(share * k + 0.5), k).astype(np.int64)
    birth_w = np.where(n_prior > 0, n_b / k, 1.0)
    keep = n_b > 0
    return cells[keep], n_b[keep], birth_w[keep]


def sample_births(state: TrackerState, meas: MeasurementGrid, params: Params) -> TrackerState:
    """Draw new particles from the measurement in every cell with occupancy evidence.

    Radar cells with a return at or above ``eps_rsp`` get static births
    (v = 0); otherwise the radial velocity is drawn around the measured
    Doppler and the tangential part uniformly.  Cells without a velocity
    observation draw velocities uniformly from the disk of radius ``v_max``.
    """
    spec = state.spec
    cells, n_b, birth_w = _birth_counts(state, meas, params)
    if len(cells) == 0:
        return state
    p = state.particles
    seed, step = state.seed, state.step

    # rescale prior weights in birth cells so births hold their share
    scale = np.ones(spec.n_cells)
    scale[cells] = 1.0 - birth_w
    w_prior = p.w * scale[p.cell]

    bcell = np.repeat(cells, n_b)
    slot = (np.arange(len(bcell)) - np.repeat(np.cumsum(n_b) - n_b, n_b)) * 8
    u = lambda j: crng.uniform(seed, step, crng.BIRTH, bcell, slot + j)
    ix, iy = bcell % spec.n, bcell // spec.n
    bx = spec.origin.x + (ix + u(0)) * spec.resolution
    by = spec.origin.y + (iy + u(1)) * spec.resolution

    v_r = meas.v_r.reshape(-1)[bcell]
    has_v = ~np.isnan(v_r)
    b_rsp = meas.b_rsp.reshape(-1)[bcell]
    if params.birth_mode == "hard":
        static = has_v & (b_rsp >= params.eps_rsp)
    else:
        static = has_v & (u(2) < b_rsp)
    dynamic_r = has_v & ~static

    # radial births matched to the Doppler observation
    lx = meas.los_x.reshape(-1)[bcell]
    ly = meas.los_y.reshape(-1)[bcell]
    radial = v_r + params.sigma_vr * crng.normal(seed, step, crng.BIRTH, bcell, slot // 2 + 2)
    tang = params.v_max * (2.0 * u(6) - 1.0)
    rvx = radial * lx - tang * ly
    rvy = radial * ly + tang * lx
    # uniform disk when no velocity is observed
    rad = params.v_max * np.sqrt(u(3))
    ang = 2.0 * np.pi * u(7)
    dvx, dvy = rad * np.cos(ang), rad * np.sin(ang)

    bvx = np.where(static, 0.0, np.where(dynamic_r, rvx, dvx))
    bvy = np.where(static, 0.0, np.where(dynamic_r, rvy, dvy))
    bw = np.repeat(birth_w / n_b, n_b)
    born = ParticleSet(bx, by, bvx, bvy, bw, np.zeros(len(bcell), np.int32),
                       np.zeros(len(bcell), np.int8), bcell)
    merged = ParticleSet.concat(replace(p, w=w_prior), born).sorted()
    diag = dict(state.diagnostics)
    diag["births"] = diag.get("births", 0) + int(len(bcell))
    return replace(state, particles=merged, diagnostics=diag)


def velocity_likelihood(p: ParticleSet, meas: MeasurementGrid, sigma_vr: float) -> np.ndarray:
    """Gaussian fit of each particle's radial velocity to its cell's Doppler; 1 where unobserved."""
    v_r = meas.v_r.reshape(-1)[p.cell]
    lx = meas.los_x.reshape(-1)[p.cell]
    ly = meas.los_y.reshape(-1)[p.cell]
    proj = p.vx * lx + p.vy * ly
    lik = np.exp(-((proj - v_r) ** 2) / (2.0 * sigma_vr * sigma_vr))
    return np.where(np.isnan(v_r), 1.0, lik)


def weight_particles(state: TrackerState, meas: MeasurementGrid, params: Params) -> TrackerState:
    """Unnormalized weight ``proposal * m_SD * L_v``, then per-cell normalization."""
    spec = state.spec
    p = state.particles
    if len(p) == 0:
        return state
    m_sd = meas.masses[..., SD].reshape(-1)
    wbar = p.w * m_sd[p.cell] * velocity_likelihood(p, meas, params.sigma_vr)
    sums = _cell_sums(p.cell, wbar, spec.n_cells)
    counts = np.bincount(p.cell, minlength=spec.n_cells)
    zero = (counts > 0) & (sums <= 0)
    s = sums[p.cell]
    w = np.where(s > 0, wbar / np.where(s > 0, s, 1.0), 1.0 / counts[p.cell])
    diag = dict(state.diagnostics)
    diag["zero_weight_resets"] = diag.get("zero_weight_resets", 0) + int(zero.sum())
    return replace(state, particles=replace(p, w=w), diagnostics=diag)


def decay_fn(lambda_pred, m_f, k_d: float):
    """Exponential decay of the predicted mixture weight under measured free space."""
    return k_d * np.minimum(lambda_pred, 1.0) * (1.0 - np.asarray(m_f))


def weight_mixtures(state: TrackerState, meas: MeasurementGrid, params: Params) -> TrackerState:
    m = meas.masses.reshape(-1, meas.masses.shape[-1])
    lam = np.maximum(m[:, SD], decay_fn(state.lam_pred, m[:, F], params.k_d))
    return replace(state, lam=np.clip(lam, 0.0, 1.0))


def target_counts(lam: np.ndarray, k_max: int) -> np.ndarray:
    return np.floor(np.asarray(lam) * k_max + 0.5).astype(np.int64)


def _systematic(p: ParticleSet, cells, starts, counts, n_out, seed: int, step: int) -> np.ndarray:
    """Source indices of systematic resampling for the given runs."""
    keep = n_out > 0
    cells, starts, counts, n_out = cells[keep], starts[keep], counts[keep], n_out[keep]
    if len(cells) == 0:
        return np.zeros(0, np.int64)
    first = np.cumsum(counts) - counts
    src = np.repeat(starts - first, counts) + np.arange(counts.sum())
    run = np.repeat(np.arange(len(cells)), counts)
    cum = np.cumsum(p.w[src])
    base = np.r_[0.0, cum][first]
    local = cum - np.repeat(base, counts)
    tot = local[np.cumsum(counts) - 1]
    key = run + local / np.repeat(tot, counts)
    u0 = crng.uniform(seed, step, crng.RESAMPLE, cells, 0)
    run_out = np.repeat(np.arange(len(cells)), n_out)
    j = np.arange(n_out.sum()) - np.repeat(np.cumsum(n_out) - n_out, n_out)
    pos = run_out + (np.repeat(u0, n_out) + j) / np.repeat(n_out, n_out)
    k = np.searchsorted(key, pos, side="right")
    end = np.repeat(np.cumsum(counts) - 1, n_out)
    k = np.minimum(k, end)
    return src[k]


def resample(state: TrackerState, params: Params) -> TrackerState:
    """Per-cell systematic resampling to ``round(lam * K_max)`` uniform-weight particles."""
    spec = state.spec
    p = state.particles
    lam = state.lam.copy()
    if len(p) == 0:
        return replace(state, lam=np.zeros_like(lam))
    cells, starts, counts = p.runs()
    n_out = target_counts(lam[cells], spec.k_max)
    parts = np.array_split(np.arange(len(cells)), max(1, min(state.threads, len(cells))))
    job = lambda ix: _systematic(p, cells[ix], starts[ix], counts[ix], n_out[ix], state.seed, state.step)
    if len(parts) > 1:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            chunks = list(pool.map(job, parts))
    else:
        chunks = [job(parts[0])]
    src = np.concatenate(chunks)
    out = p.take(src)
    n_new = np.bincount(out.cell, minlength=spec.n_cells)
    out.w = 1.0 / n_new[out.cell]
    lam[n_new == 0] = 0.0
    return replace(state, particles=out, lam=lam)


def update(state: TrackerState, meas: MeasurementGrid, dt: float, params: Params) -> TrackerState:
    """One full tracking cycle."""
    state = predict(state, dt, params)
    state = sample_births(state, meas, params)
    state = weight_particles(state, meas, params)
    state = weight_mixtures(state, meas, params)
    return resample(state, params)


# ---------------------------------------------------------------- snapshots

_TRK_MAGIC = b"DOGMTRK"
_TRK_VERSION = 1
_TRK_HEADER = struct.Struct("<7sBIddIdddQQQ")


def tracker_to_bytes(state: TrackerState) -> bytes:
    sp = state.spec
    p = state.particles
    head = _TRK_HEADER.pack(_TRK_MAGIC, _TRK_VERSION, sp.n, sp.resolution, sp.edge_length, sp.k_max,
                            sp.origin.x, sp.origin.y, sp.origin.heading, state.step, state.seed, len(p))
    body = [state.lam.astype("<f8"), state.lam_pred.astype("<f8"),
            *(getattr(p, n).astype("<f8") for n in ("x", "y", "vx", "vy", "w")),
            p.age.astype("<i4"), p.cls.astype("<i1")]
    return head + b"".join(a.tobytes() for a in body)


def tracker_from_bytes(data: bytes) -> TrackerState:
    if len(data) < _TRK_HEADER.size:
        raise ValueError("truncated tracker snapshot")
    (magic, version, n, res, edge, k_max, ox, oy, oh, step, seed, n_p) = _TRK_HEADER.unpack_from(data)
    if magic != _TRK_MAGIC or version != _TRK_VERSION:
        raise ValueError("not a tracker snapshot of a supported version")
    spec = GridSpec(edge, res, k_max, Pose(ox, oy, oh))
    if spec.n != n:
        raise ValueError("inconsistent tracker snapshot header")
    off = _TRK_HEADER.size

    def read(dtype, count):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr.copy()

    lam, lam_pred = read("<f8", n * n), read("<f8", n * n)
    x, y, vx, vy, w = (read("<f8", n_p) for _ in range(5))
    age, cls = read("<i4", n_p), read("<i1", n_p)
    if off != len(data):
        raise ValueError("trailing bytes in tracker snapshot")
    ps = ParticleSet(x, y, vx, vy, w, age, cls, flat_cell_index(x, y, spec))
    return TrackerState(spec, ps, lam, lam_pred, int(step), int(seed), 1, _fresh_diag())
