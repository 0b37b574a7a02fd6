"""Dynamic-cell extraction and proximity/velocity clustering."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .grid import D, S, GridSpec, Params


@dataclass(frozen=True)
class ObjectCluster:
    cells: tuple[int, ...]  # flat indices, ascending
    centroid: tuple[float, float]
    velocity: tuple[float, float]
    velocity_cov: tuple[tuple[float, float], tuple[float, float]]
    bbox: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    cell_count: int

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))


def filter_dynamic_cells(dogm, params: Params) -> np.ndarray:
    """Flat indices of cells with ``m_D >= eps_D_min`` and ``m_D > m_S``."""
    m = dogm.masses.reshape(-1, dogm.masses.shape[-1])
    return np.flatnonzero((m[:, D] >= params.eps_d_min) & (m[:, D] > m[:, S]))


def connection_pairs(cells: np.ndarray, velocities: np.ndarray, spec: GridSpec, params: Params) -> np.ndarray:
    """Index pairs ``(i, j)`` into ``cells`` that are close and move alike."""
    if len(cells) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    xy = np.stack([cells % spec.n, cells // spec.n], axis=1).astype(float)
    pairs = cKDTree(xy).query_pairs(r=params.d_conn + 1e-9, p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    dv = velocities[pairs[:, 0]] - velocities[pairs[:, 1]]
    # nan velocities never connect
    ok = np.hypot(dv[:, 0], dv[:, 1]) <= params.eps_v_sim
    return pairs[ok]


def cluster_cells(cells, dogm, params: Params) -> list[ObjectCluster]:
    """Connected components of the proximity/velocity graph with at least ``min_cluster_cells`` cells."""
    cells = np.unique(np.asarray(cells, dtype=np.int64))
    if len(cells) == 0:
        return []
    spec = dogm.spec
    mom = dogm.moments.reshape(-1, dogm.moments.shape[-1])
    vel = mom[cells, :2]
    pairs = connection_pairs(cells, vel, spec, params)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(cells), len(cells)))
    _, labels = connected_components(graph, directed=False)
    m_d = dogm.masses.reshape(-1, dogm.masses.shape[-1])[:, D]
    out = []
    for lab in np.unique(labels):
        members = cells[labels == lab]
        if len(members) < params.min_cluster_cells:
            continue
        out.append(_summarize(members, vel[labels == lab], m_d[members], spec))
    out.sort(key=lambda c: c.cells[0])
    return out


def _summarize(members: np.ndarray, vel: np.ndarray, weight: np.ndarray, spec: GridSpec) -> ObjectCluster:
    ix, iy = members % spec.n, members // spec.n
    res = spec.resolution
    cx = spec.origin.x + (ix + 0.5) * res
    cy = spec.origin.y + (iy + 0.5) * res
    w = weight / weight.sum()
    v = w @ vel
    dv = vel - v
    cov = (dv * w[:, None]).T @ dv
    bbox = (float(spec.origin.x + ix.min() * res), float(spec.origin.y + iy.min() * res),
            float(spec.origin.x + (ix.max() + 1) * res), float(spec.origin.y + (iy.max() + 1) * res))
    return ObjectCluster(tuple(int(c) for c in members), (float(cx.mean()), float(cy.mean())),
                         (float(v[0]), float(v[1])),
                         ((float(cov[0, 0]), float(cov[0, 1])), (float(cov[1, 0]), float(cov[1, 1]))),
                         bbox, len(members))


def extract_clusters(dogm, params: Params) -> list[ObjectCluster]:
    return cluster_cells(filter_dynamic_cells(dogm, params), dogm, params)


CLUSTER_CSV_HEADER = ["frame", "cluster_id", "centroid_x", "centroid_y", "bbox_x_min", "bbox_y_min",
                      "bbox_x_max", "bbox_y_max", "v_x", "v_y", "cell_count"]


def write_clusters_csv(path, rows: list[tuple[int, list[ObjectCluster]]]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CLUSTER_CSV_HEADER)
        for frame, clusters in rows:
            for k, c in enumerate(clusters):
                w.writerow([frame, k, *(f"{v:.6f}" for v in (*c.centroid, *c.bbox, *c.velocity)), c.cell_count])
