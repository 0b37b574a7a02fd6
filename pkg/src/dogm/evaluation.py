"""Velocity, consistency and classification metrics on recorded DOGM frames.

Undefined results are reported as ``nan``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from .grid import S
from .sensor_sim import CellLabel

NEES_BOUND_95 = float(chi2.ppf(0.95, df=1))


@dataclass(frozen=True)
class RegionStats:
    mean_vx: float
    combined_var: float
    n_cells: int
    n_excluded: int


def _region_cells(dogm, l_dyn: np.ndarray):
    mom = dogm.moments.reshape(-1, dogm.moments.shape[-1])
    mask = np.asarray(l_dyn, dtype=bool).reshape(-1)
    labelled = np.flatnonzero(mask)
    ok = labelled[~np.isnan(mom[labelled, 0])]
    return mom[ok], len(labelled) - len(ok)


def region_mean_velocity(dogm, l_dyn: np.ndarray) -> float:
    """Unweighted mean ``v_x`` over labelled cells that carry velocity moments."""
    mom, _ = _region_cells(dogm, l_dyn)
    if len(mom) == 0:
        return math.nan
    return float(mom[:, 0].mean())


def combined_variance(means, variances) -> float:
    """Variance of an equal-weight mixture of per-cell Gaussians."""
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if means.size == 0:
        return math.nan
    mean = means.mean()
    return float(np.mean(variances + means * means) - mean * mean)


def region_combined_variance(dogm, l_dyn: np.ndarray) -> float:
    mom, _ = _region_cells(dogm, l_dyn)
    if len(mom) == 0:
        return math.nan
    return combined_variance(mom[:, 0], mom[:, 2])


def region_stats(dogm, l_dyn: np.ndarray) -> RegionStats:
    mom, excluded = _region_cells(dogm, l_dyn)
    if len(mom) == 0:
        return RegionStats(math.nan, math.nan, 0, excluded)
    return RegionStats(float(mom[:, 0].mean()), combined_variance(mom[:, 0], mom[:, 2]), len(mom), excluded)


def nees(v_est: float, v_ref: float, var: float, bound: float = NEES_BOUND_95) -> tuple[float, bool]:
    """Normalized estimation error squared and whether it lies within ``bound``.

    Zero variance gives ``inf`` unless the error is exactly zero, which is
    taken as consistent with ``eta = 0``.
    """
    if math.isnan(v_est) or math.isnan(var):
        return math.nan, False
    err2 = (v_est - v_ref) ** 2
    if var <= 0:
        if err2 == 0:
            return 0.0, True
        return math.inf, False
    eta = err2 / var
    return eta, eta <= bound


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.tpr) <= 0) and np.all(np.diff(self.fpr) <= 0))


def static_scores(masses: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``m_S`` of cells labelled static and of cells labelled dynamic."""
    m_s = np.asarray(masses)[..., S].reshape(-1)
    lab = np.asarray(labels).reshape(-1)
    return m_s[lab == CellLabel.STATIC], m_s[lab == CellLabel.DYNAMIC]


def roc_from_scores(pos, neg, thresholds) -> RocCurve:
    """ROC of the rule ``m_S >= threshold`` given scores of static (pos) and dynamic (neg) cells."""
    thr = np.sort(np.asarray(thresholds, dtype=float))
    pos = np.sort(np.asarray(pos, dtype=float))
    neg = np.sort(np.asarray(neg, dtype=float))
    if len(pos) == 0 or len(neg) == 0:
        nan = np.full(len(thr), np.nan)
        return RocCurve(thr, nan, nan.copy(), math.nan)
    # fraction of scores >= threshold
    tpr = 1.0 - np.searchsorted(pos, thr, side="left") / len(pos)
    fpr = 1.0 - np.searchsorted(neg, thr, side="left") / len(neg)
    return RocCurve(thr, fpr, tpr, auc_trapezoid(fpr, tpr))


def roc_curve(dogm_frames: Sequence, truth_frames: Sequence, thresholds) -> RocCurve:
    """Static-vs-dynamic ROC pooled over frames; static cells are the positive class.

    A cell is called static when ``m_S >= threshold``.  Only cells labelled
    static or dynamic are evaluated.
    """
    pos, neg = [np.zeros(0)], [np.zeros(0)]
    for dogm, truth in zip(dogm_frames, truth_frames):
        masses = dogm.masses if hasattr(dogm, "masses") else dogm
        labels = truth.labels if hasattr(truth, "labels") else truth
        p, q = static_scores(masses, labels)
        pos.append(p)
        neg.append(q)
    return roc_from_scores(np.concatenate(pos), np.concatenate(neg), thresholds)


def auc_trapezoid(fpr, tpr) -> float:
    x = np.r_[0.0, np.asarray(fpr, float), 1.0]
    y = np.r_[0.0, np.asarray(tpr, float), 1.0]
    order = np.lexsort((y, x))
    return float(np.trapezoid(y[order], x[order]))


@dataclass(frozen=True)
class MseResult:
    mse: float
    rms: float
    n: int


def velocity_mse(estimates, references) -> MseResult:
    """Mean squared error over frames where both series are defined."""
    e = np.asarray(estimates, dtype=float)
    r = np.asarray(references, dtype=float)
    if e.shape != r.shape:
        raise ValueError("series must be aligned")
    ok = ~(np.isnan(e) | np.isnan(r))
    if not ok.any():
        return MseResult(math.nan, math.nan, 0)
    mse = float(np.mean((e[ok] - r[ok]) ** 2))
    return MseResult(mse, math.sqrt(mse), int(ok.sum()))


def error_ratio(worse: float, better: float) -> float:
    if better == 0 or math.isnan(better) or math.isnan(worse):
        return math.nan
    return worse / better


# ---------------------------------------------------------------- export

METRICS_HEADER = ["frame", "time", "v_x_mean", "v_ref", "combined_std", "nees", "consistent"]


def write_metrics_csv(path, rows: Sequence[dict]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_HEADER)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in METRICS_HEADER})


def write_roc_csv(path, curve: RocCurve) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps_lambda", "fpr", "tpr"])
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow([f"{t:.6f}", f"{f:.6f}", f"{p:.6f}"])


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_summary_json(path, summary: dict) -> None:
    clean = {k: (_jsonable(v) if not isinstance(v, dict) else {kk: _jsonable(vv) for kk, vv in v.items()})
             for k, v in summary.items()}
    Path(path).write_text(json.dumps(clean, indent=2, sort_keys=True), encoding="utf-8")
