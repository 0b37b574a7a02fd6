import json
import math
import re
from pathlib import Path
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dogm import evaluation as ev
from dogm.evidential import Dogm
from dogm.grid import GridSpec, Pose
from dogm.sensor_sim import CellLabel

REFERENCE_DOC = Path(__file__).resolve().parents[1] / "paper.md"


def strip_dogm(vx, var):
    spec = GridSpec(edge_length=len(vx) * 1.0, resolution=1.0, origin=Pose(0.0, 0.0))
    dogm = Dogm.initial(spec)
    row = dogm.moments[0]
    row[:, 0] = vx
    row[:, 2] = var
    mask = np.zeros(spec.shape, bool)
    mask[0] = True
    return dogm, mask


def test_bound_matches_independent_quantile():
    z = NormalDist().inv_cdf(0.975)
    assert ev.NEES_BOUND_95 == pytest.approx(z * z, rel=1e-12)
    assert ev.NEES_BOUND_95 == pytest.approx(3.841, abs=5e-4)


def test_region_mean_examples():
    dogm, mask = strip_dogm([-5.56] * 4, [0.1] * 4)
    assert ev.region_mean_velocity(dogm, mask) == pytest.approx(-5.56)
    dogm, mask = strip_dogm([-5.0, -6.0], [0.0, 0.0])
    assert ev.region_mean_velocity(dogm, mask) == pytest.approx(-5.5)
    dogm, mask = strip_dogm([np.nan] * 3, [np.nan] * 3)
    assert math.isnan(ev.region_mean_velocity(dogm, mask))
    stats = ev.region_stats(dogm, mask)
    assert math.isnan(stats.mean_vx) and stats.n_excluded == 3


def test_cells_without_moments_are_excluded_and_counted():
    dogm, mask = strip_dogm([-5.0, np.nan, -6.0], [0.0, np.nan, 0.0])
    stats = ev.region_stats(dogm, mask)
    assert stats.mean_vx == pytest.approx(-5.5)
    assert (stats.n_cells, stats.n_excluded) == (2, 1)


def test_combined_variance_examples():
    assert ev.combined_variance([3.0], [0.7]) == pytest.approx(0.7)
    dogm, mask = strip_dogm([-5.0, -6.0], [0.0, 0.0])
    assert ev.region_combined_variance(dogm, mask) == pytest.approx(0.25)
    assert ev.combined_variance([2.0] * 5, [0.3] * 5) == pytest.approx(0.3)
    assert math.isnan(ev.combined_variance([], []))


def test_combined_variance_matches_sampled_mixture():
    rng = np.random.default_rng(11)
    means = rng.normal(-5, 1.0, 12)
    var = rng.uniform(0.05, 1.0, 12)
    n = 1_000_000
    comp = rng.integers(0, len(means), n)
    draws = rng.normal(means[comp], np.sqrt(var[comp]))
    assert ev.combined_variance(means, var) == pytest.approx(draws.var(), rel=0.01)


@given(st.lists(st.tuples(st.floats(-30, 30), st.floats(0, 10)), min_size=1, max_size=40))
def test_combined_variance_is_nonnegative(cells):
    means, var = zip(*cells)
    assert ev.combined_variance(means, var) >= -1e-9


def test_nees_examples():
    assert ev.nees(-5.0, -5.0, 0.3) == (0.0, True)
    eta, ok = ev.nees(1.0, 0.0, 0.25)
    assert eta == pytest.approx(4.0) and not ok
    assert ev.nees(2.0, 2.0, 0.0) == (0.0, True)
    assert ev.nees(2.0, 1.0, 0.0) == (math.inf, False)
    eta, ok = ev.nees(math.nan, 1.0, 1.0)
    assert math.isnan(eta) and not ok


@given(st.floats(-5, 5), st.floats(0.01, 5), st.floats(0.1, 10))
def test_nees_scale_invariance(err, var, c):
    a, _ = ev.nees(err, 0.0, var)
    b, _ = ev.nees(c * err, 0.0, c * c * var)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


THRESHOLDS = [k / 20 for k in range(21)] + [1.05]


def test_roc_degenerate_thresholds_and_separable_auc():
    pos = np.array([0.8, 0.9, 0.95, 1.0])
    neg = np.array([0.0, 0.1, 0.2])
    curve = ev.roc_from_scores(pos, neg, THRESHOLDS)
    assert (curve.tpr[0], curve.fpr[0]) == (1.0, 1.0)
    assert (curve.tpr[-1], curve.fpr[-1]) == (0.0, 0.0)
    assert curve.auc == pytest.approx(1.0)
    assert curve.is_monotone()


def test_roc_of_identical_scores_is_diagonal():
    s = np.random.default_rng(0).random(500)
    curve = ev.roc_from_scores(s, s, np.linspace(0, 1.05, 200))
    assert curve.auc == pytest.approx(0.5, abs=0.01)


def test_roc_without_evaluated_cells_is_undefined():
    curve = ev.roc_from_scores([], [0.5], THRESHOLDS)
    assert math.isnan(curve.auc) and np.all(np.isnan(curve.tpr))


@given(st.integers(0, 2**31))
def test_roc_is_monotone(seed):
    rng = np.random.default_rng(seed)
    curve = ev.roc_from_scores(rng.beta(2, 1, 300), rng.beta(1, 2, 200), rng.random(25))
    assert curve.is_monotone()
    assert 0.0 <= curve.auc <= 1.0


def test_roc_curve_uses_labelled_cells_only():
    spec = GridSpec(edge_length=3.0, resolution=1.0, origin=Pose(0, 0))
    dogm = Dogm.initial(spec)
    labels = np.full(spec.shape, CellLabel.FREE, dtype=np.int8)
    labels[0, 0], labels[0, 1] = CellLabel.STATIC, CellLabel.DYNAMIC
    dogm.masses[0, 0] = [0, 0.9, 0, 0, 0.1]
    dogm.masses[0, 1] = [0, 0.1, 0.8, 0, 0.1]
    dogm.masses[1, 1] = [0.0, 1.0, 0, 0, 0]  # free-labelled, ignored
    curve = ev.roc_curve([dogm], [labels], THRESHOLDS)
    k = THRESHOLDS.index(0.5)
    assert (curve.tpr[k], curve.fpr[k]) == (1.0, 0.0)
    assert curve.auc == pytest.approx(1.0)


def test_mse_examples():
    a = np.linspace(-5, 0, 30)
    assert ev.velocity_mse(a, a).mse == 0.0
    r = ev.velocity_mse(a + 0.5, a)
    assert r.mse == pytest.approx(0.25) and r.rms == pytest.approx(0.5) and r.n == 30
    est = np.array([np.nan, 1.0, 2.0, np.nan])
    ref = np.array([0.0, 1.5, np.nan, 1.0])
    assert ev.velocity_mse(est, ref).n == 1
    assert math.isnan(ev.velocity_mse([np.nan], [1.0]).mse)
    with pytest.raises(ValueError):
        ev.velocity_mse([1.0, 2.0], [1.0])


def test_reported_error_ratio():
    radar, lidar, ratio = 0.138, 1.350, 9.783
    text = REFERENCE_DOC.read_text(encoding="utf-8")
    for value in ("0.138", "1.350", "9.783"):
        assert re.search(r"\\num\{" + re.escape(value) + r"\}", text)
    assert ev.error_ratio(lidar, radar) == pytest.approx(ratio, abs=5e-4)
    assert math.isnan(ev.error_ratio(1.0, 0.0))


def test_exports(tmp_path):
    rows = [dict(frame=0, time="0.000", v_x_mean="nan", v_ref="-5.556", combined_std="nan", nees="nan",
                 consistent=0, extra=1)]
    ev.write_metrics_csv(tmp_path / "m.csv", rows)
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(ev.METRICS_HEADER)
    curve = ev.roc_from_scores([0.9], [0.1], [0.0, 0.5, 1.05])
    ev.write_roc_csv(tmp_path / "r.csv", curve)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "eps_lambda,fpr,tpr"
    ev.write_summary_json(tmp_path / "s.json", dict(mse=math.nan, radar=dict(auc=1.0, rms=math.inf)))
    assert json.loads((tmp_path / "s.json").read_text()) == dict(mse=None, radar=dict(auc=1.0, rms=None))
