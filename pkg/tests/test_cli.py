import json

import pytest

from dogm.cli import main
from dogm.render import decode_ppm
from dogm.scenarios import braking


def run(tmp_path, *extra, name="out"):
    out = tmp_path / name
    code = main(["run", "--scenario", "braking", "--frames", "6", "--out", str(out), *extra])
    return code, out


def test_run_writes_artifacts(tmp_path, capsys):
    code, out = run(tmp_path, "--mode", "radar", "--snapshots", "all")
    assert code == 0
    assert len(list((out / "snapshots" / "radar").glob("frame_*.dogm"))) == 6
    assert (out / "snapshots" / "radar" / "tracker_final.trk").is_file()
    assert sorted(p.name for p in (out / "renders" / "radar").iterdir()) == ["frame_0000.ppm", "frame_0005.ppm"]
    lines = (out / "metrics" / "radar_metrics.csv").read_text().splitlines()
    assert lines[0] == "frame,time,v_x_mean,v_ref,combined_std,nees,consistent" and len(lines) == 7
    assert (out / "metrics" / "radar_roc.csv").read_text().startswith("eps_lambda,fpr,tpr")
    summary = json.loads((out / "metrics" / "summary.json").read_text())
    assert summary["modes"]["radar"]["frames"] == 6
    assert summary["seed"] == braking().seed
    diag = json.loads((out / "diagnostics" / "radar_frames.json").read_text())
    assert len(diag) == 6 and diag[-1]["mass_error"] < 1e-9
    assert "radar" in capsys.readouterr().out


def test_both_modes_report_comparison(tmp_path, capsys):
    code, out = run(tmp_path, "--mode", "both", "--render", "none", "--snapshots", "none")
    assert code == 0
    summary = json.loads((out / "metrics" / "summary.json").read_text())
    assert set(summary["modes"]) == {"radar", "lidar"}
    assert "rms_ratio_lidar_over_radar" in summary["comparison"]
    assert "lidar/radar rms ratio" in capsys.readouterr().out


def test_missing_scenario_file_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["run", "--scenario", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "braking", "colour": "blue"}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "colour" in capsys.readouterr().err


def test_unknown_param_exits_2(tmp_path):
    pf = tmp_path / "p.json"
    pf.write_text(json.dumps({"k_dd": 0.5}))
    assert main(["run", "--scenario", "braking", "--params", str(pf), "--out", str(tmp_path / "o")]) == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "braking", "mode": "lidar", "frames": 50, "seed": 3,
                               "render": "none", "grid": {"edge_length": 20.0}}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--frames", "2", "--out", str(out)]) == 0
    summary = json.loads((out / "metrics" / "summary.json").read_text())
    assert summary["modes"]["lidar"]["frames"] == 2 and summary["seed"] == 3


def test_threads_give_identical_snapshots(tmp_path):
    _, one = run(tmp_path, "--threads", "1", "--snapshots", "all", "--render", "none", name="t1")
    _, many = run(tmp_path, "--threads", "8", "--snapshots", "all", "--render", "none", name="t8")
    files = sorted(p.relative_to(one) for p in (one / "snapshots").rglob("*") if p.is_file())
    assert len(files) == 7
    for f in files:
        assert (one / f).read_bytes() == (many / f).read_bytes()


def test_render_and_scenario_commands(tmp_path):
    _, out = run(tmp_path, "--render", "none")
    snap = out / "snapshots" / "radar" / "frame_0005.dogm"
    ppm = tmp_path / "x.ppm"
    assert main(["render", str(snap), str(ppm)]) == 0
    assert decode_ppm(ppm.read_bytes()).shape == (250, 250, 3)
    bad = tmp_path / "bad.dogm"
    bad.write_bytes(b"junk")
    assert main(["render", str(bad), str(ppm)]) == 2
    assert main(["scenario", "crossing", str(tmp_path / "c.json")]) == 0
    assert json.loads((tmp_path / "c.json").read_text())["name"] == "crossing"
    assert main(["scenario", "nonexistent", str(tmp_path / "n.json")]) == 2


def test_parser_rejects_bad_mode():
    with pytest.raises(SystemExit):
        main(["run", "--mode", "sonar"])
