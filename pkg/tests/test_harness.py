import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import tcawrist.harness
from tcawrist.control.loop import TrajectoryLog
from tcawrist.errors import ConfigError, SchemaError
from tcawrist.harness.cli import main
from tcawrist.harness.config import build_model, load_config, parse_config, parse_quantity
from tcawrist.harness.experiments import dominant_frequency, run_experiment, run_series
from tcawrist.harness.metrics import MetricsReport, compare_runs, compute_metrics, tracking_errors
from tcawrist.harness.plots import PLOT_FILES, emit_plots, top_view_figure
from tcawrist.harness.series_io import CSV_HEADER, read_series, series_to_csv, write_series
from tcawrist.tca import TABLE_I_TCA

CONFIGS = Path(tcawrist.harness.__file__).parent / "configs"
deg = math.radians

SHORT_PID = """
[controller]
type = pid
[trajectory]
kind = circle
amplitude = 15 deg
period = 60 s
[sim]
duration = 3 s
seed = 2
[output]
plots = false
"""

SHORT_OPEN = """
[controller]
type = open_loop
[trajectory]
kind = sinusoid
frequency = 1/60 Hz
power_offset = 2.5 0 0 W
power_amplitude = 2.5 0 0 W
phase = -90 0 0 deg
[sim]
duration = 2 s
"""


def series_from(ref_deg, pose_deg):
    n = len(ref_deg)
    return TrajectoryLog(
        t=np.arange(n) * 0.1,
        ref=np.radians(np.asarray(ref_deg, dtype=float)),
        pose=np.radians(np.asarray(pose_deg, dtype=float)),
        lengths=np.full((n, 3), 0.15),
        temperatures=np.full((n, 3), 25.0),
        powers=np.zeros((n, 3)),
    )


# --- config -------------------------------------------------------------------------------------------


def test_quantities_convert_to_si():
    assert parse_quantity("50 mm", "length") == [0.05]
    assert parse_quantity("82 0.1 82 kg*mm^2", "inertia") == pytest.approx([82e-6, 1e-7, 82e-6])
    assert parse_quantity("1/60 Hz", "frequency") == [pytest.approx(1 / 60)]
    assert parse_quantity("23.09 mN/C", "thermal_force") == [pytest.approx(0.02309)]
    with pytest.raises(ConfigError, match="unit"):
        parse_quantity("50 furlongs", "length")
    with pytest.raises(ConfigError, match="expected a length"):
        parse_quantity("50 g", "length")
    with pytest.raises(ConfigError):
        parse_quantity("50", "length")


def test_bundled_configs_parse():
    names = sorted(p.stem for p in CONFIGS.glob("*.ini"))
    assert {"exp1", "exp2", "exp3", "exp4", "circle_nmpc", "circle_pid", "square_nmpc", "square_pid",
            "star_nmpc", "star_pid", "bandwidth_nmpc", "hold_nmpc"} <= set(names)
    for name in names:
        cfg = load_config(CONFIGS / f"{name}.ini")
        assert cfg.name == name


def test_config_values_reach_the_model():
    cfg = load_config(CONFIGS / "exp1.ini")
    m = build_model(cfg)
    assert m.tcas[0] == TABLE_I_TCA
    assert m.geometry.plate_radius == pytest.approx(0.05)
    assert cfg.trajectory.frequency == pytest.approx(1 / 60)
    assert cfg.trajectory.power(15.0)[0] == pytest.approx(2.5)
    assert cfg.trajectory.power(0.0)[0] == pytest.approx(0.0, abs=1e-12)


def test_load_parallel_and_conductivity():
    cfg = parse_config("""
[body]
load_mass = 150 g
[tca.2]
parallel = 2
[controller]
conductivity_override = 47 mW/C
""")
    m = build_model(cfg)
    assert m.body.plate_mass == pytest.approx(0.22)
    assert build_model(cfg, with_load=False).body.plate_mass == pytest.approx(0.07)
    assert m.tcas[1].spring_k == pytest.approx(2 * 238.0)
    assert m.tcas[1].resistance == pytest.approx(10.0)
    assert all(t.conductivity == pytest.approx(0.047) for t in m.tcas)


@pytest.mark.parametrize("text,line,key", [
    ("[geometry]\nplate_radius = 50 furlongs\n", 2, "plate_radius"),
    ("[sim]\nseed = 1\n\n[body]\nplate_mass = 70 mm\n", 5, "plate_mass"),
    ("[controller]\ntype = fuzzy\n", 2, "type"),
    ("[trajectory]\nkind = circle\nperiod = -3 s\n", 3, "period"),
    ("[sim]\nplant_dt = 5 ms\n", 2, "plant_dt"),
    ("[sim]\nbogus = 1\n", 2, "bogus"),
    ("[controller]\ncontrol_horizon = 12\n", 1, None),
])
def test_config_errors_name_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "bad.ini")
    msg = str(info.value)
    assert f"bad.ini:{line}" in msg
    if key:
        assert key in msg


def test_unknown_section_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[plant]\nx = 1\n")
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.ini")
    with pytest.raises(ConfigError):
        parse_config("[controller]\ntype = pid\n[trajectory]\nkind = sinusoid\n")


# --- metrics ------------------------------------------------------------------------------------------


def test_metrics_of_exact_tracking_are_zero():
    m = compute_metrics(series_from([[10, 20]] * 3, [[10, 20]] * 3))
    assert m == MetricsReport(samples=3)


def test_metrics_hand_values():
    m = compute_metrics(series_from([[10, 50], [10, 50]], [[11, 50], [9, 50]]))
    assert (m.rmse_theta, m.mae_theta, m.me_theta) == pytest.approx((1.0, 1.0, 1.0), abs=1e-12)
    m = compute_metrics(series_from([[10, 0], [10, 0], [10, 0], [10, 0]], [[13, 0], [10, 4], [10, 0], [10, 0]]))
    assert m.rmse_theta == pytest.approx(1.5, abs=1e-12)
    assert m.mae_theta == pytest.approx(0.75, abs=1e-12)
    assert m.me_theta == pytest.approx(3.0, abs=1e-12)
    assert m.rmse_phi == pytest.approx(2.0, abs=1e-12) and m.me_phi == pytest.approx(4.0, abs=1e-12)


def test_metrics_wrap_and_gate():
    e_th, e_ph = tracking_errors([deg(10)], [deg(179)], [deg(10)], [deg(-179)])
    assert e_ph[0] == pytest.approx(2.0, abs=1e-9)
    _, e_ph = tracking_errors([deg(1)], [0.0], [deg(10)], [deg(90)])
    assert e_ph[0] == 0.0


def test_metrics_skip_rows_without_reference():
    s = series_from([[math.nan, math.nan], [10, 0]], [[50, 0], [12, 0]])
    m = compute_metrics(s)
    assert m.samples == 1 and m.rmse_theta == pytest.approx(2.0)
    assert compute_metrics(TrajectoryLog.empty()) == MetricsReport()


def test_compare_runs():
    base = MetricsReport(0.59, 0.5, 1.0, 1.20, 1.0, 2.0)
    cand = MetricsReport(0.48, 0.5, 0.0, 1.02, 1.0, 2.0)
    imp = compare_runs(cand, base)
    assert imp["rmse_theta"] == pytest.approx(18.6, abs=0.05)
    assert imp["rmse_phi"] == pytest.approx(15.0, abs=1e-9)
    assert imp["me_theta"] == pytest.approx(100.0)
    assert all(v == 0 for v in compare_runs(base, base).values())
    assert compare_runs(base, MetricsReport())["rmse_theta"] is None


# --- CSV and plots ---------------------------------------------------------------------------------------


def test_csv_roundtrip(tmp_path):
    s = run_series(parse_config(SHORT_PID))
    path = write_series(s, tmp_path / "s.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[0] == "t,theta_ref_deg,phi_ref_deg,theta_deg,phi_deg,L1_mm,L2_mm,L3_mm,T1_C,T2_C,T3_C,P1_W,P2_W,P3_W"
    back = read_series(path)
    assert len(back) == len(s)
    assert np.allclose(back.pose, s.pose, atol=1e-8)
    assert np.allclose(back.lengths, s.lengths, atol=1e-9)
    assert series_to_csv(back) == path.read_text()


def test_csv_schema_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("t,theta_deg\n0,1\n")
    with pytest.raises(SchemaError, match="missing columns"):
        read_series(p)
    p.write_text(",".join(CSV_HEADER) + "\n" + "0,1\n")
    with pytest.raises(SchemaError, match=":2"):
        read_series(p)
    p.write_text("")
    with pytest.raises(SchemaError):
        read_series(p)


def test_csv_keeps_nan_references(tmp_path):
    s = run_series(parse_config(SHORT_OPEN))
    text = series_to_csv(s)
    assert ",nan,nan," in text.splitlines()[1]
    assert np.all(np.isnan(read_series(write_series(s, tmp_path / "o.csv")).ref))


def test_plots_are_deterministic(tmp_path):
    s = run_series(parse_config(SHORT_PID))
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = emit_plots(s, tmp_path / "a")
    b = emit_plots(s, tmp_path / "b")
    assert [p.name for p in a] == list(PLOT_FILES)
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
        assert pa.read_bytes().lstrip().startswith(b"<?xml")


def test_empty_series_still_plots(tmp_path):
    for p in emit_plots(TrajectoryLog.empty(), tmp_path):
        text = p.read_text()
        assert "<svg" in text and "</svg>" in text


def test_circle_top_view_is_a_closed_loop():
    t = np.arange(0, 60.0, 0.1)
    ref = np.column_stack([np.full_like(t, deg(15)), 2 * np.pi * t / 60])
    s = TrajectoryLog(t, ref, ref.copy(), np.full((len(t), 3), 0.15), np.full((len(t), 3), 25.0), np.zeros((len(t), 3)))
    line = top_view_figure(s).axes[0].lines[1]
    x, y = line.get_xdata(), line.get_ydata()
    assert (x.min(), x.max(), y.min(), y.max()) == pytest.approx((-15, 15, -15, 15), abs=0.05)
    assert math.hypot(x[-1] - x[0], y[-1] - y[0]) < 0.2


# --- experiments and CLI -----------------------------------------------------------------------------------------


def test_run_directory_layout(tmp_path):
    cfg = parse_config(SHORT_PID.replace("plots = false", "plots = true"))
    res = run_experiment(cfg, out_dir=tmp_path / "run")
    files = {p.name for p in res.directory.iterdir()}
    assert {"config.ini", "series.csv", "metrics.json", *PLOT_FILES} <= files
    doc = json.loads((res.directory / "metrics.json").read_text())
    assert doc["samples"] == 30 and doc["diverged"] is False and doc["controller"] == "pid"
    assert (res.directory / "config.ini").read_text() == cfg.source_text


def test_same_seed_gives_identical_csv(tmp_path):
    cfg_text = SHORT_PID.replace("seed = 2", "seed = 2\nnoise = 0.2 deg")
    a = run_experiment(parse_config(cfg_text), out_dir=tmp_path / "a")
    b = run_experiment(parse_config(cfg_text), out_dir=tmp_path / "b")
    c = run_experiment(parse_config(cfg_text), out_dir=tmp_path / "c", seed=3)
    assert (a.directory / "series.csv").read_bytes() == (b.directory / "series.csv").read_bytes()
    assert (a.directory / "series.csv").read_bytes() != (c.directory / "series.csv").read_bytes()


def test_zero_duration_run(tmp_path):
    res = run_experiment(parse_config(SHORT_PID.replace("3 s", "0 s")), out_dir=tmp_path / "z")
    assert len(res.series) == 0 and res.metrics == MetricsReport()
    assert (res.directory / "series.csv").read_text() == ",".join(CSV_HEADER) + "\n"


def test_dominant_frequency():
    t = np.arange(0, 240, 0.1)
    assert dominant_frequency(np.sin(2 * np.pi * t / 60), 0.1) == pytest.approx(1 / 60, abs=1e-9)
    assert math.isnan(dominant_frequency([1.0, 2.0], 0.1))


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_success_paths(tmp_path, capsys):
    cfg = write(tmp_path, "c.ini", SHORT_PID)
    assert main(["track", cfg, "--out", str(tmp_path / "a")]) == 0
    assert "30 samples" in capsys.readouterr().out
    assert main(["--quiet", "track", cfg, "--out", str(tmp_path / "b"), "--seed", "9"]) == 0
    assert capsys.readouterr().out == ""
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b"), "--out", str(tmp_path / "cmp")]) == 0
    doc = json.loads((tmp_path / "cmp" / "compare.json").read_text())
    imp = doc["improvement_percent"]
    assert imp["rmse_theta"] == 0 and imp["rmse_phi"] is None  # direction gated, baseline zero
    assert "n/a" in capsys.readouterr().out
    assert main(["metrics", str(tmp_path / "a" / "series.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["samples"] == 30
    assert main(["plot", str(tmp_path / "a"), "--out", str(tmp_path / "figs")]) == 0
    assert sorted(p.name for p in (tmp_path / "figs").iterdir()) == sorted(PLOT_FILES)
    op = write(tmp_path, "o.ini", SHORT_OPEN)
    assert main(["simulate", op, "--out", str(tmp_path / "o")]) == 0


def test_cli_config_errors(tmp_path, capsys):
    assert main(["track", write(tmp_path, "bad.ini", "[sim]\nduration = 3 parsecs\n")]) == 2
    assert "bad.ini:2" in capsys.readouterr().err
    assert main(["simulate", write(tmp_path, "pid.ini", SHORT_PID)]) == 2
    assert main(["track", write(tmp_path, "open.ini", SHORT_OPEN)]) == 2
    assert main(["track", str(tmp_path / "missing.ini")]) == 2
    bad_csv = write(tmp_path, "bad.csv", "a,b\n1,2\n")
    assert main(["metrics", bad_csv]) == 2


def test_cli_divergence_exit_code(tmp_path):
    text = SHORT_OPEN.replace("power_offset = 2.5 0 0 W", "power_offset = 1e306 0 0 W")
    out = tmp_path / "div"
    assert main(["simulate", write(tmp_path, "d.ini", text), "--out", str(out)]) == 3
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["diverged"] is True and doc["divergence_tick"] == 0


def test_cli_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["track", write(tmp_path, "c.ini", SHORT_PID), "--out", str(blocker / "sub")]) == 4
    assert main(["metrics", str(tmp_path / "missing.csv")]) == 4


def test_cli_usage_errors():
    with pytest.raises(SystemExit) as info:
        main(["track"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["track", "x.ini", "--seed", "-1"])


def test_console_script_runs(tmp_path):
    cfg = write(tmp_path, "c.ini", SHORT_PID.replace("3 s", "1 s"))
    proc = subprocess.run([sys.executable, "-m", "tcawrist.harness.cli", "track", cfg, "--out", str(tmp_path / "r")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "10 samples" in proc.stdout
