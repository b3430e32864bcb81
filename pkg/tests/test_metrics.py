import numpy as np
import pytest

from demosync.errors import IoError
from demosync.geometry import Trajectory1D
from demosync.metrics import ErrorStats, emit_alignment_plot, emit_error_plot, svg_paths

from _tracks import sweep_pair


def test_alignment_plot_right_panel_coincides(tmp_path):
    delay = 0.137
    f, g = sweep_pair(delay, noise=0.0)
    path = tmp_path / "a.svg"
    emit_alignment_plot(f, g, delay, path)
    curves = svg_paths(path)
    assert len(curves) == 4
    rf, rg = (np.array(c) for c in curves[2:])
    # compare g's points against f's polyline at the same pixel x
    y_f = np.interp(rg[:, 0], rf[:, 0], rf[:, 1])
    inside = (rg[:, 0] >= rf[0, 0]) & (rg[:, 0] <= rf[-1, 0])
    assert np.max(np.abs(y_f[inside] - rg[inside, 1])) < 1.0
    lf, lg = (np.array(c) for c in curves[:2])
    y_raw = np.interp(lg[:, 0], lf[:, 0], lf[:, 1])
    assert np.max(np.abs(y_raw - lg[:, 1])) > 10


def test_plots_are_deterministic(tmp_path):
    f, g = sweep_pair(0.1, noise=0.0, duration=5.0)
    emit_alignment_plot(f, g, 0.1, tmp_path / "a.svg")
    emit_alignment_plot(f, g, 0.1, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_plot_errors(tmp_path):
    short = Trajectory1D([0.0], [1.0])
    f, _ = sweep_pair(0.0)
    with pytest.raises(IoError):
        emit_alignment_plot(short, f, 0.0, tmp_path / "x.svg")
    with pytest.raises(IoError):
        emit_alignment_plot(f, f, 0.0, tmp_path / "missing" / "x.svg")


def test_error_plot(tmp_path):
    t = np.linspace(0, 1, 20)
    est = np.stack([t, 2 * t, 3 * t], axis=1)
    emit_error_plot(t, est, est + 1, tmp_path / "e.svg")
    assert len(svg_paths(tmp_path / "e.svg")) == 6


def test_error_stats_csv():
    s = ErrorStats((1.0, 2.0, 3.0), (4.0, 5.0, 6.0), 0.5, 0.7, 0.1, 0.05, 300)
    header, row = s.to_csv().strip().split("\n")
    assert header.split(",")[0] == "pos_mean_x_mm"
    assert row.split(",")[-1] == "300"
