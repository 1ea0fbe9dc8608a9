import numpy as np
import pytest

from tactictraj.numeric import SeededRng
from tactictraj.plot import coordinates_csv, plot_emit, read_coordinates_csv, render_svg
from tactictraj.scenes import DatasetConfig
from tactictraj.synth import synth_generate


@pytest.fixture
def scene():
    return synth_generate(SeededRng(4), DatasetConfig(), 1)[0]


def test_empty_predictions_draw_observed_only(tmp_path, scene):
    svg_path, csv_path = plot_emit(scene, np.zeros((0, 11, 20, 2)), tmp_path / "a.svg")
    svg = svg_path.read_text()
    assert svg.count("<polyline") == scene.n_agents
    assert "stroke-dasharray" not in svg
    assert "<rect" in svg
    obs, pred = read_coordinates_csv(csv_path)
    assert pred is None and np.array_equal(obs, scene.observed)


def test_predictions_are_dashed_and_team_coloured(scene):
    preds = SeededRng(5).normal((2, 11, 20, 2))
    svg = render_svg(scene, preds)
    assert svg.count("stroke-dasharray") == 2 * 11
    assert "#1f77b4" in svg and "#d62728" in svg and "#ff7f0e" in svg


def test_csv_round_trip_is_exact(tmp_path, scene):
    preds = SeededRng(6).normal((3, 11, 20, 2)) * np.pi
    _, csv_path = plot_emit(scene, preds, tmp_path / "b.svg")
    obs, pred = read_coordinates_csv(csv_path)
    assert np.array_equal(obs, scene.observed) and np.array_equal(pred, preds)


def test_output_bytes_are_deterministic(tmp_path, scene):
    preds = SeededRng(7).normal((2, 11, 20, 2))
    a = plot_emit(scene, preds, tmp_path / "a.svg")
    b = plot_emit(scene, preds.copy(), tmp_path / "b.svg")
    assert a[0].read_bytes() == b[0].read_bytes() and a[1].read_bytes() == b[1].read_bytes()
    assert coordinates_csv(scene, preds) == a[1].read_text()


def test_unwritable_path_raises_os_error(tmp_path, scene):
    with pytest.raises(OSError):
        plot_emit(scene, None, tmp_path / "missing" / "dir" / "c.svg")
