import json

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from oracles import min_ade_loop, min_fde_loop
from tactictraj.errors import ArgumentError
from tactictraj.metrics import (
    HORIZON_SECONDS,
    EvalReport,
    build_report,
    constant_velocity,
    horizon_frames,
    min_ade,
    min_fde,
    topk_accuracy,
)
from tactictraj.numeric import SeededRng, gaussian, init_parameters
from tactictraj.tactic_head import TacticHead, topk_extract


@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 20))
def test_batched_metrics_match_loops(seed, S, h):
    pred = gaussian(SeededRng(seed, ("p",)), (S, 3, 20, 2)).numpy()
    truth = gaussian(SeededRng(seed, ("t",)), (3, 20, 2)).numpy()
    assert float(min_ade(pred, truth, h)) == pytest.approx(min_ade_loop(pred, truth, h), abs=1e-12)
    assert float(min_fde(pred, truth, h)) == pytest.approx(min_fde_loop(pred, truth, h), abs=1e-12)


def test_truth_among_samples_gives_zero():
    truth = gaussian(SeededRng(1), (11, 20, 2))
    pred = torch.cat([gaussian(SeededRng(2), (19, 11, 20, 2)), truth[None]])
    assert float(min_ade(pred, truth, 20)) == 0.0 and float(min_fde(pred, truth, 20)) == 0.0


def test_constant_offset_is_five():
    truth = gaussian(SeededRng(3), (11, 20, 2))
    pred = (truth + torch.tensor([3.0, 4.0], dtype=torch.float64))[None]
    for h in (5, 10, 15, 20):
        assert float(min_ade(pred, truth, h)) == 5.0
        assert float(min_fde(pred, truth, h)) == 5.0


def test_final_frame_error():
    steps = torch.arange(1, 11, dtype=torch.float64)[:, None]
    truth = (steps * torch.tensor([1.0, 0.5], dtype=torch.float64))[None]
    pred = truth.clone()[None]
    pred[0, 0, -1, 0] += 1.0
    assert float(min_fde(pred, truth, 10)) == pytest.approx(1.0, abs=1e-14)
    assert float(min_ade(pred, truth, 10)) == pytest.approx(1 / 10, abs=1e-14)


def test_min_is_no_worse_than_any_sample():
    pred = gaussian(SeededRng(4), (20, 11, 20, 2))
    truth = gaussian(SeededRng(5), (11, 20, 2))
    best = float(min_ade(pred, truth, 20))
    assert all(best <= float(min_ade(pred[s : s + 1], truth, 20)) for s in range(20))


def test_horizon_errors():
    with pytest.raises(ArgumentError):
        min_ade(torch.zeros(1, 2, 20, 2), torch.zeros(2, 20, 2), 21)
    with pytest.raises(ArgumentError):
        min_fde(torch.zeros(1, 2, 20, 2), torch.zeros(2, 20, 2), 0)


def test_horizons_nest_at_five_hertz():
    assert [horizon_frames(s, 5) for s in HORIZON_SECONDS] == [5, 10, 15, 20]
    pred = gaussian(SeededRng(6), (3, 2, 20, 2))
    truth = gaussian(SeededRng(7), (2, 20, 2))
    assert float(min_ade(pred, truth, 5)) == float(min_ade(pred[..., :5, :], truth[:, :5], 5))


@given(st.integers(0, 10_000), st.floats(-100, 100), st.floats(-100, 100))
def test_translation_invariance(seed, dx, dy):
    pred = gaussian(SeededRng(seed, ("p",)), (4, 3, 20, 2))
    truth = gaussian(SeededRng(seed, ("t",)), (3, 20, 2))
    shift = torch.tensor([dx, dy], dtype=torch.float64)
    assert float(min_ade(pred + shift, truth + shift, 20)) == pytest.approx(float(min_ade(pred, truth, 20)), abs=1e-9)
    assert float(min_fde(pred + shift, truth + shift, 20)) == pytest.approx(float(min_fde(pred, truth, 20)), abs=1e-9)


def test_topk_counting_example():
    ranked = np.array([[4, 0, 1, 2, 3, 5, 6], [0, 1, 4, 2, 3, 5, 6], [0, 1, 2, 3, 5, 6, 4]])
    truths = np.array([4, 4, 4])  # ranks 1, 3, 7
    assert topk_accuracy(ranked, truths, 1) == pytest.approx(1 / 3)
    assert topk_accuracy(ranked, truths, 3) == pytest.approx(2 / 3)
    assert topk_accuracy(ranked, truths, 5) == pytest.approx(2 / 3)
    assert topk_accuracy(ranked, truths, 7) == 1.0


def test_topk_errors():
    with pytest.raises(ArgumentError):
        topk_accuracy(np.zeros((0, 3)), np.zeros(0), 1)
    with pytest.raises(ArgumentError):
        topk_accuracy(np.zeros((2, 3)), np.zeros(2), 4)


@given(st.integers(0, 10_000))
def test_topk_monotone_and_exhaustive(seed):
    rng = SeededRng(seed)
    ranked = np.stack([rng.child(i).permutation(16) for i in range(30)])
    truths = rng.child("y").integers(0, 16, size=30)
    accs = [topk_accuracy(ranked, truths, k) for k in range(1, 17)]
    assert all(b >= a for a, b in zip(accs, accs[1:]))
    assert accs[-1] == 1.0


def test_random_head_top1_near_chance():
    head = init_parameters(TacticHead(8, 8, 16, 2), SeededRng(8))
    w = gaussian(SeededRng(9), (2000, 2, 6, 8))
    with torch.no_grad():
        labels, _ = topk_extract(head(w), torch.eye(16, dtype=torch.float64), 5)
    truths = SeededRng(10).integers(0, 16, size=(2000, 2))
    assert abs(topk_accuracy(labels.numpy(), truths, 1) - 1 / 16) <= 0.02


def test_constant_velocity_extrapolates():
    obs = np.array([[[0.0, 0.0], [1.0, 2.0]]])
    assert constant_velocity(obs, 3).tolist() == [[[2.0, 4.0], [3.0, 6.0], [4.0, 8.0]]]


def test_report_round_trip_and_exact_horizons():
    truth = gaussian(SeededRng(11), (4, 11, 20, 2))
    pred = truth[:, None] + 0.1 * gaussian(SeededRng(12), (4, 3, 11, 20, 2))
    ranked = np.tile(np.arange(16), (4, 2, 1))
    report = build_report(pred, truth, ranked, np.zeros((4, 2), dtype=int), 5, {"seed": 1})
    assert sorted(report.ade) == [1.0, 2.0, 3.0, 4.0] and sorted(report.fde) == [1.0, 2.0, 3.0, 4.0]
    assert report.topk == {1: 1.0, 2: 1.0, 3: 1.0, 5: 1.0} and report.n_scenes == 4
    again = EvalReport.from_dict(json.loads(report.to_json()))
    assert again == report
    lines = report.to_csv().splitlines()
    assert len(lines) == 5 and lines[0].startswith("seconds,minADE,minFDE")
