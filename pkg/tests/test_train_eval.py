import dataclasses
import json

import numpy as np
import pytest
import torch

import tactictraj.train as train_mod
from tactictraj.checkpoint import BLOB, MANIFEST, check_compatible, load_checkpoint, read_manifest, save_checkpoint
from tactictraj.config import TrainConfig
from tactictraj.errors import CheckpointVersionError, DataError, NumericAbort
from tactictraj.evaluate import evaluate, predict, predictions_to_jsonl
from tactictraj.numeric import SeededRng
from tactictraj.scenes import DatasetConfig, TacticVocabulary
from tactictraj.synth import synth_generate
from tactictraj.train import LOG_NAME, model_from_checkpoint, train

DATASET = DatasetConfig()
VOCAB = TacticVocabulary.default()


@pytest.fixture(scope="module")
def scenes():
    return synth_generate(SeededRng(21), DATASET, 12)


def short(**kw):
    return TrainConfig(**{"seed": 4, "epochs": 2, "tactic_epochs": 1, "joint_epochs": 1, "batch_size": 5, **kw})


def test_checkpoint_round_trip_is_bit_exact(tmp_path, scenes, tiny_model_config):
    res = train(scenes, DATASET, VOCAB, tiny_model_config, short(), out_dir=tmp_path / "ck")
    ckpt = load_checkpoint(tmp_path / "ck")
    state = res.model.state_dict()
    assert sorted(ckpt.params) == sorted(state)
    for name, t in state.items():
        assert torch.equal(ckpt.params[name], t), name
    manifest = read_manifest(tmp_path / "ck")
    offsets = sorted((e["offset"], e["nbytes"]) for e in manifest["index"])
    assert offsets[0][0] == 0 and all(a + n == b for (a, n), (b, _) in zip(offsets, offsets[1:]))
    assert sum(n for _, n in offsets) == (tmp_path / "ck" / BLOB).stat().st_size
    again = save_checkpoint(ckpt, tmp_path / "copy")
    assert (again / BLOB).read_bytes() == (tmp_path / "ck" / BLOB).read_bytes()


def test_reloaded_model_evaluates_identically(tmp_path, scenes, tiny_model_config):
    res = train(scenes, DATASET, VOCAB, tiny_model_config, short(), out_dir=tmp_path)
    reloaded = model_from_checkpoint(load_checkpoint(tmp_path))
    a = evaluate(res.model, scenes, load_checkpoint(tmp_path).norm, seed=9, batch_size=5)
    b = evaluate(reloaded, scenes, load_checkpoint(tmp_path).norm, seed=9, batch_size=7)
    assert a.to_json() == b.to_json()


def test_version_mismatch_is_reported(tmp_path, scenes, tiny_model_config):
    train(scenes, DATASET, VOCAB, tiny_model_config, short(epochs=1, tactic_epochs=0, joint_epochs=0), out_dir=tmp_path)
    manifest = json.loads((tmp_path / MANIFEST).read_text())
    manifest["format_version"] = 99
    (tmp_path / MANIFEST).write_text(json.dumps(manifest))
    with pytest.raises(CheckpointVersionError, match="format version"):
        load_checkpoint(tmp_path)


def test_dataset_mismatch_is_reported(tmp_path, scenes, tiny_model_config):
    train(scenes, DATASET, VOCAB, tiny_model_config, short(epochs=1, tactic_epochs=0, joint_epochs=0), out_dir=tmp_path)
    ckpt = load_checkpoint(tmp_path)
    with pytest.raises(CheckpointVersionError):
        check_compatible(ckpt, dataclasses.replace(DATASET, t_obs=8))


def test_resumed_run_matches_uninterrupted(tmp_path, scenes, tiny_model_config):
    cfg = short(epochs=3, tactic_epochs=2, joint_epochs=2)
    full = train(scenes, DATASET, VOCAB, tiny_model_config, cfg, out_dir=tmp_path / "full")

    class Killed(Exception):
        pass

    seen = []

    def kill_after_four(rec):
        seen.append(rec)
        if len(seen) == 4:
            raise Killed

    with pytest.raises(Killed):
        train(scenes, DATASET, VOCAB, tiny_model_config, cfg, out_dir=tmp_path / "run", on_epoch=kill_after_four)
    before = (tmp_path / "run" / LOG_NAME).read_text()
    resumed = train(scenes, DATASET, VOCAB, tiny_model_config, cfg, out_dir=tmp_path / "run", resume=True)
    after = (tmp_path / "run" / LOG_NAME).read_text()
    assert after.startswith(before)
    assert after == (tmp_path / "full" / LOG_NAME).read_text()
    assert [(r["stage"], r["epoch"]) for r in resumed.curves] == [(r["stage"], r["epoch"]) for r in full.curves]
    for name, t in full.model.state_dict().items():
        assert torch.equal(resumed.model.state_dict()[name], t), name
    assert (tmp_path / "run" / BLOB).read_bytes() == (tmp_path / "full" / BLOB).read_bytes()


def test_resume_rejects_different_config(tmp_path, scenes, tiny_model_config):
    train(scenes, DATASET, VOCAB, tiny_model_config, short(epochs=1, tactic_epochs=0, joint_epochs=0), out_dir=tmp_path)
    with pytest.raises(CheckpointVersionError):
        train(scenes, DATASET, VOCAB, tiny_model_config, short(epochs=2), out_dir=tmp_path, resume=True)


def test_zero_tactic_weight_never_evaluates_tactic_losses(monkeypatch, scenes, tiny_model_config):
    def boom(*args, **kwargs):
        raise AssertionError("tactic loss evaluated")

    monkeypatch.setattr(train_mod, "tactic_loss", boom)
    monkeypatch.setattr(train_mod, "loss_bi", boom)
    res = train(scenes, DATASET, VOCAB, tiny_model_config, short(alpha_w=0.0))
    assert [r["stage"] for r in res.curves] == ["denoiser", "denoiser", "joint"]
    assert all("tactic" not in r and "bi" not in r for r in res.curves)


def test_identical_runs_give_identical_curves(scenes, tiny_model_config):
    a = train(scenes, DATASET, VOCAB, tiny_model_config, short())
    b = train(scenes, DATASET, VOCAB, tiny_model_config, short())
    assert a.curves == b.curves
    c = train(scenes, DATASET, VOCAB, tiny_model_config, short(seed=5))
    assert a.curves != c.curves


def test_nan_loss_aborts_with_term_name(scenes, tiny_model_config):
    bad = list(scenes)
    pos = bad[0].positions.copy()
    pos[0, 3, 0] = np.nan
    bad[0] = bad[0].with_positions(pos)
    with pytest.raises(NumericAbort, match="L_noise"):
        train(bad, DATASET, VOCAB, tiny_model_config, short(batch_size=len(bad)))


def test_empty_training_set_is_a_data_error(tiny_model_config):
    with pytest.raises(DataError):
        train([], DATASET, VOCAB, tiny_model_config, short())


@pytest.mark.slow
def test_total_loss_falls_over_thirty_joint_epochs(tiny_model_config):
    scenes = synth_generate(SeededRng(1), DATASET, 200)
    res = train(scenes, DATASET, VOCAB, tiny_model_config, TrainConfig(seed=1, epochs=0, tactic_epochs=0, joint_epochs=30))
    assert len(res.curves) == 30
    assert res.curves[-1]["total"] < res.curves[0]["total"]


def test_predictions_are_batch_independent_and_serialise(scenes, tiny_model_config):
    res = train(scenes, DATASET, VOCAB, tiny_model_config, short(epochs=1, tactic_epochs=0, joint_epochs=0))
    from tactictraj.scenes import NormalizationParams

    a = predict(res.model, scenes, NormalizationParams(), seed=3, batch_size=12)
    b = predict(res.model, scenes, NormalizationParams(), seed=3, batch_size=5)
    assert torch.equal(a.samples, b.samples) and torch.equal(a.ranked, b.ranked)
    assert a.samples.shape == (12, 4, 11, 20, 2)
    lines = predictions_to_jsonl(a).splitlines()
    assert len(lines) == 12 and json.loads(lines[0])["scene_id"] == scenes[0].scene_id


def test_oracle_samples_give_zero_error(scenes, tiny_model_config):
    from tactictraj.evaluate import report_from_predictions
    from tactictraj.scenes import NormalizationParams

    res = train(scenes, DATASET, VOCAB, tiny_model_config, short(epochs=1, tactic_epochs=0, joint_epochs=0))
    preds = predict(res.model, scenes, NormalizationParams(), seed=3)
    preds.samples[:, 0] = preds.truth
    report = report_from_predictions(preds, DATASET.fps)
    assert all(v == 0.0 for v in report.ade.values()) and all(v == 0.0 for v in report.fde.values())
    assert sorted(report.ade) == [1.0, 2.0, 3.0, 4.0]


def test_resume_drops_log_lines_past_the_checkpoint(tmp_path, scenes, tiny_model_config):
    cfg = short(epochs=4, tactic_epochs=0, joint_epochs=0)
    full = train(scenes, DATASET, VOCAB, tiny_model_config, cfg, out_dir=tmp_path / "full")
    # checkpoints every second epoch; the third epoch's line outlives its checkpoint
    seen = []

    def kill(rec):
        seen.append(rec)
        if len(seen) == 3:
            raise KeyboardInterrupt

    with pytest.raises(KeyboardInterrupt):
        train(scenes, DATASET, VOCAB, tiny_model_config, cfg, out_dir=tmp_path / "run", on_epoch=kill, checkpoint_every=2)
    assert len((tmp_path / "run" / LOG_NAME).read_text().splitlines()) == 3
    resumed = train(scenes, DATASET, VOCAB, tiny_model_config, cfg, out_dir=tmp_path / "run", resume=True)
    assert resumed.curves == full.curves
    assert (tmp_path / "run" / LOG_NAME).read_text() == (tmp_path / "full" / LOG_NAME).read_text()
