import json
import subprocess
import sys

import pytest

from tactictraj.cli import main
from tactictraj.config import SEED_ENV, resolve_seed
from tactictraj.errors import ConfigError

TINY = {
    "model": {"d_model": 16, "d_a": 16, "denoiser_width": 16, "init_width": 16, "head_hidden": 16, "d_h": 16, "d_k": 16, "n_samples": 3, "enc_layers": 1},
    "train": {"seed": 2, "epochs": 1, "tactic_epochs": 1, "joint_epochs": 1, "batch_size": 4},
}


def write_game(path, n, phi):
    path.write_text(json.dumps({"n": n, "phi": {str(m): phi(m) for m in range(1 << n)}}))
    return str(path)


def test_banzhaf_additive_and_unanimity(tmp_path, capsys):
    additive = write_game(tmp_path / "add.json", 4, lambda m: float(sum((p + 1) * (m >> p & 1) for p in range(4))))
    assert main(["banzhaf", "--game", additive, "--pair", "1,3"]) == 0
    assert capsys.readouterr().out.strip() == "0.0000000000"
    unanimity = write_game(tmp_path / "u.json", 3, lambda m: 1.0 if m & 3 == 3 else 0.0)
    assert main(["banzhaf", "--game", unanimity, "--pair", "0,1"]) == 0
    assert capsys.readouterr().out.strip() == "1.0000000000"


def test_banzhaf_errors(tmp_path, capsys):
    game = write_game(tmp_path / "u.json", 3, lambda m: 0.0)
    assert main(["banzhaf", "--game", game, "--pair", "0,0"]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["banzhaf", "--game", str(broken), "--pair", "0,1"]) == 3
    assert "broken.json" in capsys.readouterr().err
    assert main(["banzhaf", "--game", str(tmp_path / "absent.json"), "--pair", "0,1"]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["banzhaf", "--game", game, "--pair", "zero"])
    assert exc.value.code == 2


def test_usage_errors_exit_two():
    for argv in ([], ["nosuch"], ["train", "--data", "x"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_module_entry_point_exit_code(tmp_path):
    game = write_game(tmp_path / "u.json", 3, lambda m: 1.0 if m & 3 == 3 else 0.0)
    run = subprocess.run([sys.executable, "-m", "tactictraj", "banzhaf", "--game", game, "--pair", "0,1"], capture_output=True, text=True)
    assert run.returncode == 0 and run.stdout.strip() == "1.0000000000"
    run = subprocess.run([sys.executable, "-m", "tactictraj", "banzhaf", "--game", game], capture_output=True, text=True)
    assert run.returncode == 2


def test_seed_precedence(monkeypatch, tmp_path):
    assert resolve_seed(7, None, {}) == 7
    assert resolve_seed(7, None, {SEED_ENV: "8"}) == 8
    assert resolve_seed(7, 9, {SEED_ENV: "8"}) == 9
    with pytest.raises(ConfigError):
        resolve_seed(7, None, {SEED_ENV: "eight"})
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"seed": 5}))
    outputs = {}
    for tag, env, flag in [("file", None, []), ("env", "5", []), ("env_other", "6", []), ("flag", "6", ["--seed", "5"])]:
        if env is None:
            monkeypatch.delenv(SEED_ENV, raising=False)
        else:
            monkeypatch.setenv(SEED_ENV, env)
        out = tmp_path / f"{tag}.jsonl"
        assert main(["gen", "--config", str(cfg), "--scenes", "2", "--out", str(out), *flag]) == 0
        outputs[tag] = out.read_text()
    assert outputs["file"] == outputs["env"] == outputs["flag"]
    assert outputs["env_other"] != outputs["file"]


def test_bad_config_and_data_exit_codes(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"unknown": 1}))
    assert main(["gen", "--config", str(cfg), "--scenes", "1", "--out", str(tmp_path / "x.jsonl")]) == 2
    data = tmp_path / "bad.jsonl"
    data.write_text("not json\n")
    train_cfg = tmp_path / "t.json"
    train_cfg.write_text(json.dumps(TINY))
    assert main(["train", "--data", str(data), "--config", str(train_cfg), "--out", str(tmp_path / "ck")]) == 3


def test_non_finite_data_exits_three(tmp_path):
    data = tmp_path / "s.jsonl"
    assert main(["gen", "--scenes", "4", "--seed", "1", "--out", str(data)]) == 0
    lines = data.read_text().splitlines()
    rec = json.loads(lines[0])
    rec["agents"][0]["xy"][2][0] = float("nan")
    lines[0] = json.dumps(rec)
    data.write_text("\n".join(lines) + "\n")
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps(TINY))
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "ck")]) == 3


def test_numeric_abort_exits_four(tmp_path, monkeypatch, capsys):
    import torch

    import tactictraj.train as train_mod

    real = train_mod.compute_losses

    def poisoned(*args, **kwargs):
        losses = real(*args, **kwargs)
        losses["unc"] = losses["unc"] * torch.tensor(float("inf"), dtype=torch.float64)
        return losses

    monkeypatch.setattr(train_mod, "compute_losses", poisoned)
    data = tmp_path / "s.jsonl"
    assert main(["gen", "--scenes", "4", "--seed", "1", "--out", str(data)]) == 0
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps(TINY))
    capsys.readouterr()
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "ck")]) == 4
    assert "L_unc" in capsys.readouterr().err


def test_full_pipeline(tmp_path, capsys):
    data, cfg, ck = tmp_path / "s.jsonl", tmp_path / "t.json", tmp_path / "ck"
    cfg.write_text(json.dumps(TINY))
    assert main(["gen", "--scenes", "6", "--seed", "3", "--out", str(data), "--vocab-out", str(tmp_path / "vocab.json")]) == 0
    assert main(["train", "--data", str(data), "--vocab", str(tmp_path / "vocab.json"), "--config", str(cfg), "--out", str(ck)]) == 0
    assert main(["predict", "--ckpt", str(ck), "--data", str(data), "--out", str(tmp_path / "p.jsonl")]) == 0
    preds = [json.loads(line) for line in (tmp_path / "p.jsonl").read_text().splitlines()]
    assert len(preds) == 6 and len(preds[0]["samples"]) == 3
    capsys.readouterr()
    assert main(["eval", "--ckpt", str(ck), "--data", str(data), "--report", str(tmp_path / "r.json"), "--csv", str(tmp_path / "r.csv")]) == 0
    printed = capsys.readouterr().out
    assert "4.0s minADE" in printed and "top5" in printed
    report = json.loads((tmp_path / "r.json").read_text())
    assert [h["seconds"] for h in report["horizons"]] == [1.0, 2.0, 3.0, 4.0]
    first = preds[0]["scene_id"]
    svg = tmp_path / "fig.svg"
    assert main(["plot", "--scene", first, "--data", str(data), "--preds", str(tmp_path / "p.jsonl"), "--out", str(svg)]) == 0
    assert svg.read_text().startswith("<svg") and (tmp_path / "fig.csv").exists()
    assert main(["plot", "--scene", "nope", "--data", str(data), "--out", str(svg)]) == 3
