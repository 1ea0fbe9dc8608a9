"""Best-of-S displacement metrics and top-k tactic accuracy, gathered into an evaluation report."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ArgumentError

HORIZON_SECONDS = (1.0, 2.0, 3.0, 4.0)
TOPK = (1, 2, 3, 5)


def horizon_frames(seconds: float, fps: int) -> int:
    return int(round(seconds * fps))


def _displacements(predictions, truth, h: int) -> torch.Tensor:
    predictions = torch.as_tensor(predictions, dtype=torch.float64)
    truth = torch.as_tensor(truth, dtype=torch.float64)
    T = truth.shape[-2]
    if not 1 <= h <= T:
        raise ArgumentError(f"horizon {h} frames outside [1, {T}]")
    if predictions.shape[-4] < 1:
        raise ArgumentError("need at least one sample")
    diff = predictions[..., :h, :] - truth.unsqueeze(-4)[..., :h, :]
    return torch.linalg.vector_norm(diff, dim=-1)  # (..., S, N, h)


def min_ade(predictions, truth, h: int) -> torch.Tensor:
    """min over samples of the agent- and frame-mean displacement over frames 1..h.

    ``predictions`` (..., S, N, T, 2) and ``truth`` (..., N, T, 2); returns (...).
    """
    return _displacements(predictions, truth, h).mean(dim=(-2, -1)).min(dim=-1).values


def min_fde(predictions, truth, h: int) -> torch.Tensor:
    """min over samples of the agent-mean displacement at frame h."""
    return _displacements(predictions, truth, h)[..., -1].mean(dim=-1).min(dim=-1).values


def topk_accuracy(predicted_labels, truths, k: int) -> float:
    """Fraction of rows whose truth is among the first ``k`` predicted labels.

    ``predicted_labels`` (n, K) ranked lists and ``truths`` (n,).
    """
    pred = np.asarray(predicted_labels)
    truths = np.asarray(truths)
    if pred.size == 0 or truths.size == 0:
        raise ArgumentError("top-k accuracy of an empty prediction set")
    pred = pred.reshape(-1, pred.shape[-1])
    truths = truths.reshape(-1)
    if k > pred.shape[1] or k < 1:
        raise ArgumentError(f"k={k} exceeds the {pred.shape[1]} ranked labels available")
    hits = (pred[:, :k] == truths[:, None]).any(axis=1)
    return float(hits.mean())


def constant_velocity(observed, t_pred: int) -> np.ndarray:
    """Extrapolate the last observed step; (..., T_obs, 2) -> (..., t_pred, 2)."""
    observed = np.asarray(observed, dtype=np.float64)
    v = observed[..., -1, :] - observed[..., -2, :]
    steps = np.arange(1, t_pred + 1, dtype=np.float64)[:, None]
    return observed[..., -1:, :] + steps * v[..., None, :]


@dataclass
class EvalReport:
    ade: dict[float, float]
    fde: dict[float, float]
    topk: dict[int, float]
    n_scenes: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes,
            "horizons": [{"seconds": s, "minADE": self.ade[s], "minFDE": self.fde[s]} for s in sorted(self.ade)],
            "topk_accuracy": {str(k): self.topk[k] for k in sorted(self.topk)},
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(
            ade={h["seconds"]: h["minADE"] for h in d["horizons"]},
            fde={h["seconds"]: h["minFDE"] for h in d["horizons"]},
            topk={int(k): v for k, v in d["topk_accuracy"].items()},
            n_scenes=d["n_scenes"],
            config=d.get("config", {}),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        ks = sorted(self.topk)
        writer.writerow(["seconds", "minADE", "minFDE", "n_scenes", *[f"top{k}" for k in ks]])
        for s in sorted(self.ade):
            writer.writerow([repr(s), repr(self.ade[s]), repr(self.fde[s]), self.n_scenes, *[repr(self.topk[k]) for k in ks]])
        return buf.getvalue()


def build_report(predictions, truth, ranked_labels, true_labels, fps: int, config: dict | None = None, topk=TOPK) -> EvalReport:
    """Aggregate per-scene metrics; ``predictions`` (B, S, N, T, 2) in metres."""
    ade, fde = {}, {}
    for s in HORIZON_SECONDS:
        h = horizon_frames(s, fps)
        ade[s] = float(min_ade(predictions, truth, h).mean())
        fde[s] = float(min_fde(predictions, truth, h).mean())
    acc = {k: topk_accuracy(ranked_labels, true_labels, k) for k in topk}
    return EvalReport(ade, fde, acc, int(torch.as_tensor(truth).shape[0]), config or {})
