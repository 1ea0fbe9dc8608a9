"""Sampling and scoring of a trained model over a scene list."""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch

from .diffusion import GuidanceConfig
from .game import MaskSamplerConfig
from .learner import loss_bi
from .metrics import EvalReport, build_report, min_ade
from .model import TacticTrajModel, collate
from .numeric import SeededRng
from .scenes import NormalizationParams, Scene


@dataclass
class Predictions:
    scene_ids: list[str]
    samples: torch.Tensor  # (B, S, N, T_pred, 2) metres
    truth: torch.Tensor  # (B, N, T_pred, 2) metres
    probs: torch.Tensor  # (B, M, V)
    ranked: torch.Tensor  # (B, M, V) labels by descending probability
    true_labels: torch.Tensor  # (B, M)
    I_pred: torch.Tensor  # (B, M, N_T, k)
    I_B: torch.Tensor  # (B, M, N_T, k) full-mask oracle targets


def predict(
    model: TacticTrajModel,
    scenes: Sequence[Scene],
    norm: NormalizationParams,
    seed: int = 0,
    batch_size: int = 32,
    guidance: GuidanceConfig | None = None,
    labels_override=None,
) -> Predictions:
    """Draw samples for every scene; noise is keyed by scene position, not batch.

    ``labels_override`` (n_scenes, M) replaces the observed tactic labels
    fed to the condition.
    """
    rng = SeededRng(seed, ("eval",))
    parts: dict[str, list[torch.Tensor]] = {}
    model.eval()
    with torch.no_grad():
        for lo in range(0, len(scenes), batch_size):
            idx = list(range(lo, min(lo + batch_size, len(scenes))))
            batch = collate([scenes[i] for i in idx], model.dataset, norm, keys=idx)
            labels = None if labels_override is None else torch.as_tensor(np.asarray(labels_override)[idx], dtype=torch.long)
            A, cond = model.condition(batch, labels)
            rel, _ = model.sample(cond, batch, rng, guidance)
            out = model.tactic_branch(A, cond, batch)
            ranked = torch.sort(out.p, dim=-1, descending=True, stable=True).indices
            chunk = {
                "samples": model.to_court(rel, batch, norm),
                "truth": batch.future * norm.scale + batch.last[:, :, None, :],
                "probs": out.p,
                "ranked": ranked,
                "true_labels": batch.labels_future,
                "I_pred": out.I_pred,
                "I_B": model.interaction_targets(out, MaskSamplerConfig.full()),
            }
            for k, v in chunk.items():
                parts.setdefault(k, []).append(v)
    return Predictions(scene_ids=[s.scene_id for s in scenes], **{k: torch.cat(v) for k, v in parts.items()})


def report_from_predictions(preds: Predictions, fps: int, config: dict | None = None) -> EvalReport:
    return build_report(preds.samples, preds.truth, preds.ranked.reshape(-1, preds.ranked.shape[-1]), preds.true_labels.reshape(-1), fps, config)


def evaluate(model: TacticTrajModel, scenes: Sequence[Scene], norm: NormalizationParams, seed: int = 0, batch_size: int = 32) -> EvalReport:
    preds = predict(model, scenes, norm, seed, batch_size)
    snapshot = {"model": model.config.to_dict(), "dataset": model.dataset.to_dict(), "seed": seed, "n_samples": model.config.n_samples}
    return report_from_predictions(preds, model.dataset.fps, snapshot)


def per_scene_min_ade(preds: Predictions, frames: int) -> torch.Tensor:
    return min_ade(preds.samples, preds.truth, frames)


def held_out_loss_bi(preds: Predictions) -> float:
    return float(loss_bi(preds.I_pred, preds.I_B))


def predictions_to_jsonl(preds: Predictions) -> str:
    lines = []
    for b, sid in enumerate(preds.scene_ids):
        rec = {
            "scene_id": sid,
            "samples": preds.samples[b].tolist(),
            "tactics": [
                {"team": m, "ranked": preds.ranked[b, m].tolist(), "probs": preds.probs[b, m].tolist()}
                for m in range(preds.probs.shape[1])
            ],
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(lines) + "\n"
