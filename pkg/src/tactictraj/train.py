"""Staged optimisation of the total objective with resumable checkpoints.

Stages run in order: ``denoiser`` (encoder, denoiser and initializer on the
trajectory losses), ``tactic`` (enhancer, learner and head on the tactic
losses, encoder frozen), then ``joint`` (everything on the full objective).
Every random draw is keyed by (stage, epoch, step), so a resumed run
repeats exactly what an uninterrupted run would have done.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import torch

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainConfig
from .diffusion import loss_dist_unc, loss_noise
from .encoder import drop_condition
from .errors import CheckpointVersionError, DataError, NumericAbort
from .game import MaskSamplerConfig
from .learner import loss_bi
from .model import Batch, TacticTrajModel, collate
from .numeric import SeededRng, gaussian
from .scenes import DatasetConfig, NormalizationParams, Scene, TacticVocabulary, future_label_counts
from .tactic_head import FocalConfig, class_weights_from_counts, tactic_loss

LOSS_ORDER = ("noise", "dist", "unc", "tactic", "bi")
STAGES = ("denoiser", "tactic", "joint")
LOG_NAME = "losses.jsonl"


@dataclass(frozen=True)
class Stage:
    name: str
    epochs: int
    modules: tuple[str, ...]
    lr: float
    step: int
    gamma: float

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.gamma ** (epoch // self.step)


def plan_stages(cfg: TrainConfig) -> list[Stage]:
    tactic_modules = ("enhancer", "learner", "head")
    stages = [
        Stage("denoiser", cfg.epochs, ("encoder", "denoiser", "initializer"), cfg.lr_denoiser, cfg.lr_denoiser_step, cfg.lr_denoiser_gamma),
        Stage("tactic", cfg.tactic_epochs if cfg.alpha_w > 0 else 0, tactic_modules, cfg.lr_tactic, cfg.lr_tactic_step, cfg.lr_tactic_gamma),
        Stage(
            "joint",
            cfg.joint_epochs,
            ("encoder", "denoiser", "initializer", *tactic_modules),
            cfg.lr_joint,
            cfg.lr_joint_step,
            cfg.lr_joint_gamma,
        ),
    ]
    if cfg.joint_from_scratch:
        stages = [Stage(s.name, 0, s.modules, s.lr, s.step, s.gamma) if s.name != "joint" else s for s in stages]
    return stages


def stage_parameters(model: TacticTrajModel, stage: Stage) -> list[tuple[str, torch.nn.Parameter]]:
    named = []
    for prefix in stage.modules:
        for name, p in sorted(getattr(model, prefix).named_parameters()):
            named.append((f"{prefix}.{name}", p))
    return named


def compute_losses(
    model: TacticTrajModel,
    batch: Batch,
    rng: SeededRng,
    stage: str,
    cfg: TrainConfig,
    focal: FocalConfig,
) -> dict[str, torch.Tensor]:
    losses: dict[str, torch.Tensor] = {}
    trajectory = stage in ("denoiser", "joint")
    tactics = stage in ("tactic", "joint") and cfg.alpha_w > 0
    if stage == "tactic":
        with torch.no_grad():
            A, cond = model.condition(batch)
    else:
        A, cond = model.condition(batch)
    if trajectory:
        dropped = drop_condition(cond, rng.child("drop"), cfg.p_drop)
        t = torch.from_numpy(rng.child("t").integers(0, model.schedule.steps, size=batch.size))
        z = gaussian(rng.child("z"), batch.future.shape)
        losses["noise"] = loss_noise(model.denoiser, batch.future, dropped, t, model.schedule, z)
        if stage == "joint" and cfg.dist_on_final:
            preds, sigma = model.sample(cond, batch, rng.child("sample"))
        else:
            preds, sigma, _ = model.initial_samples(cond)
        losses["dist"], losses["unc"] = loss_dist_unc(preds, batch.future, sigma)
    if tactics:
        out = model.tactic_branch(A, cond, batch)
        losses["tactic"] = tactic_loss(out.p, batch.labels_future, focal)
        if stage == "tactic":
            masks = MaskSamplerConfig.full()
        else:
            masks = MaskSamplerConfig(cfg.n_mask_samples, cfg.keep_probability, cfg.seed)
        I_B = model.interaction_targets(out, masks, rng.child("masks"))
        losses["bi"] = loss_bi(out.I_pred, I_B)
    return losses


def total_loss(losses: dict[str, torch.Tensor], cfg: TrainConfig) -> torch.Tensor:
    total = torch.zeros((), dtype=torch.float64)
    if "noise" in losses:
        total = total + losses["noise"] + losses["dist"] + cfg.eta * losses["unc"]
    if "tactic" in losses:
        total = total + cfg.alpha_w * (losses["tactic"] + cfg.beta_w * losses["bi"])
    return total


def check_finite(losses: dict[str, torch.Tensor], where: str) -> None:
    for name in LOSS_ORDER:
        if name in losses and not bool(torch.isfinite(losses[name])):
            raise NumericAbort(f"non-finite L_{name} ({float(losses[name].detach())}) at {where}")


# --------------------------------------------------------------------------
# Optimizer state by parameter name


def export_adam(opt: torch.optim.Adam, named) -> dict[str, torch.Tensor]:
    out = {}
    for name, p in named:
        state = opt.state.get(p)
        if not state:
            continue
        out[f"{name}.exp_avg"] = state["exp_avg"].detach().clone()
        out[f"{name}.exp_avg_sq"] = state["exp_avg_sq"].detach().clone()
        out[f"{name}.step"] = torch.as_tensor(float(state["step"]), dtype=torch.float64)
    return out


def import_adam(opt: torch.optim.Adam, named, arrays: dict[str, torch.Tensor]) -> None:
    for name, p in named:
        if f"{name}.exp_avg" not in arrays:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(arrays[f"{name}.step"])),
            "exp_avg": arrays[f"{name}.exp_avg"].clone().reshape(p.shape),
            "exp_avg_sq": arrays[f"{name}.exp_avg_sq"].clone().reshape(p.shape),
        }


# --------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: TacticTrajModel
    curves: list[dict]
    focal: FocalConfig


def _batches(n: int, batch_size: int, rng: SeededRng) -> list[list[int]]:
    order = rng.permutation(n).tolist()
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _before(record: dict, progress: dict) -> bool:
    if progress["stage"] == "done":
        return True
    here, there = STAGES.index(record["stage"]), STAGES.index(progress["stage"])
    return here < there or (here == there and record["epoch"] < progress["epoch"])


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else float("nan")


def train(
    scenes: Sequence[Scene],
    dataset: DatasetConfig,
    vocab: TacticVocabulary,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    norm: NormalizationParams | None = None,
    out_dir=None,
    resume: bool = False,
    on_epoch: Callable[[dict], None] | None = None,
    checkpoint_every: int = 1,
) -> TrainResult:
    """Run every stage; with ``out_dir`` a checkpoint is written after each epoch.

    ``resume=True`` continues from the checkpoint in ``out_dir`` and appends
    to its loss log.
    """
    if not scenes:
        raise DataError("training needs at least one scene")
    norm = norm or NormalizationParams()
    model = TacticTrajModel(model_cfg, dataset, cfg.seed)
    focal = FocalConfig(class_weights_from_counts(future_label_counts(scenes, dataset.vocab_size)), cfg.gamma_focal)
    progress = {"stage": STAGES[0], "epoch": 0}
    optim_arrays: dict[str, torch.Tensor] = {}
    out_path = Path(out_dir) if out_dir is not None else None
    log_path = out_path / LOG_NAME if out_path is not None else None
    curves: list[dict] = []
    if resume:
        if out_path is None:
            raise CheckpointVersionError("resume requested without a checkpoint directory")
        ckpt = load_checkpoint(out_path)
        if ckpt.model_config != model_cfg or ckpt.train_config != cfg or ckpt.dataset != dataset:
            raise CheckpointVersionError(f"{out_path}: checkpoint configuration differs from the requested run")
        model.load_state_dict(ckpt.params)
        progress = dict(ckpt.progress)
        optim_arrays = ckpt.optimizer
        if log_path.exists():
            logged = [json.loads(line) for line in log_path.read_text().splitlines() if line.strip()]
            # epochs logged after the last checkpoint are recomputed, so drop their lines
            curves = [r for r in logged if _before(r, progress)]
            if len(curves) != len(logged):
                log_path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in curves))
    elif log_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_path.write_text("")

    base = SeededRng(cfg.seed, ("train",))
    stages = plan_stages(cfg)
    start_index = len(STAGES) if progress["stage"] == "done" else STAGES.index(progress["stage"])
    for si, stage in enumerate(stages):
        if si < start_index:
            continue
        first_epoch = progress["epoch"] if si == start_index else 0
        named = stage_parameters(model, stage)
        opt = torch.optim.Adam([p for _, p in named], lr=stage.lr, betas=(0.9, 0.999), weight_decay=0.0)
        if si == start_index and optim_arrays:
            import_adam(opt, named, optim_arrays)
        model.train()
        for epoch in range(first_epoch, stage.epochs):
            lr = stage.lr_at(epoch)
            for group in opt.param_groups:
                group["lr"] = lr
            sums: dict[str, list[float]] = {}
            for step, idx in enumerate(_batches(len(scenes), cfg.batch_size, base.child(stage.name, epoch, "order"))):
                batch = collate([scenes[i] for i in idx], dataset, norm, keys=idx)
                losses = compute_losses(model, batch, base.child(stage.name, epoch, step), stage.name, cfg, focal)
                check_finite(losses, f"stage {stage.name} epoch {epoch} step {step}")
                loss = total_loss(losses, cfg)
                opt.zero_grad(set_to_none=True)
                if loss.requires_grad:
                    loss.backward()
                    if cfg.grad_clip > 0:
                        torch.nn.utils.clip_grad_norm_([p for _, p in named], cfg.grad_clip)
                    opt.step()
                for name, value in losses.items():
                    sums.setdefault(name, []).append(float(value.detach()))
                sums.setdefault("total", []).append(float(loss.detach()))
            record = {"stage": stage.name, "epoch": epoch, "lr": lr, **{k: _mean(v) for k, v in sums.items()}}
            curves.append(record)
            if log_path is not None:
                with log_path.open("a") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            last_epoch = epoch + 1 == stage.epochs
            if out_path is not None and (last_epoch or (epoch + 1) % checkpoint_every == 0):
                nxt = {"stage": stage.name, "epoch": epoch + 1}
                if last_epoch and si + 1 < len(stages):
                    nxt = {"stage": stages[si + 1].name, "epoch": 0}
                _save(model, cfg, dataset, norm, vocab, focal, {} if last_epoch else export_adam(opt, named), nxt, out_path)
            if on_epoch is not None:
                on_epoch(record)
        progress = {"stage": STAGES[min(si + 1, len(STAGES) - 1)], "epoch": 0}
        optim_arrays = {}
    model.eval()
    if out_path is not None and start_index < len(STAGES):
        _save(model, cfg, dataset, norm, vocab, focal, {}, {"stage": "done", "epoch": 0}, out_path)
    return TrainResult(model, curves, focal)


def _save(model, cfg, dataset, norm, vocab, focal, optim, progress, out_path) -> None:
    ckpt = Checkpoint(
        model_config=model.config,
        train_config=cfg,
        dataset=dataset,
        norm=norm,
        vocab=vocab,
        params={k: v for k, v in model.state_dict().items()},
        optimizer=optim,
        progress=progress,
        extra={"focal_alpha": [float(a) for a in focal.alpha]},
    )
    save_checkpoint(ckpt, out_path)


def model_from_checkpoint(ckpt: Checkpoint) -> TacticTrajModel:
    model = TacticTrajModel(ckpt.model_config, ckpt.dataset, ckpt.train_config.seed)
    model.load_state_dict(ckpt.params)
    model.eval()
    return model
