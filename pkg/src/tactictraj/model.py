"""Full two-branch model: trajectory diffusion and tactic prediction over shared conditions."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .diffusion import Denoiser, GuidanceConfig, Initializer, NoiseSchedule, init_samples, refine
from .encoder import ConditionSet, InteractionEncoder
from .enhance import FeatureEnhancer, split_teams, team_rows
from .errors import DataError
from .game import MaskSamplerConfig, SimilarityProjection, masked_interaction, similarity_logits
from .learner import BanzhafLearner, predict_interaction
from .numeric import SeededRng, gaussian, init_parameters
from .scenes import DatasetConfig, NormalizationParams, Scene
from .tactic_head import TacticHead, fuse_weighted, topk_extract


@dataclass
class Batch:
    """Tensors for a list of scenes; coordinates normalised except ``last``."""

    obs: torch.Tensor  # (B, N, T_obs, 2) normalised absolute positions
    future: torch.Tensor  # (B, N, T_pred, 2) normalised displacement from last observed
    last: torch.Tensor  # (B, N, 2) last observed position, metres
    labels_obs: torch.Tensor  # (B, M)
    labels_future: torch.Tensor  # (B, M)
    team_of: torch.Tensor  # (B, N)
    rows: torch.Tensor  # (B, M, N_T)
    keys: list  # per-scene RNG keys

    @property
    def size(self) -> int:
        return self.obs.shape[0]


def collate(scenes: Sequence[Scene], config: DatasetConfig, norm: NormalizationParams, keys=None) -> Batch:
    if not scenes:
        raise DataError("cannot build a batch from zero scenes")
    pos = np.stack([s.positions for s in scenes]).astype(np.float64)
    obs = pos[:, :, : config.t_obs]
    fut = pos[:, :, config.t_obs :]
    last = obs[:, :, -1]
    rel = (fut - last[:, :, None]) / norm.scale
    teams = range(config.n_teams)
    labels_obs = [[s.tactic(m).observed for m in teams] for s in scenes]
    labels_future = [[s.tactic(m).future for m in teams] for s in scenes]
    rows = torch.stack([team_rows(s.team_of, config.n_teams, config.team_tokens) for s in scenes])
    return Batch(
        obs=torch.from_numpy(norm.apply(obs)),
        future=torch.from_numpy(rel),
        last=torch.from_numpy(last),
        labels_obs=torch.tensor(labels_obs, dtype=torch.long),
        labels_future=torch.tensor(labels_future, dtype=torch.long),
        team_of=torch.tensor([s.team_of for s in scenes], dtype=torch.long),
        rows=rows,
        keys=list(keys) if keys is not None else list(range(len(scenes))),
    )


@dataclass
class TacticOutput:
    p: torch.Tensor  # (B, M, V)
    labels: torch.Tensor  # (B, M, k) ranked
    I_pred: torch.Tensor  # (B, M, N_T, k)
    S: torch.Tensor  # (B, M, N_T, k) similarity logits for the oracle targets
    team_tokens: torch.Tensor  # (B, M, N_T, D_g)


class TacticTrajModel(nn.Module):
    def __init__(self, config: ModelConfig, dataset: DatasetConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.dataset = dataset
        c = config
        self.encoder = InteractionEncoder(
            vocab_size=dataset.vocab_size,
            d_c=c.d_c,
            d_model=c.d_model,
            n_layers=c.enc_layers,
            n_heads=c.n_heads,
            d_a=c.d_a,
            t_obs=dataset.t_obs,
            pool=c.pool,
        )
        self.denoiser = Denoiser(dataset.t_pred, c.d_g, c.denoiser_width, c.denoiser_blocks, c.n_heads)
        self.initializer = Initializer(dataset.t_pred, c.d_g, c.init_width, c.n_samples, c.n_heads)
        self.enhancer = FeatureEnhancer(c.d_g, c.d_k, c.enhance_norm)
        self.learner = BanzhafLearner(c.d_a, c.d_h, c.k)
        self.head = TacticHead(c.d_g, c.head_hidden, dataset.vocab_size, dataset.n_teams, c.tied_head)
        self.similarity = SimilarityProjection(c.d_a if c.similarity_tokens == "trajectory" else c.d_g, c.d_c, c.d_s)
        self.schedule = NoiseSchedule.linear(c.diffusion_steps, c.beta_start, c.beta_end)
        self.guidance = GuidanceConfig(c.s_g, c.denoise_steps_used, c.full_ancestral)
        init_parameters(self, SeededRng(seed, ("init",)))
        with torch.no_grad():
            # unit-variance tactic rows so they are not drowned by the trajectory slice
            self.encoder.tactic_table.copy_(gaussian(SeededRng(seed, ("init", "tactic_table")), self.encoder.tactic_table.shape))
            self.similarity.agent.weight.mul_(c.similarity_gain)
            self.similarity.tactic.weight.mul_(c.similarity_gain)
        self.similarity.requires_grad_(False)

    # ------------------------------------------------------------------

    def condition(self, batch: Batch, labels=None) -> tuple[torch.Tensor, ConditionSet]:
        return self.encoder(batch.obs, batch.labels_obs if labels is None else labels, batch.team_of)

    def tactic_branch(self, A: torch.Tensor, cond: ConditionSet, batch: Batch) -> TacticOutput:
        G_teams = split_teams(cond.G, batch.rows)
        G_hat = self.enhancer(G_teams, cond.G)
        I_pred = predict_interaction(self.learner, A, batch.rows)
        p = self.head(fuse_weighted(G_hat, I_pred))
        labels, c_hat = topk_extract(p, self.encoder.tactic_table, self.config.k)
        tokens = split_teams(A, batch.rows) if self.config.similarity_tokens == "trajectory" else G_teams
        S = similarity_logits(tokens.detach(), c_hat.detach(), self.similarity)
        return TacticOutput(p, labels, I_pred, S, G_teams)

    def interaction_targets(self, out: TacticOutput, masks: MaskSamplerConfig, rng: SeededRng | None = None) -> torch.Tensor:
        return masked_interaction(out.S, masks, rng).detach()

    def initial_samples(self, cond: ConditionSet):
        return init_samples(self.initializer, cond)

    def sample(self, cond: ConditionSet, batch: Batch, rng: SeededRng, guidance: GuidanceConfig | None = None):
        """Normalised displacement samples (B, S, N, T, 2) with noise keyed per scene."""
        guidance = guidance or self.guidance
        guidance.validate(self.schedule)
        y, sigma, _ = self.initial_samples(cond)
        if guidance.full_ancestral:
            y = self._scene_noise(rng, batch.keys, ("prior",), y.shape)
        cond_s = cond.expand_samples(y.shape[-4])
        out = refine(
            self.denoiser, y, cond_s, self.schedule, guidance, lambda t, shape: self._scene_noise(rng, batch.keys, ("z", t), shape)
        )
        return out, sigma

    @staticmethod
    def _scene_noise(rng: SeededRng, keys, tag: tuple, shape) -> torch.Tensor:
        return torch.stack([gaussian(rng.child("scene", key, *tag), shape[1:]) for key in keys])

    def to_court(self, rel: torch.Tensor, batch: Batch, norm: NormalizationParams) -> torch.Tensor:
        """Normalised displacements (B, S, N, T, 2) back to court metres."""
        return rel * norm.scale + batch.last[:, None, :, None, :]


def sample_trajectories(model: TacticTrajModel, scene: Scene, norm: NormalizationParams, rng: SeededRng, guidance=None) -> torch.Tensor:
    """Court-coordinate samples (S, N, T_pred, 2) for one scene."""
    batch = collate([scene], model.dataset, norm)
    with torch.no_grad():
        _, cond = model.condition(batch)
        rel, _ = model.sample(cond, batch, rng, guidance)
        return model.to_court(rel, batch, norm)[0]
