"""Agent condition vectors from observed motion and observed team tactics.

Each agent's observed window runs through a small temporal transformer (no
mixing across agents) and is pooled to one trajectory embedding ``a_i``.
The team's observed tactic selects a row of the learnable tactic table,
which is broadcast to the team's players; the ball gets the zero vector.
The condition for agent ``i`` is the concatenation ``[a_i ; c_team(i)]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DimensionError, MappingError, VocabularyError
from .numeric import LayerNorm, SeededRng, TransformerBlock, sinusoidal_embedding


@dataclass
class ConditionSet:
    """Per-agent conditions ``G`` of width ``d_a + d_c``.

    ``informed`` is False for agents whose tactic slice was dropped.
    """

    G: torch.Tensor
    informed: torch.Tensor
    d_a: int

    @property
    def trajectory(self) -> torch.Tensor:
        return self.G[..., : self.d_a]

    @property
    def tactic(self) -> torch.Tensor:
        return self.G[..., self.d_a :]

    def null(self) -> ConditionSet:
        """Trajectory-only condition: tactic slice zeroed, flags cleared."""
        G = torch.cat([self.trajectory, torch.zeros_like(self.tactic)], dim=-1)
        return ConditionSet(G, torch.zeros_like(self.informed), self.d_a)

    def expand_samples(self, n_samples: int) -> ConditionSet:
        """Insert a sample axis before the agent axis."""
        G = self.G.unsqueeze(-3).expand(*self.G.shape[:-2], n_samples, *self.G.shape[-2:])
        informed = self.informed.unsqueeze(-2).expand(*self.informed.shape[:-1], n_samples, self.informed.shape[-1])
        return ConditionSet(G, informed, self.d_a)


class TrajectoryEncoder(nn.Module):
    def __init__(self, d_model=128, n_layers=2, n_heads=4, d_a=128, t_obs=10, pool="mean"):
        super().__init__()
        if pool not in ("mean", "last"):
            raise ValueError(f"pool must be 'mean' or 'last', got {pool!r}")
        self.t_obs = t_obs
        self.pool = pool
        self.in_proj = nn.Linear(2, d_model)
        self.blocks = nn.ModuleList(TransformerBlock(d_model, n_heads) for _ in range(n_layers))
        self.norm = LayerNorm(d_model)
        self.out_proj = nn.Linear(d_model, d_a)
        self.register_buffer("time_code", sinusoidal_embedding(torch.arange(t_obs), d_model), persistent=False)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        if obs.shape[-2:] != (self.t_obs, 2):
            raise DimensionError(f"expected observed window (..., {self.t_obs}, 2), got {tuple(obs.shape)}")
        h = self.in_proj(obs) + self.time_code
        for block in self.blocks:
            h = block(h)
        h = self.out_proj(self.norm(h))
        return h.mean(dim=-2) if self.pool == "mean" else h[..., -1, :]


class InteractionEncoder(nn.Module):
    def __init__(self, vocab_size=16, d_c=32, **trajectory_kwargs):
        super().__init__()
        self.trajectory = TrajectoryEncoder(**trajectory_kwargs)
        self.tactic_table = nn.Parameter(torch.zeros(vocab_size, d_c))
        self.d_a = self.trajectory.out_proj.out_features
        self.d_c = d_c

    @property
    def d_g(self) -> int:
        return self.d_a + self.d_c

    def forward(self, obs, labels, team_of) -> tuple[torch.Tensor, ConditionSet]:
        A = embed_trajectories(self, obs)
        C_e = expand_to_scene(lookup_tactic(self, labels), team_of)
        return A, build_condition(A, C_e)


def embed_trajectories(encoder: InteractionEncoder, obs: torch.Tensor) -> torch.Tensor:
    """Trajectory embeddings ``A`` of shape (..., N, D_A) from (..., N, T_obs, 2)."""
    return encoder.trajectory(obs)


def lookup_tactic(encoder: InteractionEncoder | torch.Tensor, labels) -> torch.Tensor:
    """Rows of the tactic table for integer ``labels`` (any shape)."""
    W = encoder.tactic_table if isinstance(encoder, InteractionEncoder) else encoder
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= W.shape[0]):
        raise VocabularyError(f"tactic label outside [0, {W.shape[0]}): {labels.tolist()}")
    return W[labels]


def expand_to_scene(team_embeddings: torch.Tensor, team_of) -> torch.Tensor:
    """Broadcast per-team embeddings (..., M, D_C) to agents (..., N, D_C).

    ``team_of`` holds the team index of each agent, -1 for the ball whose row
    is zero.
    """
    team_of = torch.as_tensor(team_of, dtype=torch.long)
    n_teams = team_embeddings.shape[-2]
    if bool(((team_of < -1) | (team_of >= n_teams)).any()):
        raise MappingError(f"agents mapped to unknown teams: {team_of.tolist()} with {n_teams} teams")
    padded = torch.cat([team_embeddings, torch.zeros_like(team_embeddings[..., :1, :])], dim=-2)
    idx = torch.where(team_of < 0, torch.full_like(team_of, n_teams), team_of)
    idx = idx.expand(*team_embeddings.shape[:-2], idx.shape[-1]) if idx.dim() < team_embeddings.dim() - 1 else idx
    return torch.gather(padded, -2, idx.unsqueeze(-1).expand(*idx.shape, padded.shape[-1]))


def build_condition(A: torch.Tensor, C_e: torch.Tensor) -> ConditionSet:
    if A.shape[:-1] != C_e.shape[:-1]:
        raise DimensionError(f"row mismatch between embeddings {tuple(A.shape)} and tactic rows {tuple(C_e.shape)}")
    G = torch.cat([A, C_e], dim=-1)
    return ConditionSet(G, torch.ones(G.shape[:-1], dtype=torch.bool), A.shape[-1])


def drop_condition(cond: ConditionSet, rng: SeededRng, p_drop: float) -> ConditionSet:
    """Scene-level condition dropout for classifier-free guidance.

    Leading axes of ``G`` before the agent axis index scenes; each scene is
    dropped as a whole with probability ``p_drop``.
    """
    if not 0.0 <= p_drop <= 1.0:
        raise ValueError(f"p_drop must lie in [0, 1], got {p_drop}")
    scene_shape = cond.G.shape[:-2]
    if p_drop > 0:
        drop = torch.from_numpy(np.asarray(rng.uniform(size=tuple(scene_shape)) < p_drop)).reshape(scene_shape)
    else:
        drop = torch.zeros(scene_shape, dtype=torch.bool)
    keep = (~drop)[..., None, None].to(cond.G.dtype)
    G = torch.cat([cond.trajectory, cond.tactic * keep], dim=-1)
    informed = cond.informed & (~drop)[..., None]
    return ConditionSet(G, informed, cond.d_a)
