"""Team-level token enhancement: scene-wide attention, then ball-focused attention."""

from __future__ import annotations

import math
from collections.abc import Sequence

import torch
from torch import nn

from .errors import DataError, DimensionError
from .numeric import LayerNorm, scaled_dot_attention


def team_rows(team_of: Sequence[int], n_teams: int, team_tokens: int) -> torch.Tensor:
    """Agent indices per team, players in ascending order with the ball last.

    Returns a long tensor (M, N_T).
    """
    team_of = [int(t) for t in team_of]
    balls = [i for i, t in enumerate(team_of) if t == -1]
    if len(balls) != 1:
        raise DataError(f"expected exactly one ball agent, found {len(balls)}")
    rows = []
    for team in range(n_teams):
        members = [i for i, t in enumerate(team_of) if t == team]
        if len(members) != team_tokens - 1:
            raise DataError(f"team {team} has {len(members)} players, expected {team_tokens - 1}")
        rows.append(members + balls)
    unmapped = [i for i, t in enumerate(team_of) if t < -1 or t >= n_teams]
    if unmapped:
        raise DataError(f"agents {unmapped} map to no team")
    return torch.tensor(rows, dtype=torch.long)


def split_teams(G: torch.Tensor, rows: torch.Tensor) -> torch.Tensor:
    """Gather (..., N, D) scene tokens into (..., M, N_T, D) team blocks.

    ``rows`` is (M, N_T) shared by every scene, or (B, M, N_T) per scene when
    ``G`` is (B, N, D).
    """
    if rows.dim() == 2:
        return G[..., rows, :]
    if rows.dim() != 3 or G.dim() != 3 or rows.shape[0] != G.shape[0]:
        raise DimensionError(f"per-scene rows {tuple(rows.shape)} do not match tokens {tuple(G.shape)}")
    return G[torch.arange(G.shape[0])[:, None, None], rows]


class FeatureEnhancer(nn.Module):
    def __init__(self, d_g=160, d_k=64, norm=False):
        super().__init__()
        self.scale = 1.0 / math.sqrt(d_k)
        self.d_k = d_k
        self.global_q = nn.Linear(d_g, d_k, bias=False)
        self.global_k = nn.Linear(d_g, d_k, bias=False)
        self.global_v = nn.Linear(d_g, d_k, bias=False)
        self.local_q = nn.Linear(d_k, d_k, bias=False)
        self.local_k = nn.Linear(d_g, d_k, bias=False)
        self.local_v = nn.Linear(d_g, d_k, bias=False)
        self.fuse_proj = nn.Linear(d_k, d_k, bias=False)
        self.out_proj = nn.Linear(d_k, d_g, bias=False)
        self.norm = LayerNorm(d_g) if norm else None

    def forward(self, G_teams: torch.Tensor, G_scene: torch.Tensor) -> torch.Tensor:
        """Enhance (..., M, N_T, D_g) team blocks against (..., N, D_g) scene tokens."""
        scene = G_scene.unsqueeze(-3)
        g_prime = global_attend(self, G_teams, scene)
        local = local_attend(self, g_prime, G_teams[..., -1:, :])
        fused = fuse(g_prime, local, self.fuse_proj)
        out = G_teams + self.out_proj(fused)
        return self.norm(out) if self.norm is not None else out


def global_attend(enh: FeatureEnhancer, G_j: torch.Tensor, G_scene: torch.Tensor) -> torch.Tensor:
    """softmax(Q K^T / sqrt(D_k)) V with Q from the team, K and V from the whole scene."""
    if G_j.shape[-1] != G_scene.shape[-1]:
        raise DimensionError(f"team tokens {tuple(G_j.shape)} and scene tokens {tuple(G_scene.shape)} differ in width")
    return scaled_dot_attention(enh.global_q(G_j), enh.global_k(G_scene), enh.global_v(G_scene))


def local_attend(enh: FeatureEnhancer, g_prime: torch.Tensor, g_ball: torch.Tensor) -> torch.Tensor:
    """Attention of each team row onto the single ball token; returns the per-row value."""
    k = enh.local_k(g_ball).expand(*g_prime.shape[:-2], 1, enh.d_k)
    v = enh.local_v(g_ball).expand(*g_prime.shape[:-2], 1, enh.d_k)
    return scaled_dot_attention(enh.local_q(g_prime), k, v)


def fuse(g_prime: torch.Tensor, local: torch.Tensor, proj: nn.Module) -> torch.Tensor:
    if g_prime.shape != local.shape:
        raise DimensionError(f"global path {tuple(g_prime.shape)} and local path {tuple(local.shape)} differ")
    return g_prime + proj(local)
