"""Learned surrogate for agent-tactic interaction matrices."""

from __future__ import annotations

import torch
from torch import nn

from .enhance import split_teams
from .errors import DimensionError
from .numeric import MLP, LayerNorm, MultiHeadSelfAttention, softmax_rows


class BanzhafLearner(nn.Module):
    """gamma_o(SA(gamma_ctx(A))) over all agents, row-softmaxed to k tactic slots."""

    def __init__(self, d_a=128, d_h=64, k=5):
        super().__init__()
        self.k = k
        self.ctx = MLP([d_a, d_h, d_h])
        self.norm = LayerNorm(d_h)
        self.attn = MultiHeadSelfAttention(d_h, 1)
        self.out = MLP([d_h, d_h, k])

    def forward(self, A: torch.Tensor) -> torch.Tensor:
        h = self.ctx(A)
        h = h + self.attn(self.norm(h))
        return softmax_rows(self.out(h), dim=-1)


def predict_interaction(learner: BanzhafLearner, A: torch.Tensor, rows: torch.Tensor) -> torch.Tensor:
    """Scene-level (..., N, k) prediction sliced into (..., M, N_T, k) team blocks."""
    return split_teams(learner(A), rows)


def loss_bi(I_pred: torch.Tensor, I_B: torch.Tensor) -> torch.Tensor:
    """Frobenius norm per team block, summed over the team axis and averaged over scenes.

    Shapes (..., M, N_T, k).
    """
    if I_pred.shape != I_B.shape:
        raise DimensionError(f"interaction shapes differ: {tuple(I_pred.shape)} vs {tuple(I_B.shape)}")
    per_team = torch.linalg.vector_norm(I_pred - I_B, dim=(-2, -1))
    return per_team.sum(dim=-1).mean() if per_team.dim() > 1 else per_team.sum()
