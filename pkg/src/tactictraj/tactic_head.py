"""GAT tactic classifier over interaction-weighted team tokens, with top-k extraction and focal loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import ArgumentError, DimensionError
from .numeric import MLP, softmax_rows


def fuse_weighted(G_hat: torch.Tensor, I_pred: torch.Tensor) -> torch.Tensor:
    """Scale each team token by its interaction row mass; (..., N_T, D_g) x (..., N_T, k)."""
    if G_hat.shape[:-1] != I_pred.shape[:-1]:
        raise DimensionError(f"token rows {tuple(G_hat.shape)} do not match interaction rows {tuple(I_pred.shape)}")
    return I_pred.sum(dim=-1, keepdim=True) * G_hat


class GATLayer(nn.Module):
    """Single-head graph attention over a fully connected graph with self loops."""

    def __init__(self, dim: int, negative_slope: float = 0.2):
        super().__init__()
        self.proj = nn.Linear(dim, dim, bias=False)
        self.att_src = nn.Parameter(torch.zeros(1, dim))
        self.att_dst = nn.Parameter(torch.zeros(1, dim))
        self.negative_slope = negative_slope

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.proj(x)
        # e[i, j] = LeakyReLU(a_dst . h_i + a_src . h_j)
        e = (h * self.att_dst[0]).sum(-1, keepdim=True) + (h * self.att_src[0]).sum(-1).unsqueeze(-2)
        weights = softmax_rows(F.leaky_relu(e, self.negative_slope), dim=-1)
        return F.elu(weights @ h)


class TacticHead(nn.Module):
    def __init__(self, d_g=160, hidden=128, vocab_size=16, n_teams=2, tied=True):
        super().__init__()
        self.tied = tied
        copies = 1 if tied else n_teams
        self.gat = nn.ModuleList(GATLayer(d_g) for _ in range(copies))
        self.mlp = nn.ModuleList(MLP([d_g, hidden, vocab_size]) for _ in range(copies))

    def logits(self, w: torch.Tensor, team: int = 0) -> torch.Tensor:
        c = 0 if self.tied else team
        return self.mlp[c](self.gat[c](w).mean(dim=-2, keepdim=True)).squeeze(-2)

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        """Tactic distributions (..., M, V) from weighted team tokens (..., M, N_T, D_g)."""
        if self.tied:
            return predict_tactics(self, w)
        return torch.stack([softmax_rows(self.logits(w[..., m, :, :], m)) for m in range(w.shape[-3])], dim=-2)


def predict_tactics(head: TacticHead, w: torch.Tensor, team: int = 0) -> torch.Tensor:
    return softmax_rows(head.logits(w, team), dim=-1)


def topk_extract(p: torch.Tensor, W: torch.Tensor, k: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Top-k labels (descending probability, ties to the lower id) and their table rows."""
    V = p.shape[-1]
    if not 1 <= k <= V:
        raise ArgumentError(f"top-k needs 1 <= k <= {V}, got {k}")
    order = torch.sort(p.detach(), dim=-1, descending=True, stable=True).indices
    labels = order[..., :k]
    return labels, W[labels]


@dataclass(frozen=True)
class FocalConfig:
    alpha: torch.Tensor
    gamma: float = 4.0

    def __post_init__(self):
        if bool((torch.as_tensor(self.alpha) < 0).any()):
            raise ArgumentError("focal class weights must be non-negative")
        if self.gamma < 0:
            raise ArgumentError(f"focal gamma must be non-negative, got {self.gamma}")

    @classmethod
    def uniform(cls, vocab_size: int, gamma: float = 4.0) -> FocalConfig:
        return cls(torch.ones(vocab_size, dtype=torch.float64), gamma)


def focal_loss(p: torch.Tensor, y, config: FocalConfig) -> torch.Tensor:
    """-alpha[y] (1 - p_y)^gamma log p_y, elementwise over leading axes of ``p`` (..., V)."""
    y = torch.as_tensor(y, dtype=torch.long)
    V = p.shape[-1]
    if y.numel() and (int(y.min()) < 0 or int(y.max()) >= V):
        raise ArgumentError(f"tactic label outside [0, {V})")
    p_y = torch.gather(p, -1, y.unsqueeze(-1)).squeeze(-1)
    p_y = torch.clamp(p_y, min=1e-12)
    alpha = torch.as_tensor(config.alpha, dtype=p.dtype)[y]
    return -alpha * (1.0 - p_y) ** config.gamma * torch.log(p_y)


def tactic_loss(p: torch.Tensor, y, config: FocalConfig) -> torch.Tensor:
    """Focal loss summed over teams (axis -2 of ``p``) and averaged over scenes."""
    return focal_loss(p, y, config).sum(dim=-1).mean()


def class_weights_from_counts(counts) -> torch.Tensor:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or not (counts > 0).any():
        raise ArgumentError("class weights need a histogram with at least one nonzero count")
    raw = 1.0 / np.maximum(counts, 1.0)
    raw[counts == 0] = raw[counts > 0].max()
    return torch.from_numpy(raw * (len(counts) / raw.sum()))
