"""Cooperative games with exact pairwise Banzhaf interaction, plus masked similarity targets."""

from __future__ import annotations

import json
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ArgumentError, CapacityError, ConfigError, DimensionError, SchemaError
from .numeric import SeededRng, softmax_rows

MAX_EXACT_PLAYERS = 22


@dataclass(frozen=True)
class CooperativeGame:
    """``phi`` maps a coalition bitmask (bit p set = player p present) to a payoff."""

    n_players: int
    phi: Callable[[int], float]

    def value(self, coalition: int) -> float:
        return float(self.phi(coalition))


class TabularGame(CooperativeGame):
    def __init__(self, n_players: int, table: dict[int, float]):
        missing = [m for m in range(1 << n_players) if m not in table]
        if missing:
            raise SchemaError(f"game table lacks {len(missing)} coalitions, first {missing[0]}")
        super().__init__(n_players, table.__getitem__)

    @classmethod
    def load(cls, path) -> TabularGame:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
            n = int(raw["n"])
            table = {int(k): float(v) for k, v in raw["phi"].items()}
        except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
            raise SchemaError(f"{path}: malformed game file ({exc})") from None
        if n < 2:
            raise SchemaError(f"{path}: a game needs at least 2 players, got n={n}")
        try:
            return cls(n, table)
        except SchemaError as exc:
            raise SchemaError(f"{path}: {exc}") from None


def additive_game(weights) -> CooperativeGame:
    w = [float(x) for x in weights]
    return CooperativeGame(len(w), lambda c: sum(w[p] for p in range(len(w)) if c >> p & 1))


def unanimity_game(n: int, members) -> CooperativeGame:
    mask = sum(1 << p for p in members)
    return CooperativeGame(n, lambda c: 1.0 if c & mask == mask else 0.0)


def _check_pair(game: CooperativeGame, i: int, j: int) -> None:
    n = game.n_players
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ArgumentError(f"need two distinct players in [0, {n}), got ({i}, {j})")
    if n > MAX_EXACT_PLAYERS:
        raise CapacityError(f"exact enumeration is capped at n <= {MAX_EXACT_PLAYERS} players, got {n}")


def _others(n: int, i: int, j: int) -> list[int]:
    return [p for p in range(n) if p not in (i, j)]


def _subsets(players: list[int]):
    """Bitmasks of every subset of ``players`` in Gray-code order."""
    mask = 0
    yield mask
    for step in range(1, 1 << len(players)):
        mask ^= 1 << players[(step & -step).bit_length() - 1]
        yield mask


def banzhaf_interaction_exact(game: CooperativeGame, i: int, j: int) -> float:
    """Sum over C in N \\ {i, j} of p(C) [phi(C+ij) + phi(C) - phi(C+i) - phi(C+j)], p(C) = 2^-(n-2)."""
    _check_pair(game, i, j)
    bi, bj = 1 << i, 1 << j
    others = _others(game.n_players, i, j)
    terms = []
    for c in _subsets(others):
        terms.append(game.value(c | bi | bj) + game.value(c) - game.value(c | bi) - game.value(c | bj))
    return math.fsum(terms) / (1 << len(others))


def banzhaf_interaction_marginal(game: CooperativeGame, i: int, j: int) -> float:
    """Same quantity as the mean change in player i's marginal contribution when j joins.

    Computes the two Banzhaf values of i (with j forced in, with j forced
    out) separately and differences them.
    """
    _check_pair(game, i, j)
    bi, bj = 1 << i, 1 << j
    others = _others(game.n_players, i, j)
    with_j = math.fsum(game.value(c | bj | bi) - game.value(c | bj) for c in _subsets(others))
    without_j = math.fsum(game.value(c | bi) - game.value(c) for c in _subsets(others))
    return (with_j - without_j) / (1 << len(others))


# --------------------------------------------------------------------------
# Agent-tactic similarity game


def similarity_logits(agent_tokens: torch.Tensor, tactic_embeddings: torch.Tensor, projection=None) -> torch.Tensor:
    """S[a, t] = <proj_a(token_a), proj_t(c_t)> / sqrt(D_s); shapes (..., N_T, D) and (..., k, D_C)."""
    if projection is not None:
        agent_tokens, tactic_embeddings = projection(agent_tokens, tactic_embeddings)
    if agent_tokens.shape[-1] != tactic_embeddings.shape[-1]:
        raise DimensionError(
            f"projected agent tokens {tuple(agent_tokens.shape)} and tactic embeddings "
            f"{tuple(tactic_embeddings.shape)} differ in width"
        )
    d_s = agent_tokens.shape[-1]
    return agent_tokens @ tactic_embeddings.transpose(-1, -2) / math.sqrt(d_s)


class SimilarityProjection(nn.Module):
    def __init__(self, d_agent=160, d_tactic=32, d_s=32):
        super().__init__()
        self.agent = nn.Linear(d_agent, d_s, bias=False)
        self.tactic = nn.Linear(d_tactic, d_s, bias=False)

    def forward(self, agent_tokens, tactic_embeddings):
        return self.agent(agent_tokens), self.tactic(tactic_embeddings)


def similarity_phi(S) -> Callable[[int], float]:
    """Default payoff over a joint player set: agents are bits 0..N_T-1, tactics the next k bits.

    phi(C) = log(1 + sum of exp S[a, t] over agents a and tactics t in C),
    so the empty and single-sided coalitions are worth 0.
    """
    S = np.asarray(torch.as_tensor(S).detach(), dtype=np.float64)
    n_a, n_t = S.shape
    e = np.exp(S)

    def phi(c: int) -> float:
        agents = [a for a in range(n_a) if c >> a & 1]
        tactics = [t for t in range(n_t) if c >> (n_a + t) & 1]
        if not agents or not tactics:
            return 0.0
        return math.log1p(float(e[np.ix_(agents, tactics)].sum()))

    return phi


def similarity_game(S) -> CooperativeGame:
    S = torch.as_tensor(S)
    return CooperativeGame(S.shape[-2] + S.shape[-1], similarity_phi(S))


@dataclass(frozen=True)
class MaskSamplerConfig:
    n_mask_samples: int = 16
    keep_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_mask_samples < 1:
            raise ConfigError(f"n_mask_samples must be >= 1, got {self.n_mask_samples}")
        if not 0.0 < self.keep_probability <= 1.0:
            raise ConfigError(f"keep_probability must lie in (0, 1], got {self.keep_probability}")

    @classmethod
    def full(cls) -> MaskSamplerConfig:
        return cls(n_mask_samples=1, keep_probability=1.0)


def _bernoulli_mask(rng: SeededRng, shape, n: int, keep: float) -> np.ndarray:
    """Bernoulli(keep) masks over the last axis of length ``n``; all-zero rows are redrawn."""
    mask = rng.child(0).uniform(size=(*shape, n)) < keep
    attempt = 1
    while True:
        empty = ~mask.any(axis=-1)
        if not empty.any():
            return mask
        redraw = rng.child(attempt).uniform(size=(*shape, n)) < keep
        mask[empty] = redraw[empty]
        attempt += 1


def masked_interaction(S: torch.Tensor, config: MaskSamplerConfig, rng: SeededRng | None = None) -> torch.Tensor:
    """Oracle interaction targets I_B (..., N_T, k) from similarity logits S.

    For each mask sample, the agent-to-tactic view is the row softmax of S
    with masked-out agents replaced by uniform rows, and the tactic-to-agent
    view is the column softmax with masked-out tactics replaced by uniform
    columns.  The two views are averaged, then averaged over samples.
    """
    n_a, n_t = S.shape[-2:]
    a2t_full = softmax_rows(S, dim=-1)
    t2a_full = softmax_rows(S, dim=-2)
    if config.keep_probability >= 1.0:
        return 0.5 * (a2t_full + t2a_full)
    if rng is None:
        rng = SeededRng(config.seed, ("masks",))
    lead = tuple(S.shape[:-2])
    uniform_row = torch.full_like(S, 1.0 / n_t)
    uniform_col = torch.full_like(S, 1.0 / n_a)
    total = torch.zeros_like(S)
    for m in range(config.n_mask_samples):
        sub = rng.child("mask", m)
        mask_a = torch.from_numpy(_bernoulli_mask(sub.child("agents"), lead, n_a, config.keep_probability))
        mask_t = torch.from_numpy(_bernoulli_mask(sub.child("tactics"), lead, n_t, config.keep_probability))
        a2t = torch.where(mask_a[..., :, None], a2t_full, uniform_row)
        t2a = torch.where(mask_t[..., None, :], t2a_full, uniform_col)
        total = total + 0.5 * (a2t + t2a)
    return total / config.n_mask_samples
