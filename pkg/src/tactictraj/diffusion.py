"""Conditional DDPM over future trajectories with classifier-free guidance.

Schedule arrays are indexed ``t = 0 .. T_steps-1``; the state at index ``t``
has marginal ``sqrt(abar_t) y0 + sqrt(1 - abar_t) z`` and index ``-1`` is the
clean trajectory.  A reverse step at index ``t`` therefore maps the state at
``t`` to the state at ``t-1``.  Trajectories are normalised displacements
from each agent's last observed position, shape (..., N, T_pred, 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .encoder import ConditionSet
from .errors import ArgumentError, DimensionError, DomainError
from .numeric import MLP, LayerNorm, SeededRng, TransformerBlock, gaussian, sinusoidal_embedding


@dataclass(frozen=True)
class NoiseSchedule:
    beta: torch.Tensor
    alpha: torch.Tensor
    alpha_bar: torch.Tensor

    @classmethod
    def linear(cls, steps: int = 100, beta_start: float = 1e-4, beta_end: float = 0.05) -> NoiseSchedule:
        if steps < 1 or not (0 < beta_start <= beta_end < 1):
            raise ArgumentError(f"invalid schedule: steps={steps}, beta in [{beta_start}, {beta_end}]")
        return cls.from_betas(torch.linspace(beta_start, beta_end, steps, dtype=torch.float64))

    @classmethod
    def from_betas(cls, beta: torch.Tensor) -> NoiseSchedule:
        beta = torch.as_tensor(beta, dtype=torch.float64)
        if bool(((beta < 0) | (beta >= 1)).any()):
            raise ArgumentError("betas must lie in [0, 1)")
        alpha = 1.0 - beta
        return cls(beta, alpha, torch.cumprod(alpha, dim=0))

    @property
    def steps(self) -> int:
        return self.beta.shape[0]

    def check(self, t: int) -> int:
        if not 0 <= int(t) < self.steps:
            raise ArgumentError(f"timestep {t} outside [0, {self.steps})")
        return int(t)


def _bcast(values: torch.Tensor, t, like: torch.Tensor) -> torch.Tensor:
    """Gather schedule values at ``t`` and broadcast over trailing (N, T, 2)."""
    v = values[torch.as_tensor(t, dtype=torch.long)]
    return v.reshape(*v.shape, *([1] * (like.dim() - v.dim())))


def forward_diffuse_marginal(y0, t, schedule: NoiseSchedule, rng: SeededRng | None = None, z=None) -> torch.Tensor:
    """Closed-form sample of the noised state at index ``t`` (scalar or per scene)."""
    t_tensor = torch.as_tensor(t, dtype=torch.long)
    if t_tensor.dim() == 0 and int(t_tensor) == -1:
        return y0
    if bool(((t_tensor < 0) | (t_tensor >= schedule.steps)).any()):
        raise ArgumentError(f"timestep {t_tensor.tolist()} outside [0, {schedule.steps})")
    if z is None:
        z = gaussian(rng, y0.shape)
    ab = _bcast(schedule.alpha_bar, t_tensor, y0)
    return torch.sqrt(ab) * y0 + torch.sqrt(1.0 - ab) * z


def forward_diffuse_step(y_prev, t: int, schedule: NoiseSchedule, rng: SeededRng) -> torch.Tensor:
    """One Markov step q(y_t | y_{t-1}) = N(sqrt(1 - beta_t) y_{t-1}, beta_t I)."""
    schedule.check(t)
    beta = schedule.beta[t]
    return torch.sqrt(1.0 - beta) * y_prev + torch.sqrt(beta) * gaussian(rng, y_prev.shape)


def denoise_step(y_next, eps_hat, t: int, schedule: NoiseSchedule, z=None) -> torch.Tensor:
    """Reverse update from index ``t`` to ``t-1``; noise is suppressed at t = 0."""
    schedule.check(t)
    a = schedule.alpha[t]
    ab = schedule.alpha_bar[t]
    mean = (y_next - (1.0 - a) / torch.sqrt(1.0 - ab) * eps_hat) / torch.sqrt(a)
    if t == 0 or z is None:
        return mean
    return mean + torch.sqrt(1.0 - a) * z


# --------------------------------------------------------------------------
# Networks


class Denoiser(nn.Module):
    """Noise estimator f_eps(y, G, t) with cross-agent self-attention."""

    def __init__(self, t_pred=20, d_g=160, width=128, n_blocks=2, n_heads=4):
        super().__init__()
        self.t_pred = t_pred
        self.width = width
        self.traj_proj = nn.Linear(2 * t_pred, width)
        self.cond_proj = nn.Linear(d_g, width)
        self.time_mlp = MLP([width, width, width])
        self.blocks = nn.ModuleList(TransformerBlock(width, n_heads) for _ in range(n_blocks))
        self.norm = LayerNorm(width)
        self.head = nn.Linear(width, 2 * t_pred)

    def forward(self, y: torch.Tensor, G: torch.Tensor, t) -> torch.Tensor:
        if y.shape[-2:] != (self.t_pred, 2) or y.shape[:-2] != G.shape[:-1]:
            raise DimensionError(f"denoiser got y {tuple(y.shape)} with conditions {tuple(G.shape)}")
        t = torch.as_tensor(t, dtype=torch.long)
        # t is a scalar or indexes the leading (scene) axes of y
        temb = self.time_mlp(sinusoidal_embedding(t.reshape(-1), self.width))
        temb = temb.reshape(*t.shape, *([1] * (y.dim() - 2 - t.dim())), self.width)
        h = self.traj_proj(y.flatten(-2)) + self.cond_proj(G) + temb
        for block in self.blocks:
            h = block(h)
        return self.head(self.norm(h)).reshape(y.shape)


def guided_noise(denoiser: Denoiser, y, cond: ConditionSet, t, s_g: float) -> torch.Tensor:
    """f(y, A) + s_g * (f(y, G) - f(y, A)), both branches in one batched call."""
    null = cond.null()
    both = denoiser(torch.stack([y, y]), torch.stack([null.G, cond.G]), _stack_t(t, y))
    uncond, conditional = both[0], both[1]
    return uncond + s_g * (conditional - uncond)


def _stack_t(t, y):
    t = torch.as_tensor(t, dtype=torch.long)
    if t.dim() == 0:
        return t
    return torch.stack([t, t])


class Initializer(nn.Module):
    """Leapfrog-style initializer: mean, spread and S sample offsets per agent."""

    def __init__(self, t_pred=20, d_g=160, width=128, n_samples=20, n_heads=4):
        super().__init__()
        self.t_pred = t_pred
        self.n_samples = n_samples
        self.trunk = MLP([d_g, width, width])
        self.context = TransformerBlock(width, n_heads)
        self.norm = LayerNorm(width)
        self.mean_head = nn.Linear(width, 2 * t_pred)
        self.logvar_head = nn.Linear(width, 1)
        self.offset_head = nn.Linear(width, n_samples * 2 * t_pred)

    def forward(self, G: torch.Tensor):
        h = self.norm(self.context(self.trunk(G)))
        mu = self.mean_head(h).reshape(*G.shape[:-1], self.t_pred, 2)
        log_var = self.logvar_head(h).squeeze(-1)
        offsets = self.offset_head(h).reshape(*G.shape[:-1], self.n_samples, self.t_pred, 2)
        return mu, log_var, offsets


def init_samples(initializer: Initializer, cond: ConditionSet):
    """Initial trajectories (..., S, N, T, 2) and per-agent sigma (..., N).

    Offsets are centred across samples and scaled to unit RMS, so the sample
    mean equals ``mu`` and the spread is carried by ``sigma`` alone.
    """
    mu, log_var, offsets = initializer(cond.G)
    offsets = offsets - offsets.mean(dim=-3, keepdim=True)
    rms = torch.sqrt((offsets**2).mean(dim=(-3, -2, -1), keepdim=True) + 1e-12)
    offsets = offsets / torch.clamp(rms, min=1e-6)
    sigma = torch.exp(0.5 * log_var)
    samples = mu.unsqueeze(-3) + sigma[..., None, None, None] * offsets
    return samples.movedim(-4, -3), sigma, mu


@dataclass(frozen=True)
class GuidanceConfig:
    s_g: float = 0.1
    denoise_steps_used: int = 5
    full_ancestral: bool = False

    def validate(self, schedule: NoiseSchedule) -> None:
        if self.denoise_steps_used < 1:
            raise ArgumentError("denoise_steps_used must be at least 1")
        if self.denoise_steps_used > schedule.steps:
            raise ArgumentError(f"denoise_steps_used={self.denoise_steps_used} exceeds {schedule.steps} diffusion steps")
        if not math.isfinite(self.s_g):
            raise ArgumentError("guidance scale must be finite")


def refine(denoiser, y_init, cond: ConditionSet, schedule: NoiseSchedule, guidance: GuidanceConfig, noise) -> torch.Tensor:
    """Guided reverse steps from index ``start`` down to 0.

    ``noise(t, shape)`` supplies z for step ``t``; ``cond`` must already carry
    the sample axis of ``y_init``.
    """
    start = schedule.steps - 1 if guidance.full_ancestral else guidance.denoise_steps_used - 1
    y = y_init
    for t in range(start, -1, -1):
        eps = guided_noise(denoiser, y, cond, t, guidance.s_g)
        y = denoise_step(y, eps, t, schedule, None if t == 0 else noise(t, y.shape))
    return y


def sample_relative(denoiser, initializer, cond: ConditionSet, schedule, guidance: GuidanceConfig, rng: SeededRng):
    """Sample normalised displacements (..., S, N, T, 2) for conditions (..., N, D_g)."""
    guidance.validate(schedule)
    y0, sigma, _ = init_samples(initializer, cond)
    if guidance.full_ancestral:
        y0 = gaussian(rng.child("prior"), y0.shape)
    cond_s = cond.expand_samples(y0.shape[-4])
    return refine(denoiser, y0, cond_s, schedule, guidance, lambda t, shape: gaussian(rng.child("z", t), shape)), sigma


# --------------------------------------------------------------------------
# Losses


def loss_noise(denoiser, y0, cond: ConditionSet, t, schedule: NoiseSchedule, z) -> torch.Tensor:
    """Per-agent L2 norm of (z - f_eps(y_t, G, t)), averaged over agents and scenes."""
    y_t = forward_diffuse_marginal(y0, t, schedule, z=z)
    eps = denoiser(y_t, cond.G, t)
    return torch.linalg.vector_norm(z - eps, dim=(-2, -1)).mean()


def sample_errors(predictions: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Per-sample, per-agent L2 norm over (T, 2); shape (..., S, N)."""
    return torch.linalg.vector_norm(predictions - truth.unsqueeze(-4), dim=(-2, -1))


def loss_dist_unc(predictions: torch.Tensor, truth: torch.Tensor, sigma) -> tuple[torch.Tensor, torch.Tensor]:
    """Variety loss and uncertainty loss.

    ``predictions`` (..., S, N, T, 2), ``truth`` (..., N, T, 2), ``sigma``
    broadcastable to (..., N).  L_dist takes the best sample per scene on the
    agent-mean error; L_unc uses each agent's errors summed over samples.
    """
    sigma = torch.as_tensor(sigma, dtype=predictions.dtype)
    if bool((sigma <= 0).any()):
        raise DomainError("sigma must be strictly positive")
    err = sample_errors(predictions, truth)
    l_dist = err.mean(dim=-1).min(dim=-1).values.mean()
    var = sigma**2
    n_samples = err.shape[-2]
    l_unc = (err.sum(dim=-2) / (var * n_samples) + torch.log(var)).mean()
    return l_dist, l_unc
