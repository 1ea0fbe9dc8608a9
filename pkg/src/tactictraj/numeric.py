"""Dense float64 tensor primitives and small layers, plus gradient checks and seeded RNG.

Tensors are ``torch.Tensor`` objects in float64; reverse-mode gradients come
from torch's recorded tape.  Random draws never use torch's global generator:
all of them flow through :class:`SeededRng`, which wraps numpy's PCG64 so a
seed reproduces the same stream on every platform.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Callable, Iterable, Mapping, Sequence

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, ContractError, DimensionError

DTYPE = torch.float64
RNG_ALGORITHM = "numpy.PCG64+SeedSequence/v1"

torch.set_default_dtype(DTYPE)
# one intra-op thread keeps reductions bit-reproducible across machines
torch.set_num_threads(1)


def as_tensor(data, shape: Sequence[int] | None = None) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(data, dtype=np.float64))
    if shape is not None:
        shape = tuple(shape)
        if math.prod(shape) != t.numel():
            raise DimensionError(f"cannot view {t.numel()} values as shape {shape}")
        t = t.reshape(shape)
    return t


# --------------------------------------------------------------------------
# Random numbers


def _key_to_int(part) -> int:
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    digest = hashlib.sha256(repr(part).encode()).digest()
    return int.from_bytes(digest[:8], "little")


class SeededRng:
    """Counter-addressed random stream.

    ``SeededRng(seed).child("train", epoch, step)`` always yields the same
    sub-stream regardless of what other streams were consumed before, which
    keeps parallel or resumed work reproducible.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, key: tuple = ()):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.key = tuple(key)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key_to_int(k) for k in self.key))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *key) -> SeededRng:
        return SeededRng(self.seed, self.key + tuple(key))

    def normal(self, shape) -> np.ndarray:
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        return self.generator.standard_normal(shape)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size=size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, a, size=None, p=None, replace=True):
        return self.generator.choice(a, size=size, p=p, replace=replace)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, key={self.key})"


def gaussian(rng: SeededRng, shape) -> torch.Tensor:
    """I.i.d. standard normal draws from ``rng`` as a float64 tensor."""
    return torch.from_numpy(rng.normal(shape))


# --------------------------------------------------------------------------
# Parameters and gradients


class ParamStore:
    """Named parameters with gradient slots, iterated in sorted-name order."""

    def __init__(self, params: Mapping[str, torch.Tensor]):
        self.params = {name: params[name] for name in sorted(params)}
        self.grads = {name: torch.zeros_like(p) for name, p in self.params.items()}

    @classmethod
    def from_module(cls, module: nn.Module) -> ParamStore:
        return cls(dict(module.named_parameters()))

    def names(self) -> list[str]:
        return list(self.params)

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for name in self.grads:
            self.grads[name] = torch.zeros_like(self.params[name])


def backward(loss: torch.Tensor, store: ParamStore) -> ParamStore:
    """Fill ``store.grads`` with d(loss)/d(param) for every parameter."""
    if not isinstance(loss, torch.Tensor) or loss.numel() != 1 or loss.dim() > 1:
        shape = tuple(loss.shape) if isinstance(loss, torch.Tensor) else type(loss).__name__
        raise ContractError(f"backward needs a scalar loss, got {shape}")
    names = store.names()
    tensors = [store.params[n] for n in names]
    if not loss.requires_grad:
        grads = [None] * len(tensors)
    else:
        grads = torch.autograd.grad(loss.reshape(()), tensors, allow_unused=True)
    for name, p, g in zip(names, tensors, grads):
        store.grads[name] = torch.zeros_like(p) if g is None else g.detach().clone()
    return store


def central_difference_check(
    loss_fn: Callable[[], torch.Tensor],
    store: ParamStore,
    rng: SeededRng,
    n_probes: int = 64,
    h: float = 1e-5,
) -> float:
    """Worst relative error between tape gradients and central differences.

    Each probe is a random unit direction ``d`` over all parameters; the
    directional derivative ``<grad, d>`` is compared against
    ``(L(p + h d) - L(p - h d)) / 2h``.
    """
    backward(loss_fn(), store)
    names = store.names()
    worst = 0.0
    for probe in range(n_probes):
        dirs = {n: gaussian(rng.child(probe, n), store[n].shape) for n in names}
        norm = math.sqrt(sum(float((d**2).sum()) for d in dirs.values()))
        analytic = sum(float((store.grads[n] * dirs[n]).sum()) for n in names) / norm
        with torch.no_grad():
            for n in names:
                store[n].add_(dirs[n], alpha=h / norm)
            plus = float(loss_fn())
            for n in names:
                store[n].add_(dirs[n], alpha=-2 * h / norm)
            minus = float(loss_fn())
            for n in names:
                store[n].add_(dirs[n], alpha=h / norm)
        numeric = (plus - minus) / (2 * h)
        scale = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst


# --------------------------------------------------------------------------
# Tensor operations


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.dim() < 2 or b.dim() < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {tuple(a.shape)} x {tuple(b.shape)}")
    return a @ b


def softmax_rows(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Softmax along ``dim`` with max subtraction."""
    shifted = x - x.amax(dim=dim, keepdim=True).detach()
    e = torch.exp(shifted)
    return e / e.sum(dim=dim, keepdim=True)


def scaled_dot_attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    mask: torch.Tensor | None = None,
    return_weights: bool = False,
):
    """softmax(Q K^T / sqrt(d)) V over the last two axes (leading axes batch).

    ``mask`` is boolean and broadcastable to the logits; False entries are
    excluded from the softmax.
    """
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query/key feature mismatch: {tuple(q.shape)} vs {tuple(k.shape)}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"key/value count mismatch: {tuple(k.shape)} vs {tuple(v.shape)}")
    logits = (q @ k.transpose(-1, -2)) / math.sqrt(q.shape[-1])
    if mask is not None:
        logits = logits.masked_fill(~mask, float("-inf"))
    weights = softmax_rows(logits)
    out = weights @ v
    return (out, weights) if return_weights else out


def layer_norm(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    mean = x.mean(dim=-1, keepdim=True)
    var = ((x - mean) ** 2).mean(dim=-1, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps) * weight + bias


def sinusoidal_embedding(positions: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Standard transformer sinusoid table for integer or real positions."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=DTYPE) / half)
    angles = positions.to(DTYPE)[..., None] * freqs
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[..., :1])], dim=-1)
    return emb


# --------------------------------------------------------------------------
# Layers


def mlp_forward(params: Mapping[str, torch.Tensor], x: torch.Tensor, sizes: Sequence[int], prefix: str = "") -> torch.Tensor:
    """Affine/ReLU chain; the last layer stays linear.

    Parameters are looked up as ``{prefix}layers.{i}.weight`` (out x in) and
    ``{prefix}layers.{i}.bias``.
    """
    if x.shape[-1] != sizes[0]:
        raise ConfigError(f"MLP expects input width {sizes[0]}, got {x.shape[-1]}")
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        try:
            w = params[f"{prefix}layers.{i}.weight"]
            b = params[f"{prefix}layers.{i}.bias"]
        except KeyError as exc:
            raise ConfigError(f"missing MLP parameter {exc.args[0]}") from None
        if tuple(w.shape) != (sizes[i + 1], sizes[i]):
            raise ConfigError(f"layer {i} weight has shape {tuple(w.shape)}, sizes call for {(sizes[i + 1], sizes[i])}")
        x = matmul(x, w.T) + b
        if i < n_layers - 1:
            x = torch.relu(x)
    return x


class MLP(nn.Module):
    def __init__(self, sizes: Sequence[int]):
        super().__init__()
        if len(sizes) < 2:
            raise ConfigError("an MLP needs at least input and output widths")
        self.sizes = tuple(int(s) for s in sizes)
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return mlp_forward(dict(self.named_parameters()), x, self.sizes)


class LayerNorm(nn.Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return layer_norm(x, self.weight, self.bias, self.eps)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int = 1):
        super().__init__()
        if dim % n_heads:
            raise ConfigError(f"width {dim} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        *lead, n, d = x.shape
        h = self.n_heads
        q, k, v = self.qkv(x).reshape(*lead, n, 3, h, d // h).movedim(-3, 0).unbind(0)
        q, k, v = (t.transpose(-2, -3) for t in (q, k, v))  # (..., h, n, d/h)
        if mask is not None:
            mask = mask.unsqueeze(-3)
        y = scaled_dot_attention(q, k, v, mask)
        return self.out(y.transpose(-2, -3).reshape(*lead, n, d))


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block with a ReLU feed-forward layer."""

    def __init__(self, dim: int, n_heads: int = 1, ff_mult: int = 2):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, n_heads)
        self.norm2 = LayerNorm(dim)
        self.ff = MLP([dim, ff_mult * dim, dim])

    def forward(self, x, mask=None):
        x = x + self.attn(self.norm1(x), mask)
        return x + self.ff(self.norm2(x))


def zero_module(module: nn.Module) -> nn.Module:
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


def init_parameters(module: nn.Module, rng: SeededRng) -> nn.Module:
    """Re-draw every parameter from ``rng`` so construction is seed-stable.

    Matrices get N(0, 1/fan_in); vectors named ``bias`` get zeros and
    layer-norm weights ones.
    """
    with torch.no_grad():
        for name, p in sorted(module.named_parameters()):
            if name.endswith("bias"):
                p.zero_()
            elif p.dim() == 1:
                p.fill_(1.0)
            else:
                fan_in = p.shape[-1]
                p.copy_(gaussian(rng.child(name), p.shape) / math.sqrt(fan_in))
    return module


def count_parameters(modules: Iterable[nn.Module]) -> int:
    return sum(p.numel() for m in modules for p in m.parameters())
