"""Model and training configuration with JSON round trip and seed precedence."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError

SEED_ENV = "TACTICTRAJ_SEED"


def _from_dict(cls, d: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 128
    enc_layers: int = 2
    n_heads: int = 4
    d_a: int = 128
    d_c: int = 32
    pool: str = "mean"
    denoiser_width: int = 128
    denoiser_blocks: int = 2
    init_width: int = 128
    n_samples: int = 20
    diffusion_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.05
    s_g: float = 0.1
    denoise_steps_used: int = 5
    full_ancestral: bool = False
    d_k: int = 64
    enhance_norm: bool = False
    d_h: int = 64
    k: int = 5
    d_s: int = 32
    similarity_gain: float = 1.0
    similarity_tokens: str = "trajectory"  # or "condition" for the full g_i rows
    head_hidden: int = 128
    tied_head: bool = True

    def __post_init__(self):
        if self.denoise_steps_used < 1 or self.denoise_steps_used > self.diffusion_steps:
            raise ConfigError(f"denoise_steps_used must lie in [1, {self.diffusion_steps}], got {self.denoise_steps_used}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.similarity_tokens not in ("trajectory", "condition"):
            raise ConfigError(f"similarity_tokens must be 'trajectory' or 'condition', got {self.similarity_tokens!r}")
        if self.pool not in ("mean", "last"):
            raise ConfigError(f"pool must be 'mean' or 'last', got {self.pool!r}")

    @property
    def d_g(self) -> int:
        return self.d_a + self.d_c

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return _from_dict(cls, d, "model config")


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 100
    tactic_epochs: int = 100
    joint_epochs: int = 30
    batch_size: int = 32
    lr_denoiser: float = 1e-3
    lr_denoiser_step: int = 16
    lr_denoiser_gamma: float = 0.5
    lr_tactic: float = 1e-3
    lr_tactic_step: int = 16
    lr_tactic_gamma: float = 0.5
    lr_joint: float = 2e-3
    lr_joint_step: int = 32
    lr_joint_gamma: float = 0.9
    eta: float = 1.0
    alpha_w: float = 1.0
    beta_w: float = 0.001
    gamma_focal: float = 4.0
    p_drop: float = 0.1
    grad_clip: float = 5.0
    n_mask_samples: int = 16
    keep_probability: float = 0.5
    dist_on_final: bool = True
    joint_from_scratch: bool = False

    def __post_init__(self):
        for name in ("epochs", "tactic_epochs", "joint_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.p_drop <= 1.0:
            raise ConfigError(f"p_drop must lie in [0, 1], got {self.p_drop}")
        if min(self.eta, self.alpha_w, self.beta_w) < 0:
            raise ConfigError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return _from_dict(cls, d, "train config")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from None


def resolve_seed(file_seed: int | None, flag_seed: int | None = None, environ=None) -> int:
    """Flag beats the environment variable, which beats the config file."""
    if flag_seed is not None:
        return int(flag_seed)
    environ = os.environ if environ is None else environ
    raw = environ.get(SEED_ENV)
    if raw not in (None, ""):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None
    return int(file_seed or 0)


def load_train_file(path) -> tuple[ModelConfig, TrainConfig, dict]:
    """A training file holds optional "model", "train" and "dataset" sections.

    The dataset section is returned raw for ``DatasetConfig.from_dict``.
    """
    raw = load_json(path)
    if not isinstance(raw, dict) or set(raw) - {"model", "train", "dataset"}:
        raise ConfigError(f"{path}: expected an object with 'model', 'train' and/or 'dataset' sections")
    return ModelConfig.from_dict(raw.get("model", {})), TrainConfig.from_dict(raw.get("train", {})), dict(raw.get("dataset", {}))


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
