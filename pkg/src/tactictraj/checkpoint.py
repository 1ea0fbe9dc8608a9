"""Checkpoint directory: ``manifest.json`` plus one little-endian ``params.bin`` blob.

The manifest lists every array (model parameters, then optimizer moments)
with its name, shape, byte offset and dtype; offsets tile the blob exactly.
Nothing time-dependent is written, so equal runs give equal bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, TrainConfig
from .errors import CheckpointVersionError
from .numeric import RNG_ALGORITHM
from .scenes import DatasetConfig, NormalizationParams, TacticEntry, TacticVocabulary

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
BLOB = "params.bin"
_DTYPES = {"float64": "<f8", "float32": "<f4"}


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    dataset: DatasetConfig
    norm: NormalizationParams
    vocab: TacticVocabulary
    params: dict[str, torch.Tensor]
    optimizer: dict[str, torch.Tensor] = field(default_factory=dict)
    progress: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def config_snapshot(self) -> dict:
        return {
            "model": self.model_config.to_dict(),
            "train": self.train_config.to_dict(),
            "dataset": self.dataset.to_dict(),
            "normalization": self.norm.to_dict(),
            "vocabulary": json.loads(self.vocab.to_json()),
        }


def _index(arrays: dict[str, torch.Tensor], section: str, dtype: str, offset: int):
    entries, chunks = [], []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name].detach().cpu().numpy().astype(_DTYPES[dtype]))
        raw = a.tobytes()
        entries.append({"name": name, "section": section, "shape": list(a.shape), "offset": offset, "nbytes": len(raw), "dtype": dtype})
        chunks.append(raw)
        offset += len(raw)
    return entries, chunks, offset


def save_checkpoint(ckpt: Checkpoint, out_dir, dtype: str = "float64") -> Path:
    if dtype not in _DTYPES:
        raise CheckpointVersionError(f"unsupported checkpoint dtype {dtype!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p_entries, p_chunks, offset = _index(ckpt.params, "params", dtype, 0)
    # optimizer moments always stay float64 so resumed runs continue exactly
    o_entries, o_chunks, offset = _index(ckpt.optimizer, "optimizer", "float64", offset)
    manifest = {
        "format_version": FORMAT_VERSION,
        "rng_algorithm": RNG_ALGORITHM,
        "byte_order": "little",
        "config": ckpt.config_snapshot(),
        "index": p_entries + o_entries,
        "blob_bytes": offset,
        "progress": ckpt.progress,
        "extra": ckpt.extra,
    }
    tmp = out / (BLOB + ".tmp")
    tmp.write_bytes(b"".join(p_chunks + o_chunks))
    tmp.replace(out / BLOB)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return out


def read_manifest(ckpt_dir) -> dict:
    path = Path(ckpt_dir) / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise CheckpointVersionError(f"{path}: unreadable checkpoint manifest ({exc})") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {manifest.get('format_version')!r}, expected {FORMAT_VERSION}")
    if manifest.get("rng_algorithm") != RNG_ALGORITHM:
        raise CheckpointVersionError(f"{path}: RNG algorithm {manifest.get('rng_algorithm')!r}, expected {RNG_ALGORITHM!r}")
    return manifest


def load_checkpoint(ckpt_dir) -> Checkpoint:
    ckpt_dir = Path(ckpt_dir)
    manifest = read_manifest(ckpt_dir)
    blob = (ckpt_dir / BLOB).read_bytes()
    if len(blob) != manifest["blob_bytes"]:
        raise CheckpointVersionError(f"{ckpt_dir / BLOB}: {len(blob)} bytes, manifest says {manifest['blob_bytes']}")
    params, optim = {}, {}
    expected = 0
    for e in manifest["index"]:
        if e["offset"] != expected:
            raise CheckpointVersionError(f"{ckpt_dir}: index entry {e['name']} breaks the blob tiling")
        a = np.frombuffer(blob, dtype=_DTYPES[e["dtype"]], count=int(np.prod(e["shape"], dtype=np.int64)), offset=e["offset"])
        t = torch.from_numpy(a.astype(np.float64).reshape(e["shape"]))
        (params if e["section"] == "params" else optim)[e["name"]] = t
        expected += e["nbytes"]
    cfg = manifest["config"]
    try:
        vocab = TacticVocabulary(tuple(TacticEntry(**x) for x in cfg["vocabulary"]["entries"]))
        return Checkpoint(
            model_config=ModelConfig.from_dict(cfg["model"]),
            train_config=TrainConfig.from_dict(cfg["train"]),
            dataset=DatasetConfig.from_dict(cfg["dataset"]),
            norm=NormalizationParams.from_dict(cfg["normalization"]),
            vocab=vocab,
            params=params,
            optimizer=optim,
            progress=manifest.get("progress", {}),
            extra=manifest.get("extra", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointVersionError(f"{ckpt_dir}: config snapshot does not match this version ({exc})") from None


def check_compatible(ckpt: Checkpoint, dataset: DatasetConfig, vocab: TacticVocabulary | None = None) -> None:
    if ckpt.dataset != dataset:
        raise CheckpointVersionError(f"checkpoint was trained for {ckpt.dataset.to_dict()}, data uses {dataset.to_dict()}")
    if vocab is not None and vocab != ckpt.vocab:
        raise CheckpointVersionError("vocabulary differs from the one stored in the checkpoint")
