"""Checkpoint containers with config lineage verification."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .config import RunConfig, config_hash, shape_hash

STAGES = ("vae", "cond", "diffusion")


class CheckpointMismatch(ValueError):
    """Checkpoints built under incompatible configurations."""


@dataclass
class Checkpoint:
    """Everything needed to resume or consume a trained stage."""

    stage: str
    model_state: dict
    optimizer_state: dict
    epoch: int
    step: int
    val_loss: float
    config: RunConfig
    config_hash: str = ""
    shape_hash: str = ""
    latent_scale: float = 1.0
    seed: int = 0
    train_trace: list = field(default_factory=list)
    val_trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if not self.config_hash:
            self.config_hash = config_hash(self.config)
        if not self.shape_hash:
            self.shape_hash = shape_hash(self.config)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dataclasses.asdict(ckpt)
    payload["config"] = dataclasses.asdict(ckpt.config)
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    cfg_dict = payload.pop("config")
    cfg_dict["angles"] = tuple(cfg_dict["angles"])
    cfg_dict["split_fractions"] = tuple(cfg_dict["split_fractions"])
    payload["config"] = RunConfig(**cfg_dict)
    return Checkpoint(**payload)


def _state_bytes(state, out: "hashlib._Hash"):
    if isinstance(state, dict):
        for key in sorted(state):
            out.update(str(key).encode())
            _state_bytes(state[key], out)
    elif isinstance(state, torch.Tensor):
        out.update(str(state.dtype).encode())
        out.update(str(tuple(state.shape)).encode())
        out.update(state.detach().cpu().contiguous().numpy().tobytes())
    else:
        out.update(repr(state).encode())


def checkpoint_digest(ckpt: Checkpoint) -> str:
    """Deterministic content hash of parameters + identifying metadata."""
    h = hashlib.sha256()
    h.update(ckpt.stage.encode())
    h.update(ckpt.config_hash.encode())
    h.update(f"{ckpt.epoch}:{ckpt.step}:{ckpt.val_loss!r}:{ckpt.latent_scale!r}".encode())
    _state_bytes(ckpt.model_state, h)
    return h.hexdigest()


def ensure_compatible(*ckpts: Checkpoint):
    """All checkpoints must share the shape-relevant config fields."""
    hashes = {c.shape_hash for c in ckpts}
    if len(hashes) > 1:
        stages = [c.stage for c in ckpts]
        raise CheckpointMismatch(
            f"checkpoints {stages} disagree on shape-relevant configuration"
        )
