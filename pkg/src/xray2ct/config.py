"""Run configuration, plain-text config files and config hashing.

Defaults reproduce the published training setup: stage learning rates
1e-4 / 5e-5 / 5e-5, batch sizes 1 / 8 / 2, 1000 epochs per stage, a
1000-step linear noise schedule on [1e-4, 2e-2], 128^3 volumes with a
4x16^3 latent and a 16-channel condition grid.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .networks.vae import COMPRESSION_FACTOR


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    # data
    dataset: str = "phantom"
    ct_edge: int = 128
    latent_edge: int | None = None  # derived: ct_edge / 8
    angles: tuple[float, ...] = (0.0, 90.0)
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    phantom_count: int = 50
    beam_model: str = "cone"
    # architecture
    latent_channels: int = 4
    cond_channels: int = 16
    vae_base: int = 32
    disc_base: int = 16
    cond_base: int = 32
    pam_width: int = 16
    embed_dim: int = 256
    unet_base: int = 64
    unet_levels: int = 3
    # schedule
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    # optimization
    lr_vae: float = 1e-4
    lr_cond: float = 5e-5
    lr_diffusion: float = 5e-5
    batch_vae: int = 1
    batch_cond: int = 8
    batch_diffusion: int = 2
    epochs_vae: int = 1000
    epochs_cond: int = 1000
    epochs_diffusion: int = 1000
    max_seconds: float | None = None
    # loss weights
    lambda_nll: float = 1.0
    lambda_kl: float = 1e-6
    lambda_p: float = 0.5
    adv_warmup_frac: float = 0.1
    lambda_recon: float = 1.0
    lambda_contrast: float = 1.0
    temperature: float = 0.07
    # ablation flags
    no_clip: bool = False
    no_ar: bool = False
    # diffusion extras
    latent_scale_mode: str = "auto"
    sample_steps: int = 50
    sample_order: int = 2
    # run control
    seed: int | None = None
    device: str = "cpu"

    def __post_init__(self):
        if self.ct_edge % COMPRESSION_FACTOR != 0 or self.ct_edge < 8:
            raise ConfigError(
                f"ct_edge must be a multiple of {COMPRESSION_FACTOR} >= 8, "
                f"got {self.ct_edge}"
            )
        derived = self.ct_edge // COMPRESSION_FACTOR
        if self.latent_edge is None:
            object.__setattr__(self, "latent_edge", derived)
        elif self.latent_edge != derived:
            raise ConfigError(
                f"latent_edge {self.latent_edge} inconsistent with ct_edge "
                f"{self.ct_edge} (architecture compresses by {COMPRESSION_FACTOR})"
            )
        if self.dataset not in ("phantom", "lidc", "ctspine"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.latent_scale_mode not in ("auto", "off"):
            raise ConfigError(f"latent_scale_mode must be auto|off, got {self.latent_scale_mode!r}")
        if not self.angles:
            raise ConfigError("at least one acquisition angle is required")
        if len(self.angles) > 2:
            raise ConfigError("at most two acquisition angles are supported")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError("split_fractions must sum to 1")

    @property
    def latent_shape(self) -> tuple[int, int, int, int]:
        e = self.latent_edge
        return (self.latent_channels, e, e, e)

    @property
    def cond_shape(self) -> tuple[int, int, int, int]:
        e = self.latent_edge
        return (self.cond_channels, e, e, e)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is mandatory for training runs")
        return self.seed

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


# Fields that must agree for checkpoints to be loaded together.
SHAPE_FIELDS = (
    "ct_edge",
    "latent_edge",
    "latent_channels",
    "cond_channels",
    "vae_base",
    "cond_base",
    "pam_width",
    "embed_dim",
    "unet_base",
    "unet_levels",
    "T",
    "beta_start",
    "beta_end",
)


def _canonical_value(value) -> str:
    if isinstance(value, tuple):
        return "(" + ",".join(_canonical_value(v) for v in value) + ")"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_hash(cfg: RunConfig) -> str:
    text = "\n".join(
        f"{f.name}={_canonical_value(getattr(cfg, f.name))}"
        for f in dataclasses.fields(cfg)
    )
    return hashlib.sha256(text.encode()).hexdigest()


def shape_hash(cfg: RunConfig) -> str:
    text = "\n".join(f"{k}={_canonical_value(getattr(cfg, k))}" for k in SHAPE_FIELDS)
    return hashlib.sha256(text.encode()).hexdigest()


def toy_config(seed: int, **overrides) -> RunConfig:
    """Desk-scale preset: 32^3 phantoms, narrow networks, short stages."""
    base = dict(
        dataset="phantom",
        ct_edge=32,
        phantom_count=50,
        vae_base=16,
        disc_base=8,
        cond_base=16,
        pam_width=8,
        embed_dim=64,
        unet_base=32,
        unet_levels=2,
        batch_vae=4,
        batch_cond=8,
        batch_diffusion=8,
        epochs_vae=40,
        epochs_cond=30,
        epochs_diffusion=60,
        sample_steps=25,
        seed=seed,
    )
    base.update(overrides)
    return RunConfig(**base)


def _parse_value(text: str, target_type):
    text = text.strip()
    if text.lower() == "none":
        return None
    origin = getattr(target_type, "__origin__", None)
    if target_type is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    if target_type is str:
        return text
    if origin is tuple:
        args = target_type.__args__
        elem = args[0]
        parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
        return tuple(_parse_value(p, elem) for p in parts)
    # Optional[X] arrives as types.UnionType / typing.Union
    type_args = getattr(target_type, "__args__", None)
    if type_args:
        for candidate in type_args:
            if candidate is type(None):
                continue
            try:
                return _parse_value(text, candidate)
            except (ValueError, ConfigError):
                continue
    raise ConfigError(f"cannot parse {text!r} as {target_type}")


def _field_types():
    import typing

    return typing.get_type_hints(RunConfig)


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Parse a ``key = value`` config file; later keys win, then overrides."""
    values: dict = {}
    types = _field_types()
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, eq, value = stripped.partition("=")
        if not eq:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(value, types[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def save_config(cfg: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"{f.name} = {_canonical_value(getattr(cfg, f.name))}"
        for f in dataclasses.fields(cfg)
    ]
    path.write_text("\n".join(lines) + "\n")
    return path
