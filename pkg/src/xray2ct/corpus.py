"""Training corpora: volumes with their synthesized views, plus splits."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .datasets import DATASET_WINDOWS, resize_volume, split_dataset, window_and_normalize
from .drr import geometry_for_volume, make_view_set
from .phantoms import synth_phantom
from .volumes import CtVolume, XRaySet, load_volume


@dataclass
class CorpusItem:
    volume: CtVolume
    views: XRaySet
    volume_tensor: torch.Tensor  # (1, E, E, E)
    view_tensor: torch.Tensor  # (K, E, E)


@dataclass
class TrainingCorpus:
    items: dict[str, CorpusItem]
    split: "DatasetSplit"
    angles: tuple[float, ...]

    def tensors(self, ids) -> tuple[torch.Tensor, torch.Tensor]:
        vols = torch.stack([self.items[i].volume_tensor for i in ids])
        views = torch.stack([self.items[i].view_tensor for i in ids])
        return vols, views

    def volumes(self, ids) -> list[CtVolume]:
        return [self.items[i].volume for i in ids]


from .datasets import DatasetSplit  # noqa: E402  (for annotations above)


def _to_item(volume: CtVolume, cfg: RunConfig) -> CorpusItem:
    geometry = geometry_for_volume(volume, beam_model=cfg.beam_model)
    views = make_view_set(
        volume, cfg.angles, geometry=geometry, out_size=cfg.ct_edge
    )
    vol_t = torch.from_numpy(volume.voxels).unsqueeze(0)
    view_t = torch.stack([torch.from_numpy(v.pixels) for v in views])
    return CorpusItem(
        volume=volume, views=views, volume_tensor=vol_t, view_tensor=view_t
    )


def phantom_corpus(cfg: RunConfig) -> TrainingCorpus:
    """Deterministic synthetic corpus derived from the run seed."""
    seed = cfg.require_seed()
    items: dict[str, CorpusItem] = {}
    for i in range(cfg.phantom_count):
        volume = synth_phantom(seed * 100_003 + i, edge=cfg.ct_edge)
        items[volume.volume_id] = _to_item(volume, cfg)
    split = split_dataset(sorted(items), cfg.split_fractions, seed)
    return TrainingCorpus(items=items, split=split, angles=cfg.angles)


def directory_corpus(cfg: RunConfig, directory: str | Path) -> TrainingCorpus:
    """Corpus from prepared ``.ctv`` volumes in a directory."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.ctv"))
    if not paths:
        raise FileNotFoundError(f"no .ctv volumes found in {directory}")
    items: dict[str, CorpusItem] = {}
    for path in paths:
        volume = load_volume(path)
        if volume.shape != (cfg.ct_edge,) * 3:
            volume = resize_volume(volume, cfg.ct_edge)
        items[volume.volume_id] = _to_item(volume, cfg)
    split = split_dataset(sorted(items), cfg.split_fractions, cfg.require_seed())
    return TrainingCorpus(items=items, split=split, angles=cfg.angles)


def build_corpus(cfg: RunConfig, directory: str | Path | None = None) -> TrainingCorpus:
    if cfg.dataset == "phantom" and directory is None:
        return phantom_corpus(cfg)
    if directory is None:
        raise ValueError(f"dataset {cfg.dataset!r} needs a prepared volume directory")
    return directory_corpus(cfg, directory)


def prepare_raw_volume(
    raw: np.ndarray, dataset: str, edge: int, volume_id: str
) -> CtVolume:
    """Window, normalize and resize one raw intensity grid."""
    window = DATASET_WINDOWS[dataset]
    volume = window_and_normalize(raw, window, volume_id=volume_id)
    if volume.shape != (edge,) * 3:
        volume = resize_volume(volume, edge)
    return volume


def mean_volume_baseline(corpus: TrainingCorpus, ids) -> CtVolume:
    """Voxel-wise mean over the given ids (the dataset-mean predictor)."""
    stack = np.stack([corpus.items[i].volume.voxels for i in ids])
    template = corpus.items[list(ids)[0]].volume
    return template.with_voxels(
        stack.mean(axis=0).astype(np.float32), volume_id="mean-baseline"
    )
