"""Volume ingestion: windowing, normalization, resizing and dataset splits."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .volumes import CtVolume

# Intensity windows used for training data preparation.
DATASET_WINDOWS = {
    "lidc": (0.0, 2500.0),
    "ctspine": (-1024.0, 1476.0),
    "phantom": (0.0, 1.0),
}

# Split fractions reproducing the published corpus sizes.
LIDC_FRACTIONS = (716 / 1018, 102 / 1018, 200 / 1018)
CTSPINE_FRACTIONS = (550 / 784, 78 / 784, 156 / 784)


def window_and_normalize(
    raw_volume: np.ndarray | CtVolume,
    window: tuple[float, float],
    *,
    volume_id: str = "volume",
    spacing_mm=(1.0, 1.0, 1.0),
) -> CtVolume:
    """Clamp raw intensities to ``window`` and map them affinely to [-1, 1]."""
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"window lo must be < hi, got ({lo}, {hi})")
    if isinstance(raw_volume, CtVolume):
        raw = raw_volume.voxels
        volume_id = raw_volume.volume_id
        spacing_mm = raw_volume.spacing_mm
    else:
        raw = np.asarray(raw_volume)
    clipped = np.clip(raw.astype(np.float64), lo, hi)
    normalized = (clipped - lo) / (hi - lo) * 2.0 - 1.0
    return CtVolume(
        voxels=normalized.astype(np.float32),
        spacing_mm=tuple(spacing_mm),
        window=(lo, hi),
        volume_id=volume_id,
        normalized=True,
    )


def _resample_axis_coords(n_out: int, n_in: int) -> np.ndarray:
    # Pixel-area convention: output center i maps to (i + 0.5) * n_in/n_out - 0.5.
    return (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5


def resize_volume(volume: CtVolume, target_edge: int) -> CtVolume:
    """Trilinear resample to a cubic ``target_edge`` grid.

    Constant volumes are preserved exactly, and same-size resampling is
    an identity.
    """
    if target_edge < 8:
        raise ValueError(f"target_edge must be >= 8, got {target_edge}")
    src = volume.voxels
    nz, ny, nx = src.shape
    coords = np.meshgrid(
        _resample_axis_coords(target_edge, nz),
        _resample_axis_coords(target_edge, ny),
        _resample_axis_coords(target_edge, nx),
        indexing="ij",
    )
    out = ndimage.map_coordinates(
        src.astype(np.float64),
        np.stack([c.ravel() for c in coords]),
        order=1,
        mode="nearest",
    ).reshape(target_edge, target_edge, target_edge)
    scale = np.array(src.shape, dtype=np.float64) / target_edge
    spacing = tuple(s * f for s, f in zip(volume.spacing_mm, scale))
    return volume.with_voxels(out.astype(np.float32), spacing_mm=spacing)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/val/test id lists, reproducible from ``seed``."""

    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int

    def __post_init__(self):
        parts = (set(self.train_ids), set(self.val_ids), set(self.test_ids))
        total = sum(len(p) for p in parts)
        if len(parts[0] | parts[1] | parts[2]) != total:
            raise ValueError("split id lists overlap")

    @property
    def all_ids(self) -> tuple[str, ...]:
        return self.train_ids + self.val_ids + self.test_ids


def split_dataset(ids, fractions, seed: int) -> DatasetSplit:
    """Seeded uniform shuffle + largest-remainder rounding of ``fractions``."""
    ids = [str(i) for i in ids]
    if not ids:
        raise ValueError("cannot split an empty corpus")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, val, test)")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(ids)
    raw = [f * n for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    remainders = sorted(
        range(3), key=lambda i: (-(raw[i] - sizes[i]), i)
    )
    for i in range(n - sum(sizes)):
        sizes[remainders[i % 3]] += 1
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    train = tuple(shuffled[: sizes[0]])
    val = tuple(shuffled[sizes[0] : sizes[0] + sizes[1]])
    test = tuple(shuffled[sizes[0] + sizes[1] :])
    return DatasetSplit(train_ids=train, val_ids=val, test_ids=test, seed=seed)


def save_split(split: DatasetSplit, path: str | Path) -> Path:
    """Manifest format: one ``<split> <id>`` line per id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# seed: {split.seed}"]
    for name, bucket in (
        ("train", split.train_ids),
        ("val", split.val_ids),
        ("test", split.test_ids),
    ):
        lines.extend(f"{name} {vid}" for vid in bucket)
    path.write_text("\n".join(lines) + "\n")
    return path


def load_split(path: str | Path) -> DatasetSplit:
    buckets: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    seed = 0
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "seed:" in line:
                seed = int(line.split("seed:")[1].strip())
            continue
        name, _, vid = line.partition(" ")
        if name not in buckets:
            raise ValueError(f"unknown split name {name!r} in {path}")
        buckets[name].append(vid)
    return DatasetSplit(
        train_ids=tuple(buckets["train"]),
        val_ids=tuple(buckets["val"]),
        test_ids=tuple(buckets["test"]),
        seed=seed,
    )
