"""Core volumetric and projection data types plus their on-disk containers.

Array conventions used throughout the package:

* CT volumes are indexed ``vox[z, y, x]`` where ``z`` is the vertical
  (superior-inferior) axis, ``y`` the anterior-posterior axis (beam
  direction of the frontal view) and ``x`` the left-right axis. Index i
  maps to the world coordinate ``(i - (N - 1) / 2) * spacing``.
* X-ray views are indexed ``pixels[row, col]``; row 0 is the top of the
  detector (largest world z).

Volumes are persisted as a plain-text header followed by raw
little-endian float32 voxels (``.ctv``); views as 16-bit grayscale PNGs
with a plain-text key-value sidecar (``.txt``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

VOLUME_MAGIC = "ctvol 1"


class FormatError(ValueError):
    """Raised when an on-disk container cannot be parsed."""


@dataclass(frozen=True)
class CtVolume:
    """3D scalar grid with voxel spacing and intensity-window metadata.

    ``voxels`` hold values in [-1, 1] when ``normalized`` is true,
    otherwise raw intensity units. ``window`` is the (lo, hi) raw clamp
    used by the normalization.
    """

    voxels: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    window: tuple[float, float] = (0.0, 1.0)
    volume_id: str = "volume"
    normalized: bool = True

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.float32)
        if vox.ndim != 3:
            raise ValueError(f"expected a 3D voxel grid, got shape {vox.shape}")
        object.__setattr__(self, "voxels", vox)
        lo, hi = self.window
        if not lo < hi:
            raise ValueError(f"window lo must be < hi, got ({lo}, {hi})")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape

    @property
    def edge(self) -> int:
        z, y, x = self.voxels.shape
        if not (z == y == x):
            raise ValueError(f"volume is not cubic: {self.voxels.shape}")
        return z

    def denormalized(self) -> np.ndarray:
        """Map [-1, 1] values back into the raw window range."""
        if not self.normalized:
            return self.voxels.copy()
        lo, hi = self.window
        return ((self.voxels.astype(np.float64) + 1.0) * 0.5 * (hi - lo) + lo).astype(
            np.float32
        )

    def with_voxels(self, voxels: np.ndarray, **changes) -> "CtVolume":
        return dataclasses.replace(self, voxels=voxels, **changes)


@dataclass(frozen=True)
class XRayView:
    """A single 2D projection image with its acquisition angle."""

    pixels: np.ndarray
    angle_deg: float
    source_volume_id: str = "volume"

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2:
            raise ValueError(f"expected a 2D pixel grid, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class XRaySet:
    """One or more views of the same volume."""

    views: tuple[XRayView, ...]

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValueError("an XRaySet needs at least one view")
        ids = {v.source_volume_id for v in views}
        if len(ids) != 1:
            raise ValueError(f"views come from different volumes: {sorted(ids)}")
        object.__setattr__(self, "views", views)

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self):
        return iter(self.views)

    @property
    def angles(self) -> tuple[float, ...]:
        return tuple(v.angle_deg for v in self.views)

    @property
    def source_volume_id(self) -> str:
        return self.views[0].source_volume_id


def _format_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_volume(volume: CtVolume, path: str | Path) -> Path:
    """Write the plain-text header + raw little-endian float32 container."""
    path = Path(path)
    header = "\n".join(
        [
            VOLUME_MAGIC,
            f"id: {volume.volume_id}",
            "shape: " + " ".join(str(n) for n in volume.voxels.shape),
            "spacing_mm: " + _format_floats(volume.spacing_mm),
            "window: " + _format_floats(volume.window),
            f"normalized: {int(volume.normalized)}",
            "dtype: <f4",
            "",
            "",
        ]
    )
    data = np.ascontiguousarray(volume.voxels, dtype="<f4")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())
    return path


def load_volume(path: str | Path) -> CtVolume:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    sep = b"\n\n"
    idx = raw.find(sep)
    if idx < 0:
        raise FormatError(f"{path}: missing header terminator")
    lines = raw[:idx].decode("ascii").splitlines()
    if not lines or lines[0].strip() != VOLUME_MAGIC:
        raise FormatError(f"{path}: not a {VOLUME_MAGIC!r} container")
    fields: dict[str, str] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    try:
        shape = tuple(int(v) for v in fields["shape"].split())
        spacing = tuple(float(v) for v in fields["spacing_mm"].split())
        window = tuple(float(v) for v in fields["window"].split())
        volume_id = fields["id"]
        normalized = bool(int(fields.get("normalized", "1")))
        dtype = fields.get("dtype", "<f4")
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from exc
    if dtype != "<f4":
        raise FormatError(f"{path}: unsupported dtype {dtype}")
    count = int(np.prod(shape))
    data = np.frombuffer(raw[idx + len(sep) :], dtype="<f4", count=count)
    if data.size != count:
        raise FormatError(f"{path}: truncated voxel data")
    return CtVolume(
        voxels=data.reshape(shape).copy(),
        spacing_mm=spacing,
        window=window,
        volume_id=volume_id,
        normalized=normalized,
    )


def save_view(view: XRayView, path: str | Path) -> tuple[Path, Path]:
    """Write a view as a 16-bit PNG plus a key-value metadata sidecar.

    Pixel values in [-1, 1] are quantized onto the uint16 range; the
    sidecar records angle and source id so sets can be reassembled.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scaled = np.clip((view.pixels.astype(np.float64) + 1.0) * 0.5, 0.0, 1.0)
    img = np.round(scaled * 65535.0).astype(np.uint16)
    Image.fromarray(img, mode="I;16").save(path)
    sidecar = path.with_suffix(".txt")
    sidecar.write_text(
        f"angle_deg: {view.angle_deg!r}\n"
        f"source_volume_id: {view.source_volume_id}\n"
        f"height: {view.pixels.shape[0]}\n"
        f"width: {view.pixels.shape[1]}\n"
    )
    return path, sidecar


def load_view(path: str | Path) -> XRayView:
    path = Path(path)
    img = np.asarray(Image.open(path), dtype=np.float64)
    pixels = (img / 65535.0) * 2.0 - 1.0
    sidecar = path.with_suffix(".txt")
    if not sidecar.exists():
        raise FormatError(f"{path}: missing metadata sidecar {sidecar.name}")
    fields: dict[str, str] = {}
    for line in sidecar.read_text().splitlines():
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    try:
        angle = float(fields["angle_deg"])
        source = fields["source_volume_id"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{sidecar}: malformed sidecar ({exc})") from exc
    return XRayView(
        pixels=pixels.astype(np.float32), angle_deg=angle, source_volume_id=source
    )


def save_view_set(views: XRaySet, directory: str | Path, stem: str | None = None):
    """Write every view of a set into ``directory`` and return the paths."""
    directory = Path(directory)
    stem = stem or views.source_volume_id
    paths = []
    for view in views:
        name = f"{stem}_a{int(round(view.angle_deg)):03d}.png"
        png, _ = save_view(view, directory / name)
        paths.append(png)
    return paths


def load_view_set(paths) -> XRaySet:
    return XRaySet(views=tuple(load_view(p) for p in paths))
