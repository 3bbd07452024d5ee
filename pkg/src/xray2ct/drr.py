"""Synthetic radiograph projection (DRR) at frontal/lateral angles.

The projector marches rays through the attenuation grid with trilinear
sampling at a fixed step of half the voxel spacing and integrates with
trapezoid weights. Sample positions are aligned to the voxel-center
planes, so for axis-aligned parallel beams on uniformly spaced grids
the line integral equals the naive per-ray voxel-walk sum exactly (the
trapezoid rule is exact for the piecewise-linear interpolant and each
voxel's interpolation tent integrates to value * spacing).

Geometry frame: the assembly rotates about the vertical (z) axis by
``angle_deg``; at 0 degrees the beam runs along +y and the detector
column axis along +x, rows top-down along -z. Pixel (r, c) of the raw
image therefore sees world z = ((rows-1)/2 - r) * pitch.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volumes import CtVolume, XRayView, XRaySet

PAPER_ANGLES = (0.0, 90.0)
DEFAULT_ATTENUATION_PER_MM = 0.02


class GeometryError(ValueError):
    """Invalid acquisition geometry."""


@dataclass(frozen=True)
class ProjectionGeometry:
    """Detector and beam layout for one projection.

    The source sits ``source_to_axis_mm`` before the rotation axis and
    the detector ``source_to_detector_mm - source_to_axis_mm`` behind
    it. ``attenuation_per_mm`` scales normalized [0, 1] intensity into
    attenuation when synthesizing views from normalized volumes.
    """

    source_to_detector_mm: float = 1020.0
    detector_height_mm: float = 512.0
    detector_width_mm: float = 512.0
    pixel_pitch_mm: float = 1.0
    angle_deg: float = 0.0
    beam_model: str = "cone"
    source_to_axis_mm: float | None = None
    attenuation_per_mm: float = DEFAULT_ATTENUATION_PER_MM

    def __post_init__(self):
        if self.pixel_pitch_mm <= 0:
            raise GeometryError(f"pixel pitch must be > 0, got {self.pixel_pitch_mm}")
        if self.beam_model not in ("parallel", "cone"):
            raise GeometryError(f"unknown beam model {self.beam_model!r}")
        if self.source_to_detector_mm <= 0:
            raise GeometryError("source-to-detector distance must be > 0")
        for name, size in (
            ("detector_height_mm", self.detector_height_mm),
            ("detector_width_mm", self.detector_width_mm),
        ):
            if size <= 0:
                raise GeometryError(f"{name} must be > 0, got {size}")
            ratio = size / self.pixel_pitch_mm
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise GeometryError(
                    f"{name}={size} is not a positive integer multiple of the "
                    f"pixel pitch {self.pixel_pitch_mm}"
                )
        if self.source_to_axis_mm is None:
            object.__setattr__(
                self, "source_to_axis_mm", self.source_to_detector_mm / 2.0
            )
        elif not 0 < self.source_to_axis_mm < self.source_to_detector_mm:
            raise GeometryError("source_to_axis_mm must lie between source and detector")

    @property
    def n_rows(self) -> int:
        return int(round(self.detector_height_mm / self.pixel_pitch_mm))

    @property
    def n_cols(self) -> int:
        return int(round(self.detector_width_mm / self.pixel_pitch_mm))

    def at_angle(self, angle_deg: float) -> "ProjectionGeometry":
        return dataclasses.replace(self, angle_deg=angle_deg)


def geometry_for_volume(
    volume: CtVolume,
    beam_model: str = "cone",
    margin: float = 1.3,
    **overrides,
) -> ProjectionGeometry:
    """Detector sized to cover the volume (with cone magnification)."""
    extent = max(n * s for n, s in zip(volume.shape, volume.spacing_mm))
    pitch = float(min(volume.spacing_mm))
    magnification = 2.0 if beam_model == "cone" else 1.0
    side = pitch * int(np.ceil(extent * margin * magnification / pitch))
    return ProjectionGeometry(
        detector_height_mm=side,
        detector_width_mm=side,
        pixel_pitch_mm=pitch,
        beam_model=beam_model,
        **overrides,
    )


def _detector_grid(geometry: ProjectionGeometry):
    rows, cols = geometry.n_rows, geometry.n_cols
    pitch = geometry.pixel_pitch_mm
    z = ((rows - 1) / 2.0 - np.arange(rows)) * pitch
    u = (np.arange(cols) - (cols - 1) / 2.0) * pitch
    zz, uu = np.meshgrid(z, u, indexing="ij")
    return zz.ravel(), uu.ravel()


def ray_integrals(volume: CtVolume, geometry: ProjectionGeometry) -> np.ndarray:
    """Line integrals of the voxel values (interpreted as attenuation/mm).

    Returns a (rows, cols) float64 grid of integrated attenuation, the
    quantity exponentiated by :func:`project_drr`.
    """
    att = np.asarray(volume.voxels, dtype=np.float64)
    if not np.all(np.isfinite(att)):
        bad = int(np.size(att) - np.count_nonzero(np.isfinite(att)))
        raise ValueError(f"volume {volume.volume_id!r} has {bad} non-finite voxels")
    spacing = np.asarray(volume.spacing_mm, dtype=np.float64)
    shape = np.asarray(att.shape)

    theta = np.deg2rad(geometry.angle_deg)
    beam = np.array([-np.sin(theta), np.cos(theta), 0.0])
    col_axis = np.array([np.cos(theta), np.sin(theta), 0.0])
    z_axis = np.array([0.0, 0.0, 1.0])

    step = 0.5 * float(spacing.min())
    # Integer multiple of each axis spacing so axis-aligned samples land
    # on voxel-center planes; covers the interpolation tent support.
    half_span = max(
        (int(n) // 2 + 1) * s for n, s in zip(shape, spacing)
    )
    zz, uu = _detector_grid(geometry)
    n_pix = zz.size

    if geometry.beam_model == "parallel":
        origins = (
            uu[:, None] * col_axis[None, :] + zz[:, None] * z_axis[None, :]
        )
        dirs = np.broadcast_to(beam, (n_pix, 3))
        t0, t1 = -half_span, half_span
    else:
        sad = float(geometry.source_to_axis_mm)
        sdd = float(geometry.source_to_detector_mm)
        source = -sad * beam
        pix = (
            (sdd - sad) * beam[None, :]
            + uu[:, None] * col_axis[None, :]
            + zz[:, None] * z_axis[None, :]
        )
        dirs = pix - source[None, :]
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.broadcast_to(source, (n_pix, 3))
        reach = half_span * np.sqrt(3.0)
        t0, t1 = sad - reach, sad + reach

    n_steps = int(np.ceil((t1 - t0) / step)) + 1
    ts = t0 + step * np.arange(n_steps)
    weights = np.full(n_steps, step)
    weights[0] *= 0.5
    weights[-1] *= 0.5

    # World (x, y, z) -> array (z, y, x) index conversion.
    center = (shape - 1) / 2.0
    integrals = np.zeros(n_pix)
    chunk = max(1, int(4_000_000 // n_steps))
    for start in range(0, n_pix, chunk):
        sl = slice(start, min(start + chunk, n_pix))
        pts = (
            origins[sl][None, :, :] + ts[:, None, None] * dirs[sl][None, :, :]
        )  # (n_steps, chunk, 3) world xyz
        idx = np.empty((3, pts.shape[0], pts.shape[1]))
        idx[0] = pts[..., 2] / spacing[0] + center[0]
        idx[1] = pts[..., 1] / spacing[1] + center[1]
        idx[2] = pts[..., 0] / spacing[2] + center[2]
        samples = ndimage.map_coordinates(
            att, idx.reshape(3, -1), order=1, mode="constant", cval=0.0
        ).reshape(pts.shape[0], pts.shape[1])
        integrals[sl] = np.einsum("s,sp->p", weights, samples)
    return integrals.reshape(geometry.n_rows, geometry.n_cols)


def project_drr(volume: CtVolume, geometry: ProjectionGeometry) -> np.ndarray:
    """Beer-Lambert transmitted intensity exp(-integral) per detector pixel."""
    return np.exp(-ray_integrals(volume, geometry))


def _resize_2d(raw: np.ndarray, out_size: int) -> np.ndarray:
    ny, nx = raw.shape
    if (ny, nx) == (out_size, out_size):
        return raw.astype(np.float64)
    coords_r = (np.arange(out_size) + 0.5) * (ny / out_size) - 0.5
    coords_c = (np.arange(out_size) + 0.5) * (nx / out_size) - 0.5
    rr, cc = np.meshgrid(coords_r, coords_c, indexing="ij")
    return ndimage.map_coordinates(
        raw.astype(np.float64), np.stack([rr.ravel(), cc.ravel()]), order=1, mode="nearest"
    ).reshape(out_size, out_size)


def normalize_view(
    raw: np.ndarray,
    out_size: int = 128,
    *,
    angle_deg: float = 0.0,
    source_volume_id: str = "volume",
) -> XRayView:
    """Resize to a square and min-max normalize into [-1, 1].

    A constant image (degenerate range) maps to all zeros.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw projection contains non-finite values")
    resized = _resize_2d(raw, out_size)
    lo, hi = float(resized.min()), float(resized.max())
    if hi - lo <= 0.0:
        pixels = np.zeros_like(resized)
    else:
        pixels = (resized - lo) / (hi - lo) * 2.0 - 1.0
    return XRayView(
        pixels=pixels.astype(np.float32),
        angle_deg=angle_deg,
        source_volume_id=source_volume_id,
    )


def attenuation_volume(volume: CtVolume, geometry: ProjectionGeometry) -> CtVolume:
    """Map a normalized volume onto attenuation/mm for projection.

    Normalized [-1, 1] intensity is shifted to [0, 1] and scaled by
    ``geometry.attenuation_per_mm``; non-normalized volumes are used
    directly as attenuation.
    """
    if not volume.normalized:
        return volume
    att = (volume.voxels.astype(np.float64) + 1.0) * 0.5 * geometry.attenuation_per_mm
    return volume.with_voxels(att.astype(np.float32), normalized=False, window=(0.0, 1.0))


def make_view_set(
    volume: CtVolume,
    angles,
    geometry: ProjectionGeometry | None = None,
    out_size: int = 128,
    paper_faithful: bool = True,
) -> XRaySet:
    """Project the volume at each angle and normalize the views."""
    angles = [float(a) for a in angles]
    if not angles:
        raise ValueError("angle list must not be empty")
    if paper_faithful:
        if len(angles) > 2:
            raise ValueError(f"at most two views are supported, got {len(angles)}")
        bad = [a for a in angles if a not in PAPER_ANGLES]
        if bad:
            raise ValueError(
                f"angles {bad} are outside the supported set {PAPER_ANGLES}; "
                "pass paper_faithful=False for arbitrary angles"
            )
    if geometry is None:
        geometry = geometry_for_volume(volume)
    att = attenuation_volume(volume, geometry)
    views = []
    for angle in angles:
        raw = project_drr(att, geometry.at_angle(angle))
        views.append(
            normalize_view(
                raw,
                out_size,
                angle_deg=angle,
                source_volume_id=volume.volume_id,
            )
        )
    return XRaySet(views=tuple(views))
