"""Synthetic attenuation phantoms for desk-scale verification.

Phantoms are built in attenuation units on [0, 1] (a soft elliptical
body plus a few random ellipsoids/boxes with distinct values) and then
normalized into the standard [-1, 1] volume representation with window
(0, 1), so ``CtVolume.denormalized()`` recovers the attenuation field.
"""

from __future__ import annotations

import numpy as np

from .volumes import CtVolume


def _centered_grid(edge: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = np.arange(edge, dtype=np.float64) - (edge - 1) / 2.0
    return np.meshgrid(c, c, c, indexing="ij")


def add_ellipsoid(grid: np.ndarray, center, semi_axes, value: float) -> None:
    """Set ``value`` inside an axis-aligned ellipsoid, in place.

    ``center`` and ``semi_axes`` are in voxel units relative to the grid
    center (z, y, x order).
    """
    zz, yy, xx = _centered_grid(grid.shape[0])
    cz, cy, cx = center
    az, ay, ax = semi_axes
    mask = (
        ((zz - cz) / az) ** 2 + ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2
    ) <= 1.0
    grid[mask] = value


def add_box(grid: np.ndarray, center, half_sizes, value: float) -> None:
    """Set ``value`` inside an axis-aligned box, in place."""
    zz, yy, xx = _centered_grid(grid.shape[0])
    cz, cy, cx = center
    hz, hy, hx = half_sizes
    mask = (
        (np.abs(zz - cz) <= hz) & (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
    )
    grid[mask] = value


def synth_phantom(seed: int, edge: int = 32, spacing_mm: float = 1.0) -> CtVolume:
    """Deterministic random phantom: 2-6 shapes on an elliptical body."""
    if edge < 8:
        raise ValueError(f"edge must be >= 8, got {edge}")
    rng = np.random.default_rng(seed)
    att = np.zeros((edge, edge, edge), dtype=np.float64)

    body_axes = rng.uniform(0.32, 0.45, size=3) * edge
    add_ellipsoid(att, (0.0, 0.0, 0.0), body_axes, float(rng.uniform(0.12, 0.22)))

    n_shapes = int(rng.integers(2, 7))
    # Distinct attenuation levels, shuffled so shape order is not tied to value.
    levels = np.linspace(0.35, 1.0, n_shapes) + rng.uniform(-0.04, 0.04, n_shapes)
    rng.shuffle(levels)
    for value in levels:
        center = rng.uniform(-0.22, 0.22, size=3) * edge
        size = rng.uniform(0.06, 0.18, size=3) * edge
        if rng.random() < 0.5:
            add_ellipsoid(att, center, np.maximum(size, 1.0), float(value))
        else:
            add_box(att, center, np.maximum(size * 0.8, 1.0), float(value))

    att = np.clip(att, 0.0, 1.0)
    voxels = (att * 2.0 - 1.0).astype(np.float32)
    return CtVolume(
        voxels=voxels,
        spacing_mm=(spacing_mm,) * 3,
        window=(0.0, 1.0),
        volume_id=f"phantom-{seed:04d}",
        normalized=True,
    )


def centered_ellipsoid_phantom(
    edge: int = 32, semi_axes=None, value: float = 0.8, spacing_mm: float = 1.0
) -> CtVolume:
    """Single centered ellipsoid, used by geometric symmetry checks."""
    att = np.zeros((edge, edge, edge), dtype=np.float64)
    if semi_axes is None:
        semi_axes = (0.30 * edge, 0.38 * edge, 0.22 * edge)
    add_ellipsoid(att, (0.0, 0.0, 0.0), semi_axes, value)
    voxels = (np.clip(att, 0.0, 1.0) * 2.0 - 1.0).astype(np.float32)
    return CtVolume(
        voxels=voxels,
        spacing_mm=(spacing_mm,) * 3,
        window=(0.0, 1.0),
        volume_id="ellipsoid",
        normalized=True,
    )
