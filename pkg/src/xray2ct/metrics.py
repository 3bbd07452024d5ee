"""PSNR/SSIM with 12-bit slice-averaging conventions, plus latent
alignment diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage


class MetricShapeError(ValueError):
    """Inputs to a metric have incompatible shapes."""


@dataclass(frozen=True)
class MetricConfig:
    """Dynamic range used for metric computation (12-bit HU presets)."""

    hu_range: tuple[float, float] = (0.0, 4095.0)
    bit_depth: int = 12

    def __post_init__(self):
        lo, hi = self.hu_range
        if not lo < hi:
            raise ValueError(f"hu_range lo must be < hi, got {self.hu_range}")

    @property
    def dynamic_range(self) -> float:
        return self.hu_range[1] - self.hu_range[0]

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        """Map [-1, 1] values onto the configured HU range."""
        lo, hi = self.hu_range
        return (np.asarray(values, dtype=np.float64) + 1.0) * 0.5 * (hi - lo) + lo


METRIC_PRESETS = {
    "lidc": MetricConfig(hu_range=(0.0, 4095.0)),
    "ctspine": MetricConfig(hu_range=(-1024.0, 3071.0)),
    "phantom": MetricConfig(hu_range=(0.0, 4095.0)),
}

PSNR_CAP_DB = 100.0


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise MetricShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr_2d(a: np.ndarray, b: np.ndarray, cfg: MetricConfig) -> float:
    """Peak signal-to-noise ratio in dB over the configured range, capped at 100."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_shape(a, b)
    diff = cfg.denormalize(a) - cfg.denormalize(b)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    value = 10.0 * np.log10(cfg.dynamic_range**2 / mse)
    return float(min(value, PSNR_CAP_DB))


_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _ssim_filter(img: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(
        img, sigma=_SSIM_SIGMA, truncate=3.5, mode="reflect"
    )


def ssim_2d(a: np.ndarray, b: np.ndarray, cfg: MetricConfig) -> float:
    """Gaussian-windowed SSIM (11x11, sigma 1.5, k1=0.01, k2=0.03).

    Border pixels whose window leaves the image are cropped before
    averaging, so the result is independent of the padding mode.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_shape(a, b)
    x = cfg.denormalize(a)
    y = cfg.denormalize(b)
    c1 = (_SSIM_K1 * cfg.dynamic_range) ** 2
    c2 = (_SSIM_K2 * cfg.dynamic_range) ** 2

    ux = _ssim_filter(x)
    uy = _ssim_filter(y)
    uxx = _ssim_filter(x * x)
    uyy = _ssim_filter(y * y)
    uxy = _ssim_filter(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    cov = uxy - ux * uy

    ssim_map = ((2 * ux * uy + c1) * (2 * cov + c2)) / (
        (ux * ux + uy * uy + c1) * (vx + vy + c2)
    )
    pad = (_SSIM_WIN - 1) // 2
    return float(np.mean(ssim_map[pad:-pad, pad:-pad]))


def volume_metric(a, b, cfg: MetricConfig, which: str = "psnr", axis: int = 0) -> float:
    """Mean of the 2D metric over slices along ``axis``."""
    va = a.voxels if hasattr(a, "voxels") else np.asarray(a)
    vb = b.voxels if hasattr(b, "voxels") else np.asarray(b)
    _check_same_shape(va, vb)
    va = np.moveaxis(va, axis, 0)
    vb = np.moveaxis(vb, axis, 0)
    if which == "psnr":
        # Vectorized across slices; per-slice MSE in HU units.
        diff = cfg.denormalize(va) - cfg.denormalize(vb)
        mse = np.mean(diff * diff, axis=(1, 2))
        values = np.full(mse.shape, PSNR_CAP_DB)
        nz = mse > 0.0
        values[nz] = np.minimum(
            10.0 * np.log10(cfg.dynamic_range**2 / mse[nz]), PSNR_CAP_DB
        )
        return float(np.mean(values))
    if which == "ssim":
        return float(np.mean([ssim_2d(sa, sb, cfg) for sa, sb in zip(va, vb)]))
    raise ValueError(f"unknown metric {which!r}")


def _as_embedding_matrix(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr.reshape(arr.shape[0], -1)


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = _as_embedding_matrix(a)
    b = _as_embedding_matrix(b)
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("zero-norm embedding in cosine similarity")
    return (a / na) @ (b / nb).T


def _pair_stats(sims: np.ndarray) -> dict[str, float]:
    n = sims.shape[0]
    pos = np.diag(sims)
    neg = sims[~np.eye(n, dtype=bool)]
    stats = {
        "pos_mean": float(pos.mean()),
        "neg_mean": float(neg.mean()) if neg.size else float("nan"),
        "pos_std": float(pos.std(ddof=1)) if n > 1 else 0.0,
        "neg_std": float(neg.std(ddof=1)) if neg.size > 1 else 0.0,
        "pos_count": int(pos.size),
        "neg_count": int(neg.size),
    }
    for q in (10, 50, 90):
        stats[f"pos_p{q}"] = float(np.percentile(pos, q))
        if neg.size:
            stats[f"neg_p{q}"] = float(np.percentile(neg, q))
    return stats


@dataclass
class AlignmentReport:
    """Cosine-similarity statistics and 2D projections of the latent and
    condition samples before/after the alignment stage."""

    before: dict[str, float]
    after: dict[str, float]
    coords_2d: dict[str, np.ndarray]
    marginals: dict[str, np.ndarray]
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def margin_after(self) -> float:
        return self.after["pos_mean"] - self.after["neg_mean"]

    @property
    def margin_before(self) -> float:
        return self.before["pos_mean"] - self.before["neg_mean"]

    def summary_lines(self) -> list[str]:
        lines = ["alignment diagnostic"]
        for tag, stats in (("before", self.before), ("after", self.after)):
            lines.append(
                f"  {tag}: pos_mean={stats['pos_mean']:.4f} "
                f"neg_mean={stats['neg_mean']:.4f} "
                f"pos_p50={stats['pos_p50']:.4f} neg_p50={stats.get('neg_p50', float('nan')):.4f}"
            )
        lines.append(f"  margin_before={self.margin_before:.4f}")
        lines.append(f"  margin_after={self.margin_after:.4f}")
        return lines


def _project_2d(groups: dict[str, np.ndarray], seed: int) -> dict[str, np.ndarray]:
    from sklearn.manifold import TSNE

    names = list(groups)
    stacked = np.concatenate([groups[n] for n in names], axis=0)
    n = stacked.shape[0]
    perplexity = min(30.0, max(2.0, (n - 1) / 3.0))
    coords = TSNE(
        n_components=2,
        random_state=seed,
        perplexity=perplexity,
        init="pca",
    ).fit_transform(stacked)
    out = {}
    start = 0
    for name in names:
        size = groups[name].shape[0]
        out[name] = coords[start : start + size]
        start += size
    return out


def alignment_diagnostic(
    ct_latents,
    cond_before,
    cond_after,
    seed: int = 0,
) -> AlignmentReport:
    """Compare condition embeddings against CT latents pre/post alignment.

    Inputs are matched sample sets (row i of each array describes the
    same entity); arbitrary trailing dimensions are flattened.
    """
    ct = _as_embedding_matrix(ct_latents)
    before = _as_embedding_matrix(cond_before)
    after = _as_embedding_matrix(cond_after)
    if not (ct.shape[0] == before.shape[0] == after.shape[0]):
        raise ValueError(
            "mismatched sample counts: "
            f"{ct.shape[0]}, {before.shape[0]}, {after.shape[0]}"
        )
    stats_before = _pair_stats(cosine_matrix(ct, before))
    stats_after = _pair_stats(cosine_matrix(ct, after))
    coords = _project_2d(
        {"ct_latent": ct, "cond_before": before, "cond_after": after}, seed
    )
    marginals = {
        f"{name}_{ax}": np.histogram(coords[name][:, i], bins=20)[0]
        for name in coords
        for i, ax in enumerate(("x", "y"))
    }
    return AlignmentReport(
        before=stats_before,
        after=stats_after,
        coords_2d=coords,
        marginals=marginals,
        seed=seed,
    )


def save_alignment_plots(report: AlignmentReport, out_dir: str | Path) -> list[Path]:
    """Scatter + marginal plots of the 2D projections."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, axes = plt.subplots(1, 2, figsize=(10, 5))
    styles = {
        "ct_latent": dict(c="tab:orange", marker="o"),
        "cond_after": dict(c="tab:blue", marker="^"),
        "cond_before": dict(c="tab:gray", marker="x"),
    }
    for ax, cond_name in zip(axes, ("cond_after", "cond_before")):
        for name in ("ct_latent", cond_name):
            pts = report.coords_2d[name]
            ax.scatter(pts[:, 0], pts[:, 1], s=14, alpha=0.7, label=name, **styles[name])
        ax.set_title(f"latent vs {cond_name}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    scatter_path = out_dir / "alignment_scatter.png"
    fig.savefig(scatter_path, dpi=120)
    plt.close(fig)
    written.append(scatter_path)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for i, axname in enumerate(("x", "y")):
        for name in report.coords_2d:
            axes[i].hist(
                report.coords_2d[name][:, i], bins=20, alpha=0.5, label=name
            )
        axes[i].set_title(f"marginal {axname}")
        axes[i].legend(fontsize=8)
    fig.tight_layout()
    marginal_path = out_dir / "alignment_marginals.png"
    fig.savefig(marginal_path, dpi=120)
    plt.close(fig)
    written.append(marginal_path)

    report_path = out_dir / "alignment_report.txt"
    report_path.write_text("\n".join(report.summary_lines()) + "\n")
    written.append(report_path)
    return written
