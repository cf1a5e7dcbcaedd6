"""Evaluation suite: image similarity, marker detection, displacement error, flow.

Similarity metrics operate on storage-domain images (values in [0, 255],
any channel layout as long as both inputs match):

* MSE / MAE: per-pixel means over all channels.
* SSIM: single-scale, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
  dynamic range 255, averaged over channels. Near the borders the window is
  truncated to the image support and its weights renormalized, so every
  pixel contributes and images smaller than the window are well defined.
  The naive reference implementation in the test suite follows the same
  convention.
* PSNR: ``10 * log10(255**2 / MSE)``; identical images report ``inf``.

Marker analysis detects a printed dot grid via adaptive mean thresholding
and connected components, orders the centroids into (row, col) grid
indices, and measures per-marker Euclidean displacement between a real and
a generated image. Both the summed displacement and the per-marker mean
are reported. Sparse flow (one vector per marker) can be exported as an
arrow overlay PNG.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dataset import write_png
from .errors import (
    CorrespondenceError,
    ImageShapeError,
    MarkerDetectionError,
    ParameterError,
    ZeroMarkersError,
)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0


# ---------------------------------------------------------------------------
# image similarity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricReport:
    mse: float
    mae: float
    ssim: float
    psnr: float

    def as_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "ssim": self.ssim, "psnr": self.psnr}


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k2 = np.outer(k, k)
    return k2 / k2.sum()


def _windowed_mean(img: np.ndarray, kernel: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Gaussian-weighted local mean with border truncation + renormalization."""
    num = ndimage.correlate(img, kernel, mode="constant", cval=0.0)
    return num / weight


def ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    """SSIM of one channel; inputs float64 in storage domain."""
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    ones = np.ones_like(a)
    weight = ndimage.correlate(ones, kernel, mode="constant", cval=0.0)
    mu_a = _windowed_mean(a, kernel, weight)
    mu_b = _windowed_mean(b, kernel, weight)
    e_aa = _windowed_mean(a * a, kernel, weight)
    e_bb = _windowed_mean(b * b, kernel, weight)
    e_ab = _windowed_mean(a * b, kernel, weight)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def image_similarity(a, b) -> MetricReport:
    """MSE, MAE, SSIM and PSNR between two storage-domain images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ImageShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    mse = float(np.mean(diff * diff))
    mae = float(np.mean(np.abs(diff)))
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(DYNAMIC_RANGE ** 2 / mse)

    if a.ndim == 2:
        channels_a, channels_b = a[None], b[None]
    elif a.ndim == 3:
        channels_a, channels_b = a, b
    else:
        raise ImageShapeError(f"expected (H, W) or (C, H, W), got {a.shape}")
    ssim = float(np.mean([ssim_channel(ca, cb)
                          for ca, cb in zip(channels_a, channels_b)]))
    return MetricReport(mse=mse, mae=mae, ssim=ssim, psnr=psnr)


# ---------------------------------------------------------------------------
# marker detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkerSet:
    """Grid-ordered marker centroids in pixel coordinates (x right, y down).

    ``centroids[i]`` is (x, y) for grid position ``indices[i]`` = (row, col);
    entries are sorted row-major so equal grid shapes imply direct
    correspondence.
    """

    centroids: np.ndarray
    indices: np.ndarray
    grid_shape: tuple[int, int]

    def __len__(self):
        return self.centroids.shape[0]


def _cluster_axis(values: np.ndarray, n_groups: int) -> np.ndarray:
    """Assign 0..n_groups-1 labels by splitting sorted values at the largest gaps."""
    order = np.argsort(values)
    labels = np.empty(values.size, dtype=int)
    if n_groups == 1:
        labels.fill(0)
        return labels
    sorted_vals = values[order]
    gaps = np.diff(sorted_vals)
    cut_positions = np.sort(np.argsort(gaps)[-(n_groups - 1):])
    group = 0
    cuts = set((cut_positions + 1).tolist())
    for rank, idx in enumerate(order):
        if rank in cuts:
            group += 1
        labels[idx] = group
    return labels


def detect_markers(img, grid_shape, roi=None, *, window: int | None = None,
                   offset: float = 4.0, min_area: int = 3,
                   max_area: int | None = None, polarity: str = "dark") -> MarkerSet:
    """Locate a rows x cols marker grid and return ordered subpixel centroids.

    Pipeline: adaptive mean threshold (local mean over ``window`` pixels,
    shifted by ``offset``) -> connected components -> area filter ->
    intensity-weighted centroids -> row/column clustering for grid indices.

    ``roi`` restricts detection: a float selects that central fraction of
    the image, a 4-tuple gives (y0, x0, y1, x1) pixel bounds. Raises
    MarkerDetectionError when the count differs from rows*cols.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        gray = arr.mean(axis=0)
    elif arr.ndim == 2:
        gray = arr
    else:
        raise ImageShapeError(f"expected (H, W) or (C, H, W), got {arr.shape}")
    rows, cols = int(grid_shape[0]), int(grid_shape[1])
    if rows < 1 or cols < 1:
        raise ParameterError(f"bad grid shape {grid_shape}")
    n_expected = rows * cols
    h, w = gray.shape

    if roi is None:
        y0 = x0 = 0
        y1, x1 = h, w
    elif np.isscalar(roi):
        frac = float(roi)
        if not 0.0 < frac <= 1.0:
            raise ParameterError(f"roi fraction must lie in (0, 1], got {roi}")
        my, mx = int(round(h * (1 - frac) / 2)), int(round(w * (1 - frac) / 2))
        y0, x0, y1, x1 = my, mx, h - my, w - mx
    else:
        y0, x0, y1, x1 = (int(v) for v in roi)
    sub = gray[y0:y1, x0:x1]
    sh, sw = sub.shape
    if sh < 2 or sw < 2:
        raise ParameterError("roi is empty or degenerate")

    spacing = min(sh / rows, sw / cols)
    if window is None:
        window = max(5, int(round(1.5 * spacing)) | 1)
    if max_area is None:
        max_area = int(np.ceil(spacing * spacing))

    local_mean = ndimage.uniform_filter(sub, size=window, mode="reflect")
    if polarity == "dark":
        mask = sub < local_mean - offset
        strength = local_mean - sub
    elif polarity == "bright":
        mask = sub > local_mean + offset
        strength = sub - local_mean
    else:
        raise ParameterError(f"polarity must be 'dark' or 'bright', got {polarity!r}")

    labels, n_blobs = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n_blobs == 0:
        raise ZeroMarkersError(n_expected)

    areas = ndimage.sum_labels(np.ones_like(sub), labels, index=np.arange(1, n_blobs + 1))
    keep = [i + 1 for i, area in enumerate(areas) if min_area <= area <= max_area]
    if not keep:
        raise ZeroMarkersError(n_expected)
    if len(keep) != n_expected:
        raise MarkerDetectionError(n_expected, len(keep),
                                   f"after area filter [{min_area}, {max_area}]")

    weights = np.where(mask, np.maximum(strength, 1e-9), 0.0)
    coms = ndimage.center_of_mass(weights, labels, index=keep)
    cents = np.array([(cx + x0, cy + y0) for cy, cx in coms], dtype=np.float64)

    row_labels = _cluster_axis(cents[:, 1], rows)
    col_labels = np.empty(len(cents), dtype=int)
    for r in range(rows):
        sel = np.flatnonzero(row_labels == r)
        if sel.size != cols:
            raise MarkerDetectionError(
                n_expected, len(cents), f"row {r} has {sel.size} markers, expected {cols}"
            )
        order = sel[np.argsort(cents[sel, 0])]
        col_labels[order] = np.arange(cols)

    flat = row_labels * cols + col_labels
    if len(set(flat.tolist())) != n_expected:
        raise MarkerDetectionError(n_expected, len(cents), "grid indices not unique")
    order = np.argsort(flat)
    return MarkerSet(
        centroids=cents[order],
        indices=np.stack([row_labels[order], col_labels[order]], axis=1),
        grid_shape=(rows, cols),
    )


# ---------------------------------------------------------------------------
# marker displacement and flow
# ---------------------------------------------------------------------------

def _check_correspondence(real: MarkerSet, gen: MarkerSet) -> None:
    if real.grid_shape != gen.grid_shape:
        raise CorrespondenceError(
            f"grid shapes differ: {real.grid_shape} vs {gen.grid_shape}"
        )
    if not np.array_equal(real.indices, gen.indices):
        raise CorrespondenceError("marker sets carry different grid indices")


def match_markers(real: MarkerSet, gen: MarkerSet,
                  method: str = "grid") -> np.ndarray:
    """Pairwise displacement vectors gen - real, matched per method.

    ``grid`` pairs markers by (row, col) index; ``hungarian`` solves the
    globally optimal assignment on centroid distances (for distorted grids
    where row/column clustering may disagree between the two images).
    """
    if method == "grid":
        _check_correspondence(real, gen)
        return gen.centroids - real.centroids
    if method == "hungarian":
        if len(real) != len(gen):
            raise CorrespondenceError(
                f"marker counts differ: {len(real)} vs {len(gen)}"
            )
        from scipy.optimize import linear_sum_assignment

        cost = np.linalg.norm(
            real.centroids[:, None, :] - gen.centroids[None, :, :], axis=2
        )
        rows, cols = linear_sum_assignment(cost)
        out = np.empty_like(real.centroids)
        out[rows] = gen.centroids[cols] - real.centroids[rows]
        return out
    raise ParameterError(f"unknown matching method {method!r}")


def marker_displacement_error(real: MarkerSet, gen: MarkerSet,
                              method: str = "grid") -> tuple[float, float]:
    """Summed and per-marker mean Euclidean centroid displacement (pixels).

    The summed form matches how aggregate marker error tables are usually
    reported; the mean is the sum divided by the marker count. Both are
    returned so neither reading is ambiguous.
    """
    vectors = match_markers(real, gen, method=method)
    dists = np.linalg.norm(vectors, axis=1)
    d_sum = float(dists.sum())
    return d_sum, d_sum / len(dists)


@dataclass(frozen=True)
class FlowField:
    """Sparse per-marker displacement field anchored at real-image centroids."""

    anchors: np.ndarray
    vectors: np.ndarray
    grid_shape: tuple[int, int]

    def __len__(self):
        return self.anchors.shape[0]


def compute_flow(real: MarkerSet, gen: MarkerSet, method: str = "grid") -> FlowField:
    vectors = match_markers(real, gen, method=method)
    return FlowField(anchors=real.centroids.copy(), vectors=vectors,
                     grid_shape=real.grid_shape)


def _draw_line(canvas: np.ndarray, p0, p1, color) -> None:
    """Rasterize a line segment by dense sampling; canvas is (H, W, 3) uint8."""
    h, w = canvas.shape[:2]
    length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    n = max(2, int(length * 4) + 1)
    ts = np.linspace(0.0, 1.0, n)
    xs = np.rint(p0[0] + ts * (p1[0] - p0[0])).astype(int)
    ys = np.rint(p0[1] + ts * (p1[1] - p0[1])).astype(int)
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    canvas[ys[ok], xs[ok]] = color


def render_flow_overlay(field: FlowField, image=None, size=None,
                        scale: float = 1.0, color=(0, 255, 0)) -> np.ndarray:
    """Draw the flow arrows over an image (or a blank canvas); returns (3, H, W)."""
    if image is not None:
        arr = np.asarray(image)
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise ImageShapeError(f"overlay base must be (1|3, H, W), got {arr.shape}")
        canvas = np.repeat(arr, 3, axis=0) if arr.shape[0] == 1 else arr.copy()
        canvas = canvas.transpose(1, 2, 0).astype(np.uint8).copy()
    else:
        if size is None:
            raise ParameterError("need either a base image or an explicit size")
        canvas = np.full((int(size[0]), int(size[1]), 3), 255, dtype=np.uint8)

    color = tuple(int(c) for c in color)
    for (x, y), (dx, dy) in zip(field.anchors, field.vectors):
        tip = (x + dx * scale, y + dy * scale)
        _draw_line(canvas, (x, y), tip, color)
        mag = math.hypot(tip[0] - x, tip[1] - y)
        if mag > 1e-9:
            ang = math.atan2(tip[1] - y, tip[0] - x)
            head = max(2.0, 0.25 * mag)
            for side in (math.pi * 5 / 6, -math.pi * 5 / 6):
                hx = tip[0] + head * math.cos(ang + side)
                hy = tip[1] + head * math.sin(ang + side)
                _draw_line(canvas, tip, (hx, hy), color)
    return canvas.transpose(2, 0, 1)


def export_flow(field: FlowField, path, image=None, size=None,
                scale: float = 1.0, color=(0, 255, 0)) -> Path:
    """Render the arrow overlay and write it as a PNG."""
    overlay = render_flow_overlay(field, image=image, size=size,
                                  scale=scale, color=color)
    path = Path(path)
    write_png(path, overlay)
    return path


# ---------------------------------------------------------------------------
# evaluation reports
# ---------------------------------------------------------------------------

REPORT_FIELDS = ("name", "mse", "mae", "ssim", "psnr", "d_sum", "d_mean")


def aggregate_rows(rows: list[dict]) -> dict:
    """Mean over pairs for every numeric column (inf-aware for PSNR)."""
    agg = {"name": "aggregate"}
    for key in REPORT_FIELDS[1:]:
        vals = [r[key] for r in rows if r.get(key) is not None]
        agg[key] = float(np.mean(vals)) if vals else None
    return agg


def write_report_csv(path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in REPORT_FIELDS})
    return path


def format_report_table(rows: list[dict]) -> str:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return "inf" if math.isinf(v) else f"{v:.4f}"
        return str(v)

    table = [[fmt(row.get(k)) for k in REPORT_FIELDS] for row in rows]
    widths = [max(len(REPORT_FIELDS[i]), *(len(r[i]) for r in table))
              for i in range(len(REPORT_FIELDS))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(REPORT_FIELDS, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in table:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)
