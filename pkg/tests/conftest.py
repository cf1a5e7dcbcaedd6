"""Shared fixtures and synthetic-image helpers for the test suite."""

import numpy as np
import pytest

from tactgen import dataset as ds
from tactgen.rigsim import (
    RenderConfig,
    TrajectoryConfig,
    generate_dataset,
    make_shape,
)


def render_dot_grid(h, w, rows, cols, spacing, radius=2.2,
                    offset=(0.0, 0.0), bg=200, dark=90.0):
    """Test-local renderer: anti-aliased dark dots on a flat background.

    Independent of the library rendering code so detection tests have a
    ground truth that does not share implementation with what they check.
    Returns (image (3,H,W) uint8, centroids (rows*cols, 2) as (x, y) in
    row-major order).
    """
    img = np.full((h, w), float(bg))
    cx0 = (w - 1) / 2.0 - (cols - 1) / 2.0 * spacing + offset[0]
    cy0 = (h - 1) / 2.0 - (rows - 1) / 2.0 * spacing + offset[1]
    centers = []
    yy, xx = np.mgrid[0:h, 0:w]
    for r in range(rows):
        for c in range(cols):
            cx = cx0 + c * spacing
            cy = cy0 + r * spacing
            centers.append((cx, cy))
            alpha = np.clip(radius + 0.5 - np.hypot(xx - cx, yy - cy), 0.0, 1.0)
            img -= dark * alpha
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return np.stack([img] * 3), np.array(centers)


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """A small real on-disk dataset: one sphere, one depth cycle at 32x32."""
    out = tmp_path_factory.mktemp("tinyset")
    traj = TrajectoryConfig(max_depth=0.4, capture_period_s=40.0)
    render = RenderConfig(sensor_type="rgb_marker", image_size=(32, 32))
    return generate_dataset([make_shape("sphere", 8.0)], traj, render, out, seed=3)


def write_image_pair(tmp_path, name, a, b, real="real", gen="gen"):
    real_dir = tmp_path / real
    gen_dir = tmp_path / gen
    real_dir.mkdir(exist_ok=True)
    gen_dir.mkdir(exist_ok=True)
    ds.write_png(real_dir / name, a)
    ds.write_png(gen_dir / name, b)
    return real_dir, gen_dir
