"""Force-to-plane encoding and assembly of the 4-channel condition tensor.

A six-axis force reading is a 6-vector; the object image is ``(3, H, W)``.
To condition image generation on both, the force is expanded into a single
``(1, H, W)`` plane and concatenated onto the normalized object image,
giving a ``(4, H, W)`` condition tensor.

Two expansion modes are provided:

* ``banded`` (default): the plane is split into six horizontal bands, band
  ``k`` filled with the k-th force component rescaled to ``[-1, 1]`` by its
  calibration range. Locally interpretable and exactly invertible on the
  grid.
* ``projected``: a seeded sinusoidal random projection,
  ``plane[r, c] = sin(sum_k w[r,c,k] * f_k + b[r,c])`` with ``(w, b)``
  drawn once from a PRNG at the given seed.

Both are pure functions of their arguments; the mode, seed and calibration
ranges are part of the experiment config and are embedded in checkpoints so
training and sampling always agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ForceVector, normalize
from .errors import CalibrationError, ImageShapeError, ParameterError

MODES = ("banded", "projected")


@dataclass(frozen=True)
class CalibrationRanges:
    """Per-axis (min, max) bounds used to rescale forces to [-1, 1]."""

    fx: tuple[float, float]
    fy: tuple[float, float]
    fz: tuple[float, float]
    mx: tuple[float, float]
    my: tuple[float, float]
    mz: tuple[float, float]

    def __post_init__(self):
        for axis in ForceVector.AXES:
            lo, hi = getattr(self, axis)
            if not (lo < hi):
                raise ParameterError(
                    f"calibration range for {axis} must satisfy min < max, got ({lo}, {hi})"
                )

    @classmethod
    def symmetric(cls, bound: float = 1.0) -> "CalibrationRanges":
        r = (-float(bound), float(bound))
        return cls(r, r, r, r, r, r)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationRanges":
        kwargs = {}
        for axis in ForceVector.AXES:
            lo, hi = d[axis]
            kwargs[axis] = (float(lo), float(hi))
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {axis: list(getattr(self, axis)) for axis in ForceVector.AXES}

    def rescale(self, force: ForceVector) -> np.ndarray:
        """Map each component to [-1, 1]; raises CalibrationError if outside."""
        out = np.empty(6, dtype=np.float64)
        for i, axis in enumerate(ForceVector.AXES):
            lo, hi = getattr(self, axis)
            v = getattr(force, axis)
            if v < lo or v > hi:
                raise CalibrationError(axis, v, lo, hi)
            out[i] = 2.0 * (v - lo) / (hi - lo) - 1.0
        return out


def ranges_from_forces(forces, margin: float = 0.05) -> CalibrationRanges:
    """Calibration ranges covering a collection of ForceVectors plus a margin.

    Handy for rigsim-generated datasets where the true excursion of each
    axis is known only after generation. Degenerate axes get a +/-margin
    window so min < max always holds.
    """
    arr = np.asarray([f.as_array() for f in forces], dtype=np.float64)
    if arr.size == 0:
        raise ParameterError("need at least one force to derive ranges")
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = margin * span + 1e-6
    lo, hi = lo - pad, hi + pad
    return CalibrationRanges(**{
        axis: (float(lo[i]), float(hi[i])) for i, axis in enumerate(ForceVector.AXES)
    })


def band_bounds(height: int) -> list[tuple[int, int]]:
    """Row ranges of the six horizontal bands; the last band absorbs H mod 6."""
    if height < 6:
        raise ParameterError(f"plane height must be >= 6 to fit six bands, got {height}")
    b = height // 6
    bounds = [(k * b, (k + 1) * b) for k in range(6)]
    bounds[-1] = (5 * b, height)
    return bounds


def hash_expand(force: ForceVector, ranges: CalibrationRanges,
                size: tuple[int, int], mode: str = "banded",
                seed: int = 0) -> np.ndarray:
    """Expand a six-axis force into a (1, H, W) plane with values in [-1, 1]."""
    h, w = int(size[0]), int(size[1])
    if h <= 0 or w <= 0:
        raise ParameterError(f"invalid plane size {size}")
    if mode not in MODES:
        raise ParameterError(f"unknown expansion mode {mode!r}; expected one of {MODES}")
    scaled = ranges.rescale(force)

    if mode == "banded":
        plane = np.empty((h, w), dtype=np.float64)
        for k, (r0, r1) in enumerate(band_bounds(h)):
            plane[r0:r1, :] = scaled[k]
    else:
        rng = np.random.default_rng(seed)
        weights = rng.standard_normal((h, w, 6))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(h, w))
        plane = np.sin(weights @ scaled + phases)
    return plane[None]


def assemble_condition(image, force: ForceVector, ranges: CalibrationRanges,
                       mode: str = "banded", seed: int = 0) -> np.ndarray:
    """Concatenate normalize(image) with the force plane into (4, H, W)."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ImageShapeError(
            f"condition image must be 3-channel (3, H, W); got shape {arr.shape}"
        )
    plane = hash_expand(force, ranges, arr.shape[1:], mode=mode, seed=seed)
    return np.concatenate([normalize(arr), plane], axis=0)
