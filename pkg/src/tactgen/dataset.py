"""Dataset format: records, manifest I/O, normalization, train/test split.

Image conventions used throughout the package:

* arrays are channel-first ``(C, H, W)``; grayscale helpers use ``(H, W)``
* storage domain: integer intensities in ``[0, 255]`` (uint8 on disk, PNG)
* model domain: floats in ``[-1, 1]`` via ``v / 127.5 - 1``

The manifest is a single plain-text file with a small key/value header and
one whitespace-separated row per record; the exact grammar is documented in
``docs/manifest_format.md``. All image paths are stored relative to the
manifest's directory, with forward slashes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import (
    DatasetError,
    DomainError,
    EmptyDatasetError,
    ImageShapeError,
    ManifestFormatError,
    ParameterError,
)

MANIFEST_MAGIC = "tactgen-manifest"
FORMAT_VERSION = 1
SENSOR_TYPES = ("rgb_plain", "rgb_marker", "white_marker")

_COLUMNS = (
    "record_id object_image tactile_image "
    "fx fy fz mx my mz pose_x pose_y pose_z twist"
).split()


# ---------------------------------------------------------------------------
# core value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForceVector:
    """Six-axis reading: forces in N, torques in N·mm."""

    fx: float
    fy: float
    fz: float
    mx: float
    my: float
    mz: float

    AXES = ("fx", "fy", "fz", "mx", "my", "mz")

    def __post_init__(self):
        for axis in self.AXES:
            v = getattr(self, axis)
            if not math.isfinite(v):
                raise ParameterError(f"force component {axis} is not finite: {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.fz, self.mx, self.my, self.mz],
                        dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "ForceVector":
        arr = np.asarray(arr, dtype=np.float64).reshape(-1)
        if arr.size != 6:
            raise ParameterError(f"force vector needs 6 components, got {arr.size}")
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class Pose:
    """Rig pose: position in mm, twist about z in degrees."""

    x: float
    y: float
    z: float
    twist: float

    def as_tuple(self):
        return (self.x, self.y, self.z, self.twist)


@dataclass(frozen=True)
class ContactRecord:
    """One (object image, force, tactile image) triplet plus pose metadata.

    Image paths are relative to the manifest directory; pixel data is
    decoded on demand through the owning :class:`DatasetManifest`.
    """

    record_id: str
    object_image: str
    tactile_image: str
    force: ForceVector
    pose: Pose


@dataclass
class DatasetManifest:
    """Ordered collection of contact records plus dataset-level metadata."""

    records: list[ContactRecord]
    image_size: tuple[int, int]
    sensor_type: str
    format_version: int = FORMAT_VERSION
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.sensor_type not in SENSOR_TYPES:
            raise DatasetError(
                f"unknown sensor_type {self.sensor_type!r}; expected one of {SENSOR_TYPES}"
            )
        h, w = self.image_size
        if h <= 0 or w <= 0:
            raise DatasetError(f"invalid image_size {self.image_size}")
        seen = set()
        for rec in self.records:
            if rec.record_id in seen:
                raise DatasetError(f"duplicate record_id {rec.record_id!r}")
            seen.add(rec.record_id)

    def __len__(self):
        return len(self.records)

    def resolve(self, relpath: str) -> Path:
        if self.root is None:
            raise DatasetError("manifest has no root directory; load or save it first")
        return self.root / relpath

    def load_object_image(self, rec: ContactRecord) -> np.ndarray:
        return self._load_checked(rec, rec.object_image)

    def load_tactile_image(self, rec: ContactRecord) -> np.ndarray:
        return self._load_checked(rec, rec.tactile_image)

    def _load_checked(self, rec: ContactRecord, relpath: str) -> np.ndarray:
        img = read_png(self.resolve(relpath))
        if img.shape[1:] != tuple(self.image_size):
            raise DatasetError(
                f"record {rec.record_id!r}: {relpath} decodes to "
                f"{img.shape[1:]}, manifest declares {tuple(self.image_size)}"
            )
        return img


# ---------------------------------------------------------------------------
# pixel-domain conversion
# ---------------------------------------------------------------------------

def normalize(img) -> np.ndarray:
    """Map storage-domain intensities [0, 255] to model domain [-1, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise DomainError(
            f"storage-domain values must lie in [0, 255]; got "
            f"[{arr.min()}, {arr.max()}]"
        )
    return arr / 127.5 - 1.0


def denormalize(arr) -> np.ndarray:
    """Inverse of :func:`normalize`: round to nearest integer, clamp to [0, 255]."""
    arr = np.asarray(arr, dtype=np.float64)
    out = np.rint((arr + 1.0) * 127.5)
    return np.clip(out, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# PNG I/O (lossless; channel-first arrays)
# ---------------------------------------------------------------------------

def read_png(path) -> np.ndarray:
    """Read a PNG into a (C, H, W) uint8 array (C is 1 or 3)."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"image file not found: {path}")
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim == 2:
        return arr[None]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def write_png(path, img) -> None:
    """Write a (C, H, W) or (H, W) uint8 array as PNG."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise DomainError(f"write_png needs uint8 storage-domain data, got {arr.dtype}")
    if arr.ndim == 2:
        pil = PILImage.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[0] == 1:
        pil = PILImage.fromarray(arr[0], mode="L")
    elif arr.ndim == 3 and arr.shape[0] == 3:
        pil = PILImage.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    else:
        raise ImageShapeError(f"expected (H,W), (1,H,W) or (3,H,W); got {arr.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pil.save(path, format="PNG")


# ---------------------------------------------------------------------------
# manifest I/O
# ---------------------------------------------------------------------------

def save_dataset(manifest: DatasetManifest, path) -> Path:
    """Write the manifest file; returns its path.

    Floats are written with ``repr`` so parsing reproduces them exactly and
    rewriting an unchanged manifest is byte-identical.
    """
    path = Path(path)
    lines = [MANIFEST_MAGIC]
    lines.append(f"format_version: {manifest.format_version}")
    lines.append(f"image_size: {manifest.image_size[0]} {manifest.image_size[1]}")
    lines.append(f"sensor_type: {manifest.sensor_type}")
    lines.append(f"records: {len(manifest.records)}")
    lines.append("columns: " + " ".join(_COLUMNS))
    for rec in manifest.records:
        for p in (rec.object_image, rec.tactile_image, rec.record_id):
            if any(c.isspace() for c in p):
                raise ManifestFormatError(f"whitespace not allowed in field {p!r}")
        f, pose = rec.force, rec.pose
        row = [rec.record_id, rec.object_image, rec.tactile_image]
        row += [repr(float(v)) for v in (f.fx, f.fy, f.fz, f.mx, f.my, f.mz)]
        row += [repr(float(v)) for v in (pose.x, pose.y, pose.z, pose.twist)]
        lines.append(" ".join(row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.root = path.parent
    return path


def load_dataset(manifest_path, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest file.

    With ``check_files`` every referenced image must exist; decoded shapes
    are validated lazily on first access (or eagerly via
    :func:`validate_images`).
    """
    path = Path(manifest_path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != MANIFEST_MAGIC:
        raise ManifestFormatError(f"{path}: missing '{MANIFEST_MAGIC}' magic line")

    header: dict[str, str] = {}
    idx = 1
    for key in ("format_version", "image_size", "sensor_type", "records", "columns"):
        if idx >= len(lines):
            raise ManifestFormatError(f"{path}: truncated header (missing {key})")
        line = lines[idx]
        idx += 1
        if ":" not in line:
            raise ManifestFormatError(f"{path}: bad header line {line!r}")
        k, v = line.split(":", 1)
        if k.strip() != key:
            raise ManifestFormatError(f"{path}: expected header {key!r}, got {k.strip()!r}")
        header[key] = v.strip()

    version = int(header["format_version"])
    if version != FORMAT_VERSION:
        raise ManifestFormatError(f"{path}: unsupported format_version {version}")
    if header["columns"].split() != _COLUMNS:
        raise ManifestFormatError(f"{path}: unexpected column layout")
    hw = header["image_size"].split()
    if len(hw) != 2:
        raise ManifestFormatError(f"{path}: bad image_size {header['image_size']!r}")
    image_size = (int(hw[0]), int(hw[1]))
    n_records = int(header["records"])

    rows = [ln for ln in lines[idx:] if ln.strip()]
    if len(rows) != n_records:
        raise ManifestFormatError(
            f"{path}: header declares {n_records} records, file has {len(rows)} rows"
        )

    records = []
    for ln in rows:
        parts = ln.split()
        if len(parts) != len(_COLUMNS):
            raise ManifestFormatError(f"{path}: bad record row {ln!r}")
        rid, obj, tac = parts[0], parts[1], parts[2]
        vals = [float(v) for v in parts[3:]]
        records.append(ContactRecord(
            record_id=rid,
            object_image=obj,
            tactile_image=tac,
            force=ForceVector(*vals[:6]),
            pose=Pose(*vals[6:]),
        ))

    manifest = DatasetManifest(
        records=records,
        image_size=image_size,
        sensor_type=header["sensor_type"],
        format_version=version,
        root=path.parent,
    )
    if check_files:
        missing = [
            rec.record_id
            for rec in records
            if not (path.parent / rec.object_image).is_file()
            or not (path.parent / rec.tactile_image).is_file()
        ]
        if missing:
            raise DatasetError(
                f"{path}: missing image files for records: {', '.join(missing)}"
            )
    return manifest


def validate_images(manifest: DatasetManifest) -> None:
    """Eagerly decode every image and check it against the declared size."""
    for rec in manifest.records:
        manifest.load_object_image(rec)
        manifest.load_tactile_image(rec)


# ---------------------------------------------------------------------------
# train/test split
# ---------------------------------------------------------------------------

def split_dataset(manifest: DatasetManifest, ratio: float, seed: int):
    """Deterministic seeded random split into (train, test) manifests.

    ``len(train) == round(ratio * N)``; together the two halves are a
    partition of the input records. Record order within each half follows
    the shuffled order so repeated calls are byte-identical.
    """
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"split ratio must lie in (0, 1), got {ratio}")
    n = len(manifest.records)
    if n == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(round(ratio * n))
    train_idx, test_idx = order[:n_train], order[n_train:]
    train = replace(manifest, records=[manifest.records[i] for i in train_idx])
    test = replace(manifest, records=[manifest.records[i] for i in test_idx])
    return train, test
