"""Synthetic acquisition rig: trajectory replay, force synthesis, tactile rendering.

Real paired (object image, six-axis force, tactile image) data needs
hardware; this module stands in for the rig with a phenomenological model
whose only contract is internal consistency: forces are continuous in
pose, contact area and normal force grow with press depth, marker drag
follows tangential load and twist. It emits complete datasets in the
standard manifest format so the rest of the pipeline can be exercised and
tested end to end at desk scale.

Conventions: the sensor surface is the z=0 plane, poses in mm with z <= 0
during contact, twist about z in degrees. Images are channel-first with
pixel x right / y down; +x mm maps to +x px and +y mm to +y px.
"""

from __future__ import annotations

import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dataset import (
    ContactRecord,
    DatasetManifest,
    ForceVector,
    Pose,
    save_dataset,
    write_png,
)
from .errors import ParameterError

FAR = 1e9  # height value outside the indenter footprint

SHAPE_KINDS = ("sphere", "square", "ring", "heart", "textured_plate")

_OBJECT_TINTS = {
    "sphere": (0.82, 0.33, 0.28),
    "square": (0.30, 0.48, 0.78),
    "ring": (0.34, 0.66, 0.38),
    "heart": (0.80, 0.42, 0.62),
    "textured_plate": (0.62, 0.52, 0.34),
}


# ---------------------------------------------------------------------------
# indenter shapes
# ---------------------------------------------------------------------------

def _heart_outline(size: float, n: int = 180) -> np.ndarray:
    """Classic closed heart curve scaled to roughly `size` mm across."""
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    x = 16.0 * np.sin(t) ** 3
    y = -(13.0 * np.cos(t) - 5.0 * np.cos(2 * t)
          - 2.0 * np.cos(3 * t) - np.cos(4 * t))
    pts = np.stack([x, y], axis=1)
    pts -= pts.mean(axis=0)
    extent = pts.max(axis=0) - pts.min(axis=0)
    return pts * (size / extent.max())


def _polygon_sdf(px: np.ndarray, py: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Signed distance to a closed polygon; negative inside (even-odd rule)."""
    p = np.stack([px, py], axis=-1)[..., None, :]          # (..., 1, 2)
    a = verts[None, :, :]                                   # (1, M, 2)
    b = np.roll(verts, -1, axis=0)[None, :, :]
    ab = b - a
    ap = p - a
    h = np.clip((ap * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
    dist = np.linalg.norm(ap - ab * h[..., None], axis=-1).min(axis=-1)

    ax, ay = verts[:, 0], verts[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    yy = py[..., None]
    xx = px[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        crosses = ((ay <= yy) != (by <= yy)) & \
            (xx < ax + (yy - ay) * (bx - ax) / (by - ay))
    inside = crosses.sum(axis=-1) % 2 == 1
    return np.where(inside, -dist, dist)


@dataclass(frozen=True)
class IndenterShape:
    """Parametric indenter pressed into the sensor from above.

    ``sdf`` gives the signed distance (mm) to the footprint outline in the
    shape frame (negative inside); ``height`` the undersurface height above
    the lowest point, which is what turns press depth into a penetration
    map. Build instances through :func:`make_shape`.
    """

    kind: str
    label: str
    size: float
    inner: float = 0.0
    texture_amp: float = 0.3
    texture_period: float = 1.5
    texture_kind: str = "weave"
    texture_seed: int = 0
    _heart_verts: np.ndarray | None = field(default=None, compare=False, repr=False)

    def sdf(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "sphere":
            return np.hypot(x, y) - self.size / 2.0
        if self.kind in ("square", "textured_plate"):
            qx = np.abs(x) - self.size / 2.0
            qy = np.abs(y) - self.size / 2.0
            outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
            return outside + np.minimum(np.maximum(qx, qy), 0.0)
        if self.kind == "ring":
            mid = (self.size / 2.0 + self.inner / 2.0) / 2.0
            half_w = (self.size / 2.0 - self.inner / 2.0) / 2.0
            return np.abs(np.hypot(x, y) - mid) - half_w
        if self.kind == "heart":
            return _polygon_sdf(x, y, self._heart_verts)
        raise ParameterError(f"unknown shape kind {self.kind!r}")

    def height(self, x, y) -> np.ndarray:
        """Undersurface height (mm) above the contact tip; FAR outside."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        d = self.sdf(x, y)
        if self.kind == "sphere":
            r = self.size / 2.0
            rad2 = np.clip(r * r - x * x - y * y, 0.0, None)
            h = r - np.sqrt(rad2)
            return np.where(d <= 0.0, h, FAR)
        if self.kind == "textured_plate":
            tex = self.texture(x, y)
            return np.where(d <= 0.0, self.texture_amp - tex, FAR)
        return np.where(d <= 0.0, 0.0, FAR)

    def texture(self, x, y) -> np.ndarray:
        """Height of raised texture features in [0, texture_amp]."""
        if self.texture_kind == "weave":
            u = np.sin(2.0 * np.pi * x / self.texture_period)
            v = np.sin(2.0 * np.pi * y / self.texture_period)
            return self.texture_amp * 0.5 * (1.0 + u * v)
        if self.texture_kind == "noise":
            rng = np.random.default_rng(self.texture_seed)
            coarse = rng.random((12, 12))
            gx = (np.asarray(x) / self.size + 0.5) * 11.0
            gy = (np.asarray(y) / self.size + 0.5) * 11.0
            coords = np.stack([np.clip(gy, 0, 11), np.clip(gx, 0, 11)])
            return self.texture_amp * ndimage.map_coordinates(
                coarse, coords.reshape(2, -1), order=1).reshape(np.shape(x))
        raise ParameterError(f"unknown texture kind {self.texture_kind!r}")

    def footprint_area(self) -> float:
        """Full footprint area in mm^2 (for flat shapes: the contact area)."""
        if self.kind == "sphere":
            return math.pi * (self.size / 2.0) ** 2
        if self.kind in ("square", "textured_plate"):
            return self.size ** 2
        if self.kind == "ring":
            return math.pi * ((self.size / 2.0) ** 2 - (self.inner / 2.0) ** 2)
        if self.kind == "heart":
            v = self._heart_verts
            x, y = v[:, 0], v[:, 1]
            return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))
        raise ParameterError(f"unknown shape kind {self.kind!r}")


def make_shape(kind: str, size: float, inner: float | None = None,
               label: str | None = None, **texture_kwargs) -> IndenterShape:
    """Construct an indenter; `size` is the outer diameter / edge length in mm."""
    if kind not in SHAPE_KINDS:
        raise ParameterError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    if size <= 0:
        raise ParameterError(f"shape size must be positive, got {size}")
    if kind == "ring":
        if inner is None:
            inner = 0.5 * size
        if not 0.0 < inner < size:
            raise ParameterError(f"ring inner diameter must lie in (0, {size}), got {inner}")
    else:
        inner = 0.0
    if label is None:
        label = f"{kind}{size:g}mm".replace(".", "p")
    heart = _heart_outline(size) if kind == "heart" else None
    return IndenterShape(kind=kind, label=label, size=float(size),
                         inner=float(inner), _heart_verts=heart, **texture_kwargs)


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryConfig:
    """Replay of the acquisition motion: press, lateral excursions, twist.

    The rig moves at `speed` (mm/s; twists at `twist_speed` deg/s) and the
    capture trigger runs at `sample_rate` Hz, but consecutive captures are
    `capture_period_s` apart: the rig dwells between retained frames so
    the elastomer settles, which also keeps dataset sizes at the scale of
    a few hundred records per object. Defaults give ~700.
    """

    press_depth_step: float = 0.4
    lateral_excursion: float = 2.0
    twist_angle: float = 5.0
    max_depth: float = 1.6
    speed: float = 0.01
    sample_rate: float = 1.0
    twist_speed: float = 0.01
    capture_period_s: float = 13.75

    def __post_init__(self):
        for name in ("press_depth_step", "lateral_excursion", "twist_angle",
                     "max_depth", "speed", "sample_rate", "twist_speed",
                     "capture_period_s"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"trajectory field {name} must be positive")
        cycles = self.max_depth / self.press_depth_step
        if abs(cycles - round(cycles)) > 1e-9:
            raise ParameterError(
                f"press_depth_step {self.press_depth_step} must divide "
                f"max_depth {self.max_depth}"
            )
        if self.capture_period_s < 1.0 / self.sample_rate:
            raise ParameterError(
                "capture_period_s cannot be shorter than the trigger interval "
                f"1/sample_rate = {1.0 / self.sample_rate}"
            )

    @property
    def n_cycles(self) -> int:
        return int(round(self.max_depth / self.press_depth_step))


@dataclass(frozen=True)
class RigState:
    """Pose of the indenter plus the capture timestamp."""

    x: float
    y: float
    z: float
    twist: float
    timestamp: float = 0.0

    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.z, self.twist)


def _cycle_waypoints(z: float, lateral: float, twist: float) -> list[tuple]:
    return [
        (0.0, 0.0, z, 0.0),                 # press to depth
        (0.0, lateral, z, 0.0),             # +y excursion
        (lateral, lateral, z, 0.0),         # +x excursion
        (0.0, 0.0, z, 0.0),                 # return
        (0.0, -lateral, z, 0.0),            # mirrored -y
        (-lateral, -lateral, z, 0.0),       # mirrored -x
        (0.0, 0.0, z, 0.0),                 # return
        (0.0, 0.0, z, twist),               # twist about z
        (0.0, 0.0, z, 0.0),                 # untwist before next depth
    ]


def generate_trajectory(cfg: TrajectoryConfig) -> list[RigState]:
    """Sampled rig states along the standard acquisition path.

    Each depth cycle presses to z in {-step, -2 step, ...}, runs the +y/+x
    excursions, their mirrored counterparts, and a twist, always returning
    through the cycle origin. Segment endpoints are always emitted exactly;
    interior samples are spaced `capture_period_s` apart in rig time.
    """
    waypoints: list[tuple] = [(0.0, 0.0, 0.0, 0.0)]
    for k in range(1, cfg.n_cycles + 1):
        waypoints.extend(_cycle_waypoints(-k * cfg.press_depth_step,
                                          cfg.lateral_excursion,
                                          cfg.twist_angle))

    states = [RigState(*waypoints[0], timestamp=0.0)]
    t0 = 0.0
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        lin = math.dist(a[:3], b[:3])
        ang = abs(b[3] - a[3])
        duration = max(lin / cfg.speed, ang / cfg.twist_speed)
        if duration == 0.0:
            continue
        n = max(1, int(round(duration / cfg.capture_period_s)))
        for j in range(1, n + 1):
            if j == n:
                pose = b
            else:
                f = j / n
                pose = tuple(pa + f * (pb - pa) for pa, pb in zip(a, b))
            states.append(RigState(*pose, timestamp=t0 + (j / n) * duration))
        t0 += duration
    return states


# ---------------------------------------------------------------------------
# contact force model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenderConfig:
    """Appearance and contact-model constants for the synthetic sensor.

    Lights default to the three-color photometric layout (R/G/B from
    azimuths 90/210/330 degrees at 45 degrees elevation) for rgb sensors
    and to three white lights for `white_marker`.
    """

    sensor_type: str = "rgb_marker"
    image_size: tuple[int, int] = (64, 64)
    plane_size_mm: float = 16.0
    light_dirs: tuple = None
    light_colors: tuple = None
    ambient: float = 0.35
    diffuse: float = 0.55
    slope_gain: float = 2.0
    proximity_gain: float = 0.25
    gel_sigma_mm: float = 0.35
    stiffness: float = 1.0
    tangential_coupling: float = 0.25
    torsion_coupling: float = 0.02
    moment_coupling: float = 1.0
    marker_rows: int = 8
    marker_cols: int = 8
    marker_spacing_px: float | None = None
    marker_radius_px: float = 1.6
    marker_darkness: float = 0.55
    shear_gain_px_per_mm: float = 1.5
    decay_depth_mm: float = 0.2
    noise_level: float = 0.0

    def __post_init__(self):
        if self.light_dirs is None:
            elev = math.radians(45.0)
            dirs = []
            for az_deg in (90.0, 210.0, 330.0):
                az = math.radians(az_deg)
                dirs.append((math.cos(elev) * math.cos(az),
                             math.cos(elev) * math.sin(az),
                             math.sin(elev)))
            object.__setattr__(self, "light_dirs", tuple(dirs))
        if self.light_colors is None:
            if self.sensor_type == "white_marker":
                colors = ((1 / 3,) * 3,) * 3
            else:
                colors = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
            object.__setattr__(self, "light_colors", colors)

    @property
    def has_markers(self) -> bool:
        return self.sensor_type in ("rgb_marker", "white_marker")

    @property
    def mm_per_px(self) -> float:
        return self.plane_size_mm / self.image_size[1]


def contact_force(shape: IndenterShape, state: RigState,
                  cfg: RenderConfig) -> ForceVector:
    """Phenomenological six-axis force for a pose; exactly zero out of contact.

    Normal load follows a Hertz-style law k * depth^1.5 for spheres and
    k * depth * area for flat shapes; shear is proportional to the lateral
    offset from the press point, torsion to twist times contact area, and
    the bending moments to the normal force applied off-center.
    """
    depth = max(0.0, -state.z)
    if depth == 0.0:
        return ForceVector(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    if shape.kind == "sphere":
        radius = shape.size / 2.0
        fz = cfg.stiffness * depth ** 1.5
        area = math.pi * radius * depth
    else:
        area = shape.footprint_area()
        fz = cfg.stiffness * depth * area
    fx = cfg.tangential_coupling * state.x
    fy = cfg.tangential_coupling * state.y
    mz = cfg.torsion_coupling * state.twist * area
    mx = cfg.moment_coupling * state.y * fz
    my = -cfg.moment_coupling * state.x * fz
    return ForceVector(fx, fy, fz, mx, my, mz)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _pixel_grid_mm(cfg: RenderConfig):
    h, w = cfg.image_size
    s = cfg.mm_per_px
    xs = (np.arange(w) - (w - 1) / 2.0) * s
    ys = (np.arange(h) - (h - 1) / 2.0) * s
    return np.meshgrid(xs, ys)


def _marker_grid_px(cfg: RenderConfig) -> np.ndarray:
    h, w = cfg.image_size
    spacing = cfg.marker_spacing_px
    if spacing is None:
        spacing = min(h / (cfg.marker_rows + 1), w / (cfg.marker_cols + 1))
    rr = (np.arange(cfg.marker_rows) - (cfg.marker_rows - 1) / 2.0) * spacing
    cc = (np.arange(cfg.marker_cols) - (cfg.marker_cols - 1) / 2.0) * spacing
    gx, gy = np.meshgrid(cc + (w - 1) / 2.0, rr + (h - 1) / 2.0)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _stamp_dots(img: np.ndarray, points: np.ndarray, radius: float,
                darkness: float) -> None:
    """Multiply dark anti-aliased discs into a (3, H, W) float image, in place."""
    h, w = img.shape[1:]
    pad = int(math.ceil(radius)) + 2
    for x, y in points:
        x0, x1 = int(math.floor(x)) - pad, int(math.floor(x)) + pad + 1
        y0, y1 = int(math.floor(y)) - pad, int(math.floor(y)) + pad + 1
        x0c, x1c = max(0, x0), min(w, x1)
        y0c, y1c = max(0, y0), min(h, y1)
        if x0c >= x1c or y0c >= y1c:
            continue
        yy, xx = np.mgrid[y0c:y1c, x0c:x1c]
        dist = np.hypot(xx - x, yy - y)
        alpha = np.clip(radius + 0.5 - dist, 0.0, 1.0)
        img[:, y0c:y1c, x0c:x1c] *= 1.0 - darkness * alpha


def _shade(cfg: RenderConfig, g: np.ndarray) -> np.ndarray:
    """Lambertian shading of the smoothed membrane height field g (mm)."""
    s = cfg.mm_per_px
    gy, gx = np.gradient(g, s)
    nz = np.ones_like(g)
    norm = np.sqrt((cfg.slope_gain * gx) ** 2 + (cfg.slope_gain * gy) ** 2 + nz ** 2)
    n = np.stack([-cfg.slope_gain * gx, -cfg.slope_gain * gy, nz]) / norm
    img = np.full((3,) + g.shape, cfg.ambient)
    for ldir, lcol in zip(cfg.light_dirs, cfg.light_colors):
        lam = np.clip(n[0] * ldir[0] + n[1] * ldir[1] + n[2] * ldir[2], 0.0, None)
        for c in range(3):
            img[c] += cfg.diffuse * lcol[c] * lam
    img += cfg.proximity_gain * g
    return img


def penetration_map(shape: IndenterShape, state: RigState,
                    cfg: RenderConfig) -> np.ndarray:
    """Per-pixel penetration depth (mm) of the indenter at the given pose."""
    X, Y = _pixel_grid_mm(cfg)
    theta = math.radians(state.twist)
    ct, st = math.cos(-theta), math.sin(-theta)
    dx, dy = X - state.x, Y - state.y
    sx = ct * dx - st * dy
    sy = st * dx + ct * dy
    depth = max(0.0, -state.z)
    pen = np.maximum(0.0, depth - shape.height(sx, sy))
    edge = np.clip(0.5 - shape.sdf(sx, sy) / cfg.mm_per_px, 0.0, 1.0)
    return pen * edge


def render_tactile(shape: IndenterShape, state: RigState, cfg: RenderConfig,
                   seed: int = 0) -> np.ndarray:
    """Render the sensor response to a pose as a (3, H, W) uint8 image.

    The penetration map is smoothed into a membrane height field, shaded
    per channel under the configured lights, and (for marker sensors)
    overprinted with the dot grid dragged by a displacement field that
    decays away from the contact patch. Deterministic for a fixed seed.
    """
    pen = penetration_map(shape, state, cfg)
    sigma_px = cfg.gel_sigma_mm / cfg.mm_per_px
    g = ndimage.gaussian_filter(pen, sigma=sigma_px)
    img = _shade(cfg, g)

    if cfg.has_markers:
        pts = _marker_grid_px(cfg)
        h, w = cfg.image_size
        coords = np.stack([np.clip(pts[:, 1], 0, h - 1),
                           np.clip(pts[:, 0], 0, w - 1)])
        g_at = ndimage.map_coordinates(g, coords, order=1)
        wgt = g_at / (g_at + cfg.decay_depth_mm)

        shear = cfg.shear_gain_px_per_mm * np.array([state.x, state.y])
        disp = wgt[:, None] * shear[None, :]
        if state.twist != 0.0:
            center = np.array([(w - 1) / 2.0 + state.x / cfg.mm_per_px,
                               (h - 1) / 2.0 + state.y / cfg.mm_per_px])
            rel = pts - center
            phi = np.radians(state.twist) * wgt
            cphi, sphi = np.cos(phi), np.sin(phi)
            rot = np.stack([cphi * rel[:, 0] - sphi * rel[:, 1],
                            sphi * rel[:, 0] + cphi * rel[:, 1]], axis=1)
            disp = disp + (rot - rel)
        _stamp_dots(img, pts + disp, cfg.marker_radius_px, cfg.marker_darkness)

    if cfg.noise_level > 0.0:
        rng = np.random.default_rng(seed)
        img = img + cfg.noise_level * rng.standard_normal(img.shape)

    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def render_background(cfg: RenderConfig, seed: int = 0) -> np.ndarray:
    """Sensor image with no contact: flat shading plus the unwarped grid."""
    g = np.zeros(cfg.image_size, dtype=np.float64)
    img = _shade(cfg, g)
    if cfg.has_markers:
        _stamp_dots(img, _marker_grid_px(cfg), cfg.marker_radius_px,
                    cfg.marker_darkness)
    if cfg.noise_level > 0.0:
        rng = np.random.default_rng(seed)
        img = img + cfg.noise_level * rng.standard_normal(img.shape)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def render_object_image(shape: IndenterShape, cfg: RenderConfig) -> np.ndarray:
    """Orthographic view of the indenter on a light background, (3, H, W) uint8."""
    X, Y = _pixel_grid_mm(cfg)
    d = shape.sdf(X, Y)
    mask = np.clip(0.5 - d / cfg.mm_per_px, 0.0, 1.0)
    tint = np.array(_OBJECT_TINTS[shape.kind])

    if shape.kind == "sphere":
        r = shape.size / 2.0
        rad2 = np.clip(1.0 - (X * X + Y * Y) / (r * r), 0.0, 1.0)
        lam = 0.35 + 0.65 * np.sqrt(rad2)
    elif shape.kind == "textured_plate":
        lam = 0.55 + 0.45 * shape.texture(X, Y) / shape.texture_amp
    else:
        lam = np.full_like(X, 0.85)

    img = np.empty((3,) + X.shape, dtype=np.float64)
    for c in range(3):
        img[c] = 0.92 * (1.0 - mask) + tint[c] * lam * mask
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

def generate_dataset(shapes, traj_cfg: TrajectoryConfig, render_cfg: RenderConfig,
                     out_dir, seed: int = 0) -> DatasetManifest:
    """Render a complete paired dataset and write it in manifest format.

    One trajectory replay per shape; every sampled state yields a record
    (shared object image, six-axis force, tactile image). Partial output
    is removed if anything fails mid-run.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []
    records: list[ContactRecord] = []
    try:
        for s_idx, shape in enumerate(shapes):
            obj_rel = f"images/{shape.label}_object.png"
            obj_path = out_dir / obj_rel
            write_png(obj_path, render_object_image(shape, render_cfg))
            created.append(obj_path)
            for i, state in enumerate(generate_trajectory(traj_cfg)):
                rseed = seed * 1_000_003 + s_idx * 100_003 + i
                tac_rel = f"images/{shape.label}_{i:05d}.png"
                tac_path = out_dir / tac_rel
                write_png(tac_path, render_tactile(shape, state, render_cfg, rseed))
                created.append(tac_path)
                records.append(ContactRecord(
                    record_id=f"{shape.label}-{i:05d}",
                    object_image=obj_rel,
                    tactile_image=tac_rel,
                    force=contact_force(shape, state, render_cfg),
                    pose=state.pose(),
                ))
        manifest = DatasetManifest(records=records,
                                   image_size=render_cfg.image_size,
                                   sensor_type=render_cfg.sensor_type)
        manifest_path = save_dataset(manifest, out_dir / "manifest.txt")
        created.append(manifest_path)
        return manifest
    except Exception:
        for p in created:
            p.unlink(missing_ok=True)
        if images_dir.exists() and not any(images_dir.iterdir()):
            shutil.rmtree(images_dir, ignore_errors=True)
        raise


def single_press_states(depths, lateral=(0.0, 0.0), twist: float = 0.0):
    """Convenience: one state per press depth at a fixed lateral offset/twist."""
    return [RigState(lateral[0], lateral[1], -abs(d), twist, timestamp=float(i))
            for i, d in enumerate(depths)]
