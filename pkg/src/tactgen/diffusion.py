"""Denoising diffusion core: schedule, forward corruption, loss, training, sampling.

The forward process corrupts a target image ``y0`` (model domain, [-1, 1])
over ``T`` steps with per-step variance increments ``beta_t``. Writing
``gamma_bar_t`` for the cumulative product of ``(1 - beta_s)``, the
closed-form marginal is

    y_t = sqrt(gamma_bar_t) * y0 + sqrt(1 - gamma_bar_t) * noise .

The denoiser is trained to regress the injected noise (epsilon-prediction):
the loss is the mean squared error between the true noise and
``predict(x, y_t, gamma_bar_t)`` where ``x`` is the 4-channel condition
tensor. Generation runs the ancestral reverse chain from pure noise, one
step per t, deterministically for a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointError,
    CompatibilityError,
    ParameterError,
    TrainingDivergedError,
)
from .unet import ConditionalUNet, Denoiser

CHECKPOINT_VERSION = 1
DIVERGENCE_LIMIT = 1e6


# ---------------------------------------------------------------------------
# noise schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variance increments and derived cumulative quantities."""

    betas: np.ndarray
    kind: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.02
    alphas: np.ndarray = field(init=False, repr=False)
    gamma_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ParameterError("schedule needs at least one step")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ParameterError("every beta must lie strictly in (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "gamma_bar", np.cumprod(1.0 - betas))

    @property
    def T(self) -> int:
        return self.betas.size

    def gamma_bar_at(self, t):
        """Cumulative signal retention at step t; t = 0 means 'uncorrupted'."""
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ParameterError(f"step index out of range 0..{self.T}: {t}")
        padded = np.concatenate([[1.0], self.gamma_bar])
        out = padded[t]
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"T": self.T, "kind": self.kind,
                "beta_start": self.beta_start, "beta_end": self.beta_end}


def build_schedule(T: int, kind: str = "linear",
                   beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if kind != "linear":
        raise ParameterError(f"unknown schedule kind {kind!r}")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return NoiseSchedule(betas, kind=kind, beta_start=float(beta_start),
                         beta_end=float(beta_end))


def schedules_equal(a: NoiseSchedule, b: NoiseSchedule) -> bool:
    return (a.T == b.T and a.kind == b.kind
            and a.betas.shape == b.betas.shape
            and np.allclose(a.betas, b.betas, rtol=0, atol=1e-12))


# ---------------------------------------------------------------------------
# forward process and training objective
# ---------------------------------------------------------------------------

def forward_noise(y0, t, schedule: NoiseSchedule, epsilon) -> np.ndarray:
    """Closed-form marginal of the forward process at step t.

    ``t`` may be a scalar (applied to the whole array) or a per-element
    integer array matching a leading batch dimension.
    """
    y0 = np.asarray(y0, dtype=np.float64)
    eps = np.asarray(epsilon, dtype=np.float64)
    if eps.shape != y0.shape:
        raise ParameterError(f"epsilon shape {eps.shape} != y0 shape {y0.shape}")
    gamma = schedule.gamma_bar_at(t)
    if np.ndim(gamma) == 1:
        if y0.ndim < 2 or len(gamma) != y0.shape[0]:
            raise ParameterError("per-element t needs a matching batch dimension")
        gamma = np.asarray(gamma).reshape((-1,) + (1,) * (y0.ndim - 1))
    return np.sqrt(gamma) * y0 + np.sqrt(1.0 - gamma) * eps


def training_loss(denoiser: Denoiser, x, y0, t, epsilon,
                  schedule: NoiseSchedule) -> float:
    """Mean squared error between injected and predicted noise."""
    y_t = forward_noise(y0, t, schedule, epsilon)
    gamma = schedule.gamma_bar_at(t)
    pred = denoiser.predict(x, y_t, gamma)
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(epsilon, dtype=np.float64)
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise TrainingDivergedError(-1, loss)
    return loss


def loss_gradients(denoiser: ConditionalUNet, x, y0, t, epsilon,
                   schedule: NoiseSchedule) -> float:
    """Like :func:`training_loss` but also accumulates parameter gradients."""
    y_t = forward_noise(y0, t, schedule, epsilon)
    gamma = schedule.gamma_bar_at(t)
    pred = denoiser.predict(x, y_t, gamma)
    eps = np.asarray(epsilon, dtype=np.float64)
    diff = np.asarray(pred, dtype=np.float64) - eps
    loss = float(np.mean(diff * diff))
    dpred = (2.0 / diff.size) * diff
    if np.ndim(y0) == 3:
        dpred = dpred[None]
    denoiser.backward(dpred.astype(denoiser.dtype))
    return loss


# ---------------------------------------------------------------------------
# training state and steps
# ---------------------------------------------------------------------------

@dataclass
class TrainState:
    denoiser: ConditionalUNet
    optimizer: object
    schedule: NoiseSchedule
    rng: np.random.Generator
    step: int = 0
    last_loss: float = float("nan")
    loss_ema: float = float("nan")


def init_train_state(denoiser: ConditionalUNet, schedule: NoiseSchedule,
                     seed: int, lr=1e-3, beta1=0.9, beta2=0.999,
                     eps=1e-8) -> TrainState:
    opt = denoiser.make_optimizer(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    return TrainState(denoiser=denoiser, optimizer=opt, schedule=schedule,
                      rng=np.random.default_rng(seed))


def train_step(state: TrainState, batch) -> TrainState:
    """One optimizer step on a batch of (condition, target) pairs.

    ``batch`` is a pair of arrays: conditions (N, 4, H, W) and targets
    (N, 3, H, W) in the model domain. Per-element timesteps are drawn
    uniformly from 1..T and the noise is sampled fresh, both from the
    state RNG, so a fixed seed reproduces the whole trajectory.
    """
    x, y0 = batch
    x = np.asarray(x)
    y0 = np.asarray(y0)
    if x.ndim != 4 or y0.ndim != 4 or x.shape[0] != y0.shape[0]:
        raise ParameterError(f"bad batch shapes {x.shape}, {y0.shape}")
    n = x.shape[0]
    if n == 0:
        raise ParameterError("batch must be non-empty")

    sched = state.schedule
    t = state.rng.integers(1, sched.T + 1, size=n)
    epsilon = state.rng.standard_normal(y0.shape)

    state.denoiser.zero_grad()
    loss = loss_gradients(state.denoiser, x, y0, t, epsilon, sched)
    if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
        raise TrainingDivergedError(state.step, loss)
    state.optimizer.step()
    state.step += 1
    state.last_loss = loss
    state.loss_ema = loss if np.isnan(state.loss_ema) else \
        0.99 * state.loss_ema + 0.01 * loss
    return state


# ---------------------------------------------------------------------------
# ancestral sampling
# ---------------------------------------------------------------------------

def sample(denoiser: Denoiser, x, schedule: NoiseSchedule, seed: int,
           clip_denoised: bool = True) -> np.ndarray:
    """Generate one image by running the reverse chain from pure noise.

    Starts from seeded N(0, I), applies T ancestral steps driven by the
    noise predictions, and clamps the result to [-1, 1]. A pure function
    of (parameters, condition, schedule, seed).
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ParameterError(f"condition must be (C, H, W), got shape {x.shape}")
    h, w = x.shape[1:]
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((3, h, w))

    gb = schedule.gamma_bar
    for t in range(schedule.T, 0, -1):
        g_t = gb[t - 1]
        g_prev = gb[t - 2] if t > 1 else 1.0
        beta = schedule.betas[t - 1]
        alpha = 1.0 - beta
        eps_hat = np.asarray(denoiser.predict(x, y, g_t), dtype=np.float64)
        y0_hat = (y - np.sqrt(1.0 - g_t) * eps_hat) / np.sqrt(g_t)
        if clip_denoised:
            y0_hat = np.clip(y0_hat, -1.0, 1.0)
        mean = (np.sqrt(g_prev) * beta * y0_hat
                + np.sqrt(alpha) * (1.0 - g_prev) * y) / (1.0 - g_t)
        if t > 1:
            var = (1.0 - g_prev) / (1.0 - g_t) * beta
            y = mean + np.sqrt(var) * rng.standard_normal(y.shape)
        else:
            y = mean
    return np.clip(y, -1.0, 1.0)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, state: TrainState, conditioning: dict,
                    image_size, sensor_type: str, extra: dict | None = None) -> Path:
    """Write parameters, optimizer state, RNG state and compatibility metadata."""
    path = Path(path)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": state.denoiser.descriptor(),
        "schedule": state.schedule.to_dict(),
        "conditioning": conditioning,
        "image_size": [int(image_size[0]), int(image_size[1])],
        "sensor_type": sensor_type,
        "step": state.step,
        "last_loss": None if np.isnan(state.last_loss) else state.last_loss,
        "loss_ema": None if np.isnan(state.loss_ema) else state.loss_ema,
        "rng_state": state.rng.bit_generator.state,
        "adam_t": getattr(state.optimizer, "t", 0),
    }
    if extra:
        meta["extra"] = extra
    arrays = {"meta": np.array(json.dumps(meta))}
    for name, value in state.denoiser.param_dict().items():
        arrays[f"param/{name}"] = value
    opt_state = state.optimizer.state_dict()
    for key, value in opt_state.items():
        if isinstance(value, np.ndarray):
            arrays[f"adam/{key}"] = value
    arrays["schedule/betas"] = state.schedule.betas
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


@dataclass
class Checkpoint:
    denoiser: ConditionalUNet
    schedule: NoiseSchedule
    meta: dict
    arrays: dict

    @property
    def conditioning(self) -> dict:
        return self.meta["conditioning"]

    @property
    def image_size(self) -> tuple[int, int]:
        return tuple(self.meta["image_size"])


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    if "meta" not in arrays:
        raise CheckpointError(f"{path}: missing metadata entry")
    meta = json.loads(str(arrays.pop("meta")))
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {meta.get('format_version')}"
        )
    sched_meta = meta["schedule"]
    schedule = NoiseSchedule(arrays["schedule/betas"], kind=sched_meta["kind"],
                             beta_start=sched_meta["beta_start"],
                             beta_end=sched_meta["beta_end"])
    denoiser = ConditionalUNet.from_descriptor(meta["architecture"])
    params = {k[len("param/"):]: v for k, v in arrays.items()
              if k.startswith("param/")}
    try:
        denoiser.load_param_dict(params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return Checkpoint(denoiser=denoiser, schedule=schedule, meta=meta, arrays=arrays)


def resume_train_state(ckpt: Checkpoint, lr=1e-3, beta1=0.9, beta2=0.999,
                       eps=1e-8) -> TrainState:
    """Rebuild a TrainState (optimizer moments, RNG, counters) from a checkpoint."""
    opt = ckpt.denoiser.make_optimizer(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    adam_state = {"t": ckpt.meta.get("adam_t", 0)}
    for key, value in ckpt.arrays.items():
        if key.startswith("adam/"):
            adam_state[key[len("adam/"):]] = value
    if len(adam_state) > 1:
        opt.load_state_dict(adam_state)
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.meta["rng_state"]
    state = TrainState(denoiser=ckpt.denoiser, optimizer=opt,
                       schedule=ckpt.schedule, rng=rng,
                       step=int(ckpt.meta["step"]))
    if ckpt.meta.get("last_loss") is not None:
        state.last_loss = float(ckpt.meta["last_loss"])
    if ckpt.meta.get("loss_ema") is not None:
        state.loss_ema = float(ckpt.meta["loss_ema"])
    return state


def check_compatible(ckpt: Checkpoint, schedule: NoiseSchedule | None = None,
                     conditioning: dict | None = None,
                     image_size=None) -> None:
    """Refuse to proceed when checkpoint metadata disagrees with the request."""
    if schedule is not None and not schedules_equal(ckpt.schedule, schedule):
        raise CompatibilityError(
            f"schedule mismatch: checkpoint {ckpt.schedule.to_dict()}, "
            f"requested {schedule.to_dict()}"
        )
    if conditioning is not None:
        for key, value in conditioning.items():
            have = ckpt.conditioning.get(key)
            if have != value:
                raise CompatibilityError(
                    f"conditioning mismatch on {key!r}: checkpoint {have!r}, "
                    f"requested {value!r}"
                )
    if image_size is not None and tuple(image_size) != ckpt.image_size:
        raise CompatibilityError(
            f"image size mismatch: checkpoint {ckpt.image_size}, "
            f"requested {tuple(image_size)}"
        )
