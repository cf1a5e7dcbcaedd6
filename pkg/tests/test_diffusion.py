"""Noise schedule, forward process, loss, training loop and sampler."""

import numpy as np
import pytest

from tactgen import diffusion as dm
from tactgen.errors import (
    CheckpointError,
    CompatibilityError,
    ParameterError,
    TrainingDivergedError,
)
from tactgen.unet import ConditionalUNet, Denoiser


class OracleDenoiser(Denoiser):
    """Returns exactly the injected noise (loss must be zero)."""

    def __init__(self, epsilon):
        self.epsilon = epsilon

    def predict(self, x, y_t, gamma):
        return self.epsilon


class ZeroDenoiser(Denoiser):
    def predict(self, x, y_t, gamma):
        return np.zeros_like(y_t)


def randomized_net(depth=2, base_width=4, seed=0, image=8):
    """A UNet whose zero-initialized convs are filled so outputs depend on x."""
    net = ConditionalUNet(depth=depth, base_width=base_width, emb_dim=8,
                          dtype=np.float64, seed=seed)
    rng = np.random.default_rng(seed + 100)
    net.out_conv.W.value[:] = rng.standard_normal(net.out_conv.W.value.shape) * 0.2
    for blk in net.enc + [net.mid] + net.dec:
        blk.conv2.W.value[:] = rng.standard_normal(blk.conv2.W.value.shape) * 0.2
    return net


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

def test_schedule_single_step():
    sched = dm.build_schedule(1, "linear", 0.5, 0.5)
    assert np.allclose(sched.gamma_bar, [0.5])


def test_schedule_two_steps_hand_product():
    sched = dm.NoiseSchedule(np.array([0.1, 0.2]))
    assert sched.gamma_bar == pytest.approx([0.9, 0.72], abs=1e-15)


def test_schedule_t1000_near_total_corruption():
    sched = dm.build_schedule(1000, "linear", 1e-4, 0.02)
    assert sched.gamma_bar[-1] < 1e-3
    assert np.all(np.diff(sched.gamma_bar) < 0)
    assert np.all((sched.betas > 0) & (sched.betas < 1))


def test_schedule_desk_default_near_total_corruption():
    sched = dm.build_schedule(200, "linear", 1e-4, 0.07)
    assert sched.gamma_bar[-1] < 1e-3


def test_schedule_invalid_bounds():
    for t, lo, hi in ((0, 0.1, 0.2), (10, 0.0, 0.2), (10, 0.3, 0.2), (10, 0.1, 1.0)):
        with pytest.raises(ParameterError):
            dm.build_schedule(t, "linear", lo, hi)
    with pytest.raises(ParameterError):
        dm.build_schedule(10, "cosine", 0.1, 0.2)


def test_gamma_bar_at_boundary_and_range():
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    assert sched.gamma_bar_at(0) == 1.0
    assert sched.gamma_bar_at(10) == pytest.approx(sched.gamma_bar[-1])
    with pytest.raises(ParameterError):
        sched.gamma_bar_at(11)
    with pytest.raises(ParameterError):
        sched.gamma_bar_at(-1)


# ---------------------------------------------------------------------------
# forward process
# ---------------------------------------------------------------------------

def test_forward_noise_t0_is_identity():
    rng = np.random.default_rng(0)
    y0 = rng.uniform(-1, 1, (3, 8, 8))
    eps = rng.standard_normal((3, 8, 8))
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    assert np.array_equal(dm.forward_noise(y0, 0, sched, eps), y0)


def test_forward_noise_quartergamma_closed_form():
    # T=1 with beta 0.75 puts gamma_bar exactly at 0.25
    sched = dm.build_schedule(1, "linear", 0.75, 0.75)
    rng = np.random.default_rng(1)
    y0 = rng.uniform(-1, 1, (3, 4, 4))
    eps = rng.standard_normal((3, 4, 4))
    y_t = dm.forward_noise(y0, 1, sched, eps)
    assert np.allclose(y_t, 0.5 * y0 + np.sqrt(0.75) * eps)
    assert np.sqrt(0.75) == pytest.approx(0.8660, abs=5e-5)


def test_forward_noise_per_element_t():
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    rng = np.random.default_rng(2)
    y0 = rng.uniform(-1, 1, (3, 3, 4, 4))
    eps = rng.standard_normal(y0.shape)
    out = dm.forward_noise(y0, np.array([1, 5, 10]), sched, eps)
    for i, t in enumerate((1, 5, 10)):
        g = sched.gamma_bar_at(t)
        assert np.allclose(out[i], np.sqrt(g) * y0[i] + np.sqrt(1 - g) * eps[i])


def test_forward_noise_shape_mismatch():
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    with pytest.raises(ParameterError):
        dm.forward_noise(np.zeros((3, 4, 4)), 1, sched, np.zeros((3, 4, 5)))


def test_forward_noise_preserves_unit_variance():
    # quick moment check (the acceptance suite runs the strict version)
    sched = dm.build_schedule(50, "linear", 1e-3, 0.05)
    rng = np.random.default_rng(3)
    n = 4000
    y0 = rng.standard_normal((n, 8, 8))
    eps = rng.standard_normal((n, 8, 8))
    y_t = dm.forward_noise(y0, 25, sched, eps)
    assert y_t.var() == pytest.approx(1.0, rel=0.05)
    assert abs(y_t.mean()) < 0.05


def test_marginal_matches_composed_single_steps():
    # composing t single-step kernels reproduces the closed-form marginal
    sched = dm.build_schedule(10, "linear", 0.02, 0.2)
    rng = np.random.default_rng(4)
    n = 10_000
    y0 = rng.standard_normal((n, 8, 8))
    y = y0.copy()
    for t in range(1, 11):
        beta = sched.betas[t - 1]
        y = np.sqrt(1 - beta) * y + np.sqrt(beta) * rng.standard_normal(y.shape)
    closed = dm.forward_noise(y0, 10, sched, rng.standard_normal(y0.shape))
    assert y.mean() == pytest.approx(closed.mean(), abs=0.02)
    assert y.var() == pytest.approx(closed.var(), rel=0.02)


# ---------------------------------------------------------------------------
# training loss
# ---------------------------------------------------------------------------

def test_loss_zero_at_oracle():
    rng = np.random.default_rng(0)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    x = rng.standard_normal((2, 4, 8, 8))
    y0 = rng.uniform(-1, 1, (2, 3, 8, 8))
    eps = rng.standard_normal((2, 3, 8, 8))
    loss = dm.training_loss(OracleDenoiser(eps), x, y0, np.array([2, 9]), eps, sched)
    assert loss == 0.0


def test_loss_of_zero_denoiser_near_one():
    rng = np.random.default_rng(1)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    x = rng.standard_normal((8, 4, 16, 16))
    y0 = rng.uniform(-1, 1, (8, 3, 16, 16))
    eps = rng.standard_normal((8, 3, 16, 16))
    loss = dm.training_loss(ZeroDenoiser(), x, y0,
                            rng.integers(1, 11, 8), eps, sched)
    assert loss == pytest.approx(np.mean(eps ** 2), rel=1e-12)
    assert loss == pytest.approx(1.0, rel=0.03)


def test_loss_nonnegative():
    rng = np.random.default_rng(2)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    net = randomized_net()
    x = rng.standard_normal((1, 4, 8, 8))
    y0 = rng.uniform(-1, 1, (1, 3, 8, 8))
    eps = rng.standard_normal((1, 3, 8, 8))
    assert dm.training_loss(net, x, y0, np.array([5]), eps, sched) >= 0.0


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def make_toy_batch(n=1, size=16, seed=0):
    rng = np.random.default_rng(seed)
    x = np.repeat(rng.uniform(-1, 1, (1, 4, size, size)), n, axis=0)
    y0 = np.repeat(rng.uniform(-1, 1, (1, 3, size, size)), n, axis=0)
    return x, y0


def make_record_batch(n=8, size=16):
    """One rendered contact record, repeated n times per batch."""
    from tactgen.conditioning import assemble_condition, ranges_from_forces
    from tactgen.dataset import normalize
    from tactgen.rigsim import (RenderConfig, RigState, contact_force,
                                make_shape, render_object_image, render_tactile)

    rc = RenderConfig(sensor_type="rgb_marker", image_size=(size, size),
                      marker_rows=4, marker_cols=4)
    shape = make_shape("sphere", 8.0)
    pose = RigState(0.5, -0.5, -1.0, 2.0)
    force = contact_force(shape, pose, rc)
    ranges = ranges_from_forces([force])
    x = assemble_condition(render_object_image(shape, rc), force, ranges)
    y0 = normalize(render_tactile(shape, pose, rc))
    return np.repeat(x[None], n, axis=0), np.repeat(y0[None], n, axis=0)


def test_train_step_smoke_loss_drops():
    # one record, 200 steps: loss must fall below 0.1x its initial value
    x, y0 = make_record_batch(n=8, size=16)
    net = ConditionalUNet(depth=2, base_width=12, emb_dim=16,
                          dtype=np.float32, seed=1)
    sched = dm.build_schedule(200, "linear", 1e-4, 0.07)
    state = dm.init_train_state(net, sched, seed=5, lr=3e-3)
    losses = [dm.train_step(state, (x, y0)).last_loss for _ in range(200)]
    assert state.step == 200
    recent = float(np.mean(losses[-20:]))
    assert recent < 0.1 * losses[0], f"initial {losses[0]}, final mean {recent}"


def test_train_reproducible_loss_curves():
    x, y0 = make_toy_batch(n=2, size=8, seed=4)

    def run():
        net = ConditionalUNet(depth=2, base_width=4, emb_dim=8,
                              dtype=np.float64, seed=2)
        sched = dm.build_schedule(20, "linear", 1e-3, 0.1)
        state = dm.init_train_state(net, sched, seed=9, lr=1e-3)
        return [dm.train_step(state, (x, y0)).last_loss for _ in range(10)]

    assert run() == run()


def test_train_step_empty_batch():
    net = ConditionalUNet(depth=2, base_width=4, emb_dim=8, dtype=np.float64)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    state = dm.init_train_state(net, sched, seed=0)
    with pytest.raises(ParameterError):
        dm.train_step(state, (np.zeros((0, 4, 8, 8)), np.zeros((0, 3, 8, 8))))


def test_train_divergence_detected():
    net = ConditionalUNet(depth=2, base_width=4, emb_dim=8, dtype=np.float64, seed=0)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    state = dm.init_train_state(net, sched, seed=0, lr=1e-3)
    # corrupt the output layer so predictions explode (nothing renormalizes it)
    net.out_conv.W.value[:] = 1e200
    x, y0 = make_toy_batch(n=1, size=8, seed=5)
    with pytest.raises(TrainingDivergedError):
        dm.train_step(state, (x, y0))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_sample_deterministic():
    net = randomized_net(seed=3)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 8, 8))
    a = dm.sample(net, x, sched, seed=7)
    b = dm.sample(net, x, sched, seed=7)
    assert np.array_equal(a, b)
    c = dm.sample(net, x, sched, seed=8)
    assert not np.array_equal(a, c)


def test_sample_outputs_in_model_domain():
    net = randomized_net(seed=4)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    x = np.random.default_rng(1).standard_normal((4, 8, 8))
    y = dm.sample(net, x, sched, seed=0)
    assert y.shape == (3, 8, 8)
    assert y.min() >= -1.0 and y.max() <= 1.0


def test_sample_depends_on_condition():
    net = randomized_net(seed=5)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    rng = np.random.default_rng(2)
    x1 = rng.standard_normal((4, 8, 8))
    x2 = x1.copy()
    x2[3] += 0.5  # different force plane
    a = dm.sample(net, x1, sched, seed=3)
    b = dm.sample(net, x2, sched, seed=3)
    assert np.mean((a - b) ** 2) > 1e-8


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

COND_META = {"mode": "banded", "seed": 0,
             "ranges": {a: [-1.0, 1.0] for a in
                        ("fx", "fy", "fz", "mx", "my", "mz")}}


def trained_state(tmp_path, steps=3):
    net = ConditionalUNet(depth=2, base_width=4, emb_dim=8, dtype=np.float64, seed=6)
    sched = dm.build_schedule(10, "linear", 0.01, 0.1)
    state = dm.init_train_state(net, sched, seed=1, lr=1e-3)
    x, y0 = make_toy_batch(n=2, size=8, seed=6)
    for _ in range(steps):
        dm.train_step(state, (x, y0))
    return state, (x, y0)


def test_checkpoint_roundtrip_bit_identical(tmp_path):
    state, (x, y0) = trained_state(tmp_path)
    path = dm.save_checkpoint(tmp_path / "ckpt.npz", state, COND_META, (8, 8),
                              "rgb_plain")
    ckpt = dm.load_checkpoint(path)
    rng = np.random.default_rng(9)
    y_t = rng.standard_normal((3, 8, 8))
    before = state.denoiser.predict(x[0], y_t, 0.5)
    after = ckpt.denoiser.predict(x[0], y_t, 0.5)
    assert np.array_equal(before, after)
    assert ckpt.image_size == (8, 8)
    assert ckpt.conditioning == COND_META
    assert dm.schedules_equal(ckpt.schedule, state.schedule)


def test_resume_continues_identically(tmp_path):
    # a 6-step run must equal 3 steps + checkpoint + resume + 3 steps
    state_a, batch = trained_state(tmp_path, steps=3)
    losses_a = [dm.train_step(state_a, batch).last_loss for _ in range(3)]

    state_b, _ = trained_state(tmp_path, steps=3)
    path = dm.save_checkpoint(tmp_path / "resume.npz", state_b, COND_META,
                              (8, 8), "rgb_plain")
    resumed = dm.resume_train_state(dm.load_checkpoint(path), lr=1e-3)
    assert resumed.step == 3
    losses_b = [dm.train_step(resumed, batch).last_loss for _ in range(3)]
    assert losses_a == losses_b


def test_compatibility_checks(tmp_path):
    state, _ = trained_state(tmp_path)
    path = dm.save_checkpoint(tmp_path / "c.npz", state, COND_META, (8, 8),
                              "rgb_plain")
    ckpt = dm.load_checkpoint(path)
    other_sched = dm.build_schedule(20, "linear", 0.01, 0.1)
    with pytest.raises(CompatibilityError):
        dm.check_compatible(ckpt, schedule=other_sched)
    with pytest.raises(CompatibilityError):
        dm.check_compatible(ckpt, conditioning={"mode": "projected"})
    with pytest.raises(CompatibilityError):
        dm.check_compatible(ckpt, image_size=(16, 16))
    # matching metadata passes
    dm.check_compatible(ckpt, schedule=state.schedule, conditioning=COND_META,
                        image_size=(8, 8))


def test_load_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        dm.load_checkpoint(tmp_path / "nope.npz")
