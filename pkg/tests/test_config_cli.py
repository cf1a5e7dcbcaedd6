"""Fail-closed config parsing and the four CLI commands."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tactgen import dataset as ds
from tactgen.cli import main
from tactgen.config import load_config, parse_config
from tactgen.errors import ConfigError

from conftest import render_dot_grid


def write_config(tmp_path, data, name="exp.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=1), encoding="utf-8")
    return path


BASE_RIGSIM = {
    "shapes": [{"kind": "sphere", "size": 8.0}],
    "trajectory": {"max_depth": 0.4, "capture_period_s": 60.0},
    "render": {"image_size": [32, 32], "sensor_type": "rgb_plain"},
    "seed": 0,
}


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_defaults_parse():
    cfg = parse_config({})
    assert cfg.split.ratio == 0.8
    assert cfg.schedule.steps == 200
    assert cfg.conditioning.mode == "banded"
    assert cfg.rigsim is None


def test_unknown_root_key_rejected():
    with pytest.raises(ConfigError, match="'shedule'"):
        parse_config({"shedule": {}})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match="optimizer"):
        parse_config({"optimizer": {"learning_rate": 0.1}})
    with pytest.raises(ConfigError, match="rigsim.trajectory"):
        parse_config({"rigsim": {"trajectory": {"dwell": 3}}})
    with pytest.raises(ConfigError, match="conditioning.ranges"):
        parse_config({"conditioning": {"ranges": {a: [-1, 1] for a in
                                                  ("fx", "fy", "fz", "mx", "my", "qz")}}})


def test_incomplete_ranges_rejected():
    with pytest.raises(ConfigError, match="missing axes"):
        parse_config({"conditioning": {"ranges": {"fx": [-1, 1]}}})


def test_bad_values_name_section():
    with pytest.raises(ConfigError, match="rigsim.shapes"):
        parse_config({"rigsim": {"shapes": [{"kind": "cube", "size": 3}]}})
    with pytest.raises(ConfigError, match="trajectory"):
        parse_config({"rigsim": {"trajectory": {"press_depth_step": -1.0}}})


def test_config_file_roundtrip(tmp_path):
    path = write_config(tmp_path, {"split": {"ratio": 0.75, "seed": 3},
                                   "dataset": {"manifest": "data/m.txt"}})
    cfg = load_config(path)
    assert cfg.split.ratio == 0.75
    assert cfg.dataset_manifest == (tmp_path / "data" / "m.txt").resolve()
    assert cfg.raw["split"]["seed"] == 3


def test_config_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_writes_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path, {"rigsim": BASE_RIGSIM})
    rc = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "data")])
    assert rc == 0
    manifest = ds.load_dataset(tmp_path / "data" / "manifest.txt")
    assert len(manifest) > 0
    ds.validate_images(manifest)


def test_simulate_rerun_identical(tmp_path):
    cfg = write_config(tmp_path, {"rigsim": BASE_RIGSIM})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "d1")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "d2")]) == 0
    m1 = (tmp_path / "d1" / "manifest.txt").read_bytes()
    m2 = (tmp_path / "d2" / "manifest.txt").read_bytes()
    assert m1 == m2


def test_simulate_invalid_config_field(tmp_path, capsys):
    bad = {"rigsim": dict(BASE_RIGSIM,
                          trajectory={"press_depth_step": -0.4})}
    cfg = write_config(tmp_path, bad)
    rc = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert rc != 0
    assert "press_depth_step" in capsys.readouterr().err


def test_console_script_entrypoint(tmp_path):
    cfg = write_config(tmp_path, {"rigsim": BASE_RIGSIM})
    proc = subprocess.run(
        [sys.executable, "-m", "tactgen.cli", "simulate", "--config", str(cfg),
         "--out", str(tmp_path / "data")],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


# ---------------------------------------------------------------------------
# train / generate round trip (micro scale)
# ---------------------------------------------------------------------------

MICRO_TRAIN = {
    "split": {"ratio": 0.8, "seed": 1},
    "conditioning": {"mode": "banded", "seed": 0},
    "schedule": {"steps": 20, "beta_start": 1e-3, "beta_end": 0.15},
    "denoiser": {"depth": 2, "base_width": 6, "emb_dim": 8, "dtype": "float32",
                 "seed": 0},
    "optimizer": {"lr": 2e-3, "batch_size": 4, "steps": 30,
                  "checkpoint_every": 10, "log_every": 50, "seed": 2},
    "sampler": {"seed": 0},
    "rigsim": {
        "shapes": [{"kind": "sphere", "size": 8.0}],
        "trajectory": {"max_depth": 0.4, "capture_period_s": 120.0},
        "render": {"image_size": [16, 16], "sensor_type": "rgb_plain"},
    },
}


@pytest.fixture(scope="module")
def micro_run(tmp_path_factory):
    """simulate + train once; several tests inspect the results."""
    root = tmp_path_factory.mktemp("micro")
    cfg_path = root / "exp.json"
    cfg_path.write_text(json.dumps(MICRO_TRAIN), encoding="utf-8")
    assert main(["simulate", "--config", str(cfg_path),
                 "--out", str(root / "data")]) == 0
    ckpt = root / "model.npz"
    assert main(["train", "--config", str(cfg_path),
                 "--dataset", str(root / "data" / "manifest.txt"),
                 "--out", str(ckpt)]) == 0
    return root, cfg_path, ckpt


def test_train_writes_checkpoint_and_log(micro_run):
    root, cfg_path, ckpt = micro_run
    assert ckpt.is_file()
    log = ckpt.with_suffix(".loss.csv")
    with open(log, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30
    assert [int(r["step"]) for r in rows] == list(range(1, 31))


def test_train_missing_dataset(tmp_path, capsys):
    cfg = write_config(tmp_path, {k: v for k, v in MICRO_TRAIN.items()
                                  if k != "rigsim"})
    rc = main(["train", "--config", str(cfg), "--out", str(tmp_path / "m.npz")])
    assert rc != 0
    assert "dataset" in capsys.readouterr().err


def test_train_resume_continues_loss(micro_run, tmp_path):
    root, cfg_path, ckpt = micro_run
    # uninterrupted 60-step run
    cfg60 = json.loads(cfg_path.read_text())
    cfg60["optimizer"]["steps"] = 60
    p60 = write_config(tmp_path, cfg60, "exp60.json")
    ck60 = tmp_path / "m60.npz"
    assert main(["train", "--config", str(p60),
                 "--dataset", str(root / "data" / "manifest.txt"),
                 "--out", str(ck60)]) == 0
    # resume the 30-step checkpoint for 30 more
    ck_resумed = tmp_path / "resumed.npz"
    assert main(["train", "--config", str(cfg_path),
                 "--dataset", str(root / "data" / "manifest.txt"),
                 "--resume", str(ckpt), "--out", str(ck_resумed)]) == 0
    with open(ck60.with_suffix(".loss.csv"), newline="") as fh:
        full = {int(r["step"]): float(r["loss"]) for r in csv.DictReader(fh)}
    with open(ck_resумed.with_suffix(".loss.csv"), newline="") as fh:
        resumed = {int(r["step"]): float(r["loss"]) for r in csv.DictReader(fh)}
    for step in range(31, 61):
        assert resumed[step] == pytest.approx(full[step], rel=0.01)


def test_generate_deterministic_png(micro_run, tmp_path):
    root, cfg_path, ckpt = micro_run
    manifest = ds.load_dataset(root / "data" / "manifest.txt")
    rec = manifest.records[-1]
    obj_path = root / "data" / rec.object_image
    force_arg = ",".join(repr(getattr(rec.force, a)) for a in ds.ForceVector.AXES)
    out1, out2 = tmp_path / "g1.png", tmp_path / "g2.png"
    for out in (out1, out2):
        rc = main(["generate", "--checkpoint", str(ckpt),
                   "--object-image", str(obj_path), "--force", force_arg,
                   "--seed", "9", "--out", str(out)])
        assert rc == 0
    assert out1.read_bytes() == out2.read_bytes()
    img = ds.read_png(out1)
    assert img.shape == (3, 16, 16)


def test_generate_rejects_out_of_range_force(micro_run, tmp_path, capsys):
    root, cfg_path, ckpt = micro_run
    manifest = ds.load_dataset(root / "data" / "manifest.txt")
    obj_path = root / "data" / manifest.records[0].object_image
    rc = main(["generate", "--checkpoint", str(ckpt),
               "--object-image", str(obj_path),
               "--force", "0,0,999,0,0,0", "--seed", "1",
               "--out", str(tmp_path / "no.png")])
    assert rc != 0
    assert "fz" in capsys.readouterr().err
    assert not (tmp_path / "no.png").exists()


def test_train_divergence_keeps_checkpoint(micro_run, tmp_path, capsys):
    root, cfg_path, ckpt = micro_run
    cfg = json.loads(cfg_path.read_text())
    cfg["optimizer"]["lr"] = 1e8
    cfg["optimizer"]["steps"] = 40
    cfg["optimizer"]["checkpoint_every"] = 5
    p = write_config(tmp_path, cfg, "diverge.json")
    out = tmp_path / "diverged.npz"
    rc = main(["train", "--config", str(p),
               "--dataset", str(root / "data" / "manifest.txt"),
               "--out", str(out)])
    assert rc != 0
    assert "diverged" in capsys.readouterr().err.lower()
    assert out.is_file()  # last periodic save retained


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_identical_dirs(tmp_path, capsys):
    rng = np.random.default_rng(0)
    real = tmp_path / "real"
    gen = tmp_path / "gen"
    for d in (real, gen):
        d.mkdir()
    for i in range(3):
        img = rng.integers(0, 256, (3, 16, 16)).astype(np.uint8)
        ds.write_png(real / f"p{i}.png", img)
        ds.write_png(gen / f"p{i}.png", img)
    rc = main(["eval", "--real", str(real), "--gen", str(gen),
               "--out", str(tmp_path / "report")])
    assert rc == 0
    with open(tmp_path / "report" / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    agg = rows[-1]
    assert agg["name"] == "aggregate"
    assert float(agg["mse"]) == 0.0
    assert float(agg["ssim"]) == 1.0
    assert agg["psnr"] == "inf"


def test_eval_markers_uniform_shift(tmp_path):
    a, _ = render_dot_grid(160, 160, 8, 8, spacing=16)
    b, _ = render_dot_grid(160, 160, 8, 8, spacing=16, offset=(3.0, 4.0))
    real = tmp_path / "real"
    gen = tmp_path / "gen"
    real.mkdir(); gen.mkdir()
    ds.write_png(real / "g.png", a)
    ds.write_png(gen / "g.png", b)
    cfg = write_config(tmp_path, {"metrics": {"grid_shape": [8, 8],
                                              "markers": True}})
    rc = main(["eval", "--real", str(real), "--gen", str(gen),
               "--out", str(tmp_path / "report"), "--config", str(cfg)])
    assert rc == 0
    with open(tmp_path / "report" / "report.csv", newline="") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["d_mean"]) == pytest.approx(5.0, rel=0.05)
    assert float(row["d_sum"]) == pytest.approx(64 * 5.0, rel=0.05)
    assert (tmp_path / "report" / "flow_g.png").is_file()


def test_eval_unpaired_files_listed(tmp_path, capsys):
    real = tmp_path / "real"
    gen = tmp_path / "gen"
    real.mkdir(); gen.mkdir()
    img = np.zeros((3, 8, 8), dtype=np.uint8)
    ds.write_png(real / "a.png", img)
    ds.write_png(real / "b.png", img)
    ds.write_png(gen / "a.png", img)
    ds.write_png(gen / "c.png", img)
    rc = main(["eval", "--real", str(real), "--gen", str(gen),
               "--out", str(tmp_path / "r")])
    assert rc != 0
    err = capsys.readouterr().err
    assert "b.png" in err and "c.png" in err
