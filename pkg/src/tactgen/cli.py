"""Command-line pipeline: simulate -> train -> generate -> eval.

Every command takes a single declarative JSON experiment config (see
``docs/config_format.md``) and is deterministic for fixed inputs and
seeds: rerunning produces identical outputs. Exit status is 0 only when
all outputs were written and validated.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import conditioning as cond
from . import dataset as ds
from . import diffusion, metrics
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DatasetError, TactgenError, TrainingDivergedError
from .rigsim import generate_dataset
from .unet import ConditionalUNet


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, seed: int | None) -> int:
    if cfg.rigsim is None:
        return _err("config has no 'rigsim' section")
    if not cfg.rigsim.shapes:
        return _err("rigsim.shapes is empty; nothing to simulate")
    rs = cfg.rigsim
    manifest = generate_dataset(rs.shapes, rs.trajectory, rs.render, out_dir,
                                seed=rs.seed if seed is None else seed)
    print(f"wrote {len(manifest)} records to {out_dir / 'manifest.txt'}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _build_training_arrays(manifest: ds.DatasetManifest, records,
                           ranges: cond.CalibrationRanges,
                           mode: str, seed: int):
    conditions, targets = [], []
    for rec in records:
        obj = manifest.load_object_image(rec)
        tac = manifest.load_tactile_image(rec)
        conditions.append(cond.assemble_condition(obj, rec.force, ranges,
                                                  mode=mode, seed=seed))
        targets.append(ds.normalize(tac))
    return np.stack(conditions), np.stack(targets)


def cmd_train(cfg: ExperimentConfig, out_checkpoint: Path,
              dataset_path: Path | None = None, resume: Path | None = None,
              seed: int | None = None) -> int:
    manifest_path = dataset_path or cfg.dataset_manifest
    if manifest_path is None:
        return _err("no dataset: pass --dataset or set dataset.manifest in the config")
    manifest = ds.load_dataset(manifest_path)
    train_set, test_set = ds.split_dataset(manifest, cfg.split.ratio, cfg.split.seed)
    print(f"dataset: {len(manifest)} records -> {len(train_set)} train / "
          f"{len(test_set)} test")

    ranges = cfg.conditioning.ranges
    if ranges is None:
        ranges = cond.ranges_from_forces([r.force for r in manifest.records])
        print("conditioning ranges derived from dataset forces")
    cond_meta = {"mode": cfg.conditioning.mode, "seed": cfg.conditioning.seed,
                 "ranges": ranges.to_dict()}

    x, y0 = _build_training_arrays(manifest, train_set.records, ranges,
                                   cfg.conditioning.mode, cfg.conditioning.seed)

    schedule = diffusion.build_schedule(cfg.schedule.steps, cfg.schedule.kind,
                                        cfg.schedule.beta_start, cfg.schedule.beta_end)
    opt_cfg = cfg.optimizer
    rng_seed = opt_cfg.seed if seed is None else seed

    if resume is not None:
        ckpt = diffusion.load_checkpoint(resume)
        diffusion.check_compatible(ckpt, schedule=schedule, conditioning=cond_meta,
                                   image_size=manifest.image_size)
        state = diffusion.resume_train_state(ckpt, lr=opt_cfg.lr, beta1=opt_cfg.beta1,
                                             beta2=opt_cfg.beta2, eps=opt_cfg.eps)
        print(f"resumed from {resume} at step {state.step}")
    else:
        denoiser = ConditionalUNet(depth=cfg.denoiser.depth,
                                   base_width=cfg.denoiser.base_width,
                                   emb_dim=cfg.denoiser.emb_dim,
                                   dtype=cfg.denoiser.dtype,
                                   seed=cfg.denoiser.seed)
        state = diffusion.init_train_state(denoiser, schedule, rng_seed,
                                           lr=opt_cfg.lr, beta1=opt_cfg.beta1,
                                           beta2=opt_cfg.beta2, eps=opt_cfg.eps)

    loss_log = out_checkpoint.with_suffix(".loss.csv")
    loss_log.parent.mkdir(parents=True, exist_ok=True)
    log_mode = "a" if (resume is not None and loss_log.exists()) else "w"
    n_train = x.shape[0]
    batch = min(opt_cfg.batch_size, n_train)

    def save():
        diffusion.save_checkpoint(out_checkpoint, state, cond_meta,
                                  manifest.image_size, manifest.sensor_type,
                                  extra={"experiment_config": cfg.raw})

    with open(loss_log, log_mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if log_mode == "w":
            writer.writerow(["step", "loss"])
        try:
            for _ in range(opt_cfg.steps):
                idx = state.rng.integers(0, n_train, size=batch)
                diffusion.train_step(state, (x[idx], y0[idx]))
                writer.writerow([state.step, f"{state.last_loss:.6f}"])
                if state.step % opt_cfg.log_every == 0:
                    print(f"step {state.step}: loss {state.last_loss:.4f} "
                          f"(ema {state.loss_ema:.4f})")
                if opt_cfg.checkpoint_every and \
                        state.step % opt_cfg.checkpoint_every == 0:
                    save()
        except TrainingDivergedError as exc:
            return _err(f"{exc}; checkpoint at step "
                        f"{(state.step // max(1, opt_cfg.checkpoint_every)) * opt_cfg.checkpoint_every} retained")
    save()
    print(f"wrote checkpoint to {out_checkpoint} (step {state.step}, "
          f"loss ema {state.loss_ema:.4f})")
    return 0


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(checkpoint: Path, object_image: Path, force_values,
                 seed: int, out_path: Path,
                 cfg: ExperimentConfig | None = None) -> int:
    ckpt = diffusion.load_checkpoint(checkpoint)
    if cfg is not None:
        want_sched = diffusion.build_schedule(cfg.schedule.steps, cfg.schedule.kind,
                                              cfg.schedule.beta_start,
                                              cfg.schedule.beta_end)
        want_cond = cfg.conditioning.to_meta()
        if want_cond["ranges"] is None:
            want_cond.pop("ranges")
        diffusion.check_compatible(ckpt, schedule=want_sched, conditioning=want_cond)

    img = ds.read_png(object_image)
    if img.shape[0] != 3:
        return _err(f"object image must be RGB, got {img.shape[0]} channel(s)")
    if img.shape[1:] != ckpt.image_size:
        return _err(f"object image is {img.shape[1:]}, checkpoint expects "
                    f"{ckpt.image_size}")

    force = ds.ForceVector.from_array(force_values)
    meta = ckpt.conditioning
    ranges = cond.CalibrationRanges.from_dict(meta["ranges"])
    x = cond.assemble_condition(img, force, ranges, mode=meta["mode"],
                                seed=meta["seed"])
    y = diffusion.sample(ckpt.denoiser, x, ckpt.schedule, seed)
    ds.write_png(out_path, ds.denormalize(y))
    print(f"wrote generated tactile image to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(real_dir: Path, gen_dir: Path, out_dir: Path,
             cfg: ExperimentConfig | None = None, markers: bool | None = None) -> int:
    real_files = {p.name: p for p in sorted(real_dir.glob("*.png"))}
    gen_files = {p.name: p for p in sorted(gen_dir.glob("*.png"))}
    if not real_files:
        return _err(f"no PNG files in {real_dir}")
    unpaired = sorted(set(real_files) ^ set(gen_files))
    if unpaired:
        return _err("unpaired files: " + ", ".join(unpaired))

    mcfg = cfg.metrics if cfg is not None else None
    use_markers = markers if markers is not None else bool(mcfg and mcfg.markers)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for name in sorted(real_files):
        a = ds.read_png(real_files[name])
        b = ds.read_png(gen_files[name])
        report = metrics.image_similarity(a, b)
        row = {"name": name, **report.as_dict(), "d_sum": None, "d_mean": None}
        if use_markers:
            kw = {}
            if mcfg is not None:
                kw = {"roi": mcfg.roi, "window": mcfg.window, "offset": mcfg.offset,
                      "min_area": mcfg.min_area, "max_area": mcfg.max_area}
            grid = mcfg.grid_shape if mcfg is not None else (18, 18)
            match = mcfg.match if mcfg is not None else "grid"
            roi = kw.pop("roi", None)
            real_set = metrics.detect_markers(a, grid, roi, **kw)
            gen_set = metrics.detect_markers(b, grid, roi, **kw)
            d_sum, d_mean = metrics.marker_displacement_error(real_set, gen_set,
                                                              method=match)
            row["d_sum"], row["d_mean"] = d_sum, d_mean
            flow = metrics.compute_flow(real_set, gen_set, method=match)
            scale = mcfg.flow_scale if mcfg is not None else 1.0
            metrics.export_flow(flow, out_dir / f"flow_{name}", image=a, scale=scale)
        rows.append(row)

    rows.append(metrics.aggregate_rows(rows))
    metrics.write_report_csv(out_dir / "report.csv", rows)
    table = metrics.format_report_table(rows)
    (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactgen",
        description="Contact-condition-guided tactile image generation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic paired dataset")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="train the conditional diffusion model")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="output checkpoint path")
    p.add_argument("--dataset", type=Path, default=None,
                   help="manifest path (overrides config dataset.manifest)")
    p.add_argument("--resume", type=Path, default=None,
                   help="checkpoint to continue from")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("generate", help="sample a tactile image from a checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--object-image", required=True, type=Path)
    p.add_argument("--force", required=True,
                   help="six comma-separated values: fx,fy,fz,mx,my,mz")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--config", type=Path, default=None,
                   help="optional config checked against checkpoint metadata")

    p = sub.add_parser("eval", help="compare real vs generated image directories")
    p.add_argument("--real", required=True, type=Path)
    p.add_argument("--gen", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="report directory")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--markers", action="store_true",
                   help="also run marker displacement metrics")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(load_config(args.config), args.out, args.seed)
        if args.command == "train":
            return cmd_train(load_config(args.config), args.out,
                             dataset_path=args.dataset, resume=args.resume,
                             seed=args.seed)
        if args.command == "generate":
            cfg = load_config(args.config) if args.config else None
            try:
                force = [float(v) for v in args.force.split(",")]
            except ValueError:
                return _err(f"cannot parse --force {args.force!r}")
            return cmd_generate(args.checkpoint, args.object_image, force,
                                args.seed, args.out, cfg=cfg)
        if args.command == "eval":
            cfg = load_config(args.config) if args.config else None
            markers = True if args.markers else None
            return cmd_eval(args.real, args.gen, args.out, cfg=cfg, markers=markers)
        raise ConfigError(f"unknown command {args.command!r}")
    except (TactgenError, DatasetError, OSError) as exc:
        return _err(str(exc))


if __name__ == "__main__":
    sys.exit(main())
