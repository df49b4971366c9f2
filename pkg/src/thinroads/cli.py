"""Command-line entry point for the whole pipeline.

Subcommands: synth, train, eval, predict, mosaic, roc, ablate, gradcheck.
Exit codes: 0 success, 1 validation error, 2 runtime failure. Logs go to
stderr; machine-readable results (CSV, PNG, checkpoints) go under --out,
together with a resolved-config snapshot that suffices to reproduce the run.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import data, metrics, synth, tiling
from .config import ConfigError, resolve_config, write_config_snapshot
from .gradcheck import TOLERANCE, run_gradcheck
from .train import (evaluate_tiles, fit, load_checkpoint, restore_model,
                    run_ablation)

log = logging.getLogger("thinroads")


class CliError(ValueError):
    """User-facing validation problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _write_snapshot(out_dir, command, values):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"command = {command}"]
    lines += [f"{key} = {value}" for key, value in sorted(values.items())]
    (out_dir / "run_config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_model(args):
    blob = load_checkpoint(args.ckpt)
    if getattr(args, "encoder", None) and args.encoder != blob["encoder_variant"]:
        raise CliError(
            "encoder spec mismatch:\n"
            f"  requested: {args.encoder}\n"
            f"  checkpoint: {blob['encoder_variant']} "
            f"channels={blob['encoder_channels']} blocks={blob['encoder_blocks']}")
    model, cfg = restore_model(blob)
    model.eval()
    return model, cfg


def cmd_synth(args):
    cfg = synth.SynthConfig(size=args.size, roads_min=args.roads_min,
                            roads_max=args.roads_max, width_min=args.width_min,
                            width_max=args.width_max, occlusion_rate=args.occlusion,
                            contrast=args.contrast, noise_amp=args.noise,
                            seed=args.seed)
    n_val = args.n_val if args.n_val is not None else max(1, args.n // 4)
    _write_snapshot(args.out, "synth", {**vars(args), "n_val": n_val})
    train_manifest = synth.generate_split(cfg, args.n, args.out, split="train")
    # validation indices live far above the training range so the splits
    # never share a sample
    val_manifest = synth.generate_split(cfg, n_val, args.out, split="val",
                                        start_index=1_000_000)
    log.info("wrote %d train and %d val tiles under %s",
             len(train_manifest), len(val_manifest), args.out)
    return 0


def cmd_train(args):
    cfg = resolve_config(args.config, args.overrides)
    write_config_snapshot(cfg, Path(args.out) / "run_config.txt",
                          extra={"command": "train", "data": args.data})
    result = fit(cfg, args.data, args.out)
    final = result.final
    log.info("finished after %d steps; final val_iou %.4f val_f1 %.4f; checkpoint %s",
             result.steps, final.val_iou, final.val_f1, result.checkpoint)
    return 0


def cmd_eval(args):
    model, cfg = _load_model(args)
    dataset = data.TileDataset(data.load_manifest(args.data, args.split))
    if len(dataset) == 0:
        raise CliError(f"split {args.split!r} under {args.data} lists no samples")
    _write_snapshot(args.out, "eval", {"ckpt": args.ckpt, "data": args.data,
                                       "split": args.split})
    result = evaluate_tiles(model, dataset, batch_size=cfg.batch_size,
                            mean=cfg.mean, std=cfg.std, collect_probs=True)
    values = metrics.scores(result.counts)
    values.update({f"mean_{k}": v for k, v in
                   metrics.mean_scores(result.per_image).items()})
    prob = np.concatenate([p.ravel() for p in result.probs])
    gt = np.concatenate([g.ravel() for g in result.gts])
    out = Path(args.out)
    try:
        curve = metrics.roc_auc(prob, gt, n_thresholds=args.thresholds)
        values["auc"] = curve.auc
        metrics.write_roc_csv(out / "roc.csv", curve)
        from .plots import save_roc_figure
        save_roc_figure(curve, out / "roc.png", title=f"{args.split} ROC")
    except ValueError as exc:
        log.warning("skipping ROC: %s", exc)
    metrics.write_metrics_csv(out / "metrics.csv", values)
    table = metrics.format_metrics_table(values)
    (out / "metrics.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def _pad_to_32(image):
    h, w = image.shape[:2]
    ph, pw = -h % 32, -w % 32
    if ph or pw:
        image = np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="reflect")
    return image, (h, w)


def cmd_predict(args):
    if (args.image is None) == (args.data is None):
        raise CliError("pass exactly one of --image or --data")
    model, cfg = _load_model(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(out, "predict", {"ckpt": args.ckpt,
                                     "image": args.image, "data": args.data,
                                     "split": args.split})
    if args.image is not None:
        jobs = [(Path(args.image).stem, tiling.load_raster(args.image))]
    else:
        manifest = data.load_manifest(args.data, args.split)
        jobs = [(sid, data.load_sample(manifest, sid).image) for sid in manifest.ids]
    from .plots import save_prediction_panel
    for index, (name, image) in enumerate(jobs):
        padded, (h, w) = _pad_to_32(image)
        prob = tiling.predict_window(model, padded, cfg.mean, cfg.std)[:h, :w]
        mask = (prob >= metrics.THRESHOLD).astype(np.uint8)
        tiling.save_probability_png(prob, out / f"{name}_prob.png")
        tiling.save_mask_png(mask, out / f"{name}_mask.png")
        if index == 0:
            save_prediction_panel(image, prob, mask, out / f"{name}_panel.png")
    log.info("wrote predictions for %d image(s) under %s", len(jobs), out)
    return 0


def cmd_mosaic(args):
    model, cfg = _load_model(args)
    raster = tiling.load_raster(args.raster)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(out, "mosaic", {"ckpt": args.ckpt, "raster": args.raster,
                                    "gt": args.gt, "window": args.window,
                                    "stride": args.stride})
    plan = tiling.plan_windows(raster.shape[0], raster.shape[1],
                               window=args.window, stride=args.stride)
    log.info("raster %dx%d -> %d windows of %d (stride %d)", raster.shape[0],
             raster.shape[1], len(plan.origins), plan.window, plan.stride)
    mosaic = tiling.predict_mosaic(raster, model, plan, mean=cfg.mean, std=cfg.std)
    prob = mosaic.prob
    mask = (prob >= metrics.THRESHOLD).astype(np.uint8)
    tiling.save_probability_png(prob, out / "prob.png")
    tiling.save_mask_png(mask, out / "mask.png")
    from .plots import save_prediction_panel
    gt = tiling.load_mask_raster(args.gt) if args.gt else None
    save_prediction_panel(raster, prob, mask, out / "panel.png", gt_mask=gt)
    if gt is not None:
        values, curve = tiling.evaluate_mosaic(prob, gt, n_thresholds=args.thresholds)
        metrics.write_metrics_csv(out / "metrics.csv", values)
        metrics.write_roc_csv(out / "roc.csv", curve)
        from .plots import save_roc_figure
        save_roc_figure(curve, out / "roc.png", title="mosaic ROC")
        sys.stdout.write(metrics.format_metrics_table(values))
    return 0


def _load_probability(path):
    path = Path(path)
    if path.suffix == ".npy":
        prob = np.load(path)
    else:
        from PIL import Image
        prob = np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0
    if prob.min() < 0 or prob.max() > 1:
        raise CliError(f"probabilities in {path} fall outside [0, 1]")
    return prob


def cmd_roc(args):
    prob = _load_probability(args.prob)
    gt = tiling.load_mask_raster(args.gt)
    if prob.shape != gt.shape:
        raise CliError(f"probability {prob.shape} and ground truth {gt.shape} differ")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(out, "roc", {"prob": args.prob, "gt": args.gt,
                                 "thresholds": args.thresholds})
    curve = metrics.roc_auc(prob, gt, n_thresholds=args.thresholds)
    metrics.write_roc_csv(out / "roc.csv", curve)
    metrics.write_metrics_csv(out / "metrics.csv", {"auc": curve.auc})
    from .plots import save_roc_figure
    save_roc_figure(curve, out / "roc.png")
    sys.stdout.write(f"auc  {curve.auc:.6f}\n")
    return 0


def cmd_ablate(args):
    overrides = list(args.overrides)
    if not any(o.startswith("profile=") for o in overrides):
        overrides.insert(0, "profile=tiny")
    cfg = resolve_config(args.config, overrides)
    write_config_snapshot(cfg, Path(args.out) / "run_config.txt",
                          extra={"command": "ablate", "data": args.data})
    rows = run_ablation(cfg, args.data, args.out)
    for row in rows:
        sys.stdout.write(f"acam={int(row['use_acam'])} gam={int(row['use_gam'])} "
                         f"ram={int(row['use_ram'])}  iou={row['val_iou']:.4f} "
                         f"f1={row['val_f1']:.4f}\n")
    return 0


def cmd_gradcheck(args):
    errors = run_gradcheck(args.module, size=args.size, seed=args.seed)
    ok = True
    for name, err in errors.items():
        passed = err < TOLERANCE
        ok &= passed
        sys.stdout.write(f"{name:<14s} max_rel_err={err:.3e}  "
                         f"{'ok' if passed else 'FAIL'}\n")
    return 0 if ok else 1


def build_parser():
    parser = _Parser(prog="thinroads",
                     description="Narrow-road extraction: synthesize, train, "
                                 "evaluate, and run large-raster inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic narrow-road dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200, help="training tiles")
    p.add_argument("--n-val", type=int, default=None, help="validation tiles (default n/4)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--roads-min", type=int, default=1)
    p.add_argument("--roads-max", type=int, default=3)
    p.add_argument("--width-min", type=int, default=1)
    p.add_argument("--width-max", type=int, default=5)
    p.add_argument("--occlusion", type=float, default=0.15)
    p.add_argument("--contrast", type=float, default=0.75)
    p.add_argument("--noise", type=float, default=0.05)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("overrides", nargs="*", metavar="key=value")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", default=None,
                   help="expected encoder variant; mismatches abort")
    p.add_argument("--thresholds", type=int, default=256)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="per-tile inference without scoring")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default="val")
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", default=None)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("mosaic", help="sliding-window inference over a large raster")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--raster", required=True,
                   help="image file, or tile directory with index.csv")
    p.add_argument("--gt", default=None, help="ground-truth mask raster")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=tiling.DEFAULT_WINDOW)
    p.add_argument("--stride", type=int, default=tiling.DEFAULT_STRIDE)
    p.add_argument("--encoder", default=None)
    p.add_argument("--thresholds", type=int, default=256)
    p.set_defaults(handler=cmd_mosaic)

    p = sub.add_parser("roc", help="ROC curve and AUC from a probability map")
    p.add_argument("--prob", required=True, help="8-bit PNG or .npy probabilities")
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--thresholds", type=int, default=256)
    p.set_defaults(handler=cmd_roc)

    p = sub.add_parser("ablate", help="train/evaluate every module-toggle row")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("overrides", nargs="*", metavar="key=value")
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--module", default="all",
                   help="encoder, axial, acam, gam, ram, decode, loss, or all")
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_gradcheck)
    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(max(1, torch.get_num_threads()))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except (CliError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        log.exception("runtime failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
