"""Command-line entry points: train, colorize, evaluate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds
from . import modelio, pipeline
from .clustering import ClusterConfig
from .mlp import TrainConfig

log = logging.getLogger("dcolor")


def _effective_config_line(cfg: pipeline.EngineConfig) -> str:
    return json.dumps(modelio.config_to_dict(cfg), sort_keys=True)


def cmd_train(args) -> int:
    categories, pairs = ds.load_dataset(args.dataset)
    cfg = pipeline.EngineConfig(
        cluster=ClusterConfig(epsilon=args.epsilon, mu=args.mu, n0=args.n0,
                              seed=args.seed),
        train=TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.seed),
        samples_per_image=args.samples,
    )
    log.info("effective config: %s", _effective_config_line(cfg))
    log.info("epsilon=%g dB, mu=%d, n0=%d", args.epsilon, args.mu, args.n0)

    model = pipeline.train_model(pairs, categories, cfg)
    out = Path(args.out)
    modelio.save_model(model, out)
    log.info("wrote model with %d clusters / %d networks to %s",
             len(model.clusters), len(model.networks), out)

    log_path = out.with_suffix(out.suffix + ".log")
    lines = [f"config: {_effective_config_line(cfg)}",
             f"categories: {len(categories)}",
             f"images: {len(pairs)} ({len(model.report.skipped_images)} skipped)"]
    for cid, history in model.report.loss_histories.items():
        if history:
            lines.append(f"network {cid}: loss {history[0]:.6g} -> {history[-1]:.6g} "
                         f"over {len(history)} epochs")
    for c in model.clusters:
        lines.append(f"cluster {c.id}: layer {c.layer}, {len(c.members)} members, "
                     f"network {c.network_id}")
    log_path.write_text("\n".join(lines) + "\n")
    log.info("training log written to %s", log_path)
    return 0


def cmd_colorize(args) -> int:
    model = modelio.load_model(args.model)
    gray = ds.load_gray_png(args.input)
    semantic = None
    if args.semantic:
        semantic = ds.load_semantic_file(args.semantic, model.categories)
        if semantic.probs.shape[:2] != gray.y.shape:
            raise ValueError(f"semantic map {semantic.probs.shape[:2]} does not "
                             f"match input {gray.y.shape}")
    result = pipeline.colorize(gray, semantic, model,
                               refine=not args.no_refine, topk=args.topk)
    ds.save_color_png(result, args.output)
    log.info("wrote %s", args.output)
    return 0


def cmd_evaluate(args) -> int:
    model = modelio.load_model(args.model)
    categories, pairs = ds.load_dataset(args.dataset)
    if categories != model.categories:
        raise ValueError("dataset categories do not match the model's")
    report = pipeline.evaluate(pairs, model, topk=args.topk)

    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "psnr_db"])
        for row in report.rows:
            if row.error is not None:
                writer.writerow([row.image_id, f"ERROR: {row.error}"])
            else:
                writer.writerow([row.image_id, repr(row.psnr_db)])
    hist = " ".join(f"{k}dB:{v}" for k, v in report.histogram.items())
    summary = (f"images={len(report.rows)} mean={report.mean_db} "
               f"median={report.median_db} histogram=[{hist}]")
    print(summary)
    log.info("report written to %s", out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcolor",
        description="Train and run the reference-corpus grayscale colorizer.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a reference dataset")
    p.add_argument("--dataset", required=True, help="dataset root directory")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--epsilon", type=float, default=-26.0,
                   help="retirement threshold in dB (negative PSNR)")
    p.add_argument("--mu", type=int, default=80,
                   help="minimum images per trained network")
    p.add_argument("--n0", type=int, default=24,
                   help="cluster count on the top layer")
    p.add_argument("--samples", type=int, default=1000,
                   help="training pixels sampled per image")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.01)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("colorize", help="colorize a grayscale PNG")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--semantic", default=None,
                   help="label PNG or .prob map for the input")
    p.add_argument("--no-refine", action="store_true",
                   help="skip the chroma refinement pass")
    p.add_argument("--topk", type=int, default=5,
                   help="cluster shortlist size for the semantic re-ranking")
    p.set_defaults(func=cmd_colorize)

    p = sub.add_parser("evaluate", help="per-image PSNR report over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--topk", type=int, default=5)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
