"""Command-line pipeline: encode, train, eval, render."""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .gaf import encode_pixel
from .hsi import iterate_pixels, load_cube, stratified_split
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .palette import make_palette, render_label_map
from .train import TrainConfig, evaluate, predict_map, train


def _add_split_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-frac", type=float, default=0.10)
    p.add_argument("--val-frac", type=float, default=0.10)


def _split_fractions(args):
    return (args.train_frac, args.val_frac, 1.0 - args.train_frac - args.val_frac)


def cmd_encode(args):
    cube = load_cube(args.header)
    os.makedirs(args.out_dir, exist_ok=True)
    lo, hi = cube.value_range
    side = args.gaf_side

    labels, coords, chunks = [], [], []
    rows, cols = np.nonzero(cube.labeled_mask())
    for r, c in zip(rows, cols):
        s = encode_pixel(cube.reflectance[r, c].astype(np.float64),
                         cube.labels[r, c], lo, hi, side)
        chunks.append(s.channels().astype("<f4"))
        labels.append(int(s.label))
        coords.append([int(r), int(c)])

    data_file = "samples.bin"
    np.concatenate([c.reshape(-1) for c in chunks]).tofile(
        os.path.join(args.out_dir, data_file))
    manifest = {
        "dataset_id": cube.dataset_id, "count": len(labels), "side": side,
        "channels": 2, "data_file": data_file, "labels": labels, "coords": coords,
    }
    with open(os.path.join(args.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh)

    if args.preview > 0:
        from PIL import Image
        for i in range(min(args.preview, len(chunks))):
            for ch, name in ((0, "gasf"), (1, "gadf")):
                gray = ((chunks[i][ch] + 1.0) * 127.5).clip(0, 255).astype(np.uint8)
                Image.fromarray(gray, mode="L").save(
                    os.path.join(args.out_dir, f"sample{i:04d}_{name}.png"))
    print(f"encoded {len(labels)} samples of shape 2x{side}x{side} -> {args.out_dir}")
    return 0


def cmd_train(args):
    cube = load_cube(args.header)
    fractions = _split_fractions(args)
    if not 0 < fractions[2] < 1:
        raise ValueError(f"train/validation fractions leave no test data: {fractions}")
    split = stratified_split(cube, fractions, args.seed)

    model_cfg = ModelConfig(
        num_classes=cube.num_classes, gaf_side=args.gaf_side,
        base_filters=args.base_filters, depth=args.depth,
        use_pe=not args.no_pe, use_agpe=not args.no_agpe, seed=args.seed)
    train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr0=args.lr0,
                            seed=args.seed, optimizer_id=args.optimizer,
                            train_fraction=args.train_frac)

    os.makedirs(args.out_dir, exist_ok=True)
    echo = {"model": model_cfg.__dict__, "train": train_cfg.__dict__,
            "fractions": fractions}
    with open(os.path.join(args.out_dir, "config.json"), "w") as fh:
        json.dump(echo, fh, indent=2)

    model = build_model(model_cfg)
    log_path = os.path.join(args.out_dir, "log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "lr", "train_loss", "val_OA"])
        writer.writeheader()

        def hook(entry):
            writer.writerow(entry)
            fh.flush()
            print(f"epoch {entry['epoch']:3d}  lr {entry['lr']:.6g}  "
                  f"loss {entry['train_loss']:.4f}  val_OA {entry['val_OA']:.4f}",
                  file=sys.stderr)

        model, _ = train(model, cube, split, train_cfg, log_hook=hook)

    prefix = os.path.join(args.out_dir, "model")
    save_checkpoint(model, prefix)
    print(f"checkpoint written to {prefix}.bin / {prefix}.json; log at {log_path}")
    return 0


def cmd_eval(args):
    cube = load_cube(args.header)
    model = load_checkpoint(args.checkpoint)
    split = stratified_split(cube, _split_fractions(args), args.seed)
    metrics = evaluate(model, cube, split, which=args.partition)
    json.dump(metrics, sys.stdout, indent=2)
    print()
    return 0


def cmd_render(args):
    from PIL import Image
    cube = load_cube(args.header)
    model = load_checkpoint(args.checkpoint)
    labels = predict_map(model, cube)
    palette = make_palette(cube.num_classes, seed=args.palette_seed)
    img = render_label_map(labels, palette, mask_unlabeled=args.mask_unlabeled,
                           reference_labels=cube.labels)
    Image.fromarray(img, mode="RGB").save(args.out)
    print(f"classification map written to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gafunet",
        description="Pixel-wise hyperspectral classification via GAF encoding "
                    "and a neighborhood-attention U-Net")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode labeled pixels into GAF sample archives")
    p.add_argument("header")
    p.add_argument("out_dir")
    p.add_argument("--gaf-side", type=int, default=32)
    p.add_argument("--preview", type=int, default=0,
                   help="also write grayscale PNGs for the first N samples")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("train", help="train a model on a cube")
    p.add_argument("header")
    p.add_argument("out_dir")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr0", type=float, default=1e-3)
    p.add_argument("--gaf-side", type=int, default=32)
    p.add_argument("--base-filters", type=int, default=128)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--no-pe", action="store_true", help="disable progressive expansion")
    p.add_argument("--no-agpe", action="store_true",
                   help="disable attention gates (plain U-Net skips)")
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    _add_split_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; metrics JSON to stdout")
    p.add_argument("header")
    p.add_argument("checkpoint", help="checkpoint path prefix (without .bin/.json)")
    p.add_argument("--partition", choices=["train", "validation", "test"], default="test")
    _add_split_flags(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("render", help="render a full classification map as PNG")
    p.add_argument("header")
    p.add_argument("checkpoint")
    p.add_argument("out")
    p.add_argument("--mask-unlabeled", action="store_true")
    p.add_argument("--palette-seed", type=int, default=0)
    p.set_defaults(fn=cmd_render)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # diagnostics to stderr, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
