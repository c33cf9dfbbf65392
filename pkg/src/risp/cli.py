"""Command-line entry point: ``risp <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime or data error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import rtn
from .ablation import ablation_dataset, format_table, run_ablation
from .color import MaskMode, overexposure_mask
from .data_synth import IspParams, SceneSpec, load_dataset, load_isp_params, make_dataset
from .metrics import evaluate
from .model import BranchKind, load_weights, save_weights
from .pipeline import GAMMA_HUAWEI, TrainConfig, infer, infer_baseline, parse_key_values, train_branch, yuv_refine
from .render import render_visualization, save_png

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
SEED_ENV = "RISP_SEED"
PRESETS = {"desk": TrainConfig.desk, "s7": TrainConfig.s7, "huawei": TrainConfig.huawei}

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return p


# -- subcommands ------------------------------------------------------------------
def cmd_make_dataset(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    spec = SceneSpec(args.size, args.highlight, args.octaves, seed)
    manifest = make_dataset(args.n, spec, IspParams.random(seed), args.out)
    print(f"wrote {args.n} pairs to {manifest}")
    return EXIT_OK


def train_config(args) -> TrainConfig:
    """Preset, then config file, then ``RISP_SEED``/flags (later wins)."""
    cfg = PRESETS[args.preset]()
    items = parse_key_values(_existing(args.config).read_text()) if args.config else {}
    if "seed" not in items:
        items["seed"] = str(default_seed())
    overrides = {
        "seed": args.seed, "epochs_stage1": args.epochs, "epochs_stage2_l2": args.stage2_epochs,
        "lr": args.lr, "batch_size": args.batch_size, "gamma_noe": args.gamma_noe,
        "epochs_refine": args.refine_epochs, "mask_mode": args.mask,
    }
    items.update({k: str(v) for k, v in overrides.items() if v is not None})
    if getattr(args, "single", False) and "gamma_noe" not in items:
        items["gamma_noe"] = repr(GAMMA_HUAWEI)
    return cfg.updated(items)


def cmd_train(args) -> int:
    cfg = train_config(args)
    data = load_dataset(_existing(args.data))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = [BranchKind.SINGLE] if args.single else [BranchKind.OE, BranchKind.NOE]
    rows = []
    models = {}
    for kind in kinds:
        run = train_branch(data, kind, cfg)
        models[kind] = run.model
        rows += [(i + 1, kind.value, v) for i, v in enumerate(run.losses)]
        print(f"{kind.value}: final loss {run.losses[-1]:.6f}" if run.losses else f"{kind.value}: no epochs")
    if args.refine_epochs:
        first = models[kinds[0]]
        second = models.get(BranchKind.NOE)
        ref = yuv_refine(first, second, data, cfg)
        models[kinds[0]] = ref.model_oe
        if second is not None:
            models[BranchKind.NOE] = ref.model_noe
        rows += [(i, "refine_yuv", v) for i, v in enumerate(ref.losses)]
    for kind, model in models.items():
        save_weights(model, out / f"{kind.value}.rtn1")
    (out / "config.txt").write_text(cfg.to_text())
    with open(out / "loss_log.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "branch", "loss"])
        w.writerows((e, b, repr(v)) for e, b, v in rows)
    print(f"checkpoint written to {out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    rgb = rtn.load_tensor(_existing(args.rgb))
    first = load_weights(_existing(args.oe))
    if first.cfg.bayer_head:
        bayer = infer_baseline(rgb, first, args.tile)
    else:
        noe = load_weights(_existing(args.noe)) if args.noe else None
        bayer = infer(rgb, first, noe, MaskMode.parse(args.mask), args.tile)
    rtn.save_tensor(args.out, bayer)
    print(f"wrote bayer {tuple(bayer.shape)} to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = rtn.load_tensor(_existing(args.pred))
    gt = rtn.load_tensor(_existing(args.gt))
    mask = None
    if args.rgb:
        mask = overexposure_mask(rtn.load_tensor(_existing(args.rgb)), MaskMode.parse(args.mask))
    print(evaluate(pred, gt, mask).summary())
    return EXIT_OK


def cmd_visualize(args) -> int:
    bayer = rtn.load_tensor(_existing(args.bayer))
    params = load_isp_params(_existing(args.isp)) if args.isp else IspParams()
    img = render_visualization(bayer, params, args.demosaicer)
    save_png(img, args.out)
    print(f"wrote {img.shape[1]}x{img.shape[0]} PNG to {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    held_out = args.held_out if args.held_out is not None else max(1, args.n // 2)
    cfg = TrainConfig.desk()
    if args.epochs is not None:
        cfg = replace(cfg, epochs_stage1=args.epochs)
    data = ablation_dataset(seed, args.n, held_out, args.size, args.highlight)
    result = run_ablation(seed, cfg, data)
    print(format_table(result, args.margin))
    print(f"seconds={result.seconds:.1f}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="risp", description="sRGB -> RAW reconstruction with overexposure mask fusion")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("make-dataset", help="write synthetic (rgb, bayer) pairs")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--highlight", type=float, default=0.25, help="target overexposed fraction")
    s.add_argument("--octaves", type=int, default=3)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_make_dataset)

    s = sub.add_parser("train", help="train the OE/NOE branches (or a single masked net)")
    s.add_argument("--data", required=True, help="dataset directory or manifest.txt")
    s.add_argument("--out", required=True, help="checkpoint directory")
    s.add_argument("--config", help="key=value training config file")
    s.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    s.add_argument("--single", action="store_true", help="train one masked net on the full GT")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int, help="stage-1 epochs")
    s.add_argument("--stage2-epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--gamma-noe", type=float)
    s.add_argument("--refine-epochs", type=int, help="bayer YUV refinement epochs after training")
    s.add_argument("--mask", choices=("y", "maxrgb"))
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="sRGB tensor -> packed bayer tensor")
    s.add_argument("--rgb", required=True)
    s.add_argument("--oe", required=True, help="OE weights (or single/baseline weights)")
    s.add_argument("--noe")
    s.add_argument("--out", required=True)
    s.add_argument("--tile", type=int)
    s.add_argument("--mask", choices=("y", "maxrgb"), default="y")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="PSNR/SSIM of a predicted bayer tensor")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--rgb", help="source sRGB, for overexposed/non-overexposed region PSNR")
    s.add_argument("--mask", choices=("y", "maxrgb"), default="y")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("visualize", help="render a bayer tensor to an 8-bit PNG")
    s.add_argument("--bayer", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--isp", help="isp.txt written by make-dataset")
    s.add_argument("--demosaicer", choices=("malvar", "bilinear"), default="malvar")
    s.set_defaults(func=cmd_visualize)

    s = sub.add_parser("ablate", help="baseline vs single masked net vs dual fusion")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int, default=16, help="training patches")
    s.add_argument("--held-out", type=int, help="held-out patches (default n/2)")
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--highlight", type=float, default=0.25)
    s.add_argument("--epochs", type=int, help="override stage-1 epochs")
    s.add_argument("--margin", type=float, default=0.2)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as e:
        print(f"risp: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
