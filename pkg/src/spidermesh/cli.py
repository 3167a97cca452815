"""Command-line entry point: ``spidermesh <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .augment import AugmentConfig
from .datamodel import RgbtSample
from .errors import SpiderMeshError
from .evalkit import MODALITY_MODES, estimate_flops, evaluate, miou
from .gradcheck import run_suite
from .heads import forward, predict_labels, sample_tensors
from .io.checkpoint import from_train_state, load_checkpoint, save_checkpoint, to_train_state
from .io.config import ExperimentConfig, load_config
from .io.convert import convert_composites
from .io.dataset import _read, decode_thermal, generate_synthetic, load_dataset
from .io.synth import SynthSpec
from .trainer import VARIANTS, apply_variant, format_table, hide_labels, run_ablation, train

log = logging.getLogger("spidermesh")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def _pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN,MAX, got {text!r}") from None
    return lo, hi


def _seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _config(path: str | None) -> ExperimentConfig:
    return ExperimentConfig() if path is None else load_config(path)


def _split_or_empty(root: str, split: str) -> list[RgbtSample]:
    if not (Path(root) / f"{split}.txt").exists():
        return []
    return load_dataset(root, split)


def _eval_params(ckpt):
    return ckpt.extras.get("best", ckpt.params)


def cmd_synth(args) -> int:
    spec = SynthSpec(num_samples=args.num, size=args.size, num_classes=args.classes, seed=args.seed,
                     impair_prob=args.impair, impair_area=args.impair_area)
    layout = generate_synthetic(spec, args.out)
    print(" ".join(f"{s}={len(layout.ids(s))}" for s in ("train", "val", "test")))
    return 0


def cmd_train(args) -> int:
    exp = _config(args.config)
    cfg = exp.train
    if args.variant:
        cfg = cfg.replace(variant=args.variant)
    if args.semi:
        cfg = cfg.replace(mode="semi")
    if args.unlabeled_frac is not None:
        cfg = cfg.replace(unlabeled_frac=args.unlabeled_frac)
    if args.epochs is not None:
        cfg = cfg.replace(epochs=args.epochs)
    model_cfg, aug = apply_variant(cfg.variant, exp.model, exp.aug)
    samples = load_dataset(args.data, "train")
    if cfg.mode == "semi":
        labeled, unlabeled = hide_labels(samples, cfg.unlabeled_frac, cfg.seed)
    else:
        labeled, unlabeled = [s for s in samples if s.label is not None], None
    val = [s for s in _split_or_empty(args.data, "val") if s.label is not None]
    state = None
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        model_cfg, state = ckpt.model_config, to_train_state(ckpt)

    def on_epoch(st):
        print(st.history[-1].line(), flush=True)
        save_checkpoint(from_train_state(st, model_cfg, cfg), args.out)

    state = train(labeled, unlabeled, cfg, model_cfg, aug, val=val or None, state=state, on_epoch=on_epoch)
    save_checkpoint(from_train_state(state, model_cfg, cfg), args.out)
    print(f"saved {args.out} (epoch {state.epoch}, best val mIoU {state.best_miou:.4f})")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    samples = [s for s in load_dataset(args.data, args.split) if s.label is not None]
    res = evaluate(_eval_params(ckpt), ckpt.model_config, samples, args.modality)
    for head, cm in (("main", res.main), ("aux", res.aux)):
        per_class, mean = miou(cm)
        cells = " ".join(f"{k}:{'n/a' if v is None else f'{v:.4f}'}" for k, v in enumerate(per_class))
        print(f"{head} per-class IoU {cells}")
        print(f"{head} mIoU {mean:.4f}")
    if not res.finite:
        print("warning: non-finite logits encountered", file=sys.stderr)
    return 0


def _gray(a: np.ndarray) -> Image.Image:
    return Image.fromarray(np.round(255 * np.clip(a, 0, 1)).astype(np.uint8), mode="L")


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    params, cfg = _eval_params(ckpt), ckpt.model_config
    rgb = _read(Path(args.rgb))
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise SpiderMeshError(f"{args.rgb} is not a 3-channel image")
    sample = RgbtSample(rgb[..., :3].astype(np.float64) / 255.0, decode_thermal(_read(Path(args.thermal)))[..., None])
    x_rgb, x_the = sample_tensors(sample, next(iter(params.values())).dtype)
    with torch.no_grad():
        out = forward(params, x_rgb, x_the, cfg, keep_maps=args.emit_demand_maps)
    dst = Path(args.out)
    dst.mkdir(parents=True, exist_ok=True)
    stem = Path(args.rgb).stem
    Image.fromarray(predict_labels(out.main)[0].numpy().astype(np.uint8), mode="L").save(dst / f"{stem}_label.png")
    written = 1
    if args.emit_demand_maps:
        if not out.demand_maps:
            print("warning: model has no fusion module, no demand maps to write", file=sys.stderr)
        for i, maps in enumerate(out.demand_maps or []):
            for branch, m in maps.items():
                _gray(m[0, 0].numpy()).save(dst / f"{stem}_demand_stage{i}_{branch}.png")
                written += 1
    print(f"wrote {written} image(s) to {dst}")
    return 0


def cmd_ablate(args) -> int:
    exp = _config(args.config)
    train_set = [s for s in load_dataset(args.data, "train") if s.label is not None]
    val = [s for s in _split_or_empty(args.data, "val") if s.label is not None]
    if not val:
        raise SpiderMeshError(f"{args.data} has no labelled val split")
    rows = run_ablation(train_set, val, exp.model, exp.train, exp.aug, seeds=args.seeds)
    print(format_table(rows))
    return 0


def cmd_gradcheck(args) -> int:
    ok = True
    for r in run_suite(eps=args.eps):
        passed = r.passed(args.tol)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {r.case:<16} rel_err={r.global_error:.3e} "
              f"worst_tensor={r.max_error:.3e} entries={r.checked}")
    return 0 if ok else 1


def cmd_flops(args) -> int:
    cfg = _config(args.config).model
    size = args.size or cfg.input_size
    print(f"{estimate_flops(cfg, size)} FLOPs ({cfg.backbone_kind}, {size[0]}x{size[1]})")
    return 0


def cmd_convert(args) -> int:
    counts = convert_composites(args.src, args.out)
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spidermesh", description="RGB-thermal semantic segmentation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic RGB-T dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num", type=int, default=64)
    p.add_argument("--size", type=_size, default=(64, 64))
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--impair", type=float, default=0.0, help="probability of darkening an RGB region")
    p.add_argument("--impair-area", type=_pair, default=(0.1, 0.4))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--semi", action="store_true")
    p.add_argument("--unlabeled-frac", type=float)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.add_argument("--resume", help="continue from this checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-class IoU and mIoU of a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="val")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--modality", choices=MODALITY_MODES, default="both")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="segment one RGB/thermal pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--thermal", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-demand-maps", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="train every variant over several seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--seeds", type=_seeds, default=(0, 1, 2))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("flops", help="analytic FLOP count of a model configuration")
    p.add_argument("--config")
    p.add_argument("--size", type=_size)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("convert", help="import 4-channel RGB+thermal composites")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (SpiderMeshError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
