"""Command-line surface: synth, estimate, train, infer, eval.

Exit codes: 0 success, 1 I/O or data failure, 2 bad usage (argparse),
3 non-finite training loss. Outputs are written atomically (temp name,
then rename), so interrupted runs never leave partial files behind.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

from . import metrics
from .align import Shift, apply_translation, register_translation, wavelet_denoise
from .blursynth import gaussian_kernel_bank, load_kernel, synthesize_dataset
from .imagecore import dihedral_augment, extract_patches, load_image, save_image
from .kernelest import build_kernel_bank, reblur_fit_mse, write_bank_report
from .rrdbnet import NetConfig, NonFiniteLossError, TrainConfig, infer_image, train

RASTER_SUFFIXES = {".png", ".pgm", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg"}


def _require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _require_dir(path: str) -> str:
    if not os.path.isdir(path):
        raise FileNotFoundError(f"no such directory: {path}")
    return path


def _load_stack_dir(path: str) -> list:
    names = sorted(
        n for n in os.listdir(path) if os.path.splitext(n)[1].lower() in RASTER_SUFFIXES
    )
    if not names:
        raise FileNotFoundError(f"no raster images found in directory: {path}")
    return [load_image(os.path.join(path, n)) for n in names]


def run_synth(args) -> int:
    _require_dir(args.stacks)
    stacks = _load_stack_dir(args.stacks)
    if args.mode == "gaussian":
        kernels = gaussian_kernel_bank(args.sigma_min, args.sigma_max, args.sigma_count)
    else:
        if args.kernel_dir is None:
            raise ValueError("--mode estimated requires --kernel-dir")
        _require_dir(args.kernel_dir)
        names = sorted(n for n in os.listdir(args.kernel_dir) if n.endswith(".kern"))
        if not names:
            raise FileNotFoundError(f"no .kern files found in directory: {args.kernel_dir}")
        kernels = [load_kernel(os.path.join(args.kernel_dir, n)) for n in names]

    # Dihedral augmentation is part of the estimated-kernel pipeline by
    # default (few source stacks, so flips/rotations multiply them by 8);
    # the explicit flag overrides either way.
    augment = args.mode == "estimated" if args.augment is None else args.augment
    images = [aug for img in stacks for aug in dihedral_augment(img)] if augment else stacks

    manifest = synthesize_dataset(
        images,
        kernels,
        noise_sigma=args.noise,
        seed=args.seed,
        out_dir=args.out,
        patch_size=args.patch,
        stride=args.stride,
    )
    print(f"{len(images) * len(kernels)} blurred images, {len(manifest.pairs)} pairs")
    return 0


def run_estimate(args) -> int:
    sharp = load_image(_require_file(args.sharp))
    blur = load_image(_require_file(args.blur))
    shift = register_translation(sharp, blur)
    aligned = apply_translation(blur, Shift(-shift.dy, -shift.dx, shift.confidence))
    blur_for_fit = wavelet_denoise(aligned) if args.denoise else aligned

    sharp_grid = extract_patches(sharp, args.patch, args.stride)
    fit_grid = extract_patches(blur_for_fit, args.patch, args.stride)
    orig_grid = extract_patches(aligned, args.patch, args.stride)
    pairs = list(zip(sharp_grid.patches, fit_grid.patches, sharp_grid.offsets))
    bank = build_kernel_bank(
        pairs,
        lam=args.lam,
        top_n=args.top,
        min_size=args.min_size,
        max_size=args.max_size,
        denoised=args.denoise,
    )

    # Score every estimate against the patch as acquired (pre-denoise), so
    # runs with and without --denoise are comparable on the same target.
    originals = dict(zip(orig_grid.offsets, orig_grid.patches))
    sharps = dict(zip(sharp_grid.offsets, sharp_grid.patches))

    def rescored(est):
        score = reblur_fit_mse(
            sharps[est.patch_offset], originals[est.patch_offset], est.kernel
        )
        return replace(est, fit_mse_original=score)

    bank = replace(
        bank,
        small=[rescored(e) for e in bank.small],
        medium=[rescored(e) for e in bank.medium],
        large=[rescored(e) for e in bank.large],
    )
    bank = replace(bank, selected=bank.medium[: args.top] + bank.large[: args.top])

    all_scores = [e.fit_mse_original for e in bank.small + bank.medium + bank.large]
    report = write_bank_report(
        bank,
        args.out,
        extra={
            "shift": {"dy": shift.dy, "dx": shift.dx, "confidence": shift.confidence},
            "denoised": args.denoise,
            "fit_mse": min(all_scores),
        },
    )
    print(
        f"shift ({shift.dy}, {shift.dx}), {len(report['estimates'])} estimates, "
        f"{len(report['selected'])} selected, fit_mse {report['fit_mse']:.3e}"
    )
    return 0


def run_train(args) -> int:
    _require_file(args.manifest)
    net_config = NetConfig(num_rrdb=args.blocks)
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        max_steps=args.max_steps,
    )
    report = train(args.manifest, net_config, train_config, out_checkpoint=args.out)
    report_path = os.fspath(args.out) + ".report.json"
    tmp = report_path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(report.to_json())
    os.replace(tmp, report_path)
    for stats in report.epoch_stats:
        val = "n/a" if stats.val_mse is None else f"{stats.val_mse:.6f}"
        print(f"epoch {stats.epoch}: train_mse {stats.train_mse:.6f}, val_mse {val}")
    print(
        f"done: {report.total_steps} steps in {report.wall_time_s:.1f}s, "
        f"checkpoint {report.checkpoint_path}"
    )
    return 0


def run_infer(args) -> int:
    img = load_image(_require_file(args.input))
    _require_file(args.ckpt)
    result = infer_image(img, args.ckpt, stretch=args.stretch)
    save_image(result, args.out)
    print(args.out)
    return 0


def run_eval(args) -> int:
    pred = load_image(_require_file(args.pred))
    ref = load_image(_require_file(args.ref))
    m = metrics.mse(pred, ref)
    p = metrics.psnr(pred, ref)
    s = metrics.ssim(pred, ref, metrics.SsimConfig(window_size=args.window))
    p_str = "inf" if math.isinf(p) else f"{p:.2f}"
    print(f"{args.pred}\t{m:.9f}\t{p_str}\t{s:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deblurkit",
        description="Synthetic-blur dataset tools, PSF estimation, and patchwise restoration.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="blur sharp stacks into a paired patch dataset")
    p.add_argument("--stacks", required=True, help="directory of sharp source images")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--mode", required=True, choices=("gaussian", "estimated"))
    p.add_argument("--kernel-dir", help="directory of KERN v1 files (estimated mode)")
    p.add_argument("--sigma-min", type=float, default=1.0)
    p.add_argument("--sigma-max", type=float, default=25.0)
    p.add_argument("--sigma-count", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise std")
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--stride", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--augment",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="8-way dihedral augmentation (default: on for estimated mode)",
    )
    p.set_defaults(func=run_synth)

    p = sub.add_parser("estimate", help="recover blur kernels from a sharp/blurry pair")
    p.add_argument("--sharp", required=True)
    p.add_argument("--blur", required=True)
    p.add_argument("--out", required=True, help="output directory for kernels + report")
    p.add_argument("--min-size", type=int, default=3)
    p.add_argument("--max-size", type=int, default=35)
    p.add_argument("--top", type=int, default=5, help="selections per size category")
    p.add_argument("--lambda", dest="lam", default="auto", help="ridge weight or 'auto'")
    p.add_argument("--denoise", action="store_true", help="wavelet-denoise before fitting")
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--stride", type=int, default=32)
    p.set_defaults(func=run_estimate)

    p = sub.add_parser("train", help="train the restoration network on a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=None, help="stop after this many steps")
    p.set_defaults(func=run_train)

    p = sub.add_parser("infer", help="restore an image with a trained checkpoint")
    p.add_argument("--input", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stretch", action="store_true", help="full-range histogram stretch")
    p.set_defaults(func=run_infer)

    p = sub.add_parser("eval", help="MSE / PSNR / SSIM between two images")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--window", type=int, default=11, help="SSIM window size")
    p.set_defaults(func=run_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
