"""Command-line entry point: train, apply, filter, eval, decompose, sweep."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .blend import apply_model
from .experiment import k_sweep, list_images, load_luma
from .filters import LOCAL_LAPLACIAN_PRESETS, FilterSpec, apply_filter
from .image_io import ImageBuf, ImageIOError, load_image, luma, save_image
from .metrics import EvalReport, fft_diff
from .modelio import ModelFormatError, load_model, save_model
from .pyramid import UPSAMPLE_METHODS, decompose
from .training import MisalignedPairError, TrainConfig, expected_param_count, train


class CLIError(Exception):
    pass


def write_manifest(path, command: str, args: argparse.Namespace, started: float, **extra) -> None:
    """Plain key=value record of a run, written next to its output."""
    fields = {"subcommand": command, "tool_version": __version__}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "command"):
            continue
        fields[k] = v
    fields.update(extra)
    fields["wall_clock_s"] = f"{time.time() - started:.3f}"
    with open(path, "w") as fh:
        for k, v in fields.items():
            fh.write(f"{k}={v}\n")


def _manifest_path(args, default: Path) -> Path:
    return Path(args.manifest) if args.manifest else default


# --- train ------------------------------------------------------------------

def config_from_args(args) -> TrainConfig:
    return TrainConfig(
        K=args.k, n_levels=args.levels, patch_size=args.patch_size, hidden=args.hidden,
        lr=args.lr, decay=args.decay, epochs=args.epochs, batch=args.batch, seed=args.seed,
        leaky_slope=args.leaky_slope, channel_mode=args.channel_mode, baseline=args.baseline,
        scheme=args.scheme,
    )


def cmd_train(args) -> int:
    started = time.time()
    cfg = config_from_args(args)
    before, after = load_image(args.before), load_image(args.after)
    log_fh = open(args.log, "w") if args.log else None
    try:
        model, results = train(before, after, cfg, log_stream=log_fh)
    finally:
        if log_fh:
            log_fh.close()
    save_model(model, args.out)
    n = model.n_params()
    print(f"parameters={n} ({n / 1e6:.3f} M)")
    print(f"formula=(n_L+1)*[K*d^2 + (d*H+H) + (H*H+H) + (H*K+K)] per channel = "
          f"{expected_param_count(cfg, len(model.band_maps))}")
    for c, row in enumerate(results):
        for l, r in enumerate(row):
            print(f"channel={c} band={l} final_loss={r.final_loss:.9e}")
    write_manifest(_manifest_path(args, Path(str(args.out) + ".manifest.txt")), "train", args, started,
                   config_hash=cfg.config_hash(), parameters=n)
    return 0


# --- apply ------------------------------------------------------------------

def cmd_apply(args) -> int:
    started = time.time()
    model = load_model(args.model)
    if args.input_dir:
        if not args.output_dir:
            raise CLIError("--input-dir needs --output-dir")
        out_dir = Path(args.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(p, out_dir / p.name) for p in list_images(args.input_dir)]
        manifest = out_dir / "apply.manifest.txt"
    else:
        if not (args.input and args.output):
            raise CLIError("apply needs --input and --output (or --input-dir and --output-dir)")
        jobs = [(Path(args.input), Path(args.output))]
        manifest = Path(str(args.output) + ".manifest.txt")
    for src, dst in jobs:
        save_image(apply_model(model, load_image(src), method=args.upsample), dst)
        print(dst)
    write_manifest(_manifest_path(args, manifest), "apply", args, started, seed=model.seed)
    return 0


# --- filter -----------------------------------------------------------------

def spec_from_args(args) -> FilterSpec:
    params = {}
    if args.type == "gaussian":
        params["sigma"] = args.sigma
    elif args.type == "unsharp":
        params.update(sigma=args.sigma, amount=args.amount)
    elif args.type == "bilateral":
        params.update(sigma_s=args.sigma_s, sigma_r=args.sigma_r)
    else:
        if args.preset:
            params.update(LOCAL_LAPLACIAN_PRESETS[args.preset])
        if args.alpha is not None:
            params["alpha"] = args.alpha
        if args.sigma_r is not None:
            params["sigma_r"] = args.sigma_r
        params["levels"] = args.ll_levels
    return FilterSpec(args.type, {k: v for k, v in params.items() if v is not None})


def cmd_filter(args) -> int:
    started = time.time()
    spec = spec_from_args(args)
    save_image(apply_filter(load_image(args.input), spec), args.output)
    write_manifest(_manifest_path(args, Path(str(args.output) + ".manifest.txt")), "filter", args, started,
                   resolved=spec.params)
    return 0


# --- eval -------------------------------------------------------------------

def _pairs(reference, test):
    ref, tst = Path(reference), Path(test)
    if ref.is_dir() != tst.is_dir():
        raise CLIError("--reference and --test must both be files or both be directories")
    if not ref.is_dir():
        return [(tst, ref)]
    pairs = []
    for t in list_images(tst):
        r = ref / t.name
        if not r.exists():
            raise CLIError(f"no reference image for {t.name} in {ref}")
        pairs.append((t, r))
    if not pairs:
        raise CLIError(f"no images in {tst}")
    return pairs


def cmd_eval(args) -> int:
    started = time.time()
    pairs = _pairs(args.reference, args.test)
    report = EvalReport.from_pairs((str(t), load_luma(t), load_luma(r)) for t, r in pairs)
    for line in report.lines():
        print(line)
    if args.fft_diff:
        if len(pairs) != 1:
            raise CLIError("--fft-diff needs a single image pair")
        t, r = pairs[0]
        save_image(fft_diff(load_luma(t), load_luma(r)), args.fft_diff)
    if args.manifest:
        write_manifest(args.manifest, "eval", args, started, mean_psnr_db=report.psnr_db, mean_ssim=report.ssim)
    return 0


# --- decompose --------------------------------------------------------------

def signed_to_image(band: np.ndarray) -> ImageBuf:
    """Signed band as bytes with 128 meaning zero: byte = 128 + 127 * v."""
    return ImageBuf.from_array((128.0 + 127.0 * band) / 255.0)


def cmd_decompose(args) -> int:
    started = time.time()
    plane = luma(load_image(args.input))
    pyr = decompose(plane, args.levels, args.scheme)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for l, band in enumerate(pyr.bands):
        save_image(signed_to_image(band), out / f"band_{l}.pgm")
    save_image(ImageBuf.from_array(pyr.residual), out / "residual.pgm")
    with open(out / "scales.txt", "w") as fh:
        fh.write(f"source_size={pyr.source_size[0]}x{pyr.source_size[1]}\n")
        for l, (band, f) in enumerate(zip(pyr.bands, pyr.band_scales)):
            fh.write(f"band_{l} scale={f} size={band.shape[1]}x{band.shape[0]}\n")
        fh.write(f"residual scale={pyr.residual_scale} size={pyr.residual.shape[1]}x{pyr.residual.shape[0]}\n")
    print(f"wrote {len(pyr.bands)} bands + residual to {out}")
    write_manifest(_manifest_path(args, out / "manifest.txt"), "decompose", args, started)
    return 0


# --- sweep ------------------------------------------------------------------

def cmd_sweep(args) -> int:
    started = time.time()
    spec = spec_from_args(args)
    cfg = config_from_args(args)
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    before = load_luma(args.before)
    planes = {p.stem: load_luma(p) for p in list_images(args.corpus)}
    if not planes:
        raise CLIError(f"no images in {args.corpus}")
    rows = k_sweep(before, planes, spec, cfg, ks)
    with open(args.out, "w") as fh:
        fh.write("K\tPSNR_dB\tSSIM\n")
        for k, rep in rows:
            fh.write(f"{k}\t{rep.psnr_db:.4f}\t{rep.ssim:.6f}\n")
            print(f"K={k} PSNR_dB={rep.psnr_db:.4f} SSIM={rep.ssim:.6f}")
    write_manifest(_manifest_path(args, Path(str(args.out) + ".manifest.txt")), "sweep", args, started,
                   config_hash=cfg.config_hash(), resolved=spec.params)
    return 0


# --- parser -----------------------------------------------------------------

def _add_train_flags(p):
    d = TrainConfig()
    p.add_argument("--k", type=int, default=d.K, help="number of blended matrices per band")
    p.add_argument("--levels", type=int, default=d.n_levels, help="n_L; bands 0..n_L are learned")
    p.add_argument("--patch-size", type=int, default=d.patch_size)
    p.add_argument("--hidden", type=int, default=d.hidden, help="weight-field hidden width")
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--decay", type=float, default=d.decay, help="per-epoch learning-rate decay")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch", type=int, default=d.batch)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--leaky-slope", type=float, default=d.leaky_slope)
    p.add_argument("--channel-mode", choices=("luma_only", "per_channel"), default=d.channel_mode)
    p.add_argument("--baseline", choices=("blend", "regressor"), default=d.baseline)
    p.add_argument("--scheme", choices=("default", "strict"), default=d.scheme, help="band scale table")


def _add_filter_flags(p, required=True):
    p.add_argument("--type", choices=("gaussian", "unsharp", "bilateral", "local_laplacian"), required=required)
    p.add_argument("--sigma", type=float, default=2.0, help="gaussian / unsharp blur sigma")
    p.add_argument("--amount", type=float, default=1.0, help="unsharp amount")
    p.add_argument("--sigma-s", type=float, default=3.0, help="bilateral spatial sigma")
    p.add_argument("--sigma-r", type=float, default=None,
                   help="range sigma (bilateral default 0.1, local_laplacian default 0.2)")
    p.add_argument("--alpha", type=float, default=None, help="local_laplacian detail exponent")
    p.add_argument("--ll-levels", type=int, default=5, help="local_laplacian pyramid levels")
    p.add_argument("--preset", choices=sorted(LOCAL_LAPLACIAN_PRESETS), default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oneshot-retouch", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn a retouching map from one before/after pair")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", help="line-delimited training log")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("apply", help="apply a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--input-dir")
    p.add_argument("--output-dir")
    p.add_argument("--upsample", choices=UPSAMPLE_METHODS, default="cubic")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("filter", help="run a ground-truth filter on the luma channel")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_filter_flags(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", help="PSNR / SSIM of test images against references (luma)")
    p.add_argument("--reference", required=True, help="image or directory")
    p.add_argument("--test", required=True, help="image or directory with matching names")
    p.add_argument("--fft-diff", help="write the Fourier difference image for a single pair")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decompose", help="write the band decomposition for inspection")
    p.add_argument("--input", required=True)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--scheme", choices=("default", "strict"), default="default")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("sweep", help="train per K on one filtered pair and score each on a corpus")
    p.add_argument("--before", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--ks", default="1,16,64", help="comma-separated K values")
    p.add_argument("--out", required=True, help="tab-separated table")
    _add_filter_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    for p in sub.choices.values():
        p.add_argument("--manifest", help="where to write the run manifest")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MisalignedPairError, ImageIOError, ModelFormatError, CLIError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
