"""Command-line entry point: phantom, augment, train, denoise, evaluate, ablate.

Option values resolve as defaults < ``--config`` file < explicit flags.
Every run prints the resolved options as ``key=value`` lines; saving that
block to a file and passing it back with ``--config`` reproduces the run.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import imaging, plotting, synthetic, training
from .dual_pipeline import denoise, denoise_fullframe

log = logging.getLogger("dualcyclewgan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(p) for p in str(text).split(",") if p.strip()]


def _str_list(text: str) -> list[str]:
    return [p.strip() for p in str(text).split(",") if p.strip()]


def _optional_float(text: str):
    return None if str(text).lower() in ("auto", "none") else float(text)


def _render(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if value is None:
        return "auto"
    return str(value)


# option tables: (flag, dest, type, default, help); default None + required=True means mandatory
_TRAIN_OPTIONS = [
    ("--variant", "variant", str, "dual-merged-wgan",
     f"one of {', '.join(training.VARIANTS)}"),
    ("--lam", "lam", float, 10.0, "cycle-consistency weight"),
    ("--clip-c", "clip_c", float, 0.01, "critic weight-clipping bound c"),
    ("--n-critic", "n_critic", int, 5, "critic steps per generator step (Wasserstein variants)"),
    ("--learning-rate", "learning_rate", _optional_float, None,
     "step size; 'auto' = 5e-5 RMSprop (Wasserstein) / 2e-4 Adam (log loss)"),
    ("--epochs", "epochs", int, 30, "passes over the larger training set"),
    ("--batch-size", "batch_size", int, 4, "crops per batch"),
    ("--seed", "seed", int, 0, "master seed"),
    ("--merge-alpha", "merge_alpha", float, 0.5, "weight of the stage-1 output in the merge"),
    ("--crop-size", "crop_size", int, 64, "expected square crop size"),
    ("--branch-depths", "branch_depths", _int_list, [3, 4], "U-Net depths of the generator branches"),
    ("--base-channels", "base_channels", int, 8, "generator width at full resolution"),
    ("--critic-layers", "critic_layers", int, 3, "strided critic layers"),
    ("--critic-channels", "critic_channels", int, 16, "critic width of the first layer"),
    ("--threads", "threads", int, 1, "torch threads; 1 gives bit-reproducible runs"),
]

_COMMANDS = {
    "phantom": (
        "generate paired clean/noisy layered phantoms",
        [
            ("--out", "out", str, None, "output directory"),
            ("--count", "count", int, 21, "number of frames"),
            ("--height", "height", int, 360, "frame height"),
            ("--width", "width", int, 800, "frame width"),
            ("--layers", "layers", int, 6, "number of layers"),
            ("--curvature", "curvature", float, 8.0, "boundary undulation amplitude (pixels)"),
            ("--looks", "looks", float, 4.0, "speckle looks L (variance 1/L)"),
            ("--seed", "seed", int, 0, "master seed"),
        ],
    ),
    "augment": (
        "upscale and randomly crop images (100x expansion by default)",
        [
            ("--in", "input", str, None, "directory of PNGs or a manifest file"),
            ("--out", "out", str, None, "output directory"),
            ("--crops", "crops", int, 100, "crops per source image"),
            ("--size", "size", int, 256, "square crop size"),
            ("--scale", "scale", float, 1.5, "bilinear upscale factor (> 1)"),
            ("--seed", "seed", int, 0, "crop-position and split seed"),
            ("--train-fraction", "train_fraction", float, 0.0,
             "if > 0, also split into train/ and test/ with this fraction"),
        ],
    ),
    "train": (
        "train a model on unpaired noisy/clean crops",
        [
            ("--noisy", "noisy", str, None, "noisy-domain images (directory or manifest)"),
            ("--clean", "clean", str, None, "clean-domain images (directory or manifest)"),
            ("--out", "out", str, "runs", "run root; the run goes to <variant>-seed<seed>/"),
        ] + _TRAIN_OPTIONS,
    ),
    "denoise": (
        "denoise images with a trained checkpoint",
        [
            ("--checkpoint", "checkpoint", str, None, "run directory"),
            ("--in", "input", str, None, "image, directory of PNGs, or manifest"),
            ("--out", "out", str, None, "output directory"),
            ("--dump-intermediates", "dump_intermediates", _bool, False,
             "also write clean1 and noise1"),
            ("--tile", "tile", int, 256, "tile size for full-frame inference"),
            ("--overlap", "overlap", int, 32, "tile overlap"),
        ],
    ),
    "evaluate": (
        "score a checkpoint: SSIM/PSNR against references, SNR/ENL on a background region",
        [
            ("--checkpoint", "checkpoint", str, None, "run directory"),
            ("--noisy", "noisy", str, None, "test inputs"),
            ("--clean", "clean", str, None, "matching clean references (same order)"),
            ("--region", "region", str, None, "background region rows_start:rows_end:cols_start:cols_end"),
            ("--out", "out", str, "metrics.csv", "CSV path; figures go beside it"),
        ],
    ),
    "ablate": (
        "train and score several variants over several seeds",
        [
            ("--noisy", "noisy", str, None, "noisy training images"),
            ("--clean", "clean", str, None, "clean training images"),
            ("--test-noisy", "test_noisy", str, None, "noisy test images"),
            ("--test-clean", "test_clean", str, None, "clean test references"),
            ("--region", "region", str, None, "background region for SNR/ENL"),
            ("--variants", "variants", _str_list, list(training.VARIANTS), "comma-separated variants"),
            ("--seeds", "seeds", _int_list, [0, 1, 2], "comma-separated seeds"),
            ("--out", "out", str, "ablation", "output directory"),
        ] + [o for o in _TRAIN_OPTIONS if o[1] not in ("variant", "seed")],
    ),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="dualcyclewgan", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (help_text, options) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", dest="config", default=argparse.SUPPRESS,
                       help="key=value file with option values (keys are the option names below)")
        for flag, dest, typ, default, text in options:
            suffix = " (required)" if default is None and dest not in ("learning_rate",) else \
                f" (default: {_render(default)})"
            p.add_argument(flag, dest=dest, type=typ, default=argparse.SUPPRESS, help=text + suffix)
    return parser


def resolve_options(command: str, explicit: dict) -> dict:
    """Merge defaults, the optional config file and explicit flags."""
    options = _COMMANDS[command][1]
    types = {dest: typ for _, dest, typ, _, _ in options}
    resolved = {dest: default for _, dest, _, default, _ in options}
    config_path = explicit.pop("config", None)
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            values = training.parse_key_values(path.read_text())
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from exc
        unknown = sorted(set(values) - set(types))
        if unknown:
            raise UsageError(f"{path}: unknown config keys: {', '.join(unknown)}")
        for key, raw in values.items():
            try:
                resolved[key] = types[key](raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}: bad value for {key}: {raw!r}") from exc
    resolved.update(explicit)
    missing = [d for _, d, _, default, _ in options
               if default is None and d != "learning_rate" and resolved.get(d) is None]
    if missing:
        raise UsageError(f"{command}: missing required option(s): "
                         + ", ".join("--" + m.replace("_", "-") for m in missing))
    return resolved


def format_options(resolved: dict) -> str:
    return "".join(f"{k}={_render(v)}\n" for k, v in resolved.items())


def _train_config(opts: dict, **overrides) -> training.TrainConfig:
    names = {f.name for f in fields(training.TrainConfig)}
    kwargs = {k: v for k, v in opts.items() if k in names}
    kwargs.update(overrides)
    if "branch_depths" in kwargs:
        kwargs["branch_depths"] = tuple(kwargs["branch_depths"])
    return training.TrainConfig(**kwargs)


def _load_all(source: str) -> tuple[list[Path], list[np.ndarray]]:
    paths = imaging.list_images(source)
    if not paths:
        raise FileNotFoundError(f"no images found in {source}")
    return paths, [imaging.load_image(p) for p in paths]


# commands ----------------------------------------------------------------

def cmd_phantom(o: dict) -> None:
    out = Path(o["out"])
    spec = synthetic.PhantomSpec(height=o["height"], width=o["width"], num_layers=o["layers"],
                                 curvature=o["curvature"])
    clean, noisy = synthetic.make_pairs(o["count"], spec, o["looks"], o["seed"])
    clean_paths, noisy_paths = [], []
    for i, (c, n) in enumerate(zip(clean, noisy)):
        clean_paths.append(out / "clean" / f"{i:04d}.png")
        noisy_paths.append(out / "noisy" / f"{i:04d}.png")
        imaging.save_image(c, clean_paths[-1])
        imaging.save_image(n, noisy_paths[-1])
    imaging.write_manifest(clean_paths, out / "clean.txt", "clean phantoms (pairs by line with noisy.txt)")
    imaging.write_manifest(noisy_paths, out / "noisy.txt", "speckled phantoms (pairs by line with clean.txt)")
    rows = synthetic.background_rows(o["height"])
    print(f"wrote {len(clean)} phantom pairs to {out}; homogeneous background region 0:{rows}:0:{o['width']}")


def cmd_augment(o: dict) -> None:
    paths, images = _load_all(o["input"])
    plan = imaging.CropPlan(scale_factor=o["scale"], crop_size=o["size"],
                            crops_per_image=o["crops"], seed=o["seed"])
    crops = imaging.expand_dataset(images, plan)
    names = [f"{p.stem}_{k:03d}.png" for p in paths for k in range(o["crops"])]
    out = Path(o["out"])
    items = list(zip(names, crops))
    if o["train_fraction"] > 0:
        train, test = imaging.split_dataset(items, o["train_fraction"], o["seed"])
        groups = {"train": train, "test": test}
    else:
        groups = {"": items}
    for group, entries in groups.items():
        target = out / group if group else out
        written = []
        for name, crop in entries:
            imaging.save_image(crop, target / name)
            written.append(target / name)
        imaging.write_manifest(written, target / "manifest.txt", f"{len(written)} crops")
    counts = ", ".join(f"{g or 'all'}={len(e)}" for g, e in groups.items())
    print(f"{len(paths)} images -> {len(crops)} crops of {o['size']}x{o['size']} ({counts})")


def cmd_train(o: dict) -> None:
    cfg = _train_config(o)
    _, noisy = _load_all(o["noisy"])
    _, clean = _load_all(o["clean"])
    run_dir = Path(o["out"]) / f"{cfg.variant}-seed{cfg.seed}"
    ckpt = training.train(cfg, noisy, clean, log_path=run_dir / "train_log.csv")
    training.save_checkpoint(ckpt, run_dir)
    (run_dir / "options.txt").write_text(format_options(o))
    plotting.plot_training_curves(ckpt.history, run_dir / "training_curves.png")
    print(f"checkpoint written to {run_dir} after {ckpt.epoch} epochs, {len(ckpt.history)} iterations")


def cmd_denoise(o: dict) -> None:
    ckpt = training.load_checkpoint(o["checkpoint"])
    source = Path(o["input"])
    paths = [source] if source.is_file() and source.suffix.lower() == ".png" else imaging.list_images(source)
    if not paths:
        raise FileNotFoundError(f"no images found in {source}")
    out = Path(o["out"])
    k = 2 ** ckpt.model.max_depth
    for p in paths:
        img = imaging.load_image(p)
        if o["dump_intermediates"]:
            if img.shape[0] % k or img.shape[1] % k:
                raise ValueError(f"{p}: intermediates need dims divisible by {k}")
            stages = denoise(ckpt.model, img)
            imaging.save_image(np.clip(stages.clean1, 0, 1), out / f"{p.stem}_clean1.png")
            imaging.save_image(np.clip(stages.noise1, 0, 1), out / f"{p.stem}_noise1.png")
            result = stages.clean2
        else:
            result = denoise_fullframe(ckpt.model, img, o["tile"], o["overlap"])
        imaging.save_image(np.clip(result, 0, 1), out / f"{p.stem}.png")
    print(f"denoised {len(paths)} image(s) into {out}")


def cmd_evaluate(o: dict) -> None:
    region = imaging.RegionSpec.parse(o["region"])
    ckpt = training.load_checkpoint(o["checkpoint"])
    noisy_paths, noisy = _load_all(o["noisy"])
    _, clean = _load_all(o["clean"])
    if len(noisy) != len(clean):
        raise ValueError(f"{len(noisy)} test inputs but {len(clean)} references")
    outputs = training.denoise_all(ckpt.model, noisy)
    reports = training.score_images(outputs, clean, region)
    mean = training.mean_report(reports)
    csv_path = Path(o["out"])
    training.write_metrics_csv(csv_path, [p.stem for p in noisy_paths], reports, mean)
    stem = csv_path.with_suffix("")
    plotting.plot_metric_distributions(reports, f"{stem}_distributions.png")
    first = noisy[0]
    k = 2 ** ckpt.model.max_depth
    if first.shape[0] % k == 0 and first.shape[1] % k == 0:
        st = denoise(ckpt.model, first)
        plotting.plot_stage_panel(first, st.clean1, st.noise1, st.clean2, clean[0], f"{stem}_stages.png")
    print(f"mean over {len(reports)} images: ssim={mean.ssim:.4f} psnr={mean.psnr:.3f} dB "
          f"snr={mean.snr:.3f} dB enl={mean.enl:.3f} -> {csv_path}")


def cmd_ablate(o: dict) -> None:
    region = imaging.RegionSpec.parse(o["region"])
    base = _train_config(o)
    _, train_noisy = _load_all(o["noisy"])
    _, train_clean = _load_all(o["clean"])
    _, test_noisy = _load_all(o["test_noisy"])
    _, test_clean = _load_all(o["test_clean"])
    unknown = [v for v in o["variants"] if v not in training.VARIANTS]
    if unknown:
        raise ValueError(f"unknown variants: {', '.join(unknown)}")
    out = Path(o["out"])
    rows = training.run_ablation(base, o["variants"], o["seeds"], train_noisy, train_clean,
                                 test_noisy, test_clean, region, out)
    baseline = training.mean_report(training.score_images(test_noisy, test_clean, region))
    plotting.plot_metric_bars({r.variant: r.mean for r in rows}, out / "ablation.png", baseline)
    for r in rows:
        m = r.mean
        print(f"{r.variant:>18s}  ssim={m.ssim:.4f} psnr={m.psnr:.3f} snr={m.snr:.3f} enl={m.enl:.3f}")
    print(f"{'noisy input':>18s}  ssim={baseline.ssim:.4f} psnr={baseline.psnr:.3f}")


_HANDLERS = {
    "phantom": cmd_phantom,
    "augment": cmd_augment,
    "train": cmd_train,
    "denoise": cmd_denoise,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv:
            parser.print_help(sys.stderr)
            raise UsageError("no command given")
        args = vars(parser.parse_args(argv))
        verbose = args.pop("verbose", False)
        command = args.pop("command")
        if command is None:
            parser.print_help(sys.stderr)
            raise UsageError("no command given")
        resolved = resolve_options(command, args)
        if command in ("train", "ablate"):
            try:
                _train_config(resolved, **({"variant": "cyclegan"} if command == "ablate" else {}))
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    print(f"# {command}: resolved options")
    print(format_options(resolved), end="", flush=True)
    try:
        _HANDLERS[command](resolved)
    except Exception as exc:  # noqa: BLE001 - reported and mapped to exit code 2
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
