"""Command-line entry point: ``lesionlens <subcommand> ...``.

Exit codes: 0 success, 2 unreadable or malformed input, 3 the analysis
itself degenerated (constant image, empty mask).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .abcde import RiskThresholds, analyze_abcde
from .attention import (
    AttentionMap,
    ConvDump,
    attention_map,
    border_alignment,
    gradcampp,
    lesion_alignment,
)
from .errors import AnalysisError, FormatError, InputError, LesionLensError
from .fastcav import CavConfig, LinearHead, load_cav, save_cav, tcav_score, train_cav
from .imgio import load_image, load_tensor, write_image
from .pipeline import (
    DEFAULT_SEED,
    ISIC_LABELS,
    AnalysisConfig,
    StageError,
    analyze,
    derive_seed,
    dumps_report,
    stage,
)
from .render import render_overlay
from .segmentation import LesionMask, segment_lesion
from .uncertainty import McSampleMatrix, decompose, reference_sampler

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
IMAGE_SUFFIXES = (".pgm", ".ppm")

log = logging.getLogger("lesionlens")


def _default_seed() -> int:
    env = os.environ.get("LESIONLENS_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        log.warning("ignoring non-integer LESIONLENS_SEED=%r", env)
        return DEFAULT_SEED


def _seed(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be >= 0")
    return value


def _unit(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("value must lie in [0, 1]")
    return value


def _emit(payload: dict, out: str | None) -> None:
    text = dumps_report(payload)
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise StageError("output", InputError(f"cannot write {out}: {exc}")) from exc
    else:
        sys.stdout.write(text)


def _add_seed(p):
    p.add_argument("--seed", type=_seed, default=None, help="master seed (default $LESIONLENS_SEED or 42)")


def _add_segmentation(p):
    p.add_argument("--lesion-polarity", choices=("dark", "light"), default="dark")
    p.add_argument("--morph-radius", type=int, default=3)


def _add_abcde(p):
    p.add_argument("--asymmetry-aggregate", choices=("mean", "max"), default="mean")
    p.add_argument("--color-space", choices=("rgb", "lab"), default="rgb")
    p.add_argument("--asymmetry-threshold", type=float, default=0.3)
    p.add_argument("--border-threshold", type=float, default=0.4)
    p.add_argument("--colors-threshold", type=int, default=3)
    p.add_argument("--diameter-threshold", type=float, default=114.0)


def _add_uncertainty(p):
    p.add_argument("--threshold", type=_unit, default=0.5, help="predictive uncertainty flag threshold")
    p.add_argument("--epistemic-aggregate", choices=("mean", "sum"), default="mean")


def _config(args) -> AnalysisConfig:
    labels = tuple(args.labels.split(",")) if getattr(args, "labels", None) else ISIC_LABELS
    return AnalysisConfig(
        seed=args.seed,
        lesion_is_dark=getattr(args, "lesion_polarity", "dark") == "dark",
        morph_radius=getattr(args, "morph_radius", 3),
        asymmetry_aggregate=getattr(args, "asymmetry_aggregate", "mean"),
        color_space=getattr(args, "color_space", "rgb"),
        thresholds=RiskThresholds(
            getattr(args, "asymmetry_threshold", 0.3),
            getattr(args, "border_threshold", 0.4),
            getattr(args, "colors_threshold", 3),
            getattr(args, "diameter_threshold", 114.0),
        ),
        border_dilation=getattr(args, "border_dilation", 5),
        uncertainty_threshold=getattr(args, "threshold", 0.5),
        epistemic_aggregate=getattr(args, "epistemic_aggregate", "mean"),
        sensitivity_mode=getattr(args, "sensitivity_mode", "probability"),
        labels=labels,
    )


def _load_conv(args) -> ConvDump | None:
    if args.activations is None and args.gradients is None:
        return None
    if args.activations is None or args.gradients is None:
        raise StageError("attention", FormatError("--activations and --gradients go together"))
    with stage("attention"):
        return ConvDump.from_tensors(load_tensor(args.activations), load_tensor(args.gradients), args.class_index)


def _load_mask(path: str) -> LesionMask:
    img = load_image(path)
    if img.channels != 1:
        raise FormatError(f"mask {path} must be a PGM")
    return LesionMask.from_bits(img.to_array() > 127)


def _write_overlays(directory: str, img, mask, heatmap) -> None:
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StageError("output", InputError(f"cannot create {out}: {exc}")) from exc
    with stage("output"):
        write_image(mask.to_image(), out / "mask.pgm")
        if heatmap is not None:
            write_image(heatmap.to_image(), out / "heatmap.pgm")
            write_image(render_overlay(img, heatmap, mask), out / "overlay.ppm")


def cmd_analyze(args) -> int:
    config = _config(args)
    if args.image_dir:
        return _analyze_batch(args, config)
    with stage("image"):
        img = load_image(args.image)
    conv = _load_conv(args)
    mc = None
    if args.mc_samples:
        with stage("uncertainty"):
            mc = McSampleMatrix(load_tensor(args.mc_samples).data)
    features = head = None
    cavs = []
    if args.features or args.head or args.cav:
        if not (args.features and args.head and args.cav):
            raise StageError("concepts", FormatError("--features, --head and --cav go together"))
        with stage("concepts"):
            features = load_tensor(args.features).data
            head = LinearHead.from_tensor(load_tensor(args.head))
            cavs = [load_cav(p) for p in args.cav]
    report, artifacts = analyze(
        img,
        config,
        image_path=args.image,
        conv=conv,
        mc_samples=mc,
        features=features,
        head=head,
        cavs=cavs,
        concept_class=args.concept_class,
    )
    report["config"]["concept_class_index"] = args.concept_class
    _emit(report, args.out)
    if args.overlay_dir:
        _write_overlays(args.overlay_dir, img, artifacts["mask"], artifacts["heatmap"])
    return EXIT_OK


def _analyze_batch(args, config) -> int:
    if not args.out:
        raise StageError("output", InputError("--image-dir needs --out DIRECTORY"))
    if args.activations or args.mc_samples or args.features:
        raise StageError("input", InputError("batch mode analyzes images only"))
    paths = sorted(p for p in Path(args.image_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    worst = EXIT_OK
    for path in paths:
        try:
            with stage("image"):
                img = load_image(path)
            report, artifacts = analyze(img, config, image_path=str(path))
            report["config"]["concept_class_index"] = None
            (out / f"{path.stem}.json").write_text(dumps_report(report))
            if args.overlay_dir:
                _write_overlays(str(Path(args.overlay_dir) / path.stem), img, artifacts["mask"], None)
        except StageError as exc:
            print(f"lesionlens: {path.name}: error in {exc.stage}: {exc.error}", file=sys.stderr)
            worst = max(worst, _exit_code(exc.error))
    return worst


def cmd_abcde(args) -> int:
    config = _config(args)
    seeds = config.seeds()
    with stage("image"):
        img = load_image(args.image)
    with stage("segmentation"):
        mask = segment_lesion(img, config.lesion_is_dark, config.morph_radius)
    with stage("abcde"):
        report = analyze_abcde(
            img,
            mask,
            seed=seeds["kmeans"],
            welzl_seed=seeds["welzl"],
            asymmetry_aggregate=config.asymmetry_aggregate,
            color_space=config.color_space,
            thresholds=config.thresholds,
        )
    if args.mask_out:
        with stage("output"):
            write_image(mask.to_image(), args.mask_out)
    _emit({"image_path": args.image, "lesion": {"area": mask.area, "centroid": list(mask.centroid)},
           "abcde": report.to_dict(), "config": config.to_dict()}, args.out)
    return EXIT_OK


def cmd_gradcam(args) -> int:
    conv = _load_conv(args)
    if conv is None:
        raise StageError("attention", FormatError("--activations and --gradients are required"))
    img = None
    if args.image:
        with stage("image"):
            img = load_image(args.image)
        width, height = img.width, img.height
    else:
        width = args.width or conv.activations.shape[2]
        height = args.height or conv.activations.shape[1]
    with stage("attention"):
        raw = gradcampp(conv)
        heat = attention_map(conv, width, height)
    peak = np.unravel_index(int(np.argmax(heat.values)), heat.values.shape)
    with stage("output"):
        if args.heatmap_out:
            write_image(heat.to_image(), args.heatmap_out)
        if args.overlay_out:
            if img is None:
                raise FormatError("--overlay-out needs --image")
            write_image(render_overlay(img, heat), args.overlay_out)
    _emit({"class_index": conv.class_index, "feature_shape": list(conv.activations.shape),
           "width": width, "height": height, "raw_max": float(raw.max()),
           "peak": [int(peak[0]), int(peak[1])]}, args.out)
    return EXIT_OK


def cmd_align(args) -> int:
    if args.mask:
        with stage("mask"):
            mask = _load_mask(args.mask)
    elif args.image:
        with stage("image"):
            img = load_image(args.image)
        with stage("segmentation"):
            mask = segment_lesion(img, args.lesion_polarity == "dark", args.morph_radius)
    else:
        raise StageError("mask", FormatError("give --mask or --image"))
    if args.heatmap:
        with stage("attention"):
            heat = AttentionMap.from_image(load_image(args.heatmap))
    else:
        conv = _load_conv(args)
        if conv is None:
            raise StageError("attention", FormatError("give --heatmap or --activations/--gradients"))
        with stage("attention"):
            heat = attention_map(conv, mask.width, mask.height)
    with stage("alignment"):
        result = {
            "lesion": lesion_alignment(heat, mask),
            "border": border_alignment(heat, mask, args.border_dilation),
            "border_dilation": args.border_dilation,
        }
    _emit(result, args.out)
    return EXIT_OK


def cmd_cav_train(args) -> int:
    cfg = CavConfig(lr=args.lr, epochs=args.epochs, l2=args.l2, seed=derive_seed(args.seed, "sgd"))
    with stage("concepts"):
        pos = load_tensor(args.positives).data
        neg = load_tensor(args.negatives).data
        cav = train_cav(pos, neg, cfg, concept_name=args.name)
    payload = cav.sidecar()
    if args.save:
        with stage("output"):
            vec_path, meta_path = save_cav(cav, args.save)
        payload = {**payload, "vector_file": str(vec_path), "sidecar_file": str(meta_path)}
    payload["config"] = {"lr": cfg.lr, "epochs": cfg.epochs, "l2": cfg.l2, "master_seed": args.seed}
    _emit(payload, args.out)
    return EXIT_OK


def cmd_cav_score(args) -> int:
    with stage("concepts"):
        feats = np.atleast_2d(load_tensor(args.features).data.astype(np.float64))
        head = LinearHead.from_tensor(load_tensor(args.head))
        cavs = [load_cav(p) for p in args.cav]
        scores = [tcav_score(feats, head, args.class_index, c, args.sensitivity_mode).to_dict() for c in cavs]
    _emit({"class_index": args.class_index, "sensitivity_mode": args.sensitivity_mode, "concepts": scores}, args.out)
    return EXIT_OK


def cmd_uncertainty(args) -> int:
    with stage("uncertainty"):
        if args.mc_samples:
            m = McSampleMatrix(load_tensor(args.mc_samples).data)
        elif args.reference_input:
            x = load_tensor(args.reference_input).data
            m = reference_sampler(x, args.passes, derive_seed(args.seed, "dropout"), args.dropout)
        else:
            raise FormatError("give --mc-samples or --reference-input")
        report = decompose(m, args.threshold, args.epistemic_aggregate)
    _emit(report.to_dict(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lesionlens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full explanation report for one image")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image")
    src.add_argument("--image-dir", help="analyze every PGM/PPM in a directory (images only)")
    p.add_argument("--activations")
    p.add_argument("--gradients")
    p.add_argument("--class-index", type=int, default=0, help="class the gradient dump was taken for")
    p.add_argument("--mc-samples", help="MNT1 [T, C] softmax samples")
    p.add_argument("--features", help="MNT1 [n, F] or [F] feature vectors")
    p.add_argument("--head", help="MNT1 [C, F+1] linear head, bias in last column")
    p.add_argument("--cav", nargs="+", help="concept vectors (.mnt or sidecar .json)")
    p.add_argument("--concept-class", type=int, default=None, help="class for concept scores (default: prediction)")
    p.add_argument("--sensitivity-mode", choices=("probability", "logit"), default="probability")
    p.add_argument("--border-dilation", type=int, default=5)
    p.add_argument("--labels", help="comma-separated class names")
    p.add_argument("--out")
    p.add_argument("--overlay-dir")
    _add_seed(p)
    _add_segmentation(p)
    _add_abcde(p)
    _add_uncertainty(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("abcde", help="segmentation and ABCD scores only")
    p.add_argument("--image", required=True)
    p.add_argument("--mask-out")
    p.add_argument("--out")
    _add_seed(p)
    _add_segmentation(p)
    _add_abcde(p)
    p.set_defaults(func=cmd_abcde)

    p = sub.add_parser("gradcam", help="GradCAM++ heatmap from tensor dumps")
    p.add_argument("--activations", required=True)
    p.add_argument("--gradients", required=True)
    p.add_argument("--class-index", type=int, default=0)
    p.add_argument("--image", help="source image; sets the output size and enables --overlay-out")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--heatmap-out")
    p.add_argument("--overlay-out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcam)

    p = sub.add_parser("align", help="attention alignment with lesion and border")
    p.add_argument("--mask", help="PGM lesion mask (255 = lesion)")
    p.add_argument("--image", help="segment this image instead of --mask")
    p.add_argument("--heatmap", help="PGM attention map")
    p.add_argument("--activations")
    p.add_argument("--gradients")
    p.add_argument("--class-index", type=int, default=0)
    p.add_argument("--border-dilation", type=int, default=5)
    p.add_argument("--out")
    _add_segmentation(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("cav-train", help="train a concept activation vector")
    p.add_argument("--positives", required=True)
    p.add_argument("--negatives", required=True)
    p.add_argument("--name", default="concept")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--save", help="path prefix for <prefix>.mnt and <prefix>.json")
    p.add_argument("--out")
    _add_seed(p)
    p.set_defaults(func=cmd_cav_train)

    p = sub.add_parser("cav-score", help="concept scores for a batch of features")
    p.add_argument("--features", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--cav", nargs="+", required=True)
    p.add_argument("--class-index", type=int, required=True)
    p.add_argument("--sensitivity-mode", choices=("probability", "logit"), default="probability")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cav_score)

    p = sub.add_parser("uncertainty", help="uncertainty decomposition of MC-Dropout samples")
    p.add_argument("--mc-samples")
    p.add_argument("--reference-input", help="feature vector for the built-in reference sampler")
    p.add_argument("--passes", type=int, default=10)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--out")
    _add_seed(p)
    _add_uncertainty(p)
    p.set_defaults(func=cmd_uncertainty)
    return parser


def _exit_code(err: LesionLensError) -> int:
    return EXIT_DEGENERATE if isinstance(err, AnalysisError) else EXIT_INPUT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if hasattr(args, "seed") and args.seed is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except StageError as exc:
        print(f"lesionlens: error in {exc.stage}: {exc.error}", file=sys.stderr)
        return _exit_code(exc.error)
    except LesionLensError as exc:
        print(f"lesionlens: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except ValueError as exc:
        print(f"lesionlens: invalid argument: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
