"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 input/output or format error.
"""

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path

from vepipe.backend import BUILTIN_MODELS, parse_manifest, read_manifest
from vepipe.colorproc import ColorSpace, PixelFormat, Range
from vepipe.errors import ConfigError, FormatError, VepipeError
from vepipe.model_desc import NetworkDescriptor, NetworkFlags, validate_descriptor
from vepipe.pipeline import PipelineConfig, run_pipeline

log = logging.getLogger("vepipe")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _fraction(text):
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _threshold(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must be in (0, 1], got {value}")
    return value


def build_parser():
    p = argparse.ArgumentParser(
        prog="vepipe",
        description="Enhance a Y4M video with a frame-group network.")
    p.add_argument("--in", dest="input", required=True, metavar="PATH",
                   help="input Y4M file, or - for standard input")
    p.add_argument("--out", dest="output", required=True, metavar="PATH",
                   help="output Y4M file, or - for standard output")
    p.add_argument("--model", default="identity", metavar="DIR|identity|blend",
                   help="model directory containing model.json, or a built-in model")
    p.add_argument("--n", type=int, default=None, help="frames consumed per inference run")
    p.add_argument("--batch", type=int, default=None, help="runs per batch")
    p.add_argument("--scale-x", type=_fraction, default=None)
    p.add_argument("--scale-y", type=_fraction, default=None)
    p.add_argument("--interpolation", action="store_true", default=None)
    p.add_argument("--extra-frame", action="store_true", default=None)
    p.add_argument("--double-frame", action="store_true", default=None)
    p.add_argument("--colorspace", choices=["bt601", "bt709", "bt2020", "auto"], default="auto")
    p.add_argument("--range", choices=["limited", "full"], default=None,
                   help="override the input's quantization range")
    p.add_argument("--pixel-format", choices=["yuv420", "yuv444", "rgb"], default=None,
                   help="pixel format the network consumes (default: container's)")
    scenes = p.add_mutually_exclusive_group()
    scenes.add_argument("--scene-list", metavar="PATH",
                        help="file with one scene start frame index per line")
    scenes.add_argument("--scene-detect-threshold", type=_threshold, metavar="T",
                        help="normalized mean luma difference that starts a scene (default 0.15)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _cli_network(args):
    return {
        "n": args.n,
        "batch": args.batch,
        "scale_x": args.scale_x,
        "scale_y": args.scale_y,
        "interpolation": args.interpolation,
        "extra_frame": args.extra_frame,
        "double_frame": args.double_frame,
        "pixel_format": PixelFormat(args.pixel_format) if args.pixel_format else None,
    }


def _merge_manifest(model_dir, given):
    """Manifest descriptor with CLI values filled in; disagreements are errors."""
    raw = read_manifest(model_dir)
    d = parse_manifest(raw).network
    manifest_values = {
        "n": d.n, "scale_x": d.scale_x, "scale_y": d.scale_y,
        "interpolation": d.flags.interpolation, "extra_frame": d.flags.extra_frame,
        "double_frame": d.flags.double_frame, "pixel_format": d.pixel_format,
    }
    if "batch" in raw:
        manifest_values["batch"] = d.batch
    for key, value in given.items():
        if value is None or key not in manifest_values:
            continue
        if value != manifest_values[key]:
            raise ConfigError(
                f"--{key.replace('_', '-')} {value} conflicts with manifest value "
                f"{manifest_values[key]}")
    batch = given["batch"] if given["batch"] is not None else d.batch
    return NetworkDescriptor(
        n=d.n, flags=d.flags, scale_x=d.scale_x, scale_y=d.scale_y, batch=batch,
        pixel_format=d.pixel_format, colorspaces=d.colorspaces,
        pyramid_levels=d.pyramid_levels)


def _builtin_network(given):
    flags = NetworkFlags(bool(given["interpolation"]), bool(given["extra_frame"]),
                         bool(given["double_frame"]))
    d = NetworkDescriptor(
        n=given["n"] if given["n"] is not None else 1,
        flags=flags,
        scale_x=given["scale_x"] or 1,
        scale_y=given["scale_y"] or 1,
        batch=given["batch"] if given["batch"] is not None else 1,
        pixel_format=given["pixel_format"],
    )
    validate_descriptor(d)
    return d


def build_config(args):
    given = _cli_network(args)
    model = args.model
    if model in BUILTIN_MODELS and not Path(model).is_dir():
        network = _builtin_network(given)
    else:
        network = _merge_manifest(model, given)
    cs = None if args.colorspace == "auto" else ColorSpace(args.colorspace)
    return PipelineConfig(
        input=args.input,
        output=args.output,
        network=network,
        model=model,
        scene_list=args.scene_list,
        scene_threshold=args.scene_detect_threshold,
        colorspace=cs,
        range=Range(args.range) if args.range else None,
    )


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="vepipe: %(message)s")
    try:
        cfg = build_config(args)
        stats = run_pipeline(cfg)
    except ConfigError as e:
        print(f"vepipe: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as e:
        print(f"vepipe: {e}", file=sys.stderr)
        return EXIT_IO
    except VepipeError as e:
        print(f"vepipe: {e}", file=sys.stderr)
        return EXIT_IO
    log.info("%d frames in, %d frames out", stats.frames_in, stats.frames_out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
