"""Command-line front end.

Exit status: 0 success, 1 usage/config error, 2 I/O error, 3 data/schema error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .describe import StackError, dumps_stack, load_stack, reconstruct, register_regions
from .kb import DEFAULT_CONTEXT_THRESHOLD, DEFAULT_MATCH_THRESHOLD, KBError, annotate, load_kb
from .pyramid import DEFAULT_TOP_TARGET, build_pyramid
from .raster import (
    GrayImage,
    MalformedHeaderError,
    RasterError,
    UnsupportedDepthError,
    _write_bytes,
    encode_labels,
    encode_pgm,
    load_image,
    load_labels,
    render_labels,
    synth_scene,
)
from .refine import RefineConfig, segment_image
from .segment import DEFAULT_TOL, LabelMap

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA = 0, 1, 2, 3

FIXTURES = {
    # name: (width, height, background, rects)
    "three-rect": (128, 128, 40, [((8, 8, 40, 40), 200), ((72, 16, 40, 32), 120), ((24, 80, 80, 32), 250)]),
    "landscape": (128, 128, 20, [((0, 0, 128, 60), 200), ((0, 68, 128, 60), 90), ((90, 15, 6, 6), 255)]),
}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    tol: float = DEFAULT_TOL
    top_target: int = DEFAULT_TOP_TARGET
    max_sweeps: int = 10
    min_seed_size: int = 1
    merge: bool = True
    polish: bool = True
    match_threshold: float = DEFAULT_MATCH_THRESHOLD
    context_threshold: float = DEFAULT_CONTEXT_THRESHOLD

    def __post_init__(self):
        if self.top_target < 1:
            raise ValueError("top_target must be >= 1")
        for name in ("match_threshold", "context_threshold"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        self.refine  # validates the refinement knobs

    @property
    def refine(self) -> RefineConfig:
        return RefineConfig(self.tol, self.max_sweeps, self.min_seed_size, self.merge, self.polish)

    def echo(self) -> dict:
        return asdict(self)


_KNOBS = {f.name: f.type for f in fields(RunConfig)}


def resolve_config(args) -> RunConfig:
    """Flag > config file > default."""
    values = {}
    if getattr(args, "config", None):
        try:
            doc = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise UsageError(f"{args.config}: {exc.strerror or exc}") from None
        except yaml.YAMLError as exc:
            raise UsageError(f"{args.config}: invalid YAML: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError(f"{args.config}: config must be a mapping")
        for key, value in doc.items():
            name = str(key).replace("-", "_")
            if name not in _KNOBS:
                raise UsageError(f"{args.config}: unknown config key {key!r}")
            values[name] = value
    for name in _KNOBS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    try:
        for name, value in values.items():
            kind = _KNOBS[name]
            if kind in ("bool", bool):
                if not isinstance(value, bool):
                    raise ValueError(f"{name} must be true or false")
            elif kind in ("int", int):
                if isinstance(value, bool) or int(value) != value:
                    raise ValueError(f"{name} must be an integer")
                values[name] = int(value)
            else:
                values[name] = float(value)
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RasterError(f"{out}: {exc.strerror or exc}") from exc
    return out


def _run(img: GrayImage, cfg: RunConfig):
    pyramid = build_pyramid(img, cfg.top_target)
    results = segment_image(img, cfg.refine, cfg.top_target, pyramid=pyramid)
    return pyramid, results


def _write_label_maps(out: Path, results) -> None:
    for r in results:
        _write_bytes(out / f"level_{r.level}.labels", encode_labels(r.labels.labels).encode("ascii"))
        _write_bytes(out / f"level_{r.level}.pgm", encode_pgm(render_labels(r.labels.labels)))


def cmd_segment(args) -> int:
    cfg = resolve_config(args)
    img = load_image(args.image)
    out = _out_dir(args)
    _, results = _run(img, cfg)
    _write_label_maps(out, results)
    report = {
        "config": cfg.echo(),
        "levels": [
            {
                "level": r.level,
                "width": r.labels.width,
                "height": r.labels.height,
                "regions": r.labels.region_count,
                "converged": r.converged,
                "deviant_count_history": r.deviant_count_history,
            }
            for r in results
        ],
    }
    _write_bytes(out / "segment_report.json", (json.dumps(report, indent=2, sort_keys=True) + "\n").encode())
    for lv in report["levels"]:
        state = "converged" if lv["converged"] else "NOT converged"
        print(f"level {lv['level']}: {lv['width']}x{lv['height']} regions={lv['regions']} {state}")
    return EXIT_OK


def cmd_describe(args) -> int:
    cfg = resolve_config(args)
    img = load_image(args.image)
    out = _out_dir(args)
    pyramid, results = _run(img, cfg)
    stack = register_regions(results, pyramid, cfg.echo())
    _write_label_maps(out, results)
    _write_bytes(out / "stack.json", dumps_stack(stack).encode("utf-8"))
    print(f"wrote {out / 'stack.json'} ({len(stack.levels)} levels, {len(stack.base.regions)} level-0 regions)")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    stack = load_stack(args.stack)
    labels_dir = Path(args.labels_dir) if args.labels_dir else Path(args.stack).parent
    stack.level(args.level)
    labels = load_labels(labels_dir / f"level_{args.level}.labels")
    original = load_image(args.original) if args.original else None
    recon = reconstruct(stack, args.level, {args.level: LabelMap(labels)})
    _write_bytes(args.output, encode_pgm(recon))
    if original is not None:
        top_target = int(stack.config.get("top_target", DEFAULT_TOP_TARGET))
        pyramid = build_pyramid(original, top_target)
        if args.level >= len(pyramid) or (pyramid[args.level].width, pyramid[args.level].height) != (
            recon.width,
            recon.height,
        ):
            raise StackError("original image does not match the stack geometry")
        err = np.abs(pyramid[args.level].pixels - recon.pixels)
        print(f"max_abs_error={err.max():.6f} mean_abs_error={err.mean():.6f}")
    return EXIT_OK


def cmd_annotate(args) -> int:
    cfg = resolve_config(args)
    kb = load_kb(args.kb)
    img = load_image(args.image)
    out = _out_dir(args)
    pyramid, results = _run(img, cfg)
    stack = register_regions(results, pyramid, cfg.echo())
    result = annotate(stack, kb, cfg.match_threshold, cfg.context_threshold)
    lines = ["region\tword\tsimilarity\tscene\tcontext_score"]
    for a in result.annotations:
        if a.word is not None:
            lines.append(f"{a.region}\t{a.word}\t{a.similarity:.6f}\t{a.scene}\t{a.context_score:.6f}")
    text = "\n".join(lines) + "\n"
    _write_bytes(out / "annotations.tsv", text.encode("utf-8"))
    sys.stdout.write(text)
    return EXIT_OK


def _parse_rect(text: str):
    try:
        x, y, w, h, v = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"rect must be x,y,w,h,intensity, got {text!r}") from None
    return ((int(x), int(y), int(w), int(h)), v)


def cmd_synth(args) -> int:
    if args.fixture:
        width, height, background, rects = FIXTURES[args.fixture]
    else:
        width, height, background, rects = args.width, args.height, args.background, args.rect or []
    try:
        img, truth = synth_scene(width, height, rects, background, args.noise, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    _write_bytes(out / f"{args.name}.pgm", encode_pgm(img))
    _write_bytes(out / f"{args.name}.truth.labels", encode_labels(truth).encode("ascii"))
    print(f"wrote {out / (args.name + '.pgm')} ({width}x{height}, {int(truth.max()) + 1} regions)")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_knobs(p: argparse.ArgumentParser, annotate_knobs: bool = False) -> None:
    p.add_argument("--config", help="YAML file with default knob values")
    p.add_argument("--tol", type=float, help=f"intensity tolerance (default {DEFAULT_TOL})")
    p.add_argument("--top-target", dest="top_target", type=int, help="max pixels at the pyramid top (default 100)")
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int, help="refinement sweep cap per level (default 10)")
    p.add_argument("--min-seed-size", dest="min_seed_size", type=int, help="smallest seed group minted (default 1)")
    p.add_argument("--no-merge", dest="merge", action="store_const", const=False, help="disable coherent merging")
    p.add_argument("--no-polish", dest="polish", action="store_const", const=False, help="disable boundary polish")
    if annotate_knobs:
        p.add_argument("--match-threshold", dest="match_threshold", type=float, help="default 0.5")
        p.add_argument("--context-threshold", dest="context_threshold", type=float, help="default 0.5")
    p.add_argument("--out-dir", dest="out_dir", default=".", help="output directory (default: cwd)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pyramidseg", description="Coarse-to-fine segmentation, description and annotation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment", help="segment an image, write per-level label maps")
    p.add_argument("image")
    _add_knobs(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("describe", help="write the description stack of an image")
    p.add_argument("image")
    _add_knobs(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("reconstruct", help="paint a level from its description stack")
    p.add_argument("stack")
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--labels-dir", dest="labels_dir", help="directory of level_<L>.labels (default: stack's dir)")
    p.add_argument("--original", help="original image; prints reconstruction error")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("annotate", help="label level-0 regions with KB words")
    p.add_argument("image")
    p.add_argument("kb")
    _add_knobs(p, annotate_knobs=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("synth", help="write a synthetic rectangle scene and its ground truth")
    p.add_argument("--fixture", choices=sorted(FIXTURES))
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--background", type=float, default=0)
    p.add_argument("--rect", action="append", type=_parse_rect, help="x,y,w,h,intensity (repeatable)")
    p.add_argument("--noise", type=int, default=0, help="uniform noise amplitude")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="scene")
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pyramidseg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MalformedHeaderError, UnsupportedDepthError, KBError, StackError) as exc:
        print(f"pyramidseg: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RasterError, OSError) as exc:
        print(f"pyramidseg: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
