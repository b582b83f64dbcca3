"""Batch command-line front end.

Subcommands: fuse, smooth, pipeline, evaluate, detect-confusion, synth,
convert. The stage commands are driven by a JSON config file (see
load_config) with individual flags as overrides. Inputs are classifier
output rasters (.fmt tensors or supported TIFFs), never raw imagery.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, FmlcError, ValidationError
from .fusion import FusionRule, detect_confusion, run_pipeline_detailed, rules_to_json
from .metrics import confusion, metrics, render_confusion_table, render_report
from .raster import (
    BinaryProbMap,
    LabelMap,
    MultiBandRaster,
    ProbabilityMap,
    as_binary_prob_map,
    as_probability_map,
    normalize_legend,
)
from .smoothing import SmoothingParams
from .synth import SceneSpec, generate_scene
from .tensor_io import MAGIC, read_tensor, write_tensor
from .tiff_io import read_tiff, write_label_tiff

ENV_THREADS = "FMLC_THREADS"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


# ---------------------------------------------------------------------------
# Input loading (format sniffed from leading bytes)
# ---------------------------------------------------------------------------


def _sniff_and_read(path: Path) -> MultiBandRaster | LabelMap:
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    with open(path, "rb") as f:
        head = f.read(8)
    if head[:8] == MAGIC:
        return read_tensor(path)
    if head[:2] in (b"II", b"MM"):
        return read_tiff(path)
    raise ConfigError(f"{path}: neither a .fmt tensor nor a TIFF")


def load_probs(path: Path) -> ProbabilityMap:
    grid = _sniff_and_read(path)
    if isinstance(grid, LabelMap):
        raise ConfigError(f"{path}: holds labels, expected a probability tensor")
    return as_probability_map(grid)


def load_expert(path: Path) -> BinaryProbMap:
    grid = _sniff_and_read(path)
    if isinstance(grid, LabelMap):
        raise ConfigError(f"{path}: holds labels, expected a single-band probability map")
    return as_binary_prob_map(grid)


def load_labels(path: Path) -> LabelMap:
    grid = _sniff_and_read(path)
    if not isinstance(grid, LabelMap):
        raise ConfigError(f"{path}: expected a uint8 label raster")
    return grid


def write_labels(labels: LabelMap, path: Path, fmt: str) -> None:
    if fmt == "tiff":
        write_label_tiff(labels, path)
    elif fmt == "fmt":
        write_tensor(labels, path)
    else:
        raise ConfigError(f"unknown output format {fmt!r}")


def _infer_format(path: Path, explicit: str | None) -> str:
    if explicit:
        return explicit
    suffix = path.suffix.lower()
    if suffix in (".tif", ".tiff"):
        return "tiff"
    if suffix == ".fmt":
        return "fmt"
    raise ConfigError(f"cannot infer output format from {path.name!r}; pass --format")


# ---------------------------------------------------------------------------
# Pipeline config
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    probs: Path
    experts: dict[int, Path]
    rules: list[FusionRule]
    smoothing: SmoothingParams | None
    output: Path
    format: str
    reference: Path | None
    legend: tuple[str, ...] | None


def load_config(path: Path, args: argparse.Namespace) -> PipelineConfig:
    """Parse the JSON config, applying flag overrides where given.

    Keys: probs (path), experts (map class id -> path), rules (list of
    {k, k_prime, tau}), smoothing ({window, alpha, sigma2, variant}, null
    disables, absent means defaults), output, format ("fmt"|"tiff"),
    reference (optional truth labels), legend (optional id -> name map).
    """
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return _assemble_config(path, doc, args)
    except (ValidationError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _assemble_config(path: Path, doc: dict, args: argparse.Namespace) -> PipelineConfig:
    base = path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    try:
        probs = resolve(doc["probs"])
        output = Path(getattr(args, "out", None) or resolve(doc["output"]))
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required key {exc}") from exc

    experts = {int(k): resolve(v) for k, v in doc.get("experts", {}).items()}
    rules = [FusionRule.from_dict(d) for d in doc.get("rules", [])]
    if getattr(args, "tau", None) is not None:
        rules = [FusionRule(r.flagged_class, r.partner_class, args.tau) for r in rules]

    if "smoothing" in doc and doc["smoothing"] is None:
        smoothing = None
    else:
        smoothing = SmoothingParams.from_config(doc.get("smoothing", {}))
    if smoothing is not None:
        smoothing = SmoothingParams(
            window=args.window if getattr(args, "window", None) is not None else smoothing.window,
            top_fraction=args.alpha if getattr(args, "alpha", None) is not None else smoothing.top_fraction,
            obs_variance=args.sigma2 if getattr(args, "sigma2", None) is not None else smoothing.obs_variance,
            variant=args.variant if getattr(args, "variant", None) is not None else smoothing.variant,
        )

    fmt = getattr(args, "format", None) or doc.get("format")
    fmt = _infer_format(output, fmt)
    reference = resolve(doc["reference"]) if doc.get("reference") else None
    legend = normalize_legend(doc["legend"]) if doc.get("legend") else None
    return PipelineConfig(probs, experts, rules, smoothing, output, fmt, reference, legend)


def _resolve_threads(args: argparse.Namespace) -> int:
    if getattr(args, "threads", None) is not None:
        n = args.threads
    else:
        n = int(os.environ.get(ENV_THREADS, "1"))
    if n < 1:
        raise ConfigError(f"thread count must be >= 1, got {n}")
    return n


def _load_stage_inputs(cfg: PipelineConfig) -> tuple[ProbabilityMap, dict[int, BinaryProbMap]]:
    probs = load_probs(cfg.probs)
    experts = {}
    for rule in cfg.rules:
        if rule.flagged_class not in cfg.experts:
            raise ConfigError(f"rules flag class {rule.flagged_class} but no expert path is configured")
    for class_id, expert_path in cfg.experts.items():
        experts[class_id] = load_expert(expert_path)
    return probs, experts


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fuse(args: argparse.Namespace) -> int:
    cfg = load_config(Path(args.config), args)
    threads = _resolve_threads(args)
    probs, experts = _load_stage_inputs(cfg)
    result = run_pipeline_detailed(
        probs, experts, cfg.rules, smoothing=None, legend=cfg.legend, threads=threads
    )
    for i, n in enumerate(result.rule_changes):
        print(f"rule {i + 1}: changed {n} pixels")
    write_labels(result.labels, cfg.output, cfg.format)
    print(f"wrote {cfg.output}")
    return EXIT_OK


def cmd_smooth(args: argparse.Namespace) -> int:
    cfg = load_config(Path(args.config), args)
    threads = _resolve_threads(args)
    smoothing = cfg.smoothing if cfg.smoothing is not None else SmoothingParams()
    probs = load_probs(cfg.probs)
    result = run_pipeline_detailed(
        probs, {}, [], smoothing=smoothing, legend=cfg.legend, threads=threads
    )
    print(f"smoothing: changed {result.smoothing_changes} pixels")
    write_labels(result.labels, cfg.output, cfg.format)
    print(f"wrote {cfg.output}")
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = load_config(Path(args.config), args)
    threads = _resolve_threads(args)
    probs, experts = _load_stage_inputs(cfg)
    result = run_pipeline_detailed(
        probs, experts, cfg.rules, cfg.smoothing, legend=cfg.legend, threads=threads
    )
    for i, n in enumerate(result.rule_changes):
        print(f"rule {i + 1}: changed {n} pixels")
    if cfg.smoothing is not None:
        print(f"smoothing: changed {result.smoothing_changes} pixels")
    write_labels(result.labels, cfg.output, cfg.format)
    print(f"wrote {cfg.output}")
    if cfg.reference is not None:
        truth = load_labels(cfg.reference)
        cm = confusion(result.labels, truth)
        report = metrics(cm)
        print(render_confusion_table(cm, report))
        print(render_report(report))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    pred = load_labels(Path(args.pred))
    truth = load_labels(Path(args.truth))
    cm = confusion(pred, truth, ignore=args.ignore)
    report = metrics(cm)
    print(render_confusion_table(cm, report))
    print(render_report(report))
    if args.json:
        report.to_json(Path(args.json))
        print(f"wrote {args.json}")
    return EXIT_OK


def cmd_detect_confusion(args: argparse.Namespace) -> int:
    pred = load_labels(Path(args.pred))
    truth = load_labels(Path(args.truth))
    cm = confusion(pred, truth)
    rules = detect_confusion(cm, top_n=args.top, threshold=args.tau if args.tau else 0.5)
    sys.stdout.write(rules_to_json(rules))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    pair = tuple(int(v) for v in args.pair.split(","))
    if len(pair) != 2:
        raise ConfigError(f"--pair expects two ids like '1,0', got {args.pair!r}")
    try:
        spec = SceneSpec(
            height=args.height,
            width=args.width,
            classes=args.classes,
            blobs=args.blobs,
            confusion_pair=pair,
            confusion_strength=args.strength,
            noise_rate=args.noise,
            seed=args.seed,
        )
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth, probs, expert = generate_scene(spec)
    write_tensor(truth, out_dir / "truth.fmt")
    write_tensor(probs, out_dir / "coarse_probs.fmt")
    expert_name = f"expert_{spec.confusion_pair[0]}.fmt"
    write_tensor(expert, out_dir / expert_name)
    config = {
        "probs": "coarse_probs.fmt",
        "experts": {str(spec.confusion_pair[0]): expert_name},
        "rules": [FusionRule(spec.confusion_pair[0], spec.confusion_pair[1]).to_dict()],
        "smoothing": {"window": 5, "alpha": 0.6, "sigma2": 1.0, "variant": "standard"},
        "output": "labels.fmt",
        "format": "fmt",
        "reference": "truth.fmt",
        "legend": {str(i): n for i, n in enumerate(truth.legend)},
    }
    (out_dir / "pipeline_config.json").write_text(json.dumps(config, indent=2) + "\n")
    for name in ("truth.fmt", "coarse_probs.fmt", expert_name, "pipeline_config.json"):
        print(f"wrote {out_dir / name}")
    return EXIT_OK


def cmd_convert(args: argparse.Namespace) -> int:
    src, dst = Path(args.src), Path(args.dst)
    grid = _sniff_and_read(src)
    fmt = _infer_format(dst, args.format)
    if isinstance(grid, LabelMap):
        write_labels(grid, dst, fmt)
    elif fmt == "fmt":
        write_tensor(grid, dst)
    else:
        raise ConfigError("float rasters can only be written as .fmt; TIFF output is uint8 labels only")
    print(f"wrote {dst}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_stage_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON pipeline config")
    p.add_argument("--out", help="override the configured output path")
    p.add_argument("--format", choices=("fmt", "tiff"), help="output format override")
    p.add_argument("--tau", type=float, help="override every rule's threshold")
    p.add_argument("--window", type=int, help="smoothing window (odd)")
    p.add_argument("--alpha", type=float, help="top fraction of window values")
    p.add_argument("--sigma2", type=float, help="observation variance")
    p.add_argument("--variant", choices=("standard", "inverted"), help="blend variant")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${ENV_THREADS} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmlc",
        description="Fuse, smooth, and evaluate land-cover segmentation rasters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, doc in (
        ("fuse", cmd_fuse, "argmax plus expert overrides, no smoothing"),
        ("smooth", cmd_smooth, "Bayesian logit smoothing only"),
        ("pipeline", cmd_pipeline, "full pipeline: fuse, smooth, optional evaluation"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_stage_flags(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("evaluate", help="confusion matrix and metric report")
    p.add_argument("pred", help="predicted label raster (.fmt or .tif)")
    p.add_argument("truth", help="reference label raster")
    p.add_argument("--ignore", type=int, help="reference class id to exclude")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("detect-confusion", help="rank confused class pairs as fusion rules")
    p.add_argument("pred", help="predicted label raster from a validation split")
    p.add_argument("truth", help="reference label raster")
    p.add_argument("--top", type=int, default=1, help="number of rules to emit")
    p.add_argument("--tau", type=float, help="threshold stored in emitted rules")
    p.set_defaults(fn=cmd_detect_confusion)

    p = sub.add_parser("synth", help="generate a synthetic scene fixture")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--blobs", type=int, default=12)
    p.add_argument("--pair", default="1,0", help="flagged,partner class ids")
    p.add_argument("--strength", type=float, default=0.5, help="confusion rate on pair pixels")
    p.add_argument("--noise", type=float, default=0.02, help="impulse noise rate")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("convert", help="convert between .fmt and TIFF")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--format", choices=("fmt", "tiff"), help="target format (default: by extension)")
    p.set_defaults(fn=cmd_convert)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"fmlc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FmlcError as exc:
        print(f"fmlc: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"fmlc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"fmlc: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
