"""Command-line front end: ``covermod <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .bench import ExperimentConfig, corpus_experiment, sixth_order_survey
from .corpus import flat_corpus, load_directory, natural_corpus, noise_corpus, synthetic_corpus
from .cover_mod import ZeroCapacityError, apply_plan, plan_document, plan_grid, grid_capacity, strategy_for
from .detectors import DetectionThresholds, calibrate_thresholds, detect
from .pixel_store import read_image_file, write_image_file
from .stego_codec import CapacityError, KeyMaterial, OmittedMask, TagNotFoundError, embed, extract, masks_from_document

CORPUS_ENV = "COVERMOD_CORPUS"


def _key(args) -> KeyMaterial:
    if args.key_file:
        return KeyMaterial(Path(args.key_file).read_bytes())
    if args.key is None:
        raise SystemExit("a key is required (--key or --key-file)")
    return KeyMaterial.from_passphrase(args.key)


def _thresholds(path):
    return DetectionThresholds.from_json(Path(path).read_text()) if path else None


def _corpus(source: str | None, n: int, size: int, seed: int):
    source = source or os.environ.get(CORPUS_ENV) or "natural"
    if source == "natural":
        return natural_corpus(n, size)
    if source == "natural-color":
        return natural_corpus(n, size, color=True)
    if source == "synthetic":
        return synthetic_corpus(n, size, seed)
    if source == "flat":
        return flat_corpus(n, size, seed)
    if source == "noise":
        return noise_corpus(n, size, seed)
    return load_directory(source)[:n]


def _emit(doc, out):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    grid = read_image_file(args.image)
    rep = detect(grid, _thresholds(args.thresholds))
    _emit({"image": str(args.image), "flagged": rep.flagged, "channels": rep.rows()}, args.output)
    return 1 if rep.flagged and args.fail_on_detect else 0


def cmd_modify(args) -> int:
    grid = read_image_file(args.cover)
    strategy = strategy_for(args.order)
    try:
        cap = grid_capacity(grid, strategy)
    except ZeroCapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    alpha = cap.alpha if args.alpha is None else args.alpha
    plans, _ = plan_grid(grid, strategy, alpha, capacity=cap)
    modified = apply_plan(grid, plans, args.seed, strategy)
    write_image_file(args.output, modified)
    doc = plan_document(plans, cap, alpha, args.seed)
    _emit(doc, args.plan)
    return 0


def cmd_embed(args) -> int:
    grid = read_image_file(args.cover)
    message = Path(args.message).read_bytes()
    if args.plan:
        doc = json.loads(Path(args.plan).read_text())
        order, alpha, masks = doc["order"], doc["alpha"], masks_from_document(doc)
    else:
        order, alpha = args.order, None
        masks = [OmittedMask.empty(order) for _ in range(grid.shape[2])]
    if args.no_pad:
        alpha = None
    try:
        stego = embed(grid, _key(args), message, masks, order, alpha=alpha)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_image_file(args.output, stego)
    return 0


def cmd_extract(args) -> int:
    grid = read_image_file(args.stego)
    try:
        msg = extract(grid, _key(args), args.order)
    except TagNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if args.output:
        Path(args.output).write_bytes(msg)
    else:
        sys.stdout.buffer.write(msg)
    return 0


def cmd_calibrate(args) -> int:
    covers = [c.grid for c in _corpus(args.corpus, args.n_images, args.size, args.seed)]
    try:
        th = calibrate_thresholds(covers, min_covers=args.min_covers)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = th.to_json() + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    config = ExperimentConfig.from_json(Path(args.config).read_text()) if args.config else ExperimentConfig()
    for name in ("corpus", "n_images", "size", "order", "seed", "alpha_policy", "alpha", "workers"):
        val = getattr(args, name)
        if val is not None:
            setattr(config, name, val)
    if args.corpus is None and os.environ.get(CORPUS_ENV) and not args.config:
        config.corpus = os.environ[CORPUS_ENV]
    if args.detectors:
        config.detectors = tuple(args.detectors.split(","))
    config.output_dir = args.output
    res = corpus_experiment(config, _thresholds(args.thresholds))
    if not args.output:
        _emit(res.summary, None)
    return 0


def cmd_survey6(args) -> int:
    images = _corpus(args.corpus, args.n_images, args.size, args.seed)
    summary = sixth_order_survey(images)
    if not args.per_image:
        summary.pop("per_image")
    _emit(summary, args.output)
    return 0


def _add_key(p):
    p.add_argument("--key", help="passphrase")
    p.add_argument("--key-file", help="file holding the raw key bytes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covermod", description="Cover modification against structural LSB steganalysis")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run SPA, Triples and the chi-square attack on an image")
    p.add_argument("image")
    p.add_argument("--thresholds", help="JSON file written by 'calibrate'")
    p.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
    p.add_argument("--fail-on-detect", action="store_true", help="exit with status 1 when flagged")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("modify", help="pre-distort a cover for embedding at a given rate")
    p.add_argument("cover")
    p.add_argument("--order", type=int, choices=(2, 3), default=3)
    p.add_argument("--alpha", type=float, help="target rate (default: the cover's maximum)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="modified cover (pgm/ppm/png/bmp)")
    p.add_argument("--plan", help="write the plan JSON here (default: stdout)")
    p.set_defaults(func=cmd_modify)

    p = sub.add_parser("embed", help="embed a message into a modified cover")
    p.add_argument("cover")
    _add_key(p)
    p.add_argument("--message", required=True, help="file with the message bytes")
    p.add_argument("--plan", help="plan JSON from 'modify' (rate and omitted trace sets)")
    p.add_argument("--order", type=int, choices=(2, 3), default=3, help="strategy when no plan is given")
    p.add_argument("--no-pad", action="store_true", help="do not pad the message up to the planned rate")
    p.add_argument("-o", "--output", required=True, help="stego image (lossless format)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="recover a message from a stego image")
    p.add_argument("stego")
    _add_key(p)
    p.add_argument("--order", type=int, choices=(2, 3), help="strategy (default: try both)")
    p.add_argument("-o", "--output", help="message file (default: stdout)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("calibrate", help="derive 95%% detection bands from unembedded covers")
    p.add_argument("--corpus", help=f"natural | natural-color | synthetic | <directory> (env {CORPUS_ENV})")
    p.add_argument("--n-images", type=int, default=240)
    p.add_argument("--size", type=int, default=192)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-covers", type=int, default=100)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", help="corpus experiment: rows CSV, capacity histogram, summary JSON")
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--corpus")
    p.add_argument("--n-images", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--order", type=int, choices=(0, 2, 3), help="0 runs naive LSB embedding")
    p.add_argument("--detectors", help="comma list of spa,triples used for tuning and screening")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha-policy", choices=("max", "fixed"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--thresholds", help="use these bands instead of calibrating on the corpus")
    p.add_argument("-o", "--output", help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("survey6", help="feasibility of full sextuplet modification over a corpus")
    p.add_argument("--corpus", help="natural | synthetic | flat | noise | <directory>")
    p.add_argument("--n-images", type=int, default=240)
    p.add_argument("--size", type=int, default=192)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-image", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_survey6)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
