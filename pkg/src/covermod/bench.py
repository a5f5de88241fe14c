"""End-to-end pipelines and corpus experiments.

A pipeline run is census -> capacity -> plan -> apply -> embed -> detect.
When the stego is still flagged, the rate is lowered by 10% and the run is
repeated from the plan step until it passes or the rate drops below
``MIN_ALPHA``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .corpus import CoverImage, load_directory_report, natural_corpus, synthetic_corpus
from .cover_mod import ZeroCapacityError, apply_plan, feasibility_report_6th, grid_capacity, plan_grid, strategy_for
from .detectors import DetectionReport, DetectionThresholds, calibrate_thresholds, detect, image_estimates
from .pixel_store import as_grid, partition_tuples
from .simulate import lsb_embed
from .stego_codec import CapacityError, embed, masks_from_capacity
from .trace_algebra import census

log = logging.getLogger(__name__)

CSV_VERSION = 1
TUNE_FACTOR = 0.9
MIN_ALPHA = 0.01
HIST_BIN = 0.01


@dataclass
class ExperimentConfig:
    corpus: str = "natural"          # natural | natural-color | synthetic | <directory>
    n_images: int = 240
    size: int = 192
    order: int = 3                   # 2, 3, or 0 for naive LSB embedding
    detectors: tuple = ("spa", "triples")
    seed: int = 0
    alpha_policy: str = "max"        # max | fixed
    alpha: float = 0.2
    output_dir: str | None = None
    key: str = "covermod-bench"
    screen: bool = True
    workers: int = 1

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        if "detectors" in doc:
            doc["detectors"] = tuple(doc["detectors"])
        return cls(**doc)


@dataclass
class ExperimentRow:
    image: str
    channel: int
    status: str
    true_alpha: float
    capacity_alpha: float
    spa_alpha: float
    triples_alpha: float
    spa_flagged: bool
    triples_flagged: bool
    chi2_p: float
    omitted_keys: int
    bits_per_sample: float
    tuning_steps: int


@dataclass
class PipelineResult:
    stego: np.ndarray | None
    alpha: float
    capacity_alpha: float
    report: DetectionReport | None
    status: str
    omitted_keys: int = 0
    bits_per_sample: float = 0.0
    tuning_steps: int = 0
    rows: list = field(default_factory=list)


def _flagged(report: DetectionReport, detectors) -> bool:
    hits = []
    if "spa" in detectors:
        hits += report.spa_flagged
    if "triples" in detectors:
        hits += report.triples_flagged
    return any(hits)


def _rows(name: str, res: PipelineResult) -> list[ExperimentRow]:
    if res.report is None:
        return [ExperimentRow(name, -1, res.status, 0.0, res.capacity_alpha, float("nan"), float("nan"),
                              False, False, float("nan"), 0, 0.0, res.tuning_steps)]
    rep = res.report
    return [ExperimentRow(name, c, res.status, res.alpha, res.capacity_alpha, rep.spa_alpha[c],
                          rep.triples_alpha[c], rep.spa_flagged[c], rep.triples_flagged[c], rep.chi2_p,
                          res.omitted_keys, res.bits_per_sample, res.tuning_steps)
            for c in range(len(rep.spa_alpha))]


def run_pipeline(cover, key, message: bytes = b"", config: ExperimentConfig | None = None,
                 thresholds: DetectionThresholds | None = None, seed: int | None = None,
                 name: str = "cover") -> PipelineResult:
    """Modify, embed and check one cover, lowering the rate while it is detected.

    With the ``max`` policy the start rate is the cover's capacity; with
    ``fixed`` it is ``config.alpha``.  The message is padded to the rate so
    that exactly the planned fraction of embeddable samples is written.
    """
    config = config or ExperimentConfig()
    seed = config.seed if seed is None else seed
    grid = as_grid(cover)
    strategy = strategy_for(config.order)
    try:
        cap = grid_capacity(grid, strategy)
    except ZeroCapacityError:
        res = PipelineResult(None, 0.0, 0.0, None, "zero-capacity")
        res.rows = _rows(name, res)
        return res
    alpha = cap.alpha if config.alpha_policy == "max" else min(config.alpha, cap.alpha)
    steps = 0
    while True:
        try:
            plans, _ = plan_grid(grid, strategy, alpha, capacity=cap)
            modified = apply_plan(grid, plans, seed, strategy)
            masks = masks_from_capacity(cap, alpha)
            stego = embed(modified, key, message, masks, config.order, alpha=alpha)
        except CapacityError:
            res = PipelineResult(None, alpha, cap.alpha, None, "no-header-room", tuning_steps=steps)
            res.rows = _rows(name, res)
            return res
        report = detect(stego, thresholds)
        if thresholds is None or not _flagged(report, config.detectors):
            status = "ok"
            break
        if alpha * TUNE_FACTOR < MIN_ALPHA:
            status = "detected"
            break
        alpha *= TUNE_FACTOR
        steps += 1
    om = cap.omitted(alpha)
    n_samples = grid.size
    res = PipelineResult(stego, alpha, cap.alpha, report, status,
                         omitted_keys=int(sum(v.sum() for v in om.values())),
                         bits_per_sample=alpha * cap.embeddable_samples(alpha) / n_samples,
                         tuning_steps=steps)
    res.rows = _rows(name, res)
    return res


def naive_pipeline(cover, alpha: float, thresholds: DetectionThresholds | None = None, seed: int = 0,
                   name: str = "cover") -> PipelineResult:
    """Plain LSB embedding of random bits into a fraction ``alpha`` of all samples."""
    stego = lsb_embed(cover, alpha, np.random.default_rng(seed))
    res = PipelineResult(stego, alpha, 1.0, detect(stego, thresholds), "ok", bits_per_sample=alpha)
    res.rows = _rows(name, res)
    return res


# --------------------------------------------------------------------------
# corpus experiments


def load_corpus(config: ExperimentConfig) -> tuple[list[CoverImage], list[tuple[str, str]]]:
    if config.corpus == "natural":
        return natural_corpus(config.n_images, config.size), []
    if config.corpus == "natural-color":
        return natural_corpus(config.n_images, config.size, color=True), []
    if config.corpus == "synthetic":
        return synthetic_corpus(config.n_images, config.size, config.seed), []
    images, bad = load_directory_report(config.corpus)
    return images[: config.n_images], bad


def _image_seed(config: ExperimentConfig, index: int) -> int:
    return int(np.random.SeedSequence([config.seed, index]).generate_state(1)[0])


def _one(args):
    config, thresholds, index, img = args
    seed = _image_seed(config, index)
    if config.order == 0:
        return naive_pipeline(img.grid, config.alpha, thresholds, seed, img.name).rows
    return run_pipeline(img.grid, config.key, b"", config, thresholds, seed, img.name).rows


def screen_covers(images, thresholds: DetectionThresholds, detectors=("spa", "triples"), estimates=None):
    """Covers that are consistent with zero embedding under the given detectors."""
    keep = []
    for i, img in enumerate(images):
        est = estimates[i] if estimates is not None else None
        if not _flagged(detect(img.grid, thresholds, estimates=est), detectors):
            keep.append(img)
    return keep


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    names = [f.name for f in fields(ExperimentRow)]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# covermod rows v{CSV_VERSION}"])
    w.writerow(names)
    for r in rows:
        d = asdict(r)
        w.writerow([f"{d[n]:.6f}" if isinstance(d[n], float) else d[n] for n in names])
    return buf.getvalue()


def capacity_histogram(alphas, bin_width: float = HIST_BIN) -> list[tuple[float, float, int]]:
    alphas = np.asarray(alphas, dtype=float)
    if not len(alphas):
        return []
    top = max(bin_width, float(np.ceil(alphas.max() / bin_width + 1e-9)) * bin_width)
    edges = np.round(np.arange(0.0, top + bin_width / 2, bin_width), 10)
    counts, _ = np.histogram(alphas, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]


def summarize(rows) -> dict:
    per_image = {}
    for r in rows:
        per_image.setdefault(r.image, r)
    ok = [r for r in per_image.values() if r.status in ("ok", "detected")]
    alphas = np.array([r.true_alpha for r in ok])
    flagged = [r.image for r in rows if r.spa_flagged or r.triples_flagged]
    summary = {
        "images": len(per_image),
        "embedded": len(ok),
        "statuses": {s: sum(1 for r in per_image.values() if r.status == s)
                     for s in sorted({r.status for r in per_image.values()})},
        "flagged_images": len(set(flagged)),
        "spa_flagged_images": len({r.image for r in rows if r.spa_flagged}),
        "triples_flagged_images": len({r.image for r in rows if r.triples_flagged}),
    }
    if len(alphas):
        summary.update({
            "alpha_mean": float(alphas.mean()),
            "alpha_percentiles": {str(q): float(np.percentile(alphas, q)) for q in (5, 25, 50, 75, 95)},
            "bits_per_sample_mean": float(np.mean([r.bits_per_sample for r in ok])),
        })
    return summary


@dataclass
class ExperimentResult:
    rows: list
    summary: dict
    histogram: list
    thresholds: DetectionThresholds | None
    excluded: list


def corpus_experiment(config: ExperimentConfig, thresholds: DetectionThresholds | None = None) -> ExperimentResult:
    """Run the pipeline over a corpus and (optionally) write CSV/JSON outputs.

    Without ``thresholds`` the bands are calibrated on the corpus itself.
    With ``screen`` covers already flagged before embedding are excluded and
    listed in ``excluded``.
    """
    images, bad = load_corpus(config)
    for name, why in bad:
        log.warning("skipping %s: %s", name, why)
    if not images:
        raise ValueError("corpus is empty")
    estimates = None
    if thresholds is None or config.screen:
        estimates = [image_estimates(img.grid) for img in images]
    if thresholds is None:
        thresholds = calibrate_thresholds(estimates, min_covers=min(100, len(images)))
    excluded = [n for n, _ in bad]
    if config.screen:
        kept = screen_covers(images, thresholds, config.detectors, estimates)
        kept_names = {k.name for k in kept}
        excluded += [img.name for img in images if img.name not in kept_names]
        images = kept
    jobs = [(config, thresholds, i, img) for i, img in enumerate(images)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            chunks = list(pool.map(_one, jobs))
    else:
        chunks = [_one(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    summary = summarize(rows)
    summary["excluded"] = len(excluded)
    summary["thresholds"] = json.loads(thresholds.to_json())
    summary["config"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()}
    per_image_alpha = [r.true_alpha for r in {r.image: r for r in rows}.values() if r.status in ("ok", "detected")]
    hist = capacity_histogram(per_image_alpha)
    if config.output_dir:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "rows.csv").write_text(rows_to_csv(rows))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        w.writerows([(f"{a:.2f}", f"{b:.2f}", n) for a, b, n in hist])
        (out / "capacity_histogram.csv").write_text(buf.getvalue())
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out / "thresholds.json").write_text(thresholds.to_json() + "\n")
    return ExperimentResult(rows, summary, hist, thresholds, excluded)


# --------------------------------------------------------------------------
# sixth-order survey


def sixth_order_report(grid) -> list[dict]:
    """Feasibility of full sextuplet modification, per channel."""
    grid = as_grid(grid)
    out = []
    for c in range(grid.shape[2]):
        cen = census(partition_tuples(grid, c, 6), sparse=True)
        rep = feasibility_report_6th(cen, n_pixels=grid.shape[0] * grid.shape[1])
        out.append(rep)
    return out


def sixth_order_survey(images) -> dict:
    """Share of images with no usable sextuplet trace set, and capacity stats.

    ``capacity`` per image is the smallest channel capacity in payload bits
    per pixel.
    """
    per_image = []
    for img in images:
        reps = sixth_order_report(img.grid)
        per_image.append({
            "image": img.name,
            "usable_keys": min(len(r["usable_keys"]) for r in reps),
            "capacity": min(r["capacity"] for r in reps),
            "top_usable": [list(k) for k in reps[0]["usable_keys"][:3]],
        })
    caps = np.array([p["capacity"] for p in per_image]) if per_image else np.zeros(0)
    return {
        "images": len(per_image),
        "blocked_fraction": float(np.mean([p["usable_keys"] == 0 for p in per_image])) if per_image else 0.0,
        "capacity_mean": float(caps.mean()) if len(caps) else 0.0,
        "capacity_max": float(caps.max()) if len(caps) else 0.0,
        "below_0.1pct": float(np.mean(caps < 1e-3)) if len(caps) else 0.0,
        "per_image": per_image,
    }
