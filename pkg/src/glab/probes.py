"""Probe pipelines: reproducible experiments that measure reproduction bias.

Four probe kinds share one staged layout (synth -> train -> score ->
report); every stage persists its artifacts under a run directory named by
the config hash, so any stage can be re-run in isolation from the persisted
inputs of the previous one. Reports are deterministic given the config:
rerunning a probe rewrites byte-identical content except for the "runtime"
section.

  distribution  train a diffusion model on a circle-count mix, sample,
                and compare the generated count histogram to the training
                histogram (divergences + per-count reproduction scores).
  inpainting    train one model per region-occupancy rate, inpaint masked
                test scenes, and report fill rates with Wilson intervals.
  completion    train the n-gram model on an idiom ladder corpus and
                report completion probabilities vs planned frequencies.
  ladder        rank-correlate planned frequencies with measured
                reproduction (text basis or image-count basis).
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import diffusion, lm, scoring, synthgen, vision
from .errors import ConfigError, InvalidArgumentError, IoError
from .seeds import derive_seed

STAGES = ("synth", "train", "score", "report")
PROBE_KINDS = ("distribution", "inpainting", "completion", "ladder")


@dataclass
class ProbeConfig:
    kind: str
    seed: int
    dataset: dict
    model: dict
    sampling: dict
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "probe": self.kind,
            "seed": self.seed,
            "dataset": self.dataset,
            "model": self.model,
            "sampling": self.sampling,
            "output_dir": self.output_dir,
        }

    def config_hash(self) -> str:
        """Names the run directory; output_dir relocates runs without renaming them."""
        doc = self.to_dict()
        doc.pop("output_dir")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.config_hash()


def canonical_report_bytes(report: dict) -> bytes:
    """Report bytes with the runtime section stripped (reproducibility check)."""
    doc = {k: v for k, v in report.items() if k != "runtime"}
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise IoError(f"missing artifact {path}; run the earlier stages first")
    return json.loads(path.read_text())


def _dataset_spec(cfg: ProbeConfig) -> synthgen.DatasetSpec:
    d = cfg.dataset
    return synthgen.DatasetSpec(
        count_distribution={int(k): float(v) for k, v in d["count_distribution"].items()},
        dataset_size=int(d["size"]),
        width=int(d["width"]),
        height=int(d["height"]),
        radius_min=float(d["radius_min"]),
        radius_max=float(d["radius_max"]),
        min_gap=float(d["min_gap"]),
        seed=derive_seed(cfg.seed, "dataset"),
    )


def _region(cfg: ProbeConfig) -> synthgen.Region:
    r = cfg.dataset["region"]
    return synthgen.Region(int(r["top"]), int(r["left"]), int(r["height"]), int(r["width"]))


def _train_denoiser(cfg: ProbeConfig, dataset, label: str):
    m = cfg.model
    schedule = diffusion.make_schedule(
        int(m["timesteps"]), float(m["beta_min"]), float(m["beta_max"])
    )
    model = diffusion.init_denoiser(
        int(cfg.dataset["height"]),
        int(cfg.dataset["width"]),
        [int(h) for h in m["hidden_sizes"]],
        int(m["embed_dim"]),
        seed=derive_seed(cfg.seed, f"init/{label}"),
    )
    trained, losses = diffusion.train(
        model,
        dataset,
        schedule,
        epochs=int(m["epochs"]),
        batch_size=int(m["batch_size"]),
        learning_rate=float(m["learning_rate"]),
        seed=derive_seed(cfg.seed, f"train/{label}"),
    )
    return trained, schedule, losses


def _write_loss_curve(path: Path, losses: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, repr(loss)])


def _write_samples(rundir: Path, images: list[synthgen.ImageGrid], subdir: str) -> None:
    directory = rundir / subdir
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for i, img in enumerate(images):
        name = f"{i:05d}.pgm"
        synthgen.write_pgm(img, directory / name)
        index.append(name)
    _write_json(directory / "index.json", {"files": index})


def _read_samples(rundir: Path, subdir: str) -> list[synthgen.ImageGrid]:
    directory = rundir / subdir
    index = _read_json(directory / "index.json")
    return [synthgen.read_pgm(directory / name) for name in index["files"]]


# ---------------------------------------------------------------------------
# distribution probe (also the image-basis ladder)
# ---------------------------------------------------------------------------


def _image_synth(cfg: ProbeConfig, rundir: Path) -> None:
    spec = _dataset_spec(cfg)
    data = synthgen.gen_image_dataset(spec)
    directory = rundir / "dataset"
    directory.mkdir(parents=True, exist_ok=True)
    synthgen.write_image_dataset(data, spec, directory)


def _image_train(cfg: ProbeConfig, rundir: Path) -> None:
    data = synthgen.read_image_dataset(rundir / "dataset")
    trained, schedule, losses = _train_denoiser(cfg, data, "main")
    model_dir = rundir / "model"
    model_dir.mkdir(parents=True, exist_ok=True)
    diffusion.save_model(trained, schedule, model_dir / "denoiser")
    _write_loss_curve(model_dir / "loss_curve.csv", losses)


def _image_score(cfg: ProbeConfig, rundir: Path, jobs: int) -> None:
    model, schedule = diffusion.load_model(rundir / "model" / "denoiser")
    n = int(cfg.sampling["count"])
    images = diffusion.sample(model, schedule, n, derive_seed(cfg.seed, "sample"), jobs=jobs)
    _write_samples(rundir, images, "samples")
    threshold = float(cfg.sampling["threshold"])
    min_area = int(cfg.sampling["min_area"])
    counts = [vision.count_circles(img, threshold, min_area)[0] for img in images]
    _write_json(rundir / "samples" / "counts.json", {"counts": counts})


def _image_report(cfg: ProbeConfig, rundir: Path) -> dict:
    manifest = _read_json(rundir / "dataset" / "manifest.json")
    train_counts = [item["true_count"] for item in manifest["items"]]
    counts = _read_json(rundir / "samples" / "counts.json")["counts"]
    train_hist = scoring.histogram(train_counts)
    gen_hist = scoring.histogram(counts)
    scores = []
    for value in sorted(train_hist.bins):
        k = sum(1 for c in counts if c == value)
        scores.append(
            scoring.genericity_score(f"count={value}", scoring.TrialEvidence(k, len(counts)))
        )
    report = {
        "histograms": {"train": train_hist.to_json_dict(), "generated": gen_hist.to_json_dict()},
        "divergences": {
            "kl_train_generated": scoring.kl_divergence(train_hist, gen_hist),
            "kl_generated_train": scoring.kl_divergence(gen_hist, train_hist),
            "total_variation": scoring.total_variation(train_hist, gen_hist),
        },
        "scores": [s.to_json_dict() for s in scoring.rank_elements(scores)],
        "spearman": None,
    }
    if cfg.kind == "ladder":
        planned = [train_hist.bins[v] for v in sorted(train_hist.bins)]
        by_value = {int(s.element.split("=")[1]): s.score for s in scores}
        measured = [by_value[v] for v in sorted(train_hist.bins)]
        report["spearman"] = _spearman_or_degenerate(planned, measured)
        report["ladder"] = {
            "basis": "reproduction-rate",
            "planned": {str(v): train_hist.bins[v] for v in sorted(train_hist.bins)},
            "measured": {str(v): by_value[v] for v in sorted(by_value)},
        }
    return report


# ---------------------------------------------------------------------------
# inpainting probe
# ---------------------------------------------------------------------------


def _rate_label(rate: float) -> str:
    return format(float(rate), "g")


def _inpaint_scene(
    cfg: ProbeConfig, region: synthgen.Region, rng: np.random.Generator, with_circle: bool
) -> synthgen.ImageGrid:
    d = cfg.dataset
    radius_range = (float(d["radius_min"]), float(d["radius_max"]))
    scene = synthgen.gen_circle_scene(
        int(d["base_circles"]),
        (int(d["width"]), int(d["height"])),
        radius_range,
        rng,
        keep_out=region,
        min_gap=float(d["min_gap"]),
    )
    if with_circle:
        inner_range = (float(d["radius_min"]), min(float(d["radius_max"]), 3.0))
        scene.circles.append(
            synthgen.gen_circle_in_region(region, inner_range, rng, scene.circles)
        )
    return synthgen.rasterize(scene)


def _inpaint_synth(cfg: ProbeConfig, rundir: Path) -> None:
    region = _region(cfg)
    size = int(cfg.dataset["size"])
    for rate in cfg.dataset["occupancy_rates"]:
        label = _rate_label(rate)
        n_with = int(round(float(rate) * size))
        order = np.random.default_rng(derive_seed(cfg.seed, f"occupancy/{label}")).permutation(
            size
        )
        has_circle = np.zeros(size, dtype=bool)
        has_circle[order[:n_with]] = True
        images = []
        for i in range(size):
            rng = np.random.default_rng(derive_seed(cfg.seed, f"scene/{label}/{i}"))
            images.append((_inpaint_scene(cfg, region, rng, bool(has_circle[i])), int(has_circle[i])))
        directory = rundir / f"dataset_p{label}"
        directory.mkdir(parents=True, exist_ok=True)
        spec = _dataset_spec_for_manifest(cfg, rate)
        synthgen.write_image_dataset(images, spec, directory)
    # shared masked test scenes: region empty, same across all rates
    n_test = int(cfg.sampling["count"])
    tests = []
    for i in range(n_test):
        rng = np.random.default_rng(derive_seed(cfg.seed, f"test/{i}"))
        tests.append(_inpaint_scene(cfg, region, rng, with_circle=False))
    _write_samples(rundir, tests, "test_knowns")


def _dataset_spec_for_manifest(cfg: ProbeConfig, rate: float) -> synthgen.DatasetSpec:
    # occupancy datasets do not follow a count distribution; the manifest
    # spec block still records the generation geometry
    d = cfg.dataset
    base = int(d["base_circles"])
    return synthgen.DatasetSpec(
        count_distribution={base: 1.0 - float(rate), base + 1: float(rate)}
        if 0.0 < float(rate) < 1.0
        else {base + (1 if float(rate) >= 1.0 else 0): 1.0},
        dataset_size=int(d["size"]),
        width=int(d["width"]),
        height=int(d["height"]),
        radius_min=float(d["radius_min"]),
        radius_max=float(d["radius_max"]),
        min_gap=float(d["min_gap"]),
        seed=derive_seed(cfg.seed, f"dataset/{_rate_label(rate)}"),
    )


def _inpaint_train(cfg: ProbeConfig, rundir: Path) -> None:
    model_dir = rundir / "model"
    model_dir.mkdir(parents=True, exist_ok=True)
    for rate in cfg.dataset["occupancy_rates"]:
        label = _rate_label(rate)
        data = synthgen.read_image_dataset(rundir / f"dataset_p{label}")
        trained, schedule, losses = _train_denoiser(cfg, data, f"p{label}")
        diffusion.save_model(trained, schedule, model_dir / f"denoiser_p{label}")
        _write_loss_curve(model_dir / f"loss_curve_p{label}.csv", losses)


def _inpaint_score(cfg: ProbeConfig, rundir: Path, jobs: int) -> None:
    region = _region(cfg)
    tests = _read_samples(rundir, "test_knowns")
    mask = ~region.mask(int(cfg.dataset["height"]), int(cfg.dataset["width"]))  # 1 = known
    threshold = float(cfg.sampling["threshold"])
    min_area = int(cfg.sampling["min_area"])
    results = {}
    for rate in cfg.dataset["occupancy_rates"]:
        label = _rate_label(rate)
        model, schedule = diffusion.load_model(rundir / "model" / f"denoiser_p{label}")
        filled = diffusion.inpaint_many(
            model, schedule, tests, mask, derive_seed(cfg.seed, "inpaint"), jobs=jobs
        )
        _write_samples(rundir, filled, f"inpainted_p{label}")
        occupied = [
            bool(vision.region_occupied(img, region.mask(img.height, img.width), threshold, min_area))
            for img in filled
        ]
        results[label] = occupied
    _write_json(rundir / "occupancy.json", {"occupied": results})


def _inpaint_report(cfg: ProbeConfig, rundir: Path) -> dict:
    occupied = _read_json(rundir / "occupancy.json")["occupied"]
    scores = []
    rates = {}
    for rate in cfg.dataset["occupancy_rates"]:
        label = _rate_label(rate)
        flags = occupied[label]
        k = sum(flags)
        scores.append(
            scoring.genericity_score(
                f"region-circle@p={label}", scoring.TrialEvidence(k, len(flags))
            )
        )
        rates[label] = k / len(flags)
    planned = [float(r) for r in cfg.dataset["occupancy_rates"]]
    measured = [rates[_rate_label(r)] for r in cfg.dataset["occupancy_rates"]]
    return {
        "fill_rates": {label: rates[label] for label in sorted(rates)},
        "scores": [s.to_json_dict() for s in scoring.rank_elements(scores)],
        "spearman": _spearman_or_degenerate(planned, measured),
        "histograms": None,
        "divergences": None,
    }


# ---------------------------------------------------------------------------
# completion probe (also the text-basis ladder)
# ---------------------------------------------------------------------------


def _ladder_from_config(cfg: ProbeConfig) -> list[synthgen.IdiomSpec]:
    return [
        synthgen.IdiomSpec(
            prefix=tuple(entry["prefix"].split()),
            target=entry["target"],
            frequency=float(entry["frequency"]),
            distractors=tuple(entry["distractors"]),
        )
        for entry in cfg.dataset["ladder"]
    ]


def _text_synth(cfg: ProbeConfig, rundir: Path) -> None:
    ladder = _ladder_from_config(cfg)
    corpus = synthgen.gen_idiom_corpus(
        ladder,
        list(cfg.dataset["fillers"]),
        int(cfg.dataset["corpus_size"]),
        seed=derive_seed(cfg.seed, "corpus"),
        carrier_fraction=float(cfg.dataset["carrier_fraction"]),
    )
    rundir.mkdir(parents=True, exist_ok=True)
    synthgen.write_corpus(corpus, rundir / "corpus.txt")
    _write_json(
        rundir / "corpus_meta.json",
        {"planned": corpus.planned_frequencies, "occurrences": corpus.occurrences},
    )


def _text_train(cfg: ProbeConfig, rundir: Path) -> None:
    corpus = synthgen.read_corpus(rundir / "corpus.txt")
    table = lm.train_ngram(corpus, int(cfg.model["order"]))
    model_dir = rundir / "model"
    model_dir.mkdir(parents=True, exist_ok=True)
    lm.save_table(table, model_dir / "ngram.json")


def _text_score(cfg: ProbeConfig, rundir: Path) -> None:
    table = lm.load_table(rundir / "model" / "ngram.json")
    corpus = synthgen.read_corpus(rundir / "corpus.txt")
    ladder = _ladder_from_config(cfg)
    rows = []
    for idiom in ladder:
        rate, occurrences = synthgen.empirical_completion_rate(corpus, idiom)
        prob = lm.completion_prob(table, list(idiom.prefix), [idiom.target])
        greedy = lm.greedy_complete(table, list(idiom.prefix), int(cfg.sampling["greedy_len"]))
        rows.append(
            {
                "element": synthgen.idiom_key(idiom),
                "prefix": " ".join(idiom.prefix),
                "target": idiom.target,
                "planned_frequency": idiom.frequency,
                "corpus_rate": rate,
                "occurrences": occurrences,
                "completion_prob": prob,
                "greedy_completion": " ".join(greedy.strings()),
            }
        )
    _write_json(rundir / "completions.json", {"idioms": rows})


def _text_report(cfg: ProbeConfig, rundir: Path) -> dict:
    rows = _read_json(rundir / "completions.json")["idioms"]
    scores = [
        scoring.genericity_score(
            row["element"],
            scoring.CompletionEvidence((row["completion_prob"],), row["occurrences"]),
        )
        for row in rows
    ]
    report = {
        "completions": rows,
        "scores": [s.to_json_dict() for s in scoring.rank_elements(scores)],
        "histograms": None,
        "divergences": None,
        "spearman": None,
    }
    if cfg.kind == "ladder":
        planned = [row["planned_frequency"] for row in rows]
        measured = [row["completion_prob"] for row in rows]
        report["spearman"] = _spearman_or_degenerate(planned, measured)
        report["ladder"] = {
            "basis": "completion-probability",
            "planned": {row["element"]: row["planned_frequency"] for row in rows},
            "measured": {row["element"]: row["completion_prob"] for row in rows},
        }
    return report


def _spearman_or_degenerate(planned: list[float], measured: list[float]) -> dict:
    if len(set(planned)) < 2 or len(set(measured)) < 2:
        return {"degenerate": True}
    return {"rho": scoring.spearman(planned, measured), "degenerate": False}


# ---------------------------------------------------------------------------
# stage dispatch
# ---------------------------------------------------------------------------


def _is_image_probe(cfg: ProbeConfig) -> bool:
    if cfg.kind in ("distribution",):
        return True
    if cfg.kind == "inpainting":
        return True
    if cfg.kind == "completion":
        return False
    # ladder basis decides the pipeline
    return cfg.sampling.get("basis") == "image"


def run_stage(cfg: ProbeConfig, stage: str, jobs: int = 1) -> Path:
    """Run one pipeline stage, persisting artifacts under the run directory."""
    if stage not in STAGES:
        raise InvalidArgumentError(f"unknown stage {stage!r}; expected one of {STAGES}")
    rundir = cfg.run_dir()
    rundir.mkdir(parents=True, exist_ok=True)
    _write_json(rundir / "config.json", cfg.to_dict())
    started = time.time()
    if cfg.kind == "inpainting":
        handlers = {
            "synth": lambda: _inpaint_synth(cfg, rundir),
            "train": lambda: _inpaint_train(cfg, rundir),
            "score": lambda: _inpaint_score(cfg, rundir, jobs),
            "report": lambda: _finalize_report(cfg, rundir, _inpaint_report(cfg, rundir)),
        }
    elif _is_image_probe(cfg):
        handlers = {
            "synth": lambda: _image_synth(cfg, rundir),
            "train": lambda: _image_train(cfg, rundir),
            "score": lambda: _image_score(cfg, rundir, jobs),
            "report": lambda: _finalize_report(cfg, rundir, _image_report(cfg, rundir)),
        }
    else:
        handlers = {
            "synth": lambda: _text_synth(cfg, rundir),
            "train": lambda: _text_train(cfg, rundir),
            "score": lambda: _text_score(cfg, rundir),
            "report": lambda: _finalize_report(cfg, rundir, _text_report(cfg, rundir)),
        }
    handlers[stage]()
    _record_stage_time(rundir, stage, time.time() - started)
    return rundir


def _record_stage_time(rundir: Path, stage: str, seconds: float) -> None:
    path = rundir / "stage_times.json"
    times = json.loads(path.read_text()) if path.exists() else {}
    times[stage] = seconds
    _write_json(path, times)


def _finalize_report(cfg: ProbeConfig, rundir: Path, body: dict) -> None:
    times_path = rundir / "stage_times.json"
    times = json.loads(times_path.read_text()) if times_path.exists() else {}
    report = {
        "probe": cfg.kind,
        "config": cfg.to_dict(),
        **body,
        "runtime": {
            "finished_utc": datetime.now(timezone.utc).isoformat(),
            "stage_seconds": times,
        },
    }
    _write_json(rundir / "report.json", report)
    _write_histograms_csv(rundir, report)
    _write_scores_csv(rundir, report)


def _write_histograms_csv(rundir: Path, report: dict) -> None:
    with open(rundir / "histograms.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["histogram", "key", "probability", "sample_size"])
        hists = report.get("histograms") or {}
        for name in sorted(hists):
            doc = hists[name]
            for key in sorted(doc["bins"], key=int):
                writer.writerow([name, key, repr(doc["bins"][key]), doc["sample_size"]])


def _write_scores_csv(rundir: Path, report: dict) -> None:
    with open(rundir / "scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["element", "basis", "score", "interval_lo", "interval_hi", "sample_size"])
        for s in report.get("scores") or []:
            writer.writerow(
                [
                    s["element"],
                    s["basis"],
                    repr(s["score"]),
                    repr(s["interval"][0]),
                    repr(s["interval"][1]),
                    s["sample_size"],
                ]
            )


def run_probe(cfg: ProbeConfig, jobs: int = 1) -> Path:
    """Run all stages in order; returns the run directory."""
    rundir = cfg.run_dir()
    for stage in STAGES:
        run_stage(cfg, stage, jobs=jobs)
    return rundir


def load_report(rundir: Path) -> dict:
    return _read_json(Path(rundir) / "report.json")
