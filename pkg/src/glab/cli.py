"""Command-line entry point: config loading/validation, stage dispatch.

Subcommands: validate, synth, train, probe (all stages), score, report.
Every run is named by the hash of its validated config; artifacts land in
<output_dir>/<hash>/. Seeds are mandatory in configs (nothing reads system
entropy) and named RNG streams derive from the master seed via
`derive_seed`.

Exit codes: 0 success, 2 config error, 3 io error, 4 numeric error,
5 capacity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import synthgen
from .errors import ConfigError, GlabError, IoError
from .probes import PROBE_KINDS, ProbeConfig, run_probe, run_stage
from .seeds import derive_seed  # re-exported: the stable stream-derivation op

log = logging.getLogger("glab")

MAX_SEED = 2**64 - 1


def _default_ladder_config() -> list[dict]:
    return [
        {
            "prefix": " ".join(idiom.prefix),
            "target": idiom.target,
            "frequency": idiom.frequency,
            "distractors": list(idiom.distractors),
        }
        for idiom in synthgen.default_ladder()
    ]


_IMAGE_GEOMETRY = {
    "width": 32,
    "height": 32,
    "radius_min": 2.0,
    "radius_max": 4.0,
    "min_gap": 2.0,
}

_IMAGE_MODEL = {
    "hidden_sizes": [512, 512],
    "embed_dim": 32,
    "timesteps": 200,
    "beta_min": 1e-4,
    "beta_max": 0.06,
    "epochs": 400,
    "batch_size": 100,
    "learning_rate": 1e-3,
}

_COUNTER = {"threshold": 0.5, "min_area": 3}


def _defaults(kind: str, basis: str) -> dict:
    if kind == "distribution":
        return {
            "dataset": {
                "count_distribution": {"2": 0.5, "10": 0.5},
                "size": 2000,
                **_IMAGE_GEOMETRY,
            },
            "model": dict(_IMAGE_MODEL),
            "sampling": {"count": 500, **_COUNTER},
        }
    if kind == "inpainting":
        return {
            "dataset": {
                "size": 800,
                "occupancy_rates": [0.0, 0.1, 0.9, 1.0],
                "base_circles": 2,
                "region": {"top": 0, "left": 0, "height": 10, "width": 10},
                **_IMAGE_GEOMETRY,
            },
            "model": {**_IMAGE_MODEL, "epochs": 150},
            "sampling": {"count": 200, **_COUNTER},
        }
    if kind == "completion" or (kind == "ladder" and basis == "text"):
        cfg = {
            "dataset": {
                "ladder": _default_ladder_config(),
                "fillers": list(synthgen.FILLER_VOCAB),
                "corpus_size": 5000,
                "carrier_fraction": 0.6,
            },
            "model": {"order": 4},
            "sampling": {"greedy_len": 3},
        }
        if kind == "ladder":
            cfg["sampling"]["basis"] = "text"
        return cfg
    # ladder, image basis
    return {
        "dataset": {
            "count_distribution": {"2": 0.4, "4": 0.3, "7": 0.2, "10": 0.1},
            "size": 2000,
            **_IMAGE_GEOMETRY,
        },
        "model": dict(_IMAGE_MODEL),
        "sampling": {"count": 400, "basis": "image", **_COUNTER},
    }


class _Validator:
    """Recursive merge of user config over defaults, collecting every violation."""

    def __init__(self):
        self.violations: list[str] = []

    def bad(self, path: str, message: str) -> None:
        self.violations.append(f"{path}: {message}")

    def merge(self, path: str, defaults: dict, given: dict) -> dict:
        out = {}
        for key, value in given.items():
            if key not in defaults:
                self.bad(f"{path}{key}", "unknown key")
        for key, default in defaults.items():
            if key not in given:
                out[key] = default
                continue
            value = given[key]
            if isinstance(default, dict) and not isinstance(value, dict):
                self.bad(f"{path}{key}", f"expected an object, got {type(value).__name__}")
                out[key] = default
            elif isinstance(default, dict):
                out[key] = self.merge(f"{path}{key}.", default, value)
            else:
                out[key] = value
        return out

    def number(self, doc: dict, path: str, key: str, lo=None, hi=None, integer=False):
        value = doc.get(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.bad(f"{path}{key}", f"expected a number, got {type(value).__name__}")
            return
        if integer and int(value) != value:
            self.bad(f"{path}{key}", "expected an integer")
            return
        if lo is not None and value < lo:
            self.bad(f"{path}{key}", f"must be >= {lo}")
        if hi is not None and value > hi:
            self.bad(f"{path}{key}", f"must be <= {hi}")


def validate_config(doc: dict) -> ProbeConfig:
    """Schema-check a raw config document; fills and echoes defaults.

    Raises ConfigError listing every violation found, not just the first.
    """
    v = _Validator()
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected a JSON object"])
    known_top = {"probe", "seed", "dataset", "model", "sampling", "output_dir"}
    for key in doc:
        if key not in known_top:
            v.bad(key, "unknown key")
    kind = doc.get("probe")
    if kind is None:
        v.bad("probe", "missing required key")
    elif kind not in PROBE_KINDS:
        v.bad("probe", f"must be one of {', '.join(PROBE_KINDS)}")
    seed = doc.get("seed")
    if seed is None:
        v.bad("seed", "missing required key (runs never seed from entropy)")
    elif isinstance(seed, bool) or not isinstance(seed, int) or not (0 <= seed <= MAX_SEED):
        v.bad("seed", "must be an integer in [0, 2^64)")
    output_dir = doc.get("output_dir", "runs")
    if not isinstance(output_dir, str) or not output_dir:
        v.bad("output_dir", "must be a non-empty string")

    if v.violations and (kind not in PROBE_KINDS):
        raise ConfigError(v.violations)

    basis = "text"
    sampling_given = doc.get("sampling", {})
    if kind == "ladder" and isinstance(sampling_given, dict):
        basis = sampling_given.get("basis", "text")
        if basis not in ("text", "image"):
            v.bad("sampling.basis", "must be 'text' or 'image'")
            raise ConfigError(v.violations)
    defaults = _defaults(kind, basis)
    merged = {}
    for section in ("dataset", "model", "sampling"):
        given = doc.get(section, {})
        if not isinstance(given, dict):
            v.bad(section, f"expected an object, got {type(given).__name__}")
            given = {}
        merged[section] = v.merge(f"{section}.", defaults[section], given)

    _check_sections(v, kind, basis, merged)
    if v.violations:
        raise ConfigError(v.violations)
    return ProbeConfig(
        kind=kind,
        seed=int(seed),
        dataset=merged["dataset"],
        model=merged["model"],
        sampling=merged["sampling"],
        output_dir=output_dir,
    )


def _check_sections(v: _Validator, kind: str, basis: str, merged: dict) -> None:
    dataset, model, sampling = merged["dataset"], merged["model"], merged["sampling"]
    image_probe = kind in ("distribution", "inpainting") or (
        kind == "ladder" and basis == "image"
    )
    if image_probe:
        v.number(dataset, "dataset.", "size", lo=1, integer=True)
        v.number(dataset, "dataset.", "width", lo=4, integer=True)
        v.number(dataset, "dataset.", "height", lo=4, integer=True)
        v.number(dataset, "dataset.", "radius_min", lo=1e-9)
        v.number(dataset, "dataset.", "radius_max", lo=1e-9)
        v.number(dataset, "dataset.", "min_gap", lo=1.0)
        if isinstance(dataset.get("radius_min"), (int, float)) and isinstance(
            dataset.get("radius_max"), (int, float)
        ):
            if dataset["radius_min"] > dataset["radius_max"]:
                v.bad("dataset.radius_min", "must be <= radius_max")
        for key in ("hidden_sizes",):
            sizes = model.get(key)
            if not isinstance(sizes, list) or not sizes or not all(
                isinstance(s, int) and not isinstance(s, bool) and s >= 1 for s in sizes
            ):
                v.bad(f"model.{key}", "expected a list of positive integers")
        v.number(model, "model.", "embed_dim", lo=2, integer=True)
        v.number(model, "model.", "timesteps", lo=1, integer=True)
        v.number(model, "model.", "beta_min", lo=1e-12, hi=0.999)
        v.number(model, "model.", "beta_max", lo=1e-12, hi=0.999)
        if isinstance(model.get("beta_min"), (int, float)) and isinstance(
            model.get("beta_max"), (int, float)
        ):
            if model["beta_min"] > model["beta_max"]:
                v.bad("model.beta_min", "must be <= beta_max")
        v.number(model, "model.", "epochs", lo=0, integer=True)
        v.number(model, "model.", "batch_size", lo=1, integer=True)
        v.number(model, "model.", "learning_rate", lo=1e-12)
        v.number(sampling, "sampling.", "count", lo=1, integer=True)
        v.number(sampling, "sampling.", "threshold", lo=1e-9, hi=1 - 1e-9)
        v.number(sampling, "sampling.", "min_area", lo=1, integer=True)
        if kind != "inpainting":
            dist = dataset.get("count_distribution")
            if not isinstance(dist, dict) or not dist:
                v.bad("dataset.count_distribution", "expected a non-empty object")
            else:
                total = 0.0
                for key, value in dist.items():
                    if not str(key).isdigit():
                        v.bad(f"dataset.count_distribution.{key}", "keys must be counts")
                        continue
                    if isinstance(value, bool) or not isinstance(value, (int, float)):
                        v.bad(f"dataset.count_distribution.{key}", "expected a number")
                        continue
                    if value < 0:
                        v.bad(f"dataset.count_distribution.{key}", "must be >= 0")
                    total += float(value)
                if abs(total - 1.0) > 1e-12:
                    v.bad("dataset.count_distribution", f"proportions sum to {total}, expected 1")
    if kind == "inpainting":
        rates = dataset.get("occupancy_rates")
        if not isinstance(rates, list) or not rates or not all(
            isinstance(r, (int, float)) and not isinstance(r, bool) and 0 <= r <= 1
            for r in rates
        ):
            v.bad("dataset.occupancy_rates", "expected a list of rates in [0,1]")
        v.number(dataset, "dataset.", "base_circles", lo=0, integer=True)
        region = dataset.get("region")
        if isinstance(region, dict):
            for key in ("top", "left", "height", "width"):
                v.number(region, "dataset.region.", key, lo=0, integer=True)
    if not image_probe:
        ladder = dataset.get("ladder")
        if not isinstance(ladder, list) or not ladder:
            v.bad("dataset.ladder", "expected a non-empty list of ladder entries")
        else:
            if kind == "ladder" and len(ladder) < 4:
                v.bad("dataset.ladder", "ladder probe needs at least 4 rungs")
            for i, entry in enumerate(ladder):
                if not isinstance(entry, dict):
                    v.bad(f"dataset.ladder[{i}]", "expected an object")
                    continue
                for key in entry:
                    if key not in ("prefix", "target", "frequency", "distractors"):
                        v.bad(f"dataset.ladder[{i}].{key}", "unknown key")
                if not isinstance(entry.get("prefix"), str) or not entry.get("prefix"):
                    v.bad(f"dataset.ladder[{i}].prefix", "expected a non-empty string")
                if not isinstance(entry.get("target"), str) or not entry.get("target"):
                    v.bad(f"dataset.ladder[{i}].target", "expected a non-empty string")
                freq = entry.get("frequency")
                if isinstance(freq, bool) or not isinstance(freq, (int, float)) or not (
                    0 <= freq <= 1
                ):
                    v.bad(f"dataset.ladder[{i}].frequency", "expected a number in [0,1]")
                distractors = entry.get("distractors", [])
                if not isinstance(distractors, list) or not all(
                    isinstance(d, str) for d in distractors
                ):
                    v.bad(f"dataset.ladder[{i}].distractors", "expected a list of strings")
        fillers = dataset.get("fillers")
        if not isinstance(fillers, list) or len(fillers) < 2 or not all(
            isinstance(f, str) for f in fillers
        ):
            v.bad("dataset.fillers", "expected a list of at least 2 filler tokens")
        v.number(dataset, "dataset.", "corpus_size", lo=1, integer=True)
        v.number(dataset, "dataset.", "carrier_fraction", lo=0.01, hi=1.0)
        v.number(model, "model.", "order", lo=1, integer=True)
        v.number(sampling, "sampling.", "greedy_len", lo=1, integer=True)


def load_config(path, output_override: str | None = None) -> ProbeConfig:
    """Read, parse, and validate a config file."""
    p = Path(path)
    if not p.exists():
        raise IoError(f"config file not found: {p}")
    try:
        text = p.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {p}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{p}: not valid JSON ({exc})"]) from exc
    if output_override:
        if not isinstance(doc, dict):
            raise ConfigError(["top level: expected a JSON object"])
        doc = {**doc, "output_dir": output_override}
    return validate_config(doc)


def run(cfg: ProbeConfig, command: str, jobs: int = 1) -> int:
    """Dispatch a subcommand against a validated config. Returns exit status."""
    if command == "validate":
        print(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
        return 0
    if command == "probe":
        rundir = run_probe(cfg, jobs=jobs)
    else:
        rundir = run_stage(cfg, command, jobs=jobs)
    print(f"{command}: artifacts under {rundir}")
    if command in ("probe", "report"):
        report = json.loads((rundir / "report.json").read_text())
        for line in _summary_lines(report):
            print(line)
    return 0


def _summary_lines(report: dict) -> list[str]:
    lines = []
    if report.get("histograms"):
        gen = report["histograms"]["generated"]["bins"]
        top = sorted(gen.items(), key=lambda kv: (-kv[1], int(kv[0])))[:4]
        lines.append(
            "generated counts (top): "
            + ", ".join(f"{k}: {v:.3f}" for k, v in top)
        )
    if report.get("fill_rates"):
        lines.append(
            "fill rates: "
            + ", ".join(f"p={k}: {v:.3f}" for k, v in sorted(report["fill_rates"].items()))
        )
    if report.get("completions"):
        for row in report["completions"]:
            lines.append(
                f"idiom '{row['prefix']} ...' planned={row['planned_frequency']:.2f} "
                f"prob={row['completion_prob']:.3f} greedy={row['greedy_completion']!r}"
            )
    sp = report.get("spearman")
    if sp:
        lines.append(
            "spearman: tie-degenerate (rho omitted)" if sp.get("degenerate")
            else f"spearman rho = {sp['rho']:.3f}"
        )
    return lines


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="glab",
        description="Measure how strongly small generative models reproduce "
        "frequent training elements.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("validate", "check a config and echo it with defaults filled"),
        ("synth", "generate the dataset/corpus artifacts"),
        ("train", "train the model from persisted dataset artifacts"),
        ("probe", "run all stages end to end"),
        ("score", "run measurements against the persisted model"),
        ("report", "assemble report.json and CSV tables"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON run config")
        p.add_argument("--output", default=None, help="override output_dir")
        p.add_argument("--jobs", type=int, default=1, help="within-stage parallelism")
        p.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config, output_override=args.output)
        return run(cfg, args.command, jobs=max(1, args.jobs))
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return exc.exit_code
    except GlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
