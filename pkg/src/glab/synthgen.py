"""Deterministic generators for the two controlled training worlds.

Images: black circles on a white 2-D canvas, placed by rejection sampling
so that discs never touch (>= 1 px gap), rasterized hard-edged so the blob
counter is an exact oracle. Text: corpora of short carrier sentences that
embed idioms at planned completion frequencies, padded with filler
sentences over a small closed vocabulary.

Every generator is a pure function of (spec, seed); per-item work uses an
independently derived stream (stream id = item index) so items can be
produced in parallel without changing the result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidArgumentError, IoError
from .seeds import derive_seed

PLACEMENT_ATTEMPTS = 10_000
SCENE_RESTARTS = 20


# ---------------------------------------------------------------------------
# image world
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float


@dataclass
class CircleScene:
    """Ground-truth geometry: disjoint circles fully inside the canvas."""

    circles: list[Circle]
    width: int
    height: int


@dataclass
class ImageGrid:
    """H x W grayscale raster, values in [0,1] (1 = white, 0 = ink)."""

    values: np.ndarray  # (height, width) float64

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class DatasetSpec:
    count_distribution: dict[int, float]
    dataset_size: int
    width: int = 32
    height: int = 32
    radius_min: float = 2.0
    radius_max: float = 4.0
    # separation between disc rims; >= 1 px keeps discs disjoint, the wider
    # default keeps generated scenes legible to the blob counter
    min_gap: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        total = sum(self.count_distribution.values())
        if abs(total - 1.0) > 1e-12:
            raise InvalidArgumentError(f"count_distribution sums to {total}, expected 1")
        if any(p < 0 for p in self.count_distribution.values()):
            raise InvalidArgumentError("count_distribution has negative proportions")
        if self.dataset_size < 1:
            raise InvalidArgumentError("dataset_size must be >= 1")
        if not (0 < self.radius_min <= self.radius_max):
            raise InvalidArgumentError("need 0 < radius_min <= radius_max")


@dataclass(frozen=True)
class Region:
    """Axis-aligned pixel rectangle [top, top+height) x [left, left+width)."""

    top: int
    left: int
    height: int
    width: int

    def mask(self, canvas_height: int, canvas_width: int) -> np.ndarray:
        m = np.zeros((canvas_height, canvas_width), dtype=bool)
        m[self.top : self.top + self.height, self.left : self.left + self.width] = True
        return m

    def intersects_circle(self, c: Circle, gap: float = 1.0) -> bool:
        # distance from circle center to the rectangle, compared to r + gap
        nearest_x = min(max(c.cx, self.left), self.left + self.width - 1)
        nearest_y = min(max(c.cy, self.top), self.top + self.height - 1)
        return (c.cx - nearest_x) ** 2 + (c.cy - nearest_y) ** 2 <= (c.r + gap) ** 2


def _fits(candidate: Circle, placed: list[Circle], min_gap: float) -> bool:
    for other in placed:
        min_dist = candidate.r + other.r + min_gap
        if (candidate.cx - other.cx) ** 2 + (candidate.cy - other.cy) ** 2 <= min_dist**2:
            return False
    return True


def gen_circle_scene(
    count: int,
    canvas: tuple[int, int],
    radius_range: tuple[float, float],
    rng: np.random.Generator,
    keep_out: Region | None = None,
    min_gap: float = 1.0,
) -> CircleScene:
    """Place `count` disjoint circles by rejection sampling.

    A candidate is rejected if any pairwise center distance is
    <= r_i+r_j+min_gap or (when `keep_out` is given) its disc comes within
    1 px of the region. When a circle cannot be placed in 10,000 attempts
    the whole scene is resampled (a rare dead end for dense feasible
    scenes); after 20 such restarts the canvas is deemed too small and a
    CapacityError is raised.
    """
    width, height = canvas
    rmin, rmax = radius_range
    if count < 0:
        raise InvalidArgumentError("count must be >= 0")
    if not (0 < rmin <= rmax):
        raise InvalidArgumentError("need 0 < radius_min <= radius_max")
    if min_gap < 1.0:
        raise InvalidArgumentError("min_gap must be >= 1 px")
    for restart in range(SCENE_RESTARTS):
        circles: list[Circle] = []
        for _ in range(count):
            for attempt in range(PLACEMENT_ATTEMPTS):
                r = rng.uniform(rmin, rmax)
                if width - 1 - 2 * r <= 0 or height - 1 - 2 * r <= 0:
                    continue
                cx = rng.uniform(r, width - 1 - r)
                cy = rng.uniform(r, height - 1 - r)
                candidate = Circle(cx, cy, r)
                if keep_out is not None and keep_out.intersects_circle(candidate):
                    continue
                if _fits(candidate, circles, min_gap):
                    circles.append(candidate)
                    break
            else:
                break  # this circle exhausted its attempts: restart the scene
        else:
            return CircleScene(circles, width, height)
    raise CapacityError(
        f"could not place {count} circles on a {width}x{height} canvas "
        f"({PLACEMENT_ATTEMPTS} attempts per circle, {SCENE_RESTARTS} scene restarts)"
    )


def gen_circle_in_region(
    region: Region,
    radius_range: tuple[float, float],
    rng: np.random.Generator,
    existing: list[Circle],
    min_gap: float = 1.0,
) -> Circle:
    """Place one circle wholly inside `region`, disjoint from `existing`."""
    rmin, rmax = radius_range
    for attempt in range(PLACEMENT_ATTEMPTS):
        r = rng.uniform(rmin, rmax)
        lo_x, hi_x = region.left + r, region.left + region.width - 1 - r
        lo_y, hi_y = region.top + r, region.top + region.height - 1 - r
        if hi_x <= lo_x or hi_y <= lo_y:
            continue
        candidate = Circle(rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y), r)
        if _fits(candidate, existing, min_gap):
            return candidate
    raise CapacityError(f"could not place a circle inside region {region}")


def rasterize(scene: CircleScene) -> ImageGrid:
    """Hard-edge render: pixel is ink iff its center lies within any circle."""
    values = np.ones((scene.height, scene.width))
    ys, xs = np.ogrid[0 : scene.height, 0 : scene.width]
    for c in scene.circles:
        values[(xs - c.cx) ** 2 + (ys - c.cy) ** 2 <= c.r**2] = 0.0
    return ImageGrid(values)


def _draw_count(dist_items: list[tuple[int, float]], rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for value, p in dist_items:
        acc += p
        if u < acc:
            return value
    return dist_items[-1][0]


def gen_image_dataset(spec: DatasetSpec) -> list[tuple[ImageGrid, int]]:
    """Sample (image, true_count) pairs i.i.d. from the spec's count mix."""
    spec.validate()
    dist_items = sorted(spec.count_distribution.items())
    out = []
    for i in range(spec.dataset_size):
        rng = np.random.default_rng(derive_seed(spec.seed, f"item/{i}"))
        count = _draw_count(dist_items, rng)
        scene = gen_circle_scene(
            count,
            (spec.width, spec.height),
            (spec.radius_min, spec.radius_max),
            rng,
            min_gap=spec.min_gap,
        )
        out.append((rasterize(scene), count))
    return out


# ---------------------------------------------------------------------------
# PGM / manifest persistence
# ---------------------------------------------------------------------------


def write_pgm(image: ImageGrid, path) -> None:
    """Binary PGM (P5), maxval 255, value = round(255 * v)."""
    data = np.round(255.0 * image.values).astype(np.uint8)
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header + data.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_pgm(path) -> ImageGrid:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise IoError(f"{path}: not a binary PGM written by this tool")
    width, height = (int(tok) for tok in parts[1].split())
    maxval = int(parts[2])
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=width * height)
    return ImageGrid(pixels.reshape(height, width).astype(np.float64) / maxval)


def write_image_dataset(dataset, spec: DatasetSpec, directory) -> None:
    """Persist images as NNNNN.pgm plus a manifest.json echoing the spec."""
    items = []
    for i, (image, count) in enumerate(dataset):
        name = f"{i:05d}.pgm"
        write_pgm(image, directory / name)
        items.append({"file": name, "true_count": count})
    manifest = {
        "spec": {
            "count_distribution": {str(k): v for k, v in sorted(spec.count_distribution.items())},
            "dataset_size": spec.dataset_size,
            "width": spec.width,
            "height": spec.height,
            "radius_min": spec.radius_min,
            "radius_max": spec.radius_max,
            "min_gap": spec.min_gap,
            "seed": spec.seed,
        },
        "items": items,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n"
    )


def read_image_dataset(directory) -> list[tuple[ImageGrid, int]]:
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise IoError(f"missing dataset manifest {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    return [
        (read_pgm(directory / item["file"]), item["true_count"]) for item in manifest["items"]
    ]


# ---------------------------------------------------------------------------
# text world
# ---------------------------------------------------------------------------

FILLER_VOCAB = (
    "the a an and or but so then now here there one two few many "
    "man woman child friend house garden river road town market door window "
    "bird fish horse stone tree cloud rain wind fire light morning evening "
    "walks runs sings reads makes takes finds keeps gives sees old young "
    "small large quiet busy warm cold"
).split()


@dataclass(frozen=True)
class IdiomSpec:
    """One ladder rung: prefix tokens, canonical target, planned frequency.

    Completions alternate between the target (fraction `frequency`) and a
    uniformly chosen distractor from `distractors`.
    """

    prefix: tuple[str, ...]
    target: str
    frequency: float
    distractors: tuple[str, ...]


@dataclass
class Corpus:
    sentences: list[list[str]]
    planned_frequencies: dict[str, float] = field(default_factory=dict)
    occurrences: dict[str, int] = field(default_factory=dict)


def default_ladder() -> list[IdiomSpec]:
    """Five rungs spanning frequencies 0.9 down to 0.1."""
    return [
        IdiomSpec(("let", "the", "cat", "out", "of", "the"), "bag", 0.90, ("house", "window", "room")),
        IdiomSpec(("put", "words", "in", "someone", "s"), "mouth", 0.74, ("head", "hands", "name")),
        IdiomSpec(("once", "in", "a", "blue"), "moon", 0.50, ("sky", "sea", "dream")),
        IdiomSpec(("play", "it", "by"), "ear", 0.37, ("yourself",)),
        IdiomSpec(("barking", "up", "the", "wrong"), "tree", 0.10, ("path", "wall", "gate")),
    ]


def idiom_key(idiom: IdiomSpec) -> str:
    return " ".join(idiom.prefix) + " -> " + idiom.target


def _exact_completions(idiom: IdiomSpec, n: int, rng: np.random.Generator) -> list[str]:
    """Completion tokens hitting round(p*n) targets exactly, shuffled."""
    n_target = int(round(idiom.frequency * n))
    completions = [idiom.target] * n_target
    rest = n - n_target
    for j in range(rest):
        completions.append(idiom.distractors[j % len(idiom.distractors)])
    order = rng.permutation(n)
    return [completions[k] for k in order]


def gen_idiom_corpus(
    ladder: list[IdiomSpec],
    fillers: list[str],
    size: int,
    seed: int,
    carrier_fraction: float = 0.6,
) -> Corpus:
    """Build `size` sentences: idiom carriers plus filler sentences.

    Each ladder rung gets an equal share of the carrier sentences; within a
    rung the target follows the prefix in exactly round(p*n) of n
    occurrences (the remainder cycles through the distractors), so the
    empirical rate sits within 1/(2n) of the plan.
    """
    if not ladder:
        raise InvalidArgumentError("ladder must not be empty")
    prefixes = [idiom.prefix for idiom in ladder]
    if len(set(prefixes)) != len(prefixes):
        raise InvalidArgumentError("ladder prefixes must be distinct")
    for idiom in ladder:
        if not (0.0 <= idiom.frequency <= 1.0):
            raise InvalidArgumentError(f"frequency {idiom.frequency} outside [0,1]")
        if not idiom.distractors and idiom.frequency < 1.0:
            raise InvalidArgumentError(f"idiom {idiom_key(idiom)} needs distractors")

    n_carriers_total = int(round(size * carrier_fraction))
    per_rung = n_carriers_total // len(ladder)
    sentences: list[list[str]] = []
    planned: dict[str, float] = {}
    occurrences: dict[str, int] = {}

    for rung_index, idiom in enumerate(ladder):
        rng = np.random.default_rng(derive_seed(seed, f"rung/{rung_index}"))
        completions = _exact_completions(idiom, per_rung, rng)
        planned[idiom_key(idiom)] = idiom.frequency
        occurrences[idiom_key(idiom)] = per_rung
        for completion in completions:
            lead = [fillers[rng.integers(len(fillers))] for _ in range(rng.integers(0, 3))]
            tail = [fillers[rng.integers(len(fillers))] for _ in range(rng.integers(0, 3))]
            sentences.append(lead + list(idiom.prefix) + [completion] + tail)

    n_fillers = size - len(sentences)
    for i in range(n_fillers):
        rng = np.random.default_rng(derive_seed(seed, f"filler/{i}"))
        length = int(rng.integers(4, 9))
        sentences.append([fillers[rng.integers(len(fillers))] for _ in range(length)])

    order = np.random.default_rng(derive_seed(seed, "shuffle")).permutation(len(sentences))
    return Corpus([sentences[k] for k in order], planned, occurrences)


def empirical_completion_rate(corpus: Corpus, idiom: IdiomSpec) -> tuple[float, int]:
    """Fraction of prefix occurrences followed by the target, and the count."""
    hits = 0
    total = 0
    plen = len(idiom.prefix)
    prefix = list(idiom.prefix)
    for sentence in corpus.sentences:
        for i in range(len(sentence) - plen):
            if sentence[i : i + plen] == prefix:
                total += 1
                if sentence[i + plen] == idiom.target:
                    hits += 1
    return (hits / total if total else 0.0), total


def write_corpus(corpus: Corpus, path) -> None:
    """One sentence per line, space-separated tokens, UTF-8."""
    text = "\n".join(" ".join(sentence) for sentence in corpus.sentences)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_corpus(path) -> Corpus:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return Corpus([line.split() for line in lines if line.strip()])
