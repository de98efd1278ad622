"""Exact image measurement: blob counting and region occupancy.

Binarization treats any value below the threshold as ink. Components are
4-connected; labels are assigned in row-major first-encounter order, which
keeps labelings deterministic, and components below `min_area` pixels are
ignored by the counters (single-pixel sampling noise).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .synthgen import ImageGrid

DEFAULT_THRESHOLD = 0.5
DEFAULT_MIN_AREA = 3


@dataclass(frozen=True)
class Component:
    label: int
    pixel_count: int
    bbox: tuple[int, int, int, int]  # (min_row, min_col, max_row, max_col), inclusive


@dataclass
class ComponentLabeling:
    labels: np.ndarray  # int label grid, 0 = background
    components: list[Component]


def label_components(image: ImageGrid, threshold: float = DEFAULT_THRESHOLD) -> ComponentLabeling:
    """4-connected labeling of ink pixels (value < threshold)."""
    if not (0.0 < threshold < 1.0):
        raise InvalidArgumentError(f"threshold {threshold} outside (0,1)")
    ink = image.values < threshold
    height, width = ink.shape
    labels = np.zeros((height, width), dtype=np.int32)
    components: list[Component] = []
    next_label = 1
    for row in range(height):
        for col in range(width):
            if not ink[row, col] or labels[row, col]:
                continue
            queue = deque([(row, col)])
            labels[row, col] = next_label
            count = 0
            min_r = max_r = row
            min_c = max_c = col
            while queue:
                r, c = queue.popleft()
                count += 1
                min_r, max_r = min(min_r, r), max(max_r, r)
                min_c, max_c = min(min_c, c), max(max_c, c)
                for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= nr < height and 0 <= nc < width and ink[nr, nc] and not labels[nr, nc]:
                        labels[nr, nc] = next_label
                        queue.append((nr, nc))
            components.append(Component(next_label, count, (min_r, min_c, max_r, max_c)))
            next_label += 1
    return ComponentLabeling(labels, components)


def count_circles(
    image: ImageGrid,
    threshold: float = DEFAULT_THRESHOLD,
    min_area: int = DEFAULT_MIN_AREA,
) -> tuple[int, ComponentLabeling]:
    """Number of ink components with at least `min_area` pixels."""
    labeling = label_components(image, threshold)
    count = sum(1 for comp in labeling.components if comp.pixel_count >= min_area)
    return count, labeling


def region_occupied(
    image: ImageGrid,
    region: np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
    min_area: int = DEFAULT_MIN_AREA,
) -> bool:
    """True iff the region holds at least `min_area` ink pixels."""
    region = np.asarray(region, dtype=bool)
    if region.shape != image.values.shape:
        raise InvalidArgumentError(
            f"region shape {region.shape} does not match image {image.values.shape}"
        )
    ink_in_region = int(np.count_nonzero((image.values < threshold) & region))
    return ink_in_region >= min_area


def labeling_to_image(labeling: ComponentLabeling) -> ImageGrid:
    """Debug view: each component rendered at a distinct gray level."""
    n = max(1, len(labeling.components))
    values = np.ones(labeling.labels.shape)
    mask = labeling.labels > 0
    values[mask] = (labeling.labels[mask] - 1) / n * 0.8
    return ImageGrid(values)
