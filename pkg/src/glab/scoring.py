"""Statistics over probe outcomes: histograms, divergences, genericity scores.

Two score bases are kept apart and labeled: completion probability (a model
probability, reported with a degenerate interval) and reproduction rate
(successes over trials, reported with a Wilson 95% interval). Rankings
never mix bases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

Z_95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass
class Histogram:
    bins: dict[int, float]
    support: list[int]
    sample_size: int

    def to_json_dict(self) -> dict:
        return {
            "bins": {str(k): self.bins[k] for k in self.support},
            "sample_size": self.sample_size,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Histogram":
        bins = {int(k): float(v) for k, v in doc["bins"].items()}
        return cls(bins, sorted(bins), int(doc["sample_size"]))


def histogram(values: list[int], sample_size: int | None = None) -> Histogram:
    """Normalized empirical frequencies of integer observations."""
    if not values:
        raise InvalidArgumentError("histogram needs at least one value")
    bins: dict[int, float] = {}
    for v in values:
        bins[int(v)] = bins.get(int(v), 0.0) + 1.0
    n = len(values)
    bins = {k: c / n for k, c in bins.items()}
    return Histogram(bins, sorted(bins), len(values) if sample_size is None else sample_size)


def _floored(hist: Histogram, support: list[int], floor: float) -> np.ndarray:
    p = np.array([hist.bins.get(k, 0.0) for k in support])
    p[p == 0.0] = floor
    return p / p.sum()


def kl_divergence(P: Histogram, Q: Histogram, floor: float = 1e-9) -> float:
    """KL(P || Q) over the unioned support, flooring missing mass."""
    if floor <= 0:
        raise InvalidArgumentError("floor must be > 0")
    support = sorted(set(P.support) | set(Q.support))
    p = _floored(P, support, floor)
    q = _floored(Q, support, floor)
    return float(np.sum(p * np.log(p / q)))


def total_variation(P: Histogram, Q: Histogram) -> float:
    """Half the L1 distance over the unioned support."""
    support = sorted(set(P.support) | set(Q.support))
    p = np.array([P.bins.get(k, 0.0) for k in support])
    q = np.array([Q.bins.get(k, 0.0) for k in support])
    return float(min(1.0, 0.5 * np.sum(np.abs(p - q))))  # clamp summation slop


def _average_ranks(xs: list[float]) -> np.ndarray:
    arr = np.asarray(xs, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr))
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # 1-based average rank
        i = j + 1
    return ranks


def spearman(xs: list[float], ys: list[float]) -> float:
    """Rank correlation with average ranks for ties."""
    if len(xs) != len(ys):
        raise InvalidArgumentError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise InvalidArgumentError("need at least 2 points")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float(np.sum(rx**2)) * float(np.sum(ry**2)))
    if denom == 0.0:
        raise InvalidArgumentError("rank correlation undefined for constant input")
    return float(np.sum(rx * ry) / denom)


def wilson_interval(successes: int, trials: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    if not (0 <= successes <= trials):
        raise InvalidArgumentError("successes outside 0..trials")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)  # exact at the endpoints
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class TrialEvidence:
    """k successes out of n probe trials (sampling or inpainting)."""

    successes: int
    trials: int


@dataclass(frozen=True)
class CompletionEvidence:
    """Per-token conditional probabilities of an element's completion."""

    token_probs: tuple[float, ...]
    occurrences: int = 0


@dataclass
class GenericityScore:
    element: str
    score: float
    basis: str  # "completion-probability" | "reproduction-rate"
    sample_size: int
    interval: tuple[float, float]

    def to_json_dict(self) -> dict:
        return {
            "element": self.element,
            "score": self.score,
            "basis": self.basis,
            "sample_size": self.sample_size,
            "interval": [self.interval[0], self.interval[1]],
        }


def genericity_score(element: str, evidence) -> GenericityScore:
    """Score an element from probe evidence; the basis is recorded.

    Reproduction-rate evidence scores k/n with a Wilson 95% interval;
    completion evidence scores the geometric mean of the per-token
    probabilities (interval degenerate at the score).
    """
    if isinstance(evidence, TrialEvidence):
        if evidence.trials == 0:
            raise InvalidArgumentError("reproduction evidence needs n >= 1 trials")
        score = evidence.successes / evidence.trials
        return GenericityScore(
            element,
            score,
            "reproduction-rate",
            evidence.trials,
            wilson_interval(evidence.successes, evidence.trials),
        )
    if isinstance(evidence, CompletionEvidence):
        if not evidence.token_probs:
            raise InvalidArgumentError("completion evidence needs at least one token")
        if any(not (0.0 <= p <= 1.0) for p in evidence.token_probs):
            raise InvalidArgumentError("token probabilities outside [0,1]")
        score = float(np.exp(np.mean(np.log(np.maximum(evidence.token_probs, 1e-300)))))
        return GenericityScore(
            element, score, "completion-probability", evidence.occurrences, (score, score)
        )
    raise InvalidArgumentError(f"unsupported evidence type {type(evidence).__name__}")


def rank_elements(scores: list[GenericityScore]) -> list[GenericityScore]:
    """Descending by score; ties broken by element id."""
    if not scores:
        raise InvalidArgumentError("nothing to rank")
    return sorted(scores, key=lambda s: (-s.score, s.element))
