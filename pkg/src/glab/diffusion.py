"""Minimal denoising diffusion model over small grayscale rasters.

The forward process mixes an image (mapped affinely to [-1,1]) with
Gaussian noise at a per-step rate set by a linear beta schedule. The
denoiser is a dense MLP that sees the flattened noisy image concatenated
with a sinusoidal step embedding and outputs the denoised image; the
noise prediction used by the reverse chain is the affine residual
eps_hat = (x_t - sqrt(abar_t) * denoised) / sqrt(1 - abar_t). A dense net
narrower than the pixel count cannot predict the noise directly (the
unexplained noise components then amplify by 1/sqrt(abar_T) over the
chain), whereas the denoised image lives near the low-dimensional data
manifold, so this parametrization is what makes the small model work.

Training regresses the denoised image with uniform weight across steps
(equivalent to the noise-prediction squared error reweighted by
(1-abar_t)/abar_t; the uniform weighting trains the structure-forming
high-noise steps far better at this scale). Generation runs the standard
ancestral reverse chain with the denoised prediction clamped to [-1,1];
reverse-step noise uses the posterior variance
(1-abar_{t-1})/(1-abar_t) * beta_t, which is zero at the final step.
Inpainting re-noises the known pixels to the current step before every
reverse update and restores them exactly at the end.

Sampling and inpainting process items in fixed-size chunks of 64 with one
derived RNG stream per item, so results are independent of the worker
count (see `jobs`) and of batch composition.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nnlite
from .errors import InvalidArgumentError, IoError, NumericError
from .seeds import derive_seed
from .synthgen import ImageGrid

CHUNK = 64  # fixed batching unit for sampling/inpainting


@dataclass
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def to_json_dict(self) -> dict:
        return {"T": self.T, "beta_min": float(self.beta[0]), "beta_max": float(self.beta[-1])}


@dataclass
class DenoiserModel:
    mlp: nnlite.MlpParams
    height: int
    width: int
    embed_dim: int

    @property
    def pixels(self) -> int:
        return self.height * self.width


def make_schedule(T: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Linear beta schedule; alpha_bar is the exact running product."""
    if T < 1:
        raise InvalidArgumentError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise InvalidArgumentError(
            f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})"
        )
    if T == 1:
        beta = np.array([beta_min])
    else:
        steps = np.arange(T, dtype=np.float64)
        beta = beta_min + steps / (T - 1) * (beta_max - beta_min)
    alpha = 1.0 - beta
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def default_schedule(T: int = 200) -> NoiseSchedule:
    # beta_max chosen so alpha_bar_T ~ 2e-3: the terminal marginal is
    # indistinguishable from a standard normal at this step count.
    return make_schedule(T, 1e-4, 0.06)


def time_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of an integer step index."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


def embedding_table(T: int, dim: int) -> np.ndarray:
    """Rows 0..T of time_embedding, so emb[t] is the embedding of step t."""
    return np.stack([time_embedding(t, dim) for t in range(T + 1)])


def init_denoiser(
    height: int, width: int, hidden_sizes: list[int], embed_dim: int, seed: int
) -> DenoiserModel:
    pixels = height * width
    sizes = [pixels + embed_dim] + list(hidden_sizes) + [pixels]
    return DenoiserModel(nnlite.mlp_init(sizes, seed), height, width, embed_dim)


def to_signed(values: np.ndarray) -> np.ndarray:
    """[0,1] pixel domain -> [-1,1] diffusion domain."""
    return 2.0 * values - 1.0


def to_unit(values: np.ndarray) -> np.ndarray:
    """[-1,1] diffusion domain -> clamped [0,1] pixel domain."""
    return np.clip((values + 1.0) / 2.0, 0.0, 1.0)


def forward_noise(
    x0: ImageGrid, t: int, eps: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Noised grid sqrt(abar_t)*x + sqrt(1-abar_t)*eps in the [-1,1] domain."""
    if not (1 <= t <= schedule.T):
        raise InvalidArgumentError(f"t={t} outside 1..{schedule.T}")
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.values.shape:
        raise InvalidArgumentError(f"eps shape {eps.shape} != image shape {x0.values.shape}")
    ab = schedule.alpha_bar[t - 1]
    return np.sqrt(ab) * to_signed(x0.values) + np.sqrt(1.0 - ab) * eps


def train(
    model: DenoiserModel,
    dataset,
    schedule: NoiseSchedule,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> tuple[DenoiserModel, list[float]]:
    """Denoising regression training. Returns (trained model, per-epoch loss).

    Each step draws t uniform in 1..T and fresh noise, forms
    x_t = forward_noise(x0, t, eps), and regresses the model output toward
    the clean image; the recorded loss is that mean squared error.
    """
    images = [item[0] if isinstance(item, tuple) else item for item in dataset]
    if not images:
        raise InvalidArgumentError("dataset must not be empty")
    if batch_size < 1:
        raise InvalidArgumentError("batch_size must be >= 1")
    n = len(images)
    d = model.pixels
    x0 = np.stack([to_signed(img.values.reshape(-1)) for img in images])
    emb = embedding_table(schedule.T, model.embed_dim)
    sqrt_ab = np.sqrt(schedule.alpha_bar)
    sqrt_one_minus_ab = np.sqrt(1.0 - schedule.alpha_bar)

    params = model.mlp.copy()
    state = nnlite.adam_init(params, learning_rate, beta1, beta2, epsilon)
    rng = np.random.default_rng(seed)
    losses: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            b = len(idx)
            # stratified step draw: marginally uniform over 1..T, but each
            # batch covers the noise range evenly (lower-variance gradients)
            strata = rng.permutation(b) + rng.random(b)
            t = (strata / b * schedule.T).astype(np.int64) + 1
            eps = rng.standard_normal((b, d))
            x_t = sqrt_ab[t - 1][:, None] * x0[idx] + sqrt_one_minus_ab[t - 1][:, None] * eps
            inputs = np.concatenate([x_t, emb[t]], axis=1)
            denoised, cache = nnlite.mlp_forward_batch(params, inputs)
            resid = denoised - x0[idx]
            batch_loss = float(np.mean(resid**2))
            total += batch_loss * b
            grads = nnlite.mlp_backward_batch(params, cache, 2.0 * resid / (b * d))
            params, state = nnlite.adam_step(params, grads, state)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        losses.append(epoch_loss)
    trained = DenoiserModel(params, model.height, model.width, model.embed_dim)
    return trained, losses


def _reverse_step(
    params: nnlite.MlpParams,
    x: np.ndarray,
    t: int,
    emb_row: np.ndarray,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """Posterior mean of x_{t-1}: noise prediction derived from the denoised image."""
    inputs = np.concatenate([x, np.broadcast_to(emb_row, (x.shape[0], emb_row.size))], axis=1)
    denoised, _ = nnlite.mlp_forward_batch(params, inputs)
    denoised = np.clip(denoised, -1.0, 1.0)
    ab = schedule.alpha_bar[t - 1]
    eps_hat = (x - np.sqrt(ab) * denoised) / np.sqrt(1.0 - ab)
    beta_t = schedule.beta[t - 1]
    coef = beta_t / np.sqrt(1.0 - ab)
    return (x - coef * eps_hat) / np.sqrt(schedule.alpha[t - 1])


def _posterior_sigma(schedule: NoiseSchedule, t: int) -> float:
    ab_prev = schedule.alpha_bar[t - 2] if t >= 2 else 1.0
    var = (1.0 - ab_prev) / (1.0 - schedule.alpha_bar[t - 1]) * schedule.beta[t - 1]
    return float(np.sqrt(var))


def _sample_chunk(args) -> np.ndarray:
    model, schedule, seeds = args
    d = model.pixels
    emb = embedding_table(schedule.T, model.embed_dim)
    gens = [np.random.default_rng(s) for s in seeds]
    x = np.stack([g.standard_normal(d) for g in gens])
    for t in range(schedule.T, 0, -1):
        mean = _reverse_step(model.mlp, x, t, emb[t], schedule)
        if t > 1:
            z = np.stack([g.standard_normal(d) for g in gens])
            x = mean + _posterior_sigma(schedule, t) * z
        else:
            x = mean
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values during sampling")
    return to_unit(x)


def _inpaint_chunk(args) -> np.ndarray:
    model, schedule, seeds, knowns, mask = args
    d = model.pixels
    emb = embedding_table(schedule.T, model.embed_dim)
    gens = [np.random.default_rng(s) for s in seeds]
    known_signed = np.stack([to_signed(k.reshape(-1)) for k in knowns])
    m = mask.reshape(-1).astype(np.float64)
    sqrt_ab = np.sqrt(schedule.alpha_bar)
    sqrt_one_minus_ab = np.sqrt(1.0 - schedule.alpha_bar)
    x = np.stack([g.standard_normal(d) for g in gens])
    for t in range(schedule.T, 0, -1):
        eps_known = np.stack([g.standard_normal(d) for g in gens])
        known_t = sqrt_ab[t - 1] * known_signed + sqrt_one_minus_ab[t - 1] * eps_known
        x = m * known_t + (1.0 - m) * x
        mean = _reverse_step(model.mlp, x, t, emb[t], schedule)
        if t > 1:
            z = np.stack([g.standard_normal(d) for g in gens])
            x = mean + _posterior_sigma(schedule, t) * z
        else:
            x = mean
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values during inpainting")
    out = to_unit(x)
    # exact restore of the known pixels
    return np.where(m.astype(bool), np.stack([k.reshape(-1) for k in knowns]), out)


def _run_chunks(worker, tasks: list, jobs: int) -> list[np.ndarray]:
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(worker, tasks))


def sample(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    n: int,
    seed: int,
    jobs: int = 1,
) -> list[ImageGrid]:
    """Ancestral samples; sample i uses the stream derived as "sample/i"."""
    if n < 0:
        raise InvalidArgumentError("n must be >= 0")
    seeds = [derive_seed(seed, f"sample/{i}") for i in range(n)]
    tasks = [
        (model, schedule, seeds[start : start + CHUNK]) for start in range(0, n, CHUNK)
    ]
    flat = np.concatenate(_run_chunks(_sample_chunk, tasks, jobs)) if tasks else np.zeros((0,))
    return [ImageGrid(row.reshape(model.height, model.width)) for row in flat]


def inpaint(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    known: ImageGrid,
    mask: np.ndarray,
    seed: int,
) -> ImageGrid:
    """Fill the mask=0 pixels; mask=1 pixels are returned exactly as given."""
    return inpaint_many(model, schedule, [known], mask, seed)[0]


def inpaint_many(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    knowns: list[ImageGrid],
    mask: np.ndarray,
    seed: int,
    jobs: int = 1,
) -> list[ImageGrid]:
    """Inpaint a batch; item i uses the stream derived as "inpaint/i"."""
    mask = np.asarray(mask)
    for k in knowns:
        if mask.shape != k.values.shape:
            raise InvalidArgumentError(
                f"mask shape {mask.shape} does not match image {k.values.shape}"
            )
    seeds = [derive_seed(seed, f"inpaint/{i}") for i in range(len(knowns))]
    tasks = [
        (
            model,
            schedule,
            seeds[start : start + CHUNK],
            [k.values for k in knowns[start : start + CHUNK]],
            mask,
        )
        for start in range(0, len(knowns), CHUNK)
    ]
    if not tasks:
        return []
    flat = np.concatenate(_run_chunks(_inpaint_chunk, tasks, jobs))
    return [ImageGrid(row.reshape(model.height, model.width)) for row in flat]


def save_model(model: DenoiserModel, schedule: NoiseSchedule, path_base) -> None:
    """Checkpoint (<base>.glnn) plus a JSON sidecar (<base>.json)."""
    base = Path(path_base)
    nnlite.save_params(model.mlp, base.with_suffix(".glnn"))
    sidecar = {
        "height": model.height,
        "width": model.width,
        "embed_dim": model.embed_dim,
        "schedule": schedule.to_json_dict(),
    }
    base.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def load_model(path_base) -> tuple[DenoiserModel, NoiseSchedule]:
    base = Path(path_base)
    sidecar_path = base.with_suffix(".json")
    if not sidecar_path.exists():
        raise IoError(f"missing model sidecar {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    params = nnlite.load_params(base.with_suffix(".glnn"))
    model = DenoiserModel(params, sidecar["height"], sidecar["width"], sidecar["embed_dim"])
    sched = sidecar["schedule"]
    return model, make_schedule(sched["T"], sched["beta_min"], sched["beta_max"])
