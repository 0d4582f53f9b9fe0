"""Forward/reverse diffusion math, guidance combination, and the samplers.

Image conventions
-----------------
Pixels live in two domains. Storage domain is [0, 1] (what the glyph
pipeline and PNG files use). Diffusion domain is [-1, 1], obtained by
``x * 2 - 1``; all math in this module operates there.

Denoiser evaluation contract
----------------------------
Samplers and the hybrid loss are agnostic to the network. They call a
single evaluator::

    evaluate(x, g, w, t) -> DenoiserOutput

where ``x`` is a (B, H, W) batch in diffusion domain, ``g`` is a
(B, H, W) glyph batch in diffusion domain or ``None`` for the null
condition, ``w`` is a (B,) integer array of writer ids (-1 for null),
a (B, D) array of unit style vectors, or ``None`` for the null
condition, and ``t`` is a (B,) integer step array. The returned fields
are shaped like ``x`` and may be plain arrays or autodiff tensors.

Classifier-free guidance uses four evaluations per step: both
conditions, glyph only, writer only, neither. The combined noise
estimate is

    e_full + gamma * e_glyph + eta * e_writer - (gamma + eta) * e_null

computed in the grouped form ``e_full + gamma*(e_glyph - e_null) +
eta*(e_writer - e_null)`` so that equal inputs reproduce ``e_full``
bit-exactly for any scales. The variance field always comes from the
fully-conditioned evaluation. At gamma = eta = 0 the combination
degenerates to the fully-conditioned estimate, and samplers short-cut
to that single evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import NumericError, ParameterError, ShapeError
from .schedule import NoiseSchedule

LAMBDA_VLB = 1e-3  # weight of the variance-learning term in the hybrid loss


def to_diffusion(x: np.ndarray) -> np.ndarray:
    """Map storage-domain pixels [0, 1] to diffusion domain [-1, 1]."""
    return np.asarray(x, dtype=np.float32) * 2.0 - 1.0


def to_storage(x: np.ndarray) -> np.ndarray:
    """Map diffusion-domain values back to clipped storage domain."""
    return np.clip((np.asarray(x) + 1.0) * 0.5, 0.0, 1.0)


@dataclass
class DenoiserOutput:
    """Predicted noise and the raw variance-interpolation field.

    ``nu_raw`` is in [-1, 1]; it is mapped affinely to the interpolation
    weight in [0, 1] where the reverse-step variance is assembled.
    """

    eps_hat: object
    nu_raw: object


@dataclass(frozen=True)
class GuidanceScales:
    """Content (glyph) and style (writer) guidance strengths."""

    gamma: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "eta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ParameterError(f"{name} must be finite and non-negative, got {v}")

    @property
    def is_zero(self) -> bool:
        return self.gamma == 0.0 and self.eta == 0.0


DenoiserEval = Callable[..., DenoiserOutput]


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, T.Tensor) else np.asarray(x)


# -- forward process ---------------------------------------------------------


def forward_marginal(s: NoiseSchedule, x0: np.ndarray, t: int, noise: np.ndarray) -> np.ndarray:
    """Draw x_t directly from x_0: sqrt(ab_t) x0 + sqrt(1 - ab_t) noise."""
    x0 = np.asarray(x0)
    noise = np.asarray(noise)
    if x0.shape != noise.shape:
        raise ShapeError(f"noise shape {noise.shape} != x0 shape {x0.shape}")
    ab = s.alpha_bar_at(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def forward_step(s: NoiseSchedule, x_prev: np.ndarray, t: int, noise: np.ndarray) -> np.ndarray:
    """Single corruption step: sqrt(alpha_t) x_{t-1} + sqrt(1 - alpha_t) noise."""
    x_prev = np.asarray(x_prev)
    noise = np.asarray(noise)
    if x_prev.shape != noise.shape:
        raise ShapeError(f"noise shape {noise.shape} != input shape {x_prev.shape}")
    a = s.alpha_at(t)
    return np.sqrt(a) * x_prev + np.sqrt(1.0 - a) * noise


# -- reverse process ---------------------------------------------------------


def _mean_from_eps(s: NoiseSchedule, x_t: np.ndarray, eps: np.ndarray, t: int) -> np.ndarray:
    a = s.alpha_at(t)
    ab = s.alpha_bar_at(t)
    return (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps) / np.sqrt(a)


def posterior_params(
    s: NoiseSchedule, x_t: np.ndarray, eps: np.ndarray, t: int
) -> tuple[np.ndarray, float]:
    """Exact reverse-conditional mean and variance given the true noise."""
    x_t = np.asarray(x_t)
    eps = np.asarray(eps)
    if x_t.shape != eps.shape:
        raise ShapeError(f"eps shape {eps.shape} != x_t shape {x_t.shape}")
    return _mean_from_eps(s, x_t, eps, t), s.beta_tilde_at(t)


def nu_from_raw(nu_raw: np.ndarray) -> np.ndarray:
    """Affine map of the raw field [-1, 1] to interpolation weights [0, 1]."""
    return np.clip((np.asarray(nu_raw) + 1.0) * 0.5, 0.0, 1.0)


def model_reverse_params(
    s: NoiseSchedule, x_t: np.ndarray, out: DenoiserOutput, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Model mean and per-pixel variance for one reverse step.

    Variance interpolates between beta_t and beta_tilde_t in log space.
    At t = 1 the posterior variance is exactly zero, so the interpolation
    is undefined there; the variance is pinned to beta_1 instead.
    """
    x_t = np.asarray(x_t)
    eps_hat = _data(out.eps_hat)
    nu_raw = _data(out.nu_raw)
    if not (np.all(np.isfinite(eps_hat)) and np.all(np.isfinite(nu_raw))):
        raise NumericError(f"non-finite denoiser output at step {t}")
    mean = _mean_from_eps(s, x_t, eps_hat, t)
    if t == 1:
        var = np.full_like(x_t, s.beta_at(1))
    else:
        nu = nu_from_raw(nu_raw)
        var = np.exp(nu * np.log(s.beta_at(t)) + (1.0 - nu) * np.log(s.beta_tilde_at(t)))
    return mean, var


def guided_epsilon(
    e_full: np.ndarray,
    e_glyph: np.ndarray,
    e_writer: np.ndarray,
    e_null: np.ndarray,
    scales: GuidanceScales,
) -> np.ndarray:
    """Combine the four condition-dropped noise estimates.

    Grouped form of e_full + gamma*e_glyph + eta*e_writer -
    (gamma+eta)*e_null; identical algebraically, and exact at the
    constant-input fixed point.
    """
    grids = [np.asarray(e) for e in (e_full, e_glyph, e_writer, e_null)]
    shape = grids[0].shape
    for g in grids[1:]:
        if g.shape != shape:
            raise ShapeError(f"guidance grids disagree: {g.shape} vs {shape}")
    e_full, e_glyph, e_writer, e_null = grids
    return e_full + scales.gamma * (e_glyph - e_null) + scales.eta * (e_writer - e_null)


# -- samplers ----------------------------------------------------------------


def _writer_arg(w, batch: int):
    """Normalize a writer reference to the batched evaluator form."""
    if w is None:
        return None
    if isinstance(w, (int, np.integer)):
        return np.full(batch, int(w), dtype=np.int64)
    arr = np.asarray(w)
    if arr.ndim == 1 and arr.dtype.kind in "iu" and arr.shape[0] == batch:
        return arr
    if arr.ndim == 1:  # a single style vector
        return np.broadcast_to(arr, (batch, arr.shape[0])).copy()
    return arr


def _guided_eval(d, x, g, w, t: int, scales: GuidanceScales):
    b = x.shape[0]
    tt = np.full(b, t, dtype=np.int64)
    full = d(x, g, w, tt)
    if scales.is_zero:
        return _data(full.eps_hat), _data(full.nu_raw)
    e_full = _data(full.eps_hat)
    e_glyph = _data(d(x, g, None, tt).eps_hat)
    e_writer = _data(d(x, None, w, tt).eps_hat)
    e_null = _data(d(x, None, None, tt).eps_hat)
    eps = guided_epsilon(e_full, e_glyph, e_writer, e_null, scales)
    return eps, _data(full.nu_raw)


def ddpm_sample_batch(
    d: DenoiserEval,
    s: NoiseSchedule,
    glyphs: np.ndarray | None,
    writers,
    scales: GuidanceScales,
    seeds: Sequence[int],
    shape: tuple[int, int] | None = None,
    dtype=np.float32,
) -> np.ndarray:
    """Ancestral sampling over a batch, one seeded generator per item.

    Per-item generators make the result independent of batch grouping:
    sampling items separately or together yields identical arrays.
    """
    if glyphs is None and shape is None:
        raise ParameterError("shape is required when sampling without glyphs")
    h, w_ = glyphs.shape[1:] if glyphs is not None else shape
    gens = [np.random.default_rng(int(seed)) for seed in seeds]
    b = len(gens)
    x = np.stack([g.standard_normal((h, w_)) for g in gens]).astype(dtype)
    wref = _writer_arg(writers, b)
    for t in range(s.T, 0, -1):
        eps, nu_raw = _guided_eval(d, x, glyphs, wref, t, scales)
        mean, var = model_reverse_params(s, x, DenoiserOutput(eps, nu_raw), t)
        if t > 1:
            z = np.stack([g.standard_normal((h, w_)) for g in gens]).astype(dtype)
            x = (mean + np.sqrt(var) * z).astype(dtype)
        else:
            x = mean.astype(dtype)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite sampler state at step {t}")
    return x


def ddpm_sample(
    d: DenoiserEval,
    s: NoiseSchedule,
    g: np.ndarray | None,
    w,
    scales: GuidanceScales,
    rng_seed: int,
    shape: tuple[int, int] | None = None,
    dtype=np.float32,
) -> np.ndarray:
    """Single-image ancestral sampling; returns x_0 in diffusion domain."""
    glyphs = None if g is None else np.asarray(g)[None]
    out = ddpm_sample_batch(d, s, glyphs, w, scales, [rng_seed], shape=shape, dtype=dtype)
    return out[0]


def ddim_step_sequence(T: int, steps: int) -> np.ndarray:
    """Strictly decreasing step subsequence, uniformly spaced, ending at 1.

    Always contains T. Rounding may merge neighbours, so the sequence has
    at most ``steps`` entries.
    """
    if not 1 <= steps <= T:
        raise ParameterError(f"steps must be in 1..{T}, got {steps}")
    ts = np.round(np.linspace(T, 1, steps)).astype(np.int64)
    return np.unique(ts)[::-1]


def ddim_sample_batch(
    d: DenoiserEval,
    s: NoiseSchedule,
    steps: int,
    glyphs: np.ndarray | None,
    writers,
    scales: GuidanceScales,
    seeds: Sequence[int],
    shape: tuple[int, int] | None = None,
    dtype=np.float32,
) -> np.ndarray:
    """Deterministic strided sampling; randomness only enters through x_T."""
    if glyphs is None and shape is None:
        raise ParameterError("shape is required when sampling without glyphs")
    h, w_ = glyphs.shape[1:] if glyphs is not None else shape
    gens = [np.random.default_rng(int(seed)) for seed in seeds]
    b = len(gens)
    x = np.stack([g.standard_normal((h, w_)) for g in gens]).astype(dtype)
    wref = _writer_arg(writers, b)
    seq = ddim_step_sequence(s.T, steps)
    for i, t in enumerate(seq):
        t = int(t)
        prev = int(seq[i + 1]) if i + 1 < len(seq) else 0
        eps, _ = _guided_eval(d, x, glyphs, wref, t, scales)
        ab_t = s.alpha_bar_at(t)
        ab_prev = s.alpha_bar_at(prev)
        x0_hat = (x - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
        x = (np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps).astype(dtype)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite sampler state at step {t}")
    return x


def ddim_sample(
    d: DenoiserEval,
    s: NoiseSchedule,
    steps: int,
    g: np.ndarray | None,
    w,
    scales: GuidanceScales,
    rng_seed: int,
    shape: tuple[int, int] | None = None,
    dtype=np.float32,
) -> np.ndarray:
    """Single-image deterministic sampling with a strided step subsequence."""
    glyphs = None if g is None else np.asarray(g)[None]
    out = ddim_sample_batch(d, s, steps, glyphs, w, scales, [rng_seed], shape=shape, dtype=dtype)
    return out[0]


# -- training objective -------------------------------------------------------


def draw_training_noise(s: NoiseSchedule, batch_size: int, rng: np.random.Generator, shape):
    """Per-item steps (uniform over 1..T) and standard-normal noise."""
    t = rng.integers(1, s.T + 1, size=batch_size)
    eps = rng.standard_normal((batch_size, *shape))
    return t, eps


def hybrid_loss_graph(
    d: DenoiserEval,
    s: NoiseSchedule,
    batch,
    rng_seed: int,
    lambda_vlb: float = LAMBDA_VLB,
):
    """Differentiable hybrid objective over a batch of (x0, glyph, writer).

    Returns ``(total, parts)`` where ``total`` is an autodiff scalar and
    ``parts`` holds the float values of the two terms. The noise-matching
    term is the mean squared error between the drawn and predicted noise.
    The variance term is the reverse-step KL with the model mean held
    constant, so its gradient trains only the interpolation field; the
    t = 1 items contribute their fixed-variance Gaussian log-likelihood,
    which carries no gradient.
    """
    if len(batch) == 0:
        raise ParameterError("empty batch")
    rng = np.random.default_rng(rng_seed)
    x0 = np.stack([np.asarray(item[0], dtype=np.float32) for item in batch])
    glyphs = np.stack([np.asarray(item[1], dtype=np.float32) for item in batch])
    writers = np.asarray([-1 if item[2] is None else int(item[2]) for item in batch])
    b, h, w_ = x0.shape
    t, eps = draw_training_noise(s, b, rng, (h, w_))
    eps = eps.astype(x0.dtype)

    ab = s.alpha_bar[t - 1].reshape(b, 1, 1)
    x_t = (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(x0.dtype)

    out = d(x_t, glyphs, writers, t)
    eps_hat = T.as_tensor(out.eps_hat)
    nu_raw = T.as_tensor(out.nu_raw)

    l_simple = ((eps_hat - eps) ** 2).mean()

    alpha = s.alpha[t - 1].reshape(b, 1, 1)
    beta = s.beta[t - 1].reshape(b, 1, 1)
    btld = s.beta_tilde[t - 1].reshape(b, 1, 1)
    kl_mask = (t >= 2).astype(np.float64).reshape(b, 1, 1)
    log_beta = np.log(beta)
    log_btld = np.where(t.reshape(b, 1, 1) >= 2, np.log(np.maximum(btld, 1e-300)), log_beta)

    # Mean gap between the exact posterior and the model mean, with the
    # predicted noise held constant (variance-only gradient flow).
    eps_hat_const = _data(eps_hat)
    coef = ((1.0 - alpha) / (np.sqrt(1.0 - ab) * np.sqrt(alpha))).astype(x0.dtype)
    dmu = coef * (eps_hat_const - eps)

    nu = (nu_raw + 1.0) * 0.5
    log_var = nu * log_beta + (1.0 - nu) * log_btld
    kl = (
        0.5 * (log_var - log_btld)
        + (btld + dmu**2) * 0.5 * T.exp(-log_var)
        - 0.5
    )
    kl_item = kl.mean(axis=(1, 2))

    # t = 1: fixed-variance Gaussian log-likelihood of the clean image.
    mean1 = (x_t - coef * np.sqrt(alpha) * eps_hat_const) / np.sqrt(alpha)
    beta1 = s.beta_at(1)
    nll1 = 0.5 * np.log(2.0 * np.pi * beta1) + ((x0 - mean1) ** 2) / (2.0 * beta1)
    nll1_item = nll1.mean(axis=(1, 2))

    mask1d = kl_mask.reshape(b)
    l_vlb = (kl_item * mask1d + nll1_item * (1.0 - mask1d)).mean()

    total = l_simple + lambda_vlb * l_vlb
    parts = {"simple": float(l_simple.data), "vlb": float(l_vlb.data)}
    return total, parts


def hybrid_loss(
    d: DenoiserEval,
    s: NoiseSchedule,
    batch,
    rng_seed: int,
    lambda_vlb: float = LAMBDA_VLB,
) -> float:
    """Scalar value of the hybrid objective (see :func:`hybrid_loss_graph`)."""
    total, _ = hybrid_loss_graph(d, s, batch, rng_seed, lambda_vlb)
    return float(total.data)
