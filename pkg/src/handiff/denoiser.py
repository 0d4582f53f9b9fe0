"""The conditional denoising network and its training loop.

The network consumes the noisy image and the glyph condition as two
channels, runs a small encoder-decoder (three interior resolutions,
residual blocks, nearest-neighbour upsampling, skip connections), and
emits two channels: the noise estimate and a tanh-bounded raw variance
field. A stride-2 stem keeps the full-resolution work to the input and
output convolutions so desk-scale training stays in the minutes range.

Conditioning: the step index is embedded with sinusoidal features and
passed through a 2-layer feed-forward map; the writer id selects a
learnable embedding that is L2-normalized at lookup (a dedicated slot
serves the null condition). Their sum modulates every residual block
through feature-wise linear modulation (scale and shift per channel).
A null glyph is an all-black canvas.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import GENERATOR_MAGIC, file_sha256, read_container, write_container
from .diffusion import DenoiserOutput, hybrid_loss_graph, to_diffusion
from .errors import ParameterError, ShapeError, TrainingError, WriterLookupError
from .schedule import NoiseSchedule, build_schedule

log = logging.getLogger(__name__)

SINUSOID_BASE = 10_000.0


def sinusoidal_embedding(t, dim: int) -> np.ndarray:
    """Raw sinusoidal step features: [sin(t f_i), cos(t f_i)] with
    f_i = base^(-2i/dim). Scalar t gives (dim,), arrays give (B, dim)."""
    if dim % 2 != 0 or dim < 2:
        raise ParameterError(f"embedding dim must be even and positive, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = SINUSOID_BASE ** (-2.0 * np.arange(half) / dim)
    angles = t_arr[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1).astype(np.float32)


@dataclass
class WriterTable:
    """Learnable per-writer style vectors plus one reserved null slot."""

    vectors: T.Tensor  # (count + 1, dim); last row is the null condition

    @property
    def count(self) -> int:
        return self.vectors.data.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.vectors.data.shape[1]


def writer_embedding(table: WriterTable, w: int | None) -> np.ndarray:
    """Unit-norm style vector for a writer id, or the null slot for None."""
    if w is None:
        row = table.vectors.data[table.count]
    else:
        if not 0 <= int(w) < table.count:
            raise WriterLookupError(f"writer id {w} outside 0..{table.count - 1}")
        row = table.vectors.data[int(w)]
    return (row / np.linalg.norm(row)).astype(np.float32)


def slerp_writers(z1: np.ndarray, z2: np.ndarray, lam: float) -> np.ndarray:
    """Spherical blend z1 cos(lam pi/2) + z2 sin(lam pi/2), re-normalized.

    The quarter-circle combination preserves unit norm only for
    orthogonal inputs, so the result is re-normalized; the endpoints
    are returned exactly.
    """
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"interpolation factor must be in [0, 1], got {lam}")
    z1 = np.asarray(z1, dtype=np.float32)
    z2 = np.asarray(z2, dtype=np.float32)
    if lam == 0.0:
        return z1.copy()
    if lam == 1.0:
        return z2.copy()
    z = z1 * np.cos(lam * np.pi / 2.0) + z2 * np.sin(lam * np.pi / 2.0)
    return (z / np.linalg.norm(z)).astype(np.float32)


# -- architecture ----------------------------------------------------------------


@dataclass(frozen=True)
class DenoiserArch:
    base_width: int = 16
    emb_dim: int = 64  # sinusoidal width, feed-forward width, writer width

    @property
    def channels(self) -> tuple[int, int, int]:
        return (self.base_width, 2 * self.base_width, 4 * self.base_width)


@dataclass
class DenoiserParams:
    arch: DenoiserArch
    schedule: NoiseSchedule
    n_writers: int
    params: dict  # name -> Tensor, declaration order
    version: str = "GDMv1"

    def tensors(self):
        return list(self.params.values())

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    @property
    def writer_table(self) -> WriterTable:
        return WriterTable(self.params["writers"])


def _resblock_params(name, cin, cout, emb, normal, zeros, params):
    params[f"{name}_conv1_w"] = normal((cout, cin, 3, 3), np.sqrt(2.0 / (9.0 * cin)))
    params[f"{name}_conv1_b"] = zeros((cout,))
    params[f"{name}_film_w"] = zeros((emb, 2 * cout))
    params[f"{name}_film_b"] = zeros((2 * cout,))
    params[f"{name}_conv2_w"] = normal((cout, cout, 3, 3), np.sqrt(2.0 / (9.0 * cout)))
    params[f"{name}_conv2_b"] = zeros((cout,))
    if cin != cout:
        params[f"{name}_skip_w"] = normal((cout, cin, 1, 1), np.sqrt(1.0 / cin))
        params[f"{name}_skip_b"] = zeros((cout,))


def init_denoiser(
    n_writers: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    arch: DenoiserArch = DenoiserArch(),
) -> DenoiserParams:
    c0, c1, c2 = arch.channels
    emb = arch.emb_dim

    def normal(shape, std):
        return T.parameter(rng.standard_normal(shape).astype(np.float32) * np.float32(std))

    def zeros(shape):
        return T.parameter(np.zeros(shape, dtype=np.float32))

    params: dict = {}
    params["stem_w"] = normal((c0, 2, 3, 3), np.sqrt(2.0 / 18.0))
    params["stem_b"] = zeros((c0,))
    _resblock_params("enc0", c0, c0, emb, normal, zeros, params)
    _resblock_params("enc1", c0, c1, emb, normal, zeros, params)
    _resblock_params("enc2", c1, c2, emb, normal, zeros, params)
    params["dec1_fuse_w"] = normal((c1, c2 + c1, 1, 1), np.sqrt(1.0 / (c2 + c1)))
    params["dec1_fuse_b"] = zeros((c1,))
    _resblock_params("dec1", c1, c1, emb, normal, zeros, params)
    params["dec0_fuse_w"] = normal((c0, c1 + c0, 1, 1), np.sqrt(1.0 / (c1 + c0)))
    params["dec0_fuse_b"] = zeros((c0,))
    _resblock_params("dec0", c0, c0, emb, normal, zeros, params)
    params["head_w"] = zeros((2, c0, 3, 3))
    params["head_b"] = zeros((2,))
    params["tff1_w"] = normal((emb, emb), np.sqrt(1.0 / emb))
    params["tff1_b"] = zeros((emb,))
    params["tff2_w"] = normal((emb, emb), np.sqrt(1.0 / emb))
    params["tff2_b"] = zeros((emb,))
    params["writers"] = normal((n_writers + 1, emb), 1.0)
    return DenoiserParams(arch=arch, schedule=schedule, n_writers=n_writers, params=params)


def _frozen(p: DenoiserParams) -> dict:
    return {k: T.Tensor(v.data) for k, v in p.params.items()}


def _resblock(w, name, x, cond):
    cout = w[f"{name}_conv1_w"].data.shape[0]
    h = T.conv2d(x, w[f"{name}_conv1_w"], w[f"{name}_conv1_b"], stride=1, pad=1)
    h = T.silu(h)
    sb = T.matmul(cond, w[f"{name}_film_w"]) + w[f"{name}_film_b"]
    scale = sb[:, :cout].reshape(-1, cout, 1, 1)
    shift = sb[:, cout:].reshape(-1, cout, 1, 1)
    h = h * (1.0 + scale) + shift
    h = T.conv2d(h, w[f"{name}_conv2_w"], w[f"{name}_conv2_b"], stride=1, pad=1)
    if f"{name}_skip_w" in w:
        x = T.conv2d(x, w[f"{name}_skip_w"], w[f"{name}_skip_b"], stride=1, pad=0)
    return h + x


def _writer_vectors(p: DenoiserParams, w, batch: int, table) -> T.Tensor:
    """Resolve a writer reference batch to unit-norm embedding rows."""
    null_idx = p.n_writers
    if w is None:
        ids = np.full(batch, null_idx, dtype=np.intp)
    else:
        arr = np.asarray(w)
        if arr.ndim == 2:  # precomputed style vectors (e.g. interpolations)
            arr = arr.astype(np.float32)
            norms = np.linalg.norm(arr, axis=1, keepdims=True)
            return T.Tensor(arr / norms)
        ids = arr.astype(np.intp).copy()
        if np.any(ids >= null_idx) or np.any(ids < -1):
            raise WriterLookupError(f"writer ids outside 0..{null_idx - 1}: {ids}")
        ids[ids < 0] = null_idx
    rows = T.embedding(table, ids)
    norm = ((rows * rows).sum(axis=1, keepdims=True)) ** 0.5
    return rows / norm


def evaluate(
    p: DenoiserParams,
    x: np.ndarray,
    g: np.ndarray | None,
    w,
    t,
    train: bool = False,
) -> DenoiserOutput:
    """Batched network evaluation (the contract the samplers consume).

    ``x`` (B, H, W) diffusion domain; ``g`` matching glyph batch in
    diffusion domain or None for the null condition; ``w`` writer ids
    (-1 for null), (B, D) style vectors, or None; ``t`` step scalar or
    per-item array.
    """
    x = np.asarray(x, dtype=np.float32)
    b, hh, ww_ = x.shape
    if hh % 8 != 0 or ww_ % 8 != 0:
        raise ShapeError(f"spatial dims must be multiples of 8, got {x.shape}")
    if g is None:
        g = np.full_like(x, -1.0)  # all-black canvas in diffusion domain
    else:
        g = np.asarray(g, dtype=np.float32)
        if g.shape != x.shape:
            raise ShapeError(f"glyph batch {g.shape} does not match image batch {x.shape}")
    weights = p.params if train else _frozen(p)

    t_arr = np.broadcast_to(np.asarray(t, dtype=np.int64), (b,))
    temb = T.Tensor(sinusoidal_embedding(t_arr, p.arch.emb_dim))
    cond = T.matmul(T.silu(T.matmul(temb, weights["tff1_w"]) + weights["tff1_b"]), weights["tff2_w"]) + weights["tff2_b"]
    cond = cond + _writer_vectors(p, w, b, weights["writers"])

    inp = T.Tensor(np.ascontiguousarray(np.stack([x, g], axis=1)))
    h = T.conv2d(inp, weights["stem_w"], weights["stem_b"], stride=2, pad=1)
    e0 = _resblock(weights, "enc0", h, cond)
    e1 = _resblock(weights, "enc1", T.avg_pool2d(e0), cond)
    e2 = _resblock(weights, "enc2", T.avg_pool2d(e1), cond)
    d1 = T.concat([T.upsample_nearest2(e2), e1], axis=1)
    d1 = T.conv2d(d1, weights["dec1_fuse_w"], weights["dec1_fuse_b"], stride=1, pad=0)
    d1 = _resblock(weights, "dec1", d1, cond)
    d0 = T.concat([T.upsample_nearest2(d1), e0], axis=1)
    d0 = T.conv2d(d0, weights["dec0_fuse_w"], weights["dec0_fuse_b"], stride=1, pad=0)
    d0 = _resblock(weights, "dec0", d0, cond)
    out = T.conv2d(T.upsample_nearest2(d0), weights["head_w"], weights["head_b"], stride=1, pad=1)
    return DenoiserOutput(eps_hat=out[:, 0], nu_raw=T.tanh(out[:, 1]))


def denoise(p: DenoiserParams, x_t: np.ndarray, g: np.ndarray | None, w, t: int) -> DenoiserOutput:
    """Single-image evaluation; deterministic for fixed inputs."""
    x_t = np.asarray(x_t)
    glyph = None if g is None else np.asarray(g)[None]
    wref = None
    if w is not None:
        wref = np.asarray(w)[None] if np.ndim(w) == 1 else np.array([int(w)])
    out = evaluate(p, x_t[None], glyph, wref, int(t))
    return DenoiserOutput(eps_hat=out.eps_hat.data[0], nu_raw=out.nu_raw.data[0])


def batch_evaluator(p: DenoiserParams):
    """Adapter returning the plain callable the samplers expect."""

    def d(x, g, w, t):
        return evaluate(p, x, g, w, t, train=False)

    return d


# -- training ----------------------------------------------------------------------


@dataclass
class DenoiserExample:
    """One training triple, storage domain."""

    image: np.ndarray
    glyph: np.ndarray
    writer_id: int


def train_denoiser(
    data: list[DenoiserExample],
    schedule: NoiseSchedule,
    cfg,
    rng_seed: int,
    arch: DenoiserArch = DenoiserArch(),
) -> DenoiserParams:
    """Adam on the hybrid objective with independent condition dropout.

    Per example per step, the glyph and writer conditions are each
    dropped to null with probability ``cfg.cond_dropout``. Bit-identical
    for fixed (data, schedule, cfg, seed).
    """
    if len(data) == 0:
        raise ParameterError("empty training set")
    x0 = np.stack([to_diffusion(s.image) for s in data])
    glyphs = np.stack([to_diffusion(s.glyph) for s in data])
    writer_ids = np.array([s.writer_id for s in data], dtype=np.int64)
    n_writers = int(writer_ids.max()) + 1 if len(writer_ids) else 1

    rng = np.random.default_rng(rng_seed)
    p = init_denoiser(n_writers, schedule, rng, arch)
    tensors = p.tensors()
    opt = T.Adam(tensors, lr=cfg.learning_rate)

    d = lambda x, g, w, t: evaluate(p, x, g, w, t, train=True)  # noqa: E731
    n = len(data)
    batch = min(cfg.batch_size, n)
    step = 0
    for epoch in range(cfg.epochs):
        opt.lr = cfg.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * epoch / cfg.epochs)))
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            drop_g = rng.random(len(idx)) < cfg.cond_dropout
            drop_w = rng.random(len(idx)) < cfg.cond_dropout
            step_seed = int(rng.integers(2**63 - 1))
            items = []
            for j, i in enumerate(idx):
                g_j = np.full_like(glyphs[i], -1.0) if drop_g[j] else glyphs[i]
                w_j = -1 if drop_w[j] else int(writer_ids[i])
                items.append((x0[i], g_j, w_j))
            loss, parts = hybrid_loss_graph(d, schedule, items, step_seed, cfg.lambda_vlb)
            if not np.isfinite(float(loss.data)):
                raise TrainingError("loss diverged", step=step)
            T.zero_grads(tensors)
            T.backward(loss)
            T.clip_global_norm(tensors, cfg.grad_clip)
            opt.step()
            epoch_losses.append(float(loss.data))
            step += 1
        log.info("denoiser epoch %d: loss %.4f", epoch + 1, float(np.mean(epoch_losses)))
    return p


def save_denoiser(p: DenoiserParams, path) -> None:
    meta = {
        "version": p.version,
        "arch": {"base_width": p.arch.base_width, "emb_dim": p.arch.emb_dim},
        "schedule": p.schedule.spec(),
        "n_writers": p.n_writers,
        "param_count": p.param_count(),
    }
    write_container(path, GENERATOR_MAGIC, meta, [(k, v.data) for k, v in p.params.items()])


def load_denoiser(path) -> DenoiserParams:
    meta, params = read_container(path, GENERATOR_MAGIC)
    return DenoiserParams(
        arch=DenoiserArch(**meta["arch"]),
        schedule=build_schedule(**meta["schedule"]),
        n_writers=meta["n_writers"],
        params={k: T.parameter(v) for k, v in params},
        version=meta["version"],
    )


def denoiser_checksum(path) -> str:
    return file_sha256(path)
