"""A small sequence recognizer: conv feature stack, bidirectional
recurrent layer, per-frame label posteriors trained with the
alignment-free loss.

The conv stack downsamples width by 4, so a 64x512 canvas yields 128
frames (one per 4 pixel columns); height collapses into the per-frame
feature vector. Training is plain Adam on the mean per-sample loss,
fully determined by (data, config, seed).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import RECOGNIZER_MAGIC, file_sha256, read_container, write_container
from .ctc import Alphabet, DecodeResult, best_path_decode, ctc_loss_graph, ctc_neg_log_posterior
from .errors import ParameterError, ShapeError, TrainingError

log = logging.getLogger(__name__)

FRAME_STRIDE = 4  # canvas columns per output frame


@dataclass(frozen=True)
class RecognizerArch:
    conv_channels: tuple = (12, 24)
    hidden: int = 64


@dataclass
class RecognizerParams:
    arch: RecognizerArch
    alphabet: Alphabet
    canvas_height: int
    params: dict  # name -> Tensor, declaration order

    def tensors(self):
        return list(self.params.values())

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    @property
    def canvas_shape(self) -> tuple[int, int]:
        return (self.canvas_height, self.canvas_height * 8)


def init_recognizer(
    alphabet: Alphabet,
    canvas_height: int,
    rng: np.random.Generator,
    arch: RecognizerArch = RecognizerArch(),
) -> RecognizerParams:
    c1, c2 = arch.conv_channels
    hid = arch.hidden
    feat = c2 * (canvas_height // 4)
    k = alphabet.with_blank

    def normal(shape, std):
        return T.parameter(rng.standard_normal(shape).astype(np.float32) * np.float32(std))

    def zeros(shape):
        return T.parameter(np.zeros(shape, dtype=np.float32))

    params = {
        "conv1_w": normal((c1, 1, 3, 3), np.sqrt(2.0 / 9.0)),
        "conv1_b": zeros((c1,)),
        "conv2_w": normal((c2, c1, 5, 5), np.sqrt(2.0 / (25.0 * c1))),
        "conv2_b": zeros((c2,)),
        "frame_w": normal((feat, hid), np.sqrt(1.0 / feat)),
        "frame_b": zeros((hid,)),
        "fwd_wx": normal((hid, hid), np.sqrt(1.0 / hid)),
        "fwd_wh": normal((hid, hid), 0.5 / np.sqrt(hid)),
        "fwd_b": zeros((hid,)),
        "bwd_wx": normal((hid, hid), np.sqrt(1.0 / hid)),
        "bwd_wh": normal((hid, hid), 0.5 / np.sqrt(hid)),
        "bwd_b": zeros((hid,)),
        "out_w": normal((2 * hid, k), np.sqrt(1.0 / (2 * hid))),
        "out_b": zeros((k,)),
    }
    return RecognizerParams(arch=arch, alphabet=alphabet, canvas_height=canvas_height, params=params)


def _frozen(p: RecognizerParams) -> dict:
    return {k: T.Tensor(v.data) for k, v in p.params.items()}


def recognizer_logits(p: RecognizerParams, images: np.ndarray, train: bool = False) -> T.Tensor:
    """(B, H, W) storage-domain batch to (B, F, K) logits."""
    if images.ndim != 3 or images.shape[1:] != p.canvas_shape:
        raise ShapeError(f"expected batch of {p.canvas_shape} images, got {images.shape}")
    w = p.params if train else _frozen(p)
    hid = p.arch.hidden

    x = T.Tensor(np.ascontiguousarray(images[:, None], dtype=np.float32) * 2.0 - 1.0)
    x = T.silu(T.conv2d(x, w["conv1_w"], w["conv1_b"], stride=2, pad=1))
    x = T.silu(T.conv2d(x, w["conv2_w"], w["conv2_b"], stride=2, pad=2))
    b, c, h4, w4 = x.shape
    x = T.transpose(x, (0, 3, 1, 2)).reshape(b * w4, c * h4)
    x = T.tanh(T.matmul(x, w["frame_w"]) + w["frame_b"])
    frames = T.transpose(x.reshape(b, w4, hid), (1, 0, 2))  # (F, B, hid)

    def sweep(prefix, order):
        h = T.Tensor(np.zeros((b, hid), dtype=np.float32))
        states = [None] * w4
        for t in order:
            h = T.tanh(
                T.matmul(frames[t], w[f"{prefix}_wx"])
                + T.matmul(h, w[f"{prefix}_wh"])
                + w[f"{prefix}_b"]
            )
            states[t] = h
        return states

    fwd = sweep("fwd", range(w4))
    bwd = sweep("bwd", range(w4 - 1, -1, -1))
    outs = [
        T.matmul(T.concat([fwd[t], bwd[t]], axis=1), w["out_w"]) + w["out_b"]
        for t in range(w4)
    ]
    return T.stack(outs, axis=1)  # (B, F, K)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shift = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shift)
    return e / e.sum(axis=-1, keepdims=True)


def recognizer_posteriors_batch(p: RecognizerParams, images: np.ndarray) -> np.ndarray:
    """(B, H, W) batch to (B, F, K) frame posteriors."""
    return _softmax(recognizer_logits(p, images).data)


def recognizer_forward(p: RecognizerParams, img: np.ndarray) -> np.ndarray:
    """Single image to (F, K) frame posteriors (rows sum to 1)."""
    img = np.asarray(img)
    if img.shape != p.canvas_shape:
        raise ShapeError(f"expected a {p.canvas_shape} image, got {img.shape}")
    return recognizer_posteriors_batch(p, img[None])[0]


def recognize(p: RecognizerParams, img: np.ndarray) -> DecodeResult:
    return best_path_decode(recognizer_forward(p, img), p.alphabet)


def transcribe_batch(p: RecognizerParams, images: np.ndarray, batch_size: int = 64) -> list[str]:
    texts = []
    for i in range(0, len(images), batch_size):
        post = recognizer_posteriors_batch(p, images[i : i + batch_size])
        texts.extend(best_path_decode(fp, p.alphabet).text for fp in post)
    return texts


def evaluate_recognizer(p: RecognizerParams, samples) -> tuple[float, float]:
    """(WER, CER) of best-path transcriptions over labelled samples."""
    from .metrics import error_rates

    images = np.stack([s.image for s in samples])
    hyps = transcribe_batch(p, images)
    return error_rates([s.text for s in samples], hyps)


def train_recognizer(
    data,
    cfg,
    rng_seed: int,
    alphabet: Alphabet | None = None,
    arch: RecognizerArch = RecognizerArch(),
) -> RecognizerParams:
    """Adam on the mean sequence loss; fresh seeded initialization.

    Runs of the same (data, cfg, seed) produce bit-identical parameters.
    """
    if len(data) == 0:
        raise ParameterError("empty training set")
    alphabet = alphabet or Alphabet()
    canvas_height = data[0].image.shape[0]
    labels = [alphabet.encode(s.text) for s in data]
    images = np.stack([s.image for s in data]).astype(np.float32)

    rng = np.random.default_rng(rng_seed)
    p = init_recognizer(alphabet, canvas_height, rng, arch)
    tensors = p.tensors()
    opt = T.Adam(tensors, lr=cfg.learning_rate)

    n = len(data)
    batch = min(cfg.batch_size, n)
    step = 0
    for epoch in range(cfg.epochs):
        # cosine decay to 5% cleans up alignment jitter late in training
        opt.lr = cfg.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * epoch / cfg.epochs)))
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            logits = recognizer_logits(p, images[idx], train=True)
            losses = ctc_loss_graph(logits, [labels[i] for i in idx])
            finite = np.isfinite(losses.data)
            if not finite.any():
                raise TrainingError("all sequence losses are infinite", step=step)
            weights = finite.astype(np.float64) / finite.sum()
            loss = (losses * weights).sum()
            if not np.isfinite(float(loss.data)):
                raise TrainingError("loss diverged", step=step)
            T.zero_grads(tensors)
            T.backward(loss)
            T.clip_global_norm(tensors, cfg.grad_clip)
            opt.step()
            epoch_losses.append(float(loss.data))
            step += 1
        log.info("recognizer epoch %d: loss %.4f", epoch + 1, float(np.mean(epoch_losses)))
    return p


def save_recognizer(p: RecognizerParams, path) -> None:
    meta = {
        "version": "OCRv1",
        "arch": {"conv_channels": list(p.arch.conv_channels), "hidden": p.arch.hidden},
        "alphabet": p.alphabet.chars,
        "canvas_height": p.canvas_height,
        "param_count": p.param_count(),
    }
    write_container(path, RECOGNIZER_MAGIC, meta, [(k, v.data) for k, v in p.params.items()])


def load_recognizer(path) -> RecognizerParams:
    meta, params = read_container(path, RECOGNIZER_MAGIC)
    arch = RecognizerArch(
        conv_channels=tuple(meta["arch"]["conv_channels"]), hidden=meta["arch"]["hidden"]
    )
    return RecognizerParams(
        arch=arch,
        alphabet=Alphabet(meta["alphabet"]),
        canvas_height=meta["canvas_height"],
        params={k: T.parameter(v) for k, v in params},
    )


def recognizer_checksum(path) -> str:
    return file_sha256(path)
