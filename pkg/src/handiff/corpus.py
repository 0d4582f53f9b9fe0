"""Deterministic pseudo-writer corpus generation and dataset manifests.

Real handwriting corpora are licensed, so training data here comes from
a parametric stand-in: each writer id maps (via hashing with the corpus
seed) to a distortion profile (slant, stroke thickness, smooth elastic
jitter, baseline wobble) applied to rendered glyphs. Per-sample seeds
are derived from (corpus seed, writer, word, sample index), so any
subset of the corpus can be generated independently and serial or
parallel generation agree bit for bit.

Manifests are UTF-8 JSON-lines files: one flat object per record with
fields ``image`` (relative path), ``text``, ``writer`` (integer) and
optional ``confidence``. Images are stored as 8-bit grayscale PNG.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import AspectError, ManifestError, ParameterError
from .glyphs import Canvas, GlyphImage, normalize_to_canvas, render_glyph, strip_margins


@dataclass
class LabeledSample:
    image: np.ndarray  # storage-domain canvas
    text: str
    writer_id: int


def word_seed(word: str) -> int:
    """Stable 63-bit hash of a word (process-independent)."""
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def derived_rng(*entropy: int) -> np.random.Generator:
    """Generator seeded from a tuple of non-negative integers."""
    return np.random.default_rng(np.random.SeedSequence([int(e) & (2**63 - 1) for e in entropy]))


# -- writer styles -------------------------------------------------------------


@dataclass(frozen=True)
class WriterStyle:
    """Distortion profile; all-zero parameters mean the identity chain."""

    slant: float = 0.0  # horizontal shear per vertical pixel
    thickness: int = 0  # <0 erode strokes, >0 dilate, magnitude = kernel growth
    elastic_amp: float = 0.0  # displacement in pixels at the prescaled resolution
    elastic_sigma: float = 6.0
    wobble_amp: float = 0.0  # baseline sine amplitude in pixels
    wobble_waves: float = 1.0  # periods across the image width
    slant_jitter: float = 0.0  # per-sample slant variation
    prescale: int = 6  # integer upscale before sub-stroke operations

    @property
    def is_identity(self) -> bool:
        return (
            self.slant == 0.0
            and self.thickness == 0
            and self.elastic_amp == 0.0
            and self.wobble_amp == 0.0
            and self.slant_jitter == 0.0
        )

    @classmethod
    def identity(cls) -> "WriterStyle":
        return cls()

    @classmethod
    def from_seed(cls, writer_id: int, corpus_seed: int) -> "WriterStyle":
        rng = derived_rng(corpus_seed, writer_id)
        return cls(
            slant=float(rng.uniform(-0.38, 0.38)),
            thickness=int(rng.integers(-1, 3)),
            elastic_amp=float(rng.uniform(0.5, 1.8)),
            elastic_sigma=float(rng.uniform(5.0, 9.0)),
            wobble_amp=float(rng.uniform(0.0, 2.0)),
            wobble_waves=float(rng.uniform(0.5, 2.0)),
            slant_jitter=0.05,
        )


def apply_writer_distortion(
    img: np.ndarray, style: WriterStyle, rng: np.random.Generator
) -> np.ndarray:
    """Run the distortion chain; exact identity for neutral styles."""
    img = np.asarray(img, dtype=np.float32)
    if style.is_identity:
        return img
    x = np.repeat(np.repeat(img, style.prescale, axis=0), style.prescale, axis=1)

    slant = style.slant + style.slant_jitter * float(rng.uniform(-1.0, 1.0))
    if slant != 0.0:
        h = x.shape[0]
        pad = int(np.ceil(abs(slant) * h / 2)) + 1
        x = np.pad(x, ((0, 0), (pad, pad)))
        yy, xx = np.meshgrid(np.arange(h), np.arange(x.shape[1]), indexing="ij")
        src_x = xx + slant * (yy - (h - 1) / 2.0)
        x = ndimage.map_coordinates(x, [yy, src_x], order=1, mode="constant", cval=0.0)

    if style.thickness > 0:
        k = style.thickness + 1
        x = ndimage.grey_dilation(x, size=(k, k))
    elif style.thickness < 0:
        k = -style.thickness + 1
        x = ndimage.grey_erosion(x, size=(k, k))

    if style.elastic_amp > 0.0:
        dy = ndimage.gaussian_filter(rng.standard_normal(x.shape), style.elastic_sigma)
        dx = ndimage.gaussian_filter(rng.standard_normal(x.shape), style.elastic_sigma)
        dy *= style.elastic_amp / (np.abs(dy).max() + 1e-9)
        dx *= style.elastic_amp / (np.abs(dx).max() + 1e-9)
        yy, xx = np.meshgrid(np.arange(x.shape[0]), np.arange(x.shape[1]), indexing="ij")
        x = ndimage.map_coordinates(x, [yy + dy, xx + dx], order=1, mode="constant", cval=0.0)

    if style.wobble_amp > 0.0:
        h, w = x.shape
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        shift = style.wobble_amp * np.sin(
            2.0 * np.pi * style.wobble_waves * np.arange(w) / w + phase
        )
        pad = int(np.ceil(style.wobble_amp)) + 1
        x = np.pad(x, ((pad, pad), (0, 0)))
        yy, xx = np.meshgrid(np.arange(x.shape[0]), np.arange(w), indexing="ij")
        x = ndimage.map_coordinates(x, [yy + shift[None, :], xx], order=1, mode="constant")

    return np.clip(x, 0.0, 1.0).astype(np.float32)


# -- corpus generation ----------------------------------------------------------


@dataclass(frozen=True)
class CorpusSpec:
    """What to generate: lexicon x writers, or an explicit pair list."""

    lexicon: tuple
    writers: tuple
    samples_per_pair: int = 1
    pairs: tuple | None = None  # optional explicit (word, writer) coverage
    canvas: Canvas = field(default_factory=Canvas)

    def __post_init__(self):
        object.__setattr__(self, "lexicon", tuple(self.lexicon))
        object.__setattr__(self, "writers", tuple(self.writers))
        if self.pairs is not None:
            object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.samples_per_pair < 1:
            raise ParameterError("samples_per_pair must be at least 1")

    def all_pairs(self) -> list:
        if self.pairs is not None:
            return list(self.pairs)
        return [(word, writer) for word in self.lexicon for writer in self.writers]


def make_sample(
    word: str,
    writer_id: int,
    corpus_seed: int,
    sample_index: int = 0,
    canvas: Canvas = Canvas(),
    style: WriterStyle | None = None,
) -> LabeledSample:
    """One deterministic corpus sample; a pure function of its arguments."""
    if style is None:
        style = WriterStyle.from_seed(writer_id, corpus_seed)
    rng = derived_rng(corpus_seed, writer_id, word_seed(word), sample_index)
    raw = render_glyph(word)
    distorted = apply_writer_distortion(raw, style, rng)
    trimmed = strip_margins(distorted, threshold=0.02)
    norm = normalize_to_canvas(trimmed, canvas)
    return LabeledSample(image=norm.pixels, text=word, writer_id=writer_id)


def _lexicon_offenders(words) -> list[str]:
    """Words whose trimmed raster already exceeds the aspect bound."""
    bad = []
    for word in words:
        raw = strip_margins(render_glyph(word), 0.5)
        if raw.shape[1] / raw.shape[0] > 8.0:
            bad.append(word)
    return bad


def generate_pseudo_corpus(spec: CorpusSpec, rng_seed: int) -> list[LabeledSample]:
    """Generate all requested samples; reproducible from (spec, seed)."""
    offenders = _lexicon_offenders(dict.fromkeys(w for w, _ in spec.all_pairs()))
    samples = []
    for word, writer in spec.all_pairs():
        if word in offenders:
            continue
        for k in range(spec.samples_per_pair):
            try:
                samples.append(make_sample(word, writer, rng_seed, k, spec.canvas))
            except AspectError:
                if word not in offenders:
                    offenders.append(word)
    if offenders:
        raise AspectError(f"words exceed the canvas aspect bound: {', '.join(sorted(offenders))}")
    return samples


def corpus_checksum(samples) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(s.text.encode())
        h.update(int(s.writer_id).to_bytes(8, "little", signed=True))
        h.update(np.ascontiguousarray(s.image, dtype=np.float32).tobytes())
    return h.hexdigest()


# -- image and manifest files -----------------------------------------------------


def save_png(img: np.ndarray, path: Path) -> None:
    arr = np.round(np.clip(np.asarray(img), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def load_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


@dataclass
class ManifestRecord:
    image: str  # path relative to the manifest file
    text: str
    writer: int
    confidence: float | None = None


_FIELDS = {"image", "text", "writer", "confidence"}


def write_manifest(records, path: Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            obj = {"image": r.image, "text": r.text, "writer": int(r.writer)}
            if r.confidence is not None:
                obj["confidence"] = float(r.confidence)
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_manifest(path: Path, check_images: bool = True) -> list[ManifestRecord]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"invalid JSON ({e.msg})", line=lineno) from e
            if not isinstance(obj, dict):
                raise ManifestError("record is not an object", line=lineno)
            unknown = set(obj) - _FIELDS
            if unknown:
                raise ManifestError(f"unknown field {sorted(unknown)[0]!r}", line=lineno)
            for key in ("image", "text", "writer"):
                if key not in obj:
                    raise ManifestError(f"missing {key!r} field", line=lineno)
            if not isinstance(obj["text"], str) or obj["text"] == "":
                raise ManifestError("'text' must be a non-empty string", line=lineno)
            if not isinstance(obj["writer"], int) or isinstance(obj["writer"], bool):
                raise ManifestError("'writer' must be an integer", line=lineno)
            conf = obj.get("confidence")
            if conf is not None and (not isinstance(conf, (int, float)) or conf < 0):
                raise ManifestError("'confidence' must be a non-negative number", line=lineno)
            rec = ManifestRecord(
                image=obj["image"], text=obj["text"], writer=obj["writer"],
                confidence=None if conf is None else float(conf),
            )
            if check_images and not (path.parent / rec.image).is_file():
                raise FileNotFoundError(path.parent / rec.image)
            records.append(rec)
    return records


def save_samples(samples, out_dir: Path, prefix: str = "img") -> Path:
    """Write PNGs plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, s in enumerate(samples):
        name = f"{prefix}_{i:06d}.png"
        save_png(s.image, out_dir / name)
        conf = getattr(s, "confidence", None)
        records.append(
            ManifestRecord(image=name, text=s.text, writer=int(s.writer_id), confidence=conf)
        )
    manifest = out_dir / "manifest.jsonl"
    write_manifest(records, manifest)
    return manifest


def load_samples(manifest_path: Path) -> list[LabeledSample]:
    manifest_path = Path(manifest_path)
    records = read_manifest(manifest_path)
    return [
        LabeledSample(
            image=load_png(manifest_path.parent / r.image), text=r.text, writer_id=r.writer
        )
        for r in records
    ]
