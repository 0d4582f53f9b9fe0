"""Text rasterization and the fixed-canvas image protocol.

All images here are storage domain: float32 in [0, 1], white strokes on
black. The canvas protocol resizes content to a fixed height keeping
aspect ratio (content aspect at most 8), then pads symmetrically to a
width of 8x the height with black margins. ``strip_margins`` inverts
the padding by dropping black column runs on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import AspectError, ParameterError, RenderError
from .fonts import BitmapFont, builtin_font

MAX_ASPECT = 8.0
MARGIN_THRESHOLD = 0.06  # above the sampler noise floor seen at desk scale


@dataclass(frozen=True)
class Canvas:
    """Target raster geometry; width is pinned to 8x height."""

    height: int = 64

    def __post_init__(self):
        if self.height < 8 or self.height % 8 != 0:
            raise ParameterError(f"canvas height must be a positive multiple of 8, got {self.height}")

    @property
    def width(self) -> int:
        return self.height * 8

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass
class GlyphImage:
    """A canvas-shaped raster plus the width of its non-margin content."""

    pixels: np.ndarray
    content_width: int


def render_glyph(text: str, font: BitmapFont | None = None) -> np.ndarray:
    """Rasterize text with the fixed-metric bitmap font.

    Deterministic: the same text always yields byte-identical rasters.
    """
    font = font or builtin_font()
    if text == "":
        raise RenderError("cannot render empty text")
    missing = sorted({c for c in text if c not in font.glyphs})
    if missing:
        raise RenderError(f"font has no glyph for {missing[0]!r}")
    h = font.height
    out = np.zeros((h, font.text_width(len(text))), dtype=np.float32)
    x = 0
    for ch in text:
        out[:, x : x + font.width] = font.glyphs[ch]
        x += font.advance
    return out


def _resize_bilinear(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """(H, W) float array to target (height, width)."""
    h, w = size
    pil = Image.fromarray(np.ascontiguousarray(img, dtype=np.float32), mode="F")
    return np.asarray(pil.resize((w, h), Image.BILINEAR), dtype=np.float32)


def normalize_to_canvas(img: np.ndarray, canvas: Canvas = Canvas()) -> GlyphImage:
    """Resize to canvas height keeping aspect, pad to canvas width.

    Padding is centered; an odd remainder goes to the right margin.
    """
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 2 or img.shape[0] == 0 or img.shape[1] == 0:
        raise ParameterError(f"expected a non-empty 2-D image, got shape {img.shape}")
    h, w = img.shape
    aspect = w / h
    if aspect > MAX_ASPECT:
        raise AspectError(f"content aspect {aspect:.3f} exceeds {MAX_ASPECT}")
    content_w = max(1, round(w * canvas.height / h))
    content = np.clip(_resize_bilinear(img, (canvas.height, content_w)), 0.0, 1.0)
    pad = canvas.width - content_w
    left = pad // 2
    out = np.zeros(canvas.shape, dtype=np.float32)
    out[:, left : left + content_w] = content
    return GlyphImage(pixels=out, content_width=content_w)


def strip_margins(img: np.ndarray, threshold: float = MARGIN_THRESHOLD) -> np.ndarray:
    """Drop maximal left/right column runs whose peak intensity is below
    the threshold. Never removes everything; an all-black image keeps
    its middle column."""
    img = np.asarray(img)
    col_peak = img.max(axis=0)
    keep = np.flatnonzero(col_peak >= threshold)
    if keep.size == 0:
        mid = img.shape[1] // 2
        return img[:, mid : mid + 1]
    return img[:, keep[0] : keep[-1] + 1]


def render_to_canvas(text: str, canvas: Canvas = Canvas(), font: BitmapFont | None = None) -> GlyphImage:
    """Render, trim blank bearing columns, normalize.

    The glyph-condition producer used everywhere; trimming first makes
    ``content_width`` measure ink rather than font cell geometry.
    """
    return normalize_to_canvas(strip_margins(render_glyph(text, font), 0.5), canvas)
