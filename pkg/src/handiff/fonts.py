"""Loading the committed fixed-metric bitmap font.

The binary container is documented in ``scripts/make_builtin_font.py``
(magic ``BFNT1``, cell geometry, then per-glyph packed bitmaps). All
rendering in this package goes through this file so rasters never
depend on host system fonts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

MAGIC = b"BFNT1"


@dataclass(frozen=True)
class BitmapFont:
    height: int
    width: int
    gap: int
    glyphs: dict  # char -> (height, width) bool array

    @property
    def advance(self) -> int:
        """Horizontal distance between successive glyph origins."""
        return self.width + self.gap

    def coverage(self) -> set:
        return set(self.glyphs)

    def text_width(self, n_chars: int) -> int:
        if n_chars < 1:
            return 0
        return n_chars * self.width + (n_chars - 1) * self.gap


def parse_font(blob: bytes) -> BitmapFont:
    if blob[:5] != MAGIC:
        raise ValueError("not a bitmap font container")
    h, w, gap, count = struct.unpack("<BBBH", blob[5:10])
    per = (h * w + 7) // 8
    off = 10
    glyphs = {}
    for _ in range(count):
        (cp,) = struct.unpack("<I", blob[off : off + 4])
        off += 4
        bits = np.unpackbits(np.frombuffer(blob[off : off + per], dtype=np.uint8))
        off += per
        glyphs[chr(cp)] = bits[: h * w].reshape(h, w).astype(bool)
    return BitmapFont(height=h, width=w, gap=gap, glyphs=glyphs)


@lru_cache(maxsize=None)
def builtin_font() -> BitmapFont:
    blob = resources.files("handiff").joinpath("data/builtin.font").read_bytes()
    return parse_font(blob)


def load_font(path: str | Path | None = None) -> BitmapFont:
    if path is None:
        return builtin_font()
    return parse_font(Path(path).read_bytes())
