#!/usr/bin/env python3
"""Regenerate the committed bitmap font binary from the glyph art below.

Usage: python scripts/make_builtin_font.py [out_path]

Font container layout (little-endian):
    magic   5 bytes  b"BFNT1"
    height  u8       glyph cell height in pixels
    width   u8       glyph cell width in pixels
    gap     u8       inter-glyph spacing in pixels
    count   u16      number of glyphs
    then per glyph:
        codepoint u32
        bits      ceil(height*width / 8) bytes, row-major, MSB first
"""

import struct
import sys
from pathlib import Path

H, W, GAP = 7, 5, 1

GLYPHS = {
    " ": """
.....
.....
.....
.....
.....
.....
.....
""",
    "a": """
.....
.....
.###.
....#
.####
#...#
.####
""",
    "b": """
#....
#....
####.
#...#
#...#
#...#
####.
""",
    "c": """
.....
.....
.###.
#....
#....
#...#
.###.
""",
    "d": """
....#
....#
.####
#...#
#...#
#...#
.####
""",
    "e": """
.....
.....
.###.
#...#
#####
#....
.###.
""",
    "f": """
..##.
.#..#
.#...
###..
.#...
.#...
.#...
""",
    "g": """
.....
.####
#...#
#...#
.####
....#
.###.
""",
    "h": """
#....
#....
####.
#...#
#...#
#...#
#...#
""",
    "i": """
..#..
.....
.##..
..#..
..#..
..#..
.###.
""",
    "j": """
...#.
.....
..##.
...#.
...#.
#..#.
.##..
""",
    "k": """
#....
#....
#..#.
#.#..
##...
#.#..
#..#.
""",
    "l": """
.##..
..#..
..#..
..#..
..#..
..#..
.###.
""",
    "m": """
.....
.....
##.#.
#.#.#
#.#.#
#.#.#
#.#.#
""",
    "n": """
.....
.....
####.
#...#
#...#
#...#
#...#
""",
    "o": """
.....
.....
.###.
#...#
#...#
#...#
.###.
""",
    "p": """
.....
####.
#...#
#...#
####.
#....
#....
""",
    "q": """
.....
.####
#...#
#...#
.####
....#
....#
""",
    "r": """
.....
.....
#.##.
##..#
#....
#....
#....
""",
    "s": """
.....
.....
.####
#....
.###.
....#
####.
""",
    "t": """
.#...
.#...
###..
.#...
.#...
.#..#
..##.
""",
    "u": """
.....
.....
#...#
#...#
#...#
#..##
.##.#
""",
    "v": """
.....
.....
#...#
#...#
#...#
.#.#.
..#..
""",
    "w": """
.....
.....
#...#
#.#.#
#.#.#
#.#.#
.#.#.
""",
    "x": """
.....
.....
#...#
.#.#.
..#..
.#.#.
#...#
""",
    "y": """
.....
#...#
#...#
#...#
.####
....#
.###.
""",
    "z": """
.....
.....
#####
...#.
..#..
.#...
#####
""",
    "A": """
.###.
#...#
#...#
#####
#...#
#...#
#...#
""",
    "B": """
####.
#...#
#...#
####.
#...#
#...#
####.
""",
    "C": """
.###.
#...#
#....
#....
#....
#...#
.###.
""",
    "D": """
####.
#...#
#...#
#...#
#...#
#...#
####.
""",
    "E": """
#####
#....
#....
####.
#....
#....
#####
""",
    "F": """
#####
#....
#....
####.
#....
#....
#....
""",
    "G": """
.###.
#...#
#....
#.###
#...#
#...#
.###.
""",
    "H": """
#...#
#...#
#...#
#####
#...#
#...#
#...#
""",
    "I": """
.###.
..#..
..#..
..#..
..#..
..#..
.###.
""",
    "J": """
..###
...#.
...#.
...#.
...#.
#..#.
.##..
""",
    "K": """
#...#
#..#.
#.#..
##...
#.#..
#..#.
#...#
""",
    "L": """
#....
#....
#....
#....
#....
#....
#####
""",
    "M": """
#...#
##.##
#.#.#
#.#.#
#...#
#...#
#...#
""",
    "N": """
#...#
##..#
#.#.#
#..##
#...#
#...#
#...#
""",
    "O": """
.###.
#...#
#...#
#...#
#...#
#...#
.###.
""",
    "P": """
####.
#...#
#...#
####.
#....
#....
#....
""",
    "Q": """
.###.
#...#
#...#
#...#
#.#.#
#..#.
.##.#
""",
    "R": """
####.
#...#
#...#
####.
#.#..
#..#.
#...#
""",
    "S": """
.####
#....
#....
.###.
....#
....#
####.
""",
    "T": """
#####
..#..
..#..
..#..
..#..
..#..
..#..
""",
    "U": """
#...#
#...#
#...#
#...#
#...#
#...#
.###.
""",
    "V": """
#...#
#...#
#...#
#...#
#...#
.#.#.
..#..
""",
    "W": """
#...#
#...#
#...#
#.#.#
#.#.#
##.##
#...#
""",
    "X": """
#...#
#...#
.#.#.
..#..
.#.#.
#...#
#...#
""",
    "Y": """
#...#
#...#
.#.#.
..#..
..#..
..#..
..#..
""",
    "Z": """
#####
....#
...#.
..#..
.#...
#....
#####
""",
    "0": """
.###.
#...#
#..##
#.#.#
##..#
#...#
.###.
""",
    "1": """
..#..
.##..
..#..
..#..
..#..
..#..
.###.
""",
    "2": """
.###.
#...#
....#
...#.
..#..
.#...
#####
""",
    "3": """
.###.
#...#
....#
..##.
....#
#...#
.###.
""",
    "4": """
...#.
..##.
.#.#.
#..#.
#####
...#.
...#.
""",
    "5": """
#####
#....
####.
....#
....#
#...#
.###.
""",
    "6": """
..##.
.#...
#....
####.
#...#
#...#
.###.
""",
    "7": """
#####
....#
...#.
..#..
.#...
.#...
.#...
""",
    "8": """
.###.
#...#
#...#
.###.
#...#
#...#
.###.
""",
    "9": """
.###.
#...#
#...#
.####
....#
...#.
.##..
""",
    ".": """
.....
.....
.....
.....
.....
.##..
.##..
""",
    ",": """
.....
.....
.....
.....
.##..
..#..
.#...
""",
    "'": """
.##..
..#..
.#...
.....
.....
.....
.....
""",
    "-": """
.....
.....
.....
.###.
.....
.....
.....
""",
}


def pack(art: str) -> bytes:
    rows = [r for r in art.strip("\n").split("\n")]
    assert len(rows) == H and all(len(r) == W for r in rows), rows
    bits = [c == "#" for row in rows for c in row]
    out = bytearray((len(bits) + 7) // 8)
    for i, bit in enumerate(bits):
        if bit:
            out[i // 8] |= 0x80 >> (i % 8)
    return bytes(out)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "src" / "handiff" / "data" / "builtin.font"
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    blob = bytearray(b"BFNT1")
    blob += struct.pack("<BBBH", H, W, GAP, len(GLYPHS))
    for ch in sorted(GLYPHS):
        blob += struct.pack("<I", ord(ch))
        blob += pack(GLYPHS[ch])
    out.write_bytes(bytes(blob))
    print(f"wrote {out} ({len(blob)} bytes, {len(GLYPHS)} glyphs)")


if __name__ == "__main__":
    main()
