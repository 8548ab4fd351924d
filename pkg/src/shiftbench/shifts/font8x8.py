"""Embedded fixed 8x8 bitmap glyphs for deterministic text rendering.

Block-letter forms for a-z (rendered from lowercased label text), digits
and a little punctuation; any other printable character falls back to a
filled box so rendering is total over printable ASCII.
"""

from __future__ import annotations

import numpy as np

_GLYPHS = {
    "a": ("..##....", ".#..#...", "#....#..", "#....#..", "######..", "#....#..", "#....#..", "........"),
    "b": ("#####...", "#....#..", "#....#..", "#####...", "#....#..", "#....#..", "#####...", "........"),
    "c": (".####...", "#....#..", "#.......", "#.......", "#.......", "#....#..", ".####...", "........"),
    "d": ("#####...", "#....#..", "#....#..", "#....#..", "#....#..", "#....#..", "#####...", "........"),
    "e": ("######..", "#.......", "#.......", "#####...", "#.......", "#.......", "######..", "........"),
    "f": ("######..", "#.......", "#.......", "#####...", "#.......", "#.......", "#.......", "........"),
    "g": (".####...", "#....#..", "#.......", "#..###..", "#....#..", "#....#..", ".####...", "........"),
    "h": ("#....#..", "#....#..", "#....#..", "######..", "#....#..", "#....#..", "#....#..", "........"),
    "i": (".####...", "..#.....", "..#.....", "..#.....", "..#.....", "..#.....", ".####...", "........"),
    "j": ("..####..", "....#...", "....#...", "....#...", "....#...", "#...#...", ".###....", "........"),
    "k": ("#....#..", "#...#...", "#..#....", "###.....", "#..#....", "#...#...", "#....#..", "........"),
    "l": ("#.......", "#.......", "#.......", "#.......", "#.......", "#.......", "######..", "........"),
    "m": ("#....#..", "##..##..", "#.##.#..", "#....#..", "#....#..", "#....#..", "#....#..", "........"),
    "n": ("#....#..", "##...#..", "#.#..#..", "#..#.#..", "#...##..", "#....#..", "#....#..", "........"),
    "o": (".####...", "#....#..", "#....#..", "#....#..", "#....#..", "#....#..", ".####...", "........"),
    "p": ("#####...", "#....#..", "#....#..", "#####...", "#.......", "#.......", "#.......", "........"),
    "q": (".####...", "#....#..", "#....#..", "#....#..", "#..#.#..", "#...#...", ".###.#..", "........"),
    "r": ("#####...", "#....#..", "#....#..", "#####...", "#..#....", "#...#...", "#....#..", "........"),
    "s": (".#####..", "#.......", "#.......", ".####...", ".....#..", ".....#..", "#####...", "........"),
    "t": ("######..", "..#.....", "..#.....", "..#.....", "..#.....", "..#.....", "..#.....", "........"),
    "u": ("#....#..", "#....#..", "#....#..", "#....#..", "#....#..", "#....#..", ".####...", "........"),
    "v": ("#....#..", "#....#..", "#....#..", "#....#..", ".#..#...", ".#..#...", "..##....", "........"),
    "w": ("#....#..", "#....#..", "#....#..", "#.##.#..", "#.##.#..", "##..##..", "#....#..", "........"),
    "x": ("#....#..", ".#..#...", "..##....", "..##....", ".#..#...", "#....#..", "#....#..", "........"),
    "y": ("#....#..", ".#..#...", "..##....", "..#.....", "..#.....", "..#.....", "..#.....", "........"),
    "z": ("######..", ".....#..", "....#...", "...#....", "..#.....", ".#......", "######..", "........"),
    "0": (".####...", "#...##..", "#..#.#..", "#.#..#..", "##...#..", "#....#..", ".####...", "........"),
    "1": ("..#.....", ".##.....", "..#.....", "..#.....", "..#.....", "..#.....", ".###....", "........"),
    "2": (".####...", "#....#..", ".....#..", "...##...", "..#.....", ".#......", "######..", "........"),
    "3": (".####...", "#....#..", ".....#..", "..###...", ".....#..", "#....#..", ".####...", "........"),
    "4": ("....#...", "...##...", "..#.#...", ".#..#...", "######..", "....#...", "....#...", "........"),
    "5": ("######..", "#.......", "#####...", ".....#..", ".....#..", "#....#..", ".####...", "........"),
    "6": (".####...", "#.......", "#####...", "#....#..", "#....#..", "#....#..", ".####...", "........"),
    "7": ("######..", ".....#..", "....#...", "...#....", "..#.....", "..#.....", "..#.....", "........"),
    "8": (".####...", "#....#..", "#....#..", ".####...", "#....#..", "#....#..", ".####...", "........"),
    "9": (".####...", "#....#..", "#....#..", ".#####..", ".....#..", ".....#..", ".####...", "........"),
    " ": ("........",) * 8,
    "-": ("........", "........", "........", ".####...", "........", "........", "........", "........"),
    "_": ("........", "........", "........", "........", "........", "........", "######..", "........"),
    ".": ("........", "........", "........", "........", "........", "..##....", "..##....", "........"),
    "'": ("..#.....", "..#.....", "........", "........", "........", "........", "........", "........"),
}

_FALLBACK = (".######.",) * 6 + ("........",) * 2

GLYPH_SIZE = 8


def _compile(rows) -> np.ndarray:
    assert len(rows) == 8 and all(len(r) == 8 for r in rows)
    return np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)

_TABLE = {ch: _compile(rows) for ch, rows in _GLYPHS.items()}
_FALLBACK_TABLE = _compile(_FALLBACK)


def glyph(ch: str) -> np.ndarray:
    """8x8 boolean bitmap for one character (lowercased; box fallback)."""
    return _TABLE.get(ch.lower(), _FALLBACK_TABLE)


def text_mask(text: str, scale: int = 1) -> np.ndarray:
    """Boolean mask of the rendered text, shape (8*scale, 8*scale*len)."""
    if scale < 1:
        raise ValueError("font scale must be >= 1")
    cells = [glyph(ch) for ch in text]
    mask = np.concatenate(cells, axis=1) if cells else np.zeros((8, 0), bool)
    if scale > 1:
        mask = np.kron(mask, np.ones((scale, scale), dtype=bool))
    return mask
