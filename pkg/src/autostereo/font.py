"""Built-in 8x8 bitmap digits used for labelled glyph scenes."""

import numpy as np

_DIGITS = {
    0: """
..####..
.##..##.
.##.###.
.######.
.###.##.
.##..##.
..####..
........""",
    1: """
...##...
..###...
.####...
...##...
...##...
...##...
.######.
........""",
    2: """
..####..
.##..##.
.....##.
...###..
..##....
.##.....
.######.
........""",
    3: """
..####..
.##..##.
.....##.
...###..
.....##.
.##..##.
..####..
........""",
    4: """
....###.
...####.
..##.##.
.##..##.
.#######
.....##.
.....##.
........""",
    5: """
.######.
.##.....
.#####..
.....##.
.....##.
.##..##.
..####..
........""",
    6: """
...###..
..##....
.##.....
.#####..
.##..##.
.##..##.
..####..
........""",
    7: """
.######.
.##..##.
....##..
...##...
...##...
...##...
...##...
........""",
    8: """
..####..
.##..##.
.##..##.
..####..
.##..##.
.##..##.
..####..
........""",
    9: """
..####..
.##..##.
.##..##.
..#####.
.....##.
....##..
..###...
........""",
}


def _parse(text):
    rows = [r for r in text.strip("\n").splitlines()]
    return np.array([[c == "#" for c in r] for r in rows], dtype=bool)


GLYPHS = np.stack([_parse(_DIGITS[k]) for k in range(10)])
GLYPHS.setflags(write=False)
NUM_GLYPHS = GLYPHS.shape[0]


def glyph(category: int) -> np.ndarray:
    """Boolean 8x8 bitmap for digit ``category`` (True = ink)."""
    if not 0 <= category < NUM_GLYPHS:
        raise ValueError(f"glyph category must be in 0..{NUM_GLYPHS - 1}, got {category}")
    return GLYPHS[category]
