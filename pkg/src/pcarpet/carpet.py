"""Exact integer geometry of the planar Sierpinski carpet.

The unit square is ``[-1/2, 1/2]^2``.  A coordinate at *denominator level*
``d`` is an integer ``X`` standing for the real number ``X / (4 * 3**d)``.
With this scaling every level-``d`` cell has side 4, cell corners and the
midpoints used by the point graphs are integral, and all predicates below
are exact integer comparisons.

Symbols are numbered counter-clockwise from the bottom-left corner::

    7 6 5
    8 . 4
    1 2 3
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

N_SYMBOLS = 8
SCALE = 3  # contraction ratio a
SYMBOLS = tuple(range(1, N_SYMBOLS + 1))

# grid column/row of each symbol inside the 3x3 block
SYMBOL_OFFSET = {
    1: (0, 0), 2: (1, 0), 3: (2, 0), 4: (2, 1),
    5: (2, 2), 6: (1, 2), 7: (0, 2), 8: (0, 1),
}
_OFFSET_SYMBOL = {v: k for k, v in SYMBOL_OFFSET.items()}

# fixed points p_i times 2 (so entries are in {-1, 0, 1})
FIXED_POINT2 = {i: (c - 1, r - 1) for i, (c, r) in SYMBOL_OFFSET.items()}

SYMBOL_COL = np.array([0] + [SYMBOL_OFFSET[i][0] for i in SYMBOLS], dtype=np.int64)
SYMBOL_ROW = np.array([0] + [SYMBOL_OFFSET[i][1] for i in SYMBOLS], dtype=np.int64)


class GeometryError(ValueError):
    """Raised when a geometric precondition is violated."""


@dataclass(frozen=True, order=True)
class Word:
    """A finite address ``w_1 ... w_m`` over the symbols 1..8 (most significant first)."""

    symbols: tuple[int, ...] = ()

    def __post_init__(self):
        syms = tuple(int(s) for s in self.symbols)
        for s in syms:
            if not 1 <= s <= N_SYMBOLS:
                raise GeometryError(f"symbol {s} outside 1..{N_SYMBOLS}")
        object.__setattr__(self, "symbols", syms)

    @classmethod
    def parse(cls, text: str | "Word" | Sequence[int]) -> "Word":
        if isinstance(text, Word):
            return text
        if isinstance(text, str):
            return cls(tuple(int(ch) for ch in text.strip()))
        return cls(tuple(text))

    @classmethod
    def from_index(cls, index: int, level: int) -> "Word":
        """Inverse of :attr:`index` (lexicographic rank within ``W_level``)."""
        digits = []
        for _ in range(level):
            index, d = divmod(index, N_SYMBOLS)
            digits.append(d + 1)
        return cls(tuple(reversed(digits)))

    @property
    def level(self) -> int:
        return len(self.symbols)

    @property
    def index(self) -> int:
        idx = 0
        for s in self.symbols:
            idx = idx * N_SYMBOLS + (s - 1)
        return idx

    def __add__(self, other: "Word") -> "Word":
        return Word(self.symbols + Word.parse(other).symbols)

    def prefix(self, n: int) -> "Word":
        return Word(self.symbols[:n])

    def grid(self) -> tuple[int, int]:
        """Column and row of the cell in the ``3^m x 3^m`` grid, ``m = level``."""
        col = row = 0
        for s in self.symbols:
            c, r = SYMBOL_OFFSET[s]
            col, row = 3 * col + c, 3 * row + r
        return col, row

    def __str__(self) -> str:
        return "".join(str(s) for s in self.symbols)

    def __repr__(self) -> str:
        return f"Word({str(self)!r})"


def all_words(level: int) -> list[Word]:
    return [Word.from_index(i, level) for i in range(N_SYMBOLS ** level)]


@dataclass(frozen=True)
class CellBox:
    """Closed axis-aligned square ``[min_x, min_x+side] x [min_y, min_y+side]``."""

    min_x: int
    min_y: int
    side: int
    denom_level: int

    @property
    def max_x(self) -> int:
        return self.min_x + self.side

    @property
    def max_y(self) -> int:
        return self.min_y + self.side

    def rescale(self, denom_level: int) -> "CellBox":
        k = denom_level - self.denom_level
        if k < 0:
            raise GeometryError("cannot coarsen integer coordinates")
        f = 3 ** k
        return CellBox(self.min_x * f, self.min_y * f, self.side * f, denom_level)

    def contains(self, x: int, y: int) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def corners(self) -> list[tuple[int, int]]:
        return [(self.min_x, self.min_y), (self.max_x, self.min_y),
                (self.max_x, self.max_y), (self.min_x, self.max_y)]


def half_width(denom_level: int) -> int:
    """Integer coordinate of ``x = 1/2`` at the given denominator level."""
    return 2 * 3 ** denom_level


def cell_box(w: Word | str, denom_level: int | None = None) -> CellBox:
    """Exact bounding square of ``K_w`` via ``f_i(x) = (x - p_i)/3 + p_i``.

    The similitudes are applied innermost first; each application refines the
    denominator by one level, so ``X -> X + 4 * 3**k * (2 p_i)`` stays integral.
    """
    w = Word.parse(w)
    d = w.level if denom_level is None else denom_level
    if d < w.level:
        raise GeometryError("denominator level must be at least the word level")
    min_x, min_y = -2, -2
    for k, s in enumerate(reversed(w.symbols)):
        px, py = FIXED_POINT2[s]
        min_x += 4 * 3 ** k * px
        min_y += 4 * 3 ** k * py
    return CellBox(min_x, min_y, 4, w.level).rescale(d)


def cell_box_rational(w: Word | str):
    """Corners of ``K_w`` as fractions, by composing the similitudes directly."""
    from fractions import Fraction as Fr

    corners = [(Fr(-1, 2), Fr(-1, 2)), (Fr(1, 2), Fr(1, 2))]
    for s in reversed(Word.parse(w).symbols):
        px, py = FIXED_POINT2[s]
        p = (Fr(px, 2), Fr(py, 2))
        corners = [((x - p[0]) / 3 + p[0], (y - p[1]) / 3 + p[1]) for x, y in corners]
    return corners


class Contact(enum.Enum):
    DISJOINT = "disjoint"
    POINT = "point"
    SEGMENT = "segment"


def cells_intersect(v: Word | str, w: Word | str) -> Contact:
    """Classify ``K_v ∩ K_w`` for two distinct cells of the same level."""
    v, w = Word.parse(v), Word.parse(w)
    if v.level != w.level:
        raise GeometryError("cells_intersect needs words of equal level")
    if v == w:
        raise GeometryError("cells_intersect needs distinct words")
    a, b = cell_box(v), cell_box(w)
    ox = min(a.max_x, b.max_x) - max(a.min_x, b.min_x)
    oy = min(a.max_y, b.max_y) - max(a.min_y, b.min_y)
    if ox < 0 or oy < 0:
        return Contact.DISJOINT
    if ox > 0 or oy > 0:
        return Contact.SEGMENT
    return Contact.POINT


def is_carpet_cell(col: int, row: int, level: int) -> bool:
    """True when grid square ``(col, row)`` of level ``level`` is a carpet cell."""
    for _ in range(level):
        col, c = divmod(col, 3)
        row, r = divmod(row, 3)
        if c == 1 and r == 1:
            return False
    return True


def grid_to_word(col: int, row: int, level: int) -> Word:
    syms = []
    for _ in range(level):
        col, c = divmod(col, 3)
        row, r = divmod(row, 3)
        if (c, r) == (1, 1):
            raise GeometryError("grid square removed from the carpet")
        syms.append(_OFFSET_SYMBOL[(c, r)])
    return Word(tuple(reversed(syms)))


# ---------------------------------------------------------------- symmetries

@dataclass(frozen=True)
class SymmetryElement:
    name: str
    matrix: tuple[tuple[int, int], tuple[int, int]]

    def apply(self, x: int, y: int) -> tuple[int, int]:
        (a, b), (c, d) = self.matrix
        return a * x + b * y, c * x + d * y

    def apply_array(self, xy: np.ndarray) -> np.ndarray:
        return xy @ np.asarray(self.matrix, dtype=np.int64).T

    def compose(self, other: "SymmetryElement") -> "SymmetryElement":
        """Matrix product ``self ∘ other``."""
        m = np.asarray(self.matrix) @ np.asarray(other.matrix)
        key = tuple(tuple(int(v) for v in row) for row in m)
        return _BY_MATRIX[key]

    def __str__(self) -> str:
        return self.name


SYMMETRIES: dict[str, SymmetryElement] = {
    "I": SymmetryElement("I", ((1, 0), (0, 1))),
    "-I": SymmetryElement("-I", ((-1, 0), (0, -1))),
    "T_v": SymmetryElement("T_v", ((-1, 0), (0, 1))),
    "T_h": SymmetryElement("T_h", ((1, 0), (0, -1))),
    "T_+": SymmetryElement("T_+", ((0, 1), (1, 0))),
    "T_-": SymmetryElement("T_-", ((0, -1), (-1, 0))),
    "R_+": SymmetryElement("R_+", ((0, -1), (1, 0))),
    "R_-": SymmetryElement("R_-", ((0, 1), (-1, 0))),
}
_BY_MATRIX = {t.matrix: t for t in SYMMETRIES.values()}


def symmetry(name: str | SymmetryElement) -> SymmetryElement:
    if isinstance(name, SymmetryElement):
        return name
    try:
        return SYMMETRIES[name]
    except KeyError:
        raise GeometryError(f"unknown symmetry {name!r}; expected one of {list(SYMMETRIES)}") from None


@lru_cache(maxsize=None)
def symbol_permutation(name: str) -> tuple[int, ...]:
    """``perm[i]`` is the symbol ``j`` with ``T(K_i) = K_j`` (index 0 unused)."""
    t = symmetry(name)
    perm = [0]
    for i in SYMBOLS:
        box = cell_box(Word((i,)))
        cx, cy = box.min_x + 2, box.min_y + 2  # cell center
        tx, ty = t.apply(cx, cy)
        perm.append(_OFFSET_SYMBOL[((tx + 6 - 2) // 4, (ty + 6 - 2) // 4)])
    return tuple(perm)


def apply_symmetry(t: str | SymmetryElement, w: Word | str) -> Word:
    """The word ``w'`` of the same level with ``T(K_w) = K_{w'}``."""
    perm = symbol_permutation(symmetry(t).name)
    return Word(tuple(perm[s] for s in Word.parse(w).symbols))


def symmetry_index_map(t: str | SymmetryElement, level: int) -> np.ndarray:
    """Array ``m`` with ``m[index(w)] = index(iota_T(w))`` over ``W_level``."""
    perm = np.asarray(symbol_permutation(symmetry(t).name), dtype=np.int64) - 1
    idx = np.arange(N_SYMBOLS ** level, dtype=np.int64)
    out = np.zeros_like(idx)
    for k in range(level):
        digit = (idx // N_SYMBOLS ** k) % N_SYMBOLS
        out += perm[digit + 1] * N_SYMBOLS ** k
    return out


# ---------------------------------------------------------------- lattice points

@dataclass(frozen=True)
class LatticePoint:
    """Point ``(x, y) / (4 * 3**denom_level)`` of the closed unit square."""

    x: int
    y: int
    denom_level: int = 0

    def __post_init__(self):
        h = half_width(self.denom_level)
        if not (-h <= self.x <= h and -h <= self.y <= h):
            raise GeometryError("lattice point outside the unit square")

    def at(self, denom_level: int) -> tuple[int, int]:
        k = denom_level - self.denom_level
        if k < 0:
            raise GeometryError("cannot express point at a coarser denominator")
        return self.x * 3 ** k, self.y * 3 ** k

    def normalized(self) -> "LatticePoint":
        x, y, d = self.x, self.y, self.denom_level
        while d > 0 and x % 3 == 0 and y % 3 == 0:
            x, y, d = x // 3, y // 3, d - 1
        return LatticePoint(x, y, d)

    def __eq__(self, other):
        if not isinstance(other, LatticePoint):
            return NotImplemented
        a, b = self.normalized(), other.normalized()
        return (a.x, a.y, a.denom_level) == (b.x, b.y, b.denom_level)

    def __hash__(self):
        a = self.normalized()
        return hash((a.x, a.y, a.denom_level))

    def as_fraction(self):
        from fractions import Fraction as Fr

        s = 4 * 3 ** self.denom_level
        return Fr(self.x, s), Fr(self.y, s)

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "denom_level": self.denom_level}

    @classmethod
    def from_json(cls, data: dict) -> "LatticePoint":
        return cls(int(data["x"]), int(data["y"]), int(data.get("denom_level", 0)))


def fixed_point(i: int) -> LatticePoint:
    """The fixed point ``p_i`` of ``F_i`` (``p_0`` means ``p_8``)."""
    i = 8 if i % 8 == 0 else i
    px, py = FIXED_POINT2[i]
    return LatticePoint(2 * px, 2 * py, 0)


def midpoint_hat(m: int) -> LatticePoint:
    """Midpoint between ``p_{2m}`` and ``p_{2m+2}`` for ``m = 0..3`` (``p_0 = p_8``)."""
    a, b = fixed_point(2 * m), fixed_point(2 * m + 2)
    return LatticePoint((a.x + b.x) // 2, (a.y + b.y) // 2, 0)


def containing_cells(pt: LatticePoint, level: int) -> list[tuple[int, int]]:
    """Grid squares of ``level`` whose closed box contains ``pt`` and belong to the carpet."""
    d = max(level, pt.denom_level)
    x, y = pt.at(d)
    side = 4 * 3 ** (d - level)
    h = half_width(d)
    n = 3 ** level
    cols = _closed_hits(x + h, side, n)
    rows = _closed_hits(y + h, side, n)
    return [(c, r) for c in cols for r in rows if is_carpet_cell(c, r, level)]


def _closed_hits(offset: int, side: int, n: int) -> list[int]:
    q, rem = divmod(offset, side)
    hits = [q - 1, q] if rem == 0 else [q]
    return [c for c in hits if 0 <= c < n]


def adapted_scale(x: LatticePoint, y: LatticePoint) -> int:
    """Largest ``m`` such that intersecting level-``m`` cells contain ``x`` and ``y``."""
    if x == y:
        raise GeometryError("adapted_scale is undefined for x == y")
    cap = max(x.denom_level, y.denom_level) + 3
    best = 0
    for m in range(1, cap + 1):
        cx, cy = containing_cells(x, m), containing_cells(y, m)
        if not cx or not cy:
            raise GeometryError("point does not lie in the carpet")
        if any(abs(a - c) <= 1 and abs(b - d) <= 1 for a, b in cx for c, d in cy):
            best = m
        else:
            break
    return best


def words_level_count(level: int) -> int:
    return N_SYMBOLS ** level


def parse_words(items: Iterable[str | Word]) -> list[Word]:
    return [Word.parse(it) for it in items]
