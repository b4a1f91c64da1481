"""Graph families on the carpet: cell graphs, chain graphs and point graphs.

Cell graphs index their vertices by the lexicographic rank of the word, so
children of a cell ``w`` at a deeper level occupy the contiguous block
``w.index * 8**k + arange(8**k)``.  Point graphs keep exact integer vertex
coordinates at denominator level ``n`` and are ordered by ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from . import carpet as geo
from .carpet import N_SYMBOLS, Word

VERTEX_BUDGET = 10 ** 7
MAX_CELL_DEGREE = 7

SEGMENT, POINT = 1, 0


class GraphError(ValueError):
    """Invalid graph request."""


class BudgetExceeded(GraphError):
    """The requested graph exceeds the configured vertex budget."""


def check_budget(n_vertices: int, budget: int | None = None) -> None:
    budget = VERTEX_BUDGET if budget is None else budget
    if n_vertices > budget:
        raise BudgetExceeded(f"{n_vertices} vertices exceeds the budget of {budget}")


# ------------------------------------------------------------ index <-> grid

def word_index_to_grid(index: np.ndarray, level: int) -> tuple[np.ndarray, np.ndarray]:
    index = np.asarray(index, dtype=np.int64)
    col = np.zeros_like(index)
    row = np.zeros_like(index)
    for k in range(level):
        digit = (index // N_SYMBOLS ** k) % N_SYMBOLS + 1
        col += geo.SYMBOL_COL[digit] * 3 ** k
        row += geo.SYMBOL_ROW[digit] * 3 ** k
    return col, row


_OFFSET_TO_DIGIT = -np.ones((3, 3), dtype=np.int64)
for _s, (_c, _r) in geo.SYMBOL_OFFSET.items():
    _OFFSET_TO_DIGIT[_c, _r] = _s - 1


def grid_to_word_index(col: np.ndarray, row: np.ndarray, level: int) -> np.ndarray:
    """Word ranks for grid squares; ``-1`` where the square is not a carpet cell."""
    col = np.asarray(col, dtype=np.int64)
    row = np.asarray(row, dtype=np.int64)
    out = np.zeros_like(col)
    bad = np.zeros(col.shape, dtype=bool)
    for k in range(level):
        d = _OFFSET_TO_DIGIT[(col // 3 ** k) % 3, (row // 3 ** k) % 3]
        bad |= d < 0
        out += np.where(d < 0, 0, d) * N_SYMBOLS ** k
    out[bad] = -1
    return out


# ------------------------------------------------------------ base graph

@dataclass(eq=False)
class Graph:
    """Undirected simple graph with edges stored once as ``i < j``."""

    n_vertices: int
    edges: np.ndarray
    subsets: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.edges = e

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Signed edge-vertex incidence ``D`` with ``(D f)_e = f_i - f_j``."""
        e = self.edges
        m = len(e)
        rows = np.repeat(np.arange(m), 2)
        cols = e.ravel()
        vals = np.tile([1.0, -1.0], m)
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n_vertices))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        e = self.edges
        data = np.ones(2 * len(e))
        a = sp.csr_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                          shape=(self.n_vertices, self.n_vertices))
        a.sort_indices()
        return a

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def laplacian(self) -> sp.csr_matrix:
        d = self.incidence
        return (d.T @ d).tocsr()

    def bfs(self, sources: Iterable[int]) -> np.ndarray:
        """Graph distance from the source set; ``-1`` for unreachable vertices."""
        a = self.adjacency
        dist = -np.ones(self.n_vertices, dtype=np.int64)
        frontier = np.unique(np.asarray(list(sources), dtype=np.int64))
        dist[frontier] = 0
        d = 0
        while frontier.size:
            d += 1
            nb = a[frontier].indices
            nb = np.unique(nb[dist[nb] < 0])
            dist[nb] = d
            frontier = nb
        return dist

    def is_connected(self) -> bool:
        if self.n_vertices == 0:
            return True
        return bool((self.bfs([0]) >= 0).all())

    def component_labels(self) -> np.ndarray:
        from scipy.sparse.csgraph import connected_components

        return connected_components(self.adjacency, directed=False)[1]

    def induced(self, vertices: np.ndarray):
        """Induced subgraph; returns ``(graph, old_to_new)``."""
        vertices = np.asarray(vertices, dtype=np.int64)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[vertices] = np.arange(len(vertices))
        e = remap[self.edges]
        keep = (e >= 0).all(axis=1)
        e = e[keep]
        e = np.sort(e, axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        return e[order], keep.nonzero()[0][order], remap

    def subset(self, name: str) -> np.ndarray:
        try:
            return self.subsets[name]
        except KeyError:
            raise GraphError(f"graph has no subset {name!r}; known: {sorted(self.subsets)}") from None

    @property
    def graph_id(self) -> str:
        return f"graph/{self.n_vertices}"


def _sorted_edges(i: np.ndarray, j: np.ndarray, *extra):
    a, b = np.minimum(i, j), np.maximum(i, j)
    order = np.lexsort((b, a))
    return (np.stack([a[order], b[order]], axis=1),) + tuple(x[order] for x in extra)


# ------------------------------------------------------------ cell graphs

@dataclass(eq=False)
class CellGraph(Graph):
    """Graph on a set of level-``grid_level`` carpet cells."""

    level: int = 0
    grid_level: int = 0
    word_index: np.ndarray = None  # rank within W_{grid_level}
    edge_kind: np.ndarray = None
    kind: str = "full"

    @cached_property
    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        return word_index_to_grid(self.word_index, self.grid_level)

    def words(self) -> list[Word]:
        return [Word.from_index(int(i), self.grid_level) for i in self.word_index]

    def vertex_of(self, w: Word | str) -> int:
        w = Word.parse(w)
        if w.level != self.grid_level:
            raise GraphError("word level does not match the graph")
        pos = np.searchsorted(self.word_index, w.index)
        if pos >= len(self.word_index) or self.word_index[pos] != w.index:
            raise GraphError(f"{w} is not a vertex of this graph")
        return int(pos)

    def vertices_of(self, word_indices: np.ndarray) -> np.ndarray:
        word_indices = np.asarray(word_indices, dtype=np.int64)
        pos = np.searchsorted(self.word_index, word_indices)
        pos = np.minimum(pos, len(self.word_index) - 1)
        if not (self.word_index[pos] == word_indices).all():
            raise GraphError("some words are not vertices of this graph")
        return pos

    @property
    def graph_id(self) -> str:
        return f"cell-{self.kind}/{self.level}/{self.grid_level}/{self.n_vertices}"


def _cell_edges(col, row, level, kind):
    """Edges between grid squares in ``(col, row)`` that touch; vertex order as given."""
    side = 3 ** level
    key = col * side + row
    order = np.argsort(key)
    skey = key[order]
    offsets = [(1, 0, SEGMENT), (0, 1, SEGMENT)]
    if kind == "full":
        offsets += [(1, 1, POINT), (1, -1, POINT)]
    ii, jj, kk = [], [], []
    for dc, dr, k in offsets:
        c2, r2 = col + dc, row + dr
        ok = (c2 >= 0) & (c2 < side) & (r2 >= 0) & (r2 < side)
        src = np.nonzero(ok)[0]
        tkey = c2[src] * side + r2[src]
        pos = np.searchsorted(skey, tkey)
        pos = np.minimum(pos, len(skey) - 1)
        hit = skey[pos] == tkey
        ii.append(src[hit])
        jj.append(order[pos[hit]])
        kk.append(np.full(hit.sum(), k, dtype=np.int8))
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    return _sorted_edges(i, j, np.concatenate(kk))


def cell_graph_from_indices(word_index: np.ndarray, grid_level: int, kind: str = "full",
                            level: int | None = None) -> CellGraph:
    """Induced cell graph on the given level-``grid_level`` words (sorted by rank)."""
    if kind not in ("full", "segment"):
        raise GraphError("kind must be 'full' or 'segment'")
    word_index = np.unique(np.asarray(word_index, dtype=np.int64))
    col, row = word_index_to_grid(word_index, grid_level)
    edges, ekind = _cell_edges(col, row, grid_level, kind)
    g = CellGraph(n_vertices=len(word_index), edges=edges,
                  level=grid_level if level is None else level, grid_level=grid_level,
                  word_index=word_index, edge_kind=ekind, kind=kind)
    return g


def build_cell_graph(n: int, kind: str = "full", budget: int | None = None) -> CellGraph:
    """``G_n`` (``kind='full'``, edges ``E_n``) or its segment-contact variant."""
    if n < 1:
        raise GraphError("cell graphs need n >= 1")
    check_budget(N_SYMBOLS ** n, budget)
    g = cell_graph_from_indices(np.arange(N_SYMBOLS ** n), n, kind)
    col, row = g.grid
    last = 3 ** n - 1
    g.subsets = {
        "boundary": np.nonzero((col == 0) | (col == last) | (row == 0) | (row == last))[0],
        "left": np.nonzero(col == 0)[0],
        "right": np.nonzero(col == last)[0],
        "bottom": np.nonzero(row == 0)[0],
        "top": np.nonzero(row == last)[0],
    }
    if kind == "full" and g.n_vertices > 1:
        dmax = int(g.degrees.max())
        if dmax > MAX_CELL_DEGREE:
            raise AssertionError(f"cell graph degree {dmax} exceeds {MAX_CELL_DEGREE}")
    return g


def restrict_subgraph(g: Graph, vertices: Iterable[int]) -> Graph:
    """Induced subgraph on ``vertices`` with the parent vertex order kept."""
    vertices = np.unique(np.asarray(list(vertices) if not isinstance(vertices, np.ndarray)
                                    else vertices, dtype=np.int64))
    if vertices.size and (vertices.min() < 0 or vertices.max() >= g.n_vertices):
        raise GraphError("subset is not contained in the vertex set")
    edges, kept, remap = g.induced(vertices)
    subsets = {}
    for name, s in g.subsets.items():
        r = remap[s]
        subsets[name] = np.sort(r[r >= 0])
    if isinstance(g, CellGraph):
        return CellGraph(n_vertices=len(vertices), edges=edges, subsets=subsets,
                         level=g.level, grid_level=g.grid_level,
                         word_index=g.word_index[vertices], edge_kind=g.edge_kind[kept],
                         kind=g.kind)
    if isinstance(g, PointGraph):
        return PointGraph(n_vertices=len(vertices), edges=edges, subsets=subsets,
                          level=g.level, kind=g.kind, xy=g.xy[vertices],
                          cell_of_edge=g.cell_of_edge[kept])
    return Graph(n_vertices=len(vertices), edges=edges, subsets=subsets)


def block_neighborhood(w: Word | str, k: int, n: int) -> np.ndarray:
    """Word ranks (level ``|w| + n``) of ``B_n(w, k)``: blocks ``v W_n`` with ``d(v, w) <= k``."""
    w = Word.parse(w)
    if k < 0 or n < 0:
        raise GraphError("k and n must be non-negative")
    if w.level == 0:
        centers = np.array([0])
    else:
        g = build_cell_graph(w.level)
        dist = g.bfs([w.index])
        centers = np.nonzero((dist >= 0) & (dist <= k))[0]
    block = N_SYMBOLS ** n
    return (centers[:, None] * block + np.arange(block)[None, :]).ravel()


# ------------------------------------------------------------ chain graphs

@dataclass(eq=False)
class ChainGraph(CellGraph):
    base_level: int = 0
    copies: int = 0
    path: list = None


def build_chain_graph(n: int, M: int, budget: int | None = None) -> ChainGraph:
    """``M`` horizontally abutting copies of ``G_n`` along the bottom row of level ``m``."""
    if M < 2:
        raise GraphError("a chain needs M >= 2")
    if n < 1:
        raise GraphError("chain graphs need n >= 1")
    m = 1
    while 3 ** m < M:
        m += 1
    if M > 3 ** m:
        raise AssertionError("path capacity exceeded")
    check_budget(M * N_SYMBOLS ** n, budget)
    path = grid_to_word_index(np.arange(M), np.zeros(M, dtype=np.int64), m)
    block = N_SYMBOLS ** n
    idx = (path[:, None] * block + np.arange(block)[None, :]).ravel()
    base = cell_graph_from_indices(idx, n + m, "full", level=n)
    g = ChainGraph(n_vertices=base.n_vertices, edges=base.edges, level=n, grid_level=n + m,
                   word_index=base.word_index, edge_kind=base.edge_kind, kind="full",
                   base_level=n, copies=M, path=[Word.from_index(int(p), m) for p in path])
    g.subsets = {
        "left": g.vertices_of(path[0] * block + np.arange(block)),
        "right": g.vertices_of(path[-1] * block + np.arange(block)),
    }
    for i, p in enumerate(path):
        g.subsets[f"copy{i + 1}"] = g.vertices_of(p * block + np.arange(block))
    return g


# ------------------------------------------------------------ point graphs

# base vertices at denominator level 0 (unit square = [-2, 2]^2), cycle order
# p_8, p^_0, p_2, p^_1, p_4, p^_2, p_6, p^_3
BASE_MODIFIED = np.array([(-2, 0), (-1, -1), (0, -2), (1, -1),
                          (2, 0), (1, 1), (0, 2), (-1, 1)], dtype=np.int64)
# symbol of the child cell each base vertex is sent to by the rough isometry
BASE_MODIFIED_SYMBOL = np.array([8, 1, 2, 3, 4, 5, 6, 7], dtype=np.int64)
BASE_SIMPLE = np.array([(0, -2), (2, 0), (0, 2), (-2, 0)], dtype=np.int64)  # p_2, p_4, p_6, p_8


def _cycle_edges(k: int) -> np.ndarray:
    a = np.arange(k)
    return np.stack([a, (a + 1) % k], axis=1)


@dataclass(eq=False)
class PointGraph(Graph):
    level: int = 0
    kind: str = "modified"
    xy: np.ndarray = None  # integer coordinates at denominator level ``level``
    cell_of_edge: np.ndarray = None  # word rank (level - 1) owning each edge

    @property
    def denom_level(self) -> int:
        return self.level

    @cached_property
    def _keys(self):
        h = geo.half_width(self.level)
        w = 2 * h + 1
        keys = (self.xy[:, 0] + h) * w + (self.xy[:, 1] + h)
        return keys, w, h

    def lookup(self, xy: np.ndarray) -> np.ndarray:
        """Vertex indices for integer coordinates (same denominator); ``-1`` if absent."""
        keys, w, h = self._keys
        xy = np.asarray(xy, dtype=np.int64).reshape(-1, 2)
        inside = (np.abs(xy) <= h).all(axis=1)
        q = (xy[:, 0] + h) * w + (xy[:, 1] + h)
        pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
        out = np.where((keys[pos] == q) & inside, pos, -1)
        return out

    def vertex_of(self, pt: geo.LatticePoint) -> int:
        x, y = pt.at(self.level) if pt.denom_level <= self.level else _exact_down(pt, self.level)
        idx = int(self.lookup(np.array([[x, y]]))[0])
        if idx < 0:
            raise GraphError(f"{pt} is not a vertex of this point graph")
        return idx

    def point(self, i: int) -> geo.LatticePoint:
        return geo.LatticePoint(int(self.xy[i, 0]), int(self.xy[i, 1]), self.level)

    @property
    def graph_id(self) -> str:
        return f"point-{self.kind}/{self.level}"


def _exact_down(pt: geo.LatticePoint, level: int) -> tuple[int, int]:
    k = pt.denom_level - level
    f = 3 ** k
    if pt.x % f or pt.y % f:
        raise GraphError(f"{pt} is not representable at denominator level {level}")
    return pt.x // f, pt.y // f


def cell_centers(level: int, denom_level: int, word_index: np.ndarray | None = None):
    """Integer centers of level-``level`` cells at ``denom_level`` (rank order)."""
    if word_index is None:
        word_index = np.arange(N_SYMBOLS ** level)
    col, row = word_index_to_grid(word_index, level)
    f = 3 ** (denom_level - level)
    h = geo.half_width(denom_level)
    return np.stack([-h + (4 * col + 2) * f, -h + (4 * row + 2) * f], axis=1)


def build_point_graph(n: int, kind: str = "modified", budget: int | None = None) -> PointGraph:
    """``𝔾_n`` (``kind='modified'``) or ``𝔾*_n`` (``kind='simple'``)."""
    if n < 1:
        raise GraphError("point graphs need n >= 1")
    if kind not in ("modified", "simple"):
        raise GraphError("kind must be 'modified' or 'simple'")
    base = BASE_MODIFIED if kind == "modified" else BASE_SIMPLE
    nb = len(base)
    check_budget(nb * N_SYMBOLS ** (n - 1), budget)
    centers = cell_centers(n - 1, n)
    # F_w(x) at denominator n: center + x * 3^n / 3^(n-1) / (4*3^0 -> 4*3^n scale)
    pts = (centers[:, None, :] + 3 * base[None, :, :]).reshape(-1, 2)
    h = geo.half_width(n)
    w = 2 * h + 1
    keys = (pts[:, 0] + h) * w + (pts[:, 1] + h)
    ukeys, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    xy = pts[first]
    base_edges = _cycle_edges(nb)
    ncell = len(centers)
    owner = np.repeat(np.arange(ncell), len(base_edges))
    gi = (np.arange(ncell)[:, None] * nb + base_edges[None, :, 0]).ravel()
    gj = (np.arange(ncell)[:, None] * nb + base_edges[None, :, 1]).ravel()
    edges, owner = _sorted_edges(inverse[gi], inverse[gj], owner)
    g = PointGraph(n_vertices=len(ukeys), edges=edges, level=n, kind=kind, xy=xy,
                   cell_of_edge=owner)
    g.subsets = {
        "left": np.nonzero(xy[:, 0] == -h)[0],
        "right": np.nonzero(xy[:, 0] == h)[0],
        "bottom": np.nonzero(xy[:, 1] == -h)[0],
        "top": np.nonzero(xy[:, 1] == h)[0],
    }
    g.__dict__["_keys"] = (ukeys, w, h)
    return g


def simple_vertex_count(n: int) -> int:
    """Closed form ``#V(𝔾*_n) = (12/5) 8^(n-1) + (8/5) 3^(n-1)`` in exact integers."""
    return (12 * 8 ** (n - 1) + 8 * 3 ** (n - 1)) // 5


def rough_isometry_points_to_cells(n: int) -> np.ndarray:
    """``phi_n``: vertex index of ``𝔾_n`` -> word rank in ``W_n``.

    Interior diagonal points of cell ``v`` go to ``v(2m+1)``; edge midpoints go
    to ``v(2m)`` for the first cell ``v`` (in rank order) containing them.
    """
    g = build_point_graph(n, "modified")
    ncell = N_SYMBOLS ** (n - 1)
    centers = cell_centers(n - 1, n)
    pts = (centers[:, None, :] + 3 * BASE_MODIFIED[None, :, :]).reshape(-1, 2)
    target = (np.arange(ncell)[:, None] * N_SYMBOLS + (BASE_MODIFIED_SYMBOL - 1)[None, :]).ravel()
    idx = g.lookup(pts)
    phi = np.full(g.n_vertices, -1, dtype=np.int64)
    # reversed assignment so the first (lowest-rank) owner wins
    phi[idx[::-1]] = target[::-1]
    return phi


# ------------------------------------------------------------ symmetry actions

def cell_symmetry_permutation(g: CellGraph, t) -> np.ndarray:
    """``perm[v]`` = vertex holding ``iota_T(word(v))``; requires a T-invariant vertex set."""
    m = geo.symmetry_index_map(t, g.grid_level)
    return g.vertices_of(m[g.word_index])


def point_symmetry_permutation(g: PointGraph, t) -> np.ndarray:
    """``perm[v]`` = vertex at ``T(x_v)``."""
    t = geo.symmetry(t)
    idx = g.lookup(t.apply_array(g.xy))
    if (idx < 0).any():
        raise GraphError("vertex set is not invariant under the symmetry")
    return idx


# ------------------------------------------------------------ serialization

def graph_to_json(g: Graph) -> dict:
    if isinstance(g, PointGraph):
        kind = "point" if g.kind == "modified" else "point-simple"
        vertices = [[int(x), int(y), g.level] for x, y in g.xy]
        kinds = ["edge"] * g.n_edges
    elif isinstance(g, ChainGraph):
        kind = "chain"
        vertices = [str(w) for w in g.words()]
        kinds = ["segment" if k == SEGMENT else "point" for k in g.edge_kind]
    elif isinstance(g, CellGraph):
        kind = "cell" if g.kind == "full" else "cell-segment"
        vertices = [str(w) for w in g.words()]
        kinds = ["segment" if k == SEGMENT else "point" for k in g.edge_kind]
    else:
        kind = "graph"
        vertices = list(range(g.n_vertices))
        kinds = ["edge"] * g.n_edges
    out = {
        "kind": kind,
        "level": int(getattr(g, "level", 0)),
        "vertex_count": int(g.n_vertices),
        "vertices": vertices,
        "edges": [[int(i), int(j), k] for (i, j), k in zip(g.edges, kinds)],
        "subsets": {name: [int(v) for v in s] for name, s in sorted(g.subsets.items())},
    }
    if isinstance(g, ChainGraph):
        out["copies"] = g.copies
        out["path"] = [str(w) for w in g.path]
    return out


def build_graph(kind: str, n: int, M: int | None = None, budget: int | None = None) -> Graph:
    """Dispatch used by the command line: cell, cell-segment, point, point-simple, chain."""
    if kind == "cell":
        return build_cell_graph(n, "full", budget)
    if kind == "cell-segment":
        return build_cell_graph(n, "segment", budget)
    if kind == "point":
        return build_point_graph(n, "modified", budget)
    if kind == "point-simple":
        return build_point_graph(n, "simple", budget)
    if kind == "chain":
        if M is None:
            raise GraphError("chain graphs need M")
        return build_chain_graph(n, M, budget)
    raise GraphError(f"unknown graph kind {kind!r}")
