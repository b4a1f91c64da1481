"""Independent reference computations for p = 2.

Nothing here imports the package: graphs are rebuilt from the word/offset
definition with plain Python, and the quadratic problems are solved with dense
linear algebra (or CG for the larger levels).

Run as a script to regenerate ``fixtures/p2_oracle.json``.
"""

from __future__ import annotations

import itertools
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

OFFSETS = {1: (0, 0), 2: (1, 0), 3: (2, 0), 4: (2, 1), 5: (2, 2), 6: (1, 2), 7: (0, 2), 8: (0, 1)}
FIXTURE = Path(__file__).with_name("fixtures") / "p2_oracle.json"


def words(n):
    return list(itertools.product(range(1, 9), repeat=n))


def grid_pos(w):
    """Integer lower-left corner of the cell of ``w`` on the ``3^len(w)`` grid."""
    c = r = 0
    for s in w:
        dc, dr = OFFSETS[s]
        c, r = 3 * c + dc, 3 * r + dr
    return c, r


def cell_graph(n):
    ws = words(n)
    pos = [grid_pos(w) for w in ws]
    where = {p: i for i, p in enumerate(pos)}
    edges = set()
    for i, (c, r) in enumerate(pos):
        for dc in (-1, 0, 1):
            for dr in (-1, 0, 1):
                j = where.get((c + dc, r + dr))
                if j is not None and j != i:
                    edges.add((min(i, j), max(i, j)))
    last = 3 ** n - 1
    subsets = {
        "left": [i for i, (c, _) in enumerate(pos) if c == 0],
        "right": [i for i, (c, _) in enumerate(pos) if c == last],
        "boundary": [i for i, (c, r) in enumerate(pos) if c in (0, last) or r in (0, last)],
    }
    return len(ws), sorted(edges), subsets


def point_graph_simple_count(n):
    """Vertices of the union of side-midpoint 4-cycles over the level-(n-1) cells."""
    pts = set()
    for w in words(n - 1):
        c, r = grid_pos(w)
        s = Fraction(1, 3 ** (n - 1))
        x0, y0 = c * s, r * s
        for dx, dy in ((Fraction(1, 2), 0), (1, Fraction(1, 2)), (Fraction(1, 2), 1), (0, Fraction(1, 2))):
            pts.add((x0 + dx * s, y0 + dy * s))
    return len(pts)


def point_graph_modified(n):
    """Union of the 8-cycles (side midpoints and inner quarter points) over level-(n-1) cells."""
    base = [(0, Fraction(1, 2)), (Fraction(1, 4), Fraction(1, 4)), (Fraction(1, 2), 0),
            (Fraction(3, 4), Fraction(1, 4)), (1, Fraction(1, 2)), (Fraction(3, 4), Fraction(3, 4)),
            (Fraction(1, 2), 1), (Fraction(1, 4), Fraction(3, 4))]
    index, edges = {}, set()
    for w in words(n - 1):
        c, r = grid_pos(w)
        s = Fraction(1, 3 ** (n - 1))
        ids = []
        for bx, by in base:
            p = ((c + bx) * s, (r + by) * s)
            ids.append(index.setdefault(p, len(index)))
        for k in range(8):
            a, b = ids[k], ids[(k + 1) % 8]
            edges.add((min(a, b), max(a, b)))
    pts = sorted(index, key=lambda p: index[p])
    left = [i for i, p in enumerate(pts) if p[0] <= Fraction(1, 2)]
    right = [i for i, p in enumerate(pts) if p[0] >= Fraction(1, 2)]
    return len(pts), sorted(edges), {"left_half": left, "right_half": right}, pts


def laplacian(nv, edges, dense=True):
    e = np.asarray(edges, dtype=np.int64)
    w = np.ones(len(e))
    A = sp.coo_matrix((np.r_[w, w], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                      shape=(nv, nv)).tocsr()
    L = sp.diags(np.asarray(A.sum(axis=1)).ravel()) - A
    return L.toarray() if dense else L.tocsr()


def conductance_dense(L, A, B):
    nv = L.shape[0]
    fixed = np.zeros(nv, bool)
    fixed[A] = fixed[B] = True
    f = np.zeros(nv)
    f[A] = 1.0
    free = ~fixed
    f[free] = np.linalg.solve(L[np.ix_(free, free)], -L[np.ix_(free, fixed)] @ f[fixed])
    return float(f @ L @ f)


def conductance_cg(L, A, B, tol=1e-13):
    nv = L.shape[0]
    fixed = np.zeros(nv, bool)
    fixed[A] = fixed[B] = True
    f = np.zeros(nv)
    f[A] = 1.0
    free = np.nonzero(~fixed)[0]
    Lff = L[free][:, free]
    rhs = -(L[free][:, np.nonzero(fixed)[0]] @ f[fixed])
    M = sp.diags(1.0 / Lff.diagonal())
    x, info = spla.cg(Lff, rhs, rtol=tol, atol=0.0, maxiter=100000, M=M)
    if info != 0:
        raise RuntimeError("CG did not converge")
    f[free] = x
    return float(f @ (L @ f))


def lambda_star_dense(L, boundary):
    """``1 / min { f^T L f : f = 0 on boundary, mean f = 1 }``."""
    nv = L.shape[0]
    inner = np.setdiff1d(np.arange(nv), boundary)
    y = np.linalg.solve(L[np.ix_(inner, inner)], np.ones(len(inner)))
    return float(np.sum(y)) / nv ** 2


def sigma_dense(L, A, B):
    """``1 / min { f^T L f : mean_A f = 1, mean_B f = 0 }`` by the KKT system."""
    nv = L.shape[0]
    C = np.zeros((2, nv))
    C[0, A] = 1.0 / len(A)
    C[1, B] = 1.0 / len(B)
    K = np.block([[2 * L, C.T], [C, np.zeros((2, 2))]])
    rhs = np.r_[np.zeros(nv), 1.0, 0.0]
    f = np.linalg.solve(K, rhs)[:nv]
    return 1.0 / float(f @ L @ f)


def lambda_eig(L, weight):
    """Sup of ``sum |f - <f>|^2 weight / f^T L f`` for uniform weights: ``weight / lambda_2``."""
    ev = np.linalg.eigvalsh(L)
    return weight / float(ev[1])


def sigma_graph(n):
    """Induced subgraph of G_{n+1} on the blocks starting with 1 and with 8."""
    nv, edges, _ = cell_graph(n + 1)
    block = 8 ** n
    keep = list(range(block)) + list(range(7 * block, 8 * block))
    pos = {v: i for i, v in enumerate(keep)}
    sub = [(pos[i], pos[j]) for i, j in edges if i in pos and j in pos]
    return len(keep), sub, list(range(block)), list(range(block, 2 * block))


def compute_fixture():
    out = {"conductance_lr": {}, "lambda_star": {}, "sigma": {}, "lambda": {},
           "conductance_lr_cg": {}, "simple_point_count": {}, "cell_edge_count": {}}
    for n in (1, 2, 3):
        nv, edges, sub = cell_graph(n)
        L = laplacian(nv, edges)
        out["cell_edge_count"][n] = len(edges)
        out["conductance_lr"][n] = conductance_dense(L, sub["left"], sub["right"])
        out["lambda"][n] = lambda_eig(L, 8.0 ** -n)
        if n >= 2:
            out["lambda_star"][n] = lambda_star_dense(L, sub["boundary"])
        snv, sedges, A, B = sigma_graph(n)
        out["sigma"][n] = sigma_dense(laplacian(snv, sedges), A, B)
    for n in (4, 5):
        nv, edges, sub = cell_graph(n)
        out["conductance_lr_cg"][n] = conductance_cg(laplacian(nv, edges, dense=False),
                                                     sub["left"], sub["right"])
    for n in range(1, 7):
        out["simple_point_count"][n] = point_graph_simple_count(n)
    return out


def load_fixture():
    data = json.loads(FIXTURE.read_text(encoding="utf-8"))
    return {k: {int(n): v for n, v in d.items()} for k, d in data.items()}


if __name__ == "__main__":
    fx = compute_fixture()
    FIXTURE.parent.mkdir(exist_ok=True)
    FIXTURE.write_text(json.dumps(fx, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    json.dump(fx, sys.stdout, indent=1)
