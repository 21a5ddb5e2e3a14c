"""Instance families: projective planes, Steiner triple systems, Latin squares,
auxiliary Steiner hypergraphs and random linear hypergraphs."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import InfeasibleOrder, InvalidLatinSquare, NotPrime, Overflow
from .hypercore import SIZE_LIMIT, Hypergraph


def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    f = 2
    while f * f <= q:
        if q % f == 0:
            return False
        f += 1
    return True


def _normalised_points(q: int) -> list[tuple]:
    """Nonzero vectors of F_q^3 whose first nonzero coordinate is 1."""
    pts = []
    for x in range(q):
        for y in range(q):
            pts.append((1, x, y))
    for y in range(q):
        pts.append((0, 1, y))
    pts.append((0, 0, 1))
    return pts


def projective_plane(q: int) -> Hypergraph:
    """PG(2, q) for prime q: points and lines in homogeneous coordinates."""
    if not _is_prime(q):
        raise NotPrime(f"{q} is not prime (prime-power planes are not supported)")
    pts = _normalised_points(q)
    lines = []
    for a in pts:
        lines.append([i for i, p in enumerate(pts) if (a[0] * p[0] + a[1] * p[1] + a[2] * p[2]) % q == 0])
    return Hypergraph(len(pts), lines)


def fano_plane() -> Hypergraph:
    return projective_plane(2)


def degenerate_plane(n: int) -> Hypergraph:
    """One edge on ``0..n-2`` plus the 2-edges ``{i, n-1}``."""
    if n < 3:
        raise ValueError("degenerate plane needs n >= 3")
    big = tuple(range(n - 1))
    return Hypergraph(n, [big] + [(i, n - 1) for i in range(n - 1)])


def complete_graph_hg(n: int) -> Hypergraph:
    if n < 2:
        raise ValueError("complete graph needs n >= 2")
    return Hypergraph(n, combinations(range(n), 2), check=False)


def cycle_graph(n: int) -> Hypergraph:
    return Hypergraph(n, [(i, (i + 1) % n) for i in range(n)])


def petersen_graph() -> Hypergraph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Hypergraph(10, outer + spokes + inner)


def steiner_triple_system(n: int) -> Hypergraph:
    """STS(n) by the Bose (n = 3 mod 6) or Skolem (n = 1 mod 6) construction."""
    if n < 1 or n % 6 not in (1, 3):
        raise InfeasibleOrder(f"no Steiner triple system of order {n}")
    if n == 1:
        return Hypergraph(1, ())
    if n % 6 == 3:
        v = n // 3
        half = (v + 1) // 2

        def op(x, y):
            return (x + y) * half % v

        def pt(x, i):
            return x + i * v

        triples = [(pt(x, 0), pt(x, 1), pt(x, 2)) for x in range(v)]
        for x, y in combinations(range(v), 2):
            for i in range(3):
                triples.append((pt(x, i), pt(y, i), pt(op(x, y), (i + 1) % 3)))
        return Hypergraph(n, triples)
    s = (n - 1) // 6
    order = 2 * s

    def op(x, y):
        z = (x + y) % order
        return z // 2 if z % 2 == 0 else s + (z - 1) // 2

    inf = n - 1

    def pt(x, i):
        return x + i * order

    triples = [(pt(x, 0), pt(x, 1), pt(x, 2)) for x in range(s)]
    for x in range(s):
        for i in range(3):
            triples.append((inf, pt(s + x, i), pt(x, (i + 1) % 3)))
    for x, y in combinations(range(order), 2):
        for i in range(3):
            triples.append((pt(x, i), pt(y, i), pt(op(x, y), (i + 1) % 3)))
    return Hypergraph(n, triples)


@dataclass(frozen=True)
class LatinSquare:
    n: int
    cells: tuple

    def __post_init__(self):
        n = self.n
        target = set(range(n))
        if len(self.cells) != n or any(len(r) != n for r in self.cells):
            raise InvalidLatinSquare("square must be n x n")
        for i, row in enumerate(self.cells):
            if set(row) != target:
                raise InvalidLatinSquare(f"row {i} is not a permutation of 0..{n - 1}")
        for j in range(n):
            if {row[j] for row in self.cells} != target:
                raise InvalidLatinSquare(f"column {j} is not a permutation of 0..{n - 1}")

    @classmethod
    def from_rows(cls, rows) -> "LatinSquare":
        rows = tuple(tuple(int(x) for x in r) for r in rows)
        return cls(len(rows), rows)

    @classmethod
    def cyclic(cls, n: int) -> "LatinSquare":
        return cls.from_rows([[(i + j) % n for j in range(n)] for i in range(n)])

    @classmethod
    def parse(cls, text: str) -> "LatinSquare":
        rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
        try:
            return cls.from_rows(rows)
        except ValueError as exc:
            raise InvalidLatinSquare(str(exc)) from None

    def dumps(self) -> str:
        return "\n".join(" ".join(map(str, r)) for r in self.cells) + "\n"


def latin_square_hypergraph(sq: LatinSquare) -> Hypergraph:
    """Rows ``0..n-1``, columns ``n..2n-1``, symbols ``2n..3n-1``; one edge per cell."""
    n = sq.n
    edges = [(i, n + j, 2 * n + sq.cells[i][j]) for i in range(n) for j in range(n)]
    return Hypergraph(3 * n, edges, check=False)


def steiner_auxiliary(t: int, k: int, n: int, limit: int | None = None) -> Hypergraph:
    """Vertices are the t-subsets of [n] (lexicographic ranks); one edge per k-subset."""
    if not 1 <= t < k <= n:
        raise ValueError("need 1 <= t < k <= n")
    limit = SIZE_LIMIT if limit is None else limit
    if comb(n, t) > limit or comb(n, k) > limit:
        raise Overflow(f"auxiliary hypergraph for ({t},{k},{n}) exceeds limit {limit}")
    index = {s: i for i, s in enumerate(combinations(range(n), t))}
    edges = [tuple(index[s] for s in combinations(x, t)) for x in combinations(range(n), k)]
    return Hypergraph(len(index), edges, check=False)


def auxiliary_subsets(t: int, k: int, n: int) -> list[tuple]:
    """The k-subset behind each edge of :func:`steiner_auxiliary`, by edge id."""
    return list(combinations(range(n), k))


def random_linear(n: int, k: int, target_m: int, seed: int, max_failures: int | None = None) -> Hypergraph:
    """Random k-uniform linear hypergraph by rejection sampling of uniform k-sets.

    Sampling stops at ``target_m`` edges or after ``max_failures`` consecutive
    rejected draws (default ``max(1000, 10 n k)``).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if target_m <= 0 or n < k:
        return Hypergraph(n, ())
    rng = np.random.default_rng(seed)
    budget = max(1000, 10 * n * k) if max_failures is None else max_failures
    covered = np.zeros((n, n), dtype=bool)
    a, b = np.triu_indices(k, 1)
    edges = []
    fails = 0
    while len(edges) < target_m and fails < budget:
        block = np.sort(np.argsort(rng.random((256, n)), axis=1)[:, :k], axis=1)
        for e in block:
            if covered[e[a], e[b]].any():
                fails += 1
                if fails >= budget:
                    break
                continue
            covered[e[a], e[b]] = True
            edges.append(tuple(e.tolist()))
            fails = 0
            if len(edges) >= target_m:
                break
    return Hypergraph(n, edges, check=False)


def random_pair_cover(n: int, triple_fraction: float, seed: int) -> Hypergraph:
    """{2,3}-uniform linear hypergraph covering each pair of [n] exactly once.

    Starting from K_n, random triples whose three pairs are still 2-edges are
    merged into 3-edges until the share of pairs inside triples reaches
    ``triple_fraction`` or ``50 n^2`` draws have failed.  Draws are processed in
    batches; a batch keeps each still-valid triple whose pairs are not claimed by
    an earlier triple of the same batch.
    """
    if not 0 <= triple_fraction <= 1:
        raise ValueError("triple_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    total_pairs = n * (n - 1) // 2
    need = int(np.ceil(triple_fraction * total_pairs / 3 - 1e-9))
    free = np.ones((n, n), dtype=bool)
    triples = []
    fails = 0
    budget = 50 * n * n
    got = 0
    while got < need and fails < budget and n >= 3:
        remaining = need - got
        frac_free = 1 - 3 * got / max(total_pairs, 1)
        accept = max(frac_free ** 3, 1e-3)
        batch = int(min(max(remaining / accept, 16), 200_000))
        draw = np.sort(_draw_triples(rng, n, batch), axis=1)
        a, b, c = draw[:, 0], draw[:, 1], draw[:, 2]
        ok = free[a, b] & free[a, c] & free[b, c]
        fails += int((~ok).sum())
        cand = np.flatnonzero(ok)
        if len(cand):
            codes = np.stack([a[cand] * n + b[cand], a[cand] * n + c[cand], b[cand] * n + c[cand]], axis=1)
            flat = codes.ravel()
            _, first = np.unique(flat, return_index=True)
            is_first = np.zeros(len(flat), dtype=bool)
            is_first[first] = True
            keep = cand[is_first.reshape(-1, 3).all(axis=1)][:remaining]
            for x, y in ((a, b), (a, c), (b, c)):
                free[x[keep], y[keep]] = False
            triples.append(draw[keep])
            got += len(keep)
    iu, ju = np.nonzero(np.triu(free, 1))
    pairs = np.stack([iu, ju, np.full(len(iu), -1)], axis=1)
    tri = np.concatenate(triples) if triples else np.zeros((0, 3), dtype=np.int64)
    arr = np.concatenate([tri, pairs]) if n >= 2 else np.zeros((0, 3), dtype=np.int64)
    if not len(arr):
        return Hypergraph(n, ())
    key = np.where(arr < 0, -1, arr)
    order = np.lexsort((key[:, 2], key[:, 1], key[:, 0]))
    return Hypergraph.from_array(n, arr[order], check=False)


def _draw_triples(rng, n: int, batch: int) -> np.ndarray:
    """``batch`` uniform 3-subsets of [n] (rows unsorted)."""
    a = rng.integers(0, n, size=batch)
    b = rng.integers(0, n - 1, size=batch)
    b = b + (b >= a)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    c = rng.integers(0, n - 2, size=batch)
    c = c + (c >= lo)
    c = c + (c >= hi)
    return np.stack([a, b, c], axis=1)


def triple_fraction(h: Hypergraph) -> float:
    """Share of covered vertex pairs that lie inside 3-edges."""
    pairs = comb(h.n, 2)
    if not pairs:
        return 0.0
    return float(3 * int((h.sizes == 3).sum()) / pairs)
