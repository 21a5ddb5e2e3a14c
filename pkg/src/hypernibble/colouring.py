"""Edge colouring: ordered greedy, Vizing, incidence-nibble colouring, the
three-tier reserved-palette list colouring, and exact brute-force oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ListExhausted, ReservationFailed, TooLarge
from .hypercore import (
    EdgeOrdering,
    Graph,
    Hypergraph,
    PartialEdgeColouring,
    line_adjacency_matrix,
    max_codegree,
)
from .nibble import NibbleParams, layered_matchings

CHROMATIC_LIMIT = 16
MATCHING_LIMIT = 24
INTERSECTING_LIMIT = 16
VERTEX_COLOURING_LIMIT = 20


def _mask(colours) -> int:
    m = 0
    for c in colours:
        if c < 0:
            raise ValueError("colours must be nonnegative")
        m |= 1 << int(c)
    return m


def _lowest(bits: int) -> int:
    return (bits & -bits).bit_length() - 1


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass
class ListAssignment:
    """Per-edge colour lists."""

    lists: list

    def __post_init__(self):
        # repeated list objects (uniform palettes) are converted once and shared
        seen = {}
        lists, masks = [], []
        for lst in self.lists:
            if id(lst) not in seen:
                fs = frozenset(int(c) for c in lst)
                seen[id(lst)] = (lst, fs, _mask(fs))
            _, fs, mk = seen[id(lst)]
            lists.append(fs)
            masks.append(mk)
        self.lists = lists
        self._masks = masks

    @classmethod
    def uniform(cls, m: int, palette: int) -> "ListAssignment":
        full = range(palette)
        return cls([full] * m)

    def __len__(self) -> int:
        return len(self.lists)

    def mask(self, e: int) -> int:
        return self._masks[e]

    def sizes(self) -> np.ndarray:
        return np.array([len(x) for x in self.lists], dtype=np.int64)

    def universe(self) -> list:
        out = set()
        for lst in {id(x): x for x in self.lists}.values():
            out |= lst
        return sorted(out)

    def check(self, h: Hypergraph) -> None:
        if len(self.lists) != h.m:
            raise ValueError(f"{len(self.lists)} lists for {h.m} edges")


class _GreedyState:
    """Used-colour bitsets per vertex, shared between greedy passes."""

    def __init__(self, h: Hypergraph):
        self.h = h
        self.used = [0] * h.n
        self.colours = np.full(h.m, -1, dtype=np.int64)

    def run(self, seq, masks=None, tier=None, offset: int = 0) -> None:
        edges = self.h.edges
        used = self.used
        out = self.colours
        for e in seq:
            verts = edges[e]
            busy = 0
            for v in verts:
                busy |= used[v]
            if masks is None:
                busy >>= offset
                c = _lowest(~busy & (busy + 1)) + offset
            else:
                avail = masks[e] & ~busy
                if not avail:
                    raise ListExhausted(int(e), tier)
                c = _lowest(avail)
            bit = 1 << c
            for v in verts:
                used[v] |= bit
            out[e] = c


def greedy_by_ordering(
    h: Hypergraph,
    order: EdgeOrdering | None = None,
    lists: ListAssignment | None = None,
    *,
    offset: int = 0,
) -> PartialEdgeColouring:
    """Colour edges in ``order`` with the least colour (>= ``offset``) or list colour free at all ends."""
    order = EdgeOrdering.identity(h.m) if order is None else order
    if len(order) != h.m:
        raise ValueError("ordering length differs from the edge count")
    state = _GreedyState(h)
    masks = None
    if lists is not None:
        lists.check(h)
        masks = [lists.mask(e) for e in range(h.m)]
    state.run(order.order.tolist(), masks, offset=offset)
    return PartialEdgeColouring(state.colours)


def greedy_subset(h: Hypergraph, edge_ids, base: PartialEdgeColouring | None = None, offset: int = 0) -> np.ndarray:
    """Greedy colours for ``edge_ids`` (in the given order) avoiding the colours of ``base``."""
    state = _GreedyState(h)
    if base is not None:
        c = base.colours
        for e in np.flatnonzero(c >= 0).tolist():
            bit = 1 << int(c[e])
            for v in h.edges[e]:
                state.used[v] |= bit
        state.colours = c.copy()
    state.run([int(e) for e in edge_ids], offset=offset)
    return state.colours


def compress_palette(h: Hypergraph, colouring: PartialEdgeColouring, passes: int = 4) -> PartialEdgeColouring:
    """Move edges, highest colour first, to the least colour free at all their vertices.

    Never increases the number of colours; uncoloured edges stay uncoloured.
    Stops after ``passes`` sweeps or when a sweep moves nothing.
    """
    c = colouring.colours.copy()
    edges = h.edges
    used = [0] * h.n
    for e in np.flatnonzero(c >= 0).tolist():
        bit = 1 << int(c[e])
        for v in edges[e]:
            used[v] |= bit
    for _ in range(passes):
        moved = 0
        live = np.flatnonzero(c >= 0)
        for e in live[np.argsort(-c[live], kind="stable")].tolist():
            vs = edges[e]
            old = int(c[e])
            busy = 0
            for v in vs:
                busy |= used[v]
            free = ~busy & ((1 << old) - 1)
            if free:
                new = _lowest(free)
                swap = (1 << old) | (1 << new)
                for v in vs:
                    used[v] ^= swap
                c[e] = new
                moved += 1
        if not moved:
            break
    return PartialEdgeColouring(c).compacted()


# -- Vizing -------------------------------------------------------------------------


class _Vizing:
    def __init__(self, n: int, palette: int):
        self.palette = palette
        self.nb = [dict() for _ in range(n)]  # colour -> neighbour
        self.cl = [dict() for _ in range(n)]  # neighbour -> colour
        self.used = [0] * n

    def free(self, x: int) -> int:
        m = self.used[x]
        return _lowest(~m & (m + 1))

    def is_free(self, x: int, c: int) -> bool:
        return not (self.used[x] >> c) & 1

    def set(self, x: int, y: int, c: int) -> None:
        self.nb[x][c] = y
        self.nb[y][c] = x
        self.cl[x][y] = c
        self.cl[y][x] = c
        bit = 1 << c
        self.used[x] |= bit
        self.used[y] |= bit

    def clear(self, x: int, y: int) -> int:
        c = self.cl[x].pop(y)
        del self.cl[y][x]
        del self.nb[x][c]
        del self.nb[y][c]
        bit = ~(1 << c)
        self.used[x] &= bit
        self.used[y] &= bit
        return c

    def invert_path(self, u: int, d: int, c: int) -> None:
        path = []
        x, col, other = u, d, c
        while col in self.nb[x]:
            y = self.nb[x][col]
            path.append((x, y, col))
            x, col, other = y, other, col
        for x, y, _ in path:
            self.clear(x, y)
        for x, y, col in path:
            self.set(x, y, c if col == d else d)

    def colour_edge(self, u: int, v: int) -> None:
        """Misra-Gries step: colour the uncoloured edge uv within the palette.

        The fan follows the least free colour of its last vertex and stops at the
        first colour that is free at ``u`` or leads back into the fan.
        """
        fan = [v]
        infan = {v}
        while True:
            d = self.free(fan[-1])
            if self.is_free(u, d):
                self._rotate(u, fan, len(fan) - 1, d)
                return
            w = self.nb[u][d]
            if w in infan:
                break
            fan.append(w)
            infan.add(w)
        c = self.free(u)
        self.invert_path(u, d, c)
        stop = None
        for i, w in enumerate(fan):
            if i and not self.is_free(fan[i - 1], self.cl[u][w]):
                break
            if self.is_free(w, d):
                stop = i
                break
        if stop is None:
            raise AssertionError("fan rotation found no endpoint")
        self._rotate(u, fan, stop, d)

    def _rotate(self, u: int, fan: list, stop: int, d: int) -> None:
        shifted = [self.cl[u][fan[j + 1]] for j in range(stop)]
        for j in range(1, stop + 1):
            self.clear(u, fan[j])
        for j in range(stop):
            self.set(u, fan[j], shifted[j])
        self.set(u, fan[stop], d)


def vizing(g: Hypergraph, *, offset: int = 0) -> PartialEdgeColouring:
    """Proper edge colouring of a simple graph with at most max degree + 1 colours."""
    if g.m and (g.sizes != 2).any():
        raise ValueError("vizing needs a graph (all edges of size 2)")
    delta = g.max_degree()
    palette = delta + 1
    vz = _Vizing(g.n, palette)
    pending = []
    for e, (u, v) in enumerate(g.edges):
        busy = vz.used[u] | vz.used[v]
        c = _lowest(~busy & (busy + 1))
        if c < palette:
            vz.set(u, v, c)
        else:
            pending.append((u, v))
    for u, v in pending:
        vz.colour_edge(u, v)
    out = np.full(g.m, -1, dtype=np.int64)
    for e, (u, v) in enumerate(g.edges):
        out[e] = vz.cl[u][v] + offset
    return PartialEdgeColouring(out, offset + palette if g.m else offset)


# -- incidence-nibble colouring ----------------------------------------------------


@dataclass
class ColouringRun:
    colouring: PartialEdgeColouring
    report: dict = field(default_factory=dict)

    @property
    def colours_used(self) -> int:
        return self.colouring.colours_used()


def incidence_nibble_colouring(h: Hypergraph, D: int | None = None, p: NibbleParams = NibbleParams()) -> ColouringRun:
    """Colour D edge-disjoint nibble matchings 0..D-1, then the leftover greedily from colour D."""
    D = max(h.max_degree(), 1) if D is None else D
    rep = layered_matchings(h, D, None, p)
    colours = np.full(h.m, -1, dtype=np.int64)
    for i, mt in enumerate(rep.matchings):
        ids = np.fromiter(mt.edge_ids, dtype=np.int64, count=len(mt))
        colours[ids] = i
    left = np.flatnonzero(colours < 0)
    base = PartialEdgeColouring(colours)
    colours = greedy_subset(h, left.tolist(), base, offset=D)
    col = PartialEdgeColouring(colours)
    extra = col.colours[left]
    report = {
        "D": D,
        "max_degree": h.max_degree(),
        "matched_edges": int(h.m - len(left)),
        "leftover_edges": int(len(left)),
        "leftover_colours": int(len(np.unique(extra))) if len(extra) else 0,
        "colours_used": col.colours_used(),
        "defects": rep.defects,
        "rounds": rep.rounds,
        "seed": p.seed,
    }
    return ColouringRun(col, report)


# -- three-tier reserved-palette colouring --------------------------------------------


@dataclass(frozen=True)
class TierParams:
    r1: int = 8
    r0: int = 64
    gamma: float = 0.1
    eps: float = 0.1
    retries: int = 100

    def __post_init__(self):
        if not 2 <= self.r1 < self.r0:
            raise ValueError("need 2 <= r1 < r0")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


def neighbourhood_span(h: Hypergraph) -> int:
    """max over v of |union of the edges through v| (1 for isolated vertices)."""
    if not h.m:
        return 1 if h.n else 0
    ptr, eids = h.incidence()
    sizes = h.sizes
    best = 1
    if max_codegree(h) <= 1:
        span = 1 + np.bincount(np.repeat(np.arange(h.n), np.diff(ptr)), weights=sizes[eids] - 1, minlength=h.n)
        return int(span.max())
    for v in range(h.n):
        s = set()
        for e in eids[ptr[v] : ptr[v + 1]].tolist():
            s.update(h.edge(e))
        best = max(best, len(s))
    return best


def three_tier_colouring(
    h: Hypergraph,
    lists: ListAssignment | None = None,
    tp: TierParams = TierParams(),
    seed: int = 0,
) -> ColouringRun:
    """List colouring of a linear hypergraph split by edge size into small/medium/large tiers.

    Large edges take colours outside a reserved random set R in size-decreasing
    order, medium edges use only reserved colours, small edges avoid R and the
    colours of their large neighbours.  Without lists every edge gets the palette
    ``ceil((1 + eps) D)`` with D the largest neighbourhood span.
    """
    if max_codegree(h) > 1:
        raise ValueError("three-tier colouring needs a linear hypergraph")
    D = neighbourhood_span(h)
    if lists is None:
        lists = ListAssignment.uniform(h.m, max(1, math.ceil((1 + tp.eps) * D)))
    lists.check(h)
    sizes = h.sizes
    order = EdgeOrdering.by_size_decreasing(h).order
    lrg = [int(e) for e in order if sizes[e] > tp.r0]
    med = [int(e) for e in order if tp.r1 < sizes[e] <= tp.r0]
    sml = [int(e) for e in order if sizes[e] <= tp.r1]
    rng = np.random.default_rng(seed)
    universe = lists.universe()
    lsizes = lists.sizes()
    attempts = 0
    R_mask = 0
    if med:
        lo, hi = 0.5 * tp.gamma * lsizes, 1.5 * tp.gamma * lsizes
        for attempts in range(1, tp.retries + 1):
            keep = [c for c, x in zip(universe, rng.random(len(universe))) if x < tp.gamma]
            R_mask = _mask(keep)
            got = np.array([bin(lists.mask(e) & R_mask).count("1") for e in range(h.m)])
            if ((got >= lo) & (got <= hi)).all():
                break
        else:
            raise ReservationFailed(f"no reserved set within (1 +- 1/2) gamma |C(e)| after {tp.retries} attempts")
    masks = [lists.mask(e) for e in range(h.m)]
    outside = [m & ~R_mask for m in masks]
    inside = [m & R_mask for m in masks]
    state = _GreedyState(h)
    state.run(lrg, outside, tier="large")
    state.run(med, inside, tier="medium")
    state.run(sml, outside, tier="small")
    col = PartialEdgeColouring(state.colours)
    report = _tier_report(h, col, lrg, med, sml, D, tp, R_mask, attempts, lists)
    return ColouringRun(col, report)


def _tier_report(h, col, lrg, med, sml, D, tp, R_mask, attempts, lists) -> dict:
    c = col.colours

    def used(ids):
        return int(len(np.unique(c[ids]))) if ids else 0

    in_lrg = np.zeros(h.m, dtype=bool)
    in_lrg[lrg] = True
    ptr, eids = h.incidence()
    deg_lrg = np.bincount(np.repeat(np.arange(h.n), np.diff(ptr)), weights=in_lrg[eids], minlength=h.n) if h.m else np.zeros(h.n)
    worst_sml = max((int(sum(deg_lrg[v] for v in h.edge(e))) for e in sml), default=0)
    med_deg = 0
    if med:
        med_deg = int(np.bincount(h.array[med][h.array[med] >= 0], minlength=h.n).max())
    return {
        "D": D,
        "tiers": {"large": len(lrg), "medium": len(med), "small": len(sml)},
        "colours": {"large": used(lrg), "medium": used(med), "small": used(sml), "total": col.colours_used()},
        "reserved": bin(R_mask).count("1"),
        "reservation_attempts": attempts,
        "min_list": int(lists.sizes().min()) if h.m else 0,
        "checks": {
            "medium_max_degree": {"measured": med_deg, "bound": D / tp.r1},
            "small_large_neighbours": {"measured": worst_sml, "bound": tp.r1 * D / tp.r0},
        },
        "method": "ordered greedy in every tier",
    }


# -- brute-force oracles -------------------------------------------------------------


def _line_masks(h: Hypergraph) -> list[int]:
    adj = line_adjacency_matrix(h)
    return [_mask(np.flatnonzero(row).tolist()) for row in adj]


def oracle_chromatic_index(h: Hypergraph, limit: int = CHROMATIC_LIMIT) -> int:
    """Exact chromatic index by backtracking over edges (new colours opened in order)."""
    if h.m > limit:
        raise TooLarge(f"{h.m} edges exceed the chromatic-index oracle limit {limit}")
    if h.m == 0:
        return 0
    nbr = _line_masks(h)
    order = sorted(range(h.m), key=lambda e: -bin(nbr[e]).count("1"))
    lower = max(h.max_degree(), 1)
    for k in range(lower, h.m + 1):
        colour = [-1] * h.m

        def rec(i, opened):
            if i == h.m:
                return True
            e = order[i]
            banned = 0
            for f in _bits(nbr[e]):
                if colour[f] >= 0:
                    banned |= 1 << colour[f]
            for c in range(min(opened + 1, k)):
                if not (banned >> c) & 1:
                    colour[e] = c
                    if rec(i + 1, max(opened, c + 1)):
                        return True
                    colour[e] = -1
            return False

        if rec(0, 0):
            return k
    return h.m


def oracle_vertex_chromatic_number(g: Graph, limit: int = VERTEX_COLOURING_LIMIT) -> int:
    """Chromatic number by inclusion-exclusion over independent-set counts."""
    n = g.n
    if n > limit:
        raise TooLarge(f"{n} vertices exceed the vertex-colouring oracle limit {limit}")
    if n == 0:
        return 0
    adj = [0] * n
    for u, v in g.edges:
        adj[u] |= 1 << v
        adj[v] |= 1 << u
    full = 1 << n
    # ind[S] = number of independent subsets of S (including the empty set)
    ind = [0] * full
    ind[0] = 1
    for S in range(1, full):
        v = _lowest(S)
        rest = S & ~(1 << v)
        ind[S] = ind[rest] + ind[rest & ~adj[v]]
    parity = [(-1) ** (n - bin(S).count("1")) for S in range(full)]
    for k in range(1, n + 1):
        total = sum(p * x**k for p, x in zip(parity, ind))
        if total > 0:
            return k
    return n


def oracle_matching_number(h: Hypergraph, limit: int = MATCHING_LIMIT) -> int:
    """Exact matching number by include/exclude branching with a counting bound."""
    if h.m > limit:
        raise TooLarge(f"{h.m} edges exceed the matching oracle limit {limit}")
    masks = [_mask(e) for e in h.edges]
    order = sorted(range(h.m), key=lambda e: -bin(masks[e]).count("1"))
    masks = [masks[e] for e in order]
    min_size = min((len(e) for e in h.edges), default=1)
    best = 0

    def rec(i, used, size):
        nonlocal best
        if size > best:
            best = size
        if i == len(masks):
            return
        free_v = h.n - bin(used).count("1")
        if size + min(len(masks) - i, free_v // min_size) <= best:
            return
        if not masks[i] & used:
            rec(i + 1, used | masks[i], size + 1)
        rec(i + 1, used, size)

    rec(0, 0, 0)
    return best


def oracle_max_intersecting(h: Hypergraph, limit: int = INTERSECTING_LIMIT) -> int:
    """Largest pairwise-intersecting subfamily: maximum clique of the line graph."""
    if h.m > limit:
        raise TooLarge(f"{h.m} edges exceed the intersecting-family oracle limit {limit}")
    if h.m == 0:
        return 0
    nbr = _line_masks(h)
    best = 0

    def expand(size, cand, excl):
        nonlocal best
        if not cand and not excl:
            best = max(best, size)
            return
        if size + bin(cand).count("1") <= best:
            return
        pivot = _lowest(cand | excl)
        for v in list(_bits(cand & ~nbr[pivot])):
            expand(size + 1, cand & nbr[v], excl & nbr[v])
            cand &= ~(1 << v)
            excl |= 1 << v

    expand(0, (1 << h.m) - 1, 0)
    return best


__all__ = [
    "ListAssignment",
    "TierParams",
    "ColouringRun",
    "greedy_by_ordering",
    "greedy_subset",
    "compress_palette",
    "vizing",
    "incidence_nibble_colouring",
    "three_tier_colouring",
    "neighbourhood_span",
    "oracle_chromatic_index",
    "oracle_vertex_chromatic_number",
    "oracle_matching_number",
    "oracle_max_intersecting",
]
