"""Hypergraph data model, structural transforms, verification and the .lhg format.

Edges are stored twice when needed: as a tuple of sorted tuples (convenient for
small instances) and as a padded ``(m, r)`` integer array with ``-1`` filling
short rows (used by the vectorised algorithms).  Either view is built lazily
from the other.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateVertex,
    DuplicateDualEdge,
    HostMismatch,
    InvalidHypergraph,
    Overflow,
    ParseError,
)

log = logging.getLogger(__name__)

# Upper bound on vertex and edge counts of materialised incidence hypergraphs.
SIZE_LIMIT = 5_000_000


class Hypergraph:
    """Simple hypergraph on vertices ``0..n-1``.

    Every edge is a strictly increasing tuple of at least two vertices and no
    edge occurs twice.  Instances are immutable.
    """

    __slots__ = ("n", "_edges", "_array", "_sizes", "_cache")

    def __init__(self, n: int, edges: Iterable[Sequence[int]] = (), *, check: bool = True):
        if n < 0:
            raise InvalidHypergraph("vertex count must be nonnegative")
        self.n = int(n)
        canon = []
        for e in edges:
            t = tuple(sorted(int(v) for v in e))
            canon.append(t)
        self._edges = tuple(canon)
        self._array = None
        self._sizes = None
        self._cache = {}
        if check:
            seen = set()
            for i, t in enumerate(self._edges):
                if len(t) < 2:
                    raise InvalidHypergraph(f"edge {i} has size {len(t)} < 2")
                if t[0] < 0 or t[-1] >= self.n:
                    raise InvalidHypergraph(f"edge {i} has a vertex outside [0, {self.n})")
                if any(a == b for a, b in zip(t, t[1:])):
                    raise InvalidHypergraph(f"edge {i} repeats a vertex")
                if t in seen:
                    raise InvalidHypergraph(f"edge {i} duplicates an earlier edge")
                seen.add(t)

    @classmethod
    def from_array(cls, n: int, array, *, check: bool = True) -> "Hypergraph":
        """Build from a padded integer array (``-1`` marks unused slots)."""
        arr = np.array(array, dtype=np.int64, copy=True)
        if arr.size == 0:
            arr = np.zeros((0, 0), dtype=np.int64)
        elif arr.ndim != 2:
            raise InvalidHypergraph("edge array must be two-dimensional")
        m = arr.shape[0]
        if m and arr.shape[1]:
            key = np.where(arr < 0, np.iinfo(np.int64).max, arr)
            key.sort(axis=1)
            arr = np.where(key == np.iinfo(np.int64).max, -1, key)
        sizes = (arr >= 0).sum(axis=1) if m else np.zeros(0, dtype=np.int64)
        if check and m:
            if sizes.min() < 2:
                raise InvalidHypergraph("edge of size < 2")
            if arr.max() >= n:
                raise InvalidHypergraph(f"vertex outside [0, {n})")
            valid = arr >= 0
            if np.any((arr[:, 1:] == arr[:, :-1]) & valid[:, 1:]):
                raise InvalidHypergraph("edge repeats a vertex")
            if len(np.unique(arr, axis=0)) != m:
                raise InvalidHypergraph("duplicate edge")
        h = cls.__new__(cls)
        h.n = int(n)
        h._edges = None
        arr.setflags(write=False)
        sizes.setflags(write=False)
        h._array = arr
        h._sizes = sizes
        h._cache = {}
        if cls is Graph and m and (sizes != 2).any():
            raise InvalidHypergraph("graph edges must have size 2")
        return h

    # -- views -------------------------------------------------------------
    @property
    def m(self) -> int:
        if self._edges is not None:
            return len(self._edges)
        return int(self._array.shape[0])

    def __len__(self) -> int:
        return self.m

    @property
    def edges(self) -> tuple:
        if self._edges is None:
            rows = self._array.tolist()
            self._edges = tuple(tuple(v for v in row if v >= 0) for row in rows)
        return self._edges

    def edge(self, i: int) -> tuple:
        return self.edges[i]

    @property
    def array(self) -> np.ndarray:
        if self._array is None:
            r = max((len(e) for e in self._edges), default=0)
            arr = np.full((len(self._edges), r), -1, dtype=np.int64)
            for i, e in enumerate(self._edges):
                arr[i, : len(e)] = e
            arr.setflags(write=False)
            self._array = arr
        return self._array

    @property
    def sizes(self) -> np.ndarray:
        if self._sizes is None:
            s = np.fromiter((len(e) for e in self._edges), dtype=np.int64, count=len(self._edges))
            s.setflags(write=False)
            self._sizes = s
        return self._sizes

    def degrees(self) -> np.ndarray:
        if "deg" not in self._cache:
            arr = self.array
            flat = arr[arr >= 0]
            d = np.bincount(flat, minlength=self.n).astype(np.int64)
            d.setflags(write=False)
            self._cache["deg"] = d
        return self._cache["deg"]

    def max_degree(self) -> int:
        d = self.degrees()
        return int(d.max()) if len(d) else 0

    def incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR incidence: edges at vertex v are ``eids[ptr[v]:ptr[v+1]]`` (ascending)."""
        if "inc" not in self._cache:
            arr = self.array
            rows, _ = np.nonzero(arr >= 0)
            verts = arr[arr >= 0]
            order = np.lexsort((rows, verts))
            eids = rows[order]
            ptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(verts, minlength=self.n), out=ptr[1:])
            self._cache["inc"] = (ptr, eids)
        return self._cache["inc"]

    def edges_at(self, v: int) -> np.ndarray:
        ptr, eids = self.incidence()
        return eids[ptr[v] : ptr[v + 1]]

    def subhypergraph(self, edge_ids) -> "Hypergraph":
        """Spanning subhypergraph with the given edges (ids are renumbered in the given order)."""
        ids = np.asarray(list(edge_ids) if not isinstance(edge_ids, np.ndarray) else edge_ids, dtype=np.int64)
        return type(self).from_array(self.n, self.array[ids], check=False) if len(ids) else type(self)(self.n, ())

    def __eq__(self, other) -> bool:
        return isinstance(other, Hypergraph) and self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, m={self.m})"


class Graph(Hypergraph):
    """A 2-uniform hypergraph with an adjacency index."""

    __slots__ = ()

    def __init__(self, n: int, edges: Iterable[Sequence[int]] = (), *, check: bool = True):
        super().__init__(n, edges, check=check)
        if any(len(e) != 2 for e in self._edges):
            raise InvalidHypergraph("graph edges must have size 2")

    @classmethod
    def from_hypergraph(cls, h: Hypergraph) -> "Graph":
        if h.m == 0:
            return cls(h.n, ())
        return cls.from_array(h.n, h.array, check=False)

    def adjacency(self) -> list[list[int]]:
        """Neighbour lists, each in ascending order."""
        if "adj" not in self._cache:
            adj = [[] for _ in range(self.n)]
            for u, v in sorted(self.edges):
                adj[u].append(v)
                adj[v].append(u)
            for a in adj:
                a.sort()
            self._cache["adj"] = adj
        return self._cache["adj"]

    def neighbours(self, v: int) -> list[int]:
        return self.adjacency()[v]

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        if self.m:
            arr = self.array
            a[arr[:, 0], arr[:, 1]] = True
            a[arr[:, 1], arr[:, 0]] = True
        return a


@dataclass(frozen=True)
class Matching:
    edge_ids: frozenset
    host_n: int

    @classmethod
    def of(cls, ids, host_n: int) -> "Matching":
        return cls(frozenset(int(i) for i in ids), int(host_n))

    def __len__(self) -> int:
        return len(self.edge_ids)

    def sorted_ids(self) -> list[int]:
        return sorted(self.edge_ids)

    def vertices(self, h: Hypergraph) -> set:
        out = set()
        for i in self.edge_ids:
            out.update(h.edges[i])
        return out


class PartialEdgeColouring:
    """Colour per edge id; ``-1`` means uncoloured."""

    __slots__ = ("colours", "palette_size")

    def __init__(self, colours, palette_size: int | None = None):
        c = np.asarray(colours, dtype=np.int64).copy()
        c.setflags(write=False)
        self.colours = c
        used = c[c >= 0]
        self.palette_size = int(palette_size) if palette_size is not None else (int(used.max()) + 1 if len(used) else 0)

    @classmethod
    def from_assignment(cls, m: int, assignment: Mapping[int, int], palette_size: int | None = None):
        c = np.full(m, -1, dtype=np.int64)
        for e, col in assignment.items():
            c[e] = col
        return cls(c, palette_size)

    @property
    def assignment(self) -> dict:
        ids = np.flatnonzero(self.colours >= 0)
        return dict(zip(ids.tolist(), self.colours[ids].tolist()))

    @property
    def m(self) -> int:
        return len(self.colours)

    def colours_used(self) -> int:
        used = self.colours[self.colours >= 0]
        return int(len(np.unique(used)))

    def uncoloured(self) -> np.ndarray:
        return np.flatnonzero(self.colours < 0)

    def classes(self) -> dict:
        out: dict = {}
        for e, c in enumerate(self.colours.tolist()):
            if c >= 0:
                out.setdefault(c, []).append(e)
        return out

    def compacted(self) -> "PartialEdgeColouring":
        """Relabel the used colours to ``0..k-1`` preserving their order."""
        c = self.colours
        used = np.unique(c[c >= 0])
        out = np.full(len(c), -1, dtype=np.int64)
        mask = c >= 0
        out[mask] = np.searchsorted(used, c[mask])
        return PartialEdgeColouring(out, len(used))

    def to_csv(self) -> str:
        lines = ["edge_id,colour"]
        for e, c in enumerate(self.colours.tolist()):
            if c >= 0:
                lines.append(f"{e},{c}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, m: int | None = None) -> "PartialEdgeColouring":
        pairs = []
        for k, line in enumerate(text.splitlines()):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if k == 0 and line.replace(" ", "") == "edge_id,colour":
                continue
            a, b = line.split(",")
            pairs.append((int(a), int(b)))
        if m is None:
            m = max((e for e, _ in pairs), default=-1) + 1
        c = np.full(m, -1, dtype=np.int64)
        for e, col in pairs:
            if not 0 <= e < m:
                raise HostMismatch(f"edge id {e} out of range for {m} edges")
            c[e] = col
        return cls(c)


class EdgeOrdering:
    """A permutation of edge ids together with its inverse."""

    __slots__ = ("order", "position")

    def __init__(self, order):
        o = np.asarray(order, dtype=np.int64).copy()
        m = len(o)
        pos = np.full(m, -1, dtype=np.int64)
        if m:
            if o.min() < 0 or o.max() >= m:
                raise InvalidHypergraph("ordering is not a permutation")
            pos[o] = np.arange(m)
            if (pos < 0).any():
                raise InvalidHypergraph("ordering is not a permutation")
        o.setflags(write=False)
        pos.setflags(write=False)
        self.order = o
        self.position = pos

    @classmethod
    def identity(cls, m: int) -> "EdgeOrdering":
        return cls(np.arange(m))

    @classmethod
    def by_size_decreasing(cls, h: Hypergraph) -> "EdgeOrdering":
        """Larger edges first, ties broken by edge id."""
        return cls(np.lexsort((np.arange(h.m), -h.sizes)))

    def __len__(self) -> int:
        return len(self.order)


# -- statistics ------------------------------------------------------------


@dataclass
class Stats:
    n: int
    m: int
    degrees: np.ndarray = field(repr=False)
    max_degree: int
    max_codegree: int
    uniformity: tuple
    is_linear: bool
    is_intersecting: bool

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "max_degree": self.max_degree,
            "min_degree": int(self.degrees.min()) if len(self.degrees) else 0,
            "max_codegree": self.max_codegree,
            "uniformity": list(self.uniformity),
            "is_linear": self.is_linear,
            "is_intersecting": self.is_intersecting,
        }


def _pair_codes(h: Hypergraph) -> np.ndarray:
    """Code ``u*n+v`` for every vertex pair inside every edge (with multiplicity)."""
    arr, sizes = h.array, h.sizes
    parts = []
    for s in np.unique(sizes):
        block = arr[sizes == s][:, :s]
        for a, b in combinations(range(int(s)), 2):
            parts.append(block[:, a] * h.n + block[:, b])
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def max_codegree(h: Hypergraph) -> int:
    codes = _pair_codes(h)
    if not len(codes):
        return 0
    _, counts = np.unique(codes, return_counts=True)
    return int(counts.max())


def is_intersecting(h: Hypergraph, linear: bool | None = None) -> bool:
    m = h.m
    if m <= 1:
        return True
    deg = h.degrees()
    arr = h.array
    d = np.where(arr >= 0, deg[np.maximum(arr, 0)] - 1, 0).sum(axis=1)
    if (d < m - 1).any():
        return False
    if linear is None:
        linear = max_codegree(h) <= 1
    if linear:
        return True
    ptr, eids = h.incidence()
    for e in h.edges:
        seen = set()
        for v in e:
            seen.update(eids[ptr[v] : ptr[v + 1]].tolist())
        if len(seen) < m:
            return False
    return True


def stats(h: Hypergraph) -> Stats:
    deg = h.degrees()
    cod = max_codegree(h)
    sizes = h.sizes
    unif = (int(sizes.min()), int(sizes.max())) if h.m else (0, 0)
    linear = cod <= 1
    return Stats(
        n=h.n,
        m=h.m,
        degrees=deg,
        max_degree=int(deg.max()) if h.n else 0,
        max_codegree=cod,
        uniformity=unif,
        is_linear=linear,
        is_intersecting=is_intersecting(h, linear),
    )


# -- transforms --------------------------------------------------------------


def _intersecting_pairs(h: Hypergraph) -> np.ndarray:
    """Sorted unique pairs ``(e, f)``, ``e < f``, of intersecting edges."""
    ptr, eids = h.incidence()
    m = h.m
    parts = []
    for v in range(h.n):
        inc = eids[ptr[v] : ptr[v + 1]]
        if len(inc) < 2:
            continue
        a, b = np.triu_indices(len(inc), 1)
        parts.append(inc[a] * m + inc[b])
    if not parts:
        return np.zeros((0, 2), dtype=np.int64)
    codes = np.unique(np.concatenate(parts))
    return np.stack([codes // m, codes % m], axis=1)


def line_graph(h: Hypergraph) -> Graph:
    pairs = _intersecting_pairs(h)
    if not len(pairs):
        return Graph(h.m, ())
    return Graph.from_array(h.m, pairs, check=False)


def line_adjacency_matrix(h: Hypergraph) -> np.ndarray:
    """Dense boolean line-graph adjacency (for instances with a few thousand edges)."""
    a = np.zeros((h.m, h.m), dtype=bool)
    p = _intersecting_pairs(h)
    a[p[:, 0], p[:, 1]] = True
    a[p[:, 1], p[:, 0]] = True
    return a


def dual(h: Hypergraph) -> Hypergraph:
    """Vertices become edges: vertex ``v`` turns into the dual edge ``{e : v in e}``."""
    deg = h.degrees()
    low = np.flatnonzero(deg < 2)
    if len(low):
        raise DegenerateVertex(f"vertex {int(low[0])} has degree {int(deg[low[0]])} < 2")
    ptr, eids = h.incidence()
    edges = [tuple(eids[ptr[v] : ptr[v + 1]].tolist()) for v in range(h.n)]
    seen = {}
    for v, e in enumerate(edges):
        if e in seen:
            raise DuplicateDualEdge(f"vertices {seen[e]} and {v} lie in exactly the same edges")
        seen[e] = v
    return Hypergraph(h.m, edges, check=False)


def incidence_vertex(m: int, n: int, layer: int, v: int) -> int:
    """Id of the copy of vertex ``v`` in ``layer`` inside the incidence hypergraph."""
    return m + layer * n + v


def incidence_edge_id(m: int, e: int, layer: int) -> int:
    """Id of the incidence edge built from edge ``e`` and ``layer`` (layer-major)."""
    return layer * m + e


def incidence_hypergraph(h: Hypergraph, t: int, limit: int | None = None) -> Hypergraph:
    """t-wise incidence hypergraph.

    Vertices ``0..m-1`` stand for the edges of ``h``; vertex ``m + i*n + v`` is
    the copy of ``v`` in layer ``i``.  Edge ``i*m + e`` is ``{e} ∪ ({i} × e)``.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    limit = SIZE_LIMIT if limit is None else limit
    m, n = h.m, h.n
    if m + t * n > limit or m * t > limit:
        raise Overflow(f"incidence hypergraph with {m + t * n} vertices and {m * t} edges exceeds limit {limit}")
    arr = h.array
    r = arr.shape[1] if m else 0
    out = np.full((m * t, r + 1), -1, dtype=np.int64)
    if m:
        layers = np.repeat(np.arange(t), m)
        src = np.tile(np.arange(m), t)
        out[:, 0] = src
        block = arr[src]
        out[:, 1:] = np.where(block >= 0, m + layers[:, None] * n + block, -1)
    return Hypergraph.from_array(m + t * n, out, check=False)


def split_incidence_matching(h: Hypergraph, t: int, inc_edge_ids) -> list[Matching]:
    """Matchings ``M_i = {e : (e, i) used}`` encoded by a matching of the incidence hypergraph."""
    buckets = [[] for _ in range(t)]
    for f in inc_edge_ids:
        i, e = divmod(int(f), h.m)
        buckets[i].append(e)
    return [Matching.of(b, h.n) for b in buckets]


def encode_matchings(h: Hypergraph, matchings: Sequence) -> list[int]:
    """Inverse of :func:`split_incidence_matching`."""
    out = []
    for i, mt in enumerate(matchings):
        ids = mt.edge_ids if isinstance(mt, Matching) else mt
        out.extend(incidence_edge_id(h.m, int(e), i) for e in ids)
    return sorted(out)


def shadow_graph(h: Hypergraph) -> Graph:
    codes = np.unique(_pair_codes(h))
    if not len(codes):
        return Graph(h.n, ())
    return Graph.from_array(h.n, np.stack([codes // h.n, codes % h.n], axis=1), check=False)


def normalized_volume(h: Hypergraph, edge_ids) -> Fraction:
    pairs = comb(h.n, 2)
    if pairs == 0:
        return Fraction(0)
    sizes = h.sizes
    total = sum(comb(int(sizes[e]), 2) for e in edge_ids)
    return Fraction(total, pairs)


def forward_degree_profile(h: Hypergraph, order: EdgeOrdering) -> np.ndarray:
    """``out[j]`` is the number of edges meeting ``order.order[j]`` that come earlier."""
    if len(order) != h.m:
        raise HostMismatch("ordering length differs from the edge count")
    pos = order.position
    out = np.zeros(h.m, dtype=np.int64)
    if not h.m:
        return out
    if max_codegree(h) <= 1:
        # two edges meet in at most one vertex: sum the ranks at each vertex
        ptr, eids = h.incidence()
        verts = np.repeat(np.arange(h.n), np.diff(ptr))
        key = np.lexsort((pos[eids], verts))
        ranks = np.arange(len(eids)) - ptr[verts[key]]
        np.add.at(out, pos[eids[key]], ranks)
        return out
    pairs = _intersecting_pairs(h)
    if len(pairs):
        later = np.maximum(pos[pairs[:, 0]], pos[pairs[:, 1]])
        out += np.bincount(later, minlength=h.m)
    return out


# -- verification ------------------------------------------------------------


@dataclass
class Verdict:
    ok: bool
    witness: tuple | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _check_ids(h: Hypergraph, ids) -> np.ndarray:
    arr = np.asarray(sorted(int(i) for i in ids), dtype=np.int64)
    if len(arr) and (arr[0] < 0 or arr[-1] >= h.m):
        bad = arr[0] if arr[0] < 0 else arr[-1]
        raise HostMismatch(f"edge id {int(bad)} out of range for {h.m} edges")
    return arr


def _first_clash(h: Hypergraph, ids: np.ndarray, keys=None):
    """First pair of listed edges sharing a vertex (and key, if given).

    ``keys`` is aligned with ``ids``.
    """
    if not len(ids):
        return None
    block = h.array[ids]
    mask = block >= 0
    rows = np.nonzero(mask)[0]
    verts = block[mask]
    code = verts if keys is None else verts * (int(keys.max()) + 1) + keys[rows]
    order = np.lexsort((ids[rows], code))
    sc = code[order]
    dup = np.flatnonzero(sc[1:] == sc[:-1])
    if not len(dup):
        return None
    # report the clash whose later edge is smallest, then the earlier partner
    cands = []
    for j in dup:
        a, b = ids[rows[order[j]]], ids[rows[order[j + 1]]]
        cands.append((max(a, b), min(a, b)))
    b, a = min(cands)
    return int(a), int(b)


def verify(h: Hypergraph, obj=None, kind: str = "matching", U=None) -> Verdict:
    """Check one invariant and return a witness on failure.

    kinds: ``matching`` (obj = Matching or ids), ``proper_colouring``
    (obj = PartialEdgeColouring), ``coverage`` (obj = matching, U = vertex set),
    ``linear`` (obj ignored).
    """
    if kind == "linear":
        codes = _pair_codes(h)
        if not len(codes):
            return Verdict(True)
        uniq, counts = np.unique(codes, return_counts=True)
        bad = np.flatnonzero(counts > 1)
        if len(bad):
            c = int(uniq[bad[0]])
            return Verdict(False, (c // h.n, c % h.n), "pair lies in two or more edges")
        return Verdict(True)
    if kind == "matching":
        ids = obj.edge_ids if isinstance(obj, Matching) else obj
        if isinstance(obj, Matching) and obj.host_n != h.n:
            raise HostMismatch(f"matching built for {obj.host_n} vertices, host has {h.n}")
        arr = _check_ids(h, ids)
        clash = _first_clash(h, arr)
        if clash:
            return Verdict(False, clash, "matched edges overlap")
        return Verdict(True)
    if kind == "coverage":
        ids = obj.edge_ids if isinstance(obj, Matching) else obj
        arr = _check_ids(h, ids)
        covered = np.zeros(h.n, dtype=bool)
        if len(arr):
            block = h.array[arr]
            covered[block[block >= 0]] = True
        for u in sorted(int(x) for x in (U or ())):
            if not 0 <= u < h.n:
                raise HostMismatch(f"vertex {u} out of range")
            if not covered[u]:
                return Verdict(False, (u,), "vertex of U left uncovered")
        return Verdict(True)
    if kind == "proper_colouring":
        col = obj
        if col.m != h.m:
            raise HostMismatch(f"colouring covers {col.m} edges, host has {h.m}")
        c = col.colours
        ids = np.flatnonzero(c >= 0)
        if len(ids) and c[ids].max() >= col.palette_size:
            e = int(ids[np.argmax(c[ids] >= col.palette_size)])
            return Verdict(False, (e,), "colour outside the palette")
        clash = _first_clash(h, ids, keys=c[ids])
        if clash:
            return Verdict(False, clash, "intersecting edges share a colour")
        return Verdict(True)
    raise ValueError(f"unknown verification kind {kind!r}")


# -- .lhg text format ------------------------------------------------------------


@dataclass
class ParseResult:
    hypergraph: Hypergraph
    dropped: int = 0
    labels: tuple | None = None


def parse_lhg(text: str, *, labelled: bool = False) -> ParseResult:
    """Parse the ``.lhg`` format.

    With ``labelled=True`` vertex tokens may be arbitrary strings; they are
    numbered in order of first appearance and the label table is returned.
    """
    header = None
    edges = []
    dropped = 0
    labels: dict = {}
    declared_m = 0
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if header is None:
            if len(toks) != 2:
                raise ParseError("BadHeader", "expected 'n m'", lineno)
            try:
                header = (int(toks[0]), int(toks[1]))
            except ValueError:
                raise ParseError("BadHeader", "n and m must be integers", lineno) from None
            if header[0] < 0 or header[1] < 0:
                raise ParseError("BadHeader", "negative count", lineno)
            declared_m = header[1]
            continue
        if labelled:
            ids = []
            for t in toks:
                if t not in labels:
                    labels[t] = len(labels)
                ids.append(labels[t])
        else:
            try:
                ids = [int(t) for t in toks]
            except ValueError:
                raise ParseError("BadToken", f"non-integer vertex in {line!r}", lineno) from None
        if len(set(ids)) != len(ids):
            raise ParseError("DuplicateVertexInEdge", line, lineno)
        if any(v < 0 or v >= header[0] for v in ids):
            raise ParseError("VertexOutOfRange", line, lineno)
        edges.append((lineno, tuple(sorted(ids))))
    if header is None:
        raise ParseError("BadHeader", "missing header line")
    if len(edges) != declared_m:
        raise ParseError("EdgeCountMismatch", f"header declares {declared_m} edges, found {len(edges)}")
    kept = []
    seen = set()
    for lineno, e in edges:
        if len(e) < 2:
            dropped += 1
            continue
        if e in seen:
            raise ParseError("DuplicateEdge", " ".join(map(str, e)), lineno)
        seen.add(e)
        kept.append(e)
    if dropped:
        log.warning("dropped %d edge(s) of size one", dropped)
    table = None
    if labelled:
        table = tuple(sorted(labels, key=labels.get))
    return ParseResult(Hypergraph(header[0], kept, check=False), dropped, table)


def serialize_lhg(h: Hypergraph, labels: Sequence[str] | None = None) -> str:
    edges = sorted(h.edges)
    out = [f"{h.n} {len(edges)}"]
    if labels is None:
        out.extend(" ".join(map(str, e)) for e in edges)
    else:
        # emit in label order so the labelled parse reproduces the same numbering
        out.extend(" ".join(labels[v] for v in e) for e in edges)
    return "\n".join(out) + "\n"


def read_lhg(path) -> Hypergraph:
    with open(path, encoding="utf-8") as fh:
        return parse_lhg(fh.read()).hypergraph


def write_lhg(path, h: Hypergraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_lhg(h))


def hypergraph_from_text(text: str) -> Hypergraph:
    return parse_lhg(text).hypergraph


# -- canonical labelling -----------------------------------------------------------


def _refine(colour: list, nbrs: list) -> list:
    """Colour refinement on the incidence graph until the partition is stable."""
    k = len(set(colour))
    while True:
        sig = [(colour[x], tuple(sorted(colour[y] for y in nbrs[x]))) for x in range(len(colour))]
        ranks = {s: i for i, s in enumerate(sorted(set(sig)))}
        new = [ranks[s] for s in sig]
        k2 = len(ranks)
        colour = new
        if k2 == k:
            return colour
        k = k2


def canonical_form(h: Hypergraph, max_leaves: int = 200_000) -> tuple:
    """Isomorphism-invariant certificate: equal for two hypergraphs iff isomorphic.

    Uses colour refinement on the vertex/edge incidence graph and explores the
    individualisation tree, keeping the lexicographically least relabelled
    edge list.
    """
    n, m = h.n, h.m
    nbrs = [[] for _ in range(n + m)]
    for i, e in enumerate(h.edges):
        for v in e:
            nbrs[v].append(n + i)
            nbrs[n + i].append(v)
    start = _refine([0] * n + [1] * m, nbrs)
    best = [None]
    leaves = [0]

    def certificate(colour):
        vorder = sorted(range(n), key=lambda v: colour[v])
        label = {v: i for i, v in enumerate(vorder)}
        return tuple(sorted(tuple(sorted(label[v] for v in e)) for e in h.edges))

    def search(colour):
        cells: dict = {}
        for x, c in enumerate(colour):
            cells.setdefault(c, []).append(x)
        target = None
        for c in sorted(cells):
            if len(cells[c]) > 1:
                target = cells[c]
                break
        if target is None:
            leaves[0] += 1
            if leaves[0] > max_leaves:
                raise Overflow("canonical labelling search exceeded its leaf budget")
            cert = certificate(colour)
            if best[0] is None or cert < best[0]:
                best[0] = cert
            return
        for x in target:
            split = [2 * c + (0 if y == x else 1) if colour[y] == colour[x] else 2 * c for y, c in enumerate(colour)]
            search(_refine(split, nbrs))

    search(start)
    return (n, m, best[0] if best[0] is not None else ())


def is_isomorphic(a: Hypergraph, b: Hypergraph) -> bool:
    if a.n != b.n or a.m != b.m or sorted(a.sizes.tolist()) != sorted(b.sizes.tolist()):
        return False
    if sorted(a.degrees().tolist()) != sorted(b.degrees().tolist()):
        return False
    return canonical_form(a) == canonical_form(b)


def fingerprint(h: Hypergraph) -> str:
    import hashlib

    return hashlib.sha256(serialize_lhg(h).encode()).hexdigest()[:16]
