"""Colouring linear hypergraphs with few colours.

The first part colours {2,3}-uniform linear hypergraphs with at most n + 1
colours: a reservoir of graph edges is set aside, nibble matchings of the rest
are extended over the high-degree vertices with reservoir edges, the small
remainder is split into small matchings, and the unused reservoir edges are
coloured by Vizing's algorithm.

The second part handles hypergraphs whose edges are all large: an ordering
with small forward degrees is searched for, and when none exists a set of
similar-size edges with large volume is returned instead.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .colouring import compress_palette, greedy_by_ordering, greedy_subset, vizing
from .errors import (
    AbsorptionFailed,
    DegreeBoundViolated,
    NoPerfectMatching,
    PaletteExceeded,
    PostconditionFailed,
    ReservoirFailed,
)
from .hypercore import (
    EdgeOrdering,
    Graph,
    Hypergraph,
    PartialEdgeColouring,
    forward_degree_profile,
    line_adjacency_matrix,
    max_codegree,
    normalized_volume,
    verify,
)
from .nibble import NibbleParams, TrackedFamilies, pseudorandom_matchings

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EflParams:
    xi: float = 0.002
    kappa: float = 0.01
    gamma: float = 0.05
    eps: float = 0.2
    seed: int = 0
    reservoir_method: str = "balanced"
    reservoir_budget: int = 20
    r2_samples: int = 1000
    slice_budget: int = 3
    matching_budget: int = 20
    carry_residual: bool = True
    compress: bool = True
    strict: bool = False
    nibble: NibbleParams = NibbleParams()

    def __post_init__(self):
        if not 0 < self.xi < self.kappa < self.gamma < self.eps < 1:
            raise ValueError("need 0 < xi < kappa < gamma < eps < 1")
        if self.reservoir_method not in ("balanced", "independent"):
            raise ValueError("reservoir_method must be 'balanced' or 'independent'")
        if min(self.reservoir_budget, self.slice_budget, self.matching_budget) < 1:
            raise ValueError("retry budgets must be positive")

    def replace(self, **kw) -> "EflParams":
        vals = {f: getattr(self, f) for f in self.__dataclass_fields__}
        vals.update(kw)
        return EflParams(**vals)


class _Checks:
    """Measured-versus-required record of every inequality looked at."""

    def __init__(self):
        self.items = []

    def add(self, name, measured, required, ok, **extra):
        item = {"name": name, "measured": _plain(measured), "required": _plain(required), "ok": bool(ok)}
        item.update({k: _plain(v) for k, v in extra.items()})
        self.items.append(item)
        return bool(ok)

    def failed(self) -> list:
        return [c["name"] for c in self.items if not c["ok"]]


def _plain(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def _rng(seed, *path) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *path]))


# -- preprocessing -----------------------------------------------------------------


def covers_all_pairs(h: Hypergraph) -> bool:
    total = sum(comb(int(s), 2) for s in h.sizes)
    return total == comb(h.n, 2) and max_codegree(h) <= 1


def add_virtual_pairs(h: Hypergraph) -> tuple[Hypergraph, int]:
    """Append a 2-edge for every pair not covered by an edge; returns (host, #virtual)."""
    n = h.n
    covered = np.zeros((n, n), dtype=bool)
    arr = h.array
    for a in range(arr.shape[1] if h.m else 0):
        for b in range(a + 1, arr.shape[1]):
            ok = arr[:, b] >= 0
            covered[arr[ok, a], arr[ok, b]] = True
    iu, ju = np.triu_indices(n, 1)
    miss = ~(covered[iu, ju] | covered[ju, iu])
    if not miss.any():
        return h, 0
    extra = np.full((int(miss.sum()), max(arr.shape[1], 2) if h.m else 2), -1, dtype=np.int64)
    extra[:, 0] = iu[miss]
    extra[:, 1] = ju[miss]
    base = arr if h.m else np.zeros((0, 2), dtype=np.int64)
    if base.shape[1] < extra.shape[1]:
        base = np.concatenate([base, np.full((len(base), extra.shape[1] - base.shape[1]), -1)], axis=1)
    return Hypergraph.from_array(n, np.concatenate([base, extra]), check=False), len(extra)


def degree_identity_holds(h: Hypergraph) -> bool:
    """n - 1 = 2 d_H(v) - d_G(v) at every vertex (holds for pair covers)."""
    dg = _graph_degrees(h)
    return bool(np.all(2 * h.degrees() - dg == h.n - 1))


def _graph_degrees(h: Hypergraph) -> np.ndarray:
    two = h.sizes == 2
    arr = h.array[two][:, :2] if two.any() else np.zeros((0, 2), dtype=np.int64)
    return np.bincount(arr.ravel(), minlength=h.n)


def high_degree_set(h: Hypergraph, eps: float) -> np.ndarray:
    """U = {u : d_G(u) >= (1 - eps) n}."""
    return np.flatnonzero(_graph_degrees(h) >= (1 - eps) * h.n)


# -- reservoir ---------------------------------------------------------------------


@dataclass
class ReservoirSplit:
    R: np.ndarray
    U: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    attempts: int = 1
    ok: bool = True


def _euler_halves(n: int, u: np.ndarray, v: np.ndarray, rng) -> np.ndarray:
    """Label edges alternately along Euler circuits; each vertex gets half its edges +-1."""
    m = len(u)
    if m == 0:
        return np.zeros(0, dtype=bool)
    deg = np.bincount(u, minlength=n) + np.bincount(v, minlength=n)
    odd = np.flatnonzero(deg % 2)
    dummy = n
    U = np.concatenate([u, odd])
    V = np.concatenate([v, np.full(len(odd), dummy)])
    M = len(U)
    perm = rng.permutation(M)
    ends = np.concatenate([U[perm], V[perm]])
    other = np.concatenate([V[perm], U[perm]])
    eid = np.concatenate([perm, perm])
    order = np.argsort(ends, kind="stable")
    ptr = np.zeros(n + 2, dtype=np.int64)
    np.cumsum(np.bincount(ends, minlength=n + 1), out=ptr[1:])
    adj_v = other[order].tolist()
    adj_e = eid[order].tolist()
    ptr = ptr.tolist()
    pos = ptr[:-1]
    used = bytearray(M)
    label = np.zeros(M, dtype=bool)
    starts = [dummy] + rng.permutation(n).tolist()
    for s in starts:
        stack = [s]
        estack = [-1]
        circuit = []
        while stack:
            x = stack[-1]
            p = pos[x]
            end = ptr[x + 1]
            while p < end and used[adj_e[p]]:
                p += 1
            if p < end:
                e = adj_e[p]
                used[e] = 1
                pos[x] = p + 1
                stack.append(adj_v[p])
                estack.append(e)
            else:
                pos[x] = p
                stack.pop()
                e = estack.pop()
                if e >= 0:
                    circuit.append(e)
        if circuit:
            flip = bool(rng.random() < 0.5)
            c = np.asarray(circuit, dtype=np.int64)
            label[c] = ((np.arange(len(c)) % 2) == 0) ^ flip
    return label[:m]


def _typicality(n, gu, gv, inR, inU):
    """R1 residuals: returns (dev_inside_U, dev_outside_U) per vertex."""

    def counts(mask):
        a, b = gu[mask], gv[mask]
        toU = np.bincount(a[inU[b]], minlength=n) + np.bincount(b[inU[a]], minlength=n)
        allc = np.bincount(a, minlength=n) + np.bincount(b, minlength=n)
        return toU, allc - toU

    gU, gO = counts(np.ones(len(gu), dtype=bool))
    rU, rO = counts(inR)
    return rU - gU / 2, rO - gO / 2


def _upper_regularity(n, gu, gv, inR, xi, samples, rng):
    """Sampled R2: |E(S,T) cap R| <= (1/2 + xi)|S||T| for disjoint S, T of size >= xi n."""
    lo = max(1, math.ceil(xi * n))
    out = {"samples": 0, "violations": 0, "worst_ratio": 0.0}
    if n < 2 * lo or not len(gu):
        return out
    a, b = gu[inR], gv[inR]
    A = np.zeros((n, n), dtype=np.float32)
    A[a, b] = 1
    A[b, a] = 1
    worst = 0.0
    viol = 0
    done = 0
    batch = 200
    while done < samples:
        k = min(batch, samples - done)
        X = np.zeros((n, k), dtype=np.float32)
        Y = np.zeros((n, k), dtype=np.float32)
        s_sz = rng.integers(lo, n // 2 + 1, size=k)
        t_sz = np.minimum(rng.integers(lo, n // 2 + 1, size=k), n - s_sz)
        for j in range(k):
            p = rng.permutation(n)
            X[p[: s_sz[j]], j] = 1
            Y[p[s_sz[j] : s_sz[j] + t_sz[j]], j] = 1
        e = (X * (A @ Y)).sum(axis=0)
        bound = (0.5 + xi) * s_sz * t_sz
        viol += int((e > bound).sum())
        worst = max(worst, float((e / (s_sz * t_sz)).max()))
        done += k
    deg = A.sum(axis=1)
    top = np.argsort(-deg, kind="stable")[:lo]
    Sx = np.zeros(n, dtype=np.float32)
    Sx[top] = 1
    e_top = float(Sx @ A @ (1 - Sx))
    top_ok = e_top <= (0.5 + xi) * lo * (n - lo)
    out.update(samples=done, violations=viol, worst_ratio=worst, top_degree_ok=bool(top_ok))
    return out


def reservoir(h: Hypergraph, p: EflParams = EflParams()) -> ReservoirSplit:
    """Choose R, about half of the 2-edges, with typicality (R1) and sampled upper regularity (R2)."""
    if not covers_all_pairs(h):
        raise ValueError("reservoir needs a linear hypergraph covering every pair")
    n = h.n
    two = np.flatnonzero(h.sizes == 2)
    gu = h.array[two, 0].astype(np.int64)
    gv = h.array[two, 1].astype(np.int64)
    U = high_degree_set(h, p.eps)
    inU = np.zeros(n, dtype=bool)
    inU[U] = True
    part = inU[gu].astype(int) + inU[gv].astype(int)
    xin = p.xi * n
    best = None
    rng = _rng(p.seed, 1)
    for attempt in range(1, p.reservoir_budget + 1):
        if p.reservoir_method == "balanced":
            inR = np.zeros(len(two), dtype=bool)
            for k in range(3):
                sel = np.flatnonzero(part == k)
                inR[sel] = _euler_halves(n, gu[sel], gv[sel], rng)
        else:
            inR = rng.random(len(two)) < 0.5
        dU, dO = _typicality(n, gu, gv, inR, inU)
        r1 = float(max(np.abs(dU).max(initial=0), np.abs(dO).max(initial=0)))
        r2 = _upper_regularity(n, gu, gv, inR, p.xi, p.r2_samples, rng)
        dR = np.bincount(gu[inR], minlength=n) + np.bincount(gv[inR], minlength=n)
        rest = h.degrees() - dR
        r53 = float(np.abs(rest - (n - 1) / 2).max(initial=0))
        ok1 = r1 <= xin
        ok2 = r2["violations"] == 0 and r2.get("top_degree_ok", True)
        ok3 = r53 <= 2 * xin
        diag = {
            "method": p.reservoir_method,
            "R1_worst": r1,
            "R1_bound": xin,
            "R1_ok": ok1,
            "R2": r2,
            "R2_ok": ok2,
            "nonreserved_degree_worst": r53,
            "nonreserved_degree_bound": 2 * xin,
            "nonreserved_degree_ok": ok3,
            "degree_identity_ok": degree_identity_holds(h),
            "xi_n_at_least_one": xin >= 1,
            "U_size": int(len(U)),
            "R_size": int(inR.sum()),
        }
        score = (not ok1) + (not ok2) + (not ok3), r1
        if best is None or score < best[0]:
            best = (score, inR, diag, attempt)
        if ok1 and ok2 and ok3:
            return ReservoirSplit(two[inR], U, diag, attempt, True)
    _, inR, diag, attempt = best
    bound = "R1" if not diag["R1_ok"] else ("R2" if not diag["R2_ok"] else "non-reserved degree")
    if p.strict:
        raise ReservoirFailed(bound, diag)
    diag["failed_bound"] = bound
    return ReservoirSplit(two[inR], U, diag, p.reservoir_budget, False)


# -- coverage certificate --------------------------------------------------------------


@dataclass
class CoverageCertificate:
    uncovered: list
    defects: list
    flag: str

    def as_dict(self) -> dict:
        return {"flag": self.flag, "defects": self.defects, "max_uncovered_per_matching": max((len(x) for x in self.uncovered), default=0)}


def coverage_certificate(h: Hypergraph, classes, U, S=None) -> CoverageCertificate:
    """Perfect / nearly perfect coverage of U by the given edge-disjoint matchings."""
    U = np.asarray(sorted(int(u) for u in U), dtype=np.int64)
    S = set(U.tolist()) if S is None else set(int(s) for s in S)
    uncovered = []
    miss_count = np.zeros(h.n, dtype=np.int64)
    for ids in classes:
        cov = np.zeros(h.n, dtype=bool)
        ids = np.asarray(list(ids), dtype=np.int64)
        if len(ids):
            block = h.array[ids]
            cov[block[block >= 0]] = True
        miss = U[~cov[U]] if len(U) else U
        uncovered.append(miss.tolist())
        miss_count[miss] += 1
    defects = sorted({u for m in uncovered for u in m})
    if all(not m for m in uncovered):
        flag = "perfect"
    elif all(len(m) <= 1 for m in uncovered) and (len(U) == 0 or miss_count[U].max() <= 1) and set(defects) <= S:
        flag = "nearly_perfect"
    else:
        flag = "failed"
    return CoverageCertificate(uncovered, defects, flag)


# -- perfect matchings in dense graphs ---------------------------------------------------


def _hopcroft_karp(adj: list, nA: int, nB: int) -> list:
    """Maximum bipartite matching; returns match_a (B index or -1) per A vertex."""
    INF = 1 << 30
    ma = [-1] * nA
    mb = [-1] * nB
    while True:
        dist = [INF] * nA
        queue = [a for a in range(nA) if ma[a] < 0]
        for a in queue:
            dist[a] = 0
        found = False
        qi = 0
        while qi < len(queue):
            a = queue[qi]
            qi += 1
            for b in adj[a]:
                a2 = mb[b]
                if a2 < 0:
                    found = True
                elif dist[a2] == INF:
                    dist[a2] = dist[a] + 1
                    queue.append(a2)
        if not found:
            return ma
        it = [0] * nA

        def dfs(a):
            stack = [a]
            path = []
            while stack:
                x = stack[-1]
                advanced = False
                while it[x] < len(adj[x]):
                    b = adj[x][it[x]]
                    it[x] += 1
                    a2 = mb[b]
                    if a2 < 0:
                        path.append((x, b))
                        for xa, xb in path:
                            ma[xa] = xb
                            mb[xb] = xa
                        return True
                    if dist[a2] == dist[x] + 1:
                        path.append((x, b))
                        stack.append(a2)
                        advanced = True
                        break
                if not advanced:
                    dist[x] = INF
                    stack.pop()
                    if path:
                        path.pop()
            return False

        for a in range(nA):
            if ma[a] < 0:
                dfs(a)


def _perfect_matching_adj(adj: np.ndarray, rng, budget: int):
    """Random equitable bipartition + Hopcroft-Karp on a dense adjacency matrix.

    Returns (pairs, perfect, attempts) with the largest matching found.
    """
    m = adj.shape[0]
    if m == 0:
        return [], True, 0
    best = []
    for attempt in range(1, budget + 1):
        perm = rng.permutation(m)
        A, B = perm[: m // 2], perm[m // 2 :]
        sub = adj[np.ix_(A, B)]
        lists = [np.flatnonzero(row).tolist() for row in sub]
        ma = _hopcroft_karp(lists, len(A), len(B))
        pairs = [(int(A[a]), int(B[b])) for a, b in enumerate(ma) if b >= 0]
        if len(pairs) > len(best):
            best = pairs
        if m % 2 == 0 and len(pairs) == m // 2:
            return pairs, True, attempt
    return best, False, budget


def dense_perfect_matching(g: Hypergraph, p: EflParams = EflParams(), rng=None, budget: int | None = None) -> list:
    """Perfect matching (edge ids) of a graph via random balanced bipartitions."""
    if g.n % 2:
        raise ValueError("perfect matching needs an even number of vertices")
    rng = _rng(p.seed, 2) if rng is None else rng
    adj = np.zeros((g.n, g.n), dtype=bool)
    index = {}
    for e, (u, v) in enumerate(g.edges):
        adj[u, v] = adj[v, u] = True
        index[(u, v)] = e
    pairs, ok, attempts = _perfect_matching_adj(adj, rng, budget or p.matching_budget)
    if not ok:
        err = NoPerfectMatching(f"no perfect matching after {attempts} bipartitions (best {len(pairs)} of {g.n // 2})")
        err.best = sorted(index[(min(a, b), max(a, b))] for a, b in pairs)
        raise err
    return sorted(index[(min(a, b), max(a, b))] for a, b in pairs)


# -- absorption ----------------------------------------------------------------------


class ReservoirPool:
    """Unused reservoir edges as a dense adjacency with edge ids."""

    def __init__(self, h: Hypergraph, ids):
        n = h.n
        self.n = n
        self.adj = np.zeros((n, n), dtype=bool)
        self.eid = np.full((n, n), -1, dtype=np.int64)
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids):
            a, b = h.array[ids, 0], h.array[ids, 1]
            self.adj[a, b] = self.adj[b, a] = True
            self.eid[a, b] = self.eid[b, a] = ids
        self.used = []

    def take(self, a: int, b: int) -> int:
        e = int(self.eid[a, b])
        self.adj[a, b] = self.adj[b, a] = False
        self.used.append(e)
        return e

    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1)

    def remaining(self) -> np.ndarray:
        iu, ju = np.nonzero(np.triu(self.adj, 1))
        return np.sort(self.eid[iu, ju])


@dataclass
class AbsorbResult:
    added: list
    defects: list
    branch: str
    failures: list = field(default_factory=list)


def absorb(h: Hypergraph, matching_ids, pool: ReservoirPool, S: np.ndarray, U: np.ndarray, p: EflParams = EflParams(), rng=None, *, slice_index=None, colour=None) -> AbsorbResult:
    """Extend a matching with reservoir edges so it covers U (all but one vertex at most).

    ``S`` is a boolean vertex mask of the vertices allowed as defects; the edges
    used are removed from ``pool``.
    """
    rng = _rng(p.seed, 3) if rng is None else rng
    n = h.n
    inU = np.zeros(n, dtype=bool)
    inU[np.asarray(U, dtype=np.int64)] = True
    covered = np.zeros(n, dtype=bool)
    ids = np.asarray(sorted(int(e) for e in matching_ids), dtype=np.int64)
    if len(ids):
        block = h.array[ids]
        covered[block[block >= 0]] = True
    Ui = np.flatnonzero(inU & ~covered)
    if not len(Ui):
        return AbsorbResult([], [], "nothing")
    added, defects, failures = [], [], []

    def fail(stage):
        if p.strict:
            raise AbsorptionFailed(stage, slice_index, colour)
        failures.append(stage)

    if inU.sum() < n / 100:
        busy = covered.copy()
        busy[Ui] = True
        for u in rng.permutation(Ui).tolist():
            cand = np.flatnonzero(pool.adj[u] & ~busy)
            if not len(cand):
                fail("greedy exhaustion")
                defects.append(u)
                continue
            x = int(cand[rng.integers(len(cand))])
            added.append(pool.take(u, x))
            busy[x] = True
        return AbsorbResult(added, defects, "greedy", failures)
    branch = "internal"
    inner = Ui
    outward = None
    if len(Ui) % 2:
        if inU.sum() < 3 * n / 4:
            outside = ~inU & ~covered
            order = rng.permutation(Ui)
            for u in order.tolist():
                cand = np.flatnonzero(pool.adj[u] & outside)
                if len(cand):
                    outward = (u, int(cand[rng.integers(len(cand))]))
                    break
            if outward is None:
                fail("no outward edge")
                u = int(order[0])
                defects.append(u)
            else:
                u = outward[0]
            branch = "internal+outward"
        else:
            cand = Ui[S[Ui]]
            if not len(cand):
                fail("no defect vertex in S")
                cand = Ui
            u = int(cand[rng.integers(len(cand))])
            defects.append(u)
        inner = Ui[Ui != u]
    sub = pool.adj[np.ix_(inner, inner)]
    pairs, ok, _ = _perfect_matching_adj(sub, rng, p.matching_budget)
    if not ok:
        fail("no perfect matching")
        hit = np.zeros(len(inner), dtype=bool)
        for a, b in pairs:
            hit[a] = hit[b] = True
        defects.extend(inner[~hit].tolist())
    for a, b in pairs:
        added.append(pool.take(int(inner[a]), int(inner[b])))
    if outward is not None:
        added.append(pool.take(*outward))
    return AbsorbResult(added, sorted(defects), branch, failures)


# -- leftover decomposition -------------------------------------------------------------


@dataclass
class LeftoverDecomposition:
    chunks: list
    classes: int
    checks: list = field(default_factory=list)


def leftover_decompose(h: Hypergraph, edge_ids, gamma: float, n: int | None = None, strict: bool = False) -> LeftoverDecomposition:
    """Split the listed edges into matchings spanning at most sqrt(gamma) n vertices each."""
    n = h.n if n is None else n
    ids = np.asarray(sorted(int(e) for e in edge_ids), dtype=np.int64)
    checks = _Checks()
    if not len(ids):
        return LeftoverDecomposition([], 0, checks.items)
    block = h.array[ids]
    delta = int(np.bincount(block[block >= 0], minlength=h.n).max())
    if not checks.add("leftover max degree", delta, gamma * n, delta <= gamma * n) and strict:
        raise DegreeBoundViolated(f"leftover max degree {delta} exceeds {gamma * n:g}")
    colours = greedy_subset(h, ids.tolist())
    cls = colours[ids]
    span = max(1, math.floor(math.sqrt(gamma) * n))
    chunks = []
    order = np.argsort(cls, kind="stable")
    split = np.flatnonzero(np.diff(cls[order])) + 1
    for group in np.split(ids[order], split):
        cur, width = [], 0
        for e in group.tolist():
            s = int(h.sizes[e])
            if cur and width + s > span:
                chunks.append(cur)
                cur, width = [], 0
            cur.append(e)
            width += s
        if cur:
            chunks.append(cur)
    n_classes = int(len(split) + 1)
    widest = max(int(h.sizes[c].sum()) for c in chunks)
    checks.add("matching span", widest, span, widest <= span)
    checks.add("greedy classes", n_classes, 3 * math.ceil(gamma * n) + 1, n_classes <= 3 * math.ceil(gamma * n) + 1)
    checks.add("small matchings", len(chunks), math.ceil(gamma ** (1 / 3) * n), len(chunks) <= math.ceil(gamma ** (1 / 3) * n))
    return LeftoverDecomposition(chunks, n_classes, checks.items)


# -- main colouring -----------------------------------------------------------------------


@dataclass
class MainColouring:
    colouring: PartialEdgeColouring
    leftover: np.ndarray
    certificate: CoverageCertificate
    classes: list
    report: dict


def _slice_partition(h, ids, K, p, checks):
    """Independent uniform assignment of ``ids`` to K slices, resampled against (1 +- 7 xi) degrees."""
    n = h.n
    rng = _rng(p.seed, 4)
    block = h.array[ids]
    rows = np.repeat(np.arange(len(ids)), (block >= 0).sum(axis=1))
    verts = block[block >= 0]
    expected = np.bincount(verts, minlength=n) / K
    best = None
    for attempt in range(1, p.slice_budget + 1):
        sl = rng.integers(K, size=len(ids))
        deg = np.bincount(sl[rows] * n + verts, minlength=K * n).reshape(K, n)
        live = expected > 0
        dev = float((np.abs(deg[:, live] - expected[live]) / expected[live]).max(initial=0))
        if best is None or dev < best[0]:
            best = (dev, sl, attempt)
        if dev <= 7 * p.xi:
            break
    dev, sl, attempt = best
    checks.add("slice degree deviation", dev, 7 * p.xi, dev <= 7 * p.xi, attempts=attempt)
    return sl


def _family_matrix(pool: ReservoirPool, U: np.ndarray, S: np.ndarray, n: int):
    if not len(U):
        return None
    inU = np.zeros(n, dtype=bool)
    inU[U] = True
    rows = pool.adj[U]
    mat = np.concatenate([rows & inU, rows & ~inU, inU[None, :], (S & inU)[None, :]])
    return TrackedFamilies(vertex_matrix=mat)


def main_colouring(h: Hypergraph, split: ReservoirSplit, p: EflParams = EflParams()) -> MainColouring:
    """Colour everything outside the reservoir with ceil(n/2) + ceil(gamma^(1/3) n) colours."""
    n = h.n
    t0 = time.perf_counter()
    checks = _Checks()
    U = np.asarray(split.U, dtype=np.int64)
    inU = np.zeros(n, dtype=bool)
    inU[U] = True
    inR = np.zeros(h.m, dtype=bool)
    inR[split.R] = True
    non_r = np.flatnonzero(~inR)
    K = math.ceil(1 / p.kappa)
    half = math.ceil(n / 2)
    extra = math.ceil(p.gamma ** (1 / 3) * n)
    sizes_i = [half // K + (1 if i < half % K else 0) for i in range(K)]
    sl = _slice_partition(h, non_r, K, p, checks) if len(non_r) else np.zeros(0, dtype=np.int64)
    pool = ReservoirPool(h, split.R)
    S = inU.copy()
    colours = np.full(h.m, -1, dtype=np.int64)
    classes = []
    defects_all = []
    failures = []
    branches = {}
    carried = np.zeros(0, dtype=np.int64)
    pending = []
    rng_abs = _rng(p.seed, 5)
    seeds = _rng(p.seed, 6).integers(0, 2**63 - 1, size=K)
    colour = 0
    step1_worst = 0.0
    used_colours_so_far = 0
    for i in range(K):
        ids = non_r[sl == i]
        if p.carry_residual:
            ids = np.concatenate([carried, ids])
        if sizes_i[i] == 0 or not len(ids):
            if p.carry_residual:
                carried = ids
            else:
                pending.append(ids)
            colour += sizes_i[i]
            for _ in range(sizes_i[i]):
                classes.append([])
            continue
        sub = h.subhypergraph(ids)
        fam = _family_matrix(pool, U, S, n)
        rep = pseudorandom_matchings(sub, sizes_i[i], fam, p.nibble.with_seed(int(seeds[i])), p.gamma)
        taken = np.zeros(len(ids), dtype=bool)
        for mt in rep.matchings:
            local = np.fromiter(mt.edge_ids, dtype=np.int64, count=len(mt))
            taken[local] = True
            glob = ids[local]
            res = absorb(h, glob.tolist(), pool, S, U, p, rng_abs, slice_index=i, colour=colour)
            members = glob.tolist() + res.added
            colours[members] = colour
            classes.append(members)
            for d in res.defects:
                S[d] = False
            defects_all.extend(res.defects)
            failures.extend({"slice": i, "colour": colour, "stage": f} for f in res.failures)
            branches[res.branch] = branches.get(res.branch, 0) + 1
            colour += 1
        residual = ids[~taken]
        if p.carry_residual:
            carried = residual
        else:
            pending.append(residual)
        used_colours_so_far += sizes_i[i]
        bound = (p.gamma + 3 * p.kappa) * used_colours_so_far
        r_used = int(_reservoir_use(h, pool).max(initial=0))
        step1_worst = max(step1_worst, r_used / bound)
    t1 = time.perf_counter()
    rest = np.concatenate([carried] + pending) if (len(carried) or pending) else np.zeros(0, dtype=np.int64)
    rest = np.sort(rest.astype(np.int64))
    if len(rest):
        blk = h.array[rest]
        res_deg = int(np.bincount(blk[blk >= 0], minlength=n).max())
    else:
        res_deg = 0
    r_use = int(_reservoir_use(h, pool).max(initial=0))
    checks.add("step 1 leftover max degree", res_deg, p.gamma * n, res_deg <= p.gamma * n)
    checks.add("reservoir use per colour so far", step1_worst, 1.0, step1_worst <= 1.0)
    checks.add("step 1 reservoir use", r_use, p.gamma * n, r_use <= p.gamma * n)
    dec = leftover_decompose(h, rest, p.gamma, n, strict=p.strict)
    checks.items.extend(dec.checks)
    S2 = S.copy()
    for j, chunk in enumerate(dec.chunks):
        res = absorb(h, chunk, pool, S2, U, p, rng_abs, slice_index="leftover", colour=half + j)
        members = list(chunk) + res.added
        colours[members] = half + j
        classes.append(members)
        for d in res.defects:
            S2[d] = False
        defects_all.extend(res.defects)
        failures.extend({"slice": "leftover", "colour": half + j, "stage": f} for f in res.failures)
        branches[res.branch] = branches.get(res.branch, 0) + 1
    t2 = time.perf_counter()
    palette = half + max(extra, len(dec.chunks))
    checks.add("main palette", half + len(dec.chunks), half + extra, len(dec.chunks) <= extra)
    leftover = pool.remaining()
    cert = coverage_certificate(h, classes, U)
    want = "perfect" if len(U) < 3 * n / 4 else "nearly_perfect"
    checks.add("coverage of U", cert.flag, want, cert.flag == "perfect" or (cert.flag == want))
    lo_deg = int(np.bincount(h.array[leftover][:, :2].ravel(), minlength=n).max()) if len(leftover) else 0
    lo_bound = n - half - extra
    checks.add("leftover graph max degree", lo_deg, lo_bound, lo_deg <= lo_bound)
    col = PartialEdgeColouring(colours, palette)
    if not (colours[non_r] >= 0).all():
        raise PostconditionFailed("an edge outside the reservoir stayed uncoloured")
    report = {
        "K": K,
        "half": half,
        "extra_colours": extra,
        "palette": palette,
        "U_size": int(len(U)),
        "step1_residual_edges": int(len(rest)),
        "step1_residual_max_degree": res_deg,
        "leftover_matchings": len(dec.chunks),
        "leftover_classes": dec.classes,
        "absorption_branches": branches,
        "absorption_failures": failures,
        "defects": sorted(set(defects_all)),
        "coverage": cert.as_dict(),
        "carry_residual": p.carry_residual,
        "timings": {"step1": t1 - t0, "step2": t2 - t1},
        "checks": checks.items,
    }
    return MainColouring(col, leftover, cert, classes, report)


def _reservoir_use(h, pool: ReservoirPool) -> np.ndarray:
    used = np.asarray(pool.used, dtype=np.int64)
    if not len(used):
        return np.zeros(h.n, dtype=np.int64)
    return np.bincount(h.array[used][:, :2].ravel(), minlength=h.n)


# -- the n + 1 pipeline --------------------------------------------------------------------


@dataclass
class EflRun:
    colouring: PartialEdgeColouring
    total: int
    report: dict

    @property
    def n_plus_1_ok(self) -> bool:
        return bool(self.report["n_plus_1_ok"])

    def to_json(self) -> str:
        return json.dumps(self.report, sort_keys=True, default=_plain)


def efl_small_colouring(h: Hypergraph, p: EflParams = EflParams()) -> EflRun:
    """Proper colouring of a {2,3}-uniform linear hypergraph aiming at n + 1 colours."""
    if h.m and (h.sizes.min() < 2 or h.sizes.max() > 3):
        raise ValueError("edges must have size 2 or 3")
    if max_codegree(h) > 1:
        raise ValueError("hypergraph must be linear")
    t0 = time.perf_counter()
    full, n_virtual = add_virtual_pairs(h)
    split = reservoir(full, p)
    t1 = time.perf_counter()
    main = main_colouring(full, split, p)
    t2 = time.perf_counter()
    left = full.subhypergraph(main.leftover)
    g = Graph.from_array(full.n, left.array[:, :2], check=False) if left.m else Graph(full.n, ())
    vz = vizing(g, offset=main.colouring.palette_size)
    colours = main.colouring.colours.copy()
    colours[main.leftover] = vz.colours
    t3 = time.perf_counter()
    real = PartialEdgeColouring(colours[: h.m]).compacted()
    built = real.colours_used()
    t4 = time.perf_counter()
    if p.compress:
        real = compress_palette(h, real, passes=2)
    total = real.colours_used()
    t5 = time.perf_counter()
    verdict = verify(h, real, "proper_colouring")
    if not verdict:
        raise PostconditionFailed(f"output colouring is not proper: {verdict.witness}")
    report = {
        "n": h.n,
        "m": h.m,
        "virtual_edges": n_virtual,
        "total_colours": total,
        "construction_colours": built,
        "construction_ok": built <= h.n + 1,
        "compressed": p.compress,
        "bound": h.n + 1,
        "n_plus_1_ok": total <= h.n + 1,
        "main_colours_used": int(len(np.unique(main.colouring.colours[main.colouring.colours >= 0]))),
        "leftover_edges": int(len(main.leftover)),
        "leftover_max_degree": g.max_degree(),
        "vizing_colours": vz.colours_used(),
        "reservoir": split.diagnostics,
        "reservoir_attempts": split.attempts,
        "main": main.report,
        "timings": {"reservoir": t1 - t0, "main": t2 - t1, "vizing": t3 - t2, "compress": t5 - t4, "total": t5 - t0},
        "seed": p.seed,
    }
    run = EflRun(real, total, report)
    if p.strict and total > h.n + 1:
        raise PaletteExceeded(total, h.n + 1, real, report)
    return run


# -- large edges: reordering and partition ------------------------------------------------


@dataclass
class ReorderOutcome:
    ordering: EdgeOrdering
    variant: str
    W: list | None = None
    e_star: int | None = None
    checks: list = field(default_factory=list)
    moves: int = 0

    @property
    def all_good(self) -> bool:
        return self.variant == "all_good"


def reorder_precondition(tau: float, K: float) -> float:
    return 1 - tau - 7 * tau**0.25 / K


def _forward_degrees(adj: np.ndarray, pos: np.ndarray) -> np.ndarray:
    earlier = pos[None, :] < pos[:, None]
    return (adj & earlier).sum(axis=1)


def reorder(h: Hypergraph, tau: float, K: float = 1.0, r: int | None = None, *, relax: bool = False, _adj=None) -> ReorderOutcome:
    """Ordering with all forward degrees <= (1 - tau) n, or a large-volume set W of similar-size edges.

    Starts from a size-decreasing ordering; while the last edge e* breaking the
    bound has an earlier neighbour f with few neighbours before e*, f is moved
    right after e*.
    """
    if not 0 < tau < 1 or K < 1:
        raise ValueError("need 0 < tau < 1 and K >= 1")
    margin = reorder_precondition(tau, K)
    if margin <= 0 and not relax:
        raise ValueError(f"1 - tau - 7 tau^(1/4)/K = {margin:.4g} must be positive")
    if max_codegree(h) > 1:
        raise ValueError("reorder needs a linear hypergraph")
    if r is not None and h.m and h.sizes.min() < r:
        raise ValueError(f"edges must have size at least {r}")
    n = h.n
    limit = (1 - tau) * n
    adj = line_adjacency_matrix(h) if _adj is None else _adj
    order = EdgeOrdering.by_size_decreasing(h).order.tolist()
    sizes = h.sizes
    moves = 0
    while True:
        pos = np.empty(h.m, dtype=np.int64)
        pos[order] = np.arange(h.m)
        fwd = _forward_degrees(adj, pos)
        bad = np.flatnonzero(fwd > limit)
        if not len(bad):
            out = ReorderOutcome(EdgeOrdering(order), "all_good", moves=moves)
            _check_reorder(h, out, tau, K, adj)
            return out
        star_pos = int(pos[bad].max())
        e_star = order[star_pos]
        before = np.zeros(h.m, dtype=bool)
        before[order[:star_pos]] = True
        nbrs = np.flatnonzero(adj[e_star] & before)
        counts = (adj[nbrs] & before).sum(axis=1)
        movable = nbrs[counts <= limit - 1]
        if len(movable):
            f = int(movable[np.argmin(pos[movable])])
            order.remove(f)
            order.insert(order.index(e_star) + 1, f)
            moves += 1
            continue
        cap = (1 + 3 * tau**0.25 * K) * sizes[e_star]
        W = [int(f) for f in order[: star_pos + 1] if sizes[f] <= cap]
        out = ReorderOutcome(EdgeOrdering(order), "structured", W, int(e_star), moves=moves)
        _check_reorder(h, out, tau, K, adj)
        return out


def _check_reorder(h, out: ReorderOutcome, tau, K, adj):
    n = h.n
    checks = _Checks()
    pos = out.ordering.position
    fwd = _forward_degrees(adj, pos)
    limit = (1 - tau) * n
    if out.all_good:
        worst = int(fwd.max(initial=0))
        checks.add("(a) forward degree", worst, limit, worst <= limit)
    else:
        sizes = h.sizes
        ws = sizes[out.W]
        c1 = (1 + 3 * tau**0.25 * K**4) * int(ws.min())
        checks.add("W1", int(ws.max()), c1, ws.max() <= c1)
        vol = normalized_volume(h, out.W)
        margin = max(0.0, reorder_precondition(tau, K))
        need = margin**2 / (1 + 3 * tau**0.25 * K**4)
        checks.add("W2", vol, need, vol >= need)
        sp = int(pos[out.e_star])
        after = out.ordering.order[sp + 1 :]
        worst = int(fwd[after].max(initial=0))
        checks.add("O1", worst, limit, worst <= limit)
        pre = sizes[out.ordering.order[: sp + 1]]
        checks.add("O2", bool(np.all(pre[:-1] >= pre[1:])), True, bool(np.all(pre[:-1] >= pre[1:])))
    out.checks = checks.items
    bad = checks.failed()
    if bad:
        raise PostconditionFailed(f"reorder postconditions failed: {bad}")


@dataclass
class PartitionOutcome:
    colourable_cheaply: bool
    ordering: EdgeOrdering
    H1: list = field(default_factory=list)
    W: list = field(default_factory=list)
    H2: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    greedy_colours: int | None = None


def partition_large(h: Hypergraph, sigma: float, r: int | None = None) -> PartitionOutcome:
    """Either certify a cheap colouring order or split H into H1, W, H2 as described below.

    W holds edges of similar size with volume near 1, every edge of H2 is at
    least as large as those of W and has tiny forward degree, and H1 comes last
    with forward degrees up to (1 - 2 sigma) n.
    """
    if not 0 < sigma < 0.5:
        raise ValueError("sigma must lie in (0, 1/2)")
    if r is not None and h.m and h.sizes.min() <= r:
        raise ValueError(f"edges must have size greater than {r}")
    n = h.n
    adj = line_adjacency_matrix(h)
    first = reorder(h, 2 * sigma, 1, relax=True, _adj=adj)
    checks = _Checks()
    if first.all_good:
        fwd = forward_degree_profile(h, first.ordering)
        worst = int(fwd.max(initial=0))
        checks.add("cheap forward degree", worst, (1 - 2 * sigma) * n, worst <= (1 - 2 * sigma) * n)
        greedy = greedy_by_ordering(h, first.ordering).colours_used()
        checks.add("greedy colours (report)", greedy, (1 - sigma) * n, True, report_only=True)
        out = PartitionOutcome(True, first.ordering, list(range(h.m)), [], [], checks.items, greedy)
        if checks.failed():
            raise PostconditionFailed(f"partition postconditions failed: {checks.failed()}")
        return out
    order1 = first.ordering.order.tolist()
    pos1 = first.ordering.position
    W = sorted(first.W, key=lambda e: pos1[e])
    f_star, e_star = W[0], W[-1]
    H2 = order1[: pos1[f_star]]
    span = order1[pos1[f_star] : pos1[e_star] + 1]
    H1 = order1[pos1[e_star] + 1 :]
    if sorted(span) != sorted(W):
        raise PostconditionFailed("W is not contiguous in the first ordering")
    if H2:
        sub = h.subhypergraph(H2)
        second = reorder(sub, 1 - 1 / 2000, 2000**2, _adj=adj[np.ix_(H2, H2)])
        if not second.all_good:
            raise PostconditionFailed("second reordering did not give small forward degrees")
        H2_order = [H2[j] for j in second.ordering.order.tolist()]
    else:
        H2_order = []
    order = H2_order + span + H1
    ordering = EdgeOrdering(order)
    fwd = forward_degree_profile(h, ordering)
    fwd_e = np.empty(h.m, dtype=np.int64)
    fwd_e[ordering.order] = fwd
    sizes = h.sizes
    ws = sizes[W]
    c1 = (1 + 4 * sigma**0.25) * int(ws.min())
    checks.add("P1", int(ws.max()), c1, ws.max() <= c1)
    vol = normalized_volume(h, W)
    checks.add("P2", vol, 1 - 4 * sigma**0.2, vol >= 1 - 4 * sigma**0.2)
    p3 = int(sizes[H2].min()) if H2 else None
    checks.add("P3", p3, int(ws.max()), p3 is None or p3 >= ws.max())
    lim1 = (1 - 2 * sigma) * n
    w1 = int(fwd_e[H1].max(initial=0)) if H1 else 0
    pos = ordering.position
    first_h1 = min((int(pos[e]) for e in H1), default=h.m)
    last_rest = max((int(pos[e]) for e in H2_order + span), default=-1)
    checks.add("FD1", w1, lim1, w1 <= lim1 and last_rest < first_h1)
    w2 = int(fwd_e[H2].max(initial=0)) if H2 else 0
    checks.add("FD2", w2, n / 2000, w2 <= n / 2000)
    out = PartitionOutcome(False, ordering, H1, W, H2_order, checks.items)
    if checks.failed():
        raise PostconditionFailed(f"partition postconditions failed: {checks.failed()}")
    return out


__all__ = [
    "EflParams",
    "ReservoirSplit",
    "CoverageCertificate",
    "ReorderOutcome",
    "PartitionOutcome",
    "reservoir",
    "absorb",
    "dense_perfect_matching",
    "leftover_decompose",
    "main_colouring",
    "efl_small_colouring",
    "reorder",
    "partition_large",
    "coverage_certificate",
    "add_virtual_pairs",
]
