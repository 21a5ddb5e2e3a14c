"""Semi-random matching engines.

The nibble engine runs on an implicit t-wise incidence hypergraph: an
incidence edge is a pair ``(e, i)`` (flat id ``i * m + e``) made of the
edge-vertex ``e`` and the copies of the vertices of ``e`` in layer ``i``.
With a single layer this is exactly the nibble on the host hypergraph, since
the extra edge-vertices have degree one.  Flat ids coincide with the edge ids
of :func:`hypercore.incidence_hypergraph`, so the implicit and materialised
constructions consume randomness identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from .errors import NotTriangleFree, Overflow
from .generators import auxiliary_subsets, steiner_auxiliary
from .hypercore import Graph, Hypergraph, Matching

# Largest number of implicit incidence edges (edge, layer) the engine accepts.
PAIR_LIMIT = 200_000_000


@dataclass(frozen=True)
class NibbleParams:
    eps_prime: float = 0.1
    rounds: int | None = None
    degree_mode: str = "measured"
    seed: int = 0
    complete: bool = True

    def __post_init__(self):
        if not self.eps_prime > 0:
            raise ValueError("eps_prime must be positive")
        if self.rounds is not None and self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.degree_mode not in ("measured", "formula"):
            raise ValueError("degree_mode must be 'measured' or 'formula'")

    @property
    def n_rounds(self) -> int:
        """Explicit round count, or the least t with exp(-eps' t) < 0.05."""
        if self.rounds is not None:
            return self.rounds
        return math.floor(math.log(20) / self.eps_prime) + 1

    def with_seed(self, seed: int) -> "NibbleParams":
        return NibbleParams(self.eps_prime, self.rounds, self.degree_mode, seed, self.complete)


@dataclass
class TrackedFamilies:
    """Vertex sets and edge-id sets whose coverage by the matchings is measured.

    ``vertex_matrix`` may replace ``vertex_sets`` by a dense boolean indicator
    with one row per set.
    """

    vertex_sets: Sequence = ()
    edge_sets: Sequence = ()
    vertex_matrix: np.ndarray | None = None
    names: Sequence[str] | None = None

    def vertex_indicator(self, n: int) -> np.ndarray:
        if self.vertex_matrix is not None:
            return np.asarray(self.vertex_matrix, dtype=bool)
        out = np.zeros((len(self.vertex_sets), n), dtype=bool)
        for r, s in enumerate(self.vertex_sets):
            idx = np.fromiter(s, dtype=np.int64) if not isinstance(s, np.ndarray) else s
            if len(idx) and (idx.min() < 0 or idx.max() >= n):
                raise ValueError("tracked vertex set out of range")
            out[r, idx] = True
        return out


@dataclass
class MatchingReport:
    matchings: list
    uncovered: list
    rounds: int
    seed: int
    trajectory: list = field(default_factory=list)
    defects: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def matching(self) -> Matching:
        return self.matchings[0]

    @property
    def sizes(self) -> list:
        return [len(mt) for mt in self.matchings]

    def as_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "uncovered": self.uncovered,
            "rounds": self.rounds,
            "seed": self.seed,
            "trajectory": self.trajectory,
            "defects": self.defects,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, default=_json_default)

    def dump_matchings(self) -> str:
        return "".join(" ".join(map(str, mt.sorted_ids())) + "\n" for mt in self.matchings)


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def load_matchings(text: str, host_n: int) -> list[Matching]:
    return [Matching.of([int(t) for t in line.split()], host_n) for line in text.splitlines() if not line.startswith("#")]


# -- engine ----------------------------------------------------------------------


def _padded_with_dummies(h: Hypergraph) -> tuple[np.ndarray, int]:
    """Replace the ``-1`` padding by fresh degree-one vertices ``n, n+1, ...``."""
    arr = np.array(h.array, dtype=np.int64)
    holes = arr < 0
    count = int(holes.sum())
    arr[holes] = h.n + np.arange(count)
    return arr, h.n + count


def _bernoulli_positions(rng, size: int, p: float) -> np.ndarray:
    """Indices of successes among ``size`` independent Bernoulli(p) trials."""
    if p >= 1:
        return np.arange(size)
    if size == 0 or p <= 0:
        return np.zeros(0, dtype=np.int64)
    chunk = int(size * p + 6 * math.sqrt(size * p) + 16)
    out = []
    last = -1
    while True:
        pos = last + np.cumsum(rng.geometric(p, size=chunk))
        if pos[-1] >= size:
            out.append(pos[pos < size])
            break
        out.append(pos)
        last = int(pos[-1])
    return np.concatenate(out)


def _gather(ptr: np.ndarray, order: np.ndarray, verts: np.ndarray):
    """Concatenated CSR rows for ``verts`` plus the index of the source vertex."""
    starts = ptr[verts]
    counts = ptr[verts + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    rep = np.repeat(np.arange(len(verts)), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return order[starts[rep] + offs], rep


def _decrement(counts: np.ndarray, idx: np.ndarray) -> None:
    # a full bincount costs len(counts); ufunc.at costs per index
    if 16 * len(idx) < len(counts):
        np.subtract.at(counts, idx, 1)
    else:
        counts -= np.bincount(idx, minlength=len(counts))


class _Engine:
    """Nibble state on the implicit incidence hypergraph of ``E`` with ``D`` layers."""

    CHUNK = 4_000_000

    def __init__(self, E: np.ndarray, nv: int, n_real: int, D: int):
        self.E = E
        self.m, self.k = E.shape
        self.cols = [np.ascontiguousarray(E[:, j]) for j in range(self.k)]
        self.nv = nv
        self.n_real = n_real
        self.D = D
        m = self.m
        self.alive = np.ones(m * D, dtype=bool)
        self.deg_edge = np.full(m, D, dtype=np.int64)
        base = np.bincount(E.ravel(), minlength=nv).astype(np.int64) if m else np.zeros(nv, dtype=np.int64)
        self.deg_layer = np.tile(base, D)
        self.removed_e = np.zeros(m, dtype=bool)
        self.removed_l = np.zeros(D * nv, dtype=bool)
        self.matched_e = np.zeros(m, dtype=bool)
        self.matched_l = np.zeros(D * nv, dtype=bool)
        self.real_covered = 0
        self.csr = []
        for col in self.cols:
            order = np.argsort(col, kind="stable")
            ptr = np.zeros(nv + 1, dtype=np.int64)
            np.cumsum(np.bincount(col, minlength=nv), out=ptr[1:])
            self.csr.append((ptr, order))
        self.matched: list[np.ndarray] = []

    def max_degree(self) -> int:
        a = int(self.deg_layer.max()) if len(self.deg_layer) else 0
        b = int(self.deg_edge.max()) if len(self.deg_edge) else 0
        return max(a, b)

    def split(self, pairs: np.ndarray):
        return pairs % self.m, pairs // self.m

    def codes(self, e: np.ndarray, i: np.ndarray) -> list:
        """Layer-vertex ids of the incidence edges ``(e, i)``, one array per position."""
        off = i * self.nv
        return [off + col[e] for col in self.cols]

    def _kill(self, e: np.ndarray, i: np.ndarray) -> None:
        """Delete the incidence edges ``(e[j], i[j])`` that are still alive."""
        flat = i * self.m + e
        live = self.alive[flat]
        if not live.any():
            return
        e, i, flat = e[live], i[live], flat[live]
        self.alive[flat] = False
        _decrement(self.deg_edge, e)
        for c in self.codes(e, i):
            _decrement(self.deg_layer, c)

    def remove_vertices(self, edge_vertices: np.ndarray, layer_codes: np.ndarray) -> None:
        ev = np.unique(edge_vertices)
        ev = ev[~self.removed_e[ev]]
        self.removed_e[ev] = True
        D = self.D
        step = max(1, self.CHUNK // D)
        for s in range(0, len(ev), step):
            part = ev[s : s + step]
            self._kill(np.tile(part, D), np.repeat(np.arange(D), len(part)))
        lc = np.unique(layer_codes)
        lc = lc[~self.removed_l[lc]]
        self.removed_l[lc] = True
        layers = lc // self.nv
        verts = lc % self.nv
        for ptr, order in self.csr:
            cum = np.cumsum(ptr[verts + 1] - ptr[verts])
            start = 0
            while start < len(verts):
                base = int(cum[start - 1]) if start else 0
                end = max(int(np.searchsorted(cum, base + self.CHUNK, side="right")), start + 1)
                eids, rep = _gather(ptr, order, verts[start:end])
                if len(eids):
                    self._kill(eids, layers[start:end][rep])
                start = end

    def accept(self, pairs: np.ndarray) -> None:
        if not len(pairs):
            return
        self.matched.append(pairs)
        e, i = self.split(pairs)
        self.matched_e[e] = True
        for c, col in zip(self.codes(e, i), self.cols):
            self.matched_l[c] = True
            self.real_covered += int((col[e] < self.n_real).sum())

    def uncovered_real(self) -> int:
        return self.D * self.n_real - self.real_covered

    def nibble_round(self, rng, prob: float) -> int:
        idx = np.flatnonzero(self.alive)
        if not len(idx):
            return 0
        X = idx[_bernoulli_positions(rng, len(idx), prob)]
        if not len(X):
            return len(idx)
        e, i = self.split(X)
        codes = self.codes(e, i)
        ce = np.bincount(e, minlength=self.m)
        cl = np.bincount(np.concatenate(codes), minlength=self.D * self.nv)
        keep = ce[e] == 1
        for c in codes:
            keep &= cl[c] == 1
        self.accept(X[keep])
        self.remove_vertices(e, np.concatenate(codes))
        return len(idx)

    def completion_candidates(self) -> np.ndarray:
        ok = np.repeat(~self.matched_e[None, :], self.D, axis=0)
        cov = self.matched_l.reshape(self.D, self.nv)
        for col in self.cols:
            ok &= ~cov[:, col]
        return np.flatnonzero(ok.ravel())

    def greedy_complete(self, rng, cand: np.ndarray | None = None) -> int:
        """Random greedy matching on the pairs disjoint from the current matching.

        Candidates are ranked by a uniform random permutation and repeatedly the
        local minima are accepted; this reproduces the sequential greedy scan in
        that order exactly.
        """
        if cand is None:
            cand = self.completion_candidates()
        prio = rng.permutation(len(cand))
        added = 0
        big = np.iinfo(np.int64).max
        size = self.D * self.nv
        while len(cand):
            e, i = self.split(cand)
            codes = self.codes(e, i)
            min_e = np.full(self.m, big, dtype=np.int64)
            np.minimum.at(min_e, e, prio)
            min_l = np.full(size, big, dtype=np.int64)
            for c in codes:
                np.minimum.at(min_l, c, prio)
            win = min_e[e] == prio
            for c in codes:
                win &= min_l[c] == prio
            self.accept(cand[win])
            added += int(win.sum())
            rest = ~win & ~self.matched_e[e]
            for c in codes:
                rest &= ~self.matched_l[c]
            cand, prio = cand[rest], prio[rest]
        return added

    def matched_pairs(self) -> np.ndarray:
        if not self.matched:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(self.matched))


def _run_nibble(E, nv, n_real, D, p: NibbleParams, k_formula: int, *, complete: bool):
    if E.shape[0] * D > PAIR_LIMIT or D * nv > PAIR_LIMIT:
        raise Overflow(f"incidence structure with {E.shape[0] * D} edges exceeds the size limit")
    ss = np.random.SeedSequence(p.seed)
    rng_rounds, rng_complete = (np.random.default_rng(s) for s in ss.spawn(2))
    eng = _Engine(E, nv, n_real, D)
    trajectory = []
    d_cur = float(eng.max_degree())
    executed = 0
    for _ in range(p.n_rounds):
        if d_cur <= 0 or not eng.alive.any():
            break
        eng.nibble_round(rng_rounds, min(1.0, p.eps_prime / d_cur))
        executed += 1
        trajectory.append(eng.uncovered_real())
        if p.degree_mode == "measured":
            d_cur = float(eng.max_degree())
        else:
            d_cur = math.exp(-p.eps_prime * (k_formula - 1)) * d_cur
    nibble_size = sum(len(x) for x in eng.matched)
    if complete:
        eng.greedy_complete(rng_complete)
    return eng, trajectory, executed, nibble_size


def _matchings_report(h, eng, D, trajectory, executed, seed, nibble_size, pairs=None):
    pairs = eng.matched_pairs() if pairs is None else pairs
    e = pairs % h.m if h.m else pairs
    i = pairs // h.m if h.m else pairs
    order = np.lexsort((e, i))
    split = np.searchsorted(i[order], np.arange(D + 1))
    matchings = []
    uncovered = []
    for layer in range(D):
        ids = e[order[split[layer] : split[layer + 1]]]
        matchings.append(Matching.of(ids.tolist(), h.n))
        cov = h.sizes[ids].sum() if len(ids) else 0
        uncovered.append(int(h.n - cov))
    return MatchingReport(
        matchings=matchings,
        uncovered=uncovered,
        rounds=executed,
        seed=seed,
        trajectory=trajectory,
        extra={"nibble_phase_size": int(nibble_size)},
    )


def rodl_nibble(h: Hypergraph, p: NibbleParams = NibbleParams()) -> MatchingReport:
    """Nibble matching; optionally finished by a random greedy pass (``p.complete``)."""
    E, nv = _padded_with_dummies(h)
    k = int(h.sizes.max()) if h.m else 0
    eng, traj, executed, nib = _run_nibble(E, nv, h.n, 1, p, k, complete=p.complete)
    rep = _matchings_report(h, eng, 1, traj, executed, p.seed, nib)
    rep.trajectory.append(rep.uncovered[0])
    return rep


def random_greedy_matching(h: Hypergraph, seed: int = 0) -> MatchingReport:
    """Maximal matching from a uniformly random scan order of the edges."""
    E, nv = _padded_with_dummies(h)
    eng = _Engine(E, nv, h.n, 1)
    eng.greedy_complete(np.random.default_rng(seed), np.arange(h.m))
    rep = _matchings_report(h, eng, 1, [], 0, seed, 0)
    rep.trajectory = [rep.uncovered[0]]
    return rep


def pseudorandom_matchings(
    h: Hypergraph,
    D: int,
    families: TrackedFamilies | None = None,
    p: NibbleParams = NibbleParams(),
    gamma: float = 0.0,
) -> MatchingReport:
    """D pairwise edge-disjoint matchings from a nibble on the D-wise incidence hypergraph.

    2-edges are padded with fresh dummy vertices, every matched incidence edge
    is dropped independently with probability ``gamma`` and the layers give the
    matchings.  Defects against the tracked families are measured.
    """
    if h.m and (h.sizes.max() > 3 or h.sizes.min() < 2):
        raise ValueError("edges must have size 2 or 3")
    return layered_matchings(h, D, families, p, gamma, width=3)


def layered_matchings(
    h: Hypergraph,
    D: int,
    families: TrackedFamilies | None = None,
    p: NibbleParams = NibbleParams(),
    gamma: float = 0.0,
    width: int | None = None,
) -> MatchingReport:
    """Like :func:`pseudorandom_matchings` for any edge sizes; pads to ``width`` columns."""
    if D < 1:
        raise ValueError("D must be at least 1")
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    if h.m:
        E = np.array(h.array, dtype=np.int64)
        k = max(E.shape[1], width or 0)
        if E.shape[1] < k:
            E = np.concatenate([E, np.full((h.m, k - E.shape[1]), -1)], axis=1)
        holes = E < 0
        E[holes] = h.n + np.arange(int(holes.sum()))
        nv = h.n + int(holes.sum())
    else:
        E, nv = np.zeros((0, width or 2), dtype=np.int64), h.n
    k_formula = (int(h.sizes.max()) if h.m else 0) + (1 if D > 1 else 0)
    eng, traj, executed, nib = _run_nibble(E, nv, h.n, D, p, k_formula, complete=p.complete)
    pairs = eng.matched_pairs()
    if gamma > 0 and len(pairs):
        rng = np.random.default_rng(np.random.SeedSequence(p.seed).spawn(3)[2])
        pairs = pairs[rng.random(len(pairs)) >= gamma]
    rep = _matchings_report(h, eng, D, traj, executed, p.seed, nib, pairs)
    rep.defects = measure_defects(h, rep.matchings, families, gamma, D)
    return rep


def measure_defects(h: Hypergraph, matchings, families: TrackedFamilies | None, gamma: float, D: int) -> dict:
    """Measured pseudorandomness of the matchings against the tracked families."""
    n = h.n
    miss = np.ones((len(matchings), n), dtype=bool)
    used = np.zeros(h.m, dtype=bool)
    for r, mt in enumerate(matchings):
        ids = np.fromiter(mt.edge_ids, dtype=np.int64, count=len(mt))
        if len(ids):
            block = h.array[ids]
            miss[r, block[block >= 0]] = False
            used[ids] = True
    out = {
        "max_matchings_missing_vertex": int(miss.sum(axis=0).max()) if n and len(matchings) else 0,
        "mean_matchings_missing_vertex": float(miss.sum(axis=0).mean()) if n and len(matchings) else 0.0,
    }
    if families is None:
        return out
    ind = families.vertex_indicator(n)
    if len(ind):
        sizes = ind.sum(axis=1)
        missing = ind.astype(np.float32) @ miss.T.astype(np.float32)
        dev = np.abs(missing - gamma * sizes[:, None]) / max(n, 1)
        out["vertex_sets"] = len(ind)
        out["kappa_vertex"] = float(dev.max()) if dev.size else 0.0
    if len(families.edge_sets):
        worst = 0.0
        for fs in families.edge_sets:
            ids = np.fromiter(fs, dtype=np.int64) if not isinstance(fs, np.ndarray) else fs
            left = int((~used[ids]).sum())
            val = (left - gamma * len(ids)) / max(len(ids), D, 1)
            worst = max(worst, val)
        out["edge_sets"] = len(families.edge_sets)
        out["kappa_edge"] = float(worst)
    return out


# -- partial Steiner systems and independent sets ----------------------------------------


@dataclass
class SteinerResult:
    blocks: list
    fill_fraction: float
    report: MatchingReport

    def hypergraph(self, n: int) -> Hypergraph:
        return Hypergraph(n, self.blocks)


def partial_steiner(t: int, k: int, n: int, p: NibbleParams = NibbleParams()) -> SteinerResult:
    """Partial (t, k, n) Steiner system from a nibble matching of the auxiliary hypergraph."""
    aux = steiner_auxiliary(t, k, n)
    params = NibbleParams(p.eps_prime, p.rounds, p.degree_mode, p.seed, True)
    rep = rodl_nibble(aux, params)
    subsets = auxiliary_subsets(t, k, n)
    blocks = sorted(subsets[e] for e in rep.matching.edge_ids)
    fill = len(blocks) * comb(k, t) / comb(n, t)
    return SteinerResult(blocks, fill, rep)


@dataclass
class IndependentSetResult:
    vertices: list
    size: int
    average_degree: float
    bound: float


def find_triangle(g: Graph):
    adj = [set(a) for a in g.adjacency()]
    for u, v in g.edges:
        common = adj[u] & adj[v]
        if common:
            return tuple(sorted((u, v, min(common))))
    return None


def greedy_independent_set_trianglefree(g: Graph, seed: int = 0) -> IndependentSetResult:
    """Maximal independent set from uniform draws among the remaining vertices."""
    tri = find_triangle(g)
    if tri:
        raise NotTriangleFree(tri)
    rng = np.random.default_rng(seed)
    adj = g.adjacency()
    blocked = np.zeros(g.n, dtype=bool)
    chosen = []
    for v in rng.permutation(g.n).tolist():
        if blocked[v]:
            continue
        chosen.append(v)
        blocked[v] = True
        blocked[adj[v]] = True
    d = 2 * g.m / g.n if g.n else 0.0
    bound = g.n / d * math.log(d) if d > 1 else float(g.n if d == 0 else 0.0)
    return IndependentSetResult(sorted(chosen), len(chosen), d, bound)


def is_independent(g: Graph, verts) -> bool:
    s = set(verts)
    return not any(u in s and v in s for u, v in g.edges)


__all__ = [
    "NibbleParams",
    "TrackedFamilies",
    "MatchingReport",
    "rodl_nibble",
    "random_greedy_matching",
    "pseudorandom_matchings",
    "layered_matchings",
    "partial_steiner",
    "greedy_independent_set_trianglefree",
    "measure_defects",
    "load_matchings",
]
