"""Acceptance criteria.  Each test prints one PASS/FAIL line (collected again in
the terminal summary); report-only baselines are printed with a REPORT tag."""

import math
import time
from functools import lru_cache
from itertools import combinations, permutations, product

import numpy as np

from hypernibble.colouring import (
    TierParams,
    greedy_by_ordering,
    incidence_nibble_colouring,
    oracle_chromatic_index,
    oracle_matching_number,
    oracle_max_intersecting,
    oracle_vertex_chromatic_number,
    three_tier_colouring,
    vizing,
)
from hypernibble.errors import ListExhausted, ReservationFailed
from hypernibble.efl import EflParams, efl_small_colouring, partition_large, reorder
from hypernibble.generators import (
    LatinSquare,
    auxiliary_subsets,
    complete_graph_hg,
    degenerate_plane,
    fano_plane,
    latin_square_hypergraph,
    petersen_graph,
    projective_plane,
    random_linear,
    random_pair_cover,
    steiner_auxiliary,
    steiner_triple_system,
)
from hypernibble.hypercore import (
    EdgeOrdering,
    Graph,
    Hypergraph,
    encode_matchings,
    forward_degree_profile,
    incidence_hypergraph,
    is_intersecting,
    line_graph,
    normalized_volume,
    split_incidence_matching,
    verify,
)
from hypernibble.nibble import NibbleParams, partial_steiner, pseudorandom_matchings, random_greedy_matching, rodl_nibble

REPORT = []
SURFACED = []

# frozen regression baselines
NIBBLE_UNCOVERED_MAX = 0.15
INCIDENCE_COLOUR_FACTOR = 1.3
EFL_N_PLUS_1_RATE = 0.9
EFL_SECONDS_N2000 = 60.0
VALIDITY_SECONDS = 300.0


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    REPORT.append(line)
    print(line)


def report_only(name, detail):
    line = f"REPORT {name}: {detail}"
    REPORT.append(line)
    print(line)


# -- corpus -----------------------------------------------------------------------


@lru_cache(maxsize=None)
def corpus():
    items = [
        ("fano", fano_plane()),
        ("pg3", projective_plane(3)),
        ("pg5", projective_plane(5)),
        ("degenerate10", degenerate_plane(10)),
        ("degenerate100", degenerate_plane(100)),
    ]
    items += [(f"K{n}", complete_graph_hg(n)) for n in (5, 9, 15)]
    items += [(f"sts{n}", steiner_triple_system(n)) for n in (7, 9, 13, 15, 99, 999)]
    items += [(f"latin{n}", latin_square_hypergraph(LatinSquare.cyclic(n))) for n in (3, 5, 7)]
    for s in range(50):
        n = 7 + s
        items.append((f"random_linear{n}/{s}", random_linear(n, 3, n * (n - 1) // 6, s)))
    for s in range(50):
        rho = 0.2 + 0.15 * (s % 5)
        items.append((f"pair_cover{20 + 2 * s}/{s}", random_pair_cover(20 + 2 * s, rho, s)))
    return tuple(items)


@lru_cache(maxsize=None)
def sts999_incidence():
    h = steiner_triple_system(999)
    return incidence_nibble_colouring(h, 499, NibbleParams(seed=0))


def _is_23(h):
    return h.m > 0 and h.sizes.min() >= 2 and h.sizes.max() <= 3


def _check_colouring(h, col, complete=True):
    ok = bool(verify(h, col, "proper_colouring"))
    if complete:
        ok = ok and bool((col.colours >= 0).all())
    return ok


def _validate_instance(name, h):
    """Every matching and colouring produced on ``h``; returns a list of failures."""
    bad = []
    p = NibbleParams(seed=1)
    if not verify(h, rodl_nibble(h, p).matching):
        bad.append((name, "rodl_nibble"))
    if not verify(h, random_greedy_matching(h, 1).matching):
        bad.append((name, "random_greedy_matching"))
    if _is_23(h):
        D = h.max_degree() if h.m < 10_000 else 10
        rep = pseudorandom_matchings(h, D, None, p, 0.05)
        seen = set()
        for mt in rep.matchings:
            if not verify(h, mt) or seen & set(mt.edge_ids):
                bad.append((name, "pseudorandom_matchings"))
                break
            seen |= set(mt.edge_ids)
    rng = np.random.default_rng(h.m)
    for order in (EdgeOrdering.by_size_decreasing(h), EdgeOrdering(rng.permutation(h.m).tolist())):
        if not _check_colouring(h, greedy_by_ordering(h, order)):
            bad.append((name, "greedy_by_ordering"))
    inc = sts999_incidence().colouring if name == "sts999" else incidence_nibble_colouring(h, None, p).colouring
    if not _check_colouring(h, inc):
        bad.append((name, "incidence_nibble_colouring"))
    tp = TierParams(r1=3, r0=8) if h.sizes.max() > 8 else TierParams()
    try:
        tier = three_tier_colouring(h, None, tp, 1).colouring
    except (ListExhausted, ReservationFailed):
        # surfaced list failure: no colouring produced, counted separately
        SURFACED.append(name)
    else:
        if not _check_colouring(h, tier):
            bad.append((name, "three_tier_colouring"))
    if h.sizes.max() == 2 and not _check_colouring(h, vizing(h)):
        bad.append((name, "vizing"))
    if _is_23(h) and not _check_colouring(h, efl_small_colouring(h, EflParams(seed=1)).colouring):
        bad.append((name, "efl_small_colouring"))
    return bad


def test_validity_suite():
    t0 = time.perf_counter()
    bad = []
    items = corpus()
    for name, h in items:
        bad += _validate_instance(name, h)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < VALIDITY_SECONDS
    record(
        "validity suite",
        ok,
        f"{len(items)} instances, {len(bad)} invalid outputs, {elapsed:.1f}s (limit {VALIDITY_SECONDS:.0f}s); "
        f"three-tier surfaced list exhaustion on {len(SURFACED)}: {SURFACED[:6]}",
    )
    assert not bad, bad[:5]
    assert elapsed < VALIDITY_SECONDS


# -- oracle equivalence -------------------------------------------------------------------

VERTS = 6
PERMS = list(permutations(range(VERTS)))
EDGE_MASKS = [m for m in range(1 << VERTS) if bin(m).count("1") >= 2]


def _perm_images():
    img = np.zeros((len(PERMS), 1 << VERTS), dtype=np.int64)
    for i, p in enumerate(PERMS):
        for m in range(1 << VERTS):
            img[i, m] = sum(1 << p[v] for v in range(VERTS) if m >> v & 1)
    return img


def _iso_classes(max_edges):
    """Representatives of all edge sets (edges of size >= 2, no repeats) on 6 vertices, up to relabelling."""
    img = _perm_images()

    def canon(edges):
        block = np.sort(img[:, list(edges)], axis=1)
        code = np.zeros(len(PERMS), dtype=np.int64)
        for j in range(block.shape[1]):
            code = code * 64 + block[:, j]
        return int(code.min())

    levels = [[()]]
    for _ in range(max_edges):
        reps = {}
        for base in levels[-1]:
            for m in EDGE_MASKS:
                if m in base:
                    continue
                cand = tuple(sorted(base + (m,)))
                reps.setdefault(canon(cand), cand)
        levels.append(list(reps.values()))
    return [Hypergraph(VERTS, [tuple(v for v in range(VERTS) if m >> v & 1) for m in edges]) for lvl in levels for edges in lvl]


def _all_matchings(masks):
    out = []

    def rec(i, used, cur):
        if i == len(masks):
            out.append(tuple(cur))
            return
        rec(i + 1, used, cur)
        if not masks[i] & used:
            cur.append(i)
            rec(i + 1, used | masks[i], cur)
            cur.pop()

    rec(0, 0, [])
    return out


def _vmask(e):
    return sum(1 << v for v in e)


def _incidence_bijection_holds(h, t):
    inc = incidence_hypergraph(h, t)
    image = set()
    for mt in _all_matchings([_vmask(e) for e in inc.edges]):
        parts = split_incidence_matching(h, t, mt)
        key = tuple(tuple(p.sorted_ids()) for p in parts)
        if key in image or encode_matchings(h, parts) != sorted(mt):
            return False
        image.add(key)
    direct = set()
    for tup in product(_all_matchings([_vmask(e) for e in h.edges]), repeat=t):
        flat = [e for m in tup for e in m]
        if len(flat) == len(set(flat)):
            direct.add(tup)
    return image == direct


def test_oracle_equivalence():
    mismatch = []
    small = [(name, h) for name, h in corpus() if h.m <= 8]
    for name, h in small:
        if oracle_chromatic_index(h) != oracle_vertex_chromatic_number(line_graph(h)):
            mismatch.append(name)
    classes = _iso_classes(4)
    for i, h in enumerate(classes):
        if h.m and oracle_chromatic_index(h) != oracle_vertex_chromatic_number(line_graph(h)):
            mismatch.append(f"class{i}")
    pairs = 0
    for i, h in enumerate(classes):
        for t in (1, 2, 3):
            pairs += 1
            if not _incidence_bijection_holds(h, t):
                mismatch.append(f"class{i}/t={t}")
    record(
        "oracle equivalence",
        not mismatch,
        f"chromatic index vs line-graph chromatic number on {len(small)} corpus instances and {len(classes)} classes; "
        f"incidence bijection on {pairs} (class, t) pairs; {len(mismatch)} mismatches",
    )
    assert not mismatch, mismatch[:5]


# -- exact bounds ------------------------------------------------------------------------


def test_exact_bounds():
    problems = []
    runs = 0
    for name, h in corpus():
        rng = np.random.default_rng(7 + h.m)
        for order in (EdgeOrdering.by_size_decreasing(h), EdgeOrdering(rng.permutation(h.m).tolist())):
            col = greedy_by_ordering(h, order)
            runs += 1
            if col.colours_used() > int(forward_degree_profile(h, order).max(initial=0)) + 1:
                problems.append(("greedy", name))
    rng = np.random.default_rng(2024)
    for i in range(500):
        n = int(rng.integers(2, 65))
        p = float(rng.uniform(0.02, 0.95))
        iu = np.triu_indices(n, 1)
        keep = rng.random(len(iu[0])) < p
        g = Graph(n, list(zip(iu[0][keep].tolist(), iu[1][keep].tolist())))
        col = vizing(g)
        if not verify(g, col, "proper_colouring") or col.colours_used() > g.max_degree() + 1:
            problems.append(("vizing", i))
    pet = petersen_graph()
    pet_cols = vizing(pet).colours_used()
    if pet_cols != 4 or oracle_chromatic_index(pet) != 4:
        problems.append(("petersen", pet_cols))
    inter = [("fano", fano_plane()), ("degenerate10", degenerate_plane(10)), ("degenerate100", degenerate_plane(100))]
    for name, h in inter:
        assert is_intersecting(h)
        for label, col in (
            ("greedy", greedy_by_ordering(h)),
            ("three-tier", three_tier_colouring(h, None, TierParams(r1=3, r0=8) if h.sizes.max() > 8 else TierParams()).colouring),
            ("incidence", incidence_nibble_colouring(h).colouring),
        ):
            if col.colours_used() != h.m or h.m != h.n or not verify(h, col, "proper_colouring"):
                problems.append((label, name, col.colours_used()))
    record(
        "exact bounds",
        not problems,
        f"{runs} greedy runs within max forward degree + 1; 500 random graphs within max degree + 1 under Vizing; "
        f"Petersen {pet_cols} colours; intersecting instances use m = n colours; {len(problems)} violations",
    )
    assert not problems, problems[:5]


# -- de Bruijn-Erdos ----------------------------------------------------------------------


def test_de_bruijn_erdos():
    instances = [h for name, h in corpus() if name.startswith("random_linear") and h.n <= 10]
    for k in (2, 3, 4):
        for n in range(k + 1, 11):
            for s in range(10):
                instances.append(random_linear(n, k, 16, 100 * k + 10 * n + s))
    worst = 0.0
    bad = []
    for h in instances:
        if h.m == 0:
            continue
        best = oracle_max_intersecting(h)
        worst = max(worst, best / h.n)
        if best > h.n:
            bad.append((h.n, h.m, best))
    record("de Bruijn-Erdos", not bad, f"{len(instances)} linear instances with n <= 10; max intersecting / n peaks at {worst:.3f}")
    assert not bad


# -- EFL pipeline ---------------------------------------------------------------------------


def test_efl_pipeline():
    rows = []
    for n in (500, 1000, 2000):
        for s in range(5):
            h = random_pair_cover(n, 0.5, s)
            t0 = time.perf_counter()
            run = efl_small_colouring(h, EflParams(seed=s))
            dt = time.perf_counter() - t0
            proper = bool(verify(h, run.colouring, "proper_colouring")) and bool((run.colouring.colours >= 0).all())
            rows.append((n, s, proper, run.total, run.report["construction_colours"], h.max_degree(), dt))
            report_only(
                "efl run",
                f"n={n} seed={s} proper={proper} colours={run.total} (construction {run.report['construction_colours']}, "
                f"bound {n + 1}, max degree {h.max_degree()}) {dt:.1f}s",
            )
    proper_all = all(r[2] for r in rows)
    rate = sum(r[3] <= r[0] + 1 for r in rows) / len(rows)
    built_rate = sum(r[4] <= r[0] + 1 for r in rows) / len(rows)
    slowest = max(r[6] for r in rows if r[0] == 2000)
    ok = proper_all and rate >= EFL_N_PLUS_1_RATE and slowest <= EFL_SECONDS_N2000
    record(
        "EFL pipeline",
        ok,
        f"proper {sum(r[2] for r in rows)}/{len(rows)}; <= n+1 on {rate:.0%} (before palette compression {built_rate:.0%}); "
        f"slowest n=2000 run {slowest:.1f}s",
    )
    assert proper_all
    assert rate >= EFL_N_PLUS_1_RATE
    assert slowest <= EFL_SECONDS_N2000


# -- nibble and incidence colouring regressions ------------------------------------------------


def test_nibble_regression():
    h = steiner_triple_system(999)
    fracs, monotone = [], True
    for s in range(5):
        rep = rodl_nibble(h, NibbleParams(seed=s))
        assert verify(h, rep.matching)
        fracs.append(rep.uncovered[0] / h.n)
        t = rep.trajectory
        monotone &= all(a >= b for a, b in zip(t, t[1:]))
    ok = max(fracs) <= NIBBLE_UNCOVERED_MAX and monotone
    record("nibble regression", ok, f"STS(999) uncovered fractions {[round(f, 4) for f in fracs]} (limit {NIBBLE_UNCOVERED_MAX}); monotone={monotone}")
    assert max(fracs) <= NIBBLE_UNCOVERED_MAX
    assert monotone


def test_incidence_colouring_regression():
    h = steiner_triple_system(999)
    run = sts999_incidence()
    used = run.colours_used
    proper = _check_colouring(h, run.colouring)
    ok = proper and 499 <= used <= INCIDENCE_COLOUR_FACTOR * 499
    record("incidence colouring regression", ok, f"STS(999), D=499: proper={proper}, {used} colours (range 499..{INCIDENCE_COLOUR_FACTOR * 499:.1f})")
    assert proper
    assert 499 <= used <= INCIDENCE_COLOUR_FACTOR * 499


# -- partial Steiner ---------------------------------------------------------------------------


def test_partial_steiner():
    twice = []
    best = {}
    for n in (7, 9, 13, 15):
        for s in range(200 if n <= 9 else 20):
            res = partial_steiner(2, 3, n, NibbleParams(seed=s))
            pairs = [p for b in res.blocks for p in combinations(b, 2)]
            if len(pairs) != len(set(pairs)) or res.fill_fraction > 1:
                twice.append((n, s))
            best[n] = max(best.get(n, 0.0), res.fill_fraction)
    # feasibility of a full fill: exact matching number for n=7, an explicit perfect matching for n=9
    nu7 = oracle_matching_number(steiner_auxiliary(2, 3, 7), limit=40)
    index9 = {b: i for i, b in enumerate(auxiliary_subsets(2, 3, 9))}
    aux9 = steiner_auxiliary(2, 3, 9)
    pm9 = [index9[b] for b in steiner_triple_system(9).edges]
    feasible = nu7 == 7 and bool(verify(aux9, pm9)) and len(pm9) * 3 == aux9.n
    ok = not twice and feasible and best[7] == 1.0 and best[9] == 1.0
    record("partial Steiner", ok, f"best fill {best}; pairs covered twice in {len(twice)} runs; full fill feasible for 7 and 9: {feasible}")
    assert not twice
    assert feasible
    assert best[7] == 1.0 and best[9] == 1.0


# -- reorder / partition postconditions ------------------------------------------------------------


def _reorder_instances():
    out = [random_linear(150, 12, 40, s) for s in range(50)]
    for s in range(50):
        pg = projective_plane(11 if s % 2 == 0 else 13)
        rng = np.random.default_rng(1000 + s)
        keep = int(rng.integers(int(0.85 * pg.m), pg.m + 1))
        out.append(pg.subhypergraph(np.sort(rng.choice(pg.m, keep, replace=False)).tolist()))
    return out


def _reorder_literal(h, out, tau, K):
    n = h.n
    fwd = np.empty(h.m, dtype=np.int64)
    fwd[out.ordering.order] = forward_degree_profile(h, out.ordering)
    if out.all_good:
        return bool(fwd.max(initial=0) <= (1 - tau) * n)
    ws = h.sizes[out.W]
    spread = 1 + 3 * tau**0.25 * K**4
    w1 = ws.max() <= spread * ws.min()
    w2 = float(normalized_volume(h, out.W)) >= (1 - tau - 7 * tau**0.25 / K) ** 2 / spread
    order = out.ordering.order.tolist()
    sp = order.index(out.e_star)
    o1 = all(fwd[e] <= (1 - tau) * n for e in order[sp + 1 :])
    pre = h.sizes[order[: sp + 1]]
    o2 = bool(np.all(pre[:-1] >= pre[1:]))
    return bool(w1 and w2 and o1 and o2)


def _partition_literal(h, out, sigma):
    n = h.n
    fwd = np.empty(h.m, dtype=np.int64)
    fwd[out.ordering.order] = forward_degree_profile(h, out.ordering)
    if out.colourable_cheaply:
        return bool(fwd.max(initial=0) <= (1 - 2 * sigma) * n)
    if sorted(out.H1 + out.W + out.H2) != list(range(h.m)):
        return False
    ws = h.sizes[out.W]
    p1 = ws.max() <= (1 + 4 * sigma**0.25) * ws.min()
    p2 = float(normalized_volume(h, out.W)) >= 1 - 4 * sigma**0.2
    p3 = all(h.sizes[e] >= ws.max() for e in out.H2)
    fd1 = all(fwd[e] <= (1 - 2 * sigma) * n for e in out.H1)
    fd2 = all(fwd[e] <= n / 2000 for e in out.H2)
    return bool(p1 and p2 and p3 and fd1 and fd2)


def test_reorder_partition_postconditions():
    settings = [(0.01, 10.0), (0.05, 10.0), (0.1, 100.0)]
    sigma = 0.05
    failures = []
    variants = {"all_good": 0, "structured": 0, "cheap": 0, "split": 0}
    insts = _reorder_instances()
    for i, h in enumerate(insts):
        assert h.sizes.min() >= 12
        tau, K = settings[i % 3]
        try:
            out = reorder(h, tau, K)
            variants[out.variant] += 1
            if not _reorder_literal(h, out, tau, K):
                failures.append(("reorder", i))
        except Exception as exc:  # a raised postcondition is a failure of this criterion
            failures.append(("reorder", i, type(exc).__name__))
        try:
            part = partition_large(h, sigma)
            variants["cheap" if part.colourable_cheaply else "split"] += 1
            if not _partition_literal(h, part, sigma):
                failures.append(("partition", i))
        except Exception as exc:
            failures.append(("partition", i, type(exc).__name__))
    record("reorder/partition postconditions", not failures, f"{len(insts)} instances, variants {variants}, {len(failures)} failures")
    assert not failures, failures[:5]


# -- conjecture baselines (report only) --------------------------------------------------------------


def test_conjecture_baselines():
    emitted = 0
    for name, h in corpus():
        if not name.startswith("sts"):
            continue
        n = h.n
        best = max(len(rodl_nibble(h, NibbleParams(seed=s)).matching) for s in range(5))
        report_only("conjectured matching", f"STS({n}): matching {best}, leave {n - 3 * best}, conjectured size >= {(n - 4) / 3:.2f}")
        cols = [greedy_by_ordering(h).colours_used()]
        cols.append(sts999_incidence().colours_used if n == 999 else incidence_nibble_colouring(h).colours_used)
        report_only("conjectured colouring", f"STS({n}): best colours {min(cols)}, conjectured <= {(n - 1) / 2 + 3:g}")
        emitted += 2
    for order in range(1, 8):
        nu = oracle_matching_number(latin_square_hypergraph(LatinSquare.cyclic(order)), limit=49)
        report_only("conjectured transversal", f"cyclic Latin square of order {order}: nu {nu} vs n - 1 = {order - 1}")
        emitted += 1
    record("conjecture baselines", emitted == 19, f"{emitted} report-only lines emitted (never gating)")
    assert emitted == 19
