import math

import numpy as np
import pytest

from hypernibble.colouring import greedy_by_ordering, oracle_chromatic_index
from hypernibble.efl import (
    EflParams,
    ReservoirPool,
    absorb,
    add_virtual_pairs,
    coverage_certificate,
    covers_all_pairs,
    degree_identity_holds,
    dense_perfect_matching,
    efl_small_colouring,
    high_degree_set,
    leftover_decompose,
    main_colouring,
    partition_large,
    reorder,
    reservoir,
)
from hypernibble.errors import (
    DegreeBoundViolated,
    NoPerfectMatching,
    PaletteExceeded,
    ReservoirFailed,
)
from hypernibble.generators import (
    complete_graph_hg,
    cycle_graph,
    degenerate_plane,
    fano_plane,
    projective_plane,
    random_linear,
    random_pair_cover,
    steiner_triple_system,
)
from hypernibble.hypercore import Graph, Hypergraph, forward_degree_profile, normalized_volume, verify


def _pg_subset(q, keep, seed):
    pg = projective_plane(q)
    rng = np.random.default_rng(seed)
    ids = np.sort(rng.choice(pg.m, keep, replace=False))
    return pg.subhypergraph(ids.tolist())


def test_params_validation():
    with pytest.raises(ValueError):
        EflParams(xi=0.1, kappa=0.01)
    with pytest.raises(ValueError):
        EflParams(reservoir_method="coin")
    with pytest.raises(ValueError):
        EflParams(slice_budget=0)
    p = EflParams().replace(seed=9)
    assert p.seed == 9 and p.gamma == EflParams().gamma


def test_virtual_pairs():
    f = fano_plane()
    full, k = add_virtual_pairs(f)
    assert k == 0 and full is f
    h = Hypergraph(5, [(0, 1, 2)])
    full, k = add_virtual_pairs(h)
    assert k == 7 and covers_all_pairs(full)
    assert full.edges[0] == (0, 1, 2)


@pytest.mark.parametrize("seed", range(5))
def test_degree_identity_on_pair_covers(seed):
    h = random_pair_cover(int(30 + 20 * seed), 0.3 + 0.1 * seed, seed)
    assert degree_identity_holds(h)
    assert degree_identity_holds(steiner_triple_system(13))
    assert degree_identity_holds(complete_graph_hg(9))


def test_reservoir_split():
    h = random_pair_cover(500, 0.5, 1)
    split = reservoir(h, EflParams(seed=1))
    assert (h.sizes[split.R] == 2).all()
    assert split.diagnostics["degree_identity_ok"]
    assert split.diagnostics["R_size"] == len(split.R)
    two = int((h.sizes == 2).sum())
    assert abs(len(split.R) - two / 2) <= h.n
    assert split.U.tolist() == high_degree_set(h, 0.2).tolist()
    assert reservoir(h, EflParams(seed=1)).R.tolist() == split.R.tolist()
    with pytest.raises(ValueError):
        reservoir(Hypergraph(4, [(0, 1, 2)]))


def test_reservoir_strict_failure():
    h = random_pair_cover(200, 0.5, 0)
    with pytest.raises(ReservoirFailed):
        reservoir(h, EflParams(strict=True, reservoir_budget=2))
    loose = reservoir(h, EflParams(reservoir_budget=2))
    assert not loose.ok and loose.diagnostics["failed_bound"]


def test_dense_perfect_matching():
    k4 = complete_graph_hg(4)
    pm = dense_perfect_matching(k4)
    assert len(pm) == 2 and verify(k4, pm)
    half = 10
    kb = Graph(2 * half, [(a, half + b) for a in range(half) for b in range(half)])
    pm = dense_perfect_matching(kb, budget=1)
    assert len(pm) == half and verify(kb, pm)
    c6 = cycle_graph(6)
    try:
        pm = dense_perfect_matching(c6)
        assert len(pm) == 3 and verify(c6, pm)
    except NoPerfectMatching as err:
        assert verify(c6, err.best)
    with pytest.raises(NoPerfectMatching) as exc:
        dense_perfect_matching(Graph(4, [(0, 1), (0, 2), (0, 3)]))
    assert len(exc.value.best) == 1
    with pytest.raises(ValueError):
        dense_perfect_matching(complete_graph_hg(3))


def test_absorb_toys():
    h = Hypergraph(6, [(0, 1), (2, 3, 4), (3, 5)])
    pool = ReservoirPool(h, [0])
    S = np.zeros(6, dtype=bool)
    res = absorb(h, [1], pool, S, np.array([], dtype=np.int64))
    assert res.added == [] and res.branch == "nothing"
    res = absorb(h, [1], pool, S, np.array([2, 3]))
    assert res.added == []
    res = absorb(h, [1], pool, S, np.array([0, 1]))
    assert res.added == [0] and res.defects == []
    assert pool.remaining().tolist() == []


def test_absorb_parity_defect_in_S():
    # U is everything, so an odd leftover needs one defect chosen from S
    n = 9
    h = complete_graph_hg(n)
    pool = ReservoirPool(h, range(h.m))
    S = np.zeros(n, dtype=bool)
    S[4] = True
    res = absorb(h, [], pool, S, np.arange(n))
    assert res.defects == [4] and res.failures == []
    assert verify(h, res.added)
    cert = coverage_certificate(h, [res.added], range(n), S=[4])
    assert cert.flag == "nearly_perfect" and cert.defects == [4]


def test_coverage_certificate_recompute():
    h = complete_graph_hg(4)
    ids = {e: i for i, e in enumerate(h.edges)}
    pm = [[ids[(0, 1)], ids[(2, 3)]], [ids[(0, 2)], ids[(1, 3)]]]
    assert coverage_certificate(h, pm, range(4)).flag == "perfect"
    one = [[ids[(0, 1)]], [ids[(2, 3)]]]
    cert = coverage_certificate(h, one, [0, 2])
    assert cert.uncovered == [[2], [0]] and cert.flag == "nearly_perfect"
    assert coverage_certificate(h, one, [0, 2], S=[0]).flag == "failed"
    assert coverage_certificate(h, [[]], [0, 1]).flag == "failed"
    assert cert.as_dict()["max_uncovered_per_matching"] == 1


def test_leftover_decompose_small():
    h = steiner_triple_system(99)
    out = leftover_decompose(h, [], 0.05)
    assert out.chunks == [] and out.classes == 0
    mt = [0] + [e for e in range(1, h.m) if not set(h.edge(e)) & set(h.edge(0))][:1]
    out = leftover_decompose(h, mt, 0.05)
    assert len(out.chunks) == 1 and sorted(out.chunks[0]) == sorted(mt)
    with pytest.raises(DegreeBoundViolated):
        leftover_decompose(h, range(h.m), 0.05, strict=True)


def test_leftover_decompose_random_n2000():
    n, gamma = 2000, 0.05
    h = random_linear(n, 3, 30000, 3)
    assert h.max_degree() <= gamma * n
    out = leftover_decompose(h, range(h.m), gamma)
    span = math.floor(math.sqrt(gamma) * n)
    got = sorted(e for c in out.chunks for e in c)
    assert got == list(range(h.m))
    for c in out.chunks:
        assert verify(h, c) and int(h.sizes[c].sum()) <= span
    checks = {c["name"]: c for c in out.checks}
    assert checks["matching span"]["ok"] and checks["greedy classes"]["ok"]


def test_main_colouring_structure():
    h = random_pair_cover(500, 0.5, 2)
    p = EflParams(seed=2)
    split = reservoir(h, p)
    main = main_colouring(h, split, p)
    assert set(main.leftover.tolist()) <= set(split.R.tolist())
    c = main.colouring.colours
    assert (c[main.leftover] < 0).all()
    for ids in main.colouring.classes().values():
        assert verify(h, ids)
    palette = math.ceil(h.n / 2) + math.ceil(p.gamma ** (1 / 3) * h.n)
    assert main.colouring.palette_size >= palette


def test_efl_small_examples():
    k3 = complete_graph_hg(3)
    run = efl_small_colouring(k3)
    assert run.total == 3 and verify(k3, run.colouring, "proper_colouring")
    f = fano_plane()
    run = efl_small_colouring(f)
    assert run.total == 7 == oracle_chromatic_index(f) and run.n_plus_1_ok
    # degenerate plane on 4 points is the only one with edges of size <= 3
    d4 = degenerate_plane(4)
    run = efl_small_colouring(d4)
    assert verify(d4, run.colouring, "proper_colouring") and run.total == 4 <= d4.n + 1


@pytest.mark.parametrize("seed", range(3))
def test_efl_pair_cover_small(seed):
    h = random_pair_cover(60, 0.6, seed)
    run = efl_small_colouring(h, EflParams(seed=seed))
    assert verify(h, run.colouring, "proper_colouring")
    assert run.colouring.colours.min() >= 0
    assert run.total >= h.max_degree()
    assert run.report["construction_colours"] >= run.total


def test_efl_virtual_pairs_uncoloured_in_output():
    h = random_linear(40, 3, 100, 1)
    run = efl_small_colouring(h)
    assert run.colouring.m == h.m and run.report["virtual_edges"] > 0
    assert verify(h, run.colouring, "proper_colouring")


def test_efl_strict_errors():
    h = random_pair_cover(200, 0.5, 0)
    with pytest.raises((ReservoirFailed, PaletteExceeded)):
        efl_small_colouring(h, EflParams(strict=True))
    with pytest.raises(ValueError):
        efl_small_colouring(Hypergraph(5, [(0, 1, 2, 3)]))
    with pytest.raises(ValueError):
        efl_small_colouring(Hypergraph(4, [(0, 1, 2), (0, 1, 3)]))


def test_efl_palette_exceeded_carries_colouring():
    h = random_pair_cover(60, 0.6, 1)
    try:
        run = efl_small_colouring(h, EflParams(strict=True, compress=False, reservoir_budget=1))
        assert run.n_plus_1_ok
    except ReservoirFailed as err:
        assert err.args
    except PaletteExceeded as err:
        assert verify(h, err.colouring, "proper_colouring")


def test_reorder_matching_all_good():
    h = Hypergraph(60, [tuple(range(12 * i, 12 * i + 12)) for i in range(5)])
    out = reorder(h, 0.01, 100.0)
    assert out.all_good
    assert forward_degree_profile(h, out.ordering).max() == 0


def test_reorder_forced_structured_branch():
    h = projective_plane(3)
    tau, K = 0.2, 100.0
    assert (1 - tau) * h.n < h.m - 1
    out = reorder(h, tau, K)
    assert not out.all_good and out.e_star is not None
    names = {c["name"]: c for c in out.checks}
    assert set(names) == {"W1", "W2", "O1", "O2"} and all(c["ok"] for c in names.values())
    assert set(out.W) <= set(range(h.m))


@pytest.mark.parametrize("seed", range(6))
def test_reorder_all_good_greedy_bound(seed):
    h = _pg_subset(11, 40, seed)
    tau = 0.05
    out = reorder(h, tau, 10.0)
    if out.all_good:
        col = greedy_by_ordering(h, out.ordering)
        assert col.colours_used() <= (1 - tau) * h.n + 1
    else:
        assert all(c["ok"] for c in out.checks)


def test_reorder_preconditions():
    with pytest.raises(ValueError):
        reorder(fano_plane(), 0.5, 1.0)
    with pytest.raises(ValueError):
        reorder(Hypergraph(4, [(0, 1, 2), (0, 1, 3)]), 0.001, 100.0)
    with pytest.raises(ValueError):
        reorder(fano_plane(), 0.001, 100.0, r=4)


def test_partition_cheap():
    h = Hypergraph(60, [tuple(range(12 * i, 12 * i + 12)) for i in range(5)])
    out = partition_large(h, 0.05)
    assert out.colourable_cheaply and out.greedy_colours == 1


@pytest.mark.parametrize("q", [5, 11])
def test_partition_projective_plane(q):
    h = projective_plane(q)
    sigma = 0.05
    out = partition_large(h, sigma)
    assert not out.colourable_cheaply
    assert sorted(out.H1 + out.W + out.H2) == list(range(h.m))
    assert float(normalized_volume(h, out.W)) >= 1 - 4 * sigma**0.2
    names = {c["name"]: c for c in out.checks}
    assert {"P1", "P2", "P3", "FD1", "FD2"} <= set(names)
    assert all(c["ok"] for c in names.values())


def test_partition_rejects_bad_sigma():
    with pytest.raises(ValueError):
        partition_large(fano_plane(), 0.7)
    with pytest.raises(ValueError):
        partition_large(fano_plane(), 0.1, r=3)
