from itertools import combinations

import numpy as np
import pytest

from hypernibble.colouring import oracle_matching_number
from hypernibble.errors import NotTriangleFree
from hypernibble.generators import (
    complete_graph_hg,
    cycle_graph,
    fano_plane,
    petersen_graph,
    random_pair_cover,
    steiner_triple_system,
)
from hypernibble.hypercore import (
    Graph,
    Hypergraph,
    encode_matchings,
    incidence_hypergraph,
    split_incidence_matching,
    verify,
)
from hypernibble.nibble import (
    NibbleParams,
    TrackedFamilies,
    greedy_independent_set_trianglefree,
    is_independent,
    layered_matchings,
    load_matchings,
    partial_steiner,
    pseudorandom_matchings,
    random_greedy_matching,
    rodl_nibble,
)


def _is_maximal(h, mt):
    covered = mt.vertices(h)
    return all(covered & set(e) for e in h.edges)


def test_params_validation():
    with pytest.raises(ValueError):
        NibbleParams(eps_prime=0)
    with pytest.raises(ValueError):
        NibbleParams(rounds=0)
    with pytest.raises(ValueError):
        NibbleParams(degree_mode="guess")
    assert NibbleParams().n_rounds == 30
    assert NibbleParams(rounds=3).n_rounds == 3
    assert NibbleParams().with_seed(5).seed == 5


def test_single_edge():
    h = Hypergraph(4, [(0, 1, 2)])
    rep = rodl_nibble(h)
    assert rep.matching.sorted_ids() in ([], [0])
    assert verify(h, rep.matching)


@pytest.mark.parametrize("seed", range(5))
def test_fano_and_petersen(seed):
    p = NibbleParams(seed=seed)
    assert len(rodl_nibble(fano_plane(), p).matching) == 1
    pg = petersen_graph()
    rep = rodl_nibble(pg, p)
    assert verify(pg, rep.matching) and len(rep.matching) <= 5
    assert oracle_matching_number(pg) == 5


def test_formula_mode_valid():
    h = steiner_triple_system(99)
    rep = rodl_nibble(h, NibbleParams(degree_mode="formula", seed=2))
    assert verify(h, rep.matching)
    assert rep.uncovered[0] == h.n - 3 * len(rep.matching)


def test_no_completion_is_subset_of_completed():
    h = steiner_triple_system(99)
    a = rodl_nibble(h, NibbleParams(seed=4, complete=False))
    b = rodl_nibble(h, NibbleParams(seed=4))
    assert set(a.matching.edge_ids) <= set(b.matching.edge_ids)
    assert _is_maximal(h, b.matching)


@pytest.mark.parametrize("seed", range(4))
def test_trajectory_monotone(seed):
    rep = rodl_nibble(steiner_triple_system(99), NibbleParams(seed=seed))
    t = rep.trajectory
    assert all(a >= b for a, b in zip(t, t[1:]))
    assert t[-1] == rep.uncovered[0]


def test_random_greedy_examples():
    m = Hypergraph(9, [(0, 1, 2), (3, 4, 5), (6, 7, 8)])
    assert random_greedy_matching(m, 3).matching.sorted_ids() == [0, 1, 2]
    assert len(random_greedy_matching(complete_graph_hg(3), 1).matching) == 1
    s9 = steiner_triple_system(9)
    for s in range(20):
        mt = random_greedy_matching(s9, s).matching
        assert len(mt) in (2, 3) and _is_maximal(s9, mt)


def test_determinism():
    h = random_pair_cover(60, 0.7, 3)
    p = NibbleParams(seed=11)
    assert rodl_nibble(h, p).to_json() == rodl_nibble(h, p).to_json()
    a = pseudorandom_matchings(h, 10, None, p, 0.1)
    b = pseudorandom_matchings(h, 10, None, p, 0.1)
    assert a.dump_matchings() == b.dump_matchings()


@pytest.mark.parametrize("seed", range(3))
def test_pseudorandom_disjoint_and_reencodes(seed):
    h = random_pair_cover(40, 0.6, seed)
    D = 8
    rep = pseudorandom_matchings(h, D, None, NibbleParams(seed=seed))
    assert len(rep.matchings) == D
    seen = set()
    for mt in rep.matchings:
        assert verify(h, mt)
        assert not seen & set(mt.edge_ids)
        seen |= set(mt.edge_ids)
    inc = incidence_hypergraph(h, D)
    code = encode_matchings(h, rep.matchings)
    assert verify(inc, code)
    back = split_incidence_matching(h, D, code)
    assert [m.sorted_ids() for m in back] == [m.sorted_ids() for m in rep.matchings]


def test_layers_match_explicit_incidence_nibble():
    # the implicit engine's output is a matching of the explicit incidence hypergraph
    h = steiner_triple_system(15)
    D = 7
    rep = layered_matchings(h, D, None, NibbleParams(seed=1))
    inc = incidence_hypergraph(h, D)
    assert verify(inc, encode_matchings(h, rep.matchings))
    explicit = rodl_nibble(inc, NibbleParams(seed=1))
    assert verify(inc, explicit.matching)
    for mt in split_incidence_matching(h, D, explicit.matching.edge_ids):
        assert verify(h, mt)


def test_d1_gamma0_is_single_matching():
    h = steiner_triple_system(27)
    rep = pseudorandom_matchings(h, 1, None, NibbleParams(seed=5), 0.0)
    assert len(rep.matchings) == 1 and verify(h, rep.matching)
    assert _is_maximal(h, rep.matching)


def test_gamma_sparsifies():
    h = steiner_triple_system(99)
    full = pseudorandom_matchings(h, 10, None, NibbleParams(seed=2), 0.0)
    thin = pseudorandom_matchings(h, 10, None, NibbleParams(seed=2), 0.5)
    assert sum(thin.sizes) < sum(full.sizes)
    for a, b in zip(thin.matchings, full.matchings):
        assert set(a.edge_ids) <= set(b.edge_ids)


def test_tracked_defects_recomputable():
    h = random_pair_cover(50, 0.8, 1)
    fam = TrackedFamilies(vertex_sets=[range(10), range(20, 50)], edge_sets=[range(h.m)])
    rep = pseudorandom_matchings(h, 6, fam, NibbleParams(seed=0))
    miss = np.ones((6, h.n), dtype=bool)
    for r, mt in enumerate(rep.matchings):
        miss[r, sorted(mt.vertices(h))] = False
    assert rep.defects["max_matchings_missing_vertex"] == int(miss.sum(axis=0).max())
    dev = max(abs(miss[:, list(s)].sum(axis=1)).max() for s in (range(10), range(20, 50))) / h.n
    assert rep.defects["kappa_vertex"] == pytest.approx(dev)
    used = set().union(*(mt.edge_ids for mt in rep.matchings))
    assert rep.defects["kappa_edge"] == pytest.approx((h.m - len(used)) / h.m)


def test_pseudorandom_rejects_large_edges():
    with pytest.raises(ValueError):
        pseudorandom_matchings(Hypergraph(5, [(0, 1, 2, 3)]), 2)
    with pytest.raises(ValueError):
        pseudorandom_matchings(fano_plane(), 0)


def test_matchings_roundtrip():
    h = steiner_triple_system(13)
    rep = pseudorandom_matchings(h, 4, None, NibbleParams(seed=3))
    back = load_matchings(rep.dump_matchings(), h.n)
    assert [m.sorted_ids() for m in back] == [m.sorted_ids() for m in rep.matchings]
    assert all(verify(h, m) for m in back)


@pytest.mark.parametrize("n", [7, 9, 13, 15])
def test_partial_steiner_pairs_once(n):
    res = partial_steiner(2, 3, n, NibbleParams(seed=0))
    pairs = [p for b in res.blocks for p in combinations(b, 2)]
    assert len(pairs) == len(set(pairs))
    assert 0 < res.fill_fraction <= 1
    assert verify(res.hypergraph(n), kind="linear")


@pytest.mark.parametrize("n", [7, 9])
def test_partial_steiner_full_fill_reachable(n):
    fills = [partial_steiner(2, 3, n, NibbleParams(seed=s)).fill_fraction for s in range(200)]
    assert max(fills) == 1.0


def test_independent_set_examples():
    g = Graph(6, ())
    assert greedy_independent_set_trianglefree(g).size == 6
    c5 = Graph.from_hypergraph(cycle_graph(5))
    pet = Graph.from_hypergraph(petersen_graph())
    sizes = set()
    for s in range(30):
        r = greedy_independent_set_trianglefree(c5, s)
        assert r.size == 2 and is_independent(c5, r.vertices)
        r = greedy_independent_set_trianglefree(pet, s)
        assert is_independent(pet, r.vertices)
        sizes.add(r.size)
    # Petersen has ten maximal independent sets of size 3 and five of size 4
    assert sizes == {3, 4}
    assert r.average_degree == 3.0
    assert r.bound == pytest.approx(10 / 3 * np.log(3))


def test_independent_set_rejects_triangles():
    with pytest.raises(NotTriangleFree) as exc:
        greedy_independent_set_trianglefree(Graph.from_hypergraph(complete_graph_hg(4)))
    assert len(exc.value.triangle) == 3
