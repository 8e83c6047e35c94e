import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpcsbm import (CapacityError, ContractError, Graph, RecoveryFailure, SampledSet, compare_cut, compare_grp,
                    copy_nbr, even_cluster, random_set, reorganize_nbr, reorganize_nbr_dense, representative_k)
from mpcsbm.ops import TAG_S, sample_with_retry

from conftest import complete_graph, fleet_for, path_graph


@st.composite
def graphs(draw, max_n=64):
    N = draw(st.integers(2, max_n))
    dens = draw(st.floats(0.0, 1.0))
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(N, 1)
    keep = rng.random(len(iu[0])) < dens
    return Graph(N, np.column_stack([iu[0][keep], iu[1][keep]]))


def adjacency_sets(g):
    return [set(g.neighbors(u).tolist()) for u in range(g.N)]


def test_random_set_saturated_is_identity():
    g = path_graph(50)
    S = random_set(fleet_for(g), g, X=50, seed=1)
    assert S.members.tolist() == list(range(50))
    assert [S.lookup(x) for x in range(50)] == list(range(50))


def test_random_set_size_window():
    g = path_graph(1000)
    for seed in range(20):
        S = random_set(fleet_for(g), g, X=64, seed=seed)
        assert 32 <= len(S) <= 2 * 20 * 64


def test_random_set_lookup_matches_scan():
    g = path_graph(400)
    c = fleet_for(g, c_sel=2)
    S = random_set(c, g, X=40, seed=5)
    flat = {v: i for i, v in enumerate(S.members.tolist())}
    assert all(S.lookup(x) == flat.get(x, -1) for x in range(g.N))
    assert S.reference.tolist() == np.cumsum(g.degrees).tolist()
    assert len(S) < 400


def test_sampler_retry_failure():
    with pytest.raises(RecoveryFailure) as exc:
        sample_with_retry(100, 10, 0, TAG_S, lo=90, hi=95, retries=2)
    assert exc.value.stage == "random_set"


def test_dense_layout_slots():
    k3 = complete_graph(3)
    lay = reorganize_nbr_dense(fleet_for(k3), k3)
    assert sorted(lay.slots().tolist()) == [1, 2, 3, 5, 6, 7]
    empty = Graph(4, np.zeros((0, 2), dtype=np.int64))
    assert reorganize_nbr_dense(fleet_for(empty), empty).slots().size == 0
    one = Graph(2, np.array([(0, 1)]))
    assert sorted(reorganize_nbr_dense(fleet_for(one), one).slots().tolist()) == [1, 2]


def test_dense_layout_over_budget():
    g = complete_graph(70)
    c = fleet_for(g)
    c.budget = c.total_resident + 10
    with pytest.raises(CapacityError, match="reorganize_nbr"):
        reorganize_nbr_dense(c, g)


def test_sampled_layout_path():
    g = path_graph(3)
    lay = reorganize_nbr(fleet_for(g), g, SampledSet.from_members([0, 2], g))
    assert lay.unpacked().astype(int).tolist() == [[0, 1, 0], [0, 1, 0]]
    single = reorganize_nbr(fleet_for(g), g, SampledSet.from_members([1], g))
    assert single.unpacked()[0].tolist() == [True, False, True]


def test_copy_layout_arithmetic():
    g = complete_graph(100)
    c = fleet_for(g)
    lay = reorganize_nbr(c, g, SampledSet.from_members([3, 7], g))
    assert lay.stride == 2
    same = copy_nbr(c, lay, 1)
    assert np.array_equal(same.bits, lay.bits) and same.n_slabs == 2
    three = copy_nbr(c, lay, 3, name="x3")
    assert three.n_slabs == 6 and c.dataset_words("x3") == 12
    assert [three.base(i, j) for j in range(3) for i in range(2)] == [0, 2, 4, 6, 8, 10]
    c.budget = c.total_resident + 5
    with pytest.raises(CapacityError):
        copy_nbr(c, lay, 10, name="x10")


def test_compare_grp_examples():
    k4 = complete_graph(4)
    c = fleet_for(k4)
    lay = reorganize_nbr_dense(c, k4)
    assert compare_grp(c, lay, [0, 1], lay, [0, 2]).tolist() == [3, 2]
    g = Graph(4, np.array([(0, 1), (2, 3)]))
    lay2 = reorganize_nbr_dense(fleet_for(g), g)
    assert compare_grp(c, lay2, [0], lay2, [2]).tolist() == [0]
    wide = reorganize_nbr_dense(fleet_for(complete_graph(70)), complete_graph(70))
    with pytest.raises(ContractError):
        compare_grp(c, lay, [0], wide, [0])


@given(graphs())
def test_compare_grp_all_pairs_match_brute_force(g):
    c = fleet_for(g)
    S = SampledSet.from_members(np.arange(g.N), g)
    lay = reorganize_nbr(c, g, S)
    t = g.N
    copies = copy_nbr(c, lay, t)
    ii, jj = np.meshgrid(np.arange(t), np.arange(t), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    got = compare_grp(c, copies, jj * t + ii, copies, ii * t + jj)
    nb = adjacency_sets(g)
    assert got.tolist() == [len(nb[a] & nb[b]) for a, b in zip(ii.tolist(), jj.tolist())]
    U = lay.unpacked()
    assert np.array_equal(U, U.T)


def test_even_cluster_examples():
    c = fleet_for(path_graph(10))
    c.allocate("S", 10)
    keep, xi = even_cluster(c, [0, 1, 2, 0, 1, 2, 0, 1, 2], 3)
    assert xi == 3 and keep.all()
    keep, xi = even_cluster(c, [0, 0, 1, 0, 1, 0, 1, 0], 2)
    assert xi == 3 and keep.tolist() == [True, True, True, True, True, False, True, False]
    with pytest.raises(RecoveryFailure):
        even_cluster(c, [0, 0, 0, 0], 2)


def even_oracle(labels, k, target=None):
    labels = np.asarray(labels)
    counts = [int((labels == i).sum()) for i in range(k)]
    if min(counts) == 0:
        return None
    xi = min(counts) if target is None else min(min(counts), target)
    keep, seen = [], [0] * k
    for lab in labels.tolist():
        ok = lab >= 0 and seen[lab] < xi
        keep.append(ok)
        if ok:
            seen[lab] += 1
    return keep, xi


@given(st.integers(1, 5).flatmap(lambda k: st.tuples(
    st.just(k), st.lists(st.integers(-1, k - 1), min_size=1, max_size=64),
    st.one_of(st.none(), st.integers(1, 20)))))
def test_even_cluster_oracle(args):
    k, labels, target = args
    c = fleet_for(path_graph(64))
    c.allocate("S", len(labels))
    want = even_oracle(labels, k, target)
    if want is None:
        with pytest.raises(RecoveryFailure):
            even_cluster(c, labels, k, target)
        return
    keep, xi = even_cluster(c, labels, k, target)
    assert (keep.tolist(), xi) == want
    kept = np.asarray(labels)[keep]
    assert len(set(np.bincount(kept, minlength=k).tolist())) == 1


def test_representative_k_examples():
    c = fleet_for(path_graph(10))
    c.allocate("S", 3)
    kept, reps = representative_k(c, [[1, 2], [2], [1]], 2)
    assert kept.tolist() == [1, 2, 1] and reps.tolist() == [0, 1]
    kept, reps = representative_k(c, [[0], [0, 1]], 1)
    assert reps.tolist() == [0]
    with pytest.raises(RecoveryFailure):
        representative_k(c, [[0], [0], [0]], 2)


@given(st.integers(1, 4).flatmap(lambda k: st.tuples(st.just(k), st.lists(
    st.lists(st.integers(0, 5), max_size=4), min_size=1, max_size=40))))
def test_representative_k_oracle(args):
    k, labelsets = args
    c = fleet_for(path_graph(64))
    c.allocate("S", len(labelsets))
    kept = [min(ls) if ls else -1 for ls in labelsets]
    first = {}
    for pos, lab in enumerate(kept):
        if lab >= 0 and lab not in first:
            first[lab] = pos
    if len(first) != k:
        with pytest.raises(RecoveryFailure):
            representative_k(c, labelsets, k)
        return
    got_kept, reps = representative_k(c, labelsets, k)
    assert got_kept.tolist() == kept
    assert reps.tolist() == [first[lab] for lab in sorted(first)]


def test_compare_cut_examples():
    # v = 0 is adjacent to members 1, 2 (label 0) and 3 (label 1)
    g = Graph(6, np.array([(0, 1), (0, 2), (0, 3), (4, 5)]))
    c = fleet_for(g)
    lay = reorganize_nbr(c, g, SampledSet.from_members([1, 2, 3, 4], g))
    best, cnt = compare_cut(c, lay, [0, 0, 1, 1], 2)
    assert (best[0], cnt[0]) == (0, 2)
    assert (best[5], cnt[5]) == (1, 1)
    assert (best[1], cnt[1]) == (0, 0)  # no edges into S: smallest label, count 0
    lay2 = reorganize_nbr(c, g, SampledSet.from_members([1, 3], g), name="l2")
    best, cnt = compare_cut(c, lay2, [0, 1], 2)
    assert (best[0], cnt[0]) == (0, 1)  # tie (1, 1) goes to the smaller label


@given(graphs(), st.integers(1, 4), st.data())
def test_compare_cut_oracle(g, k, data):
    members = sorted(data.draw(st.sets(st.integers(0, g.N - 1), min_size=1)))
    labels = data.draw(st.lists(st.integers(-1, k - 1), min_size=len(members), max_size=len(members)))
    c = fleet_for(g)
    lay = reorganize_nbr(c, g, SampledSet.from_members(members, g))
    best, cnt = compare_cut(c, lay, labels, k)
    nb = adjacency_sets(g)
    for v in range(g.N):
        counts = [sum(1 for u, lab in zip(members, labels) if lab == i and u in nb[v]) for i in range(k)]
        top = max(counts)
        assert (best[v], cnt[v]) == (counts.index(top), top)
