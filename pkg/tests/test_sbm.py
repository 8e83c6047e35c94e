import math

import numpy as np
import pytest

from mpcsbm import CapacityError, ClusterState, ParameterError, SbmParams, generate_sbm, regime_check
from mpcsbm.sbm import distribute_edges, read_edge_list, write_edge_list


def test_single_inter_pair_with_q_one():
    inst = generate_sbm(SbmParams(1, 2, 0.3, 1.0, 5))
    assert inst.edges.tolist() == [[0, 1]]


@pytest.mark.parametrize("kw", [dict(k=1), dict(n=0), dict(p=1.5), dict(q=-0.1)])
def test_invalid_params_rejected(kw):
    base = dict(n=3, k=2, p=0.5, q=0.1, seed=0)
    base.update(kw)
    with pytest.raises(ParameterError):
        generate_sbm(SbmParams(**base))


def test_intra_count_within_four_sigma_and_deterministic():
    prm = SbmParams(100, 2, 0.5, 0.05, 11)
    a, b = generate_sbm(prm), generate_sbm(prm)
    assert np.array_equal(a.edges, b.edges)
    same = a.truth[a.edges[:, 0]] == a.truth[a.edges[:, 1]]
    pairs = 2 * math.comb(100, 2)
    mean, sd = pairs * 0.5, math.sqrt(pairs * 0.25)
    assert mean == 4950
    assert abs(int(same.sum()) - mean) <= 4 * sd
    inter = 100 * 100
    assert abs(int((~same).sum()) - inter * 0.05) <= 4 * math.sqrt(inter * 0.05 * 0.95)


def test_instance_shape_invariants():
    inst = generate_sbm(SbmParams(30, 3, 0.4, 0.1, 2))
    e = inst.edges
    assert (e[:, 0] < e[:, 1]).all() and e.max() < inst.N
    assert len(np.unique(e, axis=0)) == len(e)
    assert np.bincount(inst.truth).tolist() == [30, 30, 30]
    assert not np.array_equal(e, generate_sbm(SbmParams(30, 3, 0.4, 0.1, 3)).edges)


def test_extreme_probabilities():
    cliques = generate_sbm(SbmParams(4, 3, 1.0, 0.0, 0))
    assert len(cliques.edges) == 3 * 6
    assert (cliques.truth[cliques.edges[:, 0]] == cliques.truth[cliques.edges[:, 1]]).all()
    assert len(generate_sbm(SbmParams(4, 3, 0.0, 0.0, 0)).edges) == 0


def test_degree_concentration():
    prm = SbmParams(100, 2, 0.5, 0.05, 4)
    deg = generate_sbm(prm).graph.degrees
    mean = 99 * 0.5 + 100 * 0.05
    assert (np.abs(deg - mean) <= 6 * math.sqrt(mean)).all()


def test_round_robin_placement():
    from mpcsbm import Graph
    g = Graph(5, np.array([(0, 1), (1, 2), (2, 3), (3, 4)]))
    c = ClusterState(2, 8)
    directed, owner = distribute_edges(g, c, machines=2)
    assert c.placements["edges"].tolist() == [4, 4]
    assert sorted(map(tuple, directed.tolist())) == sorted(
        [(0, 1), (1, 2), (2, 3), (3, 4), (1, 0), (2, 1), (3, 2), (4, 3)])
    again = ClusterState(2, 8)
    d2, o2 = distribute_edges(g, again, machines=2)
    assert np.array_equal(directed, d2) and np.array_equal(owner, o2)


def test_placement_capacity_error():
    from mpcsbm import Graph
    g = Graph(5, np.array([(0, 1), (1, 2), (2, 3), (3, 4)]))
    with pytest.raises(CapacityError) as exc:
        distribute_edges(g, ClusterState(1, 4))
    assert exc.value.shortfall == 4


def test_regime_report_arithmetic():
    prm = SbmParams(10 ** 6, 2, 0.5, 0.05, 0)
    rep = regime_check(prm, r=3)
    left, rhs, ok = rep.lemma_threshold
    assert left == pytest.approx(0.45 / math.sqrt(0.5)) and left == pytest.approx(0.6364, abs=1e-4)
    assert rhs == pytest.approx(6 * math.sqrt(3) * math.log(1e6) ** 0.25 / 1e6 ** 0.25)
    assert ok == (left >= rhs)
    pl, pr, pok = rep.power
    assert pr == pytest.approx(2 * math.sqrt(2) * (1e6) ** (-0.25) * math.log(2e6) ** 7)
    assert pok == (pl >= pr)


def test_regime_zero_gap_and_short_r():
    rep = regime_check(SbmParams(100, 2, 0.3, 0.3, 0), r=3)
    assert not rep.ok_commnbr and not rep.commnbr_theorem[2] and not rep.ok_power
    short = regime_check(SbmParams(100, 2, 0.5, 0.1, 0), r=2)
    assert short.power is None and any("r >= 3" in n for n in short.notes)


def test_edge_list_roundtrip(tmp_path):
    inst = generate_sbm(SbmParams(8, 2, 0.6, 0.2, 9))
    path, truth = write_edge_list(inst, tmp_path / "g.txt")
    assert path.read_text().splitlines()[0] == "16 2 9"
    back = read_edge_list(path)
    assert np.array_equal(back.edges, inst.edges) and np.array_equal(back.truth, inst.truth)
