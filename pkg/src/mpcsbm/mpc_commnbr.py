"""Common-neighbour clustering on the simulated fleet.

Pipeline: sample S' and S; learn the threshold and k representatives from all
pairs of S'; label S by comparing each member with the representatives;
balance the sub-clusters; label every other vertex by its edge counts into
the balanced sub-clusters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterState
from .errors import ParameterError, RecoveryFailure
from .graph import Graph
from .ops import (TAG_S, TAG_SPRIME, SampledSet, compare_cut, compare_grp, copy_nbr, even_cluster,
                  random_set, reorganize_nbr, representative_k)
from .sequential import (Clustering, CommNbrConfig, ThresholdDelta, canonical_labels, sample_sizes,
                         threshold_from_values, trim_size)


@dataclass
class RepResult:
    reps: np.ndarray            # vertex ids of the k representatives, in label order
    threshold: ThresholdDelta
    sample: SampledSet
    counts: np.ndarray = field(repr=False, default=None)  # all-pairs common-neighbour matrix on S'


def compute_rep(cluster: ClusterState, g: Graph, Sp: SampledSet, k: int,
                mode: str = "formula") -> RepResult:
    """All pairs of S' compared at once; threshold from their counts; k representatives elected."""
    t = len(Sp)
    layout = reorganize_nbr(cluster, g, Sp, name="layout:S'")
    copies = copy_nbr(cluster, layout, t, name="layout:S'xS'")
    ii, jj = np.triu_indices(t, 1)
    # pair (i, j): copy j of member i against copy i of member j
    counts = compare_grp(cluster, copies, jj * t + ii, copies, ii * t + jj)
    cluster.charge("converge_max", max(1, len(counts)), cluster.config.c_ps, [copies.name])
    thr = threshold_from_values(counts, g.N, mode)
    cluster.broadcast(float(thr.delta), machines=np.nonzero(cluster.resident)[0].tolist())
    cluster.release(copies.name, layout.name)
    if thr.delta <= 0:
        raise RecoveryFailure("compute_rep", "threshold is not positive (graph too sparse for this detector)",
                              delta_prime=thr.delta_prime, delta=thr.delta)
    cn = np.zeros((t, t), dtype=np.int64)
    cn[ii, jj] = counts
    cn[jj, ii] = counts
    labelsets = [[i] + np.nonzero(cn[i] >= thr.delta)[0].tolist() for i in range(t)]
    _, reps = representative_k(cluster, labelsets, k, name="S'")
    return RepResult(Sp.members[reps], thr, Sp, cn)


def compute_subcluster(cluster: ClusterState, g: Graph, S: SampledSet, reps, delta: float):
    """Label each u in S with the first representative it shares >= delta neighbours with.

    Returns (labels over S, the layout of S, number of conflicts).
    """
    reps = np.asarray(reps, dtype=np.int64)
    k = len(reps)
    nS = len(S)
    layout = reorganize_nbr(cluster, g, S, name="layout:S")
    rep_set = SampledSet.from_members(reps, g)
    rep_layout = reorganize_nbr(cluster, g, rep_set, name="layout:R")
    copies_s = copy_nbr(cluster, layout, k, name="layout:Sxk")
    copies_r = copy_nbr(cluster, rep_layout, nS, name="layout:RxS")
    ui, rj = np.divmod(np.arange(nS * k), k)
    counts = compare_grp(cluster, copies_s, rj * nS + ui, copies_r, ui * k + rj).reshape(nS, k)
    cluster.release(copies_s.name, copies_r.name, rep_layout.name)
    hit = counts >= delta
    conflicts = int((hit.sum(axis=1) > 1).sum())
    unlabeled = ~hit.any(axis=1)
    cluster.charge("label_subcluster", nS, 1, [layout.name], rounds=1)
    if unlabeled.any():
        raise RecoveryFailure("compute_subcluster", f"{int(unlabeled.sum())} members match no representative",
                              unlabeled=int(unlabeled.sum()), conflicts=conflicts)
    labels = np.argmax(hit, axis=1).astype(np.int64)
    return labels, layout, conflicts


def compute_cluster(cluster: ClusterState, g: Graph, S: SampledSet, labels, layout, k: int,
                    target: float) -> np.ndarray:
    """Balance S's sub-clusters, then label V minus S by the heaviest edge count."""
    xi_cap = trim_size(target, np.bincount(labels, minlength=k)[:k].clip(min=1))
    keep, xi = even_cluster(cluster, labels, k, target=xi_cap, name="layout:S")
    layout.active = keep
    best, _ = compare_cut(cluster, layout, np.where(keep, labels, -1), k)
    out = best.copy()
    out[S.members] = labels
    return out


def mpc_comm_nbr(cluster: ClusterState, g: Graph, k: int, seed: int,
                 cfg: CommNbrConfig | None = None) -> Clustering:
    cfg = cfg or CommNbrConfig()
    if "edges" not in cluster.placements:
        raise ParameterError("edges must be distributed before running")
    if "vertices" not in cluster.placements:
        cluster.allocate("vertices", 2 * g.N)
    sz = sample_sizes(g, k, cfg)
    # the leader learns the lowest-id degree and tells everyone
    cluster.broadcast(sz["d"], machines=np.nonzero(cluster.resident)[0].tolist())
    c_sel = cluster.config.c_sel
    if c_sel != cfg.c_sel:
        raise ParameterError("c_sel of the fleet and of the algorithm must agree")
    Sp = random_set(cluster, g, sz["S_rep"] / c_sel, seed, TAG_SPRIME, name="S'")
    S = random_set(cluster, g, sz["S"] / c_sel, seed, TAG_S, name="S")
    rep = compute_rep(cluster, g, Sp, k, cfg.threshold_mode)
    labels_s, layout, conflicts = compute_subcluster(cluster, g, S, rep.reps, rep.threshold.delta)
    labels = compute_cluster(cluster, g, S, labels_s, layout, k, sz["trim"])
    cluster.release(layout.name)
    prov = {"algorithm": "mpc-commnbr", "seed": seed, "delta": rep.threshold.delta,
            "delta_prime": rep.threshold.delta_prime, "S": len(S), "S_rep": len(Sp),
            "conflicts": conflicts}
    return Clustering(canonical_labels(labels), prov)
