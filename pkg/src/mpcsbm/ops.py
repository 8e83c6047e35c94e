"""Graph operations on the simulated fleet: sampling, neighbour layouts, comparisons.

A NeighborLayout stores, for each member u of a vertex set S, a slab of N bit
slots (slot i set iff i is adjacent to u). Slots are packed `word_bits` to a
word, and every slab uses the same stride, so slot i of any two slabs refers
to the same vertex and two slabs can be intersected word by word.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterState, ceil_log, index_records, prefix_sum, sort_records, visit_neighbors
from .errors import CapacityError, ContractError, ParameterError, RecoveryFailure
from .graph import Graph
from .sbm import stream_uniforms

# stream tags for the counter-based sampler; distinct tags give independent streams
TAG_S = 11
TAG_SPRIME = 12
TAG_SK = 13


def bernoulli_members(N: int, prob: float, seed: int, tag: int) -> np.ndarray:
    """Vertex ids selected independently with probability `prob` (sorted)."""
    if prob >= 1.0:
        return np.arange(N, dtype=np.int64)
    u = stream_uniforms(seed, tag, N)
    return np.nonzero(u < prob)[0].astype(np.int64)


def sample_with_retry(N: int, expected: float, seed: int, tag: int, lo: float, hi: float,
                      retries: int = 16) -> tuple[np.ndarray, int]:
    """Bernoulli sample of expected size `expected`, reseeding (seed + attempt) until lo <= |S| <= hi.

    Shared by the sequential and the simulated algorithms so that equal seeds give
    equal samples. Returns (members, attempt).
    """
    prob = min(1.0, expected / N) if N else 1.0
    for attempt in range(retries + 1):
        members = bernoulli_members(N, prob, seed + attempt, tag)
        if lo <= len(members) <= hi:
            return members, attempt
    raise RecoveryFailure("random_set", f"sample size stayed outside [{lo:.1f}, {hi:.1f}]",
                          expected=expected, retries=retries)


@dataclass
class SampledSet:
    members: np.ndarray          # sorted vertex ids
    index_of: np.ndarray         # vertex -> position in members, -1 if absent
    reference: np.ndarray        # cumulative degrees d(v1), d(v1)+d(v2), ...
    attempt: int = 0

    def __len__(self):
        return len(self.members)

    @classmethod
    def from_members(cls, members, g: Graph, attempt: int = 0) -> "SampledSet":
        members = np.asarray(members, dtype=np.int64)
        index_of = np.full(g.N, -1, dtype=np.int64)
        index_of[members] = np.arange(len(members))
        return cls(members, index_of, np.cumsum(g.degrees), attempt)

    def lookup(self, x: int) -> int:
        """Ind_S(x): position of x in S, or -1."""
        return int(self.index_of[x])


def random_set(cluster: ClusterState, g: Graph, X: float, seed: int, tag: int = TAG_S,
               name: str = "S") -> SampledSet:
    """Select each vertex with probability c_sel*X/N and build the index reference table.

    Rounds: degree pass, prefix sum over degrees (the reference table), indexing
    of the selected members, and one query round. Retries reseed deterministically.
    """
    cfg = cluster.config
    N = g.N
    members, attempt = sample_with_retry(N, cfg.c_sel * X, seed, tag, X / 2, 2 * cfg.c_sel * X,
                                         cfg.max_retries)
    visit_neighbors(cluster, g, np.ones(N, dtype=np.int64), "sum", 0)
    if "vertices" not in cluster.placements:
        cluster.allocate("vertices", 2 * N)
    cluster.allocate(f"{name}:ref", N)
    prefix_sum(cluster, f"{name}:ref", g.degrees)
    cluster.allocate(name, 2 * max(1, len(members)))
    index_records(cluster, name, len(members))
    cluster.charge("random_set_query", 1, 1, [name, "edges"], rounds=1)
    cluster.release(f"{name}:ref")
    return SampledSet.from_members(members, g, attempt)


# ---- neighbour layouts -----------------------------------------------------

def _pack_rows(rows_bool: np.ndarray, word_bits: int) -> np.ndarray:
    """Pack a (r, N) boolean matrix into (r, ceil(N/word_bits)) uint64 words, slot i -> bit i."""
    r, N = rows_bool.shape
    stride_bytes = -(-N // word_bits) * (word_bits // 8)
    packed = np.packbits(rows_bool, axis=1, bitorder="little")
    out = np.zeros((r, stride_bytes), dtype=np.uint8)
    out[:, :packed.shape[1]] = packed
    return out.view(np.uint64) if word_bits == 64 else out


@dataclass
class NeighborLayout:
    N: int
    members: np.ndarray          # vertex id of each base slab
    bits: np.ndarray             # (len(members), stride) packed words
    name: str
    copies: int = 1
    active: np.ndarray = field(default=None)  # tombstones, per base slab

    def __post_init__(self):
        if self.active is None:
            self.active = np.ones(len(self.members), dtype=bool)

    @property
    def stride(self) -> int:
        return self.bits.shape[1]

    @property
    def n_slabs(self) -> int:
        return len(self.members) * self.copies

    def base(self, member_pos: int, copy: int = 0) -> int:
        """Word offset of copy `copy` of member `member_pos`'s slab."""
        return (copy * len(self.members) + member_pos) * self.stride

    def slab_rows(self, slab_ids) -> np.ndarray:
        """Base slab row for each global slab id (copy-major order)."""
        return np.asarray(slab_ids, dtype=np.int64) % len(self.members)

    def unpacked(self) -> np.ndarray:
        b = self.bits.view(np.uint8)
        return np.unpackbits(b, axis=1, bitorder="little")[:, :self.N].astype(bool)

    def slots(self) -> np.ndarray:
        """Global set slots: slab index * N + vertex, for the base copy."""
        r, c = np.nonzero(self.unpacked())
        return r * self.N + c


def _layout_words(n_slabs: int, N: int, word_bits: int) -> int:
    return n_slabs * -(-N // word_bits)


def _check_budget(cluster: ClusterState, words: int, what: str, hint: str = ""):
    if cluster.budget is not None and cluster.total_resident + words > cluster.budget:
        raise CapacityError(
            f"{what} needs {words} words; budget {cluster.budget:.0f} with "
            f"{cluster.total_resident} resident{hint}",
            shortfall=int(cluster.total_resident + words - cluster.budget))


def _build_layout(cluster, g: Graph, members: np.ndarray, name: str) -> NeighborLayout:
    cfg = cluster.config
    rows = np.zeros((len(members), g.N), dtype=bool)
    for r, u in enumerate(members.tolist()):
        rows[r, g.neighbors(u)] = True
    bits = _pack_rows(rows, cfg.word_bits)
    cluster.allocate(name, bits.size)
    # edge records travel to their slot machines, then words are assembled
    cluster.charge("reorganize_nbr", 1, 1, ["edges", name], rounds=2)
    return NeighborLayout(g.N, members, bits, name)


def reorganize_nbr_dense(cluster: ClusterState, g: Graph, name: str = "layout:V") -> NeighborLayout:
    """Layout over all of V: edge (i, j) sets global slots N*i + j and N*j + i."""
    words = _layout_words(g.N, g.N, cluster.config.word_bits)
    _check_budget(cluster, words, "dense neighbour layout", "; use reorganize_nbr on a sample")
    return _build_layout(cluster, g, np.arange(g.N, dtype=np.int64), name)


def reorganize_nbr(cluster: ClusterState, g: Graph, S: SampledSet, name: str = "layout:S") -> NeighborLayout:
    words = _layout_words(len(S), g.N, cluster.config.word_bits)
    _check_budget(cluster, words, f"layout of {len(S)} sampled vertices")
    return _build_layout(cluster, g, S.members, name)


def copy_nbr(cluster: ClusterState, layout: NeighborLayout, t: int, name: str | None = None) -> NeighborLayout:
    """t aligned copies of every slab; copy j of member i starts at base(i, j)."""
    if t < 1:
        raise ParameterError("t must be >= 1")
    name = name or f"{layout.name}x{t}"
    words = layout.bits.size * t
    _check_budget(cluster, words, f"{t} copies of {layout.name}")
    cluster.allocate(name, words)
    cluster.charge("copy_nbr", words, cluster.config.c_copy, [layout.name, name])
    return NeighborLayout(layout.N, layout.members, layout.bits, name, copies=t, active=layout.active)


def compare_grp(cluster: ClusterState, layout_a: NeighborLayout, slabs_a, layout_b: NeighborLayout,
                slabs_b) -> np.ndarray:
    """Intersection sizes |N(a_i) & N(b_i)| for aligned slab pairs.

    One round pairs the slab words; per-slab partial counts are then
    converge-cast (charged as a prefix-sum class reduction).
    """
    if layout_a.stride != layout_b.stride or layout_a.N != layout_b.N:
        raise ContractError("slabs are not aligned: strides or slot ranges differ")
    slabs_a = np.asarray(slabs_a, dtype=np.int64)
    slabs_b = np.asarray(slabs_b, dtype=np.int64)
    if slabs_a.shape != slabs_b.shape:
        raise ContractError("groups must have the same number of slabs")
    names = sorted({layout_a.name, layout_b.name})
    cluster.charge("compare_grp", 1, 1, names, rounds=1)
    cluster.charge("compare_grp_reduce", layout_a.N, cluster.config.c_ps, names)
    ra = layout_a.bits[layout_a.slab_rows(slabs_a)]
    rb = layout_b.bits[layout_b.slab_rows(slabs_b)]
    return np.bitwise_count(ra & rb).sum(axis=1).astype(np.int64)


def even_cluster(cluster: ClusterState, labels, k: int, target: int | None = None,
                 name: str = "S") -> tuple[np.ndarray, int]:
    """Keep the xi lowest-rank members of every label, xi = min label count (capped by target).

    `labels` holds one label in [0, k) per member (or -1 for members already
    inactive). Returns (survivor mask, xi). An absent label is a failure.
    """
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels[labels >= 0], minlength=k)[:k]
    order = sort_records(cluster, name, labels)
    cluster.charge("even_cluster_count", len(labels), cluster.config.c_ps, [name])
    if (counts == 0).any():
        raise RecoveryFailure("even_cluster", "a label has no members",
                              counts=counts.tolist())
    xi = int(counts.min())
    if target is not None:
        xi = min(xi, int(target))
    cluster.charge("even_cluster_min", len(labels), cluster.config.c_ps, [name])
    cluster.broadcast(xi, machines=np.nonzero(cluster.holding(name))[0].tolist())
    keep = np.zeros(len(labels), dtype=bool)
    seen = np.zeros(k, dtype=np.int64)
    for pos in order.tolist():
        lab = labels[pos]
        if lab >= 0 and seen[lab] < xi:
            keep[pos] = True
            seen[lab] += 1
    return keep, xi


def representative_k(cluster: ClusterState, labelsets, k: int, name: str = "S") -> tuple[np.ndarray, np.ndarray]:
    """Each member keeps its minimum label; the first member per label is elected.

    Returns (kept labels, representative member positions ordered by label).
    Fails unless exactly k distinct labels survive.
    """
    kept = np.array([min(ls) if len(ls) else -1 for ls in labelsets], dtype=np.int64)
    order = sort_records(cluster, name, kept)
    cluster.charge("representative_k", len(kept), cluster.config.c_ps, [name])
    reps = []
    last = None
    for pos in order.tolist():
        lab = kept[pos]
        if lab < 0:
            continue
        if lab != last:
            reps.append(pos)
            last = lab
    if len(reps) != k:
        raise RecoveryFailure("representative_k", f"{len(reps)} distinct labels survived, expected {k}",
                              distinct=len(reps))
    return kept, np.array(reps, dtype=np.int64)


def compare_cut(cluster: ClusterState, layout: NeighborLayout, labels, k: int) -> tuple[np.ndarray, np.ndarray]:
    """For every vertex v: (argmax_i n(v, S_i), max count), ties to the smallest label.

    `labels` gives each base slab's sub-cluster (or -1 if tombstoned).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (len(layout.members),):
        raise ContractError("one label per layout member required")
    sort_records(cluster, layout.name, labels)
    cluster.charge("compare_cut_columns", len(labels), cluster.config.c_ps, [layout.name])
    cluster.charge("compare_cut_max", 1, 1, [layout.name], rounds=max(1, ceil_log(k, cluster.s)))
    rows = layout.unpacked()
    counts = np.zeros((k, layout.N), dtype=np.int64)
    for c in range(k):
        sel = (labels == c) & layout.active
        if sel.any():
            counts[c] = rows[sel].sum(axis=0)
    best = np.argmax(counts, axis=0)
    return best.astype(np.int64), counts[best, np.arange(layout.N)]
