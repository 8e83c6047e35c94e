"""Single-machine reference algorithms and exact dense oracles.

`comm_nbr` clusters by counting common neighbours: it samples a vertex set S,
learns a threshold from a small sample of pairs, peels S into sub-clusters,
and assigns the remaining vertices by majority of edges into trimmed
sub-clusters. `power_iteration` compares rows of (A - qJ)^r instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ParameterError, RecoveryFailure
from .graph import Graph
from .ops import TAG_S, TAG_SPRIME, sample_with_retry


@dataclass
class Clustering:
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def canonical(self) -> "Clustering":
        """Relabel clusters 0, 1, ... in order of their lowest vertex id."""
        return Clustering(canonical_labels(self.labels), dict(self.provenance))

    @property
    def n_clusters(self) -> int:
        return len(np.unique(self.labels))

    def __eq__(self, other):
        return isinstance(other, Clustering) and np.array_equal(self.labels, other.labels)


def canonical_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = {int(labels[first[i]]): rank for rank, i in enumerate(order)}
    return np.array([remap[int(x)] for x in labels], dtype=np.int64)


@dataclass
class CommNbrConfig:
    """Constants of the common-neighbour algorithms."""
    c_sample: float = 21.0     # |S| = c_sample * n k^2 ln N / d
    c_trim: float = 20.0       # trimmed sub-cluster size c_trim * n k^2 ln N / d
    c_rep: float = 2.0         # |S'| = c_rep * k ln N
    threshold_mode: str = "formula"   # "formula": D' - 9 sqrt(D' ln N); "gap": two-group split
    c_sel: int = 20
    max_retries: int = 16

    def __post_init__(self):
        if self.threshold_mode not in ("formula", "gap"):
            raise ParameterError(f"threshold_mode must be 'formula' or 'gap', got {self.threshold_mode!r}")


def sample_sizes(g: Graph, k: int, cfg: CommNbrConfig) -> dict:
    """Expected sizes of S, S' and the trim target for a graph."""
    N = g.N
    n = N // k
    d = int(g.degrees[0]) if N else 0
    if d == 0:
        raise RecoveryFailure("sample_size", "the lowest-id vertex is isolated; sample size undefined")
    lnN = math.log(N)
    size_s = cfg.c_sample * n * k * k * lnN / d
    trim = cfg.c_trim * n * k * k * lnN / d
    size_rep = cfg.c_rep * k * lnN
    return {"d": d, "S": size_s, "trim": trim, "S_rep": min(size_rep, N), "clamped": size_s >= N}


def draw_samples(g: Graph, k: int, seed: int, cfg: CommNbrConfig) -> tuple[np.ndarray, np.ndarray]:
    """The S and S' samples used by both the sequential and the simulated runs."""
    sz = sample_sizes(g, k, cfg)
    S, _ = sample_with_retry(g.N, sz["S"], seed, TAG_S, sz["S"] / (2 * cfg.c_sel), 2 * sz["S"],
                             cfg.max_retries)
    Sp, _ = sample_with_retry(g.N, sz["S_rep"], seed, TAG_SPRIME, sz["S_rep"] / (2 * cfg.c_sel),
                              2 * sz["S_rep"], cfg.max_retries)
    return S, Sp


@dataclass
class ThresholdDelta:
    delta_prime: float
    delta: float
    mode: str = "formula"
    values: np.ndarray | None = field(default=None, repr=False)


def formula_delta(delta_prime: float, N: int) -> float:
    return delta_prime - 9.0 * math.sqrt(delta_prime * math.log(N))


def split_threshold(values) -> float:
    """Data-driven common-neighbour threshold.

    Split the sorted values into the two groups with least within-group sum of
    squares, then return the point lying the same number of standard deviations
    from both group means.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size < 2 or v[0] == v[-1]:
        return float(v[-1]) if v.size else 0.0
    csum = np.cumsum(v)
    csq = np.cumsum(v * v)
    n = v.size
    i = np.arange(1, n)
    left_sse = csq[i - 1] - csum[i - 1] ** 2 / i
    right_sse = (csq[-1] - csq[i - 1]) - (csum[-1] - csum[i - 1]) ** 2 / (n - i)
    cut = int(np.argmin(left_sse + right_sse)) + 1
    lo, hi = v[:cut], v[cut:]
    mu_lo, mu_hi = lo.mean(), hi.mean()
    sd_lo, sd_hi = lo.std(), hi.std()
    if sd_lo + sd_hi == 0:
        return float((mu_lo + mu_hi) / 2)
    return float((mu_lo * sd_hi + mu_hi * sd_lo) / (sd_lo + sd_hi))


def threshold_from_values(values, N: int, mode: str = "formula") -> ThresholdDelta:
    values = np.asarray(values)
    dp = float(values.max()) if values.size else 0.0
    delta = formula_delta(dp, N) if mode == "formula" else split_threshold(values)
    return ThresholdDelta(dp, delta, mode, values)


def common_neighbors(g: Graph, us, vs=None) -> np.ndarray:
    """Matrix of |N(u) & N(v)| for u in us, v in vs (exact; float32 BLAS on 0/1 rows)."""
    A = g.adjacency(dtype=np.float32)
    left = A[np.asarray(us)]
    right = left if vs is None else A[np.asarray(vs)]
    return np.rint(left @ right.T).astype(np.int64)


def compute_del(g: Graph, k: int, seed: int, cfg: CommNbrConfig | None = None,
                members=None) -> ThresholdDelta:
    """Threshold from all pairwise common-neighbour counts of a Theta(k ln N) sample."""
    cfg = cfg or CommNbrConfig()
    if members is None:
        _, members = draw_samples(g, k, seed, cfg)
    members = np.asarray(members)
    cn = common_neighbors(g, members)
    iu = np.triu_indices(len(members), 1)
    thr = threshold_from_values(cn[iu], g.N, cfg.threshold_mode)
    if thr.delta <= 0:
        raise RecoveryFailure("compute_del", "threshold is not positive (graph too sparse for this detector)",
                              delta_prime=thr.delta_prime, delta=thr.delta)
    return thr


def compcom_nbr(S, g: Graph, delta: float) -> list[np.ndarray]:
    """Greedy peeling: the lowest remaining id gathers every u with count >= delta."""
    S = np.asarray(S, dtype=np.int64)
    cn = common_neighbors(g, S)
    remaining = np.ones(len(S), dtype=bool)
    groups = []
    while remaining.any():
        a = int(np.nonzero(remaining)[0][0])
        grp = remaining & (cn[a] >= delta)
        grp[a] = True
        groups.append(S[grp])
        remaining &= ~grp
    return groups


def trim_size(target: float, sizes) -> int:
    return max(1, min(int(math.floor(target)), int(min(sizes))))


def comm_nbr(g: Graph, k: int, seed: int, cfg: CommNbrConfig | None = None,
             samples=None) -> Clustering:
    cfg = cfg or CommNbrConfig()
    sz = sample_sizes(g, k, cfg)
    S, Sp = samples if samples is not None else draw_samples(g, k, seed, cfg)
    thr = compute_del(g, k, seed, cfg, members=Sp)
    groups = compcom_nbr(S, g, thr.delta)
    if len(groups) != k:
        raise RecoveryFailure("compcom_nbr", f"{len(groups)} groups formed, expected {k}",
                              sizes=[len(x) for x in groups], delta=thr.delta)
    t = trim_size(sz["trim"], [len(x) for x in groups])
    labels = np.full(g.N, -1, dtype=np.int64)
    trimmed = []
    for i, grp in enumerate(groups):
        labels[grp] = i
        trimmed.append(np.sort(grp)[:t])
    rest = np.nonzero(labels < 0)[0]
    if rest.size:
        A = g.adjacency(dtype=np.float32)
        counts = np.stack([A[np.ix_(rest, c)].sum(axis=1) for c in trimmed])
        labels[rest] = np.argmax(counts, axis=0)
    prov = {"algorithm": "commnbr", "seed": seed, "delta": thr.delta, "delta_prime": thr.delta_prime,
            "S": len(S), "S_rep": len(Sp), "trim": t, "clamped": sz["clamped"]}
    return Clustering(canonical_labels(labels), prov)


# ---- power iteration --------------------------------------------------------

@dataclass
class PowerThreshold:
    mode: str = "gap"          # "gap" or "formula"
    C: float = 1.0
    value: float | None = None  # fixed threshold; overrides both modes when set

    def __post_init__(self):
        if self.mode not in ("gap", "formula"):
            raise ParameterError(f"threshold mode must be 'gap' or 'formula', got {self.mode!r}")


def formula_power_threshold(n: int, k: int, p: float, q: float, r: int, C: float = 1.0) -> float:
    N = n * k
    return C * math.sqrt(k) * math.sqrt(p * (1 - q)) * math.log(N) ** 7 * (p - q) ** (r - 1) * n ** (r - 1)


def gap_threshold(distances) -> float:
    """Geometric mean of the adjacent sorted pair with the largest ratio.

    Zero distances are ignored. With fewer than two positive values the
    largest distance is returned, so every vertex joins the anchor.
    """
    d = np.sort(np.asarray(distances, dtype=np.float64))
    pos = d[d > 0]
    if pos.size < 2:
        return float(d[-1]) if d.size else 0.0
    ratios = pos[1:] / pos[:-1]
    i = int(np.argmax(ratios))
    return float(math.sqrt(pos[i] * pos[i + 1]))


def as_rational(q) -> Fraction:
    """Exact rational for q; floats go through their shortest decimal repr (0.1 -> 1/10)."""
    if isinstance(q, Fraction):
        return q
    if isinstance(q, int):
        return Fraction(q)
    return Fraction(repr(float(q)))


def power_rows(g: Graph, q, r: int) -> np.ndarray:
    B = g.adjacency(dtype=np.float64) - float(q)
    return np.linalg.matrix_power(B, r)


def power_iteration(g: Graph, k: int, r: int, q, threshold: PowerThreshold | None = None,
                    p: float | None = None) -> Clustering:
    threshold = threshold or PowerThreshold()
    if r < 1:
        raise ParameterError("r must be >= 1")
    Br = power_rows(g, q, r)
    N = g.N
    active = np.ones(N, dtype=bool)
    labels = np.full(N, -1, dtype=np.int64)
    delta = threshold.value
    if delta is None and threshold.mode == "formula":
        if p is None:
            raise ParameterError("formula threshold needs p")
        delta = formula_power_threshold(N // k, k, p, float(q), r, threshold.C)
    anchor_dist = None
    g_id = 0
    while active.any():
        v = int(np.nonzero(active)[0][0])
        W = np.nonzero(active)[0]
        dist = np.linalg.norm(Br[W] - Br[v], axis=1)
        if delta is None:
            others = dist[W != v]
            delta = gap_threshold(others)
        if anchor_dist is None:
            anchor_dist = np.linalg.norm(Br - Br[v], axis=1)
        grp = W[dist <= delta]
        labels[grp] = g_id
        active[grp] = False
        active[v] = False
        labels[v] = g_id
        g_id += 1
    if g_id != k:
        raise RecoveryFailure("peel", f"{g_id} groups formed, expected {k}", delta=delta, groups=g_id)
    prov = {"algorithm": "power", "r": r, "delta": delta, "mode": threshold.mode}
    return Clustering(labels, prov)


def anchor_separation(g: Graph, truth, q, r: int, anchor: int = 0) -> tuple[float, float]:
    """(max same-cluster, min cross-cluster) distance from the anchor in B^r row space."""
    Br = power_rows(g, q, r)
    d = np.linalg.norm(Br - Br[anchor], axis=1)
    truth = np.asarray(truth)
    same = (truth == truth[anchor])
    same[anchor] = False
    return float(d[same].max()) if same.any() else 0.0, float(d[truth != truth[anchor]].min())


# ---- exact oracles -----------------------------------------------------------

def _int_matpow(M: np.ndarray, e: int) -> np.ndarray:
    out = np.identity(M.shape[0], dtype=object)
    for _ in range(e):
        out = out.dot(M)
    return out


def scaled_power(g: Graph, q, r: int) -> tuple[np.ndarray, int]:
    """((b*(A - qJ))^r as exact integers, b) where q = a/b."""
    qf = as_rational(q)
    a, b = qf.numerator, qf.denominator
    A = g.adjacency(dtype=np.int64).astype(object)
    M = A * b - a
    return _int_matpow(M, r), b


def norm_oracle_matrix(g: Graph, q, r: int) -> np.ndarray:
    """All exact squared distances ||B_x^r - B_y^r||^2 (object array of Fractions)."""
    P, b = scaled_power(g, q, r)
    gram = P.dot(P.T)
    diag = np.array([gram[i, i] for i in range(g.N)], dtype=object)
    den = b ** (2 * r)
    out = np.empty((g.N, g.N), dtype=object)
    for x in range(g.N):
        for y in range(g.N):
            out[x, y] = Fraction(diag[x] + diag[y] - 2 * gram[x, y], den)
    return out


def norm_oracle(g: Graph, q, x: int, y: int, r: int) -> Fraction:
    """Exact ||B_x^r - B_y^r||^2 with B = A - qJ, by repeated dense multiplication."""
    P, b = scaled_power(g, q, r)
    diff = P[x] - P[y]
    return Fraction(int(sum(int(t) * int(t) for t in diff)), b ** (2 * r))


def walk_oracle(g: Graph, steps: int) -> np.ndarray:
    """Dense exact A^steps."""
    return _int_matpow(g.adjacency(dtype=np.int64).astype(object), steps)
