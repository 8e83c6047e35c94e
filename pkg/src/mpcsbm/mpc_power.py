"""Power-iteration clustering on the simulated fleet, with exact walk arithmetic.

The squared distance between rows x and y of B^r, B = A - qJ, is

    T(x,x) - T(x,y) - T(y,x) + T(y,y),    T(a,b) = 1_a^T (A - qJ)^{2r} 1_b.

Expanding (A - qJ)^{2r} over all 2^{2r} words in {A, -qJ} and collapsing
J^j = N^{j-1} J and J A^i J = C_i J leaves

    T(a,b) = (A^{2r})_{a,b} + sum_{i,t} X[i,t] * a_i[a] * a_t[b],

where a_i = A^i 1 is the walk table and C_i its column total. Walk counts
come from neighbour-sum passes and the (A^{2r})_{a,.} rows from token
diffusion, so every quantity is an exact integer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cluster import ClusterState, copy_sets, max_int_words, sort_records, visit_neighbors
from .errors import CapacityError, ParameterError, RecoveryFailure
from .graph import Graph
from .ops import TAG_SK
from .sequential import Clustering, PowerThreshold, as_rational, canonical_labels, formula_power_threshold, gap_threshold

R_MAX = 10


def _exact_spmv(g: Graph, vec: np.ndarray) -> np.ndarray:
    """A @ vec on exact integers; int64 while provably safe, Python ints otherwise."""
    if vec.dtype != object:
        top = int(np.abs(vec).max()) if vec.size else 0
        if top * max(1, int(g.degrees.max(initial=0))) < 2 ** 62:
            out = np.zeros(g.N, dtype=np.int64)
            np.add.at(out, np.repeat(np.arange(g.N), g.degrees), vec[g.indices])
            return out
        vec = vec.astype(object)
    out = np.zeros(g.N, dtype=object)
    nz = g.degrees > 0
    if g.indices.size:
        out[nz] = np.add.reduceat(vec[g.indices], g.indptr[:-1][nz])
    return out


def _as_ints(vec) -> list[int]:
    return [int(x) for x in vec]


@dataclass
class WalkTable:
    a: list           # a[i] : per-vertex walk counts of length i (numpy int64 or object)
    C: list[int]      # C[i] = sum_x a[i][x]

    @property
    def steps(self) -> int:
        return len(self.a) - 1


def _items_to_machines(cluster: ClusterState, name: str, n_items: int) -> np.ndarray:
    """Machine of each item when a data set is laid out contiguously over its placement."""
    per = cluster.placements[name]
    w = max(1, int(per.sum()) // max(1, n_items))
    ends = np.cumsum(per)
    starts = np.arange(n_items, dtype=np.int64) * w
    return np.minimum(np.searchsorted(ends, starts, side="right"), cluster.M - 1)


def aix_sum(cluster: ClusterState, g: Graph, r: int, name: str = "walks") -> WalkTable:
    """Walk table a_0..a_{2r} by 2r neighbour-sum passes; totals by converge-cast."""
    a = [np.ones(g.N, dtype=np.int64)]
    for _ in range(2 * r):
        nxt = _exact_spmv(g, a[-1])
        visit_neighbors(cluster, g, a[-1], "sum", 0, primitive="aix_sum")
        a.append(nxt)
    limbs = max(max_int_words(x, cluster.config.word_bits) for x in a)
    cluster.allocate(name, g.N * (2 * r + 1) * limbs)
    owner = _items_to_machines(cluster, name, g.N)
    machines = np.unique(owner).tolist()
    partial = {mach: [sum(_as_ints(x[owner == mach])) for x in a] for mach in machines}
    # ship the 2r+1 totals in chunks narrow enough to land on the fullest participant
    room = int((cluster.s - cluster.resident[machines]).min())
    width = max(cluster.words(v) for vals in partial.values() for v in vals)
    step = max(1, room // width)
    totals: list = []
    for lo in range(0, len(a), step):
        chunk = {mach: tuple(vals[lo:lo + step]) for mach, vals in partial.items()}
        totals += cluster.converge_cast(chunk, lambda u, v: tuple(p + q for p, q in zip(u, v)),
                                        leader=int(owner[0]), primitive="aix_sum_total")
    return WalkTable(a, totals)


def compute_arx(cluster: ClusterState, g: Graph, x: int, steps: int) -> np.ndarray:
    """Row (A^steps)_{x,.} by token diffusion from the indicator of x."""
    if not 0 <= x < g.N:
        raise ParameterError(f"vertex {x} out of range")
    vec = np.zeros(g.N, dtype=np.int64)
    vec[x] = 1
    for _ in range(steps):
        visit_neighbors(cluster, g, vec, "sum", 0, primitive="compute_arx")
        vec = _exact_spmv(g, vec)
    return vec


# ---- expansion ------------------------------------------------------------

@dataclass
class Expansion:
    r: int
    q: Fraction
    N: int
    X: dict            # (i1, it) -> Fraction
    strings: dict      # (i1, it) -> number of words collapsed into that group
    pure: int = 1      # the all-A word

    def matrix(self) -> list[list[Fraction]]:
        n = 2 * self.r + 1
        M = [[Fraction(0)] * n for _ in range(n)]
        for (i, t), v in self.X.items():
            M[i][t] = v
        return M


def expansion_coefficients(r: int, q, N: int, C) -> Expansion:
    """Group all 2^{2r} words over {A, -qJ} by (leading A-run, trailing A-run).

    A word A^{i1} J^{j1} A^{i2} ... J^{j_{t-1}} A^{it} collapses to
    (-q)^{sum j} N^{sum (j-1)} prod_{middle} C_{i_l} * A^{i1} J A^{it}.
    """
    if r > R_MAX:
        raise ParameterError(f"r={r} exceeds the enumeration limit r_max={R_MAX}")
    if r < 1:
        raise ParameterError("r must be >= 1")
    q = as_rational(q)
    L = 2 * r
    C = [int(c) for c in C]
    X: dict = {}
    strings: dict = {}
    pure = 0
    for word in range(1 << L):
        if word == 0:
            pure += 1
            continue
        # bit l set means position l is a J block
        runs = []  # alternating (is_J, length)
        cur, length = word & 1, 0
        for l in range(L):
            b = (word >> l) & 1
            if b == cur:
                length += 1
            else:
                runs.append((cur, length))
                cur, length = b, 1
        runs.append((cur, length))
        i1 = runs[0][1] if runs[0][0] == 0 else 0
        it = runs[-1][1] if runs[-1][0] == 0 else 0
        inner = runs[(1 if i1 else 0):(len(runs) - 1 if it else len(runs))]
        coeff = Fraction(1)
        for is_j, ln in inner:
            if is_j:
                coeff *= (-q) ** ln * Fraction(N) ** (ln - 1)
            else:
                coeff *= C[ln]
        key = (i1, it)
        X[key] = X.get(key, Fraction(0)) + coeff
        strings[key] = strings.get(key, 0) + 1
    return Expansion(r, q, N, X, strings, pure)


# ---- exact norms ------------------------------------------------------------

class NormTables:
    """Scaled-integer tables so that every norm is one exact integer divided by D.

    D = b^{2r} for q = a/b; all X[i,t] * D are integers.
    """

    def __init__(self, walks: WalkTable, expansion: Expansion):
        self.walks = walks
        self.expansion = expansion
        r = expansion.r
        self.D = expansion.q.denominator ** (2 * r)
        n = 2 * r + 1
        self.Xi = [[0] * n for _ in range(n)]
        for (i, t), v in expansion.X.items():
            scaled = v * self.D
            assert scaled.denominator == 1
            self.Xi[i][t] = int(scaled)
        self.a = [np.asarray(_as_ints(x), dtype=object) for x in walks.a]
        # quadratic self term sum_{i,t} X[i,t] a_i[u] a_t[u], per vertex
        N = len(self.a[0])
        self.selfq = np.zeros(N, dtype=object)
        self.selfq[:] = 0
        for i in range(n):
            row = np.zeros(N, dtype=object)
            row[:] = 0
            for t in range(n):
                if self.Xi[i][t]:
                    row = row + self.a[t] * self.Xi[i][t]
            self.selfq = self.selfq + self.a[i] * row

    def coupling(self, y: int) -> list[int]:
        """g_i = sum_t X[i,t] a_t[y] (scaled by D)."""
        n = len(self.a)
        return [sum(self.Xi[i][t] * int(self.a[t][y]) for t in range(n)) for i in range(n)]

    def cross(self, y: int, arx_y) -> np.ndarray:
        """D * T(u, y) for every u, given the row (A^{2r})_{y,.}."""
        gvec = self.coupling(y)
        out = np.asarray(_as_ints(arx_y), dtype=object) * self.D
        for i, gi in enumerate(gvec):
            if gi:
                out = out + self.a[i] * gi
        return out

    def self_term(self, u: int, arx_uu: int) -> int:
        """D * T(u, u), given (A^{2r})_{u,u}."""
        return int(arx_uu) * self.D + int(self.selfq[u])


def compute_norm(cluster: ClusterState, tables: NormTables, x: int, y: int, arx_x, arx_y) -> Fraction:
    """Exact ||B_x^r - B_y^r||^2 from the walk table, the expansion and two diffusion rows."""
    cluster.charge("compute_norm", 1, 1, ["walks"], rounds=1)
    if x == y:
        return Fraction(0)
    D = tables.D
    txx = tables.self_term(x, arx_x[x])
    tyy = tables.self_term(y, arx_y[y])
    gx = tables.coupling(y)
    txy = int(arx_y[x]) * D + sum(int(tables.a[i][x]) * gi for i, gi in enumerate(gx))
    gy = tables.coupling(x)
    tyx = int(arx_x[y]) * D + sum(int(tables.a[i][y]) * gi for i, gi in enumerate(gy))
    return Fraction(txx - txy - tyx + tyy, D)


# ---- fleet helpers ------------------------------------------------------------

def is_active(cluster: ClusterState, flags, name: str = "active") -> bool:
    """True iff any vertex is still active (OR-fold by converge-cast to the leader)."""
    return _active_probe(cluster, flags, name)[0]


def _active_probe(cluster: ClusterState, flags, name: str = "active") -> tuple[bool, int]:
    flags = np.asarray(flags, dtype=bool)
    if name not in cluster.placements:
        cluster.allocate(name, len(flags))
    owner = _items_to_machines(cluster, name, len(flags))
    big = len(flags)
    partial = {}
    for mach in np.unique(owner).tolist():
        sel = np.nonzero((owner == mach) & flags)[0]
        partial[mach] = (bool(sel.size), int(sel[0]) if sel.size else big)
    res = cluster.converge_cast(partial, lambda u, v: (u[0] or v[0], min(u[1], v[1])),
                                leader=int(owner[0]), primitive="is_active")
    return res[0], res[1]


def _holders(cluster: ClusterState) -> list[int]:
    return np.nonzero(cluster.resident)[0].tolist()


def share(cluster: ClusterState, value, target: str = "vertices", primitive: str = "share") -> int:
    """Make `value` available on every machine holding `target`.

    Narrow values travel down a broadcast tree. Values too wide for one
    message are replicated with copy_sets, one copy per target machine.
    Returns rounds used.
    """
    before = cluster.round
    machines = np.nonzero(cluster.holding(target))[0]
    w = cluster.words(value)
    free = int((cluster.s - cluster.resident[machines]).min()) if machines.size else cluster.s
    if w <= free // 2:
        cluster.broadcast(value, origin=int(machines[0]) if machines.size else 0,
                          machines=machines.tolist(), primitive=primitive)
    else:
        cluster.allocate(f"{primitive}:src", w)
        copy_sets(cluster, [(f"{primitive}:src", w)], [max(1, machines.size)], f"{primitive}:copies")
        cluster.release(f"{primitive}:src", f"{primitive}:copies")
    return cluster.round - before


class DiagonalWalks:
    """Closed-walk counts (A^{2r})_{u,u}, the anchor-free part of every self term.

    Values are computed once on the host; the fleet pays for them through
    `parallel_diffusions` each time the algorithm asks for them.
    """

    def __init__(self, g: Graph, steps: int):
        half = steps // 2
        rows = np.identity(g.N, dtype=np.int64)
        P = rows
        for _ in range(half):
            P = _dense_step(g, P)
        if steps % 2:
            Q = _dense_step(g, P)
            self.values = np.array([sum(int(a) * int(b) for a, b in zip(P[u], Q[u])) for u in range(g.N)],
                                   dtype=object)
        else:
            self.values = np.array([sum(int(a) * int(a) for a in P[u]) for u in range(g.N)], dtype=object)


def _dense_step(g: Graph, P: np.ndarray) -> np.ndarray:
    """A @ P column-block wise, staying exact."""
    if P.dtype != object and int(np.abs(P).max()) * max(1, int(g.degrees.max(initial=0))) < 2 ** 62:
        A = g.adjacency(dtype=np.int64)
        return A @ P
    A = g.adjacency(dtype=np.int64).astype(object)
    return A.dot(P.astype(object))


def parallel_diffusions(cluster: ClusterState, g: Graph, count: int, steps: int, value_limbs: int,
                        name: str = "diffusion") -> int:
    """Bill `count` independent token diffusions of `steps` passes each.

    Each diffusion needs its own copy of the edge records plus a value slot per
    vertex. As many copies as the space budget and the fleet allow run side by
    side; the rest follow in sequenced batches. Returns the number of batches.
    """
    if count <= 0:
        return 0
    copy_words = 2 * g.m + g.N * value_limbs
    room = cluster.M * (cluster.s // 2) - cluster.total_resident
    if cluster.budget is not None:
        room = min(room, int(cluster.budget) - cluster.total_resident)
    width = min(count, room // copy_words)
    if width < 1:
        raise CapacityError(f"no room for a single diffusion copy of {copy_words} words",
                            shortfall=copy_words - room)
    batches = -(-count // width)
    copy_sets(cluster, [("edges", copy_words)], [width], name)
    held = cluster.holding(name)
    for _ in range(batches * steps):
        cluster.charge("diffusion", g.N, cluster.config.c_nbr, traffic=held)
    cluster.release(name)
    return batches


def _fit_gap_on_fleet(cluster: ClusterState, dist2: dict, N: int) -> float:
    """Sort distances, scan adjacent ratios, pick the largest, broadcast the threshold."""
    cluster.allocate("dist", N)
    vals = np.array([math.sqrt(float(v)) for v in dist2.values()], dtype=np.float64)
    sort_records(cluster, "dist", vals)
    cluster.charge("gap_scan", 1, 1, ["dist"], rounds=1)
    cluster.charge("gap_max", N, cluster.config.c_ps, ["dist"])
    delta = gap_threshold(vals)
    cluster.broadcast(delta, machines=_holders(cluster))
    cluster.release("dist")
    return delta


def _threshold_value(threshold: PowerThreshold, N: int, k: int, r: int, q, p):
    if threshold.value is not None:
        return threshold.value
    if threshold.mode == "formula":
        if p is None:
            raise ParameterError("formula threshold needs p")
        return formula_power_threshold(N // k, k, p, float(q), r, threshold.C)
    return None


@dataclass
class PowerRun:
    clustering: Clustering
    delta: float
    near_threshold: int = 0
    diagnostics: dict = field(default_factory=dict)


def _prepare(cluster, g, r, q):
    if "edges" not in cluster.placements:
        raise ParameterError("edges must be distributed before running")
    if "vertices" not in cluster.placements:
        cluster.allocate("vertices", 2 * g.N)
    walks = aix_sum(cluster, g, r)
    exp = expansion_coefficients(r, q, g.N, walks.C)
    tables = NormTables(walks, exp)
    share(cluster, tuple(v for row in exp.matrix() for v in row), primitive="share_expansion")
    return walks, tables


def _near(d2: Fraction, delta: float) -> bool:
    if delta <= 0:
        return False
    return abs(math.sqrt(float(d2)) - delta) <= 1e-9 * delta


def mpc_power_iteration(cluster: ClusterState, g: Graph, k: int, r: int, q,
                        threshold: PowerThreshold | None = None, p: float | None = None,
                        diag: DiagonalWalks | None = None) -> Clustering:
    return mpc_power_iteration_run(cluster, g, k, r, q, threshold, p, diag).clustering


def mpc_power_iteration_run(cluster, g, k, r, q, threshold=None, p=None, diag=None) -> PowerRun:
    """Peel clusters one anchor at a time (lowest active id first)."""
    threshold = threshold or PowerThreshold()
    if r < 1:
        raise ParameterError("r must be >= 1")
    q = as_rational(q)
    walks, tables = _prepare(cluster, g, r, q)
    diag = diag or DiagonalWalks(g, 2 * r)
    limbs = max(1, max_int_words(diag.values, cluster.config.word_bits))
    delta = _threshold_value(threshold, g.N, k, r, q, p)
    active = np.ones(g.N, dtype=bool)
    labels = np.full(g.N, -1, dtype=np.int64)
    near = 0
    gid = 0
    while True:
        any_active, v = _active_probe(cluster, active)
        if not any_active:
            break
        cluster.broadcast(v, machines=_holders(cluster))
        arx_v = compute_arx(cluster, g, v, 2 * r)
        W = np.nonzero(active)[0]
        # every active u needs its own closed-walk count for T(u,u)
        parallel_diffusions(cluster, g, len(W), 2 * r, limbs)
        share(cluster, tuple(tables.coupling(v)) + (tables.self_term(v, diag.values[v]),),
              primitive="share_coupling")
        cross = tables.cross(v, arx_v)
        tvv = tables.self_term(v, diag.values[v])
        cluster.charge("compute_norm", 1, 1, ["vertices"], rounds=1)
        dist2 = {}
        for u in W.tolist():
            tuu = tables.self_term(u, diag.values[u])
            dist2[u] = Fraction(tuu - 2 * int(cross[u]) + tvv, tables.D)
        if delta is None:
            delta = _fit_gap_on_fleet(cluster, {u: d for u, d in dist2.items() if u != v}, g.N)
        lim = Fraction(delta) ** 2
        grp = [u for u in W.tolist() if dist2[u] <= lim or u == v]
        near += sum(_near(dist2[u], delta) for u in W.tolist())
        labels[grp] = gid
        active[grp] = False
        gid += 1
    if gid != k:
        raise RecoveryFailure("peel", f"{gid} groups formed, expected {k}", delta=delta, groups=gid)
    prov = {"algorithm": "mpc-power", "r": r, "delta": delta, "near_threshold": near}
    return PowerRun(Clustering(labels, prov), delta, near)


def mpc_power_iteration_parallel(cluster: ClusterState, g: Graph, k: int, r: int, q,
                                 threshold: PowerThreshold | None = None, p: float | None = None,
                                 seed: int = 0, c_par: float = 2.0,
                                 diag: DiagonalWalks | None = None) -> Clustering:
    """All anchors of a Theta(k ln N) sample at once; labels by minimum matching sample index."""
    threshold = threshold or PowerThreshold()
    q = as_rational(q)
    cfg = cluster.config
    walks, tables = _prepare(cluster, g, r, q)
    diag = diag or DiagonalWalks(g, 2 * r)
    limbs = max(1, max_int_words(diag.values, cfg.word_bits))
    # closed-walk counts of every vertex, once
    parallel_diffusions(cluster, g, g.N, 2 * r, limbs, name="diffusion:diag")
    expected = min(g.N, c_par * k * math.log(g.N))
    fixed = _threshold_value(threshold, g.N, k, r, q, p)
    from .ops import random_set
    for attempt in range(cfg.max_retries + 1):
        members = random_set(cluster, g, expected / cfg.c_sel, seed + attempt, TAG_SK, name="S_k").members
        # one diffusion per sample member, side by side
        parallel_diffusions(cluster, g, len(members), 2 * r, limbs, name="diffusion:S_k")
        rows = {}
        for u in members.tolist():
            vec = np.zeros(g.N, dtype=np.int64)
            vec[u] = 1
            for _ in range(2 * r):
                vec = _exact_spmv(g, vec)
            rows[u] = vec
        share(cluster, tuple(c for u in members.tolist() for c in tables.coupling(u)),
              primitive="share_coupling")
        cluster.charge("compute_norm", 1, 1, ["vertices"], rounds=1)
        selfterms = np.array([tables.self_term(x, diag.values[x]) for x in range(g.N)], dtype=object)
        d2 = {}
        for u in members.tolist():
            cross = tables.cross(u, rows[u])
            d2[u] = (selfterms - 2 * cross + selfterms[u])
        delta = fixed
        if delta is None:
            u0 = int(members[0])
            delta = _fit_gap_on_fleet(
                cluster, {x: Fraction(int(d2[u0][x]), tables.D) for x in range(g.N) if x != u0}, g.N)
        lim = Fraction(delta) ** 2 * tables.D
        labels = np.full(g.N, -1, dtype=np.int64)
        for idx, u in enumerate(members.tolist()):
            hit = np.array([int(x) <= lim for x in d2[u]], dtype=bool)
            hit[u] = True
            labels[(labels < 0) & hit] = idx
        cluster.charge("label_min", len(members) * g.N, cfg.c_ps, ["vertices"])
        cluster.release("S_k")
        if (labels < 0).any():
            raise RecoveryFailure("label", "a vertex matched no sample member", unmatched=int((labels < 0).sum()))
        if len(np.unique(labels)) == k:
            sort_records(cluster, "vertices", labels)
            prov = {"algorithm": "mpc-power-par", "r": r, "delta": delta, "sample": len(members),
                    "attempt": attempt}
            return Clustering(canonical_labels(labels), prov)
        if len(np.unique(labels)) > k:
            raise RecoveryFailure("dedup", f"{len(np.unique(labels))} labels survive, expected {k}")
    raise RecoveryFailure("sample", "a cluster stayed unrepresented in every resample")
