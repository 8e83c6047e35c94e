"""Stochastic block model generation, edge placement and regime diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .graph import Graph

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SbmParams:
    n: int  # vertices per cluster
    k: int
    p: float
    q: float
    seed: int = 0

    @property
    def N(self) -> int:
        return self.n * self.k

    def validate(self):
        if self.k < 2:
            raise ParameterError(f"k must be >= 2, got {self.k}")
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class SbmInstance:
    params: SbmParams
    edges: np.ndarray  # (m, 2), u < v, sorted
    truth: np.ndarray  # vertex -> cluster id
    _graph: Graph | None = field(default=None, repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def graph(self) -> Graph:
        if self._graph is None:
            self._graph = Graph(self.N, self.edges)
        return self._graph


def pair_uniforms(seed: int, u: int, count: int) -> np.ndarray:
    """Uniform draws for pairs (u, 0..count-1) from a Philox stream keyed by (seed, u).

    The draw for pair (u, v) is the v-th value of the stream, so it does not
    depend on how many values are requested or in which order rows are visited.
    """
    bitgen = np.random.Philox(key=np.array([seed & _MASK64, u], dtype=np.uint64))
    return np.random.Generator(bitgen).random(count)


def stream_uniforms(seed: int, tag: int, count: int) -> np.ndarray:
    """Uniform stream for auxiliary sampling, keyed by (seed, tag) with tag >= 2**32."""
    return pair_uniforms(seed, (1 << 32) + tag, count)


def generate_sbm(params: SbmParams) -> SbmInstance:
    params.validate()
    N, n = params.N, params.n
    truth = np.repeat(np.arange(params.k, dtype=np.int64), n)
    rows = []
    for u in range(N - 1):
        draws = pair_uniforms(params.seed, u, N)[u + 1:]
        prob = np.where(truth[u + 1:] == truth[u], params.p, params.q)
        vs = np.nonzero(draws < prob)[0] + u + 1
        if vs.size:
            rows.append(np.column_stack([np.full(vs.size, u, dtype=np.int64), vs]))
    edges = np.concatenate(rows) if rows else np.zeros((0, 2), dtype=np.int64)
    return SbmInstance(params, edges, truth)


def distribute_edges(instance, cluster, machines: int | None = None):
    """Place both directed copies of every edge round-robin after a seeded shuffle.

    Each directed record is one word. By default the records spread over the
    first ceil(slack * 2m / s) machines so that the rest of the fleet keeps
    room for working data. Returns the shuffled records and their owners.
    """
    from .errors import CapacityError

    edges = instance.edges if not isinstance(instance, Graph) else instance.edges
    m = len(edges)
    words = 2 * m
    total = cluster.M * cluster.s
    if words > total:
        raise CapacityError(
            f"edge placement needs {words} words but the fleet holds {total}",
            shortfall=words - total,
        )
    if machines is None:
        machines = -(-cluster.config.slack * words // cluster.s)
    machines = max(1, min(cluster.M, machines))
    if -(-words // machines) > cluster.s:
        machines = cluster.M
    directed = np.concatenate([edges, edges[:, ::-1]]) if m else np.zeros((0, 2), np.int64)
    keys = stream_uniforms(cluster.seed, 0, len(directed))
    directed = directed[np.argsort(keys, kind="stable")]
    owner = np.arange(len(directed)) % machines
    per_machine = np.bincount(owner, minlength=cluster.M)
    cluster.place("edges", per_machine)
    return directed, owner


@dataclass
class RegimeReport:
    lemma_threshold: tuple[float, float, bool]   # common-neighbour separation condition
    commnbr_theorem: tuple[float, float, bool]   # weaker condition quoted in the running-time theorem
    power: tuple[float, float, bool] | None      # power-iteration condition (None if r < 3)
    notes: list[str] = field(default_factory=list)

    @property
    def ok_commnbr(self) -> bool:
        return self.lemma_threshold[2]

    @property
    def ok_power(self) -> bool:
        return bool(self.power and self.power[2])


def regime_check(params: SbmParams, r: int = 3, C0: float = 1.0, log=math.log) -> RegimeReport:
    """Evaluate the recovery conditions. Diagnostic only, never raises."""
    n, k, p, q = params.n, params.k, params.p, params.q
    left = (p - q) / math.sqrt(p) if p > 0 else 0.0
    notes = []
    ln_n = log(n) if n > 1 else 0.0
    lemma_rhs = 6 * math.sqrt(k + 1) * ln_n ** 0.25 / n ** 0.25
    thm_rhs = math.sqrt(k + 1) / n ** 0.25
    power = None
    if r < 3:
        notes.append(f"power-iteration condition needs r >= 3, got r={r}")
    else:
        expo = -0.5 + 1.0 / (2 * (r - 1))
        rhs = (C0 ** 2 + 1) * math.sqrt(k) * n ** expo * log(k * n) ** 7
        power = (left, rhs, left >= rhs and left > 0)
    return RegimeReport(
        lemma_threshold=(left, lemma_rhs, left >= lemma_rhs and left > 0),
        commnbr_theorem=(left, thm_rhs, left >= thm_rhs and left > 0),
        power=power,
        notes=notes,
    )


def write_edge_list(instance: SbmInstance, path, truth_path=None):
    path = Path(path)
    P = instance.params
    lines = [f"{P.N} {P.k} {P.seed}"]
    lines += [f"{u} {v}" for u, v in instance.edges.tolist()]
    path.write_text("\n".join(lines) + "\n")
    truth_path = Path(truth_path) if truth_path else path.with_suffix(".truth")
    truth_path.write_text("".join(f"{v} {c}\n" for v, c in enumerate(instance.truth.tolist())))
    return path, truth_path


def read_edge_list(path, truth_path=None, p=float("nan"), q=float("nan")) -> SbmInstance:
    path = Path(path)
    lines = path.read_text().split("\n")
    N, k, seed = (int(x) for x in lines[0].split())
    pairs = [tuple(map(int, ln.split())) for ln in lines[1:] if ln.strip()]
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    truth_path = Path(truth_path) if truth_path else path.with_suffix(".truth")
    truth = np.zeros(N, dtype=np.int64)
    for ln in truth_path.read_text().split("\n"):
        if ln.strip():
            v, c = map(int, ln.split())
            truth[v] = c
    params = SbmParams(N // k, k, p, q, seed)
    return SbmInstance(params, edges, truth)
