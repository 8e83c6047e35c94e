"""Scoring, fleet planning and grid experiments."""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cluster import ClusterState, MPCConfig, default_s, machines_for, space_budget
from .errors import CapacityError, ModelViolation, ParameterError, RecoveryFailure
from .mpc_commnbr import mpc_comm_nbr
from .mpc_power import DiagonalWalks, mpc_power_iteration_parallel, mpc_power_iteration_run
from .sbm import SbmInstance, SbmParams, distribute_edges, generate_sbm, regime_check
from .sequential import (Clustering, CommNbrConfig, PowerThreshold, comm_nbr, power_iteration,
                         sample_sizes)

ALGORITHMS = ("commnbr", "power", "mpc-commnbr", "mpc-power", "mpc-power-par")
CSV_COLUMNS = ("algorithm", "n", "k", "p", "q", "r", "s", "seed", "recovered", "misclassified",
               "rounds", "peak_words", "regime_ok", "fail_stage")


@dataclass
class Accuracy:
    exact: bool
    misclassified: int
    lower_bound: bool = False     # greedy matching was used (large k)
    label_mismatch: bool = False  # predicted and true label counts differ


def accuracy(labels, truth, exhaustive_k: int = 8) -> Accuracy:
    """Best agreement over label bijections (exhaustive up to exhaustive_k labels)."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape:
        raise ParameterError("clustering and truth cover different vertex sets")
    pl, pi = np.unique(labels, return_inverse=True)
    tl, ti = np.unique(truth, return_inverse=True)
    conf = np.zeros((len(pl), len(tl)), dtype=np.int64)
    np.add.at(conf, (pi, ti), 1)
    kk = max(len(pl), len(tl))
    padded = np.zeros((kk, kk), dtype=np.int64)
    padded[:len(pl), :len(tl)] = conf
    greedy = kk > exhaustive_k
    if not greedy:
        best = max(sum(padded[i, perm[i]] for i in range(kk)) for perm in itertools.permutations(range(kk)))
    else:
        best, used_r, used_c = 0, set(), set()
        for flat in np.argsort(-padded, axis=None, kind="stable"):
            i, j = divmod(int(flat), kk)
            if i not in used_r and j not in used_c:
                used_r.add(i)
                used_c.add(j)
                best += int(padded[i, j])
    wrong = int(len(labels) - best)
    return Accuracy(wrong == 0, wrong, greedy, len(pl) != len(tl))


def clustering_equals_truth(c: Clustering, truth) -> bool:
    return accuracy(c.labels, truth).exact


# ---- fleet planning ------------------------------------------------------

def plan_cluster(instance: SbmInstance, algorithm: str, s: int | None = None, seed: int = 0,
                 config: MPCConfig | None = None, commnbr: CommNbrConfig | None = None) -> ClusterState:
    """Size a fleet for one run, set its space budget and distribute the edges.

    M = ceil(slack * words_needed / s). For the common-neighbour pipeline the
    words needed are the input plus the expected layouts; the power-iteration
    runs may fill their whole space budget with diffusion copies.
    """
    config = config or MPCConfig()
    g = instance.graph
    N, m, k = g.N, g.m, instance.params.k
    s = s or default_s(N, config)
    mode = "km" if algorithm == "mpc-power-par" else config.space_budget_mode
    budget = space_budget(N, m, k, config, mode)
    if algorithm == "mpc-commnbr":
        cfg = commnbr or CommNbrConfig(c_sel=config.c_sel)
        stride = -(-N // config.word_bits)
        try:
            sz = sample_sizes(g, k, cfg)
            nS = min(N, 2 * sz["S"])
            nSp = min(N, 2 * sz["S_rep"])
        except RecoveryFailure:
            nS = nSp = N
        need = 2 * m + 4 * N + stride * (nS * (1 + 2 * k) + k + nSp * (nSp + 1))
    else:
        need = budget
    M = machines_for(need, s, config.slack)
    cluster = ClusterState(M, s, config=config, seed=seed, N=N)
    cluster.budget = budget
    distribute_edges(instance, cluster)
    return cluster


# ---- single runs ---------------------------------------------------------

@dataclass
class RunReport:
    algorithm: str
    n: int
    k: int
    p: float
    q: float
    r: int
    s: int
    seed: int
    recovered: bool
    misclassified: int
    rounds: int
    peak_words: int
    regime_ok: bool
    fail_stage: str
    wall_time: float = 0.0
    labels: np.ndarray | None = field(default=None, repr=False)
    ledger_digest: str = ""
    budget: float = 0.0
    m: int = 0

    def row(self) -> list:
        return [self.algorithm, self.n, self.k, _fmt(self.p), _fmt(self.q), self.r, self.s, self.seed,
                int(self.recovered), self.misclassified, self.rounds, self.peak_words,
                int(self.regime_ok), self.fail_stage]


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class RunSettings:
    r: int = 3
    s: int | None = None
    threshold_mode: str = "gap"       # power-iteration threshold
    commnbr_mode: str = "gap"          # common-neighbour threshold
    C: float = 1.0
    c_par: float = 2.0
    mpc: MPCConfig = field(default_factory=MPCConfig)
    commnbr: CommNbrConfig | None = None
    keep_ledger: bool = False


def run_cell(algorithm: str, params: SbmParams, settings: RunSettings | None = None,
             instance: SbmInstance | None = None) -> tuple[RunReport, ClusterState | None]:
    """Run one algorithm on one instance; failures become report fields, never exceptions."""
    settings = settings or RunSettings()
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    inst = instance or generate_sbm(params)
    g = inst.graph
    k = params.k
    reg = regime_check(params, max(settings.r, 3), C0=settings.C)
    regime_ok = reg.ok_power if "power" in algorithm else reg.ok_commnbr
    ccfg = settings.commnbr or CommNbrConfig(threshold_mode=settings.commnbr_mode, c_sel=settings.mpc.c_sel)
    thr = PowerThreshold(mode=settings.threshold_mode, C=settings.C)
    cluster = None
    fail = ""
    labels = None
    t0 = time.perf_counter()
    try:
        if algorithm == "commnbr":
            labels = comm_nbr(g, k, params.seed, ccfg).labels
        elif algorithm == "power":
            labels = power_iteration(g, k, settings.r, params.q, thr, p=params.p).labels
        else:
            cluster = plan_cluster(inst, algorithm, settings.s, params.seed, settings.mpc, ccfg)
            if algorithm == "mpc-commnbr":
                labels = mpc_comm_nbr(cluster, g, k, params.seed, ccfg).labels
            elif algorithm == "mpc-power":
                labels = mpc_power_iteration_run(cluster, g, k, settings.r, params.q, thr, p=params.p).clustering.labels
            else:
                labels = mpc_power_iteration_parallel(cluster, g, k, settings.r, params.q, thr, p=params.p,
                                                      seed=params.seed, c_par=settings.c_par).labels
    except RecoveryFailure as exc:
        fail = exc.stage
    except (CapacityError, ModelViolation) as exc:
        fail = type(exc).__name__
    wall = time.perf_counter() - t0
    if labels is not None:
        acc = accuracy(labels, inst.truth)
    else:
        acc = Accuracy(False, g.N)
    rep = RunReport(
        algorithm=algorithm, n=params.n, k=k, p=params.p, q=params.q, r=settings.r,
        s=cluster.s if cluster else 0, seed=params.seed, recovered=acc.exact,
        misclassified=acc.misclassified, rounds=cluster.round if cluster else 0,
        peak_words=cluster.peak_total if cluster else 0, regime_ok=regime_ok, fail_stage=fail,
        wall_time=wall, labels=labels, budget=cluster.budget if cluster else 0.0, m=g.m,
        ledger_digest=cluster.ledger.digest() if (cluster and settings.keep_ledger) else "",
    )
    return rep, cluster


# ---- grid experiments ------------------------------------------------------

@dataclass
class ExperimentConfig:
    algorithm: str
    grid: list                  # list of dicts with n, k, p, q
    seeds: list
    r: list = field(default_factory=lambda: [3])
    s: list = field(default_factory=lambda: [None])
    threshold_mode: str = "gap"
    commnbr_mode: str = "gap"
    budget_mode: str = "m"
    constants: dict = field(default_factory=dict)
    out: str = "out"

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ParameterError(f"unknown algorithm {self.algorithm!r}")
        if not self.grid or not self.seeds or not self.r or not self.s:
            raise ParameterError("grid, seeds, r and s must be non-empty")
        for cell in self.grid:
            missing = {"n", "k", "p", "q"} - set(cell)
            if missing:
                raise ParameterError(f"grid cell {cell} lacks {sorted(missing)}")
        if self.threshold_mode not in ("gap", "formula") or self.commnbr_mode not in ("gap", "formula"):
            raise ParameterError("threshold modes must be 'gap' or 'formula'")
        return self

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ParameterError(f"bad experiment config: {exc}") from exc
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read experiment config {path}: {exc}") from exc
        return cls.from_mapping(data)

    def settings(self, r, s) -> RunSettings:
        consts = dict(self.constants)
        C = consts.pop("C", 1.0)
        c_par = consts.pop("c_par", 2.0)
        comm = {key: consts.pop(key) for key in ("c_sample", "c_trim", "c_rep") if key in consts}
        mpc = MPCConfig.from_mapping({"space_budget_mode": self.budget_mode, **consts})
        commnbr = CommNbrConfig(threshold_mode=self.commnbr_mode, c_sel=mpc.c_sel, **comm)
        return RunSettings(r=r, s=s, threshold_mode=self.threshold_mode, commnbr_mode=self.commnbr_mode,
                           C=C, c_par=c_par, mpc=mpc, commnbr=commnbr)

    def cells(self, seed_offset: int = 0):
        for cell in self.grid:
            for r in self.r:
                for s in self.s:
                    for seed in self.seeds:
                        params = SbmParams(int(cell["n"]), int(cell["k"]), float(cell["p"]),
                                           float(cell["q"]), int(seed) + seed_offset)
                        yield params, r, s


def run_experiment(config: ExperimentConfig, csv_path=None, seed_offset: int = 0, algorithm: str | None = None,
                   ledger_dir=None):
    """Run every grid cell in order, writing CSV rows as they finish. Yields RunReports.

    With ledger_dir set, each simulated run also writes its round ledger there.
    """
    algorithm = algorithm or config.algorithm
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    if ledger_dir is not None:
        Path(ledger_dir).mkdir(parents=True, exist_ok=True)
    fh = open(csv_path, "w", newline="") if csv_path else None
    try:
        writer = csv.writer(fh, lineterminator="\n") if fh else None
        if writer:
            writer.writerow(CSV_COLUMNS)
        for params, r, s in config.cells(seed_offset):
            rep, cluster = run_cell(algorithm, params, config.settings(r, s))
            if cluster is not None and ledger_dir is not None:
                stem = f"{algorithm}_n{params.n}_k{params.k}_p{_fmt(params.p)}_q{_fmt(params.q)}_r{r}_s{cluster.s}_seed{params.seed}"
                cluster.ledger.write_csv(Path(ledger_dir) / f"{stem}.csv")
            if writer:
                writer.writerow(rep.row())
                fh.flush()
            yield rep
    finally:
        if fh:
            fh.close()


def read_reports(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plotdata(rows, out_dir) -> list[Path]:
    """Write (x, y, series) triples for the three standard plots.

    rows are CSV dicts (as from read_reports) or RunReports.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recs = [r if isinstance(r, dict) else dict(zip(CSV_COLUMNS, map(str, r.row()))) for r in rows]
    rate: dict = {}
    rounds: dict = {}
    space: dict = {}
    for rec in recs:
        p, q = float(rec["p"]), float(rec["q"])
        x = (p - q) / math.sqrt(p) if p > 0 else 0.0
        key = (rec["algorithm"], round(x, 12))
        hit = rate.setdefault(key, [0, 0])
        hit[0] += int(rec["recovered"])
        hit[1] += 1
        s = int(rec["s"])
        N = int(rec["n"]) * int(rec["k"])
        if s > 1 and int(rec["rounds"]) > 0 and not rec["fail_stage"]:
            rounds.setdefault(rec["algorithm"], []).append((math.log(N) / math.log(s), int(rec["rounds"])))
            space.setdefault(rec["algorithm"], []).append((int(rec["k"]), int(rec["peak_words"])))
    files = []

    def write(name, triples):
        path = out / name
        with open(path, "w") as fh:
            fh.write("x y series\n")
            for x, y, series in triples:
                fh.write(f"{x!r} {y!r} {series}\n")
        files.append(path)

    write("recovery_vs_gap.txt", [(x, ok / tot, alg) for (alg, x), (ok, tot) in sorted(rate.items())])
    write("rounds_vs_logsN.txt", [(x, y, alg) for alg, pts in sorted(rounds.items()) for x, y in pts])
    write("space_vs_k.txt", [(x, y, alg) for alg, pts in sorted(space.items()) for x, y in pts])
    return files
