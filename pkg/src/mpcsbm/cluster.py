"""Simulated s-space MPC fleet: machines, synchronous rounds, ledger, charged primitives.

Every machine has s words of memory and may send and receive at most s words
per round. Data sets are tracked as per-machine word counts ("placements");
their logical contents live in ordinary numpy arrays owned by the caller. Two
kinds of rounds exist:

* real rounds, produced by `exchange_round` from explicit messages (trees for
  broadcast and converge-cast), and
* charged rounds, billed by primitives such as sorting whose result is
  computed by a trusted single-machine routine. A charged primitive costs
  ``c_prim * max(1, ceil(log_s n_items))`` rounds, and during each of them every
  machine holding the touched data sends and receives its share.

Caps are checked when rounds are recorded and memory is checked at every
round boundary; any breach raises `ModelViolation`.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CapacityError, ModelViolation, ParameterError
from .graph import Graph


@dataclass
class MPCConfig:
    c_s: int = 2            # space floor s >= c_s * ceil(log2 N)
    c_sort: int = 1
    c_idx: int = 1
    c_ps: int = 1
    c_copy: int = 1
    c_nbr: int = 1
    slack: int = 4
    space_budget_mode: str = "m"   # "m" or "km"
    c_sp: float = 3.0               # polylog exponent of the space budget
    word_bits: int = 64
    c_sel: int = 20                 # random_set over-sampling factor
    max_retries: int = 16

    def __post_init__(self):
        if self.space_budget_mode not in ("m", "km"):
            raise ParameterError(f"space_budget_mode must be 'm' or 'km', got {self.space_budget_mode!r}")
        for name in ("c_s", "c_sort", "c_idx", "c_ps", "c_copy", "c_nbr", "slack", "word_bits", "c_sel"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict) -> "MPCConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown MPC config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "MPCConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read MPC config {path}: {exc}") from exc
        return cls.from_mapping(data)


def ceil_log(x: int, base: int) -> int:
    """Smallest t >= 0 with base**t >= x, computed on integers."""
    t, acc = 0, 1
    while acc < x:
        acc *= base
        t += 1
    return t


def value_words(v, word_bits: int = 64) -> int:
    """Words occupied by a payload. Integers use sign-magnitude limbs."""
    if v is None:
        return 0
    if isinstance(v, (bool, np.bool_, float, np.floating)):
        return 1
    if isinstance(v, (int, np.integer)):
        bits = abs(int(v)).bit_length() + 1
        return max(1, -(-bits // word_bits))
    if isinstance(v, Fraction):
        return value_words(v.numerator, word_bits) + value_words(v.denominator, word_bits)
    if isinstance(v, np.ndarray):
        if v.dtype != object:
            return int(v.size)
        return sum(value_words(x, word_bits) for x in v.ravel())
    if isinstance(v, (tuple, list)):
        return sum(value_words(x, word_bits) for x in v)
    raise TypeError(f"cannot size payload of type {type(v).__name__}")


def max_int_words(values, word_bits: int = 64) -> int:
    """Largest limb count in an integer array (object or fixed width)."""
    arr = np.asarray(values)
    if arr.size == 0:
        return 1
    if arr.dtype == object:
        top = max(abs(int(x)) for x in arr.ravel())
    else:
        top = int(np.abs(arr).max())
    return value_words(top, word_bits)


@dataclass
class LedgerRound:
    round: int
    primitive: str
    machines: np.ndarray
    sent: np.ndarray
    received: np.ndarray
    resident: np.ndarray


@dataclass
class Ledger:
    rounds: list = field(default_factory=list)

    def __len__(self):
        return len(self.rounds)

    def rows(self):
        for rec in self.rounds:
            for i, snt, rcv, res in zip(rec.machines.tolist(), rec.sent.tolist(),
                                        rec.received.tolist(), rec.resident.tolist()):
                yield (rec.round, i, snt, rcv, res, rec.primitive)

    def write_csv(self, path_or_file):
        header = ("round", "machine", "words_sent", "words_received", "words_resident", "primitive")
        if isinstance(path_or_file, (str, Path)):
            with open(path_or_file, "w", newline="") as fh:
                return self.write_csv(fh)
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        for row in self.rows():
            w.writerow(row)

    def digest(self) -> str:
        """sha256 over every round's primitive and its per-machine int64 columns.

        Covers the same content as the CSV export without formatting it.
        """
        h = hashlib.sha256()
        for rec in self.rounds:
            h.update(f"{rec.round}:{rec.primitive}:{len(rec.machines)};".encode())
            for arr in (rec.machines, rec.sent, rec.received, rec.resident):
                h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        return h.hexdigest()

    def rounds_by_primitive(self) -> dict:
        out: dict = {}
        for rec in self.rounds:
            out[rec.primitive] = out.get(rec.primitive, 0) + 1
        return out

    def violations(self, s: int) -> int:
        """Count of (round, machine) entries breaking a send, receive or memory cap."""
        bad = 0
        for rec in self.rounds:
            bad += int(np.count_nonzero((rec.sent > s) | (rec.received > s) | (rec.resident > s)))
        return bad


Message = tuple  # (src, dst, payload)


class ClusterState:
    """The machine fleet. Single owner; one algorithm drives it at a time."""

    def __init__(self, M: int, s: int, config: MPCConfig | None = None, seed: int = 0,
                 N: int | None = None):
        self.config = config or MPCConfig()
        if M < 1:
            raise ParameterError("M must be >= 1")
        if N is not None and N > 1:
            floor = self.config.c_s * math.ceil(math.log2(N))
            if s < floor:
                raise ModelViolation(
                    f"s={s} is below the space floor c_s*ceil(log2 N) = {floor} for N={N}")
        if s < 1:
            raise ModelViolation("s must be positive")
        self.M = int(M)
        self.s = int(s)
        self.N = N
        self.seed = int(seed)
        self.resident = np.zeros(self.M, dtype=np.int64)
        self.placements: dict[str, np.ndarray] = {}
        self.round = 0
        self.ledger = Ledger()
        self.peak_total = 0
        self.budget: float | None = None  # total-word budget, set by the algorithm drivers

    # ---- helpers -------------------------------------------------------
    def log_s(self, x: int) -> int:
        return max(1, ceil_log(int(x), self.s))

    @property
    def fill(self) -> int:
        return max(1, self.s // self.config.slack)

    def words(self, v) -> int:
        return value_words(v, self.config.word_bits)

    @property
    def total_resident(self) -> int:
        return int(self.resident.sum())

    def _touch_peak(self):
        tot = self.total_resident
        if tot > self.peak_total:
            self.peak_total = tot
        if self.budget is not None and tot > self.budget:
            raise CapacityError(
                f"resident words {tot} exceed the space budget {self.budget:.0f}",
                shortfall=int(math.ceil(tot - self.budget)))

    def _check_memory(self):
        over = np.nonzero(self.resident > self.s)[0]
        if over.size:
            i = int(over[0])
            raise ModelViolation(
                f"machine {i} holds {int(self.resident[i])} words > s={self.s}",
                machine=i, round_no=self.round)

    # ---- placement -----------------------------------------------------
    def place(self, name: str, per_machine) -> np.ndarray:
        per_machine = np.asarray(per_machine, dtype=np.int64)
        if per_machine.shape != (self.M,):
            raise ParameterError("placement must give one count per machine")
        self.release(name)
        self.resident += per_machine
        self.placements[name] = per_machine
        self._check_memory()
        self._touch_peak()
        return per_machine

    def allocate(self, name: str, words: int, fill: int | None = None) -> np.ndarray:
        """First-fit placement of `words` words, at most `fill` per machine (default s/slack).

        The first pass keeps every machine at most half full so tree traffic
        always has room to land; only if that fails are machines packed fully.
        """
        self.release(name)
        words = int(words)
        per = np.zeros(self.M, dtype=np.int64)
        if words:
            for ceiling, cap in ((self.s // 2, fill or self.fill), (self.s, self.s)):
                take = np.clip(np.minimum(ceiling - self.resident, cap), 0, None)
                cum = np.cumsum(take)
                if cum[-1] >= words:
                    break
            else:
                raise CapacityError(
                    f"cannot place {words} words for '{name}': {int(cum[-1])} words free",
                    shortfall=int(words - cum[-1]))
            cut = int(np.searchsorted(cum, words))
            per[:cut + 1] = take[:cut + 1]
            per[cut] -= int(cum[cut]) - words
        return self.place(name, per)

    def release(self, *names: str):
        for name in names:
            per = self.placements.pop(name, None)
            if per is not None:
                self.resident -= per

    def holding(self, *names: str) -> np.ndarray:
        tot = np.zeros(self.M, dtype=np.int64)
        for name in names:
            if name in self.placements:
                tot += self.placements[name]
        return tot

    def dataset_words(self, name: str) -> int:
        return int(self.placements[name].sum()) if name in self.placements else 0

    # ---- rounds --------------------------------------------------------
    def _record(self, primitive, machines, sent, received):
        machines = np.asarray(machines, dtype=np.int64)
        sent = np.asarray(sent, dtype=np.int64)
        received = np.asarray(received, dtype=np.int64)
        self.round += 1
        resident = self.resident[machines] + received
        for arr, what in ((sent, "send"), (received, "receive"), (resident, "memory")):
            bad = np.nonzero(arr > self.s)[0]
            if bad.size:
                i = int(machines[bad[0]])
                raise ModelViolation(
                    f"{what}-cap violation on machine {i} in round {self.round}: "
                    f"{int(arr[bad[0]])} words > s={self.s}", machine=i, round_no=self.round)
        self.ledger.rounds.append(LedgerRound(self.round, primitive, machines, sent, received, resident))

    def charge(self, primitive: str, n_items: int, const: int, datasets: Sequence[str] = (),
               traffic=None, rounds: int | None = None) -> int:
        """Bill a charged primitive. Returns the number of rounds added.

        Each billed round records every participating machine sending and
        receiving its share (`traffic`, or the words of `datasets` it holds).
        """
        if rounds is None:
            rounds = const * self.log_s(max(1, n_items))
        if traffic is None:
            traffic = self.holding(*datasets)
        traffic = np.asarray(traffic, dtype=np.int64)
        machines = np.nonzero(traffic)[0]
        if machines.size == 0:
            machines = np.zeros(1, dtype=np.int64)
        vol = traffic[machines]
        for _ in range(rounds):
            self.round += 1
            if vol.size and int(vol.max()) > self.s:
                i = int(machines[int(np.argmax(vol))])
                raise ModelViolation(f"send-cap violation on machine {i} in round {self.round}",
                                     machine=i, round_no=self.round)
            self.ledger.rounds.append(
                LedgerRound(self.round, primitive, machines, vol, vol, self.resident[machines]))
        self._check_memory()
        return rounds

    def exchange_round(self, messages: Iterable[Message], primitive: str = "exchange") -> dict:
        """Deliver one synchronous round of point-to-point messages.

        Returns {dst: [(src, payload), ...]} in canonical (sender, sequence) order.
        Received words are scratch: the caller allocates anything it keeps.
        """
        msgs = sorted(((int(a), seq, int(b), p) for seq, (a, b, p) in enumerate(messages)),
                      key=lambda t: (t[0], t[1]))
        sent: dict[int, int] = {}
        recv: dict[int, int] = {}
        inbox: dict[int, list] = {}
        for src, _, dst, payload in msgs:
            if not (0 <= src < self.M and 0 <= dst < self.M):
                raise ParameterError(f"message between unknown machines {src}->{dst}")
            w = self.words(payload)
            sent[src] = sent.get(src, 0) + w
            recv[dst] = recv.get(dst, 0) + w
            inbox.setdefault(dst, []).append((src, payload))
        machines = sorted(set(sent) | set(recv)) or [0]
        self._record(primitive, machines,
                     [sent.get(i, 0) for i in machines], [recv.get(i, 0) for i in machines])
        return inbox

    def _fan(self, width: int, machines) -> int:
        """Tree fan-out: a node forwards or absorbs a `width`-word value from up to fan-1 peers."""
        free = int((self.s - self.resident[np.asarray(machines, dtype=np.int64)]).min())
        room = min(self.s, free)
        return max(2, room // max(1, width) + 1)

    def broadcast(self, value, origin: int = 0, machines: Sequence[int] | None = None,
                  primitive: str = "broadcast") -> int:
        """s-ary fan-out tree from `origin` over `machines` (default all); returns rounds used.

        Round t doubles as a real exchange: the i-th informed machine forwards
        the value to fan-1 uninformed ones, so ceil(log_fan M) rounds suffice.
        The schedule is recorded with numpy arrays since every message is equal.
        """
        if machines is None:
            order = np.arange(self.M, dtype=np.int64)
        else:
            order = np.unique(np.append(np.asarray(machines, dtype=np.int64), origin))
        order = np.concatenate([[origin], order[order != origin]])
        w = self.words(value)
        fan = self._fan(w, order)
        informed = 1
        used = 0
        while informed < len(order) or used == 0:
            if informed < len(order):
                nxt = min(len(order), informed * fan)
                dst = order[informed:nxt]
                src = order[np.arange(informed, nxt) % informed]
                informed = nxt
            else:
                src = dst = np.array([origin])
            sent = np.bincount(src, minlength=self.M) * w
            recv = np.bincount(dst, minlength=self.M) * w
            touched = np.nonzero(sent + recv)[0]
            self._record(primitive, touched, sent[touched], recv[touched])
            used += 1
        return used

    def converge_cast(self, values: dict, combine: Callable, leader: int = 0,
                      primitive: str = "converge_cast"):
        """Reduce per-machine values onto `leader` along an s-ary tree.

        `combine(a, b)` must be separable; the result does not depend on the tree shape.
        """
        if not values:
            raise ParameterError("converge_cast needs at least one value")
        nodes = sorted(values)
        if leader in nodes:
            nodes.remove(leader)
            cur = {leader: values[leader]}
        else:
            cur = {}
        order = [leader] + nodes
        vals = dict(cur)
        vals.update({i: values[i] for i in nodes})
        width = max(self.words(v) for v in values.values())
        fan = self._fan(width, order)
        live = order
        used = 0
        while len(live) > 1 or used == 0:
            if len(live) == 1:
                self.exchange_round([(leader, leader, vals[leader])], primitive)
                used += 1
                break
            parents = live[::fan]
            msgs = []
            for gi, par in enumerate(parents):
                for child in live[gi * fan + 1:(gi + 1) * fan]:
                    msgs.append((child, par, vals[child]))
            inbox = self.exchange_round(msgs, primitive)
            for par, got in inbox.items():
                acc = vals.get(par)
                for _, payload in got:
                    acc = payload if acc is None else combine(acc, payload)
                vals[par] = acc
            live = parents
            used += 1
        return vals[leader]


def init_cluster(M: int, s: int, seed: int = 0, config: MPCConfig | None = None,
                 N: int | None = None) -> ClusterState:
    return ClusterState(M, s, config=config, seed=seed, N=N)


def default_s(N: int, config: MPCConfig | None = None) -> int:
    cfg = config or MPCConfig()
    return max(cfg.c_s * math.ceil(math.log2(max(N, 2))), 8)


def machines_for(words: int, s: int, slack: int = 4) -> int:
    return max(1, -(-int(words) * slack // s))


def space_budget(N: int, m: int, k: int, config: MPCConfig, mode: str | None = None) -> float:
    mode = mode or config.space_budget_mode
    base = math.log(N) ** config.c_sp * max(m, 1)
    return base * (k if mode == "km" else 1)


# ---- charged primitives ---------------------------------------------------

def sort_records(cluster: ClusterState, name: str, keys, n_records: int | None = None) -> np.ndarray:
    """Stable sort of a placed data set. Returns the permutation; re-places the set in slab order."""
    keys = np.asarray(keys)
    n = len(keys) if n_records is None else n_records
    cluster.charge("sort", n, cluster.config.c_sort, [name])
    order = np.argsort(keys, kind="stable") if keys.ndim == 1 else np.lexsort(keys.T[::-1])
    words = cluster.dataset_words(name)
    cluster.allocate(name, words)
    return order


def index_records(cluster: ClusterState, name: str, n_records: int) -> np.ndarray:
    """Global 1-based ranks in canonical (machine, offset) order."""
    cluster.charge("index", n_records, cluster.config.c_idx, [name])
    return np.arange(1, n_records + 1, dtype=np.int64)


def prefix_sum(cluster: ClusterState, name: str, values) -> np.ndarray:
    """Inclusive running totals (each value plus all strictly preceding ones).

    Fixed-width inputs that could overflow int64 are promoted to Python ints.
    The data set is re-placed with its new (possibly multi-limb) word count.
    """
    vals = np.asarray(values)
    cluster.charge("prefix_sum", len(vals), cluster.config.c_ps, [name])
    if vals.dtype != object:
        bound = float(np.abs(vals.astype(np.float64)).sum()) if vals.size else 0.0
        if bound >= 2 ** 62:
            vals = vals.astype(object)
    out = np.cumsum(vals) if vals.dtype != object else np.array(
        list(_accumulate(vals)), dtype=object)
    if vals.size:
        cluster.allocate(name, len(out) * max_int_words(out, cluster.config.word_bits))
    return out


def _accumulate(vals):
    acc = 0
    for v in vals:
        acc += int(v)
        yield acc


@dataclass
class Slab:
    set_index: int
    copy: int
    offset: int
    length: int


def copy_sets(cluster: ClusterState, sets: Sequence[tuple[str, int]], multiplicities: Sequence[int],
              out_name: str) -> list[Slab]:
    """Replicate placed sets; copy j of set i occupies a contiguous slab, set order preserved."""
    if len(sets) != len(multiplicities):
        raise ParameterError("one multiplicity per set")
    slabs = []
    off = 0
    for i, ((_, w), t) in enumerate(zip(sets, multiplicities)):
        for j in range(int(t)):
            slabs.append(Slab(i, j, off, int(w)))
            off += int(w)
    cluster.allocate(out_name, off)
    cluster.charge("copy_sets", max(1, off), cluster.config.c_copy,
                   [nm for nm, _ in sets] + [out_name])
    return slabs


_COMBINE = {
    "sum": (np.add, 0),
    "max": (np.maximum, None),
    "min": (np.minimum, None),
    "or": (np.logical_or, False),
}


def visit_neighbors(cluster: ClusterState, g: Graph, values, combine: str = "sum", identity=0,
                    edges: str = "edges", primitive: str = "visit_neighbors") -> np.ndarray:
    """result[u] = combine over values[v] for v in N(u); isolated vertices get `identity`.

    Charged c_nbr * ceil(log_s N) rounds per pass. If the values are wide
    (multi-limb), an edge machine cannot ship them all in one round and the
    pass is repeated over ceil(load / s) batches.
    """
    vals = np.asarray(values)
    ufunc, _ = _COMBINE[combine]
    vw = max_int_words(vals, cluster.config.word_bits) if vals.dtype.kind in "iuO" else 1
    held = cluster.holding(edges)
    load = held * vw
    batches = max(1, int(-(-int(load.max()) // cluster.s))) if load.size else 1
    traffic = -(-load // batches)
    rounds = cluster.config.c_nbr * cluster.log_s(g.N) * batches
    cluster.charge(primitive, g.N, cluster.config.c_nbr, traffic=traffic, rounds=rounds)

    deg = g.degrees
    out = np.empty(g.N, dtype=vals.dtype)
    out[:] = identity
    nz = deg > 0
    if g.indices.size:
        gathered = vals[g.indices]
        out[nz] = ufunc.reduceat(gathered, g.indptr[:-1][nz])
    return out
