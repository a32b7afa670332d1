"""Benchmarks, ablations, exact references and report emission."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numba
import numpy as np

from .errors import SizeLimitError
from .instance import Kind, RoutingInstance
from .search import SearchConfig, Variant, random_instance, solve
from .rng import child_seed, make_rng
from .solution import tsp_cost

EXACT_MAX_N = 20
CSV_HEADER = ("size", "mean_cost", "std_cost", "gap_pct", "mean_seconds", "count")


# -- exact reference ------------------------------------------------------------


@numba.njit(cache=True)
def _held_karp(d):
    n = d.shape[0]
    m = n - 1  # node 0 is fixed as the start
    full = 1 << m
    dT = np.ascontiguousarray(d[1:, 1:].T)  # dT[j, k] = d[k+1, j+1]
    dp = np.empty((full, m))
    dp[:] = np.inf
    bits = np.empty(m, dtype=np.int64)
    for j in range(m):
        dp[1 << j, j] = d[0, j + 1]
    for S in range(1, full):
        nb = 0
        for j in range(m):
            if (S >> j) & 1:
                bits[nb] = j
                nb += 1
        if nb < 2:
            continue
        for a in range(nb):
            j = bits[a]
            prev = S ^ (1 << j)
            row = dp[prev]
            col = dT[j]
            best = np.inf
            for b in range(nb):
                k = bits[b]
                c = row[k] + col[k]
                if c < best:
                    best = c
            dp[S, j] = best
    # walk back through the table to recover the tour
    tour = np.empty(n, dtype=np.int64)
    tour[0] = 0
    S = full - 1
    best = np.inf
    last = -1
    for j in range(m):
        c = dp[S, j] + d[j + 1, 0]
        if c < best:
            best = c
            last = j
    total = best
    pos = n - 1
    while True:
        tour[pos] = last + 1
        pos -= 1
        prev = S ^ (1 << last)
        if prev == 0:
            break
        target = dp[S, last]
        nxt = -1
        for k in range(m):
            if (prev >> k) & 1 and dp[prev, k] + d[k + 1, last + 1] == target:
                nxt = k
                break
        S = prev
        last = nxt
    return total, tour


def exact_tsp(inst: RoutingInstance) -> tuple[float, list[int]]:
    """Optimal tour by the Held-Karp dynamic program (n <= 20)."""
    if inst.kind is not Kind.TSP:
        raise ValueError("exact_tsp needs a TSP instance")
    if inst.n > EXACT_MAX_N:
        raise SizeLimitError(f"exact_tsp supports n <= {EXACT_MAX_N}, got {inst.n}")
    _, tour = _held_karp(np.ascontiguousarray(inst.dist))
    tour = tour.tolist()
    return tsp_cost(inst, tour), tour


# -- benchmark ------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkSpec:
    kind: Kind = Kind.TSP
    sizes: tuple[int, ...] = (20,)
    instances_per_size: int = 100
    config: SearchConfig = field(default_factory=SearchConfig)
    seed: int = 0
    reference: dict | None = None  # instance name -> reference cost
    exact_reference: bool = True  # Held-Karp gaps where n <= 20
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.instances_per_size <= 0:
            raise ValueError("instances_per_size must be positive")


@dataclass
class InstanceRecord:
    size: int
    index: int
    name: str
    cost: float | None
    reference: float | None
    gap_pct: float | None
    seconds: float
    steps: int
    error: str | None = None


@dataclass
class SizeRow:
    size: int
    mean_cost: float
    std_cost: float
    gap_pct: float | None
    mean_seconds: float
    count: int


@dataclass
class BenchmarkReport:
    rows: list[SizeRow] = field(default_factory=list)
    records: list[InstanceRecord] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def failures(self) -> list[InstanceRecord]:
        return [r for r in self.records if r.error is not None]

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "records": [asdict(r) for r in self.records],
            "elapsed": self.elapsed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkReport":
        return cls(
            [SizeRow(**r) for r in data.get("rows", [])],
            [InstanceRecord(**r) for r in data.get("records", [])],
            data.get("elapsed", 0.0),
        )

    def _untimed(self):
        rows = [replace(r, mean_seconds=0.0) for r in self.rows]
        return rows, [replace(r, seconds=0.0) for r in self.records]

    def __eq__(self, other):
        # wall-clock fields vary run to run and are not part of the result
        if not isinstance(other, BenchmarkReport):
            return NotImplemented
        return self._untimed() == other._untimed()


def gap_pct(cost: float, reference: float) -> float:
    return 100.0 * (cost - reference) / reference


def instance_seed(seed: int, size: int, index: int) -> int:
    return child_seed(seed, size, index)


def benchmark_instance(kind, size: int, index: int, seed: int) -> RoutingInstance:
    return random_instance(kind, size, instance_seed(seed, size, index))


def _run_one(args) -> InstanceRecord:
    kind, size, index, seed, config, policy, reference, exact = args
    inst = benchmark_instance(kind, size, index, seed)
    t0 = time.perf_counter()
    try:
        res = solve(inst, config, policy, make_rng(seed, size, index, 1))
    except Exception as exc:  # recorded, not fatal
        return InstanceRecord(size, index, inst.name, None, None, None, time.perf_counter() - t0, 0, repr(exc))
    seconds = time.perf_counter() - t0
    ref = None
    if reference and inst.name in reference:
        ref = float(reference[inst.name])
    elif exact and inst.kind is Kind.TSP and inst.n <= EXACT_MAX_N:
        ref = exact_tsp(inst)[0]
    gap = None if ref is None else gap_pct(res.best_cost, ref)
    return InstanceRecord(size, index, inst.name, res.best_cost, ref, gap, seconds, res.steps_executed)


def _aggregate(records: list[InstanceRecord], sizes) -> list[SizeRow]:
    rows = []
    for size in sizes:
        ok = [r for r in records if r.size == size and r.error is None]
        if not ok:
            continue
        costs = np.array([r.cost for r in ok])
        gaps = [r.gap_pct for r in ok if r.gap_pct is not None]
        rows.append(
            SizeRow(
                size=size,
                mean_cost=float(costs.mean()),
                std_cost=float(costs.std()),
                gap_pct=float(np.mean(gaps)) if len(gaps) == len(ok) else None,
                mean_seconds=float(np.mean([r.seconds for r in ok])),
                count=len(ok),
            )
        )
    return rows


def _map(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def run_benchmark(spec: BenchmarkSpec, policy=None, jobs: int = 1) -> BenchmarkReport:
    t0 = time.perf_counter()
    tasks = [
        (spec.kind, size, i, spec.seed, spec.config, policy, spec.reference, spec.exact_reference)
        for size in spec.sizes
        for i in range(spec.instances_per_size)
    ]
    records = _map(_run_one, tasks, jobs)
    report = BenchmarkReport(_aggregate(records, spec.sizes), records, time.perf_counter() - t0)
    if spec.output:
        with open(spec.output, "wb") as fh:
            fh.write(emit_report(report, "csv", timings=False))
    return report


def run_ablation(
    sizes,
    instances_per_size: int,
    config: SearchConfig | None = None,
    policy=None,
    *,
    kind=Kind.TSP,
    seed: int = 0,
    jobs: int = 1,
) -> dict[str, dict[int, float]]:
    """Mean best cost for every variant and size on shared instances."""
    config = config or SearchConfig()
    table: dict[str, dict[int, float]] = {}
    for variant in Variant:
        spec = BenchmarkSpec(
            kind, tuple(sizes), instances_per_size, replace(config, variant=variant), seed, exact_reference=False
        )
        report = run_benchmark(spec, policy, jobs)
        table[variant.value] = {row.size: row.mean_cost for row in report.rows}
    return table


# -- report emission ------------------------------------------------------------


def _num(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def emit_report(report: BenchmarkReport, format: str = "csv", timings: bool = True) -> bytes:
    """Serialize a report.

    Wall times differ between runs, so ``timings=False`` leaves the CSV
    ``mean_seconds`` column empty and makes reruns byte-identical.
    """
    fmt = format.lower()
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True).encode()
    if fmt != "csv":
        raise ValueError(f"unknown report format {format!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.rows:
        secs = _num(r.mean_seconds) if timings else ""
        w.writerow([r.size, _num(r.mean_cost), _num(r.std_cost), _num(r.gap_pct), secs, r.count])
    return buf.getvalue().encode()


def emit_ablation(table: dict[str, dict[int, float]], format: str = "csv") -> bytes:
    if format.lower() == "json":
        return json.dumps({k: {str(s): v for s, v in row.items()} for k, row in table.items()}).encode()
    sizes = sorted({s for row in table.values() for s in row})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant"] + [str(s) for s in sizes])
    for variant, row in table.items():
        w.writerow([variant] + [_num(row.get(s)) for s in sizes])
    return buf.getvalue().encode()
