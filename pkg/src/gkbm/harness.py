"""Monte Carlo sweeps over (lambda, p, q, kernel, n), with CSV and SVG output.

Every (cell, seed) run gets its own RNG seed derived from a hash of the cell
coordinates, so results do not depend on run order or worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .geometry import BlockPartition
from .info import info_metric
from .kernel import Kernel
from .model import GkbmParams, agreement, sample
from .recovery import RuntimeStats, phase1, refine

METRICS = ("exact_rate", "agreement_fraction", "phase1_error_count", "disconnect_rate", "runtime", "edge_count")
RATE_METRICS = ("exact_rate", "agreement_fraction", "disconnect_rate")
CELL_KEYS = ("lambda", "p", "q", "kernel", "n")


@dataclass(frozen=True)
class ExperimentConfig:
    cells: tuple
    seeds_per_cell: int = 10
    metrics: tuple = ("exact_rate", "agreement_fraction")
    tol: float = 1e-9
    seed: int = 0
    csv_path: str | None = None
    svg_path: str | None = None

    def __post_init__(self):
        if not self.cells:
            raise ValueError("experiment grid is empty")
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")
        if not self.metrics:
            raise ValueError("metrics list is empty")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ValueError(f"unknown metrics {bad}; choose from {list(METRICS)}")
        for cell in self.cells:
            missing = [k for k in CELL_KEYS if k not in cell]
            if missing:
                raise ValueError(f"cell {cell} is missing {missing}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "cells" in d:
            cells = [dict(c) for c in d["cells"]]
        elif "grid" in d:
            grid = d["grid"]
            missing = [k for k in CELL_KEYS if k not in grid]
            if missing:
                raise ValueError(f"grid is missing axes {missing}")
            axes = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in CELL_KEYS]
            cells = [dict(zip(CELL_KEYS, combo)) for combo in itertools.product(*axes)]
        else:
            raise ValueError('config needs either "cells" or "grid"')
        out = d.get("output", {})
        return cls(
            cells=tuple(cells),
            seeds_per_cell=int(d.get("seeds_per_cell", 10)),
            metrics=tuple(d.get("metrics", ("exact_rate", "agreement_fraction"))),
            tol=float(d.get("tol", 1e-9)),
            seed=int(d.get("seed", 0)),
            csv_path=out.get("csv"),
            svg_path=out.get("svg"),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CellResult:
    cell: dict
    lambda_kappa: float
    lambda_info: float
    seeds: int
    seed_first: int
    seed_last: int
    means: dict = field(default_factory=dict)
    ses: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def cell_hash(cell: dict, base_seed: int = 0) -> int:
    """Stable 64-bit hash of the cell coordinates and the base seed."""
    blob = json.dumps({"cell": _canonical_cell(cell), "seed": int(base_seed)}, sort_keys=True)
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "little")


def _canonical_cell(cell):
    kern = Kernel.from_dict(cell["kernel"]).to_dict()
    return {"lambda": float(cell["lambda"]), "p": float(cell["p"]), "q": float(cell["q"]), "kernel": kern, "n": int(cell["n"])}


def cell_params(cell: dict, seed: int) -> GkbmParams:
    return GkbmParams(float(cell["lambda"]), int(cell["n"]), float(cell["p"]), float(cell["q"]), Kernel.from_dict(cell["kernel"]), seed)


def has_disconnect(counts: np.ndarray) -> bool:
    """Whether two empty blocks sit at cyclic index distance >= 2."""
    b = len(counts)
    empty = np.flatnonzero(counts == 0)
    if len(empty) < 2:
        return False
    d = np.abs(empty[:, None] - empty[None, :]) % b
    return bool(np.any(np.minimum(d, b - d) >= 2))


def run_one(cell: dict, seed: int, tol: float = 1e-9) -> dict:
    """Sample, recover and score one instance; returns every metric."""
    params = cell_params(cell, seed)
    inst = sample(params)
    stats = RuntimeStats(edge_count=inst.edge_count, candidate_pairs=inst.pair_count)
    start = time.perf_counter()
    first = phase1(inst, tol, stats)
    final = refine(inst, first, stats)
    runtime = time.perf_counter() - start
    truth = inst.communities
    _, matched, compared = agreement(final, truth)
    _, m1, c1 = agreement(first, truth)
    counts = np.bincount(inst.blocks, minlength=inst.partition.block_count)
    n_nodes = inst.node_count
    return {
        "exact_rate": float(matched == compared == n_nodes),
        "agreement_fraction": matched / n_nodes if n_nodes else 1.0,
        # unlabelled phase-1 nodes count as errors
        "phase1_error_count": float(n_nodes - m1),
        "disconnect_rate": float(has_disconnect(counts)),
        "runtime": runtime,
        "edge_count": float(inst.edge_count),
    }


def _task(args):
    cell, seed, tol = args
    try:
        return run_one(cell, seed, tol), None
    except Exception as exc:  # recorded per cell, sweep continues
        return None, f"seed {seed}: {type(exc).__name__}: {exc}"


def run_seeds(cfg: ExperimentConfig):
    """(cell index, seed) for every run, in aggregation order."""
    for ci, cell in enumerate(cfg.cells):
        h = cell_hash(cell, cfg.seed)
        for s in range(cfg.seeds_per_cell):
            yield ci, h ^ s


def run_sweep(cfg: ExperimentConfig, workers: int = 1) -> list[CellResult]:
    jobs = list(run_seeds(cfg))
    tasks = [(cfg.cells[ci], seed, cfg.tol) for ci, seed in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        outcomes = [_task(t) for t in tasks]
    results = []
    for ci, cell in enumerate(cfg.cells):
        mine = [(seed, out) for (cj, seed), out in zip(jobs, outcomes) if cj == ci]
        results.append(_aggregate(cell, mine, cfg))
    return results


def _aggregate(cell, runs, cfg):
    seeds = [s for s, _ in runs]
    try:
        kern = Kernel.from_dict(cell["kernel"])
        lk = float(cell["lambda"]) * kern.kappa
        li = float(cell["lambda"]) * info_metric(kern, float(cell["p"]), float(cell["q"]), cfg.tol)
    except ValueError as exc:
        lk = li = float("nan")
        failures = [f"cell: {exc}"]
    else:
        failures = []
    ok = [out[0] for _, out in runs if out[0] is not None]
    failures += [out[1] for _, out in runs if out[1] is not None]
    res = CellResult(dict(cell), lk, li, len(ok), seeds[0], seeds[-1], failures=failures)
    for m in cfg.metrics:
        vals = np.array([r[m] for r in ok], dtype=np.float64)
        if len(vals) == 0:
            res.means[m] = res.ses[m] = float("nan")
            continue
        res.means[m] = float(vals.mean())
        # population SD so a 0/1 rate's SE never exceeds 0.5/sqrt(k)
        res.ses[m] = float(vals.std(ddof=0) / math.sqrt(len(vals)))
    return res


def disconnect_experiment(lam: float, kernel: Kernel, n: int, trials: int, seed: int = 0) -> float:
    """Fraction of sampled point processes with two empty non-adjacent blocks."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    part = BlockPartition(n, kernel.kappa)
    b = part.block_count
    rng = np.random.Generator(np.random.Philox(key=seed))
    hits = 0
    for _ in range(trials):
        n_nodes = rng.poisson(lam * n)
        loc = 0.5 - rng.random(n_nodes)
        counts = np.bincount(part.assign(loc), minlength=b)
        hits += has_disconnect(counts)
    return hits / trials


def disconnect_lower_bound(lam: float, kappa: float, n: int) -> float:
    """max(0, 1 - exp(-gamma b)(1 + 2 b gamma)) with gamma = n^(-lam kappa)."""
    gamma = float(n) ** (-lam * kappa)
    b = BlockPartition(n, kappa).block_count
    return max(0.0, 1.0 - math.exp(-gamma * b) * (1.0 + 2.0 * b * gamma))


def disconnect_probability_exact(lam: float, kappa: float, n: int) -> float:
    """Exact disconnection probability by enumerating empty-block patterns.

    Block counts of a Poisson process are independent Poisson variables, so a
    pattern's probability is a product; feasible for up to 20 blocks.
    """
    part = BlockPartition(n, kappa)
    b = part.block_count
    if b > 20:
        raise ValueError(f"exact enumeration needs at most 20 blocks, got {b}")
    p_empty = np.exp(-lam * n * part.widths())
    total = 0.0
    for mask in range(1 << b):
        empty = np.array([(mask >> i) & 1 for i in range(b)])
        if not has_disconnect(1 - empty):
            continue
        total += float(np.prod(np.where(empty == 1, p_empty, 1.0 - p_empty)))
    return total


# -- output ---------------------------------------------------------------


def csv_header(metrics) -> list[str]:
    cols = ["cell", "lambda", "p", "q", "kernel", "n", "lambda_kappa", "lambda_info", "seeds", "seed_first", "seed_last"]
    for m in METRICS:
        if m in metrics:
            cols += [f"{m}_mean", f"{m}_se"]
    return cols + ["failures"]


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return format(x, ".12g")
    return str(x)


def to_csv(results: list[CellResult], metrics) -> str:
    if not results:
        raise ValueError("no results to write")
    if not metrics:
        raise ValueError("metrics list is empty")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(metrics))
    for i, r in enumerate(results):
        row = [
            i,
            _fmt(float(r.cell["lambda"])),
            _fmt(float(r.cell["p"])),
            _fmt(float(r.cell["q"])),
            json.dumps(r.cell["kernel"], sort_keys=True, separators=(",", ":")),
            int(r.cell["n"]),
            _fmt(r.lambda_kappa),
            _fmt(r.lambda_info),
            r.seeds,
            r.seed_first,
            r.seed_last,
        ]
        for m in METRICS:
            if m in metrics:
                row += [_fmt(r.means.get(m, float("nan"))), _fmt(r.ses.get(m, float("nan")))]
        row.append("; ".join(r.failures))
        w.writerow(row)
    return buf.getvalue()


def to_svg(results: list[CellResult], width: int = 640, height: int = 420) -> str:
    """Phase diagram: exact-recovery rate against lambda * I_phi, one series per n."""
    if not results:
        raise ValueError("no results to plot")
    pts = [(r.lambda_info, r.means.get("exact_rate"), int(r.cell["n"])) for r in results]
    pts = [(x, y, n) for x, y, n in pts if y is not None and math.isfinite(x) and math.isfinite(y)]
    margin = 50
    xmax = max([x for x, _, _ in pts] + [2.0]) * 1.05
    sx = lambda x: margin + (width - 2 * margin) * x / xmax
    sy = lambda y: height - margin - (height - 2 * margin) * y
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{sx(1.0):.2f}" y1="{margin}" x2="{sx(1.0):.2f}" y2="{height - margin}" stroke="gray" stroke-dasharray="4 3"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="13">lambda * I_phi</text>',
        f'<text x="14" y="{height / 2:.0f}" font-size="13" transform="rotate(-90 14 {height / 2:.0f})" text-anchor="middle">exact recovery rate</text>',
    ]
    for k in range(5):
        y = k / 4
        out.append(f'<text x="{margin - 6}" y="{sy(y) + 4:.2f}" text-anchor="end" font-size="10">{y:.2f}</text>')
    for i, n in enumerate(sorted({n for _, _, n in pts})):
        c = colors[i % len(colors)]
        series = sorted((x, y) for x, y, m in pts if m == n)
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in series)
        out.append(f'<polyline points="{path}" fill="none" stroke="{c}"/>')
        for x, y in series:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{c}"/>')
        out.append(f'<text x="{width - margin + 4}" y="{margin + 14 * i}" font-size="11" fill="{c}">{escape(f"n={n}")}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit(results: list[CellResult], metrics, csv_path=None, svg_path=None) -> None:
    if csv_path:
        text = to_csv(results, metrics)
        with open(csv_path, "w", newline="") as fh:
            fh.write(text)
    if svg_path:
        text = to_svg(results)
        with open(svg_path, "w") as fh:
            fh.write(text)
