"""Two-phase exact recovery: block-wise almost-exact labeling, then local refinement.

Phase I labels the first block by counting common neighbours, then sweeps
around the torus, labelling each new slice from the labelled nodes just
behind it with a weighted vote.
Phase II relabels every node by the sign of its log-likelihood ratio given
the Phase I labels of its visibility region.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .kernel import scale
from .geometry import shifted, torus_distance
from .model import GkbmInstance
from .quadrature import integrate_pieces

# sums of opposite weights that cancel exactly in real arithmetic can land
# a few ulps either side of 0; anything this close counts as a tie (-> -1)
TIE_TOL = 1e-9


def _check_pq(p, q):
    if not (0.0 <= p < 1.0 and 0.0 <= q < 1.0):
        raise ValueError(f"recovery needs p, q in [0, 1) so weights stay finite, got p={p}, q={q}")
    if p != q and (p == 0 or q == 0):
        raise ValueError(f"p and q must both be positive unless equal, got p={p}, q={q}")


def pair_weights(psi, p: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """(edge_weight, nonedge_weight) for each kernel value psi.

    nonedge = log((1 - p psi) / (1 - q psi)) and edge = log(p / q) - nonedge,
    so that A * edge + nonedge is log P(A | same) - log P(A | different).
    """
    _check_pq(p, q)
    psi = np.asarray(psi, dtype=np.float64)
    if p == q:
        z = np.zeros_like(psi)
        return z, z.copy()
    nonedge = np.log1p(-p * psi) - np.log1p(-q * psi)
    edge = math.log(p / q) - nonedge
    return edge, nonedge


@dataclass(frozen=True)
class CommonNeighborThreshold:
    I_val: float
    M_in: float
    M_out: float
    M: float


def _interval(inst, block):
    if isinstance(block, tuple):
        return block
    return inst.partition.bounds(block)


def overlap_integral(inst: GkbmInstance, u: int, v: int, block, tol: float = 1e-9) -> float:
    """n * integral over B of psi(X_u, z) psi(X_v, z) dz.

    ``block`` is a partition block index or a ``(start, end)`` interval in the
    shifted frame [0, 1). The factor n makes this the expected count of
    z-positions per unit intensity, so that lam * r * I_val is a mean number
    of common neighbours. Integrated in the scaled variable
    t = (z - start) n / log n.
    """
    params = inst.params
    kern = params.kernel
    n = params.n
    sc = scale(n)
    start, end = _interval(inst, block)
    xu, xv = inst.locations[u], inst.locations[v]

    def f(t):
        z = start + t / sc
        return float(kern(sc * torus_distance(xu, z)) * kern(sc * torus_distance(xv, z)))

    length = (end - start) * sc
    # kernel breakpoints around each endpoint, mapped into the block frame
    pts = {0.0, length}
    for x in (xu, xv):
        base = (((x - start) % 1.0) + 0.5) % 1.0 - 0.5
        for bp in kern.breakpoints():
            for sgn in (-1.0, 1.0):
                t = (base + sgn * bp / sc) * sc
                if 0.0 < t < length:
                    pts.add(t)
    return math.log(n) * integrate_pieces(f, sorted(pts), tol / math.log(n))


def common_neighbor_threshold(inst: GkbmInstance, u: int, v: int, block: int, tol: float = 1e-9) -> CommonNeighborThreshold:
    p, q, lam = inst.params.p, inst.params.q, inst.params.lam
    ival = overlap_integral(inst, u, v, block, tol)
    m_in = lam * (p * p + q * q) / 2.0 * ival
    m_out = lam * p * q * ival
    return CommonNeighborThreshold(ival, m_in, m_out, lam * (p + q) ** 2 / 4.0 * ival)


@dataclass
class RuntimeStats:
    wall_time: float = 0.0
    edge_count: int = 0
    candidate_pairs: int = 0
    counters: dict = field(default_factory=dict)
    breaks: list = field(default_factory=list)

    def add(self, key: str, amount: int) -> None:
        self.counters[key] = self.counters.get(key, 0) + int(amount)

    @property
    def operations(self) -> int:
        return int(sum(self.counters.values()))

    def to_dict(self) -> dict:
        return {
            "wall_time": self.wall_time,
            "edge_count": self.edge_count,
            "candidate_pairs": self.candidate_pairs,
            "counters": dict(self.counters),
            "operations": self.operations,
            "breaks": list(self.breaks),
        }


def initial_block_recovery(inst: GkbmInstance, block=0, tol: float = 1e-9, stats: RuntimeStats | None = None) -> np.ndarray:
    """Labels (+1/-1) for the nodes of ``block``, in increasing node order.

    ``block`` is a partition block index or a ``(start, end)`` interval of
    width at most kappa log n / n. The lowest-index node is the anchor and
    gets +1; another node gets +1 iff its count of common neighbours with the
    anchor inside the block strictly exceeds the midpoint threshold M.
    """
    start, end = _interval(inst, block)
    pos = shifted(inst.locations)
    members = np.flatnonzero((pos >= start) & (pos < end))
    if len(members) == 0:
        return np.empty(0, dtype=np.int8)
    anchor = members[0]
    # dense adjacency restricted to the block; blocks hold O(log n) nodes
    local = np.full(inst.node_count, -1)
    local[members] = np.arange(len(members))
    adj = np.zeros((len(members), len(members)), dtype=np.int64)
    inside = (local[inst.pair_u] >= 0) & (local[inst.pair_v] >= 0) & inst.pair_edge
    lu, lv = local[inst.pair_u[inside]], local[inst.pair_v[inside]]
    adj[lu, lv] = 1
    adj[lv, lu] = 1
    common = adj @ adj[0]
    labels = np.empty(len(members), dtype=np.int8)
    labels[0] = 1
    for i in range(1, len(members)):
        th = common_neighbor_threshold(inst, members[i], anchor, (start, end), tol)
        labels[i] = 1 if common[i] > th.M else -1
    if stats is not None:
        stats.add("initial_pairs", len(members) ** 2)
        stats.add("initial_quadratures", len(members) - 1)
    return labels


def _pair_terms(inst: GkbmInstance):
    edge_w, nonedge_w = pair_weights(inst.pair_psi, inst.params.p, inst.params.q)
    return np.where(inst.pair_edge, edge_w, 0.0) + nonedge_w


def propagate(inst: GkbmInstance, sources, source_labels, targets, stats: RuntimeStats | None = None) -> np.ndarray:
    """Labels for ``targets`` from the weighted vote of labelled ``sources``.

    f(u) = sum over sources v of label(v) * (A_uv * edge_w + nonedge_w); the
    target gets +1 iff f(u) > 0, up to rounding noise (see TIE_TOL). Pairs
    outside the kernel support carry zero weight and are skipped.
    """
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    lab = np.zeros(inst.node_count, dtype=np.float64)
    lab[sources] = np.asarray(source_labels, dtype=np.float64)
    is_src = np.zeros(inst.node_count, dtype=bool)
    is_src[sources] = True
    is_tgt = np.zeros(inst.node_count, dtype=bool)
    is_tgt[targets] = True
    terms = _pair_terms(inst)
    f = np.zeros(inst.node_count)
    fwd = is_tgt[inst.pair_u] & is_src[inst.pair_v]
    bwd = is_tgt[inst.pair_v] & is_src[inst.pair_u]
    f += np.bincount(inst.pair_u[fwd], weights=lab[inst.pair_v[fwd]] * terms[fwd], minlength=inst.node_count)
    f += np.bincount(inst.pair_v[bwd], weights=lab[inst.pair_u[bwd]] * terms[bwd], minlength=inst.node_count)
    if stats is not None:
        stats.add("propagate_pairs", int(fwd.sum() + bwd.sum()))
    return np.where(f[targets] > TIE_TOL, 1, -1).astype(np.int8)


def _step_pairs(inst: GkbmInstance, step: np.ndarray, reach: int, n_steps: int):
    """Pairs whose endpoints lie 1..reach steps apart (no wraparound),
    oriented earlier -> later and grouped by the later endpoint's step."""
    su = step[inst.pair_u]
    sv = step[inst.pair_v]
    d = sv - su
    up = (d >= 1) & (d <= reach)
    down = (d <= -1) & (d >= -reach)
    src = np.concatenate([inst.pair_u[up], inst.pair_v[down]])
    tgt = np.concatenate([inst.pair_v[up], inst.pair_u[down]])
    idx = np.concatenate([np.flatnonzero(up), np.flatnonzero(down)])
    tstep = step[tgt]
    order = np.argsort(tstep, kind="stable")
    src, tgt, idx, tstep = src[order], tgt[order], idx[order], tstep[order]
    bounds = np.searchsorted(tstep, np.arange(n_steps + 1))
    return src, tgt, idx, bounds


def phase1(inst: GkbmInstance, tol: float = 1e-9, stats: RuntimeStats | None = None, substeps: int = 2) -> np.ndarray:
    """Almost-exact labeling of all nodes, sweeping once around the torus.

    The first block [0, r) is labelled by common-neighbour counting, with
    r = kappa log n / n. The sweep then advances in steps of width
    r / ``substeps``; the nodes of each step are labelled by :func:`propagate`
    from every labelled node in the window of width r just behind it.

    ``substeps=1`` is plain block-to-block propagation. There a node near
    the far end of block i+1 only sees the far end of block i, so errors
    ride along that lane and eventually flip whole blocks; with two or more
    steps per block every target sees at least one full step of sources.

    If the window behind a step holds no nodes there is nothing to propagate
    from: a fresh block starting at that step is labelled by common-neighbour
    counting and the event is logged in ``stats.breaks``. Each fresh seed
    fixes its own global sign, so labels on either side of a break may be
    mutually flipped.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    n_nodes = inst.node_count
    labels = np.zeros(n_nodes, dtype=np.int8)
    if n_nodes == 0:
        return labels
    r = inst.params.radius
    width = r / substeps
    n_steps = math.ceil(1.0 / width)
    pos = shifted(inst.locations)
    step = np.minimum(np.floor(pos / width).astype(np.int64), n_steps - 1)
    counts = np.bincount(step, minlength=n_steps)
    terms = _pair_terms(inst)
    src, tgt, idx, bounds = _step_pairs(inst, step, substeps, n_steps)
    by_step = np.argsort(step, kind="stable")
    mbounds = np.searchsorted(step[by_step], np.arange(n_steps + 1))
    seeded = False
    j = 0
    while j < n_steps:
        if counts[j] == 0:
            j += 1
            continue
        if not seeded or counts[max(0, j - substeps) : j].sum() == 0:
            if seeded and stats is not None:
                stats.breaks.append(int(j))
            end = min(1.0, j * width + r)
            seeds = np.flatnonzero((pos >= j * width) & (pos < end))
            labels[seeds] = initial_block_recovery(inst, (j * width, end), tol, stats)
            seeded = True
            j += substeps
            continue
        members = by_step[mbounds[j] : mbounds[j + 1]]
        lo, hi = bounds[j], bounds[j + 1]
        s, t, k = src[lo:hi], tgt[lo:hi], idx[lo:hi]
        f = np.bincount(t, weights=labels[s] * terms[k], minlength=n_nodes)
        labels[members] = np.where(f[members] > TIE_TOL, 1, -1)
        if stats is not None:
            stats.add("propagate_pairs", hi - lo)
            stats.add("propagate_nodes", len(members))
        j += 1
    return labels


def refine_statistic(inst: GkbmInstance, labels, stats: RuntimeStats | None = None) -> np.ndarray:
    """g(u) = sum over the visibility region of u of label(v) * pair term.

    Equals the log-likelihood ratio of sigma(u)=+1 against sigma(u)=-1 when
    ``labels`` are the true labels of every other node.
    """
    lab = np.asarray(labels, dtype=np.float64)
    terms = _pair_terms(inst)
    n_nodes = inst.node_count
    g = np.bincount(inst.pair_u, weights=lab[inst.pair_v] * terms, minlength=n_nodes)
    g += np.bincount(inst.pair_v, weights=lab[inst.pair_u] * terms, minlength=n_nodes)
    if stats is not None:
        stats.add("refine_pairs", 2 * inst.pair_count)
        stats.add("refine_nodes", n_nodes)
    return g


def refine(inst: GkbmInstance, initial, stats: RuntimeStats | None = None) -> np.ndarray:
    g = refine_statistic(inst, initial, stats)
    return np.where(g > TIE_TOL, 1, -1).astype(np.int8)


def full_pipeline(inst: GkbmInstance, tol: float = 1e-9) -> tuple[np.ndarray, RuntimeStats]:
    stats = RuntimeStats(edge_count=inst.edge_count, candidate_pairs=inst.pair_count)
    start = time.perf_counter()
    first = phase1(inst, tol, stats)
    final = refine(inst, first, stats)
    stats.wall_time = time.perf_counter() - start
    return final, stats
