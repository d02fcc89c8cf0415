"""Sampling GKBM instances and the labeling helpers shared by every stage."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import BlockPartition, shifted, support_radius, torus_distance
from .kernel import Kernel, psi_n, scale

FORMAT = "gkbm-instance"
VERSION = 1

# Philox counter high word selects the stream; the key is the seed
STREAM_COUNT, STREAM_LOCATIONS, STREAM_COMMUNITIES, STREAM_EDGES, STREAM_INSERT = range(5)


def philox_stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, stream]))


@dataclass(frozen=True)
class GkbmParams:
    lam: float
    n: int
    p: float
    q: float
    kernel: Kernel
    seed: int = 0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "seed", int(self.seed))
        # raises if the block width is not below 1/2
        BlockPartition(self.n, self.kernel.kappa)

    @property
    def radius(self) -> float:
        return support_radius(self.n, self.kernel.kappa)

    @property
    def partition(self) -> BlockPartition:
        return BlockPartition(self.n, self.kernel.kappa)

    def with_seed(self, seed: int) -> "GkbmParams":
        return GkbmParams(self.lam, self.n, self.p, self.q, self.kernel, seed)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "n": self.n,
            "p": self.p,
            "q": self.q,
            "kernel": self.kernel.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GkbmParams":
        try:
            return cls(
                float(d["lambda"]),
                int(d["n"]),
                float(d["p"]),
                float(d["q"]),
                Kernel.from_dict(d["kernel"]),
                int(d.get("seed", 0)),
            )
        except KeyError as exc:
            raise ValueError(f"params missing field {exc}") from None


@dataclass(frozen=True, eq=False)
class GkbmInstance:
    """A sampled graph together with its hidden labels and locations.

    The graph is stored as the list of *support pairs*: every unordered pair
    (u, v), u < v, whose kernel value psi is positive, with a flag for whether
    the edge is present. Pairs outside the support can never be edges and
    carry no likelihood weight, so nothing else needs storing.
    """

    params: GkbmParams
    locations: np.ndarray
    communities: np.ndarray
    pair_u: np.ndarray
    pair_v: np.ndarray
    pair_psi: np.ndarray
    pair_edge: np.ndarray

    def __post_init__(self):
        for name in ("locations", "communities", "pair_u", "pair_v", "pair_psi", "pair_edge"):
            getattr(self, name).setflags(write=False)

    @property
    def node_count(self) -> int:
        return len(self.locations)

    @property
    def partition(self) -> BlockPartition:
        return self.params.partition

    @property
    def pair_count(self) -> int:
        return len(self.pair_u)

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.pair_edge))

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) array of edges with u < v, sorted."""
        return np.column_stack([self.pair_u[self.pair_edge], self.pair_v[self.pair_edge]])

    @cached_property
    def blocks(self) -> np.ndarray:
        return self.partition.assign(self.locations)

    def neighbors(self, u: int) -> np.ndarray:
        indptr, idx = self._csr
        return idx[indptr[u] : indptr[u + 1]]

    @cached_property
    def _csr(self):
        e = self.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        counts = np.bincount(src, minlength=self.node_count)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr, dst[order]

    def degrees(self) -> np.ndarray:
        e = self.edges
        return np.bincount(e.ravel(), minlength=self.node_count)

    # -- serialization ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "params": self.params.to_dict(),
            "N": self.node_count,
            "locations": [float(x) for x in self.locations],
            "communities": [int(c) for c in self.communities],
            "edges": self.edges.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GkbmInstance":
        if doc.get("format") != FORMAT:
            raise ValueError(f'not a {FORMAT} document (missing "format": "{FORMAT}")')
        if doc.get("version") != VERSION:
            raise ValueError(f"unsupported instance version {doc.get('version')!r}")
        params = GkbmParams.from_dict(doc["params"])
        loc = np.asarray(doc["locations"], dtype=np.float64)
        com = np.asarray(doc["communities"], dtype=np.int8)
        n_nodes = int(doc["N"])
        if len(loc) != n_nodes or len(com) != n_nodes:
            raise ValueError("locations/communities length does not match N")
        if not np.all(np.isin(com, (-1, 1))):
            raise ValueError("communities must be +1 or -1")
        pu, pv, psi = support_pairs(loc, params)
        edges = np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2)
        if np.any(edges[:, 0] >= edges[:, 1]):
            raise ValueError("edges must be listed as [u, v] with u < v")
        pair_key = pu * n_nodes + pv
        edge_key = edges[:, 0] * n_nodes + edges[:, 1]
        pos = np.searchsorted(pair_key, edge_key)
        ok = pos < len(pair_key)
        ok[ok] = pair_key[pos[ok]] == edge_key[ok]
        if not np.all(ok):
            bad = edges[~ok][0]
            raise ValueError(f"edge {bad.tolist()} lies outside the kernel support")
        flag = np.zeros(len(pu), dtype=bool)
        flag[pos] = True
        return cls(params, loc, com, pu, pv, psi, flag)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "GkbmInstance":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def support_pairs(locations: np.ndarray, params: GkbmParams):
    """All pairs u < v with psi_n(X_u, X_v) > 0, sorted by (u, v).

    A sweep over the sorted coordinates visits only pairs within the support
    radius (plus the wraparound seam), so work is proportional to the output.
    """
    loc = np.asarray(locations, dtype=np.float64)
    n_nodes = len(loc)
    empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
    if n_nodes < 2:
        return empty
    r = params.radius
    s = shifted(loc)
    order = np.argsort(s, kind="stable")
    ss = s[order]
    idx = np.arange(n_nodes)
    # forward window inside [0, 1)
    hi = np.searchsorted(ss, ss + r, side="right")
    count = hi - idx - 1
    a = np.repeat(idx, count)
    start = np.cumsum(count) - count
    b = a + 1 + (np.arange(count.sum()) - np.repeat(start, count))
    # windows running past 1 wrap to the front of the sorted order
    wrap_hi = np.searchsorted(ss, ss + r - 1.0, side="right")
    wrap_hi = np.minimum(wrap_hi, idx)
    wc = np.maximum(wrap_hi, 0)
    wa = np.repeat(idx, wc)
    wstart = np.cumsum(wc) - wc
    wb = np.arange(wc.sum()) - np.repeat(wstart, wc)
    a = np.concatenate([a, wa])
    b = np.concatenate([b, wb])
    u = order[a]
    v = order[b]
    lo, hi_ = np.minimum(u, v), np.maximum(u, v)
    psi = params.kernel(scale(params.n) * torus_distance(loc[lo], loc[hi_]))
    keep = psi > 0
    lo, hi_, psi = lo[keep], hi_[keep], psi[keep]
    srt = np.lexsort((hi_, lo))
    return lo[srt].astype(np.int64), hi_[srt].astype(np.int64), np.asarray(psi[srt], dtype=np.float64)


def sample(params: GkbmParams) -> GkbmInstance:
    """Draw one instance; identical params (including seed) give identical output."""
    seed = params.seed
    n_nodes = int(philox_stream(seed, STREAM_COUNT).poisson(params.lam * params.n))
    loc = 0.5 - philox_stream(seed, STREAM_LOCATIONS).random(n_nodes)
    com = np.where(philox_stream(seed, STREAM_COMMUNITIES).random(n_nodes) < 0.5, 1, -1).astype(np.int8)
    pu, pv, psi = support_pairs(loc, params)
    prob = np.where(com[pu] == com[pv], params.p, params.q) * psi
    flag = philox_stream(seed, STREAM_EDGES).random(len(pu)) < prob
    return GkbmInstance(params, loc, com, pu, pv, psi, flag)


def sample_naive(params: GkbmParams, rng: np.random.Generator) -> GkbmInstance:
    """Reference sampler scanning all N^2 pairs; for small n only."""
    n_nodes = rng.poisson(params.lam * params.n)
    loc = 0.5 - rng.random(n_nodes)
    com = np.where(rng.random(n_nodes) < 0.5, 1, -1).astype(np.int8)
    us, vs, psis, flags = [], [], [], []
    for u in range(n_nodes):
        # one row of the full N x N scan at a time
        psi = np.atleast_1d(psi_n(params.kernel, params.n, loc[u], loc[u + 1 :]))
        r = np.where(com[u + 1 :] == com[u], params.p, params.q)
        link = rng.random(len(psi)) < r * psi
        keep = psi > 0
        us.append(np.full(keep.sum(), u))
        vs.append(u + 1 + np.flatnonzero(keep))
        psis.append(psi[keep])
        flags.append(link[keep])
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.empty(0, dt)
    return GkbmInstance(params, loc, com, cat(us, np.int64), cat(vs, np.int64), cat(psis, np.float64), cat(flags, bool))


def insert_node(inst: GkbmInstance, location: float, community: int, seed: int = 0) -> GkbmInstance:
    """Add one node at a fixed location and sample its edges.

    By Slivnyak's theorem the result is distributed as an instance conditioned
    on having a node at ``location``. The new node gets index N.
    """
    params = inst.params
    new = inst.node_count
    loc = np.append(inst.locations, location)
    com = np.append(inst.communities, np.int8(community)).astype(np.int8)
    psi = psi_n(params.kernel, params.n, location, inst.locations)
    psi = np.atleast_1d(np.asarray(psi, dtype=np.float64))
    hit = np.flatnonzero(psi > 0)
    prob = np.where(inst.communities[hit] == community, params.p, params.q) * psi[hit]
    flag = philox_stream(seed, STREAM_INSERT).random(len(hit)) < prob
    pu = np.concatenate([inst.pair_u, hit])
    pv = np.concatenate([inst.pair_v, np.full(len(hit), new)])
    ps = np.concatenate([inst.pair_psi, psi[hit]])
    pe = np.concatenate([inst.pair_edge, flag])
    srt = np.lexsort((pv, pu))
    return GkbmInstance(params, loc, com, pu[srt], pv[srt], ps[srt], pe[srt])


def edge_probability(params: GkbmParams, x: float, y: float, same_community: bool) -> float:
    r = params.p if same_community else params.q
    return r * float(psi_n(params.kernel, params.n, x, y))


# -- labelings ------------------------------------------------------------


def agreement(a, b) -> tuple[int, int, int]:
    """(flip, matched, compared) over nodes labelled in both a and b."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"labelings differ in length: {a.shape} vs {b.shape}")
    both = (a != 0) & (b != 0)
    same = int(np.count_nonzero(both & (a == b)))
    opposite = int(np.count_nonzero(both & (a == -b)))
    compared = int(np.count_nonzero(both))
    if same >= opposite:
        return 1, same, compared
    return -1, opposite, compared


def is_exact(estimate, truth) -> bool:
    _, matched, compared = agreement(estimate, truth)
    return matched == compared == len(truth)


def canonical(labels) -> tuple[np.ndarray, bool]:
    """Flip so the first labelled node is +1; returns (labels, flipped)."""
    lab = np.asarray(labels, dtype=np.int8)
    nz = np.flatnonzero(lab)
    if len(nz) and lab[nz[0]] < 0:
        return (-lab).astype(np.int8), True
    return lab.copy(), False
