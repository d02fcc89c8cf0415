import json
import math

import numpy as np
import pytest
from scipy import stats

from gkbm.geometry import support_radius, torus_distance
from gkbm.kernel import Kernel
from gkbm.model import (
    GkbmInstance,
    GkbmParams,
    agreement,
    canonical,
    edge_probability,
    insert_node,
    is_exact,
    sample,
    sample_naive,
    support_pairs,
)


def brute_pairs(inst):
    loc = inst.locations
    out = set()
    for u in range(len(loc)):
        d = torus_distance(loc[u], loc[u + 1 :])
        hit = np.flatnonzero(inst.params.kernel(inst.params.n / math.log(inst.params.n) * d) > 0)
        out.update((u, u + 1 + int(v)) for v in hit)
    return out


def test_determinism(small_params):
    a, b = sample(small_params), sample(small_params)
    assert np.array_equal(a.locations, b.locations)
    assert np.array_equal(a.communities, b.communities)
    assert np.array_equal(a.edges, b.edges)
    c = sample(small_params.with_seed(8))
    assert not np.array_equal(a.locations[:10], c.locations[:10])


def test_support_pairs_match_brute_force():
    for kernel in [Kernel.indicator(1.0), Kernel.triangular(2.0), Kernel.pwc([(0, 0.3, 0.8), (0.6, 1.2, 0.4)])]:
        inst = sample(GkbmParams(2.0, 300, 0.5, 0.2, kernel, 3))
        got = set(zip(inst.pair_u.tolist(), inst.pair_v.tolist()))
        assert got == brute_pairs(inst)


def test_wraparound_pairs_found():
    params = GkbmParams(1.0, 100, 1.0, 1.0, Kernel.indicator(1.0))
    loc = np.array([0.5, -0.49, 0.0])
    pu, pv, psi = support_pairs(loc, params)
    assert list(zip(pu.tolist(), pv.tolist())) == [(0, 1)]


def test_zero_probabilities_give_no_edges():
    inst = sample(GkbmParams(2.0, 1000, 0.0, 0.0, Kernel.indicator(1.0), 1))
    assert inst.edge_count == 0
    assert inst.pair_count > 0


def test_full_probabilities_give_hard_rgg():
    inst = sample(GkbmParams(2.0, 400, 1.0, 1.0, Kernel.indicator(1.0), 2))
    assert set(map(tuple, inst.edges.tolist())) == brute_pairs(inst)


def test_edges_are_local_and_simple():
    inst = sample(GkbmParams(2.0, 2000, 0.7, 0.3, Kernel.texp(1.0, 1.5), 4))
    e = inst.edges
    assert np.all(e[:, 0] < e[:, 1])
    r = support_radius(2000, 1.5)
    assert np.all(torus_distance(inst.locations[e[:, 0]], inst.locations[e[:, 1]]) <= r + 1e-15)
    gap = inst.partition.gap(inst.blocks[e[:, 0]], inst.blocks[e[:, 1]])
    last = inst.partition.block_count - 1
    # gap-2 edges only occur across the narrow last block
    far = gap >= 2
    assert far.any()
    ends = np.unique(inst.blocks[e[far]])
    assert set(ends.tolist()) <= {last - 1, last, 0, 1}
    assert np.all(gap <= 2)


def test_neighbor_lists_symmetric_and_sorted(small_params):
    inst = sample(small_params)
    for u in range(0, inst.node_count, 37):
        nb = inst.neighbors(u)
        assert np.all(np.diff(nb) > 0)
        assert u not in nb
        for v in nb:
            assert u in inst.neighbors(v)
    assert inst.degrees().sum() == 2 * inst.edge_count


def test_empty_and_singleton_instances():
    params = GkbmParams(1e-6, 100, 0.5, 0.1, Kernel.indicator(1.0), 0)
    inst = sample(params)
    assert inst.node_count == 0
    assert inst.edges.shape == (0, 2)
    one = insert_node(inst, 0.1, 1)
    assert one.node_count == 1 and one.edge_count == 0


def test_params_validation():
    k = Kernel.indicator(1.0)
    for bad in [dict(lam=0), dict(n=2), dict(p=1.5), dict(q=-0.1), dict(seed=-1), dict(seed=2**64)]:
        kw = dict(lam=1.0, n=100, p=0.5, q=0.1, kernel=k, seed=0)
        kw.update(bad)
        with pytest.raises(ValueError):
            GkbmParams(**kw)
    with pytest.raises(ValueError):
        GkbmParams(1.0, 10, 0.5, 0.1, Kernel.indicator(5.0))


def test_edge_probability_examples():
    params = GkbmParams(1.0, 1000, 0.8, 0.2, Kernel.indicator(1.0))
    assert edge_probability(params, 0.0, 0.3, True) == 0.0
    assert edge_probability(params, 0.0, 0.001, True) == 0.8
    assert edge_probability(params, 0.0, 0.001, False) == 0.2
    tri = GkbmParams(1.0, 1000, 0.8, 0.2, Kernel.triangular(2.0))
    assert edge_probability(tri, 0.0, math.log(1000) / 1000, True) == pytest.approx(0.4)


def test_agreement_examples():
    rng = np.random.default_rng(0)
    a = rng.choice([-1, 1], 10)
    assert agreement(a, a) == (1, 10, 10)
    assert agreement(a, -a) == (-1, 10, 10)
    b = a.copy()
    b[3] *= -1
    assert agreement(b, a) == (1, 9, 10)
    c = a.copy()
    c[:2] = 0
    assert agreement(c, a) == (1, 8, 8)
    assert is_exact(-a, a) and not is_exact(b, a) and not is_exact(c, a)
    with pytest.raises(ValueError):
        agreement(a, a[:5])


def test_canonical():
    lab, flipped = canonical([-1, 1, 1])
    assert flipped and lab.tolist() == [1, -1, -1]
    lab, flipped = canonical([0, 1, -1])
    assert not flipped


def test_json_round_trip(tmp_path, small_params):
    inst = sample(small_params)
    path = tmp_path / "inst.json"
    inst.save(path)
    doc = json.loads(path.read_text())
    assert doc["format"] == "gkbm-instance" and doc["N"] == inst.node_count
    again = GkbmInstance.load(path)
    assert np.array_equal(again.locations, inst.locations)
    assert np.array_equal(again.pair_u, inst.pair_u)
    assert np.array_equal(again.pair_edge, inst.pair_edge)
    assert again.params == inst.params


def test_json_rejects_nonlocal_edge(small_params):
    doc = sample(small_params).to_json()
    far = int(np.argmax(torus_distance(doc["locations"][0], np.array(doc["locations"]))))
    doc["edges"].append(sorted([0, far]))
    with pytest.raises(ValueError):
        GkbmInstance.from_json(doc)
    with pytest.raises(ValueError):
        GkbmInstance.from_json({"format": "other"})


def test_mean_degree_formula():
    lam, n, p, q = 2.0, 2000, 0.7, 0.2
    kernel = Kernel.triangular(1.5)
    expected = lam * math.log(n) * (p + q) * kernel.integral()
    means = []
    for s in range(30):
        inst = sample(GkbmParams(lam, n, p, q, kernel, s))
        means.append(inst.degrees().mean())
    means = np.array(means)
    se = means.std(ddof=1) / math.sqrt(len(means))
    assert abs(means.mean() - expected) <= 3 * se + 0.01 * expected


@pytest.mark.slow
def test_block_counts_are_poisson():
    lam, n, kappa = 2.0, 2000, 1.0
    counts = []
    for s in range(200):
        inst = sample(GkbmParams(lam, n, 0.0, 0.0, Kernel.indicator(kappa), s))
        c = np.bincount(inst.blocks, minlength=inst.partition.block_count)
        counts.append(c[:-1])  # drop the narrow last block
    counts = np.concatenate(counts)
    mu = lam * kappa * math.log(n)
    se = counts.std() / math.sqrt(len(counts))
    assert abs(counts.mean() - mu) <= 3 * se
    assert 0.8 <= counts.var() / counts.mean() <= 1.2


@pytest.mark.slow
def test_edge_count_scaling():
    ns = np.array([500, 1000, 2000, 4000, 8000])
    edges = [np.mean([sample(GkbmParams(2.0, int(n), 0.8, 0.2, Kernel.indicator(1.0), s)).edge_count for s in range(3)]) for n in ns]
    slope = np.polyfit(np.log(ns * np.log(ns)), np.log(edges), 1)[0]
    assert 0.9 <= slope <= 1.1


@pytest.mark.slow
def test_block_sampler_matches_naive_sampler():
    params = GkbmParams(2.0, 300, 0.6, 0.2, Kernel.texp(0.8, 1.5), 0)
    fast, slow = [], []
    rng = np.random.default_rng(99)
    for s in range(15):
        fast.append(sample(params.with_seed(s)).degrees())
        slow.append(sample_naive(params, rng).degrees())
    res = stats.ks_2samp(np.concatenate(fast), np.concatenate(slow))
    assert res.pvalue > 0.001


@pytest.mark.slow
def test_palm_neighbour_counts_are_poisson():
    # a node inserted at 0: same-community neighbours within each kernel piece
    lam, n = 2.0, 50
    kernel = Kernel.pwc([(0, 0.5, 0.9), (0.5, 1.0, 0.4)])
    p, q = 0.8, 0.3
    sc = n / math.log(n)
    counts = np.zeros((10_000, 2))
    for s in range(len(counts)):
        inst = insert_node(sample(GkbmParams(lam, n, p, q, kernel, s)), 0.0, 1, seed=s)
        u = inst.node_count - 1
        nb = inst.neighbors(u)
        nb = nb[inst.communities[nb] == 1]
        x = sc * torus_distance(0.0, inst.locations[nb])
        counts[s] = [(x < 0.5).sum(), ((x >= 0.5) & (x <= 1.0)).sum()]
    for j, (c, vol) in enumerate([(0.9, 0.5), (0.4, 0.5)]):
        mu = lam * p * c * vol * math.log(n)
        se = counts[:, j].std() / math.sqrt(len(counts))
        assert abs(counts[:, j].mean() - mu) <= 3 * se
