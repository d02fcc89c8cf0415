import math
import warnings

import numpy as np
import pytest

from gkbm.kernel import Kernel, approximate, psi_n, scale


def test_indicator_values():
    k = Kernel.indicator(1.0)
    assert k(0.5) == 1.0
    assert k(1.0) == 1.0
    assert k(1.5) == 0.0
    assert k.epsilon == 1.0


def test_triangular_midpoint():
    assert Kernel.triangular(2.0)(1.0) == 0.5
    assert Kernel.triangular(2.0).epsilon == 0.0


def test_texp_values():
    k = Kernel.texp(0.5, 2.0)
    assert k(1.0) == pytest.approx(math.exp(-0.5))
    assert k(2.5) == 0.0
    assert k.epsilon == pytest.approx(math.exp(-1.0))
    assert k.integral() == pytest.approx((1 - math.exp(-1.0)) / 0.5)


def test_pwc_values_and_epsilon():
    k = Kernel.pwc([(0, 0.5, 0.9), (0.5, 1.5, 0.4)])
    assert k.kappa == 1.5
    assert k(0.2) == 0.9
    assert k(0.5) == 0.4
    assert k(1.5) == 0.4
    assert k(1.6) == 0.0
    assert k.epsilon == 0.4
    gap = Kernel.pwc([(0, 0.5, 0.9), (1.0, 1.5, 0.4)])
    assert gap.epsilon == 0.0
    assert gap(0.75) == 0.0


@pytest.mark.parametrize(
    "pieces",
    [[(0, 1, 0.5), (0.5, 2, 0.3)], [(0, 1, 0.5), (1, 2, 0.5)], [(0, 1, 1.5)], [], [(1, 0.5, 0.2)]],
)
def test_pwc_rejects_bad_pieces(pieces):
    with pytest.raises(ValueError):
        Kernel.pwc(pieces)


def test_json_round_trip():
    for k in [Kernel.indicator(1.5), Kernel.triangular(2.0), Kernel.texp(0.3, 1.0), Kernel.pwc([(0, 1, 0.8), (1, 2, 0.2)])]:
        again = Kernel.from_dict(k.to_dict())
        xs = np.linspace(0, 3, 301)
        assert np.array_equal(again(xs), k(xs))
        assert again.kappa == k.kappa


@pytest.mark.parametrize("spec", [{}, {"shape": "gauss", "kappa": 1}, {"shape": "texp", "kappa": 1}, {"shape": "indicator"}])
def test_json_errors(spec):
    with pytest.raises(ValueError):
        Kernel.from_dict(spec)


def test_epsilon_override_and_check():
    k = Kernel.triangular(1.0, epsilon=0.25)
    assert k.epsilon == 0.25
    with pytest.warns(RuntimeWarning):
        assert not Kernel.triangular(1.0).check_recoverable()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert Kernel.indicator(1.0).check_recoverable()


def test_psi_examples():
    k = Kernel.indicator(1.0)
    assert psi_n(k, 100, 0.1, 0.1) == 1.0
    # distance exactly at the support radius is inside
    d = math.log(100) / 100
    assert psi_n(k, 100, 0.0, d) == 1.0
    t = Kernel.triangular(2.0)
    assert psi_n(t, 1000, 0.2, 0.2 + math.log(1000) / 1000) == pytest.approx(0.5)
    assert psi_n(t, 1000, 0.0, 0.3) == 0.0


def test_psi_zero_beyond_radius():
    k = Kernel.texp(1.0, 1.5)
    n = 500
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-0.5, 0.5, (2, 20_000))
    psi = psi_n(k, n, x, y)
    from gkbm.geometry import torus_distance

    d = torus_distance(x, y)
    assert np.all(d[psi > 0] <= 1.5 * math.log(n) / n + 1e-15)
    assert np.array_equal(psi, psi_n(k, n, y, x))


def test_approximate_indicator_is_itself():
    a = approximate(Kernel.indicator(1.0), 4)
    assert a.ell == 1
    assert a.sup_error == 0.0
    assert a(0.5) == 1.0


def test_approximate_triangular_two_pieces():
    a = approximate(Kernel.triangular(1.0), 2)
    assert np.allclose(a.levels, [0.5, 0.0])
    assert np.allclose(a.lefts, [0.0, 0.5])
    assert a.sup_error == pytest.approx(0.5)


@pytest.mark.parametrize("ell", [1, 3, 10, 100, 1000])
def test_triangular_error_lipschitz(ell):
    a = approximate(Kernel.triangular(1.0), ell)
    assert a.sup_error <= 1.0 / ell + 1e-12


def test_approximation_stays_below_kernel():
    for k in [Kernel.triangular(1.3), Kernel.texp(2.0, 1.0), Kernel.pwc([(0, 1, 0.9), (1, 2, 0.5), (2, 3, 0.1)])]:
        a = approximate(k, 2)
        xs = np.linspace(0, k.kappa, 10_001)
        assert np.all(a(xs) <= k(xs) + 1e-15)


def test_scale():
    assert scale(100) == pytest.approx(100 / math.log(100))
