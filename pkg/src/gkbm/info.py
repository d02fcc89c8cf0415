"""Recovery thresholds, divergences and concentration bounds.

Everything here is a pure function of the model parameters; nothing samples.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .kernel import Kernel, SimpleApproximation
from .quadrature import integrate_pieces

BOUNDARY_TOL = 1e-9
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _hellinger_gap(phi, p, q):
    """1 - sqrt(pq) phi - sqrt((1 - p phi)(1 - q phi)), pointwise."""
    return 1.0 - math.sqrt(p * q) * phi - np.sqrt((1.0 - p * phi) * (1.0 - q * phi))


def info_metric(kernel: Kernel, p: float, q: float, tol: float = 1e-9) -> float:
    """I_phi(p, q) = 2 * integral over [0, kappa] of the Hellinger gap of phi.

    Adaptive Simpson split at the kernel's breakpoints; the integrand vanishes
    beyond kappa so nothing past the support is integrated.
    """
    _check_prob(p, "p")
    _check_prob(q, "q")

    def integrand(x):
        return float(_hellinger_gap(kernel(x), p, q))

    return 2.0 * integrate_pieces(integrand, kernel.breakpoints(), tol / 2.0)


def closed_form_indicator_info(kappa: float, p: float, q: float) -> float:
    """I_phi for the indicator of [0, kappa]: 2 kappa (1 - sqrt(pq) - sqrt((1-p)(1-q)))."""
    return 2.0 * kappa * (1.0 - math.sqrt(p * q) - math.sqrt((1.0 - p) * (1.0 - q)))


def simple_info(approx: SimpleApproximation, p: float, q: float) -> float:
    """I_phi evaluated on a step-function approximation (exact finite sum)."""
    gap = _hellinger_gap(approx.levels, p, q)
    return float(2.0 * np.sum(approx.volumes * gap))


@dataclass(frozen=True)
class PoissonProfile:
    """Poisson means per region, each a coefficient multiplying log n."""

    coefficients: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.ndim != 1:
            raise ValueError("profile coefficients must be a 1-D vector")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("profile coefficients must be finite and non-negative")
        object.__setattr__(self, "coefficients", c)

    def __len__(self):
        return len(self.coefficients)


def _ch_objective(t, a, b):
    # alpha^t beta^(1-t) with 0^t = 0 for t in (0, 1)
    with np.errstate(divide="ignore"):
        la = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), -np.inf)
        lb = np.where(b > 0, np.log(np.where(b > 0, b, 1.0)), -np.inf)
    if t == 0.0:
        cross = b
    elif t == 1.0:
        cross = a
    else:
        cross = np.exp(t * la + (1.0 - t) * lb)
    return float(np.sum(t * a + (1.0 - t) * b - cross))


def ch_divergence(alpha: PoissonProfile, beta: PoissonProfile, tol: float = 1e-10) -> tuple[float, float]:
    """Chernoff-Hellinger divergence D_+ and its maximising t in [0, 1].

    The objective is concave in t, so golden-section search finds the
    supremum; the endpoints (where the objective is 0) are compared too.
    """
    a = np.asarray(getattr(alpha, "coefficients", alpha), dtype=np.float64)
    b = np.asarray(getattr(beta, "coefficients", beta), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"profiles differ in length: {a.shape} vs {b.shape}")
    lo, hi = 0.0, 1.0
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = _ch_objective(x1, a, b), _ch_objective(x2, a, b)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = _ch_objective(x2, a, b)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = _ch_objective(x1, a, b)
    t = 0.5 * (lo + hi)
    best = (_ch_objective(t, a, b), t)
    for edge in (0.0, 1.0):
        val = _ch_objective(edge, a, b)
        if val > best[0]:
            best = (val, edge)
    return best


def profiles_for_test(approx: SimpleApproximation, lam: float, p: float, q: float):
    """Null and alternate Poisson profiles for testing a node's community.

    Per region s the entries are (same-community neighbours, same
    non-neighbours, other-community neighbours, other non-neighbours) with
    means lam * (p c_s, 1 - p c_s, q c_s, 1 - q c_s) * vol(Gamma_s). The
    region around a node is two-sided (twice vol(Gamma_s)) and each community
    carries half the intensity, so the two factors cancel. The alternate
    hypothesis swaps the roles of p and q.
    """
    c = approx.levels
    v = lam * approx.volumes
    null = np.column_stack([p * c, 1 - p * c, q * c, 1 - q * c]) * v[:, None]
    alt = np.column_stack([q * c, 1 - q * c, p * c, 1 - p * c]) * v[:, None]
    labels = tuple(f"{name}[{s}]" for s in range(approx.ell) for name in ("P+", "P-", "Q+", "Q-"))
    return PoissonProfile(null.ravel(), labels), PoissonProfile(alt.ravel(), labels)


def init_exponent(p: float, q: float) -> float:
    """Exponent governing initial-block recovery, as stated in closed form.

    min{ (p+q)^2/4 log((p+q)^2/(pq)) + 2(p-q)^2,
         (p-q)^2 - (p+q)^2 log(2(p^2+q^2)/(p+q)^2) }
    """
    _check_open(p, q)
    s2 = (p + q) ** 2
    d2 = (p - q) ** 2
    first = s2 / 4.0 * math.log(s2 / (p * q)) + 2.0 * d2
    second = d2 - s2 * math.log(2.0 * (p * p + q * q) / s2)
    return min(first, second)


def init_exponent_chernoff(p: float, q: float) -> float:
    """Variant read off the two Chernoff bounds for common-neighbour counts.

    The different-community bound has exponent
    lam*I*((p+q)^2/4 log((p+q)^2/(4pq)) + (p-q)^2/2) and the same-community
    bound lam*I/4*((p-q)^2 - (p+q)^2 log(2(p^2+q^2)/(p+q)^2)). This returns
    the value X with both bounds at most exp(-lam*I*X/4). It differs from
    :func:`init_exponent` in constants only and feeds diagnostics.
    """
    _check_open(p, q)
    s2 = (p + q) ** 2
    d2 = (p - q) ** 2
    first = s2 * math.log(s2 / (4.0 * p * q)) + 2.0 * d2
    second = d2 - s2 * math.log(2.0 * (p * p + q * q) / s2)
    return min(first, second)


def _lower_tail_rate(x: float, lk: float) -> float:
    # h(x) = x (log x - log lk) + lk - x, decreasing on (0, lk]
    return x * (math.log(x) - math.log(lk)) + lk - x


def solve_delta(lam_kappa: float, tol: float = 1e-10) -> float:
    """delta = lam_kappa - gamma with h(gamma) = (1 + lam_kappa) / 2, by bisection."""
    if lam_kappa <= 1:
        raise ValueError("delta is only defined for lam*kappa > 1")
    target = 0.5 * (1.0 + lam_kappa)
    lo, hi = 1e-12, lam_kappa
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _lower_tail_rate(mid, lam_kappa) > target:
            lo = mid
        else:
            hi = mid
    return lam_kappa - 0.5 * (lo + hi)


@dataclass(frozen=True)
class ThresholdReport:
    lambda_kappa: float
    info: float
    lambda_info: float
    init_exponent: float | None
    epsilon: float
    delta_cap: float
    delta_low: float | None
    prop_budget: float | None
    c1: float | None
    c2: float | None
    verdict: str

    def to_dict(self) -> dict:
        return asdict(self)


def verdict(lambda_kappa: float, lambda_info: float, tol: float = BOUNDARY_TOL) -> str:
    if lambda_kappa < 1 - tol:
        return "impossible_disconnect"
    if abs(lambda_kappa - 1) <= tol:
        return "boundary"
    if lambda_info < 1 - tol:
        return "impossible_information"
    if abs(lambda_info - 1) <= tol:
        return "boundary"
    return "recoverable"


def derived_constants(lam: float, kernel: Kernel, p: float, q: float, tol: float = 1e-9) -> ThresholdReport:
    """Threshold quantities and the constants used by the achievability argument.

    Constants that are undefined for the given parameters (delta when
    lam*kappa <= 1, anything divided by epsilon when epsilon = 0) are None.
    Raises ValueError when p == q, where the propagation budget divides by 0.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if p == q:
        raise ValueError("p == q: the propagation budget M divides by (sqrt p - sqrt q)^2 = 0")
    lk = lam * kernel.kappa
    info = info_metric(kernel, p, q, tol)
    eps = kernel.epsilon
    gap = (math.sqrt(p) - math.sqrt(q)) ** 2
    try:
        iprime = init_exponent(p, q)
    except ValueError:
        iprime = None
    delta_cap = lk + 1.0 + math.sqrt(2.0 * lk + 1.0)
    delta_low = solve_delta(lk) if lk > 1 else None
    budget = c2 = None
    if eps <= 0:
        kernel.check_recoverable()
    if delta_low is not None and eps > 0:
        budget = 10.0 / (4.0 * delta_low * eps * gap)
        c2 = delta_low * eps * gap / 2.0
    c1 = lam * eps**2 * kernel.kappa * iprime / 4.0 if iprime is not None else None
    return ThresholdReport(
        lambda_kappa=lk,
        info=info,
        lambda_info=lam * info,
        init_exponent=iprime,
        epsilon=eps,
        delta_cap=delta_cap,
        delta_low=delta_low,
        prop_budget=budget,
        c1=c1,
        c2=c2,
        verdict=verdict(lk, lam * info),
    )


def empty_block_probability(lam: float, kappa: float, n: int) -> float:
    """P(a full-width block holds no node) = n^(-lam*kappa)."""
    if n < 3:
        raise ValueError("n must be >= 3")
    return float(n) ** (-lam * kappa)


def poisson_tail_bounds(mu: float, t: float) -> tuple[float, float]:
    """Chernoff bounds (on P(X >= t), on P(X <= t)) for X ~ Poisson(mu).

    Each bound is reported as 1 on the side of the mean where it does not apply.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    upper = math.exp(-((t - mu) ** 2) / (2.0 * t)) if t >= mu else 1.0
    if t >= mu:
        lower = 1.0
    elif t == 0:
        lower = math.exp(-mu)
    else:
        lower = math.exp(-(t * math.log(t / mu) + mu - t))
    return upper, lower


def binomial_tail_bound(n: int, mu: float, t: float) -> float:
    """Bound (e^t / (1+t)^(1+t))^mu on P(X >= mu (1 + t)) for X binomial with mean mu <= n."""
    if mu < 0 or mu > n:
        raise ValueError("binomial mean must lie in [0, n]")
    if t <= -1:
        raise ValueError("t must exceed -1")
    return math.exp(mu * (t - (1.0 + t) * math.log1p(t)))


def renyi_divergence(pm, qm, alpha: float) -> float:
    """alpha-Renyi divergence between two discrete distributions."""
    if alpha == 1:
        raise ValueError("alpha = 1 is the KL limit, not covered here")
    pm = np.asarray(pm, dtype=np.float64)
    qm = np.asarray(qm, dtype=np.float64)
    mask = pm > 0
    s = np.sum(pm[mask] ** alpha * qm[mask] ** (1.0 - alpha))
    return float(math.log(s) / (alpha - 1.0))


def bernoulli(r: float) -> np.ndarray:
    return np.array([r, 1.0 - r])


def renyi_bounds(p: float, q: float, epsilon: float) -> tuple[float, float, float, float]:
    """Bounds xi_1..xi_4 on Bernoulli Renyi divergences for psi in [epsilon, 1].

    xi_1, xi_2 bound D_3/2 in each direction, xi_3 bounds D_1/2 from above and
    xi_4 = epsilon (sqrt p - sqrt q)^2 bounds it from below.
    """
    _check_open(p, q)
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    xi1 = 2.0 * math.log(p**1.5 / math.sqrt(q) + (1 - p * epsilon) ** 1.5 / math.sqrt(1 - q))
    xi2 = 2.0 * math.log(q**1.5 / math.sqrt(p) + (1 - q * epsilon) ** 1.5 / math.sqrt(1 - p))
    xi3 = -2.0 * math.log(math.sqrt(p * q) * epsilon + math.sqrt((1 - p) * (1 - q)))
    xi4 = epsilon * (math.sqrt(p) - math.sqrt(q)) ** 2
    return xi1, xi2, xi3, xi4


def _check_prob(x, name):
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


def _check_open(p, q):
    if not (0 < p < 1 and 0 < q < 1):
        raise ValueError(f"p and q must lie in (0, 1), got p={p}, q={q}")
