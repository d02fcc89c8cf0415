"""Geometric kernels phi, their scaled form psi_n, and simple-function ladders."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import torus_distance

SHAPES = ("indicator", "triangular", "texp", "pwc")
_EPS_GRID = 10_000


@dataclass(frozen=True)
class Kernel:
    """Compact-support connection function phi: R+ -> [0, 1].

    Build with the classmethods rather than directly. ``kappa`` is the right
    end of the support and ``epsilon`` the infimum of phi over [0, kappa].
    """

    shape: str
    kappa: float
    rate: float = 0.0
    pieces: tuple = ()
    epsilon: float = field(default=float("nan"))

    # -- construction -----------------------------------------------------

    @classmethod
    def indicator(cls, kappa: float = 1.0) -> "Kernel":
        _check_kappa(kappa)
        return cls("indicator", float(kappa), pieces=((0.0, float(kappa), 1.0),), epsilon=1.0)

    @classmethod
    def triangular(cls, kappa: float = 1.0, epsilon: float | None = None) -> "Kernel":
        _check_kappa(kappa)
        k = cls("triangular", float(kappa))
        return k._with_epsilon(epsilon)

    @classmethod
    def texp(cls, rate: float, kappa: float, epsilon: float | None = None) -> "Kernel":
        """Exponential decay exp(-rate*x) truncated at kappa."""
        _check_kappa(kappa)
        if rate < 0:
            raise ValueError(f"rate must be non-negative, got {rate}")
        k = cls("texp", float(kappa), rate=float(rate))
        return k._with_epsilon(epsilon)

    @classmethod
    def pwc(cls, pieces, epsilon: float | None = None) -> "Kernel":
        """Piecewise-constant kernel from ``[(left, right, level), ...]``."""
        ps = sorted((float(l), float(r), float(c)) for l, r, c in pieces)
        if not ps:
            raise ValueError("pwc kernel needs at least one piece")
        for l, r, c in ps:
            if not (0.0 <= l < r) or not math.isfinite(r):
                raise ValueError(f"invalid piece interval [{l}, {r})")
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"piece level {c} outside [0, 1]")
        for (l0, r0, _), (l1, r1, _) in zip(ps, ps[1:]):
            if l1 < r0:
                raise ValueError(f"pieces [{l0}, {r0}) and [{l1}, {r1}) overlap")
        levels = [c for _, _, c in ps]
        if len(set(levels)) != len(levels):
            raise ValueError("pwc pieces must have distinct levels")
        ps = [pc for pc in ps if pc[2] > 0]
        if not ps:
            raise ValueError("pwc kernel is identically zero")
        kappa = ps[-1][1]
        k = cls("pwc", kappa, pieces=tuple(ps))
        return k._with_epsilon(epsilon)

    @classmethod
    def from_dict(cls, spec: dict) -> "Kernel":
        """Parse the JSON kernel grammar used by configs and the CLI."""
        if not isinstance(spec, dict) or "shape" not in spec:
            raise ValueError('kernel spec must be an object with a "shape" key')
        shape = spec["shape"]
        eps = spec.get("epsilon")
        try:
            if shape == "indicator":
                return cls.indicator(spec["kappa"])
            if shape == "triangular":
                return cls.triangular(spec["kappa"], epsilon=eps)
            if shape == "texp":
                return cls.texp(spec["rate"], spec["kappa"], epsilon=eps)
            if shape == "pwc":
                return cls.pwc(spec["pieces"], epsilon=eps)
        except KeyError as exc:
            raise ValueError(f"kernel shape {shape!r} is missing field {exc}") from None
        raise ValueError(f"unknown kernel shape {shape!r}; expected one of {SHAPES}")

    def to_dict(self) -> dict:
        if self.shape == "indicator":
            return {"shape": "indicator", "kappa": self.kappa}
        if self.shape == "triangular":
            return {"shape": "triangular", "kappa": self.kappa}
        if self.shape == "texp":
            return {"shape": "texp", "rate": self.rate, "kappa": self.kappa}
        return {"shape": "pwc", "pieces": [list(pc) for pc in self.pieces]}

    def _with_epsilon(self, epsilon):
        if epsilon is None:
            if self.shape == "pwc":
                epsilon = self._pwc_infimum(0.0, self.kappa, closed=True)
            else:
                grid = np.linspace(0.0, self.kappa, _EPS_GRID)
                epsilon = float(np.min(self(grid)))
        elif not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        object.__setattr__(self, "epsilon", float(epsilon))
        return self

    # -- evaluation -------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= 0) & (x <= self.kappa)
        if self.shape == "indicator":
            out = inside.astype(np.float64)
        elif self.shape == "triangular":
            out = np.where(inside, np.maximum(0.0, 1.0 - x / self.kappa), 0.0)
        elif self.shape == "texp":
            out = np.where(inside, np.exp(-self.rate * np.where(inside, x, 0.0)), 0.0)
        else:
            out = np.zeros_like(x)
            for l, r, c in self.pieces:
                hit = (x >= l) & ((x < r) | (x == self.kappa) & (r == self.kappa))
                out = np.where(hit, c, out)
        if out.ndim == 0:
            return float(out)
        return out

    def breakpoints(self) -> np.ndarray:
        """Points in [0, kappa] where phi may be non-smooth, including both ends."""
        pts = {0.0, self.kappa}
        for l, r, _ in self.pieces:
            pts.update((l, r))
        return np.array(sorted(p for p in pts if 0.0 <= p <= self.kappa))

    def integral(self) -> float:
        """Exact value of the integral of phi over R+."""
        if self.shape == "triangular":
            return self.kappa / 2.0
        if self.shape == "texp":
            if self.rate == 0:
                return self.kappa
            return (1.0 - math.exp(-self.rate * self.kappa)) / self.rate
        return sum((r - l) * c for l, r, c in self.pieces)

    def extrema(self, a: float, b: float, closed: bool = False) -> tuple[float, float]:
        """(inf, sup) of phi on [a, b), or on [a, b] when ``closed``."""
        if self.shape in ("triangular", "texp"):
            # both shapes are continuous and non-increasing on [0, kappa]
            return float(self(b)), float(self(a))
        lo = self._pwc_infimum(a, b, closed)
        hi = max((c for l, r, c in self.pieces if l < b and r > a), default=0.0)
        if closed and b == self.kappa:
            hi = max(hi, float(self(b)))
        return lo, hi

    def _pwc_infimum(self, a, b, closed):
        covered = a
        lo = 1.0
        for l, r, c in self.pieces:
            if r <= a or l >= b:
                continue
            if l > covered:
                return 0.0
            lo = min(lo, c)
            covered = max(covered, r)
        if covered < b:
            return 0.0
        return lo

    def check_recoverable(self) -> bool:
        """Whether phi is bounded away from zero on its support; warns if not."""
        if self.epsilon > 0:
            return True
        warnings.warn(
            f"{self.shape} kernel has epsilon = 0 on [0, kappa]; Phase I guarantees do not apply",
            RuntimeWarning,
            stacklevel=2,
        )
        return False


def _check_kappa(kappa):
    if not (kappa > 0 and math.isfinite(kappa)):
        raise ValueError(f"kappa must be positive and finite, got {kappa}")


def scale(n: int) -> float:
    """Factor n / log(n) turning torus distances into kernel arguments."""
    return n / math.log(n)


def psi_n(kernel: Kernel, n: int, x, y):
    """phi((n / log n) * d(x, y)), the edge-probability envelope at scale n."""
    return kernel(scale(n) * np.asarray(torus_distance(x, y)))


@dataclass(frozen=True)
class SimpleApproximation:
    """Step function sum_s c_s 1{x in [left_s, right_s)} lying below phi."""

    lefts: np.ndarray
    rights: np.ndarray
    levels: np.ndarray
    sup_error: float

    @property
    def ell(self) -> int:
        return len(self.levels)

    @property
    def volumes(self) -> np.ndarray:
        return self.rights - self.lefts

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        last = self.rights[-1]
        for l, r, c in zip(self.lefts, self.rights, self.levels):
            hit = (x >= l) & ((x < r) | ((r == last) & (x == last)))
            out = np.where(hit, c, out)
        return out


def approximate(kernel: Kernel, ell: int) -> SimpleApproximation:
    """Under-approximate phi by interval infima on ``ell`` equal pieces of [0, kappa].

    Piecewise-constant kernels with at most ``ell`` pieces are returned as-is.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    if kernel.pieces and len(kernel.pieces) <= ell:
        ps = np.array(kernel.pieces, dtype=np.float64)
        return SimpleApproximation(ps[:, 0], ps[:, 1], ps[:, 2], 0.0)
    edges = np.linspace(0.0, kernel.kappa, ell + 1)
    levels = np.empty(ell)
    err = 0.0
    for s in range(ell):
        closed = s == ell - 1
        lo, hi = kernel.extrema(edges[s], edges[s + 1], closed=closed)
        levels[s] = lo
        err = max(err, hi - lo)
    return SimpleApproximation(edges[:-1].copy(), edges[1:].copy(), levels, float(err))
