"""Adaptive Simpson integration with explicit failure on non-convergence."""

from __future__ import annotations

import math


class QuadratureError(RuntimeError):
    pass


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-9, max_depth: int = 50) -> float:
    """Integrate scalar ``f`` over [a, b] to absolute error ``tol``.

    Standard recursive Simpson with Richardson correction; raises
    :class:`QuadratureError` if some subinterval is still unresolved at
    ``max_depth`` halvings.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth)
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # explicit stack avoids Python's recursion limit at deep levels
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - est
        if abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
            continue
        if depth >= max_depth:
            raise QuadratureError(
                f"adaptive Simpson did not converge on [{lo:.6g}, {hi:.6g}] after {depth} halvings"
            )
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
    if not math.isfinite(total):
        raise QuadratureError("integrand produced a non-finite value")
    return total


def integrate_pieces(f, points, tol: float = 1e-9, max_depth: int = 50) -> float:
    """Sum of adaptive Simpson integrals over consecutive ``points``.

    The tolerance is shared out in proportion to each piece's length. Each
    piece is integrated with its endpoints pulled a hair inside, so a jump
    sitting exactly on a breakpoint is seen from the correct side.
    """
    pts = sorted(set(float(p) for p in points))
    span = pts[-1] - pts[0]
    if span <= 0:
        return 0.0
    total = 0.0
    for lo, hi in zip(pts, pts[1:]):
        eta = 1e-9 * (hi - lo)
        inner = lambda x, a=lo + eta, b=hi - eta: f(min(max(x, a), b))
        total += adaptive_simpson(inner, lo, hi, tol * (hi - lo) / span, max_depth)
    return total
