"""Scalar numerical primitives: principal-branch Lambert W and bisection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

INV_E = math.exp(-1.0)
BRANCH_POINT = -INV_E


class DomainError(ValueError):
    """Argument outside the real domain of the function."""


class NoBracketError(ValueError):
    """Bisection endpoints do not bracket a sign change."""


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted before reaching tolerance."""


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


DEFAULT_TOL = Tolerance()


def _initial_guess(x: float) -> float:
    if x < -0.32:
        # series about the branch point in p = sqrt(2(ex + 1))
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    if x < 3.0:
        return math.log1p(x)
    l1 = math.log(x)
    l2 = math.log(l1)
    return l1 - l2 + l2 / l1


def lambert_w0(x: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """Principal branch W0 of the Lambert function for real ``x >= -1/e``.

    Halley iteration from a piecewise seed. Arguments below the branch point
    by at most ``tol.abs_tol`` are treated as the branch point itself.
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("lambert_w0 of NaN")
    if x < BRANCH_POINT:
        if x < BRANCH_POINT - tol.abs_tol:
            raise DomainError(f"lambert_w0 undefined for x={x!r} < -1/e")
        return -1.0
    if x == BRANCH_POINT:
        return -1.0
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf

    w = _initial_guess(x)
    for _ in range(tol.max_iter):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_next = w - dw
        if w_next < -1.0:
            w_next = -1.0
        if abs(w_next - w) <= 4e-16 * (1.0 + abs(w_next)):
            return w_next
        w = w_next
    return w


def bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Tolerance = DEFAULT_TOL,
    *,
    return_bracket: bool = False,
):
    """Root of a monotone function on ``[lo, hi]`` by interval halving.

    Returns the midpoint of the final bracket (width below ``tol.abs_tol``),
    or the bracket itself when ``return_bracket`` is set. The bracket keeps
    the sign of ``f(lo)`` on its left end throughout.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    f_lo = f(lo)
    f_hi = f(hi)
    if abs(f_lo) <= tol.abs_tol and not return_bracket:
        return lo
    if abs(f_hi) <= tol.abs_tol and not return_bracket:
        return hi
    if f_lo * f_hi > 0:
        raise NoBracketError(
            f"f({lo})={f_lo:.3g} and f({hi})={f_hi:.3g} have the same sign"
        )
    lo_negative = f_lo < 0
    for _ in range(tol.max_iter):
        if hi - lo <= tol.abs_tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # float resolution reached
        f_mid = f(mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if (f_mid < 0) == lo_negative:
            lo = mid
        else:
            hi = mid
    else:
        if hi - lo > tol.abs_tol:
            raise ConvergenceError(
                f"bisection did not reach width {tol.abs_tol} in {tol.max_iter} steps"
            )
    if return_bracket:
        return lo, hi
    return 0.5 * (lo + hi)
