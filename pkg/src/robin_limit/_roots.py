"""Safeguarded scalar root finding: bisection down to a width, then Newton."""

from __future__ import annotations

import math


class RootFindingError(RuntimeError):
    pass


def bracketed_root(f, df, a, b, width=1e-8, rtol=1e-15, maxiter=200):
    """Root of ``f`` in ``[a, b]``, where ``f(a)`` and ``f(b)`` differ in sign.

    Bisection shrinks the bracket to ``width`` (relative to ``max(1, |a|)``);
    Newton then polishes, falling back to a bisection step whenever an iterate
    leaves the current bracket.
    """
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if not (math.isfinite(fa) and math.isfinite(fb)) or (fa > 0) == (fb > 0):
        raise RootFindingError(
            f"no sign change on bracket [{a!r}, {b!r}]: f(a)={fa!r}, f(b)={fb!r}"
        )
    scale = max(1.0, abs(a), abs(b))
    it = 0
    while b - a > width * scale:
        it += 1
        if it > maxiter:
            raise RootFindingError(f"bisection did not converge on [{a!r}, {b!r}]")
        c = 0.5 * (a + b)
        fc = f(c)
        if fc == 0.0:
            return c
        if (fc > 0) == (fa > 0):
            a, fa = c, fc
        else:
            b, fb = c, fc

    x = 0.5 * (a + b)
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx > 0) == (fa > 0):
            a, fa = x, fx
        else:
            b, fb = x, fx
        d = df(x)
        step = fx / d if d != 0.0 and math.isfinite(d) else math.inf
        x_new = x - step
        if not (a < x_new < b):
            x_new = 0.5 * (a + b)
        if abs(x_new - x) <= rtol * max(1.0, abs(x)) or b - a <= 4 * rtol * scale:
            return x_new
        x = x_new
    raise RootFindingError(f"Newton polish did not converge near {x!r}")
