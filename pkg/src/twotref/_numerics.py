import math

from .errors import NumericError

RTOL = 1e-12
MAX_ITER = 200


def safeguarded_newton(f, fprime, lo, hi, x0=None, rtol=RTOL, maxiter=MAX_ITER):
    """Root of a monotone scalar function inside ``[lo, hi]``.

    Newton steps are rejected in favour of bisection whenever they leave the
    current bracket or fail to shrink the step by half. ``f(lo)`` and
    ``f(hi)`` must have opposite signs.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if not (math.isfinite(flo) and math.isfinite(fhi)) or (flo > 0) == (fhi > 0):
        raise NumericError(f"root not bracketed: f({lo!r})={flo!r}, f({hi!r})={fhi!r}")
    # a: negative side, b: positive side
    a, b = (lo, hi) if flo < 0 else (hi, lo)
    x = 0.5 * (a + b) if x0 is None else x0
    if not min(a, b) < x < max(a, b):
        x = 0.5 * (a + b)
    step_old = abs(b - a)
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        if not math.isfinite(fx):
            raise NumericError(f"non-finite residual at x={x!r}")
        if fx < 0:
            a = x
        else:
            b = x
        dfx = fprime(x)
        x_new = None
        if dfx != 0.0 and math.isfinite(dfx):
            cand = x - fx / dfx
            if min(a, b) < cand < max(a, b) and abs(cand - x) <= 0.5 * step_old:
                x_new = cand
        if x_new is None:
            x_new = 0.5 * (a + b)
        step_old = abs(x_new - x)
        x = x_new
        if step_old <= rtol * abs(x) or abs(b - a) <= rtol * max(abs(a), abs(b)):
            return x
    raise NumericError(f"no convergence after {maxiter} iterations (bracket [{a!r}, {b!r}])")
