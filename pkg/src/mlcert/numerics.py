"""Scalar special functions used by the certifier.

Standard normal CDF and quantile, the regularized incomplete beta function
and the Beta quantile. Boundary conventions:

* ``gaussian_quantile(0) == -inf`` and ``gaussian_quantile(1) == inf``;
  ``gaussian_cdf`` maps the infinities back to 0 and 1, so expressions like
  ``gaussian_cdf(gaussian_quantile(p) - r)`` stay well defined at p in {0, 1}.
* ``gaussian_cdf`` is accurate to about 1e-16 absolute (``math.erfc``).
* ``gaussian_quantile`` is a rational initial guess refined by one Halley
  step, giving round trips below 1e-12 on [1e-12, 1 - 1e-12].
* ``regularized_incomplete_beta`` uses the Lentz continued fraction with the
  usual symmetry split; relative error is below 1e-10.
* ``beta_quantile`` is a bracketed Newton iteration; the bracket shrinks to
  1e-13 relative to the distance from the nearer endpoint of [0, 1].
"""

import math

__all__ = [
    "DomainError",
    "gaussian_cdf",
    "gaussian_quantile",
    "regularized_incomplete_beta",
    "beta_quantile",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# rational approximation of the normal quantile (P. J. Acklam), |rel err| < 1.2e-9
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 100_000


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


def gaussian_cdf(z: float) -> float:
    """Standard normal CDF. ``nan`` raises :class:`DomainError`."""
    if math.isnan(z):
        raise DomainError("gaussian_cdf: NaN argument")
    if z == math.inf:
        return 1.0
    if z == -math.inf:
        return 0.0
    return 0.5 * math.erfc(-z / _SQRT2)


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    if p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        return num / den
    q = math.sqrt(-2.0 * math.log1p(-p))
    num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return -num / den


def gaussian_quantile(p: float) -> float:
    """Inverse of :func:`gaussian_cdf` with infinite sentinels at 0 and 1."""
    if math.isnan(p) or p < 0.0 or p > 1.0:
        raise DomainError(f"gaussian_quantile: p={p!r} outside [0, 1]")
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return math.inf
    if p > 0.5:
        # refine in the lower tail where erfc keeps full relative precision
        return -_refined_quantile(1.0 - p) if 1.0 - p > 0.0 else math.inf
    return _refined_quantile(p)


def _refined_quantile(p: float) -> float:
    x = _acklam(p)
    if 0.5 * x * x > 700.0:
        # the density underflows; Newton on log Phi with the asymptotic tail series
        log_p = math.log(p)
        for _ in range(3):
            log_cdf = _log_cdf_far_tail(x)
            hazard = math.exp(-0.5 * x * x - 0.5 * math.log(2 * math.pi) - log_cdf)
            x -= (log_cdf - log_p) / hazard
        return x
    # Halley step on Phi(x) - p
    err = 0.5 * math.erfc(-x / _SQRT2) - p
    u = err * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def _log_cdf_far_tail(x: float) -> float:
    # log Phi(x) for x < -37; series truncation error below 1e-20
    t = 1.0 / (x * x)
    series = -t + 3 * t**2 - 15 * t**3 + 105 * t**4 - 945 * t**5
    return -0.5 * x * x - math.log(-x) - 0.5 * math.log(2 * math.pi) + math.log1p(series)


def _check_shapes(a: float, b: float, name: str) -> None:
    if not (a > 0.0 and b > 0.0) or math.isinf(a) or math.isinf(b):
        raise DomainError(f"{name}: shape parameters must be positive and finite, got a={a!r}, b={b!r}")


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    _check_shapes(a, b, "regularized_incomplete_beta")
    if math.isnan(x) or x < 0.0 or x > 1.0:
        raise DomainError(f"regularized_incomplete_beta: x={x!r} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        value = math.exp(log_front) * _beta_cf(a, b, x) / a
    else:
        value = 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b
    return min(1.0, max(0.0, value))


def _beta_log_pdf(x: float, a: float, b: float) -> float:
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - _log_beta(a, b)


def beta_quantile(q: float, a: float, b: float, tol: float = 1e-13) -> float:
    """Return x in [0, 1] with ``regularized_incomplete_beta(x, a, b) == q``.

    Newton steps are taken while they stay inside the current bracket,
    otherwise the bracket is bisected.
    """
    _check_shapes(a, b, "beta_quantile")
    if math.isnan(q) or q < 0.0 or q > 1.0:
        raise DomainError(f"beta_quantile: q={q!r} outside [0, 1]")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0

    lo, hi = 0.0, 1.0
    x = a / (a + b)
    for _ in range(2000):
        f = regularized_incomplete_beta(x, a, b) - q
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        # near 0 or 1 the CDF can be arbitrarily steep (shape < 1): scale the tolerance
        scale = max(min(x, 1.0 - x), 1e-300)
        width = tol * min(1.0, scale)
        if hi - lo <= width:
            break
        log_pdf = _beta_log_pdf(x, a, b)
        step = f / math.exp(log_pdf) if log_pdf > -700.0 else math.inf
        candidate = x - step
        if not (lo < candidate < hi):
            # geometric midpoint when the bracket spans many orders of magnitude
            candidate = math.sqrt(lo * hi) if lo > 0.0 and hi < 0.5 and hi > 4.0 * lo else 0.5 * (lo + hi)
            if not lo < candidate < hi:
                break  # bracket is down to adjacent doubles
        elif abs(step) <= 0.5 * width:
            return candidate
        x = candidate
    return 0.5 * (lo + hi)
