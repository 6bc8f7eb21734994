"""Special functions needed by the closed-form performance expressions.

The implementations follow the classical recipes: series plus continued
fraction for the exponential integral, downward recurrence for the upper
incomplete gamma at non-positive integer order (the forward direction is
unstable there), and the Kummer series with the e^z reflection for the
confluent hypergeometric function at negative argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

_EULER_GAMMA = 0.5772156649015328606
_EPS = 1e-17
_TINY = 1e-300


@dataclass(frozen=True)
class SpecialFnResult:
    value: float
    abs_err_bound: float


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x + sum_{n>=1} (-1)^{n+1} x^n / (n * n!), good for x <= 1
    total = -_EULER_GAMMA - math.log(x)
    term = 1.0
    for n in range(1, 200):
        term *= -x / n
        delta = -term / n
        total += delta
        if abs(delta) < _EPS * max(abs(total), 1e-30):
            return total
    raise DomainError(f"E1 series did not converge at x={x}")


def _e1_scaled_cf(x: float) -> float:
    # Modified Lentz evaluation of e^x * E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...))),
    # reliable for x > 1.
    b = x + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 300):
        a = -(i * i)
        b += 2.0
        d = a * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + a / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise DomainError(f"E1 continued fraction did not converge at x={x}")


def exp1_scaled(x: float) -> float:
    """e^x * E1(x); overflow-safe for large x."""
    if x <= 0:
        raise DomainError(f"exp1_scaled requires x > 0, got {x}")
    if x <= 1.0:
        return math.exp(x) * _e1_series(x)
    return _e1_scaled_cf(x)


def exp_integral_e1(x: float) -> SpecialFnResult:
    """First-order exponential integral E1(x) = int_x^inf e^-t / t dt."""
    x = float(x)
    if x <= 0:
        raise DomainError(f"E1 requires x > 0, got {x}")
    if x <= 1.0:
        v = _e1_series(x)
    else:
        v = math.exp(-x) * _e1_scaled_cf(x)
    return SpecialFnResult(value=v, abs_err_bound=1e-13 * max(abs(v), _TINY) + 5e-17 * math.exp(-x))


def _gamma_upper_pos(a: int, x: float) -> float:
    # Gamma(a, x) = (a-1)! e^-x sum_{j<a} x^j/j!  (exact finite sum for integer a >= 1)
    s = 0.0
    term = 1.0
    for j in range(a):
        if j > 0:
            term *= x / j
        s += term
    return math.factorial(a - 1) * math.exp(-x) * s


def gamma_upper_int(a: int, x: float) -> SpecialFnResult:
    """Upper incomplete gamma Gamma(a, x) for any integer order.

    Orders <= 0 use the downward recurrence
    Gamma(a, x) = (Gamma(a+1, x) - x^a e^-x) / a seeded by Gamma(0, x) = E1(x).
    """
    if a != int(a):
        raise DomainError(f"order must be an integer, got {a!r}")
    a = int(a)
    x = float(x)
    if a <= 0 and x <= 0:
        raise DomainError(f"Gamma({a}, x) diverges for x <= 0 (got x={x})")
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    if a >= 1:
        v = _gamma_upper_pos(a, x) if x > 0 else float(math.factorial(a - 1))
        return SpecialFnResult(value=v, abs_err_bound=1e-14 * max(abs(v), _TINY))
    e1 = exp_integral_e1(x)
    v, err = e1.value, e1.abs_err_bound
    emx = math.exp(-x)
    for n in range(0, -a):
        order = -(n + 1)
        v = (v - x ** (-n - 1) * emx) / order
        err = (err + 1e-16 * abs(x ** (-n - 1) * emx)) / abs(order) + 1e-16 * abs(v)
    return SpecialFnResult(value=v, abs_err_bound=err)


def _hyp1f1_series(alpha: float, gamma: float, z: float) -> tuple[float, float]:
    # Plain Kummer series; for the ranges used here z >= 0, so all terms
    # added after the transform are positive and there is no cancellation.
    term = 1.0
    total = 1.0
    for n in range(0, 10_000):
        term *= (alpha + n) * z / ((gamma + n) * (n + 1))
        total += term
        if abs(term) < _EPS * abs(total):
            return total, 2.0 * abs(term) + 1e-15 * abs(total)
        if alpha + n + 1 == 0:  # terminating polynomial case
            return total, 1e-15 * abs(total)
    raise DomainError(f"1F1 series did not converge at ({alpha}, {gamma}, {z})")


def hyp1f1(alpha: float, gamma: float, z: float) -> SpecialFnResult:
    """Kummer confluent hypergeometric function 1F1(alpha; gamma; z).

    Negative arguments are routed through 1F1(a;g;z) = e^z 1F1(g-a;g;-z)
    so the series is summed with nonnegative argument.
    """
    if gamma <= 0 and gamma == int(gamma):
        raise DomainError(f"gamma must not be a non-positive integer, got {gamma}")
    if z < 0:
        inner, err = _hyp1f1_series(gamma - alpha, gamma, -z)
        scale = math.exp(z)
        return SpecialFnResult(value=scale * inner, abs_err_bound=scale * err)
    v, err = _hyp1f1_series(alpha, gamma, z)
    return SpecialFnResult(value=v, abs_err_bound=err)


def log_hyp1f1_nonneg(alpha: float, gamma: float, z: float) -> float:
    """log 1F1(alpha; gamma; z) for z >= 0 and alpha, gamma > 0.

    Summed in log space so large arguments (where the series value
    overflows a float) remain usable.
    """
    if z < 0 or alpha <= 0 or gamma <= 0:
        raise DomainError("log_hyp1f1_nonneg requires z >= 0 and positive parameters")
    if z == 0.0:
        return 0.0
    log_term = 0.0
    log_total = 0.0
    for n in range(0, 100_000):
        log_term += math.log((alpha + n) * z / ((gamma + n) * (n + 1)))
        log_total = max(log_total, log_term) + math.log1p(
            math.exp(-abs(log_total - log_term))
        )
        if log_term < log_total - 40.0 and n > z:
            return log_total
    raise DomainError(f"log 1F1 series did not converge at ({alpha}, {gamma}, {z})")
