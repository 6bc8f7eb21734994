"""Closed-form outage / capacity / BER expressions and their oracles.

The SINR of every link is distributed as a ratio Z = X / (a*Y1 + b*Y2 [+ b])
of independent Gamma(shape, 1) variables, so everything below is built from
two CDF kernels:

* ``gamma_ratio_cdf``      -- Z = X / (aY + b), X ~ Gamma(l,1), Y ~ Gamma(m,1),
  evaluated from its closed series form (log-space, stable for all scales).
* ``gamma_ratio2_cdf_*``   -- Z = X / (aY1 + bY2) with a second interference
  class Y2 ~ Gamma(n,1): exact via quadrature over the mixed-interference
  density, or approximated by replacing bY2 with its mean b*n.

Compositional forms (products of per-link survivals, rate/BER integrals over
the survival) are the authoritative evaluation path; the hand-specialized
series variants are kept behind ``as_printed`` switches for comparison and
are documented as algebraically fragile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammainc, gammaincc, logsumexp, roots_genlaguerre

from .channel import SystemConfig
from .errors import DomainError, QuadratureFailure, ValidationError
from .special import exp1_scaled, gamma_upper_int, log_hyp1f1_nonneg

_LN2 = math.log(2.0)
_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class CdfParams:
    """Shape/scale parameters of the SINR ratio Z = X / (a*Y1 + b*Y2 | + b).

    ``l``/``m``/``n`` are the integer Gamma shapes of the signal and the two
    interference classes; ``n`` is only meaningful for the two-class kernel.
    """

    a: float
    b: float = 0.0
    l: int = 1
    m: int = 1
    n: int | None = None

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValidationError(f"a must be positive and finite, got {self.a}")
        if not (self.b >= 0 and math.isfinite(self.b)):
            raise ValidationError(f"b must be nonnegative and finite, got {self.b}")
        if self.l < 1 or self.m < 1:
            raise ValidationError("l and m must be positive integers")
        if self.n is not None and self.n < 1:
            raise ValidationError("n must be a positive integer when present")


# ---------------------------------------------------------------------------
# single-interference-class ratio CDF
# ---------------------------------------------------------------------------

def _log_survival_gamma_ratio(z: float, a: float, b: float, l: int, m: int) -> float:
    """log P(X/(aY+b) > z); every term is positive, so it sums stably in log space."""
    if z < 0:
        raise DomainError(f"z must be >= 0, got {z}")
    if z == 0.0:
        return 0.0
    log_az = math.log(a * z)
    log1p_az = math.log1p(a * z)
    lgm = math.lgamma(m)
    terms = []
    for k in range(l):
        base = -b * z + k * log_az - math.lgamma(k + 1) - lgm
        i_max = k if b > 0 else 0
        for i in range(i_max + 1):
            lt = base + math.lgamma(k + m - i) - (k + m - i) * log1p_az
            if i > 0:
                lt += (
                    math.lgamma(k + 1) - math.lgamma(i + 1) - math.lgamma(k - i + 1)
                    + i * math.log(b / a)
                )
            terms.append(lt)
    return min(0.0, float(logsumexp(terms)))


def gamma_ratio_cdf(z: float, p: CdfParams) -> float:
    """CDF of Z = X/(aY + b), X ~ Gamma(l,1), Y ~ Gamma(m,1), at z >= 0."""
    val = -math.expm1(_log_survival_gamma_ratio(z, p.a, p.b, p.l, p.m))
    return min(1.0, max(0.0, val))


def gamma_ratio_cdf_quad(z: float, p: CdfParams) -> float:
    """Independent quadrature cross-check: E_Y[ P(X <= z(aY+b)) ]."""
    if z < 0:
        raise DomainError(f"z must be >= 0, got {z}")
    if z == 0.0:
        return 0.0
    lgm = math.lgamma(p.m)

    def density(y):
        return math.exp((p.m - 1) * math.log(y) - y - lgm)

    def piecewise(f):
        # split where the regularized gamma factor transitions
        y0 = p.m + max(0.0, (p.l / z - p.b) / p.a)
        tot, err = 0.0, 0.0
        for lo, hi in ((0.0, y0), (y0, np.inf)):
            v, e = integrate.quad(f, lo, hi, epsabs=1e-13, limit=800)
            tot += v
            err += e
        return tot, err

    # integrate whichever side is small: the error estimate of the large
    # side is dominated by its O(1) magnitude
    surv, err_s = piecewise(lambda y: gammaincc(p.l, z * (p.a * y + p.b)) * density(y))
    if surv <= 0.5:
        val, err = 1.0 - surv, err_s
    else:
        val, err = piecewise(lambda y: gammainc(p.l, z * (p.a * y + p.b)) * density(y))
    if err > 5e-9:
        raise QuadratureFailure(f"ratio CDF quadrature error {err:.2e} at z={z}")
    return min(1.0, max(0.0, val))


# ---------------------------------------------------------------------------
# two-interference-class ratio CDF
# ---------------------------------------------------------------------------

def _log_mixed_interference_pdf(y: float, a: float, b: float, m: int, n: int) -> float:
    """log density of Y = a*Y1 + b*Y2 at y > 0 (Y1 ~ Gamma(m,1), Y2 ~ Gamma(n,1)).

    Written with the confluent-hypergeometric argument kept nonnegative so
    the series has no cancellation; the exponential prefactor always decays
    like exp(-y / max(a, b)).
    """
    base = (
        (m + n - 1) * math.log(y)
        - math.lgamma(m + n)
        - m * math.log(a)
        - n * math.log(b)
    )
    if a <= b:
        return base - y / a + log_hyp1f1_nonneg(n, m + n, (1.0 / a - 1.0 / b) * y)
    return base - y / b + log_hyp1f1_nonneg(m, m + n, (1.0 / b - 1.0 / a) * y)


def gamma_ratio2_cdf_exact(z: float, p: CdfParams) -> float:
    """Exact CDF of Z = X/(aY1 + bY2) by adaptive quadrature over the
    mixed-interference density; absolute accuracy 1e-7 or QuadratureFailure.
    """
    if p.n is None:
        raise ValidationError("two-class CDF requires the n shape parameter")
    if z < 0:
        raise DomainError(f"z must be >= 0, got {z}")
    if z == 0.0:
        return 0.0
    if p.b == 0.0:
        return gamma_ratio_cdf(z, CdfParams(a=p.a, b=0.0, l=p.l, m=p.m))
    if p.a == p.b:
        # aY1 + aY2 ~ a * Gamma(m+n, 1)
        return gamma_ratio_cdf(z, CdfParams(a=p.a, b=0.0, l=p.l, m=p.m + p.n))

    def integrand(y):
        if y <= 0.0:
            return 0.0
        return gammainc(p.l, z * y) * math.exp(
            _log_mixed_interference_pdf(y, p.a, p.b, p.m, p.n)
        )

    scale = max(p.a, p.b) * (p.m + p.n)
    val, err = integrate.quad(
        integrand, 0.0, np.inf, epsabs=1e-10, limit=500
    )
    if err > 1e-7:
        # retry with explicit splits around the density mass
        breaks = [0.0, 0.5 * scale, 2.0 * scale, 10.0 * scale]
        val, err = 0.0, 0.0
        for lo, hi in zip(breaks, breaks[1:] + [np.inf]):
            v, e = integrate.quad(integrand, lo, hi, epsabs=1e-10, limit=500)
            val += v
            err += e
        if err > 1e-7:
            raise QuadratureFailure(f"two-class CDF error {err:.2e} at z={z}")
    return min(1.0, max(0.0, val))


def gamma_ratio2_cdf_approx(z: float, p: CdfParams) -> float:
    """Mean-replacement approximation: bY2 -> b*n, then the single-class CDF.

    This is an approximation, not an exact CDF; the exact kernel above is
    the reference for its quality.
    """
    if p.n is None:
        raise ValidationError("two-class CDF requires the n shape parameter")
    return gamma_ratio_cdf(z, CdfParams(a=p.a, b=p.b * p.n, l=p.l, m=p.m))


# ---------------------------------------------------------------------------
# per-link SINR CDFs and log-survivals
# ---------------------------------------------------------------------------

def _require_analysis_powers(cfg: SystemConfig):
    if not (cfg.p_m > 0 and cfg.p_r > 0):
        raise DomainError("closed-form analysis requires strictly positive p_m and p_r")


def _log_survival_mue(scheme: str, x: float, cfg: SystemConfig, exact_bf: bool) -> float:
    a = cfg.power_ratio
    if scheme == "IC":
        l = cfg.n_b - cfg.k - cfg.m + 1
        return _log_survival_gamma_ratio(x, a, 0.0, l, cfg.m)
    if cfg.k == 1:
        return _log_survival_gamma_ratio(x, a, 0.0, cfg.n_b, cfg.m)
    if exact_bf:
        f = gamma_ratio2_cdf_exact(
            x, CdfParams(a=a, b=1.0, l=cfg.n_b, m=cfg.m, n=cfg.k - 1)
        )
        return math.log1p(-min(f, 1.0 - 1e-300))
    return _log_survival_gamma_ratio(x, a, float(cfg.k - 1), cfg.n_b, cfg.m)


def _log_survival_rue(scheme: str, x: float, cfg: SystemConfig) -> float:
    if scheme == "IC":
        return -x / cfg.p_r
    return -x / cfg.p_r - cfg.k * math.log1p(x * cfg.p_m / cfg.p_r)


def cdf_sinr(scheme: str, link: str, x: float, cfg: SystemConfig,
             exact_bf: bool = False) -> float:
    """Per-link SINR CDF at ``x`` for (scheme, link).

    BF MUE defaults to the mean-replacement approximation (exact when K = 1);
    pass ``exact_bf=True`` for the exact two-class kernel.
    """
    if scheme not in ("IC", "BF"):
        raise ValidationError(f"unknown scheme {scheme!r}")
    if link not in ("MUE", "RUE"):
        raise ValidationError(f"unknown link {link!r}")
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    _require_analysis_powers(cfg)
    if link == "MUE":
        return min(1.0, max(0.0, -math.expm1(_log_survival_mue(scheme, x, cfg, exact_bf))))
    return min(1.0, max(0.0, -math.expm1(_log_survival_rue(scheme, x, cfg))))


# ---------------------------------------------------------------------------
# overall outage
# ---------------------------------------------------------------------------

def _log_survival_min_sinr(scheme, z, cfg, exact_bf):
    return (
        cfg.k * _log_survival_mue(scheme, z, cfg, exact_bf)
        + cfg.m * _log_survival_rue(scheme, z, cfg)
    )


def outage_overall(scheme: str, cfg: SystemConfig, exact_bf: bool = False,
                   as_printed: bool = False) -> float:
    """P(min over all K+M link SINRs < gamma_th).

    The composed product-of-survivals path is authoritative.  With
    ``as_printed`` the hand-specialized series forms are used instead: for IC
    they coincide with the composed path; for BF the specialized form is
    internally inconsistent and may leave [0, 1] (returned unclipped so the
    discrepancy is visible).
    """
    _require_analysis_powers(cfg)
    g = cfg.gamma_th
    if as_printed:
        surv_m = math.exp(_log_survival_mue(scheme, g, cfg, False))
        if scheme == "IC":
            return 1.0 - surv_m ** cfg.k * math.exp(-cfg.m * g / cfg.p_r)
        bad_tail = (math.exp(-g / cfg.p_r) * (g / cfg.power_ratio + 1.0)) ** (
            -cfg.k * cfg.m
        )
        return 1.0 - surv_m ** cfg.k * bad_tail
    return min(1.0, max(0.0, -math.expm1(_log_survival_min_sinr(scheme, g, cfg, exact_bf))))


# ---------------------------------------------------------------------------
# ergodic per-link rates and sum capacity
# ---------------------------------------------------------------------------

def _rate_from_log_survival(log_surv, scale: float) -> float:
    """(1/ln2) * int_0^inf exp(log_surv(z)) / (1+z) dz with robust splitting."""

    def integrand(z):
        return math.exp(log_surv(z)) / (1.0 + z)

    val, err = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-11,
                              epsrel=1e-11, limit=500)
    if err > 1e-9:
        breaks = [0.0, scale, 10.0 * scale, 100.0 * scale]
        val, err = 0.0, 0.0
        for lo, hi in zip(breaks, breaks[1:] + [np.inf]):
            v, e = integrate.quad(integrand, lo, hi, epsabs=1e-11, limit=500)
            val += v
            err += e
        if err > 1e-8:
            raise QuadratureFailure(f"rate quadrature error {err:.2e}")
    return val / _LN2


def ergodic_rate_ratio(a: float, b: float, l: int, m: int) -> float:
    """E[log2(1 + Z)] for Z = X/(aY + b) via quadrature of the survival."""
    p = CdfParams(a=a, b=b, l=l, m=m)
    return _rate_from_log_survival(
        lambda z: _log_survival_gamma_ratio(z, p.a, p.b, p.l, p.m),
        scale=max(1.0, l / a),
    )


def ergodic_rate_exp(delta: float) -> float:
    """E[log2(1 + delta*X)] for X ~ Exp(1): exp(1/delta) E1(1/delta) / ln 2."""
    if not (delta > 0):
        raise DomainError(f"delta must be positive, got {delta}")
    return exp1_scaled(1.0 / delta) / _LN2


def ergodic_rate_ratio_series(a: float, b: float, l: int, m: int) -> float:
    """Hand-specialized series form of ``ergodic_rate_ratio``.

    Evaluated literally as written (the ``a**(i-m)`` factor taken inside the
    inner sum, the only placement where ``i`` is defined).  The expression
    diverges term-by-term at b = 0 and is undefined at a = 1, and it suffers
    sign cancellation elsewhere; it exists for comparison against the
    quadrature path, which is authoritative.
    """
    if b <= 0:
        raise DomainError("series rate form diverges term-by-term at b = 0")
    if a == 1.0:
        raise DomainError("series rate form is undefined at a = 1")
    inv_am1 = 1.0 / a - 1.0
    total = 0.0
    for k in range(l):
        for i in range(k + 1):
            coeff = (
                a ** (i - m)
                / math.factorial(k)
                * math.comb(k, i)
                * (b / a) ** i
                * math.gamma(k + m - i)
            )
            lead = (
                inv_am1 ** (i - m - k)
                * math.exp(b)
                * math.gamma(k + 1)
                * gamma_upper_int(-k, b).value
            )
            inner = 0.0
            for j in range(1, k - i + m + 1):
                for mm in range(k + 1):
                    inner += (
                        math.comb(k, mm)
                        * (-1.0 / a) ** mm
                        * a ** (-k + mm + j - 1)
                        * math.exp(b / a)
                        * gamma_upper_int(k - i - j + 1, b / a).value
                        * inv_am1 ** (i + j - m - k - 1)
                    )
            total += coeff * (lead - inner)
    return total / (_LN2 * math.gamma(m))


def sum_capacity(scheme: str, cfg: SystemConfig, exact_bf: bool = False,
                 as_printed: bool = False) -> float:
    """Ergodic sum capacity over all K MUE and M RUE links, bits/s/Hz.

    Composed path multiplies the per-user ergodic rates by the user counts.
    ``as_printed`` reproduces the specialized single-term forms (no K/M
    multipliers; IC signal shape written as N_B - M), for comparison only.
    """
    _require_analysis_powers(cfg)
    a = cfg.power_ratio
    if scheme == "IC":
        if as_printed:
            return ergodic_rate_ratio(a, 0.0, cfg.n_b - cfg.m, cfg.m) + ergodic_rate_exp(cfg.p_r)
        l = cfg.n_b - cfg.k - cfg.m + 1
        return cfg.k * ergodic_rate_ratio(a, 0.0, l, cfg.m) + cfg.m * ergodic_rate_exp(cfg.p_r)
    # BF
    rue_rate = ergodic_rate_ratio(cfg.p_m / cfg.p_r, 1.0 / cfg.p_r, 1, cfg.k)
    if as_printed:
        return ergodic_rate_ratio(a, float(cfg.k - 1), cfg.n_b, cfg.m) + rue_rate
    if exact_bf and cfg.k >= 2:
        mue_rate = _rate_from_log_survival(
            lambda z: _log_survival_mue("BF", z, cfg, True),
            scale=max(1.0, cfg.n_b / a),
        )
    else:
        mue_rate = ergodic_rate_ratio(a, float(cfg.k - 1), cfg.n_b, cfg.m)
    return cfg.k * mue_rate + cfg.m * rue_rate


# ---------------------------------------------------------------------------
# average BER (BPSK)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _gen_laguerre_rule(nodes: int):
    x, w = roots_genlaguerre(nodes, -0.5)
    return np.asarray(x), np.asarray(w)


def ber_from_min_sinr_cdf(min_sinr_cdf, k: int, m: int, nodes: int = 64) -> float:
    """Average BPSK BER from the CDF of the minimum link SINR.

    Evaluates (1 / (2(K+M) sqrt(pi))) * int_0^inf e^-z z^-1/2 F_min(z) dz
    with generalized Gauss-Laguerre quadrature (weight e^-z z^-1/2), refined
    by doubling the rule; adaptive quadrature is the fallback when the two
    rules disagree.
    """
    if nodes < 64:
        raise ValidationError("at least 64 quadrature nodes are required")
    scale = 1.0 / (2.0 * (k + m) * _SQRT_PI)

    def gl(n):
        x, w = _gen_laguerre_rule(n)
        return scale * float(np.dot(w, [min_sinr_cdf(z) for z in x]))

    v1, v2 = gl(nodes), gl(2 * nodes)
    if abs(v1 - v2) <= max(1e-10, 1e-9 * abs(v2)):
        return v2
    # substitute z = t^2: resolves CDFs that rise sharply near z = 0, where
    # the polynomial rule converges slowly; e^-256 bounds the truncated tail
    val, err = integrate.quad(
        lambda t: 2.0 * math.exp(-t * t) * min_sinr_cdf(t * t),
        0.0, 16.0, epsabs=1e-13, epsrel=1e-12, limit=800,
    )
    if err > 1e-9:
        raise QuadratureFailure(f"BER quadrature error {err:.2e}")
    return scale * val


def average_ber(scheme: str, cfg: SystemConfig, exact_bf: bool = False,
                as_printed: bool = False, nodes: int = 64) -> float:
    """Average BPSK BER over all links (worst-link approximation).

    ``as_printed`` applies the specialized BF series tail (which can leave
    [0, 1]); the IC specialized form coincides with the composed path.
    """
    _require_analysis_powers(cfg)

    if as_printed and scheme == "BF":
        def min_cdf(z):
            surv_m = math.exp(cfg.k * _log_survival_mue("BF", z, cfg, False))
            tail = (math.exp(-z / cfg.p_r) * (z / cfg.power_ratio + 1.0)) ** (
                -cfg.k * cfg.m
            )
            return 1.0 - surv_m * tail
    else:
        def min_cdf(z):
            return -math.expm1(_log_survival_min_sinr(scheme, z, cfg, exact_bf))

    return ber_from_min_sinr_cdf(min_cdf, cfg.k, cfg.m, nodes=nodes)
