"""Cooperative radio resource allocation: RUE sum-rate maximization.

Both schemes reduce to the same inner problem

    max  sum_i log2(1 + gain_i * P_i)
    s.t. 0 <= P_i <= cap_i,   sum_i P_i <= budget,
         sum_i t[i, k] * P_i <= limit_k          (one linear cap per MUE)

whose KKT solution is water-filling, P_i = 1/(mu + sum_k nu_k t[i,k]) -
1/gain_i clipped into [0, cap_i]; clipping realizes the per-RRH box
multipliers lambda_i, which are recovered afterwards for reporting.

The duals (mu, nu) are found by a projected subgradient loop with an
exact complementarity polish each iteration: a Gauss-Seidel pass of scalar
bisections over the monotone residual system.  The polish is what drives
the KKT residual below 1e-6; the subgradient pass supplies warm starts
when a polish attempt stalls.  Multiplier search brackets start at the
analytic boxes [0, min_i gain_i] and [0, min_i gain_i / t[i,k]] and are
widened automatically: the boxes are only valid when every optimal power
is strictly positive, and clipping at zero can push the true multiplier
beyond them.

For BF the inner problem is wrapped in the alternating loop: optimal RRH
powers at fixed MBS power, then the minimal MBS power that still meets
every MUE rate floor.  Each step is an exact coordinate maximization, so
the objective trace is non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize

from .channel import ChannelRealization, SystemConfig
from .errors import Infeasible, InfeasibleInner, NoConvergence, ValidationError
from .precoding import PrecoderSet

_KKT_TOL = 1e-6
_FEAS_RTOL = 1e-9


@dataclass(frozen=True)
class Multipliers:
    lam: tuple[float, ...]  # per-RRH cap multipliers (recovered from clipping)
    mu: float               # total-budget multiplier
    nu: tuple[float, ...]   # per-MUE rate-floor multipliers


@dataclass(frozen=True)
class PowerAllocation:
    p_m: float
    p_r: tuple[float, ...]
    multipliers: Multipliers
    rue_sum_rate: float
    iterations: int
    converged: bool
    kkt_residual: float
    trace: tuple[float, ...] = ()
    p_m_lower: float = 0.0  # smallest MBS power still meeting every MUE floor


@dataclass(frozen=True)
class CrraProblem:
    cfg: SystemConfig
    chan: ChannelRealization
    scheme: str
    precoders: PrecoderSet

    def __post_init__(self):
        if self.scheme not in ("IC", "BF"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.precoders.scheme != self.scheme:
            raise ValidationError("precoder set does not match the problem scheme")


def _rate_gap(cfg: SystemConfig) -> float:
    """2^r_ms - 1; inf when the rate floor overflows the float range."""
    try:
        return math.pow(2.0, cfg.r_ms) - 1.0
    except OverflowError:
        return math.inf


def _link_gains(prob: CrraProblem):
    w = prob.precoders.w
    cross = np.abs(prob.chan.h_mm @ w) ** 2           # (K, K)
    sig = np.diag(cross).copy()
    intra = cross.sum(axis=1) - sig
    t_mat = np.abs(prob.chan.h_rm) ** 2               # (M, K)
    g_rr = np.abs(prob.chan.g_rr) ** 2                # (M,)
    d_rue = (np.abs(prob.chan.g_mr @ w) ** 2).sum(axis=1)  # (M,)
    return sig, intra, t_mat, g_rr, d_rue


# ---------------------------------------------------------------------------
# inner water-filling solver
# ---------------------------------------------------------------------------

def _wf_powers(gains, caps, t_mat, mu, nu):
    denom = mu + t_mat @ nu
    p = np.zeros_like(gains)
    ok = gains > 0
    with np.errstate(divide="ignore"):
        lvl = np.where(denom > 0, 1.0 / np.where(denom > 0, denom, 1.0), np.inf)
        p[ok] = np.clip(lvl[ok] - 1.0 / gains[ok], 0.0, caps[ok])
    return p


def _objective(gains, p) -> float:
    return float(np.sum(np.log2(1.0 + gains * p)))


class _Inner:
    """One instance of the inner concave problem plus its dual machinery."""

    def __init__(self, gains, caps, t_mat, budget, limits):
        self.g = np.asarray(gains, dtype=float)
        self.caps = np.asarray(caps, dtype=float)
        self.t = np.asarray(t_mat, dtype=float)
        self.budget = float(budget)
        self.limits = np.asarray(limits, dtype=float)
        self.m = self.g.size
        self.k = self.limits.size
        if np.any(self.limits < 0):
            raise Infeasible("a rate-floor cap is negative; no nonnegative power fits")
        # constraints that can never bind: infinite limit or no coupling
        self.active_k = [
            k for k in range(self.k)
            if np.isfinite(self.limits[k]) and np.any(self.t[:, k] > 0)
        ]
        for k in range(self.k):
            if not np.any(self.t[:, k] > 0) and self.limits[k] < 0:
                raise Infeasible("zero-coupling MUE constraint with negative cap")
        pos = self.g > 0
        self.mu_box = float(self.g[pos].min()) if pos.any() else 1.0
        nu_box = np.ones(self.k)
        for k in range(self.k):
            coupled = (self.t[:, k] > 0) & pos
            if coupled.any():
                nu_box[k] = float(np.min(self.g[coupled] / self.t[coupled, k]))
        self.nu_box = nu_box
        # plain-float copies: the bisection residuals run hottest and numpy
        # overhead dominates at these sizes
        self._g_list = [float(v) for v in self.g]
        self._inv_g = [1.0 / v if v > 0 else math.inf for v in self.g]
        self._caps_list = [float(v) for v in self.caps]
        self._t_rows = [[float(v) for v in row] for row in self.t]

    def _power_scalar(self, i: int, mu: float, nu) -> float:
        if self._g_list[i] <= 0:
            return 0.0
        d = mu
        row = self._t_rows[i]
        for k in self.active_k:
            d += row[k] * nu[k]
        lvl = 1.0 / d if d > 0 else math.inf
        p = lvl - self._inv_g[i]
        cap = self._caps_list[i]
        if p > cap:
            return cap
        return p if p > 0.0 else 0.0

    def _sum_powers(self, mu: float, nu) -> float:
        return sum(self._power_scalar(i, mu, nu) for i in range(self.m))

    def _coupled_power(self, mu: float, nu, k: int) -> float:
        return sum(
            self._t_rows[i][k] * self._power_scalar(i, mu, nu)
            for i in range(self.m)
        )

    def powers(self, mu, nu):
        return _wf_powers(self.g, self.caps, self.t, mu, nu)

    def residuals(self, p):
        r_b = float(p.sum() - self.budget)
        r_k = self.t.T @ p - self.limits
        return r_b, r_k

    def feasible(self, p) -> bool:
        r_b, r_k = self.residuals(p)
        if r_b > _FEAS_RTOL * max(self.budget, 1.0):
            return False
        for k in self.active_k:
            if r_k[k] > _FEAS_RTOL * max(self.limits[k], 1.0):
                return False
        return True

    # -- scalar complementarity solves -----------------------------------

    def _coord_root(self, f, start_hi):
        """Smallest theta >= 0 with f(theta) <= 0 for non-increasing f."""
        if f(0.0) <= 0.0:
            return 0.0
        hi = max(start_hi, 1e-9)
        for _ in range(200):
            if f(hi) <= 0.0:
                break
            hi *= 2.0
        else:
            raise NoConvergence("dual bracket expansion failed")
        return float(brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-14, maxiter=300))

    def _gs_sweeps(self, mu, nu, mu_first=True, sweeps=30):
        """Gauss-Seidel bisection over the multiplier complementarity system."""
        nu = nu.copy()
        mu = float(mu)

        def solve_mu():
            return self._coord_root(
                lambda m: self._sum_powers(m, nu) - self.budget,
                max(mu, self.mu_box),
            )

        def solve_nu(k):
            lim = self.limits[k]

            def f_k(v):
                old = nu[k]
                nu[k] = v
                r = self._coupled_power(mu, nu, k) - lim
                nu[k] = old
                return r
            return self._coord_root(f_k, max(nu[k], self.nu_box[k]))

        for _ in range(sweeps):
            mu_old, nu_old = mu, nu.copy()
            if mu_first:
                mu = solve_mu()
                for k in self.active_k:
                    nu[k] = solve_nu(k)
            else:
                for k in self.active_k:
                    nu[k] = solve_nu(k)
                mu = solve_mu()
            moved = abs(mu - mu_old) + float(np.abs(nu - nu_old).sum())
            if moved <= 1e-13 * (1.0 + mu + float(nu.sum())):
                break
        return mu, nu

    def dual_descend(self, mu, nu):
        """Minimize the (convex, C^1) dual over the nonnegative orthant.

        The dual value at (mu, nu) is sum_i max_P [ln(1+gP) - (mu+t nu)P]
        + mu*budget + sum_k nu_k*limit_k, and its gradient is exactly the
        constraint slack vector, so a bound-constrained quasi-Newton solve
        lands on the complementarity point regardless of which powers sit
        on their box edges.
        """
        idx = self.active_k
        coeff = np.column_stack([np.ones(self.m)] + [self.t[:, k] for k in idx])

        def fun(x):
            nv = np.zeros(self.k)
            nv[idx] = x[1:]
            p = self.powers(x[0], nv)
            d = coeff @ x
            val = float(
                np.sum(np.log1p(self.g * p) - d * p)
                + x[0] * self.budget
                + sum(x[1 + j] * self.limits[k] for j, k in enumerate(idx))
            )
            grad = np.empty_like(x)
            grad[0] = self.budget - p.sum()
            for j, k in enumerate(idx):
                grad[1 + j] = self.limits[k] - float(self.t[:, k] @ p)
            return val, grad

        x0 = np.concatenate([[mu], nu[idx]])
        res = minimize(
            fun, x0, jac=True, method="L-BFGS-B",
            bounds=[(0.0, None)] * x0.size,
            options={"maxiter": 500, "ftol": 1e-18, "gtol": 1e-14},
        )
        nu_out = np.zeros(self.k)
        nu_out[idx] = res.x[1:]
        return float(res.x[0]), nu_out

    def polish(self, mu, nu):
        """Complementarity solve over (mu, nu) from a warm start.

        Gauss-Seidel sweeps localize the active pattern and a semismooth
        Newton pass finishes quadratically.  The sweep that starts with the
        budget coordinate can latch onto the wrong corner when the budget
        and a rate cap are nearly parallel, so both sweep orders are tried;
        if neither candidate passes the KKT check, a bound-constrained
        quasi-Newton descent of the dual settles it.
        """
        best = None
        for mu_first in (True, False):
            m2, n2 = self._gs_sweeps(mu, nu, mu_first=mu_first)
            m2, n2 = self._newton_refine(m2, n2)
            if self.accepted(m2, n2):
                return m2, n2
            res = self.kkt_residual(self.powers(m2, n2), m2, n2)
            if best is None or res < best[0]:
                best = (res, m2, n2)
        m2, n2 = self.dual_descend(best[1], best[2])
        m2, n2 = self._newton_refine(m2, n2)
        res = self.kkt_residual(self.powers(m2, n2), m2, n2)
        if self.accepted(m2, n2) or res < best[0]:
            best = (res, m2, n2)
        return best[1], best[2]

    def accepted(self, mu, nu) -> bool:
        p = self.powers(mu, nu)
        return self.feasible(p) and self.kkt_residual(p, mu, nu) <= _KKT_TOL

    def _equality_candidates(self):
        """Every subset of {budget} + rate caps, most-violated-first-ish."""
        subsets = []
        for mask in range(2 ** (1 + len(self.active_k))):
            budget_on = bool(mask & 1)
            ks = [k for j, k in enumerate(self.active_k) if mask & (2 << j)]
            subsets.append((budget_on, ks))
        subsets.sort(key=lambda s: -(s[0] + len(s[1])))
        return subsets

    def _solve_pinned(self, budget_on, ks, iters=60):
        """Damped Newton for r_S = 0 with multipliers outside S pinned at 0."""
        coords = ([-1] if budget_on else []) + list(ks)
        if not coords:
            return 0.0, np.zeros(self.k)
        mu, nu = 0.0, np.zeros(self.k)
        # one restricted GS pass for a warm start
        if budget_on:
            mu = self._coord_root(
                lambda m: self.powers(m, nu).sum() - self.budget, self.mu_box)
        for k in ks:
            def f_k(v, k=k):
                nu_try = nu.copy()
                nu_try[k] = v
                return float(self.t[:, k] @ self.powers(mu, nu_try) - self.limits[k])
            nu[k] = self._coord_root(f_k, self.nu_box[k])

        def resid(mu_v, nu_v):
            p = self.powers(mu_v, nu_v)
            out = []
            if budget_on:
                out.append(p.sum() - self.budget)
            for k in ks:
                out.append(float(self.t[:, k] @ p - self.limits[k]))
            return np.asarray(out), p

        cols = [np.ones(self.m) if c == -1 else self.t[:, c] for c in coords]
        coeff = np.column_stack(cols)
        r, p = resid(mu, nu)
        best = float(np.max(np.abs(r))) if r.size else 0.0
        for _ in range(iters):
            if best <= 1e-12 * max(self.budget, 1.0):
                break
            x = np.array([mu if c == -1 else nu[c] for c in coords])
            denom = coeff @ x
            with np.errstate(divide="ignore"):
                unclipped = np.where(
                    (self.g > 0) & (denom > 0),
                    1.0 / np.where(denom > 0, denom, 1.0)
                    - 1.0 / np.where(self.g > 0, self.g, 1.0),
                    np.inf,
                )
            free = (self.g > 0) & (denom > 0) & (unclipped > 0) & (unclipped < self.caps)
            if not free.any():
                break
            w = 1.0 / denom[free] ** 2
            cf = coeff[free]
            jac = -(cf * w[:, None]).T @ cf
            try:
                step = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                break
            t_step, improved = 1.0, False
            for _ in range(40):
                x_new = np.maximum(x + t_step * step, 0.0)
                mu_n = x_new[0] if budget_on else 0.0
                nu_n = np.zeros(self.k)
                for j, c in enumerate(coords):
                    if c >= 0:
                        nu_n[c] = x_new[j]
                r_new, _ = resid(mu_n, nu_n)
                m_new = float(np.max(np.abs(r_new)))
                if m_new < best:
                    mu, nu, r, best = mu_n, nu_n, r_new, m_new
                    improved = True
                    break
                t_step *= 0.5
            if not improved:
                break
        return mu, nu

    def enumerate_solve(self):
        """Try each active-set hypothesis exactly; first KKT point wins."""
        for budget_on, ks in self._equality_candidates():
            mu, nu = self._solve_pinned(budget_on, ks)
            p = self.powers(mu, nu)
            if self.feasible(p) and self.kkt_residual(p, mu, nu) <= _KKT_TOL:
                return mu, nu
        return None

    def _newton_refine(self, mu, nu, iters=60):
        """Semismooth Newton on the multiplier complementarity system."""
        idx = self.active_k
        x = np.concatenate([[mu], nu[idx]])
        coeff = np.column_stack(
            [np.ones(self.m)] + [self.t[:, k] for k in idx]
        )  # (M, 1 + |active|): coefficient of each multiplier in the levels
        scale = np.array([max(self.budget, 1.0)] + [max(self.limits[k], 1.0) for k in idx])

        def resid(xv):
            nv = np.zeros(self.k)
            nv[idx] = xv[1:]
            p = self.powers(xv[0], nv)
            r = np.empty(xv.size)
            r[0] = p.sum() - self.budget
            for j, k in enumerate(idx):
                r[j + 1] = float(self.t[:, k] @ p - self.limits[k])
            return r, p, nv

        r, p, nv = resid(x)
        phi = np.minimum(x, -r)
        best = float(np.max(np.abs(phi) / scale))
        for _ in range(iters):
            if best <= 1e-13:
                break
            denom = coeff @ x  # (M,)
            with np.errstate(divide="ignore"):
                unclipped = np.where(
                    (self.g > 0) & (denom > 0),
                    1.0 / np.where(denom > 0, denom, 1.0)
                    - 1.0 / np.where(self.g > 0, self.g, 1.0),
                    np.inf,
                )
            free = (self.g > 0) & (denom > 0) & (unclipped > 0) & (unclipped < self.caps)
            jac = np.zeros((x.size, x.size))
            if free.any():
                w = 1.0 / denom[free] ** 2
                cf = coeff[free]
                jac_r = -(cf * w[:, None]).T @ cf
            else:
                jac_r = np.zeros((x.size, x.size))
            for j in range(x.size):
                if x[j] < -r[j]:
                    jac[j] = np.eye(x.size)[j]
                else:
                    jac[j] = -jac_r[j]
            try:
                step = np.linalg.solve(jac, -phi)
            except np.linalg.LinAlgError:
                step, *_ = np.linalg.lstsq(jac, -phi, rcond=None)
            t_step = 1.0
            improved = False
            for _ in range(40):
                x_new = np.maximum(x + t_step * step, 0.0)
                r_new, p_new, nv_new = resid(x_new)
                phi_new = np.minimum(x_new, -r_new)
                m_new = float(np.max(np.abs(phi_new) / scale))
                if m_new < best:
                    x, r, phi, best = x_new, r_new, phi_new, m_new
                    improved = True
                    break
                t_step *= 0.5
            if not improved:
                break
        nu_out = np.zeros(self.k)
        nu_out[idx] = x[1:]
        return float(x[0]), nu_out

    # -- KKT bookkeeping ---------------------------------------------------

    def recover_lambda(self, p, mu, nu):
        denom = mu + self.t @ nu
        lam = np.zeros_like(p)
        at_cap = p >= self.caps - 1e-12 * np.maximum(self.caps, 1.0)
        at_cap &= self.caps > 0
        marg = self.g / (1.0 + p * self.g)
        lam[at_cap] = np.maximum(0.0, marg[at_cap] - denom[at_cap])
        return lam

    def kkt_residual(self, p, mu, nu) -> float:
        denom = mu + self.t @ nu
        marg = np.where(self.g > 0, self.g / (1.0 + p * self.g), 0.0)
        free = (p > 1e-12) & (p < self.caps - 1e-12 * np.maximum(self.caps, 1.0))
        res = 0.0
        if free.any():
            res = float(np.max(np.abs(marg[free] - denom[free])))
        r_b, r_k = self.residuals(p)
        res = max(res, r_b / max(self.budget, 1e-12))
        res = max(res, mu * abs(r_b) / max(self.budget, 1e-12))
        for k in self.active_k:
            scale = max(self.limits[k], 1e-12)
            res = max(res, r_k[k] / scale, nu[k] * abs(r_k[k]) / scale)
        return res

    # -- full solve ---------------------------------------------------------

    def solve(self, max_iter=10_000):
        """Water-filling with dual search; returns powers, duals and a
        non-decreasing incumbent trace (P = 0 is always feasible here)."""
        mu = 0.0
        nu = np.zeros(self.k)
        best_p = np.zeros(self.m)
        best_obj = _objective(self.g, best_p)
        trace = []
        step0 = 0.1 * min(self.mu_box, float(self.nu_box.min()) if self.k else self.mu_box)
        step0 = max(step0, 1e-6)
        for it in range(1, max_iter + 1):
            p = self.powers(mu, nu)
            if self.feasible(p):
                obj = _objective(self.g, p)
                if obj > best_obj:
                    best_obj, best_p = obj, p
            mu_c, nu_c = self.polish(mu, nu)
            if it == 1 and self.kkt_residual(self.powers(mu_c, nu_c), mu_c, nu_c) > _KKT_TOL:
                hit = self.enumerate_solve()
                if hit is not None:
                    mu_c, nu_c = hit
            p_c = self.powers(mu_c, nu_c)
            res = self.kkt_residual(p_c, mu_c, nu_c)
            if res <= _KKT_TOL and self.feasible(p_c):
                obj = _objective(self.g, p_c)
                if obj >= best_obj:
                    best_obj, best_p = obj, p_c
                trace.append(best_obj)
                return p_c, mu_c, nu_c, it, True, res, trace
            trace.append(best_obj)
            r_b, r_k = self.residuals(p)
            s = step0 / math.sqrt(it)
            mu = min(max(0.0, mu + s * r_b), self.mu_box)
            for k in self.active_k:
                nu[k] = min(max(0.0, nu[k] + s * r_k[k]), self.nu_box[k])
        raise NoConvergence(f"dual search did not converge in {max_iter} iterations")


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def check_feasibility(prob: CrraProblem) -> bool:
    """Can every MUE meet the rate floor at full MBS power?

    IC nulls all MBS-side interference, so the floor is attainable whenever
    the rate gap is finite and the beamformed signal gain is positive (RRH
    powers near zero make the MUE SINR arbitrarily large).  BF additionally
    needs the signal to beat the intra-MBS interference at the gap, which no
    amount of MBS power can fix.
    """
    q = _rate_gap(prob.cfg)
    if q == 0.0:
        return True
    if math.isinf(q):
        return False
    sig, intra, *_ = _link_gains(prob)
    if prob.scheme == "IC":
        return bool(np.all(sig > 0))
    return bool(np.all(sig - q * intra >= 0) and np.all(sig > 0))


def solve_ic(prob: CrraProblem) -> PowerAllocation:
    """RUE sum-rate maximization under IC: full MBS power, then water-filled
    RRH powers under the per-RRH caps, the shared budget, and the per-MUE
    interference caps implied by the rate floor."""
    if prob.scheme != "IC":
        raise ValidationError("solve_ic requires an IC problem")
    if not check_feasibility(prob):
        raise Infeasible("an MUE cannot meet the rate floor at full MBS power")
    cfg = prob.cfg
    sig, _, t_mat, g_rr, _ = _link_gains(prob)
    q = _rate_gap(cfg)
    limits = np.full(cfg.k, math.inf) if q == 0 else cfg.p_ms * sig / q
    inner = _Inner(g_rr, np.asarray(cfg.p_rs_i), t_mat, cfg.p_rs, limits)
    p, mu, nu, its, ok, res, trace = inner.solve()
    lam = inner.recover_lambda(p, mu, nu)
    interference = t_mat.T @ p
    p_m_lower = float(np.max(q * interference / sig)) if q > 0 else 0.0
    return PowerAllocation(
        p_m=cfg.p_ms,
        p_r=tuple(p),
        multipliers=Multipliers(tuple(lam), mu, tuple(nu)),
        rue_sum_rate=_objective(g_rr, p),
        iterations=its,
        converged=ok,
        kkt_residual=res,
        trace=tuple(trace),
        p_m_lower=p_m_lower,
    )


class _BfStage:
    """Shared state for the BF alternating optimization."""

    def __init__(self, prob: CrraProblem):
        self.cfg = prob.cfg
        sig, intra, t_mat, g_rr, d_rue = _link_gains(prob)
        self.q = _rate_gap(prob.cfg)
        self.head = sig - self.q * intra  # p_m * head / q caps the RRH interference
        self.t_mat = t_mat
        self.g_rr = g_rr
        self.d_rue = d_rue
        self.caps = np.asarray(prob.cfg.p_rs_i)
        self._warm = None

    def inner(self, p_m: float) -> _Inner:
        gains = self.g_rr / (p_m * self.d_rue + 1.0)
        if self.q == 0:
            limits = np.full(self.cfg.k, math.inf)
        else:
            limits = p_m * self.head / self.q
        if np.any(limits < 0):
            # unreachable once feasibility holds; contract: zero allocation
            raise InfeasibleInner("MUE floor excludes any nonzero RRH power")
        return _Inner(gains, self.caps, self.t_mat, self.cfg.p_rs, limits)

    def value(self, p_m: float) -> float:
        """Inner optimum at fixed MBS power, warm-started from the last call."""
        inner = self.inner(p_m)
        if self._warm is not None:
            mu, nu = inner.polish(self._warm[0], self._warm[1])
            p = inner.powers(mu, nu)
            if inner.feasible(p) and inner.kkt_residual(p, mu, nu) <= _KKT_TOL:
                self._warm = (mu, nu.copy())
                return _objective(inner.g, p)
        p, mu, nu, *_ = inner.solve()
        self._warm = (mu, nu.copy())
        return _objective(inner.g, p)

    def min_feasible_p_m(self, p: np.ndarray) -> float:
        """Smallest MBS power meeting every MUE floor at RRH powers ``p``."""
        if self.q == 0:
            return 0.0
        coupled = self.t_mat.T @ p
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = np.where(coupled > 0, self.q * coupled / self.head, 0.0)
        return float(min(max(cand.max(), 0.0), self.cfg.p_ms))

    def alternate(self, p_m_start: float, max_outer=500):
        """Plain alternating optimization from one starting MBS power."""
        p_m = p_m_start
        trace: list[float] = []
        prev_rate = None
        for outer in range(1, max_outer + 1):
            inner = self.inner(p_m)
            p, *_ = inner.solve()
            p_m_new = self.min_feasible_p_m(p)
            rate = _objective(self.g_rr / (p_m_new * self.d_rue + 1.0), p)
            trace.append(rate)
            if prev_rate is not None and abs(rate - prev_rate) <= 1e-6 * max(abs(rate), 1e-12):
                return p_m_new, rate, outer, trace
            prev_rate = rate
            p_m = p_m_new
        raise NoConvergence("alternating optimization did not converge in 500 iterations")


def solve_bf(prob: CrraProblem) -> PowerAllocation:
    """Alternating optimization for BF: exact inner water-filling at fixed
    MBS power, then the smallest MBS power that still meets every MUE rate
    floor, iterated to a 1e-6 relative sum-rate change.

    Every MBS power whose inner solution makes a rate floor active is a
    fixed point of that outer update, so a single descent from full power
    can stall far from the optimum.  The alternation is therefore run from
    a grid of starting powers and the best fixed point is refined by a
    golden-section pass over the (scalar) MBS power; each start is still
    the plain two-block iteration.
    """
    if prob.scheme != "BF":
        raise ValidationError("solve_bf requires a BF problem")
    if not check_feasibility(prob):
        raise Infeasible("an MUE cannot meet the rate floor under BF precoding")
    cfg = prob.cfg
    stage = _BfStage(prob)

    if cfg.p_ms == 0 or stage.q == 0:
        starts = [0.0] if cfg.p_ms == 0 else [cfg.p_ms]
    else:
        starts = sorted(
            set(np.linspace(cfg.p_ms / 16, cfg.p_ms, 16))
            | set(cfg.p_ms * np.geomspace(1.0 / 4096, 1.0, 13))
        )
    best = None
    for start in starts:
        p_m_fp, rate, outers, trace = stage.alternate(start)
        if best is None or rate > best[1]:
            best = (p_m_fp, rate, outers, trace)
    p_m, rate, outers, trace = best

    if stage.q > 0 and cfg.p_ms > 0:
        # scalar refinement around the winning fixed point
        gap = cfg.p_ms / 8
        lo, hi = max(0.0, p_m - gap), min(cfg.p_ms, p_m + gap)
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        x1 = hi - invphi * (hi - lo)
        x2 = lo + invphi * (hi - lo)
        f1, f2 = stage.value(x1), stage.value(x2)
        for _ in range(80):
            if hi - lo <= 1e-9 * max(cfg.p_ms, 1.0):
                break
            if f1 < f2:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + invphi * (hi - lo)
                f2 = stage.value(x2)
            else:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - invphi * (hi - lo)
                f1 = stage.value(x1)
        p_m_ref = 0.5 * (lo + hi)
        if stage.value(p_m_ref) > rate:
            p_m = p_m_ref

    inner = stage.inner(p_m)
    p, mu, nu, _, _, res, _ = inner.solve()
    # report at the minimal feasible MBS power for the final allocation
    p_m = stage.min_feasible_p_m(p) if stage.q > 0 else 0.0
    inner = stage.inner(p_m)
    p, mu, nu, _, _, res, _ = inner.solve()
    rate = _objective(inner.g, p)
    if rate > trace[-1]:
        trace.append(rate)
    lam = inner.recover_lambda(p, mu, nu)
    return PowerAllocation(
        p_m=p_m,
        p_r=tuple(p),
        multipliers=Multipliers(tuple(lam), mu, tuple(nu)),
        rue_sum_rate=rate,
        iterations=outers,
        converged=True,
        kkt_residual=res,
        trace=tuple(trace),
        p_m_lower=p_m,
    )


def brute_force_oracle(prob: CrraProblem, grid_points: int) -> PowerAllocation:
    """Exhaustive grid search over the feasible power boxes (tests only).

    Returns the best feasible grid point; its kkt_residual is the primal
    violation (zero by construction) rather than a stationarity certificate.
    """
    cfg = prob.cfg
    if cfg.m > 3 or cfg.k > 2:
        raise ValidationError("grid oracle limited to m <= 3, k <= 2")
    if grid_points < 2:
        raise ValidationError("grid_points must be at least 2")
    sig, intra, t_mat, g_rr, d_rue = _link_gains(prob)
    q = _rate_gap(cfg)
    caps = np.asarray(cfg.p_rs_i)
    axes = [np.linspace(0.0, c, grid_points) for c in caps]
    mesh = np.meshgrid(*axes, indexing="ij")
    p_stack = np.stack([m.ravel() for m in mesh], axis=0)  # (M, G^M)
    tol = 1.0 + 1e-12
    mask = p_stack.sum(axis=0) <= cfg.p_rs * tol + 1e-15

    if prob.scheme == "IC":
        if q > 0:
            for k in range(cfg.k):
                mask &= t_mat[:, k] @ p_stack <= (cfg.p_ms * sig[k] / q) * tol + 1e-15
        if not mask.any():
            raise Infeasible("no feasible grid point")
        obj = np.log2(1.0 + g_rr[:, None] * p_stack[:, mask]).sum(axis=0)
        best = int(np.argmax(obj))
        p_best = p_stack[:, mask][:, best]
        return _oracle_allocation(cfg.p_ms, p_best, float(obj[best]), cfg.k)

    # BF: scan the MBS power axis, too
    best_obj, best_p, best_pm = -np.inf, None, None
    for p_m in np.linspace(0.0, cfg.p_ms, grid_points):
        m2 = mask.copy()
        if q > 0:
            for k in range(cfg.k):
                m2 &= q * (t_mat[:, k] @ p_stack) <= p_m * (sig[k] - q * intra[k]) * tol + 1e-15
        if not m2.any():
            continue
        gains = g_rr / (p_m * d_rue + 1.0)
        obj = np.log2(1.0 + gains[:, None] * p_stack[:, m2]).sum(axis=0)
        i = int(np.argmax(obj))
        if obj[i] > best_obj:
            best_obj, best_p, best_pm = float(obj[i]), p_stack[:, m2][:, i], float(p_m)
    if best_p is None:
        raise Infeasible("no feasible grid point")
    return _oracle_allocation(best_pm, best_p, best_obj, cfg.k)


def _oracle_allocation(p_m, p, obj, k_users) -> PowerAllocation:
    m = len(p)
    return PowerAllocation(
        p_m=float(p_m),
        p_r=tuple(float(v) for v in p),
        multipliers=Multipliers((0.0,) * m, 0.0, (0.0,) * k_users),
        rue_sum_rate=obj,
        iterations=0,
        converged=True,
        kkt_residual=0.0,
        trace=(obj,),
    )
