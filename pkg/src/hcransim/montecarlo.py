"""Monte Carlo estimation of every metric the analytic module computes.

Trials are drawn in batches; batch ``j`` uses the counter-based substream
(base_seed, 2j) and its resample stream (base_seed, 2j + 1), so estimates
are bit-identical for a given (cfg, plan) no matter how batches are
scheduled.  Per-batch moments are merged with a fixed-order pairwise
combine, which keeps the reduction deterministic and cancellation-safe at
1e7 trials.

Noise convention (matching the distributions the closed forms describe):
MUE SINRs drop the unit noise term, RUE SINRs keep it.  Pass
``include_noise=True`` to force the exact noisy MUE expression instead
(sensitivity studies; the closed forms then no longer apply exactly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import RngStream, SystemConfig, draw_channel_batch
from .errors import DegenerateChannel, HcranError, InfiniteSinr, ValidationError

_DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class TrialPlan:
    """How many trials to run and how to key their substreams."""

    trials: int
    base_seed: int
    batch_size: int = 65536

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if not (0 <= self.base_seed < 2**64):
            raise ValidationError("base_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class MetricEstimate:
    value: float
    std_err: float
    trials: int
    discarded: int = 0


# ---------------------------------------------------------------------------
# batched precoding + SINR kernel
# ---------------------------------------------------------------------------

def _ic_beams(h_mm: np.ndarray, g_mr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched IC beams via projection onto the complement of the row space.

    For each MUE k the beam is P h_k^H / ||P h_k^H|| with P the orthogonal
    projector onto Null(G_k), G_k the stack of all RUE rows and the other
    MUE rows -- identical (up to fp) to the orthonormal-basis construction.
    """
    n_trials, k_users, n_b = h_mm.shape
    w = np.empty((n_trials, n_b, k_users), dtype=np.complex128)
    degenerate = np.zeros(n_trials, dtype=bool)
    for k in range(k_users):
        rows = np.concatenate([g_mr, np.delete(h_mm, k, axis=1)], axis=1)
        gram = rows @ rows.conj().transpose(0, 2, 1)
        rhs = rows @ h_mm[:, k, :, None].conj()
        try:
            coef = np.linalg.solve(gram, rhs)
            proj = h_mm[:, k, :, None].conj() - rows.conj().transpose(0, 2, 1) @ coef
        except np.linalg.LinAlgError:
            # rank-deficient stack (measure zero): per-trial pseudo-inverse
            proj = np.empty((n_trials, n_b, 1), dtype=np.complex128)
            for t in range(n_trials):
                c = np.linalg.pinv(gram[t]) @ rhs[t]
                proj[t] = h_mm[t, k, :, None].conj() - rows[t].conj().T @ c
        norms = np.linalg.norm(proj[:, :, 0], axis=1)
        degenerate |= norms < _DEGENERATE_NORM
        w[:, :, k] = proj[:, :, 0] / np.where(norms > 0, norms, 1.0)[:, None]
    return w, degenerate


def _bf_beams(h_mm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(h_mm, axis=2)
    degenerate = np.any(norms < _DEGENERATE_NORM, axis=1)
    w = h_mm.conj().transpose(0, 2, 1) / np.where(norms > 0, norms, 1.0)[:, None, :]
    return w, degenerate


def batch_link_sinrs(
    batch: dict,
    scheme: str,
    p_m: float,
    p_r: np.ndarray,
    include_noise: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial SINRs of all K MUE then M RUE links, plus a degenerate mask.

    Evaluates the same expressions as ``precoding.evaluate_sinr`` (including
    the nulled residual terms), vectorized over the batch.
    """
    h_mm, h_rm = batch["h_mm"], batch["h_rm"]
    g_mr, g_rr = batch["g_mr"], batch["g_rr"]
    p_r = np.asarray(p_r, dtype=float)

    if scheme == "IC":
        if not include_noise and p_m > 0 and np.all(p_r == 0):
            raise InfiniteSinr(
                "IC MUE denominators vanish with zero RRH power and noise dropped"
            )
        w, degenerate = _ic_beams(h_mm, g_mr)
    elif scheme == "BF":
        w, degenerate = _bf_beams(h_mm)
    else:
        raise ValidationError(f"unknown scheme {scheme!r}")

    cross_m = np.abs(h_mm @ w) ** 2                      # (B, K, K)
    sig = np.einsum("bkk->bk", cross_m)
    intra = cross_m.sum(axis=2) - sig
    rrh_int = np.einsum("bmk,m->bk", np.abs(h_rm) ** 2, p_r)
    num_m = p_m * sig
    den_m = p_m * intra + rrh_int + (1.0 if include_noise else 0.0)
    pos = num_m > 0
    if np.any(pos & (den_m == 0)):
        raise InfiniteSinr("zero MUE denominator with the noise term dropped")
    mue = np.zeros_like(num_m)
    np.divide(num_m, den_m, out=mue, where=pos)

    cross_r = np.abs(g_mr @ w) ** 2                      # (B, M, K)
    rue = p_r * np.abs(g_rr) ** 2 / (p_m * cross_r.sum(axis=2) + 1.0)
    return np.concatenate([mue, rue], axis=1), degenerate


def _iter_sinr_batches(scheme, cfg: SystemConfig, plan: TrialPlan, include_noise):
    """Yield (sinr_batch, discarded) with degenerate draws resampled from a
    fresh substream so they cannot bias the estimate."""
    p_r = np.full(cfg.m, cfg.p_r)
    done = 0
    j = 0
    while done < plan.trials:
        n = min(plan.batch_size, plan.trials - done)
        gen = RngStream(plan.base_seed, 2 * j).generator()
        sinr, degenerate = batch_link_sinrs(
            draw_channel_batch(cfg, gen, n), scheme, cfg.p_m, p_r, include_noise
        )
        discarded = 0
        if degenerate.any():
            regen = RngStream(plan.base_seed, 2 * j + 1).generator()
            for _ in range(64):
                idx = np.flatnonzero(degenerate)
                if idx.size == 0:
                    break
                discarded += int(idx.size)
                redraw = draw_channel_batch(cfg, regen, idx.size)
                s2, d2 = batch_link_sinrs(redraw, scheme, cfg.p_m, p_r, include_noise)
                sinr[idx] = s2
                degenerate = np.zeros_like(degenerate)
                degenerate[idx] = d2
            if degenerate.any():
                raise DegenerateChannel("resampling failed to clear degenerate draws")
        yield sinr, discarded
        done += n
        j += 1


# ---------------------------------------------------------------------------
# deterministic pairwise moment reduction
# ---------------------------------------------------------------------------

def _combine_moments(s1, s2):
    n1, mean1, m2_1 = s1
    n2, mean2, m2_2 = s2
    n = n1 + n2
    delta = mean2 - mean1
    mean = mean1 + delta * (n2 / n)
    m2 = m2_1 + m2_2 + delta * delta * (n1 * n2 / n)
    return (n, mean, m2)


def _pairwise_reduce(stats):
    stats = list(stats)
    while len(stats) > 1:
        merged = [
            _combine_moments(stats[i], stats[i + 1]) if i + 1 < len(stats) else stats[i]
            for i in range(0, len(stats), 2)
        ]
        stats = merged
    return stats[0]


def _mean_estimate(per_trial_batches, trials, discarded) -> MetricEstimate:
    stats = []
    for x in per_trial_batches:
        n = x.size
        mean = float(x.mean())
        m2 = float(np.sum((x - mean) ** 2))
        stats.append((n, mean, m2))
    n, mean, m2 = _pairwise_reduce(stats)
    std_err = np.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
    _check_discard_budget(discarded, trials)
    return MetricEstimate(value=mean, std_err=float(std_err), trials=trials,
                          discarded=discarded)


def _check_discard_budget(discarded, trials):
    if discarded / trials >= 1e-3:
        raise HcranError(
            f"degenerate-channel resampling rate {discarded}/{trials} is implausible"
        )


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def estimate_outage(scheme: str, cfg: SystemConfig, plan: TrialPlan,
                    include_noise: bool = False) -> MetricEstimate:
    """Fraction of trials where the worst link SINR falls below gamma_th."""
    count = 0
    discarded = 0
    for sinr, d in _iter_sinr_batches(scheme, cfg, plan, include_noise):
        count += int(np.count_nonzero(sinr.min(axis=1) < cfg.gamma_th))
        discarded += d
    p = count / plan.trials
    _check_discard_budget(discarded, plan.trials)
    return MetricEstimate(
        value=p,
        std_err=float(np.sqrt(p * (1.0 - p) / plan.trials)),
        trials=plan.trials,
        discarded=discarded,
    )


def estimate_capacity(scheme: str, cfg: SystemConfig, plan: TrialPlan,
                      include_noise: bool = False) -> MetricEstimate:
    """Sample mean of the per-trial sum rate over all K+M links."""
    batches = []
    discarded = 0
    for sinr, d in _iter_sinr_batches(scheme, cfg, plan, include_noise):
        batches.append(np.log2(1.0 + sinr).sum(axis=1))
        discarded += d
    return _mean_estimate(batches, plan.trials, discarded)


def estimate_capacity_split(scheme: str, cfg: SystemConfig, plan: TrialPlan,
                            include_noise: bool = False):
    """(MUE-class, RUE-class) sum-rate estimates from one shared draw set."""
    mue_batches, rue_batches = [], []
    discarded = 0
    for sinr, d in _iter_sinr_batches(scheme, cfg, plan, include_noise):
        rates = np.log2(1.0 + sinr)
        mue_batches.append(rates[:, : cfg.k].sum(axis=1))
        rue_batches.append(rates[:, cfg.k:].sum(axis=1))
        discarded += d
    return (
        _mean_estimate(mue_batches, plan.trials, discarded),
        _mean_estimate(rue_batches, plan.trials, 0),
    )


def estimate_ber(scheme: str, cfg: SystemConfig, plan: TrialPlan,
                 include_noise: bool = False) -> MetricEstimate:
    """Sample mean of Q(sqrt(2 * min SINR)) / (K + M) (worst-link BPSK BER)."""
    batches = []
    discarded = 0
    scale = 1.0 / (cfg.k + cfg.m)
    for sinr, d in _iter_sinr_batches(scheme, cfg, plan, include_noise):
        g_min = sinr.min(axis=1)
        batches.append(scale * 0.5 * erfc(np.sqrt(g_min)))
        discarded += d
    return _mean_estimate(batches, plan.trials, discarded)


def estimate_all(scheme: str, cfg: SystemConfig, plan: TrialPlan,
                 include_noise: bool = False) -> dict[str, MetricEstimate]:
    """All metrics from one shared batch sweep (keys: outage, capacity,
    capacity_mue, capacity_rue, ber).

    Identical draws to the single-metric estimators, so the values agree
    with them bit-for-bit; this exists because simulating once and reducing
    five ways is several times cheaper than five passes.
    """
    count = 0
    discarded = 0
    cap_b, mue_b, rue_b, ber_b = [], [], [], []
    scale = 1.0 / (cfg.k + cfg.m)
    for sinr, d in _iter_sinr_batches(scheme, cfg, plan, include_noise):
        g_min = sinr.min(axis=1)
        count += int(np.count_nonzero(g_min < cfg.gamma_th))
        rates = np.log2(1.0 + sinr)
        cap_b.append(rates.sum(axis=1))
        mue_b.append(rates[:, : cfg.k].sum(axis=1))
        rue_b.append(rates[:, cfg.k:].sum(axis=1))
        ber_b.append(scale * 0.5 * erfc(np.sqrt(g_min)))
        discarded += d
    p = count / plan.trials
    return {
        "outage": MetricEstimate(
            value=p, std_err=float(np.sqrt(p * (1.0 - p) / plan.trials)),
            trials=plan.trials, discarded=discarded,
        ),
        "capacity": _mean_estimate(cap_b, plan.trials, discarded),
        "capacity_mue": _mean_estimate(mue_b, plan.trials, 0),
        "capacity_rue": _mean_estimate(rue_b, plan.trials, 0),
        "ber": _mean_estimate(ber_b, plan.trials, 0),
    }


def empirical_cdf(scheme: str, link: str, cfg: SystemConfig, plan: TrialPlan,
                  grid, include_noise: bool = False) -> np.ndarray:
    """Empirical CDF of one link's SINR on ``grid``.

    Uses the first link of the requested class so the samples are i.i.d.
    across trials (links within a trial share the same draw).
    """
    if link not in ("MUE", "RUE"):
        raise ValidationError(f"unknown link {link!r}")
    grid = np.asarray(grid, dtype=float)
    col = 0 if link == "MUE" else cfg.k
    counts = np.zeros(grid.shape, dtype=np.int64)
    discarded = 0
    for sinr, d in _iter_sinr_batches(scheme, cfg, plan, include_noise):
        counts += (sinr[:, col, None] <= grid[None, :]).sum(axis=0)
        discarded += d
    _check_discard_budget(discarded, plan.trials)
    return counts / plan.trials
