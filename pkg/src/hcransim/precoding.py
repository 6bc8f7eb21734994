"""MBS precoder construction and exact per-link SINR evaluation.

Two schemes:

* IC (interference collaboration): each MUE beam lives in the null space of
  every MBS->RUE row and every other MUE row, then maximizes the intended
  MUE's signal power inside that null space.
* BF (beamforming): matched filter on the intended MUE's own channel,
  ignoring interference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .errors import DegenerateChannel, EmptyNullSpace, InfiniteSinr, ValidationError

SCHEMES = ("IC", "BF")

# Below this squared-norm threshold a draw is treated as unusable (measure zero).
_DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class PrecoderSet:
    """Unit-norm MBS precoding vectors, one column per MUE."""

    scheme: str
    w: np.ndarray  # (N_B, K)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        norms = np.linalg.norm(self.w, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValidationError("every precoding column must have unit norm")


@dataclass(frozen=True)
class SinrVector:
    """Linear per-link SINRs for one realization.

    ``noise_included`` records whether the MUE denominators kept the unit
    noise term; RUE denominators always keep it (the interference-limited
    simplification only ever drops the MUE noise).
    """

    mue: np.ndarray  # (K,)
    rue: np.ndarray  # (M,)
    noise_included: bool


def null_space_basis(rows: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the right null space of ``rows``.

    Numerical rank uses the scale-aware cutoff
    sigma_max * max(rows.shape) * 1e-14.  Raises EmptyNullSpace when the
    rows span the full space.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.complex128))
    r, n = rows.shape
    if r == 0:
        return np.eye(n, dtype=np.complex128)
    u, s, vh = np.linalg.svd(rows, full_matrices=True)
    tol = (s[0] if s.size else 0.0) * max(r, n) * 1e-14
    rank = int(np.sum(s > tol))
    if rank >= n:
        raise EmptyNullSpace(f"rows of shape {rows.shape} have full rank {rank}")
    return vh[rank:].conj().T


def ic_precoder(chan: ChannelRealization, k: int) -> np.ndarray:
    """IC beam for MUE k: null every RUE row and other-MUE row, then match
    the intended channel inside the remaining subspace."""
    others = [j for j in range(chan.h_mm.shape[0]) if j != k]
    rows = np.vstack([chan.g_mr, chan.h_mm[others]])
    basis = null_space_basis(rows)
    y = chan.h_mm[k] @ basis
    ny = np.linalg.norm(y)
    if ny < _DEGENERATE_NORM:
        raise DegenerateChannel(f"MUE {k} has no component in the nulling subspace")
    return basis @ (y.conj() / ny)


def bf_precoder(chan: ChannelRealization, k: int) -> np.ndarray:
    """Matched-filter beam for MUE k."""
    h = chan.h_mm[k]
    nh = np.linalg.norm(h)
    if nh < _DEGENERATE_NORM:
        raise DegenerateChannel(f"MUE {k} channel norm is numerically zero")
    return h.conj() / nh


def build_precoders(chan: ChannelRealization, scheme: str) -> PrecoderSet:
    if scheme not in SCHEMES:
        raise ValidationError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    make = ic_precoder if scheme == "IC" else bf_precoder
    cols = [make(chan, k) for k in range(chan.h_mm.shape[0])]
    return PrecoderSet(scheme=scheme, w=np.column_stack(cols))


def evaluate_sinr(
    chan: ChannelRealization,
    prec: PrecoderSet,
    p_m: float,
    p_r,
    include_noise: bool = False,
) -> SinrVector:
    """Exact per-link SINRs for one realization and power setting.

    MUE k:  p_m |h_k w_k|^2 / (sum_{j!=k} p_m |h_k w_j|^2
                               + sum_i p_r_i |h_rm[i,k]|^2 [+ 1])
    RUE i:  p_r_i |g_rr_i|^2 / (p_m sum_j |g_mr_i w_j|^2 + 1)

    The ``+ 1`` in the MUE denominator is kept only when ``include_noise``;
    a zero denominator with a positive numerator raises InfiniteSinr.
    """
    p_m = float(p_m)
    p_r = np.broadcast_to(np.asarray(p_r, dtype=float), (chan.g_rr.shape[0],))
    if p_m < 0 or np.any(p_r < 0):
        raise ValidationError("powers must be nonnegative")

    cross_m = np.abs(chan.h_mm @ prec.w) ** 2          # (K, K): |h_k w_j|^2
    sig = np.diag(cross_m)
    intra = cross_m.sum(axis=1) - sig
    rrh_int = p_r @ (np.abs(chan.h_rm) ** 2)           # (K,)
    num_m = p_m * sig
    den_m = p_m * intra + rrh_int + (1.0 if include_noise else 0.0)

    mue = np.zeros_like(num_m)
    pos = num_m > 0
    if np.any(pos & (den_m == 0)):
        raise InfiniteSinr("zero MUE denominator with the noise term dropped")
    mue[pos] = num_m[pos] / den_m[pos]

    cross_r = np.abs(chan.g_mr @ prec.w) ** 2          # (M, K)
    rue = p_r * np.abs(chan.g_rr) ** 2 / (p_m * cross_r.sum(axis=1) + 1.0)
    return SinrVector(mue=mue, rue=rue, noise_included=include_noise)
