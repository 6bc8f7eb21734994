"""Scenario configuration and reproducible Rayleigh channel generation.

All radio links are i.i.d. CN(0, 1), so every squared channel magnitude
has unit mean (sum of L such terms ~ Gamma(L, 1)).  There is no path loss
or geometry: transmit powers are expressed in linear units relative to the
unit noise power.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import yaml

from .errors import ValidationError

_U64 = 2**64


@dataclass(frozen=True)
class SystemConfig:
    """All scenario scalars shared by the analysis, simulation and CRRA modules.

    Powers are linear (noise power = 1).  ``p_m``/``p_r`` are the common
    per-antenna MBS/RRH powers used by the closed-form analysis;
    ``p_ms``/``p_rs_i``/``p_rs`` are the power caps used by the
    power-allocation solvers; ``gamma_th`` is the linear SINR threshold and
    ``r_ms`` the per-MUE rate floor in bits/s/Hz.
    """

    n_b: int
    m: int
    k: int
    p_m: float = 1.0
    p_r: float = 1.0
    p_ms: float | None = None
    p_rs_i: tuple[float, ...] | None = None
    p_rs: float | None = None
    gamma_th: float = 1.0
    r_ms: float = 0.0

    def __post_init__(self):
        if self.p_ms is None:
            object.__setattr__(self, "p_ms", float(self.p_m))
        if self.p_rs_i is None:
            object.__setattr__(self, "p_rs_i", (float(self.p_r),) * int(self.m))
        else:
            object.__setattr__(self, "p_rs_i", tuple(float(v) for v in self.p_rs_i))
        if self.p_rs is None:
            object.__setattr__(self, "p_rs", float(sum(self.p_rs_i)))
        self._validate()

    def _validate(self):
        if not (isinstance(self.n_b, int) and self.n_b >= 1):
            raise ValidationError(f"n_b must be a positive integer, got {self.n_b!r}")
        if not (isinstance(self.m, int) and self.m >= 1):
            raise ValidationError(f"m must be a positive integer, got {self.m!r}")
        if not (isinstance(self.k, int) and self.k >= 1):
            raise ValidationError(f"k must be a positive integer, got {self.k!r}")
        if self.n_b < self.m + self.k:
            raise ValidationError(
                f"n_b >= m + k required for nulling ({self.n_b} < {self.m + self.k})"
            )
        for name in ("p_m", "p_r", "p_ms", "p_rs", "gamma_th", "r_ms"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {v!r}")
        if len(self.p_rs_i) != self.m:
            raise ValidationError(
                f"p_rs_i must have length m={self.m}, got {len(self.p_rs_i)}"
            )
        if any(not (np.isfinite(v) and v >= 0) for v in self.p_rs_i):
            raise ValidationError("all per-RRH power caps must be finite and >= 0")

    @property
    def power_ratio(self) -> float:
        """Interference-to-signal power ratio a = P_R / P_M used by the MUE CDFs."""
        return self.p_r / self.p_m

    def replace(self, **kw) -> "SystemConfig":
        """Copy with updated fields; derived defaults are re-resolved."""
        if ("p_r" in kw or "m" in kw) and "p_rs_i" not in kw:
            kw.setdefault("p_rs_i", None)
            kw.setdefault("p_rs", None)
        return replace(self, **kw)

    def to_mapping(self) -> dict:
        return {
            "n_b": self.n_b, "m": self.m, "k": self.k,
            "p_m": self.p_m, "p_r": self.p_r, "p_ms": self.p_ms,
            "p_rs_i": list(self.p_rs_i), "p_rs": self.p_rs,
            "gamma_th": self.gamma_th, "r_ms": self.r_ms,
        }

    @classmethod
    def from_mapping(cls, data: Mapping) -> "SystemConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        for name in ("n_b", "m", "k"):
            if name in kw:
                kw[name] = int(kw[name])
        if kw.get("p_rs_i") is not None:
            kw["p_rs_i"] = tuple(float(v) for v in kw["p_rs_i"])
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "SystemConfig":
        """Load from a YAML file; keys live in the ``system`` section (or top level)."""
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, Mapping):
            raise ValidationError(f"config file {path} does not hold a mapping")
        section = data.get("system", data)
        if not isinstance(section, Mapping):
            raise ValidationError("'system' section must be a mapping")
        return cls.from_mapping(section)


@dataclass(frozen=True)
class RngStream:
    """Counter-based substream handle: (seed, stream_id) -> independent Philox stream.

    The same pair always reproduces the identical draw sequence; distinct
    stream ids give statistically independent streams, so Monte Carlo
    batches can run in any order (or in parallel) without shared state.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < _U64 and 0 <= self.stream_id < _U64):
            raise ValidationError("seed and stream_id must be 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of every complex link coefficient in the network.

    h_mm : (K, N_B)  MBS -> MUE_k rows
    h_rm : (M, K)    RRH_i -> MUE_k interference scalars
    g_mr : (M, N_B)  MBS -> RUE_i interference rows
    g_rr : (M,)      RRH_i -> RUE_i desired scalars
    """

    h_mm: np.ndarray
    h_rm: np.ndarray
    g_mr: np.ndarray
    g_rr: np.ndarray

    def __post_init__(self):
        k, n_b = self.h_mm.shape
        m = self.g_rr.shape[0]
        if self.h_rm.shape != (m, k) or self.g_mr.shape != (m, n_b):
            raise ValidationError("channel array shapes are inconsistent")


def _complex_normal(gen: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    z = gen.standard_normal(size=(2,) + shape)
    return ((z[0] + 1j * z[1]) / np.sqrt(2.0)).astype(np.complex128)


def draw_channel_batch(cfg: SystemConfig, gen: np.random.Generator, n: int) -> dict:
    """Draw ``n`` independent realizations as stacked arrays keyed by field name.

    Field order is fixed (h_mm, h_rm, g_mr, g_rr) so a given generator state
    always produces the same batch.
    """
    return {
        "h_mm": _complex_normal(gen, (n, cfg.k, cfg.n_b)),
        "h_rm": _complex_normal(gen, (n, cfg.m, cfg.k)),
        "g_mr": _complex_normal(gen, (n, cfg.m, cfg.n_b)),
        "g_rr": _complex_normal(gen, (n, cfg.m)),
    }


def draw_channel(cfg: SystemConfig, rng: RngStream) -> ChannelRealization:
    """Draw one realization, deterministic in (cfg, rng.seed, rng.stream_id)."""
    batch = draw_channel_batch(cfg, rng.generator(), 1)
    return ChannelRealization(
        h_mm=batch["h_mm"][0],
        h_rm=batch["h_rm"][0],
        g_mr=batch["g_mr"][0],
        g_rr=batch["g_rr"][0],
    )
