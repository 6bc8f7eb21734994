"""Experiment runner: parameter sweeps with analytic-vs-Monte-Carlo tables.

Output is CSV with a commented header block echoing the configuration, one
row per (sweep value, scheme, metric).  Rows carry the seed, trial count and
package version, and all floats are printed with a fixed format, so two runs
with the same spec produce byte-identical files.  An optional JSON sidecar
mirrors the table.

dB-to-linear conversion happens only here: an ``mbs_snr_db`` sweep sets
p_m = 10^(dB/10) with p_r fixed, i.e. the axis is per-antenna MBS transmit
power in dB relative to the unit noise power.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from .analytic import average_ber, outage_overall, sum_capacity
from .channel import RngStream, SystemConfig, draw_channel
from .crra import CrraProblem, solve_bf, solve_ic
from .errors import (
    HcranError,
    Infeasible,
    NoConvergence,
    QuadratureFailure,
    ValidationError,
)
from .montecarlo import TrialPlan, estimate_ber, estimate_capacity, estimate_outage
from .precoding import build_precoders

SWEEP_AXES = ("gamma_th", "n_b", "mbs_snr_db", "p_rs_i", "p_rs")
METRICS = ("outage", "capacity", "ber", "crra_ic", "crra_bf")
_MC_METRICS = ("outage", "capacity", "ber")

# substream id reserved for the (single) channel realization used by CRRA rows;
# Monte Carlo batches use small even/odd ids, so this cannot collide.
_CRRA_STREAM = 2**48

_COLUMNS = (
    "axis", "value", "scheme", "metric", "analytic", "mc_value", "mc_std_err",
    "trials", "agree", "iterations", "converged", "seed", "version",
)


@dataclass(frozen=True)
class ExperimentSpec:
    cfg: SystemConfig
    sweep_axis: str
    sweep_values: tuple[float, ...]
    metrics: tuple[str, ...]
    schemes: tuple[str, ...]
    plan: TrialPlan
    out_path: str | None = None
    json_path: str | None = None
    exact_bf_cdf: bool = False
    as_printed: bool = False
    include_noise: bool = False

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ValidationError(f"sweep axis must be one of {SWEEP_AXES}")
        if len(self.sweep_values) == 0:
            raise ValidationError("sweep values must be nonempty")
        if any(b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])):
            raise ValidationError("sweep values must be strictly increasing")
        if not self.metrics or any(m not in METRICS for m in self.metrics):
            raise ValidationError(f"metrics must be a nonempty subset of {METRICS}")
        if not self.schemes or any(s not in ("IC", "BF") for s in self.schemes):
            raise ValidationError("schemes must be a nonempty subset of {IC, BF}")
        if any(m in _MC_METRICS for m in self.metrics) and self.plan.trials < 1000:
            raise ValidationError("published Monte Carlo estimates need >= 1000 trials")


def apply_sweep_value(cfg: SystemConfig, axis: str, value: float) -> SystemConfig:
    if axis == "gamma_th":
        return cfg.replace(gamma_th=float(value))
    if axis == "n_b":
        if value != int(value):
            raise ValidationError("n_b sweep values must be integers")
        return cfg.replace(n_b=int(value))
    if axis == "mbs_snr_db":
        return cfg.replace(p_m=float(10.0 ** (value / 10.0)))
    if axis == "p_rs_i":
        return cfg.replace(p_rs_i=(float(value),) * cfg.m)
    if axis == "p_rs":
        return cfg.replace(p_rs=float(value))
    raise ValidationError(f"unknown sweep axis {axis!r}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _analytic_value(metric, scheme, cfg, spec) -> float:
    kw = dict(exact_bf=spec.exact_bf_cdf, as_printed=spec.as_printed)
    if metric == "outage":
        return outage_overall(scheme, cfg, **kw)
    if metric == "capacity":
        return sum_capacity(scheme, cfg, **kw)
    return average_ber(scheme, cfg, **kw)


def _mc_estimate(metric, scheme, cfg, spec):
    fn = {"outage": estimate_outage, "capacity": estimate_capacity,
          "ber": estimate_ber}[metric]
    return fn(scheme, cfg, spec.plan, include_noise=spec.include_noise)


def _crra_allocation(metric, cfg, spec):
    scheme = "IC" if metric == "crra_ic" else "BF"
    chan = draw_channel(cfg, RngStream(spec.plan.base_seed, _CRRA_STREAM))
    prob = CrraProblem(cfg=cfg, chan=chan, scheme=scheme,
                       precoders=build_precoders(chan, scheme))
    alloc = solve_ic(prob) if scheme == "IC" else solve_bf(prob)
    return scheme, alloc


def _header_lines(spec: ExperimentSpec) -> list[str]:
    lines = [
        f"# hcransim {__version__}",
        f"# base config: {json.dumps(spec.cfg.to_mapping(), sort_keys=True)}",
        f"# sweep: {spec.sweep_axis} = {[float(v) for v in spec.sweep_values]}",
        f"# metrics: {list(spec.metrics)}; schemes: {list(spec.schemes)}",
        f"# trials: {spec.plan.trials}; seed: {spec.plan.base_seed}; "
        f"batch_size: {spec.plan.batch_size}",
        f"# flags: exact_bf_cdf={spec.exact_bf_cdf} as_printed={spec.as_printed} "
        f"include_noise={spec.include_noise}",
        "# agreement flag: |analytic - mc| <= 3 * mc_std_err",
    ]
    if spec.sweep_axis == "mbs_snr_db":
        lines.append(
            "# mbs_snr_db axis: per-antenna MBS transmit power in dB over unit "
            "noise; p_m = 10^(dB/10), p_r held fixed"
        )
    return lines


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run the sweep and return the result rows (also written to out_path).

    Rows are produced in sweep order; when an output path is set each row is
    flushed as soon as it is computed, so partial results survive an abort.
    """
    rows: list[dict] = []
    writer_ctx = _RowWriter(spec) if spec.out_path else None
    try:
        for value in spec.sweep_values:
            cfg = apply_sweep_value(spec.cfg, spec.sweep_axis, value)
            for metric in spec.metrics:
                if metric in _MC_METRICS:
                    for scheme in spec.schemes:
                        ana = _analytic_value(metric, scheme, cfg, spec)
                        est = _mc_estimate(metric, scheme, cfg, spec)
                        agree = abs(ana - est.value) <= 3.0 * est.std_err + 1e-15
                        row = {
                            "axis": spec.sweep_axis, "value": float(value),
                            "scheme": scheme, "metric": metric,
                            "analytic": ana, "mc_value": est.value,
                            "mc_std_err": est.std_err, "trials": est.trials,
                            "agree": agree, "iterations": None, "converged": None,
                            "seed": spec.plan.base_seed, "version": __version__,
                        }
                        rows.append(row)
                        if writer_ctx:
                            writer_ctx.write(row)
                else:
                    scheme, alloc = _crra_allocation(metric, cfg, spec)
                    row = {
                        "axis": spec.sweep_axis, "value": float(value),
                        "scheme": scheme, "metric": metric,
                        "analytic": alloc.rue_sum_rate, "mc_value": None,
                        "mc_std_err": None, "trials": None, "agree": None,
                        "iterations": alloc.iterations, "converged": alloc.converged,
                        "seed": spec.plan.base_seed, "version": __version__,
                    }
                    rows.append(row)
                    if writer_ctx:
                        writer_ctx.write(row)
    finally:
        if writer_ctx:
            writer_ctx.close()
    if spec.json_path:
        _write_json(spec, rows)
    return rows


def run_crra_trace(spec: ExperimentSpec) -> dict:
    """Per-iteration objective traces for the CRRA metrics in the spec.

    Returns {(scheme, sweep_value): trace tuple}; when out_path is set, a
    gnuplot-ready trace table is written next to it (suffix ``_trace.csv``).
    """
    crra_metrics = [m for m in spec.metrics if m not in _MC_METRICS]
    if not crra_metrics:
        raise ValidationError("run_crra_trace needs a crra_ic or crra_bf metric")
    traces: dict = {}
    for value in spec.sweep_values:
        cfg = apply_sweep_value(spec.cfg, spec.sweep_axis, value)
        for metric in crra_metrics:
            scheme, alloc = _crra_allocation(metric, cfg, spec)
            traces[(scheme, float(value))] = alloc.trace
    if spec.out_path:
        path = _trace_path(spec.out_path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in _header_lines(spec):
                fh.write(line + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("scheme", "value", "iteration", "objective"))
            for (scheme, value), trace in traces.items():
                for i, obj in enumerate(trace, start=1):
                    w.writerow((scheme, _fmt(value), i, _fmt(float(obj))))
    return traces


def _trace_path(out_path: str) -> str:
    stem = out_path[:-4] if out_path.endswith(".csv") else out_path
    return stem + "_trace.csv"


class _RowWriter:
    def __init__(self, spec: ExperimentSpec):
        self._fh = open(spec.out_path, "w", encoding="utf-8", newline="")
        for line in _header_lines(spec):
            self._fh.write(line + "\n")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(_COLUMNS)
        self._fh.flush()

    def write(self, row: dict):
        self._csv.writerow(tuple(_fmt(row[c]) for c in _COLUMNS))
        self._fh.flush()

    def close(self):
        self._fh.close()


def _write_json(spec: ExperimentSpec, rows: list[dict]):
    payload = {
        "version": __version__,
        "config": spec.cfg.to_mapping(),
        "sweep_axis": spec.sweep_axis,
        "seed": spec.plan.base_seed,
        "trials": spec.plan.trials,
        "rows": [{k: row[k] for k in _COLUMNS} for row in rows],
    }
    with open(spec.json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# command-line front end
# ---------------------------------------------------------------------------

def parse_sweep(text: str) -> tuple[str, tuple[float, ...]]:
    """Parse ``axis=start:step:stop`` or ``axis=v1,v2,...``."""
    if "=" not in text:
        raise ValidationError("sweep must look like axis=start:step:stop or axis=list")
    axis, _, body = text.partition("=")
    axis = axis.strip()
    body = body.strip()
    if ":" in body:
        parts = body.split(":")
        if len(parts) != 3:
            raise ValidationError("range sweep must be start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValidationError("sweep step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        values = tuple(start + i * step for i in range(max(n, 0)))
    else:
        values = tuple(float(p) for p in body.split(",") if p.strip())
    if not values:
        raise ValidationError("sweep produced no values")
    return axis, values


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hcransim",
        description="H-CRAN inter-tier interference suppression experiments",
    )
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--sweep", help="axis=start:step:stop or axis=v1,v2,...")
    p.add_argument("--metric", help="comma list from " + ",".join(METRICS))
    p.add_argument("--scheme", help="comma list from IC,BF")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    p.add_argument("--seed", type=int, help="base seed for all substreams")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--json", dest="json_path", help="optional JSON sidecar path")
    p.add_argument("--batch-size", type=int, default=65536)
    p.add_argument("--exact-bf-cdf", action="store_true",
                   help="use the exact two-interference-class BF MUE CDF")
    p.add_argument("--as-printed", action="store_true",
                   help="use the specialized series forms instead of the "
                        "compositional ones (comparison mode)")
    p.add_argument("--include-noise", action="store_true",
                   help="keep the unit noise term in MUE SINRs (sensitivity mode)")
    return p


def build_spec(args) -> ExperimentSpec:
    with open(args.config, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    cfg = SystemConfig.from_mapping(data.get("system", {}))
    exp = data.get("experiment", {}) or {}

    if args.sweep:
        axis, values = parse_sweep(args.sweep)
    else:
        sweep = exp.get("sweep", {})
        axis = sweep.get("axis")
        if axis is None:
            raise ValidationError("no sweep given (config experiment.sweep or --sweep)")
        if "values" in sweep:
            values = tuple(float(v) for v in sweep["values"])
        else:
            values = parse_sweep(f"{axis}={sweep['start']}:{sweep['step']}:{sweep['stop']}")[1]

    metrics = tuple((args.metric or ",".join(exp.get("metrics", []))).split(","))
    metrics = tuple(m.strip() for m in metrics if m.strip())
    schemes = tuple((args.scheme or ",".join(exp.get("schemes", ["IC", "BF"]))).split(","))
    schemes = tuple(s.strip() for s in schemes if s.strip())
    plan = TrialPlan(
        trials=args.trials or int(exp.get("trials", 10000)),
        base_seed=args.seed if args.seed is not None else int(exp.get("seed", 0)),
        batch_size=args.batch_size,
    )
    return ExperimentSpec(
        cfg=cfg,
        sweep_axis=axis,
        sweep_values=values,
        metrics=metrics,
        schemes=schemes,
        plan=plan,
        out_path=args.out or exp.get("out"),
        json_path=args.json_path,
        exact_bf_cdf=args.exact_bf_cdf,
        as_printed=args.as_printed,
        include_noise=args.include_noise,
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = build_spec(args)
        rows = run_experiment(spec)
        if any(m in ("crra_ic", "crra_bf") for m in spec.metrics):
            run_crra_trace(spec)
    except (ValidationError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except (QuadratureFailure, NoConvergence, HcranError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    if not args.out and not (args.config and spec.out_path):
        for row in rows:
            print(",".join(_fmt(row[c]) for c in _COLUMNS))
    return 0


if __name__ == "__main__":
    sys.exit(main())
