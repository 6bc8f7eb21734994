"""hcransim: downlink H-CRAN inter-tier interference suppression toolkit.

Library layers:

* ``channel``     -- scenario config, reproducible CN(0,1) channel draws
* ``precoding``   -- IC / BF precoders and exact per-link SINRs
* ``analytic``    -- closed-form outage, sum capacity and average BER
* ``montecarlo``  -- empirical estimates of the same metrics (the oracle)
* ``crra``        -- RUE sum-rate power allocation (water-filling KKT / alternating)
* ``experiments`` -- sweep runner with CSV/JSON output (also the CLI)
"""

__version__ = "0.1.0"

from .analytic import (
    CdfParams,
    average_ber,
    ber_from_min_sinr_cdf,
    cdf_sinr,
    ergodic_rate_exp,
    ergodic_rate_ratio,
    ergodic_rate_ratio_series,
    gamma_ratio2_cdf_approx,
    gamma_ratio2_cdf_exact,
    gamma_ratio_cdf,
    gamma_ratio_cdf_quad,
    outage_overall,
    sum_capacity,
)
from .channel import ChannelRealization, RngStream, SystemConfig, draw_channel
from .crra import (
    CrraProblem,
    Multipliers,
    PowerAllocation,
    brute_force_oracle,
    check_feasibility,
    solve_bf,
    solve_ic,
)
from .errors import (
    DegenerateChannel,
    DomainError,
    EmptyNullSpace,
    HcranError,
    Infeasible,
    InfeasibleInner,
    InfiniteSinr,
    NoConvergence,
    QuadratureFailure,
    ValidationError,
)
from .experiments import ExperimentSpec, run_crra_trace, run_experiment
from .montecarlo import (
    MetricEstimate,
    TrialPlan,
    empirical_cdf,
    estimate_all,
    estimate_ber,
    estimate_capacity,
    estimate_capacity_split,
    estimate_outage,
)
from .precoding import (
    PrecoderSet,
    SinrVector,
    bf_precoder,
    build_precoders,
    evaluate_sinr,
    ic_precoder,
    null_space_basis,
)
from .special import (
    SpecialFnResult,
    exp1_scaled,
    exp_integral_e1,
    gamma_upper_int,
    hyp1f1,
)

__all__ = [name for name in dir() if not name.startswith("_")]
