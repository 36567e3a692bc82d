"""Function-space MCMC laboratory.

pCN and RWM Metropolis-Hastings kernels over truncated Karhunen-Loeve
Gaussian measures, numerical certification of drift / contraction /
smallness premises, spectral-gap and conductance diagnostics, and a CLI
harness for the dimension sweeps.
"""

from .coupling import (
    AssumptionProfile,
    CoupledPair,
    DistanceParams,
    coupled_step,
    d_global,
    d_local_bounds,
    d_tilde,
    estimate_contraction,
    estimate_lyapunov,
    estimate_smallness,
    harris_certificate,
    v_eval,
)
from .diagnostics import (
    GapReport,
    RwmBoundParams,
    burn_in,
    clt_test,
    conductance_bounds,
    ergodic_average,
    gap_from_acf_linear,
    halfspace_gap_bound,
    iact_and_variance,
    mse_bound,
    rwm_acceptance_bound,
    slln_probe,
)
from .kernel import (
    ChainTrace,
    KernelParams,
    MHKernel,
    accept_prob,
    coordinate,
    export_trace_csv,
    load_trace,
    mh_step,
    pcn_propose,
    run_chain,
    run_chain_series,
    run_replicas,
    rwm_propose,
    save_trace,
)
from .measure import GaussianMeasure, SpectrumSpec, norm, project, sobolev_norm
from .rng import derive_seed, generator, seed_sequence
from .target import (
    PhiProfile,
    TargetDensity,
    acceptance_floor_probe,
    local_lipschitz_estimate,
    make_target,
    norm_tilt,
    phi_eval,
    power_tilt,
    zero_target,
)

__version__ = "0.1.0"
