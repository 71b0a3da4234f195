"""Unbiased estimation with coupled Hamiltonian Monte Carlo chains."""

from ._backend import NATIVE_AVAILABLE, default_backend
from .couplings import (
    CoupledState,
    coupled_hmc_step,
    coupled_mala_step,
    coupled_mixture_step,
    coupled_rwmh_step,
    max_coupling_gaussian,
    sample_coupled_momentum,
)
from .diagnostics import (
    asymptotic_variance,
    iact_estimate,
    meeting_tail_diagnostic,
    mixture_inefficiency_bound,
    tune_k_m,
)
from .estimator import (
    CoupledRun,
    EstimatorConfig,
    TestFunctionSet,
    h_k,
    h_km,
    run_coupled,
    run_cost,
)
from .integrator import MassMatrix, PhasePoint, exact_gaussian_flow, hamiltonian, leapfrog
from .kernels import KernelConfig, StepOutcome, hmc_step, mala_step, mixture_step, rwmh_step, run_chain
from .replication import ReplicationSummary, run_meetings, run_replicates
from .rng import PairStreams, make_streams, replicate_seed, replicate_streams
from .targets import (
    CoxModelSpec,
    LogisticModelSpec,
    TargetModel,
    build_cox_covariance,
    cox_target,
    gaussian_target,
    load_german_credit,
    load_pines,
    logistic_target,
    rosenbrock_target,
    standard_normal_target,
)

__version__ = "0.1.0"
