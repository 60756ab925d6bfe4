"""Weighted singular vectors, diagonal flows on unimodular lattices and
nondivergence experiments for friendly measures."""

__version__ = "0.1.0"

from .exceptions import (
    BoundViolationError,
    BudgetExceededError,
    EnumerationBudgetError,
    RankError,
    RefinementStallError,
    SinglatError,
    SurfaceError,
)
from .weights import WeightVector, as_weights, equal_weights
from .lattice import MultiVector, RationalSubspace, decompose_norm_sq, eliminate, saturate, wedge
from .dynamics import UnimodularLattice, Systole, TrajectoryProfile, ell_V, flow_matrix, in_K_eps, systole, tau, trajectory
from .diophantine import (
    ApproximationWitness,
    SingularityReport,
    dirichlet_check,
    find_witness,
    sandwich_check,
    sing_scan,
    totally_irrational_screen,
)
from .measures import EscapeEstimate, alpha_fit, decay_probe, escape_fraction, escape_sweep, federer_probe, parse_sampler
from .constructor import ConstructionState, DeltaSchedule, SurfaceSpec, construct, verify_certificate
from .estimators import DecayExponentRegressor, EscapeEstimator, FlowSystoleTransformer
