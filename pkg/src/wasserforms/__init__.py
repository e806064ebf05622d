"""Differential calculus on Wasserstein space, computed exactly over finitely-atomic measures."""

__version__ = "0.1.0"

from .curves import MeasureCurve, load_curve, save_curve, trajectory_velocities
from .errors import (
    AtomCollision,
    BadRadius,
    CoincidentAtoms,
    DimensionMismatch,
    JacobianUnavailable,
    LengthMismatch,
    MissingVelocities,
    NonMonotone,
    NonpositiveWeight,
    NotClosedCurve,
    NotClosedForm,
    NumericalError,
    OddDimension,
    OutOfRange,
    StepRejected,
    ValidationError,
    WasserformsError,
    WeightSumOutOfRange,
)
from .measures import (
    AnalyticField,
    DiscreteMeasure,
    Functional,
    ScalarField,
    dirac,
    load_measure,
    make_measure,
    merge_atoms,
    pushforward,
    save_measure,
    uniform,
)
from .transport import TransportPlan, barycentric_projection, dual_potentials, geodesic, optimal_plan, w2_distance
from .calculus import (
    continuity_residual,
    divergence_pairing,
    metric_derivative,
    reparametrize,
    tangent_projection,
    wasserstein_gradient,
)
from .forms import (
    PseudoOneForm,
    discrete_restriction,
    evaluate_form,
    exterior_derivative,
    exterior_derivative_fd,
    line_integral,
    linear_pseudo_one_form,
    pullback,
)
from .green import (
    AnnulusSurface,
    boundary_integral,
    green_residual,
    loop_integral,
    make_annulus,
    reconstruct_potential,
    surface_integral_d,
)
from .symplectic import (
    HamiltonianSystem,
    hamiltonian_flow,
    hamiltonian_vector_field,
    omega_pairing,
    poisson_bracket,
)
