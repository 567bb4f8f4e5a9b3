"""spherefilm: a degenerate fourth-order thin-film equation on the sphere.

Simulation library for

    u_t + ( (1 - x^2) |u|^n ((1 - x^2) u_x)_xx )_x = 0   on (-1, 1),

the surface-tension-driven evolution of a thin liquid film coating a
sphere, written in the polar coordinate x = -cos(theta).  The package
provides the two-parameter regularization (mobility floor eps, weight
floor delta), an entropy-dissipative implicit solver whose mass, energy,
and entropy identities hold structurally, regularization-removal sweeps,
and the long-time diagnostics (Hardy-type quotients, exponential decay of
the weighted energy to the flat profile).
"""

from .errors import ConfigurationError, DomainError, NumericalError
from .grid import Grid, build_grid, face_differences, node_divergence, \
    quadrature, reflect, weight
from .functionals import (
    ENTROPY_FLOOR,
    DiagRecord,
    DriftParams,
    Field,
    ModelParams,
    constant_field,
    energy,
    entropy_G0,
    entropy_Geps,
    floor_count,
    holder_seminorm_x,
    mass,
    sup_bound_margin,
    total_entropy,
    weighted_norms,
    weighted_sup_distance,
)
from .operator import (
    BandedMatrix,
    FluxAssembly,
    apply_operator,
    extended_flux,
    flux_assembly,
    jacobian,
    mobility_face,
)
from .timestepper import SolverConfig, StepAudit, StepRejected, Trajectory, \
    run, step_be
from .continuation import ConvergenceReport, entropy_gap, mollify_initial, \
    run_sequence
from .analysis import (
    DecayFit,
    fit_decay,
    functional_gap_constant,
    hardy_quotient_min,
    steady_residual,
    steady_state_log,
    weak_residual,
)

__version__ = "0.1.0"
