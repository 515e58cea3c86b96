"""Forward and inverse problems on resistor networks.

Recovers currents and conductivities from measured current magnitudes by
weighted l1 least-gradient minimization, and applies the recovery to
random-walk design and to a flow encoding scheme.
"""

from .codec import (
    AdmissibleFlow,
    Ciphertext,
    decode,
    encode,
    keyspace_size,
    sample_admissible,
    validate_admissible,
)
from .exceptions import (
    DecodeError,
    DegenerateDataError,
    DimensionError,
    FormatError,
    GraphError,
    IncompatibleDataError,
    InfeasibleDesignError,
    NetworkError,
    NonConvergenceWarning,
    NotAdmissibleError,
    PerfectConductorError,
    SignViolationError,
    SingularSystemError,
)
from .forward import (
    Conductivity,
    conductivity_from_pair,
    current_from_potential,
    solve_dirichlet_forward,
    solve_neumann_forward,
)
from .graph import EdgeFunction, Graph, classify_vertices, divergence, energy, gradient, vertex_flux
from .inverse import (
    AdmmConfig,
    DirichletInversion,
    InverseSolution,
    NeumannInversion,
    SolveReport,
    build_lift_neumann,
    lift_dirichlet,
    rescale_to_unit_flux,
    separate_levels,
    shrink_d,
    solve_inverse_dirichlet,
    solve_inverse_neumann,
    step_u_dirichlet,
    step_u_neumann,
)
from .io import NetworkFile, parse_network, write_network
from .multi import Dataset, MeasurementSet, consistency_check, coupling_phi, total_functional
from .random_walk import (
    TransitionDesigner,
    TransitionMatrix,
    design_transitions,
    simulate_net_passages,
    transitions_from_conductivity,
)

__version__ = "0.1.0"
