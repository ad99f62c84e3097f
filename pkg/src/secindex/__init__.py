"""Security indices of LTI plants from a model or from input/output data."""

from .data_index import (
    DataIndex,
    data_feasible,
    r_infinity,
    rho,
    rho_upper,
    synthesize_data_witness,
    v_infinity,
)
from .hankel import HankelBlocks, build_blocks, hankel_matrix, is_persistently_exciting
from .linsys import (
    AttackSignal,
    ComponentLayout,
    LtiSystem,
    PlatoonConfig,
    Trajectory,
    build_platoon,
    generate_excitation,
    random_experiment,
    random_system,
    simulate,
    simulate_attacked,
)
from .model_index import INF, IndexResult, delta, model_feasible, synthesize_model_attack

__version__ = "0.1.0"
