"""Scattering data and smooth integrals of motion for the n-centre problem."""

from .entropy import BeamFamily, WordCensus, word_census
from .integrals import (
    StencilBroken,
    gevrey_damping,
    gevrey_integral,
    independence_rank,
    phase_gradient,
    poisson_bracket,
)
from .integrator import (
    CollisionReport,
    IntegratorSettings,
    StopCondition,
    Trajectory,
    propagate,
    step_adaptive,
    step_regularized,
)
from .kepler import (
    KeplerElements,
    elements_from_state,
    kepler_asymptotic_momentum,
    kepler_propagate,
    kepler_time_in_ball,
)
from .model import (
    CentreConfig,
    ConfigError,
    GevreyParams,
    PhaseState,
    force,
    hamiltonian,
    kepler_hamiltonian,
    load_config,
    potential,
    validate_config,
)
from .scattering import (
    LadderOptions,
    OrbitClass,
    ScatteringRecord,
    beam_state,
    classify_orbit,
    scattering_record,
)

__version__ = "0.1.0"

__all__ = [
    "BeamFamily",
    "CentreConfig",
    "CollisionReport",
    "ConfigError",
    "GevreyParams",
    "IntegratorSettings",
    "KeplerElements",
    "LadderOptions",
    "OrbitClass",
    "PhaseState",
    "ScatteringRecord",
    "StencilBroken",
    "StopCondition",
    "Trajectory",
    "WordCensus",
    "beam_state",
    "classify_orbit",
    "elements_from_state",
    "force",
    "gevrey_damping",
    "gevrey_integral",
    "hamiltonian",
    "independence_rank",
    "kepler_asymptotic_momentum",
    "kepler_hamiltonian",
    "kepler_propagate",
    "kepler_time_in_ball",
    "load_config",
    "phase_gradient",
    "poisson_bracket",
    "potential",
    "propagate",
    "scattering_record",
    "step_adaptive",
    "step_regularized",
    "validate_config",
    "word_census",
]
