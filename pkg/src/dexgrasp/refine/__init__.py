"""Contact-guided grasp refinement."""

from .energies import (
    TERMS,
    ContactTargets,
    EnergyBreakdown,
    EnergyWeights,
    e_cmap_hand,
    e_cont_fun,
    e_cont_unf,
    e_fc,
    e_pen,
    e_pip,
    e_spen,
    total_energy,
)
from .optimizer import OptimizeResult, OptimizerConfig, learning_rate, optimize
