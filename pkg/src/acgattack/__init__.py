"""Auto Conjugate Gradient (ACG) and APGD l-inf attacks with Diversity Index analytics."""
from .attack import (
    AttackConfig,
    BetaFormula,
    SearchTrace,
    cg_quadratic_minimize,
    compute_beta,
    default_checkpoints,
    run_attack,
    run_restarts,
)
from .diversity import diversity_index, di_trace, global_clustering
from .geometry import FeasibleRegion, center_init, project, random_init
from .objectives import ClassifierObjective, Quadratic, cw_loss, cw_target_class

__version__ = "0.1.0"
