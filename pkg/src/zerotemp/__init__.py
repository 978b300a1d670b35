"""Zero-temperature limits of Gibbs Markov chains on [0, 1].

Transfer-operator eigendata at finite beta, the max-plus objects that
appear as beta grows, Mañé costs, graph maps and large deviations.
"""

from .grid import Grid, make_grid
from .potentials import Potential, builtin, perturb_poly
from .transfer import EigenPair, leading_eigenpair
from .tropical import Subaction, calibrated_subaction, karp_value

__version__ = "0.1.0"

__all__ = [
    "EigenPair",
    "Grid",
    "Potential",
    "Subaction",
    "builtin",
    "calibrated_subaction",
    "karp_value",
    "leading_eigenpair",
    "make_grid",
    "perturb_poly",
]
