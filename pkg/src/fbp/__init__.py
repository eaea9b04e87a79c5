"""Penalized free boundary problems on stratified Lie groups.

Library layout:

* :mod:`fbp.carnot_group` - group structure data (Heisenberg, Euclidean).
* :mod:`fbp.grid_discretization` - box grids, discrete horizontal calculus.
* :mod:`fbp.regularization` - mollifier pair and penalized nonlinearities.
* :mod:`fbp.energy_variational` - discrete energies and residuals.
* :mod:`fbp.solvers` - linear solves, descent, mountain pass, continuation.
* :mod:`fbp.freeboundary_verify` - free boundary extraction and diagnostics.
* :mod:`fbp.cli_reporting` - config files, run orchestration, reports, CLI.
"""

__version__ = "0.1.0"

from .carnot_group import (
    GroupSpec,
    dilate,
    euclidean,
    heisenberg1,
    koranyi_gauge,
    lie_bracket,
    validate_hormander,
)
from .grid_discretization import (
    BoxDomain,
    Grid,
    apply_Z,
    horizontal_gradient,
    inner_product,
    integrate,
    sub_laplacian,
)
from .regularization import (
    B_val,
    G_eps_val,
    NonlinearitySpec,
    beta_val,
    constant_g,
    g_eps_val,
    g_val,
    power_g,
    table_g,
    validate_growth,
)
from .energy_variational import (
    EnergyBreakdown,
    energy_eps,
    energy_limit,
    first_variation,
    residual_eps,
)

__all__ = [
    "__version__",
    "GroupSpec",
    "heisenberg1",
    "euclidean",
    "dilate",
    "lie_bracket",
    "validate_hormander",
    "koranyi_gauge",
    "BoxDomain",
    "Grid",
    "apply_Z",
    "horizontal_gradient",
    "sub_laplacian",
    "integrate",
    "inner_product",
    "B_val",
    "beta_val",
    "NonlinearitySpec",
    "constant_g",
    "power_g",
    "table_g",
    "g_val",
    "g_eps_val",
    "G_eps_val",
    "validate_growth",
    "EnergyBreakdown",
    "energy_eps",
    "energy_limit",
    "residual_eps",
    "first_variation",
]
