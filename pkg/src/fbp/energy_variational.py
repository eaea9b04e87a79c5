"""Discrete energies, residual of the penalized equation, first variation.

The smoothed functional is

    E_eps(u) = int [ |grad_G u|^2 / 2 + B((u-1)/eps) - lam * G_eps(x, (u-1)_+) ],

whose critical points solve

    -L u = -(1/eps) beta((u-1)/eps) + lam * g_eps(x, (u-1)_+),   u = 0 on the boundary.

The sharp-interface limit replaces B((u-1)/eps) by the indicator of {u > 1}
and G_eps by the plain primitive G.  Because the discrete gradient and
sub-Laplacian form an exact adjoint pair, the directional derivative of the
discrete E_eps is exactly the pairing of the residual with the direction;
the solvers rely on that identity rather than on any extra tolerance.

All quadrature happens over interior nodes (trace-zero convention).  Points
with u exactly equal to 1 contribute nothing special: (u-1)_+ vanishes there
and the indicator is evaluated with a strict inequality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .carnot_group import GroupSpec
from .grid_discretization import Grid, horizontal_gradient, inner_product, integrate, sub_laplacian
from .regularization import B_val, G_eps_val, G_val, NonlinearitySpec, beta_val, g_eps_val

__all__ = [
    "EnergyBreakdown",
    "energy_eps",
    "energy_limit",
    "residual_eps",
    "first_variation",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    """The three energy terms and their signed total.

    ``total = dirichlet_term + indicator_term - potential_term`` holds by
    construction.  ``eps`` is None for the sharp-interface energy.
    """

    dirichlet_term: float
    indicator_term: float
    potential_term: float
    total: float
    lam: float
    eps: float | None

    @classmethod
    def assemble(cls, dirichlet, indicator, potential, lam, eps=None):
        return cls(
            dirichlet_term=float(dirichlet),
            indicator_term=float(indicator),
            potential_term=float(potential),
            total=float(dirichlet) + float(indicator) - float(potential),
            lam=float(lam),
            eps=eps,
        )

    def as_dict(self) -> dict:
        return {
            "dirichlet": self.dirichlet_term,
            "indicator": self.indicator_term,
            "potential": self.potential_term,
            "total": self.total,
        }


def _check_params(eps, lam):
    if eps is not None and eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")


def energy_eps(
    u: np.ndarray,
    eps: float,
    lam: float,
    nl: NonlinearitySpec,
    grid: Grid,
    spec: GroupSpec,
) -> EnergyBreakdown:
    """Smoothed energy of a trace-zero field."""
    _check_params(eps, lam)
    u = grid.check_field(u)
    grad = horizontal_gradient(spec, grid, u)
    dirichlet = 0.5 * integrate(grid, np.sum(grad * grad, axis=0))
    indicator = integrate(grid, np.asarray(B_val((u - 1.0) / eps)))
    plus = np.maximum(u - 1.0, 0.0)
    potential = lam * integrate(grid, np.asarray(G_eps_val(nl, None, plus, eps)))
    return EnergyBreakdown.assemble(dirichlet, indicator, potential, lam, eps)


def energy_limit(
    u: np.ndarray,
    lam: float,
    nl: NonlinearitySpec,
    grid: Grid,
    spec: GroupSpec,
) -> EnergyBreakdown:
    """Sharp-interface energy with the indicator of the super-level set."""
    _check_params(None, lam)
    u = grid.check_field(u)
    grad = horizontal_gradient(spec, grid, u)
    dirichlet = 0.5 * integrate(grid, np.sum(grad * grad, axis=0))
    indicator = integrate(grid, (u > 1.0).astype(float))
    plus = np.maximum(u - 1.0, 0.0)
    potential = lam * integrate(grid, np.asarray(G_val(nl, None, plus)))
    return EnergyBreakdown.assemble(dirichlet, indicator, potential, lam, None)


def residual_eps(
    u: np.ndarray,
    eps: float,
    lam: float,
    nl: NonlinearitySpec,
    grid: Grid,
    spec: GroupSpec,
) -> np.ndarray:
    """Nodewise residual of the penalized equation; zero on the boundary.

    R(u) = -L^h u + (1/eps) beta((u-1)/eps) - lam g_eps(x, (u-1)_+).
    The zero field is an exact critical point: every term vanishes on it.
    """
    _check_params(eps, lam)
    u = grid.check_field(u)
    out = -sub_laplacian(spec, grid, u)
    out += np.asarray(beta_val((u - 1.0) / eps)) / eps
    plus = np.maximum(u - 1.0, 0.0)
    out -= lam * np.asarray(g_eps_val(nl, None, plus, eps))
    out[grid.boundary_mask] = 0.0
    return out


def first_variation(
    u: np.ndarray,
    v: np.ndarray,
    eps: float,
    lam: float,
    nl: NonlinearitySpec,
    grid: Grid,
    spec: GroupSpec,
) -> float:
    """Directional derivative dE_eps(u)[v] for trace-zero u, v.

    Equals <residual_eps(u), v> to rounding by the adjoint-pair construction
    of the discrete operators.
    """
    _check_params(eps, lam)
    u = grid.check_field(u)
    v = grid.check_field(v)
    gu = horizontal_gradient(spec, grid, u)
    gv = horizontal_gradient(spec, grid, v)
    out = integrate(grid, np.sum(gu * gv, axis=0))
    nonlinear = np.asarray(beta_val((u - 1.0) / eps)) / eps
    plus = np.maximum(u - 1.0, 0.0)
    nonlinear = nonlinear - lam * np.asarray(g_eps_val(nl, None, plus, eps))
    return out + inner_product(grid, nonlinear, v)
