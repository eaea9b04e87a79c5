"""Linear solves, energy descent, the numerical mountain pass, continuation.

The linear building block is a preconditioned conjugate gradient solve of
-L^h u = f with zero Dirichlet data.  On grids with an odd node count along
every axis the composed centered-difference operator has the checkerboard
null mode exposed by :func:`fbp.grid_discretization.null_mode`; the solver
deflates it (right-hand side and iterates are kept orthogonal to the mode),
which amounts to returning the least-squares representative of the solution
family.  A sparse LU factorization of a shifted copy of the operator serves
as preconditioner and is reused across solves on the same grid.

Saddle points of the smoothed energy are found in two phases:

1. a string phase: a discrete path from 0 to a negative-energy endpoint is
   relaxed by taking one damped, preconditioned descent step on the
   maximal-energy node per sweep and re-splining the path to equal arc
   length (re-splines that would raise the path maximum are skipped, so the
   recorded peak energy is nonincreasing);
2. a polish phase: Newton-Krylov on the full residual, started from the
   string peak, drives max|R| below the descent tolerance.

Descent directions are kept orthogonal to the checkerboard mode; the
Newton-Krylov phase operates on the full space (the nonlinear terms remove
the degeneracy at an active interface).

Continuation in the smoothing parameter warm-starts each level from the
previous saddle and falls back to a full mountain pass when the warm start
stalls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .carnot_group import GroupSpec
from .energy_variational import EnergyBreakdown, energy_eps, residual_eps
from .grid_discretization import (
    Grid,
    inner_product,
    null_mode,
    sub_laplacian,
)
from .regularization import (
    B_val,
    NonlinearitySpec,
    beta_prime_val,
    g_eps_prime_val,
    g_eps_val,
)

__all__ = [
    "SolveConfig",
    "PathState",
    "SaddleResult",
    "MinimizeResult",
    "ContinuationStep",
    "ContinuationResult",
    "LinearSolveError",
    "OperableRangeError",
    "MountainPassError",
    "solve_linear",
    "barrier_phi0",
    "barrier_for_iterate",
    "minimize_energy",
    "find_negative_endpoint",
    "mountain_pass",
    "eps_continuation",
    "DiscreteProblem",
]


class LinearSolveError(RuntimeError):
    """Conjugate gradients failed to reach the requested residual."""


class OperableRangeError(RuntimeError):
    """No negative-energy endpoint exists up to the amplitude cap."""


class MountainPassError(RuntimeError):
    """Path deformation collapsed or failed to converge."""


@dataclass(frozen=True)
class SolveConfig:
    """Tolerances and iteration budgets shared by the solver stack."""

    lam: float = 1.0
    eps: float = 0.1
    cg_tol: float = 1e-10
    cg_max_iter: int = 20000
    descent_tol: float = 1e-8
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_min_step: float = 1e-14
    max_outer: int = 500
    mp_path_nodes: int = 17
    mp_max_iter: int = 600
    endpoint_max_amplitude: float = 2.0**16

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        for name in ("eps", "cg_tol", "descent_tol", "armijo_c1", "armijo_shrink"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mp_path_nodes < 3:
            raise ValueError("need at least 3 path nodes")


@dataclass
class PathState:
    """Discrete path gamma_0 .. gamma_P from 0 to a negative-energy state."""

    nodes: list
    energies: np.ndarray

    def __post_init__(self):
        if np.abs(self.nodes[0]).max() != 0.0:
            raise ValueError("path must start at the zero field")
        if self.energies[-1] >= 0.0:
            raise ValueError("path must end at negative energy")


@dataclass
class SaddleResult:
    """Outcome of a mountain pass run."""

    u_mp: np.ndarray
    c_eps: float
    residual_norm: float
    iterations: int
    energy: float
    path_energies: np.ndarray
    peak_history: np.ndarray
    diagnostics: dict


@dataclass
class MinimizeResult:
    u: np.ndarray
    iterations: int
    converged: bool
    residual_max: float
    energies: np.ndarray


@dataclass
class ContinuationStep:
    eps: float
    u: np.ndarray
    c_eps: float
    residual_max: float
    method: str
    iterations: int
    energy_eps: EnergyBreakdown


@dataclass
class ContinuationResult:
    steps: list
    failed: bool = False
    failure: str | None = None
    diagnostics: dict = field(default_factory=dict)


# -- operator assembly and kernel handling ------------------------------------


@lru_cache(maxsize=16)
def _unit_null_mode(grid: Grid):
    k = null_mode(grid)
    if k is None:
        return None
    k = k / np.sqrt(inner_product(grid, k, k))
    k.setflags(write=False)
    return k


def _project_out(grid: Grid, khat, u: np.ndarray) -> np.ndarray:
    if khat is None:
        return u
    return u - inner_product(grid, u, khat) * khat


@lru_cache(maxsize=8)
def _assembled_neg_L(spec: GroupSpec, grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of -L^h restricted to interior nodes.

    Built by composing per-axis centered-difference matrices with diagonal
    coefficient matrices, mirroring the matrix-free operator exactly.
    """
    n_nodes = grid.n_nodes
    shape = grid.shape
    eye = [sp.identity(n, format="csr") for n in shape]

    def diff_matrix(axis):
        n = shape[axis]
        h = grid.spacing[axis]
        d1 = sp.diags([-0.5 / h, 0.5 / h], [-1, 1], shape=(n, n), format="csr")
        mats = list(eye)
        mats[axis] = d1
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return out

    diffs = [diff_matrix(ax) for ax in range(grid.dim)]
    chi = sp.diags(grid.interior_mask.ravel().astype(float))

    from .grid_discretization import _coefficient_tables

    tables = _coefficient_tables(spec, grid)
    neg_l = sp.csr_matrix((n_nodes, n_nodes))
    for entries in tables:
        z = sp.csr_matrix((n_nodes, n_nodes))
        for axis, coeff in entries:
            if np.ndim(coeff) == 0:
                z = z + float(coeff) * diffs[axis]
            else:
                z = z + sp.diags(np.asarray(coeff).ravel()) @ diffs[axis]
        zc = chi @ z
        neg_l = neg_l + zc.T @ zc  # -L = sum (chi Z)^T (chi Z)
    idx = np.where(grid.interior_mask.ravel())[0]
    return neg_l[np.ix_(idx, idx)].tocsr()


@lru_cache(maxsize=8)
def _lu_preconditioner(spec: GroupSpec, grid: Grid):
    """Sparse LU of a slightly shifted -L^h; None when factorization fails."""
    a = _assembled_neg_L(spec, grid)
    scale = abs(a.diagonal()).max()
    shifted = (a + (1e-10 * scale) * sp.identity(a.shape[0], format="csr")).tocsc()
    try:
        return spla.splu(shifted)
    except (MemoryError, RuntimeError):
        return None


def _neg_L_apply(spec: GroupSpec, grid: Grid, u: np.ndarray) -> np.ndarray:
    out = -sub_laplacian(spec, grid, u)
    out[grid.boundary_mask] = 0.0
    return out


def solve_linear(
    rhs: np.ndarray,
    grid: Grid,
    spec: GroupSpec,
    cfg: SolveConfig,
    boundary_values: np.ndarray | None = None,
) -> np.ndarray:
    """Solve -L^h u = rhs with Dirichlet data (zero unless supplied).

    Preconditioned conjugate gradients on interior unknowns, relative
    residual below ``cfg.cg_tol``.  On all-odd grids the right-hand side is
    first projected orthogonal to the checkerboard null mode and the
    returned field carries no component of it.  Raises
    :class:`LinearSolveError` when the iteration cap is hit.
    """
    rhs = grid.check_field(rhs)
    if not np.all(np.isfinite(rhs)):
        raise ValueError("right-hand side must be finite")
    khat = _unit_null_mode(grid)
    interior = grid.interior_mask

    lift = grid.zeros()
    b = rhs.copy()
    if boundary_values is not None:
        boundary_values = grid.check_field(boundary_values)
        lift[grid.boundary_mask] = boundary_values[grid.boundary_mask]
        b = b - _neg_L_apply(spec, grid, lift)
    b[grid.boundary_mask] = 0.0
    b = _project_out(grid, khat, b)

    b_norm = np.sqrt(inner_product(grid, b, b))
    if b_norm == 0.0:
        return lift

    lu = _lu_preconditioner(spec, grid)
    flat_idx = np.where(interior.ravel())[0]

    def precond(r):
        if lu is None:
            return r
        z = grid.zeros()
        z.ravel()[flat_idx] = lu.solve(r.ravel()[flat_idx])
        z[grid.boundary_mask] = 0.0
        return _project_out(grid, khat, z)

    x = grid.zeros()
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = inner_product(grid, r, z)
    for it in range(cfg.cg_max_iter):
        r_norm = np.sqrt(inner_product(grid, r, r))
        if r_norm <= cfg.cg_tol * b_norm:
            return x + lift
        ap = _neg_L_apply(spec, grid, p)
        ap = _project_out(grid, khat, ap)
        pap = inner_product(grid, p, ap)
        if pap <= 0:
            raise LinearSolveError(
                f"conjugate gradients broke down at iteration {it} (p^T A p = {pap:g})"
            )
        alpha = rz / pap
        x = x + alpha * p
        r = r - alpha * ap
        if (it + 1) % 50 == 0:
            r = _project_out(grid, khat, r)
        z = precond(r)
        rz_new = inner_product(grid, r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise LinearSolveError(
        f"conjugate gradients did not reach rel. residual {cfg.cg_tol:g} "
        f"within {cfg.cg_max_iter} iterations"
    )


def barrier_phi0(
    A0: float,
    lam: float,
    grid: Grid,
    spec: GroupSpec,
    cfg: SolveConfig,
) -> np.ndarray:
    """Barrier field: solution of -L phi0 = lam * A0 with zero trace.

    A0 must dominate the penalized reaction over the run; the returned field
    then dominates every iterate by the comparison argument.

    On all-odd grids the constant right-hand side has a component along the
    checkerboard null mode, so the discrete system only determines phi0 up
    to a multiple of that mode.  The returned representative completes the
    undetermined component by matching the interior means of the two
    sublattices (and is floored at the smallest nonnegative completion),
    which is homogeneous in the forcing, so doubling lam * A0 still doubles
    phi0 nodewise.
    """
    if A0 < 0 or lam < 0:
        raise ValueError("A0 and lambda must be nonnegative")
    rhs = np.full(grid.shape, lam * A0)
    phi0 = solve_linear(rhs, grid, spec, cfg)
    pattern = null_mode(grid)
    if pattern is not None and lam * A0 > 0:
        interior = grid.interior_mask
        on = (pattern > 0) & interior
        off = (pattern == 0) & interior
        t_mean = float(phi0[off].mean() - phi0[on].mean())
        t_nonneg = float(max(0.0, -phi0[on].min()))
        phi0 = phi0 + max(t_mean, t_nonneg) * pattern
    return phi0


def barrier_for_iterate(
    u: np.ndarray,
    eps: float,
    lam: float,
    nl: NonlinearitySpec,
    grid: Grid,
    spec: GroupSpec,
    cfg: SolveConfig,
    safety: float = 1.1,
) -> tuple[np.ndarray, float]:
    """Barrier with A0 recomputed from the iterate's range.

    A0 = safety * sup g_eps over the iterate; if the barrier solve enlarges
    the reachable range, A0 is recomputed once from the barrier's own range.
    """
    plus = np.maximum(u - 1.0, 0.0)
    sup_g = float(np.max(np.asarray(g_eps_val(nl, None, plus, eps)))) if plus.size else 0.0
    a0 = safety * sup_g
    phi0 = barrier_phi0(a0, lam, grid, spec, cfg)
    top = float(np.max(phi0))
    if top > float(np.max(u)):
        s_top = max(top - 1.0, 0.0)
        sup_g2 = float(np.asarray(g_eps_val(nl, None, s_top, eps)))
        a0_2 = safety * max(sup_g, sup_g2)
        if a0_2 > a0 * (1.0 + 1e-12):
            a0 = a0_2
            phi0 = barrier_phi0(a0, lam, grid, spec, cfg)
    return phi0, a0


# -- the discrete variational problem -----------------------------------------


class DiscreteProblem:
    """Bundles (group, grid, nonlinearity, lambda, eps) for the solvers.

    Provides energy, residual, inner product, null-mode projection, and a
    preconditioner; the mountain pass code only talks to this interface, so
    test surrogates can stand in for the PDE.
    """

    def __init__(
        self,
        spec: GroupSpec,
        grid: Grid,
        nl: NonlinearitySpec,
        lam: float,
        eps: float,
        cfg: SolveConfig | None = None,
    ):
        self.spec = spec
        self.grid = grid
        self.nl = nl
        self.lam = float(lam)
        self.eps = float(eps)
        self.cfg = cfg if cfg is not None else SolveConfig(lam=lam, eps=eps)
        self._khat = _unit_null_mode(grid)
        self._lu = _lu_preconditioner(spec, grid)
        self._flat_idx = np.where(grid.interior_mask.ravel())[0]

    def with_eps(self, eps: float) -> "DiscreteProblem":
        return DiscreteProblem(self.spec, self.grid, self.nl, self.lam, eps, self.cfg)

    def zeros(self) -> np.ndarray:
        return self.grid.zeros()

    def energy(self, u: np.ndarray) -> float:
        return energy_eps(u, self.eps, self.lam, self.nl, self.grid, self.spec).total

    def energy_breakdown(self, u: np.ndarray) -> EnergyBreakdown:
        return energy_eps(u, self.eps, self.lam, self.nl, self.grid, self.spec)

    def residual(self, u: np.ndarray) -> np.ndarray:
        return residual_eps(u, self.eps, self.lam, self.nl, self.grid, self.spec)

    def dot(self, u: np.ndarray, v: np.ndarray) -> float:
        return inner_product(self.grid, u, v)

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.dot(u, u)))

    def project(self, u: np.ndarray) -> np.ndarray:
        return _project_out(self.grid, self._khat, u)

    def precondition(self, r: np.ndarray) -> np.ndarray:
        """Approximate (-L)^+ r, orthogonal to the null mode."""
        if self._lu is None:
            return self.project(r)
        z = self.grid.zeros()
        z.ravel()[self._flat_idx] = self._lu.solve(r.ravel()[self._flat_idx])
        z[self.grid.boundary_mask] = 0.0
        return self.project(z)

    # interior flat vector mapping for Newton-Krylov
    def to_flat(self, u: np.ndarray) -> np.ndarray:
        return u.ravel()[self._flat_idx].copy()

    def from_flat(self, x: np.ndarray) -> np.ndarray:
        u = self.grid.zeros()
        u.ravel()[self._flat_idx] = x
        return u

    def newton_preconditioner(self):
        if self._lu is None:
            return None
        n = len(self._flat_idx)
        return spla.LinearOperator((n, n), matvec=self._lu.solve)

    def jacobian_diag(self, u: np.ndarray) -> np.ndarray:
        """Pointwise part of dR/du (the -L part is applied separately)."""
        w = np.asarray(beta_prime_val((u - 1.0) / self.eps)) / self.eps**2
        plus = np.maximum(u - 1.0, 0.0)
        w = w - self.lam * (u > 1.0) * np.asarray(
            g_eps_prime_val(self.nl, None, plus, self.eps)
        )
        return w

    def jacobian_apply(self, w: np.ndarray, v: np.ndarray) -> np.ndarray:
        """J v = -L v + w v with w = jacobian_diag(u); zero on the boundary."""
        out = _neg_L_apply(self.spec, self.grid, v) + w * v
        out[self.grid.boundary_mask] = 0.0
        return out

    def localization(self, u_end: np.ndarray, n_modes_per_axis: int = 3):
        """Smooth subspace for the string phase of the mountain pass.

        The wide-stencil Dirichlet form is blind to grid-scale oscillation
        (any 2h-periodic pattern has nearly vanishing centered differences),
        so at large lambda a free path deformation tunnels through spurious
        oscillatory states instead of crossing the smooth ridge.  The string
        is therefore localized in the span of tensor sine modes plus the
        endpoint direction; the Newton polish afterwards works in the full
        space.
        """
        import itertools as _it

        fields = [np.asarray(u_end, dtype=float)]
        coords01 = [
            (self.grid.coords[ax] - self.grid.domain.lower[ax])
            / (self.grid.domain.upper[ax] - self.grid.domain.lower[ax])
            for ax in range(self.grid.dim)
        ]
        for ks in _it.product(range(1, n_modes_per_axis + 1), repeat=self.grid.dim):
            mode = np.ones(self.grid.shape)
            for ax, k in enumerate(ks):
                mode = mode * np.sin(k * np.pi * coords01[ax])
            fields.append(mode)

        basis = []
        for f in fields:
            f = self.project(f)
            f[self.grid.boundary_mask] = 0.0
            for b in basis:
                f = f - self.dot(f, b) * b
            nrm = self.norm(f)
            if nrm > 1e-10:
                basis.append(f / nrm)
        gram = np.array(
            [[self.dot(_neg_L_apply(self.spec, self.grid, bi), bj) for bj in basis] for bi in basis]
        )
        gram = 0.5 * (gram + gram.T) + 1e-10 * np.eye(len(basis))
        return _SubspaceProblem(self, basis, gram)


class _SubspaceProblem:
    """Reduced view of a :class:`DiscreteProblem` on an orthonormal basis.

    Coefficient vectors play the role of fields; the inner product is
    Euclidean because the basis is orthonormal in the grid pairing.
    """

    def __init__(self, parent: DiscreteProblem, basis: list, gram: np.ndarray):
        self.parent = parent
        self.basis = basis
        self._stack = np.stack([b.ravel() for b in basis])
        self._gram = gram
        self._shape = basis[0].shape

    def lift(self, c: np.ndarray) -> np.ndarray:
        return (self._stack.T @ np.asarray(c, dtype=float)).reshape(self._shape)

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return np.array([self.parent.dot(u, b) for b in self.basis])

    def energy(self, c: np.ndarray) -> float:
        return self.parent.energy(self.lift(c))

    def residual(self, c: np.ndarray) -> np.ndarray:
        r = self.parent.residual(self.lift(c))
        return self.restrict(r)

    def dot(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.dot(a, b))

    def norm(self, a: np.ndarray) -> float:
        return float(np.linalg.norm(a))

    def project(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(a, dtype=float)

    def precondition(self, g: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self._gram, np.asarray(g, dtype=float))


def minimize_energy(
    problem: DiscreteProblem,
    u0: np.ndarray,
    cfg: SolveConfig | None = None,
) -> MinimizeResult:
    """Energy descent with Armijo backtracking from u0.

    Directions are preconditioned residuals kept orthogonal to the
    checkerboard mode, so the method cannot wander along the operator's
    blind direction.  Stops as soon as max|R| falls below the descent
    tolerance; a start at an exact critical point returns in zero
    iterations.  Hitting the iteration cap is flagged, not raised.
    """
    cfg = cfg if cfg is not None else problem.cfg
    u = problem.project(problem.grid.check_field(u0).copy())
    energies = [problem.energy(u)]
    for outer in range(cfg.max_outer):
        r = problem.residual(u)
        res_max = float(np.abs(r).max())
        if res_max <= cfg.descent_tol:
            return MinimizeResult(u, outer, True, res_max, np.array(energies))
        d = -problem.precondition(r)
        slope = problem.dot(r, d)
        if slope >= 0:
            d = -problem.project(r)
            slope = problem.dot(r, d)
            if slope >= 0:
                return MinimizeResult(u, outer, False, res_max, np.array(energies))
        e0 = energies[-1]
        alpha = 1.0
        while alpha >= cfg.armijo_min_step:
            trial = u + alpha * d
            e1 = problem.energy(trial)
            if e1 <= e0 + cfg.armijo_c1 * alpha * slope:
                u = trial
                energies.append(e1)
                break
            alpha *= cfg.armijo_shrink
        else:
            return MinimizeResult(u, outer, False, res_max, np.array(energies))
    r = problem.residual(u)
    return MinimizeResult(u, cfg.max_outer, False, float(np.abs(r).max()), np.array(energies))


def interior_bump(grid: Grid) -> np.ndarray:
    """Smooth plateau: one on the middle third of the box, zero near faces.

    Built from the mollifier transition per axis, so it is C-infinity in
    the continuum limit and exactly trace zero on the grid.
    """
    out = np.ones(grid.shape)
    for ax in range(grid.dim):
        lo = grid.domain.lower[ax]
        hi = grid.domain.upper[ax]
        c = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        xi = np.abs((grid.axes[ax] - c) / half)
        profile = np.asarray(B_val((0.9 - xi) / (0.9 - 1.0 / 3.0)))
        shape = [1] * grid.dim
        shape[ax] = -1
        out = out * profile.reshape(shape)
    out[grid.boundary_mask] = 0.0
    return out


def find_negative_endpoint(
    problem: DiscreteProblem,
    cfg: SolveConfig | None = None,
) -> np.ndarray:
    """First amplitude doubling t * psi with negative smoothed energy.

    Tries t = 2, 4, 8, ... on the fixed interior plateau psi; raises
    :class:`OperableRangeError` when no amplitude up to the cap works,
    which marks lambda as below the operable range.
    """
    cfg = cfg if cfg is not None else problem.cfg
    psi = problem.project(interior_bump(problem.grid))
    t = 2.0
    while t <= cfg.endpoint_max_amplitude:
        candidate = t * psi
        if problem.energy(candidate) < 0.0:
            return candidate
        t *= 2.0
    raise OperableRangeError(
        f"no negative-energy endpoint up to amplitude {cfg.endpoint_max_amplitude:g}: "
        "lambda below operable range"
    )


def _respline(nodes: list, dot) -> list:
    """Redistribute path nodes to equal arc length (piecewise linear)."""
    diffs = [nodes[i + 1] - nodes[i] for i in range(len(nodes) - 1)]
    seglen = np.array([np.sqrt(max(dot(d, d), 0.0)) for d in diffs])
    total = seglen.sum()
    if total == 0.0:
        return [n.copy() for n in nodes]
    cum = np.concatenate(([0.0], np.cumsum(seglen)))
    targets = np.linspace(0.0, total, len(nodes))
    out = [nodes[0].copy()]
    for t in targets[1:-1]:
        j = int(np.searchsorted(cum, t, side="right") - 1)
        j = min(j, len(nodes) - 2)
        local = (t - cum[j]) / seglen[j] if seglen[j] > 0 else 0.0
        out.append(nodes[j] + local * diffs[j])
    out.append(nodes[-1].copy())
    return out


def _newton_krylov_polish(problem, u0: np.ndarray, f_tol: float, maxiter: int = 40):
    """Newton-Krylov on the full residual; returns None on failure."""
    from scipy.optimize import newton_krylov
    from scipy.optimize._nonlin import NoConvergence

    def f(x):
        return problem.to_flat(problem.residual(problem.from_flat(x)))

    try:
        x = newton_krylov(
            f,
            problem.to_flat(u0),
            f_tol=f_tol,
            maxiter=maxiter,
            method="lgmres",
            inner_M=problem.newton_preconditioner(),
            verbose=False,
        )
    except (NoConvergence, ValueError, LinearSolveError):
        return None
    u = problem.from_flat(np.asarray(x))
    if not np.all(np.isfinite(u)):
        return None
    return u


def _levenberg_refine(problem, u0: np.ndarray, f_tol: float, max_outer: int = 80):
    """Damped Gauss-Newton on the residual with the analytic Jacobian.

    The Jacobian -L + diag(N') is symmetric but strongly indefinite near a
    marginal interface (band nodes carry large negative diagonal entries),
    which defeats plain Newton-Krylov; minimizing |R|^2 with the normal
    equations (J^2 + mu^2) d = -J r is indefiniteness-proof.  Returns None
    if the residual cannot be driven below ``f_tol``.
    """
    u = np.asarray(u0, dtype=float).copy()
    r = problem.residual(u)
    phi = 0.5 * problem.dot(r, r)
    mu = 1e-2 * (1.0 + float(np.abs(problem.jacobian_diag(u)).max()))
    mu_min = 1e-12
    for _ in range(max_outer):
        rinf = float(np.abs(r).max())
        if rinf <= f_tol:
            return u
        w = problem.jacobian_diag(u)

        def jv(v):
            return problem.jacobian_apply(w, v)

        b = -jv(r)

        def normal_op(v):
            return jv(jv(v)) + (mu * mu) * v

        # matrix-free CG on the (SPD) normal operator, loose tolerance
        d = np.zeros_like(u)
        res = b.copy()
        p = res.copy()
        rho = problem.dot(res, res)
        b_norm = np.sqrt(rho)
        if b_norm == 0.0:
            return None
        for _ in range(60):
            if np.sqrt(rho) <= 0.1 * b_norm:
                break
            ap = normal_op(p)
            alpha = rho / max(problem.dot(p, ap), 1e-300)
            d = d + alpha * p
            res = res - alpha * ap
            rho_new = problem.dot(res, res)
            p = res + (rho_new / rho) * p
            rho = rho_new

        accepted = False
        for _ in range(8):
            trial = u + d
            r_trial = problem.residual(trial)
            phi_trial = 0.5 * problem.dot(r_trial, r_trial)
            if np.isfinite(phi_trial) and phi_trial < phi:
                u, r, phi = trial, r_trial, phi_trial
                mu = max(mu / 3.0, mu_min)
                accepted = True
                break
            mu *= 4.0
            d = d * 0.25  # cheap damping retry before re-solving
        if not accepted:
            return None
    return u if float(np.abs(problem.residual(u)).max()) <= f_tol else None


def _newton_polish(problem, u0: np.ndarray, f_tol: float, maxiter: int = 40):
    """Critical-point polish: Newton-Krylov first, Gauss-Newton fallback."""
    u = _newton_krylov_polish(problem, u0, f_tol, maxiter)
    if u is not None:
        return u
    if hasattr(problem, "jacobian_diag"):
        return _levenberg_refine(problem, u0, f_tol)
    return None


def mountain_pass(
    problem: DiscreteProblem,
    u_end: np.ndarray,
    cfg: SolveConfig | None = None,
    u_start: np.ndarray | None = None,
    require_negative_endpoint: bool = True,
) -> SaddleResult:
    """Minimax saddle search along a deformable discrete path.

    Starts from the straight path between ``u_start`` (default 0) and
    ``u_end`` and alternates one damped transverse descent step on the
    maximal-energy node with an equal-arc-length re-spline; once the peak
    looks settled the saddle is polished by Newton-Krylov on the full
    residual.  The returned level ``c_eps`` is the maximum energy over the
    final path and is by construction an upper bound for the discrete
    minimax level.

    For the grid problem the string phase runs in a smooth localization
    subspace (see :meth:`DiscreteProblem.localization`); a free deformation
    would exploit the grid-scale oscillations that the wide-stencil
    Dirichlet form cannot see and collapse onto spurious low-energy states.
    Problems without a ``localization`` method (the test surrogates) are
    deformed directly in their own space.
    """
    cfg = cfg if cfg is not None else problem.cfg
    u_end = problem.project(np.asarray(u_end, dtype=float))
    if u_start is None:
        u_start = np.zeros_like(u_end)
    else:
        u_start = problem.project(np.asarray(u_start, dtype=float))
    e_end = problem.energy(u_end)
    if require_negative_endpoint and not e_end < 0.0:
        raise MountainPassError(f"endpoint energy must be negative, got {e_end:g}")

    if hasattr(problem, "localization"):
        reduced = problem.localization(u_end)
        s_start = reduced.restrict(u_start)
        s_end = reduced.restrict(u_end)
        if require_negative_endpoint and not reduced.energy(s_end) < 0.0:
            raise MountainPassError("endpoint lost negative energy under localization")
        lift = reduced.lift
        string = reduced
    else:
        string = problem
        s_start, s_end = u_start, u_end

        def lift(c):
            return c

    n_seg = cfg.mp_path_nodes
    weights = np.linspace(0.0, 1.0, n_seg + 1)
    nodes = [(1.0 - w) * s_start + w * s_end for w in weights]
    energies = np.array([string.energy(n) for n in nodes])
    e_floor = max(energies[0], energies[-1])
    saddle_margin = max(e_floor, 0.0) + 1e-9 * (1.0 + float(energies.max()))

    peak_history = [float(energies.max())]
    polish_gate = 0.05 * (
        1.0 + float(np.abs(string.residual(nodes[int(energies.argmax())])).max())
    )
    diagnostics = {"polish_attempts": 0, "stalled_steps": 0, "resplines_skipped": 0}

    u_polished = None
    iterations = 0
    for iterations in range(1, cfg.mp_max_iter + 1):
        m = int(energies.argmax())
        if m == 0 or m == len(nodes) - 1 or energies[m] <= saddle_margin:
            raise MountainPassError(
                f"path collapse: no separating barrier at lambda={problem.lam:g}, "
                f"eps={problem.eps:g}"
            )
        peak_field = lift(nodes[m])
        res_full = float(np.abs(problem.residual(peak_field)).max())
        if res_full <= cfg.descent_tol:
            u_polished = peak_field
            break

        r = string.residual(nodes[m])
        # component transverse to the path; along-path descent would just
        # slide the peak node into one of the basins
        tau = nodes[m + 1] - nodes[m - 1]
        tau_norm = string.norm(tau)
        if tau_norm > 0:
            tau = tau / tau_norm
            r_perp = r - string.dot(r, tau) * tau
        else:
            r_perp = r
        res_perp = string.norm(r_perp)

        if res_perp <= polish_gate or iterations % 20 == 0:
            diagnostics["polish_attempts"] += 1
            candidate = _newton_polish(problem, peak_field, cfg.descent_tol)
            if candidate is not None:
                e_cand = problem.energy(candidate)
                drift = problem.norm(candidate - peak_field)
                scale = problem.norm(peak_field) + problem.norm(u_end - u_start) / n_seg
                if e_cand > saddle_margin and drift <= scale:
                    u_polished = candidate
                    break
            polish_gate *= 0.5

        # one damped transverse descent step on the peak node only
        d = -string.precondition(r_perp)
        if tau_norm > 0:
            d = d - string.dot(d, tau) * tau
        seg_scale = 2.0 * max(
            string.norm(nodes[m] - nodes[m - 1]),
            string.norm(nodes[m + 1] - nodes[m]),
        )
        dn = string.norm(d)
        if dn > seg_scale > 0:
            d = d * (seg_scale / dn)
        slope = string.dot(r, d)
        if slope >= 0:
            d = -r_perp
            if tau_norm > 0:
                d = d - string.dot(d, tau) * tau
            slope = string.dot(r, d)
        alpha = 1.0
        stepped = False
        while alpha >= cfg.armijo_min_step:
            trial = nodes[m] + alpha * d
            e_trial = string.energy(trial)
            if e_trial <= energies[m] + cfg.armijo_c1 * alpha * slope:
                nodes[m] = trial
                energies[m] = e_trial
                stepped = True
                break
            alpha *= cfg.armijo_shrink
        if not stepped:
            diagnostics["stalled_steps"] += 1

        resplined = _respline(nodes, string.dot)
        re_energies = np.array([string.energy(n) for n in resplined])
        if re_energies.max() <= energies.max() + 1e-12:
            nodes = resplined
            energies = re_energies
        else:
            diagnostics["resplines_skipped"] += 1
        peak_history.append(float(energies.max()))

    if u_polished is None:
        raise MountainPassError(
            f"mountain pass did not converge within {cfg.mp_max_iter} iterations "
            f"(last peak energy {float(energies.max()):g})"
        )

    m = int(energies.argmax())
    path_fields = [lift(n) for n in nodes]
    path_fields[m] = u_polished
    path_energies = np.array([problem.energy(f) for f in path_fields])
    res_final = float(np.abs(problem.residual(u_polished)).max())
    c_eps = float(path_energies.max())
    peak_history.append(c_eps)
    return SaddleResult(
        u_mp=u_polished,
        c_eps=c_eps,
        residual_norm=res_final,
        iterations=iterations,
        energy=float(problem.energy(u_polished)),
        path_energies=path_energies,
        peak_history=np.array(peak_history),
        diagnostics=diagnostics,
    )


def eps_continuation(
    spec: GroupSpec,
    grid: Grid,
    nl: NonlinearitySpec,
    lam: float,
    schedule,
    cfg: SolveConfig | None = None,
) -> ContinuationResult:
    """Track the saddle along a decreasing smoothing schedule.

    The first level runs a full mountain pass; later levels warm-start with
    Newton-Krylov from the previous saddle and fall back to a full mountain
    pass when the warm start stalls or leaves the admissible regime.  A
    solver failure aborts the sweep; completed steps are preserved in the
    result.
    """
    schedule = [float(e) for e in schedule]
    if not schedule or any(e <= 0 for e in schedule):
        raise ValueError("schedule must be nonempty and positive")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")

    cfg = cfg if cfg is not None else SolveConfig(lam=lam, eps=schedule[0])
    steps: list[ContinuationStep] = []
    u_prev = None
    for j, eps in enumerate(schedule):
        problem = DiscreteProblem(spec, grid, nl, lam, eps, cfg)
        method = "mountain_pass"
        u_j = None
        c_eps = None
        iterations = 0
        if j > 0 and u_prev is not None:
            candidate = _newton_polish(problem, u_prev, cfg.descent_tol)
            if candidate is not None:
                e_cand = problem.energy(candidate)
                not_runaway = float(np.abs(candidate).max()) <= 10.0 * (
                    float(np.abs(u_prev).max()) + 1.0
                )
                # a genuine saddle keeps a super-level set and positive level
                if e_cand > 1e-9 and float(candidate.max()) > 1.0 and not_runaway:
                    u_j = candidate
                    c_eps = e_cand
                    method = "warm_start"
        if u_j is None:
            try:
                u_end = find_negative_endpoint(problem, cfg)
                saddle = mountain_pass(problem, u_end, cfg)
            except (OperableRangeError, MountainPassError, LinearSolveError) as exc:
                return ContinuationResult(
                    steps=steps,
                    failed=True,
                    failure=f"eps={eps:g}: {exc}",
                )
            u_j = saddle.u_mp
            c_eps = saddle.c_eps
            iterations = saddle.iterations
        res_max = float(np.abs(problem.residual(u_j)).max())
        if res_max > cfg.descent_tol:
            return ContinuationResult(
                steps=steps,
                failed=True,
                failure=f"eps={eps:g}: residual {res_max:g} above tolerance",
            )
        if float(u_j.max()) <= 1.0:
            return ContinuationResult(
                steps=steps,
                failed=True,
                failure=f"eps={eps:g}: degenerate saddle without a super-level set",
            )
        steps.append(
            ContinuationStep(
                eps=eps,
                u=u_j,
                c_eps=float(c_eps),
                residual_max=res_max,
                method=method,
                iterations=iterations,
                energy_eps=problem.energy_breakdown(u_j),
            )
        )
        u_prev = u_j
    return ContinuationResult(steps=steps)
