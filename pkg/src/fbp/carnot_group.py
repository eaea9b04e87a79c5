"""Homogeneous Carnot groups as explicit data.

A group is described by its dilation exponents, its stratification, and the
polynomial coefficient tables of the first-stratum (horizontal) vector fields

    Z_i = sum_j a_ij(x) d/dx_j,        i = 1 .. N_1.

Everything downstream (discrete gradients, the sub-Laplacian, gauge balls)
is driven by this data.  Coefficients are stored as explicit polynomials so
that Lie brackets and the Hormander rank test are exact, not finite
differenced.

Two concrete groups are provided: the first Heisenberg group (step 2,
generators Z1 = d1 + 2 x2 d3 and Z2 = d2 - 2 x1 d3, homogeneous dimension 4)
and the abelian Euclidean group of any dimension.

A structural restriction is enforced at construction time: each coefficient
a_ij must not depend on the coordinate x_j it differentiates.  This makes
every Z_i divergence free, which is what lets the centered-difference
discretization in :mod:`fbp.grid_discretization` be *exactly* skew adjoint.
Heisenberg and Euclidean groups satisfy it; specs violating it are rejected.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Polynomial",
    "GroupSpec",
    "GroupSpecError",
    "heisenberg1",
    "euclidean",
    "dilate",
    "field_coefficients",
    "lie_bracket",
    "validate_hormander",
    "koranyi_gauge",
]


class GroupSpecError(ValueError):
    """Raised when group data violates a structural requirement."""


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in ``nvars`` variables, stored as sparse monomials.

    ``terms`` maps exponent multi-indices to coefficients, e.g. the
    polynomial 2*x2 on R^3 is ``(((0, 1, 0), 2.0),)``.
    """

    nvars: int
    terms: tuple[tuple[tuple[int, ...], float], ...]

    @classmethod
    def from_dict(cls, nvars: int, terms: dict[tuple[int, ...], float]) -> "Polynomial":
        clean = {e: float(c) for e, c in terms.items() if c != 0.0}
        return cls(nvars, tuple(sorted(clean.items())))

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars, ())

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Polynomial":
        return cls.from_dict(nvars, {(0,) * nvars: c})

    @classmethod
    def monomial(cls, nvars: int, axis: int, coeff: float = 1.0) -> "Polynomial":
        expo = [0] * nvars
        expo[axis] = 1
        return cls.from_dict(nvars, {tuple(expo): coeff})

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(sum(e) == 0 for e, _ in self.terms)

    def constant_value(self) -> float:
        for e, c in self.terms:
            if sum(e) == 0:
                return c
        return 0.0

    def depends_on(self, axis: int) -> bool:
        return any(e[axis] > 0 for e, _ in self.terms)

    def __call__(self, coords):
        """Evaluate at coordinates given as a sequence of nvars arrays."""
        coords = [np.asarray(c, dtype=float) for c in coords]
        out = np.zeros(np.broadcast_shapes(*(c.shape for c in coords)))
        for expo, coeff in self.terms:
            term = np.full_like(out, coeff)
            for ax, p in enumerate(expo):
                if p:
                    term = term * coords[ax] ** p
            out = out + term
        return out

    def diff(self, axis: int) -> "Polynomial":
        terms: dict[tuple[int, ...], float] = {}
        for expo, coeff in self.terms:
            if expo[axis] == 0:
                continue
            new = list(expo)
            new[axis] -= 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + coeff * expo[axis]
        return Polynomial.from_dict(self.nvars, terms)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        terms: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Polynomial.from_dict(self.nvars, terms)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        terms = dict(self.terms)
        for e, c in other.terms:
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial.from_dict(self.nvars, terms)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (other * Polynomial.constant(self.nvars, -1.0))


@dataclass(frozen=True)
class GroupSpec:
    """Structure data of a homogeneous Carnot group on R^N.

    ``horizontal_fields[i][j]`` is the polynomial coefficient a_ij of
    d/dx_j in the i-th generator.  ``homogeneous_dim`` must equal the sum
    of the dilation exponents.
    """

    name: str
    strata_sizes: tuple[int, ...]
    dilation_exponents: tuple[int, ...]
    horizontal_fields: tuple[tuple[Polynomial, ...], ...]
    homogeneous_dim: int

    def __post_init__(self):
        n = self.ambient_dim
        if sum(self.strata_sizes) != n:
            raise GroupSpecError(
                f"strata sizes {self.strata_sizes} do not sum to ambient dim {n}"
            )
        if any(r < 1 for r in self.dilation_exponents):
            raise GroupSpecError("dilation exponents must be positive integers")
        if self.homogeneous_dim != sum(self.dilation_exponents):
            raise GroupSpecError(
                f"homogeneous dimension {self.homogeneous_dim} != "
                f"sum of dilation exponents {sum(self.dilation_exponents)}"
            )
        if len(self.horizontal_fields) != self.n_horizontal:
            raise GroupSpecError(
                f"expected {self.n_horizontal} horizontal fields, "
                f"got {len(self.horizontal_fields)}"
            )
        for i, field in enumerate(self.horizontal_fields):
            if len(field) != n:
                raise GroupSpecError(f"field {i} must have {n} components")
            # a_ij independent of x_j: divergence-free coefficients, needed
            # for exact discrete skew-adjointness.
            for j, poly in enumerate(field):
                if poly.depends_on(j):
                    raise GroupSpecError(
                        f"coefficient a[{i}][{j}] depends on x_{j}; such groups "
                        "are not supported (the discrete operators would not "
                        "be exactly skew-adjoint)"
                    )

    @property
    def ambient_dim(self) -> int:
        return len(self.dilation_exponents)

    @property
    def n_horizontal(self) -> int:
        return self.strata_sizes[0]

    @property
    def step(self) -> int:
        return len(self.strata_sizes)


def _check_origin_identity(spec: GroupSpec) -> None:
    origin = [np.zeros(())] * spec.ambient_dim
    for i, field in enumerate(spec.horizontal_fields):
        for j, poly in enumerate(field):
            value = float(poly(origin))
            expected = 1.0 if i == j else 0.0
            if value != expected:
                raise GroupSpecError(
                    f"Z_{i + 1}(0) must equal d/dx_{i + 1}: a[{i}][{j}](0) = {value}"
                )


def heisenberg1() -> GroupSpec:
    """The first Heisenberg group H^1 on R^3 (step 2, two generators)."""
    P = Polynomial
    z1 = (P.constant(3, 1.0), P.zero(3), P.monomial(3, 1, 2.0))
    z2 = (P.zero(3), P.constant(3, 1.0), P.monomial(3, 0, -2.0))
    spec = GroupSpec(
        name="heisenberg1",
        strata_sizes=(2, 1),
        dilation_exponents=(1, 1, 2),
        horizontal_fields=(z1, z2),
        homogeneous_dim=4,
    )
    _check_origin_identity(spec)
    return spec


def euclidean(n: int) -> GroupSpec:
    """Abelian group R^n with the ordinary gradient (one stratum, Q = n)."""
    if n < 1:
        raise GroupSpecError(f"euclidean group needs n >= 1, got {n}")
    fields = tuple(
        tuple(
            Polynomial.constant(n, 1.0) if i == j else Polynomial.zero(n)
            for j in range(n)
        )
        for i in range(n)
    )
    spec = GroupSpec(
        name=f"euclidean{n}",
        strata_sizes=(n,),
        dilation_exponents=(1,) * n,
        horizontal_fields=fields,
        homogeneous_dim=n,
    )
    _check_origin_identity(spec)
    return spec


def dilate(spec: GroupSpec, delta: float, x) -> np.ndarray:
    """Anisotropic dilation (delta^r_1 x_1, ..., delta^r_N x_N)."""
    if delta <= 0:
        raise ValueError(f"dilation factor must be positive, got {delta}")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.ambient_dim:
        raise ValueError(f"point has {x.shape[-1]} coords, expected {spec.ambient_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point coordinates must be finite")
    powers = np.array(spec.dilation_exponents, dtype=float)
    return x * delta**powers


def field_coefficients(spec: GroupSpec, i: int, x) -> np.ndarray:
    """Ambient coefficient vector a_i(x) of the generator Z_i at a point."""
    if not 0 <= i < spec.n_horizontal:
        raise IndexError(f"horizontal index {i} out of range")
    x = np.asarray(x, dtype=float)
    coords = [x[..., j] for j in range(spec.ambient_dim)]
    return np.stack([poly(coords) for poly in spec.horizontal_fields[i]], axis=-1)


@lru_cache(maxsize=128)
def _bracket_polys(spec: GroupSpec, vi: tuple, vj: tuple) -> tuple:
    """Coefficient polynomials of [V, W] for fields given as poly tuples."""
    n = spec.ambient_dim
    out = []
    for k in range(n):
        acc = Polynomial.zero(n)
        for ell in range(n):
            acc = acc + vi[ell] * vj[k].diff(ell) - vj[ell] * vi[k].diff(ell)
        out.append(acc)
    return tuple(out)


def lie_bracket(spec: GroupSpec, i: int, j: int, x) -> np.ndarray:
    """Coefficient vector of [Z_i, Z_j] at x, computed symbolically."""
    nh = spec.n_horizontal
    if not (0 <= i < nh and 0 <= j < nh):
        raise IndexError(f"bracket indices ({i}, {j}) out of range 0..{nh - 1}")
    polys = _bracket_polys(spec, spec.horizontal_fields[i], spec.horizontal_fields[j])
    x = np.asarray(x, dtype=float)
    coords = [x[..., k] for k in range(spec.ambient_dim)]
    return np.stack([p(coords) for p in polys], axis=-1)


def validate_hormander(spec: GroupSpec, sample_points, diagnostics: dict | None = None) -> bool:
    """Rank test: generators plus iterated brackets span R^N at every sample.

    Brackets are accumulated layer by layer up to the step of the group.
    Returns False (recording the offending point in ``diagnostics`` when a
    dict is supplied) as soon as the span drops rank at some sample.
    """
    points = [np.asarray(p, dtype=float) for p in sample_points]
    if not points:
        raise ValueError("need at least one sample point")

    layers = [list(spec.horizontal_fields)]
    for _ in range(spec.step - 1):
        new_layer = []
        for gen in spec.horizontal_fields:
            for f in layers[-1]:
                br = _bracket_polys(spec, gen, tuple(f))
                if any(not p.is_zero() for p in br):
                    new_layer.append(br)
        layers.append(new_layer)
    fields = [f for layer in layers for f in layer]

    for p in points:
        coords = [p[k] for k in range(spec.ambient_dim)]
        rows = np.array([[float(poly(coords)) for poly in f] for f in fields])
        rank = np.linalg.matrix_rank(rows, tol=1e-10)
        if rank < spec.ambient_dim:
            if diagnostics is not None:
                diagnostics["failed_point"] = tuple(float(v) for v in p)
                diagnostics["rank"] = int(rank)
            return False
    return True


def koranyi_gauge(spec: GroupSpec, x) -> float | np.ndarray:
    """Koranyi gauge ((x1^2 + x2^2)^2 + x3^2)^(1/4) on the Heisenberg group.

    Homogeneous of degree one under :func:`dilate`.  A computable surrogate
    for the Carnot-Caratheodory distance to the origin; only defined on H^1.
    """
    if spec.name != "heisenberg1":
        raise GroupSpecError(f"Koranyi gauge is only defined on heisenberg1, not {spec.name}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("point coordinates must be finite")
    radial = x[..., 0] ** 2 + x[..., 1] ** 2
    out = (radial**2 + x[..., 2] ** 2) ** 0.25
    return float(out) if out.ndim == 0 else out


def group_translate_to_origin(spec: GroupSpec, center, x) -> np.ndarray:
    """Left-translate x by the inverse of ``center``.

    Used to center gauge balls away from the origin.  For H^1 the group law
    consistent with the stored generators is
    (y * x)_3 = y3 + x3 + 2 (y2 x1 - y1 x2); abelian groups just subtract.
    """
    c = np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float)
    if spec.name == "heisenberg1":
        inv = -c
        out = np.empty(np.broadcast_shapes(x.shape, (3,)))
        out[..., 0] = x[..., 0] + inv[0]
        out[..., 1] = x[..., 1] + inv[1]
        out[..., 2] = x[..., 2] + inv[2] + 2.0 * (inv[1] * x[..., 0] - inv[0] * x[..., 1])
        return out
    return x - c


def lattice_points(lower, upper, count: int) -> list[np.ndarray]:
    """Regular lattice of sample points, handy for rank and gauge tests."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    axes = [np.linspace(lo, hi, count) for lo, hi in zip(lower, upper)]
    return [np.array(p) for p in itertools.product(*axes)]
