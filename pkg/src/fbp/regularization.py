"""Smoothing machinery: the mollifier pair (beta, B) and penalized g.

The transition function is the classical smooth step

    B(s) = phi(s) / (phi(s) + phi(1 - s)),      phi(t) = exp(-1/t) for t > 0,

with beta = B'.  It satisfies B = 0 below 0, B = 1 above 1, B(1/2) = 1/2 by
symmetry, and beta takes values in [0, 2] with the maximum beta(1/2) = 2
landing exactly on the allowed ceiling.  A naively normalized bump
c * exp(-1/(s(1-s))) would overshoot the [0, 2] range, which is why the
quotient form is used.  Both B and beta have closed forms, so no
normalization constant needs tuning.

The reaction term g comes in three families:

* ``constant``: g(x, s) = a with a > 0,
* ``power``: g(x, s) = s^(m-1) with 1 < m < 2,
* ``table``: piecewise-linear interpolation of user samples (x-independent),
  admitted with a user-supplied growth certificate.

Each family carries a certificate (alpha_g, beta_g, growth_m) for the
subcritical growth bound g(x, s) <= alpha_g + beta_g * s^(growth_m - 1),
checked by :func:`validate_growth` on a log-spaced lattice.

The penalized versions are g_eps(x, s) = B(s/eps) g(x, s) and its primitive
G_eps(x, s) = integral of g_eps from 0 to s.  For s >= eps the primitive
splits into an exact tail plus a one-time head integral over [0, eps]; only
arguments inside the transition band need quadrature, done with a
Gauss-Legendre rule under the substitution t = s * tau^4 that absorbs both
the flat start of B and the s^(m-1) algebraic factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "MollifierSpec",
    "MOLLIFIER",
    "B_val",
    "beta_val",
    "NonlinearitySpec",
    "constant_g",
    "power_g",
    "table_g",
    "g_val",
    "G_val",
    "g_eps_val",
    "G_eps_val",
    "validate_growth",
]


def _phi(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def _phi_prime(t: np.ndarray) -> np.ndarray:
    # d/dt exp(-1/t) = exp(-1/t) / t^2; the exponential underflows to zero
    # long before 1/t^2 can overflow anything.
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        tp = t[pos]
        out[pos] = np.exp(-1.0 / tp) / (tp * tp)
    return out


def _scalar_passthrough(s, out: np.ndarray):
    if np.ndim(s) == 0:
        return float(out)
    return out


def B_val(s):
    """Smooth step B: 0 below 0, 1 above 1, strictly increasing between."""
    arr = np.asarray(s, dtype=float)
    num = _phi(arr)
    den = num + _phi(1.0 - arr)
    return _scalar_passthrough(s, num / den)


def beta_val(s):
    """beta = B', supported on [0, 1] with range [0, 2] and beta(1/2) = 2."""
    arr = np.asarray(s, dtype=float)
    pa = _phi(arr)
    pb = _phi(1.0 - arr)
    den = pa + pb
    num = _phi_prime(arr) * pb + pa * _phi_prime(1.0 - arr)
    return _scalar_passthrough(s, num / (den * den))


def _phi_second(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        tp = t[pos]
        out[pos] = np.exp(-1.0 / tp) * (1.0 / tp**4 - 2.0 / tp**3)
    return out


def beta_prime_val(s):
    """Derivative of beta, used by the solvers' Jacobian assembly."""
    arr = np.asarray(s, dtype=float)
    pa = _phi(arr)
    pb = _phi(1.0 - arr)
    den = pa + pb
    num = _phi_prime(arr) * pb + pa * _phi_prime(1.0 - arr)
    num_prime = _phi_second(arr) * pb - pa * _phi_second(1.0 - arr)
    den_prime = _phi_prime(arr) - _phi_prime(1.0 - arr)
    out = (num_prime * den - 2.0 * num * den_prime) / den**3
    return _scalar_passthrough(s, out)


@dataclass(frozen=True)
class MollifierSpec:
    """The fixed (beta, B) pair; exposes eps-scaled evaluations."""

    def B(self, s):
        return B_val(s)

    def beta(self, s):
        return beta_val(s)

    def B_scaled(self, s, eps: float):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        return B_val(np.asarray(s, dtype=float) / eps) if np.ndim(s) else B_val(s / eps)

    def beta_scaled(self, s, eps: float):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        arr = np.asarray(s, dtype=float) / eps
        return _scalar_passthrough(s, np.asarray(beta_val(arr)) / eps)


MOLLIFIER = MollifierSpec()


# -- nonlinearity families -----------------------------------------------------


@dataclass(frozen=True)
class NonlinearitySpec:
    """Reaction term g with its subcritical growth certificate.

    ``alpha_g``/``beta_g``/``growth_m`` certify
    g(x, s) <= alpha_g + beta_g * s^(growth_m - 1); ``growth_m`` must lie in
    (1, 2).  The x argument is carried through the evaluation API for
    interface stability but the built-in families do not depend on it.
    """

    family: str
    a: float | None = None
    m: float | None = None
    table_s: tuple[float, ...] | None = None
    table_g: tuple[float, ...] | None = None
    alpha_g: float = 0.0
    beta_g: float = 0.0
    growth_m: float = 1.5

    def __post_init__(self):
        if self.family not in ("constant", "power", "table"):
            raise ValueError(f"unknown nonlinearity family {self.family!r}")
        if not 1.0 < self.growth_m < 2.0:
            raise ValueError(f"growth exponent must be in (1, 2), got {self.growth_m}")
        if self.family == "constant":
            if self.a is None or self.a <= 0:
                raise ValueError("constant family needs a > 0")
        elif self.family == "power":
            if self.m is None or not 1.0 < self.m < 2.0:
                raise ValueError(f"power family needs m in (1, 2), got {self.m}")
        else:
            if not self.table_s or not self.table_g:
                raise ValueError("table family needs sample arrays")
            if len(self.table_s) != len(self.table_g) or len(self.table_s) < 2:
                raise ValueError("table needs >= 2 matching (s, g) samples")
            s = np.array(self.table_s)
            g = np.array(self.table_g)
            if s[0] != 0.0 or np.any(np.diff(s) <= 0):
                raise ValueError("table s-samples must start at 0 and increase")
            if np.any(g < 0) or np.any(g[s > 0] <= 0):
                raise ValueError("table g-samples must be positive for s > 0")


def constant_g(a: float, alpha_g: float | None = None) -> NonlinearitySpec:
    """g = a > 0 (the Prandtl-Batchelor style constant forcing)."""
    return NonlinearitySpec(
        family="constant", a=float(a), alpha_g=float(a if alpha_g is None else alpha_g)
    )


def power_g(m: float, alpha_g: float = 0.0, beta_g: float = 1.0) -> NonlinearitySpec:
    """g = s^(m-1) with 1 < m < 2."""
    return NonlinearitySpec(
        family="power", m=float(m), alpha_g=alpha_g, beta_g=beta_g, growth_m=float(m)
    )


def table_g(
    s_samples,
    g_samples,
    alpha_g: float,
    beta_g: float,
    growth_m: float = 1.5,
) -> NonlinearitySpec:
    """Tabulated g with a caller-supplied growth certificate.

    Beyond the last sample the table extends with its final value, so the
    certificate must cover that constant tail.
    """
    return NonlinearitySpec(
        family="table",
        table_s=tuple(float(v) for v in s_samples),
        table_g=tuple(float(v) for v in g_samples),
        alpha_g=float(alpha_g),
        beta_g=float(beta_g),
        growth_m=float(growth_m),
    )


def _require_nonnegative(s) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise ValueError("g is only defined for s >= 0")
    return arr


def g_val(nl: NonlinearitySpec, x, s):
    """Evaluate g(x, s) for s >= 0."""
    arr = _require_nonnegative(s)
    if nl.family == "constant":
        out = np.full_like(arr, nl.a)
    elif nl.family == "power":
        out = arr ** (nl.m - 1.0)
    else:
        out = np.interp(arr, nl.table_s, nl.table_g)
    return _scalar_passthrough(s, out)


def G_val(nl: NonlinearitySpec, x, s):
    """Primitive G(x, s) = integral of g(x, .) from 0 to s, in closed form."""
    arr = _require_nonnegative(s)
    if nl.family == "constant":
        out = nl.a * arr
    elif nl.family == "power":
        out = arr**nl.m / nl.m
    else:
        ts = np.array(nl.table_s)
        tg = np.array(nl.table_g)
        seg = np.concatenate(
            ([0.0], np.cumsum(0.5 * (tg[1:] + tg[:-1]) * np.diff(ts)))
        )
        idx = np.clip(np.searchsorted(ts, arr, side="right") - 1, 0, len(ts) - 2)
        s0 = ts[idx]
        g_at = np.interp(arr, ts, tg)
        out = seg[idx] + 0.5 * (tg[idx] + g_at) * (arr - s0)
        beyond = arr > ts[-1]
        out = np.where(beyond, seg[-1] + tg[-1] * (arr - ts[-1]), out)
    return _scalar_passthrough(s, out)


def g_eps_val(nl: NonlinearitySpec, x, s, eps: float):
    """Penalized reaction g_eps(x, s) = B(s / eps) g(x, s)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    arr = _require_nonnegative(s)
    out = np.asarray(B_val(arr / eps)) * np.asarray(g_val(nl, x, arr))
    return _scalar_passthrough(s, out)


def _g_prime(nl: NonlinearitySpec, s: np.ndarray) -> np.ndarray:
    """dg/ds for s > 0 (one-sided where g has kinks)."""
    if nl.family == "constant":
        return np.zeros_like(s)
    if nl.family == "power":
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = (nl.m - 1.0) * s[pos] ** (nl.m - 2.0)
        return out
    ts = np.array(nl.table_s)
    tg = np.array(nl.table_g)
    slopes = np.concatenate((np.diff(tg) / np.diff(ts), [0.0]))
    idx = np.clip(np.searchsorted(ts, s, side="right") - 1, 0, len(slopes) - 1)
    return slopes[idx]


def g_eps_prime_val(nl: NonlinearitySpec, x, s, eps: float):
    """d/ds of the penalized reaction; solver Jacobian helper.

    For the power family the g'(s) ~ s^(m-2) singularity at zero is
    harmless: it is multiplied by the exponentially flat B(s/eps).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    arr = _require_nonnegative(s)
    bpart = np.asarray(beta_val(arr / eps)) / eps * np.asarray(g_val(nl, x, arr))
    with np.errstate(over="ignore", invalid="ignore"):
        gpart = np.asarray(B_val(arr / eps)) * _g_prime(nl, np.asarray(arr, dtype=float))
    gpart = np.where(np.isfinite(gpart), gpart, 0.0)
    return _scalar_passthrough(s, bpart + gpart)


@lru_cache(maxsize=None)
def _gauss_legendre_01(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


_HEAD_RULE = 64


def _head_integral(nl: NonlinearitySpec, eps: float, upper: np.ndarray) -> np.ndarray:
    """Integral of B(t/eps) g(t) over [0, upper] for upper <= eps.

    Substituting t = upper * tau^4 regularizes both the flat start of B and
    the s^(m-1) factor of the power family, so a fixed 64-point rule reaches
    the 1e-10 absolute target comfortably.
    """
    upper = np.asarray(upper, dtype=float)
    if nl.family == "table":
        # piecewise-smooth integrand: integrate per table segment
        ts = np.array(nl.table_s)
        knots = np.unique(np.concatenate((ts, [0.0])))
        tau, w = _gauss_legendre_01(32)
        out = np.zeros_like(upper)
        for k0, k1 in zip(knots[:-1], knots[1:]):
            lo = np.minimum(upper, k0)
            hi = np.clip(upper, k0, k1)
            width = hi - lo
            t = lo[..., None] + width[..., None] * tau
            f = np.asarray(B_val(t / eps)) * np.interp(t, nl.table_s, nl.table_g)
            out += np.sum(f * w, axis=-1) * width
        # tail beyond the last knot (constant g extension)
        lo = np.minimum(upper, knots[-1])
        width = upper - lo
        t = lo[..., None] + width[..., None] * tau
        f = np.asarray(B_val(t / eps)) * nl.table_g[-1]
        out += np.sum(f * w, axis=-1) * width
        return out
    tau, w = _gauss_legendre_01(_HEAD_RULE)
    t = upper[..., None] * tau**4
    jac = 4.0 * upper[..., None] * tau**3
    f = np.asarray(B_val(t / eps)) * np.asarray(g_val(nl, None, t))
    return np.sum(f * jac * w, axis=-1)


@lru_cache(maxsize=512)
def _head_integral_full(nl: NonlinearitySpec, eps: float) -> float:
    return float(_head_integral(nl, eps, np.asarray(eps)))


def G_eps_val(nl: NonlinearitySpec, x, s, eps: float):
    """Penalized primitive G_eps(x, s) = integral of g_eps(x, .) over [0, s].

    Exact tail above eps (where B = 1) plus a quadrature head; accurate to
    about 1e-10 * (1 + s) absolute.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    arr = _require_nonnegative(s)
    out = np.zeros_like(arr)
    band = (arr > 0) & (arr < eps)
    if np.any(band):
        out[band] = _head_integral(nl, eps, arr[band])
    tail = arr >= eps
    if np.any(tail):
        head_full = _head_integral_full(nl, eps)
        out[tail] = (
            head_full
            + np.asarray(G_val(nl, x, arr[tail]))
            - float(np.asarray(G_val(nl, x, np.asarray(eps))))
        )
    return _scalar_passthrough(s, out)


def validate_growth(nl: NonlinearitySpec, sample_points=None) -> bool:
    """Check g <= alpha_g + beta_g * s^(growth_m - 1) on a log-spaced lattice.

    The s-lattice spans [0, 1e3]; domain sample points are accepted for
    interface symmetry (the built-in families are x-independent).
    """
    lattice = np.concatenate(([0.0], np.logspace(-6, 3, 400)))
    xs = sample_points if sample_points is not None else [None]
    bound = nl.alpha_g + nl.beta_g * lattice ** (nl.growth_m - 1.0)
    slack = 1e-12 * (1.0 + np.abs(bound))
    for x in xs:
        values = np.asarray(g_val(nl, x, lattice))
        if np.any(values > bound + slack):
            return False
    return True
