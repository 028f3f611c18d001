"""Limit theory: activation functionals, fixed points, and critical densities.

The limiting fraction of eventually-infected vertices is governed by the
smallest positive root of

    f_r(y) = (1 - p) * E[psi_r(W* y)] + p - y,

where psi_r is the upper tail of a Poisson law, W* is the size-biased
weight of a random neighbor, and p is the seeding density.  Roots are
located by a left-to-right scan followed by bisection; the sign of
f_r'(root) decides whether the law-of-large-numbers prediction applies.

Expectations over discrete laws are exact finite sums; over power laws
they are quadratures with the saturated tail (where psi_r is 1 to within
1e-14) integrated analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .weights import WeightDistribution

__all__ = [
    "NumericFailure",
    "FixedPointResult",
    "psi_r",
    "poisson_pmf",
    "f_r",
    "f_r_prime",
    "solve_fixed_point",
    "final_fraction",
    "check_derivative_condition",
    "powerlaw_fixed_point",
    "critical_density",
    "expected_psi",
    "expected_poisson_term",
    "scan_smallest_root",
]

# psi_r is treated as exactly 1 beyond this saturation level
_SATURATION = 1e-14


class NumericFailure(RuntimeError):
    """Raised when a quadrature or root refinement fails to converge."""


# ---------------------------------------------------------------------------
# Poisson tails
# ---------------------------------------------------------------------------

def psi_r(r: int, x):
    """Upper Poisson tail P(Po(x) >= r).

    Computed as 1 minus the compensated (Kahan) sum of the first r pmf
    terms, which is exact to working precision for the r values used here.
    Accepts scalars or arrays; raises on negative x.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("x must be nonnegative")
    if r == 0:
        out = np.ones_like(arr)
        return float(out) if np.isscalar(x) else out
    term = np.exp(-arr)
    total = term.copy()
    comp = np.zeros_like(arr)
    for j in range(1, r):
        term = term * arr / j
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    out = np.clip(1.0 - total, 0.0, 1.0)
    return float(out) if np.isscalar(x) else out


def poisson_pmf(j: int, x):
    """P(Po(x) = j), stable for large x via log-space evaluation."""
    arr = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = -arr + j * np.log(arr) - math.lgamma(j + 1)
        out = np.where(arr > 0, np.exp(logp), 1.0 if j == 0 else 0.0)
    return float(out) if np.isscalar(x) else out


@lru_cache(maxsize=None)
def _saturation_level(r: int) -> float:
    """x such that psi_r(x) = 1 - 1e-14; beyond it the tail is treated as 1."""
    return float(optimize.brentq(lambda a: psi_r(r, a) - (1.0 - _SATURATION),
                                 1e-6, 400.0, xtol=1e-10))


# ---------------------------------------------------------------------------
# Expectations of psi_r and of a single Poisson pmf term
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _composite_gl(func, a: float, b: float, max_panel: float = 1.5) -> float:
    """Composite 16-point Gauss-Legendre over [a, b] (vectorised integrand)."""
    if b <= a:
        return 0.0
    k = max(1, int(math.ceil((b - a) / max_panel)))
    edges = np.linspace(a, b, k + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    pts = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
    wts = np.broadcast_to(half * _GL_WEIGHTS[None, :], (k, 16)).ravel()
    return float(np.dot(wts, func(pts)))


def _powerlaw_expect(dist: WeightDistribution, g, tail_value, size_biased: bool,
                     fast: bool, upper: float) -> float:
    """integral of g(w) against the (size-biased) power law over [x0, upper),
    plus tail_value times the remaining mass in [upper, inf).  ``g`` must be
    vectorised.  Works in log-space; the cutoff atom is added separately by
    callers.
    """
    beta, c, x0, d = dist.beta, dist.c, dist.x0, dist.mean
    hi_support = dist.x0 if dist.cutoff is None else dist.cutoff
    hi = min(upper, dist.cutoff) if dist.cutoff is not None else upper
    expo = (2.0 - beta) if size_biased else (1.0 - beta)
    scale = (beta - 1.0) * c / d if size_biased else (beta - 1.0) * c

    def integrand(s):
        w = np.exp(s)
        return g(w) * scale * np.exp(expo * s)

    body = 0.0
    if hi > x0:
        a, b = math.log(x0), math.log(hi)
        if fast:
            body = _composite_gl(integrand, a, b)
        else:
            body, err = integrate.quad(lambda s: float(integrand(np.array([s]))[0]),
                                       a, b, epsabs=1e-13, epsrel=1e-12, limit=300)
            if err > 1e-9:
                raise NumericFailure(
                    f"quadrature error estimate {err:.2e} over [{a:.3g},{b:.3g}]")
    # mass of the continuous part above `hi`
    lo_t = max(hi, x0)
    hi_t = dist.cutoff if dist.cutoff is not None else math.inf
    if size_biased:
        if math.isinf(hi_t):
            mass = (beta - 1.0) * c * lo_t ** (2.0 - beta) / ((beta - 2.0) * d)
        else:
            mass = (beta - 1.0) * c * (lo_t ** (2.0 - beta) - hi_t ** (2.0 - beta)) \
                / ((beta - 2.0) * d)
    else:
        if math.isinf(hi_t):
            mass = c * lo_t ** (1.0 - beta)
        else:
            mass = c * (lo_t ** (1.0 - beta) - hi_t ** (1.0 - beta))
    return body + tail_value * max(mass, 0.0)


def expected_psi(dist: WeightDistribution, y: float, r: int,
                 size_biased: bool = True, fast: bool = False) -> float:
    """E[psi_r(W y)] under dist (or its size-biased version).

    Discrete laws are exact sums.  Power laws split the integral at the
    weight where psi_r saturates to 1 - 1e-14; the saturated tail then
    contributes its mass exactly.
    """
    if y < 0:
        raise ValueError("y must be nonnegative")
    if y == 0:
        return 0.0 if r >= 1 else 1.0
    if dist.kind != "power_law":
        vals, probs = dist.values, dist.probs
        if size_biased:
            probs = vals * probs / dist.mean
        return float(np.dot(probs, psi_r(r, vals * y)))
    w_star = _saturation_level(r) / y
    total = _powerlaw_expect(dist, lambda w: psi_r(r, w * y), 1.0,
                             size_biased, fast, upper=w_star)
    if dist.cutoff is not None:
        atom = dist.c * dist.cutoff ** (1.0 - dist.beta)
        if size_biased:
            atom = dist.cutoff * atom / dist.mean
        total += atom * psi_r(r, dist.cutoff * y)
    return total


def expected_poisson_term(dist: WeightDistribution, y: float, r: int,
                          size_biased: bool = True, fast: bool = False) -> float:
    """E[exp(-W y) (W y)^r / r!] under dist (or size-biased)."""
    if y < 0:
        raise ValueError("y must be nonnegative")
    if y == 0:
        return 0.0 if r >= 1 else 1.0
    if dist.kind != "power_law":
        vals, probs = dist.values, dist.probs
        if size_biased:
            probs = vals * probs / dist.mean
        return float(np.dot(probs, poisson_pmf(r, vals * y)))
    # integrand decays like e^{-wy}; beyond the saturation level of r+4 the
    # pmf term is below 1e-15 of its peak, so truncate there
    w_hi = (_saturation_level(r + 4) + 60.0) / y
    total = _powerlaw_expect(dist, lambda w: poisson_pmf(r, w * y), 0.0,
                             size_biased, fast, upper=w_hi)
    if dist.cutoff is not None:
        atom = dist.c * dist.cutoff ** (1.0 - dist.beta)
        if size_biased:
            atom = dist.cutoff * atom / dist.mean
        total += atom * poisson_pmf(r, dist.cutoff * y)
    return total


# ---------------------------------------------------------------------------
# The activation functional and its roots
# ---------------------------------------------------------------------------

def f_r(y: float, dist: WeightDistribution, p: float, r: int,
        fast: bool = False) -> float:
    """(1-p) E[psi_r(W* y)] + p - y, with W* size-biased under dist."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if y < -1e-12 or y > 1.0 + 1e-9:
        raise ValueError("y outside [0, 1]")
    y = max(y, 0.0)
    return (1.0 - p) * expected_psi(dist, y, r, size_biased=True, fast=fast) + p - y


def f_r_prime(y: float, dist: WeightDistribution, p: float, r: int,
              fast: bool = False) -> float:
    """Analytic derivative -1 + (1-p) (r/y) E[exp(-W* y)(W* y)^r / r!]."""
    if y <= 0:
        raise ValueError("derivative evaluated at positive y only")
    term = expected_poisson_term(dist, y, r, size_biased=True, fast=fast)
    return -1.0 + (1.0 - p) * (r / y) * term


@dataclass(frozen=True)
class FixedPointResult:
    """Smallest positive root of an activation fixed-point equation.

    ``scan_grid`` / ``scan_values`` hold the left-to-right scan prefix up to
    and including the first nonpositive value, certifying that no sign
    change exists left of the root on the scan grid.
    """

    y_hat: float
    residual: float
    derivative: float
    stable: bool
    bracket: tuple[float, float]
    scan_step: float
    boundary_root: bool = False
    died_out: bool = False
    fd_derivative: float = field(default=float("nan"))
    scan_grid: np.ndarray | None = field(default=None, repr=False, compare=False)
    scan_values: np.ndarray | None = field(default=None, repr=False, compare=False)


def scan_smallest_root(g, lo: float, hi: float, step: float, tol: float,
                       g_fast=None):
    """First sign change of g on [lo, hi] scanned left to right, then bisected.

    Returns (root, bracket, found, scan_grid, scan_values).  ``g_fast`` may
    supply a cheaper evaluator for the scan; the bisection always uses
    ``g``.  When g stays positive on the whole grid, (hi, (hi, hi), False,
    ...) is returned.
    """
    scan = g_fast if g_fast is not None else g
    n_pts = int(math.floor((hi - lo) / step)) + 1
    grid = lo + step * np.arange(n_pts)
    if grid[-1] < hi:
        grid = np.append(grid, hi)
    seen_x: list[float] = []
    seen_v: list[float] = []
    bracket = None
    for x in grid:
        v = scan(float(x))
        seen_x.append(float(x))
        seen_v.append(float(v))
        if v <= 0.0:
            if len(seen_x) == 1:
                # root at or below the scan start
                return (float(x), (float(x), float(x)), True,
                        np.array(seen_x), np.array(seen_v))
            bracket = (seen_x[-2], seen_x[-1])
            break
    prefix = (np.array(seen_x), np.array(seen_v))
    if bracket is None:
        return float(hi), (float(hi), float(hi)), False, *prefix
    a, b = bracket
    fa = g(a)
    if fa <= 0.0:  # fast/reference disagreement at the left edge; accept edge
        return a, bracket, True, *prefix
    for _ in range(300):
        mid = 0.5 * (a + b)
        fm = g(mid)
        if abs(fm) < tol or (b - a) < 1e-16:
            return mid, bracket, True, *prefix
        if fm > 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b), bracket, True, *prefix


def solve_fixed_point(dist: WeightDistribution, p: float, r: int,
                      tol: float = 1e-12, scan_step: float = 1e-4,
                      ) -> FixedPointResult:
    """Locate the smallest positive root of f_r(y) = 0 on [tol, 1].

    The derivative at the root is the analytic form, cross-checked against
    a central finite difference (h = 1e-7).  ``stable`` means the derivative
    is below -1e-9.  With p = 1 the equation degenerates to 1 - y and the
    boundary root y = 1 is returned flagged.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")

    def g(y):
        return f_r(y, dist, p, r, fast=False)

    def g_fast(y):
        return f_r(y, dist, p, r, fast=True)

    root, bracket, found, sg, sv = scan_smallest_root(g, tol, 1.0, scan_step,
                                                      tol, g_fast=g_fast)
    boundary = not found
    if boundary:
        root = 1.0
    resid = g(root)
    if root > 1e-9:
        deriv = f_r_prime(root, dist, p, r)
        h = 1e-7
        fd = (g(min(root + h, 1.0)) - g(max(root - h, 0.0))) \
            / (min(root + h, 1.0) - max(root - h, 0.0))
    else:
        deriv, fd = float("nan"), float("nan")
    return FixedPointResult(
        y_hat=float(root), residual=float(resid), derivative=float(deriv),
        stable=bool(deriv < -1e-9), bracket=bracket, scan_step=scan_step,
        boundary_root=boundary, fd_derivative=float(fd),
        scan_grid=sg, scan_values=sv)


def final_fraction(dist: WeightDistribution, y_hat: float, p: float, r: int) -> float:
    """(1-p) E[psi_r(W y_hat)] + p over the plain (not size-biased) law."""
    return (1.0 - p) * expected_psi(dist, y_hat, r, size_biased=False) + p


@dataclass(frozen=True)
class DerivativeConditionReport:
    stable: bool
    exceptional_gap: float
    derivative: float


def check_derivative_condition(dist: WeightDistribution, y_hat: float,
                               p: float, r: int) -> DerivativeConditionReport:
    """Stability of the root, and the distance from the degenerate equality.

    The prediction fails only when E[exp(-y W*)(W* y)^r / r!] equals
    y / ((1-p) r) exactly; ``exceptional_gap`` reports |lhs - rhs|.
    """
    deriv = f_r_prime(y_hat, dist, p, r)
    lhs = expected_poisson_term(dist, y_hat, r, size_biased=True)
    rhs = y_hat / ((1.0 - p) * r) if p < 1.0 else math.inf
    return DerivativeConditionReport(
        stable=bool(deriv < -1e-9),
        exceptional_gap=float(abs(lhs - rhs)),
        derivative=float(deriv),
    )


def powerlaw_fixed_point(beta: float, x0: float, r: int,
                         tol: float = 1e-12, scan_step: float = 1e-4,
                         cutoff: float | None = None) -> FixedPointResult:
    """Zero-seeding fixed point y = E[psi_r(W* y)] for a power law.

    y = 0 always solves the equation, so the scan starts at ``tol`` and the
    first positive crossing is reported.  When no crossing exists the
    process dies out and the zero root is returned flagged.
    """
    if not 2.0 < beta < 3.0:
        raise ValueError("beta must lie in (2, 3)")
    dist = WeightDistribution.truncated_power_law(beta, x0, cutoff=cutoff)

    def g(y):
        return expected_psi(dist, y, r, size_biased=True) - y

    def g_fast(y):
        return expected_psi(dist, y, r, size_biased=True, fast=True) - y

    root, bracket, found = scan_smallest_root(g, tol, 1.0, scan_step, tol,
                                              g_fast=g_fast)
    if not found:
        return FixedPointResult(
            y_hat=0.0, residual=0.0, derivative=float("nan"), stable=False,
            bracket=(tol, 1.0), scan_step=scan_step, died_out=True)
    resid = g(root)
    deriv = f_r_prime(root, dist, 0.0, r)
    h = 1e-7
    fd = (g(root + h) - g(root - h)) / (2 * h)
    return FixedPointResult(
        y_hat=float(root), residual=float(resid), derivative=float(deriv),
        stable=bool(deriv < -1e-9), bracket=bracket, scan_step=scan_step,
        fd_derivative=float(fd))


@dataclass(frozen=True)
class CriticalDensity:
    a_c: float
    exponent: float
    zeta_in_range: bool


def critical_density(n: float, r: int, beta: float, zeta: float) -> CriticalDensity:
    """Critical seed scale a_c(n) = n^((r(1-zeta) + zeta(beta-1) - 1)/r).

    The exponent window (r-1)/(2r-beta+1) < zeta <= 1/(beta-1) is validated;
    outside it the value is still returned but flagged (the threshold result
    extends beyond the window with adjusted constants).
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    exponent = (r * (1.0 - zeta) + zeta * (beta - 1.0) - 1.0) / r
    lo = (r - 1.0) / (2.0 * r - beta + 1.0)
    hi = 1.0 / (beta - 1.0)
    return CriticalDensity(
        a_c=float(n) ** exponent,
        exponent=exponent,
        zeta_in_range=bool(lo < zeta <= hi + 1e-15),
    )
