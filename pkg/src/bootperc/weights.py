"""Vertex-weight sequences and their limiting laws.

A weight sequence assigns a positive weight to each of n vertices; the
empirical distribution of those weights is expected to stabilise, as n
grows, to a limit law F.  Three families of limit laws are supported:
a point mass (the homogeneous case), a finite mixture of atoms, and a
power law with lower truncation point x0 (optionally capped, which puts
an atom at the cap carrying the residual tail mass).

Everything here is immutable after construction and safe to share
across threads; sampling takes an explicit numpy Generator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "WeightSequence",
    "WeightDistribution",
    "make_point_mass",
    "make_power_law",
    "weight_sequence_from_values",
    "empirical_cdf",
    "c_gamma",
    "w_gamma",
    "sample_size_biased",
    "check_regularity",
    "RegularityReport",
]


# ---------------------------------------------------------------------------
# Weight sequences (finite n)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightSequence:
    """Sorted positive vertex weights, plus optional class labels.

    ``weights`` is nondecreasing; ``class_of[i]`` (when present) gives the
    class index of vertex i in a discretised sequence.  ``total_weight``
    caches the exact sum and is the normalizer of the edge probabilities.
    """

    weights: np.ndarray
    class_of: np.ndarray | None = None
    total_weight: float = field(default=0.0)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d sequence")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        if np.any(np.diff(w) < 0):
            raise ValueError("weights must be sorted nondecreasing")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_weight", float(math_fsum(w)))
        if self.class_of is not None:
            c = np.asarray(self.class_of, dtype=np.int64)
            if c.shape != w.shape:
                raise ValueError("class_of must align with weights")
            object.__setattr__(self, "class_of", c)

    @property
    def n(self) -> int:
        return int(self.weights.size)

    @property
    def min_weight(self) -> float:
        return float(self.weights[0])

    @property
    def max_weight(self) -> float:
        return float(self.weights[-1])

    @property
    def mean_weight(self) -> float:
        return self.total_weight / self.n

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["weight"])
            for w in self.weights:
                writer.writerow([repr(float(w))])

    @staticmethod
    def load_csv(path) -> "WeightSequence":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["weight"]:
                raise ValueError("expected single-column CSV with header 'weight'")
            vals = [float(row[0]) for row in reader if row]
        return weight_sequence_from_values(vals)


def math_fsum(arr: np.ndarray) -> float:
    # exact-ish summation; weights can span many magnitudes for power laws
    import math

    return math.fsum(arr.tolist())


def weight_sequence_from_values(values: Iterable[float],
                                class_of: Sequence[int] | None = None) -> WeightSequence:
    """Sort the given positive values into a WeightSequence (classes follow)."""
    w = np.asarray(list(values), dtype=np.float64)
    order = np.argsort(w, kind="stable")
    c = None
    if class_of is not None:
        c = np.asarray(list(class_of), dtype=np.int64)[order]
    return WeightSequence(w[order], class_of=c)


def make_point_mass(d: float, n: int) -> WeightSequence:
    """All n vertices get weight d; reduces the model to the homogeneous case."""
    if d <= 0:
        raise ValueError("d must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    return WeightSequence(np.full(n, float(d)))


def make_power_law(n: int, d: float, beta: float, i0: float = 0.0,
                   cap: float | None = None) -> WeightSequence:
    """Explicit power-law weights d*(n/(i+i0))^(1/(beta-1)), sorted ascending.

    ``beta`` must exceed 2 (finite-mean regime).  ``cap``, when given,
    clips every weight from above (used to realise an n^zeta cutoff).
    The largest weight is d*(n/(1+i0))^(1/(beta-1)) before capping.
    """
    if beta <= 2:
        raise ValueError("beta must exceed 2 (finite-mean regime)")
    if d <= 0:
        raise ValueError("d must be positive")
    if i0 < 0:
        raise ValueError("i0 must be nonnegative")
    if n < 1:
        raise ValueError("n must be at least 1")
    idx = np.arange(1, n + 1, dtype=np.float64)
    w = d * (n / (idx + i0)) ** (1.0 / (beta - 1.0))
    if cap is not None:
        w = np.minimum(w, float(cap))
    return WeightSequence(np.sort(w))


def empirical_cdf(ws: WeightSequence, x: float | np.ndarray):
    """F_n(x): fraction of vertices with weight <= x (binary search)."""
    counts = np.searchsorted(ws.weights, x, side="right")
    return counts / ws.n


# ---------------------------------------------------------------------------
# Limit laws
# ---------------------------------------------------------------------------

class WeightDistribution:
    """Limiting weight law: point mass, finite mixture, or truncated power law.

    The power-law CDF is F(x) = 1 - c*x^(1-beta) on [x0, inf) with
    c = x0^(beta-1), so F(x0) = 0.  An optional ``cutoff`` truncates the
    support from above, placing an atom of mass c*cutoff^(1-beta) at the
    cutoff itself (the view matching a capped weight sequence).
    """

    def __init__(self, kind: str, values=None, probs=None,
                 beta: float | None = None, x0: float | None = None,
                 cutoff: float | None = None):
        self.kind = kind
        self.values = None if values is None else np.asarray(values, dtype=np.float64)
        self.probs = None if probs is None else np.asarray(probs, dtype=np.float64)
        self.beta = beta
        self.x0 = x0
        self.cutoff = cutoff
        self.c = None if x0 is None or beta is None else x0 ** (beta - 1.0)
        self._validate()

    # -- constructors -------------------------------------------------------

    @classmethod
    def point_mass(cls, d: float) -> "WeightDistribution":
        if d <= 0:
            raise ValueError("d must be positive")
        return cls("point_mass", values=[d], probs=[1.0])

    @classmethod
    def finite_mixture(cls, values, probs) -> "WeightDistribution":
        return cls("mixture", values=values, probs=probs)

    @classmethod
    def truncated_power_law(cls, beta: float, x0: float = 1.0,
                            cutoff: float | None = None) -> "WeightDistribution":
        if beta <= 2:
            raise ValueError("beta must exceed 2 (finite-mean regime)")
        if x0 <= 0:
            raise ValueError("x0 must be positive")
        if cutoff is not None and cutoff <= x0:
            raise ValueError("cutoff must exceed x0")
        return cls("power_law", beta=beta, x0=x0, cutoff=cutoff)

    def _validate(self):
        if self.kind in ("point_mass", "mixture"):
            v, p = self.values, self.probs
            if v is None or p is None or v.size == 0 or v.shape != p.shape:
                raise ValueError("mixture needs matching values and probs")
            if np.any(v <= 0):
                raise ValueError("mixture values must be positive")
            if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("mixture probs must be positive and sum to 1")
            order = np.argsort(v)
            self.values = v[order]
            self.probs = p[order]
            if np.any(np.diff(self.values) == 0):
                raise ValueError("mixture values must be distinct")
        elif self.kind == "power_law":
            if self.beta is None or self.x0 is None:
                raise ValueError("power law needs beta and x0")
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    # -- basic functionals --------------------------------------------------

    @property
    def min_support(self) -> float:
        if self.kind == "power_law":
            return float(self.x0)
        return float(self.values[0])

    @property
    def max_support(self) -> float:
        if self.kind == "power_law":
            return float("inf") if self.cutoff is None else float(self.cutoff)
        return float(self.values[-1])

    def cdf(self, x: float) -> float:
        if self.kind == "power_law":
            if x < self.x0:
                return 0.0
            if self.cutoff is not None and x >= self.cutoff:
                return 1.0
            return 1.0 - self.c * x ** (1.0 - self.beta)
        return float(self.probs[self.values <= x].sum())

    def sf(self, x: float) -> float:
        """P(W > x), strict."""
        if self.kind == "power_law":
            if x < self.x0:
                return 1.0
            if self.cutoff is not None and x >= self.cutoff:
                return 0.0
            return self.c * x ** (1.0 - self.beta)
        return float(self.probs[self.values > x].sum())

    def prob_geq(self, x: float) -> float:
        """P(W >= x), closed tail."""
        if self.kind == "power_law":
            if x <= self.x0:
                return 1.0
            if self.cutoff is not None and x > self.cutoff:
                return 0.0
            if self.cutoff is not None and x == self.cutoff:
                return self.c * self.cutoff ** (1.0 - self.beta)
            return self.c * x ** (1.0 - self.beta)
        return float(self.probs[self.values >= x].sum())

    @property
    def mean(self) -> float:
        if self.kind == "power_law":
            b, c, x0 = self.beta, self.c, self.x0
            if self.cutoff is None:
                return (b - 1.0) * x0 / (b - 2.0)
            X = self.cutoff
            body = (b - 1.0) * c * (x0 ** (2.0 - b) - X ** (2.0 - b)) / (b - 2.0)
            atom = X * self.c * X ** (1.0 - b)
            return body + atom
        return float(np.dot(self.values, self.probs))

    def tail_mean(self, x: float, closed: bool = True) -> float:
        """E[W ; W >= x] (closed tail) or E[W ; W > x]."""
        if self.kind == "power_law":
            b, c = self.beta, self.c
            lo = max(x, self.x0)
            if self.cutoff is None:
                if x <= self.x0:
                    return self.mean
                return (b - 1.0) * c * lo ** (2.0 - b) / (b - 2.0)
            X = self.cutoff
            atom_mass = c * X ** (1.0 - b)
            if x > X or (x == X and not closed):
                return 0.0
            if x >= X:
                return X * atom_mass
            lo = max(x, self.x0)
            body = (b - 1.0) * c * (lo ** (2.0 - b) - X ** (2.0 - b)) / (b - 2.0)
            return body + X * atom_mass
        if closed:
            mask = self.values >= x
        else:
            mask = self.values > x
        return float(np.dot(self.values[mask], self.probs[mask]))

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Discrete component as (values, masses); power law contributes its cutoff atom."""
        if self.kind == "power_law":
            if self.cutoff is None:
                return np.empty(0), np.empty(0)
            m = self.c * self.cutoff ** (1.0 - self.beta)
            return np.array([self.cutoff]), np.array([m])
        return self.values.copy(), self.probs.copy()

    @property
    def has_density(self) -> bool:
        return self.kind == "power_law"

    def density(self, w):
        """Continuous density (power law only), zero elsewhere."""
        if self.kind != "power_law":
            raise ValueError("no continuous density for discrete kinds")
        w = np.asarray(w, dtype=np.float64)
        hi = np.inf if self.cutoff is None else self.cutoff
        out = (self.beta - 1.0) * self.c * w ** (-self.beta)
        return np.where((w >= self.x0) & (w < hi), out, 0.0)

    # -- quantiles / tail cutoffs -------------------------------------------

    def quantile_strict(self, q: float) -> float:
        """inf{x : F(x) > q}; the tail cutoff uses q = 1 - gamma."""
        if not 0.0 <= q < 1.0:
            raise ValueError("q must lie in [0, 1)")
        if self.kind == "power_law":
            x = (self.c / (1.0 - q)) ** (1.0 / (self.beta - 1.0))
            if self.cutoff is not None:
                x = min(x, self.cutoff)
            return max(x, self.x0)
        cum = np.cumsum(self.probs)
        idx = int(np.searchsorted(cum, q, side="right"))
        return float(self.values[min(idx, self.values.size - 1)])

    @property
    def size_biased_mean_finite(self) -> bool:
        if self.kind == "power_law" and self.cutoff is None:
            return self.beta > 3
        return True

    # -- sampling ------------------------------------------------------------

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        u = rng.random(size)
        if self.kind == "power_law":
            x = (self.c / (1.0 - u)) ** (1.0 / (self.beta - 1.0))
            if self.cutoff is not None:
                x = np.minimum(x, self.cutoff)
            return x
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum, u, side="right")
        return self.values[np.minimum(idx, self.values.size - 1)]

    def sample_size_biased(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Draw from the law reweighted by x/mean (a neighbor along a random edge)."""
        u = rng.random(size)
        if self.kind != "power_law":
            star = self.values * self.probs / self.mean
            cum = np.cumsum(star)
            idx = np.searchsorted(cum, u, side="right")
            return self.values[np.minimum(idx, self.values.size - 1)]
        b, c, x0, d = self.beta, self.c, self.x0, self.mean
        k = (b - 1.0) * c / ((b - 2.0) * d)
        if self.cutoff is None:
            # F*(x) = k*(x0^(2-b) - x^(2-b)); tail exponent beta-2
            val = x0 ** (2.0 - b) - u / k
            return val ** (-1.0 / (b - 2.0))
        X = self.cutoff
        fstar_body = k * (x0 ** (2.0 - b) - X ** (2.0 - b))
        out = np.full(size, X, dtype=np.float64)
        cont = u < fstar_body
        val = x0 ** (2.0 - b) - u[cont] / k
        out[cont] = val ** (-1.0 / (b - 2.0))
        return out


# ---------------------------------------------------------------------------
# Tail cutoffs (module-level operations)
# ---------------------------------------------------------------------------

def c_gamma(dist: WeightDistribution, gamma: float) -> float:
    """Smallest weight level whose closed tail [C, inf) carries mass <= gamma.

    Equivalently inf{x : F(x) > 1-gamma}.  For continuous laws this solves
    F(C) = 1-gamma; for a truncated power law C = (c/gamma)^(1/(beta-1)).
    At an atom whose CDF hits 1-gamma exactly, the cutoff moves to the next
    support point so the closed tail has mass exactly gamma (and the
    attained tail fraction stays <= gamma).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    return dist.quantile_strict(1.0 - gamma)


def w_gamma(dist: WeightDistribution, gamma: float) -> float:
    """Tail mean E[W ; W >= C_gamma]; mass exactly at the cutoff is included."""
    return dist.tail_mean(c_gamma(dist, gamma), closed=True)


def sample_size_biased(dist: WeightDistribution, rng: np.random.Generator,
                       size: int = 1) -> np.ndarray:
    return dist.sample_size_biased(rng, size=size)


# ---------------------------------------------------------------------------
# Regularity check: does the sequence family converge to the limit law?
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularityReport:
    ns: tuple[int, ...]
    sup_distances: tuple[float, ...]
    mean_gaps: tuple[float, ...]
    min_weights: tuple[float, ...]
    x0: float
    min_weight_ok: bool
    best_tail_constants: tuple[float, float] | None = None

    @property
    def distances_decreasing(self) -> bool:
        d = self.sup_distances
        return all(d[i + 1] <= d[i] + 1e-12 for i in range(len(d) - 1))


def _eval_grid(dist: WeightDistribution) -> np.ndarray:
    """Points on which to compare CDFs; straddles atoms, samples the body."""
    pts: list[float] = []
    av, _ = dist.atoms()
    for a in av:
        pts.extend([a * (1 - 1e-9), a, a * (1 + 1e-9)])
    if dist.has_density:
        qs = np.linspace(1e-4, 1.0 - 1e-4, 400)
        pts.extend(dist.quantile_strict(q) for q in qs)
    else:
        v = dist.values
        pts.extend(0.5 * (v[:-1] + v[1:]))
        pts.append(float(v[-1]) * 2.0)
    return np.unique(np.asarray(pts, dtype=np.float64))


def check_regularity(ws_family: Callable[[int], WeightSequence],
                     dist: WeightDistribution,
                     n_grid: Sequence[int],
                     tail_exponent_window: tuple[float, float] | None = None,
                     ) -> RegularityReport:
    """Report sup |F_n - F| on a grid, |E W_n - d|, and the x0 lower bound.

    ``ws_family`` maps n to the weight sequence at that size.  Distances are
    expected (not asserted) to decrease along ``n_grid``.  When the law is a
    power law, the best-fit tail sandwich constants (c1, c2) over the window
    [x0, max weight] are reported as well.
    """
    if len(n_grid) < 2:
        raise ValueError("need at least two n values")
    grid = _eval_grid(dist)
    sups, gaps, minws = [], [], []
    best_c = None
    d = dist.mean
    for n in n_grid:
        ws = ws_family(int(n))
        fn = empirical_cdf(ws, grid)
        f = np.array([dist.cdf(x) for x in grid])
        sups.append(float(np.max(np.abs(fn - f))))
        gaps.append(abs(ws.mean_weight - d))
        minws.append(ws.min_weight)
        if dist.kind == "power_law":
            # ratio (1 - F_n(x)) / x^(1-beta) over the body of the data
            x = ws.weights[(ws.weights >= dist.x0) & (ws.weights < ws.max_weight)]
            if x.size:
                sf_n = 1.0 - empirical_cdf(ws, x)
                ratio = sf_n / x ** (1.0 - dist.beta)
                ratio = ratio[ratio > 0]
                if ratio.size:
                    best_c = (float(ratio.min()), float(ratio.max()))
    x0 = dist.min_support
    return RegularityReport(
        ns=tuple(int(n) for n in n_grid),
        sup_distances=tuple(sups),
        mean_gaps=tuple(gaps),
        min_weights=tuple(minws),
        x0=x0,
        min_weight_ok=all(mw >= x0 - 1e-12 for mw in minws),
        best_tail_constants=best_c,
    )
