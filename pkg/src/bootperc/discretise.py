"""Finite-level approximations of a weight law, from below and from above.

A partition splits the light part of the support (below the tail cutoff
C_gamma) into cells of small law mass, isolating atoms as their own
cells; quantile cells handle the continuous part.  Rounding every light
weight to its cell's lower (upper) edge and replacing the heavy tail by
a controlled set of cutoff-weight vertices yields two sequences that
sandwich the original graph between a dominated subgraph and a
dominating one, with quantitative closeness of CDFs and means.

The heavy tail follows a mass rule: the heavy set is the closed tail
[C, inf) with the largest attainable mass not exceeding the requested
gamma.  For continuous laws this attains gamma exactly; for atomic laws
the attained value snaps to an achievable tail mass (possibly zero, in
which case the discretisation is exact and two-sided bounds coincide).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graphgen import SparseGraph, sample_chung_lu_prime, sample_coupled_minus
from .percolation import run_bootstrap, seed_bernoulli
from .weights import WeightDistribution, WeightSequence, c_gamma as dist_c_gamma, \
    w_gamma as dist_w_gamma

__all__ = [
    "PartitionCell",
    "Partition",
    "Discretisation",
    "DiscretisedSequence",
    "build_partition",
    "discretise_minus",
    "discretise_plus",
    "build_discretisation",
    "check_f_convergence",
    "FConvergenceReport",
    "sandwich_experiment",
    "SandwichResult",
]


# ---------------------------------------------------------------------------
# Partition of the light support
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionCell:
    lo: float
    hi: float
    mass: float
    is_atom: bool   # atom cells have lo == hi and carry, not spread, their mass


@dataclass(frozen=True)
class Partition:
    cells: tuple[PartitionCell, ...]
    gamma_requested: float
    gamma: float           # attained heavy-tail mass (0 when the tail is empty)
    c_gamma: float         # heavy threshold; max light support point if empty
    eps_ell: float
    ell: int
    dist: WeightDistribution

    @property
    def lows(self) -> np.ndarray:
        return np.array([c.lo for c in self.cells])

    @property
    def highs(self) -> np.ndarray:
        return np.array([c.hi for c in self.cells])

    @property
    def masses(self) -> np.ndarray:
        return np.array([c.mass for c in self.cells])

    @property
    def heavy_empty(self) -> bool:
        return self.gamma == 0.0

    def map_weights(self, w: np.ndarray) -> np.ndarray:
        """Cell index per weight; -1 marks heavy (at or above the threshold)."""
        w = np.asarray(w, dtype=np.float64)
        lows = self.lows
        idx = np.searchsorted(lows, w * (1 + 1e-12), side="right") - 1
        out = np.full(w.shape, -1, dtype=np.int64)
        in_light = idx >= 0
        for k in np.flatnonzero(in_light):
            cell = self.cells[idx[k]]
            x = w[k]
            tol = 1e-9 * max(1.0, abs(cell.lo))
            if cell.is_atom:
                if abs(x - cell.lo) <= tol:
                    out[k] = idx[k]
            elif cell.lo - tol <= x < cell.hi:
                out[k] = idx[k]
        bad = (out < 0) & (w < self.c_gamma * (1 - 1e-9))
        if np.any(bad):
            raise ValueError(
                "weights below the partitioned support; the sequence does not "
                "match the law this partition was built for")
        return out

    def validate(self) -> None:
        masses = self.masses
        if abs(masses.sum() - (1.0 - self.gamma)) > 1e-9:
            raise AssertionError("cell masses must sum to 1 - gamma")
        for c in self.cells:
            interior = self.dist.cdf(c.hi * (1 - 1e-12)) - self.dist.cdf(c.lo)
            if not c.is_atom and interior >= self.eps_ell + 1e-12:
                raise AssertionError("cell interior mass exceeds eps_ell")


def _eps_ell_from_atoms(dist: WeightDistribution, c_gam: float, ell: int) -> float:
    """max(1/ell, tail of ranked gap+jump sizes beyond the ell largest)."""
    av, _ = dist.atoms()
    pts = sorted(float(a) for a in av if dist.min_support <= a < c_gam)
    x0 = dist.min_support
    bounds = [x0] + pts + [c_gam]
    sizes = []
    for i in range(len(bounds) - 1):
        length = bounds[i + 1] - bounds[i]
        jump = dist.cdf(bounds[i + 1]) - dist.cdf(bounds[i + 1] * (1 - 1e-15)) \
            if bounds[i + 1] < c_gam else 0.0
        sizes.append(length + jump)
    distinct = sorted(set(round(s, 15) for s in sizes), reverse=True)
    tail = 0.0
    for j, k in enumerate(distinct, start=1):
        if j > ell:
            tail += k * sum(1 for s in sizes if round(s, 15) == k)
    return max(1.0 / ell, tail)


def build_partition(dist: WeightDistribution, gamma: float, ell: int) -> Partition:
    """Partition the light support into cells of law mass below eps_ell.

    Atoms become their own cells; continuous stretches split into
    equal-mass quantile cells strictly below 1/ell each.  When the
    requested gamma is not an attainable tail mass (atomic laws), the
    nearest attainable value from below is used and reported.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if ell < 1:
        raise ValueError("ell must be at least 1")

    if dist.kind == "power_law":
        th = dist_c_gamma(dist, gamma)
        cutoff = dist.cutoff
        if cutoff is None or th < cutoff:
            att = dist.prob_geq(th)
            heavy_cut, att_gamma = th, att
            light_atoms: list[tuple[float, float]] = []
            cont_hi = th
        else:
            atom = dist.c * cutoff ** (1.0 - dist.beta)
            if atom <= gamma + 1e-15:
                heavy_cut, att_gamma = cutoff, atom
                light_atoms = []
                cont_hi = cutoff
            else:
                heavy_cut, att_gamma = cutoff, 0.0
                light_atoms = [(cutoff, atom)]
                cont_hi = cutoff
        cells: list[PartitionCell] = []
        x0 = dist.x0
        cont_mass = dist.cdf(cont_hi * (1 - 1e-15))
        if cont_hi > x0 and cont_mass > 0:
            k = int(math.floor(cont_mass * ell)) + 1
            qs = cont_mass * np.arange(k + 1) / k
            edges = (dist.c / (1.0 - qs)) ** (1.0 / (dist.beta - 1.0))
            edges[0], edges[-1] = x0, cont_hi
            for i in range(k):
                cells.append(PartitionCell(float(edges[i]), float(edges[i + 1]),
                                           cont_mass / k, False))
        for a, m in light_atoms:
            cells.append(PartitionCell(a, a, m, True))
        eps = _eps_ell_from_atoms(dist, heavy_cut, ell)
        return Partition(tuple(cells), gamma, float(att_gamma), float(heavy_cut),
                         eps, ell, dist)

    # atomic laws: pick the largest attainable closed-tail mass <= gamma
    vals, probs = dist.values, dist.probs
    tails = np.cumsum(probs[::-1])[::-1]   # tails[k] = P(W >= vals[k])
    eligible = np.flatnonzero(tails <= gamma + 1e-15)
    if eligible.size:
        k0 = int(eligible[0])
        att_gamma = float(tails[k0])
        heavy_cut = float(vals[k0])
        light_vals, light_probs = vals[:k0], probs[:k0]
    else:
        att_gamma = 0.0
        heavy_cut = float(vals[-1])
        light_vals, light_probs = vals, probs
    cells = tuple(PartitionCell(float(v), float(v), float(m), True)
                  for v, m in zip(light_vals, light_probs))
    eps = _eps_ell_from_atoms(dist, heavy_cut, ell)
    return Partition(cells, gamma, att_gamma, heavy_cut, eps, ell, dist)


# ---------------------------------------------------------------------------
# Finite-n discretised sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscretisedSequence:
    """A rounded weight sequence plus its always-infected heavy set."""

    sequence: WeightSequence
    vertex_ids: np.ndarray        # original vertex id per new vertex (-1: synthetic)
    always_infected: np.ndarray   # new-space ids, initially infected by construction
    side: str                     # "minus" | "plus"
    c_gamma: float
    gamma: float
    flags: tuple[str, ...] = field(default_factory=tuple)
    k_minus: int = 0
    seeded_heavy_orig: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    @property
    def n(self) -> int:
        return self.sequence.n


def discretise_minus(ws: WeightSequence, partition: Partition, p: float,
                     rng: np.random.Generator) -> DiscretisedSequence:
    """Round light weights down to cell edges; thin the heavy tail to k_minus
    seeded vertices of weight exactly C_gamma.

    k_minus = floor(p * |heavy| - n^(2/3)); when that is not positive the
    heavy part is dropped entirely and the result flagged vacuous (the
    lower bound still holds, it is just weaker).  The retained heavy
    vertices are the lexicographically smallest seeded ones, so the same
    Bernoulli marks can seed the original process.
    """
    cell_idx = partition.map_weights(ws.weights)
    light = np.flatnonzero(cell_idx >= 0)
    heavy = np.flatnonzero(cell_idx < 0)
    lows = partition.lows
    flags: list[str] = []
    marks = rng.random(heavy.size) < p
    seeded_heavy = heavy[marks]
    k_minus = int(math.floor(p * heavy.size - ws.n ** (2.0 / 3.0)))
    if heavy.size and k_minus <= 0:
        flags.append("lower_bound_vacuous")
        chosen = np.empty(0, dtype=np.int64)
        k_minus = 0
    else:
        if seeded_heavy.size < k_minus:
            flags.append("heavy_seeds_undersupplied")
        chosen = seeded_heavy[:min(k_minus, seeded_heavy.size)]
    new_w = np.concatenate([lows[cell_idx[light]],
                            np.full(chosen.size, partition.c_gamma)])
    classes = np.concatenate([cell_idx[light],
                              np.full(chosen.size, len(partition.cells),
                                      dtype=np.int64)])
    ids = np.concatenate([light, chosen]).astype(np.int64)
    seq = WeightSequence(new_w, class_of=classes)
    always = np.arange(light.size, light.size + chosen.size, dtype=np.int64)
    return DiscretisedSequence(
        sequence=seq, vertex_ids=ids, always_infected=always, side="minus",
        c_gamma=partition.c_gamma, gamma=partition.gamma, flags=tuple(flags),
        k_minus=k_minus, seeded_heavy_orig=seeded_heavy.astype(np.int64))


def discretise_plus(ws: WeightSequence, partition: Partition) -> DiscretisedSequence:
    """Round light weights up; replicate the heavy tail at weight 2*C_gamma.

    A heavy vertex of weight w >= 2C becomes 2*floor(w/C) copies of weight
    2C; one in [C, 2C) stays a single copy at its own weight.  The
    fractional parts are made up by ceil(2 * sum frac) filler vertices at
    2C.  All copies and fillers are always infected.
    """
    cell_idx = partition.map_weights(ws.weights)
    light = np.flatnonzero(cell_idx >= 0)
    heavy = np.flatnonzero(cell_idx < 0)
    highs = partition.highs
    C = partition.c_gamma
    new_w = [highs[cell_idx[light]]]
    ids = [light.astype(np.int64)]
    eps_sum = 0.0
    copy_w: list[float] = []
    copy_id: list[int] = []
    for j in heavy:
        w = ws.weights[j]
        if w >= 2.0 * C:
            reps = 2 * int(math.floor(w / C))
            copy_w.extend([2.0 * C] * reps)
            copy_id.extend([int(j)] * reps)
            eps_sum += w / C - math.floor(w / C)
        else:
            copy_w.append(float(w))
            copy_id.append(int(j))
    R = int(math.ceil(2.0 * eps_sum)) if eps_sum > 0 else 0
    copy_w.extend([2.0 * C] * R)
    copy_id.extend([-1] * R)
    n_light = light.size
    all_w = np.concatenate([new_w[0], np.asarray(copy_w, dtype=np.float64)])
    all_ids = np.concatenate([ids[0], np.asarray(copy_id, dtype=np.int64)])
    classes = np.concatenate([cell_idx[light],
                              np.full(len(copy_w), len(partition.cells),
                                      dtype=np.int64)])
    order = np.argsort(all_w, kind="stable")
    seq = WeightSequence(all_w[order], class_of=classes[order])
    ids_sorted = all_ids[order]
    always = np.flatnonzero(order >= n_light).astype(np.int64)
    return DiscretisedSequence(
        sequence=seq, vertex_ids=ids_sorted, always_infected=always,
        side="plus", c_gamma=C, gamma=partition.gamma,
        flags=("fillers", ) if R else tuple(), k_minus=0)


# ---------------------------------------------------------------------------
# Limit-side description (feeds the fluid-limit machinery)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Discretisation:
    """Limiting class structure: levels, fractions, and the heavy part."""

    gamma: float
    levels: np.ndarray
    fractions: np.ndarray
    gamma_prime: float        # limit count fraction of the heavy part
    w_gamma_prime: float      # limit weight fraction of the heavy part
    c_gamma: float
    side: str
    d_ref: float              # mean of the law being approximated

    def validate(self, dist: WeightDistribution) -> None:
        if abs(self.fractions.sum() - (1.0 - self.gamma)) > 1e-12:
            raise AssertionError("fractions must sum to 1 - gamma")
        if np.any(self.levels > self.c_gamma * (1 + 1e-12)):
            raise AssertionError("levels must not exceed C_gamma")
        if np.any(self.levels < dist.min_support * (1 - 1e-12)):
            raise AssertionError("levels must respect the support floor")
        if self.gamma > 0.0:
            wg = dist.tail_mean(self.c_gamma, closed=True)
            if not self.gamma_prime < self.gamma + 2.0 * wg / self.c_gamma:
                raise AssertionError("heavy count fraction bound violated")
            if not self.w_gamma_prime <= 5.0 * wg + 1e-12:
                raise AssertionError("heavy weight fraction bound violated")

    def to_json(self) -> str:
        return json.dumps({
            "gamma": self.gamma,
            "levels": [float(x) for x in self.levels],
            "fractions": [float(x) for x in self.fractions],
            "heavy": {"count_fraction": self.gamma_prime,
                      "weight_fraction": self.w_gamma_prime,
                      "side": self.side},
            "c_gamma": self.c_gamma,
            "d_ref": self.d_ref,
        }, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Discretisation":
        obj = json.loads(text)
        return Discretisation(
            gamma=float(obj["gamma"]),
            levels=np.asarray(obj["levels"], dtype=np.float64),
            fractions=np.asarray(obj["fractions"], dtype=np.float64),
            gamma_prime=float(obj["heavy"]["count_fraction"]),
            w_gamma_prime=float(obj["heavy"]["weight_fraction"]),
            c_gamma=float(obj["c_gamma"]),
            side=str(obj["heavy"]["side"]),
            d_ref=float(obj["d_ref"]))


def build_discretisation(partition: Partition, side: str,
                         p: float | None = None) -> Discretisation:
    """Limit object for one side of the sandwich.

    The minus side needs the seeding rate p: its heavy part keeps only the
    seeded share of the tail, all at weight C_gamma.  The plus side blows
    the tail up into weight-2C copies, with closed-form count and weight
    fractions.  With an empty heavy tail both sides coincide with the law
    restricted to its atoms (the exact case).
    """
    dist = partition.dist
    gam = partition.gamma
    C = partition.c_gamma
    if side == "minus":
        if p is None:
            raise ValueError("minus side needs the seeding rate p")
        levels = partition.lows
        gp = p * gam
        wp = p * gam * C
    elif side == "plus":
        levels = partition.highs
        if gam == 0.0:
            gp, wp = 0.0, 0.0
        else:
            p_band = dist.prob_geq(C) - dist.prob_geq(2.0 * C)
            w_band = dist.tail_mean(C, closed=True) - dist.tail_mean(2.0 * C, closed=True)
            w_top = dist.tail_mean(2.0 * C, closed=True)
            gp = p_band + 2.0 * w_top / C
            wp = w_band + 4.0 * w_top
    else:
        raise ValueError("side must be 'minus' or 'plus'")
    return Discretisation(
        gamma=gam, levels=np.asarray(levels, dtype=np.float64),
        fractions=partition.masses, gamma_prime=float(gp),
        w_gamma_prime=float(wp), c_gamma=C, side=side, d_ref=dist.mean)


# ---------------------------------------------------------------------------
# Quantitative convergence of the discretised CDFs
# ---------------------------------------------------------------------------

def _disc_cdf(disc: Discretisation, dist: WeightDistribution, x: float) -> float:
    """Limit CDF of the discretised sequence at x."""
    if disc.side == "minus":
        norm = 1.0 - disc.gamma + disc.gamma_prime
        total = float(disc.fractions[disc.levels <= x].sum())
        if x >= disc.c_gamma:
            total += disc.gamma_prime
        return total / norm if norm > 0 else 1.0
    norm = 1.0 - disc.gamma + disc.gamma_prime
    total = float(disc.fractions[disc.levels <= x].sum())
    C = disc.c_gamma
    if disc.gamma > 0.0 and x >= C:
        # single copies keep their own weights on [C, 2C)
        band_to_x = dist.prob_geq(C) - dist.prob_geq(min(x, 2.0 * C) * (1 + 1e-15))
        total += band_to_x
        if x >= 2.0 * C:
            p_band = dist.prob_geq(C) - dist.prob_geq(2.0 * C)
            total += disc.gamma_prime - p_band
    return total / norm if norm > 0 else 1.0


def _disc_mean(disc: Discretisation) -> float:
    norm = 1.0 - disc.gamma + disc.gamma_prime
    return (float(np.dot(disc.levels, disc.fractions)) + disc.w_gamma_prime) / norm


@dataclass(frozen=True)
class FConvergenceReport:
    ells: tuple[int, ...]
    sup_minus: tuple[float, ...]
    sup_plus: tuple[float, ...]
    mean_gap_minus: tuple[float, ...]
    mean_gap_plus: tuple[float, ...]
    sup_bound: float
    refined_sup_bound: float
    rho_bound: float
    L1: int | None
    gamma: float

    @property
    def bounds_satisfied(self) -> bool:
        ok = all(s < self.sup_bound for s in self.sup_minus + self.sup_plus)
        ok = ok and all(g < self.rho_bound for g in
                        self.mean_gap_minus + self.mean_gap_plus)
        return ok


def check_f_convergence(dist: WeightDistribution, gamma: float,
                        ells, p: float) -> FConvergenceReport:
    """Sup-norm and mean gaps of both discretisation sides, against bounds.

    The sup gap over [x0, C_gamma] is compared with 2(gamma + W_gamma/C);
    the mean gap with rho(gamma) = 2C P(W>2C) + 3 gamma C + 6 W_gamma
    + E[W; W>2C].  L1 is the smallest ell whose sup gaps clear the first
    bound; past it the refined bound 1.5 (gamma+ - gamma)/(1 - gamma +
    gamma+) is also reported.  For an exactly-representable law all gaps
    are zero and the bounds are vacuous.
    """
    ells = sorted(int(e) for e in ells)
    if len(ells) < 2:
        raise ValueError("need at least two ell values")
    sup_m, sup_p, gap_m, gap_p = [], [], [], []
    gamma_plus = 0.0
    part0 = build_partition(dist, gamma, ells[0])
    att = part0.gamma
    C = part0.c_gamma
    d = dist.mean
    for ell in ells:
        part = build_partition(dist, gamma, ell)
        dm = build_discretisation(part, "minus", p=p)
        dp = build_discretisation(part, "plus")
        gamma_plus = dp.gamma_prime
        grid: list[float] = [dist.min_support, C]
        for lv in np.concatenate([dm.levels, dp.levels]):
            grid.extend([lv * (1 - 1e-9), lv, lv * (1 + 1e-9)])
        av, _ = dist.atoms()
        for a in av:
            grid.extend([a * (1 - 1e-9), a])
        if dist.has_density:
            qs = np.linspace(1e-6, dist.cdf(C * (1 - 1e-12)) - 1e-9, 300)
            grid.extend((dist.c / (1.0 - qs)) ** (1.0 / (dist.beta - 1.0)))
        pts = np.unique([x for x in grid if dist.min_support <= x <= C])
        sm = max(abs(_disc_cdf(dm, dist, x) - dist.cdf(x)) for x in pts)
        sp = max(abs(_disc_cdf(dp, dist, x) - dist.cdf(x)) for x in pts)
        sup_m.append(float(sm))
        sup_p.append(float(sp))
        gap_m.append(abs(_disc_mean(dm) - d))
        gap_p.append(abs(_disc_mean(dp) - d))
    if att > 0.0:
        wg = dist.tail_mean(C, closed=True)
        sup_bound = 2.0 * (att + wg / C)
        rho = 2.0 * C * dist.sf(2.0 * C) + 3.0 * att * C + 6.0 * wg \
            + dist.tail_mean(2.0 * C, closed=False)
        refined = 1.5 * (gamma_plus - att) / (1.0 - att + gamma_plus)
    else:
        sup_bound, rho, refined = math.inf, math.inf, math.inf
    L1 = None
    for ell, sm, sp in zip(ells, sup_m, sup_p):
        if sm < sup_bound and sp < sup_bound:
            L1 = ell
            break
    return FConvergenceReport(
        ells=tuple(ells), sup_minus=tuple(sup_m), sup_plus=tuple(sup_p),
        mean_gap_minus=tuple(gap_m), mean_gap_plus=tuple(gap_p),
        sup_bound=float(sup_bound), refined_sup_bound=float(refined),
        rho_bound=float(rho), L1=L1, gamma=att)


# ---------------------------------------------------------------------------
# Sandwich experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SandwichResult:
    sizes_orig: np.ndarray
    sizes_minus: np.ndarray
    sizes_plus: np.ndarray
    subgraph_violations: int
    lower_violations: int
    vacuous_lower: bool
    upper_dominance_margin: float   # min over deciles of F_orig - F_plus + 4 sigma
    replicates: int

    @property
    def coupled_ok(self) -> bool:
        return self.subgraph_violations == 0 and self.lower_violations == 0

    @property
    def upper_dominance_ok(self) -> bool:
        return self.upper_dominance_margin >= 0.0


def _edgewise_subset(g_minus: SparseGraph, ids: np.ndarray,
                     g: SparseGraph) -> bool:
    for a, b in g_minus.edge_array():
        if not g.has_edge(int(ids[a]), int(ids[b])):
            return False
    return True


def sandwich_experiment(ws: WeightSequence, dist: WeightDistribution,
                        gamma: float, ell: int, p: float, r: int,
                        replicates: int, rng: np.random.Generator,
                        ) -> SandwichResult:
    """Run the three processes: original, coupled lower, independent upper.

    Per replicate the lower side shares randomness with the original (the
    minus graph is an edge subset and its seeds a subset, so its final
    size is a per-instance lower bound); the upper side is sampled
    independently and compared in distribution through decile-wise CDF
    dominance with a 4-sigma allowance.
    """
    partition = build_partition(dist, gamma, ell)
    plus = discretise_plus(ws, partition)
    norm = ws.total_weight
    sizes_o, sizes_m, sizes_p = [], [], []
    sub_viol = 0
    low_viol = 0
    vacuous = False
    cell_idx = partition.map_weights(ws.weights)
    light_ids = np.flatnonzero(cell_idx >= 0)
    for _ in range(replicates):
        minus = discretise_minus(ws, partition, p, rng)
        vacuous = vacuous or ("lower_bound_vacuous" in minus.flags)
        light_marks = light_ids[rng.random(light_ids.size) < p]
        seeds_orig = np.union1d(light_marks, minus.seeded_heavy_orig)
        g, g_minus, _ = sample_coupled_minus(
            ws, minus.vertex_ids, minus.sequence.weights, rng, normalizer=norm)
        res_o = run_bootstrap(g, seeds_orig, r)
        # every light vertex is retained by the minus construction
        pos = np.searchsorted(minus.vertex_ids, light_marks).astype(np.int64)
        seeds_minus = np.union1d(pos, minus.always_infected)
        res_m = run_bootstrap(g_minus, seeds_minus, r)
        if not _edgewise_subset(g_minus, minus.vertex_ids, g):
            sub_viol += 1
        if res_m.size > res_o.size:
            low_viol += 1
        sizes_o.append(res_o.size)
        sizes_m.append(res_m.size)
        g_plus = sample_chung_lu_prime(plus.sequence, norm, rng)
        plus_light = np.setdiff1d(
            np.arange(plus.n, dtype=np.int64), plus.always_infected)
        plus_marks = plus_light[rng.random(plus_light.size) < p]
        seeds_plus = np.union1d(plus_marks, plus.always_infected)
        res_p = run_bootstrap(g_plus, seeds_plus, r)
        sizes_p.append(res_p.size)
    sizes_o = np.asarray(sizes_o, dtype=np.int64)
    sizes_m = np.asarray(sizes_m, dtype=np.int64)
    sizes_p = np.asarray(sizes_p, dtype=np.int64)
    pooled = np.concatenate([sizes_o, sizes_p])
    margin = math.inf
    m = replicates
    for q in np.quantile(pooled, np.linspace(0.1, 0.9, 9)):
        f_o = float((sizes_o <= q).mean())
        f_p = float((sizes_p <= q).mean())
        pool = 0.5 * (f_o + f_p)
        sigma = math.sqrt(max(pool * (1 - pool), 1e-12) * (2.0 / m))
        margin = min(margin, f_o - f_p + 4.0 * sigma)
    return SandwichResult(
        sizes_orig=sizes_o, sizes_minus=sizes_m, sizes_plus=sizes_p,
        subgraph_violations=sub_viol, lower_violations=low_viol,
        vacuous_lower=vacuous, upper_dominance_margin=float(margin),
        replicates=replicates)
