"""Threshold-r infection on fixed graphs and on sequentially exposed ones.

``run_bootstrap`` iterates the deterministic rule (an inactive vertex with
at least r active neighbors activates, permanently) to its unique minimal
fixed point.  The default engine is queue-based with per-vertex counters;
a synchronous-rounds engine is kept for confluence checks and both carry
round indices.

``run_sequential_exposure`` reveals a class-structured random graph one
infected vertex at a time, tracking the state vector
(u, w_U, counts-by-class-and-mark) whose n-scaled trajectory the fluid
limit approximates.  Marks for a whole class cell are drawn as one
binomial, which matches per-vertex coins in distribution because only
counts are tracked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graphgen import SparseGraph
from .weights import WeightSequence

__all__ = [
    "PercolationResult",
    "PercolationTrajectory",
    "DeviationReport",
    "run_bootstrap",
    "run_bootstrap_sync",
    "seed_bernoulli",
    "verify_fixed_point",
    "run_sequential_exposure",
    "deviation_report",
]


# ---------------------------------------------------------------------------
# Bootstrap percolation on a materialised graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PercolationResult:
    active: np.ndarray            # bool mask over vertices
    rounds: int
    per_round_sizes: np.ndarray   # [#seeds, wave_1, wave_2, ...]
    r: int

    @property
    def size(self) -> int:
        return int(self.active.sum())

    @property
    def final_ids(self) -> np.ndarray:
        return np.flatnonzero(self.active)


def _clean_seeds(n: int, seeds) -> np.ndarray:
    s = np.unique(np.asarray(seeds, dtype=np.int64))
    if s.size and (s[0] < 0 or s[-1] >= n):
        raise ValueError("seed vertex id out of range")
    return s


def run_bootstrap(g: SparseGraph, seeds, r: int,
                  frozen: np.ndarray | None = None) -> PercolationResult:
    """Queue-based propagation to the minimal fixed point containing seeds.

    ``frozen`` marks vertices that never activate (they still count as
    neighbors once infected); seeds listed as frozen stay active.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    s = _clean_seeds(g.n, seeds)
    active = np.zeros(g.n, dtype=np.bool_)
    per_round = np.zeros(g.n + 2, dtype=np.int64)
    fr = np.empty(0, dtype=np.uint8) if frozen is None else \
        np.ascontiguousarray(frozen, dtype=np.uint8)
    rounds = _kernels.bootstrap_queue(g.indptr, g.indices, s, r, fr,
                                      active, per_round)
    return PercolationResult(active=active, rounds=int(rounds),
                             per_round_sizes=per_round[:rounds + 1].copy(), r=r)


def run_bootstrap_sync(g: SparseGraph, seeds, r: int,
                       frozen: np.ndarray | None = None) -> PercolationResult:
    """Synchronous-waves reference engine (numpy, O(m) per round)."""
    if r < 1:
        raise ValueError("r must be at least 1")
    s = _clean_seeds(g.n, seeds)
    active = np.zeros(g.n, dtype=np.bool_)
    active[s] = True
    src = np.repeat(np.arange(g.n, dtype=np.int64), g.degrees)
    sizes = [int(s.size)]
    rounds = 0
    while True:
        counts = np.bincount(g.indices[active[src]], minlength=g.n)
        newly = (~active) & (counts >= r)
        if frozen is not None:
            newly &= ~frozen.astype(bool)
        k = int(newly.sum())
        if k == 0:
            break
        active |= newly
        rounds += 1
        sizes.append(k)
    return PercolationResult(active=active, rounds=rounds,
                             per_round_sizes=np.array(sizes, dtype=np.int64), r=r)


def seed_bernoulli(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Vertex ids included independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return np.flatnonzero(rng.random(n) < p).astype(np.int64)


def verify_fixed_point(g: SparseGraph, seeds, result: PercolationResult) -> bool:
    """Post-hoc certificate: seeds kept, activations justified, fixed point.

    Frozen-run results fail the third clause by design, so pass only
    unfrozen runs here.
    """
    s = _clean_seeds(g.n, seeds)
    active = result.active
    if not np.all(active[s]):
        return False
    src = np.repeat(np.arange(g.n, dtype=np.int64), g.degrees)
    counts = np.bincount(g.indices[active[src]], minlength=g.n)
    seed_mask = np.zeros(g.n, dtype=bool)
    seed_mask[s] = True
    if np.any(active & ~seed_mask & (counts < result.r)):
        return False
    if np.any(~active & (counts >= result.r)):
        return False
    return True


# ---------------------------------------------------------------------------
# Sequential exposure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PercolationTrajectory:
    """Per-step state records (t, u, w_U, c[i, j]) of one exposure run."""

    u: np.ndarray                 # (steps+1,), infected-unexposed count
    w_u: np.ndarray               # (steps+1,), their total weight
    c: np.ndarray                 # (steps+1, p, r), uninfected counts by marks
    levels: np.ndarray            # class weights W_i
    class_counts: np.ndarray
    seeded_counts: np.ndarray
    heavy_count: int
    n_ref: int                    # scaling size for fluid-limit comparison
    final_count: int              # = number of steps = |final infected set|

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.u.size, dtype=np.int64)

    def save_csv(self, path) -> None:
        p, r = self.c.shape[1], self.c.shape[2]
        heads = ["t", "u", "w_U"] + [f"c_{i+1}_{j}" for i in range(p) for j in range(r)]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(heads) + "\n")
            flat = self.c.reshape(self.c.shape[0], -1)
            for k in range(self.u.size):
                row = [str(k), str(int(self.u[k])), repr(float(self.w_u[k]))]
                row += [str(int(x)) for x in flat[k]]
                fh.write(",".join(row) + "\n")


def run_sequential_exposure(ws: WeightSequence, normalizer: float, r: int,
                            rng: np.random.Generator,
                            p: float | None = None,
                            seeded_counts: np.ndarray | None = None,
                            always_infected: np.ndarray | None = None,
                            n_ref: int | None = None) -> PercolationTrajectory:
    """Run the exposure process on a class-structured weight sequence.

    Vertices listed in ``always_infected`` start in the unexposed-infected
    pool with their own weights (the externally infected heavy set); the
    remaining vertices must carry class labels, and either ``p`` (per-class
    binomial seeding) or explicit per-class ``seeded_counts`` decides the
    rest of the initial infection.  Terminates when the pool empties; the
    final infected count equals the number of steps executed.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    if ws.class_of is None:
        raise ValueError("sequential exposure needs a class-structured sequence")
    always = np.empty(0, dtype=np.int64) if always_infected is None else \
        np.unique(np.asarray(always_infected, dtype=np.int64))
    heavy_w = ws.weights[always].astype(np.float64)
    mask = np.ones(ws.n, dtype=bool)
    mask[always] = False
    cls = ws.class_of[mask]
    n_classes = int(cls.max()) + 1 if cls.size else 0
    counts = np.bincount(cls, minlength=n_classes).astype(np.int64)
    levels = np.zeros(n_classes, dtype=np.float64)
    for i in range(n_classes):
        sel = ws.weights[mask][cls == i]
        if sel.size:
            if np.ptp(sel) > 1e-9 * max(1.0, sel[0]):
                raise ValueError(f"class {i} weights are not constant")
            levels[i] = sel[0]
    if seeded_counts is None:
        if p is None:
            raise ValueError("give either p or seeded_counts")
        if not 0.0 <= p < 1.0:
            raise ValueError("p must lie in [0, 1)")
        seeded = rng.binomial(counts, p).astype(np.int64)
    else:
        seeded = np.asarray(seeded_counts, dtype=np.int64)
        if seeded.shape != counts.shape or np.any(seeded > counts):
            raise ValueError("seeded_counts must be per-class and feasible")
    max_steps = int(counts.sum() + heavy_w.size)
    rec_u = np.zeros(max_steps + 1, dtype=np.int64)
    rec_wu = np.zeros(max_steps + 1, dtype=np.float64)
    rec_c = np.zeros((max_steps + 1, n_classes * r), dtype=np.int64)
    seed = int(rng.integers(0, 2**63 - 1))
    steps = _kernels.sequential_exposure(levels, counts, seeded, heavy_w,
                                         float(normalizer), r, seed,
                                         rec_u, rec_wu, rec_c)
    steps = int(steps)
    return PercolationTrajectory(
        u=rec_u[:steps + 1].copy(),
        w_u=rec_wu[:steps + 1].copy(),
        c=rec_c[:steps + 1].reshape(steps + 1, n_classes, r).copy(),
        levels=levels, class_counts=counts, seeded_counts=seeded,
        heavy_count=int(heavy_w.size),
        n_ref=int(n_ref if n_ref is not None else ws.n),
        final_count=steps)


# ---------------------------------------------------------------------------
# Trajectory vs fluid limit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationReport:
    per_coordinate: dict
    max_deviation: float
    overlap_truncated: bool
    compared_steps: int


def deviation_report(traj: PercolationTrajectory, sol,
                     n: int | None = None) -> DeviationReport:
    """Sup-norm gaps between the n-scaled trajectory and the fluid limit.

    The limit curves are linearly interpolated at tau = t/n.  All
    coordinates are compared on a dimensionless scale: counts divided by
    n, and the pool weight additionally divided by the mean weight d (it
    would otherwise range over [0, d] and a uniform tolerance across
    coordinates would be meaningless).  Steps beyond the solved domain are
    dropped and flagged; the comparison then covers the overlap only.
    """
    n = traj.n_ref if n is None else int(n)
    if traj.c.shape[1] != sol.gamma.shape[1] or traj.c.shape[2] != sol.gamma.shape[2]:
        raise ValueError("class structure of trajectory and solution differ")
    tau_sim = traj.t / n
    tau_max = sol.tau[-1]
    inside = tau_sim <= tau_max + 1e-12
    truncated = not bool(inside.all())
    k = int(inside.sum())
    tau_cmp = tau_sim[:k]
    per: dict[str, float] = {}
    per["u"] = float(np.max(np.abs(traj.u[:k] / n - np.interp(tau_cmp, sol.tau, sol.nu))))
    per["w_U_over_d"] = float(np.max(np.abs(
        traj.w_u[:k] / (n * sol.d) - np.interp(tau_cmp, sol.tau, sol.mu_u) / sol.d)))
    p, r = traj.c.shape[1], traj.c.shape[2]
    for i in range(p):
        for j in range(r):
            ref = np.interp(tau_cmp, sol.tau, sol.gamma[:, i, j])
            per[f"c_{i+1}_{j}"] = float(np.max(np.abs(traj.c[:k, i, j] / n - ref)))
    return DeviationReport(per_coordinate=per,
                           max_deviation=float(max(per.values())),
                           overlap_truncated=truncated,
                           compared_steps=k)
