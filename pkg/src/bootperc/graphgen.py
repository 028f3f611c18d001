"""Samplers for product-weight random graphs and their monotone couplings.

Each unordered pair {i, j} appears independently with probability
min(w_i * w_j / normalizer, 1); the normalizer defaults to the weight sum
of the sequence itself, and the primed variant takes it as an explicit
argument (used when a modified sequence keeps the original normalizer).

The fast sampler walks sorted weights with geometric skips and per-pair
thinning (expected O(n + m)); a quadratic Bernoulli sampler over all
pairs is kept as the law oracle for tests.  A coupled sampler produces a
dominated subgraph pair from shared randomness and a replayable
transcript.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .weights import WeightSequence

__all__ = [
    "SparseGraph",
    "CouplingTranscript",
    "sample_chung_lu",
    "sample_chung_lu_prime",
    "sample_coupled_minus",
    "naive_chung_lu",
    "edge_probability",
    "expected_degree_report",
]

_MAGIC = b"CLG1"


# ---------------------------------------------------------------------------
# Graph container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseGraph:
    """Immutable compressed adjacency; indices within each row are sorted."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    m: int

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def mean_degree(self) -> float:
        return 2.0 * self.m / self.n if self.n else 0.0

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        k = np.searchsorted(row, v)
        return bool(k < row.size and row[k] == v)

    def edge_array(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with u < v."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def validate(self) -> None:
        """Structural scan: symmetry, no loops, no multi-edges."""
        if self.indices.size != 2 * self.m:
            raise AssertionError("index count does not match edge count")
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        if np.any(src == self.indices):
            raise AssertionError("self-loop present")
        for v in range(self.n):
            row = self.neighbors(v)
            if row.size > 1 and np.any(np.diff(row) <= 0):
                raise AssertionError("row not strictly sorted (multi-edge?)")
        fwd = set(map(tuple, np.column_stack([src, self.indices]).tolist()))
        for a, b in list(fwd):
            if (b, a) not in fwd:
                raise AssertionError("adjacency not symmetric")

    # -- serialization -------------------------------------------------------

    def save_edge_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("u,v\n")
            for u, v in self.edge_array():
                fh.write(f"{u},{v}\n")

    def save_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQ", self.n, self.m))
            fh.write(self.indptr.astype("<u8").tobytes())
            fh.write(self.indices.astype("<u8").tobytes())

    @staticmethod
    def load_binary(path) -> "SparseGraph":
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise ValueError("not a CLG1 graph file")
            n, m = struct.unpack("<QQ", fh.read(16))
            indptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<u8").astype(np.int64)
            indices = np.frombuffer(fh.read(8 * 2 * m), dtype="<u8").astype(np.int64)
        return SparseGraph(n=int(n), indptr=indptr, indices=indices, m=int(m))


def _csr_from_edges(n: int, eu: np.ndarray, ev: np.ndarray) -> SparseGraph:
    m = eu.size
    src = np.concatenate([eu, ev])
    dst = np.concatenate([ev, eu])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    counts = np.bincount(src, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return SparseGraph(n=n, indptr=indptr, indices=dst.astype(np.int64), m=int(m))


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def edge_probability(wi: float, wj: float, normalizer: float) -> float:
    return min(wi * wj / normalizer, 1.0)


def _kernel_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def _sample_edges(weights: np.ndarray, normalizer: float,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Run the skip sampler on descending weights; retries on buffer overflow."""
    n = weights.size
    if n < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    order = np.argsort(-weights, kind="stable")
    w_desc = np.ascontiguousarray(weights[order])
    total = float(weights.sum())
    est = total * total / (2.0 * normalizer)
    cap = int(est + 8.0 * np.sqrt(est + 1.0)) + 1024
    seed = _kernel_seed(rng)
    while True:
        out_u = np.empty(cap, dtype=np.int64)
        out_v = np.empty(cap, dtype=np.int64)
        cnt, overflow = _kernels.sample_pairs_skip(w_desc, normalizer, seed,
                                                   out_u, out_v)
        if not overflow:
            break
        cap *= 2  # same seed: the kernel replays the identical stream
    eu = order[out_u[:cnt]]
    ev = order[out_v[:cnt]]
    return eu.astype(np.int64), ev.astype(np.int64)


def sample_chung_lu(ws: WeightSequence, rng: np.random.Generator) -> SparseGraph:
    """One graph with pair probabilities min(w_i w_j / total_weight, 1)."""
    eu, ev = _sample_edges(ws.weights, ws.total_weight, rng)
    return _csr_from_edges(ws.n, eu, ev)


def sample_chung_lu_prime(new_ws: WeightSequence, normalizer: float,
                          rng: np.random.Generator) -> SparseGraph:
    """Same family but with an externally fixed normalizer."""
    if normalizer <= 0:
        raise ValueError("normalizer must be positive")
    eu, ev = _sample_edges(new_ws.weights, normalizer, rng)
    return _csr_from_edges(new_ws.n, eu, ev)


def naive_chung_lu(ws: WeightSequence, rng: np.random.Generator,
                   normalizer: float | None = None) -> SparseGraph:
    """Quadratic per-pair Bernoulli sampler; the law oracle for tests."""
    n = ws.n
    norm = ws.total_weight if normalizer is None else normalizer
    iu, ju = np.triu_indices(n, k=1)
    p = np.minimum(ws.weights[iu] * ws.weights[ju] / norm, 1.0)
    keep = rng.random(p.size) < p
    return _csr_from_edges(n, iu[keep].astype(np.int64), ju[keep].astype(np.int64))


# ---------------------------------------------------------------------------
# Monotone coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingTranscript:
    """Seed schedule sufficient to regenerate a coupled graph pair bit-exactly."""

    graph_seed: int
    thin_seed: int
    normalizer: float
    n: int

    def replay(self, ws: WeightSequence, minus_ids: np.ndarray,
               minus_weights: np.ndarray) -> tuple[SparseGraph, SparseGraph]:
        g, g_minus, _ = _coupled_minus_impl(ws, minus_ids, minus_weights,
                                            self.graph_seed, self.thin_seed,
                                            self.normalizer)
        return g, g_minus


def _coupled_minus_impl(ws, minus_ids, minus_weights, graph_seed, thin_seed,
                        normalizer):
    n = ws.n
    rng_g = np.random.default_rng(graph_seed)
    eu, ev = _sample_edges(ws.weights, normalizer, rng_g)
    wmap = np.full(n, -1.0)
    wmap[minus_ids] = minus_weights
    wu, wv = wmap[eu], wmap[ev]
    present = (wu > 0) & (wv > 0)
    p_orig = np.minimum(ws.weights[eu] * ws.weights[ev] / normalizer, 1.0)
    p_minus = np.minimum(wu * wv / normalizer, 1.0)
    rng_t = np.random.default_rng(thin_seed)
    draws = rng_t.random(eu.size)
    keep = present & (draws * p_orig < p_minus)
    mu = np.searchsorted(minus_ids, eu[keep])
    mv = np.searchsorted(minus_ids, ev[keep])
    g = _csr_from_edges(n, eu, ev)
    g_minus = _csr_from_edges(minus_ids.size, mu.astype(np.int64),
                              mv.astype(np.int64))
    return g, g_minus, (eu, ev)


def sample_coupled_minus(ws: WeightSequence, minus_ids: np.ndarray,
                         minus_weights: np.ndarray, rng: np.random.Generator,
                         normalizer: float | None = None,
                         ) -> tuple[SparseGraph, SparseGraph, CouplingTranscript]:
    """Sample G and a pointwise-dominated subgraph on a vertex subset.

    ``minus_ids`` (sorted original vertex ids) carry ``minus_weights`` with
    w_minus <= w pointwise; both graphs share the normalizer, so every
    minus edge probability is at most the original one and a per-edge
    conditional coin realises the inclusion CL'(minus) within CL(w).
    The minus graph is returned in the compacted index space of
    ``minus_ids``; the transcript replays both graphs bit-exactly.
    """
    minus_ids = np.asarray(minus_ids, dtype=np.int64)
    minus_weights = np.asarray(minus_weights, dtype=np.float64)
    if minus_ids.size != minus_weights.size:
        raise ValueError("minus_ids and minus_weights must align")
    if np.any(np.diff(minus_ids) <= 0):
        raise ValueError("minus_ids must be sorted and unique")
    if np.any(minus_weights > ws.weights[minus_ids] + 1e-12):
        raise ValueError("minus weights must be dominated pointwise")
    norm = ws.total_weight if normalizer is None else float(normalizer)
    graph_seed = _kernel_seed(rng)
    thin_seed = _kernel_seed(rng)
    g, g_minus, _ = _coupled_minus_impl(ws, minus_ids, minus_weights,
                                        graph_seed, thin_seed, norm)
    transcript = CouplingTranscript(graph_seed=graph_seed, thin_seed=thin_seed,
                                    normalizer=norm, n=ws.n)
    return g, g_minus, transcript


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def expected_degree_report(ws: WeightSequence, g: SparseGraph) -> list[dict]:
    """Per weight class: observed mean degree against the model expectation.

    The expectation subtracts the excluded self-pair; ``sigma`` is a
    conservative standard error for the class mean (within-class edges
    contribute twice to the degree sum).
    """
    degs = g.degrees
    rows = []
    for w in np.unique(ws.weights):
        mask = ws.weights == w
        cnt = int(mask.sum())
        observed = float(degs[mask].mean())
        expected = float(
            np.minimum(w * ws.weights / ws.total_weight, 1.0).sum()
            - min(w * w / ws.total_weight, 1.0))
        sigma = float(np.sqrt(4.0 * max(expected, 1e-12) / cnt))
        rows.append({"weight": float(w), "count": cnt, "mean_degree": observed,
                     "expected_degree": expected, "sigma": sigma})
    return rows
