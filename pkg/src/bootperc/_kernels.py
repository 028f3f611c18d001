"""Numba kernels for the hot paths: edge sampling, percolation, exposure.

Every kernel that consumes randomness is seeded explicitly at entry
(numba's nopython RNG state is thread-local, so concurrent replicates
with distinct seeds stay deterministic).  Kernels never allocate
unbounded memory; samplers report overflow so callers can retry with a
larger buffer and the same seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# probabilities below this are treated as zero inside a sampler row
_ROW_EPS = 1e-12


@njit(cache=True)
def sample_pairs_skip(w_desc, norm, seed, out_u, out_v):
    """Edge sampling for min(w_i*w_j/norm, 1) over all pairs, w nonincreasing.

    Walks each row i with geometric skips at the current upper bound q and
    thins the landed candidate by p_ij/q, which is exact because p_ij is
    nonincreasing along the row.  Runs of p_ij = 1 are emitted
    deterministically.  Returns (count, overflow).
    """
    np.random.seed(seed)
    n = w_desc.shape[0]
    cap = out_u.shape[0]
    cnt = 0
    for i in range(n - 1):
        wi = w_desc[i]
        j = i + 1
        q = wi * w_desc[j] / norm
        if q < _ROW_EPS:
            break  # all later rows are smaller still
        if q > 1.0:
            q = 1.0
        while j < n:
            if q >= 1.0:
                if cnt >= cap:
                    return cnt, True
                out_u[cnt] = i
                out_v[cnt] = j
                cnt += 1
                j += 1
                if j < n:
                    q = wi * w_desc[j] / norm
                    if q > 1.0:
                        q = 1.0
                continue
            if q < _ROW_EPS:
                break
            g = np.random.geometric(q)
            j2 = j + g - 1
            if j2 >= n:
                break
            pj = wi * w_desc[j2] / norm
            if np.random.random() * q < pj:
                if cnt >= cap:
                    return cnt, True
                out_u[cnt] = i
                out_v[cnt] = j2
                cnt += 1
            j = j2 + 1
            if j < n:
                q = wi * w_desc[j] / norm
                if q > 1.0:
                    q = 1.0
    return cnt, False


@njit(cache=True)
def bootstrap_queue(indptr, indices, seeds, r, frozen, active, per_round):
    """Queue-based threshold percolation with per-vertex counters, O(n + m).

    ``frozen`` is a uint8 mask (empty array disables freezing); frozen
    vertices never activate but infected ones still count for neighbors.
    Round indices come from frontier markers on the queue, so the per-round
    sizes match the synchronous schedule exactly.  per_round[0] is the seed
    count; returns the number of infection waves.
    """
    n = indptr.shape[0] - 1
    has_frozen = frozen.shape[0] == n
    count = np.zeros(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    tail = 0
    for s in seeds:
        if not active[s]:
            active[s] = True
            queue[tail] = s
            tail += 1
    per_round[0] = tail
    head = 0
    rounds = 0
    while head < tail:
        layer_end = tail
        while head < layer_end:
            v = queue[head]
            head += 1
            for k in range(indptr[v], indptr[v + 1]):
                nb = indices[k]
                if active[nb]:
                    continue
                count[nb] += 1
                if count[nb] >= r:
                    if has_frozen and frozen[nb]:
                        continue
                    active[nb] = True
                    queue[tail] = nb
                    tail += 1
        newly = tail - layer_end
        if newly > 0:
            rounds += 1
            per_round[rounds] = newly
    return rounds


@njit(cache=True)
def sequential_exposure(levels, start_counts, seeded_counts, heavy_w, norm,
                        r, seed, rec_u, rec_wu, rec_c):
    """One-vertex-at-a-time exposure of a class-structured random graph.

    State: per class i, c[i, j] vertices are uninfected with j marks; the
    infected-unexposed pool holds per-class counts plus individual heavy
    weights.  Each step removes one uniform pool vertex v and advances each
    cell by a Binomial(c[i,j], min(W_i w_v / norm, 1)) draw, top level
    first so nobody advances twice per step.  Rows of rec_* record the
    state after each step; returns the number of steps executed.
    """
    np.random.seed(seed)
    p_l = levels.shape[0]
    c = np.zeros((p_l, r), dtype=np.int64)
    u_light = np.zeros(p_l, dtype=np.int64)
    for i in range(p_l):
        c[i, 0] = start_counts[i] - seeded_counts[i]
        u_light[i] = seeded_counts[i]
    hw = heavy_w.copy()
    h_cnt = hw.shape[0]
    u = h_cnt
    wu = 0.0
    for k in range(h_cnt):
        wu += hw[k]
    for i in range(p_l):
        u += u_light[i]
        wu += u_light[i] * levels[i]
    rec_u[0] = u
    rec_wu[0] = wu
    for i in range(p_l):
        for j in range(r):
            rec_c[0, i * r + j] = c[i, j]
    t = 0
    while u > 0:
        pick = np.random.random() * u
        acc = 0.0
        chosen = -1
        for i in range(p_l):
            acc += u_light[i]
            if pick < acc:
                chosen = i
                break
        if chosen >= 0:
            w_v = levels[chosen]
            u_light[chosen] -= 1
        else:
            idx = int(np.random.random() * h_cnt)
            if idx >= h_cnt:
                idx = h_cnt - 1
            w_v = hw[idx]
            hw[idx] = hw[h_cnt - 1]
            h_cnt -= 1
        u -= 1
        wu -= w_v
        for i in range(p_l):
            q = levels[i] * w_v / norm
            if q > 1.0:
                q = 1.0
            if q <= 0.0:
                continue
            for j in range(r - 1, -1, -1):
                if c[i, j] == 0:
                    continue
                moved = np.random.binomial(c[i, j], q)
                if moved == 0:
                    continue
                c[i, j] -= moved
                if j == r - 1:
                    u_light[i] += moved
                    u += moved
                    wu += moved * levels[i]
                else:
                    c[i, j + 1] += moved
        t += 1
        rec_u[t] = u
        rec_wu[t] = wu
        for i in range(p_l):
            for j in range(r):
                rec_c[t, i * r + j] = c[i, j]
    return t
