"""Randomized dyadic grids over nested nets.

The deterministic skeleton is a reference parent relation between adjacent
levels together with two label systems: a proper coloring of the neighbour
graph (label1) and sibling ranks (label2).  A uniform coordinate per level
then perturbs the skeleton: each level-k node may hand its identity to one
of its children, and children reattach to the perturbed points when close
enough.  Composing the perturbed parent relation yields a random partition
of the space into cubes at every scale.
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import InsufficientSamples, OrderViolation
from .nets import NestedNets
from .seeding import STREAM_BOUNDARY, STREAM_OMEGA, stream_rng
from .space import QuasiMetricSpace


@dataclass(frozen=True)
class OmegaCoordinate:
    k: int
    ell: int
    m: int


@dataclass(frozen=True, eq=False)
class ReferenceOrder:
    parent: dict      # k -> array over level-(k+1) positions, values level-k positions
    children: dict    # k -> list over level-k positions of arrays of level-(k+1) positions


@dataclass(frozen=True, eq=False)
class GridLabels:
    L: int
    M: int
    label1: dict          # k -> color per level-k position
    label2: dict          # k -> sibling rank (1-based) per level-(k+1) position
    child_by_rank: dict   # k -> (n_k, M) level-(k+1) positions, -1 where absent
    degrees: dict         # k -> neighbour count per level-k position


@dataclass(frozen=True, eq=False)
class RandomGrid:
    omega: dict      # k -> (ell, m)
    zpoints: dict    # k -> point index of the perturbed center per position
    parent: dict     # k -> perturbed parent positions


@dataclass(frozen=True, eq=False)
class CubeAssignment:
    assign: dict     # k -> cube position per point of the space

    def members(self, k: int, alpha: int) -> np.ndarray:
        return np.flatnonzero(self.assign[k] == alpha)


def transition_levels(nets: NestedNets):
    return range(nets.k_min, nets.k_max)


def reference_order(space: QuasiMetricSpace, nets: NestedNets) -> ReferenceOrder:
    """Deterministic parent relation between consecutive levels.

    A child attaches to the unique level-k point closer than
    (1/(2 a0)) delta^k when one exists, otherwise to its nearest level-k
    point (first in level order on ties).  Every parent must lie within
    2 a0 delta^k of the child.
    """
    parent = {}
    children = {}
    for k in transition_levels(nets):
        fine = nets.levels[k + 1]
        coarse = nets.levels[k]
        scale = nets.scale(k)
        D = space.dist[np.ix_(fine, coarse)]
        close = D < scale / (2.0 * space.a0)
        cnt = close.sum(axis=1)
        if np.any(cnt > 1):
            raise OrderViolation(
                f"level {k}: multiple close parents; separation broken")
        par = np.argmin(D, axis=1)
        hit = cnt == 1
        par[hit] = np.argmax(close[hit], axis=1)
        if np.any(D[np.arange(len(fine)), par] >= 2.0 * space.a0 * scale):
            raise OrderViolation(
                f"level {k}: a child has no parent within 2*a0*delta^k")
        parent[k] = par
        children[k] = [np.flatnonzero(par == a) for a in range(len(coarse))]
    return ReferenceOrder(parent, children)


def grid_labels(space: QuasiMetricSpace, nets: NestedNets,
                ref: ReferenceOrder) -> GridLabels:
    """Neighbour coloring and sibling ranks shared by all random draws.

    Two level-k nodes are neighbours when they own children closer than
    (2 a0)^-1 delta^k.  L is the largest neighbour count anywhere, M the
    largest family size; label1 is a greedy proper coloring with values
    in {0..L}, label2 ranks siblings 1..M in level order.
    """
    adj = {}
    degrees = {}
    L = 0
    M = 1
    for k in transition_levels(nets):
        fine = nets.levels[k + 1]
        coarse = nets.levels[k]
        par = ref.parent[k]
        thr = nets.scale(k) / (2.0 * space.a0)
        Dff = space.dist[np.ix_(fine, fine)]
        rows, cols = np.nonzero(Dff < thr)
        A = np.zeros((len(coarse), len(coarse)), dtype=bool)
        A[par[rows], par[cols]] = True
        np.fill_diagonal(A, False)
        A |= A.T
        adj[k] = A
        deg = A.sum(axis=1)
        degrees[k] = deg
        if len(deg):
            L = max(L, int(deg.max()))
        M = max(M, max(len(c) for c in ref.children[k]))

    label1 = {}
    label2 = {}
    child_by_rank = {}
    for k in transition_levels(nets):
        nc = len(nets.levels[k])
        colors = np.full(nc, -1, dtype=int)
        for a in range(nc):
            used = set(colors[np.flatnonzero(adj[k][a])].tolist())
            c = 0
            while c in used:
                c += 1
            colors[a] = c
        assert colors.max(initial=0) <= L
        label1[k] = colors
        ranks = np.zeros(len(nets.levels[k + 1]), dtype=int)
        table = np.full((nc, M), -1, dtype=int)
        for a, kids in enumerate(ref.children[k]):
            for r, b in enumerate(np.sort(kids)):
                ranks[b] = r + 1
                table[a, r] = b
        label2[k] = ranks
        child_by_rank[k] = table
    return GridLabels(L, M, label1, label2, child_by_rank, degrees)


def sample_omega(labels: GridLabels, levels, seed: int, count: int | None = None):
    """Draw uniform coordinates, one independent stream per level.

    With ``count=None`` returns {k: OmegaCoordinate}; otherwise
    {k: (ell_array, m_array)} of length ``count``.
    """
    single = count is None
    size = 1 if single else int(count)
    out = {}
    for k in levels:
        rng = stream_rng(seed, STREAM_OMEGA, k)
        ell = rng.integers(0, labels.L + 1, size=size)
        m = rng.integers(1, labels.M + 1, size=size)
        if single:
            out[k] = OmegaCoordinate(int(k), int(ell[0]), int(m[0]))
        else:
            out[k] = (ell, m)
    return out


def _coord(omega, k):
    c = omega[k]
    if isinstance(c, OmegaCoordinate):
        return c.ell, c.m
    return int(c[0]), int(c[1])


def zpoints_level(nets: NestedNets, labels: GridLabels, k: int,
                  ell: int, m: int) -> np.ndarray:
    """Perturbed centers at level k under coordinate (ell, m), as points."""
    z = nets.levels[k].copy()
    table = labels.child_by_rank[k]
    sel = (labels.label1[k] == ell) & (table[:, m - 1] >= 0)
    z[sel] = nets.levels[k + 1][table[sel, m - 1]]
    return z


def random_points(nets: NestedNets, labels: GridLabels, omega) -> dict:
    return {k: zpoints_level(nets, labels, k, *_coord(omega, k))
            for k in omega}


def transition_parents(space: QuasiMetricSpace, nets: NestedNets,
                       ref: ReferenceOrder, labels: GridLabels,
                       k: int, ell: int, m: int) -> np.ndarray:
    """Perturbed parents for one level transition and one coordinate."""
    z = zpoints_level(nets, labels, k, ell, m)
    fine = nets.levels[k + 1]
    thr = 0.25 * space.a0 ** -2 * nets.scale(k)
    D = space.dist[np.ix_(fine, z)]
    hits = D < thr
    cnt = hits.sum(axis=1)
    if np.any(cnt > 1):
        raise OrderViolation(
            f"level {k}: several perturbed centers capture one child")
    par = ref.parent[k].copy()
    cap = cnt == 1
    par[cap] = np.argmax(hits[cap], axis=1)
    return par


def random_order(space: QuasiMetricSpace, nets: NestedNets, ref: ReferenceOrder,
                 labels: GridLabels, omega) -> RandomGrid:
    """Assemble the perturbed grid for one coordinate draw."""
    zp = {}
    parent = {}
    om = {}
    for k in sorted(omega):
        ell, m = _coord(omega, k)
        om[k] = (ell, m)
        zp[k] = zpoints_level(nets, labels, k, ell, m)
        parent[k] = transition_parents(space, nets, ref, labels, k, ell, m)
    return RandomGrid(om, zp, parent)


def cubes(space: QuasiMetricSpace, nets: NestedNets,
          rgrid: RandomGrid) -> CubeAssignment:
    """Partition of the space at every level by ancestor composition."""
    assign = {}
    finest = np.empty(space.n, dtype=int)
    finest[nets.levels[nets.k_max]] = np.arange(space.n)
    assign[nets.k_max] = finest
    for k in sorted(rgrid.parent, reverse=True):
        assign[k] = rgrid.parent[k][assign[k + 1]]
    return CubeAssignment(assign)


def enumerate_coordinates(labels: GridLabels):
    """All (ell, m) values a single level can take."""
    return [(ell, m) for ell in range(labels.L + 1)
            for m in range(1, labels.M + 1)]


def child_hit_probabilities(space: QuasiMetricSpace, nets: NestedNets,
                            ref: ReferenceOrder, labels: GridLabels) -> dict:
    """Exact P(z^k_alpha = child beta) per transition, by enumeration.

    The perturbed center at level k depends on the level-k coordinate only,
    so one-level enumeration is exhaustive.
    """
    out = {}
    for k in transition_levels(nets):
        nc = len(nets.levels[k])
        nf = len(nets.levels[k + 1])
        prob = np.zeros((nc, nf))
        coords = enumerate_coordinates(labels)
        pos_f = np.empty(space.n, dtype=int)
        pos_f[nets.levels[k + 1]] = np.arange(nf)
        for ell, m in coords:
            z = zpoints_level(nets, labels, k, ell, m)
            prob[np.arange(nc), pos_f[z]] += 1.0
        out[k] = prob / len(coords)
    return out


# ---------------------------------------------------------------------------
# structural checks on sampled grids

def grid_checks(space: QuasiMetricSpace, nets: NestedNets, ref: ReferenceOrder,
                labels: GridLabels, seed: int = 0, num_samples: int = 32) -> dict:
    """Exact and radius-style checks over sampled coordinate draws.

    Exact items (center containment, covering recursion, separation) feed
    the pass/fail gate; radius observations (sandwich ratios, implication
    chain) are reported with violation counts but make no claim at coarse
    delta.
    """
    tls = list(transition_levels(nets))
    batch = sample_omega(labels, tls, seed, count=num_samples)
    a0 = space.a0
    rep = {
        "num_samples": num_samples,
        "center_containment_violations": 0,
        "covering_violations": 0,
        "z_separation_min_ratio": math.inf,
        "z_density_max_ratio": 0.0,
        "inner_sandwich_z_violations": 0,
        "inner_sandwich_x_violations": 0,
        "outer_z_max_ratio": 0.0,
        "outer_x_max_ratio": 0.0,
        "chain_lower_violations": 0,
        "chain_upper_max_ratio": 0.0,
        "iterated_lower_violations": 0,
        "iterated_upper_max_ratio": 0.0,
    }
    if not tls:
        # single level: every gated item is vacuous
        rep["z_separation_min_ratio"] = None
        rep["ok"] = True
        return rep
    for i in range(num_samples):
        omega = {k: (int(batch[k][0][i]), int(batch[k][1][i])) for k in tls}
        rgrid = random_order(space, nets, ref, labels, omega)
        cass = cubes(space, nets, rgrid)
        zpos = dict(rgrid.zpoints)
        zpos[nets.k_max] = nets.levels[nets.k_max]
        for k in tls:
            scale = nets.scale(k)
            pts = nets.levels[k]
            z = rgrid.zpoints[k]
            if len(z) > 1:
                Dz = space.dist[np.ix_(z, z)]
                off = Dz[~np.eye(len(z), dtype=bool)]
                rep["z_separation_min_ratio"] = min(
                    rep["z_separation_min_ratio"],
                    float(off.min() / (scale / (2.0 * a0))))
            dens = space.dist[:, z].min(axis=1).max()
            rep["z_density_max_ratio"] = max(
                rep["z_density_max_ratio"],
                float(dens / (4.0 * a0 ** 2 * scale)))
            # center containment and sandwiches
            asg = cass.assign[k]
            rep["center_containment_violations"] += int(
                (asg[pts] != np.arange(len(pts))).sum())
            rep["covering_violations"] += int(
                (asg != rgrid.parent[k][cass.assign[k + 1]]).sum())
            inner_z = 1.0 / 6.0 * a0 ** -5 * scale
            inner_x = 1.0 / 8.0 * a0 ** -3 * scale
            for a in range(len(pts)):
                mem = asg == a
                near_z = space.dist[z[a]] < inner_z
                rep["inner_sandwich_z_violations"] += int((near_z & ~mem).sum())
                near_x = space.dist[pts[a]] < inner_x
                rep["inner_sandwich_x_violations"] += int((near_x & ~mem).sum())
                if mem.any():
                    rep["outer_z_max_ratio"] = max(
                        rep["outer_z_max_ratio"],
                        float(space.dist[z[a]][mem].max() / (6.0 * a0 ** 4 * scale)))
                    rep["outer_x_max_ratio"] = max(
                        rep["outer_x_max_ratio"],
                        float(space.dist[pts[a]][mem].max() / (8.0 * a0 ** 5 * scale)))
            # one-step chain bounds between adjacent perturbed centers
            zf = zpos[k + 1]
            Dzz = space.dist[np.ix_(zf, z)]
            low = Dzz < (1.0 / 5.0) * a0 ** -3 * scale
            par = rgrid.parent[k]
            rows, cols = np.nonzero(low)
            rep["chain_lower_violations"] += int((par[rows] != cols).sum())
            dpar = Dzz[np.arange(len(zf)), par]
            rep["chain_upper_max_ratio"] = max(
                rep["chain_upper_max_ratio"],
                float(dpar.max(initial=0.0) / (5.0 * a0 ** 3 * scale)))
        # iterated chain bounds across wider level gaps
        for k in tls:
            scale = nets.scale(k)
            zc = zpos[k]
            anc = rgrid.parent[k]
            for lvl in range(k + 2, nets.k_max + 1):
                anc = anc[rgrid.parent[lvl - 1]]
                zf = zpos[lvl]
                Dzz = space.dist[np.ix_(zf, zc)]
                low = Dzz < (1.0 / 6.0) * a0 ** -4 * scale
                rows, cols = np.nonzero(low)
                rep["iterated_lower_violations"] += int((anc[rows] != cols).sum())
                dpar = Dzz[np.arange(len(zf)), anc]
                rep["iterated_upper_max_ratio"] = max(
                    rep["iterated_upper_max_ratio"],
                    float(dpar.max(initial=0.0) / (6.0 * a0 ** 4 * scale)))
    if rep["z_separation_min_ratio"] is math.inf:
        rep["z_separation_min_ratio"] = None
    rep["ok"] = bool(
        rep["center_containment_violations"] == 0
        and rep["covering_violations"] == 0
        and (rep["z_separation_min_ratio"] is None
             or rep["z_separation_min_ratio"] >= 1.0)
        and rep["z_density_max_ratio"] < 1.0)
    return rep


# ---------------------------------------------------------------------------
# boundary layer Monte Carlo

_CHUNK = 256


def _boundary_chunk(space, nets, ref, labels, eps_grid, seed, chunk_index,
                    chunk_size, levels):
    tls = list(transition_levels(nets))
    n = space.n
    counts = np.zeros((len(levels), len(eps_grid), n), dtype=np.int64)
    pooled = np.zeros(chunk_size)
    draws = {}
    for k in tls:
        rng = stream_rng(seed, STREAM_BOUNDARY, k, chunk_index)
        draws[k] = (rng.integers(0, labels.L + 1, size=chunk_size),
                    rng.integers(1, labels.M + 1, size=chunk_size))
    scales = np.array([nets.scale(k) for k in levels])
    for i in range(chunk_size):
        omega = {k: (int(draws[k][0][i]), int(draws[k][1][i])) for k in tls}
        rgrid = random_order(space, nets, ref, labels, omega)
        cass = cubes(space, nets, rgrid)
        hits = 0
        for li, k in enumerate(levels):
            asg = cass.assign[k]
            order = np.argsort(asg, kind="stable")
            starts = np.flatnonzero(np.r_[1, np.diff(asg[order])])
            M2 = np.minimum.reduceat(space.dist[:, order], starts, axis=1)
            M2[np.arange(n), asg] = np.inf
            comp = M2.min(axis=1)
            for ei, eps in enumerate(eps_grid):
                counts[li, ei] += comp < eps * scales[li]
            hits += int((comp < eps_grid[-1] * scales[li]).sum())
        pooled[i] = hits / (len(levels) * n)
    return counts, pooled


def boundary_layer_stats(space: QuasiMetricSpace, nets: NestedNets,
                         ref: ReferenceOrder, labels: GridLabels,
                         eps_grid, num_samples: int, seed: int,
                         levels=None, jobs: int = 1) -> dict:
    """Monte Carlo frequency of the eps boundary layer event per point/level.

    The same draws are reused across the whole eps grid, so frequencies are
    monotone in eps by construction.  Sampling is chunked with one RNG
    stream per (level, chunk), which makes the counts independent of the
    worker count.
    """
    eps_grid = sorted(float(e) for e in eps_grid)
    if not eps_grid or eps_grid[0] <= 0:
        raise ValueError("eps grid must be positive")
    if levels is None:
        levels = list(nets.level_range)
    chunks = []
    start = 0
    idx = 0
    while start < num_samples:
        size = min(_CHUNK, num_samples - start)
        chunks.append((idx, size))
        start += size
        idx += 1
    args = [(space, nets, ref, labels, eps_grid, seed, ci, size, levels)
            for ci, size in chunks]
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_boundary_worker, args))
    else:
        results = [_boundary_worker(a) for a in args]
    counts = sum(r[0] for r in results)
    pooled = np.concatenate([r[1] for r in results])
    freq = counts / float(num_samples)
    mean_freq = freq.mean(axis=(0, 2))
    per_cell_se = np.sqrt(freq * (1.0 - freq) / num_samples)
    return {
        "eps_grid": eps_grid,
        "levels": list(levels),
        "num_samples": int(num_samples),
        "counts": counts,
        "freq": freq,
        "per_cell_stderr": per_cell_se,
        "mean_freq": mean_freq,
        "pooled_last_eps": pooled,
    }


def _boundary_worker(args):
    return _boundary_chunk(*args)


def fit_boundary_exponent(stats: dict, min_points: int = 3) -> dict:
    """Log-log least squares fit of mean boundary frequency against eps."""
    eps = np.array(stats["eps_grid"])
    mean = np.array(stats["mean_freq"])
    keep = mean > 0
    out = {"n_points": int(keep.sum())}
    if keep.sum() < min_points:
        warnings.warn("too few positive frequencies for a slope fit",
                      InsufficientSamples)
        out.update(eta=math.nan, log_c=math.nan, ci95=(math.nan, math.nan),
                   stderr=math.nan, r2=math.nan)
        return out
    x = np.log(eps[keep])
    y = np.log(mean[keep])
    fit = scipy.stats.linregress(x, y)
    dof = keep.sum() - 2
    tq = scipy.stats.t.ppf(0.975, dof) if dof > 0 else math.nan
    out.update(
        eta=float(fit.slope),
        log_c=float(fit.intercept),
        stderr=float(fit.stderr),
        ci95=(float(fit.slope - tq * fit.stderr),
              float(fit.slope + tq * fit.stderr)),
        r2=float(fit.rvalue ** 2),
    )
    return out
