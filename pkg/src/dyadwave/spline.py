"""Interpolating splines: expected cube memberships across the grid ensemble.

The spline of a net point at level k evaluated at x is the probability,
over the uniform coordinate draw, that x lands in that point's cube.  The
coordinate space per level is finite, so the level transition operators
can be enumerated exactly and the values follow by a downward product.
"""

import math
from dataclasses import dataclass

import numpy as np

from .nets import NestedNets
from .randgrid import (
    GridLabels,
    ReferenceOrder,
    cubes,
    enumerate_coordinates,
    random_order,
    sample_omega,
    transition_levels,
    transition_parents,
)
from .space import QuasiMetricSpace, exponent_a

OUTER_SUPPORT = 8.0    # support radius factor a0^5 delta^k, times this
INNER_SUPPORT = 0.125  # plateau radius factor a0^-3 delta^k, times this


@dataclass(frozen=True)
class SplineSystem:
    """Spline values, level transitions, and net ball masses."""

    delta: float
    k_min: int
    k_max: int
    values: dict      # k -> (n_k, n) rows are net positions, columns points
    transitions: dict  # k -> (n_k, n_{k+1}) column-stochastic
    ball_mass: dict   # k -> (n_k,) masses of B(x^k_alpha, delta^k)

    def level_sizes(self):
        return {k: v.shape[0] for k, v in self.values.items()}


def transition_matrix(space: QuasiMetricSpace, nets: NestedNets,
                      ref: ReferenceOrder, labels: GridLabels,
                      k: int) -> np.ndarray:
    """P(perturbed parent of child beta is alpha), exactly, by enumeration."""
    coords = enumerate_coordinates(labels)
    nc = len(nets.levels[k])
    nf = len(nets.levels[k + 1])
    counts = np.zeros((nc, nf))
    cols = np.arange(nf)
    for ell, m in coords:
        par = transition_parents(space, nets, ref, labels, k, ell, m)
        counts[par, cols] += 1.0
    return counts / len(coords)


def compute_splines(space: QuasiMetricSpace, nets: NestedNets,
                    ref: ReferenceOrder, labels: GridLabels) -> SplineSystem:
    """Exact spline values on all of X at every level.

    At the finest level the cubes are singletons, so the values start from
    the permutation sending positions to points; each coarser level is the
    transition matrix applied to the previous one.
    """
    n = space.n
    finest = nets.levels[nets.k_max]
    values = {}
    base = np.zeros((len(finest), n))
    base[np.arange(len(finest)), finest] = 1.0
    values[nets.k_max] = base
    transitions = {}
    for k in reversed(list(transition_levels(nets))):
        T = transition_matrix(space, nets, ref, labels, k)
        transitions[k] = T
        values[k] = T @ values[k + 1]
    ball_mass = {k: space.ball_masses(nets.levels[k], nets.scale(k))
                 for k in nets.level_range}
    return SplineSystem(nets.delta, nets.k_min, nets.k_max,
                        values, transitions, ball_mass)


def mc_membership_frequencies(space: QuasiMetricSpace, nets: NestedNets,
                              ref: ReferenceOrder, labels: GridLabels,
                              seed: int, num_samples: int) -> dict:
    """Empirical cube membership frequencies over sampled grids.

    Independent check of the exact values: parents per coordinate are
    precomputed once, then composed per draw.
    """
    tls = list(transition_levels(nets))
    coords = enumerate_coordinates(labels)
    par_table = {k: {c: transition_parents(space, nets, ref, labels, k, *c)
                     for c in coords} for k in tls}
    draws = sample_omega(labels, tls, seed, count=num_samples)
    n = space.n
    finest = np.empty(n, dtype=int)
    finest[nets.levels[nets.k_max]] = np.arange(n)
    counts = {k: np.zeros((len(nets.levels[k]), n)) for k in tls}
    cols = np.arange(n)
    for i in range(num_samples):
        a = finest
        for k in reversed(tls):
            ell, m = draws[k][0][i], draws[k][1][i]
            a = par_table[k][(int(ell), int(m))][a]
            counts[k][a, cols] += 1.0
    freq = {k: c / num_samples for k, c in counts.items()}
    freq[nets.k_max] = np.zeros((len(nets.levels[nets.k_max]), n))
    freq[nets.k_max][finest, cols] = 1.0
    return freq


def span_residuals(system: SplineSystem) -> dict:
    """Least-squares residual of each level inside the span of the next.

    Recovers refinement coefficients independently of the stored
    transitions; nesting of the spline spaces makes these residuals vanish.
    """
    out = {}
    for k in range(system.k_min, system.k_max):
        fine = system.values[k + 1]
        coarse = system.values[k]
        sol, *_ = np.linalg.lstsq(fine.T, coarse.T, rcond=None)
        resid = fine.T @ sol - coarse.T
        out[k] = float(np.abs(resid).max())
    return out


HOLDER_BUDGET = 4.0
HOLDER_ETA_CAP = 4.0


def holder_fit(xs, ys, budget: float = HOLDER_BUDGET,
               cap: float = HOLDER_ETA_CAP) -> float:
    """Largest exponent keeping the smoothness constant within budget.

    Samples are pairs (x, y) = (-log relative distance, log difference) with
    x > 0.  The constant at exponent eta is max exp(y + eta x); the returned
    eta_hat is the largest eta (capped) with that constant <= budget, in
    closed form eta_hat = min (log budget - y) / x.  Empty data means every
    exponent is admissible, so the cap is returned.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size == 0:
        return cap
    return float(min(((math.log(budget) - ys) / xs).min(), cap))


def holder_estimate(system: SplineSystem, space: QuasiMetricSpace,
                    nets: NestedNets, eta: float | None = None) -> dict:
    """Smoothness of the splines in the scaled distance.

    Over pairs with d(x, y) <= delta^k, reports the empirical constant
    sup |s(x) - s(y)| / (d(x, y)/delta^k)^eta at the requested exponent,
    and the largest exponent whose constant stays within the budget.
    """
    if eta is None:
        eta = exponent_a(space)
    iu = np.triu_indices(space.n, k=1)
    d = space.dist[iu]
    const_at_eta = 0.0
    xs_all = []
    ys_all = []
    n_pairs = 0
    for k in range(system.k_min, system.k_max + 1):
        rel = d / nets.scale(k)
        near = rel <= 1.0
        if not near.any():
            continue
        V = system.values[k]
        diff = np.abs(V[:, iu[0][near]] - V[:, iu[1][near]]).max(axis=0)
        reln = rel[near]
        n_pairs += int(near.sum())
        const_at_eta = max(const_at_eta, float((diff / reln ** eta).max()))
        strict = (reln < 1.0) & (diff > 0)
        if strict.any():
            xs_all.append(-np.log(reln[strict]))
            ys_all.append(np.log(diff[strict]))
    if xs_all:
        eta_hat = holder_fit(np.concatenate(xs_all), np.concatenate(ys_all))
    else:
        eta_hat = HOLDER_ETA_CAP
    return {"eta": float(eta), "const_at_eta": const_at_eta,
            "eta_hat": eta_hat, "budget": HOLDER_BUDGET, "n_pairs": n_pairs}


def density_check(system: SplineSystem, space: QuasiMetricSpace,
                  f, p: float = 2.0) -> dict:
    """Best-approximation residuals of f in the spline spaces, per level.

    The minimizer is taken in L2(mu) (weighted least squares on the spline
    span); the residual is reported in the L^p(mu) norm.  Nested spans make
    the L2 sequence non-increasing, vanishing at the finest level.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (space.n,):
        raise ValueError("f must be a vector over the points")
    if p < 1:
        raise ValueError("p must be >= 1")
    sqw = np.sqrt(space.weights)
    out = {"levels": [], "residuals": []}
    for k in range(system.k_min, system.k_max + 1):
        V = system.values[k]
        coef, *_ = np.linalg.lstsq((V * sqw).T, f * sqw, rcond=None)
        err = f - V.T @ coef
        lp = float((space.weights @ np.abs(err) ** p) ** (1.0 / p))
        out["levels"].append(k)
        out["residuals"].append(lp)
    return out


def verify_splines(system: SplineSystem, space: QuasiMetricSpace,
                   nets: NestedNets, tol: float = 1e-12) -> dict:
    """Exact identities of the spline family, plus reported observations.

    Gating items (``ok``): partition of unity, interpolation at net points,
    refinement through the stored transitions, column-stochastic transitions,
    nonnegativity, and persisting-point columns.  Support radii and
    smoothness are measured and reported but do not gate.
    """
    report = {}
    part_dev = 0.0
    interp_dev = 0.0
    nonneg_min = np.inf
    for k in range(system.k_min, system.k_max + 1):
        V = system.values[k]
        part_dev = max(part_dev, float(np.abs(V.sum(axis=0) - 1.0).max()))
        eye = np.eye(V.shape[0])
        interp_dev = max(interp_dev,
                         float(np.abs(V[:, nets.levels[k]] - eye).max()))
        nonneg_min = min(nonneg_min, float(V.min()))
    refine_dev = 0.0
    stoch_dev = 0.0
    persist_dev = 0.0
    for k in range(system.k_min, system.k_max):
        T = system.transitions[k]
        refine_dev = max(refine_dev, float(
            np.abs(system.values[k] - T @ system.values[k + 1]).max()))
        stoch_dev = max(stoch_dev, float(np.abs(T.sum(axis=0) - 1.0).max()))
        pos_f = {p: i for i, p in enumerate(nets.levels[k + 1])}
        for a, p in enumerate(nets.levels[k]):
            persist_dev = max(persist_dev, abs(T[a, pos_f[p]] - 1.0))
    report.update(
        partition_dev=part_dev, interpolation_dev=interp_dev,
        refinement_dev=refine_dev, stochastic_dev=stoch_dev,
        min_value=nonneg_min, persistence_dev=persist_dev)

    outer_viol = 0
    outer_max_ratio = 0.0
    inner_viol = 0
    row_lo, row_hi = np.inf, -np.inf
    a0 = space.a0
    for k in range(system.k_min, system.k_max + 1):
        V = system.values[k]
        D = space.dist[nets.levels[k]]
        scale = nets.scale(k)
        ratio = D / (OUTER_SUPPORT * a0 ** 5 * scale)
        on = V > 0
        if on.any():
            outer_max_ratio = max(outer_max_ratio, float(ratio[on].max()))
            outer_viol += int((ratio[on] > 1 + 1e-12).sum())
        plateau = D < INNER_SUPPORT * a0 ** -3 * scale
        inner_viol += int((V[plateau] < 1.0 - 1e-12).sum())
        rows = V.sum(axis=1)
        row_lo = min(row_lo, float(rows.min()))
        row_hi = max(row_hi, float(rows.max()))
    report.update(
        outer_support_violations=outer_viol,
        outer_support_max_ratio=outer_max_ratio,
        inner_plateau_violations=inner_viol,
        row_sum_range=(row_lo, row_hi),
        holder=holder_estimate(system, space, nets))
    report["ok"] = bool(
        part_dev <= tol and interp_dev <= tol and refine_dev <= tol
        and stoch_dev <= tol and nonneg_min >= -tol and persist_dev <= tol)
    return report


def sample_grid_once(space: QuasiMetricSpace, nets: NestedNets,
                     ref: ReferenceOrder, labels: GridLabels,
                     seed: int) -> tuple:
    """One full grid draw: (coordinates, perturbed grid, cube assignment)."""
    omega = sample_omega(labels, list(transition_levels(nets)), seed)
    rgrid = random_order(space, nets, ref, labels, omega)
    return omega, rgrid, cubes(space, nets, rgrid)
