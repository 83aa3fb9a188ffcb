"""Decay certificates and structured inverses for matrices on separated index sets.

Entries of the matrices handled here live on an index set carrying its own
quasi-distance (typically a net rescaled so the set is 1-separated).  The
module fits exponential off-diagonal envelopes, inverts positive definite
matrices through a Neumann series, takes inverse square roots through the
binomial series, and computes the chain constants that control how the
quasi-triangle inequality degrades along paths.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    BadParams,
    DimensionMismatch,
    NoConvergence,
    NotPositiveDefinite,
)
from .seeding import STREAM_TRIALS, stream_rng

# entries smaller than this are numerical zeros and impose no constraint
TINY = 1e-300

DEFAULT_C_MAX = 50.0


@dataclass
class DecayMatrix:
    """Matrix together with the quasi-distance on its index set."""

    matrix: np.ndarray
    index_dist: np.ndarray
    cert: dict | None = None

    def certify(self, s: float = 1.0, x_cut: float = 1.0,
                c_max: float = DEFAULT_C_MAX) -> dict:
        self.cert = decay_certificate(self.matrix, self.index_dist,
                                      s=s, x_cut=x_cut, c_max=c_max)
        return self.cert


def envelope_fit(xs, ys, x_cut: float = 1.0, c_max: float = DEFAULT_C_MAX,
                 n_worst: int = 5) -> dict:
    """Fit the tightest envelope ys <= log C - c * xs with the largest c.

    The intercept is anchored at the maximum observed value, the rate is the
    slackest slope over the far field (xs >= x_cut), capped at c_max, and the
    constant is then lifted so the bound covers every sample.  A rate <= 0
    refutes exponential decay; the worst offending samples are reported.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be matching vectors")
    if xs.size == 0:
        return {"C": math.nan, "c": math.nan, "refuted": False,
                "n_pairs": 0, "n_far": 0, "worst": []}
    log_c0 = float(ys.max())
    far = xs >= x_cut
    out = {"n_pairs": int(xs.size), "n_far": int(far.sum())}
    if not far.any():
        c = c_max
    else:
        slopes = (log_c0 - ys[far]) / xs[far]
        c = float(min(slopes.min(), c_max))
    refuted = c <= 0.0
    cover = float((ys + c * xs).max())
    out.update(c=c, C=float(math.exp(min(cover, 700.0))), refuted=bool(refuted))
    worst = []
    if refuted:
        slopes_all = np.full_like(xs, np.inf)
        mask = xs >= x_cut
        slopes_all[mask] = (log_c0 - ys[mask]) / xs[mask]
        order = np.argsort(slopes_all)[:n_worst]
        worst = [{"x": float(xs[i]), "log_value": float(ys[i]),
                  "slope": float(slopes_all[i])} for i in order]
    out["worst"] = worst
    return out


def decay_certificate(matrix, index_dist, s: float = 1.0, x_cut: float = 1.0,
                      c_max: float = DEFAULT_C_MAX) -> dict:
    """Exponential decay certificate sup |M(a,b)| exp(c d(a,b)^s) <= C.

    The index set must be 1-separated under the supplied (renormalized)
    quasi-distance, so d^s <= d off the diagonal.  Off-diagonal entries
    below the numerical-zero threshold are excluded; the diagonal only
    feeds the anchor constant.
    """
    matrix = np.asarray(matrix, dtype=float)
    index_dist = np.asarray(index_dist, dtype=float)
    if matrix.shape != index_dist.shape or matrix.ndim != 2:
        raise DimensionMismatch(
            "matrix and index distances must have equal square shape")
    if not 0.0 < s <= 1.0:
        raise BadParams(f"decay exponent s={s} outside (0, 1]")
    off = ~np.eye(matrix.shape[0], dtype=bool)
    if off.any():
        dmin = float(index_dist[off].min())
        if dmin < 1.0 - 1e-9:
            raise BadParams(
                f"index set not 1-separated (min distance {dmin:.3e})")
        assert (index_dist[off] ** s <= index_dist[off] * (1 + 1e-12)).all()
    absm = np.abs(matrix)
    keep = off & (absm >= TINY)
    xs = index_dist[keep] ** s
    ys = np.log(absm[keep])
    diag_anchor = float(np.log(np.maximum(np.abs(np.diag(matrix)), TINY)).max())
    fit = envelope_fit(np.r_[xs, 0.0], np.r_[ys, diag_anchor],
                       x_cut=x_cut, c_max=c_max)
    fit.update(s=float(s), n_pairs=int(keep.sum()))
    return fit


# ---------------------------------------------------------------------------
# chain constants

def _minplus(D: np.ndarray, dist: np.ndarray) -> np.ndarray:
    return (D[:, :, None] + dist[None, :, :]).min(axis=1)


def chain_constants(dist, n_max: int, exact_budget: int = 512,
                    seed: int = 0) -> dict:
    """Worst ratio of direct distance to additive chain length, per hop count.

    kappa[m] with 1 <= m <= n_max is the max over point pairs of
    d(x, y) / min over chains of m hops of the summed hop lengths.  Chains
    may repeat points, so the min-plus power of the distance matrix gives
    the exact value.  Beyond the exact budget a sampled lower bound is
    returned and flagged.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    off = ~np.eye(n, dtype=bool)
    if n < 2:
        return {"kappa": np.ones(n_max), "exact": True}
    if n > exact_budget:
        rng = stream_rng(seed, STREAM_TRIALS, 0)
        idx = rng.choice(n, size=exact_budget, replace=False)
        sub = dist[np.ix_(idx, idx)]
        # restriction to a subset only lowers the sup, so this is a lower bound
        return {"kappa": chain_constants(sub, n_max)["kappa"], "exact": False}
    kappa = np.empty(n_max)
    D = dist.copy()
    kappa[0] = float((dist[off] / D[off]).max())
    for m in range(1, n_max):
        D = _minplus(D, dist)
        kappa[m] = float((dist[off] / D[off]).max())
    return {"kappa": kappa, "exact": True}


# ---------------------------------------------------------------------------
# spectral estimates

def operator_norm_bounds(matrix, weights=None, iters: int = 200) -> tuple:
    """(lower, upper) bounds for the spectral norm.

    Upper bound: weighted double-sum test (unweighted reduces to
    sqrt(norm_1 * norm_inf)) capped by the Frobenius norm.  Lower bound:
    best Rayleigh quotient seen along a deterministic power iteration.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch("matrix must be square")
    n = M.shape[0]
    absm = np.abs(M)
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
    row = float(((absm @ w) / w).max())
    col = float(((absm.T @ w) / w).max())
    upper = min(math.sqrt(row * col), float(np.linalg.norm(M, "fro")))
    v = 1.0 + np.arange(n) / (10.0 * max(n, 1))
    v /= np.linalg.norm(v)
    lower = 0.0
    for _ in range(iters):
        u = M @ v
        norm = np.linalg.norm(u)
        lower = max(lower, float(norm))
        if norm == 0:
            break
        v = M.T @ u
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        v /= nv
    return min(lower, upper), upper


def extreme_eigs(matrix, tol: float = 1e-10, max_iter: int = 2000) -> dict:
    """Estimate the extreme eigenvalues of a symmetric positive definite matrix.

    Power iteration for the largest, inverse iteration through a Cholesky
    factor for the smallest; falls back to a dense eigensolve when either
    iteration stalls.
    """
    M = np.asarray(matrix, dtype=float)
    n = M.shape[0]
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        raise NotPositiveDefinite("matrix is not symmetric")
    try:
        chol = scipy.linalg.cho_factor(M, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Cholesky factorization failed") from exc

    def _iterate(apply):
        v = 1.0 + np.arange(n) / (10.0 * n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            u = apply(v)
            nu = np.linalg.norm(u)
            if nu == 0:
                return 0.0, True
            u /= nu
            new = float(u @ apply(u))
            if abs(new - lam) <= tol * max(abs(new), 1e-30):
                return new, True
            lam = new
            v = u
        return lam, False

    lmax, ok_max = _iterate(lambda v: M @ v)
    lmin_inv, ok_min = _iterate(
        lambda v: scipy.linalg.cho_solve(chol, v, check_finite=False))
    fallback = not (ok_max and ok_min and lmin_inv > 0)
    if fallback:
        vals = np.linalg.eigvalsh(M)
        lmin, lmax = float(vals[0]), float(vals[-1])
    else:
        lmin = 1.0 / lmin_inv
    if lmin <= 0:
        raise NotPositiveDefinite("nonpositive smallest eigenvalue estimate")
    return {"lmin": float(lmin), "lmax": float(lmax), "fallback": fallback}


# ---------------------------------------------------------------------------
# series inverses

_SAFETY = 1.05
MAX_TERMS = 20000


def _series_setup(matrix, tol, max_terms):
    M = np.asarray(matrix, dtype=float)
    est = extreme_eigs(M)
    lmax = est["lmax"] * _SAFETY
    lmin = est["lmin"] / _SAFETY
    h = 0.5 * (lmax + lmin)
    r = (lmax - lmin) / (lmax + lmin)
    if not r < 1.0:
        raise NotPositiveDefinite("spectral interval touches zero")
    # terms needed so the geometric tail r^(N+1)/(1-r) is below h * tol
    budget = math.log(max(tol * (1.0 - r) * h, 1e-320)) / math.log(r) - 1.0
    n_terms = max(int(math.ceil(budget)), 1)
    if n_terms > max_terms:
        raise NoConvergence(
            f"series needs {n_terms} terms (contraction ratio {r:.6f})")
    A = np.eye(M.shape[0]) - M / h
    return M, A, h, r, n_terms


def neumann_inverse(matrix, tol: float = 1e-10,
                    max_terms: int = MAX_TERMS) -> dict:
    """Invert through the geometric series around the spectral midpoint.

    Symmetric positive definite input is inverted directly; a general
    square matrix is reduced through M^-1 = M^T (M M^T)^-1.  The residual
    max |M^-1 M - I| is checked against 10 * tol.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch("matrix must be square")
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        gram = M @ M.T
        inner = neumann_inverse(gram, tol=tol, max_terms=max_terms)
        inv = M.T @ inner["inverse"]
        resid = float(np.abs(inv @ M - np.eye(M.shape[0])).max())
        if resid > 10.0 * tol:
            raise NoConvergence(f"residual {resid:.3e} exceeds tolerance")
        return {"inverse": inv, "n_terms": inner["n_terms"], "r": inner["r"],
                "h": inner["h"], "residual": resid, "symmetric": False}
    M, A, h, r, n_terms = _series_setup(M, tol, max_terms)
    n = M.shape[0]
    total = np.eye(n)
    power = np.eye(n)
    for _ in range(n_terms):
        power = power @ A
        total += power
    inv = total / h
    inv = 0.5 * (inv + inv.T)
    resid = float(np.abs(inv @ M - np.eye(n)).max())
    if resid > 10.0 * tol:
        raise NoConvergence(f"residual {resid:.3e} exceeds tolerance")
    return {"inverse": inv, "n_terms": n_terms, "r": r, "h": h,
            "residual": resid, "symmetric": True}


def inverse_sqrt(matrix, tol: float = 1e-10,
                 max_terms: int = MAX_TERMS) -> dict:
    """Inverse square root through the binomial series at the midpoint.

    Coefficients follow c_0 = 1, c_n = c_{n-1} (2n-1) / (2n) <= 1, so the
    geometric tail bound of the inverse series still applies.
    """
    M, A, h, r, n_terms = _series_setup(matrix, tol, max_terms)
    n = M.shape[0]
    total = np.eye(n)
    power = np.eye(n)
    coeff = 1.0
    for m in range(1, n_terms + 1):
        coeff *= (2.0 * m - 1.0) / (2.0 * m)
        power = power @ A
        total += coeff * power
    root = total / math.sqrt(h)
    root = 0.5 * (root + root.T)
    resid = float(np.abs(root @ M @ root - np.eye(n)).max())
    if resid > 10.0 * tol:
        raise NoConvergence(f"residual {resid:.3e} exceeds tolerance")
    return {"root": root, "n_terms": n_terms, "r": r, "h": h,
            "residual": resid}


def spectral_inverse_sqrt(matrix) -> np.ndarray:
    """Dense eigensolve oracle for the inverse square root."""
    M = np.asarray(matrix, dtype=float)
    vals, vecs = np.linalg.eigh(M)
    if vals[0] <= 0:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {vals[0]:.3e} is not positive")
    return (vecs * (1.0 / np.sqrt(vals))) @ vecs.T
