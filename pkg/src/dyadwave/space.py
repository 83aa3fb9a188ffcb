"""Finite quasi-metric measure spaces.

A space is a point set {0, ..., n-1}, a quasi-distance matrix and a vector of
positive point masses.  The quasi-triangle constant a0 is computed by an exact
scan over triples, balls are strict sublevel sets of the distance, and the
measure is the weight vector itself.  On a finite set every subset is
measurable, so the usual caveat that balls need not be Borel is moot here.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AxiomViolation, BadExponent, BadParams, DegenerateSpace

# Relative slack used when deciding whether a0 is exactly 1.
LIPSCHITZ_TOL = 1e-12


@dataclass(frozen=True)
class Ball:
    """Strict ball B(x, r) = {y : d(x, y) < r} with its mass."""

    center: int
    radius: float
    members: np.ndarray
    mass: float


@dataclass(frozen=True, eq=False)
class QuasiMetricSpace:
    dist: np.ndarray
    weights: np.ndarray
    a0: float
    diam: float
    minsep: float
    lipschitz: bool
    coords: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def ball(self, center: int, radius: float) -> Ball:
        row = self.dist[center]
        members = np.flatnonzero(row < radius)
        return Ball(center, float(radius), members,
                    float(self.weights[members].sum()))

    def ball_mass(self, center: int, radius: float) -> float:
        return float(self.weights[self.dist[center] < radius].sum())

    def ball_masses(self, centers: np.ndarray, radii) -> np.ndarray:
        """Masses of B(centers[i], radii[i]) (radii may be scalar)."""
        centers = np.asarray(centers)
        radii = np.broadcast_to(np.asarray(radii, dtype=float), centers.shape)
        inside = self.dist[centers] < radii[..., None]
        return inside @ self.weights


def compute_a0(dist: np.ndarray) -> float:
    """Smallest constant with d(x,z) <= a0 (d(x,y) + d(y,z)), clamped at 1.

    Exact O(n^3) scan, vectorized one intermediate point at a time.
    """
    n = dist.shape[0]
    best = 1.0
    idx = np.arange(n)
    for j in range(n):
        denom = dist[:, j][:, None] + dist[j, :][None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(denom > 0, dist / denom, 0.0)
        ratio[j, :] = 0.0
        ratio[:, j] = 0.0
        ratio[idx, idx] = 0.0
        m = ratio.max()
        if m > best:
            best = float(m)
    return best


def build_space(dist, weights, coords=None) -> QuasiMetricSpace:
    """Validate axioms and compute the derived constants.

    Parameters
    ----------
    dist : array_like, shape (n, n)
        Quasi-distance matrix.  Must be symmetric with zero diagonal and
        positive off-diagonal entries.
    weights : array_like, shape (n,)
        Positive point masses.
    coords : array_like, optional
        Coordinate payload carried along for generators; not validated.

    Returns
    -------
    QuasiMetricSpace

    Raises
    ------
    DegenerateSpace
        If the point set is empty.
    AxiomViolation
        If any quasi-distance axiom or the weight positivity fails.
    """
    dist = np.array(dist, dtype=float)
    weights = np.array(weights, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise AxiomViolation("distance matrix must be square")
    n = dist.shape[0]
    if n == 0:
        raise DegenerateSpace("empty point set")
    if weights.shape != (n,):
        raise AxiomViolation("weights must have one entry per point")
    if not np.all(np.isfinite(dist)):
        raise AxiomViolation("distances must be finite")
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        raise AxiomViolation("weights must be positive and finite")
    if np.any(np.diag(dist) != 0):
        raise AxiomViolation("d(x, x) must be 0")
    if not np.array_equal(dist, dist.T):
        scale = np.abs(dist) + np.abs(dist.T)
        gap = np.abs(dist - dist.T)
        if np.any(gap > 1e-12 * np.maximum(scale, 1e-300)):
            raise AxiomViolation("distance matrix must be symmetric")
        dist = 0.5 * (dist + dist.T)
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.any(dist[off] <= 0):
        raise AxiomViolation("d(x, y) must be positive for x != y")

    a0 = compute_a0(dist)
    lipschitz = a0 <= 1.0 + LIPSCHITZ_TOL
    if lipschitz:
        a0 = 1.0
    diam = float(dist.max()) if n > 1 else 0.0
    minsep = float(dist[off].min()) if n > 1 else 0.0
    dist.setflags(write=False)
    weights.setflags(write=False)
    if coords is not None:
        coords = np.array(coords)
        coords.setflags(write=False)
    return QuasiMetricSpace(dist, weights, a0, diam, minsep, lipschitz, coords)


def exponent_a(space: QuasiMetricSpace) -> float:
    """Decay exponent 1/(1 + 2 log2 a0), equal to 1 on genuine metrics."""
    if space.lipschitz:
        return 1.0
    return 1.0 / (1.0 + 2.0 * math.log2(space.a0))


def measure_doubling_constant(space: QuasiMetricSpace, radii=None) -> float:
    """Max over centers and radii of mass(B(x, 2r)) / mass(B(x, r))."""
    if radii is None:
        off = space.dist[~np.eye(space.n, dtype=bool)]
        radii = np.unique(off) if off.size else np.array([1.0])
    best = 1.0
    centers = np.arange(space.n)
    for r in np.asarray(radii, dtype=float):
        if r <= 0:
            raise BadParams("radii must be positive")
        small = space.ball_masses(centers, r)
        big = space.ball_masses(centers, 2.0 * r)
        best = max(best, float((big / small).max()))
    return best


def _max_separated(dist_sub: np.ndarray, r: float, budget: int = 28):
    """Size of a maximum r-separated subset; (size, exact_flag)."""
    m = dist_sub.shape[0]
    if m <= 1:
        return m, True
    near = dist_sub < r
    np.fill_diagonal(near, False)
    if not near.any():
        return m, True
    order = np.argsort(near.sum(axis=1))[::-1]
    near = near[np.ix_(order, order)]

    def greedy(avail_mask: int) -> int:
        count = 0
        while avail_mask:
            v = (avail_mask & -avail_mask).bit_length() - 1
            count += 1
            avail_mask &= ~(neigh[v] | (1 << v))
        return count

    neigh = []
    for i in range(m):
        bits = 0
        for j in np.flatnonzero(near[i]):
            bits |= 1 << int(j)
        neigh.append(bits)

    if m > budget:
        return greedy((1 << m) - 1), False

    best = 0

    def dfs(avail_mask: int, size: int):
        nonlocal best
        if size + bin(avail_mask).count("1") <= best:
            return
        if not avail_mask:
            best = max(best, size)
            return
        v = (avail_mask & -avail_mask).bit_length() - 1
        dfs(avail_mask & ~(neigh[v] | (1 << v)), size + 1)
        dfs(avail_mask & ~(1 << v), size)

    dfs((1 << m) - 1, 0)
    return best, True


def geometric_doubling_constant(space: QuasiMetricSpace, radii=None) -> int:
    """Max number of r-separated points found inside any ball B(x, 2r).

    Exact for balls up to a small branch-and-bound budget, greedy lower
    bound beyond it.
    """
    if radii is None:
        off = space.dist[~np.eye(space.n, dtype=bool)]
        radii = np.unique(off) if off.size else np.array([1.0])
    best = 1
    for r in np.asarray(radii, dtype=float):
        if r <= 0:
            raise BadParams("radii must be positive")
        for x in range(space.n):
            members = np.flatnonzero(space.dist[x] < 2.0 * r)
            if len(members) <= best:
                continue
            sub = space.dist[np.ix_(members, members)]
            size, _ = _max_separated(sub, r)
            best = max(best, size)
    return int(best)


# ---------------------------------------------------------------------------
# generators

def _cyclic(n: int) -> QuasiMetricSpace:
    if n < 1:
        raise BadParams("cyclic size must be >= 1")
    i = np.arange(n)
    gap = np.abs(i[:, None] - i[None, :])
    dist = np.minimum(gap, n - gap).astype(float)
    return build_space(dist, np.ones(n))


def _interval(n: int) -> QuasiMetricSpace:
    if n < 1:
        raise BadParams("interval size must be >= 1")
    x = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    dist = np.abs(x[:, None] - x[None, :])
    return build_space(dist, np.ones(n), coords=x[:, None])


def _binary_tree(depth: int) -> QuasiMetricSpace:
    if depth < 1:
        raise BadParams("tree depth must be >= 1")
    n = 1 << depth
    leaves = np.arange(n)
    xor = leaves[:, None] ^ leaves[None, :]
    # bits above the lowest common ancestor level
    split = np.zeros((n, n), dtype=int)
    nz = xor > 0
    split[nz] = np.frexp(xor[nz].astype(float))[1]
    dist = 2.0 * split
    return build_space(dist, np.ones(n))


def _point_cloud(n: int, dim: int, seed: int) -> QuasiMetricSpace:
    if n < 1 or dim < 1:
        raise BadParams("point cloud needs n >= 1 and dim >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    pts = rng.uniform(size=(n, dim))
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(dist, 0.0)
    return build_space(dist, np.ones(n), coords=pts)


def _koranyi_sphere(n: int, dim: int, seed: int) -> QuasiMetricSpace:
    if n < 1 or dim < 1:
        raise BadParams("sphere sample needs n >= 1 and dim >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    z = rng.normal(size=(n, dim)) + 1j * rng.normal(size=(n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    inner = z @ z.conj().T
    dist = np.abs(1.0 - inner)
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return build_space(dist, np.full(n, 1.0 / n), coords=z)


def _snowflake(n: int, eps: float, seed: int, noise: float = 0.25) -> QuasiMetricSpace:
    if n < 1:
        raise BadParams("snowflake size must be >= 1")
    if not 0.0 < eps <= 1.0:
        raise BadExponent("snowflake exponent must lie in (0, 1]")
    if noise < 0:
        raise BadParams("noise must be >= 0")
    x = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    base = np.abs(x[:, None] - x[None, :]) ** eps
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    bump = rng.uniform(-noise, noise, size=(n, n))
    bump = 0.5 * (bump + bump.T)
    dist = base * np.exp(bump)
    np.fill_diagonal(dist, 0.0)
    return build_space(dist, np.ones(n), coords=x[:, None])


GENERATOR_KINDS = ("cyclic", "interval", "binary_tree", "point_cloud",
                   "koranyi_sphere", "snowflake")


def gen_example(kind: str, seed: int = 0, **params) -> QuasiMetricSpace:
    """Build one of the named example spaces.

    Parameters
    ----------
    kind : str
        One of ``cyclic`` (n), ``interval`` (n), ``binary_tree`` (depth),
        ``point_cloud`` (n, dim), ``koranyi_sphere`` (n, dim),
        ``snowflake`` (n, eps, optional noise).
    seed : int
        Seed for the randomized kinds; ignored by the deterministic ones.
    """
    try:
        if kind == "cyclic":
            return _cyclic(int(params.pop("n")), **params)
        if kind == "interval":
            return _interval(int(params.pop("n")), **params)
        if kind == "binary_tree":
            return _binary_tree(int(params.pop("depth")), **params)
        if kind == "point_cloud":
            return _point_cloud(int(params.pop("n")), int(params.pop("dim")),
                                seed, **params)
        if kind == "koranyi_sphere":
            return _koranyi_sphere(int(params.pop("n")), int(params.pop("dim")),
                                   seed, **params)
        if kind == "snowflake":
            return _snowflake(int(params.pop("n")), float(params.pop("eps")),
                              seed, **params)
    except KeyError as exc:
        raise BadParams(f"missing parameter {exc} for kind {kind!r}") from exc
    except TypeError as exc:
        raise BadParams(f"bad parameters for kind {kind!r}: {exc}") from exc
    raise BadParams(f"unknown example kind {kind!r}")


# ---------------------------------------------------------------------------
# serialization

def space_to_dict(space: QuasiMetricSpace) -> dict:
    return {"dist": space.dist.tolist(), "weights": space.weights.tolist()}


def space_from_dict(payload: dict) -> QuasiMetricSpace:
    try:
        dist = payload["dist"]
        weights = payload["weights"]
    except (KeyError, TypeError) as exc:
        raise AxiomViolation("space payload needs 'dist' and 'weights'") from exc
    return build_space(dist, weights)


def save_space_json(space: QuasiMetricSpace, path) -> None:
    with open(path, "w") as fh:
        json.dump(space_to_dict(space), fh)
        fh.write("\n")


def load_space_json(path) -> QuasiMetricSpace:
    with open(path) as fh:
        return space_from_dict(json.load(fh))


def load_space_csv(dist_path, weights_path) -> QuasiMetricSpace:
    dist = np.loadtxt(dist_path, delimiter=",", ndmin=2)
    weights = np.loadtxt(weights_path, delimiter=",", ndmin=1)
    return build_space(dist, weights)
