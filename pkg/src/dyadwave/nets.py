"""Nested families of separated nets across dyadic scales.

Level k holds a maximal delta^k-separated subset of the space, each level
contained in the next finer one.  The coarsest level is a single root point,
the finest resolves every point.  Greedy scans run either in input order or
in a farthest-first traversal order fixed once for the whole hierarchy.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import BadDelta, BadParams, TooLarge
from .space import QuasiMetricSpace

ORDER_POLICIES = ("input_order", "farthest_first")

# hard cap on the level count; hit only by delta pathologically close to 1
MAX_LEVELS = 4096


@dataclass(frozen=True, eq=False)
class NestedNets:
    delta: float
    k_min: int
    k_max: int
    levels: dict
    ydiff: dict
    order_policy: str
    scan_order: np.ndarray

    def scale(self, k: int) -> float:
        return float(self.delta) ** k

    @property
    def level_range(self):
        return range(self.k_min, self.k_max + 1)

    def positions(self, k: int, n: int) -> np.ndarray:
        """Point index -> row position at level k (or -1)."""
        pos = np.full(n, -1, dtype=int)
        pos[self.levels[k]] = np.arange(len(self.levels[k]))
        return pos


def farthest_first_order(dist: np.ndarray) -> np.ndarray:
    """Traversal that always visits the point farthest from those seen."""
    n = dist.shape[0]
    order = np.empty(n, dtype=int)
    order[0] = 0
    mind = dist[0].copy()
    mind[0] = -1.0
    for i in range(1, n):
        nxt = int(np.argmax(mind))
        order[i] = nxt
        np.minimum(mind, dist[nxt], out=mind)
        mind[nxt] = -1.0
    return order


def _greedy_extend(dist, threshold, scan, seed_points):
    """Add scan points at distance >= threshold from everything chosen."""
    n = dist.shape[0]
    chosen = list(seed_points)
    if chosen:
        mind = dist[chosen].min(axis=0)
    else:
        mind = np.full(n, np.inf)
    for x in scan:
        if mind[x] >= threshold:
            chosen.append(int(x))
            np.minimum(mind, dist[x], out=mind)
    return np.array(chosen, dtype=int)


def build_nets(space: QuasiMetricSpace, delta: float,
               order_policy: str = "farthest_first") -> NestedNets:
    """Build the full hierarchy of nested separated nets.

    Parameters
    ----------
    space : QuasiMetricSpace
    delta : float
        Scale ratio between consecutive levels, in (0, 1).
    order_policy : str
        ``input_order`` or ``farthest_first``; the greedy tie-break order.

    Returns
    -------
    NestedNets
        Levels k_min..k_max with level k a maximal delta^k-separated set.
        k_max is the smallest k whose scale resolves the minimum separation
        (that level is the whole space); k_min the largest k whose scale
        exceeds 2 * a0 * diam (that level is a single point).
    """
    if not 0.0 < delta < 1.0:
        raise BadDelta(f"delta must lie in (0, 1), got {delta}")
    if order_policy not in ORDER_POLICIES:
        raise BadParams(f"unknown order policy {order_policy!r}")
    n = space.n
    if order_policy == "farthest_first":
        scan = farthest_first_order(space.dist)
    else:
        scan = np.arange(n)

    if n == 1:
        levels = {0: np.array([0])}
        return NestedNets(delta, 0, 0, levels, {}, order_policy,
                          scan_order=scan)

    k_max = 0
    while delta ** k_max > space.minsep:
        k_max += 1
        if k_max > MAX_LEVELS:
            raise TooLarge("level count exceeds budget; delta too close to 1")
    while delta ** (k_max - 1) <= space.minsep:
        k_max -= 1

    coarse_target = 2.0 * space.a0 * space.diam
    k_min = min(k_max, 0)
    while delta ** k_min < coarse_target:
        k_min -= 1
        if k_max - k_min > MAX_LEVELS:
            raise TooLarge("level count exceeds budget; delta too close to 1")

    levels = {}
    base = min(k_max, max(k_min, 0))
    levels[base] = _greedy_extend(space.dist, delta ** base, scan, [])
    for k in range(base - 1, k_min - 1, -1):
        prev = levels[k + 1]
        sub_scan = prev[np.argsort(_ranks(scan, n)[prev], kind="stable")]
        levels[k] = _greedy_extend(space.dist, delta ** k, sub_scan, [])
    for k in range(base + 1, k_max + 1):
        levels[k] = _greedy_extend(space.dist, delta ** k, scan, levels[k - 1])

    assert len(levels[k_min]) == 1, "coarsest level must be a single root"
    assert len(levels[k_max]) == n, "finest level must resolve every point"

    ydiff = {}
    for k in range(k_min, k_max):
        held = set(levels[k].tolist())
        ydiff[k] = np.array([p for p in levels[k + 1] if p not in held],
                            dtype=int)
    return NestedNets(delta, k_min, k_max, levels, ydiff, order_policy, scan)


def _ranks(scan: np.ndarray, n: int) -> np.ndarray:
    rank = np.empty(n, dtype=int)
    rank[scan] = np.arange(n)
    return rank


def verify_nets(nets: NestedNets, space: QuasiMetricSpace) -> dict:
    """Check separation, density, nestedness and the level count contract."""
    report = {"levels": {}, "ok": True}
    prev_set = None
    for k in nets.level_range:
        pts = nets.levels[k]
        scale = nets.scale(k)
        entry = {"size": int(len(pts))}
        if len(pts) > 1:
            sub = space.dist[np.ix_(pts, pts)]
            off = sub[~np.eye(len(pts), dtype=bool)]
            entry["separation_ratio"] = float(off.min() / scale)
            entry["separation_ok"] = bool(off.min() >= scale)
        else:
            entry["separation_ratio"] = None
            entry["separation_ok"] = True
        dens = space.dist[:, pts].min(axis=1).max()
        entry["density_ratio"] = float(dens / scale)
        entry["density_ok"] = bool(dens < 2.0 * space.a0 * scale)
        if prev_set is not None:
            entry["nested_ok"] = prev_set.issubset(set(pts.tolist()))
        else:
            entry["nested_ok"] = True
        prev_set = set(pts.tolist())
        entry_ok = entry["separation_ok"] and entry["density_ok"] and entry["nested_ok"]
        report["levels"][k] = entry
        report["ok"] = report["ok"] and entry_ok
    report["root_ok"] = len(nets.levels[nets.k_min]) == 1
    report["finest_ok"] = len(nets.levels[nets.k_max]) == space.n
    report["ok"] = bool(report["ok"] and report["root_ok"] and report["finest_ok"])
    return report


def nets_to_dict(nets: NestedNets) -> dict:
    return {
        "delta": nets.delta,
        "k_min": nets.k_min,
        "k_max": nets.k_max,
        "order_policy": nets.order_policy,
        "scan_order": nets.scan_order.tolist(),
        "levels": {str(k): nets.levels[k].tolist() for k in nets.level_range},
    }


def nets_from_dict(payload: dict) -> NestedNets:
    delta = float(payload["delta"])
    k_min = int(payload["k_min"])
    k_max = int(payload["k_max"])
    levels = {int(k): np.array(v, dtype=int)
              for k, v in payload["levels"].items()}
    ydiff = {}
    for k in range(k_min, k_max):
        held = set(levels[k].tolist())
        ydiff[k] = np.array([p for p in levels[k + 1] if p not in held],
                            dtype=int)
    return NestedNets(delta, k_min, k_max, levels, ydiff,
                      payload.get("order_policy", "input_order"),
                      np.array(payload["scan_order"], dtype=int))


def save_nets_json(nets: NestedNets, path) -> None:
    with open(path, "w") as fh:
        json.dump(nets_to_dict(nets), fh)
        fh.write("\n")


def load_nets_json(path) -> NestedNets:
    with open(path) as fh:
        return nets_from_dict(json.load(fh))
