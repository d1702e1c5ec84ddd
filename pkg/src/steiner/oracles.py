"""Independent reference solvers used to validate the flow method.

None of these share code with the descent tracer beyond plain objective
evaluation, so agreement between a flow result and an oracle is a genuine
cross-check rather than a tautology.
"""

from dataclasses import dataclass

import numpy as np

from .core import AnchorSet, Objective
from .errors import ConfigError, InputError
from .potentials import PotentialSpec

GRID_CELL_LIMIT = 100_000_000


@dataclass(frozen=True, eq=False)
class OracleReport:
    """Result of one oracle run.

    ``iterations`` counts fixed-point iterations for Weiszfeld and lattice
    cells scanned for the grid search (0 for the closed-form centroid).
    ``history`` carries per-iteration objective values when the caller
    requested them.
    """

    location: np.ndarray
    value: float
    iterations: int
    method: str
    converged: bool = True
    history: tuple[float, ...] | None = None


def _euclidean_objective(anchors: AnchorSet, weights) -> Objective:
    if weights is None:
        spec = PotentialSpec("euclidean", epsilon=0.0)
    else:
        spec = PotentialSpec("weighted_euclidean", epsilon=0.0, weights=tuple(weights))
    return Objective(anchors, spec)


def weiszfeld(anchors: AnchorSet, weights=None, tol: float = 1e-10,
              max_iter: int = 10_000, collect_history: bool = False) -> OracleReport:
    """Geometric-median fixed-point iteration, started from the centroid.

    x <- (sum w_i a_i / |x - a_i|) / (sum w_i / |x - a_i|)

    When an iterate lands within ``tol`` of an anchor, the anchor optimality
    condition |sum_{j != i} w_j (a_i - a_j)/|a_i - a_j|| <= w_i decides
    whether to return that anchor; otherwise a Vardi-Zhang pull-away step
    keeps the iteration total. Stops when the step norm drops to ``tol``;
    if the budget runs out the best iterate is returned flagged unconverged.
    """
    if not isinstance(anchors, AnchorSet):
        anchors = AnchorSet(anchors)
    if not (np.isfinite(tol) and tol > 0.0):
        raise InputError(f"tol: must be finite and > 0, got {tol}")
    a = anchors.points
    n = anchors.n
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise InputError(f"weights: expected {n} finite positive entries")

    obj = _euclidean_objective(anchors, weights)
    history: list[float] = []

    def report(x, iterations, converged):
        return OracleReport(
            location=np.array(x), value=obj.value(x), iterations=iterations,
            method="weiszfeld", converged=converged,
            history=tuple(history) if collect_history else None)

    if n == 1:
        return report(a[0], 0, True)

    x = (w[:, None] * a).sum(axis=0) / w.sum()
    if collect_history:
        history.append(obj.value(x))
    for it in range(1, max_iter + 1):
        d = np.linalg.norm(x - a, axis=1)
        near = d < tol
        if np.any(near):
            i = int(np.argmin(d))
            at_i = np.linalg.norm(a[i] - a, axis=1)
            same = at_i < tol
            w_here = float(w[same].sum())
            diff = a[i] - a[~same]
            r = (w[~same, None] * diff / at_i[~same, None]).sum(axis=0)
            rn = float(np.linalg.norm(r))
            if rn <= w_here:
                if collect_history:
                    history.append(obj.value(a[i]))
                return report(a[i], it, True)
            # Vardi-Zhang: blend the anchor with the Weiszfeld map that
            # excludes it, weighted by how far from optimal the anchor is.
            inv = w[~same] / at_i[~same]
            t_map = (inv[:, None] * a[~same]).sum(axis=0) / inv.sum()
            frac = w_here / rn
            x_new = (1.0 - frac) * t_map + frac * a[i]
        else:
            inv = w / d
            x_new = (inv[:, None] * a).sum(axis=0) / inv.sum()
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if collect_history:
            history.append(obj.value(x))
        if step <= tol:
            return report(x, it, True)
    return report(x, max_iter, False)


def centroid(anchors: AnchorSet) -> OracleReport:
    """Closed-form minimizer of the squared potential: the anchor mean."""
    if not isinstance(anchors, AnchorSet):
        anchors = AnchorSet(anchors)
    loc = anchors.points.mean(axis=0)
    obj = Objective(anchors, PotentialSpec("squared"))
    return OracleReport(location=loc, value=obj.value(loc), iterations=0,
                        method="centroid")


def grid_search(obj: Objective, box, spacing: float, chunk_elems: int = 4_000_000) -> OracleReport:
    """Brute-force scan of a regular lattice over ``box``.

    The lattice runs from each axis ``lo`` in steps of ``spacing`` up to
    ``hi``; scan order is lexicographic in the coordinates and value ties
    keep the lexicographically smallest point. Refuses lattices above
    ``GRID_CELL_LIMIT`` cells.
    """
    if not (np.isfinite(spacing) and spacing > 0.0):
        raise ConfigError(f"spacing: must be finite and > 0, got {spacing}")
    box = [(float(lo), float(hi)) for lo, hi in box]
    d = obj.dimension
    if len(box) != d:
        raise ConfigError(f"box: expected {d} axes, got {len(box)}")
    counts = []
    for k, (lo, hi) in enumerate(box):
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ConfigError(f"box[{k}]: expected finite lo <= hi, got [{lo}, {hi}]")
        counts.append(int(np.floor((hi - lo) / spacing * (1.0 + 1e-12))) + 1)
    total = int(np.prod(counts, dtype=np.int64))
    if total > GRID_CELL_LIMIT:
        raise ConfigError(
            f"box: lattice of {total} cells exceeds the {GRID_CELL_LIMIT} cell guard")

    axes = [lo + np.arange(c) * spacing for (lo, _), c in zip(box, counts)]
    chunk = max(1, chunk_elems // max(1, obj.anchors.n * d))
    best_val = np.inf
    best_flat = -1
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        multi = np.unravel_index(flat, counts)
        pts = np.column_stack([axes[k][multi[k]] for k in range(d)])
        vals = obj.value_many(pts)
        k = int(np.argmin(vals))  # first occurrence: lexicographic tie-break
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_flat = int(flat[k])
    multi = np.unravel_index(best_flat, counts)
    loc = np.array([axes[k][multi[k]] for k in range(d)])
    return OracleReport(location=loc, value=float(obj.value(loc)), iterations=total,
                        method="grid")
