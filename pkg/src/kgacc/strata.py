"""Stratification of entity clusters and sample allocation across strata.

Two ways to build a partition:

* :func:`cum_sqrt_f` stratifies on cluster size with the cumulative
  square-root-of-frequency rule: accumulate sqrt(count) over the distinct
  sizes in increasing order and close a stratum whenever the running total
  passes the next equal cut. A size whose sqrt(count) straddles a cut goes
  to the lower stratum. Closing is deferred while fewer distinct sizes
  remain than strata still to fill, so no stratum ever comes out empty.
* :func:`oracle_strata` partitions on realised cluster accuracy into
  strata of roughly equal triple mass. It needs full labels, so it is a
  simulation instrument for studying the best case, not a field method.

Stratum weights are triple-mass shares M[h] / M, matching the estimator's
expectation over within-stratum draws proportional to size.

:func:`allocate` splits a sample of n units over strata proportionally to
W_h (or to W_h * sqrt(var_h) when variances are supplied, the allocation
minimising combined variance), using largest-remainder rounding and then
enforcing a floor of two units per stratum so every stratum variance is
estimable.
"""

from dataclasses import dataclass

import numpy as np

from .graph import KnowledgeGraph
from .labels import LabelSource, cluster_accuracies

STRATA_METHODS = ("cum_sqrt_f", "oracle", "evolving_batch")


@dataclass(frozen=True)
class StrataSpec:
    """A partition of a graph's clusters into strata."""

    method: str
    membership: np.ndarray        # stratum index per cluster
    weights: np.ndarray           # triple-mass share per stratum
    size_bounds: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.method not in STRATA_METHODS:
            raise ValueError(f"unknown stratification method {self.method!r}")

    @property
    def n_strata(self) -> int:
        return len(self.weights)

    def members(self, h: int) -> np.ndarray:
        return np.nonzero(self.membership == h)[0]

    def to_dict(self) -> dict:
        return {"method": self.method,
                "membership": [int(x) for x in self.membership],
                "weights": [float(w) for w in self.weights],
                "size_bounds": self.size_bounds}

    @classmethod
    def from_dict(cls, d: dict) -> "StrataSpec":
        bounds = d.get("size_bounds")
        return cls(d["method"],
                   np.asarray(d["membership"], dtype=np.int64),
                   np.asarray(d["weights"], dtype=float),
                   None if bounds is None else
                   tuple((int(a), int(b)) for a, b in bounds))


def _mass_weights(g: KnowledgeGraph, membership: np.ndarray,
                  n_strata: int) -> np.ndarray:
    masses = np.zeros(n_strata)
    np.add.at(masses, membership, g.cluster_sizes)
    return masses / g.triple_count


def default_strata_count(g: KnowledgeGraph) -> int:
    return 2 if g.cluster_count < 1000 else 4


def cum_sqrt_f(g: KnowledgeGraph, n_strata: int) -> StrataSpec:
    """Size strata by the cumulative square-root-of-frequency rule."""
    if n_strata < 1:
        raise ValueError("n_strata must be >= 1")
    sizes, counts = np.unique(g.cluster_sizes, return_counts=True)
    if n_strata > len(sizes):
        raise ValueError(f"cannot build {n_strata} strata from "
                         f"{len(sizes)} distinct cluster sizes")
    phi = np.sqrt(counts.astype(float))
    total = phi.sum()
    cuts = total * np.arange(1, n_strata) / n_strata

    bounds: list[tuple[int, int]] = []
    start = 0
    running = 0.0
    for k in range(len(sizes)):
        running += phi[k]
        if len(bounds) == n_strata - 1:
            continue
        remaining_sizes = len(sizes) - k - 1
        remaining_strata = n_strata - len(bounds) - 1
        must_close = remaining_sizes == remaining_strata
        reached = running >= cuts[len(bounds)] - 1e-12
        if must_close or (reached and remaining_sizes >= remaining_strata):
            bounds.append((int(sizes[start]), int(sizes[k])))
            start = k + 1
    bounds.append((int(sizes[start]), int(sizes[-1])))

    upper = np.array([hi for _, hi in bounds[:-1]], dtype=np.int64)
    membership = np.searchsorted(upper, g.cluster_sizes, side="left")
    return StrataSpec("cum_sqrt_f", membership.astype(np.int64),
                      _mass_weights(g, membership, n_strata), tuple(bounds))


def oracle_strata(g: KnowledgeGraph, ls: LabelSource,
                  n_strata: int) -> StrataSpec:
    """Accuracy strata of roughly equal triple mass (needs full labels)."""
    if n_strata < 1:
        raise ValueError("n_strata must be >= 1")
    if n_strata > g.cluster_count:
        raise ValueError(f"cannot build {n_strata} strata from "
                         f"{g.cluster_count} clusters")
    acc = cluster_accuracies(g, ls)
    order = np.argsort(acc, kind="stable")
    target = g.triple_count / n_strata

    membership = np.empty(g.cluster_count, dtype=np.int64)
    stratum = 0
    mass = 0.0
    for rank, ci in enumerate(order):
        membership[ci] = stratum
        mass += g.cluster_sizes[ci]
        remaining_clusters = g.cluster_count - rank - 1
        remaining_strata = n_strata - stratum - 1
        if remaining_strata == 0:
            continue
        if (mass >= target * (stratum + 1) - 1e-9
                and remaining_clusters >= remaining_strata) \
                or remaining_clusters == remaining_strata:
            stratum += 1
    return StrataSpec("oracle", membership,
                      _mass_weights(g, membership, n_strata))


def _largest_remainder(raw: np.ndarray, n: int) -> np.ndarray:
    counts = np.floor(raw).astype(np.int64)
    short = n - int(counts.sum())
    if short > 0:
        remainders = raw - np.floor(raw)
        for h in np.argsort(-remainders, kind="stable")[:short]:
            counts[h] += 1
    return counts


def allocate(weights, n: int, variances=None, floor: int = 2) -> np.ndarray:
    """Allocate n units across strata; see module docstring."""
    w = np.asarray(weights, dtype=float)
    n_strata = len(w)
    if n < floor * n_strata:
        raise ValueError(f"n={n} cannot give every one of {n_strata} strata "
                         f"the floor of {floor} units")
    if variances is not None:
        v = np.asarray(variances, dtype=float)
        base = w * np.sqrt(np.maximum(v, 0.0))
        if not np.isfinite(base).all() or base.sum() <= 0:
            base = w.copy()
    else:
        base = w.copy()
    if base.sum() <= 0:
        raise ValueError("allocation weights must have positive total")

    counts = _largest_remainder(n * base / base.sum(), n)
    # Enforce the floor by stealing from the largest strata.
    while True:
        deficit = np.nonzero(counts < floor)[0]
        if len(deficit) == 0:
            break
        h = deficit[0]
        donor = int(np.argmax(counts))
        if counts[donor] <= floor:
            raise ValueError("cannot satisfy per-stratum floor")
        counts[donor] -= 1
        counts[h] += 1
    return counts
