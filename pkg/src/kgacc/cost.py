"""Annotation cost model and sample size planning.

Annotating a sample costs time in two places: identifying each distinct
subject entity (c1 seconds, reading context, resolving the id) and
validating each drawn triple (c2 seconds). Total cost is therefore linear
in the footprint of the sample,

    cost = unique_entities * c1 + triples * c2.

Defaults c1 = 45 s and c2 = 25 s come from timing human annotators on a
web-sourced knowledge graph; entity identification dominates, which is why
cluster designs that validate several triples per identified entity are
cheaper than simple random sampling at equal precision.

Planning helpers translate a precision requirement (margin of error at a
confidence level) into required sample sizes:

* :func:`srs_required_n` for simple random sampling of triples,
* :func:`twcs_variance` for the single-draw variance of two-stage weighted
  cluster sampling with a per-cluster annotation budget m,
* :func:`optimal_m` for the m minimising modeled cost, searching a small
  integer range.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .stats import z_value

DEFAULT_C1 = 45.0
DEFAULT_C2 = 25.0


class RankDeficientError(ValueError):
    """Raised when cost observations cannot identify both parameters."""


@dataclass(frozen=True)
class CostParams:
    """Seconds per identified entity (c1) and per validated triple (c2)."""

    c1: float = DEFAULT_C1
    c2: float = DEFAULT_C2

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("cost parameters must be >= 0")


@dataclass(frozen=True)
class SampleFootprint:
    """What a sample costs to annotate: distinct entities and triples."""

    unique_entities: int
    triples: int

    def __post_init__(self):
        if self.unique_entities < 0 or self.triples < 0:
            raise ValueError("footprint counts must be >= 0")
        if self.unique_entities > self.triples:
            raise ValueError("unique_entities cannot exceed triples")


@dataclass(frozen=True)
class Requirement:
    """Target margin of error epsilon at confidence level 1 - alpha."""

    epsilon: float
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def z(self) -> float:
        return z_value(self.alpha)


def cost_seconds(fp: SampleFootprint, cp: CostParams = CostParams()) -> float:
    return fp.unique_entities * cp.c1 + fp.triples * cp.c2


def cost_hours(fp: SampleFootprint, cp: CostParams = CostParams()) -> float:
    return cost_seconds(fp, cp) / 3600.0


def fit_params(observations) -> CostParams:
    """Least-squares fit of (c1, c2) from (entities, triples, seconds) rows.

    If the unconstrained solution turns a coefficient negative, that
    coefficient is clamped to zero and the other refit, so returned
    parameters are always usable as costs.
    """
    rows = list(observations)
    if len(rows) < 2:
        raise RankDeficientError("need at least 2 observations to fit 2 "
                                 "parameters")
    a = np.array([[e, t] for e, t, _ in rows], dtype=float)
    y = np.array([s for _, _, s in rows], dtype=float)
    if np.linalg.matrix_rank(a) < 2:
        raise RankDeficientError("observations do not separate entity and "
                                 "triple costs (rank-deficient design)")
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    c1, c2 = float(sol[0]), float(sol[1])
    if c1 < 0 and c2 < 0:
        raise RankDeficientError("fit produced negative costs for both "
                                 "parameters")
    if c1 < 0:
        c1 = 0.0
        c2 = float(np.dot(a[:, 1], y) / np.dot(a[:, 1], a[:, 1]))
    elif c2 < 0:
        c2 = 0.0
        c1 = float(np.dot(a[:, 0], y) / np.dot(a[:, 0], a[:, 0]))
    if c1 < 0 or c2 < 0:
        raise RankDeficientError("fit produced negative costs")
    return CostParams(c1, c2)


def load_cost_observations(path) -> list[tuple[float, float, float]]:
    """Read (entities, triples, seconds) rows from a CSV file."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].startswith("#"):
                continue
            if len(rec) != 3:
                raise ValueError(f"expected 3 columns, got {len(rec)}: {rec}")
            rows.append((float(rec[0]), float(rec[1]), float(rec[2])))
    return rows


def save_params(cp: CostParams, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"c1={cp.c1:.6f}\nc2={cp.c2:.6f}\n")


def load_params(path) -> CostParams:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = float(value)
    return CostParams(values["c1"], values["c2"])


def expected_unique_entities(cluster_sizes, n_s: int) -> float:
    """Expected distinct entities touched by n_s independent triple draws.

    Cluster i is touched unless all draws miss it, so the expectation is
    sum_i (1 - (1 - M_i / M)^n_s). Draws are modeled with replacement,
    which is a close upper approximation for the without-replacement sample
    when n_s << M.
    """
    sizes = np.asarray(cluster_sizes, dtype=float)
    total = sizes.sum()
    if n_s < 0:
        raise ValueError("n_s must be >= 0")
    return float(np.sum(1.0 - np.power(1.0 - sizes / total, n_s)))


def srs_required_n(mu_hat: float, req: Requirement, n_seen: int = 1) -> int:
    """Triples a simple random sample needs for the requested precision.

    Uses the normal-approximation margin of error with the plug-in variance
    mu_hat * (1 - mu_hat). A degenerate estimate (0 or 1) would suggest
    zero variance, so it is floored at 1 / (4 * n_seen), the variance that
    cannot yet be ruled out after n_seen observations.
    """
    if not 0.0 <= mu_hat <= 1.0:
        raise ValueError("mu_hat must lie in [0, 1]")
    variance = mu_hat * (1.0 - mu_hat)
    if variance == 0.0:
        variance = 1.0 / (4.0 * max(n_seen, 1))
    z = req.z
    return math.ceil(variance * z * z / (req.epsilon * req.epsilon))


def srs_predicted_cost(cluster_sizes, mu_hat: float, req: Requirement,
                       cp: CostParams = CostParams(), n_seen: int = 1) -> float:
    """Modeled cost in seconds of a conforming simple random sample."""
    n = srs_required_n(mu_hat, req, n_seen)
    entities = expected_unique_entities(cluster_sizes, n)
    return entities * cp.c1 + n * cp.c2


def twcs_variance(cluster_sizes, cluster_acc, m: int,
                  mu: float | None = None) -> float:
    """Single-draw variance of the two-stage weighted cluster estimator.

    ``cluster_acc`` is the accuracy profile: the fraction of correct triples
    per cluster. With first-stage draws proportional to size and a second
    stage of min(M_i, m) triples taken without replacement, one draw's mean
    has variance

        (1/M) * [ sum_i M_i (mu_i - mu)^2
                  + (1/m) * sum_{i: M_i > m} ((M_i - m)/(M_i - 1))
                            * M_i * mu_i (1 - mu_i) ]

    The first term is the between-cluster spread; the second is the
    within-cluster sampling noise, which vanishes for clusters annotated
    exhaustively. A sample of n draws has variance V / n, so required n is
    V * z^2 / epsilon^2.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    sizes = np.asarray(cluster_sizes, dtype=float)
    acc = np.asarray(cluster_acc, dtype=float)
    if sizes.shape != acc.shape:
        raise ValueError("cluster_sizes and cluster_acc must align")
    total = sizes.sum()
    if mu is None:
        mu = float(np.dot(sizes, acc) / total)
    between = float(np.dot(sizes, (acc - mu) ** 2))
    partial = sizes > m
    if partial.any():
        s = sizes[partial]
        a = acc[partial]
        within = float(np.sum((s - m) / (s - 1.0) * s * a * (1.0 - a))) / m
    else:
        within = 0.0
    return (between + within) / total


def twcs_required_n(cluster_sizes, cluster_acc, m: int, req: Requirement,
                    mu: float | None = None) -> int:
    v = twcs_variance(cluster_sizes, cluster_acc, m, mu)
    z = req.z
    return max(1, math.ceil(v * z * z / (req.epsilon * req.epsilon)))


@dataclass(frozen=True)
class MCostPoint:
    m: int
    variance: float
    required_n: int
    predicted_cost_seconds: float


def m_cost_table(cluster_sizes, cluster_acc, req: Requirement,
                 cp: CostParams = CostParams(),
                 m_range: tuple[int, int] = (1, 20)) -> list[MCostPoint]:
    """Modeled cost of a conforming sample for each candidate m.

    Cost is bounded by n(m) * (c1 + m * c2): every draw identifies one
    entity and annotates at most m triples. Repeated draws of an entity are
    conservatively costed as fresh work, so this is a planning upper bound.
    """
    lo, hi = m_range
    if lo < 1 or hi < lo:
        raise ValueError("m_range must satisfy 1 <= lo <= hi")
    points = []
    for m in range(lo, hi + 1):
        v = twcs_variance(cluster_sizes, cluster_acc, m)
        n = twcs_required_n(cluster_sizes, cluster_acc, m, req)
        points.append(MCostPoint(m, v, n, n * (cp.c1 + m * cp.c2)))
    return points


def optimal_m(cluster_sizes, cluster_acc, req: Requirement,
              cp: CostParams = CostParams(),
              m_range: tuple[int, int] = (1, 20)) -> MCostPoint:
    """The candidate m with the lowest modeled cost; ties go to smaller m."""
    points = m_cost_table(cluster_sizes, cluster_acc, req, cp, m_range)
    best = points[0]
    for p in points[1:]:
        if p.predicted_cost_seconds < best.predicted_cost_seconds:
            best = p
    return best
