"""Point estimates, variances and confidence intervals for all designs.

Each estimator turns per-draw statistics into an :class:`Estimate` carrying
the accuracy estimate mu_hat, its estimated variance, the margin of error
moe = z_{alpha/2} * sqrt(variance), and the normal-approximation interval
mu_hat +/- moe.

Design notes shared by all of them:

* Cluster estimators need at least two draws for a variance; with a single
  draw the margin of error is the +inf sentinel so a stopping rule can
  never fire on it.
* mu_hat is reported as computed. The rcs estimator in particular is
  unbiased but unbounded and may leave [0, 1] on small samples.
* Interval endpoints are kept unclipped internally; ``ci_clipped`` gives
  the [0, 1]-clipped version for reporting.
* A degenerate flag marks all-equal samples (variance exactly zero), where
  the normal interval collapses to a point and understates uncertainty.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .cost import SampleFootprint
from .stats import z_value


@dataclass(frozen=True)
class Estimate:
    mu_hat: float
    variance_hat: float | None
    moe: float
    ci_low: float
    ci_high: float
    alpha: float
    n_units: int
    n_triples: int
    degenerate: bool = False
    footprint: SampleFootprint | None = None

    def ci_clipped(self) -> tuple[float, float]:
        return (min(max(self.ci_low, 0.0), 1.0),
                min(max(self.ci_high, 0.0), 1.0))

    def with_footprint(self, fp: SampleFootprint) -> "Estimate":
        return replace(self, footprint=fp)

    def to_dict(self) -> dict:
        lo, hi = self.ci_clipped()
        return {
            "mu_hat": self.mu_hat,
            "variance_hat": self.variance_hat,
            "moe": self.moe if math.isfinite(self.moe) else None,
            "ci_low": lo,
            "ci_high": hi,
            "alpha": self.alpha,
            "n_units": self.n_units,
            "n_triples": self.n_triples,
            "degenerate": self.degenerate,
            "footprint": None if self.footprint is None else {
                "unique_entities": self.footprint.unique_entities,
                "triples": self.footprint.triples,
            },
        }


def _finish(mu: float, variance: float | None, alpha: float, n_units: int,
            n_triples: int) -> Estimate:
    if variance is None:
        moe = math.inf
        lo, hi = -math.inf, math.inf
        degenerate = False
    else:
        moe = z_value(alpha) * math.sqrt(variance)
        lo, hi = mu - moe, mu + moe
        degenerate = variance == 0.0
    return Estimate(mu, variance, moe, lo, hi, alpha, n_units, n_triples,
                    degenerate)


def est_srs(labels, alpha: float) -> Estimate:
    """Simple random sampling: sample mean with plug-in binomial variance
    mu_hat * (1 - mu_hat) / n."""
    values = np.asarray(labels, dtype=float)
    n = len(values)
    if n < 1:
        raise ValueError("need at least one label")
    mu = float(values.mean())
    variance = mu * (1.0 - mu) / n if n >= 2 else None
    return _finish(mu, variance, alpha, n, n)


def _between_draw(stats_in, alpha: float, n_triples: int) -> Estimate:
    """Mean of iid per-draw statistics with the sample variance of the
    mean, (1 / (n(n-1))) * sum (x_k - mean)^2."""
    values = np.asarray(stats_in, dtype=float)
    n = len(values)
    if n < 1:
        raise ValueError("need at least one draw")
    mu = float(values.mean())
    if n >= 2:
        variance = float(np.sum((values - mu) ** 2)) / (n * (n - 1))
    else:
        variance = None
    return _finish(mu, variance, alpha, n, n_triples)


def est_rcs(taus, n_clusters: int, n_triples_total: int, alpha: float,
            n_triples_annotated: int | None = None) -> Estimate:
    """Random cluster sampling: per-draw statistic (N / M) * tau_k where
    tau_k is the number of correct triples in the drawn cluster."""
    taus = np.asarray(taus, dtype=float)
    if len(taus) < 1:
        raise ValueError("need at least one draw")
    scale = n_clusters / n_triples_total
    annotated = (n_triples_annotated if n_triples_annotated is not None
                 else len(taus))
    return _between_draw(scale * taus, alpha, annotated)


def est_wcs(cluster_means, alpha: float,
            n_triples_annotated: int | None = None) -> Estimate:
    """Weighted cluster sampling: the plain mean of per-cluster accuracies
    is unbiased because draws are proportional to cluster size."""
    means = np.asarray(cluster_means, dtype=float)
    annotated = (n_triples_annotated if n_triples_annotated is not None
                 else len(means))
    return _between_draw(means, alpha, annotated)


def est_twcs(draw_means, alpha: float,
             n_triples_annotated: int | None = None) -> Estimate:
    """Two-stage weighted cluster sampling: the mean of second-stage sample
    means. The second stage is unbiased within each cluster, so the
    estimator matches wcs in expectation at any m."""
    return est_wcs(draw_means, alpha, n_triples_annotated)


def est_stratified(strata: list[tuple[float, Estimate]]) -> Estimate:
    """Combine per-stratum estimates with weights summing to one:
    mu = sum W_h mu_h, variance = sum W_h^2 var_h."""
    if not strata:
        raise ValueError("need at least one stratum")
    weights = np.array([w for w, _ in strata], dtype=float)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"stratum weights must sum to 1, got {weights.sum()}")
    if (weights < 0).any():
        raise ValueError("stratum weights must be >= 0")
    alphas = {e.alpha for _, e in strata}
    if len(alphas) != 1:
        raise ValueError("strata were estimated at different alpha levels")
    alpha = alphas.pop()

    mu = float(sum(w * e.mu_hat for w, e in strata))
    n_units = sum(e.n_units for _, e in strata)
    n_triples = sum(e.n_triples for _, e in strata)
    if any(e.variance_hat is None for w, e in strata if w > 0):
        return _finish(mu, None, alpha, n_units, n_triples)
    variance = float(sum(w * w * e.variance_hat for w, e in strata if w > 0))
    return _finish(mu, variance, alpha, n_units, n_triples)
