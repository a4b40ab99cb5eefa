"""Monte Carlo harnesses: synthetic graphs, trial loops, summaries.

Everything here is driven by explicit seeds. Population randomness (graph
shapes, synthetic labels, delta composition) is fixed once per experiment
configuration; only the sampling seed varies across trials, so trial
spreads measure estimator behaviour, not population churn.

The draw-distribution helpers (:func:`twcs_trial_means`,
:func:`srs_trial_values`) generate per-trial statistics directly from the
design's distribution: the first stage is a size-proportional categorical
draw and the second stage count of correct triples in a without-replacement
subset is hypergeometric. This is distribution-identical to running the
draw procedures triple by triple and fast enough for 10^6 trials; the test
suite cross-checks it against the actual samplers.
"""

from dataclasses import dataclass

import numpy as np

from .cost import CostParams, Requirement
from .backends import OracleBackend
from .evolve import evolve_graphs, run_evolving
from .graph import DeltaBatch, KnowledgeGraph, Triple, build_graph
from .labels import LabelSource, extended_values, gen_rem
from .sampling import SamplingDesign
from .session import DEFAULT_BATCH_SIZE, DEFAULT_MIN_UNITS, run_static

_SIM_TAG = 71


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed), _SIM_TAG, int(stream))))


# ---------------------------------------------------------------------------
# Synthetic populations


def lognormal_sizes(n_clusters: int, seed: int, median: float = 4.5,
                    sigma: float = 1.2, max_size: int = 2000) -> np.ndarray:
    """Heavy-tailed cluster sizes resembling a web-extracted graph."""
    rng = _rng(seed, 1)
    raw = rng.lognormal(mean=np.log(median), sigma=sigma, size=n_clusters)
    return np.clip(np.round(raw), 1, max_size).astype(np.int64)


def sizes_for_triples(target_triples: int, seed: int, median: float = 4.5,
                      sigma: float = 1.2) -> np.ndarray:
    """Cluster sizes whose total is exactly ``target_triples``."""
    mean_size = np.exp(np.log(median) + sigma * sigma / 2.0)
    guess = max(int(target_triples / mean_size * 1.2), 8)
    sizes = lognormal_sizes(guess, seed, median, sigma)
    cum = np.cumsum(sizes)
    cut = int(np.searchsorted(cum, target_triples, side="left"))
    if cut >= len(sizes):
        raise ValueError("size sample too small for target; raise guess")
    sizes = sizes[:cut + 1]
    sizes[cut] = target_triples - (int(cum[cut - 1]) if cut > 0 else 0)
    return sizes[sizes > 0]


def synthetic_graph(sizes, prefix: str = "e") -> KnowledgeGraph:
    """A graph with the given cluster sizes and generated triple text."""
    groups = []
    for i, size in enumerate(sizes):
        subject = f"{prefix}{i}"
        triples = tuple(Triple(subject, f"p{j % 7}", f"v{i}_{j}")
                        for j in range(int(size)))
        groups.append((subject, triples))
    return build_graph(groups)


def synthetic_delta(batch_id: int, total_triples: int, seed: int,
                    median: float = 4.5, sigma: float = 1.2,
                    prefix: str = "d") -> DeltaBatch:
    """An insertions-only delta with the same size profile as the bases."""
    sizes = sizes_for_triples(total_triples, seed, median, sigma)
    groups = []
    for i, size in enumerate(sizes):
        subject = f"{prefix}{batch_id}_{i}"
        triples = tuple(Triple(subject, f"p{j % 7}", f"nv{batch_id}_{i}_{j}")
                        for j in range(int(size)))
        groups.append((subject, triples))
    return DeltaBatch(batch_id, tuple(groups))


def delta_labels(delta: DeltaBatch, accuracy: float, seed: int) -> np.ndarray:
    """Independent correctness bits for a delta's triples."""
    rng = _rng(seed, 1000 + delta.batch_id)
    return (rng.random(delta.triple_count) < accuracy).astype(np.uint8)


# ---------------------------------------------------------------------------
# Draw-distribution trials


def twcs_trial_means(g: KnowledgeGraph, ls: LabelSource, m: int, trials: int,
                     seed: int) -> np.ndarray:
    """One two-stage draw mean per trial, straight from the distribution."""
    ls.check_covers(g)
    rng = _rng(seed, 2)
    correct = np.add.reduceat(ls.values.astype(np.int64), g.offsets[:-1])
    idx = rng.choice(g.cluster_count, size=trials, p=g.pps_weights)
    sizes = g.cluster_sizes[idx]
    take = np.minimum(sizes, m)
    good = rng.hypergeometric(correct[idx], sizes - correct[idx], take)
    return good / take


def srs_trial_values(g: KnowledgeGraph, ls: LabelSource, trials: int,
                     seed: int) -> np.ndarray:
    """Label of one uniformly drawn triple per trial."""
    ls.check_covers(g)
    rng = _rng(seed, 3)
    positions = rng.integers(0, g.triple_count, size=trials)
    return ls.values[positions].astype(float)


# ---------------------------------------------------------------------------
# Session trials


@dataclass
class TrialSummary:
    """Per-seed results of repeated full evaluation sessions."""

    design: str
    estimates: np.ndarray
    moes: np.ndarray
    n_units: np.ndarray
    n_triples: np.ndarray
    unique_entities: np.ndarray
    cost_seconds: np.ndarray

    @property
    def mean_estimate(self) -> float:
        return float(self.estimates.mean())

    @property
    def mean_cost_hours(self) -> float:
        return float(self.cost_seconds.mean()) / 3600.0

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "trials": len(self.estimates),
            "mean_estimate": self.mean_estimate,
            "std_estimate": float(self.estimates.std(ddof=1))
                            if len(self.estimates) > 1 else 0.0,
            "mean_cost_hours": self.mean_cost_hours,
            "std_cost_hours": float(self.cost_seconds.std(ddof=1)) / 3600.0
                              if len(self.cost_seconds) > 1 else 0.0,
            "mean_units": float(self.n_units.mean()),
            "mean_triples": float(self.n_triples.mean()),
        }


def static_trials(g: KnowledgeGraph, ls: LabelSource, design: SamplingDesign,
                  req: Requirement, seeds, cp: CostParams = CostParams(),
                  batch_size: int = DEFAULT_BATCH_SIZE,
                  min_units: int = DEFAULT_MIN_UNITS) -> TrialSummary:
    """Run one full session per seed against the oracle backend."""
    backend = OracleBackend(ls)
    rows = []
    for seed in seeds:
        result = run_static(g, design, req, backend, cp=cp, seed=int(seed),
                            batch_size=batch_size, min_units=min_units)
        est = result.estimate
        cost = result.cost
        rows.append((est.mu_hat, est.moe, est.n_units, cost.triples,
                     cost.unique_entities, cost.seconds))
    arr = np.array(rows, dtype=float)
    return TrialSummary(design.kind, arr[:, 0], arr[:, 1],
                        arr[:, 2].astype(int), arr[:, 3].astype(int),
                        arr[:, 4].astype(int), arr[:, 5])


# ---------------------------------------------------------------------------
# Evolving trials


@dataclass
class EvolvingConfig:
    """A fixed evolving population: base graph, deltas, labels."""

    graphs: list[KnowledgeGraph]
    deltas: list[DeltaBatch]
    labels: LabelSource            # covers the final evolved graph
    true_by_step: np.ndarray


def build_evolving_config(base_triples: int, base_accuracy: float,
                          delta_fracs, delta_accuracy: float,
                          seed: int, median: float = 4.5,
                          sigma: float = 1.2) -> EvolvingConfig:
    """Base graph plus one delta per requested fraction of the base size."""
    base = synthetic_graph(sizes_for_triples(base_triples, seed,
                                             median, sigma))
    base_ls = gen_rem(base, 1.0 - base_accuracy, seed)
    deltas = [synthetic_delta(j + 1, max(1, int(round(frac * base_triples))),
                              seed, median, sigma)
              for j, frac in enumerate(delta_fracs)]
    graphs = evolve_graphs(base, deltas)
    values = base_ls.values
    for delta in deltas:
        values = np.concatenate(
            [values, delta_labels(delta, delta_accuracy, seed)])
    ls = LabelSource(values, graphs[-1].checksum(), "evolving",
                     {"base_accuracy": base_accuracy,
                      "delta_accuracy": delta_accuracy, "seed": seed})
    true_by_step = np.array([
        float(values[:g.triple_count].mean()) for g in graphs])
    return EvolvingConfig(graphs, deltas, ls, true_by_step)


def evolving_trials(cfg: EvolvingConfig, method: str, m: int,
                    req: Requirement, seeds, cp: CostParams = CostParams(),
                    batch_size: int = DEFAULT_BATCH_SIZE,
                    min_units: int = DEFAULT_MIN_UNITS) -> dict:
    """Per-seed step traces for one method over a fixed evolution.

    Returns arrays of shape (trials, steps+1): estimates, margins, step
    cost seconds, cumulative seconds, plus final-state unit counts.
    """
    backend = OracleBackend(cfg.labels)
    estimates, moes, step_costs, cum_costs, units = [], [], [], [], []
    for seed in seeds:
        records = run_evolving(cfg.graphs, cfg.deltas, method, m, req,
                               backend, cp=cp, seed=int(seed),
                               batch_size=batch_size, min_units=min_units)
        estimates.append([r.estimate.mu_hat for r in records])
        moes.append([r.estimate.moe for r in records])
        step_costs.append([r.step_seconds for r in records])
        cum_costs.append([r.cum_seconds for r in records])
        units.append([r.estimate.n_units for r in records])
    return {"method": method,
            "estimates": np.array(estimates),
            "moes": np.array(moes),
            "step_seconds": np.array(step_costs),
            "cum_seconds": np.array(cum_costs),
            "n_units": np.array(units),
            "true_by_step": cfg.true_by_step}
