"""Label sources: gold labels and synthetic error models.

A label source assigns every triple of a graph a correctness bit, addressed
by flat triple position. Two synthetic generators are provided for
simulation studies:

REM (random error model)
    every triple is independently wrong with probability ``r_eps``.

BMM (binomial mixture model)
    each cluster first receives an accuracy level tied to its size:
    0.5 + e for clusters smaller than ``k``, and a logistic ramp
    1 / (1 + exp(-c * (size - k))) + e above, with cluster noise
    e ~ N(0, sigma^2) drawn once per cluster and the result clamped to
    [0, 1]. Triples are then correct independently at the cluster level.
    Larger clusters therefore tend to be more accurate, mimicking graphs
    whose well-curated entities accumulate both facts and quality.

Randomness is drawn from one child stream per cluster index, so labels of
existing clusters do not change when a graph grows by appended clusters,
and regenerating with the same seed is reproducible regardless of how many
clusters are processed.
"""

from dataclasses import dataclass, field

import numpy as np

from .graph import KnowledgeGraph

_REM_TAG = 101
_BMM_TAG = 102


class LabelCoverageError(ValueError):
    """Raised when a label source does not cover the requested positions."""


@dataclass(frozen=True)
class BmmParams:
    k: int = 3
    c: float = 0.01
    sigma: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.c < 0 or self.sigma < 0:
            raise ValueError("c and sigma must be >= 0")


@dataclass(frozen=True)
class LabelSource:
    """Correctness bits for every triple of one specific graph."""

    values: np.ndarray
    graph_checksum: str
    provenance: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.ascontiguousarray(self.values, dtype=np.uint8))

    def label(self, position: int) -> int:
        return int(self.values[position])

    def check_covers(self, g: KnowledgeGraph):
        if len(self.values) != g.triple_count:
            raise LabelCoverageError(
                f"label source covers {len(self.values)} triples, graph has "
                f"{g.triple_count}")
        if self.graph_checksum and self.graph_checksum != g.checksum():
            raise LabelCoverageError("label source was generated for a "
                                     "different graph (checksum mismatch)")


def _cluster_rng(seed: int, tag: int, cluster_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed), tag, int(cluster_index))))


def gen_rem(g: KnowledgeGraph, r_eps: float, seed: int) -> LabelSource:
    """Independent errors: each triple wrong with probability r_eps."""
    if not 0.0 <= r_eps <= 1.0:
        raise ValueError("r_eps must lie in [0, 1]")
    values = np.empty(g.triple_count, dtype=np.uint8)
    for i, size in enumerate(g.cluster_sizes):
        rng = _cluster_rng(seed, _REM_TAG, i)
        start = g.offsets[i]
        values[start:start + size] = rng.random(size) >= r_eps
    return LabelSource(values, g.checksum(), "rem",
                       {"r_eps": r_eps, "seed": seed})


def bmm_cluster_probs(g: KnowledgeGraph, params: BmmParams, seed: int) -> np.ndarray:
    """Per-cluster accuracy levels of the BMM, before triple-level draws."""
    sizes = g.cluster_sizes
    base = np.where(sizes < params.k, 0.5,
                    1.0 / (1.0 + np.exp(-params.c * (sizes - params.k))))
    noise = np.empty(g.cluster_count)
    for i in range(g.cluster_count):
        noise[i] = _cluster_rng(seed, _BMM_TAG, i).normal(0.0, params.sigma) \
            if params.sigma > 0 else 0.0
    return np.clip(base + noise, 0.0, 1.0)


def gen_bmm(g: KnowledgeGraph, params: BmmParams, seed: int) -> LabelSource:
    """Cluster-level accuracy tied to cluster size; see module docstring."""
    probs = bmm_cluster_probs(g, params, seed)
    values = np.empty(g.triple_count, dtype=np.uint8)
    for i, size in enumerate(g.cluster_sizes):
        rng = _cluster_rng(seed, _BMM_TAG, i)
        if params.sigma > 0:
            rng.normal(0.0, params.sigma)  # keep stream aligned with probs
        start = g.offsets[i]
        values[start:start + size] = rng.random(size) < probs[i]
    return LabelSource(values, g.checksum(), "bmm",
                       {"k": params.k, "c": params.c, "sigma": params.sigma,
                        "seed": seed})


def true_accuracy(g: KnowledgeGraph, ls: LabelSource) -> float:
    """Population accuracy: fraction of correct triples in the whole graph."""
    ls.check_covers(g)
    return float(ls.values.sum()) / g.triple_count


def cluster_accuracies(g: KnowledgeGraph, ls: LabelSource) -> np.ndarray:
    """Realised per-cluster accuracy under a label source."""
    ls.check_covers(g)
    sums = np.add.reduceat(ls.values.astype(np.int64), g.offsets[:-1])
    return sums / g.cluster_sizes


def labels_from_tsv(g: KnowledgeGraph, path, column: int = 4) -> LabelSource:
    """Read gold labels riding along a graph TSV (0/1 in the given column).

    The file must be the one the graph was ingested from: rows are matched
    to positions through the same group-by-subject pass.
    """
    by_subject: dict[str, list[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) <= column:
                raise LabelCoverageError(
                    f"line {line_no}: no label column {column}")
            try:
                value = int(parts[column])
            except ValueError:
                raise LabelCoverageError(
                    f"line {line_no}: bad label {parts[column]!r}") from None
            if value not in (0, 1):
                raise LabelCoverageError(f"line {line_no}: label must be 0 or 1")
            by_subject.setdefault(parts[0], []).append(value)

    values = np.empty(g.triple_count, dtype=np.uint8)
    for i, cl in enumerate(g.clusters):
        got = by_subject.get(cl.entity_id)
        if got is None or len(got) != cl.size:
            raise LabelCoverageError(
                f"labels for entity {cl.entity_id!r} do not match the graph")
        start = g.offsets[i]
        values[start:start + cl.size] = got
    return LabelSource(values, g.checksum(), "gold", {"path": str(path)})


def export_labels(g: KnowledgeGraph, ls: LabelSource, path):
    """Write (position, label) rows bound to the graph checksum."""
    ls.check_covers(g)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#kgacc-labels\tv1\t{g.checksum()}\t{ls.provenance}\n")
        for pos, value in enumerate(ls.values):
            fh.write(f"{pos}\t{int(value)}\n")


def import_labels(g: KnowledgeGraph, path) -> LabelSource:
    """Read labels written by :func:`export_labels`, verifying the checksum."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) != 4 or header[0] != "#kgacc-labels":
            raise LabelCoverageError(f"not a label export: {path}")
        if header[1] != "v1":
            raise LabelCoverageError(f"unsupported label export version "
                                     f"{header[1]}")
        if header[2] != g.checksum():
            raise LabelCoverageError("labels were exported for a different "
                                     "graph (checksum mismatch)")
        provenance = header[3]
        values = np.zeros(g.triple_count, dtype=np.uint8)
        seen = np.zeros(g.triple_count, dtype=bool)
        for line_no, raw in enumerate(fh, start=2):
            parts = raw.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise LabelCoverageError(f"line {line_no}: expected 2 fields")
            pos, value = int(parts[0]), int(parts[1])
            if not 0 <= pos < g.triple_count:
                raise LabelCoverageError(f"line {line_no}: position {pos} "
                                         "out of range")
            values[pos] = value
            seen[pos] = True
    if not seen.all():
        raise LabelCoverageError(f"label export covers {int(seen.sum())} of "
                                 f"{g.triple_count} positions")
    return LabelSource(values, g.checksum(), provenance, {"path": str(path)})


def extended_values(base: LabelSource, extra: np.ndarray,
                    g_evolved: KnowledgeGraph, provenance: str = "extended"
                    ) -> LabelSource:
    """Label source for an evolved graph: base labels plus delta labels.

    Valid for independent-mode growth, where old positions are preserved and
    new triples occupy the appended tail.
    """
    values = np.concatenate([base.values,
                             np.asarray(extra, dtype=np.uint8)])
    if len(values) != g_evolved.triple_count:
        raise LabelCoverageError(
            f"extended labels cover {len(values)} triples, evolved graph has "
            f"{g_evolved.triple_count}")
    return LabelSource(values, g_evolved.checksum(), provenance,
                       dict(base.params))
