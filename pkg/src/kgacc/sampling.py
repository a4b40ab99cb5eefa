"""Draw procedures for all sampling designs and the weighted reservoir.

Designs
-------
srs     simple random sampling of triples, without replacement
rcs     random cluster sampling: clusters uniformly, with replacement,
        every triple of a drawn cluster is annotated
wcs     weighted cluster sampling: clusters proportional to size, with
        replacement, annotated exhaustively
twcs    two-stage weighted cluster sampling: first stage as wcs, second
        stage min(M_i, m) triples without replacement inside the cluster
stratified_twcs
        independent twcs within strata of a partition, combined by the
        stratified estimator

Randomness discipline: every public draw function is a pure function of
(graph, parameters, seed, batch_index). Batches use the seed stream
(seed, design tag, batch_index) and two-stage draws spawn one child stream
per draw index, so concurrent harnesses and resumed sessions reproduce
byte-identical samples without sharing generator state.

The reservoir maintains a weighted sample without replacement over a
cluster stream (weight = cluster size): each cluster receives the key
u**(1/size) with u uniform on (0, 1), and the sample keeps the largest
keys. Streamed clusters are admitted when their key beats the current
minimum, which evicts it; on equal keys the older entry is evicted.
Admissions thin out as the stream grows (expected admissions over a
uniform-weight stream growing from N1 to N2 clusters is
capacity * (H(N2) - H(N1)) with H the harmonic number), which is what makes
reservoir maintenance cheap on an evolving graph.
"""

from dataclasses import dataclass, field

import numpy as np

from .graph import DeltaBatch, KnowledgeGraph

DESIGN_KINDS = ("srs", "rcs", "wcs", "twcs", "stratified_twcs")

_SRS_TAG = 11
_RCS_TAG = 12
_WCS_TAG = 13
_TWCS_TAG = 14
_RES_SEED_TAG = 21
_RES_UPDATE_TAG = 22
_RES_SUB_TAG = 23


@dataclass(frozen=True)
class SamplingDesign:
    kind: str
    m: int | None = None
    strata_method: str | None = None
    strata_count: int | None = None

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design {self.kind!r}")
        needs_m = self.kind in ("twcs", "stratified_twcs")
        if needs_m:
            if self.m is None or self.m < 1:
                raise ValueError(f"design {self.kind} requires m >= 1")
        elif self.m is not None:
            raise ValueError(f"design {self.kind} does not take m")
        if self.kind != "stratified_twcs" and (
                self.strata_method is not None or self.strata_count is not None):
            raise ValueError(f"design {self.kind} does not take strata options")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m,
                "strata_method": self.strata_method,
                "strata_count": self.strata_count}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingDesign":
        return cls(d["kind"], d.get("m"), d.get("strata_method"),
                   d.get("strata_count"))


@dataclass(frozen=True)
class ClusterDraw:
    """One drawn unit: a cluster and the local triple indices to annotate.

    For srs the unit is a single triple, represented as its cluster with one
    local index, so batches have a uniform shape across designs.
    """

    cluster_index: int
    entity_id: str
    cluster_size: int
    local: np.ndarray
    stratum: int | None = None

    def positions(self, g: KnowledgeGraph) -> np.ndarray:
        return int(g.offsets[self.cluster_index]) + self.local

    def to_dict(self) -> dict:
        return {"cluster_index": self.cluster_index,
                "entity_id": self.entity_id,
                "cluster_size": self.cluster_size,
                "local": [int(x) for x in self.local],
                "stratum": self.stratum}

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterDraw":
        return cls(d["cluster_index"], d["entity_id"], d["cluster_size"],
                   np.asarray(d["local"], dtype=np.int64), d.get("stratum"))


@dataclass(frozen=True)
class DrawBatch:
    design_kind: str
    seed: int
    batch_index: int
    draws: tuple[ClusterDraw, ...]

    @property
    def n_units(self) -> int:
        return len(self.draws)

    def to_dict(self) -> dict:
        return {"design_kind": self.design_kind, "seed": self.seed,
                "batch_index": self.batch_index,
                "draws": [d.to_dict() for d in self.draws]}

    @classmethod
    def from_dict(cls, d: dict) -> "DrawBatch":
        return cls(d["design_kind"], d["seed"], d["batch_index"],
                   tuple(ClusterDraw.from_dict(x) for x in d["draws"]))


def _rng(seed: int, tag: int, batch_index: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed), tag, int(batch_index))))


def _seq(seed: int, tag: int, batch_index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence((int(seed), tag, int(batch_index)))


def _whole_cluster_draw(g: KnowledgeGraph, ci: int) -> ClusterDraw:
    cl = g.clusters[ci]
    return ClusterDraw(ci, cl.entity_id, cl.size,
                       np.arange(cl.size, dtype=np.int64))


def srs_draw(g: KnowledgeGraph, n_s: int, seed: int) -> DrawBatch:
    """n_s triples uniformly without replacement, as single-triple draws."""
    if not 1 <= n_s <= g.triple_count:
        raise ValueError(f"n_s must lie in [1, {g.triple_count}], got {n_s}")
    rng = _rng(seed, _SRS_TAG)
    positions = rng.choice(g.triple_count, size=n_s, replace=False)
    return DrawBatch("srs", seed, 0, _srs_draws(g, positions))


def srs_order(g: KnowledgeGraph, seed: int) -> np.ndarray:
    """A full random order of triple positions; batched prefixes of this
    permutation form a growing without-replacement sample."""
    return _rng(seed, _SRS_TAG).permutation(g.triple_count)


def _srs_draws(g: KnowledgeGraph, positions) -> tuple[ClusterDraw, ...]:
    draws = []
    for pos in positions:
        ci, li = g.cluster_of_position(int(pos))
        cl = g.clusters[ci]
        draws.append(ClusterDraw(ci, cl.entity_id, cl.size,
                                 np.array([li], dtype=np.int64)))
    return tuple(draws)


def srs_batch_from_order(g: KnowledgeGraph, order: np.ndarray, seed: int,
                         batch_index: int, batch_size: int) -> DrawBatch:
    start = batch_index * batch_size
    positions = order[start:start + batch_size]
    if len(positions) == 0:
        raise ValueError("population exhausted: no triples left to draw")
    return DrawBatch("srs", seed, batch_index, _srs_draws(g, positions))


def rcs_draw(g: KnowledgeGraph, n: int, seed: int,
             batch_index: int = 0) -> DrawBatch:
    """n clusters uniformly with replacement, annotated exhaustively."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = _rng(seed, _RCS_TAG, batch_index)
    indices = rng.integers(0, g.cluster_count, size=n)
    return DrawBatch("rcs", seed, batch_index,
                     tuple(_whole_cluster_draw(g, int(ci)) for ci in indices))


def _pps_indices(g: KnowledgeGraph, n: int, rng: np.random.Generator,
                 cluster_indices=None) -> np.ndarray:
    if cluster_indices is None:
        return rng.choice(g.cluster_count, size=n, p=g.pps_weights)
    pool = np.asarray(cluster_indices, dtype=np.int64)
    sizes = g.cluster_sizes[pool]
    return pool[rng.choice(len(pool), size=n, p=sizes / sizes.sum())]


def wcs_draw(g: KnowledgeGraph, n: int, seed: int,
             batch_index: int = 0) -> DrawBatch:
    """n clusters proportional to size with replacement, exhaustive."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = _rng(seed, _WCS_TAG, batch_index)
    indices = _pps_indices(g, n, rng)
    return DrawBatch("wcs", seed, batch_index,
                     tuple(_whole_cluster_draw(g, int(ci)) for ci in indices))


def twcs_draw(g: KnowledgeGraph, n: int, m: int, seed: int,
              batch_index: int = 0, cluster_indices=None,
              stratum: int | None = None) -> DrawBatch:
    """Two-stage draw: n clusters proportional to size (optionally only
    from ``cluster_indices``), then min(size, m) triples without
    replacement inside each drawn cluster."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    streams = _seq(seed, _TWCS_TAG, batch_index).spawn(n + 1)
    rng = np.random.default_rng(streams[0])
    indices = _pps_indices(g, n, rng, cluster_indices)
    draws = []
    for k, ci in enumerate(indices):
        cl = g.clusters[int(ci)]
        if cl.size <= m:
            local = np.arange(cl.size, dtype=np.int64)
        else:
            sub = np.random.default_rng(streams[k + 1])
            local = sub.choice(cl.size, size=m, replace=False).astype(np.int64)
        draws.append(ClusterDraw(int(ci), cl.entity_id, cl.size, local,
                                 stratum=stratum))
    return DrawBatch("twcs", seed, batch_index, tuple(draws))


# ---------------------------------------------------------------------------
# Weighted reservoir


@dataclass
class ReservoirEntry:
    key: float
    order: int
    cluster_index: int
    entity_id: str
    size: int
    local: np.ndarray | None = None
    labels: np.ndarray | None = None

    @property
    def mean(self) -> float:
        if self.labels is None or len(self.labels) == 0:
            raise ValueError(f"entry for cluster {self.cluster_index} has no "
                             "annotations")
        return float(np.mean(self.labels))

    def to_dict(self) -> dict:
        return {"key": self.key, "order": self.order,
                "cluster_index": self.cluster_index,
                "entity_id": self.entity_id, "size": self.size,
                "local": None if self.local is None else
                         [int(x) for x in self.local],
                "labels": None if self.labels is None else
                          [int(x) for x in self.labels]}

    @classmethod
    def from_dict(cls, d: dict) -> "ReservoirEntry":
        return cls(d["key"], d["order"], d["cluster_index"], d["entity_id"],
                   d["size"],
                   None if d["local"] is None else
                   np.asarray(d["local"], dtype=np.int64),
                   None if d["labels"] is None else
                   np.asarray(d["labels"], dtype=np.uint8))


@dataclass
class ReservoirState:
    capacity: int
    m: int
    entries: list[ReservoirEntry] = field(default_factory=list)
    clusters_seen: int = 0
    next_order: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    def min_entry_index(self) -> int:
        best = 0
        for i in range(1, len(self.entries)):
            e, b = self.entries[i], self.entries[best]
            if (e.key, e.order) < (b.key, b.order):
                best = i
        return best

    def threshold(self) -> float:
        return self.entries[self.min_entry_index()].key

    def cluster_indices(self) -> list[int]:
        return [e.cluster_index for e in self.entries]

    def to_dict(self) -> dict:
        return {"capacity": self.capacity, "m": self.m,
                "clusters_seen": self.clusters_seen,
                "next_order": self.next_order,
                "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "ReservoirState":
        state = cls(d["capacity"], d["m"], clusters_seen=d["clusters_seen"],
                    next_order=d["next_order"])
        state.entries = [ReservoirEntry.from_dict(e) for e in d["entries"]]
        return state


def reservoir_keys(g: KnowledgeGraph, seed: int) -> np.ndarray:
    """Sampling key u**(1/size) for every cluster of the base graph."""
    rng = _rng(seed, _RES_SEED_TAG)
    u = rng.random(g.cluster_count)
    return u ** (1.0 / g.cluster_sizes)


def reservoir_seed(g: KnowledgeGraph, capacity: int, m: int,
                   seed: int) -> ReservoirState:
    """Initial reservoir over the base graph: the capacity largest keys."""
    keys = reservoir_keys(g, seed)
    state = ReservoirState(capacity=capacity, m=m)
    keep = min(capacity, g.cluster_count)
    top = np.argsort(-keys, kind="stable")[:keep]
    for ci in sorted(int(x) for x in top):
        cl = g.clusters[ci]
        state.entries.append(ReservoirEntry(float(keys[ci]), state.next_order,
                                            ci, cl.entity_id, cl.size))
        state.next_order += 1
    state.clusters_seen = g.cluster_count
    return state


def reservoir_update(state: ReservoirState, delta: DeltaBatch, seed: int
                     ) -> tuple[list[ReservoirEntry], list[ReservoirEntry]]:
    """Stream one delta through the reservoir, in group order.

    Cluster indices of admitted entries continue the stream count, matching
    the indices the groups receive when the delta is applied to the graph
    in independent mode. Returns (admitted, evicted); the state is updated
    in place. Admitted entries carry no annotations yet.
    """
    sizes = delta.group_sizes.astype(float)
    n = len(sizes)
    rng = _rng(seed, _RES_UPDATE_TAG, delta.batch_id)
    u = rng.random(n)
    keys = u ** (1.0 / sizes)

    admitted: list[ReservoirEntry] = []
    evicted: list[ReservoirEntry] = []
    j = 0
    while j < n:
        if len(state.entries) < state.capacity:
            _admit(state, float(keys[j]), state.clusters_seen + j,
                   delta.groups[j], admitted)
            j += 1
            continue
        # At capacity: jump to the next key beating the current minimum.
        threshold = state.threshold()
        ahead = np.nonzero(keys[j:] > threshold)[0]
        if len(ahead) == 0:
            break
        j += int(ahead[0])
        evicted.append(state.entries.pop(state.min_entry_index()))
        _admit(state, float(keys[j]), state.clusters_seen + j,
               delta.groups[j], admitted)
        j += 1
    state.clusters_seen += n
    return admitted, evicted


def _admit(state: ReservoirState, key: float, cluster_index: int, group,
           admitted: list):
    entity_id, triples = group
    entry = ReservoirEntry(key, state.next_order, cluster_index, entity_id,
                           len(triples))
    state.next_order += 1
    state.entries.append(entry)
    admitted.append(entry)


def reservoir_subsample(entry: ReservoirEntry, m: int, seed: int) -> np.ndarray:
    """Second-stage local indices for a reservoir entry.

    Keyed by cluster index so the subset is reproducible no matter when the
    entry was admitted.
    """
    if entry.size <= m:
        return np.arange(entry.size, dtype=np.int64)
    rng = _rng(seed, _RES_SUB_TAG, entry.cluster_index)
    return rng.choice(entry.size, size=m, replace=False).astype(np.int64)
