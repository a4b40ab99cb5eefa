"""Entity-clustered triple store with deltas and snapshots.

A knowledge graph here is an ordered sequence of entity clusters, each
holding every triple that shares one subject id. Cluster order is the order
of first appearance in the source, and triples keep source order inside a
cluster, so the same file always produces the same graph and every triple
has a stable flat position (cluster offsets are exposed for that).

Growth happens through :class:`DeltaBatch` objects applied with
:func:`apply_delta`. Merge mode folds new triples into existing clusters;
independent mode appends each delta group as a cluster of its own, tagged
with the batch id, which is what the incremental estimation procedures
expect (the same entity id may then own several clusters, one per batch).

Snapshots are canonical TSV files with a version header and a sha256
checksum so that label files and session archives can assert they were
produced against the same graph.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

OBJECT_KINDS = ("entity", "data")

SNAPSHOT_FORMAT = "kgacc-graph"
SNAPSHOT_VERSION = 1


class GraphFormatError(ValueError):
    """Raised for malformed graph input; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class SnapshotError(ValueError):
    """Raised when a snapshot file cannot be restored."""


@dataclass(frozen=True, slots=True)
class Triple:
    subject: str
    predicate: str
    object: str
    object_kind: str = "data"

    def __post_init__(self):
        if self.object_kind not in OBJECT_KINDS:
            raise ValueError(f"object_kind must be one of {OBJECT_KINDS}, "
                             f"got {self.object_kind!r}")


@dataclass(frozen=True)
class EntityCluster:
    """All triples of one subject entity, in source order.

    ``batch`` is 0 for base clusters and the delta batch id for clusters
    added in independent mode.
    """

    entity_id: str
    triples: tuple[Triple, ...]
    batch: int = 0

    @property
    def size(self) -> int:
        return len(self.triples)

    @property
    def key(self) -> tuple[str, int]:
        return (self.entity_id, self.batch)


class KnowledgeGraph:
    """Immutable ordered collection of entity clusters.

    Derived index structures (sizes, flat offsets, draw weights) are
    computed once at construction. Positions: the triple at
    (cluster i, local j) has flat position ``offsets[i] + j``.
    """

    def __init__(self, clusters: tuple[EntityCluster, ...]):
        self.clusters = tuple(clusters)
        index: dict[tuple[str, int], int] = {}
        for i, cl in enumerate(self.clusters):
            if cl.size == 0:
                raise ValueError(f"cluster {cl.entity_id!r} is empty")
            if cl.key in index:
                raise ValueError(f"duplicate cluster key {cl.key!r}")
            index[cl.key] = i
        self.id_index = index
        self.cluster_sizes = np.array([c.size for c in self.clusters], dtype=np.int64)
        self.offsets = np.zeros(len(self.clusters) + 1, dtype=np.int64)
        np.cumsum(self.cluster_sizes, out=self.offsets[1:])
        self._checksum: str | None = None

    @property
    def cluster_count(self) -> int:
        return len(self.clusters)

    @property
    def triple_count(self) -> int:
        return int(self.offsets[-1])

    @property
    def pps_weights(self) -> np.ndarray:
        """Draw probabilities proportional to cluster size."""
        return self.cluster_sizes / self.triple_count

    def cluster_at(self, entity_id: str, batch: int = 0) -> EntityCluster:
        return self.clusters[self.id_index[(entity_id, batch)]]

    def cluster_of_position(self, position: int) -> tuple[int, int]:
        """Map a flat triple position to (cluster index, local index)."""
        if not 0 <= position < self.triple_count:
            raise IndexError(f"position {position} out of range")
        ci = int(np.searchsorted(self.offsets, position, side="right")) - 1
        return ci, position - int(self.offsets[ci])

    def triple_at(self, position: int) -> Triple:
        ci, li = self.cluster_of_position(position)
        return self.clusters[ci].triples[li]

    def position(self, cluster_index: int, local_index: int) -> int:
        return int(self.offsets[cluster_index]) + local_index

    def checksum(self) -> str:
        """sha256 over the canonical snapshot payload."""
        if self._checksum is None:
            h = hashlib.sha256()
            for line in _payload_lines(self):
                h.update(line.encode("utf-8"))
            self._checksum = h.hexdigest()
        return self._checksum

    def __repr__(self):
        return (f"KnowledgeGraph(clusters={self.cluster_count}, "
                f"triples={self.triple_count})")


@dataclass(frozen=True)
class DeltaBatch:
    """Insertions-only growth batch: one group of new triples per entity."""

    batch_id: int
    groups: tuple[tuple[str, tuple[Triple, ...]], ...]

    def __post_init__(self):
        if self.batch_id < 1:
            raise ValueError("batch_id must be >= 1 (0 is the base graph)")
        seen = set()
        for entity_id, triples in self.groups:
            if entity_id in seen:
                raise ValueError(f"duplicate group for entity {entity_id!r}")
            seen.add(entity_id)
            if len(triples) == 0:
                raise ValueError(f"empty group for entity {entity_id!r}")

    @property
    def triple_count(self) -> int:
        return sum(len(triples) for _, triples in self.groups)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.array([len(t) for _, t in self.groups], dtype=np.int64)


@dataclass(frozen=True)
class GraphStats:
    n_clusters: int
    n_triples: int
    mean_cluster_size: float
    size_histogram: dict[int, int]


def graph_stats(g: KnowledgeGraph) -> GraphStats:
    sizes, counts = np.unique(g.cluster_sizes, return_counts=True)
    return GraphStats(
        n_clusters=g.cluster_count,
        n_triples=g.triple_count,
        mean_cluster_size=g.triple_count / g.cluster_count,
        size_histogram={int(s): int(c) for s, c in zip(sizes, counts)},
    )


def build_graph(groups) -> KnowledgeGraph:
    """Build a graph from (entity_id, iterable of Triple) pairs, base batch."""
    clusters = tuple(EntityCluster(entity_id, tuple(triples))
                     for entity_id, triples in groups)
    return KnowledgeGraph(clusters)


def ingest(path, fmt: str = "tsv") -> KnowledgeGraph:
    """Read a graph from a TSV or ntriples-like file.

    TSV columns: subject, predicate, object, optional object_kind
    (defaults to "data"), optional extra columns (ignored; the fixture files
    carry gold labels in column 5, which the label module reads separately).

    The ntriples-like format is one ``<subject> <predicate> <object> .``
    statement per line; ``<...>`` objects are entities, quoted objects are
    data values.
    """
    if fmt == "tsv":
        rows = _read_tsv_rows(path)
    elif fmt == "ntriples":
        rows = _read_ntriples_rows(path)
    else:
        raise ValueError(f"unknown graph format {fmt!r}")

    order: list[str] = []
    grouped: dict[str, list[Triple]] = {}
    for triple in rows:
        if triple.subject not in grouped:
            grouped[triple.subject] = []
            order.append(triple.subject)
        grouped[triple.subject].append(triple)
    if not order:
        raise GraphFormatError(f"empty graph: no triples in {path}")
    return build_graph((s, grouped[s]) for s in order)


def _read_tsv_rows(path):
    triples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise GraphFormatError(
                    f"expected at least 3 tab-separated fields, got {len(parts)}",
                    line_no)
            kind = parts[3] if len(parts) > 3 and parts[3] else "data"
            if kind not in OBJECT_KINDS:
                raise GraphFormatError(f"bad object_kind {kind!r}", line_no)
            if not parts[0] or not parts[1]:
                raise GraphFormatError("empty subject or predicate", line_no)
            triples.append(Triple(parts[0], parts[1], parts[2], kind))
    return triples


def _read_ntriples_rows(path):
    triples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not line.endswith("."):
                raise GraphFormatError("statement must end with '.'", line_no)
            body = line[:-1].strip()
            try:
                subject, rest = _take_term(body, line_no)
                predicate, rest = _take_term(rest, line_no)
                obj, rest = _take_term(rest, line_no)
            except IndexError:
                raise GraphFormatError("truncated statement", line_no) from None
            if rest.strip():
                raise GraphFormatError(f"trailing content {rest.strip()!r}", line_no)
            kind = "entity" if obj[0] == "<" else "data"
            triples.append(Triple(_strip_term(subject), _strip_term(predicate),
                                  _strip_term(obj), kind))
    return triples


def _take_term(text: str, line_no: int) -> tuple[str, str]:
    text = text.lstrip()
    if not text:
        raise GraphFormatError("truncated statement", line_no)
    if text[0] == "<":
        end = text.find(">")
        if end < 0:
            raise GraphFormatError("unterminated '<' term", line_no)
        return text[:end + 1], text[end + 1:]
    if text[0] == '"':
        end = text.find('"', 1)
        if end < 0:
            raise GraphFormatError("unterminated quoted term", line_no)
        return text[:end + 1], text[end + 1:]
    raise GraphFormatError(f"term must start with '<' or '\"', got {text[0]!r}",
                           line_no)


def _strip_term(term: str) -> str:
    if term[0] == "<":
        return term[1:-1]
    return term[1:-1]


def apply_delta(g: KnowledgeGraph, delta: DeltaBatch, mode: str) -> KnowledgeGraph:
    """Apply an insertions-only delta, returning a new graph.

    mode="merge" appends each group's triples to the entity's base cluster
    (creating one if the entity is new). mode="independent" appends every
    group as a fresh cluster tagged with the delta's batch id; existing
    clusters are untouched, so cluster indices and flat positions of the old
    graph remain valid in the new one.
    """
    if mode == "independent":
        clusters = list(g.clusters)
        for entity_id, triples in delta.groups:
            clusters.append(EntityCluster(entity_id, triples, batch=delta.batch_id))
        return KnowledgeGraph(tuple(clusters))
    if mode == "merge":
        clusters = list(g.clusters)
        for entity_id, triples in delta.groups:
            key = (entity_id, 0)
            if key in g.id_index:
                i = g.id_index[key]
                clusters[i] = EntityCluster(entity_id,
                                            clusters[i].triples + triples)
            else:
                clusters.append(EntityCluster(entity_id, triples))
        return KnowledgeGraph(tuple(clusters))
    raise ValueError(f"unknown delta mode {mode!r}")


def _payload_lines(g: KnowledgeGraph):
    for cl in g.clusters:
        for t in cl.triples:
            yield (f"{t.subject}\t{t.predicate}\t{t.object}\t{t.object_kind}"
                   f"\t{cl.batch}\n")


def snapshot(g: KnowledgeGraph, path) -> str:
    """Write the canonical snapshot; returns the payload checksum."""
    if g.cluster_count == 0:
        raise SnapshotError("refusing to snapshot an empty graph")
    digest = g.checksum()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#{SNAPSHOT_FORMAT}\tv{SNAPSHOT_VERSION}\t{digest}\n")
        fh.write("#subject\tpredicate\tobject\tobject_kind\tbatch\n")
        for line in _payload_lines(g):
            fh.write(line)
    return digest


def restore(path) -> KnowledgeGraph:
    """Rebuild a graph from a snapshot, verifying version and checksum."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split("\t")
        if len(parts) != 3 or parts[0] != f"#{SNAPSHOT_FORMAT}":
            raise SnapshotError(f"not a {SNAPSHOT_FORMAT} snapshot: {path}")
        if parts[1] != f"v{SNAPSHOT_VERSION}":
            raise SnapshotError(
                f"unsupported snapshot version {parts[1]} (expected "
                f"v{SNAPSHOT_VERSION})")
        expected = parts[2]

        h = hashlib.sha256()
        clusters: list[EntityCluster] = []
        pending_key: tuple[str, int] | None = None
        pending: list[Triple] = []
        for line_no, raw in enumerate(fh, start=2):
            if raw.startswith("#"):
                continue
            h.update(raw.encode("utf-8"))
            parts = raw.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise SnapshotError(f"line {line_no}: expected 5 fields")
            subject, predicate, obj, kind, batch_str = parts
            try:
                batch = int(batch_str)
            except ValueError:
                raise SnapshotError(f"line {line_no}: bad batch id "
                                    f"{batch_str!r}") from None
            key = (subject, batch)
            if key != pending_key:
                if pending_key is not None:
                    clusters.append(EntityCluster(pending_key[0], tuple(pending),
                                                  batch=pending_key[1]))
                pending_key = key
                pending = []
            pending.append(Triple(subject, predicate, obj, kind))
        if pending_key is not None:
            clusters.append(EntityCluster(pending_key[0], tuple(pending),
                                          batch=pending_key[1]))

    if not clusters:
        raise SnapshotError("empty graph in snapshot")
    if h.hexdigest() != expected:
        raise SnapshotError("snapshot checksum mismatch: file is corrupt or "
                            "was edited")
    return KnowledgeGraph(tuple(clusters))
