"""Incremental accuracy estimation for graphs growing by insertion batches.

Both procedures keep the running estimate valid for the evolved graph
G + delta while touching as few new annotations as possible. Deltas must be
applied in independent mode (each delta group becomes its own cluster), so
cluster indices and triple positions of earlier states stay valid and every
annotation ever paid for remains usable.

Reservoir procedure (:func:`rs_setup` / :func:`rs_step`)
    The sample is a weighted reservoir over all clusters, seeded on the
    base graph by revealing clusters in descending key order until the
    stopping rule holds; the reveal count becomes the reservoir capacity.
    Each delta streams through the reservoir; only admitted clusters are
    annotated (evictions waste their annotations, insertion keys make
    admissions rare as the graph grows). If the post-update margin of error
    is too wide, extra two-stage batches are drawn from the full evolved
    graph and pooled with the reservoir entries; these top-ups are
    discarded at the next update, though their labels stay cached and are
    free if drawn again. With capacity one, or equal cluster sizes, the
    reservoir inclusion law makes the pooled mean exactly unbiased; for
    unequal sizes at larger capacities it is the usual
    with-replacement approximation of a weighted without-replacement
    sample, which is what the sequence-level simulations exercise.

Stratified procedure (:func:`ss_setup` / :func:`ss_step`)
    Every delta becomes a new stratum with weight |delta| / |G + delta|.
    Old strata keep their samples untouched (weights just shrink), and new
    units are drawn from the newest delta only, in small increments with a
    floor of two so its variance is estimable, until the combined
    stratified margin of error meets the requirement again.

A shared :class:`EvolvingAnnotator` holds the label cache across steps and
charges cost only for annotation work that is new in the current step.
"""

from dataclasses import dataclass, field

import numpy as np

from .backends import LabelRequest
from .cost import CostParams, Requirement
from .estimators import Estimate, est_stratified, est_twcs
from .graph import DeltaBatch, KnowledgeGraph, apply_delta
from .sampling import ReservoirEntry, ReservoirState, SamplingDesign, \
    reservoir_keys, reservoir_subsample, reservoir_update, twcs_draw
from .session import DEFAULT_BATCH_SIZE, DEFAULT_MIN_UNITS, SessionError, \
    run_static

DEFAULT_SS_STEP = 2

# Draw-stream offsets keeping top-up and delta batches disjoint from the
# batch indices any static session would use on the same seed.
_RS_TOPUP_BASE = 1_000_000
_SS_DRAW_BASE = 2_000_000


class EvolvingAnnotator:
    """Cache-backed annotation with per-step cost accounting."""

    def __init__(self, backend, cp: CostParams = CostParams()):
        self.backend = backend
        self.cp = cp
        self.cache: dict[int, int] = {}
        self.charged_clusters: set[int] = set()
        self.step_new_entities = 0
        self.step_new_triples = 0

    def begin_step(self):
        self.step_new_entities = 0
        self.step_new_triples = 0

    def step_seconds(self) -> float:
        return (self.step_new_entities * self.cp.c1
                + self.step_new_triples * self.cp.c2)

    def absorb_session(self, session):
        """Fold a session's annotations into the shared cache accounting.

        The session must already share ``self.cache``. Its footprint is
        charged to the current step.
        """
        self.charged_clusters.update(session.charged_clusters)
        fp = session.footprint()
        self.step_new_entities += fp.unique_entities
        self.step_new_triples += fp.triples

    def annotate(self, g: KnowledgeGraph, cluster_index: int,
                 local: np.ndarray) -> np.ndarray:
        start = int(g.offsets[cluster_index])
        positions = [start + int(x) for x in local]
        missing = [p for p in positions if p not in self.cache]
        if missing:
            cl = g.clusters[cluster_index]
            requests = []
            for p in missing:
                li = p - start
                t = cl.triples[li]
                requests.append(LabelRequest(p, cluster_index, li,
                                             cl.entity_id, t.subject,
                                             t.predicate, t.object,
                                             t.object_kind))
            got = self.backend.collect(requests)
            for p in missing:
                self.cache[p] = int(got[p])
            self.step_new_triples += len(missing)
            if cluster_index not in self.charged_clusters:
                self.charged_clusters.add(cluster_index)
                self.step_new_entities += 1
        return np.array([self.cache[p] for p in positions], dtype=np.uint8)


@dataclass
class StepRecord:
    step: int
    method: str
    estimate: Estimate
    step_seconds: float
    cum_seconds: float
    new_entities: int
    new_triples: int

    def to_dict(self) -> dict:
        return {"step": self.step, "method": self.method,
                "estimate": self.estimate.to_dict(),
                "step_seconds": self.step_seconds,
                "cum_seconds": self.cum_seconds,
                "new_entities": self.new_entities,
                "new_triples": self.new_triples}


# ---------------------------------------------------------------------------
# Reservoir procedure


@dataclass
class RsRun:
    annotator: EvolvingAnnotator
    state: ReservoirState
    req: Requirement
    seed: int
    batch_size: int = DEFAULT_BATCH_SIZE
    min_units: int = DEFAULT_MIN_UNITS
    topup_means: list[float] = field(default_factory=list)
    topup_counter: int = 0
    cum_seconds: float = 0.0

    def estimate(self) -> Estimate:
        means = [e.mean for e in self.state.entries] + self.topup_means
        return est_twcs(means, self.req.alpha)


def rs_setup(g: KnowledgeGraph, m: int, req: Requirement,
             annotator: EvolvingAnnotator, seed: int,
             batch_size: int = DEFAULT_BATCH_SIZE,
             min_units: int = DEFAULT_MIN_UNITS) -> tuple[RsRun, StepRecord]:
    """Seed the reservoir on the base graph.

    Clusters are revealed in descending key order, so after stopping the
    reservoir holds exactly the weighted without-replacement sample of its
    final capacity, while the stopping rule decides what that capacity is.
    """
    annotator.begin_step()
    keys = reservoir_keys(g, seed)
    order = np.argsort(-keys, kind="stable")
    entries: list[ReservoirEntry] = []
    revealed = 0
    est = None
    while revealed < g.cluster_count:
        take = min(batch_size, g.cluster_count - revealed)
        for ci in order[revealed:revealed + take]:
            ci = int(ci)
            cl = g.clusters[ci]
            entry = ReservoirEntry(float(keys[ci]), len(entries), ci,
                                   cl.entity_id, cl.size)
            entry.local = reservoir_subsample(entry, m, seed)
            entry.labels = annotator.annotate(g, ci, entry.local)
            entries.append(entry)
        revealed += take
        est = est_twcs([e.mean for e in entries], req.alpha)
        if est.moe <= req.epsilon and est.n_units >= min_units:
            break
    else:
        if est is None or est.moe > req.epsilon:
            raise SessionError("reservoir revealed every cluster without "
                               "meeting the precision requirement")
    state = ReservoirState(capacity=revealed, m=m, entries=entries,
                           clusters_seen=g.cluster_count,
                           next_order=len(entries))
    run = RsRun(annotator, state, req, int(seed), batch_size, min_units)
    run.cum_seconds = annotator.step_seconds()
    record = StepRecord(0, "rs", run.estimate(), annotator.step_seconds(),
                        run.cum_seconds, annotator.step_new_entities,
                        annotator.step_new_triples)
    return run, record


def rs_step(run: RsRun, g_evolved: KnowledgeGraph, delta: DeltaBatch,
            step: int) -> StepRecord:
    """Stream one delta through the reservoir and restore the precision."""
    if run.state.clusters_seen + len(delta.groups) \
            != g_evolved.cluster_count:
        raise SessionError(
            "evolved graph does not match the reservoir stream; deltas must "
            "be applied in independent mode, in order")
    ann = run.annotator
    ann.begin_step()
    run.topup_means = []  # previous top-ups retire at the update
    admitted, _evicted = reservoir_update(run.state, delta, run.seed)
    for entry in admitted:
        entry.local = reservoir_subsample(entry, run.state.m, run.seed)
        entry.labels = ann.annotate(g_evolved, entry.cluster_index,
                                    entry.local)
    est = run.estimate()
    while est.moe > run.req.epsilon or est.n_units < run.min_units:
        batch = twcs_draw(g_evolved, run.batch_size, run.state.m, run.seed,
                          batch_index=_RS_TOPUP_BASE + run.topup_counter)
        run.topup_counter += 1
        for draw in batch.draws:
            values = ann.annotate(g_evolved, draw.cluster_index, draw.local)
            run.topup_means.append(float(values.mean()))
        est = run.estimate()
    run.cum_seconds += ann.step_seconds()
    return StepRecord(step, "rs", est, ann.step_seconds(), run.cum_seconds,
                      ann.step_new_entities, ann.step_new_triples)


# ---------------------------------------------------------------------------
# Stratified procedure


@dataclass
class SsStratum:
    label: str
    mass: int
    cluster_indices: np.ndarray | None
    draw_means: list[float] = field(default_factory=list)


@dataclass
class SsRun:
    annotator: EvolvingAnnotator
    m: int
    req: Requirement
    seed: int
    strata: list[SsStratum]
    min_units: int = DEFAULT_MIN_UNITS
    step_size: int = DEFAULT_SS_STEP
    draw_counter: int = 0
    cum_seconds: float = 0.0

    def estimate(self) -> Estimate:
        total = sum(s.mass for s in self.strata)
        parts = [(s.mass / total, est_twcs(s.draw_means, self.req.alpha))
                 for s in self.strata]
        return est_stratified(parts)


def ss_setup(g: KnowledgeGraph, m: int, req: Requirement,
             annotator: EvolvingAnnotator, seed: int,
             batch_size: int = DEFAULT_BATCH_SIZE,
             min_units: int = DEFAULT_MIN_UNITS,
             step_size: int = DEFAULT_SS_STEP) -> tuple[SsRun, StepRecord]:
    """Evaluate the base graph; its sample becomes the first stratum."""
    annotator.begin_step()
    result = run_static(g, SamplingDesign("twcs", m=m), req,
                        backend=annotator.backend, cp=annotator.cp,
                        seed=seed, batch_size=batch_size,
                        min_units=min_units, cache=annotator.cache)
    annotator.absorb_session(result.session)
    base = SsStratum("base", g.triple_count, None,
                     result.session.draw_means())
    run = SsRun(annotator, m, req, int(seed), [base], min_units, step_size)
    run.cum_seconds = annotator.step_seconds()
    record = StepRecord(0, "ss", run.estimate(), annotator.step_seconds(),
                        run.cum_seconds, annotator.step_new_entities,
                        annotator.step_new_triples)
    return run, record


def ss_step(run: SsRun, g_evolved: KnowledgeGraph, delta: DeltaBatch,
            step: int) -> StepRecord:
    """Add the delta as a new stratum and sample it until precision holds."""
    ann = run.annotator
    ann.begin_step()
    first_new = g_evolved.cluster_count - len(delta.groups)
    indices = np.arange(first_new, g_evolved.cluster_count, dtype=np.int64)
    expected_mass = int(g_evolved.cluster_sizes[indices].sum())
    if expected_mass != delta.triple_count:
        raise SessionError(
            "evolved graph tail does not match the delta; deltas must be "
            "applied in independent mode, in order")
    stratum = SsStratum(f"delta{delta.batch_id}", delta.triple_count, indices)
    run.strata.append(stratum)

    while True:
        if len(stratum.draw_means) >= 2:
            est = run.estimate()
            if est.moe <= run.req.epsilon and est.n_units >= run.min_units:
                break
        batch = twcs_draw(g_evolved, run.step_size, run.m, run.seed,
                          batch_index=_SS_DRAW_BASE + run.draw_counter,
                          cluster_indices=indices)
        run.draw_counter += 1
        for draw in batch.draws:
            values = ann.annotate(g_evolved, draw.cluster_index, draw.local)
            stratum.draw_means.append(float(values.mean()))
    run.cum_seconds += ann.step_seconds()
    return StepRecord(step, "ss", est, ann.step_seconds(), run.cum_seconds,
                      ann.step_new_entities, ann.step_new_triples)


# ---------------------------------------------------------------------------
# Shared driver


def evolve_graphs(g0: KnowledgeGraph,
                  deltas: list[DeltaBatch]) -> list[KnowledgeGraph]:
    """Base graph plus every evolved state, independent mode."""
    graphs = [g0]
    for d in deltas:
        graphs.append(apply_delta(graphs[-1], d, "independent"))
    return graphs


def run_evolving(graphs: list[KnowledgeGraph], deltas: list[DeltaBatch],
                 method: str, m: int, req: Requirement, backend,
                 cp: CostParams = CostParams(), seed: int = 0,
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 min_units: int = DEFAULT_MIN_UNITS,
                 ss_step_size: int = DEFAULT_SS_STEP) -> list[StepRecord]:
    """Run one method over a precomputed evolution; returns step records.

    ``graphs`` must be the output of :func:`evolve_graphs` for ``deltas``.
    The baseline method re-evaluates every evolved state from scratch with
    a fresh cache, which is what the incremental procedures are up against.
    """
    if len(graphs) != len(deltas) + 1:
        raise ValueError("need one graph state per delta plus the base")
    records: list[StepRecord] = []
    if method == "baseline":
        cum = 0.0
        for step, g in enumerate(graphs):
            result = run_static(g, SamplingDesign("twcs", m=m), req,
                                backend=backend, cp=cp, seed=seed + step,
                                batch_size=batch_size, min_units=min_units)
            cost = result.cost
            cum += cost.seconds
            records.append(StepRecord(step, "baseline", result.estimate,
                                      cost.seconds, cum, cost.unique_entities,
                                      cost.triples))
        return records
    annotator = EvolvingAnnotator(backend, cp)
    if method == "rs":
        run, record = rs_setup(graphs[0], m, req, annotator, seed,
                               batch_size, min_units)
        records.append(record)
        for step, delta in enumerate(deltas, start=1):
            records.append(rs_step(run, graphs[step], delta, step))
        return records
    if method == "ss":
        run, record = ss_setup(graphs[0], m, req, annotator, seed,
                               batch_size, min_units, ss_step_size)
        records.append(record)
        for step, delta in enumerate(deltas, start=1):
            records.append(ss_step(run, graphs[step], delta, step))
        return records
    raise ValueError(f"unknown evolving method {method!r}")
