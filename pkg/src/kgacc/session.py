"""Iterative evaluation sessions: draw, annotate, estimate, stop.

A session runs one evaluation of a static graph. It draws small batches
(default 10 primary units), asks an annotation backend for the labels it
does not already have, re-estimates, and stops once the margin of error is
at or below the requested epsilon and at least ``min_units`` units have
been drawn. The floor keeps the normal approximation honest and stops an
early lucky batch from terminating a run that has seen almost nothing.

Annotated labels live in a position-keyed cache that can be shared between
sessions; a position is only ever requested from the backend once, and
cost is charged only for requests this session actually made. Duplicate
draws of a cluster still count separately in the estimator, they are just
free to annotate.

Sessions archive to a JSON file (versioned, bound to the graph checksum)
and can resume: the archive carries every draw and label, so a resumed
session continues exactly where the original stopped without re-requesting
anything.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import strata as strata_mod
from .backends import LabelRequest
from .cost import CostParams, Requirement, SampleFootprint, cost_seconds
from .estimators import Estimate, est_rcs, est_srs, est_stratified, est_twcs, \
    est_wcs
from .graph import KnowledgeGraph
from .sampling import DrawBatch, SamplingDesign, rcs_draw, srs_batch_from_order, \
    srs_order, twcs_draw, wcs_draw

ARCHIVE_FORMAT = "kgacc-session"
ARCHIVE_VERSION = 1

STATUS_AWAITING = "awaiting_annotations"
STATUS_SATISFIED = "satisfied"

DEFAULT_BATCH_SIZE = 10
DEFAULT_MIN_UNITS = 30


class SessionError(RuntimeError):
    pass


@dataclass(frozen=True)
class CostReport:
    unique_entities: int
    triples: int
    seconds: float

    @property
    def hours(self) -> float:
        return self.seconds / 3600.0

    def to_dict(self) -> dict:
        return {"unique_entities": self.unique_entities,
                "triples": self.triples, "seconds": self.seconds,
                "hours": self.hours}


class Session:
    """One evaluation of one graph under one design.

    The constructor draws the first batch; the caller then alternates
    :meth:`pending_requests` / :meth:`supply_labels` until ``status`` turns
    satisfied (:func:`run_static` does exactly that against a backend).
    """

    def __init__(self, g: KnowledgeGraph, design: SamplingDesign,
                 req: Requirement, cp: CostParams = CostParams(),
                 seed: int = 0, batch_size: int = DEFAULT_BATCH_SIZE,
                 min_units: int = DEFAULT_MIN_UNITS,
                 session_id: str | None = None,
                 cache: dict[int, int] | None = None,
                 strata_spec: "strata_mod.StrataSpec | None" = None,
                 max_batches: int | None = None,
                 _defer_first_draw: bool = False):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if min_units < 1:
            raise ValueError("min_units must be >= 1")
        self.g = g
        self.design = design
        self.req = req
        self.cp = cp
        self.seed = int(seed)
        self.batch_size = batch_size
        self.min_units = min_units
        self.session_id = session_id or f"s{self.seed:x}-{g.checksum()[:8]}"
        self.max_batches = max_batches

        self.label_cache: dict[int, int] = cache if cache is not None else {}
        self.annotated_positions: set[int] = set()
        self._charged_clusters: set[int] = set()
        self.batches: list[DrawBatch] = []
        self.history: list[dict] = []
        self._pending: set[int] = set()
        self._estimate: Estimate | None = None
        self.status = STATUS_AWAITING

        self.strata = None
        if design.kind == "stratified_twcs":
            if strata_spec is not None:
                self.strata = strata_spec
            else:
                count = design.strata_count or \
                    strata_mod.default_strata_count(g)
                method = design.strata_method or "cum_sqrt_f"
                if method != "cum_sqrt_f":
                    raise ValueError(f"cannot build {method!r} strata without "
                                     "an explicit strata_spec")
                self.strata = strata_mod.cum_sqrt_f(g, count)
            if batch_size < 2 * self.strata.n_strata:
                raise ValueError(
                    f"batch_size {batch_size} cannot give each of "
                    f"{self.strata.n_strata} strata two units")
        self._srs_order = srs_order(g, self.seed) if design.kind == "srs" \
            else None

        if not _defer_first_draw:
            self._draw_next()

    # -- annotation plumbing -------------------------------------------

    def pending_positions(self) -> list[int]:
        return sorted(self._pending)

    def pending_requests(self) -> list[LabelRequest]:
        requests = []
        for pos in self.pending_positions():
            ci, li = self.g.cluster_of_position(pos)
            cl = self.g.clusters[ci]
            t = cl.triples[li]
            requests.append(LabelRequest(pos, ci, li, cl.entity_id,
                                         t.subject, t.predicate, t.object,
                                         t.object_kind))
        return requests

    def supply_labels(self, labels: dict[int, int]):
        if self.status != STATUS_AWAITING:
            raise SessionError(f"session is {self.status}, not awaiting "
                               "annotations")
        for pos, value in labels.items():
            pos = int(pos)
            if pos not in self._pending:
                raise SessionError(f"position {pos} is not pending")
            if value not in (0, 1):
                raise SessionError(f"label for position {pos} must be 0 or 1")
        for pos, value in labels.items():
            pos = int(pos)
            self.label_cache[pos] = int(value)
            self._charge(pos)
            self._pending.discard(pos)
        if not self._pending:
            self._advance()

    def _charge(self, pos: int):
        self.annotated_positions.add(pos)
        ci, _ = self.g.cluster_of_position(pos)
        self._charged_clusters.add(ci)

    # -- drawing and advancing -----------------------------------------

    def _advance(self):
        while True:
            self._estimate = self._compute_estimate()
            self.history.append({
                "batch_index": len(self.batches) - 1,
                "n_units": self._estimate.n_units,
                "n_triples": self._estimate.n_triples,
                "mu_hat": self._estimate.mu_hat,
                "moe": self._estimate.moe
                       if math.isfinite(self._estimate.moe) else None,
            })
            if self._stopped():
                self.status = STATUS_SATISFIED
                return
            if self.max_batches is not None \
                    and len(self.batches) >= self.max_batches:
                raise SessionError(
                    f"not satisfied after max_batches={self.max_batches}")
            self._draw_next()
            if self._pending:
                return

    def _stopped(self) -> bool:
        est = self._estimate
        if self.design.kind == "srs" \
                and len(self.annotated_positions) >= self.g.triple_count:
            return True  # census: the estimate is exact
        return est.moe <= self.req.epsilon and est.n_units >= self.min_units

    def _draw_next(self):
        index = len(self.batches)
        kind = self.design.kind
        if kind == "srs":
            batch = srs_batch_from_order(self.g, self._srs_order, self.seed,
                                         index, self.batch_size)
        elif kind == "rcs":
            batch = rcs_draw(self.g, self.batch_size, self.seed, index)
        elif kind == "wcs":
            batch = wcs_draw(self.g, self.batch_size, self.seed, index)
        elif kind == "twcs":
            batch = twcs_draw(self.g, self.batch_size, self.design.m,
                              self.seed, index)
        elif kind == "stratified_twcs":
            batch = self._draw_stratified(index)
        else:  # pragma: no cover - design validated at construction
            raise SessionError(f"cannot draw for design {kind}")
        self.batches.append(batch)
        for draw in batch.draws:
            for pos in draw.positions(self.g):
                if int(pos) not in self.label_cache:
                    self._pending.add(int(pos))

    def _draw_stratified(self, index: int) -> DrawBatch:
        spec = self.strata
        h_count = spec.n_strata
        drawn = np.zeros(h_count, dtype=np.int64)
        for b in self.batches:
            for d in b.draws:
                drawn[d.stratum] += 1
        variances = self._stratum_variances()
        target_total = int(drawn.sum()) + self.batch_size
        desired = strata_mod.allocate(spec.weights, target_total,
                                      variances=variances, floor=2)
        inc = np.maximum(desired - drawn, 0)
        while inc.sum() > self.batch_size:
            inc[int(np.argmax(inc))] -= 1
        while inc.sum() < self.batch_size:
            inc[int(np.argmax(desired - (drawn + inc)))] += 1

        draws = []
        for h in range(h_count):
            if inc[h] == 0:
                continue
            members = spec.members(h)
            sub = twcs_draw(self.g, int(inc[h]), self.design.m, self.seed,
                            index * h_count + h, cluster_indices=members,
                            stratum=h)
            draws.extend(sub.draws)
        return DrawBatch("stratified_twcs", self.seed, index, tuple(draws))

    def _stratum_variances(self) -> np.ndarray | None:
        if not self.batches:
            return None
        spec = self.strata
        means: list[list[float]] = [[] for _ in range(spec.n_strata)]
        for b in self.batches:
            for d in b.draws:
                means[d.stratum].append(self._draw_mean(d))
        variances = np.empty(spec.n_strata)
        for h, values in enumerate(means):
            if len(values) < 2:
                return None
            variances[h] = float(np.var(values, ddof=1))
        return variances

    # -- estimation ----------------------------------------------------

    def _draw_labels(self, draw) -> np.ndarray:
        positions = draw.positions(self.g)
        return np.array([self.label_cache[int(p)] for p in positions],
                        dtype=float)

    def _draw_mean(self, draw) -> float:
        return float(self._draw_labels(draw).mean())

    def _compute_estimate(self, batches=None) -> Estimate:
        if batches is None:
            batches = self.batches
        kind = self.design.kind
        alpha = self.req.alpha
        unique_triples = len(self._all_positions(batches))
        if kind == "srs":
            values = [self.label_cache[p] for p in self._all_positions(batches)]
            est = est_srs(values, alpha)
            if len(values) >= self.g.triple_count:
                est = Estimate(est.mu_hat, 0.0, 0.0, est.mu_hat, est.mu_hat,
                               alpha, est.n_units, est.n_triples)
        elif kind == "rcs":
            taus = [float(self._draw_labels(d).sum())
                    for b in batches for d in b.draws]
            est = est_rcs(taus, self.g.cluster_count, self.g.triple_count,
                          alpha, n_triples_annotated=unique_triples)
        elif kind in ("wcs", "twcs"):
            means = [self._draw_mean(d)
                     for b in batches for d in b.draws]
            fn = est_wcs if kind == "wcs" else est_twcs
            est = fn(means, alpha, n_triples_annotated=unique_triples)
        else:
            parts = []
            spec = self.strata
            means: list[list[float]] = [[] for _ in range(spec.n_strata)]
            for b in batches:
                for d in b.draws:
                    means[d.stratum].append(self._draw_mean(d))
            for h in range(spec.n_strata):
                parts.append((float(spec.weights[h]),
                              est_twcs(means[h], alpha)))
            est = est_stratified(parts)
        return est.with_footprint(self.footprint())

    def _all_positions(self, batches=None) -> set[int]:
        positions: set[int] = set()
        for b in (self.batches if batches is None else batches):
            for d in b.draws:
                positions.update(int(p) for p in d.positions(self.g))
        return positions

    def estimate(self) -> Estimate | None:
        return self._estimate

    def draw_means(self) -> list[float]:
        """Per-draw sample means in draw order (cluster designs)."""
        return [self._draw_mean(d) for b in self.batches for d in b.draws]

    @property
    def charged_clusters(self) -> set[int]:
        return set(self._charged_clusters)

    def footprint(self) -> SampleFootprint:
        return SampleFootprint(len(self._charged_clusters),
                               len(self.annotated_positions))

    def cost_report(self) -> CostReport:
        fp = self.footprint()
        return CostReport(fp.unique_entities, fp.triples,
                          cost_seconds(fp, self.cp))

    @property
    def satisfied(self) -> bool:
        return self.status == STATUS_SATISFIED

    # -- persistence ---------------------------------------------------

    def archive(self, path):
        doc = {
            "format": ARCHIVE_FORMAT,
            "version": ARCHIVE_VERSION,
            "session_id": self.session_id,
            "graph_checksum": self.g.checksum(),
            "status": self.status,
            "config": {
                "design": self.design.to_dict(),
                "epsilon": self.req.epsilon,
                "alpha": self.req.alpha,
                "c1": self.cp.c1,
                "c2": self.cp.c2,
                "seed": self.seed,
                "batch_size": self.batch_size,
                "min_units": self.min_units,
            },
            "batches": [b.to_dict() for b in self.batches],
            "labels": {str(p): self.label_cache[p]
                       for p in sorted(self._all_positions())
                       if p in self.label_cache},
            "annotated_positions": sorted(self.annotated_positions),
            "history": self.history,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def resume(cls, path, g: KnowledgeGraph,
               cache: dict[int, int] | None = None) -> "Session":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != ARCHIVE_FORMAT:
            raise SessionError(f"not a {ARCHIVE_FORMAT} archive: {path}")
        if doc.get("version") != ARCHIVE_VERSION:
            raise SessionError(f"unsupported archive version "
                               f"{doc.get('version')}")
        if doc["graph_checksum"] != g.checksum():
            raise SessionError("archive was recorded against a different "
                               "graph (checksum mismatch)")
        cfg = doc["config"]
        s = cls(g, SamplingDesign.from_dict(cfg["design"]),
                Requirement(cfg["epsilon"], cfg["alpha"]),
                CostParams(cfg["c1"], cfg["c2"]), seed=cfg["seed"],
                batch_size=cfg["batch_size"], min_units=cfg["min_units"],
                session_id=doc["session_id"], cache=cache,
                _defer_first_draw=True)
        s.batches = [DrawBatch.from_dict(b) for b in doc["batches"]]
        for key, value in doc["labels"].items():
            s.label_cache[int(key)] = int(value)
        for pos in doc["annotated_positions"]:
            s._charge(int(pos))
        s.history = list(doc["history"])
        if doc["status"] == STATUS_SATISFIED:
            s.status = STATUS_SATISFIED
            s._estimate = s._compute_estimate()
            return s
        s._pending = {int(p) for p in s._all_positions()
                      if int(p) not in s.label_cache}
        if s.batches and not s._pending:
            s._advance()
        elif not s.batches:
            s._draw_next()
        elif len(s.batches) > 1:
            # The last batch is incomplete; the current estimate covers the
            # completed prefix.
            s._estimate = s._compute_estimate(s.batches[:-1])
        return s


@dataclass
class RunResult:
    session: Session

    @property
    def estimate(self) -> Estimate:
        return self.session.estimate()

    @property
    def cost(self) -> CostReport:
        return self.session.cost_report()


def run_static(g: KnowledgeGraph, design: SamplingDesign, req: Requirement,
               backend, cp: CostParams = CostParams(), seed: int = 0,
               batch_size: int = DEFAULT_BATCH_SIZE,
               min_units: int = DEFAULT_MIN_UNITS,
               cache: dict[int, int] | None = None,
               strata_spec=None, max_batches: int | None = None,
               archive_path: str | Path | None = None) -> RunResult:
    """Drive a session against a backend until its stopping rule fires."""
    s = Session(g, design, req, cp=cp, seed=seed, batch_size=batch_size,
                min_units=min_units, cache=cache, strata_spec=strata_spec,
                max_batches=max_batches)
    while s.status == STATUS_AWAITING:
        requests = s.pending_requests()
        s.supply_labels(backend.collect(requests))
    if archive_path is not None:
        s.archive(archive_path)
    return RunResult(s)
