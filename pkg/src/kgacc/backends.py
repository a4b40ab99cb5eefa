"""Annotation backends: where label requests go to get answered.

A backend receives the pending label requests of a session and returns a
mapping from triple position to a 0/1 correctness label. Three are
provided:

* :class:`OracleBackend` answers from a label source; the workhorse for
  simulation studies.
* :class:`FileBackend` writes a task sheet to ``tasks.tsv`` and polls
  ``labels.tsv`` in the same directory until an external annotator (or
  script) has filled in every requested position.
* :class:`ServiceClient` is not a per-request backend but a thin client
  that runs a whole evaluation remotely against the HTTP annotation
  service and polls for the final estimate.
"""

import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .labels import LabelSource


@dataclass(frozen=True)
class LabelRequest:
    """One triple needing a label, with enough context to annotate it."""

    position: int
    cluster_index: int
    local_index: int
    entity_id: str
    subject: str
    predicate: str
    object: str
    object_kind: str
    stratum: int | None = None


class OracleBackend:
    def __init__(self, ls: LabelSource):
        self.ls = ls

    def collect(self, requests: list[LabelRequest]) -> dict[int, int]:
        return {r.position: self.ls.label(r.position) for r in requests}


class CountingBackend:
    """Wraps a backend and counts how often each position is requested."""

    def __init__(self, inner):
        self.inner = inner
        self.request_counts: dict[int, int] = {}

    def collect(self, requests: list[LabelRequest]) -> dict[int, int]:
        for r in requests:
            self.request_counts[r.position] = \
                self.request_counts.get(r.position, 0) + 1
        return self.inner.collect(requests)


class FileBackend:
    """Task sheet / label sheet exchange through a directory.

    ``tasks.tsv`` columns: position, entity_id, subject, predicate, object,
    object_kind. The annotator answers by appending ``position<TAB>label``
    rows to ``labels.tsv`` (0 = incorrect, 1 = correct). Already-answered
    positions may stay in the file; they are ignored on later rounds.
    """

    def __init__(self, directory, poll_interval: float = 1.0,
                 timeout: float = 24 * 3600.0):
        self.directory = Path(directory)
        self.poll_interval = poll_interval
        self.timeout = timeout

    @property
    def tasks_path(self) -> Path:
        return self.directory / "tasks.tsv"

    @property
    def labels_path(self) -> Path:
        return self.directory / "labels.tsv"

    def collect(self, requests: list[LabelRequest]) -> dict[int, int]:
        self.directory.mkdir(parents=True, exist_ok=True)
        with open(self.tasks_path, "w", encoding="utf-8") as fh:
            fh.write("#position\tentity_id\tsubject\tpredicate\tobject"
                     "\tobject_kind\n")
            for r in requests:
                fh.write(f"{r.position}\t{r.entity_id}\t{r.subject}"
                         f"\t{r.predicate}\t{r.object}\t{r.object_kind}\n")
        wanted = {r.position for r in requests}
        deadline = time.monotonic() + self.timeout
        while True:
            got = self._read_labels()
            if wanted <= got.keys():
                return {p: got[p] for p in wanted}
            if time.monotonic() >= deadline:
                missing = sorted(wanted - got.keys())[:5]
                raise TimeoutError(
                    f"timed out waiting for labels; first missing positions: "
                    f"{missing}")
            time.sleep(self.poll_interval)

    def _read_labels(self) -> dict[int, int]:
        if not self.labels_path.exists():
            return {}
        got = {}
        with open(self.labels_path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"labels.tsv line {line_no}: expected "
                                     "position<TAB>label")
                value = int(parts[1])
                if value not in (0, 1):
                    raise ValueError(f"labels.tsv line {line_no}: label must "
                                     "be 0 or 1")
                got[int(parts[0])] = value
        return got


class ServiceClient:
    """Drive a remote evaluation session over the HTTP annotation service."""

    def __init__(self, base_url: str, token: str | None = None,
                 poll_interval: float = 2.0, timeout: float = 24 * 3600.0):
        self.base_url = base_url.rstrip("/")
        self.poll_interval = poll_interval
        self.timeout = timeout
        headers = {}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=self.base_url, headers=headers,
                                    timeout=30.0)

    def create_session(self, payload: dict) -> str:
        resp = self._client.post("/sessions", json=payload)
        resp.raise_for_status()
        return resp.json()["session_id"]

    def estimate(self, session_id: str) -> dict:
        resp = self._client.get(f"/sessions/{session_id}/estimate")
        resp.raise_for_status()
        return resp.json()

    def wait_until_satisfied(self, session_id: str) -> dict:
        deadline = time.monotonic() + self.timeout
        while True:
            state = self.estimate(session_id)
            if state["satisfied"]:
                return state
            if time.monotonic() >= deadline:
                raise TimeoutError(f"session {session_id} not satisfied "
                                   f"after {self.timeout} s")
            time.sleep(self.poll_interval)

    def close(self):
        self._client.close()
