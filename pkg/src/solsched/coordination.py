"""Shared coordination store: models, solution pools, agent requests.

One logical writer: every mutation takes the store lock, appends a record
to the durable JSONL log, then updates the in-memory view, so concurrent
publishers linearize and a restarted store replays the log back to the
exact same pools, requests and model versions.  Agent liveness (heartbeats)
is deliberately volatile.

One-shot requests are claimed by exactly one agent at a time through
expiring leases; if the claimant dies, the lease lapses and the request
returns to pending.  The request's effect is applied through an idempotency
key, so a re-claimed request never applies its effect twice.  Running
optimize requests are never claimed -- any number of agents serve them
concurrently until the iteration budget is consumed or they are cancelled.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .modelio import canonical_dumps

__all__ = [
    "Clock",
    "SystemClock",
    "ScaledClock",
    "ManualClock",
    "SolutionPoolEntry",
    "AgentRequest",
    "AgentRecord",
    "StoreError",
    "VersionConflict",
    "StoreUnreachable",
    "CoordinationStore",
    "StoreClient",
    "LocalStoreClient",
    "problem_id_of",
]

PROTOCOL_VERSION = 1
DEFAULT_POOL_K = 10
DEFAULT_LEASE_SECONDS = 60.0


class StoreError(ValueError):
    pass


class VersionConflict(StoreError):
    """Stale model/state version; carries the current version."""

    def __init__(self, message: str, current_version: int):
        super().__init__(message)
        self.current_version = current_version


class StoreUnreachable(ConnectionError):
    pass


class Clock:
    def now(self) -> float:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class ScaledClock(Clock):
    """Virtual seconds running ``scale`` times faster than real time; lets
    tests exercise 60 s leases and multi-second latency in milliseconds."""

    def __init__(self, scale: float = 1000.0):
        self.scale = scale
        self._t0 = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._t0) * self.scale

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds / self.scale)


class ManualClock(Clock):
    """Fully deterministic clock for single-threaded harnesses: ``sleep``
    advances virtual time instantly."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def advance(self, seconds: float) -> None:
        with self._lock:
            self._now += seconds


@dataclass
class SolutionPoolEntry:
    problem_id: str
    rank_key: float
    schedule: dict[str, Any]
    estimate: dict[str, Any]
    producing_agent: str
    created_at: float
    model_version: int

    def to_doc(self) -> dict[str, Any]:
        return {
            "problem_id": self.problem_id, "rank_key": self.rank_key,
            "schedule": self.schedule, "estimate": self.estimate,
            "producing_agent": self.producing_agent,
            "created_at": self.created_at, "model_version": self.model_version,
        }

    @classmethod
    def from_doc(cls, d: dict[str, Any]) -> "SolutionPoolEntry":
        return cls(d["problem_id"], float(d["rank_key"]), d["schedule"], d["estimate"],
                   d["producing_agent"], float(d["created_at"]), int(d["model_version"]))


@dataclass
class AgentRequest:
    id: str
    kind: str  # "one_shot" | "running_optimize"
    payload: dict[str, Any]
    status: str = "pending"  # pending | claimed | done | failed | cancelled
    claimed_by: str | None = None
    lease_expiry: float | None = None
    created_at: float = 0.0
    result_ref: str | None = None
    error: str | None = None
    iterations_done: int = 0

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id, "kind": self.kind, "payload": self.payload,
            "status": self.status, "claimed_by": self.claimed_by,
            "lease_expiry": self.lease_expiry, "created_at": self.created_at,
            "result_ref": self.result_ref, "error": self.error,
            "iterations_done": self.iterations_done,
        }


@dataclass
class AgentRecord:
    agent_id: str
    last_heartbeat: float
    capabilities: dict[str, Any] = field(default_factory=dict)
    current_assignment: str | None = None


def problem_id_of(model_id: str, model_version: int, config_doc: dict[str, Any]) -> str:
    # "@" is a URL path character, so pool/progress ids stay path-safe
    import hashlib
    digest = hashlib.sha256(canonical_dumps(config_doc).encode()).hexdigest()[:12]
    return f"{model_id}@v{model_version}@{digest}"


class CoordinationStore:
    """Durable single-writer store; safe for concurrent callers."""

    def __init__(self, log_path: str | os.PathLike | None = None, *,
                 clock: Clock | None = None,
                 pool_k: int = DEFAULT_POOL_K,
                 lease_seconds: float = DEFAULT_LEASE_SECONDS,
                 claim_seed: int | None = None):
        self.clock = clock or SystemClock()
        self.pool_k = pool_k
        self.lease_seconds = lease_seconds
        self._lock = threading.RLock()
        self._rng = np.random.default_rng(claim_seed)
        self._log_path = os.fspath(log_path) if log_path is not None else None
        self._log_fh = None

        self.models: dict[str, list[dict]] = {}
        self.missions: dict[str, list[dict]] = {}
        self.pools: dict[str, list[SolutionPoolEntry]] = {}
        self.requests: dict[str, AgentRequest] = {}
        self.agents: dict[str, AgentRecord] = {}
        self.applied_effects: dict[str, Any] = {}
        self.results: dict[str, Any] = {}
        self.progress: dict[str, list[dict]] = {}
        self._idempotent_requests: dict[str, str] = {}
        self._seq = 0

        if self._log_path is not None and os.path.exists(self._log_path):
            self._restore()
        if self._log_path is not None:
            self._log_fh = open(self._log_path, "a", encoding="utf-8")

    # ------------------------------------------------------------- durability

    def _persist(self, record: dict[str, Any]) -> None:
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._log_fh.flush()

    def _restore(self) -> None:
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    def _mutate(self, record: dict[str, Any]) -> None:
        self._persist(record)
        self._apply(record)

    def _apply(self, rec: dict[str, Any]) -> None:
        kind = rec["kind"]
        if kind == "put_model":
            self.models.setdefault(rec["model_id"], []).append(rec["doc"])
        elif kind == "mission_record":
            self.missions.setdefault(rec["mission_id"], []).append(rec["record"])
        elif kind == "submit_request":
            req = AgentRequest(id=rec["id"], kind=rec["request_kind"],
                               payload=rec["payload"], created_at=rec["at"])
            self.requests[req.id] = req
            if rec.get("idempotency_key"):
                self._idempotent_requests[rec["idempotency_key"]] = req.id
        elif kind == "claim":
            req = self.requests[rec["id"]]
            req.status = "claimed"
            req.claimed_by = rec["agent_id"]
            req.lease_expiry = rec["lease_expiry"]
        elif kind == "lease_expired":
            req = self.requests[rec["id"]]
            if req.status == "claimed":
                req.status = "pending"
                req.claimed_by = None
                req.lease_expiry = None
        elif kind == "request_done":
            req = self.requests[rec["id"]]
            req.status = "done"
            req.result_ref = rec.get("result_ref")
        elif kind == "request_failed":
            req = self.requests[rec["id"]]
            req.status = "failed"
            req.error = rec.get("error")
        elif kind == "request_cancelled":
            self.requests[rec["id"]].status = "cancelled"
        elif kind == "request_progress":
            req = self.requests[rec["id"]]
            req.iterations_done += int(rec["iterations"])
            budget = req.payload.get("total_iteration_budget")
            if budget is not None and req.iterations_done >= budget and req.status == "pending":
                req.status = "done"
        elif kind == "register_agent":
            self.agents[rec["agent_id"]] = AgentRecord(
                rec["agent_id"], rec["at"], rec.get("capabilities", {}))
        elif kind == "publish":
            entry = SolutionPoolEntry.from_doc(rec["entry"])
            pool = self.pools.setdefault(entry.problem_id, [])
            pool.append(entry)
            pool.sort(key=lambda e: (e.rank_key, e.created_at, e.producing_agent))
            del pool[self.pool_k:]
        elif kind == "effect":
            self.applied_effects[rec["key"]] = rec.get("result")
        elif kind == "result":
            self.results[rec["ref"]] = rec["doc"]
        elif kind == "progress_event":
            self.progress.setdefault(rec["stream"], []).append(rec["event"])
        else:
            raise StoreError(f"unknown log record kind {kind!r}")

    # ------------------------------------------------------------ maintenance

    def _expire_leases(self) -> None:
        now = self.clock.now()
        for req in self.requests.values():
            if req.status == "claimed" and req.lease_expiry is not None \
                    and req.lease_expiry < now:
                self._mutate({"kind": "lease_expired", "id": req.id})

    # ----------------------------------------------------------------- models

    def put_model(self, model_id: str, doc: dict[str, Any],
                  expected_version: int | None = None) -> int:
        with self._lock:
            versions = self.models.get(model_id, [])
            if expected_version is not None and expected_version != len(versions):
                raise VersionConflict(
                    f"model {model_id!r} is at version {len(versions)}", len(versions))
            self._mutate({"kind": "put_model", "model_id": model_id, "doc": doc})
            return len(self.models[model_id])

    def get_model(self, model_id: str, version: int | None = None) -> tuple[dict, int]:
        with self._lock:
            versions = self.models.get(model_id)
            if not versions:
                raise StoreError(f"unknown model {model_id!r}")
            v = len(versions) if version is None else version
            if not (1 <= v <= len(versions)):
                raise StoreError(f"model {model_id!r} has no version {version}")
            return versions[v - 1], v

    def model_version(self, model_id: str) -> int:
        with self._lock:
            return len(self.models.get(model_id, []))

    # --------------------------------------------------------------- missions

    def append_mission_record(self, mission_id: str, record: dict,
                              expected_version: int) -> int:
        """Optimistic append: ``expected_version`` must equal the record
        count so concurrent writers serialize cleanly."""
        with self._lock:
            records = self.missions.get(mission_id, [])
            if len(records) != expected_version:
                raise VersionConflict(
                    f"mission {mission_id!r} is at version {len(records)}", len(records))
            self._mutate({"kind": "mission_record", "mission_id": mission_id,
                          "record": record})
            return len(self.missions[mission_id])

    def mission_log(self, mission_id: str, since: int = 0) -> list[dict]:
        with self._lock:
            records = self.missions.get(mission_id)
            if records is None:
                raise StoreError(f"unknown mission {mission_id!r}")
            return list(records[since:])

    def mission_ids(self) -> list[str]:
        with self._lock:
            return sorted(self.missions)

    # ---------------------------------------------------------------- requests

    def submit_request(self, kind: str, payload: dict[str, Any],
                       idempotency_key: str | None = None) -> str:
        if kind not in ("one_shot", "running_optimize"):
            raise StoreError(f"unknown request kind {kind!r}")
        with self._lock:
            if idempotency_key and idempotency_key in self._idempotent_requests:
                return self._idempotent_requests[idempotency_key]
            model_id = payload.get("model_id")
            if model_id is not None:
                current = self.model_version(model_id)
                wanted = payload.get("model_version", current)
                if wanted != current:
                    raise VersionConflict(
                        f"model {model_id!r} moved to version {current}", current)
            self._seq += 1
            rid = f"req-{self._seq:06d}"
            self._mutate({"kind": "submit_request", "id": rid, "request_kind": kind,
                          "payload": payload, "at": self.clock.now(),
                          "idempotency_key": idempotency_key})
            return rid

    def claim_one_shot(self, agent_id: str) -> AgentRequest | None:
        """Atomically claim one pending one-shot (chosen at random) under a
        lease; None when nothing is pending."""
        with self._lock:
            self._expire_leases()
            pending = sorted(r.id for r in self.requests.values()
                             if r.kind == "one_shot" and r.status == "pending")
            if not pending:
                return None
            rid = pending[int(self._rng.integers(0, len(pending)))]
            expiry = self.clock.now() + self.lease_seconds
            self._mutate({"kind": "claim", "id": rid, "agent_id": agent_id,
                          "lease_expiry": expiry})
            return self.requests[rid]

    def renew_lease(self, request_id: str, agent_id: str) -> None:
        with self._lock:
            req = self.requests.get(request_id)
            if req is None or req.status != "claimed" or req.claimed_by != agent_id:
                raise StoreError("lease not held")
            self._mutate({"kind": "claim", "id": request_id, "agent_id": agent_id,
                          "lease_expiry": self.clock.now() + self.lease_seconds})

    def running_requests(self) -> list[AgentRequest]:
        with self._lock:
            self._expire_leases()
            return [r for r in self.requests.values()
                    if r.kind == "running_optimize" and r.status == "pending"]

    def get_request(self, request_id: str) -> AgentRequest:
        with self._lock:
            req = self.requests.get(request_id)
            if req is None:
                raise StoreError(f"unknown request {request_id!r}")
            return req

    def complete_request(self, request_id: str, agent_id: str | None = None,
                         result_ref: str | None = None) -> None:
        with self._lock:
            req = self.get_request(request_id)
            if req.status in ("done", "cancelled"):
                return
            self._mutate({"kind": "request_done", "id": request_id,
                          "result_ref": result_ref})

    def fail_request(self, request_id: str, error: str) -> None:
        with self._lock:
            req = self.get_request(request_id)
            if req.status in ("done", "cancelled"):
                return
            self._mutate({"kind": "request_failed", "id": request_id, "error": error})

    def cancel_request(self, request_id: str) -> None:
        with self._lock:
            self.get_request(request_id)
            self._mutate({"kind": "request_cancelled", "id": request_id})

    def report_iterations(self, request_id: str, iterations: int) -> None:
        with self._lock:
            self.get_request(request_id)
            self._mutate({"kind": "request_progress", "id": request_id,
                          "iterations": iterations})

    # ------------------------------------------------------------------ agents

    def register_agent(self, agent_id: str, capabilities: dict | None = None) -> None:
        with self._lock:
            self._mutate({"kind": "register_agent", "agent_id": agent_id,
                          "capabilities": capabilities or {}, "at": self.clock.now()})

    def heartbeat(self, agent_id: str) -> None:
        with self._lock:
            rec = self.agents.get(agent_id)
            if rec is None:
                raise StoreError(f"agent {agent_id!r} not registered")
            rec.last_heartbeat = self.clock.now()  # volatile by design

    # ------------------------------------------------------------------- pools

    def publish_solution(self, problem_id: str, schedule_doc: dict,
                         estimate_doc: dict, agent_id: str, rank_key: float,
                         model_version: int) -> bool:
        """Insert iff the pool has room or the entry beats the current worst;
        the pool stays sorted by rank_key and capped at K."""
        with self._lock:
            model_id = problem_id.split("@v")[0]
            current = self.model_version(model_id)
            if current and model_version != current:
                raise VersionConflict(
                    f"model {model_id!r} moved to version {current}", current)
            pool = self.pools.get(problem_id, [])
            if len(pool) >= self.pool_k and rank_key >= pool[-1].rank_key:
                return False
            entry = SolutionPoolEntry(
                problem_id=problem_id, rank_key=rank_key,
                schedule=schedule_doc, estimate=estimate_doc,
                producing_agent=agent_id, created_at=self.clock.now(),
                model_version=model_version)
            self._mutate({"kind": "publish", "entry": entry.to_doc()})
            return True

    def fetch_pool(self, problem_id: str) -> list[SolutionPoolEntry]:
        with self._lock:
            return list(self.pools.get(problem_id, []))

    # ----------------------------------------------------- effects and results

    def apply_effect(self, key: str, apply: Callable[[], Any]) -> tuple[Any, bool]:
        """Exactly-once effect: runs ``apply`` under the store lock unless the
        key was already applied; returns (result, applied_now)."""
        with self._lock:
            if key in self.applied_effects:
                return self.applied_effects[key], False
            result = apply()
            self._mutate({"kind": "effect", "key": key, "result": result})
            return result, True

    def put_result(self, ref: str, doc: Any) -> None:
        with self._lock:
            self._mutate({"kind": "result", "ref": ref, "doc": doc})

    def get_result(self, ref: str) -> Any:
        with self._lock:
            if ref not in self.results:
                raise StoreError(f"unknown result {ref!r}")
            return self.results[ref]

    # --------------------------------------------------------------- progress

    def append_progress(self, stream: str, event: dict[str, Any]) -> None:
        with self._lock:
            event = dict(event)
            event["index"] = len(self.progress.get(stream, []))
            self._mutate({"kind": "progress_event", "stream": stream, "event": event})

    def progress_since(self, stream: str, since: int = 0) -> list[dict]:
        with self._lock:
            return [e for e in self.progress.get(stream, []) if e["index"] >= since]


def new_request_id() -> str:
    return uuid.uuid4().hex


class StoreClient:
    """Message-level interface between agents and the store.

    The documented message set: register, heartbeat, poll, claim, publish,
    fetch_model, fetch_pool, plus effect application, completion, progress
    and result reporting.  Every message carries the protocol version.
    """

    protocol_version = PROTOCOL_VERSION

    def register(self, agent_id: str, capabilities: dict | None = None) -> None:
        raise NotImplementedError

    def heartbeat(self, agent_id: str) -> None:
        raise NotImplementedError

    def poll(self, agent_id: str) -> dict[str, Any]:
        raise NotImplementedError

    def claim(self, agent_id: str) -> dict | None:
        raise NotImplementedError

    def publish(self, problem_id: str, schedule_doc: dict, estimate_doc: dict,
                agent_id: str, rank_key: float, model_version: int) -> bool:
        raise NotImplementedError

    def fetch_model(self, model_id: str, version: int | None = None) -> tuple[dict, int]:
        raise NotImplementedError

    def fetch_pool(self, problem_id: str) -> list[dict]:
        raise NotImplementedError

    def fetch_mission_log(self, mission_id: str, since: int = 0) -> list[dict]:
        raise NotImplementedError

    def apply_named_effect(self, key: str, kind: str, payload: dict) -> tuple[Any, bool]:
        raise NotImplementedError

    def complete(self, request_id: str, agent_id: str, result_ref: str | None) -> None:
        raise NotImplementedError

    def fail(self, request_id: str, error: str) -> None:
        raise NotImplementedError

    def report_iterations(self, request_id: str, iterations: int) -> None:
        raise NotImplementedError

    def append_progress(self, stream: str, event: dict) -> None:
        raise NotImplementedError

    def put_result(self, ref: str, doc: Any) -> None:
        raise NotImplementedError

    def get_request(self, request_id: str) -> dict:
        raise NotImplementedError

    def renew_lease(self, request_id: str, agent_id: str) -> None:
        raise NotImplementedError


class LocalStoreClient(StoreClient):
    """In-process client; ``latency`` seconds (on the store clock) are
    injected on every message round trip to emulate remote agents."""

    def __init__(self, store: CoordinationStore, latency: float = 0.0,
                 effect_executor: Callable[[str, dict], Any] | None = None,
                 fail_flag: threading.Event | None = None):
        self.store = store
        self.latency = latency
        self._effect_executor = (effect_executor if effect_executor is not None
                                 else lambda kind, payload: apply_store_effects(store, kind, payload))
        self._fail_flag = fail_flag

    def _delay(self) -> None:
        if self._fail_flag is not None and self._fail_flag.is_set():
            raise StoreUnreachable("injected store outage")
        if self.latency > 0:
            self.store.clock.sleep(self.latency)

    def register(self, agent_id, capabilities=None):
        self._delay()
        self.store.register_agent(agent_id, capabilities)

    def heartbeat(self, agent_id):
        self._delay()
        self.store.heartbeat(agent_id)

    def poll(self, agent_id):
        self._delay()
        running = [r.to_doc() for r in self.store.running_requests()]
        return {"protocol_version": PROTOCOL_VERSION, "running": running}

    def claim(self, agent_id):
        self._delay()
        req = self.store.claim_one_shot(agent_id)
        return None if req is None else req.to_doc()

    def publish(self, problem_id, schedule_doc, estimate_doc, agent_id,
                rank_key, model_version):
        self._delay()
        return self.store.publish_solution(problem_id, schedule_doc, estimate_doc,
                                           agent_id, rank_key, model_version)

    def fetch_model(self, model_id, version=None):
        self._delay()
        return self.store.get_model(model_id, version)

    def fetch_pool(self, problem_id):
        self._delay()
        return [e.to_doc() for e in self.store.fetch_pool(problem_id)]

    def fetch_mission_log(self, mission_id, since=0):
        self._delay()
        return self.store.mission_log(mission_id, since)

    def apply_named_effect(self, key, kind, payload):
        self._delay()
        return self.store.apply_effect(key, lambda: self._effect_executor(kind, payload))

    def complete(self, request_id, agent_id, result_ref=None):
        self._delay()
        self.store.complete_request(request_id, agent_id, result_ref)

    def fail(self, request_id, error):
        self._delay()
        self.store.fail_request(request_id, error)

    def report_iterations(self, request_id, iterations):
        self._delay()
        self.store.report_iterations(request_id, iterations)

    def append_progress(self, stream, event):
        self._delay()
        self.store.append_progress(stream, event)

    def put_result(self, ref, doc):
        self._delay()
        self.store.put_result(ref, doc)

    def get_request(self, request_id):
        self._delay()
        return self.store.get_request(request_id).to_doc()

    def renew_lease(self, request_id, agent_id):
        self._delay()
        self.store.renew_lease(request_id, agent_id)


def apply_store_effects(store: CoordinationStore, kind: str, payload: dict) -> Any:
    """Store-side execution of a one-shot's (cheap, precomputed) effects;
    runs under the store lock via :meth:`CoordinationStore.apply_effect`."""
    if kind == "batch":
        return [apply_store_effects(store, e["kind"], e["payload"])
                for e in payload["effects"]]
    if kind == "append_mission_record":
        return store.append_mission_record(payload["mission_id"], payload["record"],
                                           payload["expected_version"])
    if kind == "put_result":
        store.put_result(payload["ref"], payload["doc"])
        return payload["ref"]
    raise StoreError(f"unknown effect kind {kind!r}")
