"""Shared error shaping for the HTTP service and an HTTP store client for
remote agents."""

from __future__ import annotations

from typing import Any

import httpx

from .coordination import StoreClient, StoreUnreachable, VersionConflict

__all__ = ["error_response", "HttpStoreClient"]


def error_response(message: str, fields: list[str] | None = None,
                   current_version: int | None = None) -> dict[str, Any]:
    err: dict[str, Any] = {"message": message}
    if fields:
        err["fields"] = fields
    if current_version is not None:
        err["current_version"] = current_version
    return {"error": err}


class HttpStoreClient(StoreClient):
    """Agent-side client speaking the /v1/agent wire protocol over HTTP."""

    def __init__(self, base_url: str | None = None,
                 client: httpx.Client | None = None, timeout: float = 30.0):
        if client is not None:
            self._http = client
        else:
            self._http = httpx.Client(base_url=base_url, timeout=timeout)

    def _post(self, path: str, body: dict) -> dict:
        try:
            resp = self._http.post(path, json=body)
        except httpx.HTTPError as exc:
            raise StoreUnreachable(str(exc)) from exc
        if resp.status_code == 409:
            detail = resp.json().get("error", {})
            raise VersionConflict(detail.get("message", "version conflict"),
                                  detail.get("current_version", -1))
        if resp.status_code >= 400:
            raise StoreUnreachable(f"{path} -> {resp.status_code}: {resp.text}")
        return resp.json()

    def register(self, agent_id, capabilities=None):
        self._post("/v1/agent/register", {"agent_id": agent_id,
                                          "capabilities": capabilities or {}})

    def heartbeat(self, agent_id):
        self._post("/v1/agent/heartbeat", {"agent_id": agent_id})

    def poll(self, agent_id):
        return self._post("/v1/agent/poll", {"agent_id": agent_id})

    def claim(self, agent_id):
        return self._post("/v1/agent/claim", {"agent_id": agent_id})["request"]

    def publish(self, problem_id, schedule_doc, estimate_doc, agent_id,
                rank_key, model_version):
        return self._post("/v1/agent/publish", {
            "problem_id": problem_id, "schedule": schedule_doc,
            "estimate": estimate_doc, "agent_id": agent_id,
            "rank_key": rank_key, "model_version": model_version})["accepted"]

    def fetch_model(self, model_id, version=None):
        try:
            if version is None:
                resp = self._http.get(f"/v1/models/{model_id}")
            else:
                resp = self._http.get(f"/v1/models/{model_id}/versions/{version}")
        except httpx.HTTPError as exc:
            raise StoreUnreachable(str(exc)) from exc
        if resp.status_code >= 400:
            raise StoreUnreachable(f"fetch_model -> {resp.status_code}")
        doc = resp.json()
        return doc["model"], doc["version"]

    def fetch_pool(self, problem_id):
        try:
            resp = self._http.get(f"/v1/pool/{problem_id}")
        except httpx.HTTPError as exc:
            raise StoreUnreachable(str(exc)) from exc
        if resp.status_code >= 400:
            raise StoreUnreachable(f"fetch_pool -> {resp.status_code}")
        return resp.json()["entries"]

    def fetch_mission_log(self, mission_id, since=0):
        return self._post("/v1/agent/mission_log",
                          {"mission_id": mission_id, "since": since})["records"]

    def apply_named_effect(self, key, kind, payload):
        out = self._post("/v1/agent/effect",
                         {"key": key, "kind": kind, "payload": payload})
        return out["result"], out["applied"]

    def complete(self, request_id, agent_id, result_ref=None):
        self._post("/v1/agent/complete", {"request_id": request_id,
                                          "agent_id": agent_id,
                                          "result_ref": result_ref})

    def fail(self, request_id, error):
        self._post("/v1/agent/fail", {"request_id": request_id, "error": error})

    def report_iterations(self, request_id, iterations):
        self._post("/v1/agent/iterations", {"request_id": request_id,
                                            "iterations": iterations})

    def append_progress(self, stream, event):
        self._post("/v1/agent/progress", {"stream": stream, "event": event})

    def put_result(self, ref, doc):
        self._post("/v1/agent/result", {"ref": ref, "doc": doc})

    def get_request(self, request_id):
        return self._post("/v1/agent/request", {"request_id": request_id})["request"]

    def renew_lease(self, request_id, agent_id):
        self._post("/v1/agent/claim_renew", {"request_id": request_id,
                                             "agent_id": agent_id})
