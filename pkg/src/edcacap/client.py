"""Thin HTTP client for the service API.

Without a base URL the client mounts the service in-process over an ASGI
transport, so the CLI works standalone while still exercising the exact wire
interface a remote deployment exposes.
"""

from __future__ import annotations

import httpx


class ApiError(RuntimeError):
    def __init__(self, status_code: int, detail: str):
        self.status_code = status_code
        self.detail = detail
        super().__init__(f"HTTP {status_code}: {detail}")


class ServiceClient:
    def __init__(self, base_url: str | None = None, timeout: float = 3600.0):
        if base_url:
            self._client = httpx.Client(base_url=base_url, timeout=timeout)
        else:
            # the test client is starlette's supported synchronous facade
            # over an ASGI app; it shares the httpx response API
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

                from .service.app import create_app
                self._client = TestClient(create_app())

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        return self._check(response)

    def _check(self, response: httpx.Response) -> dict:
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ApiError(response.status_code, str(detail))
        return response.json()

    def health(self) -> dict:
        return self._check(self._client.get("/healthz"))

    def solve(self, scenario: dict, access: str | None = None) -> dict:
        return self._post("/api/solve", {"scenario": scenario, "access": access})

    def utilization(self, scenario: dict, rho_threshold: float | None = None) -> dict:
        return self._post("/api/utilization",
                          {"scenario": scenario, "rho_threshold": rho_threshold})

    def capacity_search(self, scenario: dict, template: dict,
                        rho_threshold: float | None = None) -> dict:
        return self._post("/api/capacity-search",
                          {"scenario": scenario, "template": template,
                           "rho_threshold": rho_threshold})

    def simulate(self, scenario: dict, **options) -> dict:
        return self._post("/api/simulate", {"scenario": scenario, **options})

    def compare(self, scenario: dict, seeds, duration_s: float | None = None) -> dict:
        return self._post("/api/compare", {"scenario": scenario,
                                           "seeds": list(seeds),
                                           "duration_s": duration_s})

    def create_session(self, scenario: dict,
                       rho_threshold: float | None = None) -> str:
        body = self._post("/api/admission/sessions",
                          {"scenario": scenario, "rho_threshold": rho_threshold})
        return body["session_id"]

    def session_state(self, session_id: str) -> dict:
        return self._check(self._client.get(f"/api/admission/sessions/{session_id}"))

    def addts(self, session_id: str, tspec: dict) -> dict:
        return self._post(f"/api/admission/sessions/{session_id}/addts", tspec)

    def delts(self, session_id: str, tsid: str) -> dict:
        return self._post(f"/api/admission/sessions/{session_id}/delts",
                          {"tsid": tsid})

    def replay(self, session_id: str, events: str) -> dict:
        return self._post(f"/api/admission/sessions/{session_id}/replay",
                          {"events": events})

    def delete_session(self, session_id: str) -> dict:
        return self._check(
            self._client.delete(f"/api/admission/sessions/{session_id}"))
