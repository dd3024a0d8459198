"""HTTP surface: one POST endpoint per toolkit operation.

Domain refusals (interface violations, expansion cap) map to 409/400;
malformed inputs map to 422.  Check and fidelity failures are ordinary
response payloads with `passed: false`.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..machines import MachineError
from ..protocols import ProtocolError
from ..runtime import EmissionRefused, ScheduleError
from . import handlers, models


def create_app() -> FastAPI:
    app = FastAPI(title="swarmkit", version="0.1.0")

    def run(handler, request):
        try:
            return handler(request)
        except handlers.DomainError as exc:
            status = 400 if exc.usage else 409
            raise HTTPException(status, detail={"message": str(exc), **exc.payload})
        except (ProtocolError, MachineError, ScheduleError, EmissionRefused) as exc:
            raise HTTPException(422, detail={"message": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/compose", response_model=models.ComposeResponse)
    def compose(request: models.ComposeRequest):
        return run(handlers.handle_compose, request)

    @app.post("/check", response_model=models.CheckResponse)
    def check(request: models.CheckRequest):
        return run(handlers.handle_check, request)

    @app.post("/subscribe", response_model=models.SubscribeResponse)
    def subscribe(request: models.SubscribeRequest):
        return run(handlers.handle_subscribe, request)

    @app.post("/project", response_model=models.ProjectResponse)
    def project(request: models.ProjectRequest):
        return run(handlers.handle_project, request)

    @app.post("/adapt", response_model=models.AdaptResponse)
    def adapt(request: models.AdaptRequest):
        return run(handlers.handle_adapt, request)

    @app.post("/simulate", response_model=models.SimulateResponse)
    def simulate(request: models.SimulateRequest):
        return run(handlers.handle_simulate, request)

    @app.post("/fidelity", response_model=models.FidelityResponse)
    def fidelity(request: models.FidelityRequest):
        return run(handlers.handle_fidelity, request)

    @app.post("/bench", response_model=models.BenchResponse)
    def bench(request: models.BenchRequest):
        return run(handlers.handle_bench, request)

    return app


app = create_app()
