"""HTTP service wrapping the certification pipelines.

Each endpoint takes the same JSON document as the CLI config file and returns
the report that would have been written to disk (file outputs are skipped)."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .certificate import CertificateError
from .config import ConfigError, RunConfig, load_config
from .grids import GridError
from .pipeline import execute
from .systems import BUILTIN_SYSTEMS, SystemError_
from .trajectory import TrajectoryError

app = FastAPI(title="lyapcert", version=__version__)


class RunResponse(BaseModel):
    report: dict
    exit_code: int


def _run(payload: dict, mode: str) -> RunResponse:
    try:
        cfg = load_config(payload)
        report, code = execute(cfg, mode, out_dir=None, quiet=True)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except CertificateError as exc:
        raise HTTPException(status_code=409, detail=str(exc))
    except (GridError, TrajectoryError, SystemError_, FloatingPointError) as exc:
        raise HTTPException(status_code=500, detail=f"numerical failure: {exc}")
    return RunResponse(report=report, exit_code=code)


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.get("/systems")
def systems():
    return {"builtin": sorted(BUILTIN_SYSTEMS)}


@app.post("/certify", response_model=RunResponse)
def certify_endpoint(payload: dict):
    return _run(payload, "certify")


@app.post("/guas", response_model=RunResponse)
def guas_endpoint(payload: dict):
    return _run(payload, "guas")


@app.post("/simulate", response_model=RunResponse)
def simulate_endpoint(payload: dict):
    return _run(payload, "simulate")


@app.post("/audit", response_model=RunResponse)
def audit_endpoint(payload: dict):
    return _run(payload, "audit")
