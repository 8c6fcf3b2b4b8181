#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
曲線短縮流ソルバーAPI
1 回のシミュレーションと収束スタディを HTTP で実行する
"""

import time
from typing import Any, Dict, List, Optional

from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from domain_boundary import GEOMETRIES
from errors import ConfigInvalid, CurveFlowError
from forcing import FORCINGS, SOURCES
from simulation import CurveFlowSimulation, make_config
from verification import Example, ErrorAccumulator, convergence_study, get_exact_solution

API_VERSION = "1.0.0"

# FastAPIアプリケーションの初期化
app = FastAPI(
    title="曲線短縮流ソルバーAPI",
    description="境界に直交接触する強制曲線短縮流と曲線上の反応拡散方程式の有限要素ソルバー",
    version=API_VERSION,
)

# CORS設定
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Pydanticモデル
class NewtonStatistics(BaseModel):
    steps: int = Field(..., ge=0)
    total_iterations: int = Field(..., ge=0)
    max_iterations: int = Field(..., ge=0)
    mean_iterations: float = Field(..., ge=0.0)
    max_constraint_violation: float = Field(..., ge=0.0)
    all_converged: bool


class RunResponse(BaseModel):
    completed: bool
    n: int
    t: float
    nodes: List[List[float]]
    field: List[float]
    newton: NewtonStatistics
    errors: Optional[Dict[str, Any]] = None
    failure: Optional[str] = None
    wall_clock_seconds: float


class ConvergeRequest(BaseModel):
    example: Example
    alpha: Optional[float] = Field(None, gt=0.0, le=1.0)
    scheme: str = Field("newton", pattern="^(newton|linear)$")
    levels: List[int] = Field(default_factory=lambda: [10, 20, 40])
    dt_rule: str = "h2"


def _raise_http(exc: CurveFlowError):
    if isinstance(exc, ConfigInvalid):
        raise HTTPException(status_code=400, detail=f"設定が不正です: {exc}")
    raise HTTPException(status_code=500, detail=f"計算中にエラーが発生しました: {exc}")


@app.get("/")
async def root():
    return {
        "message": "曲線短縮流ソルバーAPI",
        "version": API_VERSION,
        "status": "running",
    }


@app.get("/health")
async def health_check():
    return {
        "status": "healthy",
        "geometries": sorted(GEOMETRIES),
        "forcings": sorted(FORCINGS),
        "sources": sorted(SOURCES),
        "examples": [example.value for example in Example],
    }


@app.post("/run", response_model=RunResponse)
def run_simulation(values: Dict[str, Any] = Body(...)):
    try:
        config = make_config(**values)
        simulation = CurveFlowSimulation(config)
        accumulator = None
        observers = []
        if config.exact:
            accumulator = ErrorAccumulator(get_exact_solution(config.exact), simulation.dt)
            observers.append(accumulator)
        started = time.perf_counter()
        trajectory = simulation.run(observers=observers)
        elapsed = time.perf_counter() - started
    except CurveFlowError as exc:
        _raise_http(exc)

    final = trajectory.final
    errors = None
    if accumulator is not None and trajectory.completed:
        errors = accumulator.report(config).to_dict()
    return RunResponse(
        completed=trajectory.completed,
        n=final.n,
        t=final.time,
        nodes=final.curve.nodes.tolist(),
        field=final.field.values.tolist(),
        newton=NewtonStatistics(**trajectory.newton_statistics()),
        errors=errors,
        failure=str(trajectory.error) if trajectory.error is not None else None,
        wall_clock_seconds=elapsed,
    )


@app.post("/converge")
def converge(request: ConvergeRequest):
    try:
        table = convergence_study(request.example, request.alpha, request.scheme,
                                  request.levels, request.dt_rule)
    except CurveFlowError as exc:
        _raise_http(exc)
    return table.to_dict()


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
