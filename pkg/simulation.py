#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
連成時間発展のオーケストレーション
各ステップで (1) 前時刻の場 W^{n−1} を使って曲線を進め、
(2) 新しい曲線 X^n 上で場を進める。設定・状態・軌跡もここで扱う。
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from curve_evolver import CurveStepParams, NewtonReport, curve_step
from curve_mesh import CurveState, FieldState, ParameterGrid
from domain_boundary import BoundaryGeometry, get_geometry, validate_geometry
from errors import ConfigInvalid, ConstraintViolatedAtStart, CurveFlowError
from forcing import FORCINGS, SOURCES, get_forcing, get_source
from surface_pde import FieldStepParams, field_step

logger = logging.getLogger(__name__)

# 初期曲線の端点拘束の許容値
START_CONSTRAINT_TOL = 1e-12


def parse_dt_rule(rule: str) -> Tuple[str, float]:
    """'h2' / 'ch:<c>' / 'n:<N>' を (種類, 値) に分解する"""
    rule = rule.strip().lower()
    if rule == "h2":
        return "h2", 0.0
    kind, sep, value = rule.partition(":")
    if sep and kind in ("ch", "n"):
        try:
            number = float(value)
        except ValueError:
            raise ValueError(f"dt_rule '{rule}' の数値部分を解釈できません") from None
        if kind == "n" and number != int(number):
            raise ValueError(f"dt_rule '{rule}': ステップ数は整数である必要があります")
        return kind, number
    raise ValueError(f"dt_rule '{rule}' は h2 / ch:<c> / n:<N> のいずれかである必要があります")


class SimConfig(BaseModel):
    """シミュレーション設定"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    geometry: Literal["half-plane", "unit-disc"] = "half-plane"
    alpha: float = Field(1.0, gt=0.0, le=1.0, description="DeTurck パラメータ α")
    J: int = Field(10, description="要素数")
    T: float = Field(0.4, gt=0.0, description="最終時刻")
    dt_rule: str = Field("h2", description="h2 | ch:<c> | n:<N>")
    scheme: Literal["newton", "linear"] = "newton"
    f: str = Field("none", description="外力 f のレジストリ名")
    g: str = Field("none", description="反応項 g のレジストリ名")
    w_b: float = Field(0.0, description="端点での場の値")
    initial: Literal["semicircle", "diameter", "custom"] = "semicircle"
    nodes: Optional[List[Tuple[float, float]]] = None
    w0: Literal["constant", "parabola"] = "constant"
    f_time: Literal["prev", "curr"] = "prev"
    g_time: Literal["prev", "curr"] = "prev"
    newton_tol: float = Field(1e-12, gt=0.0)
    newton_max_iter: int = Field(25, ge=1)
    increment_tol: float = Field(1e-12, gt=0.0)
    snapshot_stride: int = Field(1, ge=1)
    exact: Optional[str] = Field(None, description="誤差を報告する厳密解の名前")

    @field_validator("J")
    @classmethod
    def _check_J(cls, value: int) -> int:
        if value < 2:
            raise ValueError(f"J must be ≥ 2 (J={value})")
        return value

    @field_validator("nodes", mode="before")
    @classmethod
    def _parse_nodes(cls, value):
        if isinstance(value, str):
            return json.loads(value) if value.strip() else None
        return value

    @field_validator("dt_rule")
    @classmethod
    def _check_dt_rule(cls, value: str) -> str:
        parse_dt_rule(value)
        return value.strip().lower()

    @field_validator("f")
    @classmethod
    def _check_f(cls, value: str) -> str:
        if value not in FORCINGS:
            raise ValueError(f"未知の f '{value}'（選択肢: {', '.join(FORCINGS)}）")
        return value

    @field_validator("g")
    @classmethod
    def _check_g(cls, value: str) -> str:
        if value not in SOURCES:
            raise ValueError(f"未知の g '{value}'（選択肢: {', '.join(SOURCES)}）")
        return value

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.initial == "custom":
            if self.nodes is None or len(self.nodes) != self.J + 1:
                raise ValueError("initial=custom には J+1 個の nodes が必要です")
        self.time_grid()
        return self

    def time_grid(self) -> Tuple[int, float]:
        """(N, Δt) を返す。T/Δt が正の整数でなければ ValueError"""
        kind, value = parse_dt_rule(self.dt_rule)
        h = 1.0 / self.J
        if kind == "n":
            steps = int(value)
        else:
            dt = h * h if kind == "h2" else value * h
            if not dt > 0.0:
                raise ValueError(f"dt_rule '{self.dt_rule}' から得た Δt が正ではありません")
            steps = int(round(self.T / dt))
            if steps < 1 or abs(steps * dt - self.T) > 1e-9 * self.T:
                raise ValueError(f"T/Δt = {self.T / dt:.12g} が正の整数ではありません")
        if steps < 1:
            raise ValueError("ステップ数 N は 1 以上である必要があります（zero-step config）")
        return steps, self.T / steps

    @property
    def num_steps(self) -> int:
        return self.time_grid()[0]

    @property
    def dt(self) -> float:
        return self.time_grid()[1]

    @property
    def couples_field(self) -> bool:
        """場が自明（W ≡ 0）でない設定か"""
        return self.g != "none" or self.w0 != "constant" or self.w_b != 0.0

    def time_at(self, n: int) -> float:
        # n·Δt を T·(n/N) として計算し、最終時刻を T に一致させる
        return self.T * (n / self.num_steps)


def make_config(**values) -> SimConfig:
    """辞書から設定を作る（検証エラーは ConfigInvalid に変換）"""
    try:
        return SimConfig(**values)
    except ValidationError as exc:
        raise ConfigInvalid(_format_validation_error(exc)) from None


def _format_validation_error(exc: ValidationError) -> str:
    messages = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error.get("loc", ()))
        message = error.get("msg", "").removeprefix("Value error, ")
        messages.append(f"{location}: {message}" if location else message)
    return "; ".join(messages)


def load_config(path) -> SimConfig:
    """key=value 形式（dotenv）または JSON の設定ファイルを読み込む"""
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(f"設定ファイル '{path}' が見つかりません")
    if path.suffix.lower() == ".json":
        try:
            values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"設定ファイル '{path}' の JSON が不正です: {exc}") from None
    else:
        values = {key: value for key, value in dotenv_values(path).items() if value not in (None, "")}
    return make_config(**values)


@dataclass(frozen=True)
class SimState:
    """時刻 t_n の状態"""
    n: int
    curve: CurveState
    field: FieldState

    @property
    def time(self) -> float:
        return self.curve.time


@dataclass
class Trajectory:
    """ストライドごとのスナップショット、終端状態、ステップごとの Newton 記録"""
    config: SimConfig
    snapshots: List[SimState] = field(default_factory=list)
    reports: List[NewtonReport] = field(default_factory=list)
    final: Optional[SimState] = None
    error: Optional[CurveFlowError] = None

    @property
    def completed(self) -> bool:
        return self.error is None and self.final is not None and self.final.n == self.config.num_steps

    def newton_statistics(self) -> dict:
        if not self.reports:
            return {"steps": 0, "total_iterations": 0, "max_iterations": 0,
                    "mean_iterations": 0.0, "max_constraint_violation": 0.0, "all_converged": True}
        iterations = [report.iterations for report in self.reports]
        return {
            "steps": len(self.reports),
            "total_iterations": int(sum(iterations)),
            "max_iterations": int(max(iterations)),
            "mean_iterations": float(np.mean(iterations)),
            "max_constraint_violation": float(max(r.final_constraint_violation for r in self.reports)),
            "all_converged": all(report.converged for report in self.reports),
        }


# 観測者: observe(prev_state, state) を毎ステップ呼ぶ（初期状態では prev_state=None）
Observer = Callable[[Optional[SimState], SimState], None]


def initial_nodes(config: SimConfig, grid: ParameterGrid) -> np.ndarray:
    rho = grid.rho
    if config.initial == "semicircle":
        return np.column_stack((np.cos(np.pi * rho), np.sin(np.pi * rho)))
    if config.initial == "diameter":
        # 回転する直径の t = 0 の形 √2(ρ − ½)(1, 1)
        return np.sqrt(2.0) * (rho - 0.5)[:, None] * np.ones(2)
    return np.asarray(config.nodes, dtype=float)


def initial_field(config: SimConfig, grid: ParameterGrid) -> np.ndarray:
    rho = grid.rho
    values = np.full(grid.num_nodes, config.w_b)
    if config.w0 == "parabola":
        values = values + rho * (rho - 1.0)
    return values


class CurveFlowSimulation:
    """設定から幾何・パラメータを組み立てて時間発展を実行する"""

    def __init__(self, config: SimConfig):
        self.config = config
        self.grid = ParameterGrid(config.J)
        self.geometry: BoundaryGeometry = get_geometry(config.geometry)
        validate_geometry(self.geometry)
        self.num_steps, self.dt = config.time_grid()
        self.curve_params = CurveStepParams(
            alpha=config.alpha,
            dt=self.dt,
            f_eval=get_forcing(config.f),
            newton_tol=config.newton_tol,
            newton_max_iter=config.newton_max_iter,
            increment_tol=config.increment_tol,
            scheme=config.scheme,
            f_time=config.f_time,
        )
        self.field_params = FieldStepParams(
            dt=self.dt, g_eval=get_source(config.g), w_b=config.w_b, g_time=config.g_time
        )

    def time_at(self, n: int) -> float:
        return self.config.T * (n / self.num_steps)

    def initialize(self) -> SimState:
        curve = CurveState(self.grid, initial_nodes(self.config, self.grid), 0.0)
        field_state = FieldState(self.grid, initial_field(self.config, self.grid), 0.0)
        violation = float(np.max(np.abs(self.geometry.value(curve.endpoints))))
        if violation > START_CONSTRAINT_TOL:
            raise ConstraintViolatedAtStart(
                f"初期曲線の端点が境界 {self.geometry.name} 上にありません（max|F|={violation:.3e}）"
            )
        return SimState(0, curve, field_state)

    def step(self, state: SimState) -> Tuple[SimState, NewtonReport]:
        """曲線 → 場の順に 1 ステップ進める"""
        n = state.n + 1
        t_n = self.time_at(n)
        try:
            curve, report = curve_step(state.curve, state.field, self.geometry, self.curve_params, t_n)
            if self.config.couples_field:
                field_state = field_step(state.curve, curve, state.field, self.field_params, t_n)
            else:
                field_state = FieldState(self.grid, state.field.values, t_n)
        except CurveFlowError as exc:
            exc.step = n
            raise
        return SimState(n, curve, field_state), report

    def advance(self, state: SimState) -> SimState:
        return self.step(state)[0]

    def run(self, observers: Sequence[Observer] = ()) -> Trajectory:
        trajectory = Trajectory(config=self.config)
        state = self.initialize()
        trajectory.snapshots.append(state)
        for observer in observers:
            observer(None, state)
        stride = self.config.snapshot_stride
        for _ in range(self.num_steps):
            try:
                new_state, report = self.step(state)
            except CurveFlowError as exc:
                logger.warning("ステップ %s で失敗しました: %s", exc.step, exc)
                trajectory.error = exc
                break
            trajectory.reports.append(report)
            for observer in observers:
                observer(state, new_state)
            state = new_state
            if state.n % stride == 0 or state.n == self.num_steps:
                trajectory.snapshots.append(state)
        trajectory.final = state
        return trajectory


def initialize(config: SimConfig) -> SimState:
    return CurveFlowSimulation(config).initialize()


def advance(state: SimState, config: SimConfig) -> SimState:
    return CurveFlowSimulation(config).advance(state)


def run(config: SimConfig, observers: Sequence[Observer] = ()) -> Trajectory:
    return CurveFlowSimulation(config).run(observers)
