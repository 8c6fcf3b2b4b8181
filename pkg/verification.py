#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
厳密解カタログ・誤差汎関数 E1〜E5・実験的収束次数（EOC）・公表値との照合
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from curve_mesh import ParameterGrid, l2_norm_sq_elementwise, l2_norm_sq_pwlinear, nodal_derivative
from domain_boundary import get_geometry, project_to_boundary
from errors import ConfigInvalid, MissingExactField, ZeroError
from simulation import CurveFlowSimulation, SimConfig, SimState, Trajectory, make_config

logger = logging.getLogger(__name__)

CurveFn = Callable[[np.ndarray, float], np.ndarray]
ScalarFn = Callable[[np.ndarray, float], np.ndarray]

ERROR_NAMES = ("E1", "E2", "E3", "E4", "E5")


# ========== 厳密解カタログ ==========

class Example(str, Enum):
    SEMICIRCLE = "semicircle"
    DIAMETER = "diameter"
    COUPLED = "coupled"


def _semicircle_x(rho, t):
    rho = np.asarray(rho, dtype=float)
    radius = math.sqrt(1.0 - 2.0 * t)
    return radius * np.stack((np.cos(np.pi * rho), np.sin(np.pi * rho)), axis=-1)


def _semicircle_x_rho(rho, t):
    rho = np.asarray(rho, dtype=float)
    radius = math.sqrt(1.0 - 2.0 * t)
    return np.pi * radius * np.stack((-np.sin(np.pi * rho), np.cos(np.pi * rho)), axis=-1)


def _diameter_direction(t):
    # 単位ベクトル (1 − 2t, 1)/√((1 − 2t)² + 1)
    a = 1.0 - 2.0 * t
    return np.array([a, 1.0]) / math.sqrt(a * a + 1.0)


def _diameter_x(rho, t):
    rho = np.asarray(rho, dtype=float)
    return 2.0 * (rho - 0.5)[..., None] * _diameter_direction(t)


def _diameter_x_rho(rho, t):
    rho = np.asarray(rho, dtype=float)
    return np.broadcast_to(2.0 * _diameter_direction(t), rho.shape + (2,)).copy()


def _parabola_w(rho, t):
    rho = np.asarray(rho, dtype=float)
    return (1.0 - t) * rho * (rho - 1.0)


def _parabola_w_rho(rho, t):
    rho = np.asarray(rho, dtype=float)
    return (1.0 - t) * (2.0 * rho - 1.0)


@dataclass(frozen=True)
class ExactSolution:
    """閉じた形の厳密解と、それを再現する設定"""
    name: str
    geometry: str
    T: float
    x: CurveFn
    x_rho: CurveFn
    initial: str
    f: str = "none"
    g: str = "none"
    w0: str = "constant"
    w: Optional[ScalarFn] = None
    w_rho: Optional[ScalarFn] = None
    default_alpha: float = 1.0
    description: str = ""

    @property
    def has_field(self) -> bool:
        return self.w is not None and self.w_rho is not None

    def config(self, J: int, alpha: Optional[float] = None, scheme: str = "newton",
               dt_rule: str = "h2", **overrides) -> SimConfig:
        values = dict(
            geometry=self.geometry,
            alpha=self.default_alpha if alpha is None else alpha,
            J=J,
            T=self.T,
            dt_rule=dt_rule,
            scheme=scheme,
            f=self.f,
            g=self.g,
            w_b=0.0,
            initial=self.initial,
            w0=self.w0,
            exact=self.name,
        )
        values.update(overrides)
        return make_config(**values)


EXACT_SOLUTIONS: Dict[Example, ExactSolution] = {
    Example.SEMICIRCLE: ExactSolution(
        name="semicircle",
        geometry="half-plane",
        T=0.4,
        x=_semicircle_x,
        x_rho=_semicircle_x_rho,
        initial="semicircle",
        description="上半平面で縮む半円 x = √(1−2t)(cos πρ, sin πρ)",
    ),
    Example.DIAMETER: ExactSolution(
        name="diameter",
        geometry="unit-disc",
        T=0.5,
        x=_diameter_x,
        x_rho=_diameter_x_rho,
        initial="diameter",
        f="example2",
        description="単位円板の直径として回転する線分",
    ),
    Example.COUPLED: ExactSolution(
        name="coupled",
        geometry="unit-disc",
        T=0.5,
        x=_diameter_x,
        x_rho=_diameter_x_rho,
        initial="diameter",
        f="example3-f",
        g="example3-g",
        w0="parabola",
        w=_parabola_w,
        w_rho=_parabola_w_rho,
        default_alpha=0.5,
        description="回転する直径と縮む放物線 w = (1−t)ρ(ρ−1) の連成",
    ),
}


def get_exact_solution(name) -> ExactSolution:
    try:
        return EXACT_SOLUTIONS[Example(name)]
    except ValueError:
        choices = ", ".join(example.value for example in Example)
        raise ConfigInvalid(f"未知の厳密解 '{name}'（選択肢: {choices}）") from None


@dataclass(frozen=True)
class ExactSolutionCheck:
    name: str
    max_endpoint_violation: float
    max_derivative_deviation: float
    passed: bool


def check_exact_solution(exact: ExactSolution, samples: int = 100, seed: Optional[int] = 0,
                         endpoint_tol: float = 1e-12, derivative_tol: float = 1e-8,
                         step: float = 1e-5) -> ExactSolutionCheck:
    """端点が境界上にあること、x_ρ（と w_ρ）が中心差分と一致することを確かめる"""
    geom = get_geometry(exact.geometry)
    rng = np.random.default_rng(seed)
    times = rng.uniform(0.0, exact.T, size=samples)
    rhos = rng.uniform(0.0, 1.0, size=samples)

    endpoint_violation = 0.0
    derivative_deviation = 0.0
    ends = np.array([0.0, 1.0])
    for rho, t in zip(rhos, times):
        endpoints = exact.x(ends, t)
        # F の値と、境界への射影までの距離の両方で測る
        distance = np.linalg.norm(endpoints - project_to_boundary(geom, endpoints), axis=-1)
        endpoint_violation = max(endpoint_violation, float(np.max(np.abs(geom.value(endpoints)))),
                                 float(np.max(distance)))
        around = np.array([rho - step, rho + step])
        points = exact.x(around, t)
        central = (points[1] - points[0]) / (2.0 * step)
        derivative_deviation = max(
            derivative_deviation, float(np.max(np.abs(central - exact.x_rho(np.array([rho]), t)[0])))
        )
        if exact.has_field:
            values = exact.w(around, t)
            central_w = (values[1] - values[0]) / (2.0 * step)
            derivative_deviation = max(
                derivative_deviation, float(abs(central_w - exact.w_rho(np.array([rho]), t)[0]))
            )
    passed = endpoint_violation <= endpoint_tol and derivative_deviation <= derivative_tol
    if not passed:
        logger.warning("厳密解 %s の自己検査に失敗: 端点 %.3e, 微分 %.3e",
                       exact.name, endpoint_violation, derivative_deviation)
    return ExactSolutionCheck(exact.name, endpoint_violation, derivative_deviation, passed)


def semicircle_radius_errors(J: int, alpha: float = 1.0, T: float = 0.4,
                             dt: Optional[float] = None) -> Tuple[float, float]:
    """縮む半円の (E1, E2) を半径の漸化式から求める

    上半平面・f = 0 では離散解は常に X^n_j = r_n (cos πρ_j, sin πρ_j) で、
    半径は r_n (r_{n−1}² + Δt/γ) = r_{n−1}³、γ = α + (1 − α) cos²(πh/2) に従う。
    """
    grid = ParameterGrid(J)
    h = grid.h
    dt = h * h if dt is None else float(dt)
    steps = int(round(T / dt))
    dt = T / steps
    gamma = alpha + (1.0 - alpha) * math.cos(0.5 * math.pi * h) ** 2
    # 単位円上の等間隔節点の補間に対する ‖·_ρ‖² と ‖·‖²
    derivative_sq = (2.0 * math.sin(0.5 * math.pi * h) / h) ** 2
    value_sq = (2.0 + math.cos(math.pi * h)) / 3.0

    radius, previous, E1, E2 = 1.0, 0.0, 0.0, 0.0
    for n in range(1, steps + 1):
        radius = radius ** 3 / (radius * radius + dt / gamma)
        error = math.sqrt(1.0 - 2.0 * (T * (n / steps))) - radius
        E1 = max(E1, error * error * derivative_sq)
        E2 += dt * ((error - previous) / dt) ** 2 * value_sq
        previous = error
    return E1, E2


# ========== 誤差汎関数 ==========

@dataclass(frozen=True)
class ErrorReport:
    """E1〜E5（いずれもノルムの二乗）。場のない例では E4, E5 は None"""
    E1: float
    E2: float
    E3: float
    E4: Optional[float]
    E5: Optional[float]
    J: int
    N: int
    alpha: float
    scheme: str

    def value(self, index: int) -> Optional[float]:
        return getattr(self, f"E{index}")

    def to_dict(self) -> dict:
        return {
            "J": self.J, "N": self.N, "alpha": self.alpha, "scheme": self.scheme,
            "E1": self.E1, "E2": self.E2, "E3": self.E3, "E4": self.E4, "E5": self.E5,
        }


class ErrorAccumulator:
    """run の観測者として誤差を逐次集計する

    E1, E3, E4 は n = 0..N の上限、E2, E5 は n = 1..N の Δt 重み付き和。
    E3 は接触節点 j ∈ {0, J} のみで測る。
    E1, E5 の微分は補間の微分 (I^h x)_ρ, (I^h w)_ρ と離散解の微分の差。
    """

    def __init__(self, exact: ExactSolution, dt: float, include_field: Optional[bool] = None):
        if include_field is None:
            include_field = exact.has_field
        if include_field and not exact.has_field:
            raise MissingExactField(f"厳密解 '{exact.name}' には場 w がありません")
        self.exact = exact
        self.dt = float(dt)
        self.include_field = include_field
        self.geometry = get_geometry(exact.geometry)
        self.E1 = 0.0
        self.E2 = 0.0
        self.E3 = 0.0
        self.E4 = 0.0
        self.E5 = 0.0
        self._last_curve_error: Optional[np.ndarray] = None
        self.steps = 0

    def __call__(self, prev: Optional[SimState], state: SimState) -> None:
        grid = state.curve.grid
        t = state.time
        rho = grid.rho
        nodes = state.curve.nodes

        curve_error = self.exact.x(rho, t) - nodes
        # (I^h x)_ρ − X_ρ は要素ごとの定数
        self.E1 = max(self.E1, l2_norm_sq_elementwise(nodal_derivative(curve_error, grid), grid))
        self.E3 = max(self.E3, float(np.max(np.abs(self.geometry.value(nodes[[0, -1]])))))

        if prev is not None:
            if self._last_curve_error is None:
                raise ValueError("初期状態 (None, s0) が観測されていません")
            rate = (curve_error - self._last_curve_error) / self.dt
            self.E2 += self.dt * l2_norm_sq_pwlinear(rate, grid)
            self.steps += 1
        self._last_curve_error = curve_error

        if self.include_field:
            field_error = self.exact.w(rho, t) - state.field.values
            self.E4 = max(self.E4, l2_norm_sq_pwlinear(field_error, grid))
            if prev is not None:
                self.E5 += self.dt * l2_norm_sq_elementwise(nodal_derivative(field_error, grid), grid)

    def report(self, config: SimConfig) -> ErrorReport:
        return ErrorReport(
            E1=self.E1,
            E2=self.E2,
            E3=self.E3,
            E4=self.E4 if self.include_field else None,
            E5=self.E5 if self.include_field else None,
            J=config.J,
            N=config.num_steps,
            alpha=config.alpha,
            scheme=config.scheme,
        )


def error_accumulate(traj: Trajectory, exact: ExactSolution,
                     include_field: Optional[bool] = None) -> ErrorReport:
    """保存済みの軌跡から誤差を計算する（スナップショット間隔 1 が必要）"""
    if traj.config.snapshot_stride != 1:
        raise ValueError("時間和の誤差にはすべてのステップ（snapshot_stride = 1）が必要です")
    accumulator = ErrorAccumulator(exact, traj.config.dt, include_field)
    previous = None
    for state in traj.snapshots:
        accumulator(previous, state)
        previous = state
    return accumulator.report(traj.config)


# ========== EOC ==========

def eoc(prev: Tuple[float, float], curr: Tuple[float, float]) -> float:
    """log(E_prev/E_curr) / log(h_prev/h_curr)"""
    (h_prev, e_prev), (h_curr, e_curr) = prev, curr
    if e_prev == 0.0 or e_curr == 0.0:
        raise ZeroError("誤差が厳密に 0 です（exact）")
    if h_prev == h_curr:
        raise ValueError("h が同じ値の 2 水準からは次数を計算できません")
    return math.log(e_prev / e_curr) / math.log(h_prev / h_curr)


@dataclass
class EocRow:
    J: int
    N: Optional[int]
    dt: Optional[float]
    errors: Dict[int, Optional[float]] = field(default_factory=dict)
    eocs: Dict[int, Optional[float]] = field(default_factory=dict)
    report: Optional[ErrorReport] = None
    failure: Optional[str] = None
    newton: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return 1.0 / self.J


@dataclass
class EocTable:
    """水準ごとの誤差と、隣接水準間の EOC（先頭行は空）"""
    example: str
    alpha: float
    scheme: str
    dt_rule: str
    indices: Tuple[int, ...]
    rows: List[EocRow] = field(default_factory=list)

    @property
    def failures(self) -> List[EocRow]:
        return [row for row in self.rows if row.failure is not None]

    def column(self, index: int) -> List[Optional[float]]:
        return [row.errors.get(index) for row in self.rows]

    def eoc_column(self, index: int) -> List[Optional[float]]:
        return [row.eocs.get(index) for row in self.rows[1:]]

    def to_dict(self) -> dict:
        return {
            "example": self.example,
            "alpha": self.alpha,
            "scheme": self.scheme,
            "dt_rule": self.dt_rule,
            "rows": [
                {
                    "J": row.J,
                    "N": row.N,
                    "dt": row.dt,
                    "errors": {f"E{i}": row.errors.get(i) for i in self.indices},
                    "eocs": {f"eoc{i}": row.eocs.get(i) for i in self.indices},
                    "failure": row.failure,
                }
                for row in self.rows
            ],
        }


def default_indices(example: Example, scheme: str) -> Tuple[int, ...]:
    if EXACT_SOLUTIONS[example].has_field:
        return (1, 2, 4, 5)
    if scheme == "linear":
        return (1, 2, 3)
    return (1, 2)


def _fill_eocs(table: EocTable) -> None:
    for previous, row in zip(table.rows, table.rows[1:]):
        for index in table.indices:
            e_prev, e_curr = previous.errors.get(index), row.errors.get(index)
            if e_prev is None or e_curr is None:
                row.eocs[index] = None
                continue
            # E3 は Δt について 1 次なので時間刻みの比で測る
            if index == 3:
                base_prev, base_curr = previous.dt, row.dt
            else:
                base_prev, base_curr = previous.h, row.h
            try:
                row.eocs[index] = eoc((base_prev, e_prev), (base_curr, e_curr))
            except ZeroError:
                row.eocs[index] = None


def run_level(example: str, J: int, alpha: float, scheme: str, dt_rule: str) -> EocRow:
    """1 水準のシミュレーションを誤差の逐次集計つきで実行する"""
    exact = get_exact_solution(example)
    config = exact.config(J, alpha=alpha, scheme=scheme, dt_rule=dt_rule)
    # 端点と終端のみ保持
    config = config.model_copy(update={"snapshot_stride": config.num_steps})
    simulation = CurveFlowSimulation(config)
    accumulator = ErrorAccumulator(exact, simulation.dt)
    trajectory = simulation.run(observers=[accumulator])
    row = EocRow(J=J, N=simulation.num_steps, dt=simulation.dt, newton=trajectory.newton_statistics())
    if trajectory.error is not None:
        row.failure = str(trajectory.error)
        return row
    row.report = accumulator.report(config)
    row.errors = {index: row.report.value(index) for index in range(1, 6)}
    return row


def convergence_study(example, alpha: Optional[float] = None, scheme: str = "newton",
                      levels: Sequence[int] = (10, 20, 40, 80), dt_rule: str = "h2",
                      n_jobs: int = 1, indices: Optional[Sequence[int]] = None) -> EocTable:
    """各水準を独立ジョブとして実行し、水準順に表を組み立てる"""
    exact = get_exact_solution(example)
    example = Example(exact.name)
    alpha = exact.default_alpha if alpha is None else float(alpha)
    levels = [int(level) for level in levels]
    if not levels:
        raise ConfigInvalid("levels が空です")
    if any(level < 2 for level in levels):
        raise ConfigInvalid("J must be ≥ 2")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigInvalid(f"levels は狭義単調増加である必要があります: {levels}")
    # 設定と厳密解の妥当性は実行前に確かめる
    for level in levels:
        exact.config(level, alpha=alpha, scheme=scheme, dt_rule=dt_rule)
    check = check_exact_solution(exact)
    if not check.passed:
        raise ConfigInvalid(
            f"厳密解 '{exact.name}' の自己検査に失敗しました"
            f"（端点 {check.max_endpoint_violation:.3e}, 微分 {check.max_derivative_deviation:.3e}）"
        )

    logger.info("収束スタディ開始: %s α=%s %s levels=%s dt=%s", example.value, alpha, scheme, levels, dt_rule)
    rows = Parallel(n_jobs=n_jobs)(
        delayed(run_level)(example.value, level, alpha, scheme, dt_rule) for level in levels
    )
    table = EocTable(
        example=example.value,
        alpha=alpha,
        scheme=scheme,
        dt_rule=dt_rule,
        indices=tuple(indices) if indices else default_indices(example, scheme),
        rows=list(rows),
    )
    for row in table.rows:
        if row.failure:
            logger.warning("J=%d で失敗: %s", row.J, row.failure)
        else:
            logger.info("J=%d N=%d: %s", row.J, row.N,
                        ", ".join(f"E{i}={row.errors[i]:.4e}" for i in table.indices))
    _fill_eocs(table)
    return table


# ========== 公表値との照合 ==========

@dataclass(frozen=True)
class ReferenceTable:
    table_id: str
    example: Example
    alpha: float
    scheme: str
    levels: Tuple[int, ...]
    steps: Tuple[int, ...]
    values: Dict[int, Tuple[float, ...]]
    eocs: Dict[int, Tuple[float, ...]]
    rel_tol: float
    eoc_tol: float


# 半円の公表値は離散解（半径の漸化式で決まる）より小さく、差は J = 10 で最大 32%、
# J を倍にするごとにおよそ 1/4 になる（J = 80 で 0.5%）。EOC の差は J = 20 で最大 0.29。
# 漸化式との一致は radius_recursion で確かめ、公表値は広い許容幅で照合する
SEMICIRCLE_REL_TOL = 0.35
SEMICIRCLE_EOC_TOL = 0.35

# 公表された誤差表（J = 10, 20, 40, 80、Δt = h²）。値は指数を戻した絶対値
REFERENCE_TABLES: Dict[str, ReferenceTable] = {
    # 縮む半円、α = 1
    "t1l": ReferenceTable(
        "t1l", Example.SEMICIRCLE, 1.0, "newton", (10, 20, 40, 80), (40, 160, 640, 2560),
        values={
            1: (4.672e-3, 0.3997e-3, 0.02726e-3, 0.001742e-3),
            2: (20.16e-4, 1.859e-4, 0.1298e-4, 0.008347e-4),
        },
        eocs={1: (3.55, 3.87, 3.97), 2: (3.44, 3.84, 3.96)},
        rel_tol=SEMICIRCLE_REL_TOL, eoc_tol=SEMICIRCLE_EOC_TOL,
    ),
    # 縮む半円、α = 0.5
    "t1r": ReferenceTable(
        "t1r", Example.SEMICIRCLE, 0.5, "newton", (10, 20, 40, 80), (40, 160, 640, 2560),
        values={
            1: (1.589e-3, 0.1389e-3, 0.009514e-3, 0.0006087e-3),
            2: (8.884e-4, 0.8302e-4, 0.05798e-4, 0.003729e-4),
        },
        eocs={1: (3.52, 3.87, 3.97), 2: (3.42, 3.84, 3.96)},
        rel_tol=SEMICIRCLE_REL_TOL, eoc_tol=SEMICIRCLE_EOC_TOL,
    ),
    # 回転する直径、α = 1
    "t2l": ReferenceTable(
        "t2l", Example.DIAMETER, 1.0, "newton", (10, 20, 40, 80), (50, 200, 800, 3200),
        values={
            1: (1.440e-4, 0.09198e-4, 0.005780e-4, 0.0003617e-4),
            2: (3.040e-5, 0.1925e-5, 0.01207e-5, 0.0007552e-5),
        },
        eocs={1: (3.97, 3.99, 4.00), 2: (3.98, 4.00, 4.00)},
        rel_tol=0.05, eoc_tol=0.05,
    ),
    # 回転する直径、α = 0.5
    "t2r": ReferenceTable(
        "t2r", Example.DIAMETER, 0.5, "newton", (10, 20, 40, 80), (50, 200, 800, 3200),
        values={
            1: (1.181e-4, 0.07459e-4, 0.004674e-4, 0.0002923e-4),
            2: (2.710e-5, 0.1716e-5, 0.01076e-5, 0.0006727e-5),
        },
        eocs={1: (3.98, 4.00, 4.00), 2: (3.98, 4.00, 4.00)},
        rel_tol=0.05, eoc_tol=0.05,
    ),
    # 回転する直径、線形スキーム、α = 1
    "t3": ReferenceTable(
        "t3", Example.DIAMETER, 1.0, "linear", (10, 20, 40, 80), (50, 200, 800, 3200),
        values={
            1: (43.83e-4, 3.175e-4, 0.2076e-4, 0.01317e-4),
            2: (76.20e-5, 5.442e-5, 0.3542e-5, 0.02243e-5),
            3: (5.771e-3, 1.563e-3, 0.3989e-3, 0.1003e-3),
        },
        eocs={1: (3.79, 3.93, 3.98), 2: (3.81, 3.94, 3.98), 3: (0.94, 0.99, 1.00)},
        rel_tol=0.10, eoc_tol=0.10,
    ),
    # 曲線と場の連成、α = 0.5
    "t4": ReferenceTable(
        "t4", Example.COUPLED, 0.5, "newton", (10, 20, 40, 80), (50, 200, 800, 3200),
        values={
            1: (1.205e-4, 0.07643e-4, 0.004795e-4, 0.0003000e-4),
            2: (3.756e-5, 0.2453e-5, 0.01551e-5, 0.0009721e-5),
            4: (1.207e-6, 0.07829e-6, 0.004937e-6, 0.0003093e-6),
            5: (3.073e-6, 0.2010e-6, 0.01271e-6, 0.0007967e-6),
        },
        eocs={
            1: (3.98, 3.99, 4.00),
            2: (3.94, 3.98, 4.00),
            4: (3.95, 3.99, 4.00),
            5: (3.93, 3.98, 4.00),
        },
        # E2, E5 は J = 10 で 4% 前後大きく、J = 20 との EOC が 0.05 近くずれる
        rel_tol=0.05, eoc_tol=0.10,
    ),
}

# α = 1 の連成例は α = 0.5 の値に近いことだけを確認する
INFORMATIONAL_REL_TOL = 0.25


def get_reference_table(table_id: str) -> ReferenceTable:
    key = str(table_id).lower()
    if key not in REFERENCE_TABLES:
        raise ConfigInvalid(f"未知の表 '{table_id}'（選択肢: {', '.join(REFERENCE_TABLES)}）")
    return REFERENCE_TABLES[key]


@dataclass(frozen=True)
class CellResult:
    quantity: str
    J: int
    reference: float
    measured: Optional[float]
    deviation: Optional[float]
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "J": self.J,
            "reference": self.reference,
            "measured": self.measured,
            "deviation": self.deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class ComparisonReport:
    table_id: str
    rel_tol: float
    eoc_tol: float
    cells: List[CellResult] = field(default_factory=list)
    properties: List[PropertyResult] = field(default_factory=list)
    informational: List[CellResult] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    elapsed_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return (not self.failures
                and all(cell.passed for cell in self.cells)
                and all(prop.passed for prop in self.properties))

    @property
    def failed_cells(self) -> List[CellResult]:
        return [cell for cell in self.cells if not cell.passed]

    def to_dict(self) -> dict:
        """実行時間を含まない決定的な内容"""
        return {
            "table": self.table_id,
            "passed": self.passed,
            "rel_tol": self.rel_tol,
            "eoc_tol": self.eoc_tol,
            "cells": [cell.to_dict() for cell in self.cells],
            "properties": [prop.to_dict() for prop in self.properties],
            "informational": [cell.to_dict() for cell in self.informational],
            "failures": list(self.failures),
        }


def _value_cell(quantity: str, J: int, reference: float, measured: Optional[float],
                tolerance: float) -> CellResult:
    if measured is None:
        return CellResult(quantity, J, reference, None, None, tolerance, False)
    deviation = abs(measured - reference) / abs(reference)
    return CellResult(quantity, J, reference, measured, deviation, tolerance, deviation <= tolerance)


def _eoc_cell(quantity: str, J: int, reference: float, measured: Optional[float],
              tolerance: float) -> CellResult:
    if measured is None:
        return CellResult(quantity, J, reference, None, None, tolerance, False)
    deviation = abs(measured - reference)
    return CellResult(quantity, J, reference, measured, deviation, tolerance, deviation <= tolerance)


def _compare_table(reference: ReferenceTable, table: EocTable, rel_tol: float,
                   eoc_tol: float) -> List[CellResult]:
    cells = []
    for index, expected in sorted(reference.values.items()):
        for row, value in zip(table.rows, expected):
            cells.append(_value_cell(f"E{index}", row.J, value, row.errors.get(index), rel_tol))
    for index, expected in sorted(reference.eocs.items()):
        for row, value in zip(table.rows[1:], expected):
            cells.append(_eoc_cell(f"eoc{index}", row.J, value, row.eocs.get(index), eoc_tol))
    return cells


RADIUS_RECURSION_REL_TOL = 1e-6


def _radius_recursion_property(table: EocTable) -> PropertyResult:
    """半円の各水準の E1, E2 が半径の漸化式の値と一致するか"""
    details, passed = [], True
    for row in table.rows:
        if row.report is None:
            passed = False
            details.append(f"J={row.J}: 失敗")
            continue
        expected = semicircle_radius_errors(row.J, table.alpha, dt=row.dt)
        deviation = max(abs(row.errors[i] - value) / value for i, value in zip((1, 2), expected))
        passed = passed and deviation <= RADIUS_RECURSION_REL_TOL
        details.append(f"J={row.J}: {deviation:.2e}")
    return PropertyResult("radius_recursion", passed, "; ".join(details))


def compare_against_reference(table_id: str, rel_tol: Optional[float] = None,
                              eoc_tol: Optional[float] = None, informational: bool = False,
                              n_jobs: int = 1,
                              levels: Optional[Sequence[int]] = None) -> ComparisonReport:
    """対応する収束スタディを実行し、セルごとの偏差を報告する（失敗も報告内容とする）"""
    reference = get_reference_table(table_id)
    rel_tol = reference.rel_tol if rel_tol is None else float(rel_tol)
    eoc_tol = reference.eoc_tol if eoc_tol is None else float(eoc_tol)
    levels = tuple(reference.levels if levels is None else levels)
    if levels != reference.levels[:len(levels)]:
        raise ConfigInvalid(f"levels は {reference.levels} の先頭部分である必要があります: {levels}")

    started = time.perf_counter()
    report = ComparisonReport(reference.table_id, rel_tol, eoc_tol)
    table = convergence_study(reference.example, reference.alpha, reference.scheme, levels,
                              n_jobs=n_jobs, indices=tuple(sorted(reference.values)))
    report.failures.extend(f"J={row.J}: {row.failure}" for row in table.failures)
    report.cells.extend(_compare_table(reference, table, rel_tol, eoc_tol))

    for row, steps in zip(table.rows, reference.steps):
        if row.N is not None and row.N != steps:
            report.failures.append(f"J={row.J}: N={row.N}（期待値 {steps}）")

    if reference.scheme == "newton":
        tau = max((r.report.E3 for r in table.rows if r.report is not None), default=0.0)
        report.properties.append(PropertyResult(
            "newton_constraint",
            all(r.report is not None and r.report.E3 <= 1e-12 for r in table.rows),
            f"max E3 = {tau:.3e}",
        ))
    else:
        newton = convergence_study(reference.example, reference.alpha, "newton", levels,
                                   n_jobs=n_jobs, indices=(1,))
        ordered = all(
            a.errors.get(1) is not None and b.errors.get(1) is not None and a.errors[1] < b.errors[1]
            for a, b in zip(newton.rows, table.rows)
        )
        report.properties.append(PropertyResult(
            "newton_below_linear",
            ordered,
            "; ".join(f"J={a.J}: {a.errors.get(1)} < {b.errors.get(1)}" for a, b in zip(newton.rows, table.rows)),
        ))

    if reference.example is Example.SEMICIRCLE:
        report.properties.append(_radius_recursion_property(table))

    if informational and reference.example is Example.COUPLED:
        other = convergence_study(reference.example, 1.0, reference.scheme, levels,
                                  n_jobs=n_jobs, indices=tuple(sorted(reference.values)))
        for index, expected in sorted(reference.values.items()):
            for row, value in zip(other.rows, expected):
                report.informational.append(
                    _value_cell(f"E{index}[alpha=1]", row.J, value, row.errors.get(index),
                                INFORMATIONAL_REL_TOL)
                )

    report.elapsed_seconds = time.perf_counter() - started
    logger.info("照合 %s: %s（%.1f 秒）", reference.table_id,
                "合格" if report.passed else "不合格", report.elapsed_seconds)
    return report


# ========== 図用スナップショット ==========

def snapshot_states(example, times: Sequence[float], J: int = 20, alpha: Optional[float] = None,
                    scheme: str = "newton", dt_rule: str = "h2") -> List[SimState]:
    """指定時刻（時間格子上にあるもの）の曲線と場を取り出す"""
    exact = get_exact_solution(example)
    config = exact.config(J, alpha=alpha, scheme=scheme, dt_rule=dt_rule)
    steps, dt = config.time_grid()
    wanted = {}
    for t in times:
        n = int(round(t / dt))
        if not 0 <= n <= steps or abs(config.time_at(n) - t) > 1e-9:
            raise ConfigInvalid(f"時刻 {t} は時間格子 Δt={dt:.6g}（0..{exact.T}）上にありません")
        wanted[n] = t

    captured: Dict[int, SimState] = {}

    def capture(prev: Optional[SimState], state: SimState) -> None:
        if state.n in wanted:
            captured[state.n] = state

    config = config.model_copy(update={"snapshot_stride": steps})
    trajectory = CurveFlowSimulation(config).run(observers=[capture])
    if trajectory.error is not None:
        raise trajectory.error
    return [captured[n] for n in sorted(wanted)]
