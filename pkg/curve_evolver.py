#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
曲線の時間発展（1 ステップ）
境界拘束 F(X_0) = F(X_J) = 0 付きの非線形離散系を Newton 法で解く方式と、
拘束を x_t·∇F(x) = 0 で線形化した線形スキームの 2 通りを提供する。

残差は節点ハット関数で試験した弱形式に h を掛けたもの。
端点では接線方向 ∇⊥F(X) で試験した式と拘束式 F(X) = 0 の 2 本を並べる。
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from curve_mesh import DEFAULT_EPS_LEN, CurveState, FieldState, element_frames
from domain_boundary import BoundaryGeometry, eval_all
from errors import ConfigInvalid, NewtonDiverged, NonFinite, SingularSystem
from forcing import ForcingFn, ForcingTime, evaluate_nodal, no_forcing

logger = logging.getLogger(__name__)

_EYE = np.eye(2)


class CurveScheme(str, Enum):
    NEWTON = "newton"
    LINEAR = "linear"


@dataclass(frozen=True)
class CurveStepParams:
    """曲線ステップのパラメータ"""
    alpha: float
    dt: float
    f_eval: ForcingFn = no_forcing
    newton_tol: float = 1e-12
    newton_max_iter: int = 25
    increment_tol: float = 1e-12
    scheme: CurveScheme = CurveScheme.NEWTON
    f_time: ForcingTime = ForcingTime.PREV
    eps_len: float = DEFAULT_EPS_LEN

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigInvalid(f"alpha は (0, 1] の範囲である必要があります: {self.alpha}")
        if not self.dt > 0.0:
            raise ConfigInvalid(f"dt は正である必要があります: {self.dt}")
        if not (self.newton_tol > 0.0 and self.increment_tol > 0.0):
            raise ConfigInvalid("Newton の許容誤差は正である必要があります")
        if self.newton_max_iter < 1:
            raise ConfigInvalid(f"newton_max_iter は 1 以上である必要があります: {self.newton_max_iter}")
        object.__setattr__(self, "scheme", CurveScheme(self.scheme))
        object.__setattr__(self, "f_time", ForcingTime(self.f_time))


@dataclass(frozen=True)
class NewtonReport:
    """1 ステップ分の反復の記録"""
    iterations: int
    final_constraint_violation: float
    converged: bool
    final_increment: float = 0.0


@dataclass(frozen=True)
class BlockTridiagonalSystem:
    """2×2 ブロック三重対角系

    節点 k の行は lower[k]·δ_{k−1} + diag[k]·δ_k + upper[k]·δ_{k+1} = rhs[k]。
    lower[0] と upper[-1] はゼロ。
    """
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    @property
    def num_blocks(self) -> int:
        return self.diag.shape[0]

    def to_dense(self) -> Tuple[np.ndarray, np.ndarray]:
        """密行列 (2n × 2n) と右辺ベクトルを返す（検証用）"""
        n = self.num_blocks
        matrix = np.zeros((2 * n, 2 * n))
        for k in range(n):
            rows = slice(2 * k, 2 * k + 2)
            matrix[rows, 2 * k:2 * k + 2] = self.diag[k]
            if k > 0:
                matrix[rows, 2 * k - 2:2 * k] = self.lower[k]
            if k < n - 1:
                matrix[rows, 2 * k + 2:2 * k + 4] = self.upper[k]
        return matrix, self.rhs.reshape(-1).copy()


@dataclass(frozen=True)
class _LaggedData:
    """前時刻から固定したデータ（節点質量行列と節点外力ベクトル）"""
    nodal_mass: np.ndarray
    nodal_forcing: np.ndarray


def _lagged_data(prev: CurveState, prev_field: FieldState, p: CurveStepParams,
                 forcing_time: float) -> _LaggedData:
    frames = element_frames(prev, p.eps_len)
    normals = frames.normals
    # M_σ = α Id + (1 − α) N ⊗ N
    mass = p.alpha * _EYE + (1.0 - p.alpha) * normals[:, :, None] * normals[:, None, :]
    weighted_mass = 0.5 * frames.q[:, None, None] * mass
    weighted_normal = 0.5 * frames.q[:, None] * normals

    num_nodes = prev.grid.num_nodes
    nodal_mass = np.zeros((num_nodes, 2, 2))
    nodal_mass[:-1] += weighted_mass
    nodal_mass[1:] += weighted_mass
    nodal_normal = np.zeros((num_nodes, 2))
    nodal_normal[:-1] += weighted_normal
    nodal_normal[1:] += weighted_normal

    f_values = evaluate_nodal(p.f_eval, prev.grid.rho, forcing_time, prev_field.values)
    return _LaggedData(nodal_mass=nodal_mass, nodal_forcing=f_values[:, None] * nodal_normal)


def _forcing_time(prev: CurveState, cand: CurveState, p: CurveStepParams) -> float:
    return prev.time if p.f_time is ForcingTime.PREV else cand.time


def _check_compatible(prev: CurveState, prev_field: FieldState, cand: CurveState):
    if prev.grid != cand.grid or prev.grid != prev_field.grid:
        raise ValueError("prev / prev_field / cand の格子が一致しません")


def _nodal_residual(prev: CurveState, cand: CurveState, lagged: _LaggedData, dt: float) -> np.ndarray:
    """端点処理前の節点残差 r_k = M̄_k D_tX_k + Σ(X_k − X_隣) − f̄_k"""
    nodes = cand.nodes
    velocity = (nodes - prev.nodes) / dt
    chords = np.diff(nodes, axis=0)
    stiffness = np.zeros_like(nodes)
    stiffness[:-1] -= chords
    stiffness[1:] += chords
    mass_term = np.einsum("kab,kb->ka", lagged.nodal_mass, velocity)
    return mass_term + stiffness - lagged.nodal_forcing


def _assemble(prev: CurveState, cand: CurveState, geom: BoundaryGeometry, p: CurveStepParams,
              lagged: _LaggedData, linearized: bool = False
              ) -> Tuple[np.ndarray, BlockTridiagonalSystem]:
    num_nodes = prev.grid.num_nodes
    r = _nodal_residual(prev, cand, lagged, p.dt)

    degree = np.full(num_nodes, 2.0)
    degree[[0, -1]] = 1.0
    diag = lagged.nodal_mass / p.dt + degree[:, None, None] * _EYE
    lower = np.zeros((num_nodes, 2, 2))
    upper = np.zeros((num_nodes, 2, 2))
    lower[1:] = -_EYE
    upper[:-1] = -_EYE

    residual = r.copy()
    for k in (0, num_nodes - 1):
        # 線形スキームでは境界の方向を前時刻で固定する
        point = prev.nodes[k] if linearized else cand.nodes[k]
        data = eval_all(geom, point)
        tangential_row = data.grad_perp @ diag[k]
        if not linearized:
            tangential_row = tangential_row + r[k] @ data.d2perp
        residual[k] = (r[k] @ data.grad_perp, 0.0 if linearized else data.F)
        diag[k] = np.vstack((tangential_row, data.grad))
        coupling = np.vstack((-data.grad_perp, np.zeros(2)))
        if k == 0:
            upper[0] = coupling
        else:
            lower[-1] = coupling

    if not (np.all(np.isfinite(residual)) and np.all(np.isfinite(diag))):
        raise NonFinite("残差またはヤコビ行列に NaN/Inf が含まれています")
    return residual, BlockTridiagonalSystem(lower=lower, diag=diag, upper=upper, rhs=-residual)


def assemble_residual(prev: CurveState, prev_field: FieldState, cand: CurveState,
                      geom: BoundaryGeometry, p: CurveStepParams) -> np.ndarray:
    """候補 cand での残差（節点ごとの 2 成分、端点は (接線式, 拘束式)）"""
    _check_compatible(prev, prev_field, cand)
    lagged = _lagged_data(prev, prev_field, p, _forcing_time(prev, cand, p))
    residual, _ = _assemble(prev, cand, geom, p, lagged)
    return residual


def assemble_newton_system(prev: CurveState, prev_field: FieldState, cand: CurveState,
                           geom: BoundaryGeometry, p: CurveStepParams) -> BlockTridiagonalSystem:
    """残差のヤコビ行列と右辺 −R からなるブロック三重対角系"""
    _check_compatible(prev, prev_field, cand)
    lagged = _lagged_data(prev, prev_field, p, _forcing_time(prev, cand, p))
    _, system = _assemble(prev, cand, geom, p, lagged)
    return system


def solve_block_tridiagonal(system: BlockTridiagonalSystem, pivot_tol: float = 1e-14) -> np.ndarray:
    """ブロック Thomas 法（前進消去・後退代入）で解く"""
    lower = system.lower.tolist()
    diag = system.diag.tolist()
    upper = system.upper.tolist()
    rhs = system.rhs.tolist()
    n = len(diag)

    # 2×2 ブロックは Python の float で直接扱う（小さな numpy 配列より速い）
    c_mod = [None] * n
    d_mod = [None] * n
    for k in range(n):
        (b00, b01), (b10, b11) = diag[k]
        r0, r1 = rhs[k]
        if k > 0:
            (a00, a01), (a10, a11) = lower[k]
            (c00, c01), (c10, c11) = c_mod[k - 1]
            b00 -= a00 * c00 + a01 * c10
            b01 -= a00 * c01 + a01 * c11
            b10 -= a10 * c00 + a11 * c10
            b11 -= a10 * c01 + a11 * c11
            y0, y1 = d_mod[k - 1]
            r0 -= a00 * y0 + a01 * y1
            r1 -= a10 * y0 + a11 * y1
        det = b00 * b11 - b01 * b10
        scale = max(abs(b00), abs(b01), abs(b10), abs(b11))
        if not abs(det) > pivot_tol * scale * scale:
            raise SingularSystem(f"ブロック {k} の消去で特異な 2×2 ピボット（det={det:.3e}）")
        i00, i01, i10, i11 = b11 / det, -b01 / det, -b10 / det, b00 / det
        (u00, u01), (u10, u11) = upper[k]
        c_mod[k] = ((i00 * u00 + i01 * u10, i00 * u01 + i01 * u11),
                    (i10 * u00 + i11 * u10, i10 * u01 + i11 * u11))
        d_mod[k] = (i00 * r0 + i01 * r1, i10 * r0 + i11 * r1)

    solution = [None] * n
    solution[-1] = d_mod[-1]
    for k in range(n - 2, -1, -1):
        (c00, c01), (c10, c11) = c_mod[k]
        y0, y1 = solution[k + 1]
        d0, d1 = d_mod[k]
        solution[k] = (d0 - c00 * y0 - c01 * y1, d1 - c10 * y0 - c11 * y1)
    return np.array(solution, dtype=float)


def _constraint_violation(geom: BoundaryGeometry, nodes: np.ndarray) -> float:
    return float(np.max(np.abs(geom.value(nodes[[0, -1]]))))


def newton_step(prev: CurveState, prev_field: FieldState, geom: BoundaryGeometry,
                p: CurveStepParams, time: Optional[float] = None) -> Tuple[CurveState, NewtonReport]:
    """Newton 反復 X^{n,i} = X^{n,i−1} + δ^i（X^{n,0} = X^{n−1}）で 1 ステップ進める"""
    time_next = prev.time + p.dt if time is None else float(time)
    lagged = _lagged_data(prev, prev_field, p,
                          prev.time if p.f_time is ForcingTime.PREV else time_next)
    nodes = np.array(prev.nodes)
    violation = _constraint_violation(geom, nodes)
    for iteration in range(1, p.newton_max_iter + 1):
        cand = CurveState(prev.grid, nodes, time_next)
        _, system = _assemble(prev, cand, geom, p, lagged)
        delta = solve_block_tridiagonal(system)
        nodes = nodes + delta
        cand = CurveState(prev.grid, nodes, time_next)
        element_frames(cand, p.eps_len)

        violation = _constraint_violation(geom, nodes)
        increment = float(np.max(np.abs(delta)))
        if not (np.isfinite(violation) and np.isfinite(increment)):
            raise NonFinite("Newton 反復で NaN/Inf が発生しました")
        logger.debug("t=%.6f Newton %d: |δ|=%.3e, max|F|=%.3e", time_next, iteration, increment, violation)
        if violation <= p.newton_tol and increment <= p.increment_tol:
            return cand, NewtonReport(iteration, violation, True, increment)

    raise NewtonDiverged(
        f"Newton 法が {p.newton_max_iter} 回で収束しませんでした（max|F|={violation:.3e}）"
    )


def linear_scheme_step(prev: CurveState, prev_field: FieldState, geom: BoundaryGeometry,
                       p: CurveStepParams, time: Optional[float] = None) -> CurveState:
    """境界拘束を ⟨(X^n − X^{n−1})·∇F(X^{n−1})⟩ = 0 で近似した線形スキーム（連立一次方程式 1 回）"""
    time_next = prev.time + p.dt if time is None else float(time)
    lagged = _lagged_data(prev, prev_field, p,
                          prev.time if p.f_time is ForcingTime.PREV else time_next)
    _, system = _assemble(prev, prev, geom, p, lagged, linearized=True)
    delta = solve_block_tridiagonal(system)
    curr = CurveState(prev.grid, prev.nodes + delta, time_next)
    element_frames(curr, p.eps_len)
    return curr


def curve_step(prev: CurveState, prev_field: FieldState, geom: BoundaryGeometry,
               p: CurveStepParams, time: Optional[float] = None) -> Tuple[CurveState, NewtonReport]:
    """スキームに応じて 1 ステップ進める（線形スキームは 1 回の求解として記録）"""
    if p.scheme is CurveScheme.NEWTON:
        return newton_step(prev, prev_field, geom, p, time)
    curr = linear_scheme_step(prev, prev_field, geom, p, time)
    violation = _constraint_violation(geom, curr.nodes)
    return curr, NewtonReport(1, violation, violation <= p.newton_tol, 0.0)
