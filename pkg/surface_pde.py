#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
曲線上の反応拡散方程式（1 ステップ）
更新後の曲線 X^n 上で W^n を三重対角の連立一次方程式として解く。
端点は Dirichlet 条件 W = w_b で消去する。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from curve_mesh import CurveState, FieldState, element_frames
from errors import ConfigInvalid, NonFinite, SingularSystem
from forcing import ForcingTime, SourceFn, evaluate_nodal, no_source


@dataclass(frozen=True)
class FieldStepParams:
    """場のステップのパラメータ"""
    dt: float
    g_eval: SourceFn = no_source
    w_b: float = 0.0
    g_time: ForcingTime = ForcingTime.PREV

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigInvalid(f"dt は正である必要があります: {self.dt}")
        object.__setattr__(self, "g_time", ForcingTime(self.g_time))


@dataclass(frozen=True)
class ElementVelocities:
    """要素ごと・隣接節点ごとの接線速度 Ψ と法線速度 V

    形状は (J, 2)。列 0 が要素の左節点 j−1、列 1 が右節点 j。
    """
    tangential: np.ndarray
    normal: np.ndarray


def element_velocities(prev: CurveState, curr: CurveState, dt: float) -> ElementVelocities:
    """D_tX を時刻 n の要素フレームで分解する"""
    if prev.grid != curr.grid:
        raise ValueError("prev と curr の格子が一致しません")
    frames = element_frames(curr)
    velocity = (curr.nodes - prev.nodes) / dt
    left, right = velocity[:-1], velocity[1:]
    tangential = np.column_stack((
        np.sum(left * frames.tangents, axis=1),
        np.sum(right * frames.tangents, axis=1),
    ))
    normal = np.column_stack((
        np.sum(left * frames.normals, axis=1),
        np.sum(right * frames.normals, axis=1),
    ))
    return ElementVelocities(tangential=tangential, normal=normal)


def field_step(prev_curve: CurveState, curr_curve: CurveState, prev_field: FieldState,
               p: FieldStepParams, time: Optional[float] = None) -> FieldState:
    """W^{n−1} から W^n を求める"""
    grid = curr_curve.grid
    if prev_field.grid != grid:
        raise ValueError("prev_field と曲線の格子が一致しません")
    t_n = curr_curve.time if time is None else float(time)
    values = np.full(grid.num_nodes, float(p.w_b))
    if grid.J < 2:
        return FieldState(grid, values, t_n)

    length_prev = element_frames(prev_curve).lengths
    length_curr = element_frames(curr_curve).lengths
    velocities = element_velocities(prev_curve, curr_curve, p.dt)
    psi = velocities.tangential
    w_prev = prev_field.values

    # 内部節点 j = 1..J−1 : 左要素 e = j−1、右要素 e = j
    left_len, right_len = length_curr[:-1], length_curr[1:]
    diag = (0.5 * (left_len + right_len) / p.dt
            + 1.0 / left_len + 1.0 / right_len
            + 0.5 * psi[:-1, 1] - 0.5 * psi[1:, 0])
    sub = -1.0 / left_len + 0.5 * psi[:-1, 0]
    sup = -1.0 / right_len - 0.5 * psi[1:, 1]

    rho = grid.rho[1:-1]
    w_interior = w_prev[1:-1]
    t_g = prev_curve.time if p.g_time is ForcingTime.PREV else t_n
    g_left = evaluate_nodal(p.g_eval, rho, t_g, velocities.normal[:-1, 1], w_interior)
    g_right = evaluate_nodal(p.g_eval, rho, t_g, velocities.normal[1:, 0], w_interior)
    rhs = (0.5 * (length_prev[:-1] + length_prev[1:]) * w_interior / p.dt
           + 0.5 * (left_len * g_left + right_len * g_right))
    rhs[0] -= sub[0] * p.w_b
    rhs[-1] -= sup[-1] * p.w_b

    banded = np.zeros((3, grid.J - 1))
    banded[0, 1:] = sup[:-1]
    banded[1, :] = diag
    banded[2, :-1] = sub[1:]
    try:
        interior = solve_banded((1, 1), banded, rhs)
    except (LinAlgError, ValueError) as exc:
        raise SingularSystem(f"場の三重対角系を解けませんでした: {exc}") from exc
    if not np.all(np.isfinite(interior)):
        raise NonFinite("場の解に NaN/Inf が含まれています")
    values[1:-1] = interior
    return FieldState(grid, values, t_n)
