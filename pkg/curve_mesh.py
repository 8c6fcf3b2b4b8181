#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
折れ線曲線の表現と要素ごとの幾何量
パラメータ区間 [0,1] の一様分割、要素長・接線・法線、集中質量内積、
区分一次／区分定数関数の厳密な L2 ノルム
"""

from dataclasses import dataclass

import numpy as np

from errors import DegenerateElement, NonFinite

# 要素長の縮退判定しきい値
DEFAULT_EPS_LEN = 1e-14


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ParameterGrid:
    """一様パラメータ格子 ρ_j = j/J"""
    J: int

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 1:
            raise ValueError(f"J は正の整数である必要があります: {self.J}")

    @property
    def h(self) -> float:
        return 1.0 / self.J

    @property
    def rho(self) -> np.ndarray:
        # j/J とすることで ρ_J = 1 がちょうど成り立つ
        return np.arange(self.J + 1, dtype=float) / self.J

    @property
    def num_nodes(self) -> int:
        return self.J + 1


@dataclass(frozen=True)
class CurveState:
    """ある時刻の折れ線曲線 X^n（節点座標 (J+1, 2)）"""
    grid: ParameterGrid
    nodes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        nodes = _frozen_array(self.nodes)
        if nodes.shape != (self.grid.num_nodes, 2):
            raise ValueError(
                f"節点配列の形状が不正です: {nodes.shape}（期待値 {(self.grid.num_nodes, 2)}）"
            )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "time", float(self.time))

    def element_lengths(self) -> np.ndarray:
        diffs = np.diff(self.nodes, axis=0)
        return np.hypot(diffs[:, 0], diffs[:, 1])

    def with_nodes(self, nodes: np.ndarray, time: float) -> "CurveState":
        return CurveState(self.grid, nodes, time)

    @property
    def endpoints(self) -> np.ndarray:
        return self.nodes[[0, -1]]


@dataclass(frozen=True)
class FieldState:
    """曲線上のスカラー場 W^n の節点値"""
    grid: ParameterGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.shape != (self.grid.num_nodes,):
            raise ValueError(
                f"場の配列の形状が不正です: {values.shape}（期待値 {(self.grid.num_nodes,)}）"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def constant(cls, grid: ParameterGrid, value: float, time: float = 0.0) -> "FieldState":
        return cls(grid, np.full(grid.num_nodes, float(value)), time)


@dataclass(frozen=True)
class ElementFrames:
    """要素 σ_j ごとの長さ L_j、弦長二乗 q、単位接線 T_j、単位法線 N_j

    q[e] は要素 e（節点 e → e+1）の |X_{e+1} − X_e|²。
    """
    lengths: np.ndarray
    q: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray

    def __len__(self) -> int:
        return len(self.lengths)


def element_frames(curve: CurveState, eps_len: float = DEFAULT_EPS_LEN) -> ElementFrames:
    """要素ごとの幾何量を計算する"""
    diffs = np.diff(curve.nodes, axis=0)
    if not np.all(np.isfinite(diffs)):
        raise NonFinite("曲線の節点に NaN/Inf が含まれています")
    lengths = np.hypot(diffs[:, 0], diffs[:, 1])
    collapsed = np.flatnonzero(lengths <= eps_len)
    if collapsed.size:
        element = int(collapsed[0]) + 1
        raise DegenerateElement(
            f"要素 σ_{element} の長さ {lengths[collapsed[0]]:.3e} がしきい値 {eps_len:.1e} 以下です",
            element=element,
        )
    tangents = diffs / lengths[:, None]
    # 反時計回りに π/2 回転
    normals = np.column_stack((-tangents[:, 1], tangents[:, 0]))
    return ElementFrames(lengths=lengths, q=lengths ** 2, tangents=tangents, normals=normals)


def _check_nodal(values: np.ndarray, grid: ParameterGrid, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[0] != grid.num_nodes:
        raise ValueError(f"{name} の長さ {values.shape[0]} が節点数 {grid.num_nodes} と一致しません")
    return values


def lumped_inner_product(a: np.ndarray, b: np.ndarray, grid: ParameterGrid) -> float:
    """集中質量内積 (a, b)^h（ベクトル値なら成分ごとの和）"""
    a = _check_nodal(a, grid, "a")
    b = _check_nodal(b, grid, "b")
    if a.shape != b.shape:
        raise ValueError(f"a と b の形状が一致しません: {a.shape} != {b.shape}")
    products = a * b
    if products.ndim > 1:
        products = products.reshape(grid.num_nodes, -1).sum(axis=1)
    return float(0.5 * grid.h * np.sum(products[:-1] + products[1:]))


def l2_norm_sq_pwlinear(e: np.ndarray, grid: ParameterGrid) -> float:
    """区分一次関数の L2 ノルムの二乗（要素ごとに厳密積分）"""
    e = _check_nodal(e, grid, "e")
    left, right = e[:-1], e[1:]
    return float(grid.h / 3.0 * np.sum(left * left + left * right + right * right))


def l2_norm_sq_mixed(linear_nodal: np.ndarray, const_elem: np.ndarray, grid: ParameterGrid) -> float:
    """区分一次関数と区分定数関数の差の L2 ノルムの二乗"""
    linear_nodal = _check_nodal(linear_nodal, grid, "linear_nodal")
    const_elem = np.asarray(const_elem, dtype=float)
    if const_elem.shape[0] != grid.J:
        raise ValueError(f"const_elem の長さ {const_elem.shape[0]} が要素数 {grid.J} と一致しません")
    left = linear_nodal[:-1] - const_elem
    right = linear_nodal[1:] - const_elem
    return float(grid.h / 3.0 * np.sum(left * left + left * right + right * right))


def l2_norm_sq_elementwise(const_elem: np.ndarray, grid: ParameterGrid) -> float:
    """区分定数関数の L2 ノルムの二乗 h Σ|c_e|²"""
    const_elem = np.asarray(const_elem, dtype=float)
    if const_elem.shape[0] != grid.J:
        raise ValueError(f"const_elem の長さ {const_elem.shape[0]} が要素数 {grid.J} と一致しません")
    return float(grid.h * np.sum(const_elem * const_elem))


def nodal_derivative(values: np.ndarray, grid: ParameterGrid) -> np.ndarray:
    """区分一次関数の ρ 微分（要素ごとの定数）"""
    return np.diff(np.asarray(values, dtype=float), axis=0) / grid.h
