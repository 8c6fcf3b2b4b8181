#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
固定領域の境界 ∂Ω = {F = 0} の評価
F、∇F、∇⊥F、ヘッセ行列、回転ヘッセ行列 D²⊥F を解析的に与える
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from errors import ConfigInvalid, NonFinite

logger = logging.getLogger(__name__)


def perp(v: np.ndarray) -> np.ndarray:
    """反時計回りの π/2 回転 (a, b) → (−b, a)"""
    v = np.asarray(v, dtype=float)
    return np.stack((-v[..., 1], v[..., 0]), axis=-1)


def rotated_hessian(hess: np.ndarray) -> np.ndarray:
    """D²⊥F = [[−F_xy, −F_yy], [F_xx, F_xy]]（∇⊥F のヤコビ行列）"""
    hess = np.asarray(hess, dtype=float)
    out = np.empty_like(hess)
    out[..., 0, 0] = -hess[..., 0, 1]
    out[..., 0, 1] = -hess[..., 1, 1]
    out[..., 1, 0] = hess[..., 0, 0]
    out[..., 1, 1] = hess[..., 0, 1]
    return out


@dataclass(frozen=True)
class BoundaryData:
    """一点での境界関数の評価結果一式"""
    F: float
    grad: np.ndarray
    grad_perp: np.ndarray
    hess: np.ndarray
    d2perp: np.ndarray


class BoundaryGeometry(ABC):
    """境界のレベルセット表現（点 p は (2,) でも (n, 2) でもよい）"""

    name: str = ""

    @abstractmethod
    def value(self, p: np.ndarray) -> np.ndarray:
        """F(p)"""

    @abstractmethod
    def gradient(self, p: np.ndarray) -> np.ndarray:
        """∇F(p)"""

    @abstractmethod
    def hessian(self, p: np.ndarray) -> np.ndarray:
        """ヘッセ行列 [[F_xx, F_xy], [F_xy, F_yy]]"""

    def grad_perp(self, p: np.ndarray) -> np.ndarray:
        return perp(self.gradient(p))

    def d2perp(self, p: np.ndarray) -> np.ndarray:
        return rotated_hessian(self.hessian(p))

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class UpperHalfPlane(BoundaryGeometry):
    """上半平面 F(x, y) = y"""

    name = "half-plane"

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return p[..., 1].copy()

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        grad = np.zeros_like(p)
        grad[..., 1] = 1.0
        return grad

    def hessian(self, p):
        p = np.asarray(p, dtype=float)
        return np.zeros(p.shape[:-1] + (2, 2))


class UnitDisc(BoundaryGeometry):
    """単位円板 F(x, y) = ½(x² + y² − 1)（|∇F| = 1 は境界上でのみ成立）"""

    name = "unit-disc"

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * (p[..., 0] ** 2 + p[..., 1] ** 2 - 1.0)

    def gradient(self, p):
        return np.array(p, dtype=float)

    def hessian(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()


GEOMETRIES: Dict[str, BoundaryGeometry] = {
    UpperHalfPlane.name: UpperHalfPlane(),
    UnitDisc.name: UnitDisc(),
}


def get_geometry(name: str) -> BoundaryGeometry:
    """名前から組み込みの境界形状を取得する"""
    try:
        return GEOMETRIES[name]
    except KeyError:
        raise ConfigInvalid(
            f"未知の geometry '{name}'（選択肢: {', '.join(sorted(GEOMETRIES))}）"
        ) from None


def eval_all(geom: BoundaryGeometry, p: np.ndarray) -> BoundaryData:
    """一点 p での F, ∇F, ∇⊥F, ヘッセ行列, D²⊥F をまとめて評価する"""
    p = np.asarray(p, dtype=float)
    hess = geom.hessian(p)
    grad = geom.gradient(p)
    data = BoundaryData(
        F=float(geom.value(p)),
        grad=grad,
        grad_perp=perp(grad),
        hess=hess,
        d2perp=rotated_hessian(hess),
    )
    if not (
        np.isfinite(data.F)
        and np.all(np.isfinite(data.grad))
        and np.all(np.isfinite(data.hess))
    ):
        raise NonFinite(f"{geom.name}: 点 {p.tolist()} で境界関数の評価値が有限ではありません")
    return data


def project_to_boundary(geom: BoundaryGeometry, p: np.ndarray,
                        tol: float = 1e-14, max_iter: int = 50) -> np.ndarray:
    """∇F 方向の Newton 射影で点を零レベルセットへ移す"""
    q = np.array(p, dtype=float)
    for _ in range(max_iter):
        value = geom.value(q)
        if np.all(np.abs(value) <= tol):
            break
        grad = geom.gradient(q)
        norm_sq = np.sum(grad * grad, axis=-1)
        q = q - (value / norm_sq)[..., None] * grad
    return q


def validate_geometry(geom: BoundaryGeometry, samples: int = 64, tol: float = 1e-6,
                      seed: Optional[int] = 0) -> float:
    """零レベルセット上で |∇F| = 1 を確認し、最大のずれを返す"""
    rng = np.random.default_rng(seed)
    points = rng.uniform(-2.0, 2.0, size=(samples, 2))
    # 勾配が消える点（円板の中心など）を避ける
    points += np.sign(points) * 0.25
    on_boundary = project_to_boundary(geom, points)
    norms = np.linalg.norm(geom.gradient(on_boundary), axis=-1)
    deviation = float(np.max(np.abs(norms - 1.0)))
    if deviation > tol:
        logger.warning("%s: 境界上で |∇F| が 1 から %.3e ずれています", geom.name, deviation)
    return deviation
