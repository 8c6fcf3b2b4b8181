#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ソルバー共通の例外クラス
"""

from typing import Optional


class CurveFlowError(Exception):
    """曲線発展ソルバーの基底例外（step はオーケストレータが付与する）"""

    def __init__(self, message: str, *, step: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.step = step

    def __str__(self) -> str:
        if self.step is None:
            return self.message
        return f"{self.message} (step {self.step})"


class DegenerateElement(CurveFlowError):
    """要素長がしきい値以下になった"""

    def __init__(self, message: str, *, element: Optional[int] = None, step: Optional[int] = None):
        super().__init__(message, step=step)
        self.element = element


class NonFinite(CurveFlowError):
    """NaN / Inf を検出した"""


class SingularSystem(CurveFlowError):
    """連立一次方程式の分解に失敗した"""


class NewtonDiverged(CurveFlowError):
    """Newton 反復が最大反復回数内に収束しなかった"""


class ConfigInvalid(CurveFlowError, ValueError):
    """設定値が不正"""


class ConstraintViolatedAtStart(CurveFlowError):
    """初期曲線の端点が境界上にない"""


class MissingExactField(CurveFlowError):
    """厳密解カタログに w が無いのに E4/E5 を要求した"""


class ZeroError(CurveFlowError):
    """誤差がちょうど 0 で eoc を定義できない"""
