#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
外力 f(ρ, t, w) と反応項 g(ρ, t, v, w) のレジストリ
設定ファイルからは名前で選択する
"""

from enum import Enum
from typing import Callable, Dict

import numpy as np

from errors import ConfigInvalid

ForcingFn = Callable[[np.ndarray, float, np.ndarray], np.ndarray]
SourceFn = Callable[[np.ndarray, float, np.ndarray, np.ndarray], np.ndarray]


class ForcingTime(str, Enum):
    """f, g の陽な時刻引数を t_{n−1} / t_n のどちらで評価するか"""
    PREV = "prev"
    CURR = "curr"


def no_forcing(rho, t, w):
    return np.zeros(np.shape(rho))


def rotating_diameter_forcing(rho, t, w):
    """回転する直径の厳密解を与える外力 4(ρ − ½)/((1 − 2t)² + 1)"""
    rho = np.asarray(rho, dtype=float)
    return 4.0 * (rho - 0.5) / ((1.0 - 2.0 * t) ** 2 + 1.0)


def parabola_forcing(rho, t, w):
    """放物線 w = (1 − t)ρ(ρ − 1) と連成した外力（w を通じて場に依存）"""
    rho = np.asarray(rho, dtype=float)
    w = np.asarray(w, dtype=float)
    return 4.0 * (rho ** 2 - w / (1.0 - t) - 0.5) / ((1.0 - 2.0 * t) ** 2 + 1.0)


def no_source(rho, t, v, w):
    return np.zeros(np.shape(rho))


def parabola_source(rho, t, v, w):
    """g = (t − 1)/2 − w/(1 − t)"""
    w = np.asarray(w, dtype=float)
    return 0.5 * (t - 1.0) - w / (1.0 - t)


FORCINGS: Dict[str, ForcingFn] = {
    "none": no_forcing,
    "example2": rotating_diameter_forcing,
    "example3-f": parabola_forcing,
}

SOURCES: Dict[str, SourceFn] = {
    "none": no_source,
    "example3-g": parabola_source,
}


def get_forcing(name: str) -> ForcingFn:
    if name not in FORCINGS:
        raise ConfigInvalid(f"未知の f '{name}'（選択肢: {', '.join(FORCINGS)}）")
    return FORCINGS[name]


def get_source(name: str) -> SourceFn:
    if name not in SOURCES:
        raise ConfigInvalid(f"未知の g '{name}'（選択肢: {', '.join(SOURCES)}）")
    return SOURCES[name]


def evaluate_nodal(fn: Callable, rho: np.ndarray, *args) -> np.ndarray:
    """レジストリ関数を節点で評価し、形状を rho に揃える"""
    values = np.asarray(fn(rho, *args), dtype=float)
    return np.broadcast_to(values, np.shape(rho)).astype(float)
