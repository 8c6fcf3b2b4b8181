#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
domain_boundary のテスト
"""

import numpy as np
import numpy.testing as npt
import pytest

from domain_boundary import (
    GEOMETRIES,
    UnitDisc,
    UpperHalfPlane,
    eval_all,
    get_geometry,
    perp,
    project_to_boundary,
    rotated_hessian,
    validate_geometry,
)
from errors import ConfigInvalid, NonFinite


def test_perp_rotates_counter_clockwise():
    npt.assert_array_equal(perp([1.0, 0.0]), [0.0, 1.0])
    npt.assert_array_equal(perp([[0.0, 2.0], [3.0, 4.0]]), [[-2.0, 0.0], [-4.0, 3.0]])


def test_half_plane_values():
    geom = UpperHalfPlane()
    points = np.array([[0.3, 0.0], [-1.0, 2.5]])
    npt.assert_array_equal(geom.value(points), [0.0, 2.5])
    npt.assert_array_equal(geom.gradient(points), [[0.0, 1.0], [0.0, 1.0]])
    npt.assert_array_equal(geom.grad_perp(points), [[-1.0, 0.0], [-1.0, 0.0]])
    npt.assert_array_equal(geom.d2perp(points), np.zeros((2, 2, 2)))


def test_unit_disc_values():
    geom = UnitDisc()
    point = np.array([0.6, 0.8])
    assert geom.value(point) == pytest.approx(0.0, abs=1e-15)
    npt.assert_array_equal(geom.gradient(point), point)
    npt.assert_array_equal(geom.d2perp(point), [[0.0, -1.0], [1.0, 0.0]])


@pytest.mark.parametrize("name", sorted(GEOMETRIES))
def test_d2perp_is_jacobian_of_grad_perp(name):
    geom = get_geometry(name)
    rng = np.random.default_rng(7)
    step = 1e-6
    for point in rng.uniform(-1.5, 1.5, size=(5, 2)):
        columns = []
        for i in range(2):
            offset = np.zeros(2)
            offset[i] = step
            columns.append((geom.grad_perp(point + offset) - geom.grad_perp(point - offset)) / (2 * step))
        npt.assert_allclose(geom.d2perp(point), np.column_stack(columns), atol=1e-9)


def test_rotated_hessian_layout():
    hess = np.array([[1.0, 2.0], [2.0, 3.0]])
    npt.assert_array_equal(rotated_hessian(hess), [[-2.0, -3.0], [1.0, 2.0]])


def test_eval_all_bundles_everything():
    data = eval_all(UnitDisc(), [1.0, 0.0])
    assert data.F == 0.0
    npt.assert_array_equal(data.grad, [1.0, 0.0])
    npt.assert_array_equal(data.grad_perp, [0.0, 1.0])
    npt.assert_array_equal(data.hess, np.eye(2))


def test_eval_all_rejects_non_finite():
    with pytest.raises(NonFinite):
        eval_all(UnitDisc(), [np.nan, 0.0])


def test_unknown_geometry():
    with pytest.raises(ConfigInvalid):
        get_geometry("square")


def test_project_to_boundary():
    disc = UnitDisc()
    npt.assert_allclose(project_to_boundary(disc, [2.0, 0.0]), [1.0, 0.0], atol=1e-14)
    projected = project_to_boundary(disc, [[0.3, 0.4], [-2.0, 1.0]])
    npt.assert_allclose(disc.value(projected), 0.0, atol=1e-14)
    npt.assert_allclose(project_to_boundary(UpperHalfPlane(), [0.5, 3.0]), [0.5, 0.0])


@pytest.mark.parametrize("name", sorted(GEOMETRIES))
def test_builtin_geometries_have_unit_gradient_on_boundary(name):
    assert validate_geometry(get_geometry(name)) < 1e-6
