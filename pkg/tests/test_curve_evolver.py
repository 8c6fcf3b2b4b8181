#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
curve_evolver のテスト
残差は要素ごとに書き下した弱形式、ヤコビ行列は中心差分、Newton 解は密行列の反復と比較する
"""

import numpy as np
import numpy.testing as npt
import pytest

from curve_evolver import (
    BlockTridiagonalSystem,
    CurveStepParams,
    assemble_newton_system,
    assemble_residual,
    curve_step,
    linear_scheme_step,
    newton_step,
    solve_block_tridiagonal,
)
from curve_mesh import CurveState, FieldState, ParameterGrid
from domain_boundary import UnitDisc, UpperHalfPlane, perp
from errors import ConfigInvalid, DegenerateElement, NewtonDiverged, SingularSystem
from forcing import no_forcing, parabola_forcing, rotating_diameter_forcing


def semicircle(J, t=0.0):
    grid = ParameterGrid(J)
    rho = grid.rho
    radius = np.sqrt(1.0 - 2.0 * t)
    return CurveState(grid, radius * np.column_stack((np.cos(np.pi * rho), np.sin(np.pi * rho))), t)


def vertical_diameter(J):
    grid = ParameterGrid(J)
    return CurveState(grid, np.column_stack((np.zeros(J + 1), 2.0 * grid.rho - 1.0)), 0.0)


def perturbed_diameter(J, seed=0, scale=0.02):
    """端点を円周上に保ったまま内部節点をずらした回転直径"""
    rng = np.random.default_rng(seed)
    grid = ParameterGrid(J)
    nodes = np.sqrt(2.0) * (grid.rho - 0.5)[:, None] * np.ones(2)
    nodes[1:-1] += scale * rng.normal(size=(J - 1, 2))
    return CurveState(grid, nodes, 0.0)


def zero_field(curve):
    return FieldState.constant(curve.grid, 0.0, curve.time)


def weak_form_residual(prev, prev_field, cand, geom, p):
    """要素ごとの集中質量積分を直接書き下した残差（h 倍のスケール）"""
    J = prev.grid.J
    rho = prev.grid.rho
    t_f = prev.time if p.f_time.value == "prev" else cand.time
    f = np.broadcast_to(p.f_eval(rho, t_f, prev_field.values), rho.shape)
    velocity = (cand.nodes - prev.nodes) / p.dt
    r = np.zeros((J + 1, 2))
    for e in range(J):
        chord = prev.nodes[e + 1] - prev.nodes[e]
        q = chord @ chord
        normal = perp(chord / np.sqrt(q))
        mass = p.alpha * np.eye(2) + (1.0 - p.alpha) * np.outer(normal, normal)
        stiffness = cand.nodes[e + 1] - cand.nodes[e]
        for node, sign in ((e, -1.0), (e + 1, 1.0)):
            r[node] += 0.5 * q * mass @ velocity[node]
            r[node] += sign * stiffness
            r[node] -= 0.5 * q * f[node] * normal
    residual = r.copy()
    for k in (0, J):
        point = cand.nodes[k]
        residual[k] = (r[k] @ geom.grad_perp(point), geom.value(point))
    return residual


def dense_jacobian_fd(prev, prev_field, cand, geom, p, step=1e-6):
    base = cand.nodes.reshape(-1)
    columns = []
    for i in range(base.size):
        offset = np.zeros_like(base)
        offset[i] = step
        plus = cand.with_nodes((base + offset).reshape(-1, 2), cand.time)
        minus = cand.with_nodes((base - offset).reshape(-1, 2), cand.time)
        columns.append(
            (assemble_residual(prev, prev_field, plus, geom, p)
             - assemble_residual(prev, prev_field, minus, geom, p)).reshape(-1) / (2 * step)
        )
    return np.column_stack(columns)


def test_params_validation():
    with pytest.raises(ConfigInvalid):
        CurveStepParams(alpha=0.0, dt=0.1)
    with pytest.raises(ConfigInvalid):
        CurveStepParams(alpha=1.0, dt=0.0)
    with pytest.raises(ConfigInvalid):
        CurveStepParams(alpha=1.0, dt=0.1, newton_max_iter=0)
    params = CurveStepParams(alpha=0.5, dt=0.1, scheme="linear", f_time="curr")
    assert params.scheme.value == "linear"
    assert params.f_time.value == "curr"


def test_stationary_diameter_residual_vanishes():
    curve = vertical_diameter(8)
    for alpha in (0.5, 1.0):
        p = CurveStepParams(alpha=alpha, dt=1e-2)
        residual = assemble_residual(curve, zero_field(curve), curve, UnitDisc(), p)
        npt.assert_allclose(residual, 0.0, atol=1e-13)


def test_semicircle_interior_residual_is_second_difference():
    curve = semicircle(10)
    p = CurveStepParams(alpha=1.0, dt=1e-2)
    residual = assemble_residual(curve, zero_field(curve), curve, UpperHalfPlane(), p)
    nodes = curve.nodes
    expected = -(nodes[:-2] - 2.0 * nodes[1:-1] + nodes[2:])
    npt.assert_allclose(residual[1:-1], expected, atol=1e-14)


@pytest.mark.parametrize("alpha", [0.5, 1.0])
@pytest.mark.parametrize("f_time", ["prev", "curr"])
def test_residual_matches_weak_form(alpha, f_time):
    prev = perturbed_diameter(4, seed=1)
    grid = prev.grid
    cand = CurveState(grid, perturbed_diameter(4, seed=2).nodes, 0.01)
    field = FieldState(grid, 0.1 * grid.rho * (grid.rho - 1.0), 0.0)
    p = CurveStepParams(alpha=alpha, dt=0.01, f_eval=parabola_forcing, f_time=f_time)
    npt.assert_allclose(
        assemble_residual(prev, field, cand, UnitDisc(), p),
        weak_form_residual(prev, field, cand, UnitDisc(), p),
        rtol=0, atol=1e-12,
    )


@pytest.mark.parametrize("geom", [UnitDisc(), UpperHalfPlane()], ids=["disc", "half-plane"])
@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_jacobian_matches_finite_differences(geom, alpha):
    prev = perturbed_diameter(6, seed=3)
    rng = np.random.default_rng(4)
    cand = prev.with_nodes(prev.nodes + 0.01 * rng.normal(size=prev.nodes.shape), 0.01)
    field = zero_field(prev)
    p = CurveStepParams(alpha=alpha, dt=0.01, f_eval=rotating_diameter_forcing)
    matrix, rhs = assemble_newton_system(prev, field, cand, geom, p).to_dense()
    fd = dense_jacobian_fd(prev, field, cand, geom, p)
    assert np.max(np.abs(matrix - fd)) / np.max(np.abs(matrix)) < 1e-5
    npt.assert_allclose(rhs, -assemble_residual(prev, field, cand, geom, p).reshape(-1))


def test_half_plane_boundary_row_has_no_curvature_term():
    curve = semicircle(6)
    p = CurveStepParams(alpha=1.0, dt=0.01)
    system = assemble_newton_system(curve, zero_field(curve), curve, UpperHalfPlane(), p)
    q0 = np.sum((curve.nodes[1] - curve.nodes[0]) ** 2)
    tangent = np.array([-1.0, 0.0])
    npt.assert_allclose(system.diag[0][0], tangent * (0.5 * q0 / p.dt + 1.0), rtol=1e-14)
    npt.assert_array_equal(system.diag[0][1], [0.0, 1.0])
    npt.assert_array_equal(system.upper[0], [[1.0, -0.0], [0.0, 0.0]])


def test_block_thomas_identity():
    n = 5
    eye = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    zeros = np.zeros((n, 2, 2))
    rhs = np.arange(2 * n, dtype=float).reshape(n, 2)
    solution = solve_block_tridiagonal(BlockTridiagonalSystem(zeros, eye, zeros, rhs))
    npt.assert_array_equal(solution, rhs)


@pytest.mark.parametrize("n", [2, 9])
def test_block_thomas_matches_dense_solver(n):
    rng = np.random.default_rng(n)
    lower = rng.normal(size=(n, 2, 2))
    upper = rng.normal(size=(n, 2, 2))
    lower[0] = 0.0
    upper[-1] = 0.0
    diag = rng.normal(size=(n, 2, 2)) + 8.0 * np.eye(2)
    system = BlockTridiagonalSystem(lower, diag, upper, rng.normal(size=(n, 2)))
    matrix, rhs = system.to_dense()
    npt.assert_allclose(solve_block_tridiagonal(system).reshape(-1), np.linalg.solve(matrix, rhs),
                        rtol=0, atol=1e-12)


def test_block_thomas_singular_pivot():
    n = 3
    diag = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    diag[1] = [[1.0, 2.0], [2.0, 4.0]]
    zeros = np.zeros((n, 2, 2))
    with pytest.raises(SingularSystem):
        solve_block_tridiagonal(BlockTridiagonalSystem(zeros, diag, zeros, np.ones((n, 2))))


def test_stationary_diameter_is_newton_fixed_point():
    curve = vertical_diameter(8)
    p = CurveStepParams(alpha=0.5, dt=1e-2)
    result, report = newton_step(curve, zero_field(curve), UnitDisc(), p)
    npt.assert_allclose(result.nodes, curve.nodes, atol=1e-15)
    assert report.converged
    assert report.iterations == 1
    assert result.time == pytest.approx(1e-2)


@pytest.mark.parametrize("geom, start, forcing", [
    (UpperHalfPlane(), semicircle(8), no_forcing),
    (UnitDisc(), perturbed_diameter(8, seed=5), rotating_diameter_forcing),
], ids=["semicircle", "diameter"])
def test_newton_step_matches_dense_newton(geom, start, forcing):
    field = zero_field(start)
    p = CurveStepParams(alpha=0.5, dt=1.0 / 64, f_eval=forcing)
    result, report = newton_step(start, field, geom, p)

    nodes = np.array(start.nodes)
    for _ in range(30):
        cand = start.with_nodes(nodes, start.time + p.dt)
        matrix, rhs = assemble_newton_system(start, field, cand, geom, p).to_dense()
        delta = np.linalg.solve(matrix, rhs).reshape(-1, 2)
        nodes = nodes + delta
        if np.max(np.abs(delta)) < 1e-15:
            break
    npt.assert_allclose(result.nodes, nodes, rtol=0, atol=1e-10)
    assert report.converged
    assert report.final_constraint_violation <= p.newton_tol
    assert np.max(np.abs(geom.value(result.endpoints))) <= p.newton_tol


def test_newton_iterations_stay_small_on_semicircle():
    curve = semicircle(10)
    field = zero_field(curve)
    p = CurveStepParams(alpha=1.0, dt=0.01)
    for _ in range(5):
        curve, report = newton_step(curve, field, UpperHalfPlane(), p)
        assert report.iterations <= 6
        assert report.final_increment <= p.increment_tol
        assert abs(curve.nodes[0, 1]) <= p.newton_tol
        assert abs(curve.nodes[-1, 1]) <= p.newton_tol


def test_newton_stops_on_absolute_increment():
    # 半径 50 の半円でも |δ|∞ ≤ τ_δ をそのまま要求する
    grid = ParameterGrid(10)
    rho = grid.rho
    curve = CurveState(grid, 50.0 * np.column_stack((np.cos(np.pi * rho), np.sin(np.pi * rho))), 0.0)
    p = CurveStepParams(alpha=1.0, dt=0.01, increment_tol=1e-9)
    result, report = newton_step(curve, zero_field(curve), UpperHalfPlane(), p)
    assert report.converged
    assert report.final_increment <= 1e-9
    assert result.nodes[0, 1] == pytest.approx(0.0, abs=p.newton_tol)


def test_newton_diverged_when_iterations_exhausted():
    curve = semicircle(10)
    p = CurveStepParams(alpha=1.0, dt=0.01, newton_max_iter=1)
    with pytest.raises(NewtonDiverged):
        newton_step(curve, zero_field(curve), UpperHalfPlane(), p)


def test_degenerate_previous_curve():
    grid = ParameterGrid(3)
    curve = CurveState(grid, [[-1.0, 0.0], [0.0, 0.5], [0.0, 0.5], [1.0, 0.0]])
    with pytest.raises(DegenerateElement):
        newton_step(curve, zero_field(curve), UpperHalfPlane(), CurveStepParams(alpha=1.0, dt=0.01))


def test_linear_scheme_keeps_stationary_diameter():
    curve = vertical_diameter(8)
    p = CurveStepParams(alpha=1.0, dt=1e-2, scheme="linear")
    result = linear_scheme_step(curve, zero_field(curve), UnitDisc(), p)
    npt.assert_allclose(result.nodes, curve.nodes, atol=1e-15)


def test_linear_scheme_enforces_linearized_constraint():
    prev = perturbed_diameter(10, seed=6)
    p = CurveStepParams(alpha=1.0, dt=0.01, f_eval=rotating_diameter_forcing, scheme="linear")
    geom = UnitDisc()
    result = linear_scheme_step(prev, zero_field(prev), geom, p)
    for k in (0, -1):
        assert abs((result.nodes[k] - prev.nodes[k]) @ geom.gradient(prev.nodes[k])) < 1e-12
    # 拘束は線形化のみなので円周からわずかに外れる
    assert np.max(np.abs(geom.value(result.endpoints))) > 0.0


def test_curve_step_dispatches_on_scheme():
    curve = semicircle(10)
    field = zero_field(curve)
    newton = CurveStepParams(alpha=1.0, dt=0.01)
    linear = CurveStepParams(alpha=1.0, dt=0.01, scheme="linear")
    via_dispatch, _ = curve_step(curve, field, UpperHalfPlane(), newton)
    direct, _ = newton_step(curve, field, UpperHalfPlane(), newton)
    npt.assert_array_equal(via_dispatch.nodes, direct.nodes)

    result, report = curve_step(curve, field, UpperHalfPlane(), linear)
    npt.assert_array_equal(result.nodes, linear_scheme_step(curve, field, UpperHalfPlane(), linear).nodes)
    assert report.iterations == 1
