#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
verification のテスト
粗い水準（J = 10, 20）は常に実行し、全水準の表の再現は slow マーカーで分ける
"""

import dataclasses
import json

import numpy as np
import pytest

from curve_mesh import CurveState, FieldState, ParameterGrid
from errors import ConfigInvalid, MissingExactField, ZeroError
from outputs import write_compare_json
from simulation import SimState, Trajectory, make_config, run
from verification import (
    EXACT_SOLUTIONS,
    REFERENCE_TABLES,
    ErrorAccumulator,
    Example,
    ExactSolution,
    check_exact_solution,
    compare_against_reference,
    convergence_study,
    eoc,
    error_accumulate,
    get_exact_solution,
    semicircle_radius_errors,
    snapshot_states,
)


def exact_trajectory(exact, J):
    """全時刻で厳密解の節点補間に一致する軌跡"""
    config = exact.config(J)
    grid = ParameterGrid(J)
    states = []
    for n in range(config.num_steps + 1):
        t = config.time_at(n)
        curve = CurveState(grid, exact.x(grid.rho, t), t)
        values = exact.w(grid.rho, t) if exact.has_field else np.zeros(J + 1)
        states.append(SimState(n, curve, FieldState(grid, values, t)))
    return Trajectory(config=config, snapshots=states, final=states[-1])


@pytest.mark.parametrize("example", list(Example))
def test_exact_solutions_pass_self_checks(example):
    result = check_exact_solution(EXACT_SOLUTIONS[example], samples=100)
    assert result.passed
    assert result.max_endpoint_violation <= 1e-12
    assert result.max_derivative_deviation <= 1e-8


def test_exact_solution_configs():
    assert EXACT_SOLUTIONS[Example.SEMICIRCLE].config(10).num_steps == 40
    assert EXACT_SOLUTIONS[Example.DIAMETER].config(10).num_steps == 50
    coupled = EXACT_SOLUTIONS[Example.COUPLED].config(10)
    assert coupled.alpha == 0.5
    assert coupled.couples_field
    with pytest.raises(ConfigInvalid):
        get_exact_solution("ellipse")


def test_eoc_definition():
    assert eoc((0.1, 1.0), (0.05, 0.5)) == pytest.approx(1.0)
    assert round(eoc((0.1, 4.672e-3), (0.05, 0.3997e-3)), 2) == 3.55
    assert round(eoc((0.1, 43.83e-4), (0.05, 3.175e-4)), 2) == 3.79
    with pytest.raises(ZeroError):
        eoc((0.1, 0.0), (0.05, 1e-3))


def test_interpolant_trajectory_has_no_time_errors():
    exact = EXACT_SOLUTIONS[Example.COUPLED]
    report = error_accumulate(exact_trajectory(exact, 4), exact)
    assert report.E2 == 0.0
    assert report.E4 == 0.0
    assert report.E3 <= 1e-15
    # 微分の誤差は補間の微分との差なので節点補間では消える
    assert report.E1 == 0.0
    assert report.E5 == 0.0


def test_curved_interpolant_has_no_derivative_error():
    exact = EXACT_SOLUTIONS[Example.SEMICIRCLE]
    report = error_accumulate(exact_trajectory(exact, 10), exact)
    assert report.E1 == 0.0
    assert report.E2 == 0.0
    assert report.E4 is None and report.E5 is None


def test_hand_computed_two_step_errors():
    """J = 2、2 ステップの軌跡での手計算値"""
    line = ExactSolution(
        name="line", geometry="half-plane", T=0.4,
        x=lambda rho, t: np.column_stack((2.0 * np.asarray(rho) - 1.0, np.full(np.shape(rho), t))),
        x_rho=lambda rho, t: np.column_stack((np.full(np.shape(rho), 2.0), np.zeros(np.shape(rho)))),
        initial="semicircle",
        w=lambda rho, t: t * np.asarray(rho),
        w_rho=lambda rho, t: np.full(np.shape(rho), t),
    )
    config = make_config(J=2, T=0.4, dt_rule="n:2")
    grid = ParameterGrid(2)
    bump = np.array([0.0, 1.0, 0.0])
    offsets, field_offsets = [0.0, 0.1, 0.3], [0.0, 0.2, 0.1]
    states = []
    for n, (d, m) in enumerate(zip(offsets, field_offsets)):
        t = 0.2 * n
        nodes = line.x(grid.rho, t) + d * np.column_stack((np.zeros(3), bump))
        curve = CurveState(grid, nodes, t)
        states.append(SimState(n, curve, FieldState(grid, t * grid.rho + m * bump, t)))
    report = error_accumulate(Trajectory(config=config, snapshots=states, final=states[-1]), line)

    assert report.E1 == pytest.approx(4 * 0.3 ** 2, rel=1e-12)
    assert report.E2 == pytest.approx(0.2 * (0.5 ** 2 + 1.0 ** 2) / 3, rel=1e-12)
    assert report.E3 == pytest.approx(0.4, rel=1e-12)
    assert report.E4 == pytest.approx(0.2 ** 2 / 3, rel=1e-12)
    assert report.E5 == pytest.approx(0.2 * 4 * (0.2 ** 2 + 0.1 ** 2), rel=1e-12)


def test_field_errors_need_exact_field():
    exact = EXACT_SOLUTIONS[Example.SEMICIRCLE]
    with pytest.raises(MissingExactField):
        error_accumulate(exact_trajectory(exact, 10), exact, include_field=True)


def test_radius_recursion_values():
    # 漸化式を独立に評価した値
    assert semicircle_radius_errors(10, 1.0) == pytest.approx((5.6930e-3, 2.5222e-3), rel=1e-4)
    assert semicircle_radius_errors(10, 0.5) == pytest.approx((2.0396e-3, 1.1703e-3), rel=1e-4)
    assert semicircle_radius_errors(20, 1.0) == pytest.approx((4.2190e-4, 1.9807e-4), rel=1e-4)


@pytest.mark.parametrize("alpha", [1.0, 0.5])
def test_semicircle_run_follows_radius_recursion(alpha):
    exact = EXACT_SOLUTIONS[Example.SEMICIRCLE]
    trajectory = run(exact.config(10, alpha=alpha))
    report = error_accumulate(trajectory, exact)
    radii = np.linalg.norm(trajectory.final.curve.nodes, axis=1)
    np.testing.assert_allclose(radii, radii[0], rtol=1e-12)
    E1, E2 = semicircle_radius_errors(10, alpha)
    assert report.E1 == pytest.approx(E1, rel=1e-8)
    assert report.E2 == pytest.approx(E2, rel=1e-8)


def test_study_rejects_exact_solution_failing_self_check(monkeypatch):
    exact = EXACT_SOLUTIONS[Example.SEMICIRCLE]
    broken = dataclasses.replace(exact, x_rho=lambda rho, t: 2.0 * exact.x_rho(rho, t))
    monkeypatch.setitem(EXACT_SOLUTIONS, Example.SEMICIRCLE, broken)
    with pytest.raises(ConfigInvalid, match="自己検査"):
        convergence_study("semicircle", levels=(10,))


def test_lifted_endpoints_fail_self_check():
    exact = EXACT_SOLUTIONS[Example.SEMICIRCLE]
    lifted = dataclasses.replace(exact, x=lambda rho, t: exact.x(rho, t) + np.array([0.0, 0.1]))
    result = check_exact_solution(lifted, samples=10)
    assert not result.passed
    assert result.max_endpoint_violation == pytest.approx(0.1, rel=1e-12)



def test_error_accumulate_requires_every_step():
    exact = EXACT_SOLUTIONS[Example.SEMICIRCLE]
    trajectory = run(exact.config(10, snapshot_stride=8))
    with pytest.raises(ValueError):
        error_accumulate(trajectory, exact)


def test_streaming_matches_stored_trajectory():
    exact = EXACT_SOLUTIONS[Example.COUPLED]
    config = exact.config(10)
    accumulator = ErrorAccumulator(exact, config.dt)
    trajectory = run(config, observers=[accumulator])
    assert accumulator.report(config) == error_accumulate(trajectory, exact)


@pytest.mark.parametrize("table_id", sorted(REFERENCE_TABLES))
def test_coarsest_level_matches_reference(table_id):
    reference = REFERENCE_TABLES[table_id]
    table = convergence_study(reference.example, reference.alpha, reference.scheme, levels=(10,))
    row = table.rows[0]
    assert row.failure is None
    assert row.N == reference.steps[0]
    for index, values in reference.values.items():
        assert row.errors[index] == pytest.approx(values[0], rel=reference.rel_tol)


def test_study_rejects_bad_levels():
    with pytest.raises(ConfigInvalid):
        convergence_study("semicircle", levels=(20, 10))
    with pytest.raises(ConfigInvalid):
        convergence_study("semicircle", levels=(1, 2))


def test_semicircle_comparison_checks_radius_recursion():
    report = compare_against_reference("t1l", levels=(10, 20))
    names = [prop.name for prop in report.properties]
    assert "radius_recursion" in names
    assert all(prop.passed for prop in report.properties)
    assert report.passed
    # 粗い水準の公表値からのずれは許容幅の内側に収まる
    assert max(cell.deviation for cell in report.cells) <= 0.30


def test_zero_tolerance_fails_every_value_cell():
    report = compare_against_reference("t1l", rel_tol=0.0, levels=(10, 20))
    assert not report.passed
    value_cells = [cell for cell in report.cells if cell.quantity.startswith("E")]
    assert len(value_cells) == 4
    assert all(not cell.passed for cell in value_cells)
    assert len(report.cells) == 6


def test_compare_json_is_deterministic(tmp_path):
    documents = []
    for name in ("first", "second"):
        report = compare_against_reference("t1l", levels=(10, 20))
        path = write_compare_json(tmp_path / name / "compare.json", report)
        document = json.loads(path.read_text(encoding="utf-8"))
        assert "wall_clock_seconds" in document.pop("timing")
        documents.append(json.dumps(document, sort_keys=True))
    assert documents[0] == documents[1]


def test_snapshot_states_on_time_grid():
    states = snapshot_states("semicircle", [0.0, 0.08, 0.16], J=10)
    assert [state.n for state in states] == [0, 8, 16]
    with pytest.raises(ConfigInvalid):
        snapshot_states("semicircle", [0.005], J=10)


@pytest.mark.slow
@pytest.mark.parametrize("table_id", sorted(REFERENCE_TABLES))
def test_reference_tables_reproduced(table_id):
    report = compare_against_reference(table_id, n_jobs=-1)
    failed = [cell.to_dict() for cell in report.failed_cells]
    assert report.passed, (failed, report.failures, [p.to_dict() for p in report.properties])


@pytest.mark.slow
def test_coupled_alpha_one_is_close_informational():
    report = compare_against_reference("t4", informational=True, n_jobs=-1)
    assert report.informational
    assert all(cell.passed for cell in report.informational)


@pytest.mark.slow
def test_linear_time_step_gives_second_order():
    table = convergence_study("semicircle", 1.0, "newton", levels=(10, 20, 40), dt_rule="ch:0.4")
    for index in (1, 2):
        for value in table.eoc_column(index):
            assert 1.7 <= value <= 2.3


@pytest.mark.slow
def test_smaller_alpha_gives_smaller_errors():
    half = convergence_study("semicircle", 0.5, n_jobs=-1)
    one = convergence_study("semicircle", 1.0, n_jobs=-1)
    for a, b in zip(half.rows, one.rows):
        assert a.errors[1] < b.errors[1]
        assert a.errors[2] < b.errors[2]
