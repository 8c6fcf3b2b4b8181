#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
結果ファイルの書き出し（snapshots.csv / summary.json / eoc.csv / eoc.md / compare.json）
数値は往復可能な 17 桁、EOC は小数 2 桁で出力する
"""

import csv
import json
from pathlib import Path
from typing import Iterable, Optional

from simulation import SimState, Trajectory
from verification import ComparisonReport, EocTable, ErrorReport

SNAPSHOT_FIELDS = ["n", "t", "j", "rho", "x", "y", "w"]


def format_number(value: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{float(value):.17g}"


def format_eoc(value: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{value:.2f}"


def _prepare(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_snapshots_csv(path, states: Iterable[SimState], include_field: bool = True) -> Path:
    """スナップショットごと・節点ごとに 1 行（曲線のみの実行では w 列は空）"""
    path = _prepare(path)
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=SNAPSHOT_FIELDS)
        writer.writeheader()
        for state in states:
            rho = state.curve.grid.rho
            for j, (x, y) in enumerate(state.curve.nodes):
                writer.writerow({
                    "n": state.n,
                    "t": format_number(state.time),
                    "j": j,
                    "rho": format_number(rho[j]),
                    "x": format_number(x),
                    "y": format_number(y),
                    "w": format_number(state.field.values[j]) if include_field else "",
                })
    return path


def summary_dict(trajectory: Trajectory, errors: Optional[ErrorReport] = None,
                 wall_clock: Optional[float] = None) -> dict:
    final = trajectory.final
    summary = {
        "config": trajectory.config.model_dump(mode="json"),
        "completed": trajectory.completed,
        "terminal": None,
        "errors": errors.to_dict() if errors is not None else None,
        "newton": trajectory.newton_statistics(),
        "failure": None,
        "wall_clock_seconds": wall_clock,
    }
    if final is not None:
        summary["terminal"] = {
            "n": final.n,
            "t": final.time,
            "nodes": final.curve.nodes.tolist(),
            "field": final.field.values.tolist(),
        }
    if trajectory.error is not None:
        summary["failure"] = {
            "type": type(trajectory.error).__name__,
            "message": trajectory.error.message,
            "step": trajectory.error.step,
        }
    return summary


def write_summary_json(path, trajectory: Trajectory, errors: Optional[ErrorReport] = None,
                       wall_clock: Optional[float] = None) -> Path:
    path = _prepare(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary_dict(trajectory, errors, wall_clock), f, ensure_ascii=False, indent=2)
        f.write("\n")
    return path


def write_eoc_csv(path, table: EocTable) -> Path:
    path = _prepare(path)
    fieldnames = ["J", "N", "dt"]
    for index in table.indices:
        fieldnames += [f"E{index}", f"eoc{index}"]
    fieldnames.append("failure")
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=fieldnames)
        writer.writeheader()
        for row in table.rows:
            record = {"J": row.J, "N": row.N, "dt": format_number(row.dt), "failure": row.failure or ""}
            for index in table.indices:
                record[f"E{index}"] = format_number(row.errors.get(index))
                record[f"eoc{index}"] = format_eoc(row.eocs.get(index))
            writer.writerow(record)
    return path


def eoc_markdown(table: EocTable) -> str:
    header = ["J", "N"]
    for index in table.indices:
        header += [f"E{index}", f"eoc{index}"]
    lines = [
        f"### {table.example} (alpha={table.alpha:g}, scheme={table.scheme}, dt={table.dt_rule})",
        "",
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
    ]
    for row in table.rows:
        cells = [str(row.J), str(row.N)]
        for index in table.indices:
            value = row.errors.get(index)
            cells.append(f"{value:.4e}" if value is not None else (row.failure and "failed") or "")
            cells.append(format_eoc(row.eocs.get(index)))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_eoc_markdown(path, table: EocTable) -> Path:
    path = _prepare(path)
    path.write_text(eoc_markdown(table), encoding="utf-8")
    return path


def write_compare_json(path, report: ComparisonReport) -> Path:
    """キーを整列して書き出す（実行時間は timing にのみ入る）"""
    path = _prepare(path)
    document = report.to_dict()
    document["timing"] = {"wall_clock_seconds": report.elapsed_seconds}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return path
