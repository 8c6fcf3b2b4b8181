#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
曲線短縮流ソルバーのコマンドラインツール
run / converge / compare / snapshots の各サブコマンドを提供する
"""

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from errors import ConfigInvalid, CurveFlowError
from outputs import (
    eoc_markdown,
    write_compare_json,
    write_eoc_csv,
    write_eoc_markdown,
    write_snapshots_csv,
    write_summary_json,
)
from simulation import CurveFlowSimulation, load_config
from verification import (
    REFERENCE_TABLES,
    ErrorAccumulator,
    Example,
    compare_against_reference,
    convergence_study,
    get_exact_solution,
    snapshot_states,
)

# 環境変数（.env からも読み込む）
load_dotenv()

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def default_out_dir() -> str:
    return os.getenv("CURVEFLOW_OUT_DIR", "results")


def default_jobs() -> int:
    try:
        return int(os.getenv("CURVEFLOW_JOBS", "1"))
    except ValueError:
        return 1


def parse_number_list(text: str, kind=float) -> List:
    try:
        return [kind(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigInvalid(f"数値のリスト '{text}' を解釈できません") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curveflow", description="境界に直交接触する曲線短縮流の有限要素ソルバー")
    parser.add_argument("--log-level", default=os.getenv("CURVEFLOW_LOG_LEVEL", "WARNING"),
                        help="ログレベル（DEBUG, INFO, WARNING, ...）")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="設定ファイルから 1 回のシミュレーションを実行")
    run.add_argument("--config", required=True, help="key=value または JSON の設定ファイル")
    run.add_argument("--out", default=None, help="出力ディレクトリ")

    converge = sub.add_parser("converge", help="収束スタディを実行して EOC 表を書き出す")
    converge.add_argument("--example", required=True, choices=[e.value for e in Example])
    converge.add_argument("--alpha", type=float, default=None)
    converge.add_argument("--scheme", choices=["newton", "linear"], default="newton")
    converge.add_argument("--levels", default="10,20,40,80")
    converge.add_argument("--dt-rule", default="h2", help="h2 | ch:<c> | n:<N>")
    converge.add_argument("--jobs", type=int, default=None)
    converge.add_argument("--out", default=None)

    compare = sub.add_parser("compare", help="公表された誤差表と照合する")
    compare.add_argument("--table", required=True, type=str.lower, choices=list(REFERENCE_TABLES))
    compare.add_argument("--tol", type=float, default=None, help="誤差値の相対許容誤差")
    compare.add_argument("--eoc-tol", type=float, default=None, help="EOC の絶対許容誤差")
    compare.add_argument("--levels", default=None, help="先頭から使う水準（例: 10,20）")
    compare.add_argument("--informational", action="store_true", help="連成例の α = 1 比較も行う")
    compare.add_argument("--jobs", type=int, default=None)
    compare.add_argument("--out", default=None)

    snapshots = sub.add_parser("snapshots", help="指定時刻の曲線と場を CSV で書き出す")
    snapshots.add_argument("--example", required=True, choices=[e.value for e in Example])
    snapshots.add_argument("--times", required=True, help="例: 0,0.08,0.16")
    snapshots.add_argument("--J", type=int, default=20)
    snapshots.add_argument("--alpha", type=float, default=None)
    snapshots.add_argument("--scheme", choices=["newton", "linear"], default="newton")
    snapshots.add_argument("--out", default=None)
    return parser


def cmd_run(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or default_out_dir())
    simulation = CurveFlowSimulation(config)
    observers = []
    accumulator = None
    if config.exact:
        accumulator = ErrorAccumulator(get_exact_solution(config.exact), simulation.dt)
        observers.append(accumulator)

    print(f"🔄 実行中: geometry={config.geometry} J={config.J} N={simulation.num_steps} scheme={config.scheme}")
    started = time.perf_counter()
    trajectory = simulation.run(observers=observers)
    elapsed = time.perf_counter() - started

    errors = accumulator.report(config) if accumulator is not None and trajectory.completed else None
    write_snapshots_csv(out_dir / "snapshots.csv", trajectory.snapshots, include_field=config.couples_field)
    write_summary_json(out_dir / "summary.json", trajectory, errors, elapsed)

    if trajectory.error is not None:
        print(f"❌ ステップ {trajectory.error.step} で失敗しました: {trajectory.error}", file=sys.stderr)
        return EXIT_FAILED
    print(f"✅ 完了: t={trajectory.final.time:g}（{elapsed:.2f} 秒）")
    if errors is not None:
        print("   " + ", ".join(f"E{i}={errors.value(i):.4e}" for i in range(1, 6) if errors.value(i) is not None))
    print(f"   出力: {out_dir}")
    return EXIT_OK


def cmd_converge(args) -> int:
    levels = parse_number_list(args.levels, int)
    out_dir = Path(args.out or default_out_dir())
    table = convergence_study(args.example, args.alpha, args.scheme, levels, args.dt_rule,
                              n_jobs=args.jobs or default_jobs())
    write_eoc_csv(out_dir / "eoc.csv", table)
    write_eoc_markdown(out_dir / "eoc.md", table)
    print(eoc_markdown(table))
    if table.failures:
        for row in table.failures:
            print(f"⚠️ J={row.J}: {row.failure}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_compare(args) -> int:
    levels = parse_number_list(args.levels, int) if args.levels else None
    out_dir = Path(args.out or default_out_dir())
    report = compare_against_reference(args.table, rel_tol=args.tol, eoc_tol=args.eoc_tol,
                                       informational=args.informational,
                                       n_jobs=args.jobs or default_jobs(), levels=levels)
    write_compare_json(out_dir / "compare.json", report)

    for cell in report.cells:
        mark = "✅" if cell.passed else "❌"
        measured = "-" if cell.measured is None else f"{cell.measured:.4e}"
        print(f"{mark} {cell.quantity:>5} J={cell.J:<3} 基準 {cell.reference:.4e} 実測 {measured}")
    for prop in report.properties:
        print(f"{'✅' if prop.passed else '❌'} {prop.name}: {prop.detail}")
    for cell in report.informational:
        measured = "-" if cell.measured is None else f"{cell.measured:.4e}"
        print(f"ℹ️ {cell.quantity} J={cell.J}: 基準 {cell.reference:.4e} 実測 {measured}")
    for failure in report.failures:
        print(f"⚠️ {failure}", file=sys.stderr)

    if report.passed:
        print(f"🎉 {report.table_id}: 合格")
        return EXIT_OK
    print(f"❌ {report.table_id}: 不合格（{len(report.failed_cells)} セル）")
    return EXIT_FAILED


def cmd_snapshots(args) -> int:
    times = parse_number_list(args.times, float)
    out_dir = Path(args.out or default_out_dir())
    exact = get_exact_solution(args.example)
    states = snapshot_states(args.example, times, J=args.J, alpha=args.alpha, scheme=args.scheme)
    path = write_snapshots_csv(out_dir / f"snapshots_{args.example}.csv", states, include_field=exact.has_field)
    print(f"✅ {len(states)} 時刻分の形状を書き出しました: {path}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "converge": cmd_converge,
    "compare": cmd_compare,
    "snapshots": cmd_snapshots,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        print(f"エラー: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CurveFlowError as exc:
        print(f"エラー: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
