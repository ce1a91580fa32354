"""Per-sample CSV tables and JSON aggregate documents"""
import csv
import json
import math
from pathlib import Path
from typing import IO, Any, Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np

from gaussnet.attacks import (
    AttackRecord,
    AttackReport,
    BoundCheck,
    PredictionSummary,
    ScatterRow,
    SweepRow,
    summarize_runs,
)
from gaussnet.geometry import EquivalenceReport
from gaussnet.tailoring import Ranking

RECORD_HEADER = (
    "sample_id",
    "head",
    "true_class",
    "pred_class",
    "attacked_class",
    "success",
    "distortion_l2",
    "conf_before",
    "conf_after",
)
SCATTER_HEADER = ("conf_before", "conf_after", "count")
SWEEP_HEADER = ("epsilon", "accuracy", "mean_confidence", "successes")

PathLike = Union[str, Path]


def finite_or_none(value: Any) -> Any:
    """NaN and infinities have no JSON spelling"""
    if isinstance(value, Mapping):
        return {key: finite_or_none(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [finite_or_none(item) for item in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def _record_row(record: AttackRecord) -> List[Any]:
    return [
        record.sample_id,
        record.head.value,
        record.true_class,
        record.pred_class,
        record.attacked_class,
        int(record.success),
        record.distortion_l2,
        record.conf_before,
        record.conf_after,
    ]


def _write_table(
    path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_records(path: PathLike, reports: Iterable[AttackReport]) -> None:
    _write_table(
        path,
        RECORD_HEADER,
        (_record_row(record) for report in reports for record in report.records),
    )


def write_scatter(path: PathLike, rows: Iterable[ScatterRow]) -> None:
    _write_table(path, SCATTER_HEADER, rows)


def write_sweep(path: PathLike, rows: Iterable[SweepRow]) -> None:
    _write_table(path, SWEEP_HEADER, rows)


def prediction_document(summary: PredictionSummary) -> Dict[str, Any]:
    return summary._asdict()


def report_document(report: AttackReport, check: BoundCheck) -> Dict[str, Any]:
    return {
        "attack_rate": report.attack_rate,
        "mean_success_confidence": report.mean_success_confidence,
        "n": report.n,
        "bound_violations": check.violations,
        "bounds_checked": check.checked,
    }


def runs_document(
    reports: Sequence[AttackReport], checks: Sequence[BoundCheck]
) -> Dict[str, Any]:
    rates = [report.attack_rate for report in reports]
    confidences = [report.mean_success_confidence for report in reports]
    return {
        "attack_rate": summarize_runs(rates)._asdict(),
        "mean_success_confidence": summarize_runs(confidences)._asdict(),
        "attack_rates": rates,
        "bound_violations": sum(check.violations for check in checks),
    }


def sweep_document(rows: Iterable[SweepRow]) -> List[Dict[str, Any]]:
    return [row._asdict() for row in rows]


def equivalence_document(report: EquivalenceReport) -> Dict[str, Any]:
    return {
        "points": report.points,
        "matches": report.matches,
        "match_fraction": report.match_fraction,
        "ties": len(report.ties),
        "mismatches": report.mismatches,
        "residual": report.residual,
        "norm_spread": report.norm_spread,
    }


def ranking_document(ranking: Ranking) -> Dict[str, Any]:
    return {
        "prototypes": [sample._asdict() for sample in ranking.prototypes],
        "outliers": [sample._asdict() for sample in ranking.outliers],
    }


def dump_json(document: Mapping[str, Any], out: IO[str]) -> None:
    json.dump(finite_or_none(document), out, indent=2, allow_nan=False)
    out.write("\n")
