"""Noise-ceiling-normalized evaluation: per-vertex squared Pearson
correlation divided by the vertex noise ceiling, averaged over vertices
with a usable ceiling, plus per-ROI medians and report files.

R^2 here is the squared correlation coefficient, not the coefficient of
determination; the two differ whenever predictions are miscalibrated in
scale or offset, and the metric is defined on the former. Vertices with
NC <= nc_epsilon (zero-padded vertices force that case) are excluded from
the mean rather than clipped or imputed. Raw scores can exceed 1 by
sampling noise; clip_at_1 reproduces leaderboard-style bounded scores and
is off by default so such excursions stay visible.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PreconditionError, ValidationError
from .linalg import pearson_corr

DEFAULT_NC_EPSILON = 1e-6


@dataclass(eq=False)
class EvalReport:
    per_vertex_r2: np.ndarray                 # V, in [0, 1]
    per_vertex_normalized: np.ndarray         # V, NaN where excluded
    overall_m: float
    per_roi_median: dict[str, float]
    n_excluded_vertices: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (
            np.array_equal(self.per_vertex_r2, other.per_vertex_r2)
            and np.array_equal(
                self.per_vertex_normalized, other.per_vertex_normalized, equal_nan=True
            )
            and self.overall_m == other.overall_m
            and self.per_roi_median == other.per_roi_median
            and self.n_excluded_vertices == other.n_excluded_vertices
        )


def r2_per_vertex(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Squared Pearson correlation per vertex column; zero-variance columns
    give 0 by the shared correlation convention."""
    if pred.shape != target.shape:
        raise ValidationError(f"r2_per_vertex: shape mismatch {pred.shape} vs {target.shape}")
    if pred.ndim != 2 or pred.shape[0] < 2:
        raise PreconditionError("r2_per_vertex: need a 2-D array with at least 2 rows")
    V = pred.shape[1]
    out = np.empty(V)
    for j in range(V):
        r = pearson_corr(pred[:, j], target[:, j])
        out[j] = r * r
    return out


def noise_normalized_score(
    r2: np.ndarray,
    nc: np.ndarray,
    nc_epsilon: float = DEFAULT_NC_EPSILON,
    clip_at_1: bool = False,
) -> tuple[float, np.ndarray, int]:
    """Mean of R^2_j / NC_j over vertices with NC_j > nc_epsilon.

    Returns (overall_m, per-vertex normalized scores with NaN at excluded
    vertices, number excluded). Raises when every vertex is excluded: the
    metric is undefined there.
    """
    r2 = np.asarray(r2, dtype=np.float64)
    nc = np.asarray(nc, dtype=np.float64)
    if r2.shape != nc.shape or r2.ndim != 1:
        raise ValidationError("noise_normalized_score: r2 and nc must be equal-length vectors")
    if np.any(nc < 0.0) or np.any(nc > 1.0):
        raise ValidationError("noise_normalized_score: nc values outside [0, 1]")
    included = nc > nc_epsilon
    n_excluded = int(np.sum(~included))
    if not np.any(included):
        raise ValidationError("noise_normalized_score: all vertices excluded, metric undefined")
    normalized = np.full(r2.shape, np.nan)
    normalized[included] = r2[included] / nc[included]
    if clip_at_1:
        normalized[included] = np.minimum(normalized[included], 1.0)
    overall = float(np.mean(normalized[included]))
    return overall, normalized, n_excluded


def roi_median_scores(
    normalized: np.ndarray,
    roi_labels: np.ndarray,
    roi_names,
) -> dict[str, float]:
    """Median normalized score per ROI over included (non-NaN) vertices;
    ROIs with no included vertex are omitted."""
    roi_labels = np.asarray(roi_labels)
    if roi_labels.shape != normalized.shape:
        raise ValidationError("roi_median_scores: label/score length mismatch")
    if np.any(roi_labels < 0) or np.any(roi_labels >= len(roi_names)):
        raise ValidationError("roi_median_scores: label index out of range")
    out: dict[str, float] = {}
    for idx, name in enumerate(roi_names):
        values = normalized[(roi_labels == idx) & ~np.isnan(normalized)]
        if values.size:
            out[name] = float(np.median(values))
    return out


def evaluate_predictions(
    pred: np.ndarray,
    target: np.ndarray,
    nc: np.ndarray,
    roi_labels: np.ndarray,
    roi_names,
    nc_epsilon: float = DEFAULT_NC_EPSILON,
    clip_at_1: bool = False,
) -> EvalReport:
    """Full pipeline: per-vertex R^2, normalization, ROI medians."""
    r2 = r2_per_vertex(pred, target)
    overall, normalized, n_excluded = noise_normalized_score(
        r2, nc, nc_epsilon=nc_epsilon, clip_at_1=clip_at_1
    )
    medians = roi_median_scores(normalized, roi_labels, roi_names)
    return EvalReport(
        per_vertex_r2=r2,
        per_vertex_normalized=normalized,
        overall_m=overall,
        per_roi_median=medians,
        n_excluded_vertices=n_excluded,
    )


# ---------------------------------------------------------------------------
# Report files. CSV columns (stable): kind, index, roi, r2, normalized.
# One "vertex" row per vertex (normalized empty when excluded), then summary
# rows: overall_m, n_excluded_vertices, roi_median:<roi>. JSON mirrors the
# EvalReport fields exactly (null at excluded vertices).
# ---------------------------------------------------------------------------

_CSV_HEADER = ["kind", "index", "roi", "r2", "normalized"]


def emit_report(
    report: EvalReport,
    path,
    format: str = "json",
    roi_labels: np.ndarray | None = None,
    roi_names=None,
) -> None:
    path = Path(path)
    if format == "json":
        doc = {
            "per_vertex_r2": [float(x) for x in report.per_vertex_r2],
            "per_vertex_normalized": [
                None if math.isnan(x) else float(x) for x in report.per_vertex_normalized
            ],
            "overall_m": report.overall_m,
            "per_roi_median": {k: report.per_roi_median[k] for k in sorted(report.per_roi_median)},
            "n_excluded_vertices": report.n_excluded_vertices,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    elif format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_HEADER)
            for j in range(report.per_vertex_r2.shape[0]):
                roi = ""
                if roi_labels is not None and roi_names is not None:
                    roi = roi_names[int(roi_labels[j])]
                norm = report.per_vertex_normalized[j]
                writer.writerow(
                    ["vertex", j, roi, repr(float(report.per_vertex_r2[j])),
                     "" if math.isnan(norm) else repr(float(norm))]
                )
            writer.writerow(["summary", "overall_m", "", repr(report.overall_m), ""])
            writer.writerow(["summary", "n_excluded_vertices", "", str(report.n_excluded_vertices), ""])
            for name in sorted(report.per_roi_median):
                writer.writerow(
                    ["summary", f"roi_median:{name}", "", repr(report.per_roi_median[name]), ""]
                )
    else:
        raise PreconditionError(f"emit_report: unknown format '{format}'")


def load_report(path, format: str | None = None) -> EvalReport:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix == ".csv" else "json"
    if format == "json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        normalized = np.array(
            [np.nan if x is None else float(x) for x in doc["per_vertex_normalized"]]
        )
        return EvalReport(
            per_vertex_r2=np.array(doc["per_vertex_r2"], dtype=np.float64),
            per_vertex_normalized=normalized,
            overall_m=float(doc["overall_m"]),
            per_roi_median={k: float(v) for k, v in doc["per_roi_median"].items()},
            n_excluded_vertices=int(doc["n_excluded_vertices"]),
        )
    if format == "csv":
        r2, normalized = [], []
        overall_m = None
        n_excluded = None
        medians: dict[str, float] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != _CSV_HEADER:
                raise ValidationError(f"report csv: unexpected header {header}")
            for row in reader:
                kind = row[0]
                if kind == "vertex":
                    r2.append(float(row[3]))
                    normalized.append(np.nan if row[4] == "" else float(row[4]))
                elif kind == "summary":
                    key = row[1]
                    if key == "overall_m":
                        overall_m = float(row[3])
                    elif key == "n_excluded_vertices":
                        n_excluded = int(row[3])
                    elif key.startswith("roi_median:"):
                        medians[key.split(":", 1)[1]] = float(row[3])
        if overall_m is None or n_excluded is None:
            raise ValidationError("report csv: missing summary rows")
        return EvalReport(
            per_vertex_r2=np.array(r2, dtype=np.float64),
            per_vertex_normalized=np.array(normalized, dtype=np.float64),
            overall_m=overall_m,
            per_roi_median=medians,
            n_excluded_vertices=n_excluded,
        )
    raise PreconditionError(f"load_report: unknown format '{format}'")
