"""Evaluation: per-joint position error and limb-length-ratio structure metrics.

Report CSV schema (one row per method and action)::

    method,action,mpjpe_mm,lower_sum,upper_sum,full_sum

Values are written with two decimals; a missing value is an empty field.
Ratio sums are reported on the ``all`` action row of a method.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, DomainError
from .pose import joints

log = logging.getLogger(__name__)

LENGTH_FLOOR = 1e-6  # mm
REPORT_COLUMNS = ("method", "action", "mpjpe_mm", "lower_sum", "upper_sum", "full_sum")


def mpjpe(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Mean over joints of the Euclidean distance, in mm."""
    predicted, truth = np.asarray(predicted, float), np.asarray(truth, float)
    if predicted.shape != truth.shape or predicted.ndim != 1 or predicted.size % 3:
        raise DimensionError(f"pose shapes {predicted.shape} and {truth.shape} are not comparable")
    return float(np.mean(np.linalg.norm(joints(predicted - truth), axis=-1)))


def mpjpe_batch(predicted: np.ndarray, truth: np.ndarray) -> np.ndarray:
    predicted, truth = np.atleast_2d(predicted), np.atleast_2d(truth)
    if predicted.shape != truth.shape or predicted.shape[-1] % 3:
        raise DimensionError(f"pose batches {predicted.shape} and {truth.shape} are not comparable")
    return np.mean(np.linalg.norm(joints(predicted - truth), axis=-1), axis=-1)


def limb_lengths(pose: np.ndarray, model) -> np.ndarray:
    """Parent-child distances for the model's named limbs (works on batches)."""
    pose = np.asarray(pose, float)
    if pose.shape[-1] != 3 * model.n_joints:
        raise DimensionError(f"pose has {pose.shape[-1] // 3} joints, skeleton has {model.n_joints}")
    jt = joints(pose)
    parents = np.array([p for p, _ in model.limbs])
    children = np.array([c for _, c in model.limbs])
    return np.linalg.norm(jt[..., children, :] - jt[..., parents, :], axis=-1)


def _log_ratio(lengths: np.ndarray) -> np.ndarray:
    logs = np.log(lengths)
    return logs[..., :, None] - logs[..., None, :]


def log_ratio_matrix(pose: np.ndarray, model) -> np.ndarray:
    """Entry (i, j) = ln(length_i / length_j)."""
    lengths = limb_lengths(pose, model)
    bad = np.flatnonzero((lengths <= 0.0).reshape(-1, lengths.shape[-1]).any(axis=0))
    if bad.size:
        raise DomainError(f"limb {model.limb_names[bad[0]]!r} has zero length")
    return _log_ratio(lengths)


@dataclass
class RatioErrors:
    matrix: np.ndarray
    flagged: list[int] = field(default_factory=list)


def ratio_error_matrix(predictions: np.ndarray, truths: np.ndarray, model) -> RatioErrors:
    """Per-cell mean |log-ratio(pred) - log-ratio(truth)| over aligned samples.

    Predicted limbs shorter than 1e-6 mm are clamped to that length and the
    sample index is recorded in ``flagged``.
    """
    predictions, truths = np.atleast_2d(predictions), np.atleast_2d(truths)
    if predictions.shape != truths.shape:
        raise DimensionError(f"{len(predictions)} predictions vs {len(truths)} ground-truth poses")
    lp = limb_lengths(predictions, model)
    lt = limb_lengths(truths, model)
    flagged = np.flatnonzero((lp < LENGTH_FLOOR).any(axis=1)).tolist()
    if flagged:
        log.warning("%d predictions have degenerate limbs; lengths clamped", len(flagged))
    if (lt <= 0).any():
        raise DomainError("ground-truth pose has a zero-length limb")
    diff = np.abs(_log_ratio(np.maximum(lp, LENGTH_FLOOR)) - _log_ratio(lt))
    return RatioErrors(diff.mean(axis=0), flagged)


def partition_sums(error_matrix: np.ndarray, partitions: dict[str, Sequence[int]]) -> dict[str, float]:
    """Sum each unordered limb pair once over the submatrix of every partition.

    Equals half the sum of the off-diagonal cells of the restricted matrix.
    """
    m = np.asarray(error_matrix, float)
    out = {}
    for name, idx in partitions.items():
        idx = np.asarray(list(idx), dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= m.shape[0]):
            raise DimensionError(f"partition {name!r} has limb index outside 0..{m.shape[0] - 1}")
        sub = m[np.ix_(idx, idx)]
        out[name] = float((sub.sum() - np.trace(sub)) / 2.0)
    return out


# ---------------------------------------------------------------------- report


@dataclass
class ReportRow:
    method: str
    action: str
    mpjpe_mm: float | None = None
    lower_sum: float | None = None
    upper_sum: float | None = None
    full_sum: float | None = None


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    ratio_matrices: dict[str, np.ndarray] = field(default_factory=dict)
    flagged: dict[str, list[int]] = field(default_factory=dict)

    def mpjpe(self, method: str, action: str = "all") -> float | None:
        for r in self.rows:
            if r.method == method and r.action == action:
                return r.mpjpe_mm
        raise KeyError((method, action))

    def row(self, method: str, action: str = "all") -> ReportRow:
        for r in self.rows:
            if r.method == method and r.action == action:
                return r
        raise KeyError((method, action))


def fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def report_csv(rows: Iterable[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in rows:
        writer.writerow([r.method, r.action, fmt(r.mpjpe_mm), fmt(r.lower_sum), fmt(r.upper_sum), fmt(r.full_sum)])
    return buf.getvalue()


def mpjpe_table_csv(results: dict[str, dict[str, float]], actions: Sequence[str]) -> str:
    """Wide method x action table, one row per method."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", *actions])
    for method, per_action in results.items():
        writer.writerow([method, *(fmt(per_action.get(a)) for a in actions)])
    return buf.getvalue()


def evaluate_method(
    method: str,
    predictions: np.ndarray,
    truths: np.ndarray,
    actions: Sequence[str],
    model,
) -> tuple[list[ReportRow], RatioErrors]:
    """MPJPE per action plus an ``all`` row carrying the ratio partition sums."""
    errs = mpjpe_batch(predictions, truths)
    actions = np.asarray(actions)
    rows = [ReportRow(method, a, float(errs[actions == a].mean())) for a in sorted(set(actions.tolist()))]
    ratios = ratio_error_matrix(predictions, truths, model)
    sums = partition_sums(ratios.matrix, model.partitions)
    rows.append(ReportRow(method, "all", float(errs.mean()), sums["lower"], sums["upper"], sums["full"]))
    return rows, ratios


def report(results: dict[str, tuple[np.ndarray, np.ndarray, Sequence[str]]], model) -> EvalReport:
    """Build a report from ``{method: (predictions, truths, actions)}``."""
    out = EvalReport()
    for method, (pred, truth, actions) in results.items():
        rows, ratios = evaluate_method(method, pred, truth, actions, model)
        out.rows += rows
        out.ratio_matrices[method] = ratios.matrix
        out.flagged[method] = ratios.flagged
    return out


def matrix_csv(matrix: np.ndarray, names: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["limb", *names])
    for name, row in zip(names, matrix):
        writer.writerow([name, *(f"{v:.6f}" for v in row)])
    return buf.getvalue()


def write_pgm(path, image: np.ndarray) -> None:
    """Binary (P5) 8-bit PGM from values in [0, 1]."""
    img = np.clip(np.asarray(image, float), 0.0, 1.0)
    data = np.round(img * 255).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def write_heatmap(path, matrix: np.ndarray, cell: int = 8) -> tuple[float, float]:
    """Linear grey heatmap of ``matrix`` plus a ``.txt`` sidecar with min/max."""
    m = np.asarray(matrix, float)
    lo, hi = float(m.min()), float(m.max())
    scaled = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    write_pgm(path, np.kron(scaled, np.ones((cell, cell))))
    Path(str(path) + ".txt").write_text(f"min={lo:.6f}\nmax={hi:.6f}\nmapping=linear\n")
    return lo, hi
