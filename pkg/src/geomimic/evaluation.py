"""Selection and servo metrics: accuracy, consistency, success rate, correspondence.

Accuracy is the fraction of frames whose top-1 selected instance matches the
ground-truth bindings exactly (canonical keys; no partial credit).
Consistency is the mean lag-1 Pearson autocorrelation of the selected error
time series, with zero-variance components counting as perfectly consistent.
The correspondence matrix tracks the first embedding component of the
selected instance across categories and time; a selector that builds the same
representation on every object shows low dispersion down each column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .exceptions import (
    MissingGroundTruth,
    NoValidCandidates,
    SeriesTooShort,
    TooFewFeatures,
)
from .geometry import ConstraintType, error_vector
from .graphs import EnumerationLimits, enumerate_instances
from .model import TaskFunctionParams, encode, is_degenerate, select


def _top1(params, candidates, selector, rng, temperature=1.0):
    if callable(selector):
        return selector(candidates)
    if selector == "random":
        valid = [c for c in candidates if not is_degenerate(c)]
        if not valid:
            raise NoValidCandidates("no valid candidates")
        return valid[int(rng.integers(len(valid)))]
    return select(params, candidates, p=1, temperature=temperature).top[0]


def accuracy(
    params: Optional[TaskFunctionParams],
    video,
    ctype: ConstraintType,
    selector: Union[str, Callable] = "model",
    rng: Optional[np.random.Generator] = None,
    enumeration_cap: int = 20_000,
) -> float:
    """Fraction of frames whose top-1 selection matches the ground truth key.

    Frames where no selection is possible (too few features, all candidates
    degenerate, or the truth's features dropped out) count as incorrect.
    """
    if not video.ground_truth or ctype not in video.ground_truth:
        raise MissingGroundTruth(f"video {video.video_id} lacks {ctype.value} truth")
    truth_key = video.ground_truth[ctype]
    rng = rng if rng is not None else np.random.default_rng(0)
    hits = 0
    for frame in video.frames:
        try:
            candidates = enumerate_instances(
                frame, ctype, EnumerationLimits(max_instances=enumeration_cap)
            )
            top = _top1(params, candidates, selector, rng)
        except (TooFewFeatures, NoValidCandidates):
            continue
        hits += top.canonical_key == truth_key
    return hits / len(video.frames)


def selected_error_series(
    params: Optional[TaskFunctionParams],
    video,
    ctype: ConstraintType,
    selector: Union[str, Callable] = "model",
    rng: Optional[np.random.Generator] = None,
    enumeration_cap: int = 20_000,
) -> np.ndarray:
    """Geometric error of the per-frame top-1 selection, stacked over time."""
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = []
    for frame in video.frames:
        try:
            candidates = enumerate_instances(
                frame, ctype, EnumerationLimits(max_instances=enumeration_cap)
            )
            top = _top1(params, candidates, selector, rng)
        except (TooFewFeatures, NoValidCandidates):
            continue
        rows.append(error_vector(top))
    if len(rows) < 3:
        raise SeriesTooShort(f"only {len(rows)} usable frames")
    return np.stack(rows)


def consistency(error_series: np.ndarray) -> float:
    """Mean lag-1 Pearson autocorrelation over error components.

    A component whose series has variance below 1e-12 counts as 1.0, so a
    perfectly held constraint is perfectly consistent.
    """
    series = np.asarray(error_series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    if series.shape[0] < 3:
        raise SeriesTooShort(f"need >= 3 samples, got {series.shape[0]}")
    values = []
    for comp in series.T:
        x, y = comp[:-1], comp[1:]
        if np.var(x) < 1e-12 or np.var(y) < 1e-12:
            values.append(1.0)
            continue
        values.append(float(np.corrcoef(x, y)[0, 1]))
    return float(np.mean(values))


def success_rate(traces, thresholds: Optional[dict] = None) -> float:
    """Fraction of servo traces that ended with every raw component in bounds.

    Without explicit thresholds the trace's own convergence verdict is used;
    with thresholds (ConstraintType -> bound, matched per component via the
    trace's recorded raw errors) the final recorded state is re-checked, so
    loosening thresholds can only help.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("success_rate needs at least one trace")
    if thresholds is None:
        return sum(t.converged for t in traces) / len(traces)
    wins = 0
    for t in traces:
        if not t.steps:
            continue
        final = t.steps[-1]
        bounds = _bounds_like(final.raw_error, thresholds)
        wins += bool((np.abs(final.raw_error) < bounds).all())
    return wins / len(traces)


def _bounds_like(raw_error, thresholds: dict) -> np.ndarray:
    # stacked order is pp (2 components) then ll (1) then pl (1) as servo built it
    layout = []
    remaining = len(raw_error)
    for ctype in (
        ConstraintType.POINT_TO_POINT,
        ConstraintType.LINE_TO_LINE,
        ConstraintType.POINT_TO_LINE,
    ):
        if ctype in thresholds and remaining >= ctype.error_dim:
            layout += [thresholds[ctype]] * ctype.error_dim
            remaining -= ctype.error_dim
    if remaining:
        layout += [layout[-1]] * remaining
    return np.asarray(layout[: len(raw_error)])


def correspondence_matrix(
    params: TaskFunctionParams,
    videos_by_category: dict,
    ctype: ConstraintType = ConstraintType.POINT_TO_POINT,
    steps: int = 16,
    selector: Union[str, Callable] = "model",
    rng: Optional[np.random.Generator] = None,
):
    """First embedding component of the selected instance per category and time.

    Rows are categories in sorted order, columns ``steps`` evenly spaced
    frames. The random-selector contrast feeds randomly selected instances
    through the same trained encoder.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    categories = sorted(videos_by_category)
    matrix = np.zeros((len(categories), steps))
    for r, cat in enumerate(categories):
        video = videos_by_category[cat]
        if len(video.frames) < steps:
            raise SeriesTooShort(
                f"video {video.video_id} has {len(video.frames)} frames, needs {steps}"
            )
        positions = np.linspace(0, len(video.frames) - 1, steps).round().astype(int)
        for c, pos in enumerate(positions):
            frame = video.frames[pos]
            candidates = enumerate_instances(frame, ctype)
            top = _top1(params, candidates, selector, rng)
            matrix[r, c] = encode(params, top)[0]
    return categories, matrix


def column_dispersion(matrix: np.ndarray) -> float:
    """Mean over time of the cross-category standard deviation."""
    return float(np.std(np.asarray(matrix), axis=0, ddof=0).mean())


@dataclass
class SelectionEvalReport:
    """Per-video selection metrics plus per-category aggregates."""

    rows: list = field(default_factory=list)  # dicts: category, video_id, ctype, acc, conacc

    def add(self, category, video_id, ctype, acc, conacc, block="trained"):
        self.rows.append(
            {
                "category": category,
                "video_id": video_id,
                "ctype": ctype.value,
                "acc": acc,
                "conacc": conacc,
                "block": block,
            }
        )

    def aggregate(self):
        """Mean and std of Acc/ConAcc per (block, category, ctype)."""
        groups = {}
        for row in self.rows:
            groups.setdefault((row["block"], row["category"], row["ctype"]), []).append(row)
        out = []
        for (block, category, ctype), rows in sorted(groups.items()):
            accs = np.array([r["acc"] for r in rows], dtype=float)
            cons = np.array([r["conacc"] for r in rows], dtype=float)
            out.append(
                {
                    "block": block,
                    "category": category,
                    "ctype": ctype,
                    "acc_mean": float(accs.mean()),
                    "acc_std": float(accs.std(ddof=0)),
                    "conacc_mean": float(cons.mean()),
                    "conacc_std": float(cons.std(ddof=0)),
                    "videos": len(rows),
                }
            )
        return out

    def to_text(self) -> str:
        lines = [
            f"{'block':<14}{'category':<12}{'type':<6}{'Acc':>16}{'ConAcc':>18}{'videos':>8}"
        ]
        for agg in self.aggregate():
            lines.append(
                f"{agg['block']:<14}{agg['category']:<12}{agg['ctype']:<6}"
                f"{agg['acc_mean']*100:9.1f}%±{agg['acc_std']*100:4.1f}%"
                f"{agg['conacc_mean']:10.2f}±{agg['conacc_std']:5.2f}"
                f"{agg['videos']:>8}"
            )
        return "\n".join(lines)
