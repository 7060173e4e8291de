"""Uncalibrated visual servoing: probe a Jacobian, track it online, control.

The visual-motor Jacobian maps joint moves to changes in the stacked
geometric error. It is estimated without any camera or robot calibration:
initial columns come from exploratory single-joint motions, and a rank-1
Broyden correction keeps the estimate consistent with each observed
(motion, error-change) pair during the servo. The control law is a damped
pseudo-inverse step toward zero error.

Line-parallelism errors live in [-1, 1] while point errors are in pixels, so
stacked errors are rebalanced by a configurable line scale; convergence is
always checked on the raw, unscaled components.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .exceptions import (
    DegenerateStep,
    DivergenceDetected,
    NoValidCandidates,
    PlantFault,
    SingularProbe,
)
from .geometry import ConstraintType, error_vector
from .graphs import EnumerationLimits, enumerate_instances
from .model import TaskFunctionParams, select, is_degenerate

logger = logging.getLogger(__name__)

_CTYPE_ORDER = (
    ConstraintType.POINT_TO_POINT,
    ConstraintType.LINE_TO_LINE,
    ConstraintType.POINT_TO_LINE,
)

_DEFAULT_THRESHOLDS = {
    ConstraintType.POINT_TO_POINT: 2.0,  # pixels
    ConstraintType.LINE_TO_LINE: 0.02,  # parallelism
    ConstraintType.POINT_TO_LINE: 2.0,  # pixels
}

_DEFAULT_SCALES = {
    ConstraintType.POINT_TO_POINT: 1.0,
    ConstraintType.LINE_TO_LINE: 100.0,
    ConstraintType.POINT_TO_LINE: 1.0,
}


@dataclass
class ServoConfig:
    """Gains, probe sizes, and termination rules of the servo controller."""

    gain: float = 0.2  # control gain on the pseudo-inverse step
    broyden_step: float = 0.3  # online update step size, in (0, 1]
    exploratory_delta: float = 0.02  # per-joint probe move (rad or m)
    max_iters: int = 300
    damping: float = 1e-6  # pseudo-inverse regularizer
    ll_scale: float = 100.0  # weight of parallelism errors vs pixel errors
    temperature: float = 1.0
    top_p: int = 1
    thresholds: Optional[dict] = None  # ConstraintType -> per-component bound
    divergence_factor: float = 10.0
    divergence_patience: int = 20
    enumeration_cap: int = 20_000

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if not 0.0 < self.broyden_step <= 1.0:
            raise ValueError("broyden_step must lie in (0, 1]")
        for name in ("max_iters", "damping", "ll_scale", "temperature", "top_p"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def threshold_for(self, ctype: ConstraintType) -> float:
        if self.thresholds and ctype in self.thresholds:
            return self.thresholds[ctype]
        return _DEFAULT_THRESHOLDS[ctype]

    def scale_for(self, ctype: ConstraintType) -> float:
        if ctype is ConstraintType.LINE_TO_LINE:
            return self.ll_scale
        return _DEFAULT_SCALES[ctype]


def estimate_initial_jacobian(
    probe: Callable[[np.ndarray], np.ndarray],
    q0: np.ndarray,
    deltas: Union[float, Sequence[float]],
) -> np.ndarray:
    """Jacobian columns from exploratory single-joint motions.

    ``probe(q)`` must return the stacked error at joint vector ``q`` and leave
    the robot back at ``q0`` afterwards (plant adapters restore state). Near
    zero columns are kept but flagged with a SingularProbe warning.
    """
    q0 = np.asarray(q0, dtype=float)
    n = len(q0)
    deltas = np.full(n, deltas, dtype=float) if np.isscalar(deltas) else np.asarray(deltas, dtype=float)
    if (deltas == 0).any():
        raise ValueError("exploratory deltas must be nonzero")
    e0 = np.asarray(probe(q0), dtype=float)
    J = np.zeros((len(e0), n))
    for i in range(n):
        q = q0.copy()
        q[i] += deltas[i]
        J[:, i] = (np.asarray(probe(q), dtype=float) - e0) / deltas[i]
        if np.linalg.norm(J[:, i]) < 1e-12:
            warnings.warn(f"joint {i} probe produced a near-zero column", SingularProbe)
    return J


def broyden_update(J: np.ndarray, dq: np.ndarray, de: np.ndarray, step: float = 0.3) -> np.ndarray:
    """Rank-1 secant correction J + step * (de - J dq) dq^T / (dq^T dq).

    Skips (with a DegenerateStep warning) when the step is too small to carry
    information.
    """
    J = np.asarray(J, dtype=float)
    dq = np.asarray(dq, dtype=float)
    de = np.asarray(de, dtype=float)
    nrm2 = float(dq @ dq)
    if nrm2 <= 1e-24:
        warnings.warn("near-zero joint step; Broyden update skipped", DegenerateStep)
        return J.copy()
    residual = de - J @ dq
    return J + step * np.outer(residual, dq) / nrm2


def control_step(J: np.ndarray, error: np.ndarray, gain: float = 0.2, damping: float = 1e-6) -> np.ndarray:
    """Damped pseudo-inverse control command dq = -gain * pinv(J) error."""
    J = np.asarray(J, dtype=float)
    error = np.asarray(error, dtype=float)
    d, n = J.shape
    if d <= n:
        dq = J.T @ np.linalg.solve(J @ J.T + damping * np.eye(d), error)
    else:
        dq = np.linalg.solve(J.T @ J + damping * np.eye(n), J.T @ error)
    return -gain * dq


@dataclass
class ServoStep:
    iteration: int
    q: np.ndarray
    raw_error: np.ndarray
    error_norm: float
    cond_j: float
    dq: np.ndarray
    keys: tuple


@dataclass
class ServoTrace:
    """Append-only per-iteration record of one servo run."""

    statuses = ("converged", "max_iters", "diverged", "no_candidates", "plant_fault")

    steps: list = field(default_factory=list)
    status: str = "max_iters"
    control_steps: int = 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def csv_rows(self):
        header = None
        rows = []
        for s in self.steps:
            if header is None:
                header = (
                    ["iter"]
                    + [f"q{i}" for i in range(len(s.q))]
                    + [f"e{i}" for i in range(len(s.raw_error))]
                    + ["err_norm", "cond_J"]
                )
            rows.append(
                [s.iteration]
                + [repr(float(x)) for x in s.q]
                + [repr(float(x)) for x in s.raw_error]
                + [repr(float(s.error_norm)), repr(float(s.cond_j))]
            )
        return header or ["iter", "err_norm", "cond_J"], rows


class _FrameSelection:
    """Selected instances of one frame plus their stacked errors."""

    def __init__(self, instances, raw, weighted, keys):
        self.instances = instances
        self.raw = raw
        self.weighted = weighted
        self.keys = keys


def _select_instances(frame, models, config, selector, rng):
    chosen = []
    for ctype in _CTYPE_ORDER:
        if ctype not in models:
            continue
        candidates = enumerate_instances(
            frame, ctype, EnumerationLimits(max_instances=config.enumeration_cap)
        )
        if callable(selector):
            picked = selector(candidates, ctype)
            picked = picked if isinstance(picked, list) else [picked]
        elif selector == "random":
            valid = [c for c in candidates if not is_degenerate(c)]
            if not valid:
                raise NoValidCandidates(f"no valid {ctype.value} candidates")
            picked = [valid[int(rng.integers(len(valid)))] for _ in range(config.top_p)]
        else:
            result = select(
                models[ctype], candidates, p=config.top_p, temperature=config.temperature
            )
            picked = result.top
        chosen.append((ctype, picked))
    return chosen


def _stack_errors(chosen, config, coord_lookup=None):
    raw_parts, weighted_parts, keys = [], [], []
    for ctype, picked in chosen:
        for inst in picked:
            if coord_lookup is None:
                e = error_vector(inst)
            else:
                e = coord_lookup(inst)
            raw_parts.append(e)
            weighted_parts.append(e * config.scale_for(ctype))
            keys.append(inst.canonical_key)
    return np.concatenate(raw_parts), np.concatenate(weighted_parts), tuple(keys)


def _thresholds_vector(chosen, config):
    parts = []
    for ctype, picked in chosen:
        for _ in picked:
            parts.append(np.full(ctype.error_dim, config.threshold_for(ctype)))
    return np.concatenate(parts)


def _instance_error_from_coords(inst, coords_by_id, fallback):
    """Error of an instance evaluated at tracked coordinates by feature id."""
    from .geometry import PixelPoint, line_from_points, ll_error, pl_error, pp_error
    from .graphs import FeaturePoint, GraphInstance

    feats = []
    for f in inst.bindings:
        coords = coords_by_id.get(f.id, fallback.get(f.id))
        feats.append(FeaturePoint(f.id, f.descriptor, PixelPoint(*coords), f.segment))
    return error_vector(GraphInstance(inst.spec, tuple(feats)))


def servo_loop(
    models: dict,
    plant,
    config: ServoConfig = ServoConfig(),
    selector: Union[str, Callable] = "model",
    rng: Optional[np.random.Generator] = None,
) -> ServoTrace:
    """Closed-loop uncalibrated visual servoing with in-the-loop selection.

    Each iteration observes a frame, selects the top-p instances per
    constraint type (trained model, seeded random baseline, or custom
    callable), stacks their errors, refreshes the Jacobian with a Broyden
    update when the same instances stayed selected, and commands a damped
    pseudo-inverse step. Terminates on convergence of every raw error
    component, on persistent divergence, or at the iteration cap; the trace
    always comes back, whatever the outcome.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    trace = ServoTrace()
    n = plant.n_joints
    q_acc = np.zeros(n)

    def observe_selection():
        frame = plant.observe()
        if not frame:
            raise NoValidCandidates("empty frame")
        chosen = _select_instances(frame, models, config, selector, rng)
        raw, weighted, keys = _stack_errors(chosen, config)
        return frame, chosen, raw, weighted, keys

    try:
        frame, chosen, raw, weighted, keys = observe_selection()
    except NoValidCandidates:
        trace.status = "no_candidates"
        return trace
    except PlantFault:
        trace.status = "plant_fault"
        return trace

    thresholds = _thresholds_vector(chosen, config)
    reference_coords = {f.id: (f.coords.u, f.coords.v) for f in frame}
    fixed_instances = [inst for _, picked in chosen for inst in picked]

    def probe(q):
        state = plant.snapshot()
        try:
            dq = q - q_acc
            if np.linalg.norm(dq) > 0:
                plant.act(dq)
            probe_frame = plant.observe()
            coords = {f.id: (f.coords.u, f.coords.v) for f in probe_frame}
            parts = []
            for (ctype, picked) in chosen:
                for inst in picked:
                    e = _instance_error_from_coords(inst, coords, reference_coords)
                    parts.append(e * config.scale_for(ctype))
            return np.concatenate(parts)
        finally:
            plant.restore(state)

    initial_norm = float(np.linalg.norm(weighted))
    if (np.abs(raw) < thresholds).all():
        trace.status = "converged"
        trace.steps.append(
            ServoStep(0, q_acc.copy(), raw, initial_norm, float("nan"), np.zeros(n), keys)
        )
        return trace

    J = estimate_initial_jacobian(probe, q_acc, config.exploratory_delta)

    prev = None  # (dq, weighted error, keys, clamped)
    diverged_run = 0
    for iteration in range(config.max_iters):
        if iteration > 0:
            try:
                frame, chosen, raw, weighted, keys = observe_selection()
            except NoValidCandidates:
                trace.status = "no_candidates"
                return trace
            except PlantFault:
                trace.status = "plant_fault"
                return trace

        if prev is not None and prev[2] == keys and not prev[3]:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateStep)
                J = broyden_update(J, prev[0], weighted - prev[1], config.broyden_step)

        cond_j = float(np.linalg.cond(J))
        if (np.abs(raw) < thresholds).all():
            trace.status = "converged"
            trace.steps.append(
                ServoStep(iteration, q_acc.copy(), raw, float(np.linalg.norm(weighted)), cond_j, np.zeros(n), keys)
            )
            return trace

        norm = float(np.linalg.norm(weighted))
        if norm > config.divergence_factor * initial_norm:
            diverged_run += 1
            if diverged_run >= config.divergence_patience:
                trace.status = "diverged"
                return trace
        else:
            diverged_run = 0

        dq = control_step(J, weighted, gain=config.gain, damping=config.damping)
        trace.steps.append(
            ServoStep(iteration, q_acc.copy(), raw, norm, cond_j, dq.copy(), keys)
        )
        try:
            plant.act(dq)
        except PlantFault:
            trace.status = "plant_fault"
            return trace
        q_acc = q_acc + dq
        trace.control_steps += 1
        prev = (dq, weighted, keys, bool(getattr(plant, "clamped", False)))

    trace.status = "max_iters"
    return trace
