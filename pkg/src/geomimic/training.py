"""Joint training of the task function from demonstration videos.

Two signals shape the selector. A temporal-order loss asserts that demonstrated
frames progress toward task completion, so the geometric error of a relevant
candidate should shrink from an earlier frame to a later one; candidates are
weighted by the selector's own softmax, which rewards putting probability on
consistently improving constraints. A similarity loss pulls the
probability-weighted embeddings of frames from different object categories
toward the same representation, which is what transfers the selection across
categories. The outer loop alternates the two and folds the similarity-trained
clone back with a momentum blend.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor, cosine_similarity, masked_softmax
from .exceptions import (
    EmptyDataset,
    MissingCorrespondence,
    NonFiniteLoss,
    ShapeMismatch,
    ZeroNormEmbedding,
)
from .geometry import ConstraintType, batch_error_vectors
from .graphs import EnumerationLimits, FeaturePoint, enumerate_bindings, spec_for
from .model import TaskFunctionParams, forward, gradient, init_params, score_tensor

logger = logging.getLogger(__name__)

#: Line-parallelism errors live in [-1, 1] while point errors are in pixels;
#: error norms entering the temporal-order loss rebalance them with the same
#: factor the servo controller uses when stacking mixed-unit errors, so one
#: demonstrator-confidence level covers both units.
DEFAULT_LL_ERROR_SCALE = 100.0


def error_norm_scale(ctype: ConstraintType, ll_scale: float = DEFAULT_LL_ERROR_SCALE) -> float:
    return ll_scale if ctype is ConstraintType.LINE_TO_LINE else 1.0


@dataclass
class DemoVideo:
    """One demonstration: ordered frames of feature points, plus optional truth."""

    video_id: str
    category_id: str
    frames: list  # list of list[FeaturePoint]
    frame_indices: Optional[list] = None
    ground_truth: Optional[dict] = None  # ConstraintType -> canonical key

    def __post_init__(self):
        if len(self.frames) < 2:
            raise ValueError(f"video {self.video_id} needs >= 2 frames")
        if self.frame_indices is None:
            self.frame_indices = list(range(len(self.frames)))
        if len(self.frame_indices) != len(self.frames):
            raise ValueError("frame_indices length must match frames")
        if any(b <= a for a, b in zip(self.frame_indices, self.frame_indices[1:])):
            raise ValueError("frame indices must be strictly increasing")

    @property
    def descriptor_dim(self) -> int:
        for frame in self.frames:
            if frame:
                return len(frame[0].descriptor)
        raise ValueError(f"video {self.video_id} has no features in any frame")


@dataclass
class TrainConfig:
    """Hyperparameters of the joint optimization."""

    alpha: float = 5.0  # demonstrator confidence
    beta: float = 0.9  # momentum coefficient, strictly inside (0, 1)
    outer_iters: int = 200
    temporal_steps: int = 10  # N1
    sim_steps: int = 10  # N2
    lr_temporal: float = 1e-2
    lr_sim: float = 1e-2
    batch_size: int = 32
    sim_batch_size: int = 32
    stride: int = 1
    temperature: float = 1.0
    top_p: int = 1
    seed: int = 0
    max_candidates: int = 128  # training-time candidate subsample per frame
    ll_error_scale: float = DEFAULT_LL_ERROR_SCALE
    enumeration_cap: int = 20_000
    hidden_width: int = 32
    embedding_dim: int = 16
    rounds: int = 3
    checkpoint_interval: int = 0  # outer iterations between checkpoints; 0 = off

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie strictly inside (0, 1)")
        for name in (
            "outer_iters",
            "temporal_steps",
            "lr_temporal",
            "lr_sim",
            "batch_size",
            "sim_batch_size",
            "stride",
            "temperature",
            "top_p",
            "max_candidates",
            "enumeration_cap",
            "hidden_width",
            "embedding_dim",
            "rounds",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sim_steps < 0:
            raise ValueError("sim_steps must be >= 0")


@dataclass
class FrameCandidates:
    """Compact per-frame candidate set: bindings into the frame's features."""

    video_id: str
    category_id: str
    frame_pos: int
    feature_ids: np.ndarray  # (m,)
    descriptors: np.ndarray  # (m, D)
    coords: np.ndarray  # (m, 2)
    bindings: np.ndarray  # (C, nodes) rows indexing the frame's features
    err_norms: np.ndarray  # (C,) geometric error norm per candidate
    valid: np.ndarray  # (C,) bool

    @property
    def keys(self) -> np.ndarray:
        """Canonical keys, (C, nodes): bindings are enumerated in canonical order."""
        return self.feature_ids[self.bindings]

    def node_descriptors(self, rows) -> np.ndarray:
        return self.descriptors[self.bindings[rows]]


@dataclass
class StateChangeSample:
    """An ordered frame pair asserting task progress, with aligned candidates."""

    video_id: str
    earlier: FrameCandidates
    later: FrameCandidates
    idx_earlier: np.ndarray  # rows into earlier.bindings, aligned with idx_later
    idx_later: np.ndarray
    delta_norm: np.ndarray  # ||error(earlier)|| - ||error(later)|| per candidate

    def __post_init__(self):
        if self.earlier.frame_pos >= self.later.frame_pos:
            raise ValueError("earlier frame must precede later frame")


def build_frame_candidates(
    video: DemoVideo,
    frame_pos: int,
    ctype: ConstraintType,
    limits: EnumerationLimits,
    ll_scale: float = DEFAULT_LL_ERROR_SCALE,
) -> Optional[FrameCandidates]:
    """Enumerate one frame's candidates into compact arrays; None if too few features."""
    features = video.frames[frame_pos]
    spec = spec_for(ctype)
    if len(features) < spec.node_count:
        return None
    feature_ids = np.array([f.id for f in features], dtype=np.int64)
    descriptors = np.stack([f.descriptor for f in features])
    coords = np.array([[f.coords.u, f.coords.v] for f in features])
    bindings = enumerate_bindings(feature_ids, ctype, limits)
    errors, valid = batch_error_vectors(coords, bindings, ctype)
    err_norms = np.linalg.norm(errors, axis=1) * error_norm_scale(ctype, ll_scale)
    return FrameCandidates(
        video_id=video.video_id,
        category_id=video.category_id,
        frame_pos=frame_pos,
        feature_ids=feature_ids,
        descriptors=descriptors,
        coords=coords,
        bindings=bindings,
        err_norms=err_norms,
        valid=valid,
    )


def _key_view(keys: np.ndarray) -> np.ndarray:
    keys = np.ascontiguousarray(keys, dtype=np.int64)
    return keys.view([("", np.int64)] * keys.shape[1]).ravel()


def match_candidates(earlier: FrameCandidates, later: FrameCandidates):
    """Aligned binding rows whose canonical keys exist and are valid in both frames."""
    _, idx_e, idx_l = np.intersect1d(
        _key_view(earlier.keys), _key_view(later.keys), return_indices=True
    )
    both_valid = earlier.valid[idx_e] & later.valid[idx_l]
    return idx_e[both_valid], idx_l[both_valid]


def prepare_datasets(
    videos: Sequence[DemoVideo],
    ctype: ConstraintType,
    stride: int = 1,
    seed: int = 0,
    max_candidates: Optional[int] = None,
    enumeration_cap: int = 20_000,
    ll_error_scale: float = DEFAULT_LL_ERROR_SCALE,
):
    """State-change samples and per-frame candidate sets, shuffled by seed.

    Every (t, t + stride) frame pair of every video becomes a sample whose
    candidates are matched across the two frames by canonical key; frames where
    a candidate is missing or degenerate simply drop that candidate. When a
    frame carries more than ``max_candidates`` candidates, a seeded uniform
    subsample is kept (selection stays exhaustive at evaluation time).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    samples: list = []
    frame_sets: list = []
    for vid_index, video in enumerate(videos):
        per_frame = {}
        limits = EnumerationLimits(max_instances=enumeration_cap, seed=seed)
        for pos in range(len(video.frames)):
            per_frame[pos] = build_frame_candidates(video, pos, ctype, limits, ll_error_scale)
        for pos in range(len(video.frames) - stride):
            earlier, later = per_frame[pos], per_frame[pos + stride]
            if earlier is None or later is None:
                continue
            idx_e, idx_l = match_candidates(earlier, later)
            if len(idx_e) == 0:
                continue
            if max_candidates is not None and len(idx_e) > max_candidates:
                rng = np.random.default_rng(
                    np.random.SeedSequence([seed, 101, vid_index, pos])
                )
                pick = np.sort(rng.choice(len(idx_e), size=max_candidates, replace=False))
                idx_e, idx_l = idx_e[pick], idx_l[pick]
            samples.append(
                StateChangeSample(
                    video_id=video.video_id,
                    earlier=earlier,
                    later=later,
                    idx_earlier=idx_e,
                    idx_later=idx_l,
                    delta_norm=earlier.err_norms[idx_e] - later.err_norms[idx_l],
                )
            )
        for pos, fc in per_frame.items():
            if fc is None or not fc.valid.any():
                continue
            if max_candidates is not None and len(fc.bindings) > max_candidates:
                rng = np.random.default_rng(
                    np.random.SeedSequence([seed, 202, vid_index, pos])
                )
                # keep only valid rows in the running for the similarity side
                pool = np.flatnonzero(fc.valid)
                take = min(max_candidates, len(pool))
                pick = np.sort(rng.choice(pool, size=take, replace=False))
                fc = FrameCandidates(
                    video_id=fc.video_id,
                    category_id=fc.category_id,
                    frame_pos=fc.frame_pos,
                    feature_ids=fc.feature_ids,
                    descriptors=fc.descriptors,
                    coords=fc.coords,
                    bindings=fc.bindings[pick],
                    err_norms=fc.err_norms[pick],
                    valid=fc.valid[pick],
                )
            frame_sets.append(fc)
    if not samples:
        raise EmptyDataset("no state-change samples could be prepared")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 303]))
    rng.shuffle(samples)
    rng.shuffle(frame_sets)
    return samples, frame_sets


def log_sigmoid(x):
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


# -- temporal-frame-order loss -------------------------------------------------


def _temporal_batch_arrays(batch: Sequence[StateChangeSample], alpha: float):
    """Pack samples into padded (B, C, 2, nodes, D) descriptors plus weights."""
    nodes = batch[0].earlier.bindings.shape[1]
    dim = batch[0].earlier.descriptors.shape[1]
    cmax = max(len(s.idx_earlier) for s in batch)
    B = len(batch)
    x = np.zeros((B, cmax, 2, nodes, dim))
    weights = np.zeros((B, cmax))
    mask = np.zeros((B, cmax))
    for b, sample in enumerate(batch):
        c = len(sample.idx_earlier)
        x[b, :c, 0] = sample.earlier.node_descriptors(sample.idx_earlier)
        x[b, :c, 1] = sample.later.node_descriptors(sample.idx_later)
        weights[b, :c] = -log_sigmoid(alpha * sample.delta_norm)
        mask[b, :c] = 1.0
    return x, weights, mask


def _encode_unique_rows(tensors, x_rows: np.ndarray, ctype, rounds):
    """Encode only the distinct descriptor stacks, then scatter back.

    Candidate descriptors repeat heavily (tracks carry the same descriptor
    across frames), so embedding unique rows once and indexing back is exact
    and much cheaper. Returns z with one row per input row.
    """
    rows, nodes, dim = x_rows.shape
    flat = np.ascontiguousarray(x_rows.reshape(rows, nodes * dim))
    _, first, inverse = np.unique(
        flat.view([("", flat.dtype)] * flat.shape[1]).ravel(),
        return_index=True,
        return_inverse=True,
    )
    unique = x_rows[first]
    z, _ = forward(tensors, Tensor(unique), ctype, rounds)
    return z.take(inverse, axis=0)


def temporal_loss_tensor(
    tensors: dict,
    batch_arrays,
    ctype: ConstraintType,
    rounds: int,
    temperature: float,
) -> Tensor:
    """Differentiable batched temporal-order loss.

    For each sample, candidates shared between the two frames are embedded in
    both, the two embeddings averaged, scored, and softmaxed; the loss is the
    selection-probability-weighted cost of each candidate's error change,
    -log sigmoid(alpha * (||e_earlier|| - ||e_later||)), averaged over samples.
    """
    x, weights, mask = batch_arrays
    B, cmax, _, nodes, dim = x.shape
    z = _encode_unique_rows(tensors, x.reshape(B * cmax * 2, nodes, dim), ctype, rounds)
    z = z.reshape(B, cmax, 2, z.data.shape[-1])
    z_avg = z.mean(axis=2)
    scores = score_tensor(tensors, z_avg.reshape(B * cmax, z_avg.data.shape[-1]))
    probs = masked_softmax(scores.reshape(B, cmax) / temperature, mask, axis=1)
    return (probs * Tensor(weights)).sum() / float(B)


def temporal_order_loss(
    params: TaskFunctionParams,
    sample,
    candidates_earlier,
    candidates_later,
    alpha: float,
    temperature: float = 1.0,
) -> float:
    """Temporal-order loss of one frame pair over explicit graph instances.

    Candidates are matched across the two frames by canonical key; one-sided
    candidates are skipped. Raises MissingCorrespondence when nothing matches.
    """
    from .geometry import error_vector
    from .model import is_degenerate

    by_key_later = {inst.canonical_key: inst for inst in candidates_later}
    matched = [
        (e, by_key_later[e.canonical_key])
        for e in candidates_earlier
        if e.canonical_key in by_key_later
        and not is_degenerate(e)
        and not is_degenerate(by_key_later[e.canonical_key])
    ]
    if not matched:
        raise MissingCorrespondence("no candidate is shared between the two frames")
    scale = error_norm_scale(params.ctype)
    delta = scale * np.array(
        [
            np.linalg.norm(error_vector(e)) - np.linalg.norm(error_vector(l))
            for e, l in matched
        ]
    )
    x = np.stack(
        [
            np.stack(
                [
                    np.stack([f.descriptor for f in e.bindings]),
                    np.stack([f.descriptor for f in l.bindings]),
                ]
            )
            for e, l in matched
        ]
    )  # (C, 2, nodes, D)
    weights = -log_sigmoid(alpha * delta)[None, :]
    arrays = (x[None], weights, np.ones((1, len(matched))))
    tensors = {k: Tensor(v) for k, v in params.arrays.items()}
    loss = temporal_loss_tensor(tensors, arrays, params.ctype, params.rounds, temperature)
    return float(loss.data)


# -- similarity loss -----------------------------------------------------------


def _similarity_batch_arrays(pairs: Sequence[tuple]):
    """Pack (frame_i, frame_j) FrameCandidates pairs into padded arrays."""
    nodes = pairs[0][0].bindings.shape[1]
    dim = pairs[0][0].descriptors.shape[1]
    cmax = max(max(len(a.bindings), len(b.bindings)) for a, b in pairs)
    B = len(pairs)
    x = np.zeros((B, 2, cmax, nodes, dim))
    mask = np.zeros((B, 2, cmax))
    for b, pair in enumerate(pairs):
        for side, fc in enumerate(pair):
            rows = np.flatnonzero(fc.valid)
            c = len(rows)
            x[b, side, :c] = fc.node_descriptors(rows)
            mask[b, side, :c] = 1.0
    return x, mask


def similarity_loss_tensor(
    tensors: dict,
    batch_arrays,
    ctype: ConstraintType,
    rounds: int,
    temperature: float,
) -> Tensor:
    """Differentiable batched similarity loss: minus mean cross-category cosine.

    Each frame's representation is the selection-probability-weighted average
    embedding over its candidates, a differentiable surrogate for the selected
    instance.
    """
    x, mask = batch_arrays
    B, _, cmax, nodes, dim = x.shape
    z = _encode_unique_rows(tensors, x.reshape(B * 2 * cmax, nodes, dim), ctype, rounds)
    d = z.data.shape[-1]
    z = z.reshape(B, 2, cmax, d)
    scores = score_tensor(tensors, z.reshape(B * 2 * cmax, d)).reshape(B, 2, cmax)
    probs = masked_softmax(scores / temperature, mask, axis=2)
    zbar = (probs.reshape(B, 2, cmax, 1) * z).sum(axis=2)  # (B, 2, d)
    norms = np.linalg.norm(zbar.data, axis=-1)
    if (norms < 1e-12).all(axis=-1).any():
        import warnings

        warnings.warn(
            "both weighted embeddings of a pair have near-zero norm", ZeroNormEmbedding
        )
    left = zbar.take([0], axis=1).reshape(B, d)
    right = zbar.take([1], axis=1).reshape(B, d)
    return -cosine_similarity(left, right, axis=-1).mean()


def similarity_loss(
    params: TaskFunctionParams, frame_pairs: Sequence[tuple], temperature: float = 1.0
) -> float:
    """Similarity loss over explicit (frame_i, frame_j) feature lists.

    Frames must come from different categories; candidates are enumerated
    exhaustively per frame.
    """
    if not frame_pairs:
        raise EmptyDataset("similarity loss needs at least one frame pair")
    packed = []
    for frame_i, frame_j in frame_pairs:
        packed.append(
            tuple(
                _frame_candidates_from_features(list(frame), params.ctype)
                for frame in (frame_i, frame_j)
            )
        )
    arrays = _similarity_batch_arrays(packed)
    tensors = {k: Tensor(v) for k, v in params.arrays.items()}
    loss = similarity_loss_tensor(tensors, arrays, params.ctype, params.rounds, temperature)
    return float(loss.data)


def _frame_candidates_from_features(
    features: Sequence[FeaturePoint], ctype: ConstraintType
) -> FrameCandidates:
    video = DemoVideo(
        video_id="adhoc", category_id="adhoc", frames=[list(features), list(features)]
    )
    fc = build_frame_candidates(video, 0, ctype, EnumerationLimits())
    if fc is None:
        raise EmptyDataset("frame has too few features for the constraint type")
    return fc


# -- optimization ----------------------------------------------------------------


def momentum_blend(
    params: TaskFunctionParams, params_sim: TaskFunctionParams, beta: float
) -> TaskFunctionParams:
    """Elementwise convex combination beta * params + (1 - beta) * params_sim."""
    if set(params.arrays) != set(params_sim.arrays):
        raise ShapeMismatch("parameter sets carry different array names")
    out = params.copy()
    for name, arr in params.arrays.items():
        other = params_sim.arrays[name]
        if other.shape != arr.shape:
            raise ShapeMismatch(f"{name}: {arr.shape} vs {other.shape}")
        out.arrays[name] = beta * arr + (1.0 - beta) * other
    return out


@dataclass
class TrainResult:
    params: TaskFunctionParams
    metrics: list = field(default_factory=list)  # dict rows per outer iteration
    aborted: bool = False
    checkpoints: list = field(default_factory=list)  # (outer_iter, params)


def _sgd_step(tensors: dict, grads: dict, lr: float):
    for name, t in tensors.items():
        t.data -= lr * grads[name]


def _global_grad_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))


def covgs_il(
    videos: Sequence[DemoVideo],
    ctype: ConstraintType,
    config: TrainConfig,
    descriptor_dim: Optional[int] = None,
) -> TrainResult:
    """Joint optimization of the task function over categorical demo videos.

    Alternates temporal-order steps on the selector with similarity steps on a
    clone, folding the clone back through a momentum blend each outer
    iteration. Deterministic for a fixed seed. Aborts with the last good
    parameters if a loss turns non-finite.
    """
    videos = list(videos)
    if not videos:
        raise EmptyDataset("no videos supplied")
    categories = sorted({v.category_id for v in videos})
    if len(categories) < 2:
        raise EmptyDataset("joint training needs videos from >= 2 categories")
    if descriptor_dim is None:
        descriptor_dim = videos[0].descriptor_dim

    samples, frame_sets = prepare_datasets(
        videos,
        ctype,
        stride=config.stride,
        seed=config.seed,
        max_candidates=config.max_candidates,
        enumeration_cap=config.enumeration_cap,
        ll_error_scale=config.ll_error_scale,
    )
    frames_by_category = {c: [] for c in categories}
    for fc in frame_sets:
        frames_by_category[fc.category_id].append(fc)
    if any(not fcs for fcs in frames_by_category.values()):
        raise EmptyDataset("a category contributed no usable frames")

    params = init_params(
        ctype,
        descriptor_dim=descriptor_dim,
        hidden_width=config.hidden_width,
        embedding_dim=config.embedding_dim,
        rounds=config.rounds,
        seed=config.seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 404]))
    result = TrainResult(params=params)

    def temporal_step(tensors):
        idx = rng.choice(len(samples), size=min(config.batch_size, len(samples)), replace=False)
        batch = [samples[i] for i in idx]
        arrays = _temporal_batch_arrays(batch, config.alpha)

        def loss_fn(ts, arr):
            return temporal_loss_tensor(ts, arr, ctype, config.rounds, config.temperature)

        loss = loss_fn(tensors, arrays)
        if not np.isfinite(loss.data).all():
            raise NonFiniteLoss(f"temporal loss became {loss.data}")
        loss.backward()
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}
        for t in tensors.values():
            t.grad = None
        _sgd_step(tensors, grads, config.lr_temporal)
        return float(loss.data), _global_grad_norm(grads)

    def similarity_step(tensors):
        pairs = []
        for _ in range(config.sim_batch_size):
            ci, cj = rng.choice(len(categories), size=2, replace=False)
            fi = frames_by_category[categories[ci]]
            fj = frames_by_category[categories[cj]]
            pairs.append((fi[rng.integers(len(fi))], fj[rng.integers(len(fj))]))
        arrays = _similarity_batch_arrays(pairs)
        loss = similarity_loss_tensor(tensors, arrays, ctype, config.rounds, config.temperature)
        if not np.isfinite(loss.data).all():
            raise NonFiniteLoss(f"similarity loss became {loss.data}")
        loss.backward()
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}
        for t in tensors.values():
            t.grad = None
        _sgd_step(tensors, grads, config.lr_sim)
        return float(loss.data)

    last_good = params.copy()
    for outer in range(config.outer_iters):
        t0 = time.perf_counter()
        try:
            tensors = params.to_tensors()
            temporal_loss_value, grad_norm = float("nan"), float("nan")
            for _ in range(config.temporal_steps):
                temporal_loss_value, grad_norm = temporal_step(tensors)
            params = _params_from_tensors(params, tensors)

            sim_loss_value = float("nan")
            if config.sim_steps > 0:
                sim_tensors = params.copy().to_tensors()
                for _ in range(config.sim_steps):
                    sim_loss_value = similarity_step(sim_tensors)
                params_sim = _params_from_tensors(params, sim_tensors)
                params = momentum_blend(params, params_sim, config.beta)
        except NonFiniteLoss:
            logger.exception("aborting at outer iteration %d; keeping last good", outer)
            result.params = last_good
            result.aborted = True
            return result

        last_good = params.copy()
        wall_ms = (time.perf_counter() - t0) * 1000.0
        result.metrics.append(
            {
                "outer_iter": outer,
                "temporal_loss": temporal_loss_value,
                "sim_loss": sim_loss_value,
                "grad_norm": grad_norm,
                "wall_ms": wall_ms,
            }
        )
        if config.checkpoint_interval and (outer + 1) % config.checkpoint_interval == 0:
            result.checkpoints.append((outer, params.copy()))
        if outer % 20 == 0:
            logger.info(
                "outer %d: temporal=%.4f sim=%.4f |g|=%.3f",
                outer,
                temporal_loss_value,
                sim_loss_value,
                grad_norm,
            )

    result.params = params
    return result


def _params_from_tensors(template: TaskFunctionParams, tensors: dict) -> TaskFunctionParams:
    out = template.copy()
    out.arrays = {k: t.data.copy() for k, t in tensors.items()}
    return out
