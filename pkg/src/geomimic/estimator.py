"""Scikit-learn style estimator facade over the constraint-selection pipeline.

ConstraintSelector wraps dataset preparation, joint training, and selection
behind fit/predict/transform with get_params/set_params, so the learnable
core composes with standard model-selection tooling. X is a list of
DemoVideo objects for fit/score and a list of frames (lists of FeaturePoint)
for predict/transform.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .evaluation import accuracy
from .geometry import ConstraintType
from .graphs import EnumerationLimits, enumerate_instances
from .model import encode, select
from .training import DemoVideo, TrainConfig, covgs_il


def check_videos(X):
    """Validate a fit/score input: DemoVideos with one descriptor dimension."""
    videos = list(X)
    if not videos:
        raise ValueError("expected a non-empty list of DemoVideo")
    for v in videos:
        if not isinstance(v, DemoVideo):
            raise TypeError(f"expected DemoVideo, got {type(v).__name__}")
    dims = {v.descriptor_dim for v in videos}
    if len(dims) != 1:
        raise ValueError(f"videos carry mixed descriptor dimensions {sorted(dims)}")
    return videos, dims.pop()


class ConstraintSelector(BaseEstimator):
    """Learns to select the task-relevant constraint instance of one type.

    Parameters mirror the training configuration; ``constraint`` names the
    constraint type ("pp", "ll", or "pl"). After ``fit`` the trained weights
    live in ``params_`` and selection state in ``metrics_``.
    """

    def __init__(
        self,
        constraint="pp",
        alpha=5.0,
        beta=0.9,
        outer_iters=60,
        temporal_steps=10,
        sim_steps=5,
        lr_temporal=1.0,
        lr_sim=0.1,
        batch_size=32,
        stride=4,
        temperature=1.0,
        max_candidates=128,
        hidden_width=32,
        embedding_dim=16,
        rounds=3,
        seed=0,
    ):
        self.constraint = constraint
        self.alpha = alpha
        self.beta = beta
        self.outer_iters = outer_iters
        self.temporal_steps = temporal_steps
        self.sim_steps = sim_steps
        self.lr_temporal = lr_temporal
        self.lr_sim = lr_sim
        self.batch_size = batch_size
        self.stride = stride
        self.temperature = temperature
        self.max_candidates = max_candidates
        self.hidden_width = hidden_width
        self.embedding_dim = embedding_dim
        self.rounds = rounds
        self.seed = seed

    def _ctype(self) -> ConstraintType:
        return ConstraintType.from_string(self.constraint)

    def _config(self) -> TrainConfig:
        return TrainConfig(
            alpha=self.alpha,
            beta=self.beta,
            outer_iters=self.outer_iters,
            temporal_steps=self.temporal_steps,
            sim_steps=self.sim_steps,
            lr_temporal=self.lr_temporal,
            lr_sim=self.lr_sim,
            batch_size=self.batch_size,
            sim_batch_size=self.batch_size,
            stride=self.stride,
            temperature=self.temperature,
            max_candidates=self.max_candidates,
            hidden_width=self.hidden_width,
            embedding_dim=self.embedding_dim,
            rounds=self.rounds,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        """Train on demonstration videos spanning at least two categories."""
        videos, _ = check_videos(X)
        result = covgs_il(videos, self._ctype(), self._config())
        self.params_ = result.params
        self.metrics_ = result.metrics
        self.aborted_ = result.aborted
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this ConstraintSelector has not been fitted yet")

    def predict(self, X):
        """Top-1 canonical key per frame; X is a list of frames."""
        self._check_fitted()
        keys = []
        for frame in X:
            candidates = enumerate_instances(list(frame), self._ctype(), EnumerationLimits())
            result = select(self.params_, candidates, p=1, temperature=self.temperature)
            keys.append(result.top[0].canonical_key)
        return keys

    def transform(self, X):
        """Embedding of the top-1 selection per frame, stacked (n_frames, d)."""
        self._check_fitted()
        rows = []
        for frame in X:
            candidates = enumerate_instances(list(frame), self._ctype(), EnumerationLimits())
            result = select(self.params_, candidates, p=1, temperature=self.temperature)
            rows.append(encode(self.params_, result.top[0]))
        return np.stack(rows)

    def score(self, X, y=None):
        """Mean selection accuracy over videos carrying ground truth."""
        self._check_fitted()
        videos, _ = check_videos(X)
        return float(np.mean([accuracy(self.params_, v, self._ctype()) for v in videos]))
