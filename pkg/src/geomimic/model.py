"""Task function: graph encoder and instance selector with trainable weights.

The encoder embeds a bound constraint graph from its node descriptors alone
(coordinates never enter), using typed message passing: inner and outer edges
carry distinct message transforms, messages are aggregated by summation, and
node states are updated by a GRU cell. Sum aggregation plus shared transforms
make the embedding invariant under the graph's automorphisms by construction.
The selector scores an embedding's task relevance; a softmax over candidate
scores gives selection probabilities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor, masked_softmax
from .exceptions import DimensionMismatch, NoValidCandidates, NonFiniteLoss
from .geometry import ConstraintType, error_vector
from .exceptions import DegenerateLine
from .graphs import GraphInstance, spec_for
from .io import atomic_write_text

MODEL_FORMAT = "geomimic-model"
MODEL_FORMAT_VERSION = 1

DEFAULT_DESCRIPTOR_DIM = 16
DEFAULT_HIDDEN_WIDTH = 32
DEFAULT_EMBEDDING_DIM = 16
DEFAULT_ROUNDS = 3


@dataclass
class TaskFunctionParams:
    """All trainable weights of one constraint type's encoder and selector."""

    ctype: ConstraintType
    descriptor_dim: int
    hidden_width: int
    embedding_dim: int
    rounds: int
    arrays: dict = field(default_factory=dict)

    def expected_shapes(self) -> dict:
        D, H, d = self.descriptor_dim, self.hidden_width, self.embedding_dim
        return {
            "node_proj_w": (D, H),
            "node_proj_b": (H,),
            "msg_inner_w": (H, H),
            "msg_outer_w": (H, H),
            "gru_wr": (H, H),
            "gru_wz": (H, H),
            "gru_wn": (H, H),
            "gru_ur": (H, H),
            "gru_uz": (H, H),
            "gru_un": (H, H),
            "gru_br": (H,),
            "gru_bz": (H,),
            "gru_bn": (H,),
            "readout_w": (H, d),
            "readout_b": (d,),
            "score_w1": (d, d),
            "score_b1": (d,),
            "score_w2": (d, 1),
            "score_b2": (1,),
        }

    def validate(self):
        expected = self.expected_shapes()
        if set(self.arrays) != set(expected):
            raise DimensionMismatch(
                f"parameter names {sorted(self.arrays)} != expected {sorted(expected)}"
            )
        for name, shape in expected.items():
            arr = self.arrays[name]
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")

    def copy(self) -> "TaskFunctionParams":
        return TaskFunctionParams(
            ctype=self.ctype,
            descriptor_dim=self.descriptor_dim,
            hidden_width=self.hidden_width,
            embedding_dim=self.embedding_dim,
            rounds=self.rounds,
            arrays={k: v.copy() for k, v in self.arrays.items()},
        )

    def to_tensors(self) -> dict:
        return {k: Tensor(v.copy(), requires_grad=True) for k, v in self.arrays.items()}


def init_params(
    ctype: ConstraintType,
    descriptor_dim: int = DEFAULT_DESCRIPTOR_DIM,
    hidden_width: int = DEFAULT_HIDDEN_WIDTH,
    embedding_dim: int = DEFAULT_EMBEDDING_DIM,
    rounds: int = DEFAULT_ROUNDS,
    seed: int = 0,
) -> TaskFunctionParams:
    """Seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization."""
    params = TaskFunctionParams(
        ctype=ctype,
        descriptor_dim=descriptor_dim,
        hidden_width=hidden_width,
        embedding_dim=embedding_dim,
        rounds=rounds,
    )
    rng = np.random.default_rng(np.random.SeedSequence([seed, _CTYPE_SALT[ctype]]))

    def fan_in(name):  # biases share their layer's weight bound
        if name.startswith("node_proj"):
            return descriptor_dim
        if name.startswith("score"):
            return embedding_dim
        if name.startswith("readout"):
            return hidden_width
        return hidden_width  # message and GRU transforms

    for name, shape in params.expected_shapes().items():
        bound = 1.0 / np.sqrt(fan_in(name))
        params.arrays[name] = rng.uniform(-bound, bound, size=shape)
    params.validate()
    return params


_CTYPE_SALT = {
    ConstraintType.POINT_TO_POINT: 1,
    ConstraintType.LINE_TO_LINE: 2,
    ConstraintType.POINT_TO_LINE: 3,
}


def _adjacency(ctype: ConstraintType):
    spec = spec_for(ctype)
    n = spec.node_count
    inner = np.zeros((n, n))
    outer = np.zeros((n, n))
    for i, j in spec.inner_edges:
        inner[i, j] = inner[j, i] = 1.0
    for i, j in spec.outer_edges:
        outer[i, j] = outer[j, i] = 1.0
    return inner, outer


def forward(tensors: dict, x: Tensor, ctype: ConstraintType, rounds: int):
    """Differentiable encoder + scorer over a batch of bound graphs.

    x: (B, node_count, D) node descriptors. Returns (z, scores) where z is
    (B, embedding_dim) and scores is (B,).
    """
    a_inner, a_outer = _adjacency(ctype)
    a_inner_t, a_outer_t = Tensor(a_inner), Tensor(a_outer)

    h = (x @ tensors["node_proj_w"] + tensors["node_proj_b"]).tanh()
    for _ in range(rounds):
        msg = (a_inner_t @ h) @ tensors["msg_inner_w"] + (a_outer_t @ h) @ tensors["msg_outer_w"]
        reset = (msg @ tensors["gru_wr"] + h @ tensors["gru_ur"] + tensors["gru_br"]).sigmoid()
        update = (msg @ tensors["gru_wz"] + h @ tensors["gru_uz"] + tensors["gru_bz"]).sigmoid()
        cand = (msg @ tensors["gru_wn"] + (reset * h) @ tensors["gru_un"] + tensors["gru_bn"]).tanh()
        h = (1.0 - update) * cand + update * h

    pooled = h.mean(axis=1)
    z = pooled @ tensors["readout_w"] + tensors["readout_b"]
    scores = score_tensor(tensors, z)
    return z, scores


def score_tensor(tensors: dict, z: Tensor) -> Tensor:
    hidden = (z @ tensors["score_w1"] + tensors["score_b1"]).tanh()
    out = hidden @ tensors["score_w2"] + tensors["score_b2"]
    return out.reshape(out.data.shape[:-1])


def encode_batch(params: TaskFunctionParams, descriptors: np.ndarray):
    """Embeddings and scores for stacked candidate descriptors (B, nodes, D)."""
    descriptors = np.asarray(descriptors, dtype=float)
    if descriptors.ndim != 3 or descriptors.shape[-1] != params.descriptor_dim:
        raise DimensionMismatch(
            f"descriptors shape {descriptors.shape} does not match "
            f"(B, {spec_for(params.ctype).node_count}, {params.descriptor_dim})"
        )
    if descriptors.shape[1] != spec_for(params.ctype).node_count:
        raise DimensionMismatch(
            f"expected {spec_for(params.ctype).node_count} nodes, got {descriptors.shape[1]}"
        )
    tensors = {k: Tensor(v) for k, v in params.arrays.items()}
    z, scores = forward(tensors, Tensor(descriptors), params.ctype, params.rounds)
    return z.data, scores.data


def encode(params: TaskFunctionParams, instance: GraphInstance) -> np.ndarray:
    """Embedding z of one bound instance (descriptors only; coords never enter)."""
    x = np.stack([f.descriptor for f in instance.bindings])[None, :, :]
    z, _ = encode_batch(params, x)
    return z[0]


def score(params: TaskFunctionParams, z: np.ndarray) -> float:
    """Task-relevance score of an embedding; higher is more relevant."""
    z = np.asarray(z, dtype=float)
    if z.shape != (params.embedding_dim,):
        raise DimensionMismatch(f"embedding shape {z.shape} != ({params.embedding_dim},)")
    tensors = {k: Tensor(v) for k, v in params.arrays.items()}
    return float(score_tensor(tensors, Tensor(z[None, :])).data[0])


@dataclass
class SelectionResult:
    """Scores, softmax probabilities, and the top-p candidates of one frame."""

    instances: tuple
    scores: np.ndarray  # -inf for degenerate candidates
    probabilities: np.ndarray  # exactly 0 for degenerate candidates
    top: list


def is_degenerate(instance: GraphInstance) -> bool:
    try:
        error_vector(instance)
    except DegenerateLine:
        return True
    return False


def select(
    params: TaskFunctionParams,
    candidates: Sequence[GraphInstance],
    p: int = 1,
    temperature: float = 1.0,
) -> SelectionResult:
    """Rank candidates and select the top p by score.

    Degenerate candidates carry probability 0 and are never selected. Ties
    break by ascending canonical key, keeping selection deterministic.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    candidates = list(candidates)
    valid = [i for i, inst in enumerate(candidates) if not is_degenerate(inst)]
    if not valid:
        raise NoValidCandidates(f"no valid candidates among {len(candidates)}")

    x = np.stack(
        [np.stack([f.descriptor for f in candidates[i].bindings]) for i in valid]
    )
    _, raw = encode_batch(params, x)

    scores = np.full(len(candidates), -np.inf)
    scores[valid] = raw
    probabilities = np.zeros(len(candidates))
    logits = raw / temperature
    e = np.exp(logits - logits.max())
    probabilities[valid] = e / e.sum()

    order = sorted(valid, key=lambda i: (-probabilities[i], candidates[i].canonical_key))
    top = [candidates[i] for i in order[: min(p, len(valid))]]
    return SelectionResult(
        instances=tuple(candidates), scores=scores, probabilities=probabilities, top=top
    )


def gradient(params: TaskFunctionParams, loss_fn, batch) -> dict:
    """Exact reverse-mode gradients of a scalar loss over every parameter array.

    ``loss_fn(tensors, batch)`` must build the loss from the given parameter
    tensors. Parameters the loss never touches get zero gradients.
    """
    tensors = params.to_tensors()
    loss = loss_fn(tensors, batch)
    if not np.isfinite(loss.data).all():
        raise NonFiniteLoss(f"loss evaluated to {loss.data}")
    loss.backward()
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in tensors.items()
    }


# -- persistence ------------------------------------------------------------


def model_to_dict(models: dict) -> dict:
    entries = {}
    for ctype, params in models.items():
        params.validate()
        entries[ctype.value] = {
            "ctype": ctype.value,
            "descriptor_dim": params.descriptor_dim,
            "hidden_width": params.hidden_width,
            "embedding_dim": params.embedding_dim,
            "rounds": params.rounds,
            "arrays": {k: v.tolist() for k, v in sorted(params.arrays.items())},
        }
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "entries": entries,
    }


def save_model(path, models: dict):
    """Write task-function parameters per constraint type as versioned JSON."""
    atomic_write_text(path, json.dumps(model_to_dict(models), indent=1, sort_keys=True))


def load_model(path) -> dict:
    """Read a model file, rejecting unknown versions and mismatched shapes."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} file: {path}")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {doc.get('format_version')!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    models = {}
    for key, entry in doc["entries"].items():
        ctype = ConstraintType.from_string(entry["ctype"])
        params = TaskFunctionParams(
            ctype=ctype,
            descriptor_dim=int(entry["descriptor_dim"]),
            hidden_width=int(entry["hidden_width"]),
            embedding_dim=int(entry["embedding_dim"]),
            rounds=int(entry["rounds"]),
            arrays={k: np.asarray(v, dtype=float) for k, v in entry["arrays"].items()},
        )
        params.validate()
        models[ctype] = params
    return models
