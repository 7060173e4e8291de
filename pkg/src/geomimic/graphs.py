"""Fixed constraint-graph topologies, candidate enumeration, and canonical keys.

Each constraint type has one fixed node/edge structure. Inner edges compose
feature points into a primitive (the two endpoints of a line); outer edges
relate primitives to each other. Instances that differ only by a graph
automorphism are the same candidate, identified by a shared canonical key.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import TooFewFeatures
from .geometry import ConstraintType, PixelPoint

#: Hard cap on instances enumerated from one frame before seeded subsampling.
DEFAULT_MAX_INSTANCES = 20_000


@dataclass(frozen=True, eq=False)
class FeaturePoint:
    """One detected image feature: a descriptor vector plus pixel coordinates."""

    id: int
    descriptor: np.ndarray
    coords: PixelPoint
    segment: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "descriptor", np.asarray(self.descriptor, dtype=float))
        if self.descriptor.ndim != 1:
            raise ValueError("descriptor must be a 1-D vector")


@dataclass(frozen=True)
class ConstraintGraphSpec:
    """Node count, typed edge lists, and automorphism group of one constraint type."""

    ctype: ConstraintType
    node_count: int
    inner_edges: tuple
    outer_edges: tuple
    automorphisms: tuple  # node permutations under which instances are equivalent

    def __post_init__(self):
        perms = {tuple(range(self.node_count))}
        for p in self.automorphisms:
            if sorted(p) != list(range(self.node_count)):
                raise ValueError(f"{p} is not a permutation of {self.node_count} nodes")
            perms.add(tuple(p))
        object.__setattr__(self, "automorphisms", tuple(sorted(perms)))


_PP_SPEC = ConstraintGraphSpec(
    ctype=ConstraintType.POINT_TO_POINT,
    node_count=2,
    inner_edges=(),
    outer_edges=((0, 1),),
    automorphisms=((0, 1), (1, 0)),
)

# Line-to-line: nodes (0,1) form one line, (2,3) the other. Outer edges are
# complete-bipartite between the lines, the unique 4-node layout whose
# automorphisms include swapping within either line and swapping the lines
# without merging the two lines into one clique.
_LL_SPEC = ConstraintGraphSpec(
    ctype=ConstraintType.LINE_TO_LINE,
    node_count=4,
    inner_edges=((0, 1), (2, 3)),
    outer_edges=((0, 2), (0, 3), (1, 2), (1, 3)),
    automorphisms=tuple(
        (line1[0], line1[1], line2[0], line2[1]) if not swap else (line2[0], line2[1], line1[0], line1[1])
        for line1 in ((0, 1), (1, 0))
        for line2 in ((2, 3), (3, 2))
        for swap in (False, True)
    ),
)

# Point-to-line: node 0 is the point, nodes (1,2) the line endpoints.
_PL_SPEC = ConstraintGraphSpec(
    ctype=ConstraintType.POINT_TO_LINE,
    node_count=3,
    inner_edges=((1, 2),),
    outer_edges=((0, 1), (0, 2)),
    automorphisms=((0, 1, 2), (0, 2, 1)),
)

_SPECS = {
    ConstraintType.POINT_TO_POINT: _PP_SPEC,
    ConstraintType.LINE_TO_LINE: _LL_SPEC,
    ConstraintType.POINT_TO_LINE: _PL_SPEC,
}


def spec_for(ctype: ConstraintType) -> ConstraintGraphSpec:
    """The fixed graph structure of one constraint type."""
    return _SPECS[ctype]


def canonical_key_for(spec: ConstraintGraphSpec, ids: Sequence[int]) -> tuple:
    """Minimum over all automorphisms of the tuple of bound feature ids."""
    ids = tuple(ids)
    return min(tuple(ids[i] for i in perm) for perm in spec.automorphisms)


@dataclass(frozen=True, eq=False)
class GraphInstance:
    """A graph spec with concrete features bound to its nodes."""

    spec: ConstraintGraphSpec
    bindings: tuple
    canonical_key: tuple = field(init=False)

    def __post_init__(self):
        bindings = tuple(self.bindings)
        if len(bindings) != self.spec.node_count:
            raise ValueError(
                f"expected {self.spec.node_count} bindings, got {len(bindings)}"
            )
        ids = [f.id for f in bindings]
        if len(set(ids)) != len(ids):
            raise ValueError(f"bound feature ids must be distinct, got {ids}")
        object.__setattr__(self, "bindings", bindings)
        object.__setattr__(self, "canonical_key", canonical_key_for(self.spec, ids))

    @property
    def feature_ids(self) -> tuple:
        return tuple(f.id for f in self.bindings)


def canonical_key(instance: GraphInstance) -> tuple:
    return instance.canonical_key


@dataclass(frozen=True)
class EnumerationLimits:
    """Cap and subsampling seed for per-frame instance enumeration."""

    max_instances: int = DEFAULT_MAX_INSTANCES
    seed: int = 0

    def __post_init__(self):
        if self.max_instances < 1:
            raise ValueError("max_instances must be positive")


def enumerate_bindings(
    feature_ids: np.ndarray,
    ctype: ConstraintType,
    limits: EnumerationLimits = EnumerationLimits(),
    segments: Optional[Sequence] = None,
    cross_segment_only: bool = False,
) -> np.ndarray:
    """Index rows (one per automorphism class) binding features to graph nodes.

    ``feature_ids`` orders the features; returned rows index into that order.
    Exhaustive when the count fits within ``limits``, otherwise uniformly
    subsampled with the limits' seed. Deterministic for fixed inputs.
    """
    spec = spec_for(ctype)
    m = len(feature_ids)
    if m < spec.node_count:
        raise TooFewFeatures(
            f"{ctype.value} needs {spec.node_count} features, frame has {m}"
        )
    order = np.argsort(np.asarray(feature_ids), kind="stable")

    rows = []
    if ctype is ConstraintType.POINT_TO_POINT:
        for i, j in itertools.combinations(order, 2):
            rows.append((i, j))
    elif ctype is ConstraintType.LINE_TO_LINE:
        pairs = list(itertools.combinations(order, 2))
        for (a, b), (c, d) in itertools.combinations(pairs, 2):
            if a != c and a != d and b != c and b != d:
                rows.append((a, b, c, d))
    elif ctype is ConstraintType.POINT_TO_LINE:
        for p in order:
            for a, b in itertools.combinations([i for i in order if i != p], 2):
                rows.append((p, a, b))
    else:
        raise ValueError(f"unknown constraint type {ctype!r}")

    bindings = np.array(rows, dtype=np.int64).reshape(len(rows), spec.node_count)

    if cross_segment_only and segments is not None:
        segs = list(segments)
        keep = [
            all(
                segs[row[i]] is None
                or segs[row[j]] is None
                or segs[row[i]] != segs[row[j]]
                for i, j in spec.outer_edges
            )
            for row in bindings
        ]
        bindings = bindings[np.array(keep, dtype=bool)]

    if len(bindings) > limits.max_instances:
        rng = np.random.default_rng(limits.seed)
        pick = np.sort(rng.choice(len(bindings), size=limits.max_instances, replace=False))
        bindings = bindings[pick]
    return bindings


def enumerate_instances(
    features: Sequence[FeaturePoint],
    ctype: ConstraintType,
    limits: EnumerationLimits = EnumerationLimits(),
    cross_segment_only: bool = False,
) -> list:
    """All graph instances of one constraint type over a frame's features.

    Yields one representative per automorphism class; no two returned
    instances share a canonical key.
    """
    features = list(features)
    ids = np.array([f.id for f in features], dtype=np.int64)
    segments = [f.segment for f in features]
    bindings = enumerate_bindings(
        ids, ctype, limits, segments=segments, cross_segment_only=cross_segment_only
    )
    spec = spec_for(ctype)
    return [GraphInstance(spec, tuple(features[i] for i in row)) for row in bindings]
