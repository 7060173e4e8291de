"""Homogeneous image-space geometry: points, lines, and constraint error functions.

Errors are measured in the image plane. A point-to-point constraint yields a
2-vector of coordinate differences in pixels, a line-to-line constraint a
scalar parallelism value in [-1, 1] (the sine of the angle between the two
normalized lines), and a point-to-line constraint the signed point-line
distance in pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import DegenerateLine

DEGENERACY_EPS = 1e-9


class ConstraintType(Enum):
    """The three basic geometric constraint types."""

    POINT_TO_POINT = "pp"
    LINE_TO_LINE = "ll"
    POINT_TO_LINE = "pl"

    @property
    def error_dim(self) -> int:
        return {"pp": 2, "ll": 1, "pl": 1}[self.value]

    @classmethod
    def from_string(cls, name: str) -> "ConstraintType":
        return cls(name.strip().lower())


@dataclass(frozen=True)
class PixelPoint:
    """A continuous pixel coordinate (u horizontal, v vertical)."""

    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError(f"pixel coordinates must be finite, got ({self.u}, {self.v})")

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=float)


@dataclass(frozen=True)
class HomogeneousLine:
    """A 2D line a*u + b*v + c = 0, canonicalized on construction.

    Stored so that a^2 + b^2 = 1 and the first nonzero of (a, b) is positive,
    which makes lines comparable regardless of how they were constructed.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        norm = math.hypot(self.a, self.b)
        if norm < DEGENERACY_EPS:
            raise DegenerateLine(f"line coefficients ({self.a}, {self.b}) are degenerate")
        a, b, c = self.a / norm, self.b / norm, self.c / norm
        if a < 0 or (a == 0 and b < 0):
            a, b, c = -a, -b, -c
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=float)

    def evaluate(self, p: PixelPoint) -> float:
        """Signed distance of ``p`` from the line (coefficients are unit-normal)."""
        return self.a * p.u + self.b * p.v + self.c


def line_from_points(p: PixelPoint, q: PixelPoint) -> HomogeneousLine:
    """Line through two pixel points, via the homogeneous cross product.

    Raises DegenerateLine when the points are closer than ``DEGENERACY_EPS``.
    """
    du, dv = q.u - p.u, q.v - p.v
    if math.hypot(du, dv) <= DEGENERACY_EPS:
        raise DegenerateLine(f"points {p} and {q} are too close to define a line")
    # (u1, v1, 1) x (u2, v2, 1)
    a = p.v - q.v
    b = q.u - p.u
    c = p.u * q.v - p.v * q.u
    return HomogeneousLine(a, b, c)


def pp_error(p: PixelPoint, q: PixelPoint) -> np.ndarray:
    """Coordinate difference between two points, [q - p]."""
    return np.array([q.u - p.u, q.v - p.v], dtype=float)


def ll_error(l1: HomogeneousLine, l2: HomogeneousLine) -> np.ndarray:
    """Parallelism value between two normalized lines.

    The third homogeneous component of l1 x l2; zero iff the lines are
    parallel, magnitude |sin(angle between the lines)|.
    """
    return np.array([l1.a * l2.b - l1.b * l2.a], dtype=float)


def pl_error(p: PixelPoint, l: HomogeneousLine) -> np.ndarray:
    """Signed distance from a point to a normalized line, in pixels."""
    return np.array([l.evaluate(p)], dtype=float)


def error_vector(instance) -> np.ndarray:
    """Geometric error of a bound graph instance.

    Dispatches on the instance's constraint type using the node-role
    convention of the graph module: PP binds (point, point); LL binds
    (line-1 endpoints, line-2 endpoints); PL binds (point, line endpoints).
    Raises DegenerateLine if a line's endpoints coincide.
    """
    ctype = instance.spec.ctype
    coords = [f.coords for f in instance.bindings]
    if ctype is ConstraintType.POINT_TO_POINT:
        return pp_error(coords[0], coords[1])
    if ctype is ConstraintType.LINE_TO_LINE:
        l1 = line_from_points(coords[0], coords[1])
        l2 = line_from_points(coords[2], coords[3])
        return ll_error(l1, l2)
    if ctype is ConstraintType.POINT_TO_LINE:
        return pl_error(coords[0], line_from_points(coords[1], coords[2]))
    raise ValueError(f"unknown constraint type {ctype!r}")


def batch_error_vectors(coords: np.ndarray, bindings: np.ndarray, ctype: ConstraintType):
    """Vectorized ``error_vector`` over many bindings of one constraint type.

    coords: (m, 2) pixel coordinates; bindings: (C, node_count) integer rows
    indexing ``coords``. Returns (errors, valid) where errors is (C, error_dim)
    and valid marks rows whose lines were constructible. Invalid rows carry
    zeros. Agrees with the scalar functions on valid rows.
    """
    coords = np.asarray(coords, dtype=float)
    bindings = np.asarray(bindings)
    n = bindings.shape[0]
    if ctype is ConstraintType.POINT_TO_POINT:
        e = coords[bindings[:, 1]] - coords[bindings[:, 0]]
        return e, np.ones(n, dtype=bool)
    if ctype is ConstraintType.LINE_TO_LINE:
        l1, ok1 = _batch_lines(coords[bindings[:, 0]], coords[bindings[:, 1]])
        l2, ok2 = _batch_lines(coords[bindings[:, 2]], coords[bindings[:, 3]])
        valid = ok1 & ok2
        e = (l1[:, 0] * l2[:, 1] - l1[:, 1] * l2[:, 0])[:, None]
        e[~valid] = 0.0
        return e, valid
    if ctype is ConstraintType.POINT_TO_LINE:
        l, ok = _batch_lines(coords[bindings[:, 1]], coords[bindings[:, 2]])
        pts = coords[bindings[:, 0]]
        e = (l[:, 0] * pts[:, 0] + l[:, 1] * pts[:, 1] + l[:, 2])[:, None]
        e[~ok] = 0.0
        return e, ok
    raise ValueError(f"unknown constraint type {ctype!r}")


def _batch_lines(p: np.ndarray, q: np.ndarray):
    """Canonicalized lines through point rows p and q; flags degenerate pairs."""
    a = p[:, 1] - q[:, 1]
    b = q[:, 0] - p[:, 0]
    c = p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]
    norm = np.hypot(a, b)
    valid = norm > DEGENERACY_EPS
    safe = np.where(valid, norm, 1.0)
    a, b, c = a / safe, b / safe, c / safe
    flip = (a < 0) | ((a == 0) & (b < 0))
    sign = np.where(flip, -1.0, 1.0)
    return np.stack([a * sign, b * sign, c * sign], axis=1), valid
