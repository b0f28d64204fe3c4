"""Convex action sets with closed-form Euclidean projections."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError


class BodyKind(str, Enum):
    BALL = "ball"
    BOX = "box"


@dataclass(frozen=True)
class ConvexBody:
    """Origin-centred Ball(radius=size) or Box(half-width=size) in R^dim."""

    kind: BodyKind
    size: float
    dim: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigurationError("dimension must be >= 1")
        if self.size < 1:
            raise ConfigurationError("body must contain the unit ball (size >= 1)")

    @classmethod
    def ball(cls, dim: int, radius: float = 1.0) -> "ConvexBody":
        return cls(BodyKind.BALL, float(radius), int(dim))

    @classmethod
    def box(cls, dim: int, half_width: float = 1.0) -> "ConvexBody":
        return cls(BodyKind.BOX, float(half_width), int(dim))

    @property
    def diameter(self) -> float:
        if self.kind is BodyKind.BALL:
            return 2.0 * self.size
        return 2.0 * self.size * math.sqrt(self.dim)

    def half_extent(self) -> float:
        return self.size

    def project(self, x, scale: float = 1.0) -> np.ndarray:
        """Euclidean projection onto ``scale * K``."""
        x = np.asarray(x, dtype=float)
        lim = scale * self.size
        if self.kind is BodyKind.BALL:
            nrm = math.sqrt(float(x @ x))
            return x * (lim / nrm) if nrm > lim else x.copy()
        return np.clip(x, -lim, lim)

    def project_rows(self, X: np.ndarray, scale: float = 1.0) -> np.ndarray:
        lim = scale * self.size
        if self.kind is BodyKind.BALL:
            nrm = np.linalg.norm(X, axis=1)
            fac = np.where(nrm > lim, lim / np.where(nrm > 0, nrm, 1.0), 1.0)
            return X * fac[:, None]
        return np.clip(X, -lim, lim)

    def contains(self, x, scale: float = 1.0, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        lim = scale * self.size * (1.0 + tol) + tol
        if self.kind is BodyKind.BALL:
            return math.sqrt(float(x @ x)) <= lim
        return bool(np.all(np.abs(x) <= lim))

    def contains_rows(self, X: np.ndarray, scale: float = 1.0, tol: float = 1e-12) -> np.ndarray:
        lim = scale * self.size * (1.0 + tol) + tol
        if self.kind is BodyKind.BALL:
            return np.linalg.norm(X, axis=1) <= lim
        return np.all(np.abs(X) <= lim, axis=1)

    def linear_minimizer(self, v) -> np.ndarray:
        """argmin over K of ``<v, x>`` (0 for v = 0)."""
        v = np.asarray(v, dtype=float)
        if self.kind is BodyKind.BALL:
            nrm = math.sqrt(float(v @ v))
            return -self.size * v / nrm if nrm > 0 else np.zeros_like(v)
        return -self.size * np.sign(v)

    def linear_minimizer_rows(self, V: np.ndarray) -> np.ndarray:
        return np.array([self.linear_minimizer(v) for v in V]).reshape(V.shape)

    @property
    def code(self) -> int:
        """Integer tag used by the compiled kernels."""
        return 0 if self.kind is BodyKind.BALL else 1


def project_shrunk(body: ConvexBody, x, delta: float) -> np.ndarray:
    """Projection onto the shrunk set ``(1 - delta) * K``."""
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    return body.project(x, 1.0 - delta)
