"""Oriented bounding boxes from principal component analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError


@dataclass(frozen=True)
class OrientedBoundingBox:
    """Box given by center, orthonormal axes (rows) and half extents.

    The axes come from PCA of the point covariance, so the box is tight
    along those directions but is a heuristic: its volume may exceed the
    axis-aligned bounding box for adversarial point sets.
    """

    center: np.ndarray
    axes: np.ndarray  # (3, 3), rows are unit axes, right-handed
    half_extents: np.ndarray  # (3,), nonnegative

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        local = (np.asarray(points, dtype=np.float64) - self.center) @ self.axes.T
        return (np.abs(local) <= self.half_extents + tol).all(axis=1)

    def corners(self) -> np.ndarray:
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=np.float64,
        )
        return self.center + (signs * self.half_extents) @ self.axes


def compute_obb(points) -> OrientedBoundingBox:
    """PCA-based oriented bounding box of a 3D point set."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise PreconditionError("compute_obb needs at least one point")
    mean = p.mean(axis=0)
    centered = p - mean
    cov = centered.T @ centered / len(p)
    _, vecs = np.linalg.eigh(cov)
    axes = vecs.T[::-1].copy()  # rows, descending variance
    if np.linalg.det(axes) < 0:
        axes[2] = -axes[2]
    local = centered @ axes.T
    lo = local.min(axis=0)
    hi = local.max(axis=0)
    center = mean + ((lo + hi) / 2) @ axes
    return OrientedBoundingBox(
        center=center, axes=axes, half_extents=(hi - lo) / 2
    )
