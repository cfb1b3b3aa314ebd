"""Convex domains: signed distance, outward normal and normal-field Jacobian.

Two strictly convex shapes are provided, an interval in one dimension and a
disc in two.  Both have closed-form distance functions, so boundary hits can
be located to rounding accuracy.  Every routine accepts points with shape
``(..., n)`` and is vectorised over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GuardError


def _as_points(dom, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dom.ndim == 1 and x.ndim == 0:
        x = x[None]
    if x.shape[-1] != dom.ndim:
        raise GuardError(
            "geometry.dimension",
            f"point of dimension {x.shape[-1]} given to a {dom.ndim}-d domain",
        )
    return x


@dataclass(frozen=True)
class Interval:
    """The open interval ``(left, right)``."""

    left: float
    right: float
    boundary_tol_rel: float = 1e-10

    ndim = 1

    def __post_init__(self):
        if not self.right > self.left:
            raise GuardError("geometry.interval", "need right > left")

    @property
    def diameter(self) -> float:
        return self.right - self.left

    @property
    def boundary_tol(self) -> float:
        return self.boundary_tol_rel * self.diameter

    def signed_distance(self, x) -> np.ndarray:
        x = _as_points(self, x)[..., 0]
        return np.maximum(self.left - x, x - self.right)

    def outward_normal(self, x, check: bool = True) -> np.ndarray:
        x = _as_points(self, x)
        if check:
            _check_on_boundary(self, x)
        mid = 0.5 * (self.left + self.right)
        return np.where(x >= mid, 1.0, -1.0)

    def normal_jacobian(self, x) -> np.ndarray:
        """Jacobian of the extended normal field, zero for an interval."""
        x = _as_points(self, x)
        return np.zeros(x.shape[:-1] + (1, 1))

    def boundary_samples(self, count: int | None = None):
        """Boundary points and their surface weights (counting measure)."""
        return np.array([[self.left], [self.right]]), np.ones(2)

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) < 0


@dataclass(frozen=True)
class Disc:
    """The open disc of given centre and radius in the plane."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    boundary_tol_rel: float = 1e-10

    ndim = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise GuardError("geometry.disc", "need radius > 0")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 2:
            raise GuardError("geometry.dimension", "disc centre must have 2 entries")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def boundary_tol(self) -> float:
        return self.boundary_tol_rel * self.diameter

    def signed_distance(self, x) -> np.ndarray:
        x = _as_points(self, x)
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius

    def outward_normal(self, x, check: bool = True) -> np.ndarray:
        x = _as_points(self, x)
        if check:
            _check_on_boundary(self, x)
        r = x - np.asarray(self.center)
        return r / np.linalg.norm(r, axis=-1, keepdims=True)

    def normal_jacobian(self, x) -> np.ndarray:
        """Jacobian of the normal field ``(x - c)/|x - c|``, on the boundary
        equal to ``(Id - nu nu^T)/radius``."""
        x = _as_points(self, x)
        r = x - np.asarray(self.center)
        rn = np.linalg.norm(r, axis=-1)
        nu = r / rn[..., None]
        eye = np.eye(2)
        return (eye - nu[..., :, None] * nu[..., None, :]) / rn[..., None, None]

    def boundary_samples(self, count: int = 256):
        """Equispaced boundary points with arc-length weights."""
        th = 2 * np.pi * np.arange(count) / count
        pts = np.asarray(self.center) + self.radius * np.stack(
            [np.cos(th), np.sin(th)], axis=-1
        )
        return pts, np.full(count, 2 * np.pi * self.radius / count)

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) < 0


def _check_on_boundary(dom, x):
    sd = np.abs(dom.signed_distance(x))
    if np.any(sd > dom.boundary_tol):
        raise GuardError(
            "geometry.not_on_boundary",
            f"point at distance {float(np.max(sd)):.3e} from the boundary",
        )


def signed_distance(dom, x):
    """Signed distance to the boundary, negative inside."""
    return dom.signed_distance(x)


def outward_normal(dom, x):
    """Unit outward normal at a boundary point."""
    return dom.outward_normal(x)


def domain_from_spec(spec: dict):
    """Build a domain from its JSON description."""
    kind = spec.get("kind", "").lower()
    tol = float(spec.get("boundary_tol_rel", 1e-10))
    if kind == "interval":
        return Interval(float(spec["left"]), float(spec["right"]), tol)
    if kind == "disc":
        return Disc(tuple(spec.get("center", (0.0, 0.0))), float(spec["radius"]), tol)
    raise GuardError("geometry.kind", f"unknown domain kind {kind!r}")
