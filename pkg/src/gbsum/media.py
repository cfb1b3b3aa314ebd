"""Wave-speed fields and the Hamiltonian ``h(x, xi) = c(x)|xi|``.

All functions are vectorised: ``x`` and ``xi`` have shape ``(..., n)``.
Derivatives of ``c`` are analytic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GuardError

XI_MIN = 1e-8


@dataclass(frozen=True)
class Constant:
    c0: float = 1.0

    def __post_init__(self):
        if not self.c0 > 0:
            raise GuardError("media.positive", "constant speed must be positive")

    @property
    def c_min(self) -> float:
        return self.c0

    @property
    def c_max(self) -> float:
        return self.c0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.c0)

    def gradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        return np.zeros(x.shape[:-1] + (n, n))


@dataclass(frozen=True)
class SmoothBlend:
    """``c(x) = c0 + amplitude * exp(-|x|^2 / length^2)``."""

    c0: float = 1.0
    amplitude: float = 0.5
    length: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise GuardError("media.length", "length must be positive")
        if self.c0 <= 0 or (self.amplitude < 0 and self.c0 + self.amplitude <= 0):
            raise GuardError("media.positive", "speed would not stay positive")

    @property
    def c_min(self) -> float:
        return min(self.c0, self.c0 + self.amplitude)

    @property
    def c_max(self) -> float:
        return max(self.c0, self.c0 + self.amplitude)

    @property
    def flat_radius(self) -> float:
        """Radius beyond which ``c - c0`` is below ``1e-15 * amplitude``."""
        return 6.0 * self.length

    def _bump(self, x):
        return self.amplitude * np.exp(-np.sum(x * x, axis=-1) / self.length**2)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.c0 + self._bump(x)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return (-2.0 / self.length**2) * self._bump(x)[..., None] * x

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        L2 = self.length**2
        g = self._bump(x)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return g * (4.0 * outer / L2**2 - 2.0 * np.eye(n) / L2)


def velocity_from_spec(spec: dict):
    kind = spec.get("kind", "").lower()
    if kind == "constant":
        return Constant(float(spec.get("c0", 1.0)))
    if kind in ("smoothblend", "smooth_blend"):
        return SmoothBlend(
            float(spec.get("c0", 1.0)),
            float(spec.get("amplitude", 0.5)),
            float(spec.get("length", 1.0)),
        )
    raise GuardError("media.kind", f"unknown velocity kind {kind!r}")


def _xi_norm(xi, xi_min):
    nrm = np.linalg.norm(xi, axis=-1)
    if np.any(nrm < xi_min):
        raise GuardError("media.xi_min", f"|xi| = {float(np.min(nrm)):.3e} below {xi_min}")
    return nrm


def hamiltonian(vf, x, xi, xi_min: float = XI_MIN):
    """``c(x)|xi|``; refuses momenta shorter than ``xi_min``."""
    xi = np.asarray(xi, dtype=float)
    return vf.value(x) * _xi_norm(xi, xi_min)


def hessian_blocks(vf, x, xi, xi_min: float = XI_MIN):
    """Second derivatives of ``c(x)|xi|`` split into ``n x n`` blocks.

    Returns
    -------
    H11, H12, H21, H22 : ndarray
        ``d2h/dx2``, ``d2h/dx dxi`` (rows x, columns xi), its transpose, and
        ``d2h/dxi2``.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    nrm = _xi_norm(xi, xi_min)[..., None]
    n = xi.shape[-1]
    u = xi / nrm
    H11 = vf.hessian(x) * nrm[..., None]
    H12 = vf.gradient(x)[..., :, None] * u[..., None, :]
    H21 = np.swapaxes(H12, -1, -2)
    c = vf.value(x)[..., None, None]
    H22 = c * (np.eye(n) - u[..., :, None] * u[..., None, :]) / nrm[..., None]
    return H11, H12, H21, H22
