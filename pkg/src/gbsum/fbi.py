"""FBI transform pair, smooth cutoffs and frequency truncation of data.

The transform used throughout is

    T a(y, eta) = c_n eps^(-3n/4) int a(x) exp(i eta.(y - x)/eps - |y - x|^2/(2 eps)) dx,

with ``c_n = 2^(-n/2) pi^(-3n/4)``.  It maps ``L^2(R^n)`` isometrically into
``L^2(R^2n)`` and its adjoint inverts it.  Since the kernel factorises over
coordinates, the n-dimensional transform is applied one axis at a time.

Quadrature is the trapezoid rule on uniform grids.  Phase-space ``y`` nodes
are required to sit on the spatial grid (``Delta y`` an integer multiple of
``Delta x``), so the kernel only depends on the integer offset between an
``x`` node and a ``y`` node and can be tabulated once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GuardError

WINDOW = 8.0  # Gaussian window half-width in units of sqrt(eps)


# ----------------------------------------------------------------------------
# smooth bumps


def smooth_step(s):
    """C-infinity step: 1 for ``s <= 0``, 0 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)
    a = _f(1.0 - s)
    b = _f(s)
    return a / (a + b)


def smooth_step_derivative(s):
    s = np.asarray(s, dtype=float)
    a, b = _f(1.0 - s), _f(s)
    da, db = -_df(1.0 - s), _df(s)
    return (da * b - a * db) / (a + b) ** 2


def _f(u):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)


def _df(u):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        uu = np.where(u > 0, u, 1.0)
        return np.where(u > 0, np.exp(-1.0 / uu) / uu**2, 0.0)


def bump_chi(r: float, x):
    """Radial bump: 1 on ``|x| <= r/2``, 0 on ``|x| >= r``.

    ``x`` is a scalar (taken as ``|x|``) or an array of shape ``(..., n)``.
    """
    x = np.asarray(x, dtype=float)
    rad = np.abs(x) if x.ndim == 0 else np.linalg.norm(x, axis=-1)
    return smooth_step((rad - 0.5 * r) / (0.5 * r))


def bump_chi_grad(r: float, x):
    """Gradient of :func:`bump_chi` with respect to ``x`` (shape of ``x``)."""
    x = np.asarray(x, dtype=float)
    rad = np.linalg.norm(x, axis=-1)
    ds = smooth_step_derivative((rad - 0.5 * r) / (0.5 * r)) / (0.5 * r)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(rad[..., None] > 0, x / np.where(rad > 0, rad, 1.0)[..., None], 0.0)
    return ds[..., None] * unit


def ramp(x, full: float, zero: float):
    """Smooth function equal to 1 for ``x <= full`` and 0 for ``x >= zero``."""
    return smooth_step((np.asarray(x, dtype=float) - full) / (zero - full))


# ----------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class Axis:
    """Uniform grid ``start + step * arange(count)``."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if self.count < 2 or not self.step > 0:
            raise GuardError("fbi.grid", "an axis needs count >= 2 and positive step")

    @classmethod
    def span(cls, lo: float, hi: float, step: float) -> "Axis":
        n = int(np.ceil((hi - lo) / step - 1e-9)) + 1
        return cls(lo, step, max(n, 2))

    @property
    def nodes(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.count, self.step)
        w[0] = w[-1] = 0.5 * self.step
        return w


def _outer_weights(axes):
    w = np.ones(())
    for ax in axes:
        w = np.multiply.outer(w, ax.weights)
    return w


@dataclass(frozen=True)
class SpatialGrid:
    axes: tuple

    @classmethod
    def uniform(cls, lo, hi, step) -> "SpatialGrid":
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        step = np.broadcast_to(np.atleast_1d(step), lo.shape)
        return cls(tuple(Axis.span(a, b, s) for a, b, s in zip(lo, hi, step)))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.count for a in self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a.step for a in self.axes])

    @property
    def weights(self) -> np.ndarray:
        return _outer_weights(self.axes)

    def points(self) -> np.ndarray:
        """Coordinates, shape ``shape + (ndim,)``."""
        mesh = np.meshgrid(*[a.nodes for a in self.axes], indexing="ij")
        return np.stack(mesh, axis=-1)

    def check_resolution(self, eps: float, eta_max: float):
        """Refuse grids that cannot resolve ``exp(i eta x / eps)``."""
        if np.max(self.spacing) > eps / (8.0 * eta_max) * (1 + 1e-9):
            raise GuardError(
                "fbi.resolution",
                f"dx={np.max(self.spacing):.3e} exceeds eps/(8 eta_max)={eps / (8 * eta_max):.3e}",
            )

    def subsample(self, q: int) -> "SpatialGrid":
        return SpatialGrid(tuple(Axis(a.start, a.step * q, (a.count - 1) // q + 1) for a in self.axes))


@dataclass
class SpatialField:
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise GuardError("fbi.shape", "field values do not match grid shape")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.weights * np.abs(self.values) ** 2)))

    def inner(self, other: "SpatialField") -> complex:
        return complex(np.sum(self.grid.weights * self.values * np.conj(other.values)))

    def __add__(self, other):
        return SpatialField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return SpatialField(self.grid, self.values - other.values)

    def scaled(self, s) -> "SpatialField":
        return SpatialField(self.grid, self.values * s)

    def subsample(self, q: int) -> "SpatialField":
        sl = tuple(slice(None, None, q) for _ in range(self.grid.ndim))
        return SpatialField(self.grid.subsample(q), self.values[sl])

    @classmethod
    def zeros(cls, grid: SpatialGrid) -> "SpatialField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Product grid of ``y`` and ``eta`` axes; values are stored with shape
    ``(Ny_1, ..., Ny_n, Neta_1, ..., Neta_n)``."""

    y_axes: tuple
    eta_axes: tuple

    @property
    def ndim(self) -> int:
        return len(self.y_axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.count for a in self.y_axes) + tuple(a.count for a in self.eta_axes)

    @property
    def weights(self) -> np.ndarray:
        return _outer_weights(self.y_axes + self.eta_axes)

    def check(self, eps: float):
        lim = np.sqrt(eps) / 4.0 * (1 + 1e-9)
        for ax in self.y_axes + self.eta_axes:
            if ax.step > lim:
                raise GuardError(
                    "fbi.phase_resolution",
                    f"phase-space spacing {ax.step:.3e} exceeds sqrt(eps)/4={lim:.3e}",
                )

    def nodes(self):
        """Flattened node coordinates ``(y, eta)``, each of shape (N, n)."""
        axes = [a.nodes for a in self.y_axes + self.eta_axes]
        mesh = np.meshgrid(*axes, indexing="ij")
        n = self.ndim
        y = np.stack([m.ravel() for m in mesh[:n]], axis=-1)
        eta = np.stack([m.ravel() for m in mesh[n:]], axis=-1)
        return y, eta

    @classmethod
    def aligned(cls, xgrid: SpatialGrid, eps: float, y_lo, y_hi, eta_lo, eta_hi,
                refine: float = 1.0) -> "PhaseSpaceGrid":
        """Grid with spacing at most ``sqrt(eps)/(4 refine)`` whose ``y`` nodes
        lie on ``xgrid``."""
        target = np.sqrt(eps) / (4.0 * refine)
        y_lo, y_hi = np.atleast_1d(y_lo), np.atleast_1d(y_hi)
        eta_lo, eta_hi = np.atleast_1d(eta_lo), np.atleast_1d(eta_hi)
        y_axes, eta_axes = [], []
        for d, ax in enumerate(xgrid.axes):
            q = max(1, int(np.floor(target / ax.step + 1e-9)))
            dy = q * ax.step
            j0 = int(np.floor((y_lo[d] - ax.start) / dy))
            j1 = int(np.ceil((y_hi[d] - ax.start) / dy))
            y_axes.append(Axis(ax.start + j0 * dy, dy, max(j1 - j0 + 1, 2)))
            eta_axes.append(Axis.span(eta_lo[d], eta_hi[d], target))
        return cls(tuple(y_axes), tuple(eta_axes))


@dataclass
class PhaseSpaceField:
    grid: PhaseSpaceGrid
    values: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.weights * np.abs(self.values) ** 2)))

    def inner(self, other: "PhaseSpaceField") -> complex:
        return complex(np.sum(self.grid.weights * self.values * np.conj(other.values)))


def fbi_constant(n: int) -> float:
    return 2.0 ** (-n / 2.0) * np.pi ** (-3.0 * n / 4.0)


# ----------------------------------------------------------------------------
# one-axis kernels


def _alignment(xax: Axis, yax: Axis):
    q = yax.step / xax.step
    j0 = (yax.start - xax.start) / xax.step
    if abs(q - round(q)) > 1e-6 or abs(j0 - round(j0)) > 1e-6:
        raise GuardError("fbi.alignment", "phase-space y nodes must lie on the spatial grid")
    return int(round(q)), int(round(j0))


def _check_kernel_resolution(xax: Axis, etas: np.ndarray, eps: float):
    # at least four samples per period of the kernel exp(i eta x / eps)
    if xax.step * np.max(np.abs(etas)) / eps > 0.5 * np.pi:
        raise GuardError("fbi.resolution", "spatial grid undersamples the FBI kernel")


def _kernel_tables(xax: Axis, etas: np.ndarray, eps: float):
    M = int(np.ceil(WINDOW * np.sqrt(eps) / xax.step))
    s = xax.step * np.arange(-M, M + 1)
    gauss = np.exp(-(s**2) / (2 * eps))
    E = np.exp(1j * np.outer(s, etas) / eps)  # (2M+1, Neta)
    return M, gauss, E


def _forward_axis(arr, xax: Axis, yax: Axis, etas, eps):
    """Transform the last axis of ``arr`` into two trailing axes (y, eta)."""
    q, j0 = _alignment(xax, yax)
    M, gauss, E = _kernel_tables(xax, etas, eps)
    Nx = xax.count
    lead = arr.shape[:-1]
    flat = arr.reshape(-1, Nx) * xax.weights
    pad = np.zeros((flat.shape[0], Nx + 2 * M + 2 * abs(j0) + q * yax.count + 2), dtype=complex)
    off = M + abs(j0) + 1
    pad[:, off:off + Nx] = flat
    iy = j0 + q * np.arange(yax.count)
    # x index = iy - m for offset m in [-M, M], so y - x = m * dx
    idx = off + iy[:, None] - np.arange(-M, M + 1)[None, :]
    out = np.empty((flat.shape[0], yax.count, len(etas)), dtype=complex)
    for r in range(flat.shape[0]):
        G = pad[r][idx] * gauss
        out[r] = G @ E
    return out.reshape(lead + (yax.count, len(etas)))


def _adjoint_axis(arr, xax: Axis, yax: Axis, etas, eta_w, eps):
    """Map two trailing axes (y, eta) of ``arr`` back to one x axis."""
    q, j0 = _alignment(xax, yax)
    M, gauss, E = _kernel_tables(xax, etas, eps)
    Nx = xax.count
    lead = arr.shape[:-2]
    flat = arr.reshape((-1, yax.count, len(etas)))
    iy = j0 + q * np.arange(yax.count)
    ix = iy[:, None] + np.arange(-M, M + 1)[None, :]
    keep = (ix >= 0) & (ix < Nx)
    ixk = ix[keep]
    out = np.zeros((flat.shape[0], Nx), dtype=complex)
    wy = yax.weights[:, None]
    for r in range(flat.shape[0]):
        H = (flat[r] * eta_w) @ E.T  # (Ny, 2M+1), x - y = m dx
        H = H * gauss * wy
        h = H[keep]
        out[r] = np.bincount(ixk, weights=h.real, minlength=Nx) + 1j * np.bincount(
            ixk, weights=h.imag, minlength=Nx)
    return out.reshape(lead + (Nx,))


def _spectral_axis(arr, xax: Axis, yax: Axis, etas, eps):
    """Same as :func:`_forward_axis` through the Fourier transform of ``arr``."""
    M = int(np.ceil(WINDOW * np.sqrt(eps) / xax.step))
    Nx = xax.count
    ys = yax.nodes
    span = max(ys.max(), xax.stop) - min(ys.min(), xax.start)
    nfft = int(2 ** np.ceil(np.log2(2 * (span / xax.step + 2 * M) + 8)))
    lead = arr.shape[:-1]
    flat = arr.reshape(-1, Nx) * (xax.weights / xax.step)
    xi = 2 * np.pi * np.fft.fftfreq(nfft, d=xax.step)
    order = np.argsort(xi)
    xi = xi[order]
    dxi = 2 * np.pi / (nfft * xax.step)
    Fu = np.fft.fft(flat, n=nfft, axis=-1)[:, order] * xax.step * np.exp(-1j * xi * xax.start)
    out = np.empty((flat.shape[0], yax.count, len(etas)), dtype=complex)
    half = WINDOW * np.sqrt(eps) / eps
    for k, eta in enumerate(etas):
        sel = np.abs(xi - eta / eps) <= half
        g = Fu[:, sel] * np.exp(-((eta - eps * xi[sel]) ** 2) / (2 * eps))
        out[:, :, k] = g @ np.exp(1j * np.outer(xi[sel], ys)) * dxi
    # per-axis factor relative to the c_1 eps^(-3/4) applied by the caller
    pref = (2 * np.pi) ** -0.5 * np.sqrt(eps)
    return out.reshape(lead + (yax.count, len(etas))) * pref


def _apply_forward(a: SpatialField, eps, grid: PhaseSpaceGrid, axis_op):
    xg = a.grid
    n = xg.ndim
    if grid.ndim != n:
        raise GuardError("fbi.dimension", "grid dimensions differ")
    grid.check(eps)
    arr = a.values
    # transform the last axis, then rotate the next spatial axis to the end
    for d in reversed(range(n)):
        _check_kernel_resolution(xg.axes[d], grid.eta_axes[d].nodes, eps)
        arr = axis_op(arr, xg.axes[d], grid.y_axes[d], grid.eta_axes[d].nodes, eps)
        if d > 0:
            arr = np.moveaxis(arr, d - 1, -1)
    # arr axes: (y_{n-1}, eta_{n-1}, y_{n-2}, eta_{n-2}, ..., y_0, eta_0)
    perm_y = [2 * (n - 1 - d) for d in range(n)]
    perm_eta = [2 * (n - 1 - d) + 1 for d in range(n)]
    arr = np.transpose(arr, perm_y + perm_eta)
    return PhaseSpaceField(grid, arr * (fbi_constant(n) * eps ** (-0.75 * n)))


def fbi_forward(a: SpatialField, eps: float, grid: PhaseSpaceGrid) -> PhaseSpaceField:
    """``T_eps a`` on the nodes of ``grid`` by windowed trapezoid quadrature."""
    return _apply_forward(a, eps, grid, _forward_axis)


def fbi_forward_spectral(a: SpatialField, eps: float, grid: PhaseSpaceGrid) -> PhaseSpaceField:
    """``T_eps a`` through the Fourier transform of ``a`` and a Gaussian
    weight in frequency; an independent route to :func:`fbi_forward`."""
    return _apply_forward(a, eps, grid, _spectral_axis)


def fbi_adjoint(f: PhaseSpaceField, eps: float, xgrid: SpatialGrid) -> SpatialField:
    """``T*_eps f`` on ``xgrid``."""
    grid = f.grid
    n = grid.ndim
    grid.check(eps)
    arr = f.values
    # reorder to (y_0, eta_0, y_1, eta_1, ...)
    perm = []
    for d in range(n):
        perm += [d, n + d]
    arr = np.transpose(arr, perm)
    for d in reversed(range(n)):
        etas = grid.eta_axes[d].nodes
        _check_kernel_resolution(xgrid.axes[d], etas, eps)
        arr = _adjoint_axis(arr, xgrid.axes[d], grid.y_axes[d], etas,
                            grid.eta_axes[d].weights, eps)
        if d > 0:
            # bring (y_{d-1}, eta_{d-1}) to the end, keep finished x axes in front
            arr = np.moveaxis(arr, [2 * (d - 1), 2 * (d - 1) + 1], [-2, -1])
    # arr axes now (x_{n-1}, ..., x_0)
    arr = np.transpose(arr, list(reversed(range(n))))
    return SpatialField(xgrid, arr * (fbi_constant(n) * eps ** (-0.75 * n)))


# ----------------------------------------------------------------------------
# cutoffs and truncated data


@dataclass(frozen=True)
class CutoffSpec:
    """Frequency ring, spatial cutoffs and beam cutoff radius.

    Parameters
    ----------
    r0, r_inf : float
        Inner and outer ring radii of ``gamma(eta) = chi_{r_inf/2}(eta)(1 - chi_{4 r0}(eta))``.
    d : float
        Beam cutoff radius.
    support_center, support_radius :
        Ball containing the supports of the initial data.
    """

    r0: float
    r_inf: float
    d: float
    support_center: tuple
    support_radius: float

    def __post_init__(self):
        if not (0 < self.r0 and 16 * self.r0 < self.r_inf):
            raise GuardError("fbi.ring", "need 0 < 16 r0 < r_inf")
        if not self.d > 0:
            raise GuardError("fbi.cutoff_d", "cutoff radius must be positive")
        object.__setattr__(self, "support_center", tuple(np.atleast_1d(self.support_center).astype(float)))

    @classmethod
    def for_wkb(cls, dom, center, radius, eta0_norm, d=None, r0=None, r_inf=None):
        """Defaults: ring ``[eta0/8, 8 eta0]``, ``d`` a quarter of the distance
        from the data ball to the boundary."""
        dist = data_distance(dom, center, radius)
        return cls(
            r0=eta0_norm / 8.0 if r0 is None else r0,
            r_inf=8.0 * eta0_norm if r_inf is None else r_inf,
            d=0.25 * dist if d is None else d,
            support_center=tuple(np.atleast_1d(center)),
            support_radius=float(radius),
        )

    def gamma(self, eta):
        eta = np.asarray(eta, dtype=float)
        return bump_chi(self.r_inf / 2.0, eta) * (1.0 - bump_chi(4.0 * self.r0, eta))

    def gamma_prime(self, eta):
        """1 on ``r0 <= |eta| <= r_inf``, 0 outside ``r0/2 <= |eta| <= 2 r_inf``."""
        r = np.linalg.norm(np.asarray(eta, dtype=float), axis=-1)
        return ramp(r, self.r_inf, 2 * self.r_inf) * ramp(-r, -self.r0, -0.5 * self.r0)

    def _dist_data(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.support_center)
        return np.maximum(np.linalg.norm(x - c, axis=-1) - self.support_radius, 0.0)

    def rho(self, x, dom):
        """1 on the data ball inflated by ``2d``, 0 within ``d`` of the boundary."""
        dist = data_distance(dom, self.support_center, self.support_radius)
        return ramp(self._dist_data(x), 2 * self.d, dist - self.d)

    def rho_prime(self, x, dom):
        """1 up to ``d/2`` from the boundary, 0 within ``d/4`` of it."""
        dist = data_distance(dom, self.support_center, self.support_radius)
        return ramp(self._dist_data(x), dist - 0.5 * self.d, dist - 0.25 * self.d)

    def to_dict(self) -> dict:
        return {
            "r0": self.r0, "r_inf": self.r_inf, "d": self.d,
            "support_center": list(self.support_center),
            "support_radius": self.support_radius,
        }


def data_distance(dom, center, radius) -> float:
    """Distance from the ball ``B(center, radius)`` to the boundary."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    return float(-dom.signed_distance(c) - radius)


def spectral_extent(a: SpatialField, eps: float, rel: float = 1e-16):
    """Per-axis range of ``eps * xi`` carrying the Fourier energy of ``a``."""
    lo, hi = [], []
    for d, ax in enumerate(a.grid.axes):
        other = tuple(i for i in range(a.grid.ndim) if i != d)
        spec = np.abs(np.fft.fft(a.values, axis=d)) ** 2
        if other:
            spec = spec.sum(axis=other)
        xi = 2 * np.pi * np.fft.fftfreq(ax.count, d=ax.step)
        mask = spec > rel * spec.max() if spec.max() > 0 else np.zeros_like(spec, bool)
        if not mask.any():
            lo.append(0.0)
            hi.append(0.0)
            continue
        lo.append(eps * xi[mask].min())
        hi.append(eps * xi[mask].max())
    return np.array(lo), np.array(hi)


def spatial_extent(a: SpatialField, rel: float = 1e-16):
    lo, hi = [], []
    mag = np.abs(a.values) ** 2
    for d, ax in enumerate(a.grid.axes):
        other = tuple(i for i in range(a.grid.ndim) if i != d)
        prof = mag.sum(axis=other) if other else mag
        mask = prof > rel * prof.max() if prof.max() > 0 else np.zeros_like(prof, bool)
        nodes = ax.nodes
        lo.append(nodes[mask].min() if mask.any() else nodes[0])
        hi.append(nodes[mask].max() if mask.any() else nodes[-1])
    return np.array(lo), np.array(hi)


def covering_grid(fields, eps: float, refine: float = 1.0, eta_bounds=None) -> PhaseSpaceGrid:
    """Default phase-space grid for a set of fields on a common spatial grid.

    ``y`` spans the spatial support widened by the Gaussian window and ``eta``
    the spectral support widened likewise, optionally clipped to ``eta_bounds``.
    """
    fields = [f for f in fields]
    xg = fields[0].grid
    pad = WINDOW * np.sqrt(eps)
    ylo, yhi, elo, ehi = [], [], [], []
    for f in fields:
        a, b = spatial_extent(f)
        c, e = spectral_extent(f, eps)
        ylo.append(a), yhi.append(b), elo.append(c), ehi.append(e)
    ylo = np.min(ylo, axis=0) - pad
    yhi = np.max(yhi, axis=0) + pad
    elo = np.min(elo, axis=0) - pad
    ehi = np.max(ehi, axis=0) + pad
    if eta_bounds is not None:
        elo = np.maximum(elo, eta_bounds[0])
        ehi = np.minimum(ehi, eta_bounds[1])
    return PhaseSpaceGrid.aligned(xg, eps, ylo, yhi, elo, ehi, refine)


@dataclass
class PreparedData:
    u_cut: SpatialField
    v_cut: SpatialField
    out_of_ring: dict
    grid: PhaseSpaceGrid


def prepare_initial_data(uI: SpatialField, vI: SpatialField, eps: float, cut: CutoffSpec,
                         dom, refine: float = 1.0) -> PreparedData:
    """Frequency-truncate and spatially cut data: ``rho T* gamma T u``.

    The diagnostic ``out_of_ring`` holds, for both fields, the FBI norm of the
    truncated data with ``|eta|`` outside ``[r0, r_inf]`` relative to the
    full norm.
    """
    dist = data_distance(dom, cut.support_center, cut.support_radius)
    if dist < 4 * cut.d * (1 - 1e-12):
        raise GuardError("fbi.support", f"data at distance {dist:.3g} < 4d = {4 * cut.d:.3g} from the boundary")
    pts = uI.grid.points()
    rho = cut.rho(pts, dom)
    # gamma vanishes for |eta| >= r_inf / 2, so nothing beyond it (plus the
    # Gaussian window) survives the truncation
    reach = 0.5 * cut.r_inf + WINDOW * np.sqrt(eps)
    grid = covering_grid([uI, vI], eps, refine, eta_bounds=(-reach, reach))
    _, eta_nodes = grid.nodes()
    g = cut.gamma(eta_nodes).reshape(grid.shape)
    out, diag = [], {}
    for name, f in (("u", uI), ("v", vI)):
        if not np.any(f.values):
            out.append(SpatialField.zeros(f.grid))
            diag[name] = 0.0
            continue
        Tf = fbi_forward(f, eps, grid)
        cutf = fbi_adjoint(PhaseSpaceField(grid, Tf.values * g), eps, f.grid)
        cutf = SpatialField(f.grid, cutf.values * rho)
        Tc = fbi_forward(cutf, eps, grid)
        r = np.linalg.norm(eta_nodes, axis=-1).reshape(grid.shape)
        outside = (r < cut.r0) | (r > cut.r_inf)
        tot = Tc.norm()
        diag[name] = 0.0 if tot == 0 else float(
            np.sqrt(np.sum(grid.weights * np.abs(Tc.values) ** 2 * outside)) / tot)
        out.append(cutf)
    return PreparedData(out[0], out[1], diag, grid)
