"""Independent ground truth: finite-difference reference solver, WKB data,
folded d'Alembert solutions and a self-certifying trapezoid ladder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GuardError, NumericalFailure
from .fbi import Axis, SpatialField, SpatialGrid, bump_chi

CFL_MAX = 0.9


# ----------------------------------------------------------------------------
# reference solver


@dataclass
class ReferenceSolution:
    """Snapshots of ``u`` and ``d_t u`` at ``times`` on ``grid``."""

    grid: SpatialGrid
    times: np.ndarray
    u: list
    ut: list
    energy: np.ndarray
    cfl: dict = field(default_factory=dict)
    error_estimate: list = field(default_factory=list)

    @property
    def energy_drift(self) -> float:
        e = self.energy
        return float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))

    def at(self, t: float):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.u[i], self.ut[i]


def interval_grid(dom, dx: float) -> SpatialGrid:
    """Grid with nodes on both endpoints and spacing at most ``dx``."""
    n = int(np.ceil(dom.diameter / dx - 1e-9))
    return SpatialGrid((Axis(dom.left, dom.diameter / n, n + 1),))


def _step_count(times, dt0: float):
    T = float(np.max(times))
    n0 = max(1, int(np.ceil(T / dt0 - 1e-12)))
    for n in range(n0, 4 * n0 + 1000):
        k = np.asarray(times) * n / T
        if np.all(np.abs(k - np.rint(k)) < 1e-7):
            return n, np.rint(k).astype(int)
    raise GuardError("oracle.times", "output times are not commensurate with the time step")


def reference_solve_1d(uI: SpatialField, vI: SpatialField, vf, bc: str, times, dom=None,
                       cfl: float = CFL_MAX, eps: float | None = None,
                       eta_max: float | None = None, steps: int | None = None) -> ReferenceSolution:
    """Leapfrog solve of ``u_tt = (c^2 u_x)_x`` on the interval spanned by the grid.

    The grid must include both endpoints.  Dirichlet nodes are pinned to zero;
    Neumann endpoints use mirrored ghost values.  The first step uses the
    Taylor start ``u^1 = u^0 + dt v + dt^2/2 L u^0``.  ``d_t u`` at a snapshot is
    the centred difference of the neighbouring time levels.

    Parameters
    ----------
    bc : {"dirichlet", "neumann"}
    times : array_like
        Output times in ``[0, T]``; the step is shrunk so that each is hit.
    eps, eta_max : float, optional
        When given, the resolution guard ``dx <= eps / (8 eta_max)`` is applied.
    steps : int, optional
        Fixed number of time steps to ``max(times)``; the CFL guard still applies.
    """
    grid = uI.grid
    if grid.ndim != 1:
        raise GuardError("oracle.dimension", "the reference solver is one-dimensional")
    if cfl > CFL_MAX * (1 + 1e-12):
        raise GuardError("oracle.cfl", f"CFL number {cfl} exceeds {CFL_MAX}")
    if bc not in ("dirichlet", "neumann"):
        raise GuardError("oracle.bc", f"unknown boundary condition {bc!r}")
    if eps is not None and eta_max is not None:
        if grid.spacing[0] > eps / (8 * eta_max) * (1 + 1e-9):
            raise GuardError("oracle.resolution", "grid does not resolve the oscillations")
    ax = grid.axes[0]
    x = ax.nodes
    dx = ax.step
    if dom is not None and (abs(x[0] - dom.left) > 1e-9 * dx or abs(x[-1] - dom.right) > 1e-9 * dx):
        raise GuardError("oracle.grid", "grid endpoints must be the interval endpoints")
    times = np.atleast_1d(np.asarray(times, float))
    if np.any(times < 0):
        raise GuardError("oracle.times", "times must be non-negative")
    c_half = vf.value(((x[:-1] + x[1:]) / 2)[:, None])
    cmax = max(float(np.max(vf.value(x[:, None]))), float(np.max(c_half)))
    if np.max(times) == 0:
        nsteps, ks = 0, np.zeros(len(times), int)
        dt = cfl * dx / cmax
    elif steps is not None:
        nsteps = int(steps)
        k = times * nsteps / float(np.max(times))
        if np.any(np.abs(k - np.rint(k)) > 1e-7):
            raise GuardError("oracle.times", "output times are not multiples of the time step")
        ks = np.rint(k).astype(int)
        dt = float(np.max(times)) / nsteps
    else:
        nsteps, ks = _step_count(times, cfl * dx / cmax)
        dt = float(np.max(times)) / nsteps
    nu = cmax * dt / dx
    if nu > CFL_MAX * (1 + 1e-12):
        raise GuardError("oracle.cfl", f"CFL number {nu:.4f} exceeds {CFL_MAX}")
    k2 = c_half**2 * (dt / dx) ** 2
    w = np.full(x.size, dx)
    if bc == "neumann":
        w[0] = w[-1] = 0.5 * dx

    flux = np.empty(x.size - 1, dtype=complex)

    # dt^2 L u from flux differences; Neumann ends use the ghost mirror
    def lap(u, out):
        np.subtract(u[1:], u[:-1], out=flux)
        np.multiply(flux, k2, out=flux)
        np.subtract(flux[1:], flux[:-1], out=out[1:-1])
        if bc == "neumann":
            out[0] = 2.0 * flux[0]
            out[-1] = -2.0 * flux[-1]
        else:
            out[0] = out[-1] = 0.0
        return out

    def energy(u_new, u_old):
        kin = np.sum(w * np.abs((u_new - u_old) / dt) ** 2)
        pot = np.sum(c_half**2 * np.real(np.diff(u_new) * np.conj(np.diff(u_old)))) / dx
        return 0.5 * (kin + pot)

    u0 = uI.values.copy()
    v0 = vI.values.copy()
    if bc == "dirichlet":
        u0[0] = u0[-1] = 0.0
        v0[0] = v0[-1] = 0.0
    buf = np.empty_like(u0)
    um = u0
    u = u0 + dt * v0 + 0.5 * lap(u0, buf)
    if bc == "dirichlet":
        u[0] = u[-1] = 0.0
    up = np.empty_like(u0)
    want = set(int(k) for k in ks)
    snaps = {}
    if 0 in want:
        snaps[0] = (u0.copy(), v0.copy())
    e_every = max(1, nsteps // 256)
    energies = [energy(u, um)]
    for n in range(1, nsteps + 1):
        lap(u, buf)
        np.add(u, u, out=up)
        up -= um
        up += buf
        if bc == "dirichlet":
            up[0] = up[-1] = 0.0
        if n in want:
            snaps[n] = (u.copy(), (up - um) / (2.0 * dt))
        if n % e_every == 0 or n == nsteps:
            energies.append(energy(up, u))
        um, u, up = u, up, um
    if not np.all(np.isfinite(u)):
        raise NumericalFailure("reference solve produced non-finite values")
    us = [SpatialField(grid, snaps[int(k)][0]) for k in ks]
    uts = [SpatialField(grid, snaps[int(k)][1]) for k in ks]
    return ReferenceSolution(grid, times, us, uts, np.array(energies),
                             {"dt": dt, "dx": dx, "cfl": nu, "steps": nsteps})


def reference_solve_richardson(data_at, vf, bc: str, times, dom, dx: float,
                               cfl: float = CFL_MAX, eps: float | None = None,
                               eta_max: float | None = None) -> ReferenceSolution:
    """Three nested leapfrog solves on ``dx``, ``dx/2``, ``dx/4`` combined by
    Richardson extrapolation of the second-order error.

    ``data_at(h)`` returns ``(uI, vI)`` sampled on ``interval_grid(dom, h)``.
    Time steps halve exactly with the mesh, so the Courant number is shared
    and the leading dispersion error cancels.  Snapshots live on the ``dx/2``
    grid.  ``error_estimate[i]`` is ``||R_fine - R_coarse|| / 15`` for the
    ``d_t u`` snapshot ``i``, where ``R`` are the two extrapolants.
    """
    sols = []
    steps = None
    for lev in range(3):
        h = dx / 2**lev
        uI, vI = data_at(h)
        sol = reference_solve_1d(uI, vI, vf, bc, times, dom, cfl, eps, eta_max,
                                 steps=None if steps is None else steps * 2**lev)
        if steps is None:
            steps = sol.cfl["steps"]
        sols.append(sol)
    s0, s1, s2 = sols

    def extrap(a, b, q):
        # a on grid h, b on grid h/2, result on the grid of a
        return SpatialField(a.grid, (4.0 * b.subsample(q).values - a.values) / 3.0)

    u, ut, est = [], [], []
    for i in range(len(s0.times)):
        r_coarse = extrap(s0.ut[i], s1.ut[i], 2)
        r_fine = extrap(s1.ut[i], s2.ut[i], 2)
        ut.append(r_fine)
        u.append(extrap(s1.u[i], s2.u[i], 2))
        est.append((r_fine.subsample(2) - r_coarse).norm() / 15.0)
    return ReferenceSolution(s1.grid, s1.times, u, ut, s2.energy,
                             {**s2.cfl, "levels": [s.cfl["dx"] for s in sols]}, est)


def standing_mode_error(n_cells: int, T: float = 1.0, cfl: float = 0.5) -> float:
    """Relative sup error of the solver on ``sin(pi x) cos(pi t)`` in ``[0, 1]``."""
    from .geometry import Interval
    from .media import Constant

    dom = Interval(0.0, 1.0)
    grid = interval_grid(dom, 1.0 / n_cells)
    x = grid.axes[0].nodes
    u0 = SpatialField(grid, np.sin(np.pi * x))
    sol = reference_solve_1d(u0, SpatialField.zeros(grid), Constant(1.0), "dirichlet", [T], dom, cfl)
    exact = np.cos(np.pi * T) * np.sin(np.pi * x)
    return float(np.max(np.abs(sol.u[0].values - exact)) / np.max(np.abs(np.sin(np.pi * x))))


# ----------------------------------------------------------------------------
# WKB data


@dataclass(frozen=True)
class WKBProfile:
    """Amplitude ``A = amplitude * chi_radius(x - center)`` and phase
    ``S = eta0.x + curvature |x - center|^2 / 2``."""

    center: tuple
    radius: float
    eta0: tuple
    amplitude: float = 1.0
    curvature: float = 0.0

    @property
    def ndim(self) -> int:
        return len(self.center)

    def A(self, x):
        x = np.asarray(x, float)
        return self.amplitude * bump_chi(self.radius, x - np.asarray(self.center))

    def S(self, x):
        x = np.asarray(x, float)
        dl = x - np.asarray(self.center)
        return x @ np.asarray(self.eta0) + 0.5 * self.curvature * np.sum(dl * dl, -1)

    def dS(self, x):
        x = np.asarray(x, float)
        return np.asarray(self.eta0) + self.curvature * (x - np.asarray(self.center))


@dataclass
class WKBData:
    uI: SpatialField
    vI: SpatialField
    profile: WKBProfile
    mode: str
    eps: float

    def measure_pairing(self, phi, vf, branch: str = "data") -> float:
        """Limit pairings by direct quadrature on the data grid.

        ``branch="data"`` gives ``int |A|^2 phi(x, dS)``; ``"plus"`` and
        ``"minus"`` give the limits of ``<w(Upsilon+-), phi>``, which are
        ``k int c^2 |dS|^2 |A|^2 phi(x, dS)`` with ``k`` in ``{0, 1, 4}``
        depending on the mode.
        """
        pts = self.uI.grid.points()
        A2 = np.abs(self.profile.A(pts)) ** 2
        dS = self.profile.dS(pts)
        val = phi(pts, dS)
        if branch == "data":
            return float(np.sum(self.uI.grid.weights * A2 * val))
        k = {"right": {"plus": 0.0, "minus": 4.0}, "left": {"plus": 4.0, "minus": 0.0},
             "symmetric": {"plus": 1.0, "minus": 1.0}}[self.mode][branch]
        c = vf.value(pts)
        return float(k * np.sum(self.uI.grid.weights * c**2 * np.sum(dS**2, -1) * A2 * val))


def wkb_data(profile: WKBProfile, eps: float, grid: SpatialGrid, vf, mode: str = "right",
             xi_floor: float = 1e-3) -> WKBData:
    """``uI = eps A e^{iS/eps}`` with ``vI = -+ i c|dS| A e^{iS/eps}`` (right, left) or 0."""
    pts = grid.points()
    A = profile.A(pts)
    dS = np.linalg.norm(profile.dS(pts), axis=-1)
    if np.any((np.abs(A) > 0) & (dS < xi_floor)):
        raise GuardError("oracle.wkb_xi", "|dS| too small on the amplitude support")
    e = np.exp(1j * profile.S(pts) / eps)
    u = eps * A * e
    if mode == "right":
        v = -1j * vf.value(pts) * dS * A * e
    elif mode == "left":
        v = 1j * vf.value(pts) * dS * A * e
    elif mode == "symmetric":
        v = np.zeros_like(u)
    else:
        raise GuardError("oracle.wkb_mode", f"unknown WKB mode {mode!r}")
    return WKBData(SpatialField(grid, u), SpatialField(grid, v), profile, mode, eps)


# ----------------------------------------------------------------------------
# closed-form constant-speed solutions


def free_flow_constant(y, eta, t: float, c: float):
    """Bicharacteristic of ``c|xi|`` in free space."""
    y, eta = np.asarray(y, float), np.asarray(eta, float)
    return y + c * t * eta / np.linalg.norm(eta, axis=-1, keepdims=True), eta.copy()


def _fold(x, a: float, L: float):
    """Position in the period ``[0, 2L)`` of the reflected extension, the
    mirror point in ``[a, a + L]`` and the number of completed periods."""
    y = np.asarray(x, float) - a
    periods = np.floor(y / (2 * L))
    y = y - 2 * L * periods
    upper = y > L
    return y, np.where(upper, a + 2 * L - y, a + y), upper, periods


def folded_dalembert(x, t: float, c: float, dom, bc: str, f, G, fprime=None, g=None):
    """d'Alembert solution on an interval by the method of images.

    ``f`` is the initial value, ``G`` an antiderivative of the initial
    velocity ``g``; all are callables on the interval.  Dirichlet uses the odd
    and Neumann the even reflected extension.  With ``fprime`` and ``g`` the
    time derivative is returned as well.
    """
    a, L = dom.left, dom.diameter
    sgn = -1.0 if bc == "dirichlet" else 1.0

    def f_ext(z):
        _, m, up, _ = _fold(z, a, L)
        return np.where(up, sgn, 1.0) * f(m)

    def G_ext(z):
        y, m, up, per = _fold(z, a, L)
        base = G(m) - G(a)
        full = G(a + L) - G(a)
        if sgn < 0:
            # odd velocity extension: periodic antiderivative
            return np.where(up, G(m) - G(a), base)
        return np.where(up, 2 * full - base, base) + 2 * full * per

    xm, xp = np.asarray(x, float) - c * t, np.asarray(x, float) + c * t
    u = 0.5 * (f_ext(xm) + f_ext(xp)) + (G_ext(xp) - G_ext(xm)) / (2 * c)
    if fprime is None or g is None:
        return u

    def fp_ext(z):
        _, m, up, _ = _fold(z, a, L)
        return np.where(up, -sgn, 1.0) * fprime(m)

    def g_ext(z):
        _, m, up, _ = _fold(z, a, L)
        return np.where(up, sgn, 1.0) * g(m)

    ut = 0.5 * c * (fp_ext(xp) - fp_ext(xm)) + 0.5 * (g_ext(xp) + g_ext(xm))
    return u, ut


# ----------------------------------------------------------------------------
# quadrature ladder


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error: float
    levels: int


def quadrature_oracle(integrand, lo, hi, tol: float = 1e-12, n0: int = 16,
                      max_levels: int = 14, max_points: int = 2**24) -> QuadratureResult:
    """Nested trapezoid refinement on the box ``[lo, hi]``.

    ``integrand`` maps points ``(..., n)`` to values.  The node count per axis
    doubles until two successive levels differ by less than ``tol`` times the
    magnitude (absolute below unit magnitude); that difference is the error
    estimate.
    """
    lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
    n = lo.size
    prev = None
    m = n0
    for level in range(max_levels):
        if (m + 1) ** n > max_points:
            break
        axes = [Axis(lo[d], (hi[d] - lo[d]) / m, m + 1) for d in range(n)]
        grid = SpatialGrid(tuple(axes))
        val = complex(np.sum(grid.weights * integrand(grid.points())))
        if prev is not None:
            err = abs(val - prev)
            if err <= tol * max(1.0, abs(val)):
                return QuadratureResult(val, err, level)
        prev = val
        m *= 2
    raise NumericalFailure("quadrature ladder did not converge")
