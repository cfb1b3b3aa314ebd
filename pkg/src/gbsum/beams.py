"""First-order Gaussian beams built from ray states.

A beam at time ``t`` is

    gb(t, x) = beta * chi_d(x - X) * a * exp(i [Xi.(x - X) + (x - X).G (x - X)/2] / eps),

with ray point ``(X, Xi)``, complex Hessian ``G = V U^-1`` and amplitude
``a = exp(-log det U / 2)`` (variant ``A``) or ``i a / (c(y)|eta|)`` (variant
``APrime``).  Each reflection multiplies the prefactor ``beta`` by ``-s i``;
the matching half-turn of ``det U`` is already in ``log det U``.

Besides single-beam evaluation this module holds a vectorised accumulator
used by the summation (many beams on one grid, optionally with exact time or
space derivatives) and the residual measurements used in scaling studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flow as fl
from .errors import GuardError, NumericalFailure
from .fbi import SpatialGrid, bump_chi, bump_chi_grad, smooth_step, smooth_step_derivative

GAUSS_CUT = 32.0  # window where exp(-Im psi / eps) > exp(-GAUSS_CUT)


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise GuardError("beams.bc", f"unknown boundary condition {self.kind!r}")

    @property
    def m_B(self) -> int:
        return 0 if self.kind == "dirichlet" else 1

    @property
    def s(self) -> int:
        return -1 if self.kind == "dirichlet" else 1

    @property
    def reflection_factor(self) -> complex:
        return -self.s * 1j


DIRICHLET = BoundaryCondition("dirichlet")
NEUMANN = BoundaryCondition("neumann")


@dataclass(frozen=True)
class BeamPacket:
    t: float
    center: np.ndarray
    momentum: np.ndarray
    hessian: np.ndarray
    amp: complex
    prefactor: complex
    cutoff_d: float
    source_speed: float


def make_beam(state: fl.PhaseFlowState, variant: str, bc: BoundaryCondition,
              cutoff_d: float, vf) -> BeamPacket:
    """Beam attached to ``state``; ``variant`` is ``"A"`` or ``"APrime"``."""
    if not cutoff_d > 0:
        raise GuardError("beams.cutoff_d", "cutoff radius must be positive")
    det = np.linalg.det(state.U)
    if not np.isfinite(det) or abs(det) < 1e-300:
        raise NumericalFailure("singular U")
    G = state.V @ np.linalg.inv(state.U)
    G = 0.5 * (G + G.T)
    h0 = float(vf.value(state.x[None])[0] * np.linalg.norm(state.xi))
    amp = np.exp(-0.5 * state.log_det_U)
    if variant == "APrime":
        amp = 1j * amp / h0
    elif variant != "A":
        raise GuardError("beams.variant", f"unknown amplitude variant {variant!r}")
    pref = bc.reflection_factor ** len(state.reflections)
    return BeamPacket(state.t, state.x.copy(), state.xi.copy(), G, complex(amp),
                      complex(pref), float(cutoff_d), h0)


def beam_phase(b: BeamPacket, x):
    delta = np.asarray(x, dtype=float) - b.center
    return delta @ b.momentum + 0.5 * np.einsum("...i,ij,...j->...", delta, b.hessian, delta)


def eval_beam(b: BeamPacket, x, eps: float):
    """Beam value at points ``x`` of shape ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    delta = x - b.center
    chi = bump_chi(b.cutoff_d, delta)
    return b.prefactor * chi * b.amp * np.exp(1j * beam_phase(b, x) / eps)


def eval_beam_gradient(b: BeamPacket, x, eps: float):
    """Exact spatial gradient of :func:`eval_beam`, shape ``x.shape``."""
    x = np.asarray(x, dtype=float)
    delta = x - b.center
    chi = bump_chi(b.cutoff_d, delta)[..., None]
    gchi = bump_chi_grad(b.cutoff_d, delta)
    e = (b.prefactor * b.amp * np.exp(1j * beam_phase(b, x) / eps))[..., None]
    dpsi = b.momentum + delta @ b.hessian.T
    return e * (gchi + chi * 1j * dpsi / eps)


# ----------------------------------------------------------------------------
# many beams on a grid


@dataclass
class BeamArrays:
    """``M`` beams sharing a time and a cutoff radius.

    ``coef`` collects prefactor, amplitude and any quadrature weight.  The
    optional rate fields are the derivatives, along the beam's own time
    direction, used for exact time derivatives: ``xdot, xidot`` (M, n),
    ``Gdot`` (M, n, n) and ``adot_over_a`` (M,).
    """

    center: np.ndarray
    momentum: np.ndarray
    hessian: np.ndarray
    coef: np.ndarray
    cutoff_d: float
    xdot: np.ndarray | None = None
    xidot: np.ndarray | None = None
    Gdot: np.ndarray | None = None
    adot_over_a: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.center.shape[0]

    def take(self, idx) -> "BeamArrays":
        opt = [None if v is None else v[idx] for v in
               (self.xdot, self.xidot, self.Gdot, self.adot_over_a)]
        return BeamArrays(self.center[idx], self.momentum[idx], self.hessian[idx],
                          self.coef[idx], self.cutoff_d, *opt)

    @classmethod
    def concat(cls, parts) -> "BeamArrays":
        parts = [p for p in parts if p.size]
        if not parts:
            raise ValueError("no beams")

        def cat(name):
            vals = [getattr(p, name) for p in parts]
            return None if any(v is None for v in vals) else np.concatenate(vals)

        return cls(cat("center"), cat("momentum"), cat("hessian"), cat("coef"),
                   parts[0].cutoff_d, cat("xdot"), cat("xidot"), cat("Gdot"), cat("adot_over_a"))


def window_radius(beams: BeamArrays, eps: float) -> float:
    """Radius outside which every beam is exactly zero or below ``exp(-GAUSS_CUT)``."""
    im = 0.5 * (beams.hessian.imag + np.swapaxes(beams.hessian.imag, -1, -2))
    lam = np.min(np.linalg.eigvalsh(im))
    if not lam > 0:
        raise NumericalFailure("beam Hessian lost its positive imaginary part")
    return float(min(beams.cutoff_d, np.sqrt(2.0 * GAUSS_CUT * eps / lam)))


def accumulate(beams: BeamArrays, eps: float, xgrid: SpatialGrid, what=("u",),
               radius: float | None = None):
    """Sum beams on ``xgrid`` (compiled loop; same result as
    :func:`accumulate_numpy` up to summation order)."""
    from ._kernels import accumulate_compiled

    if beams.size == 0:
        return accumulate_numpy(beams, eps, xgrid, what)
    r = window_radius(beams, eps) if radius is None else radius
    return accumulate_compiled(beams, eps, xgrid, tuple(what), r)


def accumulate_numpy(beams: BeamArrays, eps: float, xgrid: SpatialGrid, what=("u",),
                     chunk_elems: int = 400_000, radius: float | None = None):
    """Sum beams on ``xgrid``.

    Parameters
    ----------
    what : sequence of {"u", "dt", "dx"}
        ``"u"`` the beam values, ``"dt"`` their exact time derivatives (needs
        the rate fields), ``"dx"`` exact spatial gradients.

    Returns
    -------
    dict
        ``"u"`` and ``"dt"`` map to complex arrays of ``xgrid.shape``;
        ``"dx"`` to an array of shape ``xgrid.shape + (n,)``.
    """
    n = xgrid.ndim
    shape = xgrid.shape
    size = int(np.prod(shape))
    out = {}
    for w in what:
        out[w] = np.zeros((size, n) if w == "dx" else size, dtype=complex)
    if beams.size == 0:
        return _reshape_out(out, shape)
    r = window_radius(beams, eps) if radius is None else radius
    dx = xgrid.spacing
    start = np.array([a.start for a in xgrid.axes])
    W = np.ceil(r / dx).astype(int)
    offs = np.stack(np.meshgrid(*[np.arange(-w, w + 1) for w in W], indexing="ij"), -1).reshape(-1, n)
    K = offs.shape[0]
    strides = np.array([int(np.prod(shape[d + 1:])) for d in range(n)])
    step = max(1, chunk_elems // K)
    ext = np.array(shape)
    for s0 in range(0, beams.size, step):
        b = beams.take(slice(s0, s0 + step))
        base = np.rint((b.center - start) / dx).astype(int)
        idx = base[:, None, :] + offs[None, :, :]
        valid = np.all((idx >= 0) & (idx < ext), axis=-1)
        lin = (idx @ strides)[valid]
        # loops over the (at most three) coordinates keep every array (M, K)
        dl = [start[i] + idx[..., i] * dx[i] - b.center[:, i, None] for i in range(n)]
        Gd = [sum(b.hessian[:, i, j, None] * dl[j] for j in range(n)) for i in range(n)]
        psi = sum(dl[i] * (b.momentum[:, i, None] + 0.5 * Gd[i]) for i in range(n))
        rad = np.sqrt(sum(d * d for d in dl))
        r_c = b.cutoff_d
        chi = _radial_chi(r_c, rad)
        e = np.exp(psi * (1j / eps))
        e *= b.coef[:, None]
        if "u" in what:
            _scatter(out["u"], lin, (e * chi)[valid])
        if "dx" in what or "dt" in what:
            dchi = _radial_chi_derivative(r_c, rad)
            with np.errstate(invalid="ignore", divide="ignore"):
                inv_r = np.where(rad > 0, 1.0 / np.where(rad > 0, rad, 1.0), 0.0)
            gchi = [dchi * dl[i] * inv_r for i in range(n)]
            dpsi = [b.momentum[:, i, None] + Gd[i] for i in range(n)]
        if "dx" in what:
            for i in range(n):
                g = e * (gchi[i] + chi * (1j / eps) * dpsi[i])
                _scatter(out["dx"][:, i], lin, g[valid])
        if "dt" in what:
            if b.xdot is None:
                raise ValueError("exact time derivative needs beam rates")
            psi_t = -np.sum(b.momentum * b.xdot, -1)[:, None]
            chi_t = 0.0
            for i in range(n):
                psi_t = psi_t + dl[i] * (b.xidot[:, i, None] - sum(
                    b.xdot[:, j, None] * b.hessian[:, j, i, None] for j in range(n)))
                psi_t = psi_t + 0.5 * dl[i] * sum(b.Gdot[:, i, j, None] * dl[j] for j in range(n))
                chi_t = chi_t - gchi[i] * b.xdot[:, i, None]
            val = e * (chi_t + chi * (b.adot_over_a[:, None] + (1j / eps) * psi_t))
            _scatter(out["dt"], lin, val[valid])
    return _reshape_out(out, shape)


def _radial_chi(r, rad):
    """``bump_chi`` as a function of the radius; plain 1 when the whole window
    lies in the flat part."""
    if not np.any(rad > 0.5 * r):
        return 1.0
    return smooth_step((rad - 0.5 * r) / (0.5 * r))


def _radial_chi_derivative(r, rad):
    if not np.any(rad > 0.5 * r):
        return 0.0
    return smooth_step_derivative((rad - 0.5 * r) / (0.5 * r)) / (0.5 * r)


def _scatter(target, lin, vals):
    n = target.shape[0]
    target += np.bincount(lin, weights=vals.real, minlength=n) + 1j * np.bincount(
        lin, weights=vals.imag, minlength=n)


def _reshape_out(out, shape):
    res = {}
    for k, v in out.items():
        res[k] = v.reshape(shape + (v.shape[-1],)) if k == "dx" else v.reshape(shape)
    return res


def beam_rates(batch: fl.FlowBatch, vf, xi_min: float = 1e-8):
    """Hessian and its time derivative plus the amplitude log-rate for a batch.

    Returns
    -------
    G, xdot, xidot, Gdot, adot_over_a
    """
    xd, xid, Ud, Vd, _ = fl._rhs(vf, batch.x, batch.xi, batch.U, batch.V, xi_min)
    Uinv = fl.small_inv(batch.U)
    G = batch.V @ Uinv
    Gdot = Vd @ Uinv - G @ Ud @ Uinv
    adot = -0.5 * np.trace(Uinv @ Ud, axis1=-2, axis2=-1)
    G = 0.5 * (G + np.swapaxes(G, -1, -2))
    Gdot = 0.5 * (Gdot + np.swapaxes(Gdot, -1, -2))
    return G, xd, xid, Gdot, adot


# ----------------------------------------------------------------------------
# residuals


def _fd2(f, h, axis):
    """Fourth-order central second difference; trims two points per side."""
    s = [slice(None)] * f.ndim

    def sl(a, b):
        t = list(s)
        t[axis] = slice(a, f.shape[axis] - b if b else None)
        return tuple(t)

    return (-f[sl(4, 0)] + 16 * f[sl(3, 1)] - 30 * f[sl(2, 2)] + 16 * f[sl(1, 3)] - f[sl(0, 4)]) / (12 * h * h)


def _fd1(f, h, axis):
    s = [slice(None)] * f.ndim

    def sl(a, b):
        t = list(s)
        t[axis] = slice(a, f.shape[axis] - b if b else None)
        return tuple(t)

    return (-f[sl(4, 0)] + 8 * f[sl(3, 1)] - 8 * f[sl(1, 3)] + f[sl(0, 4)]) / (12 * h)


def _beam_on_box(state_batch: fl.FlowBatch, i, variant, bc, d, vf, eps, lo_idx, counts, dx, x0):
    st = state_batch.state(i)
    b = make_beam(st, variant, bc, d, vf)
    axes = [x0[k] + dx * (lo_idx[k] + np.arange(counts[k])) for k in range(len(counts))]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    return eval_beam(b, pts, eps), pts


def _replace_refl(state, nrefl):
    return fl.PhaseFlowState(state.t, state.x, state.xi, state.U, state.V,
                             state.log_det_U, tuple([None] * nrefl))


def apply_wave_operator(values_t, pts, vf, dt, dx):
    """``d_t^2 u - div(c^2 grad u)`` by fourth-order differences.

    ``values_t`` has a leading axis of five equispaced times; spatial axes
    follow.  The result lives on the interior points (two trimmed per side).
    """
    n = pts.shape[-1]
    mid = values_t[2]
    utt = _fd2(values_t, dt, 0)[0]
    inner = tuple(slice(2, -2) for _ in range(n))
    p_in = pts[inner]
    c = vf.value(p_in)
    gc2 = 2.0 * c[..., None] * vf.gradient(p_in)
    lap = 0.0
    for j in range(n):
        sl = [slice(2, -2)] * n
        sl[j] = slice(None)
        f = mid[tuple(sl)]
        lap = lap + c**2 * _fd2(f, dx, j) + gc2[..., j] * _fd1(f, dx, j)
    return utt[inner] - lap, p_in


def beam_residual_norm(y, eta, vf, eps: float, t_samples, variant: str = "A",
                       bc: BoundaryCondition = DIRICHLET, cutoff_d: float = 1.0,
                       cfg: fl.FlowConfig | None = None, dom=None, return_all=False):
    """``sup_t || eps^(1 - n/4) P gb(t) ||_L2`` for the beam launched at ``(y, eta)``.

    The ray is followed by the free flow (no reflections).  Time and space
    steps are ``eps / (8 max c|xi|)`` and ``eps / (8 max |xi|)``; the norm is
    taken over the beam window, restricted to ``dom`` when given.
    """
    y = np.atleast_1d(np.asarray(y, float))
    eta = np.atleast_1d(np.asarray(eta, float))
    n = y.size
    t_samples = np.atleast_1d(np.asarray(t_samples, float))
    T = float(np.max(np.abs(t_samples)))
    cfg = cfg or fl.FlowConfig.for_horizon(max(T, 1e-3))
    b0 = fl.initial_batch(y[None], eta[None])
    centre = fl.propagate(fl.FlowBatch(
        np.repeat(b0.x, len(t_samples), 0), np.repeat(b0.xi, len(t_samples), 0),
        np.repeat(b0.U, len(t_samples), 0), np.repeat(b0.V, len(t_samples), 0),
        np.repeat(b0.logdet, len(t_samples), 0)), t_samples, vf, None, cfg, fixed_steps=True)
    h0 = float(vf.value(y[None])[0] * np.linalg.norm(eta))
    xi_max = h0 / vf.c_min
    dt = eps / (8.0 * h0)
    dx = eps / (8.0 * xi_max)
    norms = []
    for i in range(len(t_samples)):
        c = centre.take([i])
        states = {0: c}
        for sgn in (1, -1):
            s1 = fl._rk4(c, np.array([sgn * dt]), vf, cfg.xi_min)
            s2 = fl._rk4(s1, np.array([sgn * dt]), vf, cfg.xi_min)
            states[sgn] = s1
            states[2 * sgn] = s2
        probe = make_beam(c.state(0), variant, bc, cutoff_d, vf)
        r = min(cutoff_d, np.sqrt(2 * GAUSS_CUT * eps / np.min(np.linalg.eigvalsh(probe.hessian.imag))))
        W = int(np.ceil(r / dx)) + 3
        lo_idx = np.floor(c.x[0] / dx).astype(int) - W
        counts = [2 * W + 1] * n
        vals = []
        for k in (-2, -1, 0, 1, 2):
            s = states[k]
            v, pts = _beam_on_box(s, 0, variant, bc, cutoff_d, vf, eps, lo_idx, counts, dx, np.zeros(n))
            vals.append(v)
        P, p_in = apply_wave_operator(np.array(vals), pts, vf, dt, dx)
        mask = np.ones(P.shape, bool) if dom is None else (dom.signed_distance(p_in) < 0)
        nrm = np.sqrt(np.sum(np.abs(P[mask]) ** 2) * dx**n)
        norms.append(eps ** (1.0 - n / 4.0) * nrm)
    norms = np.array(norms)
    return (float(norms.max()), norms) if return_all else float(norms.max())


def expansion_residual(state: fl.PhaseFlowState, x, vf, eps: float, variant: str = "A",
                       bc: BoundaryCondition = DIRICHLET, cutoff_d: float = 1.0,
                       delta_t: float = 1e-4):
    """``P gb`` at one point near the ray from the eikonal/transport expansion.

    Valid where the cutoff is identically one.  Space derivatives of the phase
    are exact; second time derivatives of the ray data come from central
    differences of the analytic first derivatives over ``delta_t``.
    """
    x = np.asarray(x, float)
    n = x.size
    b = make_beam(state, variant, bc, cutoff_d, vf)
    if np.linalg.norm(x - b.center) > 0.5 * cutoff_d:
        raise ValueError("point must lie where the cutoff equals one")
    batch = fl._batch_of(state)

    def rates(bt):
        G, xd, xid, Gd, ad = beam_rates(bt, vf)
        return xd[0], xid[0], G[0], Gd[0], complex(ad[0])

    xd, xid, G, Gd, ad = rates(batch)
    plus = rates(fl._rk4(batch, np.array([delta_t]), vf, 1e-8))
    minus = rates(fl._rk4(batch, np.array([-delta_t]), vf, 1e-8))
    xdd = (plus[0] - minus[0]) / (2 * delta_t)
    xidd = (plus[1] - minus[1]) / (2 * delta_t)
    Gdd = (plus[3] - minus[3]) / (2 * delta_t)
    add = (plus[4] - minus[4]) / (2 * delta_t)
    X, Xi = b.center, b.momentum
    dl = x - X
    psi = Xi @ dl + 0.5 * dl @ G @ dl
    grad = Xi + G @ dl
    psi_t = xid @ dl - Xi @ xd - xd @ G @ dl + 0.5 * dl @ Gd @ dl
    psi_tt = (xidd @ dl - 2 * xid @ xd - Xi @ xdd - xdd @ G @ dl
              - 2 * xd @ Gd @ dl + xd @ G @ xd + 0.5 * dl @ Gdd @ dl)
    a = b.prefactor * b.amp
    a_t = ad * a
    a_tt = (ad**2 + add) * a
    c = float(vf.value(x[None])[0])
    gc2 = 2 * c * vf.gradient(x[None])[0]
    div = gc2 @ grad + c**2 * np.trace(G)
    eik = c**2 * grad @ grad - psi_t**2
    trans = 2 * psi_t * a_t + (psi_tt - div) * a
    return np.exp(1j * psi / eps) * (eik * a / eps**2 + 1j * trans / eps + a_tt)


def validate_cutoff(batch: fl.FlowBatch) -> float:
    """Smallest eigenvalue of ``Im G`` over a batch; the quadratic phase gives
    ``Im psi >= lam |x - X|^2 / 2`` on the whole cutoff ball when it is positive."""
    G = batch.V @ fl.small_inv(batch.U)
    im = 0.5 * (G.imag + np.swapaxes(G.imag, -1, -2))
    lam = float(np.min(np.linalg.eigvalsh(im)))
    if not lam > 0:
        raise GuardError("beams.cutoff", "imaginary part of the phase Hessian is not positive")
    return lam


# ----------------------------------------------------------------------------
# boundary residual


def first_reflection(y, eta, T: float, vf, dom, cfg: fl.FlowConfig):
    """First boundary hit of the ray from ``(y, eta)`` within ``[0, T]``
    (``[T, 0]`` for negative ``T``): the reflection event."""
    b0 = fl.initial_batch(np.atleast_1d(y)[None], np.atleast_1d(eta)[None])
    events: list = []
    fl.propagate(b0, T, vf, dom, cfg, events)
    if not events:
        raise GuardError("beams.no_reflection", "ray does not reach the boundary")
    return events[0]


def incident_reflected_pair(y, eta, times, vf, ev: fl.ReflectionEvent, cfg: fl.FlowConfig):
    """States at every time in ``times`` of the incident ray continued through
    the boundary and of the reflected ray of ``ev`` continued backwards."""
    times = np.asarray(times, float)
    b0 = fl.initial_batch(np.atleast_1d(y)[None], np.atleast_1d(eta)[None])
    N = len(times)

    def rep(b):
        return fl.FlowBatch(np.repeat(b.x, N, 0), np.repeat(b.xi, N, 0), np.repeat(b.U, N, 0),
                            np.repeat(b.V, N, 0), np.repeat(b.logdet, N, 0),
                            np.repeat(b.t, N, 0), np.repeat(b.nrefl, N, 0))

    inc = fl.propagate(rep(b0), times, vf, None, cfg, fixed_steps=True)
    ref = fl.propagate(rep(ev.post), times - ev.record.T_k, vf, None, cfg, fixed_steps=True)
    return inc, ref


def beams_from_batch(batch: fl.FlowBatch, vf, bc: BoundaryCondition, cutoff_d: float,
                     variant: str = "A", weights=None, rates: bool = False,
                     time_sign=None, xi_min: float = 1e-8) -> BeamArrays:
    """:class:`BeamArrays` for every ray of a batch.

    ``weights`` multiplies the coefficients.  With ``rates`` the derivative
    fields are filled; ``time_sign`` (per ray, +1 or -1) flips them for beams
    evaluated at ``-t``.
    """
    G, xd, xid, Gd, ad = beam_rates(batch, vf, xi_min)
    amp = np.exp(-0.5 * batch.logdet)
    if variant == "APrime":
        # source speed at the launch point is conserved along the ray
        h0 = vf.value(batch.x) * np.linalg.norm(batch.xi, axis=-1)
        amp = 1j * amp / h0
    elif variant != "A":
        raise GuardError("beams.variant", f"unknown amplitude variant {variant!r}")
    coef = amp * bc.reflection_factor ** batch.nrefl
    if weights is not None:
        coef = coef * weights
    out = BeamArrays(batch.x, batch.xi, G, coef, float(cutoff_d))
    if rates:
        sg = np.ones(batch.size) if time_sign is None else np.asarray(time_sign, float)
        out.xdot = xd * sg[:, None]
        out.xidot = xid * sg[:, None]
        out.Gdot = Gd * sg[:, None, None]
        out.adot_over_a = ad * sg
    return out


def eval_at_points(beams: BeamArrays, pts, eps: float, gradient: bool = False):
    """Every beam at every point: array ``(M, P)``, or ``(M, P, n)`` gradients."""
    pts = np.asarray(pts, float)
    delta = pts[None, :, :] - beams.center[:, None, :]
    Gd = np.einsum("mij,mkj->mki", beams.hessian, delta)
    psi = np.einsum("mi,mki->mk", beams.momentum, delta) + 0.5 * np.sum(delta * Gd, -1)
    chi = bump_chi(beams.cutoff_d, delta)
    e = beams.coef[:, None] * np.exp(1j * psi / eps)
    if not gradient:
        return e * chi
    gchi = bump_chi_grad(beams.cutoff_d, delta)
    dpsi = beams.momentum[:, None, :] + Gd
    return e[..., None] * (gchi + chi[..., None] * 1j * dpsi / eps)


def boundary_trace_residual(y, eta, vf, dom, bc: BoundaryCondition, eps: float, T: float,
                            cutoff_d: float = 1.0, cfg: fl.FlowConfig | None = None,
                            n_boundary: int = 256, return_parts=False):
    """``|| B(eps^(1-n/4)(gb^0 + gb^1)) ||`` in ``L^2([0, T] x boundary)``.

    ``B`` is the trace (Dirichlet) or the outward normal derivative (Neumann).
    The time grid has step ``eps / (8 c|eta|)`` over the interval where either
    beam can reach the boundary.
    """
    cfg = cfg or fl.FlowConfig.for_horizon(T)
    n = np.atleast_1d(y).size
    h0 = float(vf.value(np.atleast_1d(y)[None])[0] * np.linalg.norm(eta))
    ev = first_reflection(y, eta, T, vf, dom, cfg)
    T1 = ev.record.T_k
    lam = validate_cutoff(ev.post)
    # centres move at speed >= c_min, so beams are negligible at the boundary
    # once |t - T1| exceeds the window radius over c_min
    reach = 1.1 * min(cutoff_d, np.sqrt(2 * GAUSS_CUT * eps / lam)) / vf.c_min
    t0, t1 = max(0.0, T1 - reach), min(T, T1 + reach)
    dt = eps / (8.0 * h0)
    nt = int(np.ceil((t1 - t0) / dt)) + 1
    times = np.linspace(t0, t1, nt)
    inc, ref = incident_reflected_pair(y, eta, times, vf, ev, cfg)
    pts, wts = dom.boundary_samples(n_boundary)
    nus = dom.outward_normal(pts, check=False)
    scale = eps ** (1.0 - n / 4.0)
    parts = []
    for br in (inc, ref):
        bs = beams_from_batch(br, vf, bc, cutoff_d)
        if bc.kind == "dirichlet":
            v = eval_at_points(bs, pts, eps)
        else:
            v = np.sum(eval_at_points(bs, pts, eps, gradient=True) * nus[None], -1)
        parts.append(scale * v)
    parts = np.array(parts)
    vals = parts[0] + parts[1]
    tw = np.full(nt, times[1] - times[0])
    tw[0] = tw[-1] = 0.5 * tw[0]
    norm = float(np.sqrt(np.sum(tw[:, None] * wts[None, :] * np.abs(vals) ** 2)))
    if return_parts:
        return norm, times, parts, T1
    return norm
