"""Hamiltonian ray flow with complexified Jacobians and specular reflection.

The state of a ray is ``(x, xi)`` together with the complex matrices

    U = D_y x + i D_eta x,      V = D_y xi + i D_eta xi,

started from ``U = Id``, ``V = i Id``.  They obey the linear system
``U' = H21 U + H22 V``, ``V' = -H11 U - H12 V`` built from the Hessian of
``h = c(x)|xi|``; ``log det U`` is carried along as an extra unknown so that
the square root ``(det U)^(-1/2)`` is continuous in time.

Integration is classical fixed-step RK4.  When a domain is supplied, a sign
change of the signed distance inside a step is located by bisection on the
step length and the reflection jump is applied at the hit.  All work is
vectorised over a batch of rays; the single-ray functions are thin wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GuardError, NumericalFailure
from .media import hessian_blocks

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FlowConfig:
    """Integration controls.

    Parameters
    ----------
    h_max : float
        Largest RK4 step.  ``for_horizon`` sets it to ``T_max / 2000``.
    xi_min : float
        Momenta shorter than this are refused.
    time_tol : float
        Requested times closer than this to a reflection are refused.
    bisect_tol : float
        Width of the final bracket when locating boundary hits.
    transversality_rel : float
        Hits with ``|xdot . nu| < transversality_rel * c_min`` are refused.
    """

    h_max: float = 1e-3
    xi_min: float = 1e-8
    time_tol: float = 1e-9
    bisect_tol: float = 1e-12
    transversality_rel: float = 1e-6

    @classmethod
    def for_horizon(cls, T_max: float, **kw) -> "FlowConfig":
        return cls(h_max=abs(T_max) / 2000.0, **kw)


@dataclass(frozen=True)
class ReflectionRecord:
    T_k: float
    x_hit: np.ndarray
    normal: np.ndarray
    dT: np.ndarray


@dataclass(frozen=True)
class PhaseFlowState:
    t: float
    x: np.ndarray
    xi: np.ndarray
    U: np.ndarray
    V: np.ndarray
    log_det_U: complex
    reflections: tuple = ()

    @property
    def ndim(self) -> int:
        return self.x.shape[-1]

    @property
    def F(self) -> np.ndarray:
        return real_jacobian(self)


class FlowBatch:
    """Arrays describing ``N`` rays: ``x, xi`` (N, n), ``U, V`` (N, n, n),
    ``logdet`` (N,), ``t`` (N,) and the reflection count ``nrefl`` (N,).

    ``U`` is ``None`` for position-momentum-only batches.
    """

    def __init__(self, x, xi, U=None, V=None, logdet=None, t=None, nrefl=None):
        self.x = np.array(x, dtype=float)
        self.xi = np.array(xi, dtype=float)
        N = self.x.shape[0]
        self.U = None if U is None else np.array(U, dtype=complex)
        self.V = None if V is None else np.array(V, dtype=complex)
        if self.U is not None and logdet is None:
            logdet = np.log(small_det(self.U).astype(complex))
        self.logdet = None if logdet is None else np.array(logdet, dtype=complex)
        self.t = np.zeros(N) if t is None else np.array(t, dtype=float)
        self.nrefl = np.zeros(N, dtype=int) if nrefl is None else np.array(nrefl, dtype=int)

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def ndim(self) -> int:
        return self.x.shape[1]

    @property
    def has_jacobian(self) -> bool:
        return self.U is not None

    def take(self, idx) -> "FlowBatch":
        j = self.has_jacobian
        return FlowBatch(
            self.x[idx], self.xi[idx],
            self.U[idx] if j else None, self.V[idx] if j else None,
            self.logdet[idx] if j else None, self.t[idx], self.nrefl[idx],
        )

    def put(self, idx, other: "FlowBatch"):
        self.x[idx] = other.x
        self.xi[idx] = other.xi
        if self.has_jacobian:
            self.U[idx] = other.U
            self.V[idx] = other.V
            self.logdet[idx] = other.logdet
        self.t[idx] = other.t
        self.nrefl[idx] = other.nrefl

    def copy(self) -> "FlowBatch":
        return self.take(slice(None))

    def state(self, i: int, reflections=()) -> PhaseFlowState:
        return PhaseFlowState(
            float(self.t[i]), self.x[i].copy(), self.xi[i].copy(),
            self.U[i].copy(), self.V[i].copy(), complex(self.logdet[i]),
            tuple(reflections),
        )

    @classmethod
    def from_states(cls, states) -> "FlowBatch":
        return cls(
            np.stack([s.x for s in states]), np.stack([s.xi for s in states]),
            np.stack([s.U for s in states]), np.stack([s.V for s in states]),
            np.array([s.log_det_U for s in states]),
            np.array([s.t for s in states]),
            np.array([len(s.reflections) for s in states]),
        )


@dataclass
class ReflectionEvent:
    """A reflection hit by ray ``index`` of a batch, with the post-jump state."""

    index: int
    record: ReflectionRecord
    post: FlowBatch = field(repr=False)


def initial_batch(y, eta, jacobian: bool = True) -> FlowBatch:
    """Rays starting at ``(y, eta)`` at time zero with ``U = Id, V = i Id``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    N, n = y.shape
    if not jacobian:
        return FlowBatch(y, eta)
    eye = np.broadcast_to(np.eye(n), (N, n, n))
    return FlowBatch(y, eta, eye, 1j * eye, np.zeros(N, dtype=complex))


def initial_state(y, eta) -> PhaseFlowState:
    return initial_batch(y, eta).state(0)


def small_det(A):
    """Batched determinant with closed forms for 1x1 and 2x2 blocks."""
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, 0]
    if n == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return np.linalg.det(A)


def small_inv(A):
    """Batched inverse with closed forms for 1x1 and 2x2 blocks."""
    n = A.shape[-1]
    if n == 1:
        return 1.0 / A
    if n == 2:
        d = small_det(A)[..., None, None]
        adj = np.empty_like(A)
        adj[..., 0, 0] = A[..., 1, 1]
        adj[..., 1, 1] = A[..., 0, 0]
        adj[..., 0, 1] = -A[..., 0, 1]
        adj[..., 1, 0] = -A[..., 1, 0]
        return adj / d
    return np.linalg.inv(A)


def _rhs(vf, x, xi, U, V, xi_min):
    nrm = np.linalg.norm(xi, axis=-1)
    if np.any(nrm < xi_min) or not np.all(np.isfinite(nrm)):
        raise GuardError("flow.xi_min", f"|xi| fell below {xi_min} or became non-finite")
    c = vf.value(x)
    xdot = (c / nrm)[:, None] * xi
    xidot = -vf.gradient(x) * nrm[:, None]
    if U is None:
        return xdot, xidot, None, None, None
    H11, H12, H21, H22 = hessian_blocks(vf, x, xi, xi_min)
    Udot = H21 @ U + H22 @ V
    Vdot = -H11 @ U - H12 @ V
    Ldot = np.trace(small_inv(U) @ Udot, axis1=-2, axis2=-1)
    return xdot, xidot, Udot, Vdot, Ldot


def _rk4(b: FlowBatch, h, vf, xi_min) -> FlowBatch:
    """One classical RK4 step with per-ray step length ``h`` (N,)."""
    h = np.asarray(h, dtype=float)
    hv = h[:, None]
    jac = b.has_jacobian
    hm = h[:, None, None]

    def shifted(k, a):
        x = b.x + a * hv * k[0]
        xi = b.xi + a * hv * k[1]
        if not jac:
            return x, xi, None, None
        return x, xi, b.U + a * hm * k[2], b.V + a * hm * k[3]

    k1 = _rhs(vf, b.x, b.xi, b.U, b.V, xi_min)
    k2 = _rhs(vf, *shifted(k1, 0.5), xi_min)
    k3 = _rhs(vf, *shifted(k2, 0.5), xi_min)
    k4 = _rhs(vf, *shifted(k3, 1.0), xi_min)

    def comb(i):
        return (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) / 6.0

    x = b.x + hv * comb(0)
    xi = b.xi + hv * comb(1)
    if jac:
        U = b.U + hm * comb(2)
        V = b.V + hm * comb(3)
        # exact increment from the determinant ratio; the integrated
        # derivative only selects the branch of the argument
        guess = h * comb(4)
        inc = np.log((small_det(U) / small_det(b.U)).astype(complex))
        k = np.round((guess.imag - inc.imag) / TWO_PI)
        L = b.logdet + inc + 1j * TWO_PI * k
    else:
        U = V = L = None
    out = FlowBatch(x, xi, U, V, L, b.t + h, b.nrefl)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
        raise NumericalFailure("non-finite ray state")
    if jac and not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
        raise NumericalFailure("non-finite Jacobian")
    return out


def _locate_hit(b: FlowBatch, h, vf, dom, cfg) -> np.ndarray:
    """Bisection for the fraction of the step at which each ray leaves."""
    lo = np.zeros_like(h)
    hi = h.copy()
    for _ in range(200):
        if np.all(np.abs(hi - lo) <= cfg.bisect_tol):
            break
        mid = 0.5 * (lo + hi)
        pt = _rk4(_points_only(b), mid, vf, cfg.xi_min)
        out = dom.signed_distance(pt.x) > 0
        hi = np.where(out, mid, hi)
        lo = np.where(out, lo, mid)
    return lo


def _points_only(b: FlowBatch) -> FlowBatch:
    return FlowBatch(b.x, b.xi, t=b.t, nrefl=b.nrefl)


def _branch_log(ratio):
    """log of a ratio close to -1, returned with imaginary part near -pi."""
    ang = np.mod(np.angle(ratio), TWO_PI) - TWO_PI
    return np.log(np.abs(ratio)) + 1j * ang


def _reflect_batch(b: FlowBatch, vf, dom, cfg):
    """Apply the specular jump to rays sitting on the boundary.

    Returns the reflected batch and the gradient of the hit time with
    respect to the initial data, shape (N, 2n).
    """
    n = b.ndim
    nu = dom.outward_normal(b.x, check=True)
    xdot_m, xidot_m, *_ = _rhs(vf, b.x, b.xi, None, None, cfg.xi_min)
    vn = np.sum(xdot_m * nu, axis=-1)
    tmin = cfg.transversality_rel * vf.c_min
    if np.any(np.abs(vn) < tmin):
        raise GuardError("flow.transversality", "tangential boundary hit")
    eye = np.eye(n)
    P = eye - 2.0 * nu[:, :, None] * nu[:, None, :]
    xi_p = np.einsum("nij,nj->ni", P, b.xi)
    out = FlowBatch(b.x, xi_p, t=b.t, nrefl=b.nrefl + 1)
    w = np.concatenate([-nu / vn[:, None], np.zeros_like(nu)], axis=1)
    if not b.has_jacobian:
        return out, None
    Dnu = dom.normal_jacobian(b.x)
    proj = np.sum(nu * b.xi, axis=-1)
    dxi_dx = -2.0 * (
        proj[:, None, None] * Dnu
        + nu[:, :, None] * np.einsum("nki,nk->ni", Dnu, b.xi)[:, None, :]
    )
    N = b.size
    DR = np.zeros((N, 2 * n, 2 * n))
    DR[:, :n, :n] = eye
    DR[:, n:, :n] = dxi_dx
    DR[:, n:, n:] = P
    xdot_p, xidot_p, *_ = _rhs(vf, b.x, xi_p, None, None, cfg.xi_min)
    X0 = np.concatenate([xdot_m, xidot_m], axis=1)
    X1 = np.concatenate([xdot_p, xidot_p], axis=1)
    M = DR + (np.einsum("nij,nj->ni", DR, X0) - X1)[:, :, None] * w[:, None, :]
    FU = np.concatenate([b.U, b.V], axis=1)
    new = M @ FU
    out.U = new[:, :n].copy()
    out.V = new[:, n:].copy()
    ratio = small_det(out.U) / small_det(b.U)
    out.logdet = b.logdet + _branch_log(ratio)
    F = np.concatenate(
        [np.concatenate([b.U.real, b.U.imag], axis=2),
         np.concatenate([b.V.real, b.V.imag], axis=2)], axis=1)
    dT = np.einsum("ni,nij->nj", w, F)
    return out, dT


def propagate(batch: FlowBatch, durations, vf, dom=None, cfg: FlowConfig = FlowConfig(),
              events: list | None = None, fixed_steps: bool = False) -> FlowBatch:
    """Advance every ray of ``batch`` by its own (signed) duration.

    Parameters
    ----------
    durations : array_like, shape (N,) or scalar
        Time to integrate each ray, negative for backward integration.
    dom : domain or None
        If given, boundary hits are detected and reflected.  If ``None`` the
        free flow is continued through the whole space.
    events : list, optional
        Receives a :class:`ReflectionEvent` per hit.
    fixed_steps : bool
        Free flow only.  Use a common number of equal steps per ray,
        ``ceil(max|duration| / h_max)``, instead of ``h_max`` steps plus a
        partial last step.
    """
    b = batch.copy()
    N = b.size
    rem = np.broadcast_to(np.asarray(durations, dtype=float), (N,)).copy()
    if fixed_steps and dom is None:
        nsteps = int(np.ceil(np.max(np.abs(rem), initial=0.0) / cfg.h_max))
        if nsteps == 0:
            return b
        h = rem / nsteps
        for _ in range(nsteps):
            b = _rk4(b, h, vf, cfg.xi_min)
        return b
    while True:
        active = np.nonzero(np.abs(rem) > 0)[0]
        if active.size == 0:
            return b
        sub = b.take(active)
        h = np.sign(rem[active]) * np.minimum(np.abs(rem[active]), cfg.h_max)
        trial = _rk4(sub, h, vf, cfg.xi_min)
        if dom is not None:
            hit = dom.signed_distance(trial.x) > 0
        else:
            hit = np.zeros(active.size, dtype=bool)
        ok = ~hit
        if np.any(ok):
            b.put(active[ok], trial.take(ok))
            rem[active[ok]] = np.where(np.abs(rem[active[ok]]) <= cfg.h_max, 0.0,
                                       rem[active[ok]] - h[ok])
        if np.any(hit):
            hs = sub.take(hit)
            tau = _locate_hit(hs, h[hit], vf, dom, cfg)
            at = _rk4(hs, tau, vf, cfg.xi_min)
            post, dT = _reflect_batch(at, vf, dom, cfg)
            idx = active[hit]
            b.put(idx, post)
            rem[idx] = rem[idx] - tau
            if events is not None:
                nu = dom.outward_normal(at.x, check=False)
                for j, i in enumerate(idx):
                    rec = ReflectionRecord(
                        float(at.t[j]), at.x[j].copy(), nu[j].copy(),
                        None if dT is None else dT[j].copy())
                    events.append(ReflectionEvent(int(i), rec, post.take([j])))


# ----------------------------------------------------------------------------
# single-ray interface


def _batch_of(state: PhaseFlowState) -> FlowBatch:
    return FlowBatch(state.x[None], state.xi[None], state.U[None], state.V[None],
                     np.array([state.log_det_U]), np.array([state.t]),
                     np.array([len(state.reflections)]))


def flow_rhs(state: PhaseFlowState, vf, xi_min: float = 1e-8):
    """Time derivatives ``(xdot, xidot, Udot, Vdot, logdet_dot)`` of a state."""
    b = _batch_of(state)
    xd, xid, Ud, Vd, Ld = _rhs(vf, b.x, b.xi, b.U, b.V, xi_min)
    return xd[0], xid[0], Ud[0], Vd[0], complex(Ld[0])


def advance(state: PhaseFlowState, dt_target: float, vf, dom, cfg: FlowConfig = FlowConfig()):
    """Advance by at most ``dt_target``, stopping exactly at a boundary hit.

    Returns
    -------
    state : PhaseFlowState
        The state after the step, or at the hit (before reflection).
    hit : ReflectionRecord or None
        Hit time, point and normal if the ray reached the boundary.
    """
    b = _batch_of(state)
    h = np.array([np.sign(dt_target) * min(abs(dt_target), cfg.h_max)])
    trial = _rk4(b, h, vf, cfg.xi_min)
    if dom is None or dom.signed_distance(trial.x)[0] <= 0:
        return trial.state(0, state.reflections), None
    tau = _locate_hit(b, h, vf, dom, cfg)
    at = _rk4(b, tau, vf, cfg.xi_min)
    nu = dom.outward_normal(at.x, check=True)[0]
    rec = ReflectionRecord(float(at.t[0]), at.x[0].copy(), nu, None)
    return at.state(0, state.reflections), rec


def reflect(state: PhaseFlowState, dom, vf, cfg: FlowConfig = FlowConfig()) -> PhaseFlowState:
    """Specular reflection of a state lying on the boundary."""
    b = _batch_of(state)
    post, dT = _reflect_batch(b, vf, dom, cfg)
    nu = dom.outward_normal(b.x, check=False)[0]
    rec = ReflectionRecord(state.t, state.x.copy(), nu, dT[0].copy())
    return post.state(0, state.reflections + (rec,))


def _refuse_near_reflection(events, final: FlowBatch, t, vf, dom, cfg):
    for ev in events:
        if abs(ev.record.T_k - t) <= cfg.time_tol:
            raise GuardError("flow.reflection_time", f"t={t} is a reflection instant")
    xd, *_ = _rhs(vf, final.x, final.xi, None, None, cfg.xi_min)
    speed = np.linalg.norm(xd, axis=-1)
    close = -dom.signed_distance(final.x) <= speed * cfg.time_tol
    if np.any(close):
        raise GuardError("flow.reflection_time", f"t={t} is within time_tol of a reflection")


def broken_flow(y, eta, t: float, vf, dom, cfg: FlowConfig = FlowConfig()) -> PhaseFlowState:
    """Broken bicharacteristic flow of ``(y, eta)`` to time ``t`` (either sign)."""
    b0 = initial_batch(y, eta)
    if dom.signed_distance(b0.x)[0] >= 0:
        raise GuardError("flow.outside", "starting point is not inside the domain")
    events: list = []
    b = propagate(b0, t, vf, dom, cfg, events)
    _refuse_near_reflection(events, b, t, vf, dom, cfg)
    return b.state(0, [e.record for e in events])


def broken_flow_points(y, eta, t: float, vf, dom, cfg: FlowConfig = FlowConfig()):
    """Positions and momenta of many rays under the broken flow (no Jacobians).

    Returns
    -------
    x, xi : ndarray, shape (N, n)
    nrefl : ndarray of int
    """
    b = propagate(initial_batch(y, eta, jacobian=False), t, vf, dom, cfg)
    return b.x, b.xi, b.nrefl


def real_jacobian(state: PhaseFlowState) -> np.ndarray:
    """``[[Re U, Im U], [Re V, Im V]]``."""
    U, V = state.U, state.V
    return np.block([[U.real, U.imag], [V.real, V.imag]])


def symplectic_form(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def invariant_defects(state: PhaseFlowState) -> dict:
    """Residuals of the algebraic identities every Jacobian state satisfies."""
    n = state.ndim
    U, V = state.U, state.V
    F = real_jacobian(state)
    J = symplectic_form(n)
    G = V @ np.linalg.inv(U)
    return {
        "symplectic": float(np.max(np.abs(F.T @ J @ F - J))),
        "UtV_sym": float(np.max(np.abs(U.T @ V - V.T @ U))),
        "wronskian": float(np.max(np.abs(V.T @ U.conj() - U.T @ V.conj() - 2j * np.eye(n)))),
        "logdet": float(abs(np.exp(state.log_det_U) / np.linalg.det(U) - 1.0)),
        "hessian_sym": float(np.max(np.abs(G - G.T))),
        "im_hessian_min_eig": float(np.min(np.linalg.eigvalsh(0.5 * (G.imag + G.imag.T)))),
    }
