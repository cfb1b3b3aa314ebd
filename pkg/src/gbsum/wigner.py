"""Wigner pairings, the half-wave split of the data, the Gaussian-product
Fourier transform and the energy-transport check.

Wigner quantities are only computed as pairings with test functions,

    <w(a, b), phi> = (2 pi)^-n  int int  F_xi phi(x, v) a(x + eps v/2) b*(x - eps v/2) dv dx,

where ``F_xi phi(x, v) = int exp(-i v.xi) phi(x, xi) d xi``.  Pairings are
implemented in one space dimension.  The ``v`` grid has step ``2 dx / eps`` so
that both shifted arguments fall on grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flow as fl
from .errors import GuardError
from .fbi import SpatialField, bump_chi

TAIL_TOL = 1e-10


# ----------------------------------------------------------------------------
# test functions


@dataclass
class TestFunction:
    """``phi(x, xi) = chi_rx(x - x0) chi_rxi(xi - xi0) |xi|^p`` in one dimension.

    ``chi_r`` is 1 on ``|s| <= r/2`` and 0 for ``|s| >= r``.
    """

    __test__ = False  # not a pytest class

    x0: float
    rx: float
    xi0: float
    rxi: float
    xi_power: float = 0.0
    tail_tol: float = TAIL_TOL
    _table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.rx > 0 and self.rxi > 0):
            raise GuardError("wigner.test_function", "radii must be positive")
        if abs(self.xi0) <= self.rxi:
            raise GuardError("wigner.test_function", "support must avoid xi = 0")

    def __call__(self, x, xi):
        """Values at phase-space points; ``x`` and ``xi`` have shape ``(..., 1)``."""
        x = np.asarray(x, float)[..., 0]
        xi = np.asarray(xi, float)[..., 0]
        return self._scalar(x, xi)

    def _scalar(self, x, xi):
        val = bump_chi(self.rx, (x - self.x0)[..., None]) * bump_chi(self.rxi, (xi - self.xi0)[..., None])
        return val * np.abs(xi) ** self.xi_power if self.xi_power else val

    def support_distance(self, dom) -> tuple:
        """Distances of the support to the boundary (in ``x``) and to ``xi = 0``."""
        dx = float(-dom.signed_distance(np.array([self.x0]))) - self.rx
        return dx, abs(self.xi0) - self.rxi

    def profile(self, zeta):
        """``chi_rxi(zeta) |zeta + xi0|^p``: the xi-profile recentred at ``xi0``."""
        zeta = np.asarray(zeta, float)
        val = bump_chi(self.rxi, zeta[..., None])
        return val * np.abs(zeta + self.xi0) ** self.xi_power if self.xi_power else val

    def _build_table(self):
        # g is the Fourier transform of a compactly supported smooth profile,
        # sampled with the FFT; the w range doubles until the tail is found
        r = self.rxi
        w_max = 64.0 / r
        dw_target = 0.02 / r
        while True:
            dz = np.pi / (4.0 * w_max)
            n = 1 << int(np.ceil(np.log2(max(2 * np.pi / (dw_target * dz), 8 * r / dz))))
            z0 = -0.5 * n * dz
            zeta = z0 + dz * np.arange(n)
            prof = self.profile(zeta)
            w = 2 * np.pi * np.fft.fftfreq(n, d=dz)
            g = dz * np.exp(-1j * w * z0) * np.fft.fft(prof)
            order = np.argsort(w)
            w = w[order]
            g = g[order]
            pos = w >= 0
            mag = np.abs(g[pos])
            wp = w[pos]
            g0 = mag[0]
            above = np.nonzero(mag > self.tail_tol * g0)[0]
            w_tail = wp[above[-1] + 1] if above.size and above[-1] + 1 < wp.size else None
            if w_tail is not None and w_tail < 0.5 * w_max:
                break
            if w_max > 1e5 / r:
                raise GuardError("wigner.v_max", "xi-profile transform does not decay to the tail tolerance")
            w_max *= 2.0
        keep = np.abs(w) <= 1.05 * w_tail
        self._table = (w[keep], g[keep], float(w_tail), float(g0))

    @property
    def w_tail(self) -> float:
        if self._table is None:
            self._build_table()
        return self._table[2]

    def profile_transform(self, w):
        """``g(w) = int exp(-i w zeta) profile(zeta) d zeta``, zero past the tail."""
        if self._table is None:
            self._build_table()
        wt, gt, w_tail, _ = self._table
        w = np.asarray(w, float)
        out = np.interp(w, wt, gt.real, left=0.0, right=0.0) + 1j * np.interp(
            w, wt, gt.imag, left=0.0, right=0.0)
        return np.where(np.abs(w) <= w_tail, out, 0.0)

    def terms(self, x):
        """Per-node terms ``(coef, mu)``: ``F_xi phi(x, v) = sum coef e^{-i v xi0/mu} g(v/mu)``."""
        x = np.asarray(x, float)
        coef = bump_chi(self.rx, (x - self.x0)[..., None])
        return [(coef, np.ones_like(x))]


@dataclass
class TransportedTestFunction:
    """``phi o phi_b^s`` for the broken flow of ``vf`` in ``dom``.

    The flow is positively homogeneous in the momentum, so only unit
    momenta ``+1`` and ``-1`` are traced from each node:
    ``phi_b^s(x, xi) = (X_sigma(x), |xi| Xi_sigma(x))`` with ``sigma = sign xi``.
    """

    __test__ = False

    base: TestFunction
    s: float
    vf: object
    dom: object
    cfg: fl.FlowConfig = field(default_factory=lambda: fl.FlowConfig(h_max=0.01))
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def w_tail(self) -> float:
        return self.base.w_tail

    def profile_transform(self, w):
        return self.base.profile_transform(w)

    @property
    def xi0(self) -> float:
        return self.base.xi0

    def __call__(self, x, xi):
        """Values at phase-space points of shape ``(N, 1)``."""
        x = np.asarray(x, float)[:, 0]
        xi = np.asarray(xi, float)[:, 0]
        X, Xi = self._flow(x)
        col = np.where(xi > 0, 0, 1)
        Xs = np.take_along_axis(X, col[:, None], 1)[:, 0]
        Xis = np.take_along_axis(Xi, col[:, None], 1)[:, 0]
        return np.nan_to_num(self.base._scalar(Xs, np.abs(xi) * Xis))

    def _flow(self, x):
        key = (x.size, float(x[0]), float(x[-1]))
        if key in self._cache:
            return self._cache[key]
        N = x.size
        y = np.concatenate([x, x])[:, None]
        eta = np.concatenate([np.ones(N), -np.ones(N)])[:, None]
        inside = self.dom.signed_distance(y) < 0
        X = np.full((2 * N,), np.nan)
        Xi = np.full((2 * N,), np.nan)
        idx = np.nonzero(inside)[0]
        if idx.size:
            events: list = []
            b = fl.propagate(fl.initial_batch(y[idx], eta[idx], jacobian=False), self.s,
                             self.vf, self.dom, self.cfg, events)
            X[idx] = b.x[:, 0]
            Xi[idx] = b.xi[:, 0]
            self._events = (idx, events)
        out = (np.stack([X[:N], X[N:]], 1), np.stack([Xi[:N], Xi[N:]], 1))
        self._cache[key] = out
        return out

    def check_reflection_times(self, x, time_tol: float | None = None):
        """Refuse when a relevant ray hits the boundary within ``time_tol`` of ``|s|``."""
        tol = self.cfg.time_tol if time_tol is None else time_tol
        x = np.asarray(x, float)
        self._flow(x)
        # any ray landing in the x-support counts, whatever its momentum sign,
        # since the transported function jumps across such a reflection
        X, _ = self._flow(x)
        near = bump_chi(self.base.rx, (np.nan_to_num(X, nan=np.inf) - self.base.x0).reshape(-1, 1)) > 0
        relevant = np.concatenate([near.reshape(X.shape)[:, 0], near.reshape(X.shape)[:, 1]])
        idx, events = getattr(self, "_events", (np.array([], int), []))
        for ev in events:
            ray = idx[ev.index]
            if relevant[ray] and abs(abs(ev.record.T_k) - abs(self.s)) <= tol:
                raise GuardError("wigner.reflection_time",
                                 "a transported test-function ray reflects at the pairing time")

    def terms(self, x):
        x = np.asarray(x, float)
        X, Xi = self._flow(x)
        out = []
        for col, sigma in ((0, 1.0), (1, -1.0)):
            Xc, Xic = X[:, col], Xi[:, col]
            ok = np.isfinite(Xc)
            mu = np.where(ok, sigma * np.nan_to_num(Xic), 1.0)
            # the profile lives on sign(xi0); only xi of sign sigma count
            ok &= np.sign(self.base.xi0) * np.sign(mu) == sigma
            coef = np.where(ok, bump_chi(self.base.rx, (np.nan_to_num(Xc) - self.base.x0)[:, None]), 0.0)
            coef = coef * (np.abs(mu) ** (self.base.xi_power - 1.0))
            out.append((coef, mu))
        return out


# ----------------------------------------------------------------------------
# pairings


def _check_1d(*fields):
    for f in fields:
        if f.grid.ndim != 1:
            raise GuardError("wigner.dimension", "Wigner pairings are implemented in one dimension")
    g0 = fields[0].grid.axes[0]
    for f in fields[1:]:
        g = f.grid.axes[0]
        if g.count != g0.count or abs(g.start - g0.start) > 1e-12 or abs(g.step - g0.step) > 1e-15:
            raise GuardError("wigner.grid", "fields must share a grid")


def wigner_pairing(a: SpatialField, b: SpatialField, eps: float, phi, block: int = 256) -> complex:
    """``<w_eps(a, b), phi>`` by quadrature; ``phi`` is a (transported) test function."""
    _check_1d(a, b)
    ax = a.grid.axes[0]
    x = ax.nodes
    dx = ax.step
    dv = 2.0 * dx / eps
    terms = phi.terms(x)
    if isinstance(phi, TransportedTestFunction):
        phi.check_reflection_times(x)
    A = a.values
    B = np.conj(b.values)
    N = x.size
    total = 0.0 + 0.0j
    xi0 = phi.xi0
    for coef, mu in terms:
        act = np.nonzero(coef != 0)[0]
        if act.size == 0:
            continue
        c = coef[act]
        m = mu[act]
        v_max = phi.w_tail * float(np.max(np.abs(m)))
        # beyond |j| = N one shifted argument always leaves the grid, where
        # the fields vanish
        J = min(int(np.ceil(v_max / dv)), N)
        for j0 in range(-J, J + 1, block):
            js = np.arange(j0, min(j0 + block, J + 1))
            ip = act[None, :] + js[:, None]
            im = act[None, :] - js[:, None]
            ok = (ip >= 0) & (ip < N) & (im >= 0) & (im < N)
            prod = np.where(ok, A[np.clip(ip, 0, N - 1)] * B[np.clip(im, 0, N - 1)], 0.0)
            v = js[:, None] * dv
            Fv = np.exp(-1j * v * xi0 / m[None, :]) * phi.profile_transform(v / m[None, :])
            total += np.sum(Fv * prod * c[None, :])
    return complex(total * dx * dv / (2 * np.pi))


def pairing_bound(phi, x, eps: float) -> float:
    """``C = (2 pi)^-1 int sup_x |F_xi phi(x, v)| dv``.

    ``|<w(a, b), phi>| <= C ||a|| ||b||`` because, at fixed ``v``, the
    shifted product ``a(x + eps v/2) conj(b(x - eps v/2))`` has ``x``-integral
    at most ``||a|| ||b||``.
    """
    x = np.asarray(x, float)
    best = 0.0
    for coef, mu in phi.terms(x):
        act = np.nonzero(coef)[0]
        if act.size == 0:
            continue
        m = np.abs(mu[act])
        v = np.linspace(-phi.w_tail * m.max(), phi.w_tail * m.max(), 4001)
        F = np.abs(coef[act][None, :]) * np.abs(phi.profile_transform(v[:, None] / mu[act][None, :]))
        best += np.trapezoid(F.max(axis=1), v)
    return best / (2 * np.pi)


def abs_D(f: SpatialField, pad: int = 2, edge_rel: float = 1e-10) -> SpatialField:
    """Fourier multiplier ``|xi|`` on a zero-padded copy of the grid."""
    _check_1d(f)
    vals = f.values
    m = np.max(np.abs(vals)) if vals.size else 0.0
    k = max(1, vals.size // 50)
    if m > 0 and max(np.max(np.abs(vals[:k])), np.max(np.abs(vals[-k:]))) > edge_rel * m:
        raise GuardError("wigner.edge", "field support is too close to the grid edge")
    N = vals.size
    L = pad * N
    ext = np.zeros(L, complex)
    ext[:N] = vals
    xi = 2 * np.pi * np.fft.fftfreq(L, d=f.grid.axes[0].step)
    out = np.fft.ifft(np.abs(xi) * np.fft.fft(ext))[:N]
    return SpatialField(f.grid, out)


def half_wave_data(uI: SpatialField, vI: SpatialField, vf, eps: float | None = None):
    """``(Upsilon+, Upsilon-) = vI +- i c |D| uI``."""
    c = vf.value(uI.grid.points())
    cD = c * abs_D(uI).values
    return (SpatialField(uI.grid, vI.values + 1j * cD), SpatialField(uI.grid, vI.values - 1j * cD))


def energy_pairing(dt_u: SpatialField, dx_u, vf, eps: float, phi) -> float:
    """``<w[d_t u]/2 + sum_j w[c d_j u]/2, phi>``."""
    c = vf.value(dt_u.grid.points())
    val = 0.5 * wigner_pairing(dt_u, dt_u, eps, phi)
    for f in dx_u:
        cf = SpatialField(f.grid, c * f.values)
        val += 0.5 * wigner_pairing(cf, cf, eps, phi)
    return float(val.real)


@dataclass
class TransportResult:
    t: float
    lhs: float
    rhs: float
    rel_err: float
    diagnostics: dict


def transport_check(t: float, phi: TestFunction, run, exact_derivatives: bool = True,
                    floor_rel: float = 1e-12) -> TransportResult:
    """Compare the energy pairing of the superposition at time ``t`` with the
    transported pairings of the half-wave data.

    ``rhs = <w(Upsilon+), phi o phi_b^-t>/4 + <w(Upsilon-), phi o phi_b^t>/4``;
    at ``t = 0`` this is the energy pairing of the data up to cross terms.
    """
    from .summation import assemble_derivatives, physical_energy

    eps = run.eps
    dt_u, dx_u = assemble_derivatives(run, t, exact=exact_derivatives)
    lhs = energy_pairing(dt_u, dx_u, run.vf, eps, phi)
    up, um = half_wave_data(run.u_cut, run.v_cut, run.vf, eps)
    phi_m = TransportedTestFunction(phi, -t, run.vf, run.dom)
    phi_p = TransportedTestFunction(phi, t, run.vf, run.dom)
    rp = wigner_pairing(up, up, eps, phi_m).real
    rm = wigner_pairing(um, um, eps, phi_p).real
    rhs = 0.25 * (rp + rm)
    total = physical_energy(dt_u, dx_u, run.vf)
    floor = floor_rel * total
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), floor)
    return TransportResult(t, lhs, rhs, rel, {"plus": 0.25 * rp, "minus": 0.25 * rm, "energy": total})


# ----------------------------------------------------------------------------
# Gaussian product Fourier transform


def _check_sym_pos(M, name):
    M = np.atleast_2d(np.asarray(M, complex))
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise GuardError("wigner.symmetric", f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(0.5 * (M.real + M.real.T))) <= 0:
        raise GuardError("wigner.positive", f"Re {name} must be positive definite")
    return M


@dataclass
class GaussianProductTransform:
    M: np.ndarray
    N: np.ndarray
    Q: np.ndarray
    sqrt_det: complex

    @property
    def A(self):
        d = self.M.shape[0]
        I = np.eye(d)
        return np.block([[I, I], [-1j * self.N, 1j * self.M]])

    @property
    def B(self):
        d = self.M.shape[0]
        I = np.eye(d)
        return np.block([[self.N, self.M], [-1j * I, 1j * I]])

    def invariants(self) -> dict:
        d = self.M.shape[0]
        J = np.block([[np.zeros((d, d)), np.eye(d)], [-np.eye(d), np.zeros((d, d))]])
        Q = self.Q
        re = 0.5 * (Q.real + Q.real.T)
        return {
            "symmetric": float(np.abs(Q - Q.T).max()),
            "symplectic": float(np.abs(Q.T @ J @ Q - J).max()),
            "QA_minus_B": float(np.abs(Q @ self.A - self.B).max()),
            "det_minus_one": float(abs(np.linalg.det(Q) - 1.0)),
            "re_min_eig": float(np.min(np.linalg.eigvalsh(re))),
        }


def homotopy_sqrt_det(S, steps: int = 16, max_steps: int = 2**16) -> complex:
    """``det(S)^(1/2)`` continued along ``(1 - s) Id + s S`` from ``sqrt(det Id) = 1``.

    The step count doubles until no step turns the determinant's argument by
    more than ``pi/4``.
    """
    S = np.atleast_2d(np.asarray(S, complex))
    I = np.eye(S.shape[0])
    while steps <= max_steps:
        s = np.linspace(0.0, 1.0, steps + 1)
        dets = np.array([np.linalg.det((1 - a) * I + a * S) for a in s])
        if np.any(dets == 0):
            raise GuardError("wigner.homotopy", "determinant vanishes along the homotopy")
        dang = np.angle(dets[1:] / dets[:-1])
        if np.max(np.abs(dang)) <= np.pi / 4:
            arg = np.sum(dang)
            return complex(np.sqrt(np.abs(dets[-1])) * np.exp(0.5j * arg))
        steps *= 2
    raise GuardError("wigner.homotopy", "homotopy did not resolve the determinant argument")


def gaussian_product_transform(M, N) -> GaussianProductTransform:
    M = _check_sym_pos(M, "M")
    N = _check_sym_pos(N, "N")
    S = M + N
    Si = np.linalg.inv(S)
    Q = np.block([[2 * M @ Si @ N, 1j * (N - M) @ Si], [1j * Si @ (N - M), 2 * Si]])
    return GaussianProductTransform(M, N, Q, homotopy_sqrt_det(S))


def gaussian_product_fourier(a, b, M, N, xi) -> complex:
    """``int exp(-i x.xi) exp(-(x-a).M(x-a)/2) exp(-(x-b).N(x-b)/2) dx`` in closed form."""
    a = np.atleast_1d(np.asarray(a, float))
    b = np.atleast_1d(np.asarray(b, float))
    xi = np.atleast_1d(np.asarray(xi, float))
    g = gaussian_product_transform(M, N)
    d = a.size
    z = np.concatenate([b - a, xi])
    quad = z @ g.Q @ z
    return complex((2 * np.pi) ** (d / 2) / g.sqrt_det * np.exp(-1j * xi @ (a + b) / 2 - quad / 4))


# ----------------------------------------------------------------------------
# consistency checks


def abs_D_consistency(a: SpatialField, b: SpatialField, eps: float, phi: TestFunction) -> dict:
    """Compare ``<w(a, |D| b), phi>`` with ``<w(a, b / eps), |xi| phi>``."""
    lhs = wigner_pairing(a, abs_D(b), eps, phi)
    phi1 = TestFunction(phi.x0, phi.rx, phi.xi0, phi.rxi, phi.xi_power + 1.0, phi.tail_tol)
    rhs = wigner_pairing(a, b.scaled(1.0 / eps), eps, phi1)
    return {"lhs": lhs, "rhs": rhs, "rel_err": abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)}


def cross_branch_check(beam_k: SpatialField, beam_l: SpatialField, eps: float,
                       phi_k: TestFunction, phi_l: TestFunction) -> dict:
    """Cross pairings of two beams against test functions localised on each.

    ``ratio`` is the largest cross pairing over the smaller diagonal pairing.
    """
    dk = wigner_pairing(beam_k, beam_k, eps, phi_k).real
    dl = wigner_pairing(beam_l, beam_l, eps, phi_l).real
    cross = max(abs(wigner_pairing(beam_k, beam_l, eps, phi)) for phi in (phi_k, phi_l))
    return {"diag_k": dk, "diag_l": dl, "cross": cross, "ratio": cross / min(abs(dk), abs(dl))}
