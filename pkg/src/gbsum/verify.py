"""Fast invariant suite used by ``gbsum verify``.

Each check returns records ``{name, value, threshold, op, passed}``; the
suite takes about a minute on one core.  The slow scaling studies live in the
acceptance tests.
"""

from __future__ import annotations

import numpy as np

from . import beams as bm
from . import flow as fl
from . import geometry as geo
from . import media
from . import oracle as orc
from . import wigner as wg
from .fbi import SpatialField, bump_chi, covering_grid, fbi_forward


def _rec(name, value, threshold, op="<="):
    value = float(value)
    if op == "in":
        ok = threshold[0] <= value <= threshold[1]
    elif op == "<=":
        ok = value <= threshold
    else:
        ok = value >= threshold
    return {"name": name, "value": value, "threshold": threshold, "op": op, "passed": bool(ok)}


def check_fbi(rng) -> list:
    dom = geo.Interval(0.0, 4.0)
    eps = 0.02
    grid = orc.interval_grid(dom, eps / 16)
    x = grid.points()
    out = []
    for k in range(3):
        c, r, eta = rng.uniform(1.5, 2.5), rng.uniform(0.5, 1.0), rng.uniform(-2, 2)
        a = SpatialField(grid, bump_chi(r, x - c) * np.exp(1j * eta * x[:, 0] / eps))
        T = fbi_forward(a, eps, covering_grid([a], eps))
        out.append(_rec(f"fbi.isometry[{k}]", T.norm() / a.norm(), (0.99, 1.01), "in"))
    return out


def _quad_gaussian(a, b, M, N, xi):
    d = a.size
    L, n = 12.0, 1201 if d == 1 else 241
    s = np.linspace(-L, L, n)
    h = s[1] - s[0]
    mesh = np.stack(np.meshgrid(*([s] * d), indexing="ij"), -1).reshape(-1, d)
    qa = np.einsum("pi,ij,pj->p", mesh - a, M, mesh - a)
    qb = np.einsum("pi,ij,pj->p", mesh - b, N, mesh - b)
    return np.sum(np.exp(-1j * mesh @ xi - qa / 2 - qb / 2)) * h**d


def _random_sym(rng, d):
    X = rng.normal(size=(d, d))
    Y = rng.normal(size=(d, d))
    return X @ X.T / d + 0.5 * np.eye(d) + 1j * 0.5 * (Y + Y.T)


def check_gaussian_product(rng, cases: int = 5) -> list:
    out = []
    for d in (1, 2):
        err, inv = 0.0, 0.0
        for _ in range(cases):
            M, N = _random_sym(rng, d), _random_sym(rng, d)
            a, b, xi = rng.normal(size=d), rng.normal(size=d), rng.normal(size=d)
            cf = wg.gaussian_product_fourier(a, b, M, N, xi)
            q = _quad_gaussian(a, b, M, N, xi)
            err = max(err, abs(cf - q) / abs(q))
            iv = wg.gaussian_product_transform(M, N).invariants()
            inv = max(inv, iv["symmetric"], iv["symplectic"], iv["QA_minus_B"], iv["det_minus_one"])
            if iv["re_min_eig"] <= 0:
                inv = np.inf
        out.append(_rec(f"wigner.tfgg_vs_quadrature[d={d}]", err, 1e-8))
        out.append(_rec(f"wigner.tfgg_invariants[d={d}]", inv, 1e-10))
    return out


def check_flow(rng, rays: int = 10) -> list:
    dom = geo.Disc((0.0, 0.0), 1.0)
    vf = media.SmoothBlend(1.0, 0.3, 0.5)
    cfg = fl.FlowConfig(h_max=2e-3)
    worst = {"symplectic": 0.0, "H": 0.0, "wronskian": 0.0, "UtV_sym": 0.0}
    im_min = np.inf
    for _ in range(rays):
        r, th, ph = 0.5 * np.sqrt(rng.uniform()), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
        y = np.array([r * np.cos(th), r * np.sin(th)])
        eta = np.array([np.cos(ph), np.sin(ph)])
        b = fl.initial_batch(y[None], eta[None])
        events: list = []
        h0 = float(vf.value(y) * np.linalg.norm(eta))
        t_total = 0.0
        while len(events) < 3:
            b = fl.propagate(b, 0.5, vf, dom, cfg, events)
            t_total += 0.5
        st = b.state(0)
        d = fl.invariant_defects(st)
        worst["symplectic"] = max(worst["symplectic"], d["symplectic"])
        worst["wronskian"] = max(worst["wronskian"], d["wronskian"])
        worst["UtV_sym"] = max(worst["UtV_sym"], d["UtV_sym"])
        worst["H"] = max(worst["H"], abs(float(vf.value(st.x) * np.linalg.norm(st.xi)) - h0) / h0)
        im_min = min(im_min, d["im_hessian_min_eig"])
    return [
        _rec("flow.symplectic_defect", worst["symplectic"], 1e-7),
        _rec("flow.hamiltonian_drift", worst["H"], 1e-8),
        _rec("flow.riccati_UtV", worst["UtV_sym"], 1e-8),
        _rec("flow.riccati_wronskian", worst["wronskian"], 1e-8),
        _rec("flow.im_hessian_min_eig", im_min, 0.0, ">="),
    ]


def check_wigner(rng) -> list:
    dom = geo.Interval(0.0, 12.0)
    vf = media.Constant(1.0)
    eps = 0.01
    grid = orc.interval_grid(dom, eps / 16)
    prof = orc.WKBProfile((6.0,), 1.0, (1.0,))
    dat = orc.wkb_data(prof, eps, grid, vf, "right")
    a = dat.uI.scaled(1 / eps)
    b = SpatialField(grid, a.values * bump_chi(1.5, grid.points() - 5.8))
    phi = wg.TestFunction(6.2, 0.6, 1.0, 0.5)
    pab = wg.wigner_pairing(a, b, eps, phi)
    pba = wg.wigner_pairing(b, a, eps, phi)
    lim = dat.measure_pairing(phi, vf)
    paa = wg.wigner_pairing(a, a, eps, phi)
    return [
        _rec("wigner.hermitian", abs(pab - np.conj(pba)) / abs(pab), 1e-10),
        _rec("wigner.wkb_limit", abs(paa.real - lim) / lim, 0.05),
    ]


def check_reference() -> list:
    errs = [orc.standing_mode_error(n, T=0.5, cfl=0.9) for n in (100, 200)]
    vf = media.Constant(1.0)
    dom = geo.Interval(0.0, 3.0)
    grid = orc.interval_grid(dom, 1e-2)
    u0 = SpatialField(grid, bump_chi(0.5, grid.points() - 1.5))
    ref = orc.reference_solve_1d(u0, SpatialField.zeros(grid), vf, "dirichlet", [0.0, 2.0], dom)
    return [
        _rec("oracle.standing_mode", errs[0], 1e-4),
        _rec("oracle.refinement_ratio", errs[0] / errs[1], (3.0, 5.0), "in"),
        _rec("oracle.energy_drift", ref.energy_drift, 1e-6),
    ]


def check_beam_residual() -> list:
    vf = media.SmoothBlend(1.0, 0.3, 1.0)
    eps_list = np.array([1 / 20, 1 / 40, 1 / 80])
    res = [bm.beam_residual_norm([-1.0], [1.0], vf, e, np.linspace(0, 2, 5), cutoff_d=2.0)
           for e in eps_list]
    slope = np.polyfit(np.log(eps_list), np.log(res), 1)[0]
    return [_rec("beams.interior_residual_slope", slope, (0.4, 0.7), "in")]


CHECKS = {
    "fbi": check_fbi,
    "tfgg": check_gaussian_product,
    "flow": check_flow,
    "wigner": check_wigner,
    "reference": lambda rng: check_reference(),
    "beam": lambda rng: check_beam_residual(),
}


def run_suite(seed: int = 0, names=None) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for name, fn in CHECKS.items():
        if names is None or name in names:
            out.extend(fn(rng))
    return out
