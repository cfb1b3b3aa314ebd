"""Acceptance criteria C1-C10.

Each test carries a ``criterion`` marker; ``conftest.py`` prints one line per
criterion at the end of the run.  Measured quantities are attached with
``record_property`` so the summary line shows them.
"""

import time

import numpy as np
import pytest

from gbsum import beams as bm
from gbsum import fbi
from gbsum import flow as fl
from gbsum import geometry as geo
from gbsum import media
from gbsum import oracle as orc
from gbsum import summation as sm
from gbsum import wigner as wg
from gbsum.fbi import SpatialField, bump_chi

EPS3 = (1 / 50, 1 / 100, 1 / 200)


def _slope(eps, vals):
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


# ----------------------------------------------------------------------------
# C1


@pytest.mark.criterion("C1", "FBI isometry on 5 fields x 3 eps")
def test_c1_fbi_isometry(record_property):
    t0 = time.time()
    dom = geo.Interval(0.0, 4.0)
    # (centre, radius, carrier) for five smooth compactly supported fields
    fields = [(2.0, 1.0, 1.0), (1.8, 0.6, -1.5), (2.2, 0.8, 0.0), (2.0, 1.2, 2.0), (2.1, 0.5, 0.7)]
    ratios = []
    for eps in EPS3:
        grid = orc.interval_grid(dom, eps / 16)
        x = grid.points()
        for c, r, eta in fields:
            ramp_phase = eta * x[:, 0] + 0.3 * (x[:, 0] - c) ** 2
            a = SpatialField(grid, bump_chi(r, x - c) * np.exp(1j * ramp_phase / eps))
            T = fbi.fbi_forward(a, eps, fbi.covering_grid([a], eps))
            ratios.append(T.norm() / a.norm())
    elapsed = time.time() - t0
    record_property("ratio_min", min(ratios))
    record_property("ratio_max", max(ratios))
    record_property("seconds", elapsed)
    assert all(0.99 <= q <= 1.01 for q in ratios)
    assert elapsed <= 60


# ----------------------------------------------------------------------------
# C2


def _random_sym(rng, d):
    X = rng.normal(size=(d, d))
    Y = rng.normal(size=(d, d))
    return X @ X.T / d + 0.5 * np.eye(d) + 1j * 0.5 * (Y + Y.T)


def _quadrature_value(a, b, M, N, xi):
    d = a.size

    def f(p):
        qa = np.einsum("...i,ij,...j->...", p - a, M, p - a)
        qb = np.einsum("...i,ij,...j->...", p - b, N, p - b)
        return np.exp(-1j * p @ xi - qa / 2 - qb / 2)

    # the integrand is below 1e-20 outside [-14, 14]^d for these draws
    L = 14.0
    return orc.quadrature_oracle(f, [-L] * d, [L] * d, tol=1e-11, n0=32, max_points=2**23)


@pytest.mark.criterion("C2", "Gaussian-product closed form vs quadrature, Q invariants")
def test_c2_gaussian_product(record_property):
    t0 = time.time()
    rng = np.random.default_rng(20240)
    worst_err, worst_inv, worst_oracle = 0.0, 0.0, 0.0
    re_min = np.inf
    for d in (1, 2):
        for _ in range(20):
            M, N = _random_sym(rng, d), _random_sym(rng, d)
            a, b, xi = rng.normal(size=d), rng.normal(size=d), rng.normal(size=d)
            cf = wg.gaussian_product_fourier(a, b, M, N, xi)
            q = _quadrature_value(a, b, M, N, xi)
            worst_err = max(worst_err, abs(cf - q.value) / abs(q.value))
            worst_oracle = max(worst_oracle, q.error / abs(q.value))
            inv = wg.gaussian_product_transform(M, N).invariants()
            worst_inv = max(worst_inv, inv["symmetric"], inv["symplectic"], inv["QA_minus_B"],
                            inv["det_minus_one"])
            re_min = min(re_min, inv["re_min_eig"])
    elapsed = time.time() - t0
    record_property("rel_err", worst_err)
    record_property("invariants", worst_inv)
    record_property("seconds", elapsed)
    # the oracle must be ten times sharper than the tolerance it certifies
    assert worst_oracle <= 1e-9
    assert worst_err <= 1e-8
    assert worst_inv <= 1e-10
    assert re_min > 0
    assert elapsed <= 60


# ----------------------------------------------------------------------------
# C3


@pytest.mark.criterion("C3", "flow invariants through 3 reflections in the disc")
def test_c3_flow_invariants(record_property):
    t0 = time.time()
    rng = np.random.default_rng(7)
    dom = geo.Disc((0.0, 0.0), 1.0)
    vf = media.SmoothBlend(1.0, 0.3, 0.5)
    cfg = fl.FlowConfig(h_max=2e-3)
    worst = dict(symplectic=0.0, H=0.0, uref=0.0, UtV_sym=0.0, wronskian=0.0)
    im_min = np.inf
    samples = 0
    for _ in range(50):
        r, th, ph = 0.6 * np.sqrt(rng.uniform()), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
        y = np.array([r * np.cos(th), r * np.sin(th)])
        eta = rng.uniform(0.5, 2.0) * np.array([np.cos(ph), np.sin(ph)])
        st = fl.initial_state(y, eta)
        h0 = float(media.hamiltonian(vf, y, eta))
        hits = 0
        while hits < 3:
            st, hit = fl.advance(st, cfg.h_max, vf, dom, cfg)
            if hit is not None:
                post = fl.reflect(st, dom, vf, cfg)
                nu = hit.normal
                R = np.eye(2) - 2.0 * np.outer(nu, nu)
                worst["uref"] = max(worst["uref"], float(np.max(np.abs(post.U - R @ st.U))))
                st = post
                hits += 1
            d = fl.invariant_defects(st)
            for k in ("symplectic", "UtV_sym", "wronskian"):
                worst[k] = max(worst[k], d[k])
            im_min = min(im_min, d["im_hessian_min_eig"])
            worst["H"] = max(worst["H"], abs(float(media.hamiltonian(vf, st.x, st.xi)) - h0) / h0)
            samples += 1
    elapsed = time.time() - t0
    for k, v in worst.items():
        record_property(k, v)
    record_property("im_min_eig", im_min)
    record_property("samples", samples)
    record_property("seconds", elapsed)
    assert worst["symplectic"] <= 1e-7
    assert worst["H"] <= 1e-8
    assert worst["uref"] <= 1e-10
    assert worst["UtV_sym"] <= 1e-8 and worst["wronskian"] <= 1e-8
    assert im_min > 0
    assert elapsed <= 120


# ----------------------------------------------------------------------------
# C4


@pytest.mark.criterion("C4", "beam interior residual slope")
def test_c4_interior_residual(record_property):
    t0 = time.time()
    vf = media.SmoothBlend(1.0, 0.3, 1.0)
    eps = np.array([1 / 20, 1 / 40, 1 / 80, 1 / 160])
    res = [bm.beam_residual_norm([-1.0], [1.0], vf, e, np.linspace(0.0, 2.0, 9), cutoff_d=2.0)
           for e in eps]
    slope = _slope(eps, res)
    elapsed = time.time() - t0
    record_property("slope", slope)
    record_property("seconds", elapsed)
    assert 0.4 <= slope <= 0.7
    assert elapsed <= 300


# ----------------------------------------------------------------------------
# C5


@pytest.mark.criterion("C5", "boundary residual slopes (Dirichlet, Neumann)")
def test_c5_boundary_residual(record_property):
    t0 = time.time()
    vf = media.SmoothBlend(1.0, 0.5, 0.5)
    dom = geo.Interval(-1.0, 0.5)
    eps = np.array([1 / 40, 1 / 80, 1 / 160, 1 / 320])
    slopes = {}
    for bc in (bm.DIRICHLET, bm.NEUMANN):
        res = [bm.boundary_trace_residual([-0.3], [1.0], vf, dom, bc, e, 1.5, cutoff_d=1.0) for e in eps]
        slopes[bc.kind] = _slope(eps, res)
    elapsed = time.time() - t0
    record_property("dirichlet", slopes["dirichlet"])
    record_property("neumann", slopes["neumann"])
    record_property("seconds", elapsed)
    assert 1.3 <= slopes["dirichlet"] <= 1.7
    assert 0.3 <= slopes["neumann"] <= 0.7
    assert elapsed <= 300


# ----------------------------------------------------------------------------
# C6

C6_DOM = geo.Interval(-4.0, 4.0)
C6_VF = media.SmoothBlend(1.0, -0.3, 1.0)
C6_PROFILE = orc.WKBProfile((0.5,), 1.0, (1.0,))
C6_TIMES = np.linspace(0.0, 5.0, 12)


def _c6_error(eps):
    def data_at(h):
        d = orc.wkb_data(C6_PROFILE, eps, orc.interval_grid(C6_DOM, h), C6_VF, "right")
        return d.uI, d.vI

    ref = orc.reference_solve_richardson(data_at, C6_VF, "dirichlet", C6_TIMES, C6_DOM, eps / 16,
                                         eps=eps, eta_max=2.0)
    uI, vI = data_at(eps / 16)
    cut = fbi.CutoffSpec.for_wkb(C6_DOM, C6_PROFILE.center, 1.0, 1.0)
    run = sm.build_run(uI, vI, eps, C6_DOM, C6_VF, bm.DIRICHLET, cut, C6_TIMES)
    scale = np.sqrt(2.0 * float(ref.energy[0]))
    errs = []
    for i, t in enumerate(C6_TIMES):
        dt_u = sm.assemble(run, t, ("dt",))["dt"]
        errs.append((ref.ut[i].subsample(2) - dt_u).norm() / scale)
    _, _, nrefl = fl.broken_flow_points(np.array([C6_PROFILE.center]), np.array([C6_PROFILE.eta0]),
                                        float(C6_TIMES[-1]), C6_VF, C6_DOM, fl.FlowConfig(h_max=0.01))
    return max(errs), max(ref.error_estimate) / scale, ref.energy_drift, int(nrefl[0])


@pytest.mark.criterion("C6", "solution accuracy vs reference through one reflection")
def test_c6_solution_accuracy(record_property):
    t0 = time.time()
    out = [_c6_error(e) for e in EPS3]
    err = np.array([o[0] for o in out])
    est = np.array([o[1] for o in out])
    slope = _slope(EPS3, err)
    elapsed = time.time() - t0
    record_property("errors", list(err))
    record_property("slope", slope)
    record_property("oracle_ratio", float(np.max(est / err)))
    record_property("seconds", elapsed)
    # reference validity: energy conserved, at least one reflection inside [0, T],
    # and an oracle error ten times below the quantity it certifies
    assert all(o[2] <= 1e-6 for o in out)
    assert all(o[3] >= 1 for o in out)
    assert np.all(est <= 0.1 * err)
    assert np.all(np.diff(err) < 0), "error must decrease strictly with eps"
    assert 0.3 <= slope <= 0.8, f"fitted slope {slope:.3f} outside [0.3, 0.8]"
    assert elapsed <= 900


# ----------------------------------------------------------------------------
# C7

C7_TESTS = {
    "pre": (2.0, wg.TestFunction(2.0, 0.75, 1.0, 0.5)),
    "folded": (5.5, wg.TestFunction(2.5, 0.75, -1.0, 0.5)),
    "unfolded": (5.5, wg.TestFunction(2.5, 0.75, 1.0, 0.5)),
}


def _c7_checks(eps):
    dom = geo.Interval(-4.0, 4.0)
    vf = media.Constant(1.0)
    prof = orc.WKBProfile((0.0,), 1.0, (1.0,))
    d = orc.wkb_data(prof, eps, orc.interval_grid(dom, eps / 16), vf, "right")
    cut = fbi.CutoffSpec.for_wkb(dom, (0.0,), 1.0, 1.0)
    run = sm.build_run(d.uI, d.vI, eps, dom, vf, bm.DIRICHLET, cut, [0.0, 2.0, 5.5])
    return {k: wg.transport_check(t, phi, run) for k, (t, phi) in C7_TESTS.items()}


@pytest.mark.criterion("C7", "transport theorem check through a Dirichlet reflection")
def test_c7_transport(record_property):
    t0 = time.time()
    r100 = _c7_checks(1 / 100)
    r200 = _c7_checks(1 / 200)
    elapsed = time.time() - t0
    for k in C7_TESTS:
        record_property(f"{k}_rel", (r100[k].rel_err, r200[k].rel_err))
    fold_ratio = abs(r200["unfolded"].lhs) / abs(r200["folded"].lhs)
    record_property("unfolded/folded", fold_ratio)
    record_property("seconds", elapsed)
    assert all(r200[k].rel_err <= 0.1 for k in C7_TESTS)
    assert fold_ratio <= 0.1
    bad = [k for k in C7_TESTS if r200[k].rel_err > r100[k].rel_err]
    assert not bad, f"rel_err increased from eps=1/100 to 1/200 for {bad}"
    assert elapsed <= 900


# ----------------------------------------------------------------------------
# C8


@pytest.mark.criterion("C8", "WKB Wigner limit at eps=1/200")
def test_c8_wkb_limit(record_property):
    t0 = time.time()
    eps = 1 / 200
    dom = geo.Interval(0.0, 12.0)
    vf = media.Constant(1.0)
    prof = orc.WKBProfile((6.0,), 1.0, (1.0,))
    d = orc.wkb_data(prof, eps, orc.interval_grid(dom, eps / 16), vf, "right")
    a = d.uI.scaled(1 / eps)
    phi = wg.TestFunction(6.2, 0.6, 1.0, 0.5)
    val = wg.wigner_pairing(a, a, eps, phi)
    lim = d.measure_pairing(phi, vf)
    rel = abs(val.real - lim) / abs(lim)
    elapsed = time.time() - t0
    record_property("rel_err", rel)
    record_property("seconds", elapsed)
    assert rel <= 0.05
    assert elapsed <= 120


# ----------------------------------------------------------------------------
# C9


def _c9(eps):
    dom = geo.Interval(-4.0, 4.0)
    vf = media.Constant(1.0)
    g = orc.interval_grid(dom, eps / 16)
    d = orc.wkb_data(orc.WKBProfile((0.0,), 1.0, (1.0,)), eps, g, vf, "right")
    a = d.uI.scaled(1 / eps)
    mod = wg.abs_D_consistency(a, a, eps, wg.TestFunction(0.2, 0.6, 1.0, 0.5))
    # ray A is reflected once, ray B travels unreflected; at t = 5.5 both sit at
    # x = 2.5 with opposite momenta
    b = fl.propagate(fl.initial_batch(np.array([[0.0], [-3.0]]), np.ones((2, 1))), 5.5, vf, dom,
                     fl.FlowConfig(h_max=0.01))
    beams = bm.beams_from_batch(b, vf, bm.DIRICHLET, 0.75)
    fk = SpatialField(g, bm.accumulate(beams.take([0]), eps, g, ("u",))["u"])
    fm = SpatialField(g, bm.accumulate(beams.take([1]), eps, g, ("u",))["u"])
    cross = wg.cross_branch_check(fk, fm, eps, wg.TestFunction(2.5, 0.6, -1.0, 0.5),
                                  wg.TestFunction(2.5, 0.6, 1.0, 0.5))
    return mod, cross, b.nrefl.copy()


@pytest.mark.criterion("C9", "|D| Wigner consistency and cross-branch decay")
def test_c9_modD_and_cross_branch(record_property):
    t0 = time.time()
    mod100, cross100, n100 = _c9(1 / 100)
    mod200, cross200, _ = _c9(1 / 200)
    elapsed = time.time() - t0
    record_property("modD_rel", mod200["rel_err"])
    record_property("cross_ratio", (cross100["ratio"], cross200["ratio"]))
    record_property("seconds", elapsed)
    assert list(n100) == [1, 0]
    assert mod200["rel_err"] <= 0.05
    assert cross200["cross"] < cross100["cross"]
    assert cross200["ratio"] <= 0.1
    assert elapsed <= 300


# ----------------------------------------------------------------------------
# C10


@pytest.mark.criterion("C10", "reference solver: standing mode, energy, refinement")
def test_c10_reference_solver(record_property):
    t0 = time.time()
    errs = [orc.standing_mode_error(n, T=0.5, cfl=0.9) for n in (100, 200, 400)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    rng = np.random.default_rng(3)
    dom = geo.Interval(0.0, 1.0)
    grid = orc.interval_grid(dom, 1 / 400)
    x = grid.points()
    drifts = []
    for bc in ("dirichlet", "neumann"):
        for _ in range(3):
            c, r = rng.uniform(0.4, 0.6), rng.uniform(0.15, 0.3)
            u0 = SpatialField(grid, bump_chi(r, x - c) * np.cos(rng.uniform(5, 20) * x[:, 0]))
            v0 = SpatialField(grid, rng.normal() * bump_chi(r, x - c))
            ref = orc.reference_solve_1d(u0, v0, media.SmoothBlend(1.0, 0.3, 0.2), bc, [0.0, 1.0, 2.0], dom)
            drifts.append(ref.energy_drift)
    elapsed = time.time() - t0
    record_property("standing_err", errs[0])
    record_property("ratios", ratios)
    record_property("drift", max(drifts))
    record_property("seconds", elapsed)
    assert errs[0] <= 1e-4
    assert max(drifts) <= 1e-6
    assert all(3.0 <= q <= 5.0 for q in ratios)
    assert elapsed <= 120
