import numpy as np
import pytest

from gbsum import geometry as geo
from gbsum import media
from gbsum import oracle as orc
from gbsum.errors import GuardError, NumericalFailure
from gbsum.fbi import SpatialField

VF = media.Constant(1.0)


@pytest.mark.parametrize("n", [200, 400])
def test_standing_mode(n):
    assert orc.standing_mode_error(n, T=1.0, cfl=0.9) <= 1e-4


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
def test_energy_is_conserved(bc):
    dom = geo.Interval(0.0, 2.0)
    g = orc.interval_grid(dom, 1e-3)
    x = g.axes[0].nodes
    u0 = SpatialField(g, np.exp(-((x - 0.7) ** 2) / 0.01))
    v0 = SpatialField(g, np.sin(3 * x) * np.exp(-((x - 1.2) ** 2) / 0.02))
    sol = orc.reference_solve_1d(u0, v0, media.SmoothBlend(1.0, 0.3, 0.2), bc, [0.0, 1.0, 3.0], dom)
    assert sol.energy_drift <= 1e-6


def _pulse(x):
    return np.exp(-((x - 1.0) ** 2) / 0.02)


def _dpulse(x):
    return -2 * (x - 1.0) / 0.02 * _pulse(x)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
def test_folded_dalembert_agrees_with_leapfrog(bc):
    dom = geo.Interval(0.0, 4.0)
    g = orc.interval_grid(dom, 1 / 800)
    x = g.axes[0].nodes
    times = [0.5, 2.0]  # before and after the left-going half returns from x = 0
    sol = orc.reference_solve_1d(SpatialField(g, _pulse(x)), SpatialField.zeros(g), VF, bc, times, dom)
    zero = np.zeros_like
    for i, t in enumerate(times):
        u, ut = orc.folded_dalembert(x, t, 1.0, dom, bc, _pulse, zero, _dpulse, zero)
        assert np.max(np.abs(sol.u[i].values - u)) <= 1e-3
        assert np.max(np.abs(sol.ut[i].values - ut)) <= 1e-2 * np.max(np.abs(ut))


def test_folded_dalembert_sign_after_reflection():
    dom = geo.Interval(0.0, 4.0)
    zero = np.zeros_like
    # the left-going half of the pulse is centred at x = 1 at t = 2 after reflection
    d = orc.folded_dalembert(np.array([1.0]), 2.0, 1.0, dom, "dirichlet", _pulse, zero)
    n = orc.folded_dalembert(np.array([1.0]), 2.0, 1.0, dom, "neumann", _pulse, zero)
    assert d[0] == pytest.approx(-0.5, abs=1e-10) and n[0] == pytest.approx(0.5, abs=1e-10)


def test_wkb_right_mover_is_one_way():
    eps = 1 / 100
    dom = geo.Interval(0.0, 4.0)
    d = orc.wkb_data(orc.WKBProfile((2.0,), 1.0, (1.0,)), eps, orc.interval_grid(dom, eps / 16), VF, "right")
    x = d.uI.grid.axes[0].nodes
    du = np.gradient(d.uI.values, x[1] - x[0])
    # d_t u + c d_x u vanishes to leading order for a right mover
    assert np.linalg.norm(d.vI.values + du) <= 0.05 * np.linalg.norm(d.vI.values)


def test_wkb_energy_norms_are_uniform_in_eps():
    dom = geo.Interval(0.0, 4.0)
    prof = orc.WKBProfile((2.0,), 1.0, (1.0,), curvature=0.3)
    norms = []
    for eps in (1 / 50, 1 / 100, 1 / 200, 1 / 400):
        d = orc.wkb_data(prof, eps, orc.interval_grid(dom, eps / 16), VF, "right")
        du = SpatialField(d.uI.grid, np.gradient(d.uI.values, d.uI.grid.spacing[0]))
        norms.append(np.hypot(du.norm(), d.vI.norm()))
    assert max(norms) <= 2 * min(norms)


def test_wkb_guards():
    g = orc.interval_grid(geo.Interval(0.0, 4.0), 1e-3)
    with pytest.raises(GuardError) as e:
        orc.wkb_data(orc.WKBProfile((2.0,), 1.0, (0.0,)), 0.01, g, VF)
    assert e.value.guard == "oracle.wkb_xi"
    with pytest.raises(GuardError) as e:
        orc.wkb_data(orc.WKBProfile((2.0,), 1.0, (1.0,)), 0.01, g, VF, mode="up")
    assert e.value.guard == "oracle.wkb_mode"


def test_quadrature_gaussian():
    r = orc.quadrature_oracle(lambda p: np.exp(-p[..., 0] ** 2), -10, 10, tol=1e-13)
    assert abs(r.value - np.sqrt(np.pi)) <= 1e-12


def test_quadrature_non_convergence():
    # an oscillation too fast for the point budget never settles
    with pytest.raises(NumericalFailure):
        orc.quadrature_oracle(lambda p: np.cos(1e6 * p[..., 0] ** 2), 0, 1, tol=1e-14, max_points=2**12)


def test_cfl_guard():
    g = orc.interval_grid(geo.Interval(0.0, 1.0), 0.01)
    z = SpatialField.zeros(g)
    with pytest.raises(GuardError) as e:
        orc.reference_solve_1d(z, z, VF, "dirichlet", [0.5], cfl=1.2)
    assert e.value.guard == "oracle.cfl"
    with pytest.raises(GuardError) as e:
        orc.reference_solve_1d(z, z, VF, "dirichlet", [0.5], steps=10)
    assert e.value.guard == "oracle.cfl"


def test_times_and_bc_guards():
    g = orc.interval_grid(geo.Interval(0.0, 1.0), 0.01)
    z = SpatialField.zeros(g)
    with pytest.raises(GuardError) as e:
        orc.reference_solve_1d(z, z, VF, "dirichlet", [-0.1, 0.5])
    assert e.value.guard == "oracle.times"
    with pytest.raises(GuardError) as e:
        orc.reference_solve_1d(z, z, VF, "dirichlet", [0.3, 1.0], steps=149)
    assert e.value.guard == "oracle.times"
    with pytest.raises(GuardError) as e:
        orc.reference_solve_1d(z, z, VF, "robin", [0.5])
    assert e.value.guard == "oracle.bc"


def test_resolution_and_grid_guards():
    g = orc.interval_grid(geo.Interval(0.0, 1.0), 0.01)
    z = SpatialField.zeros(g)
    with pytest.raises(GuardError) as e:
        orc.reference_solve_1d(z, z, VF, "dirichlet", [0.5], eps=0.01, eta_max=1.0)
    assert e.value.guard == "oracle.resolution"
    with pytest.raises(GuardError) as e:
        orc.reference_solve_1d(z, z, VF, "dirichlet", [0.5], dom=geo.Interval(0.0, 2.0))
    assert e.value.guard == "oracle.grid"


def test_richardson_estimate_tracks_true_error():
    dom = geo.Interval(0.0, 4.0)
    zero = np.zeros_like

    def data_at(h):
        g = orc.interval_grid(dom, h)
        x = g.axes[0].nodes
        return SpatialField(g, _pulse(x)), SpatialField.zeros(g)

    ref = orc.reference_solve_richardson(data_at, VF, "dirichlet", [0.5, 2.0], dom, 1 / 200)
    x = ref.grid.axes[0].nodes
    for i, t in enumerate(ref.times):
        _, ut = orc.folded_dalembert(x, t, 1.0, dom, "dirichlet", _pulse, zero, _dpulse, zero)
        err = (ref.ut[i] - SpatialField(ref.grid, ut)).norm()
        assert ref.error_estimate[i] <= 10 * max(err, 1e-12) and err <= 10 * ref.error_estimate[i]
