import numpy as np
import pytest

from gbsum import beams as bm
from gbsum import fbi
from gbsum import flow as fl
from gbsum import geometry as geo
from gbsum import media
from gbsum import oracle as orc
from gbsum import summation as sm
from gbsum.fbi import SpatialField

EPS = 1 / 100
DOM = geo.Interval(0.0, 12.0)
VF = media.Constant(1.0)
T_MID = 0.5
DELTA = EPS / 10
TIMES = [0.0, T_MID - DELTA, T_MID, T_MID + DELTA]


@pytest.fixture(scope="module")
def wkb_run():
    prof = orc.WKBProfile((6.0,), 1.0, (1.0,))
    d = orc.wkb_data(prof, EPS, orc.interval_grid(DOM, EPS / 16), VF, "right")
    cut = fbi.CutoffSpec.for_wkb(DOM, (6.0,), 1.0, 1.0, d=1.25)
    return sm.build_run(d.uI, d.vI, EPS, DOM, VF, bm.DIRICHLET, cut, TIMES)


def test_initial_time_reproduces_cut_data(wkb_run):
    u0 = sm.assemble_solution(wkb_run, 0.0)
    assert (u0 - wkb_run.u_cut).norm() <= 0.05 * wkb_run.u_cut.norm()


def test_time_derivative_matches_central_difference(wkb_run):
    up = sm.assemble_solution(wkb_run, T_MID + DELTA)
    um = sm.assemble_solution(wkb_run, T_MID - DELTA)
    fd = SpatialField(up.grid, (up.values - um.values) / (2 * DELTA))
    dt_u, _ = sm.assemble_derivatives(wkb_run, T_MID, exact=True)
    assert (fd - dt_u).norm() <= (0.1 + np.sqrt(EPS)) * dt_u.norm()


@pytest.mark.parametrize("exact", [True, False])
def test_right_mover_one_way_relation(wkb_run, exact):
    dt_u, dx_u = sm.assemble_derivatives(wkb_run, T_MID, exact=exact)
    c = VF.value(dt_u.grid.points())
    resid = SpatialField(dt_u.grid, dt_u.values + c * dx_u[0].values)
    assert resid.norm() <= 0.1 * dt_u.norm()


def test_energy_close_to_data_energy(wkb_run):
    dt_u, dx_u = sm.assemble_derivatives(wkb_run, T_MID, exact=True)
    d0, dx0 = sm.assemble_derivatives(wkb_run, 0.0, exact=True)
    e0 = sm.physical_energy(d0, dx0, VF)
    assert sm.physical_energy(dt_u, dx_u, VF) == pytest.approx(e0, rel=0.02)


def test_single_node_run_is_one_beam():
    eps, t = 0.02, 1.3
    xg = orc.interval_grid(DOM, eps / 16)
    cut = fbi.CutoffSpec.for_wkb(DOM, (6.0,), 1.0, 1.0, d=1.0)
    y, eta, p = [6.0], [1.0], 0.7 - 0.2j
    run = sm.single_node_run(y, eta, p, 0.0, eps, DOM, VF, bm.NEUMANN, cut, [t], xg)
    u = sm.assemble_solution(run, t)
    st = fl.broken_flow(y, eta, t, VF, DOM, fl.FlowConfig.for_horizon(t))
    beam = bm.make_beam(st, "A", bm.NEUMANN, cut.d, VF)
    direct = run.prefactor * p * bm.eval_beam(beam, xg.points(), eps)
    assert np.max(np.abs(u.values - direct)) <= 1e-10 * np.max(np.abs(direct))


def test_zero_data_gives_zero_fields():
    xg = orc.interval_grid(DOM, EPS / 16)
    z = SpatialField.zeros(xg)
    cut = fbi.CutoffSpec.for_wkb(DOM, (6.0,), 1.0, 1.0)
    run = sm.build_run(z, z, EPS, DOM, VF, bm.DIRICHLET, cut, [0.0, 1.0])
    out = sm.assemble(run, 1.0, ("u", "dt", "dx"))
    assert out["u"].norm() == 0.0 and out["dt"].norm() == 0.0 and out["dx"][0].norm() == 0.0


def test_unknown_time_refused(wkb_run):
    from gbsum.errors import GuardError

    with pytest.raises(GuardError) as e:
        sm.assemble_solution(wkb_run, 0.123)
    assert e.value.guard == "summation.flow_table"
