import numpy as np
import pytest

from gbsum import flow as fl
from gbsum import geometry as geo
from gbsum import media
from gbsum.errors import GuardError

CFG = fl.FlowConfig(h_max=1e-3)


def test_flow_rhs_1d_constant():
    xd, xid, Ud, Vd, _ = fl.flow_rhs(fl.initial_state([0.2], [1.0]), media.Constant(1.0))
    assert np.allclose(xd, [1.0]) and np.allclose(xid, 0.0)
    assert np.allclose(Ud, 0.0) and np.allclose(Vd, 0.0)


def test_flow_rhs_2d_constant_projector():
    xd, xid, Ud, Vd, _ = fl.flow_rhs(fl.initial_state([0.0, 0.0], [1.0, 0.0]), media.Constant(1.0))
    assert np.allclose(xd, [1.0, 0.0])
    assert np.allclose(Ud, 1j * np.diag([0.0, 1.0]))
    assert np.allclose(Vd, 0.0)


def test_flow_rhs_matches_flow_map_difference():
    vf = media.SmoothBlend(1.0, 0.3, 0.5)
    st = fl.initial_state([0.2, -0.1], [0.8, 0.5])
    rhs = fl.flow_rhs(st, vf)

    def moved(dt):
        b = fl.propagate(fl.initial_batch([[0.2, -0.1]], [[0.8, 0.5]]), dt, vf, None, fl.FlowConfig(h_max=abs(dt)))
        return b.state(0)

    # Richardson extrapolated central differences of the flow map
    def d(h, attr):
        return (getattr(moved(h), attr) - getattr(moved(-h), attr)) / (2 * h)

    for k, attr in enumerate(("x", "xi", "U", "V")):
        est = (4 * d(1e-3, attr) - d(2e-3, attr)) / 3
        assert np.max(np.abs(est - rhs[k])) < 1e-9


@pytest.mark.parametrize(
    "dom, y, eta, T1, x_hit",
    [
        (geo.Interval(0.0, 1.0), [0.25], [1.0], 0.75, [1.0]),
        (geo.Disc((0.0, 0.0), 1.0), [0.0, 0.0], [1.0, 0.0], 1.0, [1.0, 0.0]),
        (geo.Disc((0.0, 0.0), 1.0), [0.5, 0.0], [0.0, 1.0], np.sqrt(0.75), [0.5, np.sqrt(0.75)]),
    ],
)
def test_advance_first_hit(dom, y, eta, T1, x_hit):
    st = fl.initial_state(y, eta)
    hit = None
    for _ in range(10000):
        st, hit = fl.advance(st, 0.01, media.Constant(1.0), dom, fl.FlowConfig(h_max=0.01))
        if hit is not None:
            break
    assert hit is not None
    assert hit.T_k == pytest.approx(T1, abs=1e-10)
    assert np.allclose(hit.x_hit, x_hit, atol=1e-10)


def _to_boundary(st, vf, dom, cfg):
    while True:
        st, hit = fl.advance(st, cfg.h_max, vf, dom, cfg)
        if hit is not None:
            return st, hit


def test_reflect_1d_flips_momentum_and_U():
    dom = geo.Interval(0.0, 1.0)
    vf = media.Constant(1.0)
    pre, _ = _to_boundary(fl.initial_state([0.25], [1.0]), vf, dom, CFG)
    post = fl.reflect(pre, dom, vf, CFG)
    assert np.allclose(post.xi, [-1.0])
    assert np.allclose(post.U, -pre.U, atol=1e-14)


def test_reflect_disc_normal_incidence():
    dom = geo.Disc((0.0, 0.0), 1.0)
    vf = media.Constant(1.0)
    pre, _ = _to_boundary(fl.initial_state([0.0, 0.0], [1.0, 0.0]), vf, dom, CFG)
    post = fl.reflect(pre, dom, vf, CFG)
    assert np.allclose(post.xi, [-1.0, 0.0], atol=1e-12)


def test_reflected_jacobian_matches_finite_difference_of_broken_flow():
    dom = geo.Disc((0.0, 0.0), 1.0)
    vf = media.Constant(1.0)
    cfg = fl.FlowConfig(h_max=1e-3)
    y0, e0, t = np.array([0.2, 0.1]), np.array([1.0, 0.3]), 1.5
    st = fl.broken_flow(y0, e0, t, vf, dom, cfg)
    assert len(st.reflections) == 1
    F = fl.real_jacobian(st)
    h = 1e-6
    fd = np.zeros((4, 4))
    z0 = np.concatenate([y0, e0])
    for j in range(4):
        dz = np.eye(4)[j] * h
        zs = np.array([z0 + dz, z0 - dz])
        x, xi, _ = fl.broken_flow_points(zs[:, :2], zs[:, 2:], t, vf, dom, cfg)
        fd[:, j] = (np.concatenate([x[0], xi[0]]) - np.concatenate([x[1], xi[1]])) / (2 * h)
    assert np.max(np.abs(F - fd)) < 1e-6


def test_broken_flow_examples():
    dom = geo.Interval(0.0, 1.0)
    vf = media.Constant(1.0)
    fwd = fl.broken_flow([0.25], [1.0], 1.0, vf, dom, CFG)
    assert np.allclose(fwd.x, [0.75], atol=1e-10) and np.allclose(fwd.xi, [-1.0])
    assert fwd.reflections[0].T_k == pytest.approx(0.75, abs=1e-10)
    back = fl.broken_flow([0.25], [1.0], -0.5, vf, dom, CFG)
    assert np.allclose(back.x, [0.25], atol=1e-10) and np.allclose(back.xi, [-1.0])
    assert back.reflections[0].T_k == pytest.approx(-0.25, abs=1e-10)


def test_identity_at_time_zero():
    st = fl.broken_flow([0.1, 0.2], [0.0, 1.0], 0.0, media.SmoothBlend(), geo.Disc((0.0, 0.0), 1.0))
    assert np.allclose(st.U, np.eye(2)) and np.allclose(st.V, 1j * np.eye(2))
    assert np.allclose(fl.real_jacobian(st), np.eye(4))


def test_free_flow_jacobian_closed_form():
    vf = media.Constant(1.0)
    b = fl.propagate(fl.initial_batch([[0.0, 0.0]], [[1.0, 0.0]]), 1.0, vf, None, CFG)
    F = fl.real_jacobian(b.state(0))
    t, H22 = 1.0, np.diag([0.0, 1.0])
    expected = np.block([[np.eye(2), t * H22], [np.zeros((2, 2)), np.eye(2)]])
    assert np.allclose(F, expected, atol=1e-12)


def test_time_reversibility_through_reflections():
    dom = geo.Disc((0.0, 0.0), 1.0)
    vf = media.SmoothBlend(1.0, 0.3, 0.5)
    fwd = fl.broken_flow([0.1, -0.3], [0.6, 0.9], 2.7, vf, dom, CFG)
    assert len(fwd.reflections) >= 1
    back = fl.broken_flow(fwd.x, fwd.xi, -2.7, vf, dom, CFG)
    assert np.allclose(back.x, [0.1, -0.3], atol=1e-8)
    assert np.allclose(back.xi, [0.6, 0.9], atol=1e-8)


def test_invariants_after_propagation():
    dom = geo.Disc((0.0, 0.0), 1.0)
    st = fl.broken_flow([0.3, 0.1], [-0.2, 1.0], 3.3, media.SmoothBlend(1.0, 0.3, 0.5), dom, CFG)
    d = fl.invariant_defects(st)
    assert d["symplectic"] < 1e-8
    assert d["UtV_sym"] < 1e-8 and d["wronskian"] < 1e-8
    assert d["logdet"] < 1e-8
    assert d["im_hessian_min_eig"] > 0


def test_reflection_time_refused():
    with pytest.raises(GuardError) as e:
        fl.broken_flow([0.25], [1.0], 0.75, media.Constant(1.0), geo.Interval(0.0, 1.0), CFG)
    assert e.value.guard == "flow.reflection_time"


def test_start_outside_refused():
    with pytest.raises(GuardError):
        fl.broken_flow([2.0], [1.0], 0.5, media.Constant(1.0), geo.Interval(0.0, 1.0), CFG)
