"""Gaussian-beam superposition of frequency-truncated initial data.

For every phase-space node ``(y, eta)`` two rays are launched, one forward
and one backward in time.  With ``h0 = c(y)|eta|`` the node contributes

    p = rho' gamma' w (T u / eps + i T v / h0)   along  t -> gb(t)
    q = rho' gamma' w (T u / eps - i T v / h0)   along  t -> gb(-t)

times the common factor ``eps^(1 - 3n/4) c_n / 2``.  Each ray is a sequence of
free-flow branches, branch ``k`` starting from the state just after the
``k``-th reflection.  At a given time the branches adjacent to the current
one are summed as well: they carry the part of a beam that has not yet left,
or has already re-entered, the domain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import beams as bm
from . import flow as fl
from .errors import GuardError
from .fbi import (CutoffSpec, PhaseSpaceGrid, SpatialField, SpatialGrid, fbi_constant,
                  fbi_forward, prepare_initial_data)

log = logging.getLogger(__name__)


@dataclass
class SummationWeights:
    """Node coordinates and the two coefficient sets ``p`` (forward) and ``q``
    (backward), already multiplied by the cutoffs and quadrature weights."""

    y: np.ndarray
    eta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    h0: np.ndarray

    @property
    def size(self) -> int:
        return self.y.shape[0]


def summation_weights(Tu, Tv, grid: PhaseSpaceGrid, eps: float, cut: CutoffSpec, dom, vf,
                      prune_rel: float = 1e-9) -> SummationWeights:
    """Build ``p, q`` on the flattened grid and drop negligible coefficients.

    The smallest coefficients whose squared magnitudes add up to at most
    ``prune_rel`` of the total are set to zero; the dropped part of the
    superposition is then of relative size about ``sqrt(prune_rel)``.
    """
    y, eta = grid.nodes()
    w = grid.weights.ravel() * cut.rho_prime(y, dom) * cut.gamma_prime(eta)
    keep = w > 0
    y, eta, w = y[keep], eta[keep], w[keep]
    tu = Tu.values.ravel()[keep]
    tv = Tv.values.ravel()[keep]
    h0 = vf.value(y) * np.linalg.norm(eta, axis=-1)
    if np.any(h0 <= 0):
        raise GuardError("summation.eta_zero", "node with eta = 0 inside the ring")
    p = w * (tu / eps + 1j * tv / h0)
    q = w * (tu / eps - 1j * tv / h0)
    # drop the smallest coefficients carrying a fraction prune_rel of the
    # total weight energy; drop_p/drop_q are zeroed, nodes losing both go
    mag = np.concatenate([np.abs(p) ** 2, np.abs(q) ** 2])
    tot = mag.sum()
    drop = np.zeros(mag.size, bool)
    if tot > 0:
        order = np.argsort(mag, kind="stable")
        cum = np.cumsum(mag[order])
        drop[order[cum <= prune_rel * tot]] = True
    else:
        drop[:] = True
    N = p.size
    p = np.where(drop[:N], 0.0, p)
    q = np.where(drop[N:], 0.0, q)
    sel = ~(drop[:N] & drop[N:])
    return SummationWeights(y[sel], eta[sel], p[sel], q[sel], h0[sel])


@dataclass
class FlowTable:
    """Branch states of the forward (``+1``) and backward (``-1``) rays at
    every output time.

    ``entries[(s, i)]`` is a list of ``(ray_index, k, FlowBatch)`` with the
    states of branch ``k`` at signed time ``s * times[i]``.
    """

    times: np.ndarray
    hit_times: dict
    entries: dict = field(default_factory=dict)

    def get(self, s: int, i: int):
        try:
            return self.entries[(s, i)]
        except KeyError:
            raise GuardError("summation.flow_table", f"no flow-table entry for sign {s}, time index {i}")


def _anchors(weights: SummationWeights, s: int, horizon: float, vf, dom, cfg):
    """Initial and post-reflection states of every ray up to ``horizon``."""
    b0 = fl.initial_batch(weights.y, weights.eta)
    events: list = []
    fl.propagate(b0, s * horizon, vf, dom, cfg, events)
    N = weights.size
    hits = [[] for _ in range(N)]
    posts = [[] for _ in range(N)]
    for ev in sorted(events, key=lambda e: (e.index, abs(e.record.T_k))):
        hits[ev.index].append(abs(ev.record.T_k))
        posts[ev.index].append(ev.post)
    return b0, hits, posts


def build_flow_table(weights: SummationWeights, times, vf, dom, cfg: fl.FlowConfig,
                     pad: float = 0.0, signs=(1, -1)) -> FlowTable:
    """Propagate every branch that can be non-negligible at an output time.

    Branch ``k`` of a ray is kept at time ``t`` when ``T_{k-1} <= t + pad`` and
    ``t - pad < T_{k+1}`` (``T_0 = 0``), so a beam is tracked from one
    reflection before its own until one after.
    """
    times = np.asarray(times, float)
    if np.any(times < 0):
        raise GuardError("summation.times", "output times must be non-negative")
    horizon = float(times.max()) + pad + 1e-12
    table = FlowTable(times, {})
    order = np.argsort(times)
    for s in signs:
        b0, hits, posts = _anchors(weights, s, horizon, vf, dom, cfg)
        table.hit_times[s] = hits
        kmax = max((len(h) for h in hits), default=0)
        for i in range(len(times)):
            table.entries[(s, i)] = []
        for k in range(kmax + 1):
            rays = np.array([r for r in range(weights.size) if len(hits[r]) >= k], int)
            if rays.size == 0:
                continue
            if k == 0:
                anchor = b0.take(rays)
                t_anchor = np.zeros(rays.size)
            else:
                anchor = fl.FlowBatch.from_states([posts[r][k - 1].state(0) for r in rays])
                anchor.nrefl[:] = k
                t_anchor = np.array([hits[r][k - 1] for r in rays])
            lo = np.array([hits[r][k - 2] if k >= 2 else 0.0 for r in rays]) - pad
            hi = np.array([hits[r][k] if len(hits[r]) > k else np.inf for r in rays]) + pad
            _sweep(table, s, k, rays, anchor, t_anchor, lo, hi, times, order, vf, cfg)
    return table


def _sweep(table, s, k, rays, anchor, t_anchor, lo, hi, times, order, vf, cfg):
    """Free-propagate a branch from its anchors backward then forward through
    the output times inside each ray's window ``[lo, hi)``."""
    for direction in (-1, 1):
        cur = anchor.copy()
        tcur = t_anchor.copy()
        seq = order[::-1] if direction < 0 else order
        for i in seq:
            t = times[i]
            side = (t < t_anchor) if direction < 0 else (t >= t_anchor)
            need = side & (t >= lo) & (t < hi)
            if not np.any(need):
                continue
            idx = np.nonzero(need)[0]
            sub = cur.take(idx)
            moved = fl.propagate(sub, s * (t - tcur[idx]), vf, None, cfg)
            cur.put(idx, moved)
            tcur[idx] = t
            table.entries[(s, i)].append((rays[idx], k, moved))


@dataclass
class GBSRun:
    """Everything needed to evaluate the beam superposition of one data set."""

    eps: float
    dom: object
    vf: object
    bc: bm.BoundaryCondition
    cut: CutoffSpec
    xgrid: SpatialGrid
    weights: SummationWeights
    table: FlowTable
    u_cut: SpatialField
    v_cut: SpatialField
    out_of_ring: dict
    phase_grid: PhaseSpaceGrid

    @property
    def prefactor(self) -> float:
        n = self.xgrid.ndim
        return 0.5 * self.eps ** (1.0 - 0.75 * n) * fbi_constant(n)

    @property
    def times(self) -> np.ndarray:
        return self.table.times


def run_flow_config(horizon: float) -> fl.FlowConfig:
    """Flow settings for summation runs: ``h_max = min(0.02, horizon / 400)``.

    RK4 position errors at this step are far below the beam width.
    """
    return fl.FlowConfig(h_max=min(0.02, horizon / 400.0))


def build_run(uI: SpatialField, vI: SpatialField, eps: float, dom, vf, bc: bm.BoundaryCondition,
              cut: CutoffSpec, times, xgrid: SpatialGrid | None = None, refine: float = 1.0,
              prune_rel: float = 1e-9, cfg: fl.FlowConfig | None = None) -> GBSRun:
    """FBI-transform the data, select nodes and build the flow table.

    ``xgrid`` is the output grid (default: the data grid).  Flow tables are
    traced to ``max(times) + pad`` with ``pad = 1.5 d / c_min``.
    """
    times = np.atleast_1d(np.asarray(times, float))
    prep = prepare_initial_data(uI, vI, eps, cut, dom, refine)
    grid = prep.grid
    grid.check(eps)
    Tu = fbi_forward(prep.u_cut, eps, grid)
    Tv = fbi_forward(prep.v_cut, eps, grid)
    w = summation_weights(Tu, Tv, grid, eps, cut, dom, vf, prune_rel)
    log.info("summation nodes kept: %d of %d", w.size, int(np.prod(grid.shape)))
    pad = 1.5 * cut.d / vf.c_min
    cfg = cfg or run_flow_config(float(times.max()) + pad)
    table = build_flow_table(w, times, vf, dom, cfg, pad)
    return GBSRun(eps, dom, vf, bc, cut, xgrid or uI.grid, w, table, prep.u_cut, prep.v_cut,
                  prep.out_of_ring, grid)


def single_node_run(y, eta, p: complex, q: complex, eps, dom, vf, bc, cut, times, xgrid,
                    cfg: fl.FlowConfig | None = None) -> GBSRun:
    """Run with one node and prescribed coefficients (for checks and demos)."""
    y = np.atleast_2d(np.asarray(y, float))
    eta = np.atleast_2d(np.asarray(eta, float))
    h0 = vf.value(y) * np.linalg.norm(eta, axis=-1)
    w = SummationWeights(y, eta, np.array([p], complex), np.array([q], complex), h0)
    times = np.atleast_1d(np.asarray(times, float))
    pad = 1.5 * cut.d / vf.c_min
    cfg = cfg or fl.FlowConfig.for_horizon(float(times.max()) + pad)
    table = build_flow_table(w, times, vf, dom, cfg, pad)
    z = SpatialField.zeros(xgrid)
    return GBSRun(eps, dom, vf, bc, cut, xgrid, w, table, z, z, {}, None)


def _time_index(run: GBSRun, t: float) -> int:
    i = int(np.argmin(np.abs(run.times - t)))
    if abs(run.times[i] - t) > 1e-12 * max(1.0, t):
        raise GuardError("summation.flow_table", f"time {t} is not in the flow table")
    return i


def _beams_at(run: GBSRun, i: int, rates: bool) -> bm.BeamArrays | None:
    parts = []
    for s, coef in ((1, run.weights.p), (-1, run.weights.q)):
        for rays, k, states in run.table.get(s, i):
            c = coef[rays]
            nz = np.nonzero(c)[0]
            if nz.size == 0:
                continue
            bs = bm.beams_from_batch(states.take(nz), run.vf, run.bc, run.cut.d, "A",
                                     weights=c[nz], rates=rates,
                                     time_sign=np.full(nz.size, float(s)))
            parts.append(bs)
    if not parts:
        return None
    return bm.BeamArrays.concat(parts)


def assemble(run: GBSRun, t: float, what=("u",), xgrid: SpatialGrid | None = None) -> dict:
    """Superposition and derivative fields at time ``t``.

    ``what`` entries: ``"u"``, ``"dt"`` and ``"dx"`` (exact derivatives of the
    superposition) and ``"dt_lead"``, ``"dx_lead"`` (leading terms only: each
    beam differentiated through its phase at the centre, ``-i h / eps`` in
    time and ``i xi / eps`` in space).
    """
    xgrid = xgrid or run.xgrid
    i = _time_index(run, t)
    exact = [w for w in what if w in ("u", "dt", "dx")]
    lead = [w for w in what if w in ("dt_lead", "dx_lead")]
    beams = _beams_at(run, i, rates="dt" in what)
    n = xgrid.ndim
    out = {}
    if beams is None:
        for w in what:
            shape = xgrid.shape + ((n,) if w.startswith("dx") else ())
            out[w] = np.zeros(shape, complex)
        return _wrap(out, xgrid)
    pref = run.prefactor
    if exact:
        res = bm.accumulate(beams, run.eps, xgrid, exact)
        for w in exact:
            out[w] = pref * res[w]
    if lead:
        # leading derivative: fold the centre phase derivative into the coefficients
        c_here = run.vf.value(beams.center)
        h = c_here * np.linalg.norm(beams.momentum, axis=-1)
        if "dt_lead" in lead:
            tsign = _time_signs(run, i)
            b2 = bm.BeamArrays(beams.center, beams.momentum, beams.hessian,
                               beams.coef * (-1j) * tsign * h / run.eps, beams.cutoff_d)
            out["dt_lead"] = pref * bm.accumulate(b2, run.eps, xgrid, ("u",))["u"]
        if "dx_lead" in lead:
            comps = []
            for j in range(n):
                b2 = bm.BeamArrays(beams.center, beams.momentum, beams.hessian,
                                   beams.coef * 1j * beams.momentum[:, j] / run.eps, beams.cutoff_d)
                comps.append(pref * bm.accumulate(b2, run.eps, xgrid, ("u",))["u"])
            out["dx_lead"] = np.stack(comps, -1)
    return _wrap(out, xgrid)


def _time_signs(run: GBSRun, i: int) -> np.ndarray:
    signs = []
    for s, coef in ((1, run.weights.p), (-1, run.weights.q)):
        for rays, k, states in run.table.get(s, i):
            nz = np.count_nonzero(coef[rays])
            if nz:
                signs.append(np.full(nz, float(s)))
    return np.concatenate(signs)


def _wrap(out: dict, xgrid: SpatialGrid) -> dict:
    res = {}
    for k, v in out.items():
        if k.startswith("dx"):
            res[k] = [SpatialField(xgrid, v[..., j]) for j in range(xgrid.ndim)]
        else:
            res[k] = SpatialField(xgrid, v)
    return res


def assemble_solution(run: GBSRun, t: float, xgrid: SpatialGrid | None = None) -> SpatialField:
    return assemble(run, t, ("u",), xgrid)["u"]


def assemble_derivatives(run: GBSRun, t: float, xgrid: SpatialGrid | None = None,
                         exact: bool = False):
    """``(d_t u, [d_x_j u])``; leading terms by default, exact derivatives of
    the superposition with ``exact=True``."""
    if exact:
        r = assemble(run, t, ("dt", "dx"), xgrid)
        return r["dt"], r["dx"]
    r = assemble(run, t, ("dt_lead", "dx_lead"), xgrid)
    return r["dt_lead"], r["dx_lead"]


def physical_energy(dt_u: SpatialField, dx_u, vf, mask=None) -> float:
    """``(||d_t u||^2 + ||c grad u||^2) / 2``, optionally over a mask."""
    g = dt_u.grid
    c = vf.value(g.points())
    w = g.weights if mask is None else g.weights * mask
    kin = np.sum(w * np.abs(dt_u.values) ** 2)
    pot = sum(np.sum(w * np.abs(c * f.values) ** 2) for f in dx_u)
    return float(0.5 * (kin + pot))
