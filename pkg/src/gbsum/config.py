"""Run configuration: JSON loading, defaults and validation against module guards."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import beams as bm
from . import geometry as geo
from . import media
from .errors import GuardError
from .fbi import CutoffSpec, data_distance
from .oracle import CFL_MAX, WKBProfile

DEFAULT_CONFIG: dict = {
    "domain": {"kind": "interval", "left": 0.0, "right": 12.0},
    "velocity": {"kind": "constant", "c0": 1.0},
    "bc": "dirichlet",
    "data": {"kind": "wkb", "center": [6.0], "radius": 1.0, "eta0": [1.0],
             "amplitude": 1.0, "curvature": 0.0, "mode": "right"},
    "eps_list": [0.02],
    "cutoff": {"r0": None, "r_inf": None, "d": 1.25},
    "grid": {"dx_over_eps": 0.0625, "reference_refine": 4},
    "times": {"T": 7.5, "count": 16},
    "reference": {"cfl": 0.9, "method": "richardson"},
    "test_functions": [
        {"name": "pre", "t": 2.0, "x0": 8.0, "rx": 0.75, "xi0": 1.0, "rxi": 0.5},
        {"name": "folded", "t": 7.5, "x0": 10.5, "rx": 0.75, "xi0": -1.0, "rxi": 0.5},
        {"name": "unfolded", "t": 7.5, "x0": 10.5, "rx": 0.75, "xi0": 1.0, "rxi": 0.5},
    ],
    "trace": {"rays": 8, "T": 7.5, "samples": 31},
    "beam": {"velocity": {"kind": "smoothblend", "c0": 1.0, "amplitude": 0.3, "length": 1.0},
             "y": [-1.0], "eta": [1.0], "cutoff_d": 2.0, "T": 2.0, "samples": 9,
             "eps_list": [0.05, 0.025, 0.0125, 0.00625]},
    "verify": {"seed": 0},
    "seed": 0,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` keeps the merged JSON dictionary."""

    raw: dict
    dom: object
    vf: object
    bc: bm.BoundaryCondition
    profile: WKBProfile | None
    eps_list: list
    times: np.ndarray

    def cutoff(self) -> CutoffSpec:
        c = self.raw["cutoff"]
        p = self.profile
        return CutoffSpec.for_wkb(self.dom, p.center, p.radius, float(np.linalg.norm(p.eta0)),
                                  d=c.get("d"), r0=c.get("r0"), r_inf=c.get("r_inf"))

    def dx(self, eps: float) -> float:
        return float(self.raw["grid"]["dx_over_eps"]) * eps


class ConfigError(Exception):
    """Raised with the list of violated guards."""

    def __init__(self, violations: list):
        super().__init__("; ".join(f"[{v['guard']}] {v['message']}" for v in violations))
        self.violations = violations


def _times(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.linspace(0.0, float(spec["T"]), int(spec.get("count", 2)))
    return np.asarray(spec, float)


def load(path: str | Path | None = None, eps_override=None) -> RunConfig:
    raw = {} if path is None else json.loads(Path(path).read_text())
    merged = _merge(DEFAULT_CONFIG, raw)
    if eps_override:
        merged["eps_list"] = [float(e) for e in eps_override]
    return validate(merged)


def validate(raw: dict) -> RunConfig:
    """Build every object the run needs; collect all guard violations."""
    bad: list = []

    def attempt(fn):
        try:
            return fn()
        except GuardError as e:
            bad.append({"guard": e.guard, "module": e.module, "message": e.detail})
        except (KeyError, TypeError, ValueError) as e:
            bad.append({"guard": "cli.config", "module": "cli", "message": f"{type(e).__name__}: {e}"})
        return None

    dom = attempt(lambda: geo.domain_from_spec(raw["domain"]))
    vf = attempt(lambda: media.velocity_from_spec(raw["velocity"]))
    bc = attempt(lambda: bm.BoundaryCondition(str(raw["bc"]).lower()))
    d = raw["data"]
    profile = attempt(lambda: WKBProfile(tuple(map(float, d["center"])), float(d["radius"]),
                                         tuple(map(float, d["eta0"])), float(d.get("amplitude", 1.0)),
                                         float(d.get("curvature", 0.0))))
    if d.get("mode", "right") not in ("right", "left", "symmetric"):
        bad.append({"guard": "oracle.wkb_mode", "module": "oracle", "message": f"unknown mode {d.get('mode')!r}"})
    eps_list = [float(e) for e in raw.get("eps_list", [])]
    if not eps_list or any(e <= 0 for e in eps_list):
        bad.append({"guard": "cli.eps", "module": "cli", "message": "eps_list must hold positive values"})
    times = attempt(lambda: _times(raw["times"]))
    if times is not None and np.any(times < 0):
        bad.append({"guard": "oracle.times", "module": "oracle", "message": "times must be non-negative"})
    cfl = raw.get("reference", {}).get("cfl", CFL_MAX)
    if not (0 < float(cfl) <= CFL_MAX):
        bad.append({"guard": "oracle.cfl", "module": "oracle",
                    "message": f"CFL number {cfl} outside (0, {CFL_MAX}]"})
    if raw.get("reference", {}).get("method", "richardson") not in ("richardson", "single"):
        bad.append({"guard": "cli.reference_method", "module": "cli",
                    "message": "reference.method must be 'richardson' or 'single'"})
    if dom is not None and profile is not None:
        if len(profile.center) != getattr(dom, "ndim", len(profile.center)):
            bad.append({"guard": "cli.dimension", "module": "cli", "message": "data and domain dimensions differ"})
        elif data_distance(dom, profile.center, profile.radius) <= 0:
            bad.append({"guard": "fbi.support", "module": "fbi", "message": "data support leaves the domain"})
        else:
            cfg = RunConfig(raw, dom, vf, bc, profile, eps_list, times)
            cut = attempt(cfg.cutoff)
            if cut is not None and data_distance(dom, profile.center, profile.radius) < 4 * cut.d:
                bad.append({"guard": "fbi.cutoff_d", "module": "fbi",
                            "message": "cutoff radius d exceeds a quarter of the data-boundary distance"})
    if dom is not None:
        from .wigner import TestFunction

        for tf in raw.get("test_functions", []):
            phi = attempt(lambda tf=tf: TestFunction(float(tf["x0"]), float(tf["rx"]),
                                                     float(tf["xi0"]), float(tf["rxi"])))
            if phi is not None and phi.support_distance(dom)[0] <= 0:
                bad.append({"guard": "wigner.support", "module": "wigner",
                            "message": f"test function {tf.get('name', '?')} reaches the boundary"})
    if bad:
        raise ConfigError(bad)
    return RunConfig(raw, dom, vf, bc, profile, eps_list, times)
