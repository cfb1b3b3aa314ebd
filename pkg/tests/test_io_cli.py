import json

import numpy as np
import pytest

from gbsum import cli
from gbsum import io
from gbsum import oracle as orc
from gbsum import geometry as geo
from gbsum.fbi import SpatialField


def test_gbsf_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(5, 7)) + 1j * rng.normal(size=(5, 7))
    p = io.write_gbsf(tmp_path / "f.gbsf", vals, [(0.0, 1.0), (-2.0, 2.0)])
    back, bounds = io.read_gbsf(p)
    assert np.array_equal(back, vals)
    assert bounds == [(0.0, 1.0), (-2.0, 2.0)]
    raw = p.read_bytes()
    assert raw[:4] == b"GBSF" and len(raw) == 12 + 2 * 24 + vals.size * 16


def test_gbsf_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.gbsf"
    p.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError):
        io.read_gbsf(p)


def test_csv_round_trips_doubles(tmp_path):
    g = orc.interval_grid(geo.Interval(0.0, 1.0), 0.1)
    f = SpatialField(g, np.exp(1j * np.pi * g.axes[0].nodes / 3))
    header, rows = io.read_csv(io.write_field_csv(tmp_path / "f.csv", f))
    assert header == ["x1", "re", "im"]
    back = np.array([float(r[1]) + 1j * float(r[2]) for r in rows])
    assert np.array_equal(back, f.values)


def test_manifest_lists_checksums(tmp_path):
    (tmp_path / "a.csv").write_text("x\n1\n")
    m = json.loads(io.write_manifest(tmp_path, {"k": 1}, "trace").read_text())
    assert m["files"]["a.csv"] == io.sha256_file(tmp_path / "a.csv")
    assert m["config_sha256"] == io.config_hash({"k": 1})
    assert m["subcommand"] == "trace"


def _config(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_verify_passes(tmp_path):
    cfg = _config(tmp_path, {"verify": {"seed": 1, "checks": ["fbi", "tfgg", "reference"]}})
    code = cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "out")])
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert code == 0 and rep["passed"]
    assert all(r["passed"] for r in rep["invariants"]) and rep["invariants"]
    assert (tmp_path / "out" / "manifest.json").exists()


@pytest.mark.parametrize(
    "override, guard",
    [
        ({"reference": {"cfl": 1.5}}, "oracle.cfl"),
        ({"eps_list": [-0.1]}, "cli.eps"),
        ({"data": {"center": [0.5]}}, "fbi.support"),
        ({"bc": "robin"}, "beams.bc"),
    ],
)
def test_bad_config_exits_with_guard(tmp_path, override, guard):
    out = tmp_path / "out"
    code = cli.main(["solve", "--config", _config(tmp_path, override), "--out", str(out)])
    assert code == 2
    viol = json.loads((out / "errors.json").read_text())["violations"]
    assert guard in [v["guard"] for v in viol]


TRACE = {"trace": {"rays": 3, "T": 7.5, "samples": 6}}


def test_trace_is_reproducible_across_threads(tmp_path):
    cfg = _config(tmp_path, TRACE)
    for th in ("1", "3"):
        assert cli.main(["trace", "--config", cfg, "--out", str(tmp_path / th), "--threads", th]) == 0
    a = (tmp_path / "1" / "trace.csv").read_bytes()
    assert a == (tmp_path / "3" / "trace.csv").read_bytes()
    header, rows = io.read_csv(tmp_path / "1" / "trace.csv")
    assert header[:4] == ["ray", "t", "x1", "xi1"]
    assert max(int(r[header.index("reflections")]) for r in rows) >= 1
    assert max(float(r[header.index("H_drift")]) for r in rows) <= 1e-10


def test_solve_and_reference_pipeline(tmp_path):
    cfg = _config(tmp_path, {"eps_list": [0.05], "times": {"T": 2.5, "count": 2}})
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", cfg, "--out", str(out), "--format", "bin"]) == 0
    vals, bounds = io.read_gbsf(out / "u_eps0p05_t001.gbsf")
    assert bounds == [(0.0, 12.0)] and np.all(np.isfinite(vals))
    assert cli.main(["reference", "--config", cfg, "--out", str(out)]) == 0
    header, rows = io.read_csv(out / "comparison.csv")
    err, est = float(rows[0][1]), float(rows[0][2])
    assert err < 0.1 and est < 0.1 * err
