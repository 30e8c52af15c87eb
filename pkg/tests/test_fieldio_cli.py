import json
import shutil
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuyau.cli import main
from fuyau.fieldio import MAGIC, decode, dump_field, dump_form, encode, load_field
from fuyau.forms import make_grid
from fuyau.geometry import flat_metric

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), cplx=st.booleans(), bideg=st.sampled_from([(0, 0), (1, 0), (1, 1)]))
def test_round_trip_is_bit_exact(seed, cplx, bideg):
    from fuyau.forms import ncomp

    grid = make_grid(2, 8)
    rng = np.random.default_rng(seed)
    shape = (ncomp(2, *bideg),) + grid.shape
    arr = rng.standard_normal(shape)
    if cplx:
        arr = arr + 1j * rng.standard_normal(shape)
    dump = decode(encode(grid, arr, bideg, name="f"))
    assert dump.bidegree == bideg and dump.name == "f" and dump.grid == grid
    assert dump.coeffs.dtype == arr.dtype
    assert dump.coeffs.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_compact_fields_are_expanded(tmp_path):
    grid = make_grid(2, 8)
    om = flat_metric(grid)
    path = dump_form(tmp_path / "omega.fyfd", om.omega)
    back = load_field(path)
    assert back.coeffs.shape == (4,) + grid.shape
    np.testing.assert_array_equal(back.as_form().coeffs, np.broadcast_to(om.omega.coeffs, back.coeffs.shape))
    with pytest.raises(ValueError):
        back.as_scalar()


def test_header_layout(tmp_path):
    grid = make_grid(2, 8)
    buf = encode(grid, np.zeros(grid.shape))
    assert buf[:4] == MAGIC
    version, hlen = struct.unpack("<II", buf[4:12])
    header = json.loads(buf[12:12 + hlen])
    assert version == 1
    assert header == {"bidegree": [0, 0], "dtype": "f64", "grid": {"N": 8, "n": 2}, "layout": header["layout"],
                      "name": ""}
    assert len(buf) == 12 + hlen + 8 * 8**4


@pytest.mark.parametrize("mutate", ["magic", "truncate", "version"])
def test_corrupt_dumps_are_rejected(mutate):
    buf = bytearray(encode(make_grid(2, 8), np.ones((8,) * 4)))
    if mutate == "magic":
        buf[:4] = b"XXXX"
    elif mutate == "truncate":
        buf = buf[:-8]
    else:
        buf[4:8] = struct.pack("<I", 99)
    with pytest.raises(ValueError):
        decode(bytes(buf))


def test_scalar_dump_of_compact_array(tmp_path):
    grid = make_grid(2, 8)
    path = dump_field(tmp_path / "c.fyfd", grid, np.full((1,) * 4, 2.5))
    np.testing.assert_array_equal(load_field(path).as_scalar(), np.full(grid.shape, 2.5))


# ---------------------------------------------------------------------------
# command line


def _run(args, tmp_path, name):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


def test_cli_solve_trivial(tmp_path):
    code, out = _run(["solve", "--config", str(CONFIGS / "trivial.yaml")], tmp_path, "a")
    assert code == 0
    phi = load_field(out / "phi.fyfd").as_scalar()
    np.testing.assert_allclose(phi, -np.log(0.05), rtol=1e-14)
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok"
    assert report["final"]["M0"] == pytest.approx(1.0)
    assert (out / "trace.csv").exists()


def test_cli_outputs_are_deterministic(tmp_path):
    cfg = CONFIGS / "check_default.yaml"
    dumps = []
    for name in ("r1", "r2"):
        code, out = _run(["validate-geometry", "--config", str(cfg)], tmp_path, name)
        assert code == 0
        dumps.append((out / "h.fyfd").read_bytes())
    assert dumps[0] == dumps[1]


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    shutil.copy(CONFIGS / "trivial.yaml", bad)
    with bad.open("a") as fh:
        fh.write("unexpected_key: 3\n")
    code, out = _run(["solve", "--config", str(bad)], tmp_path, "bad")
    assert code == 2
    assert json.loads((out / "report.json").read_text())["error"] == "ConfigError"


def test_cli_missing_config_file(tmp_path):
    code, _ = _run(["solve", "--config", str(tmp_path / "nope.yaml")], tmp_path, "missing")
    assert code == 2


def test_cli_refuses_positive_alpha_for_uniqueness(tmp_path):
    cfg = tmp_path / "pos.yaml"
    cfg.write_text((CONFIGS / "trivial.yaml").read_text().replace("alpha: -1.0", "alpha: 1.0"))
    code, _ = _run(["uniqueness", "--config", str(cfg)], tmp_path, "pos")
    assert code == 2
    code, _ = _run(["monotonicity", "--config", str(cfg)], tmp_path, "pos2")
    assert code == 2


def test_cli_uniqueness_trivial(tmp_path):
    code, out = _run(["uniqueness", "--config", str(CONFIGS / "trivial.yaml")], tmp_path, "u")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["sup_difference"] <= 1e-12
    phi_a = load_field(out / "phi_a.fyfd").as_scalar()
    np.testing.assert_allclose(phi_a, -np.log(0.05), rtol=1e-14)


def test_cli_monotonicity_trivial_gap_is_log2(tmp_path):
    code, out = _run(["monotonicity", "--config", str(CONFIGS / "trivial.yaml")], tmp_path, "m")
    assert code == 0
    pair = json.loads((out / "report.json").read_text())["pairs"][0]
    assert pair["min_gap"] == pytest.approx(np.log(2), abs=1e-12)
    assert pair["max_gap"] == pytest.approx(np.log(2), abs=1e-12)


def test_cli_huge_A_fails_with_underflow(tmp_path):
    code, out = _run(["solve", "--config", str(CONFIGS / "huge_A.yaml")], tmp_path, "huge")
    assert code == 5
    rep = json.loads((out / "report.json").read_text())
    assert rep["last_t"] == 0.0
    assert (out / "phi_last_good.fyfd").exists()


def test_cli_check_default(tmp_path, capsys):
    code, out = _run(["check", "--config", str(CONFIGS / "check_default.yaml")], tmp_path, "chk")
    assert code == 0
    assert "check:" in capsys.readouterr().out
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and all(r["passed"] for r in rep["results"])


def test_cli_check_flags_unresolved_grid(tmp_path):
    # at N = 8 the probes alias and the equivalence spread exceeds the coarse-grid tolerance
    cfg = tmp_path / "coarse.yaml"
    cfg.write_text((CONFIGS / "check_default.yaml").read_text().replace("N: 16", "N: 8"))
    code, out = _run(["check", "--config", str(cfg)], tmp_path, "chk8")
    assert code == 6
    failed = {r["name"] for r in json.loads((out / "report.json").read_text())["results"] if not r["passed"]}
    assert failed and all(name.startswith("kappa_spread") for name in failed)


def test_cli_validate_geometry_skt(tmp_path):
    code, out = _run(["validate-geometry", "--config", str(CONFIGS / "skt.yaml")], tmp_path, "g")
    assert code == 0
    info = json.loads((out / "geometry.json").read_text())
    assert info["kind"] == "skt" and not info["kaehler"]
    assert info["astheno_defect"] <= 1e-10 and info["v0_positive"]


def test_cli_validate_geometry_rejects_large_eps(tmp_path):
    cfg = tmp_path / "skt_big.yaml"
    cfg.write_text((CONFIGS / "skt.yaml").read_text().replace("eps: 0.05", "eps: 3.0"))
    code, out = _run(["validate-geometry", "--config", str(cfg)], tmp_path, "gbig")
    assert code == 2
    assert json.loads((out / "report.json").read_text())["max_eps"] == pytest.approx(2.0, rel=1e-6)
