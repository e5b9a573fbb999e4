import os
import subprocess
import sys

import numpy as np
import pytest

from quadnls import io, cli
from quadnls import spectral_core as sc
from quadnls.errors import CorruptSnapshot, VersionMismatch, ConfigError, MassConditionViolated
from quadnls.functionals import FieldPair, PhysicalParams


def _pair(g, seed=0):
    rng = np.random.default_rng(seed)
    shape = g.shape
    return FieldPair(rng.standard_normal(shape) + 1j * rng.standard_normal(shape),
                     rng.standard_normal(shape) + 1j * rng.standard_normal(shape), g)


@pytest.mark.parametrize("g", [sc.Grid(1, 64, 10.0), sc.Grid(2, 16, 8.0), sc.RadialGrid(4, 100, 12.0)])
def test_snapshot_round_trip(tmp_path, g):
    fp = _pair(g)
    p = tmp_path / "a.qnls"
    io.save_snapshot(p, fp, {"kappa": 0.5, "t": 1.25})
    back, meta = io.load_snapshot(p, with_meta=True)
    assert back.u.tobytes() == fp.u.tobytes() and back.v.tobytes() == fp.v.tobytes()
    assert back.grid.describe() == g.describe()
    assert meta == {"t": 1.25, "kappa": 0.5}
    assert not os.path.exists(f"{p}.tmp")


def test_snapshot_corruption(tmp_path):
    fp = _pair(sc.Grid(1, 32, 4.0))
    p = tmp_path / "a.qnls"
    io.save_snapshot(p, fp)
    raw = p.read_bytes()
    for cut in (3, 20, len(raw) - 1):
        (tmp_path / "t.qnls").write_bytes(raw[:cut])
        with pytest.raises(CorruptSnapshot):
            io.load_snapshot(tmp_path / "t.qnls")
    flipped = bytearray(raw)
    flipped[-1] ^= 1
    (tmp_path / "f.qnls").write_bytes(bytes(flipped))
    with pytest.raises(CorruptSnapshot):
        io.load_snapshot(tmp_path / "f.qnls")
    (tmp_path / "m.qnls").write_bytes(b"QNLS0" + raw[5:])
    with pytest.raises(VersionMismatch):
        io.load_snapshot(tmp_path / "m.qnls")


def test_parse_config():
    cfg = io.parse_config("# hi\ngrid.d = 1\n\nparams.kappa=0.5  # trailing\n")
    assert cfg == {"grid.d": "1", "params.kappa": "0.5"}
    with pytest.raises(ConfigError) as e:
        io.parse_config("a = 1\na = 2\n")
    assert e.value.field == "a"
    with pytest.raises(ConfigError):
        io.parse_config("just words\n")
    s = io.Section({"x": "abc", "y": "-1", "z": "1, 2 3"})
    with pytest.raises(ConfigError) as e:
        s.float("x")
    assert e.value.field == "x"
    with pytest.raises(ConfigError):
        s.int("y", positive=True)
    assert s.floats("z") == [1.0, 2.0, 3.0]
    with pytest.raises(ConfigError) as e:
        s.float("missing", io.REQUIRED)
    assert e.value.field == "missing"


def test_config_hash_ignores_order():
    assert io.config_hash({"a": "1", "b": "2"}) == io.config_hash({"b": "2", "a": "1"})
    assert io.config_hash({"a": "1"}) != io.config_hash({"a": "2"})


def test_fmt():
    assert io.fmt(None) == ""
    assert io.fmt(0.0) == "0"
    x = 0.1 + 0.2
    assert float(io.fmt(x)) == x


# ------------------------------------------------------------ normalization

def test_normalize_kappa():
    k, _ = io.normalize_params(PhysicalParams.from_raw(1.0, 1.0, 2.0, 1.0, 2.0))
    assert k == 1.0
    k, n = io.normalize_params(PhysicalParams.from_raw(1.0, 2.0, 2.0, 1.0, 2.0))
    assert k == 0.5
    assert "kappa" in n.describe()
    with pytest.raises(MassConditionViolated):
        io.normalize_params(PhysicalParams.from_raw(1.0, 2.0, 2.0, 1.0, 3.0))
    with pytest.raises(ConfigError):
        io.normalize_params(PhysicalParams(0.5))


def test_normalize_round_trip():
    mu = 0.6 - 0.8j
    c = 1.7
    raw = PhysicalParams.from_raw(0.8, 1.6, c * np.conj(mu), mu, c)
    _, n = io.normalize_params(raw)
    g = sc.Grid(1, 64, 10.0)
    fp = _pair(g, 3)
    back = n.to_raw(n.to_normalized(fp))
    assert np.abs(back.u - fp.u).max() < 1e-15 and np.abs(back.v - fp.v).max() < 1e-15
    assert back.grid.L == pytest.approx(g.L, rel=1e-15)


def test_normalized_fields_solve_normalized_system():
    """Raw right-hand sides map onto the normalized ones under the scaling."""
    mu = 0.6 - 0.8j
    c, m, M = 1.7, 0.8, 1.6
    raw = PhysicalParams.from_raw(m, M, c * np.conj(mu), mu, c)
    kappa, n = io.normalize_params(raw)
    g = sc.Grid(1, 256, 30.0)
    x = g.x1
    U = (1 + 0.3j) * np.exp(-x ** 2 / 4) * np.exp(0.5j * x)
    V = (0.4 - 0.2j) * np.exp(-x ** 2 / 6)
    # i U_t = F_U, i V_t = F_V for the raw system
    FU = -sc.laplacian(U, g) / (2 * m) + raw.lam * V * np.conj(U)
    FV = -sc.laplacian(V, g) / (2 * M) + raw.mu * U ** 2
    nf = n.to_normalized(FieldPair(U, V, g))
    u, v, h = nf.u, nf.v, nf.grid
    fu = -sc.laplacian(u, h) - 2 * v * np.conj(u)
    fv = -kappa * sc.laplacian(v, h) - u ** 2
    assert np.abs(fu - n.a_u * FU).max() < 1e-12
    assert np.abs(fv - n.a_v * FV).max() < 1e-12


# ------------------------------------------------------------ CLI

def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


GS_CFG = """grid.d = 1
grid.n = 256
grid.L = 40
params.kappa = 0.5
constraint.kind = two-mass
constraint.a = 1
constraint.b = 1
"""

VIRIAL_CFG = """grid.kind = radial
grid.d = 4
grid.nr = 1024
grid.R_max = 16
params.kappa = 0.5
data.width = 1.5
data.amp_u = 1.0
data.amp_v = 0.5
evolve.dt = 2e-3
evolve.t_end = 0.2
evolve.diag_stride = 1
evolve.adaptive = false
"""


def test_cli_ground_state(tmp_path, capsys):
    cfgp = _write(tmp_path, "gs.cfg", GS_CFG)
    out = tmp_path / "out"
    assert cli.main(["ground-state", "--config", cfgp, "--out", str(out)]) == 0
    rep = (out / "ground-state.txt").read_text()
    assert "config_hash = " in rep and "grid = " in rep and "overall = PASS" in rep
    assert any(f.endswith(".qnls") for f in os.listdir(out))


def test_cli_missing_kappa(tmp_path, capsys):
    cfgp = _write(tmp_path, "bad.cfg", GS_CFG.replace("params.kappa = 0.5\n", ""))
    assert cli.main(["ground-state", "--config", cfgp, "--out", str(tmp_path)]) == 2
    assert "params.kappa" in capsys.readouterr().err


def test_cli_bad_value_and_unknown_file(tmp_path, capsys):
    cfgp = _write(tmp_path, "bad.cfg", GS_CFG.replace("grid.n = 256", "grid.n = lots"))
    assert cli.main(["ground-state", "--config", cfgp, "--out", str(tmp_path)]) == 2
    assert "grid.n" in capsys.readouterr().err
    assert cli.main(["ground-state", "--config", str(tmp_path / "nope.cfg")]) == 2
    with pytest.raises(ConfigError):
        cli.run_subcommand("nonsense", {}, str(tmp_path))


def test_cli_check_virial_and_determinism(tmp_path):
    cfgp = _write(tmp_path, "v.cfg", VIRIAL_CFG)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["check-virial", "--config", cfgp, "--out", str(a)]) == 0
    assert cli.main(["check-virial", "--config", cfgp, "--out", str(b)]) == 0
    ca, cb = (a / "virial.csv").read_bytes(), (b / "virial.csv").read_bytes()
    assert ca == cb
    header = ca.decode().splitlines()[0].split(",")
    assert header == ["t", "M", "E", "K", "P", "variance", "virial_first", "ball_mass"]
    # no ball radius configured: that column is empty, not zero
    assert all(line.endswith(",") for line in ca.decode().splitlines()[1:])
    assert "overall = PASS" in (a / "check-virial.txt").read_text()


def test_cli_check_cutoffs(tmp_path):
    cfgp = _write(tmp_path, "c.cfg", "cutoff.R = 1.0\ncutoff.mass = 271.658943\n")
    assert cli.main(["check-cutoffs", "--config", cfgp, "--out", str(tmp_path)]) == 0
    assert "positivity_fails_eps10: PASS" in (tmp_path / "check-cutoffs.txt").read_text()


def test_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("QUADNLS_THREADS", "3")
    sc.set_threads(None)
    assert sc.get_threads() == 3
    monkeypatch.setenv("QUADNLS_THREADS", "junk")
    assert sc.get_threads() == 1
    cfgp = _write(tmp_path, "c.cfg", "cutoff.R = 1.0\ncutoff.mass = 271.658943\n")
    try:
        assert cli.main(["check-cutoffs", "--config", cfgp, "--out", str(tmp_path), "--threads", "2"]) == 0
        assert sc.get_threads() == 2
    finally:
        sc.set_threads(None)
    assert cli.main(["check-cutoffs", "--config", cfgp, "--threads", "0"]) == 2


def test_console_script(tmp_path):
    cfgp = _write(tmp_path, "c.cfg", "cutoff.R = 2.0\ncutoff.mass = 271.658943\n")
    r = subprocess.run([sys.executable, "-m", "quadnls.cli", "check-cutoffs", "--config", cfgp,
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "overall = PASS" in r.stdout
