import csv
import json

import numpy as np
import pytest

from magnls.cli import main
from magnls.field import read_snapshot

BASE_1D = """
[grid]
dim = 1
n = 256
length = 20

[nonlinearity]
sigma = 1
sign = {sign}
gamma = 0

[solver]
b = 1
dt = {dt}
t_end = {t_end}
snapshot_stride = {stride}

[initial]
profile = gaussian
amplitude = {amp}
wavenumber = {k}
"""


def write_cfg(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def cfg_1d(tmp_path, sign=1, dt=0.01, t_end=0.2, stride=5, amp=1.0, k=0.0, extra=""):
    return write_cfg(tmp_path, BASE_1D.format(sign=sign, dt=dt, t_end=t_end, stride=stride, amp=amp, k=k) + extra)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg_1d(tmp_path), "--output-dir", str(out)]) == 0
    rows = read_csv(out / "diagnostics.csv")
    assert len(rows) == 20 // 5 + 1
    assert [int(r["step"]) for r in rows] == [0, 5, 10, 15, 20]
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["status"] == "ok" and meta["conventions"]["sign"] == 1
    assert meta["config"]["solver"]["dt"] == 0.01 and "[grid]" in meta["config_text"]
    snaps = sorted((out / "snapshots").iterdir())
    assert len(snaps) == 5
    u, header = read_snapshot(snaps[-1])
    assert header["time"] == pytest.approx(0.2) and header["n"] == 256
    assert np.isclose(float(rows[-1]["mass"]), np.sqrt(np.sum(np.abs(u.values) ** 2) * u.grid.spacing), rtol=1e-12)


@pytest.mark.parametrize("extra", ["\n[grid]\nspacing = 1\n", "\n[plotting]\nstyle = dark\n"])
def test_unknown_entries_exit_2(tmp_path, extra, capsys):
    text = BASE_1D.format(sign=1, dt=0.01, t_end=0.2, stride=5, amp=1.0, k=0.0)
    text = text.replace("[grid]\n", "[grid]\nspacing = 1\n") if "spacing" in extra else text + extra
    assert main(["solve", "--config", write_cfg(tmp_path, text), "--output-dir", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_dt_not_below_t_end_exit_2(tmp_path):
    assert main(["solve", "--config", cfg_1d(tmp_path, dt=0.5, t_end=0.5), "--output-dir", str(tmp_path / "o")]) == 2


def test_blowup_exit_4(tmp_path):
    extra = "blowup_factor = 10\n"
    text = BASE_1D.format(sign=-1, dt=1e-4, t_end=0.2, stride=50, amp=3.0, k=0.0)
    text = text.replace("n = 256", "n = 1024").replace("sigma = 1", "sigma = 2")
    text = text.replace("snapshot_stride = 50\n", "snapshot_stride = 50\n" + extra)
    out = tmp_path / "o"
    assert main(["solve", "--config", write_cfg(tmp_path, text), "--output-dir", str(out)]) == 4
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["status"] == "blowup" and 0 < meta["last_time"] < 0.2
    assert len(read_csv(out / "diagnostics.csv")) >= 2


def test_leakage_exit_5(tmp_path):
    out = tmp_path / "o"
    code = main(["solve", "--config", cfg_1d(tmp_path, dt=0.005, t_end=1.0, k=8.0), "--output-dir", str(out)])
    assert code == 5
    assert json.loads((out / "metadata.json").read_text())["status"] == "leakage"


def test_audit_zero_potential(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["audit", "--config", cfg_1d(tmp_path), "--output-dir", str(out)]) == 0
    assert "audit: pass" in capsys.readouterr().out
    assert json.loads((out / "audit.json").read_text())["passed"] is True


def test_wkb_command(tmp_path):
    text = BASE_1D.format(sign=1, dt=0.01, t_end=0.2, stride=5, amp=1.0, k=0.0).replace("gamma = 0", "gamma = 2")
    text += "\n[wkb]\nt_end = 0.1\ndt = 0.005\nphase = cosine\nphase_k = 0.2\n"
    out = tmp_path / "o"
    assert main(["wkb", "--config", write_cfg(tmp_path, text), "--output-dir", str(out)]) == 0
    rows = read_csv(out / "wkb.csv")
    meta = json.loads((out / "metadata.json").read_text())
    assert len(rows) == meta["wkb_steps"] + 1 and float(rows[-1]["rescaled_time"]) == pytest.approx(0.1)
    assert max(float(r["reconstruction_defect"]) for r in rows) < 1e-4
    assert meta["symmetrizer"][0]["max_asymmetry"] <= 1e-12
    _, header = read_snapshot(out / "snapshots" / f"snap_{meta['wkb_steps']:05d}.bin")
    assert header["h"] == 1.0 and header["time"] == pytest.approx(0.1)


def test_compare_rows(tmp_path):
    text = BASE_1D.format(sign=1, dt=0.01, t_end=0.2, stride=5, amp=1.0, k=0.0).replace("gamma = 0", "gamma = 2")
    text += "\n[wkb]\nt_end = 0.1\ndt = 0.004\nphase = linear\nphase_k = 0.3\ndirect_points_per_b = 256\n"
    out = tmp_path / "o"
    assert main(["compare", "--config", write_cfg(tmp_path, text), "--output-dir", str(out), "--b-list", "2,4,8"]) == 0
    rows = read_csv(out / "compare.csv")
    assert [float(r["b"]) for r in rows] == [2.0, 4.0, 8.0]
    assert all(float(r["discrepancy"]) < 1e-2 for r in rows)


def test_convergence_piecewise(tmp_path):
    text = """
[grid]
dim = 2
n = 32
length = 16

[potential]
kind = constant_field
b0 = 1
modulation = sinusoidal
mod_amplitude = 0.5
mod_frequency = 4

[solver]
b = 2
dt = 4e-3
t_end = 0.128
snapshot_stride = 4

[initial]
profile = gaussian
amplitude = 1.5
center = 0.5, 0

[sweep]
n_list = 2, 4, 8, 16
"""
    out = tmp_path / "o"
    assert main(["convergence", "--mode", "piecewise", "--config", write_cfg(tmp_path, text),
                 "--output-dir", str(out)]) == 0
    rows = read_csv(out / "convergence_piecewise.csv")
    assert [int(r["n"]) for r in rows] == [2, 4, 8, 16]
    errs = [float(r["sup_error"]) for r in rows]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["orders"]) == 3


def test_bad_b_list(tmp_path):
    text = BASE_1D.format(sign=1, dt=0.01, t_end=0.2, stride=5, amp=1.0, k=0.0).replace("gamma = 0", "gamma = 2")
    assert main(["compare", "--config", write_cfg(tmp_path, text), "--output-dir", str(tmp_path / "o"),
                 "--b-list", "x"]) == 1


def test_threads_flag(tmp_path):
    assert main(["solve", "--config", cfg_1d(tmp_path), "--output-dir", str(tmp_path / "o"), "--threads", "0"]) == 2
