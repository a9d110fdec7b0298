import json

import numpy as np
import pytest

from kpstab import io as kio
from kpstab.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def small_cfg(tmp_path):
    def make(text):
        p = tmp_path / "cfg.yaml"
        p.write_text("grid: {nx: 128, ny: 8, lx: 32.0}\n" + text)
        return p

    return make


def test_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE
    assert main(["simulate", "--config", str(tmp_path / "absent.yaml")]) == EXIT_USAGE
    assert "configuration error" in capsys.readouterr().err


def test_simulate_writes_outputs(tmp_path, small_cfg):
    cfg = small_cfg("flow: {dt: 1.0e-3, t_end: 0.02, observe_every: 10}\n"
                    "diagnostics: {snapshot_times: [0.01]}\n")
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and len(man["config_hash"]) == 16
    assert {"norms.csv", "final.bin", "snapshot_t0.01.bin"} <= set(man["outputs"])
    rows = kio.read_csv(out / "norms.csv")
    assert len(rows) == 3 and rows[0]["config_hash"] == man["config_hash"]
    f, t = kio.read_snapshot(out / "final.bin")
    assert t == pytest.approx(0.02) and np.all(np.isfinite(kio.sp.to_physical(f)))


def test_resume_from_checkpoint_matches(tmp_path, small_cfg):
    cfg = small_cfg("flow: {dt: 1.0e-3, t_end: 0.02, observe_every: 10}\n"
                    "diagnostics: {checkpoint_every: 10}\n")
    a = tmp_path / "a"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    b = tmp_path / "b"
    ck = a / "checkpoint_00000010.bin"
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--resume", str(ck)]) == EXIT_OK
    fa, _ = kio.read_snapshot(a / "final.bin")
    fb, _ = kio.read_snapshot(b / "final.bin")
    assert np.array_equal(kio.sp.to_physical(fa), kio.sp.to_physical(fb))


def test_missing_checkpoint_is_usage_error(tmp_path, small_cfg):
    cfg = small_cfg("")
    assert main(["simulate", "--config", str(cfg), "--resume", str(tmp_path / "none.bin"),
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_stability_out_of_tube_reports(tmp_path, small_cfg):
    cfg = small_cfg("flow: {equation: MKP2, dt: 4.0e-3, t_end: 0.1, observe_every: 5}\n"
                    "perturbation: {delta: 3.0}\n")
    out = tmp_path / "o"
    assert main(["stability", "--config", str(cfg), "--out", str(out)]) == EXIT_FAIL
    fail = json.loads((out / "failure.json").read_text())
    assert fail["error"] == "OutOfTube"
    assert json.loads((out / "manifest.json").read_text())["status"] == "failed"


def test_stability_rows_carry_manifest_hash(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("grid: {nx: 256, ny: 16, lx: 32.0}\nflow: {equation: MKP2, dt: 4.0e-3, t_end: 0.04, observe_every: 5}\nstability: {sponge: 0.0}\n"
                   "perturbation: {delta: 0.01}\n")
    out = tmp_path / "o"
    assert main(["stability", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    rows = kio.read_csv(out / "orbital.csv")
    assert {r["config_hash"] for r in rows} == {man["config_hash"]}


def test_check_identities(tmp_path):
    out = tmp_path / "o"
    assert main(["check-identities", "--out", str(out)]) == EXIT_OK
    checks = json.loads((out / "identities.json").read_text())
    assert all(v["ok"] for v in checks.values())
    assert {"algebra_plus", "algebra_minus", "kernel_adjoint", "kato_balance"} <= set(checks)


def test_probe_operator(tmp_path, small_cfg):
    cfg = small_cfg("")
    out = tmp_path / "o"
    assert main(["probe-operator", "--config", str(cfg), "--out", str(out), "--ensemble", "8", "--modes", "3"]) == EXIT_OK
    rep = json.loads((out / "operator_probe.json").read_text())
    assert rep["min_ratio"] > 0 and len(rep["exponents"]) == 4
