import csv
import json
import math

import pytest

from pancake.cli import main

ARTIFACTS = ["meta.json", "frames.csv", "diagnostics.csv", "bounds.json", "profiles.svg", "margins.svg",
             "area_fit.svg"]
SMALL = ["--N", "64", "--record-every", "20"]


def test_oracle(capsys):
    assert main(["oracle", "--t", "-1"]) == 0
    out = json.loads(capsys.readouterr().out)
    # phi(1,1) = 2 for mean curvature, so r = sqrt(-4t)
    assert out["circle"]["radius"] == pytest.approx(2.0, rel=1e-12)
    assert out["circle"]["area"] == pytest.approx(4 * math.pi, rel=1e-12)
    assert out["oval"]["h"] == pytest.approx(math.acos(math.exp(-1)), rel=1e-6)
    assert out["oval"]["ell"] == pytest.approx(math.acosh(math.e), rel=1e-6)
    assert out["oval"]["a2"] == pytest.approx(1 / (math.exp(2) - 1), rel=1e-12)
    assert out["grim"]["x=0"] == -1.0


def test_oracle_needs_negative_time(capsys):
    assert main(["oracle", "--t", "0.5"]) == 2


@pytest.mark.parametrize("speed,code", [("mean", 0), ("pr:2", 0), ("gauss-root", 1)])
def test_check_speed(speed, code, capsys):
    assert main(["check-speed", speed]) == code
    assert "probe seed" in capsys.readouterr().out


def test_check_speed_json(capsys):
    main(["check-speed", "gauss-root", "--json"])
    data = json.loads(capsys.readouterr().out)
    assert data["passed"] is False
    assert data["conditions"]["non_degeneracy"]["witness"] == [1.0, 0.0]


def test_run_circle(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PANCAKE_OUT", str(tmp_path))
    assert main(["run", "--seed", "circle:1", *SMALL]) == 0
    dirs = list(tmp_path.iterdir())
    assert len(dirs) == 1
    for name in ARTIFACTS:
        assert (dirs[0] / name).stat().st_size > 0, name
    meta = json.loads((dirs[0] / "meta.json").read_text(encoding="utf-8"))
    assert meta["probe_seed"] is not None and meta["reference_N"] == 32
    assert meta["T_ext"] == pytest.approx(0.25, abs=1e-3)
    out = capsys.readouterr().out
    assert "T_ext" in out and "FAIL" not in out


def test_run_file_seed(tmp_path):
    seed = tmp_path / "seed.csv"
    seed.write_text("sigma\n" + "\n".join(["%.12e" % 2.0] * 64) + "\n", encoding="utf-8")
    d = tmp_path / "f"
    assert main(["run", "--seed", f"file:{seed}", "--out", str(d), *SMALL]) == 0
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    assert meta["seed"]["kind"] == "file"
    assert meta["T_ext"] == pytest.approx(1.0, abs=4e-3)


def test_file_seed_wrong_size(tmp_path):
    seed = tmp_path / "seed.csv"
    seed.write_text("sigma\n1.0\n1.0\n", encoding="utf-8")
    assert main(["run", "--seed", f"file:{seed}", "--out", str(tmp_path / "f"), *SMALL]) == 2


def test_run_refuses_inadmissible(tmp_path, capsys):
    assert main(["run", "--speed", "gauss-root", "--seed", "circle:1", "--out", str(tmp_path / "g"), *SMALL]) == 2
    err = capsys.readouterr().err
    assert "non_degeneracy" in err and "witness" in err
    assert not (tmp_path / "g").exists()


def test_run_is_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert main(["run", "--seed", "oval:2", "--out", str(d), *SMALL]) in (0, 1)
        outs.append(d)
    for name in ("frames.csv", "bounds.json", "diagnostics.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_config_with_flag_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('speed = "pr:2"\nseed = "circle:2"\n[flow]\nN = 128\nrecord_every = 50\n', encoding="utf-8")
    d = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--N", "64", "--out", str(d)]) == 0
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    assert meta["config"]["N"] == 64 and meta["config"]["record_every"] == 50
    assert meta["speed"]["name"] == "pr:2"
    assert meta["T_ext"] == pytest.approx(4 / (2 * math.sqrt(2)), rel=1e-3)


def test_unknown_flow_setting(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[flow]\nwarp = 9\n", encoding="utf-8")
    assert main(["run", "--config", str(cfg)]) == 2


def test_empty_sweep(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path)]) == 2
    assert "non-empty" in capsys.readouterr().err


def test_sweep_parallel(tmp_path, capsys):
    code = main(["sweep", "--R", "2,4", "--speeds", "mean,gauss-root", "--jobs", "2", "--out", str(tmp_path),
                 *SMALL])
    assert code == 1
    with open(tmp_path / "sweep.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    bad = [r for r in rows if r["speed"] == "gauss-root"]
    assert all("admissibility" in r["error"] for r in bad)
    good = [r for r in rows if r["speed"] == "mean"]
    assert all(r["error"] == "" and "e" in r["T_ext"] for r in good)
    assert float(good[1]["T_ext"]) > float(good[0]["T_ext"])
