import json
import math

import numpy as np
import pytest

from nevlab.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_VERIFY, RunConfig, main

TOY = {"family": "two_av", "lambda": 2, "mu": 1}
K2 = {"family": "two_av", "lambda": [0, math.pi], "mu": [0, -math.pi]}
TINY_PROBE = {"samples": 300, "birkhoff_starts": 20, "birkhoff_steps": 200, "n_max": 50,
              "trend_checkpoints": [10, 50]}


def run(tmp_path, sub, cfg, *extra, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    out = tmp_path / "out"
    return main([sub, "--config", str(p), "--out", str(out), *extra]), out


def test_verify_toy_passes(tmp_path, capsys):
    code, out = run(tmp_path, "verify-asymptotics", {"instance": TOY})
    assert code == EXIT_OK
    doc = json.loads((out / "verify.json").read_text())
    assert doc["pass"] and doc["config"]["instance"] == TOY
    assert (out / "poles.csv").read_text().startswith("j,re_s,im_s,re_r,im_r,abs_s,abs_r\n")
    assert "PASS pole_spacing_vs_pi" in capsys.readouterr().out


def test_verify_failure_exit_code(tmp_path, capsys):
    cfg = {"instance": TOY, "tolerances": {"residue_constant": 1e-20}}
    code, _ = run(tmp_path, "verify-asymptotics", cfg)
    assert code == EXIT_VERIFY
    assert "FAIL residue_constant_spread" in capsys.readouterr().out


def test_classify_all_prepoles(tmp_path, capsys):
    code, out = run(tmp_path, "classify", {"instance": K2})
    assert code == EXIT_OK
    doc = json.loads((out / "classify.json").read_text())
    assert (doc["K"], doc["N"]) == (2, 2)
    assert doc["conjecture_regime"] and not doc["hypotheses_satisfied"]
    assert "conjecture regime" in capsys.readouterr().out


def test_classify_mixed(tmp_path):
    code, out = run(tmp_path, "classify", {"instance": {"family": "mixed"}})
    assert code == EXIT_OK
    doc = json.loads((out / "classify.json").read_text())
    assert (doc["K"], doc["N"]) == (1, 2)
    assert doc["hypotheses_satisfied"]
    assert "instance_certificates" in doc
    landing = [r for r in doc["asymptotic_values"] if "multiplier" in r]
    assert len(landing) == 1


def test_classify_attracting_case_is_unresolved(tmp_path):
    code, out = run(tmp_path, "classify", {"instance": TOY})
    assert code == EXIT_NUMERIC
    doc = json.loads((out / "classify.json").read_text())
    assert doc["unresolved"]
    kinds = {r["classification"]["kind"] for r in doc["asymptotic_values"]}
    assert kinds == {"Unresolved"}


def _ppm_pixels(data: bytes):
    head, rest = data.split(b"\n", 1)
    dims, rest = rest.split(b"\n", 1)
    maxv, body = rest.split(b"\n", 1)
    w, h = map(int, dims.split())
    assert head == b"P6" and maxv == b"255" and len(body) == 3 * w * h
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


def test_render_pole_and_tract_pixels_differ(tmp_path):
    # pixel centres land on 0 (a pole) and on 30 (deep in a tract)
    win = {"center": 15, "width": 60, "pixels": [2, 1], "n_max": 16}
    code, out = run(tmp_path, "render", {"instance": TOY, "window": win})
    assert code == EXIT_OK
    px = _ppm_pixels((out / "render.ppm").read_bytes())
    assert px.shape == (1, 2, 3)
    assert tuple(px[0, 0]) != tuple(px[0, 1])
    assert px[0, 0, 0] == 255  # pole colour


def test_render_identical_across_threads(tmp_path):
    cfg = {"instance": TOY, "window": {"center": 0, "width": 8, "pixels": 64}}
    (tmp_path / "a").mkdir(), (tmp_path / "b").mkdir()
    _, out1 = run(tmp_path / "a", "render", cfg, "--threads", "1")
    _, out4 = run(tmp_path / "b", "render", cfg, "--threads", "4")
    assert (out1 / "render.ppm").read_bytes() == (out4 / "render.ppm").read_bytes()
    assert (out1 / "render.json").read_bytes() == (out4 / "render.json").read_bytes()


def test_render_needs_window(tmp_path):
    assert run(tmp_path, "render", {"instance": TOY})[0] == EXIT_CONFIG


def test_probe_report(tmp_path):
    cfg = {"instance": {"family": "mixed"}, "probe": TINY_PROBE}
    code, out = run(tmp_path, "probe", cfg, "--seed", "5")
    assert code == EXIT_OK
    doc = json.loads((out / "probe.json").read_text())
    assert doc["seed"] == 5 and doc["config"]["seed"] == 5
    assert doc["birkhoff"]["constant"]["mean"] == 1.0
    assert len(doc["omega"]) >= 1
    lines = (out / "escape_curve.csv").read_text().splitlines()
    assert lines[0] == "n,fraction" and len(lines) == 2 + TINY_PROBE["n_max"]


def test_probe_byte_identical(tmp_path, monkeypatch):
    cfg = {"instance": {"family": "mixed"}, "probe": TINY_PROBE, "seed": 3}
    (tmp_path / "a").mkdir(), (tmp_path / "b").mkdir()
    _, a = run(tmp_path / "a", "probe", cfg, "--threads", "1")
    monkeypatch.setenv("NEVLAB_THREADS", "3")
    _, b = run(tmp_path / "b", "probe", cfg)
    for name in ("probe.json", "escape_curve.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_probe_rejects_non_cycle_omega(tmp_path):
    cfg = {"instance": {"family": "mixed"}, "probe": TINY_PROBE, "omega": [[0, 1]]}
    assert run(tmp_path, "probe", cfg)[0] == EXIT_NUMERIC


@pytest.mark.parametrize("cfg", [
    {"instance": TOY, "bogus": 1},
    {"instance": TOY, "tolerances": {"argument": -1}},
    {"instance": {"family": "nope"}},
    {"instance": {"family": "two_av", "lambda": 2}},
    {"instance": TOY, "window": {"width": 1, "pixels": 9000}},
    {"instance": TOY, "outputs": {"dir": "x"}},
])
def test_bad_configs(tmp_path, cfg):
    sub = "render" if "window" in cfg else "verify-asymptotics"
    assert run(tmp_path, sub, cfg)[0] == EXIT_CONFIG


def test_bad_json_and_env(tmp_path, monkeypatch):
    p = tmp_path / "x.json"
    p.write_text("{not json", encoding="utf-8")
    assert main(["classify", "--config", str(p)]) == EXIT_CONFIG
    monkeypatch.setenv("NEVLAB_THREADS", "zero")
    assert run(tmp_path, "classify", {"instance": K2})[0] == EXIT_CONFIG
    assert main(["nonsense", "--config", str(p)]) == EXIT_CONFIG


def test_config_round_trip():
    cfg = RunConfig.from_json(json.dumps({"instance": TOY, "seed": 9}))
    again = RunConfig.from_json(json.dumps(cfg.as_dict()))
    assert again.as_dict() == cfg.as_dict()
